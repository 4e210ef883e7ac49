//! Local-model programs. Protocol 1 searches for a local hidden state model of
//! the assemblage that a finite measurement set induces on `χ`; Protocol 2
//! searches for a local hidden variable model of the finite correlations. Both
//! maximize the visibility `q` of the target against white noise, with `χ`
//! eliminated through the inverse of the shrinking map.

use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::StateFamily;
use crate::conic::{hermitian_coords, ConicProblem, ConicSolution, HermitianBlock, SolveStatus, DEFAULT_TOL};
use crate::doc::{matrix_to_doc, MatrixDoc, OperatorDoc};
use crate::error::{Error, Result};
use crate::measure::{MeasurementSet, MeasurementSetDoc, Rotation};
use crate::qops::{
    identity, partial_trace, tensor, trace, ComplexMatrix, DensityOperator, Subsystem,
};
use crate::scalar::Real;
use crate::shrink::{eta_dual_certificates, inscribed_sphere_eta, ContinuousSet, VertexPolytope};
use crate::strategies::{
    enumerate_all, prune_hemisphere, StrategySet, StrategySetDoc, DEFAULT_PRUNE_SAMPLES, DEFAULT_STRATEGY_CAP,
};

pub const CERTIFICATE_SCHEMA: &str = "lmf/local-model-certificate/v1";

/// `q*` values this close to 1 are reported as exactly 1.
const SNAP_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Lhs,
    Lhv,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Lhs => "lhs",
            Mode::Lhv => "lhv",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lhs" | "LHS" => Ok(Mode::Lhs),
            "lhv" | "LHV" => Ok(Mode::Lhv),
            other => Err(Error::Parameter(format!("unknown mode {other}"))),
        }
    }
}

/// `Tr_A[(M ⊗ 1) X]` for an operator `X` on `C^da ⊗ C^db`.
pub fn conditional_state(x: &ComplexMatrix<f64>, m: &ComplexMatrix<f64>, da: usize, db: usize) -> Result<ComplexMatrix<f64>> {
    partial_trace(&(tensor(m, &identity(db)) * x), da, db, Subsystem::A)
}

/// Unnormalized conditional states `σ_{a|x}` on Bob's side.
#[derive(Debug, Clone, PartialEq)]
pub struct Assemblage {
    sigma: Vec<Vec<ComplexMatrix<f64>>>,
    dim_b: usize,
}

impl Assemblage {
    /// `sigma[x][a]`. All members must be Hermitian of one size and share the
    /// outcome count; the sums over `a` may differ by at most `tol`.
    pub fn new(sigma: Vec<Vec<ComplexMatrix<f64>>>, tol: f64) -> Result<Self> {
        let first = sigma.first().and_then(|s| s.first()).ok_or_else(|| Error::Dimension("empty assemblage".into()))?;
        let dim_b = first.nrows();
        let k = sigma[0].len();
        for s in sigma.iter().flatten() {
            if !s.is_square() || s.nrows() != dim_b {
                return Err(Error::Dimension("assemblage members differ in size".into()));
            }
            let h = crate::qops::hermiticity_error(s);
            if h > f64::herm_tol() {
                return Err(Error::NotHermitian(h));
            }
            let low = crate::qops::min_eigenvalue(s)?;
            if low < -f64::psd_tol() {
                return Err(Error::NotPositive(low));
            }
        }
        if sigma.iter().any(|s| s.len() != k) {
            return Err(Error::Dimension("measurements differ in outcome count".into()));
        }
        let asm = Self { sigma, dim_b };
        let ns = asm.no_signalling_error();
        if ns > tol {
            return Err(Error::Parameter(format!("assemblage signals (deviation {ns:.3e})")));
        }
        Ok(asm)
    }

    pub fn from_state(rho: &DensityOperator<f64>, set: &MeasurementSet<f64>) -> Result<Self> {
        if rho.dim_a() != set.dim() {
            return Err(Error::Dimension("measurement set does not act on Alice's system".into()));
        }
        let sigma = set
            .povms()
            .iter()
            .map(|p| {
                p.elements().iter().map(|e| conditional_state(rho.matrix(), e, rho.dim_a(), rho.dim_b())).collect()
            })
            .collect::<Result<Vec<Vec<_>>>>()?;
        Self::new(sigma, 1e-9)
    }

    pub fn get(&self, x: usize, a: usize) -> &ComplexMatrix<f64> {
        &self.sigma[x][a]
    }

    pub fn m(&self) -> usize {
        self.sigma.len()
    }

    pub fn k(&self) -> usize {
        self.sigma[0].len()
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    /// `σ_B = Σ_a σ_{a|0}`.
    pub fn reduced(&self) -> ComplexMatrix<f64> {
        self.sigma[0].iter().fold(ComplexMatrix::zeros(self.dim_b, self.dim_b), |acc, s| acc + s)
    }

    pub fn no_signalling_error(&self) -> f64 {
        let r = self.reduced();
        self.sigma
            .iter()
            .map(|s| {
                let sum = s.iter().fold(ComplexMatrix::zeros(self.dim_b, self.dim_b), |acc, m| acc + m);
                crate::qops::max_abs(&(sum - &r))
            })
            .fold(0.0, f64::max)
    }
}

/// `σ_{a|x} = Tr_A[(M_{a|x} ⊗ 1) ρ]`.
pub fn assemblage(rho: &DensityOperator<f64>, set: &MeasurementSet<f64>) -> Result<Assemblage> {
    Assemblage::from_state(rho, set)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LhsFeasibility {
    pub feasible: bool,
    /// Largest `w ≤ 1` for which `w σ + (1 − w) σ_noise` has an LHS model
    /// over the strategy set; `σ_noise(a|x) = Tr[σ_{a|x}] σ_B / Tr σ_B`.
    pub visibility: f64,
    pub hidden_states: Vec<ComplexMatrix<f64>>,
}

/// LHS feasibility of an assemblage over the given deterministic strategies.
/// Feasible when the optimal visibility reaches `1 − 100·tol`.
pub fn lhs_feasibility(asm: &Assemblage, strategies: &StrategySet, tol: f64) -> Result<LhsFeasibility> {
    if strategies.m() != asm.m() || strategies.k() != asm.k() {
        return Err(Error::Dimension("strategy set does not match the assemblage".into()));
    }
    let db = asm.dim_b();
    let sb = asm.reduced();
    let tb = trace(&sb).re;
    if !(tb > 0.0) {
        return Err(Error::Parameter("assemblage has zero total weight".into()));
    }
    let mut p = ConicProblem::new();
    let w = p.add_scalar(Some(0.0), Some(1.0));
    let blocks: Vec<HermitianBlock> = (0..strategies.len()).map(|_| p.add_hermitian_psd(db)).collect();
    for x in 0..asm.m() {
        for a in 0..asm.k().saturating_sub(1) {
            let s = asm.get(x, a);
            let noise = sb.scale(trace(s).re / tb);
            let cs = hermitian_coords(s);
            let cn = hermitian_coords(&noise);
            let members: Vec<&HermitianBlock> =
                blocks.iter().enumerate().filter(|(i, _)| strategies.get(*i).outcome(x) == a).map(|(_, b)| b).collect();
            for c in 0..db * db {
                let mut t: Vec<(usize, f64)> = members.iter().map(|b| (b.offset + c, 1.0)).collect();
                t.push((w, -(cs[c] - cn[c])));
                p.add_equality(t, cn[c]);
            }
        }
    }
    let cb = hermitian_coords(&sb);
    for c in 0..db * db {
        p.add_equality(blocks.iter().map(|b| (b.offset + c, 1.0)).collect(), cb[c]);
    }
    p.set_objective(vec![(w, 1.0)]);
    let sol = p.solve(tol)?.require_optimal()?;
    let visibility = sol.value(w).clamp(0.0, 1.0);
    Ok(LhsFeasibility {
        feasible: visibility >= 1.0 - 100.0 * tol,
        visibility,
        hidden_states: blocks.iter().map(|b| sol.block(b)).collect(),
    })
}

fn check_local(xi: &DensityOperator<impl Real>, dim: usize) -> Result<()> {
    if xi.dim_a() != dim || xi.dim_b() != 1 {
        return Err(Error::Dimension(format!("ξ must be a state on C^{dim}")));
    }
    Ok(())
}

fn check_shrink<T: Real>(eta: T) -> Result<()> {
    if !(eta > T::zero() && eta <= T::one()) {
        return Err(Error::Parameter(format!("shrinking factor {eta} outside (0, 1]")));
    }
    Ok(())
}

/// `η χ + (1 − η) ξ ⊗ χ_B`: the state whose assemblage under `M` equals the
/// assemblage of `χ` under the shrunk measurements `M^η`.
pub fn lemma1_map<T: Real>(
    chi: &ComplexMatrix<T>,
    dim_a: usize,
    dim_b: usize,
    xi: &DensityOperator<T>,
    eta: T,
) -> Result<ComplexMatrix<T>> {
    check_local(xi, dim_a)?;
    let chi_b = partial_trace(chi, dim_a, dim_b, Subsystem::A)?;
    Ok(chi.scale(eta) + tensor(xi.matrix(), &chi_b).scale(T::one() - eta))
}

/// Inverse of [`lemma1_map`]: `(R − (1 − η) ξ ⊗ R_B) / η`.
pub fn lemma1_inverse<T: Real>(
    r: &ComplexMatrix<T>,
    dim_a: usize,
    dim_b: usize,
    xi: &DensityOperator<T>,
    eta: T,
) -> Result<ComplexMatrix<T>> {
    check_local(xi, dim_a)?;
    check_shrink(eta)?;
    let r_b = partial_trace(r, dim_a, dim_b, Subsystem::A)?;
    Ok((r - tensor(xi.matrix(), &r_b).scale(T::one() - eta)).unscale(eta))
}

fn bob_map<T: Real>(chi: &ComplexMatrix<T>, da: usize, db: usize, xi_b: &DensityOperator<T>, mu: T) -> Result<ComplexMatrix<T>> {
    check_local(xi_b, db)?;
    let chi_a = partial_trace(chi, da, db, Subsystem::B)?;
    Ok(chi.scale(mu) + tensor(&chi_a, xi_b.matrix()).scale(T::one() - mu))
}

fn bob_inverse<T: Real>(r: &ComplexMatrix<T>, da: usize, db: usize, xi_b: &DensityOperator<T>, mu: T) -> Result<ComplexMatrix<T>> {
    check_local(xi_b, db)?;
    check_shrink(mu)?;
    let r_a = partial_trace(r, da, db, Subsystem::B)?;
    Ok((r - tensor(&r_a, xi_b.matrix()).scale(T::one() - mu)).unscale(mu))
}

/// Both-sided shrinking map: Alice's map applied after Bob's.
pub fn lemma2_map<T: Real>(
    chi: &ComplexMatrix<T>,
    dim_a: usize,
    dim_b: usize,
    xi_a: &DensityOperator<T>,
    xi_b: &DensityOperator<T>,
    eta: T,
    mu: T,
) -> Result<ComplexMatrix<T>> {
    lemma1_map(&bob_map(chi, dim_a, dim_b, xi_b, mu)?, dim_a, dim_b, xi_a, eta)
}

pub fn lemma2_inverse<T: Real>(
    r: &ComplexMatrix<T>,
    dim_a: usize,
    dim_b: usize,
    xi_a: &DensityOperator<T>,
    xi_b: &DensityOperator<T>,
    eta: T,
    mu: T,
) -> Result<ComplexMatrix<T>> {
    bob_inverse(&lemma1_inverse(r, dim_a, dim_b, xi_a, eta)?, dim_a, dim_b, xi_b, mu)
}

/// `q ρ + (1 − q) 1/N`.
pub fn noisy_target(rho: &DensityOperator<f64>, q: f64) -> ComplexMatrix<f64> {
    let n = rho.dim();
    rho.matrix().scale(q) + identity::<f64>(n).scale((1.0 - q) / n as f64)
}

/// Description of the state a certificate is about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetDoc {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<StateFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub state: OperatorDoc,
}

/// One measuring party: the finite set, the continuous set it covers after
/// shrinking by `eta` towards `xi`, and the deterministic strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartyDoc {
    pub measurements: MeasurementSetDoc,
    pub continuous: ContinuousSet,
    pub eta: f64,
    pub xi: MatrixDoc,
    pub strategies: StrategySetDoc,
    /// One dual matrix per hull constraint, for POVM continuous sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_duals: Option<Vec<MatrixDoc>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    pub max_equality: f64,
    pub max_inequality: f64,
    /// Smallest eigenvalue over the hidden states; absent without PSD blocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_psd_slack: Option<f64>,
}

impl Residuals {
    fn of(sol: &ConicSolution) -> Self {
        Self {
            max_equality: sol.max_equality_residual,
            max_inequality: sol.max_inequality_violation,
            min_psd_slack: sol.min_psd_slack.is_finite().then_some(sol.min_psd_slack),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDoc {
    pub backend: String,
    pub tol: f64,
    pub status: SolveStatus,
    pub residuals: Residuals,
}

/// Self-contained local-model certificate. The hash covers every field except
/// `created` and `content_hash` itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalModelCertificate {
    pub schema: String,
    pub mode: Mode,
    pub target: TargetDoc,
    pub q_star: f64,
    pub chi: OperatorDoc,
    pub alice: PartyDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bob: Option<PartyDoc>,
    /// LHS: one hidden state per strategy of Alice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_states: Option<Vec<MatrixDoc>>,
    /// LHV: weight of the strategy pair `(i, j)` at index `i·N_B + j`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    pub solver: SolverDoc,
    pub created: String,
    pub content_hash: String,
}

impl LocalModelCertificate {
    pub fn compute_hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.created.clear();
        c.content_hash.clear();
        let digest = Sha256::digest(serde_json::to_vec(&c)?);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    pub fn seal(&mut self) -> Result<()> {
        self.content_hash = self.compute_hash()?;
        Ok(())
    }

    /// Attach a readable target description and reseal.
    pub fn set_target(&mut self, label: impl Into<String>, family: Option<(StateFamily, f64)>) -> Result<()> {
        self.target.label = label.into();
        self.target.family = family.map(|f| f.0);
        self.target.alpha = family.map(|f| f.1);
        self.seal()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_json()?)?)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Continuous set a finite set is meant to cover: all projective qubit
/// measurements for Bloch sets, otherwise all POVMs with its outcome count.
pub fn continuous_for(set: &MeasurementSet<f64>) -> ContinuousSet {
    if set.bloch_vertices().is_some() {
        ContinuousSet::ProjectiveQubit
    } else {
        ContinuousSet::Povm { outcomes: set.outcomes(), dim: set.dim() }
    }
}

fn party_doc(
    set: &MeasurementSet<f64>,
    eta: f64,
    xi: &DensityOperator<f64>,
    strategies: &StrategySet,
    tol: f64,
) -> Result<PartyDoc> {
    let continuous = continuous_for(set);
    let eta_duals = match continuous {
        ContinuousSet::ProjectiveQubit => None,
        ContinuousSet::Povm { .. } => match VertexPolytope::new(set, continuous) {
            Ok(poly) => Some(eta_dual_certificates(&poly, eta, xi, tol)?.iter().map(matrix_to_doc).collect()),
            Err(Error::FacetCap { .. }) => None,
            Err(e) => return Err(e),
        },
    };
    Ok(PartyDoc {
        measurements: set.to_doc(),
        continuous,
        eta,
        xi: matrix_to_doc(xi.matrix()),
        strategies: strategies.to_doc(),
        eta_duals,
    })
}

fn timestamp() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!("unix:{secs}")
}

fn snap(q: f64) -> f64 {
    if q >= 1.0 - SNAP_TOL {
        1.0
    } else {
        q.max(0.0)
    }
}

fn check_strategies(set: &MeasurementSet<f64>, s: &StrategySet) -> Result<()> {
    if s.m() != set.len() || s.k() != set.outcomes() {
        return Err(Error::Dimension(format!(
            "strategies are for {} measurements with {} outcomes, set has {} with {}",
            s.m(),
            s.k(),
            set.len(),
            set.outcomes()
        )));
    }
    if s.is_empty() {
        return Err(Error::Parameter("empty strategy set".into()));
    }
    Ok(())
}

/// Raw optimum of Protocol 1.
#[derive(Debug, Clone)]
pub struct LhsSolution {
    pub q_star: f64,
    pub chi: ComplexMatrix<f64>,
    pub hidden_states: Vec<ComplexMatrix<f64>>,
    pub solution: ConicSolution,
}

/// Protocol 1 on the essential part of `set`; `strategies` index its POVMs.
pub fn solve_protocol1(
    rho: &DensityOperator<f64>,
    set: &MeasurementSet<f64>,
    eta: f64,
    xi: &DensityOperator<f64>,
    strategies: &StrategySet,
    tol: f64,
) -> Result<LhsSolution> {
    let (da, db) = (rho.dim_a(), rho.dim_b());
    if set.dim() != da {
        return Err(Error::Dimension("measurement set does not act on Alice's system".into()));
    }
    check_strategies(set, strategies)?;
    let n = rho.dim();
    let chi0 = lemma1_inverse(&identity::<f64>(n).unscale(n as f64), da, db, xi, eta)?;
    let chi1 = lemma1_inverse(rho.matrix(), da, db, xi, eta)?;
    let dchi = &chi1 - &chi0;

    let mut p = ConicProblem::new();
    let q = p.add_scalar(Some(0.0), Some(1.0));
    let blocks: Vec<HermitianBlock> = (0..strategies.len()).map(|_| p.add_hermitian_psd(db)).collect();
    let mut row = |members: &[usize], k0: &ComplexMatrix<f64>, k1: &ComplexMatrix<f64>| {
        let (c0, c1) = (hermitian_coords(k0), hermitian_coords(k1));
        for c in 0..db * db {
            let mut t: Vec<(usize, f64)> = members.iter().map(|&i| (blocks[i].offset + c, 1.0)).collect();
            t.push((q, -c1[c]));
            p.add_equality(t, c0[c]);
        }
    };
    for (x, povm) in set.povms().iter().enumerate() {
        for a in 0..povm.outcomes() - 1 {
            let members: Vec<usize> = (0..strategies.len()).filter(|&i| strategies.get(i).outcome(x) == a).collect();
            let k0 = conditional_state(&chi0, povm.element(a), da, db)?;
            let k1 = conditional_state(&dchi, povm.element(a), da, db)?;
            row(&members, &k0, &k1);
        }
    }
    let all: Vec<usize> = (0..strategies.len()).collect();
    row(
        &all,
        &partial_trace(&chi0, da, db, Subsystem::A)?,
        &partial_trace(&dchi, da, db, Subsystem::A)?,
    );
    p.set_objective(vec![(q, 1.0)]);
    let sol = p.solve(tol)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible("no local hidden state model even at q = 0".into()));
        }
        s => return Err(Error::Solver(s)),
    }
    let q_star = snap(sol.value(q));
    Ok(LhsSolution {
        q_star,
        chi: &chi0 + dchi.scale(q_star),
        hidden_states: blocks.iter().map(|b| sol.block(b)).collect(),
        solution: sol,
    })
}

fn target_doc(rho: &DensityOperator<f64>) -> TargetDoc {
    TargetDoc {
        label: "ρ".into(),
        family: None,
        alpha: None,
        state: OperatorDoc { dim_a: rho.dim_a(), dim_b: rho.dim_b(), matrix: matrix_to_doc(rho.matrix()) },
    }
}

/// Protocol 1: largest `q ≤ 1` such that `q ρ + (1 − q) 1/N` admits an LHS
/// model for the continuous set covered by `set` shrunk by `eta` towards `xi`.
/// `strategies` must index the POVMs of `set.essential()`.
pub fn protocol1(
    rho: &DensityOperator<f64>,
    set: &MeasurementSet<f64>,
    eta: f64,
    xi: &DensityOperator<f64>,
    strategies: &StrategySet,
    tol: f64,
) -> Result<LocalModelCertificate> {
    let ess = set.essential()?;
    let s = solve_protocol1(rho, &ess, eta, xi, strategies, tol)?;
    let mut cert = LocalModelCertificate {
        schema: CERTIFICATE_SCHEMA.into(),
        mode: Mode::Lhs,
        target: target_doc(rho),
        q_star: s.q_star,
        chi: OperatorDoc { dim_a: rho.dim_a(), dim_b: rho.dim_b(), matrix: matrix_to_doc(&s.chi) },
        alice: party_doc(set, eta, xi, strategies, tol)?,
        bob: None,
        hidden_states: Some(s.hidden_states.iter().map(matrix_to_doc).collect()),
        weights: None,
        solver: SolverDoc {
            backend: "clarabel".into(),
            tol,
            status: s.solution.status,
            residuals: Residuals::of(&s.solution),
        },
        created: timestamp(),
        content_hash: String::new(),
    };
    cert.seal()?;
    Ok(cert)
}

/// Raw optimum of Protocol 2.
#[derive(Debug, Clone)]
pub struct LhvSolution {
    pub q_star: f64,
    pub chi: ComplexMatrix<f64>,
    pub weights: Vec<f64>,
    pub solution: ConicSolution,
}

/// Probabilities `Tr[(A ⊗ B) X]`.
fn expectation(x: &ComplexMatrix<f64>, a: &ComplexMatrix<f64>, b: &ComplexMatrix<f64>) -> f64 {
    crate::qops::trace_product(&tensor(a, b), x).re
}

#[allow(clippy::too_many_arguments)]
pub fn solve_protocol2(
    rho: &DensityOperator<f64>,
    set_a: &MeasurementSet<f64>,
    set_b: &MeasurementSet<f64>,
    eta: f64,
    mu: f64,
    xi_a: &DensityOperator<f64>,
    xi_b: &DensityOperator<f64>,
    strat_a: &StrategySet,
    strat_b: &StrategySet,
    tol: f64,
) -> Result<LhvSolution> {
    let (da, db) = (rho.dim_a(), rho.dim_b());
    if set_a.dim() != da || set_b.dim() != db {
        return Err(Error::Dimension("measurement sets do not match the local dimensions".into()));
    }
    check_strategies(set_a, strat_a)?;
    check_strategies(set_b, strat_b)?;
    let (na, nb) = (strat_a.len(), strat_b.len());
    let n = rho.dim();
    let chi0 = lemma2_inverse(&identity::<f64>(n).unscale(n as f64), da, db, xi_a, xi_b, eta, mu)?;
    let chi1 = lemma2_inverse(rho.matrix(), da, db, xi_a, xi_b, eta, mu)?;
    let dchi = &chi1 - &chi0;
    let (ia, ib) = (identity::<f64>(da), identity::<f64>(db));

    // Collins–Gisin rows: marginals and joints over all but the last outcome.
    let ka = set_a.outcomes() - 1;
    let kb = set_b.outcomes() - 1;
    let (ma, mb) = (set_a.len(), set_b.len());
    let row_a = |x: usize, a: usize| x * ka + a;
    let row_b = |y: usize, b: usize| ma * ka + y * kb + b;
    let row_ab = |x: usize, a: usize, y: usize, b: usize| ma * ka + mb * kb + ((x * ka + a) * mb + y) * kb + b;
    let rows = ma * ka + mb * kb + ma * ka * mb * kb;
    let mut rhs0 = vec![0.0; rows];
    let mut rhs1 = vec![0.0; rows];
    for (x, pa) in set_a.povms().iter().enumerate() {
        for a in 0..ka {
            let r = row_a(x, a);
            rhs0[r] = expectation(&chi0, pa.element(a), &ib);
            rhs1[r] = expectation(&dchi, pa.element(a), &ib);
            for (y, pb) in set_b.povms().iter().enumerate() {
                for b in 0..kb {
                    let r = row_ab(x, a, y, b);
                    rhs0[r] = expectation(&chi0, pa.element(a), pb.element(b));
                    rhs1[r] = expectation(&dchi, pa.element(a), pb.element(b));
                }
            }
        }
    }
    for (y, pb) in set_b.povms().iter().enumerate() {
        for b in 0..kb {
            let r = row_b(y, b);
            rhs0[r] = expectation(&chi0, &ia, pb.element(b));
            rhs1[r] = expectation(&dchi, &ia, pb.element(b));
        }
    }

    let mut p = ConicProblem::new();
    let q = p.add_scalar(Some(0.0), Some(1.0));
    let w0 = p.num_vars();
    for _ in 0..na * nb {
        p.add_scalar(Some(0.0), None);
    }
    let mut terms: Vec<Vec<(usize, f64)>> = (0..rows).map(|r| vec![(q, -rhs1[r])]).collect();
    let hits_a: Vec<Vec<usize>> = strat_a
        .strategies()
        .iter()
        .map(|s| (0..ma).filter(|&x| s.outcome(x) < ka).map(|x| x * ka + s.outcome(x)).collect())
        .collect();
    let hits_b: Vec<Vec<usize>> = strat_b
        .strategies()
        .iter()
        .map(|s| (0..mb).filter(|&y| s.outcome(y) < kb).map(|y| y * kb + s.outcome(y)).collect())
        .collect();
    for i in 0..na {
        for j in 0..nb {
            let v = w0 + i * nb + j;
            for &ra in &hits_a[i] {
                terms[ra].push((v, 1.0));
                for &rb in &hits_b[j] {
                    terms[ma * ka + mb * kb + ra * mb * kb + rb].push((v, 1.0));
                }
            }
            for &rb in &hits_b[j] {
                terms[ma * ka + rb].push((v, 1.0));
            }
        }
    }
    for (t, r0) in terms.into_iter().zip(rhs0) {
        p.add_equality(t, r0);
    }
    p.add_equality((0..na * nb).map(|i| (w0 + i, 1.0)).collect(), 1.0);
    p.set_objective(vec![(q, 1.0)]);
    let sol = p.solve(tol)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible("no local hidden variable model even at q = 0".into()));
        }
        s => return Err(Error::Solver(s)),
    }
    let q_star = snap(sol.value(q));
    Ok(LhvSolution {
        q_star,
        chi: &chi0 + dchi.scale(q_star),
        weights: sol.x[w0..w0 + na * nb].to_vec(),
        solution: sol,
    })
}

/// Protocol 2: largest `q ≤ 1` such that `q ρ + (1 − q) 1/N` admits an LHV
/// model for the continuous sets covered by both shrunk finite sets.
#[allow(clippy::too_many_arguments)]
pub fn protocol2(
    rho: &DensityOperator<f64>,
    set_a: &MeasurementSet<f64>,
    set_b: &MeasurementSet<f64>,
    eta: f64,
    mu: f64,
    xi_a: &DensityOperator<f64>,
    xi_b: &DensityOperator<f64>,
    strat_a: &StrategySet,
    strat_b: &StrategySet,
    tol: f64,
) -> Result<LocalModelCertificate> {
    let (ea, eb) = (set_a.essential()?, set_b.essential()?);
    let s = solve_protocol2(rho, &ea, &eb, eta, mu, xi_a, xi_b, strat_a, strat_b, tol)?;
    let mut cert = LocalModelCertificate {
        schema: CERTIFICATE_SCHEMA.into(),
        mode: Mode::Lhv,
        target: target_doc(rho),
        q_star: s.q_star,
        chi: OperatorDoc { dim_a: rho.dim_a(), dim_b: rho.dim_b(), matrix: matrix_to_doc(&s.chi) },
        alice: party_doc(set_a, eta, xi_a, strat_a, tol)?,
        bob: Some(party_doc(set_b, mu, xi_b, strat_b, tol)?),
        hidden_states: None,
        weights: Some(s.weights),
        solver: SolverDoc {
            backend: "clarabel".into(),
            tol,
            status: s.solution.status,
            residuals: Residuals::of(&s.solution),
        },
        created: timestamp(),
        content_hash: String::new(),
    };
    cert.seal()?;
    Ok(cert)
}

/// Settings for the polyhedron level sequence.
#[derive(Debug, Clone)]
pub struct SequenceConfig {
    pub rotation: Rotation,
    pub strategy_cap: usize,
    pub prune_samples: usize,
    pub seed: u64,
    pub tol: f64,
    /// `q*` at or above `1 − stop_tol` ends the sequence.
    pub stop_tol: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            rotation: Rotation::IDENTITY,
            strategy_cap: DEFAULT_STRATEGY_CAP,
            prune_samples: DEFAULT_PRUNE_SAMPLES,
            seed: 0,
            tol: DEFAULT_TOL,
            stop_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub measurements: usize,
    pub eta: f64,
    /// Bob's factor, LHV only.
    pub mu: Option<f64>,
    pub strategies: usize,
    pub pruned: bool,
    pub q_star: Option<f64>,
    pub runtime_s: f64,
    pub error: Option<String>,
    #[serde(skip)]
    pub certificate: Option<LocalModelCertificate>,
}

/// Level-`level` polyhedron with its inscribed-sphere factor.
pub fn level_set(level: usize, rotation: &Rotation) -> Result<(MeasurementSet<f64>, f64)> {
    let set = MeasurementSet::<f64>::polyhedron_level(level, rotation)?;
    let v = set.bloch_vertices().ok_or_else(|| Error::Parameter("level set without Bloch vertices".into()))?;
    let eta = inscribed_sphere_eta(v)?.eta;
    Ok((set, eta))
}

fn strategies_for(set: &MeasurementSet<f64>, pruned: bool, cfg: &SequenceConfig) -> Result<StrategySet> {
    if pruned {
        prune_hemisphere(&set.directions(), cfg.prune_samples, cfg.seed)
    } else {
        enumerate_all(set.len(), set.outcomes(), cfg.strategy_cap)
    }
}

/// Strategy sets for one party (`Lhs`) or both (`Lhv`); pruned once the
/// complete count passes the cap.
fn level_strategies(set: &MeasurementSet<f64>, mode: Mode, cfg: &SequenceConfig) -> Result<(StrategySet, bool)> {
    let per_party = (set.outcomes() as f64).powi(set.len() as i32);
    let count = match mode {
        Mode::Lhs => per_party,
        Mode::Lhv => per_party * per_party,
    };
    let pruned = count > cfg.strategy_cap as f64;
    Ok((strategies_for(set, pruned, cfg)?, pruned))
}

fn run_level(rho: &DensityOperator<f64>, mode: Mode, level: usize, cfg: &SequenceConfig) -> Result<(LevelReport, LocalModelCertificate)> {
    let start = Instant::now();
    let (set, eta) = level_set(level, &cfg.rotation)?;
    let (strat, pruned) = level_strategies(&set, mode, cfg)?;
    let xi = DensityOperator::maximally_mixed(2, 1);
    let cert = match mode {
        Mode::Lhs => protocol1(rho, &set, eta, &xi, &strat, cfg.tol)?,
        Mode::Lhv => protocol2(rho, &set, &set, eta, eta, &xi, &xi, &strat, &strat, cfg.tol)?,
    };
    let strategies = match mode {
        Mode::Lhs => strat.len(),
        Mode::Lhv => strat.len() * strat.len(),
    };
    let report = LevelReport {
        level,
        measurements: set.len(),
        eta,
        mu: (mode == Mode::Lhv).then_some(eta),
        strategies,
        pruned,
        q_star: Some(cert.q_star),
        runtime_s: start.elapsed().as_secs_f64(),
        error: None,
        certificate: None,
    };
    Ok((report, cert))
}

/// Run levels `1..=max_level` on a two-qubit (LHV) or qubit–qudit (LHS)
/// target, stopping once `q*` reaches 1. A level that fails is recorded and
/// the sequence moves on.
pub fn run_sequence(rho: &DensityOperator<f64>, mode: Mode, max_level: usize, cfg: &SequenceConfig) -> Result<Vec<LevelReport>> {
    if rho.dim_a() != 2 || (mode == Mode::Lhv && rho.dim_b() != 2) {
        return Err(Error::Dimension("polyhedron sequences need qubit measurements".into()));
    }
    let mut out = Vec::new();
    for level in 1..=max_level {
        let start = Instant::now();
        match run_level(rho, mode, level, cfg) {
            Ok((mut report, cert)) => {
                let done = cert.q_star >= 1.0 - cfg.stop_tol;
                report.certificate = Some(cert);
                out.push(report);
                if done {
                    break;
                }
            }
            Err(e) => out.push(LevelReport {
                level,
                measurements: 0,
                eta: f64::NAN,
                mu: None,
                strategies: 0,
                pruned: false,
                q_star: None,
                runtime_s: start.elapsed().as_secs_f64(),
                error: Some(e.to_string()),
                certificate: None,
            }),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMethod {
    /// Bisection on `α` with feasibility meaning `q* = 1` at `ρ(α)`.
    #[default]
    Bisection,
    /// `α_bound = q*(ρ(1))`, exact for white-noise families.
    Direct,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub mode: Mode,
    pub level: usize,
    pub method: SweepMethod,
    pub width: f64,
    pub sequence: SequenceConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { mode: Mode::Lhs, level: 1, method: SweepMethod::Bisection, width: 5e-3, sequence: SequenceConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub family: String,
    pub mode: Mode,
    pub level: usize,
    pub theta: Option<f64>,
    pub alpha_bound: f64,
    /// `q*` of the full-visibility member `ρ(1)`.
    pub q_star: f64,
    pub eta: f64,
    pub runtime_s: f64,
}

/// Largest certified `α` for each family at one polyhedron level.
pub fn sweep_family(families: &[StateFamily], cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if !(cfg.width > 0.0) {
        return Err(Error::Parameter("bisection width must be positive".into()));
    }
    let (set, eta) = level_set(cfg.level, &cfg.sequence.rotation)?;
    let ess = set.essential()?;
    let (strat, _) = level_strategies(&set, cfg.mode, &cfg.sequence)?;
    let xi = DensityOperator::maximally_mixed(2, 1);
    let tol = cfg.sequence.tol;
    let q_of = |rho: &DensityOperator<f64>| -> Result<f64> {
        Ok(match cfg.mode {
            Mode::Lhs => solve_protocol1(rho, &ess, eta, &xi, &strat, tol)?.q_star,
            Mode::Lhv => {
                if rho.dim_b() != 2 {
                    return Err(Error::Dimension("LHV sweeps need two qubits".into()));
                }
                solve_protocol2(rho, &ess, &ess, eta, eta, &xi, &xi, &strat, &strat, tol)?.q_star
            }
        })
    };
    families
        .iter()
        .map(|fam| {
            let start = Instant::now();
            let q1 = q_of(&fam.state(1.0)?)?;
            let alpha_bound = match cfg.method {
                SweepMethod::Direct => q1,
                SweepMethod::Bisection => {
                    let feasible = |a: f64| -> Result<bool> { Ok(q_of(&fam.state(a)?)? >= 1.0 - cfg.sequence.stop_tol) };
                    let (mut lo, mut hi) = (0.0, 1.0);
                    if feasible(hi)? {
                        lo = hi;
                    }
                    while hi - lo > cfg.width {
                        let mid = 0.5 * (lo + hi);
                        if feasible(mid)? {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    lo
                }
            };
            let family = match fam {
                StateFamily::QubitQudit { d } => format!("{}:d={d}", fam.name()),
                _ => fam.name().to_string(),
            };
            Ok(SweepRow {
                family,
                mode: cfg.mode,
                level: cfg.level,
                theta: fam.theta(),
                alpha_bound,
                q_star: q1,
                eta,
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Shortest decimal form of `v` rounded to 12 significant digits.
pub fn fmt_sig12(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let r: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    format!("{r}")
}

pub const SWEEP_CSV_HEADER: &str = "family,mode,level,theta,alpha_bound,q_star,eta,runtime_s";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.family,
            r.mode,
            r.level,
            r.theta.map(fmt_sig12).unwrap_or_default(),
            fmt_sig12(r.alpha_bound),
            fmt_sig12(r.q_star),
            fmt_sig12(r.eta),
            fmt_sig12(r.runtime_s)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::werner;
    use crate::qops::max_abs;
    use nalgebra::{Complex, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pure_state_random(da: usize, db: usize, rng: &mut ChaCha8Rng) -> DensityOperator<f64> {
        let psi = DVector::from_fn(da * db, |_, _| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        DensityOperator::pure(&psi.normalize(), da, db).unwrap()
    }

    fn mixed(d: usize) -> DensityOperator<f64> {
        DensityOperator::maximally_mixed(d, 1)
    }

    #[test]
    fn lemma_maps_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let rho = pure_state_random(2, 3, &mut rng);
            let xi_a = pure_state_random(2, 1, &mut rng);
            let xi_b = pure_state_random(3, 1, &mut rng);
            let m = rho.matrix();
            let r = lemma1_map(&lemma1_inverse(m, 2, 3, &xi_a, 0.7).unwrap(), 2, 3, &xi_a, 0.7).unwrap();
            assert!(max_abs(&(r - m)) < 1e-12);
            let r = lemma2_map(&lemma2_inverse(m, 2, 3, &xi_a, &xi_b, 0.6, 0.8).unwrap(), 2, 3, &xi_a, &xi_b, 0.6, 0.8)
                .unwrap();
            assert!(max_abs(&(r - m)) < 1e-12);
        }
    }

    #[test]
    fn lemma1_matches_shrunk_assemblage() {
        // σ_{a|x}(χ, M^η) = σ_{a|x}(map(χ), M)
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let chi = pure_state_random(2, 2, &mut rng);
        let xi = pure_state_random(2, 1, &mut rng);
        let eta = 0.55;
        let mapped = lemma1_map(chi.matrix(), 2, 2, &xi, eta).unwrap();
        let set = MeasurementSet::<f64>::icosahedron(&Rotation::IDENTITY);
        for povm in set.povms() {
            let shrunk = crate::measure::shrunk_povm(povm, eta, &xi).unwrap();
            for a in 0..2 {
                let lhs = conditional_state(chi.matrix(), shrunk.element(a), 2, 2).unwrap();
                let rhs = conditional_state(&mapped, povm.element(a), 2, 2).unwrap();
                assert!(max_abs(&(lhs - rhs)) < 1e-12);
            }
        }
    }

    #[test]
    fn werner_level1() {
        let (set, eta) = level_set(1, &Rotation::IDENTITY).unwrap();
        assert!((eta - 0.794654).abs() < 1e-5);
        let strat = enumerate_all(6, 2, DEFAULT_STRATEGY_CAP).unwrap();
        let rho = werner::<f64>(1.0).unwrap();
        let cert = protocol1(&rho, &set, eta, &mixed(2), &strat, DEFAULT_TOL).unwrap();
        assert!(cert.q_star > 0.42 && cert.q_star < 0.44, "{}", cert.q_star);
        assert_eq!(cert.content_hash, cert.compute_hash().unwrap());

        // LHS threshold on the finite assemblage of the singlet
        let asm = Assemblage::from_state(&rho, &set).unwrap();
        let f = lhs_feasibility(&asm, &strat, DEFAULT_TOL).unwrap();
        assert!(!f.feasible);
        assert!((f.visibility - 0.54).abs() < 0.01, "{}", f.visibility);
    }

    #[test]
    fn white_noise_is_local() {
        let rho = werner::<f64>(0.0).unwrap();
        let (set, eta) = level_set(1, &Rotation::IDENTITY).unwrap();
        let strat = enumerate_all(6, 2, DEFAULT_STRATEGY_CAP).unwrap();
        let s = solve_protocol1(&rho, &set, eta, &mixed(2), &strat, DEFAULT_TOL).unwrap();
        assert_eq!(s.q_star, 1.0);
        let l = solve_protocol2(&rho, &set, &set, eta, eta, &mixed(2), &mixed(2), &strat, &strat, DEFAULT_TOL).unwrap();
        assert_eq!(l.q_star, 1.0);
        assert!((l.weights.iter().sum::<f64>() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn lhv_not_above_lhs() {
        let rho = werner::<f64>(1.0).unwrap();
        let (set, eta) = level_set(1, &Rotation::IDENTITY).unwrap();
        let strat = enumerate_all(6, 2, DEFAULT_STRATEGY_CAP).unwrap();
        let lhs = solve_protocol1(&rho, &set, eta, &mixed(2), &strat, DEFAULT_TOL).unwrap().q_star;
        let lhv = solve_protocol2(&rho, &set, &set, eta, eta, &mixed(2), &mixed(2), &strat, &strat, DEFAULT_TOL)
            .unwrap()
            .q_star;
        assert!(lhv >= lhs - 1e-6, "{lhv} < {lhs}");
        assert!(lhv < 1.0);
    }

    #[test]
    fn sweep_methods_agree() {
        let cfg = SweepConfig::default();
        let fams = [StateFamily::Werner, StateFamily::RhoAlphaTheta { theta: 0.3 }];
        let bis = sweep_family(&fams, &cfg).unwrap();
        let direct = sweep_family(&fams, &SweepConfig { method: SweepMethod::Direct, ..cfg.clone() }).unwrap();
        for (b, d) in bis.iter().zip(&direct) {
            assert!(b.alpha_bound <= d.alpha_bound + 1e-6 && d.alpha_bound - b.alpha_bound <= cfg.width + 1e-6);
        }
        let csv = sweep_csv(&bis);
        assert!(csv.starts_with(SWEEP_CSV_HEADER));
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().starts_with("rho-alpha-theta,lhs,1,0.3,"));
    }

    #[test]
    fn twelve_digit_format() {
        assert_eq!(fmt_sig12(0.43), "0.43");
        assert_eq!(fmt_sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_sig12(2.0), "2");
    }

    #[test]
    fn sequence_stops_when_local() {
        let rho = werner::<f64>(0.3).unwrap();
        let reps = run_sequence(&rho, Mode::Lhs, 3, &SequenceConfig::default()).unwrap();
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0].q_star, Some(1.0));
        assert!(reps[0].certificate.is_some());
    }

    #[test]
    fn strategy_mismatch_is_rejected() {
        let rho = werner::<f64>(1.0).unwrap();
        let (set, eta) = level_set(1, &Rotation::IDENTITY).unwrap();
        let strat = enumerate_all(5, 2, DEFAULT_STRATEGY_CAP).unwrap();
        assert!(matches!(protocol1(&rho, &set, eta, &mixed(2), &strat, DEFAULT_TOL), Err(Error::Dimension(_))));
        assert!(lemma1_inverse(rho.matrix(), 2, 2, &mixed(2), 0.0).is_err());
    }
}
