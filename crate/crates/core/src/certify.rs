//! Solver-free audit of local-model certificates.
//!
//! Every constraint is recomputed from the stored raw data with the
//! linear-algebra primitives: the shrinking map, the assemblage or correlation
//! equalities, positivity of the hidden data and the shrinking factor itself.
//! Nothing stored by the solver is trusted.

use serde::Serialize;

use crate::catalog::fmt_short;
use crate::doc::{matrix_from_doc, MatrixDoc};
use crate::error::{Error, Result};
use crate::measure::{projective_from_bloch, MeasurementSet};
use crate::protocols::{
    conditional_state, continuous_for, lemma1_map, lemma2_map, noisy_target, LocalModelCertificate, Mode, PartyDoc,
    CERTIFICATE_SCHEMA,
};
use crate::qops::{
    hermiticity_error, identity, max_abs, min_eigenvalue, tensor, trace, trace_product, ComplexMatrix, DensityOperator,
};
use crate::shrink::{dual_certificate_violation, inscribed_sphere_eta, ContinuousSet, VertexPolytope};
use crate::strategies::StrategySet;

pub const DEFAULT_AUDIT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// Measured violation; the check passes when `value ≤ limit`.
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub mode: Mode,
    pub tol: f64,
    pub pass: bool,
    pub content_hash: String,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Audit {
    tol: f64,
    checks: Vec<Check>,
}

impl Audit {
    fn push(&mut self, name: impl Into<String>, value: f64, limit: f64) {
        let pass = value.is_finite() && value <= limit;
        self.checks.push(Check { name: name.into(), value, limit, pass, detail: None });
    }

    fn within(&mut self, name: impl Into<String>, value: f64) {
        let tol = self.tol;
        self.push(name, value, tol);
    }

    fn fail(&mut self, name: impl Into<String>, detail: impl ToString) {
        self.checks.push(Check {
            name: name.into(),
            value: f64::INFINITY,
            limit: 0.0,
            pass: false,
            detail: Some(detail.to_string()),
        });
    }

    /// Unwrap a parse step, recording a failed check on error.
    fn parse<T>(&mut self, name: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.fail(name, e);
                None
            }
        }
    }
}

/// Parsed view of one party.
struct Party {
    essential: MeasurementSet<f64>,
    xi: DensityOperator<f64>,
    strategies: StrategySet,
    eta: f64,
}

fn audit_party(audit: &mut Audit, who: &str, doc: &PartyDoc, dim: usize) -> Option<Party> {
    let set = audit.parse(&format!("measurements[{who}]"), MeasurementSet::from_doc(&doc.measurements))?;
    if set.dim() != dim {
        audit.fail(format!("measurements[{who}]"), "set does not act on the party's system");
        return None;
    }
    audit.push(format!("measurements[{who}]"), 0.0, 0.0);
    let xi = audit.parse(&format!("xi[{who}]"), matrix_from_doc(&doc.xi).and_then(DensityOperator::local))?;
    if xi.dim() != dim {
        audit.fail(format!("xi[{who}]"), "ξ has the wrong dimension");
        return None;
    }
    audit.push(format!("xi[{who}]"), 0.0, 0.0);
    let essential = audit.parse(&format!("measurements[{who}]"), set.essential())?;
    let strategies = audit.parse(&format!("strategies[{who}]"), StrategySet::from_doc(&doc.strategies))?;
    if strategies.m() != essential.len() || strategies.k() != essential.outcomes() || strategies.is_empty() {
        audit.fail(format!("strategies[{who}]"), "strategy set does not index the essential measurements");
        return None;
    }
    audit.push(format!("strategies[{who}]"), 0.0, 0.0);
    let eta = doc.eta;
    let name = format!("shrinking-factor[{who}]");
    if !(eta > 0.0 && eta <= 1.0) {
        audit.fail(name, format!("η = {eta} outside (0, 1]"));
        return Some(Party { essential, xi, strategies, eta });
    }
    if doc.continuous != continuous_for(&set) {
        audit.fail(name, "continuous set does not match the finite set");
        return Some(Party { essential, xi, strategies, eta });
    }
    match doc.continuous {
        ContinuousSet::ProjectiveQubit => match audit_inscribed(&set, &xi, eta) {
            Ok(v) => audit.within(name, v),
            Err(e) => audit.fail(name, e),
        },
        ContinuousSet::Povm { .. } => match audit_duals(&set, doc, &xi, eta) {
            Ok(v) => audit.within(name, v),
            Err(e) => audit.fail(name, e),
        },
    }
    Some(Party { essential, xi, strategies, eta })
}

/// Inscribed-sphere bound for Bloch sets. Also checks that the POVMs are the
/// projectors of the stored vertices and that `ξ` is maximally mixed.
fn audit_inscribed(set: &MeasurementSet<f64>, xi: &DensityOperator<f64>, eta: f64) -> Result<f64> {
    let v = set.bloch_vertices().ok_or_else(|| Error::Certificate("Bloch vertices missing".into()))?;
    let mut worst = max_abs(&(xi.matrix() - identity::<f64>(2).unscale(2.0)));
    for (x, povm) in set.povms().iter().enumerate() {
        let (p, m) = (v[2 * x], v[2 * x + 1]);
        worst = worst.max((p.norm() - 1.0).abs());
        worst = worst.max(p.as_array().iter().zip(m.as_array()).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max));
        let expected = projective_from_bloch(p)?;
        for a in 0..2 {
            worst = worst.max(max_abs(&(povm.element(a) - expected.element(a))));
        }
    }
    let exact = inscribed_sphere_eta(v)?.eta;
    Ok(worst.max(eta - exact))
}

fn audit_duals(set: &MeasurementSet<f64>, doc: &PartyDoc, xi: &DensityOperator<f64>, eta: f64) -> Result<f64> {
    let duals = doc
        .eta_duals
        .as_ref()
        .ok_or_else(|| Error::Certificate("no dual certificates for the shrinking factor".into()))?
        .iter()
        .map(matrix_from_doc)
        .collect::<Result<Vec<ComplexMatrix<f64>>>>()?;
    let poly = VertexPolytope::new(set, doc.continuous)?;
    dual_certificate_violation(&poly, eta, xi, &duals)
}

fn hidden_matrices(docs: &[MatrixDoc], dim: usize) -> Result<Vec<ComplexMatrix<f64>>> {
    docs.iter()
        .map(|d| {
            let m: ComplexMatrix<f64> = matrix_from_doc(d)?;
            if m.nrows() != dim || !m.is_square() {
                return Err(Error::Dimension("hidden state of wrong size".into()));
            }
            Ok(m)
        })
        .collect()
}

/// Checks shared by both modes; returns `(ρ, χ)` when they parse.
fn audit_common(audit: &mut Audit, cert: &LocalModelCertificate) -> Option<(DensityOperator<f64>, ComplexMatrix<f64>)> {
    audit.push("schema", if cert.schema == CERTIFICATE_SCHEMA { 0.0 } else { f64::INFINITY }, 0.0);
    match cert.compute_hash() {
        Ok(h) if h == cert.content_hash => audit.push("content-hash", 0.0, 0.0),
        Ok(_) => audit.fail("content-hash", "stored hash does not match the content"),
        Err(e) => audit.fail("content-hash", e),
    }
    let t = &cert.target.state;
    let rho = audit.parse(
        "target-state",
        matrix_from_doc(&t.matrix).and_then(|m| DensityOperator::new(m, t.dim_a, t.dim_b)),
    )?;
    audit.push("target-state", 0.0, 0.0);
    if let (Some(fam), Some(alpha)) = (cert.target.family, cert.target.alpha) {
        match fam.state::<f64>(alpha) {
            Ok(s) => audit.within("target-label", max_abs(&(s.matrix() - rho.matrix()))),
            Err(e) => audit.fail("target-label", e),
        }
    } else if cert.target.family.is_some() || cert.target.alpha.is_some() {
        audit.fail("target-label", "family and α must be given together");
    }
    let q = cert.q_star;
    audit.push("q-range", if (0.0..=1.0).contains(&q) { 0.0 } else { f64::INFINITY }, 0.0);
    let c = &cert.chi;
    if c.dim_a != rho.dim_a() || c.dim_b != rho.dim_b() {
        audit.fail("chi", "χ dimensions differ from the target");
        return None;
    }
    let chi: ComplexMatrix<f64> = audit.parse("chi", matrix_from_doc(&c.matrix))?;
    if chi.nrows() != rho.dim() || !chi.is_square() {
        audit.fail("chi", "χ has the wrong size");
        return None;
    }
    audit.within("chi-hermitian", hermiticity_error(&chi));
    audit.within("chi-trace", (trace(&chi) - nalgebra::Complex::new(1.0, 0.0)).norm());

    let s = &cert.solver;
    let r = s.residuals;
    let range = |v: f64| if v >= 0.0 { v } else { f64::INFINITY };
    audit.within("solver-tol", if s.tol > 0.0 { s.tol } else { f64::INFINITY });
    audit.within("solver-equality-residual", range(r.max_equality));
    audit.within("solver-inequality-violation", range(r.max_inequality));
    Some((rho, chi))
}

fn finish(audit: Audit, cert: &LocalModelCertificate) -> VerificationReport {
    VerificationReport {
        mode: cert.mode,
        tol: audit.tol,
        pass: audit.checks.iter().all(|c| c.pass),
        content_hash: cert.content_hash.clone(),
        checks: audit.checks,
    }
}

/// Audit an LHS certificate. `Err` only when the certificate is not an LHS
/// certificate; every data defect is reported as a failed check.
pub fn verify_lhs(cert: &LocalModelCertificate, tol: f64) -> Result<VerificationReport> {
    if cert.mode != Mode::Lhs {
        return Err(Error::Certificate("not an LHS certificate".into()));
    }
    let mut audit = Audit { tol, checks: Vec::new() };
    if let Some((rho, chi)) = audit_common(&mut audit, cert) {
        lhs_body(&mut audit, cert, &rho, &chi);
    }
    Ok(finish(audit, cert))
}

fn lhs_body(audit: &mut Audit, cert: &LocalModelCertificate, rho: &DensityOperator<f64>, chi: &ComplexMatrix<f64>) {
    let (da, db) = (rho.dim_a(), rho.dim_b());
    if cert.bob.is_some() || cert.weights.is_some() {
        audit.fail("layout", "LHS certificate carries LHV data");
    }
    let Some(alice) = audit_party(audit, "alice", &cert.alice, da) else { return };
    match lemma1_map(chi, da, db, &alice.xi, alice.eta) {
        Ok(m) => audit.within("state-map", max_abs(&(m - noisy_target(rho, cert.q_star)))),
        Err(e) => audit.fail("state-map", e),
    }
    let Some(docs) = &cert.hidden_states else {
        audit.fail("hidden-states", "no hidden states");
        return;
    };
    let Some(hidden) = audit.parse("hidden-states", hidden_matrices(docs, db)) else { return };
    if hidden.len() != alice.strategies.len() {
        audit.fail("hidden-states", format!("{} hidden states for {} strategies", hidden.len(), alice.strategies.len()));
        return;
    }
    audit.push("hidden-states", 0.0, 0.0);
    audit.within("hidden-state-hermitian", hidden.iter().map(hermiticity_error).fold(0.0, f64::max));
    let min_eig = hidden
        .iter()
        .map(|h| min_eigenvalue(h).unwrap_or(f64::NEG_INFINITY))
        .fold(f64::INFINITY, f64::min);
    audit.within("hidden-state-psd", (-min_eig).max(0.0));
    match cert.solver.residuals.min_psd_slack {
        Some(s) => audit.within("solver-psd-slack", (s - min_eig).abs()),
        None => audit.fail("solver-psd-slack", "missing"),
    }
    let mut worst = 0.0f64;
    for (x, povm) in alice.essential.povms().iter().enumerate() {
        for a in 0..povm.outcomes() {
            let lhs = match conditional_state(chi, povm.element(a), da, db) {
                Ok(m) => m,
                Err(e) => return audit.fail("assemblage", e),
            };
            let rhs = alice
                .strategies
                .strategies()
                .iter()
                .zip(&hidden)
                .filter(|(s, _)| s.outcome(x) == a)
                .fold(ComplexMatrix::zeros(db, db), |acc, (_, h)| acc + h);
            worst = worst.max(max_abs(&(lhs - rhs)));
        }
    }
    audit.within("assemblage", worst);
}

/// Audit an LHV certificate.
pub fn verify_lhv(cert: &LocalModelCertificate, tol: f64) -> Result<VerificationReport> {
    if cert.mode != Mode::Lhv {
        return Err(Error::Certificate("not an LHV certificate".into()));
    }
    let mut audit = Audit { tol, checks: Vec::new() };
    if let Some((rho, chi)) = audit_common(&mut audit, cert) {
        lhv_body(&mut audit, cert, &rho, &chi);
    }
    Ok(finish(audit, cert))
}

fn lhv_body(audit: &mut Audit, cert: &LocalModelCertificate, rho: &DensityOperator<f64>, chi: &ComplexMatrix<f64>) {
    let (da, db) = (rho.dim_a(), rho.dim_b());
    if cert.hidden_states.is_some() || cert.solver.residuals.min_psd_slack.is_some() {
        audit.fail("layout", "LHV certificate carries LHS data");
    }
    let Some(bob_doc) = &cert.bob else {
        audit.fail("layout", "no second party");
        return;
    };
    let Some(alice) = audit_party(audit, "alice", &cert.alice, da) else { return };
    let Some(bob) = audit_party(audit, "bob", bob_doc, db) else { return };
    match lemma2_map(chi, da, db, &alice.xi, &bob.xi, alice.eta, bob.eta) {
        Ok(m) => audit.within("state-map", max_abs(&(m - noisy_target(rho, cert.q_star)))),
        Err(e) => audit.fail("state-map", e),
    }
    let Some(w) = &cert.weights else {
        audit.fail("weights", "no weights");
        return;
    };
    let (na, nb) = (alice.strategies.len(), bob.strategies.len());
    if w.len() != na * nb {
        audit.fail("weights", format!("{} weights for {} strategy pairs", w.len(), na * nb));
        return;
    }
    audit.push("weights", 0.0, 0.0);
    audit.within("weights-nonnegative", w.iter().fold(0.0f64, |m, &p| m.max(-p)));
    audit.within("weights-normalized", (w.iter().sum::<f64>() - 1.0).abs());

    let (sa, sb) = (&alice.essential, &bob.essential);
    let (ka, kb) = (sa.outcomes(), sb.outcomes());
    let (ma, mb) = (sa.len(), sb.len());
    let idx = |x: usize, a: usize, y: usize, b: usize| ((x * ka + a) * mb + y) * kb + b;
    let mut model = vec![0.0; ma * ka * mb * kb];
    for (i, s) in alice.strategies.strategies().iter().enumerate() {
        for (j, t) in bob.strategies.strategies().iter().enumerate() {
            let p = w[i * nb + j];
            for x in 0..ma {
                for y in 0..mb {
                    model[idx(x, s.outcome(x), y, t.outcome(y))] += p;
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for (x, pa) in sa.povms().iter().enumerate() {
        for a in 0..ka {
            for (y, pb) in sb.povms().iter().enumerate() {
                for b in 0..kb {
                    let quantum = trace_product(&tensor(pa.element(a), pb.element(b)), chi).re;
                    worst = worst.max((quantum - model[idx(x, a, y, b)]).abs());
                }
            }
        }
    }
    audit.within("correlations", worst);
}

pub fn verify(cert: &LocalModelCertificate, tol: f64) -> Result<VerificationReport> {
    match cert.mode {
        Mode::Lhs => verify_lhs(cert, tol),
        Mode::Lhv => verify_lhv(cert, tol),
    }
}

fn floor6(v: f64) -> f64 {
    (v * 1e6).floor() / 1e6
}

fn describe(c: &ContinuousSet) -> String {
    match *c {
        ContinuousSet::ProjectiveQubit => "all projective measurements".into(),
        ContinuousSet::Povm { outcomes, dim } if outcomes >= dim * dim => "all POVMs".into(),
        ContinuousSet::Povm { outcomes, .. } => format!("all {outcomes}-outcome POVMs"),
    }
}

/// Statement guaranteed by a verified certificate. Numbers in the state
/// expression are rounded down, so the statement is implied by the certificate.
pub fn compose_claim(cert: &LocalModelCertificate, report: &VerificationReport) -> Result<String> {
    if !report.pass || report.content_hash != cert.content_hash || report.mode != cert.mode {
        return Err(Error::Certificate(format!(
            "refusing to state a claim for a certificate that failed verification ({})",
            report.failed().join(", ")
        )));
    }
    let q = cert.q_star;
    let state = match (cert.target.family, cert.target.alpha) {
        (Some(fam), Some(alpha)) => fam.label(if q >= 1.0 { alpha } else { floor6(q * alpha) }),
        _ if q >= 1.0 => cert.target.label.clone(),
        _ => {
            let n = cert.target.state.dim_a * cert.target.state.dim_b;
            let qf = fmt_short(floor6(q));
            format!("{qf}·{} + (1 − {qf})·1/{n}", cert.target.label)
        }
    };
    let (model, sets, factors) = match (&cert.mode, &cert.bob) {
        (Mode::Lhv, Some(bob)) => {
            let sets = if bob.continuous == cert.alice.continuous {
                format!("{} on both sides", describe(&bob.continuous))
            } else {
                format!("{} for Alice and {} for Bob", describe(&cert.alice.continuous), describe(&bob.continuous))
            };
            ("an LHV model", sets, format!("η = {}, μ = {}", fmt_short(cert.alice.eta), fmt_short(bob.eta)))
        }
        _ => ("an LHS model", describe(&cert.alice.continuous), format!("η = {}", fmt_short(cert.alice.eta))),
    };
    Ok(format!("{state} admits {model} for {sets} (q* = {}, {factors})", fmt_short(floor6(q))))
}
