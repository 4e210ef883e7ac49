//! Shrinking factors of a continuous measurement set with respect to a finite
//! one.
//!
//! Projective qubit sets with Bloch geometry use the inscribed sphere of the
//! vertex polyhedron. General POVM sets are handled in the real parametrization
//! of the POVM space: the hull of the finite set is enumerated and the largest
//! `η` for which every shrunk member stays inside every facet is bisected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conic::{Backend, ConicProblem, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::hull::{convex_hull, lex_cmp, Polytope};
use crate::measure::{projective_from_bloch, BlochVector, MeasurementSet, Povm};
use crate::qops::{
    hermitian_eigenvalues, identity, inverse_sqrt, projector, trace, trace_product, ComplexMatrix, DensityOperator,
};
use crate::scalar::Real;

/// Largest parameter-space dimension accepted for facet enumeration.
pub const FACET_DIM_CAP: usize = 12;

/// Facet slack accepted as "inside" when a facet maximum is computed by a solver.
const FACET_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShrinkMethod {
    InscribedSphere,
    FacetSdpBisection,
    TwoOutcomeSpectral,
}

/// Half-space `normal · w ≤ bound` in Bloch or POVM-parameter coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacetDescription<T> {
    pub normal: Vec<T>,
    pub bound: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkResult<T> {
    pub eta: T,
    pub method: ShrinkMethod,
    pub precision: T,
    pub witness: Option<FacetDescription<T>>,
}

/// Continuous measurement sets with a shrinking-factor procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ContinuousSet {
    /// All `outcomes`-outcome POVMs on `C^dim`.
    Povm { outcomes: usize, dim: usize },
    /// All two-outcome projective qubit measurements.
    ProjectiveQubit,
}

impl ContinuousSet {
    pub fn outcomes(&self) -> usize {
        match self {
            ContinuousSet::Povm { outcomes, .. } => *outcomes,
            ContinuousSet::ProjectiveQubit => 2,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ContinuousSet::Povm { dim, .. } => *dim,
            ContinuousSet::ProjectiveQubit => 2,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ContinuousSet::ProjectiveQubit => "all projective measurements".into(),
            ContinuousSet::Povm { outcomes, dim } => format!("all {outcomes}-outcome POVMs on C^{dim}"),
        }
    }
}

/// `η = min_k dist(0, facet_k)` of the polyhedron spanned by the Bloch vertices.
pub fn inscribed_sphere_eta<T: Real>(vertices: &[BlochVector<T>]) -> Result<ShrinkResult<T>> {
    if vertices.len() < 4 {
        return Err(Error::Degenerate("need at least four Bloch vertices".into()));
    }
    let pts: Vec<Vec<T>> = vertices.iter().map(|v| v.as_array().to_vec()).collect();
    let hull = convex_hull(&pts, Some(3))?;
    if hull.intrinsic_dim < 3 {
        return Err(Error::Degenerate("coplanar Bloch vertices".into()));
    }
    let eta = hull.facets.iter().map(|f| f.offset).fold(T::one(), |a, b| a.min(b));
    if eta <= T::geom_eps() {
        return Err(Error::OriginNotInterior(eta.as_f64()));
    }
    let tie = T::geom_eps();
    // facets come sorted by normal, so the first minimal one is the lexicographic witness
    let w = hull.facets.iter().find(|f| f.offset <= eta + tie).expect("minimum exists");
    Ok(ShrinkResult {
        eta,
        method: ShrinkMethod::InscribedSphere,
        precision: tie,
        witness: Some(FacetDescription { normal: w.normal.clone(), bound: w.offset }),
    })
}

/// Orthonormal Hermitian basis coordinates of all POVM elements but the last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PovmParametrization {
    pub outcomes: usize,
    pub dim: usize,
}

impl PovmParametrization {
    pub fn new(outcomes: usize, dim: usize) -> Self {
        Self { outcomes, dim }
    }

    pub fn len(&self) -> usize {
        (self.outcomes - 1) * self.dim * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `E_ii`, then `(E_ij + E_ji)/√2` and `i(E_ij − E_ji)/√2` for `i < j`.
    pub fn basis<T: Real>(&self) -> Vec<ComplexMatrix<T>> {
        let d = self.dim;
        let s = T::one() / T::lit(2.0).sqrt();
        let mut out = Vec::with_capacity(d * d);
        for i in 0..d {
            let mut m = ComplexMatrix::<T>::zeros(d, d);
            m[(i, i)] = crate::qops::c(T::one(), T::zero());
            out.push(m);
        }
        for i in 0..d {
            for j in i + 1..d {
                let mut re = ComplexMatrix::<T>::zeros(d, d);
                re[(i, j)] = crate::qops::c(s, T::zero());
                re[(j, i)] = crate::qops::c(s, T::zero());
                out.push(re);
                let mut im = ComplexMatrix::<T>::zeros(d, d);
                im[(i, j)] = crate::qops::c(T::zero(), s);
                im[(j, i)] = crate::qops::c(T::zero(), -s);
                out.push(im);
            }
        }
        out
    }

    pub fn coords<T: Real>(&self, elements: &[ComplexMatrix<T>]) -> Vec<T> {
        let basis = self.basis::<T>();
        elements[..self.outcomes - 1]
            .iter()
            .flat_map(|e| basis.iter().map(|b| trace_product(b, e).re).collect::<Vec<_>>())
            .collect()
    }

    /// Operators `F^a` with `normal · coords(M) = Σ_a Tr[F^a M_a]`; `F^{n−1} = 0`.
    pub fn operators<T: Real>(&self, normal: &[T]) -> Vec<ComplexMatrix<T>> {
        let basis = self.basis::<T>();
        let d2 = self.dim * self.dim;
        let mut out: Vec<ComplexMatrix<T>> = normal
            .chunks(d2)
            .map(|c| c.iter().zip(&basis).fold(ComplexMatrix::<T>::zeros(self.dim, self.dim), |acc, (&w, b)| acc + b.scale(w)))
            .collect();
        out.push(ComplexMatrix::<T>::zeros(self.dim, self.dim));
        out
    }
}

/// `G_a = η F^a + (1 − η) Tr[F^a] ξ`, so that `Σ Tr[F^a M_a^η] = Σ Tr[G_a M_a]`.
fn shrunk_facet<T: Real>(f: &[ComplexMatrix<T>], eta: T, xi: &DensityOperator<T>) -> Vec<ComplexMatrix<T>> {
    f.iter().map(|fa| fa.scale(eta) + xi.matrix().scale((T::one() - eta) * trace(fa).re)).collect()
}

/// `max Σ_a Tr[F^a M_a^η]` over all POVMs of the continuous set, by an SDP over
/// the POVM elements (projective qubit sets reduce to an eigenvalue).
pub fn facet_violation_max(
    facet: &FacetDescription<f64>,
    param: &PovmParametrization,
    continuous: ContinuousSet,
    eta: f64,
    xi: &DensityOperator<f64>,
    tol: f64,
) -> Result<f64> {
    check_eta(eta)?;
    if facet.normal.len() != param.len() {
        return Err(Error::Dimension("facet normal does not match the parametrization".into()));
    }
    let g = shrunk_facet(&param.operators(&facet.normal), eta, xi);
    if let ContinuousSet::ProjectiveQubit = continuous {
        // rank-one P: Tr[G_1] + λ_max(G_0 − G_1)
        let top = hermitian_eigenvalues(&(&g[0] - &g[1]))?[0];
        return Ok(trace(&g[1]).re + top);
    }
    let d = param.dim;
    let mut p = ConicProblem::new();
    let blocks: Vec<_> = (0..param.outcomes).map(|_| p.add_hermitian_psd(d)).collect();
    for i in 0..d {
        for j in i..d {
            let (mut re, mut im) = (Vec::new(), Vec::new());
            for b in &blocks {
                let (r, m) = b.entry(i, j);
                re.extend(r);
                im.extend(m);
            }
            p.add_equality(re, if i == j { 1.0 } else { 0.0 });
            if i != j {
                p.add_equality(im, 0.0);
            }
        }
    }
    p.set_objective(blocks.iter().zip(&g).flat_map(|(b, ga)| b.inner(ga)).collect());
    let sol = p.solve(tol)?.require_optimal()?;
    Ok(sol.objective)
}

/// Two-outcome closed form: `Tr[F²] + Σ_l max(0, λ_l(F^η))` with
/// `F^η = η(F¹ − F²) + (1 − η) Tr[F¹ − F²] ξ`.
pub fn two_outcome_facet_max<T: Real>(
    f1: &ComplexMatrix<T>,
    f2: &ComplexMatrix<T>,
    eta: T,
    xi: &DensityOperator<T>,
) -> Result<T> {
    if f1.nrows() != xi.dim() || f2.nrows() != xi.dim() {
        return Err(Error::Dimension("facet operators and ξ differ in dimension".into()));
    }
    let diff = f1 - f2;
    let f_eta = diff.scale(eta) + xi.matrix().scale((T::one() - eta) * trace(&diff).re);
    let pos = hermitian_eigenvalues(&f_eta)?.into_iter().filter(|&l| l > T::zero()).fold(T::zero(), |a, b| a + b);
    hermitian_eigenvalues(f2)?;
    Ok(trace(f2).re + pos)
}

fn check_eta<T: Real>(eta: T) -> Result<()> {
    if !(eta >= T::zero() && eta <= T::one()) {
        return Err(Error::Parameter(format!("shrinking factor {} outside [0, 1]", eta.as_f64())));
    }
    Ok(())
}

/// Dual solution `Y` of the facet program: `Y ⪰ G_a` for every outcome, so that
/// `Tr Y` bounds `Σ_a Tr[G_a M_a]` over all POVMs. `Y` is shifted by a multiple
/// of the identity until the operator inequalities hold exactly in floating point.
pub fn facet_dual_certificate(
    facet: &FacetDescription<f64>,
    param: &PovmParametrization,
    eta: f64,
    xi: &DensityOperator<f64>,
    tol: f64,
) -> Result<ComplexMatrix<f64>> {
    check_eta(eta)?;
    let g = shrunk_facet(&param.operators(&facet.normal), eta, xi);
    let d = param.dim;
    let mut p = ConicProblem::new();
    let y: Vec<usize> = (0..d * d).map(|_| p.add_scalar(None, None)).collect();
    for ga in &g {
        let z = p.add_hermitian_psd(d);
        // Z_a − Y = −G_a, coordinate by coordinate
        for (k, gk) in crate::conic::hermitian_coords(ga).into_iter().enumerate() {
            p.add_equality(vec![(z.offset + k, 1.0), (y[k], -1.0)], -gk);
        }
    }
    p.set_objective((0..d).map(|i| (y[i], -1.0)).collect());
    let sol = p.solve(tol)?.require_optimal()?;
    let layout = crate::conic::HermitianBlock { dim: d, offset: y[0] };
    let mut ym = layout.value(&sol.x);
    let mut gap = 0.0f64;
    for ga in &g {
        gap = gap.max(-crate::qops::min_eigenvalue(&(&ym - ga))?);
    }
    if gap > 0.0 {
        ym += identity::<f64>(d).scale(gap * (1.0 + 1e-6) + f64::EPSILON);
    }
    Ok(ym)
}

/// Worst violation of a set of dual certificates: `max(Tr Y − b, −λ_min(Y − G_a))`
/// over all constraints of the vertex polytope.
pub fn dual_certificate_violation(
    poly: &VertexPolytope,
    eta: f64,
    xi: &DensityOperator<f64>,
    duals: &[ComplexMatrix<f64>],
) -> Result<f64> {
    let cons = poly.constraints();
    if cons.len() != duals.len() {
        return Err(Error::Certificate(format!("{} dual matrices for {} hull constraints", duals.len(), cons.len())));
    }
    let worst = cons
        .par_iter()
        .zip(duals)
        .map(|(f, y)| -> Result<f64> {
            if y.nrows() != poly.param.dim || !y.is_square() {
                return Err(Error::Dimension("dual matrix of wrong size".into()));
            }
            let herm = crate::qops::hermiticity_error(y);
            let g = shrunk_facet(&poly.param.operators(&f.normal), eta, xi);
            let mut w = trace(y).re - f.bound;
            for ga in &g {
                w = w.max(-crate::qops::min_eigenvalue(&(y - ga))?);
            }
            Ok(w.max(herm))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(worst.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Dual certificates for every hull constraint at `eta`, in constraint order.
pub fn eta_dual_certificates(
    poly: &VertexPolytope,
    eta: f64,
    xi: &DensityOperator<f64>,
    tol: f64,
) -> Result<Vec<ComplexMatrix<f64>>> {
    poly.constraints().par_iter().map(|f| facet_dual_certificate(f, &poly.param, eta, xi, tol)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BisectionOptions {
    pub samples: usize,
    pub seed: u64,
    pub tol: f64,
}

impl Default for BisectionOptions {
    fn default() -> Self {
        Self { samples: 200, seed: 0, tol: DEFAULT_TOL }
    }
}

/// Vertex polytope of a finite set, closed under outcome relabelling.
pub struct VertexPolytope {
    pub param: PovmParametrization,
    pub continuous: ContinuousSet,
    pub points: Vec<Vec<f64>>,
    pub hull: Polytope<f64>,
}

impl VertexPolytope {
    pub fn new(set: &MeasurementSet<f64>, continuous: ContinuousSet) -> Result<Self> {
        if set.dim() != continuous.dim() || set.outcomes() != continuous.outcomes() {
            return Err(Error::Dimension("finite and continuous sets differ in dimension or outcome count".into()));
        }
        let param = PovmParametrization::new(continuous.outcomes(), continuous.dim());
        if param.len() > FACET_DIM_CAP {
            return Err(Error::FacetCap { dim: param.len(), cap: FACET_DIM_CAP });
        }
        let points = relabelled_points(set, &param);
        let hull = convex_hull(&points, Some(FACET_DIM_CAP))?;
        Ok(Self { param, continuous, points, hull })
    }

    /// All half-spaces to check: facets plus both sides of every equality.
    pub fn constraints(&self) -> Vec<FacetDescription<f64>> {
        let mut out: Vec<_> =
            self.hull.facets.iter().map(|f| FacetDescription { normal: f.normal.clone(), bound: f.offset }).collect();
        for (a, b) in &self.hull.equalities {
            out.push(FacetDescription { normal: a.clone(), bound: *b });
            out.push(FacetDescription { normal: a.iter().map(|v| -v).collect(), bound: -b });
        }
        out
    }

    fn method(&self) -> ShrinkMethod {
        match self.continuous {
            ContinuousSet::Povm { outcomes: 2, .. } | ContinuousSet::ProjectiveQubit => ShrinkMethod::TwoOutcomeSpectral,
            _ => ShrinkMethod::FacetSdpBisection,
        }
    }

    fn facet_max(&self, f: &FacetDescription<f64>, eta: f64, xi: &DensityOperator<f64>, tol: f64) -> Result<f64> {
        match self.continuous {
            ContinuousSet::Povm { outcomes: 2, .. } => {
                let ops = self.param.operators(&f.normal);
                two_outcome_facet_max(&ops[0], &ops[1], eta, xi)
            }
            _ => facet_violation_max(f, &self.param, self.continuous, eta, xi, tol),
        }
    }

    /// First constraint (in order) violated by the shrunk continuous set.
    fn violated(&self, cons: &[FacetDescription<f64>], eta: f64, xi: &DensityOperator<f64>, tol: f64) -> Result<bool> {
        let hit = cons
            .par_iter()
            .map(|f| self.facet_max(f, eta, xi, tol).map(|v| v > f.bound + FACET_TOL))
            .find_any(|r| !matches!(r, Ok(false)));
        match hit {
            None => Ok(false),
            Some(r) => r,
        }
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn relabelled_points(set: &MeasurementSet<f64>, param: &PovmParametrization) -> Vec<Vec<f64>> {
    let perms = permutations(param.outcomes);
    let mut pts: Vec<Vec<f64>> = Vec::new();
    for povm in set.povms() {
        for perm in &perms {
            let w = param.coords(povm.relabel(perm).elements());
            if !pts.iter().any(|p| p.iter().zip(&w).all(|(a, b)| (a - b).abs() < 1e-9)) {
                pts.push(w);
            }
        }
    }
    pts.sort_by(|a, b| lex_cmp(a, b));
    pts
}

/// Bisect the largest `η` such that every shrunk member of `continuous` lies in
/// the hull of `set` (closed under outcome relabelling). The returned `η` is
/// the feasible end of the final bracket.
pub fn eta_by_bisection(
    set: &MeasurementSet<f64>,
    continuous: ContinuousSet,
    xi: &DensityOperator<f64>,
    precision: f64,
    opts: &BisectionOptions,
) -> Result<ShrinkResult<f64>> {
    if !(precision > 0.0) {
        return Err(Error::Parameter("precision must be positive".into()));
    }
    if xi.dim() != continuous.dim() {
        return Err(Error::Dimension("ξ does not act on the measured system".into()));
    }
    let poly = VertexPolytope::new(set, continuous)?;
    let cons = poly.constraints();
    if poly.violated(&cons, 0.0, xi, opts.tol)? {
        return Err(Error::Infeasible("the fully shrunk set is outside the hull".into()));
    }
    let upper = upper_estimate_for(&poly, xi, opts.samples, opts.seed)?;
    let (mut lo, mut hi) = (0.0, (upper + precision).min(1.0));
    if !poly.violated(&cons, hi, xi, opts.tol)? {
        lo = hi;
    }
    while hi - lo > precision {
        let mid = 0.5 * (lo + hi);
        if poly.violated(&cons, mid, xi, opts.tol)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let witness = binding_facet(&poly, &cons, hi, xi, opts.tol)?;
    Ok(ShrinkResult { eta: lo, method: poly.method(), precision, witness: Some(witness) })
}

/// Facet with the largest excess at `eta`; ties go to the lexicographically
/// smallest normal.
fn binding_facet(
    poly: &VertexPolytope,
    cons: &[FacetDescription<f64>],
    eta: f64,
    xi: &DensityOperator<f64>,
    tol: f64,
) -> Result<FacetDescription<f64>> {
    let excess = cons
        .par_iter()
        .map(|f| poly.facet_max(f, eta, xi, tol).map(|v| v - f.bound))
        .collect::<Result<Vec<_>>>()?;
    let best = excess.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut ties: Vec<&FacetDescription<f64>> =
        cons.iter().zip(&excess).filter(|(_, &e)| e >= best - 1e-9).map(|(f, _)| f).collect();
    ties.sort_by(|a, b| lex_cmp(&a.normal, &b.normal));
    Ok(ties[0].clone())
}

/// Largest `p ∈ [0, 1]` with `M^p` in the hull of the (relabelled) finite set.
pub fn membership_eta(set: &MeasurementSet<f64>, member: &Povm<f64>, xi: &DensityOperator<f64>) -> Result<f64> {
    let param = PovmParametrization::new(member.outcomes(), member.dim());
    if set.dim() != member.dim() || set.outcomes() != member.outcomes() {
        return Err(Error::Dimension("probe does not match the finite set".into()));
    }
    membership_in_points(&relabelled_points(set, &param), &param, member, xi)
}

fn membership_in_points(
    points: &[Vec<f64>],
    param: &PovmParametrization,
    member: &Povm<f64>,
    xi: &DensityOperator<f64>,
) -> Result<f64> {
    let w = param.coords(member.elements());
    let flat: Vec<ComplexMatrix<f64>> =
        member.elements().iter().map(|e| identity::<f64>(param.dim).scale(trace_product(xi.matrix(), e).re)).collect();
    let t = param.coords(&flat);
    // Σ_j c_j v_j − p (w − t) = t,  Σ_j c_j = 1
    let mut lp = ConicProblem::new();
    let p = lp.add_scalar(Some(0.0), Some(1.0));
    let c: Vec<usize> = points.iter().map(|_| lp.add_scalar(Some(0.0), None)).collect();
    for k in 0..param.len() {
        let mut row: Vec<(usize, f64)> = c.iter().zip(points).map(|(&v, pt)| (v, pt[k])).collect();
        row.push((p, -(w[k] - t[k])));
        lp.add_equality(row, t[k]);
    }
    lp.add_equality(c.iter().map(|&v| (v, 1.0)).collect(), 1.0);
    lp.set_objective(vec![(p, 1.0)]);
    let sol = lp.solve_with(Backend::Simplex, DEFAULT_TOL)?;
    match sol.status {
        crate::conic::SolveStatus::Optimal => Ok(sol.value(p)),
        crate::conic::SolveStatus::Infeasible => Ok(0.0),
        s => Err(Error::Solver(s)),
    }
}

/// `min_M max{p : M^p ∈ hull}` over `samples` random members of the continuous
/// set; an upper bound on the shrinking factor.
pub fn eta_upper_estimate(
    set: &MeasurementSet<f64>,
    continuous: ContinuousSet,
    xi: &DensityOperator<f64>,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let poly = VertexPolytope::new(set, continuous)?;
    upper_estimate_for(&poly, xi, samples, seed)
}

fn upper_estimate_for(poly: &VertexPolytope, xi: &DensityOperator<f64>, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Parameter("at least one sample is needed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members: Vec<Povm<f64>> =
        (0..samples).map(|_| random_member(poly.continuous, &mut rng)).collect::<Result<Vec<_>>>()?;
    let ps = members
        .par_iter()
        .map(|m| membership_in_points(&poly.points, &poly.param, m, xi))
        .collect::<Result<Vec<_>>>()?;
    Ok(ps.into_iter().fold(1.0, f64::min))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let v: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    (-2.0 * u.ln()).sqrt() * v.cos()
}

/// Random member of the continuous set: a uniform Bloch direction, or a POVM
/// `S^{-1/2} g_a g_a† S^{-1/2}` from complex Gaussian vectors.
pub fn random_member(continuous: ContinuousSet, rng: &mut ChaCha8Rng) -> Result<Povm<f64>> {
    match continuous {
        ContinuousSet::ProjectiveQubit => {
            let v = BlochVector::new(gaussian(rng), gaussian(rng), gaussian(rng)).normalized()?;
            projective_from_bloch(v)
        }
        ContinuousSet::Povm { outcomes, dim } => {
            let parts: Vec<ComplexMatrix<f64>> = (0..outcomes)
                .map(|_| {
                    let g = nalgebra::DVector::from_fn(dim, |_, _| nalgebra::Complex::new(gaussian(rng), gaussian(rng)));
                    if outcomes >= dim {
                        projector(&g).scale(g.norm_squared())
                    } else {
                        let h = ComplexMatrix::<f64>::from_fn(dim, dim, |_, _| nalgebra::Complex::new(gaussian(rng), gaussian(rng)));
                        &h * h.adjoint()
                    }
                })
                .collect();
            let s = parts.iter().fold(ComplexMatrix::<f64>::zeros(dim, dim), |a, b| a + b);
            let r = inverse_sqrt(&s)?;
            Povm::new(parts.iter().map(|a| {
                let m = &r * a * &r;
                (&m + m.adjoint()).scale(0.5)
            }).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{icosahedron_povm4, MeasurementSet, Rotation};
    use crate::qops::{max_abs, pauli_x, pauli_z};

    fn ico() -> MeasurementSet<f64> {
        MeasurementSet::icosahedron(&Rotation::IDENTITY)
    }

    fn mixed() -> DensityOperator<f64> {
        DensityOperator::maximally_mixed(2, 1)
    }

    #[test]
    fn closed_form_solids() {
        let r = inscribed_sphere_eta(ico().bloch_vertices().unwrap()).unwrap();
        assert!((r.eta - ((5.0 + 2.0 * 5f64.sqrt()) / 15.0).sqrt()).abs() < 1e-12);
        let cube = MeasurementSet::<f64>::cube(&Rotation::IDENTITY);
        let r = inscribed_sphere_eta(cube.bloch_vertices().unwrap()).unwrap();
        assert!((r.eta - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        let w = r.witness.unwrap();
        assert_eq!(w.normal.iter().map(|v| v.round()).collect::<Vec<_>>(), vec![-1.0, 0.0, 0.0]);
        let f32_eta = inscribed_sphere_eta(MeasurementSet::<f32>::icosahedron(&Rotation::IDENTITY).bloch_vertices().unwrap())
            .unwrap()
            .eta;
        assert!((f32_eta - 0.794_654_5).abs() < 1e-5);
    }

    #[test]
    fn refinement_increases_eta() {
        let mut set = ico();
        let mut etas = vec![inscribed_sphere_eta(set.bloch_vertices().unwrap()).unwrap().eta];
        for _ in 0..3 {
            set = set.refine_by_dual().unwrap();
            etas.push(inscribed_sphere_eta(set.bloch_vertices().unwrap()).unwrap().eta);
        }
        assert!(etas.windows(2).all(|w| w[1] > w[0]), "{etas:?}");
        assert!((etas[1] - 0.923).abs() < 2e-3);
    }

    #[test]
    fn degenerate_inputs() {
        let flat: Vec<BlochVector<f64>> =
            [[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -1.0, 0.0]].iter().map(|v| BlochVector::from_f64(*v)).collect();
        assert!(matches!(inscribed_sphere_eta(&flat), Err(Error::Degenerate(_))));
        let cap: Vec<BlochVector<f64>> = [[0.0, 0.0, 1.0], [0.6, 0.0, 0.8], [0.0, 0.6, 0.8], [-0.6, 0.0, 0.8]]
            .iter()
            .map(|v| BlochVector::from_f64(*v))
            .collect();
        assert!(matches!(inscribed_sphere_eta(&cap), Err(Error::OriginNotInterior(_))));
    }

    #[test]
    fn parametrization_is_isometric() {
        let param = PovmParametrization::new(3, 2);
        let basis = param.basis::<f64>();
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let ip = trace_product(a, b).re;
                assert!((ip - f64::from(u8::from(i == j))).abs() < 1e-15);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = random_member(ContinuousSet::Povm { outcomes: 3, dim: 2 }, &mut rng).unwrap();
        let normal: Vec<f64> = (0..param.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let f = param.operators(&normal);
        let lhs: f64 = normal.iter().zip(param.coords(m.elements())).map(|(a, b)| a * b).sum();
        let rhs: f64 = f.iter().zip(m.elements()).map(|(fa, ma)| trace_product(fa, ma).re).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn facet_max_limits() {
        let param = PovmParametrization::new(3, 2);
        let normal = vec![0.3, -0.2, 0.1, 0.4, 0.5, 0.0, -0.3, 0.2];
        let facet = FacetDescription { normal: normal.clone(), bound: 0.0 };
        let cont = ContinuousSet::Povm { outcomes: 3, dim: 2 };
        // fully shrunk: every element is a multiple of 1, the best is all weight on one outcome
        let v0 = facet_violation_max(&facet, &param, cont, 0.0, &mixed(), DEFAULT_TOL).unwrap();
        let best = param.operators(&normal).iter().map(|f| trace(f).re).fold(f64::NEG_INFINITY, f64::max);
        assert!((v0 - best).abs() < 1e-6, "{v0} vs {best}");
        // probes never exceed the optimum
        let v = facet_violation_max(&facet, &param, cont, 0.7, &mixed(), DEFAULT_TOL).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ops = shrunk_facet(&param.operators(&normal), 0.7, &mixed());
        for _ in 0..50 {
            let m = random_member(cont, &mut rng).unwrap();
            let val: f64 = ops.iter().zip(m.elements()).map(|(g, e)| trace_product(g, e).re).sum();
            assert!(val <= v + 1e-7);
        }
        assert!(facet_violation_max(&facet, &param, cont, 1.2, &mixed(), DEFAULT_TOL).is_err());
    }

    #[test]
    fn two_outcome_shortcut_matches_sdp() {
        let x = pauli_x::<f64>();
        assert!((two_outcome_facet_max(&x, &x, 0.4, &mixed()).unwrap() - 0.0).abs() < 1e-15);
        let z = pauli_z::<f64>() + identity::<f64>(2);
        assert!((two_outcome_facet_max(&z, &z, 0.4, &mixed()).unwrap() - 2.0).abs() < 1e-15);

        let param = PovmParametrization::new(2, 2);
        let cont = ContinuousSet::Povm { outcomes: 2, dim: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let normal: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eta = rng.gen_range(0.0..=1.0);
            let ops = param.operators(&normal);
            let spectral = two_outcome_facet_max(&ops[0], &ops[1], eta, &mixed()).unwrap();
            let sdp = facet_violation_max(&FacetDescription { normal, bound: 0.0 }, &param, cont, eta, &mixed(), DEFAULT_TOL)
                .unwrap();
            assert!((spectral - sdp).abs() < 1e-6, "{spectral} vs {sdp}");
        }
    }

    #[test]
    fn eigenvalues_under_maximally_mixed_xi() {
        let f = ComplexMatrix::<f64>::from_fn(2, 2, |i, j| nalgebra::Complex::new((i + 2 * j) as f64, 0.0));
        let f = (&f + f.adjoint()).scale(0.5);
        let eta = 0.3;
        let g = shrunk_facet(&[f.clone()], eta, &mixed());
        let got = hermitian_eigenvalues(&g[0]).unwrap();
        let want: Vec<f64> = hermitian_eigenvalues(&f).unwrap().iter().map(|l| eta * l + (1.0 - eta) * trace(&f).re / 2.0).collect();
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn projective_bisection_matches_inscribed_sphere() {
        let exact = ((5.0 + 2.0 * 5f64.sqrt()) / 15.0).sqrt();
        let opts = BisectionOptions { samples: 500, ..Default::default() };
        let r = eta_by_bisection(&ico(), ContinuousSet::ProjectiveQubit, &mixed(), 1e-4, &opts).unwrap();
        assert!(r.eta <= exact + 1e-9 && exact - r.eta <= 1e-4, "{}", r.eta);
        assert_eq!(r.method, ShrinkMethod::TwoOutcomeSpectral);
        // projective vertices cannot reach the trace-shifted two-outcome POVMs
        let r = eta_by_bisection(&ico(), ContinuousSet::Povm { outcomes: 2, dim: 2 }, &mixed(), 1e-4, &opts);
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn dual_certificates_bound_the_primal() {
        let param = PovmParametrization::new(3, 2);
        let cont = ContinuousSet::Povm { outcomes: 3, dim: 2 };
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let normal: Vec<f64> = (0..param.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let eta = rng.gen_range(0.0..=1.0);
            let facet = FacetDescription { normal, bound: 0.0 };
            let primal = facet_violation_max(&facet, &param, cont, eta, &mixed(), DEFAULT_TOL).unwrap();
            let y = facet_dual_certificate(&facet, &param, eta, &mixed(), DEFAULT_TOL).unwrap();
            let dual = trace(&y).re;
            assert!(dual >= primal - 1e-7 && dual - primal < 1e-6, "{dual} vs {primal}");
            for g in shrunk_facet(&param.operators(&facet.normal), eta, &mixed()) {
                assert!(crate::qops::min_eigenvalue(&(&y - g)).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn bisection_step_bound() {
        let precision = 1e-2;
        let steps = (1.0f64 / precision).log2().ceil() as usize + 1;
        let (mut lo, mut hi, mut n) = (0.0, 1.0, 0);
        while hi - lo > precision {
            let mid = 0.5 * (lo + hi);
            if mid < 0.7947 {
                lo = mid
            } else {
                hi = mid
            }
            n += 1;
        }
        assert!(n <= steps);
    }

    #[test]
    fn membership_estimates() {
        let set = ico();
        for p in set.povms() {
            assert!((membership_eta(&set, p, &mixed()).unwrap() - 1.0).abs() < 1e-9);
        }
        let cube = MeasurementSet::<f64>::cube(&Rotation::IDENTITY);
        let axis = projective_from_bloch(BlochVector::new(1.0, 0.0, 0.0)).unwrap();
        assert!((membership_eta(&cube, &axis, &mixed()).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-9);
        let est = eta_upper_estimate(&set, ContinuousSet::ProjectiveQubit, &mixed(), 2000, 1).unwrap();
        let exact = ((5.0 + 2.0 * 5f64.sqrt()) / 15.0).sqrt();
        assert!(est >= exact - 1e-9 && est <= 0.80, "{est}");
    }

    #[test]
    fn random_povms_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (k, d) in [(2, 2), (4, 2), (3, 3), (2, 3)] {
            let m = random_member(ContinuousSet::Povm { outcomes: k, dim: d }, &mut rng).unwrap();
            let s = m.elements().iter().fold(ComplexMatrix::<f64>::zeros(d, d), |a, b| a + b);
            assert!(max_abs(&(s - identity::<f64>(d))) < 1e-10);
        }
    }

    #[test]
    fn povm4_polytope_shape() {
        let set = icosahedron_povm4::<f64>(&Rotation::IDENTITY);
        let poly = VertexPolytope::new(&set, ContinuousSet::Povm { outcomes: 4, dim: 2 }).unwrap();
        assert_eq!(poly.points.len(), 76);
        assert_eq!(poly.hull.intrinsic_dim, 12);
        assert!(poly.hull.equalities.is_empty());
        let z3 = (0..3).map(|i| projector(&crate::qops::basis::<f64>(3, i))).collect();
        let qutrit = MeasurementSet::new(vec![Povm::new(z3).unwrap()], "z3").unwrap();
        assert!(matches!(
            VertexPolytope::new(&qutrit, ContinuousSet::Povm { outcomes: 3, dim: 3 }),
            Err(Error::FacetCap { dim: 18, cap: 12 })
        ));
    }
}
