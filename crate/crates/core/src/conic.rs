//! Small modelling layer over linear and Hermitian-PSD conic programs.
//!
//! Variables live in one flat real vector. A Hermitian block of size `n` owns
//! `n²` consecutive entries: the `n` diagonal values followed by `(re, im)` of
//! every upper off-diagonal entry in row-major order.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qops::{min_eigenvalue, ComplexMatrix};

pub const DEFAULT_TOL: f64 = 1e-8;

/// Sparse real linear form `Σ coef·x[var]`.
pub type Terms = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    #[default]
    Clarabel,
    /// Pure simplex path; rejects problems with PSD blocks.
    Simplex,
}

/// Complex Hermitian matrix variable constrained to be PSD.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HermitianBlock {
    pub dim: usize,
    pub offset: usize,
}

impl HermitianBlock {
    fn pair_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j);
        let n = self.dim;
        // pairs (0,1),(0,2),…,(1,2),…
        let before = i * n - i * (i + 1) / 2;
        self.offset + n + 2 * (before + (j - i - 1))
    }

    pub fn len(&self) -> usize {
        self.dim * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.dim == 0
    }

    /// Real and imaginary parts of entry `(i, j)` as linear forms.
    pub fn entry(&self, i: usize, j: usize) -> (Terms, Terms) {
        if i == j {
            (vec![(self.offset + i, 1.0)], vec![])
        } else if i < j {
            let p = self.pair_index(i, j);
            (vec![(p, 1.0)], vec![(p + 1, 1.0)])
        } else {
            let p = self.pair_index(j, i);
            (vec![(p, 1.0)], vec![(p + 1, -1.0)])
        }
    }

    /// `Tr[G X]` for Hermitian `G`, as a real linear form in the block variables.
    pub fn inner(&self, g: &ComplexMatrix<f64>) -> Terms {
        let n = self.dim;
        let mut t = Vec::with_capacity(n * n);
        for i in 0..n {
            t.push((self.offset + i, g[(i, i)].re));
            for j in i + 1..n {
                let p = self.pair_index(i, j);
                let gij = (g[(i, j)] + g[(j, i)].conj()) * 0.5;
                t.push((p, 2.0 * gij.re));
                t.push((p + 1, 2.0 * gij.im));
            }
        }
        t
    }

    pub fn value(&self, x: &[f64]) -> ComplexMatrix<f64> {
        let n = self.dim;
        let mut m = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::new(x[self.offset + i], 0.0);
            for j in i + 1..n {
                let p = self.pair_index(i, j);
                m[(i, j)] = Complex::new(x[p], x[p + 1]);
                m[(j, i)] = Complex::new(x[p], -x[p + 1]);
            }
        }
        m
    }
}

/// Real coordinates of a Hermitian matrix in the block layout (diagonal, then
/// `(re, im)` of the upper off-diagonal entries).
pub fn hermitian_coords(m: &ComplexMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * n);
    out.extend((0..n).map(|i| m[(i, i)].re));
    for i in 0..n {
        for j in i + 1..n {
            out.push(m[(i, j)].re);
            out.push(m[(i, j)].im);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub terms: Terms,
    pub rhs: f64,
}

/// `maximize c·x` subject to equalities, `≤` inequalities, variable bounds and
/// PSD blocks.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProblem {
    pub bounds: Vec<Bound>,
    pub blocks: Vec<HermitianBlock>,
    pub equalities: Vec<Row>,
    pub inequalities: Vec<Row>,
    pub objective: Terms,
}

impl ConicProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.bounds.len()
    }

    pub fn add_scalar(&mut self, lower: Option<f64>, upper: Option<f64>) -> usize {
        self.bounds.push(Bound { lower, upper });
        self.bounds.len() - 1
    }

    pub fn add_hermitian_psd(&mut self, dim: usize) -> HermitianBlock {
        let block = HermitianBlock { dim, offset: self.bounds.len() };
        for _ in 0..dim * dim {
            self.bounds.push(Bound { lower: None, upper: None });
        }
        self.blocks.push(block);
        block
    }

    pub fn add_equality(&mut self, terms: Terms, rhs: f64) {
        self.equalities.push(Row { terms: consolidate(terms), rhs });
    }

    /// `terms ≤ rhs`.
    pub fn add_inequality(&mut self, terms: Terms, rhs: f64) {
        self.inequalities.push(Row { terms: consolidate(terms), rhs });
    }

    pub fn set_objective(&mut self, terms: Terms) {
        self.objective = consolidate(terms);
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let rows = self.equalities.iter().chain(&self.inequalities);
        for r in rows {
            if !r.rhs.is_finite() || r.terms.iter().any(|&(v, c)| v >= n || !c.is_finite()) {
                return Err(Error::Parameter("constraint references an undeclared variable or is not finite".into()));
            }
        }
        if self.objective.iter().any(|&(v, c)| v >= n || !c.is_finite()) {
            return Err(Error::Parameter("objective references an undeclared variable or is not finite".into()));
        }
        Ok(())
    }

    pub fn solve(&self, tol: f64) -> Result<ConicSolution> {
        self.solve_with(Backend::Clarabel, tol)
    }

    pub fn solve_with(&self, backend: Backend, tol: f64) -> Result<ConicSolution> {
        self.validate()?;
        let (status, x) = match backend {
            Backend::Clarabel => self.run_clarabel(tol)?,
            Backend::Simplex => self.run_simplex()?,
        };
        Ok(self.assess(status, x, tol))
    }

    fn assess(&self, status: SolveStatus, x: Vec<f64>, tol: f64) -> ConicSolution {
        if status != SolveStatus::Optimal {
            return ConicSolution {
                status,
                objective: f64::NAN,
                x,
                max_equality_residual: f64::NAN,
                max_inequality_violation: f64::NAN,
                min_psd_slack: f64::NAN,
            };
        }
        let mut sol = ConicSolution {
            status,
            objective: eval(&self.objective, &x),
            max_equality_residual: self.equalities.iter().map(|r| (eval(&r.terms, &x) - r.rhs).abs()).fold(0.0, f64::max),
            max_inequality_violation: self.inequality_violation(&x),
            min_psd_slack: self
                .blocks
                .iter()
                .map(|b| min_eigenvalue(&b.value(&x)).unwrap_or(f64::NEG_INFINITY))
                .fold(f64::INFINITY, f64::min),
            x,
        };
        let scale = 1.0 + self.rhs_scale();
        if sol.max_equality_residual > 10.0 * tol * scale
            || sol.max_inequality_violation > 10.0 * tol * scale
            || sol.min_psd_slack < -10.0 * tol * scale
        {
            sol.status = SolveStatus::NumericalFailure;
        }
        sol
    }

    fn rhs_scale(&self) -> f64 {
        self.equalities.iter().chain(&self.inequalities).map(|r| r.rhs.abs()).fold(0.0, f64::max)
    }

    fn inequality_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for r in &self.inequalities {
            worst = worst.max(eval(&r.terms, x) - r.rhs);
        }
        for (v, b) in self.bounds.iter().enumerate() {
            if let Some(l) = b.lower {
                worst = worst.max(l - x[v]);
            }
            if let Some(u) = b.upper {
                worst = worst.max(x[v] - u);
            }
        }
        worst
    }

    fn run_clarabel(&self, tol: f64) -> Result<(SolveStatus, Vec<f64>)> {
        let n = self.num_vars();
        let (mut ri, mut ci, mut vals, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut cones = Vec::new();
        let mut push_row = |terms: &[(usize, f64)], rhs: f64, ri: &mut Vec<usize>, b: &mut Vec<f64>| {
            let row = b.len();
            for &(v, c) in terms {
                if c != 0.0 {
                    ri.push(row);
                    ci.push(v);
                    vals.push(c);
                }
            }
            b.push(rhs);
        };

        for r in &self.equalities {
            push_row(&r.terms, r.rhs, &mut ri, &mut b);
        }
        if !self.equalities.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(self.equalities.len()));
        }

        let before = b.len();
        for r in &self.inequalities {
            push_row(&r.terms, r.rhs, &mut ri, &mut b);
        }
        for (v, bd) in self.bounds.iter().enumerate() {
            if let Some(l) = bd.lower {
                push_row(&[(v, -1.0)], -l, &mut ri, &mut b);
            }
            if let Some(u) = bd.upper {
                push_row(&[(v, 1.0)], u, &mut ri, &mut b);
            }
        }
        // 1×1 blocks are plain sign constraints
        for blk in self.blocks.iter().filter(|blk| blk.dim == 1) {
            push_row(&[(blk.offset, -1.0)], 0.0, &mut ri, &mut b);
        }
        if b.len() > before {
            cones.push(SupportedConeT::NonnegativeConeT(b.len() - before));
        }

        for blk in self.blocks.iter().filter(|blk| blk.dim == 2) {
            // [[a, c+id], [c−id, b]] ⪰ 0  ⇔  (a+b, a−b, 2c, 2d) in the Lorentz cone
            let (a, bb, p) = (blk.offset, blk.offset + 1, blk.offset + 2);
            push_row(&[(a, -1.0), (bb, -1.0)], 0.0, &mut ri, &mut b);
            push_row(&[(a, -1.0), (bb, 1.0)], 0.0, &mut ri, &mut b);
            push_row(&[(p, -2.0)], 0.0, &mut ri, &mut b);
            push_row(&[(p + 1, -2.0)], 0.0, &mut ri, &mut b);
            cones.push(SupportedConeT::SecondOrderConeT(4));
        }

        let sqrt2 = std::f64::consts::SQRT_2;
        for blk in self.blocks.iter().filter(|blk| blk.dim > 2) {
            // real embedding [[A, −B], [B, A]] of H = A + iB, svec of the upper
            // triangle column by column
            let m = blk.dim;
            let embed = |r: usize, c: usize| -> Terms {
                let (i, j) = (r % m, c % m);
                let (re, im) = blk.entry(i, j);
                match (r < m, c < m) {
                    (true, true) | (false, false) => re,
                    (true, false) => im.into_iter().map(|(v, k)| (v, -k)).collect(),
                    (false, true) => im,
                }
            };
            for c in 0..2 * m {
                for r in 0..=c {
                    let s = if r == c { 1.0 } else { sqrt2 };
                    let t: Terms = embed(r, c).into_iter().map(|(v, k)| (v, -s * k)).collect();
                    push_row(&t, 0.0, &mut ri, &mut b);
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(2 * m));
        }

        let a = CscMatrix::new_from_triplets(b.len(), n, ri, ci, vals);
        let p = CscMatrix::zeros((n, n));
        let mut q = vec![0.0; n];
        for &(v, c) in &self.objective {
            q[v] -= c;
        }
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_feas(tol)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .build()
            .map_err(|e| Error::Parameter(format!("solver settings: {e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings)
            .map_err(|e| Error::Parameter(format!("solver setup: {e}")))?;
        solver.solve();
        let status = match solver.solution.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            _ => SolveStatus::NumericalFailure,
        };
        Ok((status, solver.solution.x.clone()))
    }

    fn run_simplex(&self) -> Result<(SolveStatus, Vec<f64>)> {
        use minilp::{ComparisonOp, OptimizationDirection, Problem};
        if self.blocks.iter().any(|b| b.dim > 1) {
            return Err(Error::Parameter("the simplex backend handles linear programs only".into()));
        }
        let mut obj = vec![0.0; self.num_vars()];
        for &(v, c) in &self.objective {
            obj[v] += c;
        }
        let mut lp = Problem::new(OptimizationDirection::Maximize);
        let vars: Vec<_> = self
            .bounds
            .iter()
            .enumerate()
            .map(|(v, bd)| {
                let mut lo = bd.lower.unwrap_or(f64::NEG_INFINITY);
                if self.blocks.iter().any(|b| b.offset == v) {
                    lo = lo.max(0.0);
                }
                lp.add_var(obj[v], (lo, bd.upper.unwrap_or(f64::INFINITY)))
            })
            .collect();
        let expr = |t: &Terms| t.iter().map(|&(v, c)| (vars[v], c)).collect::<Vec<_>>();
        for r in &self.equalities {
            lp.add_constraint(expr(&r.terms), ComparisonOp::Eq, r.rhs);
        }
        for r in &self.inequalities {
            lp.add_constraint(expr(&r.terms), ComparisonOp::Le, r.rhs);
        }
        match lp.solve() {
            Ok(sol) => Ok((SolveStatus::Optimal, vars.iter().map(|&v| *sol.var_value(v)).collect())),
            Err(minilp::Error::Infeasible) => Ok((SolveStatus::Infeasible, vec![])),
            Err(minilp::Error::Unbounded) => Ok((SolveStatus::Unbounded, vec![])),
        }
    }

    pub fn to_debug_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    /// Recomputed `max |a·x − b|` over the equalities.
    pub max_equality_residual: f64,
    /// Recomputed worst violation of inequalities and bounds.
    pub max_inequality_violation: f64,
    /// Smallest eigenvalue over all PSD blocks (`+∞` without blocks).
    pub min_psd_slack: f64,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn require_optimal(self) -> Result<Self> {
        if self.is_optimal() {
            Ok(self)
        } else {
            Err(Error::Solver(self.status))
        }
    }

    pub fn value(&self, var: usize) -> f64 {
        self.x[var]
    }

    pub fn block(&self, b: &HermitianBlock) -> ComplexMatrix<f64> {
        b.value(&self.x)
    }
}

pub fn eval(terms: &[(usize, f64)], x: &[f64]) -> f64 {
    terms.iter().map(|&(v, c)| c * x[v]).sum()
}

fn consolidate(mut terms: Terms) -> Terms {
    terms.sort_by_key(|t| t.0);
    let mut out: Terms = Vec::with_capacity(terms.len());
    for (v, c) in terms {
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 += c,
            _ => out.push((v, c)),
        }
    }
    out.retain(|t| t.1 != 0.0);
    out
}
