//! Dense complex linear algebra and the bipartite operator primitives
//! (Kronecker product, partial trace, partial transpose, Hermitian spectra).

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type ComplexMatrix<T> = DMatrix<Complex<T>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subsystem {
    A,
    B,
}

#[inline]
pub fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub fn cr<T: Real>(re: f64) -> Complex<T> {
    Complex::new(T::lit(re), T::zero())
}

pub fn identity<T: Real>(n: usize) -> ComplexMatrix<T> {
    ComplexMatrix::identity(n, n)
}

pub fn zeros<T: Real>(n: usize) -> ComplexMatrix<T> {
    ComplexMatrix::zeros(n, n)
}

pub fn pauli_x<T: Real>() -> ComplexMatrix<T> {
    ComplexMatrix::from_row_slice(2, 2, &[cr(0.0), cr(1.0), cr(1.0), cr(0.0)])
}

pub fn pauli_y<T: Real>() -> ComplexMatrix<T> {
    let i = c(T::zero(), T::one());
    ComplexMatrix::from_row_slice(2, 2, &[cr(0.0), -i, i, cr(0.0)])
}

pub fn pauli_z<T: Real>() -> ComplexMatrix<T> {
    ComplexMatrix::from_row_slice(2, 2, &[cr(1.0), cr(0.0), cr(0.0), cr(-1.0)])
}

/// `(σx, σy, σz)`.
pub fn paulis<T: Real>() -> [ComplexMatrix<T>; 3] {
    [pauli_x(), pauli_y(), pauli_z()]
}

/// `|ψ⟩⟨ψ|` for a (not necessarily normalized) state vector.
pub fn projector<T: Real>(psi: &DVector<Complex<T>>) -> ComplexMatrix<T> {
    psi * psi.adjoint()
}

/// Computational basis vector `|i⟩` of dimension `n`.
pub fn basis<T: Real>(n: usize, i: usize) -> DVector<Complex<T>> {
    let mut v = DVector::zeros(n);
    v[i] = cr(1.0);
    v
}

pub fn tensor<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> ComplexMatrix<T> {
    a.kronecker(b)
}

pub fn tensor_vec<T: Real>(a: &DVector<Complex<T>>, b: &DVector<Complex<T>>) -> DVector<Complex<T>> {
    a.kronecker(b)
}

pub fn trace<T: Real>(m: &ComplexMatrix<T>) -> Complex<T> {
    m.trace()
}

/// `Tr[a b]` without forming the product.
pub fn trace_product<T: Real>(a: &ComplexMatrix<T>, b: &ComplexMatrix<T>) -> Complex<T> {
    let n = a.nrows();
    let mut acc = Complex::new(T::zero(), T::zero());
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Largest entrywise modulus.
pub fn max_abs<T: Real>(m: &ComplexMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc.max(nalgebra::ComplexField::modulus(*z)))
}

/// `max |m - m†|`.
pub fn hermiticity_error<T: Real>(m: &ComplexMatrix<T>) -> T {
    if !m.is_square() {
        return T::max_value().unwrap_or_else(T::one);
    }
    max_abs(&(m - m.adjoint()))
}

pub fn is_finite<T: Real>(m: &ComplexMatrix<T>) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn check_bipartite<T: Real>(m: &ComplexMatrix<T>, dim_a: usize, dim_b: usize) -> Result<()> {
    if dim_a == 0 || dim_b == 0 {
        return Err(Error::Dimension("local dimensions must be positive".into()));
    }
    if !m.is_square() || m.nrows() != dim_a * dim_b {
        return Err(Error::Dimension(format!(
            "expected {0}x{0} operator for {dim_a}x{dim_b} system, got {1}x{2}",
            dim_a * dim_b,
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Trace out one tensor factor of an operator on `C^dim_a ⊗ C^dim_b`.
pub fn partial_trace<T: Real>(
    m: &ComplexMatrix<T>,
    dim_a: usize,
    dim_b: usize,
    over: Subsystem,
) -> Result<ComplexMatrix<T>> {
    check_bipartite(m, dim_a, dim_b)?;
    let out = match over {
        Subsystem::A => ComplexMatrix::from_fn(dim_b, dim_b, |j, l| {
            (0..dim_a).fold(Complex::new(T::zero(), T::zero()), |acc, i| {
                acc + m[(i * dim_b + j, i * dim_b + l)]
            })
        }),
        Subsystem::B => ComplexMatrix::from_fn(dim_a, dim_a, |i, k| {
            (0..dim_b).fold(Complex::new(T::zero(), T::zero()), |acc, j| {
                acc + m[(i * dim_b + j, k * dim_b + j)]
            })
        }),
    };
    Ok(out)
}

/// Transpose one tensor factor. Pure entry permutation, hence an exact involution.
pub fn partial_transpose<T: Real>(
    m: &ComplexMatrix<T>,
    dim_a: usize,
    dim_b: usize,
    on: Subsystem,
) -> Result<ComplexMatrix<T>> {
    check_bipartite(m, dim_a, dim_b)?;
    let n = dim_a * dim_b;
    Ok(ComplexMatrix::from_fn(n, n, |r, col| {
        let (i, j) = (r / dim_b, r % dim_b);
        let (k, l) = (col / dim_b, col % dim_b);
        match on {
            Subsystem::A => m[(k * dim_b + j, i * dim_b + l)],
            Subsystem::B => m[(i * dim_b + l, k * dim_b + j)],
        }
    }))
}

/// Real spectrum of a Hermitian matrix, in descending order.
pub fn hermitian_eigenvalues<T: Real>(m: &ComplexMatrix<T>) -> Result<Vec<T>> {
    if !m.is_square() {
        return Err(Error::Dimension("eigenvalues of a non-square matrix".into()));
    }
    let scale = T::one().max(max_abs(m));
    let dev = hermiticity_error(m);
    if dev > T::herm_tol() * scale {
        return Err(Error::NotHermitian(dev.as_f64()));
    }
    let herm = (m + m.adjoint()).scale(T::lit(0.5));
    let eig = SymmetricEigen::new(herm);
    let mut vals: Vec<T> = eig.eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    Ok(vals)
}

/// Eigen-decomposition of a Hermitian matrix: `(values, vectors)` with vectors
/// as columns, values descending.
pub fn hermitian_eigen<T: Real>(m: &ComplexMatrix<T>) -> Result<(Vec<T>, ComplexMatrix<T>)> {
    hermitian_eigenvalues(m)?;
    let herm = (m + m.adjoint()).scale(T::lit(0.5));
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).expect("finite"));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = ComplexMatrix::from_fn(m.nrows(), m.nrows(), |r, k| eig.eigenvectors[(r, order[k])]);
    Ok((vals, vecs))
}

pub fn min_eigenvalue<T: Real>(m: &ComplexMatrix<T>) -> Result<T> {
    Ok(*hermitian_eigenvalues(m)?.last().expect("non-empty matrix"))
}

/// Positive semidefinite square root inverse `m^{-1/2}` of a positive definite matrix.
pub fn inverse_sqrt<T: Real>(m: &ComplexMatrix<T>) -> Result<ComplexMatrix<T>> {
    let (vals, vecs) = hermitian_eigen(m)?;
    if let Some(&v) = vals.last() {
        if v <= T::zero() {
            return Err(Error::NotPositive(v.as_f64()));
        }
    }
    let diag = ComplexMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&v| Complex::new(T::one() / v.sqrt(), T::zero())),
    ));
    Ok(&vecs * diag * vecs.adjoint())
}

/// Positive unit-trace operator on `C^dim_a ⊗ C^dim_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator<T: Real> {
    matrix: ComplexMatrix<T>,
    dim_a: usize,
    dim_b: usize,
}

impl<T: Real> DensityOperator<T> {
    pub fn new(matrix: ComplexMatrix<T>, dim_a: usize, dim_b: usize) -> Result<Self> {
        check_bipartite(&matrix, dim_a, dim_b)?;
        if !is_finite(&matrix) {
            return Err(Error::NonFinite);
        }
        let dev = hermiticity_error(&matrix);
        if dev > T::herm_tol() {
            return Err(Error::NotHermitian(dev.as_f64()));
        }
        let tr = matrix.trace();
        if (tr.re - T::one()).abs() > T::herm_tol() || tr.im.abs() > T::herm_tol() {
            return Err(Error::Trace(tr.re.as_f64()));
        }
        let lo = min_eigenvalue(&matrix)?;
        if lo < -T::psd_tol() {
            return Err(Error::NotPositive(lo.as_f64()));
        }
        Ok(Self { matrix, dim_a, dim_b })
    }

    /// State of a single system, stored with a trivial second factor.
    pub fn local(matrix: ComplexMatrix<T>) -> Result<Self> {
        let d = matrix.nrows();
        Self::new(matrix, d, 1)
    }

    pub fn maximally_mixed(dim_a: usize, dim_b: usize) -> Self {
        let n = dim_a * dim_b;
        let matrix = identity::<T>(n).scale(T::one() / T::from_usize(n).expect("dimension"));
        Self { matrix, dim_a, dim_b }
    }

    /// Pure state `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn pure(psi: &DVector<Complex<T>>, dim_a: usize, dim_b: usize) -> Result<Self> {
        let norm2 = psi.norm_squared();
        if norm2 <= T::zero() {
            return Err(Error::Parameter("zero state vector".into()));
        }
        Self::new(projector(psi).unscale(norm2), dim_a, dim_b)
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> ComplexMatrix<T> {
        self.matrix
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn dim(&self) -> usize {
        self.dim_a * self.dim_b
    }

    /// Reduced state of the named subsystem (the other one is traced out).
    pub fn reduced(&self, keep: Subsystem) -> ComplexMatrix<T> {
        let over = match keep {
            Subsystem::A => Subsystem::B,
            Subsystem::B => Subsystem::A,
        };
        partial_trace(&self.matrix, self.dim_a, self.dim_b, over).expect("dimensions checked")
    }

    pub fn min_eigenvalue(&self) -> T {
        min_eigenvalue(&self.matrix).expect("hermitian by construction")
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        hermitian_eigenvalues(&self.matrix).expect("hermitian by construction")
    }

    /// Smallest eigenvalue of the partial transpose on A.
    pub fn ppt_min_eigenvalue(&self) -> T {
        let pt = partial_transpose(&self.matrix, self.dim_a, self.dim_b, Subsystem::A)
            .expect("dimensions checked");
        min_eigenvalue(&pt).expect("partial transpose of a Hermitian matrix is Hermitian")
    }

    /// Number of eigenvalues above `tol`.
    pub fn rank(&self, tol: T) -> usize {
        self.eigenvalues().into_iter().filter(|&v| v > tol).count()
    }

    /// Convex mixture `Σ w_i ρ_i` of states on the same space.
    pub fn mixture(parts: &[(T, &Self)]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Parameter("empty mixture".into()))?
            .1;
        let mut acc = zeros::<T>(first.dim());
        for (w, rho) in parts {
            if rho.dim_a != first.dim_a || rho.dim_b != first.dim_b {
                return Err(Error::Dimension("mixture of states on different spaces".into()));
            }
            if *w < T::zero() {
                return Err(Error::Parameter("negative mixture weight".into()));
            }
            acc += rho.matrix.scale(*w);
        }
        Self::new(acc, first.dim_a, first.dim_b)
    }
}

/// Hermitian operator on `C^dim_a ⊗ C^dim_b`, not necessarily positive.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator<T: Real> {
    matrix: ComplexMatrix<T>,
    dim_a: usize,
    dim_b: usize,
}

impl<T: Real> HermitianOperator<T> {
    pub fn new(matrix: ComplexMatrix<T>, dim_a: usize, dim_b: usize) -> Result<Self> {
        check_bipartite(&matrix, dim_a, dim_b)?;
        if !is_finite(&matrix) {
            return Err(Error::NonFinite);
        }
        let dev = hermiticity_error(&matrix);
        if dev > T::herm_tol() {
            return Err(Error::NotHermitian(dev.as_f64()));
        }
        Ok(Self { matrix, dim_a, dim_b })
    }

    pub fn matrix(&self) -> &ComplexMatrix<T> {
        &self.matrix
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn reduced(&self, keep: Subsystem) -> ComplexMatrix<T> {
        let over = match keep {
            Subsystem::A => Subsystem::B,
            Subsystem::B => Subsystem::A,
        };
        partial_trace(&self.matrix, self.dim_a, self.dim_b, over).expect("dimensions checked")
    }
}

impl<T: Real> From<DensityOperator<T>> for HermitianOperator<T> {
    fn from(rho: DensityOperator<T>) -> Self {
        Self { matrix: rho.matrix, dim_a: rho.dim_a, dim_b: rho.dim_b }
    }
}
