//! JSON wire representations shared by the serialized artifacts.
//!
//! Complex matrices are written row-major as nested arrays of `[re, im]` pairs.

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qops::ComplexMatrix;
use crate::scalar::Real;

pub type MatrixDoc = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_doc<T: Real>(m: &ComplexMatrix<T>) -> MatrixDoc {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re.as_f64(), m[(i, j)].im.as_f64()]).collect())
        .collect()
}

pub fn matrix_from_doc<T: Real>(doc: &MatrixDoc) -> Result<ComplexMatrix<T>> {
    let rows = doc.len();
    let cols = doc.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || doc.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension("ragged or empty matrix document".into()));
    }
    Ok(ComplexMatrix::from_fn(rows, cols, |i, j| {
        Complex::new(T::lit(doc[i][j][0]), T::lit(doc[i][j][1]))
    }))
}

/// Bipartite operator with its local dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorDoc {
    pub dim_a: usize,
    pub dim_b: usize,
    pub matrix: MatrixDoc,
}
