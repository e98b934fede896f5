use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::scalar::{lit, widen, CMatrix, Real};

pub const COMPLEX_MATRIX_FORMAT: &str = "complex-matrix/1";

/// JSON container for a complex matrix: row-major real and imaginary parts.
///
/// ```json
/// {"format": "complex-matrix/1", "rows": 2, "cols": 2,
///  "re": [1.0, 0.0, 0.0, 1.0], "im": [0.0, 0.0, 0.0, 0.0]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrixDoc {
    pub format: String,
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexMatrixDoc {
    pub fn from_matrix<T: Real>(m: &CMatrix<T>) -> Self {
        let mut re = Vec::with_capacity(m.len());
        let mut im = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                re.push(widen(m[(i, j)].re));
                im.push(widen(m[(i, j)].im));
            }
        }
        Self { format: COMPLEX_MATRIX_FORMAT.into(), rows: m.nrows(), cols: m.ncols(), re, im }
    }

    pub fn to_matrix<T: Real>(&self) -> Result<CMatrix<T>> {
        ensure!(
            self.format == COMPLEX_MATRIX_FORMAT,
            Config,
            "unsupported matrix format {:?}",
            self.format
        );
        let n = self.rows * self.cols;
        ensure!(
            self.re.len() == n && self.im.len() == n,
            Dimension,
            "matrix body has {}/{} values for {}x{}",
            self.re.len(),
            self.im.len(),
            self.rows,
            self.cols
        );
        Ok(CMatrix::from_fn(self.rows, self.cols, |i, j| {
            let k = i * self.cols + j;
            Complex::new(lit(self.re[k]), lit(self.im[k]))
        }))
    }
}

pub fn matrix_to_json<T: Real>(m: &CMatrix<T>) -> Result<String> {
    Ok(serde_json::to_string(&ComplexMatrixDoc::from_matrix(m))?)
}

pub fn matrix_from_json<T: Real>(text: &str) -> Result<CMatrix<T>> {
    serde_json::from_str::<ComplexMatrixDoc>(text)?.to_matrix()
}
