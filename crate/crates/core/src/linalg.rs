//! Dense complex linear algebra helpers.

use nalgebra::{Complex, DMatrix};

use crate::error::{Result, SimError};
use crate::scalar::{count, lit, CMatrix, Real};

/// Complex matrix stored as separate real and imaginary planes.
///
/// Products are carried out as four real GEMMs, which lets nalgebra hand
/// `f32`/`f64` work to its blocked kernels.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitMatrix<T: Real> {
    pub re: DMatrix<T>,
    pub im: DMatrix<T>,
}

impl<T: Real> SplitMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { re: DMatrix::zeros(rows, cols), im: DMatrix::zeros(rows, cols) }
    }

    pub fn from_complex(m: &CMatrix<T>) -> Self {
        Self { re: m.map(|z| z.re), im: m.map(|z| z.im) }
    }

    pub fn to_complex(&self) -> CMatrix<T> {
        self.re.zip_map(&self.im, Complex::new)
    }

    pub fn nrows(&self) -> usize {
        self.re.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.re.ncols()
    }

    pub fn adjoint(&self) -> Self {
        Self { re: self.re.transpose(), im: -self.im.transpose() }
    }

    /// `self · rhs`.
    pub fn mul(&self, rhs: &Self) -> Self {
        let mut re = &self.re * &rhs.re;
        re.gemm(-T::one(), &self.im, &rhs.im, T::one());
        let mut im = &self.re * &rhs.im;
        im.gemm(T::one(), &self.im, &rhs.re, T::one());
        Self { re, im }
    }

    /// Multiplies row `n` by `diag[n]` in place.
    pub fn scale_rows(&mut self, diag: &[Complex<T>]) {
        assert_eq!(diag.len(), self.nrows());
        for j in 0..self.ncols() {
            for (i, d) in diag.iter().enumerate() {
                let (a, b) = (self.re[(i, j)], self.im[(i, j)]);
                self.re[(i, j)] = a * d.re - b * d.im;
                self.im[(i, j)] = a * d.im + b * d.re;
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        Complex::new(self.re[(i, j)], self.im[(i, j)])
    }
}

/// Numerical rank from singular values relative to the largest one.
pub fn numerical_rank<T: Real>(m: &CMatrix<T>, rel_tol: T) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.iter().cloned().fold(T::zero(), T::max);
    if smax == T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > smax * rel_tol).count()
}

/// Default relative rank tolerance, `max(rows, cols) · ε`.
pub fn default_rank_tol<T: Real>(m: &CMatrix<T>) -> T {
    count::<T>(m.nrows().max(m.ncols())) * T::default_epsilon() * lit(16.0)
}

/// Least-squares solution of `a · x = b` for full-column-rank `a`.
pub fn least_squares<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Result<CMatrix<T>> {
    if a.nrows() != b.nrows() {
        return Err(SimError::Dimension(format!(
            "system has {} rows but right-hand side has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let rank = numerical_rank(a, default_rank_tol(a));
    if rank < a.ncols() {
        return Err(SimError::Underdetermined(format!(
            "sensing matrix has rank {rank} but {} unknowns",
            a.ncols()
        )));
    }
    let svd = a.clone().svd(true, true);
    svd.solve(b, T::zero())
        .map_err(|e| SimError::RankDeficient(e.to_string()))
}
