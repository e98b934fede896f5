use nalgebra::Complex;

use crate::beamforming::{fit_cascade, normalized_correlation, FitReport, OptimizerConfig};
use crate::em::{ArraySpec, CarrierSpec};
use crate::error::{ensure, Result};
use crate::linalg::SplitMatrix;
use crate::scalar::{cis, count, lit, CMatrix, FieldVector, Real, SPEED_OF_LIGHT};
use crate::sim::{Cascade, HardwareProfile, SimStack, StackGeometry};

/// `F[p, q] = exp(−j2πpq/n)`.
pub fn dft_matrix<T: Real>(n: usize) -> CMatrix<T> {
    CMatrix::from_fn(n, n, |p, q| cis(-T::two_pi() * count::<T>((p * q) % n.max(1)) / count(n)))
}

/// Two-dimensional DFT on a row-major `rows × cols` grid, `F_rows ⊗ F_cols`.
pub fn dft2_matrix<T: Real>(rows: usize, cols: usize) -> CMatrix<T> {
    dft_matrix::<T>(rows).kronecker(&dft_matrix::<T>(cols))
}

/// Maps a field on the input array to its power per spatial-frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumGenerator<T: Real> {
    transfer: CMatrix<T>,
}

impl<T: Real> SpectrumGenerator<T> {
    pub fn new(transfer: CMatrix<T>) -> Self {
        Self { transfer }
    }

    pub fn transfer(&self) -> &CMatrix<T> {
        &self.transfer
    }

    pub fn spectrum(&self, field: &FieldVector<T>) -> Result<Vec<T>> {
        ensure!(
            field.len() == self.transfer.ncols(),
            Dimension,
            "field has {} entries for {} inputs",
            field.len(),
            self.transfer.ncols()
        );
        Ok((&self.transfer * field).iter().map(Complex::norm_sqr).collect())
    }

    pub fn peak_bin(&self, field: &FieldVector<T>) -> Result<usize> {
        Ok(super::eval::argmax(self.spectrum(field)?))
    }
}

#[derive(Debug, Clone)]
pub struct DftFit<T: Real> {
    pub report: FitReport<T>,
    pub generator: SpectrumGenerator<T>,
    pub stack: SimStack<T>,
    /// Normalized correlation between the achieved transfer and the DFT.
    pub correlation: T,
}

/// Fits `sim` (feeds to receiver) to the `rows × cols` 2-D DFT.
pub fn fit_dft_spectrum<T: Real>(
    sim: &SimStack<T>,
    dims: (usize, usize),
    config: &OptimizerConfig,
) -> Result<DftFit<T>> {
    let n = dims.0 * dims.1;
    ensure!(n >= 1, Validation, "DFT dimensions must be positive");
    let cascade = Cascade::to_receiver(sim)?;
    ensure!(
        cascade.num_inputs() == n && cascade.num_outputs() == n,
        Dimension,
        "a {}×{} DFT needs {n} inputs and outputs, the stack has {} and {}",
        dims.0,
        dims.1,
        cascade.num_inputs(),
        cascade.num_outputs()
    );
    let target = dft2_matrix::<T>(dims.0, dims.1);
    let x: SplitMatrix<T> = cascade.identity_input();
    let report = fit_cascade(&cascade, &x, &target, &sim.phases(), config)?;
    let stack = sim.with_phases(&report.final_phases)?;
    let transfer = stack.receiver_transfer()?;
    let correlation = normalized_correlation(&transfer, &target);
    Ok(DftFit { report, generator: SpectrumGenerator::new(transfer), stack, correlation })
}

/// Four 10×10 layers at λ/2 pitch spaced λ, with 4×4 feed and receiving
/// arrays at λ/2 pitch one wavelength from the outer layers, at 10 GHz.
pub fn default_dft_geometry() -> StackGeometry {
    let lambda = SPEED_OF_LIGHT / 10e9;
    let arr = ArraySpec { rows: 4, cols: 4, pitch_wavelengths: 0.5, gap_m: lambda };
    StackGeometry {
        layers: 4,
        rows: 10,
        cols: 10,
        pitch_wavelengths: 0.5,
        spacing_m: lambda,
        feeds: Some(arr),
        receiver: Some(arr),
    }
}

pub fn default_dft_stack<T: Real>() -> Result<SimStack<T>> {
    SimStack::from_geometry(&default_dft_geometry(), CarrierSpec::new(lit(10e9))?, HardwareProfile::default())
}
