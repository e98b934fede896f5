use nalgebra::DMatrix;

use crate::error::{ensure, Result};
use crate::scalar::{lit, Real};
use crate::sim::MetasurfaceLayer;

/// Phase-encodes `data` onto a copy of `layer`: value `p` becomes phase
/// `2πp` at unit amplitude. Pixel `(r, c)` drives atom `r·cols + c`.
pub fn encode_input<T: Real>(data: &DMatrix<f64>, layer: &MetasurfaceLayer<T>) -> Result<MetasurfaceLayer<T>> {
    let g = layer.grid();
    ensure!(
        data.nrows() == g.rows() && data.ncols() == g.cols(),
        Dimension,
        "{}×{} data for a {}×{} layer",
        data.nrows(),
        data.ncols(),
        g.rows(),
        g.cols()
    );
    ensure!(
        data.iter().all(|p| (0.0..=1.0).contains(p)),
        Validation,
        "input values must lie in [0, 1]"
    );
    let phases: Vec<T> = (0..g.rows())
        .flat_map(|r| (0..g.cols()).map(move |c| (r, c)))
        .map(|(r, c)| T::two_pi() * lit::<T>(data[(r, c)]))
        .collect();
    layer.with_phases(&phases)?.with_amplitudes(&vec![T::one(); phases.len()])
}
