//! Fixed workloads shared by the criterion benchmarks under `benches/`.

use pcsda_core::synthetic::{gaussian_matrix, GenerativeModel};
use pcsda_core::{LabeledDataset, SampleMatrix};

/// Negative subclasses in the fitting workloads.
pub const SUBCLASSES: usize = 5;

/// 200 positives and 5 x 160 negatives drawn from an isotropic model in `dim` dimensions.
pub fn fit_workload(dim: usize, seed: u64) -> LabeledDataset {
    GenerativeModel::isotropic(dim, 1.0, 4.0, 0.5)
        .sample(200, SUBCLASSES, 160, seed)
        .expect("isotropic model is positive definite")
        .dataset
}

/// Standard normal points.
pub fn points(rows: usize, cols: usize, seed: u64) -> SampleMatrix {
    SampleMatrix::new(gaussian_matrix(rows, cols, seed)).expect("gaussian draws are finite")
}
