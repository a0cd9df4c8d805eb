//! Explicit RBF kernel feature map.
//!
//! The training kernel matrix `K = U S U^T` is factored once; training
//! samples get the features `S^{1/2} U^T` (one column per sample) and any
//! other point `x` gets `S^{-1/2} U^T k(x)`, where `k(x)_i = kappa(x_i, x)`.
//! Linear discriminant analysis on these features is the kernel version of
//! the method, and K-Means on them is kernel K-Means.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::dataset::SampleMatrix;
use crate::error::{Error, Result};
use crate::numkit::{sym_eig, SymMatrix};

/// Eigenvalues below `DEFAULT_CUTOFF * lambda_max` are dropped.
pub const DEFAULT_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaRule {
    Manual(f64),
    /// Mean pairwise distance between the positive training samples.
    MeanPositivePairwise,
}

impl FromStr for SigmaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(SigmaRule::MeanPositivePairwise);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v > 0.0 => Ok(SigmaRule::Manual(v)),
            _ => Err(Error::config("sigma", format!("expected `auto` or a positive number, got {s:?}"))),
        }
    }
}

impl fmt::Display for SigmaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaRule::Manual(v) => write!(f, "{v}"),
            SigmaRule::MeanPositivePairwise => f.write_str("auto"),
        }
    }
}

/// RBF kernel with bandwidth rule. The only kernel family supported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub sigma: SigmaRule,
    pub cutoff: f64,
}

impl KernelConfig {
    pub fn rbf(sigma: SigmaRule) -> Self {
        KernelConfig {
            sigma,
            cutoff: DEFAULT_CUTOFF,
        }
    }

    /// Bandwidth for a training set with the given positive samples.
    pub fn resolve_sigma(&self, positives: &SampleMatrix) -> Result<f64> {
        match self.sigma {
            SigmaRule::Manual(s) if s > 0.0 && s.is_finite() => Ok(s),
            SigmaRule::Manual(s) => Err(Error::config("sigma", format!("must be positive, got {s}"))),
            SigmaRule::MeanPositivePairwise => sigma_heuristic(positives),
        }
    }
}

fn sq_distance(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    a.zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(-||x - y||^2 / (2 sigma^2))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("kernel input contains non-finite values"));
    }
    let d2 = sq_distance(x.iter().copied(), y.iter().copied());
    Ok((-d2 / (2.0 * sigma * sigma)).exp())
}

/// Cross-kernel matrix, rows of `a` against rows of `b`.
pub fn rbf_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, sigma: f64) -> DMatrix<f64> {
    let denom = 2.0 * sigma * sigma;
    DMatrix::from_fn(a.nrows(), b.nrows(), |i, j| {
        (-sq_distance(a.row(i).iter().copied(), b.row(j).iter().copied()) / denom).exp()
    })
}

/// Mean Euclidean distance over all unordered pairs of positive samples.
pub fn sigma_heuristic(positives: &SampleMatrix) -> Result<f64> {
    let x = positives.as_matrix();
    let n = x.nrows();
    if n < 2 {
        return Err(Error::invalid("bandwidth heuristic needs at least 2 positive samples"));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += sq_distance(x.row(i).iter().copied(), x.row(j).iter().copied()).sqrt();
        }
    }
    let sigma = total / (n * (n - 1) / 2) as f64;
    if sigma > 0.0 {
        Ok(sigma)
    } else {
        Err(Error::invalid("all positive samples coincide; bandwidth would be zero"))
    }
}

/// Factored training kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMap {
    train_points: SampleMatrix,
    sigma: f64,
    /// `N x L`, retained eigenvectors.
    eigvecs: DMatrix<f64>,
    /// Square roots of the retained eigenvalues, descending.
    scale: DVector<f64>,
    cutoff: f64,
}

impl KernelMap {
    pub fn from_parts(
        train_points: SampleMatrix,
        sigma: f64,
        eigvecs: DMatrix<f64>,
        scale: DVector<f64>,
        cutoff: f64,
    ) -> Result<Self> {
        if eigvecs.nrows() != train_points.rows() || eigvecs.ncols() != scale.len() {
            return Err(Error::Model("kernel map shapes do not agree".into()));
        }
        if scale.is_empty() || scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Model("kernel map scale entries must be positive".into()));
        }
        if !(sigma > 0.0) {
            return Err(Error::Model("kernel bandwidth must be positive".into()));
        }
        Ok(KernelMap {
            train_points,
            sigma,
            eigvecs,
            scale,
            cutoff,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Effective feature dimension `L`.
    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn input_dim(&self) -> usize {
        self.train_points.cols()
    }

    pub fn train_points(&self) -> &SampleMatrix {
        &self.train_points
    }

    pub fn eigvecs(&self) -> &DMatrix<f64> {
        &self.eigvecs
    }

    pub fn scale(&self) -> &DVector<f64> {
        &self.scale
    }

    /// Training features, one sample per row (`U S^{1/2}`).
    pub fn training_features(&self) -> SampleMatrix {
        let mut f = self.eigvecs.clone();
        for (mut c, s) in f.column_iter_mut().zip(self.scale.iter()) {
            c *= *s;
        }
        SampleMatrix::new(f).expect("finite features")
    }

    /// Features of arbitrary points, one per row (`k(x)^T U S^{-1/2}`).
    pub fn map_points(&self, x: &SampleMatrix) -> Result<SampleMatrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.cols(),
            });
        }
        let k = rbf_matrix(x.as_matrix(), self.train_points.as_matrix(), self.sigma);
        Ok(self.map_kernel_rows(&k))
    }

    /// Same as [`map_points`](Self::map_points) for precomputed kernel rows.
    pub fn map_kernel_rows(&self, k: &DMatrix<f64>) -> SampleMatrix {
        let mut f = k * &self.eigvecs;
        for (mut c, s) in f.column_iter_mut().zip(self.scale.iter()) {
            c /= *s;
        }
        SampleMatrix::new(f).expect("finite features")
    }
}

/// Builds the kernel matrix on `x`, eigendecomposes it and keeps the
/// eigenvalues above `cutoff * lambda_max`.
pub fn fit_kernel_map(x: &SampleMatrix, sigma: f64, cutoff: f64) -> Result<KernelMap> {
    if x.rows() < 2 {
        return Err(Error::invalid("kernel map needs at least 2 samples"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    let k = rbf_matrix(x.as_matrix(), x.as_matrix(), sigma);
    let eig = sym_eig(&SymMatrix::symmetrize(k))?;
    let lmax = eig.values[0];
    let keep = eig.values.iter().take_while(|&&v| v > cutoff * lmax && v > 0.0).count();
    let eigvecs = eig.vectors.columns(0, keep).into_owned();
    let scale = DVector::from_iterator(keep, eig.values.iter().take(keep).map(|v| v.sqrt()));
    KernelMap::from_parts(x.clone(), sigma, eigvecs, scale, cutoff)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::relative_frobenius;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(seed: u64, n: usize, d: usize) -> SampleMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SampleMatrix::new(DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0))).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.7).unwrap(), 1.0);
        let sigma = 1.5;
        let v = rbf_kernel(&[0.0], &[sigma * 2f64.sqrt()], sigma).unwrap();
        assert!((v - (-1f64).exp()).abs() < 1e-15);
        assert!(rbf_kernel(&[0.0], &[1.0], 0.0).is_err());
        assert!(rbf_kernel(&[f64::NAN], &[1.0], 1.0).is_err());
    }

    #[test]
    fn kernel_grows_with_bandwidth() {
        let mut last = 0.0;
        for i in 1..200 {
            let v = rbf_kernel(&[0.0, 1.0], &[2.0, -1.0], 0.1 * i as f64).unwrap();
            assert!(v > last && v <= 1.0);
            last = v;
        }
        assert!(last > 0.98);
    }

    #[test]
    fn sigma_examples() {
        let two = SampleMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(sigma_heuristic(&two).unwrap(), 2.0);
        let three = SampleMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!((sigma_heuristic(&three).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        let same = SampleMatrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert!(sigma_heuristic(&same).is_err());
    }

    #[test]
    fn sigma_matches_loop() {
        let x = random_points(2, 17, 3);
        let rows: Vec<Vec<f64>> = (0..17).map(|i| x.row(i).iter().copied().collect()).collect();
        let mut sum = 0.0;
        let mut count = 0;
        for i in 0..17 {
            for j in 0..17 {
                if i < j {
                    let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b).powi(2)).sum();
                    sum += d.sqrt();
                    count += 1;
                }
            }
        }
        assert!((sigma_heuristic(&x).unwrap() - sum / count as f64).abs() < 1e-12);
    }

    #[test]
    fn identity_kernel_matrix() {
        let x = SampleMatrix::from_rows(&[vec![0.0], vec![100.0], vec![200.0]]).unwrap();
        let km = fit_kernel_map(&x, 0.1, DEFAULT_CUTOFF).unwrap();
        assert_eq!(km.dim(), 3);
        let f = km.training_features();
        for c in f.as_matrix().column_iter() {
            let nonzero: Vec<f64> = c.iter().copied().filter(|v| v.abs() > 1e-12).collect();
            assert_eq!(nonzero.len(), 1);
            assert!((nonzero[0].abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn features_reproduce_kernel_matrix() {
        let x = random_points(3, 60, 4);
        let km = fit_kernel_map(&x, 1.3, DEFAULT_CUTOFF).unwrap();
        let f = km.training_features();
        let k = rbf_matrix(x.as_matrix(), x.as_matrix(), 1.3);
        let gram = f.as_matrix() * f.as_matrix().transpose();
        assert!(relative_frobenius(&gram, &k) <= 1e-8);
    }

    #[test]
    fn duplicate_row_is_truncated() {
        let mut rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 0.9, (i * i) as f64 * 0.1]).collect();
        rows.push(rows[3].clone());
        let x = SampleMatrix::from_rows(&rows).unwrap();
        let km = fit_kernel_map(&x, 2.0, DEFAULT_CUTOFF).unwrap();
        assert!(km.dim() < 9);
    }

    #[test]
    fn mapping_training_point_reproduces_feature() {
        let x = random_points(4, 40, 2);
        let km = fit_kernel_map(&x, 0.8, DEFAULT_CUTOFF).unwrap();
        let f = km.training_features();
        let mapped = km.map_points(&x).unwrap();
        assert!((mapped.as_matrix() - f.as_matrix()).amax() <= 1e-8);
    }

    #[test]
    fn far_point_maps_to_zero_and_mapping_contracts() {
        let x = random_points(5, 30, 2);
        let km = fit_kernel_map(&x, 0.5, DEFAULT_CUTOFF).unwrap();
        let zero = km.map_kernel_rows(&DMatrix::zeros(1, 30));
        assert_eq!(zero.as_matrix().amax(), 0.0);
        let far = SampleMatrix::from_rows(&[vec![1e3, 1e3]]).unwrap();
        assert_eq!(km.map_points(&far).unwrap().as_matrix().amax(), 0.0);
        let probe = random_points(6, 25, 2);
        let mapped = km.map_points(&probe).unwrap();
        for r in mapped.as_matrix().row_iter() {
            assert!(r.norm_squared() <= 1.0 + 1e-8);
        }
    }

    #[test]
    fn kernel_matrix_is_psd() {
        for (seed, sigma) in [(7, 0.05), (8, 1.0), (9, 30.0)] {
            let x = random_points(seed, 50, 3);
            let k = rbf_matrix(x.as_matrix(), x.as_matrix(), sigma);
            let eig = sym_eig(&SymMatrix::symmetrize(k)).unwrap();
            assert!(eig.values.min() >= -1e-10 * eig.values.max());
        }
    }

    #[test]
    fn feature_distances_are_kernel_distances() {
        let x = random_points(10, 35, 3);
        let km = fit_kernel_map(&x, 1.1, DEFAULT_CUTOFF).unwrap();
        let f = km.training_features();
        for (i, j) in [(0, 1), (4, 9), (20, 34)] {
            let d = (f.as_matrix().row(i) - f.as_matrix().row(j)).norm_squared();
            let kij = rbf_kernel(
                x.as_matrix().row(i).transpose().as_slice(),
                x.as_matrix().row(j).transpose().as_slice(),
                1.1,
            )
            .unwrap();
            assert!((d - (2.0 - 2.0 * kij)).abs() <= 1e-8);
        }
    }
}
