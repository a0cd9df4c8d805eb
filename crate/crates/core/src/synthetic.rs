//! Seeded synthetic datasets with known structure.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dataset::{Label, LabeledDataset, SampleMatrix};
use crate::error::{Error, Result};
use crate::numkit::SymMatrix;

/// Parameters of the class-specific generative model: positives are drawn
/// around `mean` with covariance `phi_p`, subclass centres around `mean` with
/// `phi_n`, and each negative around its subclass centre with `phi_w`.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    pub mean: DVector<f64>,
    pub phi_p: SymMatrix,
    pub phi_n: SymMatrix,
    pub phi_w: SymMatrix,
}

#[derive(Debug, Clone)]
pub struct GenerativeSample {
    pub dataset: LabeledDataset,
    /// Subclass of each negative, in the order negatives appear.
    pub assignment: Vec<usize>,
    pub centres: DMatrix<f64>,
}

struct Gaussian {
    mean: DVector<f64>,
    factor: DMatrix<f64>,
}

impl Gaussian {
    fn new(mean: DVector<f64>, cov: &SymMatrix) -> Result<Self> {
        let chol = cov
            .as_matrix()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::invalid("sampling covariance must be positive definite"))?;
        Ok(Gaussian {
            mean,
            factor: chol.l(),
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let e = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.factor * e
    }
}

impl GenerativeModel {
    pub fn isotropic(dim: usize, p: f64, n: f64, w: f64) -> Self {
        let diag = |v: f64| SymMatrix::from_diagonal(&vec![v; dim]);
        GenerativeModel {
            mean: DVector::zeros(dim),
            phi_p: diag(p),
            phi_n: diag(n),
            phi_w: diag(w),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draws `n_p` positives and `k` subclasses of `per_subclass` negatives.
    /// Positives come first.
    pub fn sample(&self, n_p: usize, k: usize, per_subclass: usize, seed: u64) -> Result<GenerativeSample> {
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = Gaussian::new(self.mean.clone(), &self.phi_p)?;
        let centre_dist = Gaussian::new(self.mean.clone(), &self.phi_n)?;
        let n = n_p + k * per_subclass;
        let mut x = DMatrix::zeros(n, d);
        for i in 0..n_p {
            x.set_row(i, &pos.draw(&mut rng).transpose());
        }
        let mut centres = DMatrix::zeros(k, d);
        let mut assignment = Vec::with_capacity(k * per_subclass);
        let mut row = n_p;
        for c in 0..k {
            let centre = centre_dist.draw(&mut rng);
            centres.set_row(c, &centre.transpose());
            let within = Gaussian::new(centre, &self.phi_w)?;
            for _ in 0..per_subclass {
                x.set_row(row, &within.draw(&mut rng).transpose());
                assignment.push(c);
                row += 1;
            }
        }
        let labels = (0..n).map(|i| Label::from_bool(i < n_p)).collect();
        Ok(GenerativeSample {
            dataset: LabeledDataset::new(SampleMatrix::new(x)?, labels)?,
            assignment,
            centres,
        })
    }
}

fn isotropic_cloud(
    rng: &mut ChaCha8Rng,
    centre: &[f64],
    spread: f64,
    count: usize,
    out: &mut Vec<Vec<f64>>,
) {
    for _ in 0..count {
        out.push(
            centre
                .iter()
                .map(|c| c + spread * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
    }
}

fn labeled(rows: Vec<Vec<f64>>, n_p: usize) -> Result<LabeledDataset> {
    let n = rows.len();
    let labels = (0..n).map(|i| Label::from_bool(i < n_p)).collect();
    LabeledDataset::new(SampleMatrix::from_rows(&rows)?, labels)
}

/// Positive ring of radius `r_in` inside a negative ring of radius `r_out`,
/// both in the plane with Gaussian radial noise.
pub fn concentric_rings(
    n_p: usize,
    n_n: usize,
    r_in: f64,
    r_out: f64,
    noise: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_p + n_n);
    for (count, r) in [(n_p, r_in), (n_n, r_out)] {
        for _ in 0..count {
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            let rr = r + noise * rng.sample::<f64, _>(StandardNormal);
            rows.push(vec![rr * t.cos(), rr * t.sin()]);
        }
    }
    labeled(rows, n_p)
}

/// A unit-variance positive blob at the origin surrounded by `k` negative
/// blobs at `radius`, evenly spaced in angle so the negative mean coincides
/// with the positive mean.
pub fn surrounded_positive(
    n_p: usize,
    k: usize,
    per_subclass: usize,
    radius: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n_p + k * per_subclass);
    isotropic_cloud(&mut rng, &[0.0, 0.0], 1.0, n_p, &mut rows);
    for c in 0..k {
        let t = std::f64::consts::TAU * c as f64 / k as f64;
        isotropic_cloud(&mut rng, &[radius * t.cos(), radius * t.sin()], 1.0, per_subclass, &mut rows);
    }
    labeled(rows, n_p)
}

/// Multiclass data: `classes` unit-variance blobs in `dim` dimensions, the
/// centres on scaled coordinate axes. Labels are `c0`, `c1`, ...
pub fn separated_classes(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<(SampleMatrix, Vec<String>)> {
    if classes > dim {
        return Err(Error::invalid("need at least as many dimensions as classes"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        let mut centre = vec![0.0; dim];
        centre[c] = separation;
        isotropic_cloud(&mut rng, &centre, 1.0, per_class, &mut rows);
        labels.extend(std::iter::repeat_n(format!("c{c}"), per_class));
    }
    Ok((SampleMatrix::from_rows(&rows)?, labels))
}

/// Standard-normal rows.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}
