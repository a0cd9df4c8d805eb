//! Training: scatter matrices, maximum-likelihood covariance estimates and
//! the discriminant projection.
//!
//! All quantities are expressed relative to the positive-class mean `m`,
//! i.e. every sample is shifted by `-m` before any scatter is formed.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::dataset::{LabeledDataset, SampleMatrix};
use crate::error::{Error, Result};
use crate::numkit::{gen_eig_spd, Cholesky, Ridge, SymMatrix};
use crate::specreg::{self, SrOptions};
use crate::subclass::{self, SubclassAssignment};

/// Relative ridge added to the projected covariances before they are
/// factorized at inference time: `1e-9 * trace / d`.
pub const PROJECTED_RIDGE_SCALE: f64 = 1e-9;

/// Scatter matrices of one class-specific training set.
#[derive(Debug, Clone)]
pub struct ScatterSet {
    /// Positive-class scatter around `m`.
    pub s_p: SymMatrix,
    /// Scatter of the subclass means around `m`.
    pub s_n: SymMatrix,
    /// Total within-subclass scatter.
    pub s_w: SymMatrix,
    /// Positive-class mean.
    pub mean: DVector<f64>,
    pub n_p: usize,
    pub n_n: usize,
    pub k: usize,
}

impl ScatterSet {
    /// `S_p + S_w`, the right-hand side of the discriminant eigenproblem.
    pub fn inner(&self) -> SymMatrix {
        self.s_p.add(&self.s_w)
    }
}

/// Saddle-point estimates of the model covariances.
#[derive(Debug, Clone)]
pub struct CovarianceEstimates {
    pub phi_p: SymMatrix,
    pub phi_w: SymMatrix,
    pub phi_n: SymMatrix,
    pub phi_o: SymMatrix,
}

/// Builds `S_p`, `S_n` and `S_w`. `a` partitions the negative rows of
/// `train`, in row order.
pub fn compute_scatters(train: &LabeledDataset, a: &SubclassAssignment) -> Result<ScatterSet> {
    let pos = train.positive_indices();
    let neg = train.negative_indices();
    if a.len() != neg.len() {
        return Err(Error::DimensionMismatch {
            expected: neg.len(),
            found: a.len(),
        });
    }
    if pos.is_empty() {
        return Err(Error::invalid("no positive samples"));
    }
    let x = train.data().as_matrix();
    let dim = x.ncols();
    let k = a.k();

    let mut mean = DVector::zeros(dim);
    for &i in &pos {
        mean += x.row(i).transpose();
    }
    mean /= pos.len() as f64;

    let mut centered_pos = x.select_rows(&pos);
    for mut row in centered_pos.row_iter_mut() {
        row -= mean.transpose();
    }
    let s_p = SymMatrix::symmetrize(centered_pos.transpose() * &centered_pos);

    let mut sums = DMatrix::<f64>::zeros(k, dim);
    let mut sizes = vec![0usize; k];
    for (r, &i) in neg.iter().enumerate() {
        let c = a.assignment()[r];
        let mut row = sums.row_mut(c);
        row += x.row(i);
        sizes[c] += 1;
    }
    if sizes.contains(&0) {
        return Err(Error::invalid("subclass assignment has an empty cluster"));
    }
    let mut means = sums;
    for (c, &s) in sizes.iter().enumerate() {
        means.row_mut(c).scale_mut(1.0 / s as f64);
    }

    let mut deviations = DMatrix::<f64>::zeros(neg.len(), dim);
    for (r, &i) in neg.iter().enumerate() {
        let c = a.assignment()[r];
        deviations.set_row(r, &(x.row(i) - means.row(c)));
    }
    let s_w = SymMatrix::symmetrize(deviations.transpose() * &deviations);

    let mut offsets = means;
    for mut row in offsets.row_iter_mut() {
        row -= mean.transpose();
    }
    let s_n = SymMatrix::symmetrize(offsets.transpose() * &offsets);

    Ok(ScatterSet {
        s_p,
        s_n,
        s_w,
        mean,
        n_p: pos.len(),
        n_n: neg.len(),
        k,
    })
}

/// `Phi_p = S_p / N_p`, `Phi_w = S_w / (N_n - K)`,
/// `Phi_n = S_n / K - S_w / (M (N_n - K))` and `Phi_O = S_n / K + S_w / N_n`
/// with `M = N_n / K`. When every negative is its own subclass `Phi_w = 0`.
pub fn estimate_covariances(s: &ScatterSet) -> CovarianceEstimates {
    let dim = s.mean.len();
    let k = s.k as f64;
    let n_n = s.n_n as f64;
    let phi_p = s.s_p.scale(1.0 / s.n_p as f64);
    let between = s.s_n.scale(1.0 / k);
    if s.k >= s.n_n {
        return CovarianceEstimates {
            phi_p,
            phi_w: SymMatrix::zeros(dim),
            phi_n: between.clone(),
            phi_o: between,
        };
    }
    let m = n_n / k;
    let phi_w = s.s_w.scale(1.0 / (n_n - k));
    let phi_n = between.sub(&s.s_w.scale(1.0 / (m * (n_n - k))));
    let phi_o = between.add(&s.s_w.scale(1.0 / n_n));
    CovarianceEstimates {
        phi_p,
        phi_w,
        phi_n,
        phi_o,
    }
}

/// How the negative class is divided into subclasses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subclasses {
    /// K-Means with this many clusters (no clustering when it equals `N_n`).
    Fixed(usize),
    /// One subclass per negative sample.
    PerSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    /// Generalized eigenproblem in feature space.
    Direct,
    /// Graph pencil on the training samples followed by regression.
    SpectralRegression,
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "direct" => Ok(Solver::Direct),
            "specreg" | "spectral-regression" => Ok(Solver::SpectralRegression),
            other => Err(Error::config("solver", format!("expected direct or specreg, got {other:?}"))),
        }
    }
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Direct => "direct",
            Solver::SpectralRegression => "specreg",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub subclasses: Subclasses,
    pub dim: usize,
    pub ridge: Ridge,
    pub seed: u64,
    pub max_iter: usize,
    pub solver: Solver,
}

impl FitConfig {
    pub fn new(subclasses: Subclasses, dim: usize) -> Self {
        FitConfig {
            subclasses,
            dim,
            ridge: Ridge::Auto,
            seed: 0,
            max_iter: subclass::DEFAULT_MAX_ITER,
            solver: Solver::Direct,
        }
    }

    pub fn ridge(mut self, ridge: Ridge) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn solver(mut self, solver: Solver) -> Self {
        self.solver = solver;
        self
    }
}

/// Everything the training phase produces before a subspace dimension is
/// fixed. [`Subspace::model`] cuts it down to a [`PcsdaModel`]; cross
/// validation reuses one `Subspace` for every candidate dimension.
#[derive(Debug, Clone)]
pub struct Subspace {
    pub assignment: SubclassAssignment,
    pub scatters: ScatterSet,
    pub covariances: CovarianceEstimates,
    /// Discriminant directions, `D x r` with `r = min(D, K)`.
    pub projection: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Ridge that was added to `S_p + S_w`.
    pub ridge: f64,
    pub prior_p: f64,
}

impl Subspace {
    pub fn max_dim(&self) -> usize {
        self.projection.ncols()
    }

    pub fn model(&self, dim: usize) -> Result<PcsdaModel> {
        if dim == 0 || dim > self.max_dim() {
            return Err(Error::invalid(format!(
                "subspace dimension {dim} outside 1..={}",
                self.max_dim()
            )));
        }
        let w = self.projection.columns(0, dim).into_owned();
        let phi_p = self.covariances.phi_p.congruence(&w);
        let phi_o = self.covariances.phi_o.congruence(&w);
        PcsdaModel::from_parts(ModelParts {
            projection: w,
            eigenvalues: self.eigenvalues[..dim].to_vec(),
            phi_p,
            phi_o,
            mean: self.scatters.mean.clone(),
            prior_p: self.prior_p,
            k: self.scatters.k,
            ridge: self.ridge,
        })
    }
}

/// Resolves the subclass count against the training negatives, clamping
/// to the number of distinct negatives when clustering could not fill K
/// clusters.
pub fn effective_subclasses(train: &LabeledDataset, subclasses: Subclasses) -> Result<usize> {
    let n_n = train.negative_count();
    match subclasses {
        Subclasses::PerSample => Ok(n_n),
        Subclasses::Fixed(0) => Err(Error::invalid("number of subclasses must be positive")),
        Subclasses::Fixed(k) if k > n_n => Err(Error::invalid(format!(
            "{k} subclasses requested but only {n_n} negative samples"
        ))),
        Subclasses::Fixed(k) if k == n_n => Ok(k),
        Subclasses::Fixed(k) => {
            let distinct = subclass::distinct_rows(train.negatives().as_matrix());
            if distinct < k {
                warn!("only {distinct} distinct negative samples; clamping K from {k} to {distinct}");
                Ok(distinct)
            } else {
                Ok(k)
            }
        }
    }
}

/// Clusters the negatives (unless every negative is its own subclass),
/// forms the scatters and solves for the discriminant directions.
pub fn fit_subspace(
    train: &LabeledDataset,
    subclasses: Subclasses,
    ridge: Ridge,
    seed: u64,
    max_iter: usize,
    solver: Solver,
) -> Result<Subspace> {
    if train.positive_count() < 2 || train.negative_count() < 1 {
        return Err(Error::invalid("training set needs >= 2 positives and >= 1 negative"));
    }
    let k = effective_subclasses(train, subclasses)?;
    let negatives = train.negatives();
    let assignment = if k == train.negative_count() {
        SubclassAssignment::singletons(negatives.as_matrix())
    } else {
        subclass::kmeans(negatives.as_matrix(), k, seed, max_iter)?
    };
    fit_with_assignment(train, assignment, ridge, solver)
}

/// Same as [`fit_subspace`] with a caller-supplied subclass assignment.
pub fn fit_with_assignment(
    train: &LabeledDataset,
    assignment: SubclassAssignment,
    ridge: Ridge,
    solver: Solver,
) -> Result<Subspace> {
    let scatters = compute_scatters(train, &assignment)?;
    let covariances = estimate_covariances(&scatters);
    let inner = scatters.inner();
    let ridge = ridge.resolve(&inner);
    let max_dim = train.dim().min(scatters.k);
    let (projection, eigenvalues) = match solver {
        Solver::Direct => {
            let eig = gen_eig_spd(&scatters.s_n, &inner, ridge)?;
            (
                eig.leading(max_dim),
                eig.values.iter().take(max_dim).copied().collect(),
            )
        }
        Solver::SpectralRegression => {
            let sol = specreg::sr_fit(
                train,
                &assignment,
                max_dim,
                &SrOptions {
                    epsilon: None,
                    ridge: Ridge::Fixed(ridge),
                },
            )?;
            (sol.projection, sol.eigenvalues)
        }
    };
    let prior_p = scatters.n_p as f64 / (scatters.n_p + scatters.n_n) as f64;
    Ok(Subspace {
        assignment,
        scatters,
        covariances,
        projection,
        eigenvalues,
        ridge,
        prior_p,
    })
}

/// Trains a model with the given subspace dimension.
pub fn fit(train: &LabeledDataset, cfg: &FitConfig) -> Result<PcsdaModel> {
    let k = effective_subclasses(train, cfg.subclasses)?;
    let limit = train.dim().min(k);
    if cfg.dim == 0 || cfg.dim > limit {
        return Err(Error::invalid(format!(
            "subspace dimension {} must lie in 1..={limit} (min of D = {} and K = {k})",
            cfg.dim,
            train.dim()
        )));
    }
    fit_subspace(train, cfg.subclasses, cfg.ridge, cfg.seed, cfg.max_iter, cfg.solver)?.model(cfg.dim)
}

/// Raw fields of a [`PcsdaModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParts {
    pub projection: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub phi_p: SymMatrix,
    pub phi_o: SymMatrix,
    pub mean: DVector<f64>,
    pub prior_p: f64,
    pub k: usize,
    pub ridge: f64,
}

/// Factorized projected class models, rebuilt whenever a model is created.
#[derive(Debug, Clone)]
pub(crate) struct ProjectedGaussians {
    pub chol_p: Cholesky,
    pub chol_o: Cholesky,
    pub log_det_p: f64,
    pub log_det_o: f64,
}

fn factor_projected(phi: &SymMatrix, what: &str) -> Result<Cholesky> {
    let ridge = PROJECTED_RIDGE_SCALE * phi.trace().max(0.0) / phi.dim() as f64;
    Cholesky::factor(phi, ridge).inspect_err(|_| warn!("projected {what} covariance is singular"))
}

/// A trained linear model: projection, projected class covariances and
/// priors. Immutable once built.
#[derive(Debug, Clone)]
pub struct PcsdaModel {
    parts: ModelParts,
    gaussians: ProjectedGaussians,
}

impl PcsdaModel {
    pub fn from_parts(parts: ModelParts) -> Result<Self> {
        let d = parts.projection.ncols();
        let input = parts.projection.nrows();
        if d == 0 {
            return Err(Error::invalid("empty projection"));
        }
        if parts.mean.len() != input {
            return Err(Error::DimensionMismatch {
                expected: input,
                found: parts.mean.len(),
            });
        }
        for (name, phi) in [("phi_p", &parts.phi_p), ("phi_o", &parts.phi_o)] {
            if phi.dim() != d {
                return Err(Error::invalid(format!("{name} is {0}x{0}, expected {d}x{d}", phi.dim())));
            }
        }
        if parts.eigenvalues.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: parts.eigenvalues.len(),
            });
        }
        if !(parts.prior_p > 0.0 && parts.prior_p < 1.0) {
            return Err(Error::invalid(format!("prior {} outside (0, 1)", parts.prior_p)));
        }
        let chol_p = factor_projected(&parts.phi_p, "positive")?;
        let chol_o = factor_projected(&parts.phi_o, "negative")?;
        let gaussians = ProjectedGaussians {
            log_det_p: chol_p.log_det(),
            log_det_o: chol_o.log_det(),
            chol_p,
            chol_o,
        };
        Ok(PcsdaModel { parts, gaussians })
    }

    pub fn parts(&self) -> &ModelParts {
        &self.parts
    }

    /// `D x d`.
    pub fn projection(&self) -> &DMatrix<f64> {
        &self.parts.projection
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.parts.eigenvalues
    }

    pub fn phi_p(&self) -> &SymMatrix {
        &self.parts.phi_p
    }

    pub fn phi_o(&self) -> &SymMatrix {
        &self.parts.phi_o
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.parts.mean
    }

    /// Projected positive mean `W^T m`.
    pub fn mu(&self) -> DVector<f64> {
        self.parts.projection.transpose() * &self.parts.mean
    }

    pub fn prior_p(&self) -> f64 {
        self.parts.prior_p
    }

    pub fn prior_n(&self) -> f64 {
        1.0 - self.parts.prior_p
    }

    pub fn dim(&self) -> usize {
        self.parts.projection.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.parts.projection.nrows()
    }

    pub fn k(&self) -> usize {
        self.parts.k
    }

    pub fn ridge(&self) -> f64 {
        self.parts.ridge
    }

    pub(crate) fn gaussians(&self) -> &ProjectedGaussians {
        &self.gaussians
    }

    /// Rows `(x - m)^T W`: projected coordinates relative to `mu`.
    pub fn project(&self, x: &SampleMatrix) -> Result<SampleMatrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                found: x.cols(),
            });
        }
        let mut centered = x.as_matrix().clone();
        for mut row in centered.row_iter_mut() {
            row -= self.parts.mean.transpose();
        }
        SampleMatrix::new(centered * &self.parts.projection)
    }
}
