//! Spectral-regression route to the discriminant subspace.
//!
//! The scatter matrices are rewritten as graph matrices over the training
//! samples, `S_n = X L_n X^T` and `S_p + S_w = X L_I X^T`, where `L_n` and
//! `L_I` depend only on the class and subclass memberships. The pencil
//! `L_n v = lambda (L_I + eps I) v` is solved on the samples and its
//! informative eigenvectors are regressed back to feature space with a
//! pseudo-inverse.
//!
//! The informative eigenvectors of the pencil all belong to the same
//! eigenvalue family and their order carries no discriminant meaning, so
//! the regressed directions are ranked by a Rayleigh-Ritz solve of the
//! feature-space pencil restricted to their span.

use nalgebra::{DMatrix, DVector};

use crate::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::numkit::{gen_eig_spd, pseudo_inverse_apply, EigenPairs, Ridge, SymMatrix};
use crate::pcsda::compute_scatters;
use crate::subclass::SubclassAssignment;

/// Default pencil regularization is `1e-8 * N`.
pub const DEFAULT_EPSILON_SCALE: f64 = 1e-8;

/// Block membership of every training row: the positive class or one of
/// the negative subclasses.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSet {
    /// `None` for positives, `Some(k)` for subclass `k`.
    groups: Vec<Option<usize>>,
    n_p: usize,
    sizes: Vec<usize>,
}

impl IndicatorSet {
    pub fn new(labels: &[Label], assignment: &SubclassAssignment) -> Result<Self> {
        let mut groups = Vec::with_capacity(labels.len());
        let mut next_negative = 0;
        for &l in labels {
            if l.is_positive() {
                groups.push(None);
            } else {
                let k = *assignment.assignment().get(next_negative).ok_or_else(|| {
                    Error::invalid("subclass assignment shorter than the negative class")
                })?;
                groups.push(Some(k));
                next_negative += 1;
            }
        }
        if next_negative != assignment.len() {
            return Err(Error::DimensionMismatch {
                expected: next_negative,
                found: assignment.len(),
            });
        }
        let n_p = groups.iter().filter(|g| g.is_none()).count();
        if n_p == 0 {
            return Err(Error::invalid("no positive samples"));
        }
        Ok(IndicatorSet {
            groups,
            n_p,
            sizes: assignment.sizes().to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn groups(&self) -> &[Option<usize>] {
        &self.groups
    }

    pub fn one_p(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.groups.iter().map(|g| f64::from(u8::from(g.is_none()))))
    }

    pub fn one_k(&self, k: usize) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.groups.iter().map(|g| f64::from(u8::from(*g == Some(k)))))
    }

    fn block_size(&self, g: Option<usize>) -> usize {
        match g {
            None => self.n_p,
            Some(k) => self.sizes[k],
        }
    }
}

/// `L_n = sum_k (1_k / N_k - 1_p / N_p)(1_k / N_k - 1_p / N_p)^T` and
/// `L_I = (J_p - 1_p 1_p^T / N_p) + sum_k (J_k - 1_k 1_k^T / N_k)`.
pub fn build_graph_matrices(ind: &IndicatorSet) -> (SymMatrix, SymMatrix) {
    let n = ind.len();
    let p = ind.one_p() / ind.n_p as f64;
    let mut l_n = DMatrix::<f64>::zeros(n, n);
    for k in 0..ind.k() {
        let a = ind.one_k(k) / ind.sizes[k] as f64 - &p;
        l_n.ger(1.0, &a, &a, 1.0);
    }
    let l_i = DMatrix::from_fn(n, n, |i, j| {
        let (gi, gj) = (ind.groups[i], ind.groups[j]);
        if gi != gj {
            return 0.0;
        }
        let own = if i == j { 1.0 } else { 0.0 };
        own - 1.0 / ind.block_size(gi) as f64
    });
    (SymMatrix::symmetrize(l_n), SymMatrix::symmetrize(l_i))
}

/// Generalized eigenpairs of `L_n v = lambda (L_I + eps I) v`, with each
/// eigenvector rescaled to unit Euclidean norm.
pub fn graph_eigenvectors(ind: &IndicatorSet, epsilon: f64) -> Result<EigenPairs> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("pencil regularization must be positive"));
    }
    let (l_n, l_i) = build_graph_matrices(ind);
    let mut eig = gen_eig_spd(&l_n, &l_i, epsilon)?;
    for mut c in eig.vectors.column_iter_mut() {
        let norm = c.norm();
        if norm > 0.0 {
            c /= norm;
        }
    }
    Ok(eig)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SrOptions {
    /// Pencil regularization; `None` selects `1e-8 * N`.
    pub epsilon: Option<f64>,
    /// Ridge on `S_p + S_w` used when ranking the regressed directions.
    pub ridge: Ridge,
}

impl Default for SrOptions {
    fn default() -> Self {
        SrOptions {
            epsilon: None,
            ridge: Ridge::Auto,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SrSolution {
    /// `D x d`, columns normalized like the direct solver's.
    pub projection: DMatrix<f64>,
    /// Feature-space generalized eigenvalues of the returned directions.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues of the sample-space pencil that were kept.
    pub graph_eigenvalues: Vec<f64>,
}

/// Solves for `d` discriminant directions through the sample-space pencil.
pub fn sr_fit(
    train: &LabeledDataset,
    a: &SubclassAssignment,
    d: usize,
    opts: &SrOptions,
) -> Result<SrSolution> {
    let n = train.len();
    let dim = train.dim();
    let k = a.k();
    let d = if k == 1 { d.min(1) } else { d };
    if d == 0 || d > k.min(dim) {
        return Err(Error::invalid(format!(
            "subspace dimension {d} must lie in 1..={}",
            k.min(dim)
        )));
    }
    if n < dim {
        log::warn!("spectral regression with fewer samples ({n}) than features ({dim}); X^T is rank deficient");
    }
    let epsilon = opts.epsilon.unwrap_or(DEFAULT_EPSILON_SCALE * n as f64);
    let ind = IndicatorSet::new(train.labels(), a)?;
    let eig = graph_eigenvectors(&ind, epsilon)?;
    // rank(L_n) = K
    let targets = eig.leading(k);

    let scatters = compute_scatters(train, a)?;
    let mut centered = train.data().as_matrix().clone();
    for mut row in centered.row_iter_mut() {
        row -= scatters.mean.transpose();
    }
    let regressed = pseudo_inverse_apply(&centered, &targets)?;

    // Orthonormal basis of the regressed span, then Rayleigh-Ritz.
    let svd = regressed.clone().svd(true, false);
    let u = svd.u.expect("requested u");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * smax)
        .collect();
    if keep.len() < d {
        return Err(Error::invalid(format!(
            "regressed targets span only {} dimensions, {d} requested",
            keep.len()
        )));
    }
    let basis = u.select_columns(&keep);
    let inner = scatters.inner();
    let ridge = opts.ridge.resolve(&inner);
    let small_n = scatters.s_n.congruence(&basis);
    let small_i = inner.ridged(ridge).congruence(&basis);
    let ritz = gen_eig_spd(&small_n, &small_i, 0.0)?;
    let projection = &basis * ritz.leading(d);

    Ok(SrSolution {
        projection,
        eigenvalues: ritz.values.iter().take(d).copied().collect(),
        graph_eigenvalues: eig.values.iter().take(k).copied().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SampleMatrix;
    use crate::numkit::{max_principal_angle, relative_frobenius, sym_eig};
    use crate::pcsda::{fit_with_assignment, Solver};
    use crate::subclass::kmeans;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_problem(seed: u64, npos: usize, nneg: usize, dim: usize, k: usize) -> (LabeledDataset, SubclassAssignment) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = npos + nneg;
        let x = DMatrix::from_fn(n, dim, |i, j| {
            let shift = if i < npos { 0.0 } else { 3.0 * (((i + j) % 3) as f64 - 1.0) };
            shift + rng.sample::<f64, _>(StandardNormal)
        });
        let labels = (0..n).map(|i| Label::from_bool(i < npos)).collect();
        let ds = LabeledDataset::new(SampleMatrix::new(x).unwrap(), labels).unwrap();
        let a = kmeans(ds.negatives().as_matrix(), k, seed, 100).unwrap();
        (ds, a)
    }

    #[test]
    fn tiny_centering_blocks() {
        let labels = [Label::Positive, Label::Positive, Label::Negative, Label::Negative];
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let a = SubclassAssignment::from_labels(&x, vec![0, 0], 1).unwrap();
        let ind = IndicatorSet::new(&labels, &a).unwrap();
        let (_, l_i) = build_graph_matrices(&ind);
        let expected = DMatrix::from_row_slice(
            4,
            4,
            &[0.5, -0.5, 0.0, 0.0, -0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5, -0.5, 0.0, 0.0, -0.5, 0.5],
        );
        assert_eq!(l_i.as_matrix(), &expected);
        for r in l_i.as_matrix().row_iter() {
            assert_eq!(r.sum(), 0.0);
        }
    }

    #[test]
    fn indicators_are_disjoint() {
        let (ds, a) = random_problem(1, 10, 30, 3, 4);
        let ind = IndicatorSet::new(ds.labels(), &a).unwrap();
        let mut total = ind.one_p();
        for k in 0..ind.k() {
            assert_eq!(ind.one_k(k).sum() as usize, a.sizes()[k]);
            total += ind.one_k(k);
        }
        assert!(total.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn trace_of_inner_graph() {
        for (k, seed) in [(1, 0), (3, 1), (7, 2)] {
            let (ds, a) = random_problem(seed, 12, 35, 2, k);
            let ind = IndicatorSet::new(ds.labels(), &a).unwrap();
            let (_, l_i) = build_graph_matrices(&ind);
            assert!((l_i.trace() - (ds.len() - (k + 1)) as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn graph_matrices_reproduce_scatters() {
        let (ds, a) = random_problem(3, 15, 40, 4, 3);
        let ind = IndicatorSet::new(ds.labels(), &a).unwrap();
        let (l_n, l_i) = build_graph_matrices(&ind);
        let s = compute_scatters(&ds, &a).unwrap();
        let mut xc = ds.data().as_matrix().clone();
        for mut row in xc.row_iter_mut() {
            row -= s.mean.transpose();
        }
        let sn = xc.transpose() * l_n.as_matrix() * &xc;
        let si = xc.transpose() * l_i.as_matrix() * &xc;
        assert!(relative_frobenius(&sn, s.s_n.as_matrix()) <= 1e-9);
        assert!(relative_frobenius(&si, s.inner().as_matrix()) <= 1e-9);
    }

    #[test]
    fn graph_matrices_are_psd_and_feature_free() {
        let (ds, a) = random_problem(4, 10, 25, 3, 4);
        let ind = IndicatorSet::new(ds.labels(), &a).unwrap();
        let (l_n, l_i) = build_graph_matrices(&ind);
        for m in [&l_n, &l_i] {
            let min = sym_eig(m).unwrap().values.min();
            assert!(min >= -1e-10 * m.trace());
        }
        // Permuting feature columns does not touch the label structure.
        let perm = ds.data().as_matrix().select_columns(&[2, 0, 1]);
        let ds2 = ds.with_data(SampleMatrix::new(perm).unwrap()).unwrap();
        let ind2 = IndicatorSet::new(ds2.labels(), &a).unwrap();
        assert_eq!(build_graph_matrices(&ind2), (l_n, l_i));
    }

    #[test]
    fn top_eigenvectors_are_block_constant() {
        let (ds, a) = random_problem(5, 10, 30, 3, 3);
        let ind = IndicatorSet::new(ds.labels(), &a).unwrap();
        let eig = graph_eigenvectors(&ind, 1e-8 * ds.len() as f64).unwrap();
        assert!(eig.values.iter().all(|&v| v >= -1e-8));
        for c in 0..3 {
            let v = eig.vectors.column(c);
            for g in [None, Some(0), Some(1), Some(2)] {
                let vals: Vec<f64> = (0..ind.len()).filter(|&i| ind.groups()[i] == g).map(|i| v[i]).collect();
                let spread = vals.iter().copied().fold(f64::MIN, f64::max) - vals.iter().copied().fold(f64::MAX, f64::min);
                assert!(spread <= 1e-8 * v.norm(), "spread {spread}");
            }
        }
    }

    #[test]
    fn single_subclass_clamps_dimension() {
        let (ds, a) = random_problem(6, 10, 20, 3, 1);
        let sol = sr_fit(&ds, &a, 3, &SrOptions::default()).unwrap();
        assert_eq!(sol.projection.ncols(), 1);
        assert_eq!(sol.graph_eigenvalues.len(), 1);
    }

    #[test]
    fn agrees_with_direct_solver() {
        for seed in 0..5 {
            let (ds, a) = random_problem(seed + 100, 20, 40, 5, 3);
            let ridge = Ridge::Fixed(1e-8);
            let direct = fit_with_assignment(&ds, a.clone(), ridge, Solver::Direct).unwrap();
            let sol = sr_fit(&ds, &a, 2, &SrOptions { epsilon: None, ridge }).unwrap();
            let angle = max_principal_angle(&sol.projection, &direct.projection.columns(0, 2).into_owned());
            assert!(angle < 1e-4, "seed {seed}: angle {angle}");
        }
    }
}
