//! Test phase: the posterior-ratio classifier and distance ranking.

use nalgebra::DVector;

use crate::dataset::{Label, SampleMatrix};
use crate::error::{Error, Result};
use crate::pcsda::PcsdaModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub label: Label,
    /// Log posterior ratio `g`.
    pub score: f64,
    /// `exp(g)`; `+inf` when it overflows.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankResult {
    /// Test indices, closest to the positive mean first.
    pub order: Vec<usize>,
    /// Distance of every test point, indexed like the input.
    pub distances: Vec<f64>,
}

/// Log ratio of the class posteriors for a centered projected vector:
///
/// `g = ln P(c_p) - ln P(c_n) + (ln|Phi_O| - ln|Phi_p|) / 2
///      - z^T Phi_p^{-1} z / 2 + z^T Phi_O^{-1} z / 2`.
///
/// With `equiprobable` the prior term is dropped.
pub fn log_posterior_ratio(model: &PcsdaModel, z: &DVector<f64>, equiprobable: bool) -> Result<f64> {
    if z.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: z.len(),
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("projected vector contains non-finite values"));
    }
    let g = model.gaussians();
    let prior = if equiprobable {
        0.0
    } else {
        model.prior_p().ln() - model.prior_n().ln()
    };
    Ok(prior + 0.5 * (g.log_det_o - g.log_det_p) - 0.5 * g.chol_p.quad_form(z)
        + 0.5 * g.chol_o.quad_form(z))
}

/// `exp(g)`. Overflow saturates to `+inf`; decisions never go through this.
pub fn posterior_ratio(model: &PcsdaModel, z: &DVector<f64>, equiprobable: bool) -> Result<f64> {
    Ok(log_posterior_ratio(model, z, equiprobable)?.exp())
}

/// Positive when `g >= 0`.
pub fn decide(score: f64) -> Label {
    Label::from_bool(score >= 0.0)
}

pub fn classify(model: &PcsdaModel, x: &SampleMatrix, equiprobable: bool) -> Result<Vec<Decision>> {
    let z = model.project(x)?;
    classify_projected(model, &z, equiprobable)
}

/// [`classify`] for rows that are already projected and centered.
pub fn classify_projected(model: &PcsdaModel, z: &SampleMatrix, equiprobable: bool) -> Result<Vec<Decision>> {
    z.as_matrix()
        .row_iter()
        .map(|row| {
            let score = log_posterior_ratio(model, &row.transpose(), equiprobable)?;
            Ok(Decision {
                label: decide(score),
                score,
                ratio: score.exp(),
            })
        })
        .collect()
}

pub fn rank(model: &PcsdaModel, x: &SampleMatrix) -> Result<RankResult> {
    Ok(rank_projected(&model.project(x)?))
}

/// Orders centered projected rows by Euclidean norm; ties keep input order.
pub fn rank_projected(z: &SampleMatrix) -> RankResult {
    let distances: Vec<f64> = z.as_matrix().row_iter().map(|r| r.norm()).collect();
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[a].total_cmp(&distances[b]));
    RankResult { order, distances }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::SymMatrix;
    use crate::pcsda::ModelParts;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn model_1d(phi_p: f64, phi_o: f64, prior_p: f64) -> PcsdaModel {
        PcsdaModel::from_parts(ModelParts {
            projection: DMatrix::from_column_slice(1, 1, &[1.0]),
            eigenvalues: vec![1.0],
            phi_p: SymMatrix::from_diagonal(&[phi_p]),
            phi_o: SymMatrix::from_diagonal(&[phi_o]),
            mean: DVector::zeros(1),
            prior_p,
            k: 1,
            ridge: 0.0,
        })
        .unwrap()
    }

    fn model_2d(phi_p: DMatrix<f64>, phi_o: DMatrix<f64>, prior_p: f64) -> PcsdaModel {
        PcsdaModel::from_parts(ModelParts {
            projection: DMatrix::identity(2, 2),
            eigenvalues: vec![2.0, 1.0],
            phi_p: SymMatrix::new(phi_p).unwrap(),
            phi_o: SymMatrix::new(phi_o).unwrap(),
            mean: DVector::zeros(2),
            prior_p,
            k: 2,
            ridge: 0.0,
        })
        .unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn identical_class_models_give_zero() {
        let m = model_2d(DMatrix::identity(2, 2), DMatrix::identity(2, 2), 0.5);
        for z in [[0.0, 0.0], [1.0, -3.0], [10.0, 2.0]] {
            assert!(log_posterior_ratio(&m, &v(&z), false).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn one_dimensional_boundary() {
        let m = model_1d(1.0, 4.0, 0.5);
        let (mut lo, mut hi) = (0.0, 5.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if log_posterior_ratio(&m, &v(&[mid]), false).unwrap() >= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 1.3593).abs() < 1e-3);
        assert!((lo - (8.0 * 2f64.ln() / 3.0).sqrt()).abs() < 1e-8);
        for z in [0.0, 0.5, 1.0, 2.0] {
            let g = log_posterior_ratio(&m, &v(&[z]), false).unwrap();
            // the projected ridge perturbs the 1x1 covariances by 1e-9 relative
            assert!((g - (2f64.ln() - 0.375 * z * z)).abs() < 1e-8);
        }
        assert_eq!(decide(log_posterior_ratio(&m, &v(&[1.35]), false).unwrap()), Label::Positive);
        assert_eq!(decide(log_posterior_ratio(&m, &v(&[1.37]), false).unwrap()), Label::Negative);
    }

    #[test]
    fn prior_only_shift() {
        let m = model_2d(DMatrix::identity(2, 2) * 2.0, DMatrix::identity(2, 2) * 2.0, 0.25);
        for z in [[0.0, 0.0], [3.0, 1.0]] {
            let g = log_posterior_ratio(&m, &v(&z), false).unwrap();
            assert!((g - (1f64 / 3.0).ln()).abs() < 1e-12);
            assert!(log_posterior_ratio(&m, &v(&z), true).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn ratio_is_exp_of_score() {
        let m = model_1d(1.0, 1.0, 0.5);
        assert!((posterior_ratio(&m, &v(&[0.3]), false).unwrap() - 1.0).abs() < 1e-12);
        let m = model_1d(1.0, 4.0, 0.5);
        // g(0) = ln 2
        assert!((posterior_ratio(&m, &v(&[0.0]), false).unwrap() - 2.0).abs() < 1e-8);
        let huge = model_1d(1e-300, 1.0, 0.5);
        let d = classify(&huge, &SampleMatrix::from_rows(&[vec![0.0]]).unwrap(), false).unwrap();
        assert_eq!(d[0].label, Label::Positive);
    }

    #[test]
    fn positive_mean_is_positive_when_positive_class_is_tighter() {
        let m = model_2d(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
            DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 2.0]),
            0.5,
        );
        let d = classify(&m, &SampleMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap(), false).unwrap();
        assert_eq!(d[0].label, Label::Positive);
        assert!(d[0].score > 0.0);
    }

    #[test]
    fn rank_by_absolute_projection() {
        let z = SampleMatrix::from_rows(&[vec![-2.0], vec![0.5], vec![3.0]]).unwrap();
        let r = rank_projected(&z);
        assert_eq!(r.order, vec![1, 0, 2]);
        assert_eq!(r.distances, vec![2.0, 0.5, 3.0]);
        let ties = SampleMatrix::from_rows(&[vec![1.0], vec![-1.0], vec![0.0]]).unwrap();
        assert_eq!(rank_projected(&ties).order, vec![2, 0, 1]);
    }

    #[test]
    fn mean_ranks_first() {
        let m = model_1d(1.0, 4.0, 0.5);
        let x = SampleMatrix::from_rows(&[vec![4.0], vec![0.0], vec![-1.0]]).unwrap();
        let r = rank(&m, &x).unwrap();
        assert_eq!(r.order[0], 1);
        assert_eq!(r.distances[1], 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = model_1d(1.0, 4.0, 0.5);
        assert!(log_posterior_ratio(&m, &v(&[1.0, 2.0]), false).is_err());
        assert!(log_posterior_ratio(&m, &v(&[f64::NAN]), false).is_err());
    }

    fn random_model(seed: u64) -> PcsdaModel {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut spd = |scale: f64| {
            let g = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
            (&g * g.transpose() + DMatrix::identity(3, 3) * 0.2) * scale
        };
        let (p, o) = (spd(1.0), spd(4.0));
        PcsdaModel::from_parts(ModelParts {
            projection: DMatrix::identity(3, 3),
            eigenvalues: vec![3.0, 2.0, 1.0],
            phi_p: SymMatrix::new(p).unwrap(),
            phi_o: SymMatrix::new(o).unwrap(),
            mean: DVector::zeros(3),
            prior_p: 0.3,
            k: 3,
            ridge: 0.0,
        })
        .unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ratio_and_score_agree(seed in 0u64..1000, z in prop::array::uniform3(-5.0f64..5.0)) {
            let m = random_model(seed);
            let z = v(&z);
            let g = log_posterior_ratio(&m, &z, false).unwrap();
            let r = posterior_ratio(&m, &z, false).unwrap();
            if r.is_finite() && r > 0.0 {
                prop_assert!((r.ln() - g).abs() <= 1e-12 * g.abs().max(1.0));
                prop_assert_eq!(r >= 1.0, decide(g) == Label::Positive);
            }
        }

        #[test]
        fn equiprobable_changes_only_near_boundary(seed in 0u64..1000, z in prop::array::uniform3(-5.0f64..5.0)) {
            let mut parts = random_model(seed).parts().clone();
            parts.prior_p = 0.1;
            let m = PcsdaModel::from_parts(parts).unwrap();
            let z = v(&z);
            let with = log_posterior_ratio(&m, &z, false).unwrap();
            let without = log_posterior_ratio(&m, &z, true).unwrap();
            if decide(with) != decide(without) {
                prop_assert!(without.abs() <= 9f64.ln() + 1e-12);
            }
        }

        #[test]
        fn finite_difference_gradient(seed in 0u64..1000, z in prop::array::uniform3(-3.0f64..3.0)) {
            let m = random_model(seed);
            let z = v(&z);
            let g = m.gaussians();
            let analytic = g.chol_o.solve(&z) - g.chol_p.solve(&z);
            let h = 1e-6;
            for i in 0..3 {
                let mut up = z.clone();
                up[i] += h;
                let mut down = z.clone();
                down[i] -= h;
                let fd = (log_posterior_ratio(&m, &up, false).unwrap()
                    - log_posterior_ratio(&m, &down, false).unwrap()) / (2.0 * h);
                prop_assert!((fd - analytic[i]).abs() <= 1e-4 * analytic[i].abs().max(1.0));
            }
        }

        #[test]
        fn distances_invariant_to_rotation(seed in 0u64..1000, angle in 0.0f64..std::f64::consts::TAU) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let w = DMatrix::from_fn(4, 2, |_, _| rng.random_range(-1.0..1.0));
            let rot = DMatrix::from_row_slice(2, 2, &[angle.cos(), -angle.sin(), angle.sin(), angle.cos()]);
            let x = SampleMatrix::new(DMatrix::from_fn(12, 4, |_, _| rng.random_range(-3.0..3.0))).unwrap();
            let make = |proj: DMatrix<f64>| PcsdaModel::from_parts(ModelParts {
                projection: proj,
                eigenvalues: vec![2.0, 1.0],
                phi_p: SymMatrix::identity(2),
                phi_o: SymMatrix::identity(2),
                mean: DVector::from_column_slice(&[0.1, 0.2, 0.3, 0.4]),
                prior_p: 0.5,
                k: 2,
                ridge: 0.0,
            }).unwrap();
            let a = rank(&make(w.clone()), &x).unwrap();
            let b = rank(&make(&w * rot), &x).unwrap();
            for (da, db) in a.distances.iter().zip(&b.distances) {
                prop_assert!((da - db).abs() <= 1e-10);
            }
        }
    }
}
