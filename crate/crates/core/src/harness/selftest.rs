//! Fast numerical checks on generated data, run by `pcsda selftest`.

use nalgebra::DMatrix;

use crate::dataset::{Label, SampleMatrix};
use crate::error::Result;
use crate::inference::log_posterior_ratio;
use crate::kernel::{fit_kernel_map, rbf_matrix};
use crate::metrics::{average_precision, f1_score};
use crate::numkit::{gen_eig_spd, max_principal_angle, relative_frobenius, Ridge, SymMatrix};
use crate::pcsda::{self, compute_scatters, fit_with_assignment, ModelParts, PcsdaModel, Solver, Subclasses};
use crate::pipeline::Pipeline;
use crate::subclass::SubclassAssignment;
use crate::synthetic::{gaussian_matrix, surrounded_positive, GenerativeModel};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, limit: f64) -> Check {
    Check {
        name,
        passed: value < limit,
        detail: format!("{value:.3e} < {limit:.0e}"),
    }
}

fn csda_reduction() -> Result<Check> {
    let ds = GenerativeModel::isotropic(6, 1.0, 4.0, 0.5).sample(20, 40, 1, 7)?.dataset;
    let ridge = 1e-6;
    let sub = pcsda::fit_subspace(&ds, Subclasses::PerSample, Ridge::Fixed(ridge), 0, 1, Solver::Direct)?;
    let direct = gen_eig_spd(&sub.scatters.s_n, &sub.scatters.s_p, ridge)?;
    let angle = max_principal_angle(&sub.projection.columns(0, 3).into_owned(), &direct.leading(3));
    Ok(check("csda reduction (principal angle)", angle, 1e-6))
}

fn solver_equivalence() -> Result<Check> {
    let sample = GenerativeModel::isotropic(5, 1.0, 9.0, 1.0).sample(24, 3, 12, 3)?;
    let ds = sample.dataset;
    let a = SubclassAssignment::from_labels(ds.negatives().as_matrix(), sample.assignment, 3)?;
    let direct = fit_with_assignment(&ds, a.clone(), Ridge::Fixed(1e-6), Solver::Direct)?;
    let sr = fit_with_assignment(&ds, a, Ridge::Fixed(1e-6), Solver::SpectralRegression)?;
    let angle = max_principal_angle(
        &direct.projection.columns(0, 2).into_owned(),
        &sr.projection.columns(0, 2).into_owned(),
    );
    Ok(check("spectral regression vs direct (principal angle)", angle, 1e-4))
}

fn saddle_point_identity() -> Result<Check> {
    let sample = GenerativeModel::isotropic(4, 1.0, 4.0, 1.0).sample(30, 5, 8, 11)?;
    let ds = sample.dataset;
    let a = SubclassAssignment::from_labels(ds.negatives().as_matrix(), sample.assignment, 5)?;
    let s = compute_scatters(&ds, &a)?;
    let c = pcsda::estimate_covariances(&s);
    let lhs = c.phi_n.add(&c.phi_w);
    let rhs = s.s_n.scale(1.0 / s.k as f64).add(&s.s_w.scale(1.0 / s.n_n as f64));
    Ok(check(
        "covariance identity (relative Frobenius)",
        relative_frobenius(lhs.as_matrix(), rhs.as_matrix()),
        1e-9,
    ))
}

fn kernel_fidelity() -> Result<Check> {
    let x = SampleMatrix::new(gaussian_matrix(80, 3, 5))?;
    let map = fit_kernel_map(&x, 1.5, 1e-10)?;
    let phi = map.training_features().into_matrix();
    let k = rbf_matrix(x.as_matrix(), x.as_matrix(), 1.5);
    Ok(check(
        "kernel map reproduces the kernel matrix",
        relative_frobenius(&(&phi * phi.transpose()), &k),
        1e-8,
    ))
}

fn decision_boundary() -> Result<Check> {
    let model = PcsdaModel::from_parts(ModelParts {
        projection: DMatrix::identity(1, 1),
        eigenvalues: vec![1.0],
        phi_p: SymMatrix::from_diagonal(&[1.0]),
        phi_o: SymMatrix::from_diagonal(&[4.0]),
        mean: nalgebra::DVector::zeros(1),
        prior_p: 0.5,
        k: 1,
        ridge: 0.0,
    })?;
    let (mut lo, mut hi) = (0.0, 5.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let g = log_posterior_ratio(&model, &nalgebra::DVector::from_element(1, mid), false)?;
        if g >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut c = check("one-dimensional decision boundary", (lo - 1.3593).abs(), 1e-3);
    c.detail = format!("|z| = {lo:.5}");
    Ok(c)
}

fn metrics() -> Result<Check> {
    use Label::{Negative as N, Positive as P};
    let ap = average_precision(&[0, 1, 2], &[P, N, P])?;
    let f1 = f1_score(&[P, P, P, N, N], &[P, P, N, P, N]);
    let ok = ap == (1.0 + 2.0 / 3.0) / 2.0 && (f1 - 2.0 / 3.0).abs() < 1e-15;
    Ok(Check {
        name: "metric examples",
        passed: ok,
        detail: format!("ap {ap}, f1 {f1}"),
    })
}

fn round_trip() -> Result<Check> {
    let ds = surrounded_positive(30, 3, 30, 5.0, 2)?;
    let cfg = crate::pipeline::TrainConfig {
        fit: pcsda::FitConfig::new(Subclasses::Fixed(3), 2),
        kernel: None,
    };
    let p = Pipeline::train(&ds, &cfg)?;
    let text = p.to_json();
    let same = Pipeline::from_json(&text)?.to_json() == text;
    Ok(Check {
        name: "model document round trip",
        passed: same,
        detail: format!("{} bytes", text.len()),
    })
}

/// Runs every check. Errors inside a check are reported as failures.
pub fn selftest() -> Vec<Check> {
    let checks: [(&'static str, fn() -> Result<Check>); 7] = [
        ("csda reduction (principal angle)", csda_reduction),
        ("spectral regression vs direct (principal angle)", solver_equivalence),
        ("covariance identity (relative Frobenius)", saddle_point_identity),
        ("kernel map reproduces the kernel matrix", kernel_fidelity),
        ("one-dimensional decision boundary", decision_boundary),
        ("metric examples", metrics),
        ("model document round trip", round_trip),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            f().unwrap_or_else(|e| Check {
                name,
                passed: false,
                detail: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
