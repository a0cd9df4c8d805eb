//! Dense symmetric linear algebra shared by the solvers.
//!
//! Eigen-decomposition and SVD are delegated to `nalgebra`; the Cholesky
//! factorization is local so that a failed factorization can report the
//! offending pivot.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Relative asymmetry tolerated by [`SymMatrix::new`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Relative singular-value cutoff used by [`pseudo_inverse_apply`].
pub const PINV_CUTOFF: f64 = 1e-12;

/// Relative scale of the automatic ridge, `1e-6 * trace(B) / dim`.
pub const AUTO_RIDGE_SCALE: f64 = 1e-6;

/// A real symmetric matrix. The stored values are exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates symmetry up to [`SYMMETRY_TOLERANCE`] relative to the
    /// largest entry, then stores `(A + A^T) / 2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix contains non-finite values"));
        }
        let scale = m.amax();
        let n = m.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOLERANCE * scale {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::symmetrize(m))
    }

    /// Stores `(A + A^T) / 2` without checking how asymmetric `A` was.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        assert!(m.is_square(), "symmetrize needs a square matrix");
        let t = m.transpose();
        SymMatrix((m + t) * 0.5)
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, factor: f64) -> Self {
        SymMatrix(&self.0 * factor)
    }

    pub fn add(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &SymMatrix) -> Self {
        SymMatrix(&self.0 - &other.0)
    }

    /// `W^T A W`.
    pub fn congruence(&self, w: &DMatrix<f64>) -> Self {
        SymMatrix::symmetrize(w.transpose() * &self.0 * w)
    }

    /// `A + ridge * I`.
    pub fn ridged(&self, ridge: f64) -> Self {
        let mut m = self.0.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += ridge;
        }
        SymMatrix(m)
    }
}

/// Regularization added to the right-hand matrix of a generalized problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `1e-6 * trace(B) / dim`, invariant to the overall data scale.
    Auto,
    Fixed(f64),
}

impl Ridge {
    pub fn resolve(self, b: &SymMatrix) -> f64 {
        match self {
            Ridge::Auto => {
                let dim = b.dim().max(1) as f64;
                AUTO_RIDGE_SCALE * b.trace().max(0.0) / dim
            }
            Ridge::Fixed(v) => v,
        }
    }
}

impl std::fmt::Display for Ridge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ridge::Auto => f.write_str("auto"),
            Ridge::Fixed(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for Ridge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Ridge::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => Ok(Ridge::Fixed(v)),
            _ => Err(Error::config("ridge", format!("expected `auto` or a non-negative number, got {s:?}"))),
        }
    }
}

/// Eigenvalues in non-increasing order with matching column eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The eigenvectors of the `count` largest eigenvalues.
    pub fn leading(&self, count: usize) -> DMatrix<f64> {
        self.vectors.columns(0, count).into_owned()
    }

    fn sorted_descending(values: DVector<f64>, vectors: DMatrix<f64>) -> Self {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let values = DVector::from_iterator(order.len(), order.iter().map(|&i| values[i]));
        let mut sorted = DMatrix::zeros(vectors.nrows(), order.len());
        for (dst, &src) in order.iter().enumerate() {
            let mut col = vectors.column(src).into_owned();
            orient(&mut col);
            sorted.set_column(dst, &col);
        }
        EigenPairs {
            values,
            vectors: sorted,
        }
    }
}

/// Flips `v` so that its largest-magnitude entry is positive.
fn orient(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending.
pub fn sym_eig(a: &SymMatrix) -> Result<EigenPairs> {
    let n = a.dim();
    if n == 0 {
        return Ok(EigenPairs {
            values: DVector::zeros(0),
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::try_new(a.as_matrix().clone(), f64::EPSILON, 1000 * n.max(10))
        .ok_or(Error::NoConvergence("symmetric eigensolver"))?;
    Ok(EigenPairs::sorted_descending(eig.eigenvalues, eig.eigenvectors))
}

/// Lower-triangular Cholesky factor of `A + ridge * I`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    pub fn factor(a: &SymMatrix, ridge: f64) -> Result<Self> {
        let n = a.dim();
        let src = a.as_matrix();
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut diag = src[(j, j)] + ridge;
            for k in 0..j {
                diag -= l[(j, k)] * l[(j, k)];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    index: j,
                    pivot: diag,
                });
            }
            let d = diag.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = src[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// `ln det(A + ridge I)` as twice the sum of log pivots.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L X = B`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// Solves `L^T X = B`.
    pub fn solve_upper(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.l
            .tr_solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal")
    }

    /// Solves `(A + ridge I) x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("cholesky factor has a positive diagonal");
        self.l
            .tr_solve_lower_triangular(&y)
            .expect("cholesky factor has a positive diagonal")
    }

    /// `z^T (A + ridge I)^{-1} z`, computed as `||L^{-1} z||^2`.
    pub fn quad_form(&self, z: &DVector<f64>) -> f64 {
        let y = self
            .l
            .solve_lower_triangular(z)
            .expect("cholesky factor has a positive diagonal");
        y.norm_squared()
    }
}

/// Solves `A w = lambda (B + ridge I) w`, eigenvalues descending and
/// eigenvectors normalized so that `w^T (B + ridge I) w = 1`.
pub fn gen_eig_spd(a: &SymMatrix, b: &SymMatrix, ridge: f64) -> Result<EigenPairs> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let chol = Cholesky::factor(b, ridge)?;
    // C = L^{-1} A L^{-T}
    let left = chol.solve_lower(a.as_matrix());
    let reduced = chol.solve_lower(&left.transpose());
    let eig = sym_eig(&SymMatrix::symmetrize(reduced))?;
    let vectors = chol.solve_upper(&eig.vectors);
    Ok(EigenPairs::sorted_descending(eig.values, vectors))
}

/// `ln det(A + ridge I)` through a Cholesky factorization.
pub fn log_det_spd(a: &SymMatrix, ridge: f64) -> Result<f64> {
    Ok(Cholesky::factor(a, ridge)?.log_det())
}

/// Minimum-norm least-squares solution `M^+ T`, truncating singular values
/// below `1e-12 * sigma_max`.
pub fn pseudo_inverse_apply(m: &DMatrix<f64>, t: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() != t.nrows() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: t.nrows(),
        });
    }
    if m.iter().chain(t.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("pseudo-inverse input contains non-finite values"));
    }
    if m.is_empty() {
        return Ok(DMatrix::zeros(m.ncols(), t.ncols()));
    }
    let svd = SVD::try_new(m.clone(), true, true, f64::EPSILON, 0)
        .ok_or(Error::NoConvergence("singular value decomposition"))?;
    let u = svd.u.as_ref().expect("requested u");
    let v_t = svd.v_t.as_ref().expect("requested v_t");
    let sigma_max = svd.singular_values.max();
    let cutoff = PINV_CUTOFF * sigma_max;
    let mut projected = u.transpose() * t;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let inv = if s > cutoff && s > 0.0 { 1.0 / s } else { 0.0 };
        projected.row_mut(i).scale_mut(inv);
    }
    Ok(v_t.transpose() * projected)
}

/// Orthonormal basis of the column span of `a` (thin QR).
pub fn orthonormal_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().qr().q()
}

/// Sines of the principal angles between the column spans of `a` and `b`,
/// descending.
pub fn principal_angle_sines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    let residual = &qb - &qa * (qa.transpose() * &qb);
    let mut s: Vec<f64> = residual.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Largest principal angle (radians) between two column spans.
pub fn max_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    principal_angle_sines(a, b)
        .first()
        .map(|s| s.min(1.0).asin())
        .unwrap_or(0.0)
}

/// `||a - b||_F / ||b||_F` (absolute error when `b` is zero).
pub fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let scale = b.norm();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}
