//! Tolerance-aware dense linear algebra.
//!
//! Every rank decision in the crate goes through [`Tolerance::rank_rel`]:
//! a singular value counts as nonzero when it exceeds
//! `rank_rel * scale * max(rows, cols)`, where `scale` is the largest
//! singular value of the matrix being factored (or an explicitly supplied
//! reference scale for kernel chains of matrix powers).

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Numerical thresholds shared by all operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Relative singular-value cutoff for rank decisions.
    pub rank_rel: f64,
    /// Absolute residual threshold.
    pub residual_abs: f64,
    /// Relative residual threshold.
    pub residual_rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rank_rel: 1e-10,
            residual_abs: 1e-9,
            residual_rel: 1e-8,
        }
    }
}

impl Tolerance {
    pub fn new(rank_rel: f64, residual_abs: f64, residual_rel: f64) -> Result<Self> {
        for (name, v) in [
            ("rank_rel", rank_rel),
            ("residual_abs", residual_abs),
            ("residual_rel", residual_rel),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "tolerance `{name}` must be positive, got {v}"
                )));
            }
        }
        Ok(Self {
            rank_rel,
            residual_abs,
            residual_rel,
        })
    }

    /// Mixed absolute/relative threshold for a residual of a quantity of
    /// size `scale`.
    pub fn residual_threshold(&self, scale: f64) -> f64 {
        self.residual_abs + self.residual_rel * scale
    }
}

/// Rejects matrices with NaN or infinite entries.
pub fn ensure_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "matrix `{what}` has non-finite entries"
        )))
    }
}

pub fn ensure_square(m: &Matrix, what: &str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare(what.to_string()))
    }
}

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Frobenius norm of `M − Mᵀ`.
pub fn asymmetry(m: &Matrix) -> f64 {
    (m - m.transpose()).norm()
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Singular values, in no particular order.
pub fn singular_values(m: &Matrix) -> Vector {
    if m.is_empty() {
        return Vector::zeros(0);
    }
    m.clone().singular_values()
}

fn rank_cutoff(sigma_max: f64, rows: usize, cols: usize, tol: &Tolerance) -> f64 {
    tol.rank_rel * sigma_max * rows.max(cols) as f64
}

/// Numerical rank with the crate-wide relative cutoff.
pub fn rank(m: &Matrix, tol: &Tolerance) -> usize {
    let sv = singular_values(m);
    if sv.is_empty() {
        return 0;
    }
    let cutoff = rank_cutoff(sv.max(), m.nrows(), m.ncols(), tol);
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Numerical rank with the cutoff taken relative to `scale`.
pub fn rank_scaled(m: &Matrix, scale: f64, tol: &Tolerance) -> usize {
    let cutoff = rank_cutoff(scale, m.nrows(), m.ncols(), tol);
    singular_values(m).iter().filter(|&&s| s > cutoff).count()
}

/// Moore–Penrose pseudo-inverse via the SVD.
pub fn pinv(m: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    pinv_and_kernel_projector(m, tol).map(|(p, _)| p)
}

/// Orthogonal projector `I − M†M` onto the numerical kernel of `m`.
pub fn kernel_projector(m: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    pinv_and_kernel_projector(m, tol).map(|(_, g)| g)
}

/// `M†` and `I − M†M` from a single SVD.
///
/// The projector is built from the retained right singular vectors rather
/// than the product `M†M`, so it stays idempotent when `m` is badly
/// conditioned.
pub fn pinv_and_kernel_projector(m: &Matrix, tol: &Tolerance) -> Result<(Matrix, Matrix)> {
    ensure_finite(m, "pinv argument")?;
    let (rows, cols) = m.shape();
    let mut proj = Matrix::identity(cols, cols);
    if rows == 0 || cols == 0 {
        return Ok((Matrix::zeros(cols, rows), proj));
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let cutoff = rank_cutoff(svd.singular_values.max(), rows, cols, tol);
    let mut out = Matrix::zeros(cols, rows);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // out += v_i u_iᵀ / s
            let vi = v_t.row(i).transpose();
            let ui = u.column(i);
            out.ger(1.0 / s, &vi, &ui, 1.0);
            proj.ger(-1.0, &vi, &vi, 1.0);
        }
    }
    Ok((out, symmetrize(&proj)))
}

/// Orthonormal basis of the numerical null space of `m`.
///
/// Returns a `cols × k` matrix; `k = 0` when `m` has full column rank.
pub fn kernel_basis(m: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    ensure_finite(m, "kernel_basis argument")?;
    let scale = spectral_norm(m);
    Ok(kernel_basis_scaled(m, scale, m.nrows().max(m.ncols()), tol))
}

/// Null space with an explicit reference scale: singular values at or below
/// `rank_rel * scale * dim` are treated as zero.
pub(crate) fn kernel_basis_scaled(m: &Matrix, scale: f64, dim: usize, tol: &Tolerance) -> Matrix {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return Matrix::zeros(0, 0);
    }
    if rows == 0 || scale == 0.0 {
        return Matrix::identity(cols, cols);
    }
    // Pad with zero rows so the SVD yields a full cols × cols right basis.
    let padded = if rows < cols {
        let mut p = Matrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("svd computed with v_t");
    let cutoff = tol.rank_rel * scale * dim as f64;
    let null_rows: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cutoff)
        .map(|(i, _)| i)
        .collect();
    let mut basis = Matrix::zeros(cols, null_rows.len());
    for (j, &i) in null_rows.iter().enumerate() {
        basis.set_column(j, &v_t.row(i).transpose());
    }
    basis
}

/// Orthonormal basis of `ker(Aⁿ)` together with the nilpotency index `ν`,
/// the smallest integer with `ker(A^ν) = ker(A^{ν+1})`.
///
/// The chain is grown one step at a time: `ker(A^{k+1}) = ker(Cₖᵀ A)` where
/// `Cₖ` spans the orthogonal complement of `ker(A^k)`. Every step is a
/// kernel computation on a matrix of the same scale as `A`, so round-off in
/// high powers never enters the rank decisions.
pub fn nilpotent_eigenspace(a: &Matrix, tol: &Tolerance) -> Result<(Matrix, usize)> {
    nilpotent_eigenspace_scaled(a, spectral_norm(a), tol)
}

/// [`nilpotent_eigenspace`] with rank decisions taken relative to `scale`
/// instead of `‖a‖`. Needed when `a` is a difference of much larger terms
/// and may be zero up to round-off.
pub fn nilpotent_eigenspace_scaled(
    a: &Matrix,
    scale: f64,
    tol: &Tolerance,
) -> Result<(Matrix, usize)> {
    ensure_square(a, "A")?;
    ensure_finite(a, "A")?;
    let n = a.nrows();
    let mut basis = Matrix::zeros(n, 0);
    for k in 0..=n {
        let complement = orthonormal_complement(&basis, tol)?;
        let restricted = complement.transpose() * a;
        let next = kernel_basis_scaled(&restricted, scale, n, tol);
        if next.ncols() == basis.ncols() {
            return Ok((basis, k));
        }
        basis = next;
    }
    Err(Error::Internal(
        "kernel chain failed to stabilise within n steps".into(),
    ))
}

/// Algebraic multiplicity of the eigenvalue at the origin, computed as
/// `dim ker(Aⁿ)`.
pub fn zero_multiplicity(a: &Matrix, tol: &Tolerance) -> Result<usize> {
    Ok(nilpotent_eigenspace(a, tol)?.0.ncols())
}

/// [`zero_multiplicity`] relative to an external scale.
pub fn zero_multiplicity_scaled(a: &Matrix, scale: f64, tol: &Tolerance) -> Result<usize> {
    Ok(nilpotent_eigenspace_scaled(a, scale, tol)?.0.ncols())
}

/// Eigenvalues of a general square matrix through a bounded real Schur
/// iteration on the normalised matrix.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>> {
    ensure_square(a, "A")?;
    ensure_finite(a, "A")?;
    let n = a.nrows();
    let scale = a.amax();
    if n == 0 || scale == 0.0 {
        return Ok(vec![Complex::new(0.0, 0.0); n]);
    }
    let schur = (a / scale)
        .try_schur(f64::EPSILON, 1000 * n)
        .ok_or_else(|| Error::Conditioning("eigenvalue iteration did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z * scale)
        .collect())
}

/// Counts eigenvalues of modulus at most `rank_rel * (1 + spectral radius)`.
///
/// Only reliable when the zero eigenvalue is semisimple or exactly
/// represented; [`zero_multiplicity`] is the robust alternative.
pub fn zero_eigenvalue_count(a: &Matrix, tol: &Tolerance) -> Result<usize> {
    ensure_square(a, "A")?;
    if a.is_empty() {
        return Ok(0);
    }
    let eig = eigenvalues(a)?;
    let radius = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cutoff = tol.rank_rel * (1.0 + radius);
    Ok(eig.iter().filter(|z| z.norm() <= cutoff).count())
}

/// Counts of positive, zero and negative eigenvalues of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    pub positive: usize,
    pub zero: usize,
    pub negative: usize,
}

/// Inertia with cutoff `rank_rel * max|λ|`.
pub fn inertia(m: &Matrix, tol: &Tolerance) -> Result<Inertia> {
    ensure_square(m, "inertia argument")?;
    ensure_finite(m, "inertia argument")?;
    let asym = asymmetry(m);
    if asym > tol.residual_threshold(m.norm()) {
        return Err(Error::Asymmetric {
            what: "inertia argument".into(),
            asymmetry: asym,
        });
    }
    if m.is_empty() {
        return Ok(Inertia {
            positive: 0,
            zero: 0,
            negative: 0,
        });
    }
    let eig = symmetrize(m).symmetric_eigenvalues();
    let cutoff = tol.rank_rel * eig.amax();
    let mut out = Inertia {
        positive: 0,
        zero: 0,
        negative: 0,
    };
    for &l in eig.iter() {
        if l > cutoff {
            out.positive += 1;
        } else if l < -cutoff {
            out.negative += 1;
        } else {
            out.zero += 1;
        }
    }
    Ok(out)
}

/// Orthonormal `U_c` with `[U U_c]` orthogonal.
pub fn orthonormal_complement(u: &Matrix, tol: &Tolerance) -> Result<Matrix> {
    let (n, k) = u.shape();
    if k > n {
        return Err(Error::InvalidInput(format!(
            "basis has {k} columns in dimension {n}"
        )));
    }
    if k == 0 {
        return Ok(Matrix::identity(n, n));
    }
    let gram_err = (u.transpose() * u - Matrix::identity(k, k)).norm();
    if gram_err > tol.residual_rel * (1.0 + k as f64) {
        return Err(Error::NotOrthonormal(gram_err));
    }
    let ut = u.transpose();
    let comp = kernel_basis_scaled(&ut, 1.0, n, tol);
    if comp.ncols() != n - k {
        return Err(Error::Internal(format!(
            "complement has {} columns, expected {}",
            comp.ncols(),
            n - k
        )));
    }
    Ok(comp)
}

/// Distance `‖P₁ − P₂‖₂` between the orthogonal projectors onto the column
/// spaces of two orthonormal bases; 1 when the dimensions differ.
pub fn subspace_distance(u1: &Matrix, u2: &Matrix) -> f64 {
    if u1.ncols() != u2.ncols() || u1.nrows() != u2.nrows() {
        return 1.0;
    }
    let p1 = u1 * u1.transpose();
    let p2 = u2 * u2.transpose();
    spectral_norm(&(p1 - p2))
}

/// `Mᵏ` by repeated squaring.
pub fn matrix_power(m: &Matrix, mut k: usize) -> Matrix {
    let n = m.nrows();
    let mut result = Matrix::identity(n, n);
    let mut base = m.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Positive semidefinite to tolerance: symmetric and no eigenvalue below
/// `−rank_rel * max|λ|`.
pub fn is_psd(m: &Matrix, tol: &Tolerance) -> bool {
    matches!(inertia(m, tol), Ok(i) if i.negative == 0)
}

/// Determinant of a complex matrix via pivoted LU.
pub fn complex_determinant(m: &DMatrix<Complex<f64>>) -> Complex<f64> {
    if m.is_empty() {
        return Complex::new(1.0, 0.0);
    }
    m.clone().determinant()
}

/// Ratio of smallest to largest singular value (0 for singular or empty).
pub fn reciprocal_condition(m: &Matrix) -> f64 {
    let sv = singular_values(m);
    if sv.is_empty() {
        return 1.0;
    }
    let max = sv.max();
    if max == 0.0 {
        0.0
    } else {
        sv.min() / max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerance {
        Tolerance::default()
    }

    #[test]
    fn pinv_identity_and_diagonal() {
        let i2 = Matrix::identity(2, 2);
        assert!((pinv(&i2, &tol()).unwrap() - &i2).norm() < 1e-15);
        let d = Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let expected = Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        assert!((pinv(&d, &tol()).unwrap() - expected).norm() < 1e-15);
    }

    #[test]
    fn pinv_column_of_ones() {
        let m = Matrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let p = pinv(&m, &tol()).unwrap();
        assert_eq!(p.shape(), (1, 2));
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15 && (p[(0, 1)] - 0.5).abs() < 1e-15);
        // Penrose conditions by direct multiplication.
        assert!((&m * &p * &m - &m).norm() < 1e-15);
        assert!((&p * &m * &p - &p).norm() < 1e-15);
        assert!(asymmetry(&(&m * &p)) < 1e-15);
        assert!(asymmetry(&(&p * &m)) < 1e-15);
    }

    #[test]
    fn pinv_rejects_nan() {
        let m = Matrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(pinv(&m, &tol()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn pinv_empty() {
        let m = Matrix::zeros(0, 3);
        assert_eq!(pinv(&m, &tol()).unwrap().shape(), (3, 0));
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(
            kernel_basis(&Matrix::identity(2, 2), &tol())
                .unwrap()
                .ncols(),
            0
        );

        let z = Matrix::zeros(1, 2);
        let k = kernel_basis(&z, &tol()).unwrap();
        assert_eq!(k.shape(), (2, 2));
        assert!((k.transpose() * &k - Matrix::identity(2, 2)).norm() < 1e-14);

        let m = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let k = kernel_basis(&m, &tol()).unwrap();
        assert_eq!(k.ncols(), 1);
        assert!((&m * &k).norm() < 1e-15);
        assert!((k.norm() - 1.0).abs() < 1e-15);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((k[(0, 0)].abs() - s).abs() < 1e-15);
        assert!((k[(0, 0)] + k[(1, 0)]).abs() < 1e-15);
    }

    #[test]
    fn nilpotent_eigenspace_examples() {
        let (u, nu) = nilpotent_eigenspace(&Matrix::zeros(2, 2), &tol()).unwrap();
        assert_eq!((u.ncols(), nu), (2, 1));

        let (u, nu) = nilpotent_eigenspace(&Matrix::identity(3, 3), &tol()).unwrap();
        assert_eq!((u.ncols(), nu), (0, 0));

        let a = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0]);
        let (u, nu) = nilpotent_eigenspace(&a, &tol()).unwrap();
        assert_eq!((u.ncols(), nu), (2, 2));
        // span{e1, e2}: third component vanishes
        assert!(u.row(2).norm() < 1e-14);
        assert!((matrix_power(&a, 2) * &u).norm() < 1e-14);
    }

    #[test]
    fn nilpotent_eigenspace_rejects_rectangular() {
        assert!(matches!(
            nilpotent_eigenspace(&Matrix::zeros(2, 3), &tol()),
            Err(Error::NotSquare(_))
        ));
    }

    #[test]
    fn nilpotent_eigenspace_of_rotated_jordan_block() {
        // A Jordan block of size 4 hidden by an orthogonal rotation: powers
        // are computed implicitly, so the tiny entries of A⁴ never matter.
        let mut j = Matrix::zeros(5, 5);
        for i in 0..3 {
            j[(i, i + 1)] = 1.0 + i as f64 * 0.1;
        }
        j[(4, 4)] = 0.7;
        let q = Matrix::from_fn(5, 5, |i, k| ((i * 5 + k) as f64 * 0.37).sin())
            .qr()
            .q();
        let a = q.transpose() * j * &q;
        let (u, nu) = nilpotent_eigenspace(&a, &tol()).unwrap();
        assert_eq!((u.ncols(), nu), (4, 4));
        assert!((matrix_power(&a, 4) * &u).norm() < 1e-12);
    }

    #[test]
    fn inertia_examples() {
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 0.0, -1.0]));
        assert_eq!(
            inertia(&d, &tol()).unwrap(),
            Inertia {
                positive: 1,
                zero: 1,
                negative: 1
            }
        );
        assert_eq!(
            inertia(&Matrix::identity(4, 4), &tol()).unwrap(),
            Inertia {
                positive: 4,
                zero: 0,
                negative: 0
            }
        );
        let ones = Matrix::from_element(2, 2, 1.0);
        assert_eq!(
            inertia(&ones, &tol()).unwrap(),
            Inertia {
                positive: 1,
                zero: 1,
                negative: 0
            }
        );
    }

    #[test]
    fn inertia_rejects_asymmetric() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(matches!(inertia(&m, &tol()), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn complement_examples() {
        let e1 = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let c = orthonormal_complement(&e1, &tol()).unwrap();
        assert_eq!(c.ncols(), 1);
        assert!(c[(0, 0)].abs() < 1e-15 && (c[(1, 0)].abs() - 1.0).abs() < 1e-15);

        let empty = Matrix::zeros(2, 0);
        let c = orthonormal_complement(&empty, &tol()).unwrap();
        assert!((c.transpose() * &c - Matrix::identity(2, 2)).norm() < 1e-15);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u = Matrix::from_column_slice(3, 1, &[s, s, 0.0]);
        let c = orthonormal_complement(&u, &tol()).unwrap();
        let mut t = Matrix::zeros(3, 3);
        t.set_column(0, &u.column(0));
        t.view_mut((0, 1), (3, 2)).copy_from(&c);
        assert!((t.transpose() * &t - Matrix::identity(3, 3)).norm() < 1e-14);
    }

    #[test]
    fn complement_rejects_non_orthonormal() {
        let u = Matrix::from_column_slice(2, 1, &[2.0, 0.0]);
        assert!(matches!(
            orthonormal_complement(&u, &tol()),
            Err(Error::NotOrthonormal(_))
        ));
    }

    #[test]
    fn matrix_power_matches_repeated_product() {
        let m = Matrix::from_row_slice(2, 2, &[0.5, 1.0, -0.3, 0.9]);
        let mut direct = Matrix::identity(2, 2);
        for k in 0..7 {
            assert!((matrix_power(&m, k) - &direct).norm() < 1e-14);
            direct = &direct * &m;
        }
    }

    #[test]
    fn eigenvalues_of_zero_and_rotation() {
        assert_eq!(
            eigenvalues(&Matrix::zeros(3, 3)).unwrap(),
            vec![Complex::new(0.0, 0.0); 3]
        );
        let rot = Matrix::from_row_slice(2, 2, &[0.0, -2.0, 2.0, 0.0]);
        let eig = eigenvalues(&rot).unwrap();
        assert!(eig
            .iter()
            .all(|z| (z.norm() - 2.0).abs() < 1e-14 && z.re.abs() < 1e-14));
    }

    #[test]
    fn zero_eigenvalue_count_on_triangular() {
        let a = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 3.0, 0.0, 0.0, 2.0, 0.0, 0.0, 1.5]);
        assert_eq!(zero_eigenvalue_count(&a, &tol()).unwrap(), 2);
        assert_eq!(zero_multiplicity(&a, &tol()).unwrap(), 2);
    }

    #[test]
    fn tolerance_validation() {
        assert!(Tolerance::new(0.0, 1.0, 1.0).is_err());
        assert!(Tolerance::new(1e-10, 1e-9, 1e-8).is_ok());
    }
}
