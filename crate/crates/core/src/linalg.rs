//! Dense linear-algebra kernels used by the filters.
//!
//! Eigen and Cholesky factorisations come from `nalgebra`. The SVD is a
//! one-sided Jacobi iteration: nalgebra's bidiagonal SVD can return a wrong
//! factorisation for exactly rank-deficient inputs, which the pseudo-inverse
//! cannot tolerate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{cast, to_f64, Real};

/// Relative singular-value cutoff used for ranks and pseudo-inverses.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Innovation covariances with a smaller reciprocal condition number are rejected.
pub const MIN_RCOND: f64 = 1e-14;

/// Thin SVD `m = U diag(sigma) V^T` with `k = min(rows, cols)` columns in
/// `U` and `V`. Singular values are not sorted.
pub struct Svd<T: Real> {
    pub u: DMatrix<T>,
    pub sigma: DVector<T>,
    pub v: DMatrix<T>,
}

const JACOBI_MAX_SWEEPS: usize = 60;

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd<T: Real>(m: &DMatrix<T>) -> Svd<T> {
    if m.nrows() < m.ncols() {
        let t = svd(&m.transpose());
        return Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }
    let n = m.ncols();
    let mut a = m.clone();
    let mut v = DMatrix::identity(n, n);
    let eps = T::default_epsilon();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for i in 0..mat.nrows() {
                        let (xp, xq) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * xp - s * xq;
                        mat[(i, q)] = s * xp + c * xq;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma = DVector::from_fn(n, |j, _| a.column(j).norm());
    for j in 0..n {
        if sigma[j] > T::zero() {
            let inv = T::one() / sigma[j];
            a.column_mut(j).scale_mut(inv);
        }
    }
    Svd { u: a, sigma, v }
}

pub fn singular_values<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    svd(m).sigma
}

/// Moore-Penrose pseudo-inverse through the SVD.
///
/// Singular values below `tol * sigma_max` are treated as zero, so the result
/// is total: the zero matrix maps to the (transposed) zero matrix.
pub fn moore_penrose_pinv<T: Real>(m: &DMatrix<T>, tol: T) -> DMatrix<T> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let Svd { u, sigma, v } = svd(m);
    let cutoff = tol * sigma.max();

    let mut out = DMatrix::zeros(cols, rows);
    for (i, &s) in sigma.iter().enumerate() {
        if s > cutoff && s > T::zero() {
            // out += v_i * (1/s) * u_i^T
            out.ger(T::one() / s, &v.column(i), &u.column(i), T::one());
        }
    }
    out
}

/// Number of singular values above `tol * sigma_max`.
pub fn numerical_rank<T: Real>(m: &DMatrix<T>, tol: T) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = singular_values(m);
    let sigma_max = sv.max();
    if sigma_max <= T::zero() {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * sigma_max).count()
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> T {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    if m.is_empty() {
        return T::zero();
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| (z.re * z.re + z.im * z.im).sqrt())
        .fold(T::zero(), |acc, r| if r > acc { r } else { acc })
}

/// Replaces `m` by `(m + m^T) / 2`.
pub fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let half = cast::<T>(0.5);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn symmetric_eigenvalues<T: Real>(m: &DMatrix<T>) -> DVector<T> {
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues()
}

pub fn min_symmetric_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    symmetric_eigenvalues(m).min()
}

/// Returns `S` such that `S * S^T = m` for a symmetric PSD `m`.
///
/// Negative eigenvalues from rounding are clipped to zero, so singular and
/// zero covariances are accepted.
pub fn psd_sqrt<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = s.symmetric_eigen();
    let mut factor = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let scale = if lambda > T::zero() {
            lambda.sqrt()
        } else {
            T::zero()
        };
        factor.column_mut(j).scale_mut(scale);
    }
    factor
}

/// Solves `X * s = rhs` for symmetric positive-definite `s`.
///
/// Fails with [`Error::SingularInnovation`] when the reciprocal condition
/// number of `s` is below [`MIN_RCOND`] or the Cholesky factorisation breaks
/// down.
pub fn spd_solve_right<T: Real>(rhs: &DMatrix<T>, s: &DMatrix<T>) -> Result<DMatrix<T>> {
    let eig = symmetric_eigenvalues(s);
    let (lo, hi) = (eig.min(), eig.max());
    let rcond = if hi > T::zero() { lo / hi } else { T::zero() };
    if !(rcond >= cast(MIN_RCOND)) {
        return Err(Error::SingularInnovation {
            rcond: to_f64(rcond),
        });
    }
    let mut sym = s.clone();
    symmetrize(&mut sym);
    let chol = sym.cholesky().ok_or(Error::SingularInnovation {
        rcond: to_f64(rcond),
    })?;
    // X s = rhs  <=>  s X^T = rhs^T
    Ok(chol.solve(&rhs.transpose()).transpose())
}

/// Block-diagonal concatenation.
pub fn block_diag<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

pub fn is_finite<T: Real>(v: &DVector<T>) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pinv_of_identity_and_diagonal() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(moore_penrose_pinv(&i, 1e-10), i, epsilon = 1e-14);

        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let expected = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        assert_relative_eq!(moore_penrose_pinv(&d, 1e-10), expected, epsilon = 1e-14);
    }

    #[test]
    fn pinv_of_zero_and_empty() {
        let z = DMatrix::<f64>::zeros(3, 2);
        assert_eq!(moore_penrose_pinv(&z, 1e-10), DMatrix::zeros(2, 3));
        let e = DMatrix::<f64>::zeros(0, 2);
        assert_eq!(moore_penrose_pinv(&e, 1e-10).shape(), (2, 0));
    }

    #[test]
    #[allow(clippy::excessive_precision)]
    fn svd_reconstructs_duplicated_column() {
        // nalgebra's bidiagonal SVD returns a residual of ~0.1 on this matrix.
        let m = DMatrix::from_row_slice(
            4,
            3,
            &[
                4.39513222669789094, 7.84810275687778258, 4.39513222669789094,
                -3.84620999823233500, 9.92100154336972295, -3.84620999823233500,
                4.39932588847494088, 5.26110094989282828, 4.39932588847494088,
                -7.54642417689150857, 2.64954873808734703, -7.54642417689150857,
            ],
        );
        for a in [m.clone(), m.transpose()] {
            let Svd { u, sigma, v } = svd(&a);
            let rec = &u * DMatrix::from_diagonal(&sigma) * v.transpose();
            assert!((rec - &a).norm() <= 1e-13 * a.norm());
            let p = moore_penrose_pinv(&a, 1e-10);
            assert!((&a * &p * &a - &a).norm() <= 1e-13 * a.norm());
            assert_eq!(numerical_rank(&a, 1e-10), 2);
        }
    }

    #[test]
    fn rank_counts_relative_to_largest_singular_value() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-12]);
        assert_eq!(numerical_rank(&m, 1e-10), 1);
        assert_eq!(numerical_rank(&m, 1e-13), 2);
        assert_eq!(numerical_rank(&DMatrix::<f64>::zeros(2, 2), 1e-10), 0);
    }

    #[test]
    fn spectral_radius_of_rotation_and_nilpotent() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert_relative_eq!(spectral_radius(&rot), 0.5, epsilon = 1e-12);
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(spectral_radius(&nil) < 1e-12);
    }

    #[test]
    fn psd_sqrt_reconstructs_singular_covariance() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 1.0]);
        let s = psd_sqrt(&m);
        assert_relative_eq!(&s * s.transpose(), m, epsilon = 1e-12);
    }

    #[test]
    fn spd_solve_rejects_singular() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let rhs = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            spd_solve_right(&rhs, &s),
            Err(Error::SingularInnovation { .. })
        ));
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = spd_solve_right(&rhs, &s).unwrap();
        assert_relative_eq!(x, DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25]));
    }
}
