//! Continuous-discrete linear plant with unknown inputs.
//!
//! ```text
//! x'(t) = A(t) x + B(t) u + E(t) d + G(t) w,   w ~ N(0, Q(t))
//! y_k   = C_k x_k + v_k,                        v_k ~ N(0, R_k)
//! ```
//!
//! Matrices are supplied as callbacks so time-varying plants are supported;
//! [`SystemModel::constant`] wraps fixed matrices.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{check_dims, Error, Result};
use crate::linalg::{min_symmetric_eigenvalue, numerical_rank};
use crate::scalar::{cast, from_usize, Real};

pub use crate::linalg::{moore_penrose_pinv, DEFAULT_RANK_TOL};

/// Default sample period in seconds.
pub const DEFAULT_DT: f64 = 0.01;

pub type TimeMatrix<T> = Arc<dyn Fn(T) -> DMatrix<T> + Send + Sync>;
pub type StepMatrix<T> = Arc<dyn Fn(usize) -> DMatrix<T> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_d: usize,
    pub n_y: usize,
    pub n_w: usize,
}

/// Fixed matrices of a time-invariant plant.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantMatrices<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub e: DMatrix<T>,
    pub g: DMatrix<T>,
    pub c: DMatrix<T>,
    pub q: DMatrix<T>,
    pub r: DMatrix<T>,
}

#[derive(Clone)]
pub struct SystemModel<T: Real> {
    a: TimeMatrix<T>,
    b: TimeMatrix<T>,
    e: TimeMatrix<T>,
    g: TimeMatrix<T>,
    q: TimeMatrix<T>,
    c: StepMatrix<T>,
    r: StepMatrix<T>,
    dims: Dims,
    dt: T,
    constant: bool,
}

impl<T: Real> fmt::Debug for SystemModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemModel")
            .field("dims", &self.dims)
            .field("dt", &self.dt)
            .field("constant", &self.constant)
            .finish_non_exhaustive()
    }
}

fn constant_fn<T: Real>(m: DMatrix<T>) -> TimeMatrix<T> {
    Arc::new(move |_| m.clone())
}

fn constant_step<T: Real>(m: DMatrix<T>) -> StepMatrix<T> {
    Arc::new(move |_| m.clone())
}

impl<T: Real> SystemModel<T> {
    /// Builds a time-invariant model and validates it.
    pub fn constant(m: ConstantMatrices<T>, dt: T) -> Result<Self> {
        let dims = Dims {
            n_x: m.a.nrows(),
            n_u: m.b.ncols(),
            n_d: m.e.ncols(),
            n_y: m.c.nrows(),
            n_w: m.g.ncols(),
        };
        let model = Self {
            a: constant_fn(m.a),
            b: constant_fn(m.b),
            e: constant_fn(m.e),
            g: constant_fn(m.g),
            q: constant_fn(m.q),
            c: constant_step(m.c),
            r: constant_step(m.r),
            dims,
            dt,
            constant: true,
        };
        model.validate()?;
        Ok(model)
    }

    /// Builds a time-varying model from callbacks.
    ///
    /// Validation runs on the matrices at `t = 0` and step `k = 1`; the
    /// filters re-check the rank condition at every step.
    #[allow(clippy::too_many_arguments)]
    pub fn time_varying(
        dims: Dims,
        dt: T,
        a: TimeMatrix<T>,
        b: TimeMatrix<T>,
        e: TimeMatrix<T>,
        g: TimeMatrix<T>,
        q: TimeMatrix<T>,
        c: StepMatrix<T>,
        r: StepMatrix<T>,
    ) -> Result<Self> {
        let model = Self {
            a,
            b,
            e,
            g,
            q,
            c,
            r,
            dims,
            dt,
            constant: false,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let Dims {
            n_x,
            n_u,
            n_d,
            n_y,
            n_w,
        } = self.dims;
        if n_x == 0 || n_u == 0 || n_d == 0 || n_y == 0 || n_w == 0 {
            return Err(Error::InvalidModel(format!(
                "all dimensions must be positive, got {:?}",
                self.dims
            )));
        }
        if !(self.dt > T::zero()) {
            return Err(Error::InvalidModel("sample period must be positive".into()));
        }
        if n_d > n_y {
            return Err(Error::InvalidModel(format!(
                "rank condition cannot hold: {n_d} unknown inputs but only {n_y} outputs"
            )));
        }
        let t0 = T::zero();
        check_dims("A", (n_x, n_x), self.a(t0).shape())?;
        check_dims("B", (n_x, n_u), self.b(t0).shape())?;
        check_dims("E", (n_x, n_d), self.e(t0).shape())?;
        check_dims("G", (n_x, n_w), self.g(t0).shape())?;
        check_dims("Q", (n_w, n_w), self.q(t0).shape())?;
        check_dims("C", (n_y, n_x), self.c(1).shape())?;
        check_dims("R", (n_y, n_y), self.r(1).shape())?;

        let sym_tol = cast::<T>(1e-12);
        let q = self.q(t0);
        let r = self.r(1);
        if !is_symmetric(&q, sym_tol) {
            return Err(Error::InvalidModel("Q must be symmetric".into()));
        }
        if !is_symmetric(&r, sym_tol) {
            return Err(Error::InvalidModel("R must be symmetric".into()));
        }
        let q_scale = q.amax().max(T::one());
        if min_symmetric_eigenvalue(&q) < -sym_tol * q_scale {
            return Err(Error::InvalidModel("Q must be positive semi-definite".into()));
        }
        if r.clone().cholesky().is_none() {
            return Err(Error::InvalidModel("R must be positive definite".into()));
        }
        let tol = cast(DEFAULT_RANK_TOL);
        if !check_rank_condition(&self.c(1), &self.e(t0), tol)? {
            let ce = self.c(1) * self.e(t0);
            return Err(Error::RankCondition {
                rank_ce: numerical_rank(&ce, tol),
                rank_e: numerical_rank(&self.e(t0), tol),
                required: n_d,
            });
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn is_constant(&self) -> bool {
        self.constant
    }

    /// Start time of step `k`, i.e. `t_{k-1} = (k - 1) * dt`.
    pub fn step_start(&self, k: usize) -> T {
        from_usize::<T>(k.saturating_sub(1)) * self.dt
    }

    pub fn a(&self, t: T) -> DMatrix<T> {
        (self.a)(t)
    }
    pub fn b(&self, t: T) -> DMatrix<T> {
        (self.b)(t)
    }
    pub fn e(&self, t: T) -> DMatrix<T> {
        (self.e)(t)
    }
    pub fn g(&self, t: T) -> DMatrix<T> {
        (self.g)(t)
    }
    pub fn q(&self, t: T) -> DMatrix<T> {
        (self.q)(t)
    }
    pub fn c(&self, k: usize) -> DMatrix<T> {
        (self.c)(k)
    }
    pub fn r(&self, k: usize) -> DMatrix<T> {
        (self.r)(k)
    }

    /// Same plant with `R_k` replaced by `scale * R_k`.
    pub fn with_measurement_noise_scale(&self, scale: T) -> Self {
        let r = self.r.clone();
        Self {
            r: Arc::new(move |k| r(k) * scale),
            ..self.clone()
        }
    }

    /// Same plant with a different sample period.
    pub fn with_dt(&self, dt: T) -> Result<Self> {
        let m = Self {
            dt,
            ..self.clone()
        };
        m.validate()?;
        Ok(m)
    }
}

fn is_symmetric<T: Real>(m: &DMatrix<T>, tol: T) -> bool {
    let scale = m.amax().max(T::one());
    (m - m.transpose()).amax() <= tol * scale
}

/// First-order hold matrices for one sample period starting at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedModel<T: Real> {
    pub a_d: DMatrix<T>,
    pub b_d: DMatrix<T>,
    pub e_d: DMatrix<T>,
    pub g_d: DMatrix<T>,
    pub t: T,
    pub dt: T,
}

impl<T: Real> DiscretizedModel<T> {
    /// Discrete process-noise covariance `G Q G^T dt` (continuous `G`).
    pub fn process_noise(&self, q: &DMatrix<T>) -> DMatrix<T> {
        &self.g_d * q * self.g_d.transpose() / self.dt
    }

    pub fn n_x(&self) -> usize {
        self.a_d.nrows()
    }
}

/// `A_d = I + A dt`, `B_d = B dt`, `E_d = E dt`, `G_d = G dt`, all at `t`.
pub fn discretize<T: Real>(model: &SystemModel<T>, t: T) -> DiscretizedModel<T> {
    let dt = model.dt();
    let n = model.dims().n_x;
    DiscretizedModel {
        a_d: DMatrix::identity(n, n) + model.a(t) * dt,
        b_d: model.b(t) * dt,
        e_d: model.e(t) * dt,
        g_d: model.g(t) * dt,
        t,
        dt,
    }
}

/// True iff `rank(C E) = rank(E) = n_d` numerically.
pub fn check_rank_condition<T: Real>(c: &DMatrix<T>, e: &DMatrix<T>, tol: T) -> Result<bool> {
    if c.ncols() != e.nrows() {
        return Err(Error::DimensionMismatch {
            context: "rank condition (C·E)",
            expected: (c.nrows(), c.ncols()),
            actual: e.shape(),
        });
    }
    let n_d = e.ncols();
    let rank_e = numerical_rank(e, tol);
    let rank_ce = numerical_rank(&(c * e), tol);
    Ok(rank_e == n_d && rank_ce == n_d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::benchmark::benchmark_matrices;
    use approx::assert_relative_eq;

    fn zero_model() -> SystemModel<f64> {
        SystemModel::constant(
            ConstantMatrices {
                a: DMatrix::zeros(2, 2),
                b: DMatrix::zeros(2, 1),
                e: DMatrix::identity(2, 2),
                g: DMatrix::identity(2, 2),
                c: DMatrix::identity(2, 2),
                q: DMatrix::zeros(2, 2),
                r: DMatrix::identity(2, 2),
            },
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn zero_dynamics_discretize_to_identity() {
        let dm = discretize(&zero_model(), 0.0);
        assert_eq!(dm.a_d, DMatrix::identity(2, 2));
        assert_eq!(dm.b_d, DMatrix::zeros(2, 1));
    }

    #[test]
    fn benchmark_plant_discretization_entries() {
        let m = SystemModel::constant(benchmark_matrices::<f64>(1e-7), 0.01).unwrap();
        let dm = discretize(&m, 0.0);
        assert_relative_eq!(dm.a_d[(0, 0)], 1.019527, epsilon = 1e-15);
        assert_relative_eq!(dm.e_d[(0, 0)], 0.00554, epsilon = 1e-15);
        // exact construction, compared bitwise
        let a_d = DMatrix::identity(4, 4) + m.a(0.0) * 0.01;
        assert_eq!(dm.a_d, a_d);
        assert_eq!(dm.e_d, m.e(0.0) * 0.01);
    }

    #[test]
    fn rank_condition_examples() {
        let mats = benchmark_matrices::<f64>(1e-7);
        let i4 = DMatrix::<f64>::identity(4, 4);
        assert!(check_rank_condition(&i4, &mats.b, 1e-10).unwrap());
        assert!(check_rank_condition(&mats.c, &mats.b, 1e-10).unwrap());

        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let e = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(!check_rank_condition(&c, &e, 1e-10).unwrap());

        let bad = DMatrix::<f64>::zeros(3, 3);
        assert!(matches!(
            check_rank_condition(&bad, &e, 1e-10),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn construction_rejects_bad_models() {
        let mut m = benchmark_matrices::<f64>(1e-7);
        m.e = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.0 });
        assert!(matches!(
            SystemModel::constant(m, 0.01),
            Err(Error::InvalidModel(msg)) if msg.contains("rank condition")
        ));

        let mut m = benchmark_matrices::<f64>(1e-7);
        m.r[(0, 0)] = 0.0;
        assert!(SystemModel::constant(m, 0.01).is_err());

        let mut m = benchmark_matrices::<f64>(1e-7);
        m.q[(0, 1)] = 1.0;
        assert!(SystemModel::constant(m, 0.01).is_err());

        let m = benchmark_matrices::<f64>(1e-7);
        assert!(SystemModel::constant(m.clone(), 0.0).is_err());

        let mut bad_c = m;
        bad_c.c = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        bad_c.r = DMatrix::identity(2, 2) * 1e-7;
        assert!(matches!(
            SystemModel::constant(bad_c, 0.01),
            Err(Error::RankCondition { rank_ce: 1, .. })
        ));
    }

    #[test]
    fn noise_scale_and_dt_overrides() {
        let m = SystemModel::constant(benchmark_matrices::<f64>(1e-7), 0.01).unwrap();
        let m3 = m.with_measurement_noise_scale(100.0);
        assert_relative_eq!(m3.r(5)[(1, 1)], 1e-5, max_relative = 1e-12);
        let m2 = m.with_dt(0.005).unwrap();
        assert_eq!(m2.dt(), 0.005);
        assert_eq!(m2.step_start(3), 0.01);
    }
}
