//! Four-step filter for nonlinear continuous-discrete plants
//!
//! ```text
//! x'(t) = f(x, u, t) + E(t) d + G(t) w
//! y_k   = h(x_k, k) + v_k
//! ```
//!
//! The state is propagated by integrating `f` (Euler or RK4); the covariance
//! uses the Euler rule with the second-order `F P F^T dt` term retained, and
//! the gain equations are the linearised four-step ones.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dims, Error, Result};
use crate::linalg::{is_finite, symmetrize};
use crate::model::{Dims, DiscretizedModel, StepMatrix, SystemModel, TimeMatrix};
use crate::r4skf::{
    correct_covariance, extraction_matrix, kalman_gain, stability_matrices,
    unknown_input_error_cov, FilterState, GainPolicy, StepReport,
};
use crate::scalar::{cast, Real};

pub type DriftFn<T> = Arc<dyn Fn(&DVector<T>, &DVector<T>, T) -> DVector<T> + Send + Sync>;
pub type DriftJacobian<T> = Arc<dyn Fn(&DVector<T>, &DVector<T>, T) -> DMatrix<T> + Send + Sync>;
pub type OutputFn<T> = Arc<dyn Fn(&DVector<T>, usize) -> DVector<T> + Send + Sync>;
pub type OutputJacobian<T> = Arc<dyn Fn(&DVector<T>, usize) -> DMatrix<T> + Send + Sync>;

/// Relative step for central differences: `h_i = 1e-6 (1 + |x_i|)`.
pub const FD_STEP: f64 = 1e-6;

#[derive(Clone)]
pub struct NonlinearModel<T: Real> {
    f: DriftFn<T>,
    h: OutputFn<T>,
    f_jac: Option<DriftJacobian<T>>,
    h_jac: Option<OutputJacobian<T>>,
    e: TimeMatrix<T>,
    g: TimeMatrix<T>,
    q: TimeMatrix<T>,
    r: StepMatrix<T>,
    dims: Dims,
    dt: T,
}

impl<T: Real> fmt::Debug for NonlinearModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearModel")
            .field("dims", &self.dims)
            .field("dt", &self.dt)
            .field("analytic_state_jacobian", &self.f_jac.is_some())
            .field("analytic_output_jacobian", &self.h_jac.is_some())
            .finish_non_exhaustive()
    }
}

impl<T: Real> NonlinearModel<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dims: Dims,
        dt: T,
        f: DriftFn<T>,
        h: OutputFn<T>,
        e: TimeMatrix<T>,
        g: TimeMatrix<T>,
        q: TimeMatrix<T>,
        r: StepMatrix<T>,
    ) -> Self {
        Self {
            f,
            h,
            f_jac: None,
            h_jac: None,
            e,
            g,
            q,
            r,
            dims,
            dt,
        }
    }

    pub fn with_state_jacobian(mut self, jac: DriftJacobian<T>) -> Self {
        self.f_jac = Some(jac);
        self
    }

    pub fn with_output_jacobian(mut self, jac: OutputJacobian<T>) -> Self {
        self.h_jac = Some(jac);
        self
    }

    /// Wraps a linear model: `f = A x + B u`, `h = C_k x`, analytic Jacobians.
    pub fn from_linear(model: &SystemModel<T>) -> Self {
        let m = model.clone();
        let f: DriftFn<T> = Arc::new(move |x, u, t| m.a(t) * x + m.b(t) * u);
        let m = model.clone();
        let h: OutputFn<T> = Arc::new(move |x, k| m.c(k) * x);
        let m = model.clone();
        let f_jac: DriftJacobian<T> = Arc::new(move |_, _, t| m.a(t));
        let m = model.clone();
        let h_jac: OutputJacobian<T> = Arc::new(move |_, k| m.c(k));
        let (m1, m2, m3, m4) = (model.clone(), model.clone(), model.clone(), model.clone());
        Self::new(
            model.dims(),
            model.dt(),
            f,
            h,
            Arc::new(move |t| m1.e(t)),
            Arc::new(move |t| m2.g(t)),
            Arc::new(move |t| m3.q(t)),
            Arc::new(move |k| m4.r(k)),
        )
        .with_state_jacobian(f_jac)
        .with_output_jacobian(h_jac)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn dt(&self) -> T {
        self.dt
    }
    pub fn drift(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> DVector<T> {
        (self.f)(x, u, t)
    }
    pub fn output(&self, x: &DVector<T>, k: usize) -> DVector<T> {
        (self.h)(x, k)
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
    pub fn r(&self, k: usize) -> DMatrix<T> {
        (self.r)(k)
    }
    pub fn step_start(&self, k: usize) -> T {
        T::from_usize(k.saturating_sub(1)).expect("step index fits") * self.dt
    }

    /// `∂f/∂x`, analytic if supplied, central differences otherwise.
    pub fn state_jacobian(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> DMatrix<T> {
        match &self.f_jac {
            Some(j) => j(x, u, t),
            None => self.numeric_state_jacobian(x, u, t),
        }
    }

    /// `∂h/∂x`, analytic if supplied, central differences otherwise.
    pub fn output_jacobian(&self, x: &DVector<T>, k: usize) -> DMatrix<T> {
        match &self.h_jac {
            Some(j) => j(x, k),
            None => self.numeric_output_jacobian(x, k),
        }
    }

    pub fn numeric_state_jacobian(&self, x: &DVector<T>, u: &DVector<T>, t: T) -> DMatrix<T> {
        central_difference(x, |p| self.drift(p, u, t))
    }

    pub fn numeric_output_jacobian(&self, x: &DVector<T>, k: usize) -> DMatrix<T> {
        central_difference(x, |p| self.output(p, k))
    }
}

fn central_difference<T: Real>(
    x: &DVector<T>,
    func: impl Fn(&DVector<T>) -> DVector<T>,
) -> DMatrix<T> {
    let n = x.len();
    let rows = func(x).len();
    let two = cast::<T>(2.0);
    let mut jac = DMatrix::zeros(rows, n);
    let mut probe = x.clone();
    for i in 0..n {
        let h = cast::<T>(FD_STEP) * (T::one() + x[i].abs());
        probe[i] = x[i] + h;
        let plus = func(&probe);
        probe[i] = x[i] - h;
        let minus = func(&probe);
        probe[i] = x[i];
        jac.set_column(i, &((plus - minus) / (two * h)));
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    #[default]
    Euler,
    Rk4,
}

/// Integrates `x' = f(x, u, t) + E(t) d̂` over one sample period from `t`,
/// holding `u` and `d̂` constant.
pub fn propagate_state<T: Real>(
    x: &DVector<T>,
    u: &DVector<T>,
    d_hat: &DVector<T>,
    t: T,
    model: &NonlinearModel<T>,
    method: Integrator,
) -> Result<DVector<T>> {
    check_dims("propagate_state: x", (model.dims.n_x, 1), x.shape())?;
    check_dims("propagate_state: d̂", (model.dims.n_d, 1), d_hat.shape())?;
    let dt = model.dt;
    let rhs = |xs: &DVector<T>, ts: T| model.drift(xs, u, ts) + model.e(ts) * d_hat;
    let next = match method {
        Integrator::Euler => x + rhs(x, t) * dt,
        Integrator::Rk4 => {
            let half = cast::<T>(0.5) * dt;
            let k1 = rhs(x, t);
            let k2 = rhs(&(x + &k1 * half), t + half);
            let k3 = rhs(&(x + &k2 * half), t + half);
            let k4 = rhs(&(x + &k3 * dt), t + dt);
            let sixth = dt / cast::<T>(6.0);
            x + (k1 + (k2 + k3) * cast::<T>(2.0) + k4) * sixth
        }
    };
    if !is_finite(&next) {
        return Err(Error::NonFinite {
            context: "state propagation",
            step: 0,
        });
    }
    Ok(next)
}

/// `P⁺ = P + [F P + P F^T + F P F^T dt + G Q G^T] dt`, symmetrised.
pub fn propagate_covariance<T: Real>(
    p: &DMatrix<T>,
    f: &DMatrix<T>,
    g: &DMatrix<T>,
    q: &DMatrix<T>,
    dt: T,
) -> DMatrix<T> {
    let fp = f * p;
    let mut next = p + (&fp + fp.transpose() + &fp * f.transpose() * dt + g * q * g.transpose()) * dt;
    symmetrize(&mut next);
    next
}

/// Four-step filter on a [`NonlinearModel`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CdFilter<T: Real> {
    pub integrator: Integrator,
    pub gain: GainPolicy<T>,
}

impl<T: Real> CdFilter<T> {
    pub fn new(integrator: Integrator) -> Self {
        Self {
            integrator,
            gain: GainPolicy::Optimal,
        }
    }

    /// One step. The linearisation point for `F` is `x̂_{k-1|k-1}`; `H` is
    /// evaluated at the input-free prediction `x*`.
    pub fn step(
        &self,
        state: &FilterState<T>,
        u: &DVector<T>,
        y: &DVector<T>,
        model: &NonlinearModel<T>,
    ) -> Result<(FilterState<T>, StepReport<T>)> {
        let dims = model.dims();
        check_dims("cd step: y", (dims.n_y, 1), y.shape())?;
        let k = state.k + 1;
        let t_prev = model.step_start(k);
        let dt = model.dt();

        let f_jac = model.state_jacobian(&state.x_hat, u, t_prev);
        let g = model.g(t_prev);
        let dm = DiscretizedModel {
            a_d: DMatrix::identity(dims.n_x, dims.n_x) + &f_jac * dt,
            b_d: DMatrix::zeros(dims.n_x, dims.n_u),
            e_d: model.e(t_prev) * dt,
            g_d: &g * dt,
            t: t_prev,
            dt,
        };
        let q = model.q(t_prev);
        let r = model.r(k);

        let zero_d = DVector::zeros(dims.n_d);
        let x_star = propagate_state(&state.x_hat, u, &zero_d, t_prev, model, self.integrator)
            .map_err(|e| with_step(e, k))?;
        let h_jac = model.output_jacobian(&x_star, k);
        let f_d = extraction_matrix(&h_jac, &dm.e_d)?;
        let gamma = y - model.output(&x_star, k);
        let d_hat = &f_d * &gamma;
        let p_d = unknown_input_error_cov(&state.p, &dm, &h_jac, &q, &r, &f_d);

        let x_pred = propagate_state(&state.x_hat, u, &d_hat, t_prev, model, self.integrator)
            .map_err(|e| with_step(e, k))?;

        let p_pred = propagate_covariance(&state.p, &f_jac, &g, &q, dt);
        let k_gain = match &self.gain {
            GainPolicy::Optimal => kalman_gain(&p_pred, &h_jac, &r)?,
            GainPolicy::Fixed(gain) => {
                check_dims("fixed gain K", (dims.n_x, dims.n_y), gain.shape())?;
                gain.clone()
            }
        };
        let gc = correct_covariance(p_pred, k_gain, &h_jac, &r, &dm.e_d, &f_d);
        let x_hat = &x_pred + &gc.k * (y - model.output(&x_pred, k));
        if !is_finite(&x_hat) {
            return Err(Error::NonFinite {
                context: "state estimate",
                step: k,
            });
        }
        let sm = stability_matrices(&dm, &h_jac, &f_d, &gc.k);

        let next = FilterState {
            x_hat,
            p: gc.p_post,
            d_hat: d_hat.clone(),
            p_d,
            gamma,
            k,
        };
        let report = StepReport {
            x_star,
            x_pred,
            d_hat,
            f_d,
            k_gain: gc.k,
            l_gain: gc.l,
            p_pred: gc.p_pred,
            a_bar: sm.a_bar,
            a_tilde: sm.a_tilde,
        };
        Ok((next, report))
    }
}

fn with_step(err: Error, step: usize) -> Error {
    match err {
        Error::NonFinite { context, .. } => Error::NonFinite { context, step },
        other => other,
    }
}
