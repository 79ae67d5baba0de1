//! Adaptive augmented Kalman filter.
//!
//! The unknown input is appended to the state as a random walk
//! `d' = w^d`, `w^d ~ N(0, Q^d)`, and a standard Kalman filter runs on the
//! augmented system. `Q^d` is re-estimated every step from the sample
//! covariance of the last few innovations.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::linalg::{
    block_diag, is_finite, min_symmetric_eigenvalue, moore_penrose_pinv, spd_solve_right,
    symmetrize, DEFAULT_RANK_TOL,
};
use crate::model::{discretize, Dims, DiscretizedModel, SystemModel};
use crate::scalar::{cast, from_usize, Real};

/// Which matrix is inspected for negative entries before falling back to
/// the clamped diagonal of the `Q^d` estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativityRule {
    /// Negative diagonal (or any indefiniteness) in the transformed estimate.
    #[default]
    Transformed,
    /// Any negative entry in the corrected innovation covariance `C^γ_0`.
    Innovation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct A2kfConfig<T: Real> {
    /// Number of innovations averaged into `C^γ`.
    pub window: usize,
    /// Lower bound for clamped diagonal entries of `Q^d`.
    pub qd_floor: T,
    /// Initial `Q^d` is `qd_init * I`.
    pub qd_init: T,
    /// Divide the estimate by `dt` before use.
    pub rescale: bool,
    pub negativity: NegativityRule,
    /// When false `Q^d` stays at its initial value.
    pub adapt: bool,
}

impl<T: Real> Default for A2kfConfig<T> {
    fn default() -> Self {
        Self {
            window: 10,
            qd_floor: cast(1e-12),
            qd_init: cast(1e-6),
            rescale: false,
            negativity: NegativityRule::Transformed,
            adapt: true,
        }
    }
}

/// Continuous-time augmented matrices at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedModel<T: Real> {
    /// `[A E; 0 0]`
    pub a_a: DMatrix<T>,
    /// `[B; 0]`
    pub b_a: DMatrix<T>,
    /// `[G 0; 0 I]`
    pub g_a: DMatrix<T>,
    /// `[C 0]`
    pub c_a: DMatrix<T>,
    /// `blkdiag(Q, Q^d)`
    pub q_a: DMatrix<T>,
}

/// Assembles the augmented model at time `t` / step `k` with the given `Q^d`.
pub fn augment<T: Real>(
    model: &SystemModel<T>,
    t: T,
    k: usize,
    qd: &DMatrix<T>,
) -> AugmentedModel<T> {
    let Dims {
        n_x,
        n_u,
        n_d,
        n_y,
        n_w,
    } = model.dims();
    let n = n_x + n_d;

    let mut a_a = DMatrix::zeros(n, n);
    a_a.view_mut((0, 0), (n_x, n_x)).copy_from(&model.a(t));
    a_a.view_mut((0, n_x), (n_x, n_d)).copy_from(&model.e(t));

    let mut b_a = DMatrix::zeros(n, n_u);
    b_a.view_mut((0, 0), (n_x, n_u)).copy_from(&model.b(t));

    let g_a = block_diag(&model.g(t), &DMatrix::identity(n_d, n_d));

    let mut c_a = DMatrix::zeros(n_y, n);
    c_a.view_mut((0, 0), (n_y, n_x)).copy_from(&model.c(k));

    debug_assert_eq!(g_a.ncols(), n_w + n_d);
    AugmentedModel {
        a_a,
        b_a,
        g_a,
        c_a,
        q_a: block_diag(&model.q(t), qd),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct A2kfState<T: Real> {
    /// `[x̂; d̂]`
    pub x_a: DVector<T>,
    pub p_a: DMatrix<T>,
    /// Most recent innovations, oldest first.
    pub innov_window: VecDeque<DVector<T>>,
    /// `Q^d` to be used at the next step.
    pub qd_hat: DMatrix<T>,
    pub k: usize,
    n_x: usize,
}

impl<T: Real> A2kfState<T> {
    /// Starts from `[x0; 0]` with covariance `blkdiag(p0, I)`.
    pub fn new(x0: &DVector<T>, p0: &DMatrix<T>, dims: Dims, config: &A2kfConfig<T>) -> Self {
        let mut x_a = DVector::zeros(dims.n_x + dims.n_d);
        x_a.rows_mut(0, dims.n_x).copy_from(x0);
        Self {
            x_a,
            p_a: block_diag(p0, &DMatrix::identity(dims.n_d, dims.n_d)),
            innov_window: VecDeque::with_capacity(config.window),
            qd_hat: DMatrix::identity(dims.n_d, dims.n_d) * config.qd_init,
            k: 0,
            n_x: dims.n_x,
        }
    }

    pub fn x_hat(&self) -> DVector<T> {
        self.x_a.rows(0, self.n_x).into_owned()
    }

    pub fn d_hat(&self) -> DVector<T> {
        self.x_a.rows(self.n_x, self.x_a.len() - self.n_x).into_owned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct A2kfReport<T: Real> {
    pub x_hat: DVector<T>,
    pub d_hat: DVector<T>,
    pub innovation: DVector<T>,
    /// `Q^d` used in this step's prediction (after optional rescaling).
    pub qd_used: DMatrix<T>,
    pub gain: DMatrix<T>,
}

/// `(1/N) Σ γ γ^T` over the window.
pub fn innovation_covariance<'a, T: Real>(
    window: impl IntoIterator<Item = &'a DVector<T>>,
) -> Result<DMatrix<T>> {
    let mut iter = window.into_iter();
    let first = iter.next().ok_or(Error::Empty("innovation window"))?;
    let mut acc = first * first.transpose();
    let mut count = 1usize;
    for g in iter {
        check_dims("innovation window", (first.len(), 1), g.shape())?;
        acc.ger(T::one(), g, g, T::one());
        count += 1;
    }
    Ok(acc / from_usize::<T>(count))
}

/// Unknown-input noise covariance implied by the innovation covariance.
///
/// `C^γ_0 = C^γ - C G Q G^T C^T dt - R`, then
/// `Q^d = (C E_d)^+ C^γ_0 ((C E_d)^T)^+`. If the configured negativity test
/// fires, or the result is not PSD, only the diagonal is kept and clamped
/// from below at `qd_floor`.
pub fn estimate_qd<T: Real>(
    cgamma: &DMatrix<T>,
    dm: &DiscretizedModel<T>,
    c: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    config: &A2kfConfig<T>,
) -> DMatrix<T> {
    let cg0 = cgamma - c * dm.process_noise(q) * c.transpose() - r;
    let ce = c * &dm.e_d;
    let tol = cast(DEFAULT_RANK_TOL);
    let left = moore_penrose_pinv(&ce, tol);
    let right = moore_penrose_pinv(&ce.transpose(), tol);
    let mut qd = &left * &cg0 * &right;
    symmetrize(&mut qd);

    let negative = match config.negativity {
        NegativityRule::Transformed => qd.diagonal().iter().any(|&v| v < T::zero()),
        NegativityRule::Innovation => cg0.iter().any(|&v| v < T::zero()),
    };
    let indefinite = || {
        let scale = qd.amax().max(config.qd_floor);
        min_symmetric_eigenvalue(&qd) < -cast::<T>(1e-12) * scale
    };
    if negative || indefinite() {
        let diag = qd.diagonal().map(|v| v.max(config.qd_floor));
        DMatrix::from_diagonal(&diag)
    } else {
        qd
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct A2kf<T: Real> {
    pub config: A2kfConfig<T>,
}

impl<T: Real> A2kf<T> {
    pub fn new(config: A2kfConfig<T>) -> Self {
        Self { config }
    }

    pub fn initial_state(&self, x0: &DVector<T>, p0: &DMatrix<T>, dims: Dims) -> A2kfState<T> {
        A2kfState::new(x0, p0, dims, &self.config)
    }

    /// One predict/update on the augmented system, then refreshes `Q^d` from
    /// the innovation window for the next step.
    pub fn step(
        &self,
        state: &A2kfState<T>,
        u: &DVector<T>,
        y: &DVector<T>,
        model: &SystemModel<T>,
    ) -> Result<(A2kfState<T>, A2kfReport<T>)> {
        let dims = model.dims();
        check_dims("a2kf: u", (dims.n_u, 1), u.shape())?;
        check_dims("a2kf: y", (dims.n_y, 1), y.shape())?;
        let k = state.k + 1;
        let t_prev = model.step_start(k);
        let dt = model.dt();

        let qd_used = if self.config.rescale {
            &state.qd_hat / dt
        } else {
            state.qd_hat.clone()
        };
        let aug = augment(model, t_prev, k, &qd_used);
        let n = dims.n_x + dims.n_d;
        let a_ad = DMatrix::identity(n, n) + &aug.a_a * dt;
        let b_ad = &aug.b_a * dt;
        let noise = &aug.g_a * &aug.q_a * aug.g_a.transpose() * dt;

        let x_pred = &a_ad * &state.x_a + &b_ad * u;
        let mut p_pred = &a_ad * &state.p_a * a_ad.transpose() + noise;
        symmetrize(&mut p_pred);

        let c_a = &aug.c_a;
        let r = model.r(k);
        let pct = &p_pred * c_a.transpose();
        let s = c_a * &pct + &r;
        let gain = spd_solve_right(&pct, &s)?;
        let innovation = y - c_a * &x_pred;
        let x_a = &x_pred + &gain * &innovation;
        if !is_finite(&x_a) {
            return Err(Error::NonFinite {
                context: "augmented estimate",
                step: k,
            });
        }
        let i_kc = DMatrix::identity(n, n) - &gain * c_a;
        let mut p_a = &i_kc * &p_pred * i_kc.transpose() + &gain * &r * gain.transpose();
        symmetrize(&mut p_a);

        let mut window = state.innov_window.clone();
        window.push_back(innovation.clone());
        while window.len() > self.config.window.max(1) {
            window.pop_front();
        }
        let qd_hat = if self.config.adapt {
            let cgamma = innovation_covariance(window.iter())?;
            let dm = discretize(model, t_prev);
            estimate_qd(&cgamma, &dm, &model.c(k), &model.q(t_prev), &r, &self.config)
        } else {
            state.qd_hat.clone()
        };

        let next = A2kfState {
            x_a,
            p_a,
            innov_window: window,
            qd_hat,
            k,
            n_x: state.n_x,
        };
        let report = A2kfReport {
            x_hat: next.x_hat(),
            d_hat: next.d_hat(),
            innovation,
            qd_used,
            gain,
        };
        Ok((next, report))
    }
}
