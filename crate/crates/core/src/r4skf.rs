//! Recursive four-step Kalman filter.
//!
//! Each step runs, in order:
//!
//! 1. input-free prediction `x* = A_d x̂ + B_d u`,
//! 2. unknown-input extraction `d̂ = (C E_d)^+ (y - C x*)`,
//! 3. input-corrected prediction `x̂⁻ = x* + E_d d̂`,
//! 4. measurement update `x̂ = x̂⁻ + K (y - C x̂⁻)`,
//!
//! with the covariance carried through the combined gain
//! `L = K + (I - K C) E_d F_d` in Joseph form.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dims, Error, Result};
use crate::linalg::{
    is_finite, moore_penrose_pinv, numerical_rank, spd_solve_right, spectral_radius, symmetrize,
    DEFAULT_RANK_TOL,
};
use crate::model::{discretize, Dims, DiscretizedModel, SystemModel};
use crate::scalar::{cast, Real};

/// Default initial error covariance scale (`P0 = 10 I`).
pub const DEFAULT_P0_SCALE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState<T: Real> {
    /// State estimate `x̂_{k|k}`.
    pub x_hat: DVector<T>,
    /// Error covariance `P*_{k|k}`.
    pub p: DMatrix<T>,
    /// Latest unknown-input estimate `d̂(t_{k-1})`.
    pub d_hat: DVector<T>,
    /// Covariance of the unknown-input estimation error.
    pub p_d: DMatrix<T>,
    /// Innovation against the input-free prediction.
    pub gamma: DVector<T>,
    pub k: usize,
}

impl<T: Real> FilterState<T> {
    pub fn new(x0: DVector<T>, p0: DMatrix<T>, dims: Dims) -> Self {
        Self {
            x_hat: x0,
            p: p0,
            d_hat: DVector::zeros(dims.n_d),
            p_d: DMatrix::identity(dims.n_d, dims.n_d),
            gamma: DVector::zeros(dims.n_y),
            k: 0,
        }
    }

    /// `P0 = 10 I`, `d̂ = 0`, `P^d = I`.
    pub fn with_default_covariance(x0: DVector<T>, dims: Dims) -> Self {
        let p0 = DMatrix::identity(dims.n_x, dims.n_x) * cast::<T>(DEFAULT_P0_SCALE);
        Self::new(x0, p0, dims)
    }
}

/// Everything computed inside one filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport<T: Real> {
    pub x_star: DVector<T>,
    pub x_pred: DVector<T>,
    pub d_hat: DVector<T>,
    pub f_d: DMatrix<T>,
    pub k_gain: DMatrix<T>,
    pub l_gain: DMatrix<T>,
    pub p_pred: DMatrix<T>,
    pub a_bar: DMatrix<T>,
    pub a_tilde: DMatrix<T>,
}

/// Output of [`estimate_unknown_input`].
#[derive(Debug, Clone, PartialEq)]
pub struct InputEstimate<T: Real> {
    pub d_hat: DVector<T>,
    pub f_d: DMatrix<T>,
    pub gamma: DVector<T>,
}

/// Output of [`gain_and_covariance`].
#[derive(Debug, Clone, PartialEq)]
pub struct GainCovariance<T: Real> {
    pub p_pred: DMatrix<T>,
    pub k: DMatrix<T>,
    pub l: DMatrix<T>,
    pub p_post: DMatrix<T>,
}

/// Matrices of the prediction-error and filter-error recursions.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityMatrices<T: Real> {
    pub a_bar: DMatrix<T>,
    pub a_tilde: DMatrix<T>,
    pub g_bar: DMatrix<T>,
    pub d_bar: DMatrix<T>,
    pub g_tilde: DMatrix<T>,
    pub d_tilde: DMatrix<T>,
}

impl<T: Real> StabilityMatrices<T> {
    pub fn predictor_radius(&self) -> T {
        spectral_radius(&self.a_bar)
    }

    pub fn filter_radius(&self) -> T {
        spectral_radius(&self.a_tilde)
    }
}

/// `x* = A_d x̂ + B_d u`.
pub fn predict_no_input<T: Real>(
    x_hat: &DVector<T>,
    u: &DVector<T>,
    dm: &DiscretizedModel<T>,
) -> Result<DVector<T>> {
    check_dims("predict_no_input: x̂", (dm.a_d.ncols(), 1), x_hat.shape())?;
    check_dims("predict_no_input: u", (dm.b_d.ncols(), 1), u.shape())?;
    Ok(&dm.a_d * x_hat + &dm.b_d * u)
}

/// `γ* = y - C x*`, `F_d = (C E_d)^+`, `d̂ = F_d γ*`.
pub fn estimate_unknown_input<T: Real>(
    y: &DVector<T>,
    x_star: &DVector<T>,
    dm: &DiscretizedModel<T>,
    c: &DMatrix<T>,
) -> Result<InputEstimate<T>> {
    check_dims("estimate_unknown_input: C", (c.nrows(), dm.n_x()), c.shape())?;
    check_dims("estimate_unknown_input: y", (c.nrows(), 1), y.shape())?;
    check_dims("estimate_unknown_input: x*", (dm.n_x(), 1), x_star.shape())?;
    let f_d = extraction_matrix(c, &dm.e_d)?;
    let gamma = y - c * x_star;
    let d_hat = &f_d * &gamma;
    Ok(InputEstimate { d_hat, f_d, gamma })
}

/// `(C E_d)^+`, failing when `C E_d` loses column rank.
pub fn extraction_matrix<T: Real>(c: &DMatrix<T>, e_d: &DMatrix<T>) -> Result<DMatrix<T>> {
    let tol = cast(DEFAULT_RANK_TOL);
    let ce = c * e_d;
    let n_d = e_d.ncols();
    let rank_ce = numerical_rank(&ce, tol);
    if rank_ce < n_d {
        return Err(Error::RankCondition {
            rank_ce,
            rank_e: numerical_rank(e_d, tol),
            required: n_d,
        });
    }
    Ok(moore_penrose_pinv(&ce, tol))
}

/// `x̂_{k|k-1} = x* + E_d d̂`.
pub fn predict_with_input<T: Real>(
    x_star: &DVector<T>,
    d_hat: &DVector<T>,
    dm: &DiscretizedModel<T>,
) -> Result<DVector<T>> {
    check_dims("predict_with_input: x*", (dm.n_x(), 1), x_star.shape())?;
    check_dims("predict_with_input: d̂", (dm.e_d.ncols(), 1), d_hat.shape())?;
    Ok(x_star + &dm.e_d * d_hat)
}

/// `P⁻ = A_d P A_d^T + G Q G^T dt`.
pub fn predict_covariance<T: Real>(
    p_prev: &DMatrix<T>,
    dm: &DiscretizedModel<T>,
    q: &DMatrix<T>,
) -> DMatrix<T> {
    let mut p = &dm.a_d * p_prev * dm.a_d.transpose() + dm.process_noise(q);
    symmetrize(&mut p);
    p
}

/// Optimal gain, combined gain and Joseph-form covariance update.
pub fn gain_and_covariance<T: Real>(
    p_prev: &DMatrix<T>,
    dm: &DiscretizedModel<T>,
    c: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    f_d: &DMatrix<T>,
) -> Result<GainCovariance<T>> {
    let p_pred = predict_covariance(p_prev, dm, q);
    let k = kalman_gain(&p_pred, c, r)?;
    Ok(correct_covariance(p_pred, k, c, r, &dm.e_d, f_d))
}

/// Same as [`gain_and_covariance`] with a caller-fixed `K`.
pub fn covariance_with_gain<T: Real>(
    p_prev: &DMatrix<T>,
    dm: &DiscretizedModel<T>,
    c: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    f_d: &DMatrix<T>,
    k: &DMatrix<T>,
) -> Result<GainCovariance<T>> {
    check_dims("fixed gain K", (dm.n_x(), c.nrows()), k.shape())?;
    let p_pred = predict_covariance(p_prev, dm, q);
    Ok(correct_covariance(p_pred, k.clone(), c, r, &dm.e_d, f_d))
}

/// `K = P⁻ C^T (C P⁻ C^T + R)^{-1}`.
pub fn kalman_gain<T: Real>(
    p_pred: &DMatrix<T>,
    c: &DMatrix<T>,
    r: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    check_dims("kalman_gain: R", (c.nrows(), c.nrows()), r.shape())?;
    let pct = p_pred * c.transpose();
    let s = c * &pct + r;
    spd_solve_right(&pct, &s)
}

/// Combined gain `L` and `P = (I - L C) P⁻ (I - L C)^T + L R L^T`.
pub fn correct_covariance<T: Real>(
    p_pred: DMatrix<T>,
    k: DMatrix<T>,
    c: &DMatrix<T>,
    r: &DMatrix<T>,
    e_d: &DMatrix<T>,
    f_d: &DMatrix<T>,
) -> GainCovariance<T> {
    let n = p_pred.nrows();
    let eye = DMatrix::<T>::identity(n, n);
    let l = &k + (&eye - &k * c) * e_d * f_d;
    let i_lc = &eye - &l * c;
    let mut p_post = &i_lc * &p_pred * i_lc.transpose() + &l * r * l.transpose();
    symmetrize(&mut p_post);
    GainCovariance {
        p_pred,
        k,
        l,
        p_post,
    }
}

/// `x̂_{k|k} = x̂_{k|k-1} + K (y - C x̂_{k|k-1})`.
pub fn update<T: Real>(
    x_pred: &DVector<T>,
    y: &DVector<T>,
    k: &DMatrix<T>,
    c: &DMatrix<T>,
) -> Result<DVector<T>> {
    check_dims("update: K", (x_pred.len(), y.len()), k.shape())?;
    check_dims("update: C", (y.len(), x_pred.len()), c.shape())?;
    Ok(x_pred + k * (y - c * x_pred))
}

/// `Ā = (I - E_d F_d C) A_d`, `Ã = (I - K C) Ā` and the matching noise maps.
pub fn stability_matrices<T: Real>(
    dm: &DiscretizedModel<T>,
    c: &DMatrix<T>,
    f_d: &DMatrix<T>,
    k: &DMatrix<T>,
) -> StabilityMatrices<T> {
    let n = dm.n_x();
    let eye = DMatrix::<T>::identity(n, n);
    let proj = &eye - &dm.e_d * f_d * c;
    let i_kc = &eye - k * c;
    let a_bar = &proj * &dm.a_d;
    let g_bar = &proj * &dm.g_d;
    let d_bar = -(&dm.e_d * f_d);
    let a_tilde = &i_kc * &a_bar;
    let g_tilde = &i_kc * &g_bar;
    let d_tilde = &i_kc * &d_bar - k;
    StabilityMatrices {
        a_bar,
        a_tilde,
        g_bar,
        d_bar,
        g_tilde,
        d_tilde,
    }
}

/// `P^d = F_d [C A_d P A_d^T C^T + C G Q G^T C^T dt + R] F_d^T`.
pub fn unknown_input_error_cov<T: Real>(
    p_prev: &DMatrix<T>,
    dm: &DiscretizedModel<T>,
    c: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    f_d: &DMatrix<T>,
) -> DMatrix<T> {
    let ca = c * &dm.a_d;
    let inner = &ca * p_prev * ca.transpose() + c * dm.process_noise(q) * c.transpose() + r;
    let mut p_d = f_d * inner * f_d.transpose();
    symmetrize(&mut p_d);
    p_d
}

/// How the measurement-update gain is chosen.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum GainPolicy<T: Real> {
    /// Kalman gain from the propagated covariance.
    #[default]
    Optimal,
    /// A fixed `n_x × n_y` gain (observer mode, or `K = 0`).
    Fixed(DMatrix<T>),
}

impl<T: Real> GainPolicy<T> {
    pub fn zero(dims: Dims) -> Self {
        Self::Fixed(DMatrix::zeros(dims.n_x, dims.n_y))
    }
}

/// The filter itself; stateless apart from its gain policy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct R4skf<T: Real> {
    pub gain: GainPolicy<T>,
}

impl<T: Real> R4skf<T> {
    pub fn new() -> Self {
        Self {
            gain: GainPolicy::Optimal,
        }
    }

    pub fn with_gain(gain: GainPolicy<T>) -> Self {
        Self { gain }
    }

    /// Advances `state` by one sample using measurement `y` at step `state.k + 1`
    /// and known input `u(t_{k-1})`.
    pub fn step(
        &self,
        state: &FilterState<T>,
        u: &DVector<T>,
        y: &DVector<T>,
        model: &SystemModel<T>,
    ) -> Result<(FilterState<T>, StepReport<T>)> {
        let k = state.k + 1;
        let t_prev = model.step_start(k);
        let dm = discretize(model, t_prev);
        let c = model.c(k);
        let r = model.r(k);
        let q = model.q(t_prev);

        let x_star = predict_no_input(&state.x_hat, u, &dm)?;
        let est = estimate_unknown_input(y, &x_star, &dm, &c)?;
        let p_d = unknown_input_error_cov(&state.p, &dm, &c, &q, &r, &est.f_d);
        let x_pred = predict_with_input(&x_star, &est.d_hat, &dm)?;
        let gc = match &self.gain {
            GainPolicy::Optimal => gain_and_covariance(&state.p, &dm, &c, &q, &r, &est.f_d)?,
            GainPolicy::Fixed(gain) => {
                covariance_with_gain(&state.p, &dm, &c, &q, &r, &est.f_d, gain)?
            }
        };
        let x_hat = update(&x_pred, y, &gc.k, &c)?;
        if !is_finite(&x_hat) {
            return Err(Error::NonFinite {
                context: "state estimate",
                step: k,
            });
        }
        let sm = stability_matrices(&dm, &c, &est.f_d, &gc.k);

        let next = FilterState {
            x_hat,
            p: gc.p_post,
            d_hat: est.d_hat.clone(),
            p_d,
            gamma: est.gamma,
            k,
        };
        let report = StepReport {
            x_star,
            x_pred,
            d_hat: est.d_hat,
            f_d: est.f_d,
            k_gain: gc.k,
            l_gain: gc.l,
            p_pred: gc.p_pred,
            a_bar: sm.a_bar,
            a_tilde: sm.a_tilde,
        };
        Ok((next, report))
    }
}

/// Runs only the covariance recursion for `steps` samples and returns the
/// final Kalman gain. The gain sequence does not depend on the data.
pub fn steady_state_gain<T: Real>(
    model: &SystemModel<T>,
    p0: &DMatrix<T>,
    steps: usize,
) -> Result<DMatrix<T>> {
    let mut p = p0.clone();
    let dims = model.dims();
    let mut k_gain = DMatrix::zeros(dims.n_x, dims.n_y);
    for k in 1..=steps {
        let t_prev = model.step_start(k);
        let dm = discretize(model, t_prev);
        let c = model.c(k);
        let f_d = extraction_matrix(&c, &dm.e_d)?;
        let gc = gain_and_covariance(&p, &dm, &c, &model.q(t_prev), &model.r(k), &f_d)?;
        p = gc.p_post;
        k_gain = gc.k;
    }
    Ok(k_gain)
}
