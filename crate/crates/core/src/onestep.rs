//! The square case `n_x = n_y = n_d`.
//!
//! With `C` and `E_d` invertible the combined gain collapses to `C^{-1}`, so
//! the filter output is `x̂_k = C^{-1} y_k` whatever the Kalman gain, and the
//! estimation error is `-C^{-1} v_k`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dims, Error, Result};
use crate::linalg::{singular_values, symmetrize};
use crate::model::{discretize, ConstantMatrices, SystemModel};
use crate::r4skf::{
    estimate_unknown_input, predict_no_input, FilterState, GainPolicy, R4skf,
};
use crate::scalar::{cast, to_f64, Real};
use crate::sim::signal::SignalSpec;
use crate::sim::truth::{generate_truth, rng_for_seed};

/// Condition number above which `C` or `E` is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct SquareCaseModel<T: Real> {
    pub c: DMatrix<T>,
    pub e: DMatrix<T>,
    pub r: DMatrix<T>,
    pub dt: T,
}

impl<T: Real> SquareCaseModel<T> {
    pub fn new(c: DMatrix<T>, e: DMatrix<T>, r: DMatrix<T>, dt: T) -> Result<Self> {
        let n = c.nrows();
        check_dims("square case: C", (n, n), c.shape())?;
        check_dims("square case: E", (n, n), e.shape())?;
        check_dims("square case: R", (n, n), r.shape())?;
        ensure_invertible(&c, "output matrix C")?;
        ensure_invertible(&e, "unknown-input matrix E")?;
        Ok(Self { c, e, r, dt })
    }

    /// Extracts the square-case data from a model at step `k`.
    pub fn from_model(model: &SystemModel<T>, k: usize) -> Result<Self> {
        let dims = model.dims();
        if !(dims.n_x == dims.n_y && dims.n_y == dims.n_d) {
            return Err(Error::InvalidModel(format!(
                "square case needs n_x = n_y = n_d, got {:?}",
                dims
            )));
        }
        let t = model.step_start(k);
        Self::new(model.c(k), model.e(t), model.r(k), model.dt())
    }
}

fn ensure_invertible<T: Real>(m: &DMatrix<T>, what: &'static str) -> Result<()> {
    let sv = singular_values(m);
    let (lo, hi) = (sv.min(), sv.max());
    if !(hi > T::zero()) || hi > lo * cast(MAX_CONDITION) {
        return Err(Error::Singular { what });
    }
    Ok(())
}

/// `x̂ = C^{-1} y` via an LU solve.
pub fn one_step_estimate<T: Real>(y: &DVector<T>, c: &DMatrix<T>) -> Result<DVector<T>> {
    check_dims("one-step estimate: C", (y.len(), y.len()), c.shape())?;
    ensure_invertible(c, "output matrix C")?;
    c.clone()
        .lu()
        .solve(y)
        .ok_or(Error::Singular { what: "output matrix C" })
}

/// Exact estimation-error covariance `C^{-1} R C^{-T}`.
pub fn one_step_error_cov<T: Real>(c: &DMatrix<T>, r: &DMatrix<T>) -> Result<DMatrix<T>> {
    check_dims("one-step covariance: R", c.shape(), r.shape())?;
    ensure_invertible(c, "output matrix C")?;
    let lu = c.clone().lu();
    let singular = Error::Singular { what: "output matrix C" };
    let left = lu.solve(r).ok_or(singular.clone())?;
    let mut cov = lu.solve(&left.transpose()).ok_or(singular)?.transpose();
    symmetrize(&mut cov);
    Ok(cov)
}

/// One-step filter carrying the unknown-input estimate along:
/// `d̂_{k-1} = F_d (y_k - C x*)` from the previous output, `x̂_k = C^{-1} y_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneStepState<T: Real> {
    pub x_hat: DVector<T>,
    pub d_hat: DVector<T>,
    pub k: usize,
}

impl<T: Real> OneStepState<T> {
    pub fn new(x0: DVector<T>, n_d: usize) -> Self {
        Self {
            x_hat: x0,
            d_hat: DVector::zeros(n_d),
            k: 0,
        }
    }
}

pub fn one_step_filter_step<T: Real>(
    state: &OneStepState<T>,
    u: &DVector<T>,
    y: &DVector<T>,
    model: &SystemModel<T>,
) -> Result<OneStepState<T>> {
    let k = state.k + 1;
    let dm = discretize(model, model.step_start(k));
    let c = model.c(k);
    let x_star = predict_no_input(&state.x_hat, u, &dm)?;
    let est = estimate_unknown_input(y, &x_star, &dm, &c)?;
    Ok(OneStepState {
        x_hat: one_step_estimate(y, &c)?,
        d_hat: est.d_hat,
        k,
    })
}

/// Double integrator with `C = E = G = I`, used to exercise the square case.
pub fn square_test_system<T: Real>() -> SystemModel<T> {
    SystemModel::constant(
        ConstantMatrices {
            a: DMatrix::from_row_slice(2, 2, &[T::zero(), T::one(), T::zero(), T::zero()]),
            b: DMatrix::zeros(2, 1),
            e: DMatrix::identity(2, 2),
            g: DMatrix::identity(2, 2),
            c: DMatrix::identity(2, 2),
            q: DMatrix::identity(2, 2) * cast::<T>(1e-4),
            r: DMatrix::identity(2, 2) * cast::<T>(1e-4),
        },
        cast(0.01),
    )
    .expect("square test system is valid")
}

/// Maximum per-step deviations observed by [`equivalence_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equivalence<T: Real> {
    /// `max_k ‖x̂_k (optimal K) - C^{-1} y_k‖`.
    pub filter_vs_one_step: T,
    /// `max_k ‖x̂_k (optimal K) - x̂_k (K = 0)‖`.
    pub optimal_vs_zero_gain: T,
    /// `max_k ‖x̂_k|k-1 (optimal K) - x̂_k|k-1 (K = 0)‖`.
    pub predictor_deviation: T,
    /// `max_k ‖x_k‖`, for scaling.
    pub state_scale: T,
}

/// Runs the four-step filter (optimal gain and zero gain) and the one-step
/// filter on the same simulated data with Gaussian random unknown inputs.
pub fn equivalence_check<T: Real>(
    model: &SystemModel<T>,
    steps: usize,
    seed: u64,
    x0_hat: &DVector<T>,
) -> Result<Equivalence<T>> {
    let dims = model.dims();
    SquareCaseModel::from_model(model, 1)?;

    let dt = to_f64(model.dt());
    let mut input_rng = rng_for_seed(seed ^ 0x5eed_d157_u64);
    let inputs: Vec<SignalSpec> = (0..dims.n_d)
        .map(|_| SignalSpec::Samples {
            dt,
            values: (0..=steps)
                .map(|_| input_rng.sample::<f64, _>(rand_distr::StandardNormal))
                .collect(),
        })
        .collect();
    let truth = generate_truth(
        model,
        &inputs,
        &DVector::zeros(dims.n_u),
        &DVector::zeros(dims.n_x),
        steps,
        seed,
    )?;

    let optimal = R4skf::new();
    let zero = R4skf::with_gain(GainPolicy::zero(dims));
    let mut s_opt = FilterState::with_default_covariance(x0_hat.clone(), dims);
    let mut s_zero = s_opt.clone();
    let mut out = Equivalence {
        filter_vs_one_step: T::zero(),
        optimal_vs_zero_gain: T::zero(),
        predictor_deviation: T::zero(),
        state_scale: T::zero(),
    };
    for k in 1..=steps {
        let u = &truth.u[k - 1];
        let y = &truth.y[k];
        let (next_opt, rep_opt) = optimal.step(&s_opt, u, y, model)?;
        let (next_zero, rep_zero) = zero.step(&s_zero, u, y, model)?;
        let direct = one_step_estimate(y, &model.c(k))?;
        out.filter_vs_one_step = out.filter_vs_one_step.max((&next_opt.x_hat - &direct).norm());
        out.optimal_vs_zero_gain = out
            .optimal_vs_zero_gain
            .max((&next_opt.x_hat - &next_zero.x_hat).norm());
        out.predictor_deviation = out
            .predictor_deviation
            .max((&rep_opt.x_pred - &rep_zero.x_pred).norm());
        out.state_scale = out.state_scale.max(truth.x[k].norm());
        s_opt = next_opt;
        s_zero = next_zero;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_step_estimate_examples() {
        let y = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(one_step_estimate(&y, &DMatrix::identity(2, 2)).unwrap(), y);

        let c = DMatrix::identity(2, 2) * 2.0;
        let x = one_step_estimate(&DVector::from_vec(vec![4.0, 6.0]), &c).unwrap();
        assert_relative_eq!(x, DVector::from_vec(vec![2.0, 3.0]));

        let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let x = one_step_estimate(&DVector::from_vec(vec![3.0, 1.0]), &c).unwrap();
        assert_relative_eq!(x, DVector::from_vec(vec![2.0, 1.0]));
    }

    #[test]
    fn singular_output_matrix_rejected() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            one_step_estimate(&DVector::zeros(2), &c),
            Err(Error::Singular { .. })
        ));
        assert!(one_step_error_cov(&c, &DMatrix::identity(2, 2)).is_err());
        assert!(SquareCaseModel::new(c, DMatrix::identity(2, 2), DMatrix::identity(2, 2), 0.01).is_err());
    }

    #[test]
    fn error_cov_examples() {
        let r = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert_relative_eq!(one_step_error_cov(&DMatrix::identity(2, 2), &r).unwrap(), r);
        let c = DMatrix::identity(2, 2) * 2.0;
        assert_relative_eq!(
            one_step_error_cov(&c, &DMatrix::identity(2, 2)).unwrap(),
            DMatrix::identity(2, 2) * 0.25
        );
    }

    #[test]
    fn rejects_non_square_model() {
        let model = crate::sim::benchmark::benchmark_model::<f64>(1e-7, 0.01).unwrap();
        assert!(matches!(
            SquareCaseModel::from_model(&model, 1),
            Err(Error::InvalidModel(_))
        ));
    }
}
