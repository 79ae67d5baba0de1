//! Executable property suites and stability reports.

use nalgebra::{DMatrix, DVector};

use crate::a2kf::{estimate_qd, A2kfConfig};
use crate::error::Result;
use crate::model::{discretize, SystemModel};
use crate::onestep::{equivalence_check, one_step_estimate, square_test_system};
use crate::r4skf::{
    extraction_matrix, stability_matrices, steady_state_gain, FilterState, GainPolicy, R4skf,
};
use crate::sim::benchmark::{benchmark_model, benchmark_signals, BASE_MEASUREMENT_NOISE};
use crate::sim::truth::generate_truth;
use crate::uio::{ObserverState, UnknownInputObserver};

pub const GAIN_IRRELEVANCE_TOL: f64 = 1e-9;
pub const DUAL_FORM_TOL: f64 = 1e-10;
pub const OBSERVER_SQUARE_TOL: f64 = 1e-12;
pub const OBSERVER_GENERAL_TOL: f64 = 1e-10;
pub const QD_RECONSTRUCTION_TOL: f64 = 1e-10;

const CHECK_STEPS: usize = 500;
const CHECK_SEED: u64 = 11;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &'static str, value: f64, tol: f64) -> Self {
        Self {
            name,
            passed: value <= tol,
            detail: format!("max deviation {value:.3e} (tolerance {tol:.0e})"),
        }
    }

    fn failed(name: &'static str, err: impl std::fmt::Display) -> Self {
        Self {
            name,
            passed: false,
            detail: format!("error: {err}"),
        }
    }
}

fn wrap(name: &'static str, tol: f64, f: impl FnOnce() -> Result<f64>) -> CheckOutcome {
    match f() {
        Ok(v) => CheckOutcome::new(name, v, tol),
        Err(e) => CheckOutcome::failed(name, e),
    }
}

/// Optimal-gain and zero-gain filters agree in the square case, from an
/// exact and from a 100-unit-off initial state.
pub fn gain_irrelevance() -> CheckOutcome {
    wrap("gain irrelevance", GAIN_IRRELEVANCE_TOL, || {
        let model = square_test_system::<f64>();
        let a = equivalence_check(&model, CHECK_STEPS, CHECK_SEED, &DVector::zeros(2))?;
        let b = equivalence_check(
            &model,
            CHECK_STEPS,
            CHECK_SEED,
            &DVector::from_element(2, 100.0),
        )?;
        Ok(a.optimal_vs_zero_gain.max(b.optimal_vs_zero_gain))
    })
}

/// Square-case filter output equals `C^{-1} y` at every step.
pub fn one_step_equivalence() -> CheckOutcome {
    wrap("one-step equivalence", GAIN_IRRELEVANCE_TOL, || {
        let model = square_test_system::<f64>();
        let a = equivalence_check(&model, CHECK_STEPS, CHECK_SEED, &DVector::zeros(2))?;
        let b = equivalence_check(
            &model,
            CHECK_STEPS,
            CHECK_SEED,
            &DVector::from_element(2, 100.0),
        )?;
        Ok(a.filter_vs_one_step.max(b.filter_vs_one_step))
    })
}

/// `x̂⁻ + K (y - C x̂⁻)` equals `x* + L γ*` on the benchmark plant, relative
/// to the state magnitude.
pub fn dual_form_equality() -> CheckOutcome {
    wrap("dual-form equality", DUAL_FORM_TOL, || {
        let model = benchmark_model::<f64>(BASE_MEASUREMENT_NOISE, 0.01)?;
        let truth = generate_truth(
            &model,
            &benchmark_signals(0.5),
            &DVector::zeros(2),
            &DVector::zeros(4),
            CHECK_STEPS,
            CHECK_SEED,
        )?;
        let filter = R4skf::new();
        let mut state =
            FilterState::with_default_covariance(DVector::from_element(4, 10.0), model.dims());
        let mut worst = 0.0f64;
        for k in 1..=CHECK_STEPS {
            let (next, rep) = filter.step(&state, &truth.u[k - 1], &truth.y[k], &model)?;
            let dual = &rep.x_star + &rep.l_gain * &next.gamma;
            let scale = next.x_hat.amax().max(1.0);
            worst = worst.max((&dual - &next.x_hat).amax() / scale);
            state = next;
        }
        Ok(worst)
    })
}

/// Observer with `L = C^{-1}` against the one-step filter (square case), and
/// observer with a fixed `L` against the four-step filter using that gain.
pub fn observer_equivalence() -> Vec<CheckOutcome> {
    let square = wrap("observer equivalence (square)", OBSERVER_SQUARE_TOL, || {
        let model = square_test_system::<f64>();
        let truth = generate_truth(
            &model,
            &benchmark_signals(0.5),
            &DVector::zeros(1),
            &DVector::zeros(2),
            CHECK_STEPS,
            CHECK_SEED,
        )?;
        let obs = UnknownInputObserver::pinv_gain(&model);
        let mut state = ObserverState::new(DVector::from_element(2, 5.0), 2);
        let mut worst = 0.0f64;
        for k in 1..=CHECK_STEPS {
            state = obs.step(&state, &truth.u[k - 1], &truth.y[k], &model)?;
            let direct = one_step_estimate(&truth.y[k], &model.c(k))?;
            worst = worst.max((&state.x_hat - &direct).amax());
        }
        Ok(worst)
    });
    let general = wrap("observer equivalence (fixed gain)", OBSERVER_GENERAL_TOL, || {
        let model = benchmark_model::<f64>(BASE_MEASUREMENT_NOISE, 0.01)?;
        let gain = steady_state_gain(&model, &(DMatrix::identity(4, 4) * 10.0), 2000)?;
        let truth = generate_truth(
            &model,
            &benchmark_signals(0.5),
            &DVector::zeros(2),
            &DVector::zeros(4),
            CHECK_STEPS,
            CHECK_SEED,
        )?;
        let x0 = DVector::from_element(4, 10.0);
        let obs = UnknownInputObserver::new(gain.clone());
        let filter = R4skf::with_gain(GainPolicy::Fixed(gain));
        let mut s_obs = ObserverState::new(x0.clone(), 2);
        let mut s_fil = FilterState::with_default_covariance(x0, model.dims());
        let mut worst = 0.0f64;
        for k in 1..=CHECK_STEPS {
            s_obs = obs.step(&s_obs, &truth.u[k - 1], &truth.y[k], &model)?;
            s_fil = filter.step(&s_fil, &truth.u[k - 1], &truth.y[k], &model)?.0;
            let scale = s_fil.x_hat.amax().max(1.0);
            worst = worst
                .max((&s_obs.x_hat - &s_fil.x_hat).amax() / scale)
                .max((&s_obs.d_hat - &s_fil.d_hat).amax() / scale);
        }
        Ok(worst)
    });
    vec![square, general]
}

/// Builds `C^γ` from a known SPD `S` and checks that the estimator returns
/// `S`.
pub fn qd_reconstruction() -> CheckOutcome {
    wrap("Qd reconstruction", QD_RECONSTRUCTION_TOL, || {
        let model = benchmark_model::<f64>(BASE_MEASUREMENT_NOISE, 0.01)?;
        let dm = discretize(&model, 0.0);
        let (c, q, r) = (model.c(1), model.q(0.0), model.r(1));
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let ce = &c * &dm.e_d;
        let cgamma = &ce * &s * ce.transpose() + &c * dm.process_noise(&q) * c.transpose() + &r;
        let qd = estimate_qd(&cgamma, &dm, &c, &q, &r, &A2kfConfig::default());
        Ok((&qd - &s).amax() / s.amax())
    })
}

/// Runs every property suite in a fixed order.
pub fn run_properties() -> Vec<CheckOutcome> {
    let mut out = vec![gain_irrelevance(), one_step_equivalence(), dual_form_equality()];
    out.extend(observer_equivalence());
    out.push(qd_reconstruction());
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub model: String,
    /// `ρ(Ā)`, the input-corrected predictor.
    pub predictor_radius: f64,
    /// `ρ(Ã)` with the steady-state Kalman gain.
    pub filter_radius: f64,
}

impl StabilityReport {
    pub fn stable(&self) -> bool {
        self.filter_radius < 1.0
    }
}

/// Spectral radii at steady state for a constant model.
pub fn stability_report(name: &str, model: &SystemModel<f64>, p0: &DMatrix<f64>) -> Result<StabilityReport> {
    let gain = steady_state_gain(model, p0, crate::sim::scenario::STEADY_STATE_STEPS)?;
    let dm = discretize(model, model.step_start(1));
    let c = model.c(1);
    let f_d = extraction_matrix(&c, &dm.e_d)?;
    let sm = stability_matrices(&dm, &c, &f_d, &gain);
    Ok(StabilityReport {
        model: name.to_string(),
        predictor_radius: sm.predictor_radius(),
        filter_radius: sm.filter_radius(),
    })
}

/// Reports for the built-in benchmark and square test plants.
pub fn builtin_stability_reports() -> Result<Vec<StabilityReport>> {
    let bench = benchmark_model::<f64>(BASE_MEASUREMENT_NOISE, 0.01)?;
    let square = square_test_system::<f64>();
    Ok(vec![
        stability_report("benchmark", &bench, &(DMatrix::identity(4, 4) * 10.0))?,
        stability_report("square", &square, &(DMatrix::identity(2, 2) * 10.0))?,
    ])
}
