use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::a2kf::{A2kf, A2kfConfig};
use crate::error::{check_dims, Error, Result};
use crate::onestep::{one_step_filter_step, OneStepState, SquareCaseModel};
use crate::r4skf::{steady_state_gain, FilterState, R4skf};
use crate::model::SystemModel;
use crate::scalar::{to_f64, Real};
use crate::sim::metrics::rmse;
use crate::sim::signal::SignalSpec;
use crate::sim::truth::{generate_truth, Truth};
use crate::uio::{ObserverState, UnknownInputObserver};

/// Leading estimates left out of the RMSE. The first unknown-input estimate
/// carries the prior state error amplified by `1/dt` and nothing else.
pub const DEFAULT_RMSE_SKIP: usize = 1;

/// Steps of covariance recursion used to export a steady-state observer gain.
pub const STEADY_STATE_STEPS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    R4skf,
    A2kf,
    Onestep,
    Uio,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::R4skf => "r4skf",
            EstimatorKind::A2kf => "a2kf",
            EstimatorKind::Onestep => "onestep",
            EstimatorKind::Uio => "uio",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::R4skf => "R4SKF",
            EstimatorKind::A2kf => "A2KF",
            EstimatorKind::Onestep => "one-step",
            EstimatorKind::Uio => "UIO",
        }
    }
}

/// Observer gain source.
#[derive(Debug, Clone, PartialEq)]
pub enum ObserverGainSpec<T: Real> {
    /// `L = C^+`.
    Pinv,
    /// Kalman gain after [`STEADY_STATE_STEPS`] of covariance recursion.
    SteadyState,
    Matrix(DMatrix<T>),
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig<T: Real> {
    pub name: String,
    pub model: SystemModel<T>,
    /// One waveform per unknown-input channel.
    pub inputs: Vec<SignalSpec>,
    /// Constant known input `u`.
    pub known_input: DVector<T>,
    /// Seconds.
    pub duration: f64,
    pub seeds: Vec<u64>,
    pub x0_true: DVector<T>,
    pub x0_hat: DVector<T>,
    pub p0: DMatrix<T>,
    pub estimators: Vec<EstimatorKind>,
    pub a2kf: A2kfConfig<T>,
    pub observer_gain: ObserverGainSpec<T>,
    /// Number of leading estimates excluded from the RMSE.
    pub rmse_skip: usize,
}

impl<T: Real> ScenarioConfig<T> {
    pub fn steps(&self) -> usize {
        (self.duration / to_f64(self.model.dt())).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.model.dims();
        if !(self.duration > 0.0) {
            return Err(Error::InvalidModel("duration must be positive".into()));
        }
        if self.steps() == 0 {
            return Err(Error::InvalidModel("duration shorter than one sample".into()));
        }
        if self.rmse_skip >= self.steps() {
            return Err(Error::InvalidModel(format!(
                "rmse_skip ({}) must be below the number of steps ({})",
                self.rmse_skip,
                self.steps()
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Empty("seed list"));
        }
        if self.estimators.is_empty() {
            return Err(Error::Empty("estimator list"));
        }
        check_dims("scenario: unknown-input signals", (dims.n_d, 1), (self.inputs.len(), 1))?;
        check_dims("scenario: known input", (dims.n_u, 1), self.known_input.shape())?;
        check_dims("scenario: x0_true", (dims.n_x, 1), self.x0_true.shape())?;
        check_dims("scenario: x0_hat", (dims.n_x, 1), self.x0_hat.shape())?;
        check_dims("scenario: p0", (dims.n_x, dims.n_x), self.p0.shape())?;
        for s in &self.inputs {
            s.validate().map_err(Error::InvalidModel)?;
        }
        if self.estimators.contains(&EstimatorKind::Onestep) {
            SquareCaseModel::from_model(&self.model, 1)?;
        }
        if let ObserverGainSpec::Matrix(l) = &self.observer_gain {
            check_dims("scenario: observer gain", (dims.n_x, dims.n_y), l.shape())?;
        }
        Ok(())
    }

    fn observer_gain(&self) -> Result<DMatrix<T>> {
        Ok(match &self.observer_gain {
            ObserverGainSpec::Pinv => UnknownInputObserver::pinv_gain(&self.model).gain,
            ObserverGainSpec::SteadyState => {
                steady_state_gain(&self.model, &self.p0, STEADY_STATE_STEPS)?
            }
            ObserverGainSpec::Matrix(l) => l.clone(),
        })
    }
}

/// Estimates produced by one estimator on one seed.
///
/// `x_hat[i]` is `x̂_{k|k}` and `d_hat[i]` the estimate of `d(t_{k-1})`, both
/// for `k = i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateSeries<T: Real> {
    pub kind: EstimatorKind,
    pub x_hat: Vec<DVector<T>>,
    pub d_hat: Vec<DVector<T>>,
    pub innovations: Vec<DVector<T>>,
    /// Diagonal of `Q^d` used at each step (adaptive augmented filter only).
    pub qd_diag: Vec<DVector<T>>,
    /// Diagonal of the predicted unknown-input error covariance (four-step filter only).
    pub pd_diag: Vec<DVector<T>>,
    pub rmse_x: Vec<T>,
    pub rmse_d: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun<T: Real> {
    pub seed: u64,
    pub truth: Truth<T>,
    pub estimates: Vec<EstimateSeries<T>>,
}

impl<T: Real> SeedRun<T> {
    pub fn estimate(&self, kind: EstimatorKind) -> Option<&EstimateSeries<T>> {
        self.estimates.iter().find(|e| e.kind == kind)
    }
}

/// Seed-averaged per-channel RMSEs for one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    pub estimator: EstimatorKind,
    pub x: Vec<f64>,
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult<T: Real> {
    pub name: String,
    pub runs: Vec<SeedRun<T>>,
    pub summary: Vec<RmseRow>,
}

impl<T: Real> ScenarioResult<T> {
    pub fn row(&self, kind: EstimatorKind) -> Option<&RmseRow> {
        self.summary.iter().find(|r| r.estimator == kind)
    }
}

fn empty_series<T: Real>(kind: EstimatorKind, steps: usize) -> EstimateSeries<T> {
    EstimateSeries {
        kind,
        x_hat: Vec::with_capacity(steps),
        d_hat: Vec::with_capacity(steps),
        innovations: Vec::with_capacity(steps),
        qd_diag: Vec::new(),
        pd_diag: Vec::new(),
        rmse_x: Vec::new(),
        rmse_d: Vec::new(),
    }
}

fn run_estimator<T: Real>(
    cfg: &ScenarioConfig<T>,
    kind: EstimatorKind,
    truth: &Truth<T>,
    observer_gain: Option<&DMatrix<T>>,
) -> Result<EstimateSeries<T>> {
    let model = &cfg.model;
    let dims = model.dims();
    let steps = truth.steps();
    let mut out = empty_series(kind, steps);
    match kind {
        EstimatorKind::R4skf => {
            let filter = R4skf::new();
            let mut state = FilterState::new(cfg.x0_hat.clone(), cfg.p0.clone(), dims);
            for k in 1..=steps {
                let (next, _) = filter.step(&state, &truth.u[k - 1], &truth.y[k], model)?;
                out.x_hat.push(next.x_hat.clone());
                out.d_hat.push(next.d_hat.clone());
                out.innovations.push(next.gamma.clone());
                out.pd_diag.push(next.p_d.diagonal());
                state = next;
            }
        }
        EstimatorKind::A2kf => {
            let filter = A2kf::new(cfg.a2kf.clone());
            let mut state = filter.initial_state(&cfg.x0_hat, &cfg.p0, dims);
            for k in 1..=steps {
                let (next, report) = filter.step(&state, &truth.u[k - 1], &truth.y[k], model)?;
                out.x_hat.push(report.x_hat);
                out.d_hat.push(report.d_hat);
                out.innovations.push(report.innovation);
                out.qd_diag.push(report.qd_used.diagonal());
                state = next;
            }
        }
        EstimatorKind::Onestep => {
            let mut state = OneStepState::new(cfg.x0_hat.clone(), dims.n_d);
            for k in 1..=steps {
                let next = one_step_filter_step(&state, &truth.u[k - 1], &truth.y[k], model)?;
                out.x_hat.push(next.x_hat.clone());
                out.d_hat.push(next.d_hat.clone());
                state = next;
            }
        }
        EstimatorKind::Uio => {
            let gain = observer_gain.expect("observer gain resolved before the run");
            let observer = UnknownInputObserver::new(gain.clone());
            let mut state = ObserverState::new(cfg.x0_hat.clone(), dims.n_d);
            for k in 1..=steps {
                let next = observer.step(&state, &truth.u[k - 1], &truth.y[k], model)?;
                out.x_hat.push(next.x_hat.clone());
                out.d_hat.push(next.d_hat.clone());
                out.innovations.push(&truth.y[k] - model.c(k) * &next.w);
                state = next;
            }
        }
    }
    let skip = cfg.rmse_skip.min(steps.saturating_sub(1));
    out.rmse_x = rmse(&out.x_hat[skip..], &truth.x[1 + skip..])?;
    out.rmse_d = rmse(&out.d_hat[skip..], &truth.d[skip..steps])?;
    Ok(out)
}

fn scenario_error(cfg_name: &str, seed: u64, kind: EstimatorKind, err: Error) -> Error {
    Error::Scenario {
        scenario: cfg_name.to_string(),
        seed,
        estimator: kind.label(),
        source: Box::new(err),
    }
}

/// Simulates one seed and runs every configured estimator on it.
pub fn run_seed<T: Real>(cfg: &ScenarioConfig<T>, seed: u64) -> Result<SeedRun<T>> {
    let gain = if cfg.estimators.contains(&EstimatorKind::Uio) {
        Some(cfg.observer_gain()?)
    } else {
        None
    };
    run_seed_with_gain(cfg, seed, gain.as_ref())
}

fn run_seed_with_gain<T: Real>(
    cfg: &ScenarioConfig<T>,
    seed: u64,
    gain: Option<&DMatrix<T>>,
) -> Result<SeedRun<T>> {
    let truth = generate_truth(
        &cfg.model,
        &cfg.inputs,
        &cfg.known_input,
        &cfg.x0_true,
        cfg.steps(),
        seed,
    )?;
    let estimates = cfg
        .estimators
        .iter()
        .map(|&kind| {
            run_estimator(cfg, kind, &truth, gain).map_err(|e| scenario_error(&cfg.name, seed, kind, e))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeedRun {
        seed,
        truth,
        estimates,
    })
}

/// Runs all seeds (in parallel) and averages per-seed RMSEs.
///
/// Results are ordered as in `cfg.seeds` regardless of completion order.
pub fn run_scenario<T: Real>(cfg: &ScenarioConfig<T>) -> Result<ScenarioResult<T>> {
    cfg.validate()?;
    let gain = if cfg.estimators.contains(&EstimatorKind::Uio) {
        Some(cfg.observer_gain()?)
    } else {
        None
    };
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&seed| run_seed_with_gain(cfg, seed, gain.as_ref()))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&cfg.estimators, &runs);
    Ok(ScenarioResult {
        name: cfg.name.clone(),
        runs,
        summary,
    })
}

pub fn summarize<T: Real>(estimators: &[EstimatorKind], runs: &[SeedRun<T>]) -> Vec<RmseRow> {
    estimators
        .iter()
        .map(|&kind| {
            let series: Vec<&EstimateSeries<T>> =
                runs.iter().filter_map(|r| r.estimate(kind)).collect();
            let mean = |pick: &dyn Fn(&EstimateSeries<T>) -> &Vec<T>| -> Vec<f64> {
                let width = series.first().map(|s| pick(s).len()).unwrap_or(0);
                let mut acc = vec![0.0; width];
                for s in &series {
                    for (a, v) in acc.iter_mut().zip(pick(s)) {
                        *a += to_f64(*v);
                    }
                }
                let n = series.len().max(1) as f64;
                acc.into_iter().map(|v| v / n).collect()
            };
            RmseRow {
                estimator: kind,
                x: mean(&|s| &s.rmse_x),
                d: mean(&|s| &s.rmse_d),
            }
        })
        .collect()
}
