//! Fourth-order unstable benchmark plant with two unknown inputs and the
//! three reference scenarios built on it.

use nalgebra::{DMatrix, DVector};

use crate::a2kf::A2kfConfig;
use crate::error::Result;
use crate::model::{ConstantMatrices, SystemModel};
use crate::r4skf::DEFAULT_P0_SCALE;
use crate::scalar::{cast, Real};
use crate::sim::scenario::{EstimatorKind, ObserverGainSpec, ScenarioConfig, DEFAULT_RMSE_SKIP};
use crate::sim::signal::SignalSpec;

pub const DEFAULT_DURATION: f64 = 10.0;
pub const DEFAULT_SEED_COUNT: u64 = 20;
pub const PROCESS_NOISE_PSD: f64 = 1e-6;
pub const BASE_MEASUREMENT_NOISE: f64 = 1e-7;

#[rustfmt::skip]
const A: [f64; 16] = [
    1.9527, -0.0075,  0.0663,  0.0437,
    0.0017,  1.0452,  0.0056, -0.0242,
    0.0092,  0.0064, -0.1975,  0.00128,
    0.0,     0.0,     1.0,     0.0,
];

#[rustfmt::skip]
const B: [f64; 8] = [
    0.554,  0.156,
    0.246, -0.982,
    0.320,  0.560,
    0.0,    0.0,
];

#[rustfmt::skip]
const C: [f64; 12] = [
    1.0, 0.0, 0.0, 0.0,
    0.0, 1.0, 0.0, 0.0,
    0.0, 0.0, 0.0, 1.0,
];

fn mat<T: Real>(rows: usize, cols: usize, data: &[f64]) -> DMatrix<T> {
    DMatrix::from_row_iterator(rows, cols, data.iter().map(|&v| cast::<T>(v)))
}

/// Benchmark matrices with `E = B`, `G = I`, `Q = 1e-6 I` and
/// `R = measurement_variance * I_3`.
pub fn benchmark_matrices<T: Real>(measurement_variance: f64) -> ConstantMatrices<T> {
    let b = mat::<T>(4, 2, &B);
    ConstantMatrices {
        a: mat(4, 4, &A),
        e: b.clone(),
        b,
        g: DMatrix::identity(4, 4),
        c: mat(3, 4, &C),
        q: DMatrix::identity(4, 4) * cast::<T>(PROCESS_NOISE_PSD),
        r: DMatrix::identity(3, 3) * cast::<T>(measurement_variance),
    }
}

pub fn benchmark_model<T: Real>(measurement_variance: f64, dt: f64) -> Result<SystemModel<T>> {
    SystemModel::constant(benchmark_matrices(measurement_variance), cast(dt))
}

/// `d1`: 0.5 step on (3, 7]; `d2`: 0.4 sin(2π f0 (t - 2)) on (2, 6].
pub fn benchmark_signals(f0: f64) -> Vec<SignalSpec> {
    vec![
        SignalSpec::Step {
            t_on: 3.0,
            t_off: 7.0,
            amplitude: 0.5,
        },
        SignalSpec::WindowedSine {
            t_on: 2.0,
            t_off: 6.0,
            amplitude: 0.4,
            f0,
        },
    ]
}

/// The three reference cases: slow inputs, fast inputs, noisy measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    SlowInputs,
    FastInputs,
    NoisyMeasurements,
}

impl Case {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Case::SlowInputs),
            2 => Some(Case::FastInputs),
            3 => Some(Case::NoisyMeasurements),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Case::SlowInputs => 1,
            Case::FastInputs => 2,
            Case::NoisyMeasurements => 3,
        }
    }

    pub fn sine_frequency(self) -> f64 {
        match self {
            Case::FastInputs => 5.0,
            _ => 0.5,
        }
    }

    pub fn measurement_variance(self) -> f64 {
        match self {
            Case::NoisyMeasurements => 1e-5,
            _ => BASE_MEASUREMENT_NOISE,
        }
    }
}

pub fn default_seeds() -> Vec<u64> {
    (0..DEFAULT_SEED_COUNT).collect()
}

/// Scenario for one reference case, running the four-step and adaptive
/// augmented filters from `x̂0 = [10, 10, 10, 10]` against `x0 = 0`.
pub fn case_config<T: Real>(
    case: Case,
    seeds: Vec<u64>,
    dt: f64,
    duration: f64,
) -> Result<ScenarioConfig<T>> {
    let model = benchmark_model::<T>(case.measurement_variance(), dt)?;
    Ok(ScenarioConfig {
        name: format!("case{}", case.number()),
        model,
        inputs: benchmark_signals(case.sine_frequency()),
        known_input: DVector::zeros(2),
        duration,
        seeds,
        x0_true: DVector::zeros(4),
        x0_hat: DVector::from_element(4, cast(10.0)),
        p0: DMatrix::identity(4, 4) * cast::<T>(DEFAULT_P0_SCALE),
        estimators: vec![EstimatorKind::R4skf, EstimatorKind::A2kf],
        a2kf: A2kfConfig::default(),
        observer_gain: ObserverGainSpec::SteadyState,
        rmse_skip: DEFAULT_RMSE_SKIP,
    })
}
