//! Joint state and unknown-input estimation for continuous-discrete linear
//! systems.
//!
//! The estimators are generic over the scalar type (`f32` or `f64`); the
//! `*F64`/`*F32` aliases below fix it.

// `!(x > 0)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod a2kf;
pub mod cdekf;
pub mod checks;
pub mod config;
pub mod error;
pub mod linalg;
pub mod model;
pub mod onestep;
pub mod r4skf;
pub mod scalar;
pub mod sim;
pub mod uio;

pub use a2kf::{A2kf, A2kfConfig, A2kfReport, A2kfState, NegativityRule};
pub use config::{ConfigError, ConfigFile};
pub use cdekf::{CdFilter, Integrator, NonlinearModel};
pub use error::{Error, Result};
pub use model::{discretize, DEFAULT_DT, ConstantMatrices, Dims, DiscretizedModel, SystemModel};
pub use onestep::{one_step_error_cov, one_step_estimate, SquareCaseModel};
pub use r4skf::{FilterState, GainPolicy, R4skf, StepReport};
pub use scalar::Real;
pub use uio::{ObserverState, UnknownInputObserver};

pub type SystemModelF64 = SystemModel<f64>;
pub type SystemModelF32 = SystemModel<f32>;
pub type FilterStateF64 = FilterState<f64>;
pub type FilterStateF32 = FilterState<f32>;
pub type R4skfF64 = R4skf<f64>;
pub type R4skfF32 = R4skf<f32>;
pub type A2kfF64 = A2kf<f64>;
pub type A2kfF32 = A2kf<f32>;
pub type A2kfStateF64 = A2kfState<f64>;
pub type A2kfStateF32 = A2kfState<f32>;
pub type ObserverF64 = UnknownInputObserver<f64>;
pub type ObserverF32 = UnknownInputObserver<f32>;
pub type NonlinearModelF64 = NonlinearModel<f64>;
pub type NonlinearModelF32 = NonlinearModel<f32>;
pub type CdFilterF64 = CdFilter<f64>;
pub type CdFilterF32 = CdFilter<f32>;
