//! TOML scenario files.
//!
//! ```toml
//! schema = 1
//!
//! [system]
//! dt = 0.01
//! A = [[0.0, 1.0], [0.0, 0.0]]
//! B = [[0.0], [0.0]]
//! E = [[1.0, 0.0], [0.0, 1.0]]
//! C = [[1.0, 0.0], [0.0, 1.0]]
//! Q = [[1e-4, 0.0], [0.0, 1e-4]]
//! R = [[1e-4, 0.0], [0.0, 1e-4]]
//!
//! [scenario]
//! duration = 5.0
//! seeds = [0, 1]
//! estimators = ["r4skf", "onestep"]
//!
//! [[scenario.inputs]]
//! kind = "step"
//! t_on = 1.0
//! t_off = 3.0
//! amplitude = 0.5
//! ```
//!
//! `G` defaults to the identity. Matrices are row-major arrays of rows.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use crate::a2kf::{A2kfConfig, NegativityRule};
use crate::model::{ConstantMatrices, SystemModel};
use crate::r4skf::DEFAULT_P0_SCALE;
use crate::scalar::{cast, Real};
use crate::sim::scenario::{
    EstimatorKind, ObserverGainSpec, ScenarioConfig, DEFAULT_RMSE_SKIP,
};
use crate::sim::signal::SignalSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Model(#[from] crate::error::Error),
}

fn field_err(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        message: message.into(),
    }
}

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema: u32,
    pub system: SystemSection,
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub a2kf: Option<A2kfSection>,
    #[serde(default)]
    pub observer: Option<ObserverSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub dt: Option<f64>,
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Option<Rows>,
    #[serde(rename = "E")]
    pub e: Rows,
    #[serde(rename = "G")]
    pub g: Option<Rows>,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
    #[serde(rename = "R")]
    pub r: Rows,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: Option<String>,
    pub duration: f64,
    pub seeds: Vec<u64>,
    pub x0_true: Option<Vec<f64>>,
    pub x0_hat: Option<Vec<f64>>,
    pub p0_scale: Option<f64>,
    pub known_input: Option<Vec<f64>>,
    pub estimators: Vec<EstimatorKind>,
    pub rmse_skip: Option<usize>,
    #[serde(default)]
    pub inputs: Vec<SignalSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct A2kfSection {
    pub window: Option<usize>,
    pub qd_floor: Option<f64>,
    pub qd_init: Option<f64>,
    pub rescale: Option<bool>,
    pub negativity: Option<NegativityRule>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    pub gain: GainEntry,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GainEntry {
    Named(String),
    Matrix(Rows),
}

fn matrix<T: Real>(field: &str, rows: &Rows) -> Result<DMatrix<T>, ConfigError> {
    let n = rows.len();
    let m = rows.first().map(Vec::len).unwrap_or(0);
    if n == 0 || m == 0 {
        return Err(field_err(field, "matrix must be non-empty"));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(field_err(
            field,
            format!("row {i} has {} entries, expected {m}", row.len()),
        ));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(field_err(field, "entries must be finite"));
    }
    Ok(DMatrix::from_row_iterator(
        n,
        m,
        rows.iter().flatten().map(|&v| cast::<T>(v)),
    ))
}

fn vector<T: Real>(field: &str, v: &[f64], len: usize) -> Result<DVector<T>, ConfigError> {
    if v.len() != len {
        return Err(field_err(
            field,
            format!("expected {len} entries, got {}", v.len()),
        ));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(field_err(field, "entries must be finite"));
    }
    Ok(DVector::from_iterator(len, v.iter().map(|&x| cast::<T>(x))))
}

fn check_shape<T: Real>(
    field: &str,
    m: &DMatrix<T>,
    expected: (usize, usize),
) -> Result<(), ConfigError> {
    if m.shape() != expected {
        return Err(field_err(
            field,
            format!("expected {}x{}, got {}x{}", expected.0, expected.1, m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text)?;
        if file.schema != SCHEMA_VERSION {
            return Err(field_err(
                "schema",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", file.schema),
            ));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn model<T: Real>(&self) -> Result<SystemModel<T>, ConfigError> {
        let s = &self.system;
        let dt = s.dt.unwrap_or(crate::model::DEFAULT_DT);
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(field_err("system.dt", "must be positive"));
        }
        let a = matrix::<T>("system.A", &s.a)?;
        let n_x = a.nrows();
        check_shape("system.A", &a, (n_x, n_x))?;
        let e = matrix::<T>("system.E", &s.e)?;
        check_shape("system.E", &e, (n_x, e.ncols()))?;
        let c = matrix::<T>("system.C", &s.c)?;
        check_shape("system.C", &c, (c.nrows(), n_x))?;
        let n_y = c.nrows();
        let b = match &s.b {
            Some(rows) => matrix::<T>("system.B", rows)?,
            None => DMatrix::zeros(n_x, 1),
        };
        check_shape("system.B", &b, (n_x, b.ncols()))?;
        let g = match &s.g {
            Some(rows) => matrix::<T>("system.G", rows)?,
            None => DMatrix::identity(n_x, n_x),
        };
        check_shape("system.G", &g, (n_x, g.ncols()))?;
        let q = matrix::<T>("system.Q", &s.q)?;
        check_shape("system.Q", &q, (g.ncols(), g.ncols()))?;
        let r = matrix::<T>("system.R", &s.r)?;
        check_shape("system.R", &r, (n_y, n_y))?;
        Ok(SystemModel::constant(
            ConstantMatrices { a, b, e, g, c, q, r },
            cast(dt),
        )?)
    }

    /// Builds the scenario; `name` is used when the file does not set one.
    pub fn scenario<T: Real>(&self, name: &str) -> Result<ScenarioConfig<T>, ConfigError> {
        let model = self.model::<T>()?;
        let dims = model.dims();
        let s = &self.scenario;
        if !(s.duration > 0.0 && s.duration.is_finite()) {
            return Err(field_err("scenario.duration", "must be positive"));
        }
        if s.seeds.is_empty() {
            return Err(field_err("scenario.seeds", "at least one seed is required"));
        }
        if s.estimators.is_empty() {
            return Err(field_err("scenario.estimators", "at least one estimator is required"));
        }
        let inputs = if s.inputs.is_empty() {
            vec![SignalSpec::Zero; dims.n_d]
        } else {
            s.inputs.clone()
        };
        if inputs.len() != dims.n_d {
            return Err(field_err(
                "scenario.inputs",
                format!("expected {} signals (one per column of E), got {}", dims.n_d, inputs.len()),
            ));
        }
        for (i, sig) in inputs.iter().enumerate() {
            sig.validate()
                .map_err(|m| field_err(format!("scenario.inputs[{i}]"), m))?;
        }
        let zeros_x = vec![0.0; dims.n_x];
        let x0_true = vector("scenario.x0_true", s.x0_true.as_deref().unwrap_or(&zeros_x), dims.n_x)?;
        let x0_hat = vector("scenario.x0_hat", s.x0_hat.as_deref().unwrap_or(&zeros_x), dims.n_x)?;
        let zeros_u = vec![0.0; dims.n_u];
        let known_input = vector(
            "scenario.known_input",
            s.known_input.as_deref().unwrap_or(&zeros_u),
            dims.n_u,
        )?;
        let p0_scale = s.p0_scale.unwrap_or(DEFAULT_P0_SCALE);
        if !(p0_scale > 0.0 && p0_scale.is_finite()) {
            return Err(field_err("scenario.p0_scale", "must be positive"));
        }

        let mut a2kf = A2kfConfig::<T>::default();
        if let Some(sec) = &self.a2kf {
            if let Some(w) = sec.window {
                if w == 0 {
                    return Err(field_err("a2kf.window", "must be at least 1"));
                }
                a2kf.window = w;
            }
            if let Some(f) = sec.qd_floor {
                if !(f > 0.0) {
                    return Err(field_err("a2kf.qd_floor", "must be positive"));
                }
                a2kf.qd_floor = cast(f);
            }
            if let Some(q) = sec.qd_init {
                if !(q >= 0.0) {
                    return Err(field_err("a2kf.qd_init", "must be non-negative"));
                }
                a2kf.qd_init = cast(q);
            }
            if let Some(r) = sec.rescale {
                a2kf.rescale = r;
            }
            if let Some(n) = sec.negativity {
                a2kf.negativity = n;
            }
        }

        let observer_gain = match self.observer.as_ref().map(|o| &o.gain) {
            None => ObserverGainSpec::SteadyState,
            Some(GainEntry::Named(n)) => match n.as_str() {
                "pinv" => ObserverGainSpec::Pinv,
                "steady_state" => ObserverGainSpec::SteadyState,
                other => {
                    return Err(field_err(
                        "observer.gain",
                        format!("unknown gain `{other}`, expected \"pinv\", \"steady_state\" or a matrix"),
                    ))
                }
            },
            Some(GainEntry::Matrix(rows)) => {
                let l = matrix::<T>("observer.gain", rows)?;
                check_shape("observer.gain", &l, (dims.n_x, dims.n_y))?;
                ObserverGainSpec::Matrix(l)
            }
        };

        let cfg = ScenarioConfig {
            name: s.name.clone().unwrap_or_else(|| name.to_string()),
            model,
            inputs,
            known_input,
            duration: s.duration,
            seeds: s.seeds.clone(),
            x0_true,
            x0_hat,
            p0: DMatrix::identity(dims.n_x, dims.n_x) * cast::<T>(p0_scale),
            estimators: s.estimators.clone(),
            a2kf,
            observer_gain,
            rmse_skip: s.rmse_skip.unwrap_or(DEFAULT_RMSE_SKIP),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
