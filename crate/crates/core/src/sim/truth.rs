use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dims, Error, Result};
use crate::linalg::{is_finite, psd_sqrt};
use crate::model::{discretize, SystemModel};
use crate::scalar::{cast, to_f64, Real};
use crate::sim::signal::SignalSpec;

/// Sampled truth trajectory; every series is indexed by step `k = 0..=steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth<T: Real> {
    pub t: Vec<f64>,
    pub x: Vec<DVector<T>>,
    /// `d(t_k)`.
    pub d: Vec<DVector<T>>,
    /// `u(t_k)`.
    pub u: Vec<DVector<T>>,
    /// `y_k = C_k x_k + v_k`; `y[0]` is drawn but not used by the filters.
    pub y: Vec<DVector<T>>,
}

impl<T: Real> Truth<T> {
    pub fn steps(&self) -> usize {
        self.x.len() - 1
    }
}

pub fn rng_for_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn standard_normal_vector<T: Real, R: Rng>(rng: &mut R, n: usize) -> DVector<T> {
    DVector::from_iterator(n, (0..n).map(|_| cast::<T>(rng.sample(StandardNormal))))
}

/// Draws `N(0, cov)` with a PSD square root of `cov`.
pub fn gaussian<T: Real, R: Rng>(rng: &mut R, cov: &DMatrix<T>) -> DVector<T> {
    let z = standard_normal_vector(rng, cov.nrows());
    psd_sqrt(cov) * z
}

pub fn input_vector<T: Real>(inputs: &[SignalSpec], t: f64) -> DVector<T> {
    DVector::from_iterator(inputs.len(), inputs.iter().map(|s| cast::<T>(s.value(t))))
}

/// Euler-Maruyama simulation of the plant at its own sample period.
///
/// `x_k = A_d x_{k-1} + B_d u_{k-1} + E_d d_{k-1} + G_d w_{k-1}` with
/// `w ~ N(0, Q / dt)`, so the discrete process noise has covariance
/// `G Q G^T dt`. Deterministic for a given seed.
pub fn generate_truth<T: Real>(
    model: &SystemModel<T>,
    inputs: &[SignalSpec],
    known_input: &DVector<T>,
    x0: &DVector<T>,
    steps: usize,
    seed: u64,
) -> Result<Truth<T>> {
    let dims = model.dims();
    check_dims("truth: x0", (dims.n_x, 1), x0.shape())?;
    check_dims("truth: known input", (dims.n_u, 1), known_input.shape())?;
    check_dims("truth: unknown-input signals", (dims.n_d, 1), (inputs.len(), 1))?;

    let dt = to_f64(model.dt());
    let mut rng = rng_for_seed(seed);
    let mut t = Vec::with_capacity(steps + 1);
    let mut xs = Vec::with_capacity(steps + 1);
    let mut ds = Vec::with_capacity(steps + 1);
    let mut us = Vec::with_capacity(steps + 1);
    let mut ys = Vec::with_capacity(steps + 1);

    let v0 = gaussian(&mut rng, &model.r(0));
    ys.push(model.c(0) * x0 + v0);
    xs.push(x0.clone());
    t.push(0.0);
    ds.push(input_vector(inputs, 0.0));
    us.push(known_input.clone());

    for k in 1..=steps {
        let t_prev = model.step_start(k);
        let dm = discretize(model, t_prev);
        let q_disc = model.q(t_prev) / model.dt();
        let w = gaussian(&mut rng, &q_disc);
        let v = gaussian(&mut rng, &model.r(k));

        let x_prev = &xs[k - 1];
        let x = &dm.a_d * x_prev + &dm.b_d * &us[k - 1] + &dm.e_d * &ds[k - 1] + &dm.g_d * w;
        if !is_finite(&x) {
            return Err(Error::NonFinite {
                context: "truth state",
                step: k,
            });
        }
        let tk = k as f64 * dt;
        ys.push(model.c(k) * &x + v);
        xs.push(x);
        t.push(tk);
        ds.push(input_vector(inputs, tk));
        us.push(known_input.clone());
    }
    Ok(Truth {
        t,
        x: xs,
        d: ds,
        u: us,
        y: ys,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::benchmark::{benchmark_model, benchmark_signals};

    #[test]
    fn noiseless_equilibrium_stays_at_zero() {
        let mut m = crate::sim::benchmark::benchmark_matrices::<f64>(1e-7);
        m.q = DMatrix::zeros(4, 4);
        let model = crate::model::SystemModel::constant(m, 0.01).unwrap();
        // R must stay positive definite; scale it to nothing observable
        let model = model.with_measurement_noise_scale(0.0);
        let truth = generate_truth(
            &model,
            &[SignalSpec::Zero, SignalSpec::Zero],
            &DVector::zeros(2),
            &DVector::zeros(4),
            100,
            3,
        )
        .unwrap();
        assert!(truth.x.iter().all(|x| x.iter().all(|&v| v == 0.0)));
        assert!(truth.y.iter().all(|y| y.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn step_boundary_on_grid() {
        let model = benchmark_model::<f64>(1e-7, 0.01).unwrap();
        let truth = generate_truth(
            &model,
            &benchmark_signals(0.5),
            &DVector::zeros(2),
            &DVector::zeros(4),
            400,
            1,
        )
        .unwrap();
        assert_eq!(truth.d[300][0], 0.0);
        assert_eq!(truth.d[301][0], 0.5);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let model = benchmark_model::<f64>(1e-7, 0.01).unwrap();
        let run = |seed| {
            generate_truth(
                &model,
                &benchmark_signals(0.5),
                &DVector::zeros(2),
                &DVector::zeros(4),
                200,
                seed,
            )
            .unwrap()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11).y, run(12).y);
    }

    #[test]
    fn measurement_noise_matches_covariance() {
        let r = DMatrix::from_diagonal(&DVector::from_vec(vec![1e-7, 4e-7, 1e-5]));
        let mut rng = rng_for_seed(99);
        let n = 100_000;
        let mut acc = DVector::<f64>::zeros(3);
        for _ in 0..n {
            let v: DVector<f64> = gaussian(&mut rng, &r);
            acc += v.component_mul(&v);
        }
        for i in 0..3 {
            let var = acc[i] / n as f64;
            assert!((var / r[(i, i)] - 1.0).abs() < 0.03, "channel {i}: {var}");
        }
    }
}
