//! Unknown-input observer: the deterministic counterpart of the four-step
//! filter, with a fixed gain `L` and no covariance bookkeeping.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dims, Error, Result};
use crate::linalg::{is_finite, moore_penrose_pinv, spectral_radius, DEFAULT_RANK_TOL};
use crate::model::{discretize, DiscretizedModel, SystemModel};
use crate::r4skf::{extraction_matrix, stability_matrices};
use crate::scalar::{cast, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState<T: Real> {
    /// Input-free prediction.
    pub w: DVector<T>,
    /// Input-corrected prediction.
    pub z: DVector<T>,
    pub x_hat: DVector<T>,
    pub d_hat: DVector<T>,
    pub k: usize,
}

impl<T: Real> ObserverState<T> {
    /// `w(0) = z(0) = x̂(0)`, `d̂ = 0`.
    pub fn new(x0: DVector<T>, n_d: usize) -> Self {
        Self {
            w: x0.clone(),
            z: x0.clone(),
            x_hat: x0,
            d_hat: DVector::zeros(n_d),
            k: 0,
        }
    }
}

/// One observer update on a discretized step:
///
/// ```text
/// w  = A_d x̂ + B_d u
/// d̂  = F_d (y - C w)
/// z  = w + E_d d̂
/// x̂⁺ = z + L (y - C z)
/// ```
pub fn observer_step<T: Real>(
    state: &ObserverState<T>,
    y: &DVector<T>,
    u: &DVector<T>,
    dm: &DiscretizedModel<T>,
    c: &DMatrix<T>,
    l: &DMatrix<T>,
    f_d: &DMatrix<T>,
) -> Result<ObserverState<T>> {
    let n_x = dm.n_x();
    check_dims("observer: x̂", (n_x, 1), state.x_hat.shape())?;
    check_dims("observer: u", (dm.b_d.ncols(), 1), u.shape())?;
    check_dims("observer: C", (y.len(), n_x), c.shape())?;
    check_dims("observer: L", (n_x, y.len()), l.shape())?;
    check_dims("observer: F_d", (dm.e_d.ncols(), y.len()), f_d.shape())?;

    let w = &dm.a_d * &state.x_hat + &dm.b_d * u;
    let d_hat = f_d * (y - c * &w);
    let z = &w + &dm.e_d * &d_hat;
    let x_hat = &z + l * (y - c * &z);
    Ok(ObserverState {
        w,
        z,
        x_hat,
        d_hat,
        k: state.k + 1,
    })
}

/// `ρ((I - L C) Ā)`; the observer error recursion is stable iff this is < 1.
pub fn verify_observer_stability<T: Real>(
    dm: &DiscretizedModel<T>,
    c: &DMatrix<T>,
    f_d: &DMatrix<T>,
    l: &DMatrix<T>,
) -> T {
    spectral_radius(&stability_matrices(dm, c, f_d, l).a_tilde)
}

/// Observer with a fixed gain, stepping directly on a [`SystemModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct UnknownInputObserver<T: Real> {
    pub gain: DMatrix<T>,
}

impl<T: Real> UnknownInputObserver<T> {
    pub fn new(gain: DMatrix<T>) -> Self {
        Self { gain }
    }

    /// `L = C^+` evaluated at step 1; equals `C^{-1}` for square invertible `C`.
    pub fn pinv_gain(model: &SystemModel<T>) -> Self {
        Self::new(moore_penrose_pinv(&model.c(1), cast(DEFAULT_RANK_TOL)))
    }

    pub fn step(
        &self,
        state: &ObserverState<T>,
        u: &DVector<T>,
        y: &DVector<T>,
        model: &SystemModel<T>,
    ) -> Result<ObserverState<T>> {
        let k = state.k + 1;
        let dm = discretize(model, model.step_start(k));
        let c = model.c(k);
        let f_d = extraction_matrix(&c, &dm.e_d)?;
        let next = observer_step(state, y, u, &dm, &c, &self.gain, &f_d)?;
        if !is_finite(&next.x_hat) {
            return Err(Error::NonFinite {
                context: "observer estimate",
                step: k,
            });
        }
        Ok(next)
    }

    /// Error-recursion spectral radius at step 1 (constant plants).
    pub fn spectral_radius(&self, model: &SystemModel<T>) -> Result<T> {
        let dm = discretize(model, model.step_start(1));
        let c = model.c(1);
        let f_d = extraction_matrix(&c, &dm.e_d)?;
        Ok(verify_observer_stability(&dm, &c, &f_d, &self.gain))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::onestep::square_test_system;
    use crate::r4skf::steady_state_gain;
    use crate::sim::benchmark::benchmark_model;

    #[test]
    fn zero_gain_noise_free_tracks_truth() {
        let model = benchmark_model::<f64>(1e-7, 0.01).unwrap();
        let obs = UnknownInputObserver::new(DMatrix::zeros(4, 3));
        let mut x = DVector::from_vec(vec![0.1, -0.2, 0.05, 0.0]);
        let mut state = ObserverState::new(x.clone(), 2);
        let d = DVector::from_vec(vec![0.3, -0.1]);
        for k in 1..=100 {
            let dm = discretize(&model, model.step_start(k));
            x = &dm.a_d * &x + &dm.e_d * &d;
            let y = model.c(k) * &x;
            state = obs.step(&state, &DVector::zeros(2), &y, &model).unwrap();
            assert!((&state.x_hat - &x).amax() < 1e-9 * x.amax().max(1.0));
        }
    }

    #[test]
    fn stability_radius_special_cases() {
        let sq = square_test_system::<f64>();
        let obs = UnknownInputObserver::pinv_gain(&sq);
        assert!(obs.spectral_radius(&sq).unwrap() < 1e-12);

        let model = benchmark_model::<f64>(1e-7, 0.01).unwrap();
        let dm = discretize(&model, 0.0);
        let c = model.c(1);
        let f_d = extraction_matrix(&c, &dm.e_d).unwrap();
        let zero = verify_observer_stability(&dm, &c, &f_d, &DMatrix::zeros(4, 3));
        let a_bar = stability_matrices(&dm, &c, &f_d, &DMatrix::zeros(4, 3)).a_bar;
        assert!((zero - spectral_radius(&a_bar)).abs() < 1e-14);

        let k = steady_state_gain(&model, &(DMatrix::identity(4, 4) * 10.0), 1000).unwrap();
        assert!(verify_observer_stability(&dm, &c, &f_d, &k) < 1.0);
    }
}
