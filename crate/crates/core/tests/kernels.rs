use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use uikf::a2kf::{estimate_qd, innovation_covariance, A2kfConfig, NegativityRule};
use uikf::linalg::{min_symmetric_eigenvalue, moore_penrose_pinv, numerical_rank};
use uikf::model::{check_rank_condition, discretize};
use uikf::onestep::one_step_error_cov;
use uikf::r4skf::{
    covariance_with_gain, estimate_unknown_input, gain_and_covariance, predict_no_input,
    predict_with_input, update, FilterState, R4skf,
};
use uikf::sim::benchmark::{benchmark_model, benchmark_signals};
use uikf::sim::truth::{gaussian, generate_truth, rng_for_seed};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-10.0..10.0f64, rows * cols)
        .prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

fn shaped_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c))
}

/// Product of random `r×k` and `k×c` factors, so rank ≤ k.
fn low_rank_matrix() -> impl Strategy<Value = DMatrix<f64>> {
    (2usize..6, 2usize..6, 1usize..3)
        .prop_flat_map(|(r, c, k)| (matrix(r, k), matrix(k, c)))
        .prop_map(|(a, b)| a * b)
}

fn spd(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    matrix(n, n).prop_map(move |m| &m * m.transpose() + DMatrix::identity(n, n) * 0.1)
}

fn penrose_residual(m: &DMatrix<f64>) -> f64 {
    let p = moore_penrose_pinv(m, 1e-10);
    let scale = m.norm().max(1.0) * p.norm().max(1.0);
    let r1 = (m * &p * m - m).norm() / m.norm().max(1e-300);
    let r2 = (&p * m * &p - &p).norm() / p.norm().max(1.0);
    let mp = m * &p;
    let pm = &p * m;
    let r3 = (&mp - mp.transpose()).norm() / scale;
    let r4 = (&pm - pm.transpose()).norm() / scale;
    r1.max(r2).max(r3).max(r4)
}

/// Exact integer rank of a matrix with two columns, by minors.
fn minor_rank(rows: &[[i64; 2]]) -> usize {
    let mut rank = 0;
    if rows.iter().any(|r| r[0] != 0 || r[1] != 0) {
        rank = 1;
    }
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            if rows[i][0] * rows[j][1] - rows[i][1] * rows[j][0] != 0 {
                return 2;
            }
        }
    }
    rank
}

fn int_rows(n: usize) -> impl Strategy<Value = Vec<[i64; 2]>> {
    prop::collection::vec(prop::array::uniform2(-3i64..=3), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn penrose_identities_full(m in shaped_matrix()) {
        prop_assert!(penrose_residual(&m) <= 1e-10);
    }

    #[test]
    fn penrose_identities_rank_deficient(m in low_rank_matrix()) {
        prop_assert!(penrose_residual(&m) <= 1e-10);
    }

    #[test]
    fn pinv_left_inverse_for_full_column_rank(m in matrix(5, 3)) {
        prop_assume!(m.clone().singular_values().min() > 1e-3);
        let p = moore_penrose_pinv(&m, 1e-10);
        prop_assert!((&p * &m - DMatrix::identity(3, 3)).norm() <= 1e-10);
    }

    #[test]
    fn rank_matches_minors(rows3 in int_rows(3), rows4 in int_rows(4)) {
        for rows in [rows3, rows4] {
            let m = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j] as f64);
            prop_assert_eq!(numerical_rank(&m, 1e-10), minor_rank(&rows));
            // C = I makes the rank condition a pure rank test on E.
            let ok = check_rank_condition(&DMatrix::identity(rows.len(), rows.len()), &m, 1e-10).unwrap();
            prop_assert_eq!(ok, minor_rank(&rows) == 2);
        }
    }

    #[test]
    fn dual_form_update(p in spd(4), x in prop::collection::vec(-5.0..5.0f64, 4), y in prop::collection::vec(-5.0..5.0f64, 3)) {
        let model = benchmark_model::<f64>(1e-7, 0.01).unwrap();
        let dm = discretize(&model, 0.0);
        let (c, q, r) = (model.c(1), model.q(0.0), model.r(1));
        let x = DVector::from_vec(x);
        let y = DVector::from_vec(y);
        let x_star = predict_no_input(&x, &DVector::zeros(2), &dm).unwrap();
        let est = estimate_unknown_input(&y, &x_star, &dm, &c).unwrap();
        let x_pred = predict_with_input(&x_star, &est.d_hat, &dm).unwrap();
        let gc = gain_and_covariance(&p, &dm, &c, &q, &r, &est.f_d).unwrap();
        let four_step = update(&x_pred, &y, &gc.k, &c).unwrap();
        let dual = &x_star + &gc.l * &est.gamma;
        prop_assert!((four_step - dual).amax() <= 1e-10 * x_star.amax().max(1.0));
    }

    #[test]
    fn joseph_form_symmetric_psd_for_any_gain(p in spd(4), k in matrix(4, 3)) {
        let model = benchmark_model::<f64>(1e-7, 0.01).unwrap();
        let dm = discretize(&model, 0.0);
        let (c, q, r) = (model.c(1), model.q(0.0), model.r(1));
        let f_d = moore_penrose_pinv(&(&c * &dm.e_d), 1e-10);
        for gain in [None, Some(k)] {
            let gc = match gain {
                None => gain_and_covariance(&p, &dm, &c, &q, &r, &f_d).unwrap(),
                Some(k) => covariance_with_gain(&p, &dm, &c, &q, &r, &f_d, &k).unwrap(),
            };
            let sym = (&gc.p_post - gc.p_post.transpose()).amax();
            prop_assert!(sym <= 1e-12 * gc.p_post.amax().max(1.0));
            prop_assert!(min_symmetric_eigenvalue(&gc.p_post) >= -1e-10 * gc.p_post.trace());
        }
    }

    #[test]
    fn qd_estimate_always_psd(m in matrix(3, 3), shift in -1e-3..1e-3f64, innovation_rule in any::<bool>()) {
        let model = benchmark_model::<f64>(1e-7, 0.01).unwrap();
        let dm = discretize(&model, 0.0);
        let cgamma = (&m + m.transpose()) * 1e-4 + DMatrix::identity(3, 3) * shift;
        let cfg = A2kfConfig {
            negativity: if innovation_rule { NegativityRule::Innovation } else { NegativityRule::Transformed },
            ..A2kfConfig::default()
        };
        let qd = estimate_qd(&cgamma, &dm, &model.c(1), &model.q(0.0), &model.r(1), &cfg);
        prop_assert_eq!(&qd, &qd.transpose());
        prop_assert!(qd.diagonal().iter().all(|&v| v >= 0.0));
        prop_assert!(min_symmetric_eigenvalue(&qd) >= -1e-12 * qd.amax().max(1e-12));
    }
}

#[test]
fn benchmark_extraction_matches_normal_equations() {
    let model = benchmark_model::<f64>(1e-7, 0.01).unwrap();
    let dm = discretize(&model, 0.0);
    let m = model.c(1) * &dm.e_d;
    assert_eq!(m.row(2).amax(), 0.0);
    let mtm = m.transpose() * &m;
    let oracle = mtm.try_inverse().unwrap() * m.transpose();
    let p = moore_penrose_pinv(&m, 1e-10);
    assert!((&p - &oracle).amax() <= 1e-10 * oracle.amax());
}

#[test]
fn posterior_trace_below_prior_trace_each_step() {
    let model = benchmark_model::<f64>(1e-7, 0.01).unwrap();
    let truth = generate_truth(
        &model,
        &benchmark_signals(0.5),
        &DVector::zeros(2),
        &DVector::zeros(4),
        1000,
        5,
    )
    .unwrap();
    let filter = R4skf::new();
    let mut state = FilterState::with_default_covariance(DVector::zeros(4), model.dims());
    for k in 1..=1000 {
        let (next, rep) = filter.step(&state, &truth.u[k - 1], &truth.y[k], &model).unwrap();
        assert!(
            next.p.trace() < rep.p_pred.trace(),
            "step {k}: {} >= {}",
            next.p.trace(),
            rep.p_pred.trace()
        );
        state = next;
    }
}

fn sample_covariance(samples: &[DVector<f64>]) -> DMatrix<f64> {
    let n = samples[0].len();
    let mut acc = DMatrix::zeros(n, n);
    for s in samples {
        acc += s * s.transpose();
    }
    acc / samples.len() as f64
}

#[test]
fn one_step_error_cov_monte_carlo() {
    let mut rng = rng_for_seed(42);
    let c = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, -0.3, 0.1, 1.5, 0.4, -0.2, 0.3, 1.0]);
    let r = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.0, 0.2, 0.5, 0.1, 0.0, 0.1, 2.0]);
    let lu = c.clone().lu();
    let errs: Vec<DVector<f64>> = (0..100_000)
        .map(|_| lu.solve(&gaussian(&mut rng, &r)).unwrap())
        .collect();
    let sample = sample_covariance(&errs);
    let exact = one_step_error_cov(&c, &r).unwrap();
    assert!((&sample - &exact).norm() <= 0.05 * exact.norm());
}

#[test]
fn innovation_covariance_monte_carlo() {
    let mut rng = rng_for_seed(7);
    let r = DMatrix::from_row_slice(2, 2, &[0.3, -0.1, -0.1, 0.2]);
    let draws: Vec<DVector<f64>> = (0..100_000).map(|_| gaussian(&mut rng, &r)).collect();
    let est = innovation_covariance(draws.iter()).unwrap();
    assert!((&est - &r).norm() <= 0.05 * r.norm());
}

#[test]
fn injected_input_recovered_without_noise() {
    // Square case: with exact state and no noise, d̂ equals the applied d.
    let model = uikf::onestep::square_test_system::<f64>();
    let dm = discretize(&model, 0.0);
    let c = model.c(1);
    let x = DVector::from_vec(vec![0.3, -1.2]);
    let d = DVector::from_vec(vec![0.7, -0.25]);
    let x_next = &dm.a_d * &x + &dm.e_d * &d;
    let y = &c * &x_next;
    let x_star = predict_no_input(&x, &DVector::zeros(1), &dm).unwrap();
    let est = estimate_unknown_input(&y, &x_star, &dm, &c).unwrap();
    assert!((&est.d_hat - &d).amax() <= 1e-8);
}
