use langlie_core::design::{run_design, Design};
use langlie_core::estimation::{check_separation, score};
use langlie_core::harness::stats::median;
use langlie_core::rng::substream;
use langlie_core::{
    estimate_median, fit_mle, log_likelihood, Bracket, Error, Family, Outcome, SensitivityModel, TrialHistory,
};
use proptest::prelude::*;
use rand::Rng;

const X20: [f64; 20] = [
    0.0, -0.75, 0.375, -0.1875, -0.84375, 0.09375, -0.375, -0.5625, 0.28125, -0.140625, -0.6, 0.55, -0.25, 0.15, -0.45,
    -0.05, 0.7, -0.95, 0.4, -0.3,
];
const Y20: [i64; 20] = [1, -1, 1, -1, -1, 1, 1, -1, 1, -1, -1, 1, -1, 1, 1, -1, 1, -1, -1, 1];

/// (alpha, beta, log-likelihood) from scipy (Nelder-Mead then BFGS).
const SCIPY_PROBIT: (f64, f64, f64) = (
    0.266_155_438_309_130_35,
    1.881_433_422_763_893_8,
    -10.495_538_857_358_17,
);
const SCIPY_LOGISTIC: (f64, f64, f64) = (0.455_019_535_309_934_3, 3.087_177_879_825_025, -10.540_354_802_288_471);

fn bracket() -> Bracket {
    Bracket::new(-1.5, 1.5).unwrap()
}

fn dataset(shift: f64, scale: f64) -> TrialHistory {
    let br = Bracket::new(-1.5 * scale + shift, 1.5 * scale + shift).unwrap();
    TrialHistory::from_parts(
        Some(br),
        X20.iter().map(|x| x * scale + shift).collect(),
        Y20.iter().map(|&v| Outcome::from_value(v).unwrap()).collect(),
    )
    .unwrap()
}

/// Coarse-to-fine grid search for the maximiser of the log-likelihood.
fn grid_argmax(h: &TrialHistory, family: Family) -> (f64, f64) {
    let (mut ca, mut cb) = (0.0, 5.0);
    let (mut wa, mut wb) = (10.0, 10.0);
    for _ in 0..40 {
        let mut best = (f64::NEG_INFINITY, ca, cb);
        for i in 0..=20 {
            for j in 0..=20 {
                let a = ca + wa * (i as f64 / 20.0 - 0.5);
                let b = cb + wb * (j as f64 / 20.0 - 0.5);
                if b <= 0.0 {
                    continue;
                }
                let l = log_likelihood(a, b, h, family).unwrap();
                if l > best.0 {
                    best = (l, a, b);
                }
            }
        }
        (ca, cb) = (best.1, best.2);
        wa *= 0.5;
        wb *= 0.5;
    }
    (ca, cb)
}

#[test]
fn fit_matches_grid_search_oracle() {
    let h = dataset(0.0, 1.0);
    for family in [Family::Probit, Family::Logistic] {
        let fit = fit_mle(&h, family).unwrap();
        let (ga, gb) = grid_argmax(&h, family);
        assert!(fit.converged);
        assert!(
            (fit.alpha_hat - ga).abs() < 1e-3,
            "{family}: alpha {} vs grid {ga}",
            fit.alpha_hat
        );
        assert!(
            (fit.beta_hat - gb).abs() < 1e-3,
            "{family}: beta {} vs grid {gb}",
            fit.beta_hat
        );
    }
}

#[test]
fn fit_matches_frozen_scipy_values() {
    let h = dataset(0.0, 1.0);
    for (family, (a, b, l)) in [(Family::Probit, SCIPY_PROBIT), (Family::Logistic, SCIPY_LOGISTIC)] {
        let fit = fit_mle(&h, family).unwrap();
        assert!((fit.alpha_hat - a).abs() < 1e-6, "{family}");
        assert!((fit.beta_hat - b).abs() < 1e-6, "{family}");
        assert!((fit.log_likelihood - l).abs() < 1e-9, "{family}");
        assert!((estimate_median(&fit).unwrap() - (-a / b)).abs() < 1e-6);
        assert!(fit.final_gradient_norm <= 1e-8 * fit.log_likelihood.abs().max(1.0));
    }
}

#[test]
fn gradient_matches_central_differences() {
    let h = dataset(0.0, 1.0);
    let mut rng = substream(11, 0);
    for k in 0..100 {
        let family = if k % 2 == 0 { Family::Probit } else { Family::Logistic };
        let a: f64 = rng.random_range(-3.0..3.0);
        let b: f64 = rng.random_range(0.1..10.0);
        let g = score(a, b, &h, family).unwrap();
        let eps = 1e-5;
        let fd_a = (log_likelihood(a + eps, b, &h, family).unwrap() - log_likelihood(a - eps, b, &h, family).unwrap())
            / (2.0 * eps);
        let fd_b = (log_likelihood(a, b + eps, &h, family).unwrap() - log_likelihood(a, b - eps, &h, family).unwrap())
            / (2.0 * eps);
        let err = (g[0] - fd_a).hypot(g[1] - fd_b);
        let norm = g[0].hypot(g[1]);
        assert!(
            err <= 1e-6 * norm,
            "({a}, {b}) {family}: |g - fd| = {err}, |g| = {norm}"
        );
    }
}

#[test]
fn shift_and_scale_equivariance() {
    let base = estimate_median(&fit_mle(&dataset(0.0, 1.0), Family::Probit).unwrap()).unwrap();
    for (s, k) in [(0.7, 1.0), (-2.5, 1.0), (0.0, 3.0), (0.0, 0.25), (1.25, 2.0)] {
        let xi = estimate_median(&fit_mle(&dataset(s, k), Family::Probit).unwrap()).unwrap();
        assert!(
            (xi - (k * base + s)).abs() < 1e-6,
            "shift {s}, scale {k}: {xi} vs {}",
            k * base + s
        );
    }
}

#[test]
fn all_success_is_separation() {
    let h = TrialHistory::from_parts(Some(bracket()), vec![0.0, 0.5, -0.5], vec![Outcome::Success; 3]).unwrap();
    assert!(matches!(fit_mle(&h, Family::Probit), Err(Error::Separation(_))));
    assert!(matches!(check_separation(&h), Err(Error::Separation(_))));
}

#[test]
fn uniform_design_is_consistent_at_desk_scale() {
    let model = SensitivityModel::probit(3.333, 9.999).unwrap();
    let br = bracket();
    // With beta near 10 only a handful of uniform inputs fall in the
    // transition region, so a few datasets are separated.
    let mut separated = 0;
    let mut estimates = Vec::new();
    for seed in 0..100 {
        let mut rng = substream(seed, 0);
        let mut h = TrialHistory::new(br);
        for _ in 0..200 {
            let x = rng.random_range(-1.5..1.5);
            h.push(x, model.draw_outcome(x, &mut rng)).unwrap();
        }
        match fit_mle(&h, Family::Probit) {
            Ok(fit) => estimates.push(estimate_median(&fit).unwrap()),
            Err(Error::Separation(_)) => separated += 1,
            Err(e) => panic!("seed {seed}: {e}"),
        }
    }
    eprintln!("{separated} of 100 uniform designs separated");
    assert!(separated <= 10, "{separated} separated datasets");
    let m = median(&estimates);
    assert!((m - model.median()).abs() <= 0.05, "median estimate {m}");
}

#[test]
fn fifty_trial_langlie_session_estimate() {
    let model = SensitivityModel::probit(3.333, 9.999).unwrap();
    let mut estimates = Vec::new();
    for seed in 0..100 {
        let h = run_design(&model, &Design::Langlie(bracket()), 50, &mut substream(seed, 0)).unwrap();
        if let Ok(fit) = fit_mle(&h, Family::Probit) {
            estimates.push(estimate_median(&fit).unwrap());
        }
    }
    assert!(estimates.len() >= 90, "{} of 100 sessions estimable", estimates.len());
    let m = median(&estimates);
    assert!((m - model.median()).abs() <= 0.15, "median estimate {m}");
}

proptest! {
    #[test]
    fn flipping_outcomes_and_negating_parameters_preserves_likelihood(
        a in -3.0f64..3.0,
        b in 0.1f64..10.0,
        logistic in any::<bool>(),
    ) {
        let family = if logistic { Family::Logistic } else { Family::Probit };
        let h = dataset(0.0, 1.0);
        let flipped = TrialHistory::from_parts(
            h.bracket(),
            h.x().to_vec(),
            h.y().iter().map(|y| y.flipped()).collect(),
        ).unwrap();
        let l1 = log_likelihood(a, b, &h, family).unwrap();
        let l2 = log_likelihood(-a, -b, &flipped, family).unwrap();
        prop_assert!((l1 - l2).abs() <= 1e-12 * l1.abs().max(1.0));
    }

    #[test]
    fn converged_fits_meet_gradient_tolerance(seed in 0u64..500, n in 20usize..120) {
        let model = SensitivityModel::logistic(0.5, 2.0).unwrap();
        let h = run_design(&model, &Design::Langlie(Bracket::new(-3.0, 2.0).unwrap()), n, &mut substream(seed, 1)).unwrap();
        if let Ok(fit) = fit_mle(&h, Family::Logistic) {
            prop_assert!(fit.converged);
            prop_assert!(fit.final_gradient_norm <= 1e-8 * fit.log_likelihood.abs().max(1.0));
        }
    }
}
