//! Independent reference computations checked against the library.

use lqrbo_core::seed::{rng_from_seed, standard_normal, uniform};
use lqrbo_core::*;
use nalgebra::{DMatrix, DVector};

fn reference_box() -> UncertainLinearModel {
    UncertainLinearModel::new(0.8, 1.0, 0.9, 1.1, 1.0).unwrap()
}

fn effective_domain() -> ControllerDomain {
    let configured = ControllerDomain::new(-1.64, -0.001).unwrap();
    configured.intersect(&stability_interval_with_margin(&reference_box(), 5e-4).unwrap()).unwrap()
}

/// `int_{a_lo}^{a_hi} da / ((1 - (a + b f)^2)(1 - (a + b g)^2))` by partial
/// fractions over the four simple poles in `a`.
fn inner_integral(b: f64, f: f64, g: f64, a_lo: f64, a_hi: f64) -> f64 {
    if f == g {
        // Antiderivative of 1 / (1 - s^2)^2.
        let anti = |s: f64| s / (2.0 * (1.0 - s * s)) + 0.25 * ((1.0 + s) / (1.0 - s)).ln();
        return anti(a_hi + b * f) - anti(a_lo + b * f);
    }
    let poles = [1.0 - b * f, -1.0 - b * f, 1.0 - b * g, -1.0 - b * g];
    let mut total = 0.0;
    for (k, &pk) in poles.iter().enumerate() {
        let denom: f64 = poles.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &pj)| pk - pj).product();
        total += ((a_hi - pk) / (a_lo - pk)).abs().ln() / denom;
    }
    total
}

/// Nonparametric kernel from the analytic inner integral and a composite
/// Gauss–Legendre outer integral.
fn nonparametric_oracle(f: f64, g: f64, m: &UncertainLinearModel, sigma_n_sq: f64, cost: &CostSpec) -> f64 {
    let rule = quadrature::GaussLegendre::new(20);
    let panels = 64;
    let h = (m.b_max - m.b_min) / panels as f64;
    let mut outer = 0.0;
    for p in 0..panels {
        let lo = m.b_min + h * p as f64;
        outer += rule.integrate(lo, lo + h, |b| inner_integral(b, f, g, m.a_min, m.a_max));
    }
    sigma_n_sq * m.v * m.v * cost.stage_weight(f) * cost.stage_weight(g) * outer
}

#[test]
fn nonparametric_matches_partial_fraction_oracle() {
    let m = reference_box();
    let cost = CostSpec::default();
    let dom = effective_domain();
    let k = NonparametricLqr::new(20.0, m, cost).unwrap();
    let mut rng = rng_from_seed(101);
    let mut pairs: Vec<(f64, f64)> =
        (0..30).map(|_| (uniform(&mut rng, dom.lo, dom.hi), uniform(&mut rng, dom.lo, dom.hi))).collect();
    pairs.extend([(dom.lo, dom.lo), (dom.hi, dom.hi), (dom.lo, dom.hi), (-0.82, -0.82)]);
    for (f, g) in pairs {
        if f != g && (f - g).abs() < 1e-3 {
            continue;
        }
        let got = k.eval(f, g).unwrap();
        let want = nonparametric_oracle(f, g, &m, 20.0, &cost);
        let rel = (got - want).abs() / want;
        assert!(rel < 1e-6, "({f}, {g}): {got} vs {want}, rel {rel:e}");
    }
}

#[test]
fn nonparametric_matches_oracle_on_asymmetric_weights() {
    let m = UncertainLinearModel::new(0.5, 0.7, 0.6, 1.3, 0.4).unwrap();
    let cost = CostSpec::new(2.0, 0.3).unwrap();
    let dom = stability_interval_with_margin(&m, 1e-2).unwrap();
    let k = NonparametricLqr::new(1.5, m, cost).unwrap();
    for (f, g) in [(dom.lo, -0.3), (dom.hi, dom.hi), (-0.9, -0.2), (dom.lo, dom.lo)] {
        let got = k.eval(f, g).unwrap();
        let want = nonparametric_oracle(f, g, &m, 1.5, &cost);
        assert!((got - want).abs() < 1e-6 * want, "({f}, {g}): {got} vs {want}");
    }
}

#[test]
fn finite_feature_converges_monotonically_in_m() {
    let m = reference_box();
    let cost = CostSpec::default();
    let dom = effective_domain();
    let np = NonparametricLqr::new(1.0, m, cost).unwrap();
    let mut rng = rng_from_seed(7);
    for _ in 0..5 {
        let f = uniform(&mut rng, dom.lo, dom.hi);
        let g = uniform(&mut rng, dom.lo, dom.hi);
        let exact = np.eval(f, g).unwrap();
        let errs: Vec<f64> = [10, 50, 200]
            .iter()
            .map(|&mm| {
                let ff = FiniteFeatureLqr::new(1.0, m, mm, cost).unwrap();
                (ff.eval(f, g).unwrap() - exact).abs() / exact
            })
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "({f}, {g}): {errs:?}");
    }
}

#[test]
fn finite_feature_interior_agrees_with_integral() {
    let m = reference_box();
    let cost = CostSpec::default();
    let np = NonparametricLqr::new(1.0, m, cost).unwrap();
    let ff = FiniteFeatureLqr::new(1.0, m, 200, cost).unwrap();
    for (f, g) in [(-1.2, -0.8), (-1.0, -1.0), (-0.7, -0.9), (-1.3, -0.6)] {
        let a = np.eval(f, g).unwrap();
        let b = ff.eval(f, g).unwrap();
        assert!((a - b).abs() < 1e-3 * a, "({f}, {g}): {a} vs {b}");
    }
}

fn eigenvalues(k: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = k.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

#[test]
fn parametric_gram_has_rank_one() {
    let k: Kernel = ParametricLqr::new(1.0, 0.9, 1.0, CostSpec::default(), 1.0).unwrap().into();
    let pts: Vec<f64> = effective_domain().grid(10);
    let ev = eigenvalues(&k.gram(&pts).unwrap());
    assert!(ev[1].abs() <= 1e-10 * ev[0], "{ev:?}");
}

#[test]
fn finite_feature_gram_rank_is_bounded_by_feature_count() {
    let k: Kernel = FiniteFeatureLqr::new(1.0, reference_box(), 2, CostSpec::default()).unwrap().into();
    let pts: Vec<f64> = effective_domain().grid(10);
    let ev = eigenvalues(&k.gram(&pts).unwrap());
    assert!(ev[4].abs() <= 1e-10 * ev[0], "{ev:?}");
}

fn dense_lml(k: &DMatrix<f64>, noise: f64, y: &[f64], mu: f64) -> f64 {
    let n = y.len();
    let a = k + DMatrix::identity(n, n) * noise;
    let inv = a.clone().try_inverse().unwrap();
    let r = DVector::from_iterator(n, y.iter().map(|v| v - mu));
    let quad = (r.transpose() * inv * &r)[(0, 0)];
    -0.5 * quad - 0.5 * a.determinant().ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln()
}

#[test]
fn log_marginal_likelihood_matches_dense_oracle() {
    let mut rng = rng_from_seed(55);
    let dom = effective_domain();
    let cost = CostSpec::default();
    for case in 0..60 {
        let n = 1 + case % 6;
        let xs: Vec<f64> = (0..n).map(|_| uniform(&mut rng, dom.lo, dom.hi)).collect();
        let ys: Vec<f64> = (0..n).map(|_| uniform(&mut rng, 0.0, 8.0)).collect();
        let kernel: Kernel = match case % 3 {
            0 => SquaredExponential::new(uniform(&mut rng, 0.5, 50.0), uniform(&mut rng, 0.1, 0.6)).unwrap().into(),
            1 => ParametricLqr::new(uniform(&mut rng, 0.5, 2.0), 0.9, 1.0, cost, 1.0).unwrap().into(),
            _ => NonparametricLqr::new(uniform(&mut rng, 1.0, 30.0), reference_box(), cost).unwrap().into(),
        };
        let noise = uniform(&mut rng, 0.01, 0.5);
        let mu = uniform(&mut rng, -1.0, 1.0);
        let data: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        let gp = GpState::with_data(kernel.clone(), noise, mu, &data).unwrap();
        let got = gp.log_marginal_likelihood().unwrap();
        let want = dense_lml(&kernel.gram(&xs).unwrap(), noise, &ys, mu);
        assert!((got - want).abs() < 1e-9, "case {case}: {got} vs {want}");
    }
}

#[test]
fn posterior_matches_dense_oracle() {
    let k: Kernel = SquaredExponential::new(25.0, 0.4).unwrap().into();
    let data = [(-1.5, 3.0), (-1.1, 2.1), (-0.6, 1.9), (-0.25, 2.8)];
    let gp = GpState::with_data(k.clone(), 0.05 * 0.05, 0.0, &data).unwrap();
    let xs: Vec<f64> = data.iter().map(|d| d.0).collect();
    let a = k.gram(&xs).unwrap() + DMatrix::identity(4, 4) * 0.0025;
    let inv = a.try_inverse().unwrap();
    let y = DVector::from_iterator(4, data.iter().map(|d| d.1));
    for fs in [-1.3, -0.8, -0.01] {
        let ks = DVector::from_iterator(4, xs.iter().map(|&x| k.eval(x, fs).unwrap()));
        let mean = (ks.transpose() * &inv * &y)[(0, 0)];
        let var = k.eval(fs, fs).unwrap() - (ks.transpose() * &inv * &ks)[(0, 0)];
        let p = gp.posterior(fs).unwrap();
        assert!((p.mean - mean).abs() < 1e-9, "{} vs {}", p.mean, mean);
        assert!((p.variance - var).abs() < 1e-9, "{} vs {}", p.variance, var);
    }
}

#[test]
fn posterior_interpolates_at_small_noise() {
    let k: Kernel = SquaredExponential::new(1.0, 0.05).unwrap().into();
    for noise in [1e-12, 1e-9, 1e-6] {
        let data = [(-1.5, 0.7), (-0.8, -0.4), (-0.1, 0.9)];
        let gp = GpState::with_data(k.clone(), noise, 0.0, &data).unwrap();
        for (f, j) in data {
            let p = gp.posterior(f).unwrap();
            assert!((p.mean - j).abs() <= 1e-6, "noise {noise}: {} vs {j}", p.mean);
            assert!(p.variance <= 1e-6);
        }
    }
}

#[test]
fn expected_improvement_matches_monte_carlo() {
    let mut rng = rng_from_seed(2024);
    for _ in 0..5 {
        let mean = uniform(&mut rng, 0.0, 3.0);
        let sd = uniform(&mut rng, 0.1, 0.5);
        let j_low = mean + uniform(&mut rng, -0.5, 0.5);
        let n = 1_000_000;
        let mc: f64 =
            (0..n).map(|_| (j_low - (mean + sd * standard_normal(&mut rng))).max(0.0)).sum::<f64>() / n as f64;
        let ei = bo::expected_improvement_gaussian(mean, sd, j_low);
        assert!((ei - mc).abs() < 1e-3, "mean {mean} sd {sd} j_low {j_low}: {ei} vs {mc}");
    }
}

#[test]
fn stationary_cost_matches_long_rollout() {
    let cost = CostSpec::default();
    let plant = ScalarPlant::Linear { a: 0.9, b: 1.0, v: 1.0 };
    let j = estimate_cost(&plant, 0.0, &cost, 100_000, 0.0, 1, 3).unwrap();
    let exact = lqr_cost(0.9, 1.0, 0.0, &cost, 1.0).unwrap();
    assert!((j - exact).abs() < 0.02 * exact, "{j} vs {exact}");
}

#[test]
fn noise_scaling_carries_into_rollout_cost() {
    let cost = CostSpec::default();
    let base = ScalarPlant::Linear { a: 0.7, b: 1.0, v: 1.0 };
    let scaled = ScalarPlant::Linear { a: 0.7, b: 1.0, v: 3.0 };
    let j1 = estimate_cost(&base, -0.3, &cost, 100_000, 0.0, 1, 8).unwrap();
    let j3 = estimate_cost(&scaled, -0.3, &cost, 100_000, 0.0, 1, 8).unwrap();
    assert!((j3 / j1 - 3.0).abs() < 0.05 * 3.0, "{j1} {j3}");
}

#[test]
fn analytic_noise_has_requested_spread() {
    let plant = ScalarPlant::Linear { a: 0.9, b: 1.0, v: 1.0 };
    let ev = Evaluator::new(plant, CostSpec::default(), EvalMode::AnalyticNoisy { noise_sd: 0.05 }).unwrap();
    let xs: Vec<f64> =
        (0..10_000).map(|i| ev.evaluate(-0.8, derive_seed(9, i, SeedTag::Evaluation)).unwrap()).collect();
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
    assert!((sd - 0.05).abs() < 0.05 * 0.05, "sd {sd}");
}

#[test]
fn sine_plant_cost_is_u_shaped() {
    let plant = ScalarPlant::Sin(control::NonlinearSinPlant::new(1.0, 1.0, 1.0).unwrap());
    // Gains well inside |f b| < 1; beyond that the noisy loop escapes the basin of the origin.
    let grid = ControllerDomain::new(-0.8, 0.0).unwrap().grid(17);
    let a = true_cost_grid(&plant, &CostSpec::default(), &grid, &OracleSpec::default()).unwrap();
    let i = bo::argmin(&a);
    assert!(i > 0 && i < grid.len() - 1, "minimum at edge {i}");
    assert!(a[..=i].windows(2).all(|w| w[0] > w[1]), "{a:?}");
    assert!(a[i..].windows(2).all(|w| w[0] < w[1]), "{a:?}");
}

#[test]
fn sine_oracle_is_seed_stable_at_weak_gains() {
    let cost = CostSpec::default();
    let grid = ControllerDomain::new(-0.6, 0.0).unwrap().grid(13);
    for (at, bt) in [(1.0, 1.0), (0.9, 1.1), (1.1, 0.9)] {
        let plant = ScalarPlant::Sin(control::NonlinearSinPlant::new(at, bt, 1.0).unwrap());
        let a = true_cost_grid(&plant, &cost, &grid, &OracleSpec { seed: 1, ..Default::default() }).unwrap();
        let b = true_cost_grid(&plant, &cost, &grid, &OracleSpec { seed: 2, ..Default::default() }).unwrap();
        for ((f, x), y) in grid.iter().zip(&a).zip(&b) {
            assert!((x - y).abs() < 0.02 * x, "({at}, {bt}) f={f}: {x} vs {y}");
        }
    }
}

#[test]
fn sine_plant_escapes_at_strong_gains() {
    let plant = ScalarPlant::Sin(control::NonlinearSinPlant::new(1.0, 1.0, 1.0).unwrap());
    let r = true_cost_grid(&plant, &CostSpec::default(), &[-1.5, -0.5], &OracleSpec::default());
    assert!(matches!(r, Err(Error::Diverged { .. })));
}
