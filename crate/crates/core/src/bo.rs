//! Bayesian optimization with expected improvement.

use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::control::ControllerDomain;
use crate::error::{Error, Result};
use crate::gp::GpState;
use crate::hyperopt::{optimize_hyperparameters, Bound, HyperOptions};
use crate::seed::{derive_seed, rng_from_seed, uniform, SeedTag};
use crate::sim::Evaluator;

/// Candidate grid size for the acquisition scan.
pub const ACQUISITION_GRID: usize = 500;
/// Grid size for best-guess and regret evaluation.
pub const REPORT_GRID: usize = 100;
const GOLDEN_ITERS: usize = 40;

#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    libm::exp(-0.5 * z * z) / libm::sqrt(2.0 * PI)
}

#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// `E[max(0, j_low - J)]` for `J ~ N(mean, sd^2)`.
pub fn expected_improvement_gaussian(mean: f64, sd: f64, j_low: f64) -> f64 {
    let d = j_low - mean;
    if !(sd > 0.0) {
        return d.max(0.0);
    }
    let z = d / sd;
    (d * normal_cdf(z) + sd * normal_pdf(z)).max(0.0)
}

/// Expected improvement of the posterior at `f` below `j_low`.
pub fn expected_improvement(gp: &GpState, f: f64, j_low: f64) -> Result<f64> {
    let p = gp.posterior(f)?;
    Ok(expected_improvement_gaussian(p.mean, p.std(), j_low))
}

/// Lowest observation in the dataset.
pub fn best_observed(gp: &GpState) -> Option<f64> {
    gp.targets().iter().copied().reduce(f64::min)
}

/// Maximizer of expected improvement: a uniform grid scan followed by a
/// golden-section search over the two cells around the best grid point.
/// Ties on the grid resolve to the smallest gain; the refined point replaces
/// the grid point only if it is strictly better.
pub fn next_query(gp: &GpState, domain: &ControllerDomain) -> Result<f64> {
    let j_low = best_observed(gp).ok_or(Error::InvalidParameter("next_query needs data"))?;
    let grid = domain.grid(ACQUISITION_GRID);
    let preds = gp.predict(&grid)?;
    let mut best = 0;
    let mut best_ei = f64::NEG_INFINITY;
    for (i, p) in preds.iter().enumerate() {
        let ei = expected_improvement_gaussian(p.mean, p.std(), j_low);
        if ei > best_ei {
            best_ei = ei;
            best = i;
        }
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    match golden_section(|f| expected_improvement(gp, f, j_low), lo, hi) {
        Some((f, ei)) if ei > best_ei && domain.contains(f) => Ok(f),
        _ => Ok(grid[best]),
    }
}

fn golden_section<F: FnMut(f64) -> Result<f64>>(mut g: F, mut lo: f64, mut hi: f64) -> Option<(f64, f64)> {
    if !(hi > lo) {
        return None;
    }
    let r = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut g1 = g(x1).ok()?;
    let mut g2 = g(x2).ok()?;
    for _ in 0..GOLDEN_ITERS {
        if g1 >= g2 {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - r * (hi - lo);
            g1 = g(x1).ok()?;
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + r * (hi - lo);
            g2 = g(x2).ok()?;
        }
    }
    Some(if g1 >= g2 { (x1, g1) } else { (x2, g2) })
}

/// Source of experiment outcomes for a session.
pub trait CostEvaluator {
    fn evaluate(&self, f: f64, seed: u64) -> Result<f64>;
}

impl CostEvaluator for Evaluator {
    fn evaluate(&self, f: f64, seed: u64) -> Result<f64> {
        Evaluator::evaluate(self, f, seed)
    }
}

impl<F: Fn(f64, u64) -> Result<f64>> CostEvaluator for F {
    fn evaluate(&self, f: f64, seed: u64) -> Result<f64> {
        self(f, seed)
    }
}

/// Hyperparameter refit after each evaluation once enough data exist.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperSchedule {
    pub bounds: Vec<Bound>,
    pub options: HyperOptions,
    pub min_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoConfig {
    pub budget: usize,
    pub seed: u64,
    pub report_grid: usize,
    pub hyper: Option<HyperSchedule>,
}

impl BoConfig {
    pub fn new(budget: usize, seed: u64) -> Self {
        Self { budget, seed, report_grid: REPORT_GRID, hyper: None }
    }
}

/// State of one optimization run.
#[derive(Debug, Clone)]
pub struct BoSession<E> {
    pub gp: GpState,
    pub domain: ControllerDomain,
    pub evaluator: E,
    pub config: BoConfig,
    history: Vec<(f64, f64)>,
}

impl<E: CostEvaluator> BoSession<E> {
    /// `gp` is the prior; any data it already holds are kept.
    pub fn new(gp: GpState, domain: ControllerDomain, evaluator: E, config: BoConfig) -> Result<Self> {
        if config.budget == 0 {
            return Err(Error::InvalidParameter("budget must be >= 1"));
        }
        if config.report_grid < 2 {
            return Err(Error::InvalidParameter("report grid needs at least two points"));
        }
        Ok(Self { gp, domain, evaluator, config, history: Vec::new() })
    }

    pub fn history(&self) -> &[(f64, f64)] {
        &self.history
    }

    pub fn is_done(&self) -> bool {
        self.history.len() >= self.config.budget
    }

    /// Uniform random gain used for the first experiment.
    pub fn first_query(&self) -> f64 {
        let mut rng = rng_from_seed(derive_seed(self.config.seed, 0, SeedTag::FirstQuery));
        uniform(&mut rng, self.domain.lo, self.domain.hi)
    }

    /// Runs one experiment; returns `None` once the budget is spent.
    pub fn step(&mut self) -> Result<Option<(f64, f64)>> {
        if self.is_done() {
            return Ok(None);
        }
        let i = self.history.len();
        let f = if self.gp.is_empty() { self.first_query() } else { next_query(&self.gp, &self.domain)? };
        let j = self.evaluator.evaluate(f, derive_seed(self.config.seed, i as u64, SeedTag::Evaluation))?;
        self.gp.push(f, j)?;
        self.history.push((f, j));
        if let Some(h) = &self.config.hyper {
            if self.gp.len() >= h.min_points {
                let fit = optimize_hyperparameters(&self.gp, &h.bounds, &h.options);
                if fit.improved {
                    self.gp.set_kernel(fit.kernel)?;
                }
            }
        }
        Ok(Some((f, j)))
    }

    pub fn report_grid(&self) -> Vec<f64> {
        self.domain.grid(self.config.report_grid)
    }

    /// Posterior mean on the report grid.
    pub fn posterior_mean_grid(&self) -> Result<Vec<f64>> {
        self.gp.predict_mean(&self.report_grid())
    }

    /// Report-grid gain minimizing the posterior mean.
    pub fn best_guess(&self) -> Result<f64> {
        let grid = self.report_grid();
        let means = self.gp.predict_mean(&grid)?;
        Ok(grid[argmin(&means)])
    }
}

#[derive(Debug, Clone)]
pub struct BoOutcome {
    pub history: Vec<(f64, f64)>,
    pub best_guess: f64,
    pub posterior_mean: Vec<f64>,
    pub gp: GpState,
}

/// Session error together with the experiments completed before it.
#[derive(Debug, Clone, PartialEq)]
pub struct BoFailure {
    pub error: Error,
    pub history: Vec<(f64, f64)>,
}

/// Runs a session to its budget.
pub fn run_bo<E: CostEvaluator>(mut session: BoSession<E>) -> core::result::Result<BoOutcome, BoFailure> {
    let fail = |s: &BoSession<E>, error| BoFailure { error, history: s.history.clone() };
    loop {
        match session.step() {
            Ok(Some(_)) => {}
            Ok(None) => break,
            Err(e) => return Err(fail(&session, e)),
        }
    }
    let posterior_mean = session.posterior_mean_grid().map_err(|e| fail(&session, e))?;
    let best_guess = session.report_grid()[argmin(&posterior_mean)];
    Ok(BoOutcome { history: session.history, best_guess, posterior_mean, gp: session.gp })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretRecord {
    pub true_min: f64,
    pub learned_min: f64,
    pub regret: f64,
}

/// `|min(true) - min(posterior)|` over a shared grid.
pub fn regret(true_cost_grid: &[f64], posterior_mean_grid: &[f64]) -> Result<RegretRecord> {
    check_grids(true_cost_grid, posterior_mean_grid)?;
    let true_min = true_cost_grid[argmin(true_cost_grid)];
    let learned_min = posterior_mean_grid[argmin(posterior_mean_grid)];
    Ok(RegretRecord { true_min, learned_min, regret: (true_min - learned_min).abs() })
}

/// True cost at the posterior-mean minimizer minus the true minimum.
pub fn regret_at_suggestion(true_cost_grid: &[f64], posterior_mean_grid: &[f64]) -> Result<RegretRecord> {
    check_grids(true_cost_grid, posterior_mean_grid)?;
    let true_min = true_cost_grid[argmin(true_cost_grid)];
    let learned_min = true_cost_grid[argmin(posterior_mean_grid)];
    Ok(RegretRecord { true_min, learned_min, regret: (learned_min - true_min).abs() })
}

fn check_grids(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() < 2 || a.len() != b.len() {
        return Err(Error::InvalidParameter("regret grids must match and hold >= 2 points"));
    }
    Ok(())
}

/// Index of the first minimum; NaN entries are skipped.
pub fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::INFINITY;
    for (i, &x) in xs.iter().enumerate() {
        if x < best_v {
            best_v = x;
            best = i;
        }
    }
    best
}
