//! Seeded closed-loop simulation and cost evaluation.

use alloc::vec::Vec;

use crate::control::{lqr_cost, CostSpec, ScalarPlant};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from_seed, standard_normal, Rng, SeedTag};

/// States beyond this magnitude abort a rollout.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Trajectory of `x[t+1] = drift(x[t], f x[t]) + v[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    /// `horizon + 1` states starting at `x0`.
    pub states: Vec<f64>,
    /// `horizon` inputs `u[t] = f x[t]`.
    pub inputs: Vec<f64>,
    pub horizon: usize,
    pub seed: u64,
}

pub fn rollout(plant: &ScalarPlant, f: f64, horizon: usize, x0: f64, seed: u64) -> Result<Rollout> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1"));
    }
    let sd = noise_sd(plant)?;
    let mut rng = rng_from_seed(seed);
    let mut states = Vec::with_capacity(horizon + 1);
    let mut inputs = Vec::with_capacity(horizon);
    let mut x = x0;
    states.push(x);
    for t in 0..horizon {
        let u = f * x;
        inputs.push(u);
        x = plant.drift(x, u) + sd * standard_normal(&mut rng);
        if !(x.abs() <= DIVERGENCE_BOUND) {
            return Err(Error::Diverged { step: t + 1 });
        }
        states.push(x);
    }
    Ok(Rollout { states, inputs, horizon, seed })
}

fn noise_sd(plant: &ScalarPlant) -> Result<f64> {
    let v = plant.noise_var();
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::InvalidParameter("noise variance must be >= 0"));
    }
    Ok(libm::sqrt(v))
}

/// `(1/T) sum_{t<T} (q x_t^2 + r u_t^2)` of one trajectory, noise drawn by `next`.
fn trajectory_cost<N: FnMut() -> f64>(
    plant: &ScalarPlant,
    f: f64,
    cost: &CostSpec,
    horizon: usize,
    x0: f64,
    mut next: N,
) -> Result<f64> {
    let w = cost.stage_weight(f);
    let mut x = x0;
    let mut acc = 0.0;
    for t in 0..horizon {
        acc += w * x * x;
        x = plant.drift(x, f * x) + next();
        if !(x.abs() <= DIVERGENCE_BOUND) {
            return Err(Error::Diverged { step: t + 1 });
        }
    }
    Ok(acc / horizon as f64)
}

/// Average finite-horizon cost over `n_rollouts` independent trajectories.
pub fn estimate_cost(
    plant: &ScalarPlant,
    f: f64,
    cost: &CostSpec,
    horizon: usize,
    x0: f64,
    n_rollouts: usize,
    seed: u64,
) -> Result<f64> {
    if horizon == 0 || n_rollouts == 0 {
        return Err(Error::InvalidParameter("horizon and rollout count must be >= 1"));
    }
    let sd = noise_sd(plant)?;
    let mut total = 0.0;
    for i in 0..n_rollouts {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64, SeedTag::Rollout));
        total += trajectory_cost(plant, f, cost, horizon, x0, || sd * standard_normal(&mut rng))?;
    }
    Ok(total / n_rollouts as f64)
}

/// How an experiment outcome is produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvalMode {
    /// Closed-form linear cost plus `N(0, noise_sd^2)`.
    AnalyticNoisy { noise_sd: f64 },
    /// Finite-horizon simulation average.
    RolloutEstimate { horizon: usize, x0: f64, n_rollouts: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluator {
    pub plant: ScalarPlant,
    pub cost: CostSpec,
    pub mode: EvalMode,
}

impl Evaluator {
    pub fn new(plant: ScalarPlant, cost: CostSpec, mode: EvalMode) -> Result<Self> {
        match mode {
            EvalMode::AnalyticNoisy { noise_sd } => {
                if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
                    return Err(Error::InvalidParameter("noise_sd must be >= 0"));
                }
                if !matches!(plant, ScalarPlant::Linear { .. }) {
                    return Err(Error::Unsupported("analytic evaluation needs a linear plant"));
                }
            }
            EvalMode::RolloutEstimate { horizon, n_rollouts, x0 } => {
                if horizon == 0 || n_rollouts == 0 || !x0.is_finite() {
                    return Err(Error::InvalidParameter("rollout horizon and count must be >= 1"));
                }
            }
        }
        Ok(Self { plant, cost, mode })
    }

    /// One noisy outcome at gain `f`, reproducible from `seed`.
    pub fn evaluate(&self, f: f64, seed: u64) -> Result<f64> {
        match (self.mode, self.plant) {
            (EvalMode::AnalyticNoisy { noise_sd }, ScalarPlant::Linear { a, b, v }) => {
                let j = lqr_cost(a, b, f, &self.cost, v)?;
                if noise_sd == 0.0 {
                    return Ok(j);
                }
                let mut rng = rng_from_seed(seed);
                Ok(j + noise_sd * standard_normal(&mut rng))
            }
            (EvalMode::AnalyticNoisy { .. }, _) => Err(Error::Unsupported("analytic evaluation needs a linear plant")),
            (EvalMode::RolloutEstimate { horizon, x0, n_rollouts }, plant) => {
                estimate_cost(&plant, f, &self.cost, horizon, x0, n_rollouts, seed)
            }
        }
    }
}

/// Monte Carlo settings for the reference cost of a nonlinear plant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSpec {
    pub n_rollouts: usize,
    pub horizon: usize,
    pub x0: f64,
    pub seed: u64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { n_rollouts: 100, horizon: 2000, x0: 1.0, seed: 0 }
    }
}

/// Reference cost on `grid`: closed form for a linear plant, otherwise a
/// Monte Carlo average whose noise sequences are shared by all grid points.
pub fn true_cost_grid(plant: &ScalarPlant, cost: &CostSpec, grid: &[f64], oracle: &OracleSpec) -> Result<Vec<f64>> {
    oracle_grid(plant, cost, grid, oracle, false)
}

/// As [`true_cost_grid`], but a grid point whose oracle rollouts diverge is
/// reported as `+inf` instead of failing the whole grid.
pub fn true_cost_grid_with_divergence(
    plant: &ScalarPlant,
    cost: &CostSpec,
    grid: &[f64],
    oracle: &OracleSpec,
) -> Result<Vec<f64>> {
    oracle_grid(plant, cost, grid, oracle, true)
}

fn oracle_grid(
    plant: &ScalarPlant,
    cost: &CostSpec,
    grid: &[f64],
    oracle: &OracleSpec,
    mark_divergence: bool,
) -> Result<Vec<f64>> {
    if grid.len() < 2 {
        return Err(Error::InvalidParameter("grid needs at least two points"));
    }
    if let ScalarPlant::Linear { a, b, v } = *plant {
        return grid.iter().map(|&f| lqr_cost(a, b, f, cost, v)).collect();
    }
    if oracle.horizon == 0 || oracle.n_rollouts == 0 {
        return Err(Error::InvalidParameter("oracle horizon and rollout count must be >= 1"));
    }
    let sd = noise_sd(plant)?;
    let mut out = alloc::vec![0.0; grid.len()];
    let mut noise = alloc::vec![0.0; oracle.horizon];
    for i in 0..oracle.n_rollouts {
        let mut rng: Rng = rng_from_seed(derive_seed(oracle.seed, i as u64, SeedTag::Oracle));
        for e in noise.iter_mut() {
            *e = sd * standard_normal(&mut rng);
        }
        for (slot, &f) in out.iter_mut().zip(grid) {
            if *slot == f64::INFINITY {
                continue;
            }
            let mut it = noise.iter().copied();
            match trajectory_cost(plant, f, cost, oracle.horizon, oracle.x0, || it.next().unwrap_or(0.0)) {
                Ok(c) => *slot += c,
                Err(Error::Diverged { .. }) if mark_divergence => *slot = f64::INFINITY,
                Err(e) => return Err(e),
            }
        }
    }
    for slot in &mut out {
        *slot /= oracle.n_rollouts as f64;
    }
    Ok(out)
}
