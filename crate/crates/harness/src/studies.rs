//! The five studies run by the command-line tool.

use rayon::prelude::*;

use lqrbo_core::seed::{rng_from_seed, uniform};
use lqrbo_core::{
    derive_seed, lqr_cost, optimize_hyperparameters, regret, regret_at_suggestion, true_cost_grid,
    true_cost_grid_with_divergence, BoConfig, BoSession, Calibration, ControllerDomain, CostSpec, EvalMode, Evaluator,
    GpState, HyperSchedule, Kernel, NonlinearSinPlant, ScalarPlant, SeedTag, UncertainLinearModel,
};

use crate::arms::{ArmSpec, BuildContext};
use crate::config::{ExperimentConfig, PlantKind, RegretMode};
use crate::error::{HarnessError, Result};
use crate::output::{
    sort_failures, sort_records, summarize, DataPoint, Eigenvalue, Failure, GridRow, KernelValue, RunRecord, Summary,
};

/// A kernel arm ready to run.
#[derive(Debug, Clone)]
pub struct Arm {
    pub id: String,
    pub kernel: Kernel,
    pub hyper: Option<HyperSchedule>,
}

/// Shared inputs derived once from a validated config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub model: UncertainLinearModel,
    pub cost: CostSpec,
    pub domain: ControllerDomain,
    pub grid: Vec<f64>,
    pub arms: Vec<Arm>,
}

impl Setup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let model = cfg.model_box()?;
        let cost = cfg.cost_spec()?;
        let domain = cfg.effective_domain()?;
        let ctx = BuildContext {
            model,
            cost,
            domain,
            calibration: Calibration { f_bar: cfg.f_bar(&domain), target: cfg.calibration.target },
        };
        let arms = cfg
            .kernels
            .iter()
            .map(|spec: &ArmSpec| {
                Ok(Arm { id: spec.id.clone(), kernel: spec.kernel.build(&ctx)?, hyper: spec.hyper(&ctx)? })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { model, cost, domain, grid: domain.grid(cfg.grid), arms })
    }
}

/// Records and failures of a replicated study.
#[derive(Debug, Clone)]
pub struct StudyResult {
    pub study: String,
    pub metric: String,
    pub domain: ControllerDomain,
    pub records: Vec<RunRecord>,
    pub failures: Vec<Failure>,
}

impl StudyResult {
    fn collect(
        cfg: &ExperimentConfig,
        metric: &str,
        domain: ControllerDomain,
        parts: Vec<(Vec<RunRecord>, Vec<Failure>)>,
    ) -> Self {
        let mut records = Vec::new();
        let mut failures = Vec::new();
        for (r, f) in parts {
            records.extend(r);
            failures.extend(f);
        }
        sort_records(&mut records);
        sort_failures(&mut failures);
        Self { study: cfg.study.id().to_string(), metric: metric.to_string(), domain, records, failures }
    }

    pub fn summary(&self, cfg: &ExperimentConfig) -> Summary {
        Summary {
            study: self.study.clone(),
            seed: cfg.seed,
            replicates: cfg.replicates,
            domain: [self.domain.lo, self.domain.hi],
            rows: summarize(&self.records, &self.failures, &self.metric),
            failures: self.failures.clone(),
        }
    }
}

/// Plant parameters drawn uniformly from the model box.
fn sample_plant(model: &UncertainLinearModel, replicate_seed: u64) -> (f64, f64) {
    let mut rng = rng_from_seed(derive_seed(replicate_seed, 0, SeedTag::Plant));
    let a = uniform(&mut rng, model.a_min, model.a_max);
    let b = uniform(&mut rng, model.b_min, model.b_max);
    (a, b)
}

fn replicate_seed(cfg: &ExperimentConfig, replicate: usize) -> u64 {
    derive_seed(cfg.seed, replicate as u64, SeedTag::Replicate)
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / a.len() as f64).sqrt()
}

/// Posterior mean on `grid` after conditioning `arm` on `data`, refitting
/// hyperparameters when the arm's schedule asks for it.
fn fitted_mean(cfg: &ExperimentConfig, arm: &Arm, data: &[(f64, f64)], grid: &[f64]) -> lqrbo_core::Result<Vec<f64>> {
    let mut gp = GpState::with_data(arm.kernel.clone(), cfg.gp_noise_var, cfg.prior_mean, data)?;
    if let Some(h) = &arm.hyper {
        if data.len() >= h.min_points {
            let fit = optimize_hyperparameters(&gp, &h.bounds, &h.options);
            if fit.improved {
                gp.set_kernel(fit.kernel)?;
            }
        }
    }
    gp.predict_mean(grid)
}

/// GP-fit quality: RMSE between posterior mean and true cost on the grid for
/// random linear plants and uniformly drawn gains.
pub fn run_rmse_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let setup = Setup::new(cfg)?;
    let n_max = *cfg.n_evals.iter().max().expect("validated");
    let study = cfg.study.id();
    let parts: Vec<_> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| {
            let seed = replicate_seed(cfg, rep);
            let (a, b) = sample_plant(&setup.model, seed);
            let mut records = Vec::new();
            let mut failures = Vec::new();
            let fail_all = |failures: &mut Vec<Failure>, e: &dyn std::fmt::Display| {
                for arm in &setup.arms {
                    for &n in &cfg.n_evals {
                        failures.push(Failure {
                            replicate: rep,
                            kernel: arm.id.clone(),
                            n_evals: n,
                            error: e.to_string(),
                        });
                    }
                }
            };
            let plant = ScalarPlant::Linear { a, b, v: cfg.v };
            let prepared = Evaluator::new(plant, setup.cost, EvalMode::AnalyticNoisy { noise_sd: cfg.noise_sd })
                .and_then(|ev| {
                    let mut rng = rng_from_seed(derive_seed(seed, 0, SeedTag::Gains));
                    (0..n_max)
                        .map(|i| {
                            let f = uniform(&mut rng, setup.domain.lo, setup.domain.hi);
                            Ok((f, ev.evaluate(f, derive_seed(seed, i as u64, SeedTag::Noise))?))
                        })
                        .collect::<lqrbo_core::Result<Vec<_>>>()
                })
                .and_then(|data| Ok((data, true_cost_grid(&plant, &setup.cost, &setup.grid, &cfg.oracle_spec(0))?)));
            let (data, truth) = match prepared {
                Ok(x) => x,
                Err(e) => {
                    fail_all(&mut failures, &e);
                    return (records, failures);
                }
            };
            for arm in &setup.arms {
                for &n in &cfg.n_evals {
                    match fitted_mean(cfg, arm, &data[..n], &setup.grid) {
                        Ok(mean) => {
                            let value = rmse(&mean, &truth);
                            records.push(RunRecord {
                                study: study.to_string(),
                                replicate: rep,
                                kernel: arm.id.clone(),
                                a,
                                b,
                                seed,
                                n_evals: n,
                                metric: "rmse".into(),
                                value,
                                outlier: cfg.outlier_threshold.is_some_and(|t| !(value <= t)),
                            });
                        }
                        Err(e) => failures.push(Failure {
                            replicate: rep,
                            kernel: arm.id.clone(),
                            n_evals: n,
                            error: e.to_string(),
                        }),
                    }
                }
            }
            (records, failures)
        })
        .collect();
    Ok(StudyResult::collect(cfg, "rmse", setup.domain, parts))
}

/// Bayesian optimization on random plants; regret after each listed number
/// of evaluations. Every arm of a replicate sees the same plant, first query
/// and noise seeds.
pub fn run_bo_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    let setup = Setup::new(cfg)?;
    let budget = *cfg.n_evals.iter().max().expect("validated");
    let study = cfg.study.id();
    let parts: Vec<_> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| {
            let seed = replicate_seed(cfg, rep);
            let (a, b) = sample_plant(&setup.model, seed);
            let mut records = Vec::new();
            let mut failures = Vec::new();
            let prepared = bo_plant(cfg, &setup, a, b, seed);
            let (evaluator, truth) = match prepared {
                Ok(x) => x,
                Err(e) => {
                    for arm in &setup.arms {
                        for &n in &cfg.n_evals {
                            failures.push(Failure {
                                replicate: rep,
                                kernel: arm.id.clone(),
                                n_evals: n,
                                error: e.to_string(),
                            });
                        }
                    }
                    return (records, failures);
                }
            };
            for arm in &setup.arms {
                let fail_from = |failures: &mut Vec<Failure>, done: usize, e: String| {
                    for &n in cfg.n_evals.iter().filter(|&&n| n > done) {
                        failures.push(Failure { replicate: rep, kernel: arm.id.clone(), n_evals: n, error: e.clone() });
                    }
                };
                let gp = match GpState::new(arm.kernel.clone(), cfg.gp_noise_var, cfg.prior_mean) {
                    Ok(gp) => gp,
                    Err(e) => {
                        fail_from(&mut failures, 0, e.to_string());
                        continue;
                    }
                };
                let config = BoConfig { budget, seed, report_grid: cfg.grid, hyper: arm.hyper.clone() };
                let mut session = match BoSession::new(gp, setup.domain, evaluator, config) {
                    Ok(s) => s,
                    Err(e) => {
                        fail_from(&mut failures, 0, e.to_string());
                        continue;
                    }
                };
                loop {
                    let done = session.history().len();
                    match session.step() {
                        Ok(Some(_)) => {}
                        Ok(None) => break,
                        Err(e) => {
                            fail_from(&mut failures, done, e.to_string());
                            break;
                        }
                    }
                    let n = session.history().len();
                    if !cfg.n_evals.contains(&n) {
                        continue;
                    }
                    let outcome = session
                        .posterior_mean_grid()
                        .map_err(|e| e.to_string())
                        .and_then(|mean| score_regret(cfg.regret_mode, &truth, &mean));
                    match outcome {
                        Ok(value) => records.push(RunRecord {
                            study: study.to_string(),
                            replicate: rep,
                            kernel: arm.id.clone(),
                            a,
                            b,
                            seed,
                            n_evals: n,
                            metric: "regret".into(),
                            value,
                            outlier: cfg.outlier_threshold.is_some_and(|t| !(value <= t)),
                        }),
                        Err(e) => {
                            failures.push(Failure { replicate: rep, kernel: arm.id.clone(), n_evals: n, error: e })
                        }
                    }
                }
            }
            (records, failures)
        })
        .collect();
    Ok(StudyResult::collect(cfg, "regret", setup.domain, parts))
}

/// Evaluator and reference cost grid of one BO replicate.
fn bo_plant(
    cfg: &ExperimentConfig,
    setup: &Setup,
    a: f64,
    b: f64,
    seed: u64,
) -> lqrbo_core::Result<(Evaluator, Vec<f64>)> {
    match cfg.plant {
        PlantKind::Linear => {
            let plant = ScalarPlant::Linear { a, b, v: cfg.v };
            let ev = Evaluator::new(plant, setup.cost, EvalMode::AnalyticNoisy { noise_sd: cfg.noise_sd })?;
            Ok((ev, true_cost_grid(&plant, &setup.cost, &setup.grid, &cfg.oracle_spec(0))?))
        }
        PlantKind::Sine => {
            let plant = ScalarPlant::Sin(NonlinearSinPlant::new(a, b, cfg.v)?);
            let r = cfg.rollout;
            let ev = Evaluator::new(
                plant,
                setup.cost,
                EvalMode::RolloutEstimate { horizon: r.horizon, x0: r.x0, n_rollouts: r.n_rollouts },
            )?;
            let oracle = cfg.oracle_spec(derive_seed(seed, 0, SeedTag::Oracle));
            Ok((ev, true_cost_grid_with_divergence(&plant, &setup.cost, &setup.grid, &oracle)?))
        }
    }
}

fn score_regret(mode: RegretMode, truth: &[f64], mean: &[f64]) -> std::result::Result<f64, String> {
    if !truth.iter().any(|t| t.is_finite()) {
        return Err("true cost diverges on the whole grid".into());
    }
    if mean.iter().any(|m| !m.is_finite()) {
        return Err("posterior mean is not finite".into());
    }
    let r = match mode {
        RegretMode::Value => regret(truth, mean),
        RegretMode::AtSuggestion => regret_at_suggestion(truth, mean),
    }
    .map_err(|e| e.to_string())?;
    if r.regret.is_finite() {
        Ok(r.regret)
    } else {
        Err("suggested gain has unbounded true cost".into())
    }
}

/// Prior and posterior fits of every arm on fixed example plants.
#[derive(Debug, Clone)]
pub struct FitDemo {
    /// One table per example plant.
    pub examples: Vec<Vec<GridRow>>,
    pub data: Vec<DataPoint>,
}

pub fn run_fit_demo(cfg: &ExperimentConfig) -> Result<FitDemo> {
    let setup = Setup::new(cfg)?;
    let mut examples = Vec::new();
    let mut data = Vec::new();
    for (e, &[a, b]) in cfg.fit_demo.examples.iter().enumerate() {
        let plant = ScalarPlant::Linear { a, b, v: cfg.v };
        let ev = Evaluator::new(plant, setup.cost, EvalMode::AnalyticNoisy { noise_sd: cfg.noise_sd })
            .map_err(|err| HarnessError::config(format!("example {}: {err}", e + 1)))?;
        let seed = replicate_seed(cfg, e);
        let points = cfg
            .fit_demo
            .gains
            .iter()
            .enumerate()
            .map(|(i, &f)| Ok((f, ev.evaluate(f, derive_seed(seed, i as u64, SeedTag::Noise))?)))
            .collect::<lqrbo_core::Result<Vec<_>>>()
            .map_err(|err| HarnessError::config(format!("example {}: {err}", e + 1)))?;
        data.extend(points.iter().map(|&(f, j)| DataPoint { example: e + 1, a, b, f, j }));
        let truth = setup
            .grid
            .iter()
            .map(|&f| lqr_cost(a, b, f, &setup.cost, cfg.v))
            .collect::<lqrbo_core::Result<Vec<_>>>()
            .map_err(|err| HarnessError::config(format!("example {} is unstable on the domain: {err}", e + 1)))?;
        let mut rows = Vec::new();
        for arm in &setup.arms {
            let prior = GpState::new(arm.kernel.clone(), cfg.gp_noise_var, cfg.prior_mean)?.predict(&setup.grid)?;
            let post = GpState::with_data(arm.kernel.clone(), cfg.gp_noise_var, cfg.prior_mean, &points)?
                .predict(&setup.grid)?;
            for (i, &f) in setup.grid.iter().enumerate() {
                rows.push(GridRow {
                    f,
                    true_cost: truth[i],
                    prior_mean: prior[i].mean,
                    prior_sd: prior[i].std(),
                    post_mean: post[i].mean,
                    post_sd: post[i].std(),
                    kernel: arm.id.clone(),
                });
            }
        }
        examples.push(rows);
    }
    Ok(FitDemo { examples, data })
}

/// Kernel values on a square grid and Gram spectra on a random point set.
#[derive(Debug, Clone)]
pub struct KernelEval {
    pub values: Vec<KernelValue>,
    pub spectra: Vec<Eigenvalue>,
}

pub fn run_kernel_eval(cfg: &ExperimentConfig) -> Result<KernelEval> {
    let setup = Setup::new(cfg)?;
    let axis = setup.domain.grid(cfg.kernel_eval.grid);
    let mut rng = rng_from_seed(derive_seed(cfg.seed, 0, SeedTag::PointSet));
    let mut points: Vec<f64> =
        (0..cfg.kernel_eval.points).map(|_| uniform(&mut rng, setup.domain.lo, setup.domain.hi)).collect();
    points.sort_by(f64::total_cmp);
    let mut values = Vec::new();
    let mut spectra = Vec::new();
    for arm in &setup.arms {
        let g = arm.kernel.gram(&axis)?;
        for (i, &f) in axis.iter().enumerate() {
            for (j, &fp) in axis.iter().enumerate() {
                values.push(KernelValue { kernel: arm.id.clone(), f, f_prime: fp, k: g[(i, j)] });
            }
        }
        let mut eig: Vec<f64> = arm.kernel.gram(&points)?.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(|x, y| y.total_cmp(x));
        spectra.extend(eig.into_iter().enumerate().map(|(index, eigenvalue)| Eigenvalue {
            kernel: arm.id.clone(),
            index,
            eigenvalue,
        }));
    }
    Ok(KernelEval { values, spectra })
}
