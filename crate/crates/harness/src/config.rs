//! Experiment configuration.
//!
//! Every study starts from a built-in preset. A JSON file passed with
//! `--config` is merged onto the preset key by key (objects merge, everything
//! else replaces), and command-line flags are applied last.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use lqrbo_core::{
    shrink_domain, stability_interval, stability_interval_with_margin, ControllerDomain, CostSpec, OracleSpec,
    UncertainLinearModel,
};

use crate::arms::{catalog, ArmSpec, KernelSpec};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    FitDemo,
    RmseStudy,
    BoLinear,
    BoNonlinear,
    KernelEval,
}

impl Study {
    /// Identifier written to the `study` column and used in file names.
    pub fn id(self) -> &'static str {
        match self {
            Study::FitDemo => "fit_demo",
            Study::RmseStudy => "rmse",
            Study::BoLinear => "bo_linear",
            Study::BoNonlinear => "bo_nonlinear",
            Study::KernelEval => "kernel_eval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    Linear,
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegretMode {
    /// `|min true cost - min posterior mean|`.
    Value,
    /// True cost at the posterior-mean minimizer minus the true minimum.
    AtSuggestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBox {
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSettings {
    pub q: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSettings {
    /// Calibration gain; the domain midpoint when absent.
    pub f_bar: Option<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutSettings {
    pub horizon: usize,
    pub x0: f64,
    pub n_rollouts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSettings {
    pub horizon: usize,
    pub x0: f64,
    pub n_rollouts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDemoSettings {
    /// Plants `(a, b)` whose cost is fitted.
    pub examples: Vec<[f64; 2]>,
    pub gains: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEvalSettings {
    /// Points per axis of the `k(f, f')` dump.
    pub grid: usize,
    /// Size of the random point set whose Gram spectrum is dumped.
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Study,
    pub kernels: Vec<ArmSpec>,
    pub plant: PlantKind,
    pub model: ModelBox,
    /// Process-noise variance.
    pub v: f64,
    pub cost: CostSettings,
    /// Explicit gain interval. Without it the stability interval of `model`,
    /// shrunk by `domain_shrink`, is used.
    pub domain: Option<[f64; 2]>,
    pub domain_shrink: f64,
    /// Closed-loop margin kept from instability on every box in use.
    pub stability_margin: f64,
    /// Observation noise of analytic evaluations.
    pub noise_sd: f64,
    /// Observation noise variance assumed by the GP.
    pub gp_noise_var: f64,
    pub prior_mean: f64,
    pub replicates: usize,
    pub n_evals: Vec<usize>,
    pub grid: usize,
    pub seed: u64,
    pub calibration: CalibrationSettings,
    pub outlier_threshold: Option<f64>,
    pub regret_mode: RegretMode,
    pub rollout: RolloutSettings,
    pub oracle: OracleSettings,
    pub fit_demo: FitDemoSettings,
    pub kernel_eval: KernelEvalSettings,
    pub out: PathBuf,
}

const REFERENCE_BOX: ModelBox = ModelBox { a_min: 0.8, a_max: 1.0, b_min: 0.9, b_max: 1.1 };
const SINE_BOX: ModelBox = ModelBox { a_min: 0.9, a_max: 1.1, b_min: 0.9, b_max: 1.1 };

impl ExperimentConfig {
    /// Default settings of a study.
    pub fn preset(study: Study) -> Self {
        let mut cfg = ExperimentConfig {
            study,
            kernels: Vec::new(),
            plant: PlantKind::Linear,
            model: REFERENCE_BOX,
            v: 1.0,
            cost: CostSettings { q: 1.0, r: 1.0 },
            domain: Some([-1.64, -0.001]),
            domain_shrink: 0.0,
            stability_margin: 5e-4,
            noise_sd: 0.05,
            gp_noise_var: 0.05 * 0.05,
            prior_mean: 0.0,
            replicates: 1,
            n_evals: vec![1],
            grid: 100,
            seed: 0,
            calibration: CalibrationSettings { f_bar: Some(-0.82), target: 10.0 },
            outlier_threshold: None,
            regret_mode: RegretMode::Value,
            rollout: RolloutSettings { horizon: 2000, x0: 1.0, n_rollouts: 1 },
            oracle: OracleSettings { horizon: 2000, x0: 1.0, n_rollouts: 100 },
            fit_demo: FitDemoSettings { examples: vec![[0.9, 1.0], [0.8, 0.9]], gains: vec![-1.4, -1.0, -0.6, -0.2] },
            kernel_eval: KernelEvalSettings { grid: 41, points: 10 },
            out: PathBuf::from("out"),
        };
        let pick = |ids: &[&str]| -> Vec<ArmSpec> {
            let all = catalog();
            ids.iter().filter_map(|id| all.iter().find(|a| a.id == *id).cloned()).collect()
        };
        match study {
            Study::RmseStudy => {
                cfg.kernels = pick(&["se", "lqr1", "lqr2", "lqr3"]);
                cfg.replicates = 1000;
                cfg.n_evals = vec![1, 2, 5, 10];
                cfg.outlier_threshold = Some(5.0);
                for arm in &mut cfg.kernels {
                    if arm.id == "lqr2" {
                        arm.min_points = Some(1);
                    }
                }
            }
            Study::BoLinear => {
                cfg.kernels = pick(&["se", "lqr1", "lqr2", "lqr3"]);
                cfg.replicates = 100;
                cfg.n_evals = vec![1, 2, 3];
            }
            Study::BoNonlinear => {
                cfg.kernels = pick(&["se", "lqr1", "lqr2", "lqr3"]);
                cfg.plant = PlantKind::Sine;
                cfg.model = SINE_BOX;
                cfg.domain = None;
                cfg.domain_shrink = 0.2;
                cfg.calibration.f_bar = None;
                cfg.replicates = 100;
                cfg.n_evals = vec![2, 3, 4, 5];
            }
            Study::FitDemo => {
                cfg.kernels = vec![
                    ArmSpec::fixed(
                        "se",
                        KernelSpec::Se { sigma_se_sq: 25.0, length_scale: Some(0.4), calibrate: false },
                    ),
                    ArmSpec::fixed(
                        "lqr1",
                        KernelSpec::Parametric {
                            sigma_p_sq: 1.0,
                            a_bar: Some(0.9),
                            b_bar: Some(1.0),
                            calibrate: false,
                        },
                    ),
                    ArmSpec::fixed("lqr3", KernelSpec::nonparametric(20.0, false)),
                ];
                cfg.n_evals = vec![4];
            }
            Study::KernelEval => {
                cfg.kernels = pick(&["se", "lqr1", "ff", "lqr3", "combined"]);
            }
        }
        cfg
    }

    /// Preset merged with an optional JSON file.
    pub fn load(study: Study, path: Option<&Path>) -> Result<Self> {
        let mut base = serde_json::to_value(Self::preset(study))?;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::config(format!("cannot read {}: {e}", path.display())))?;
            let user: Value =
                serde_json::from_str(&text).map_err(|e| HarnessError::config(format!("{}: {e}", path.display())))?;
            if let Some(s) = user.get("study") {
                if *s != base["study"] {
                    return Err(HarnessError::config(format!(
                        "config is for study {s}, but {} was requested",
                        base["study"]
                    )));
                }
            }
            merge(&mut base, user);
        }
        let cfg: Self = serde_json::from_value(base).map_err(|e| HarnessError::config(e.to_string()))?;
        Ok(cfg)
    }

    /// Keeps only the arms named in `ids`, looking in the configured arms
    /// first and then in the built-in catalog.
    pub fn select_kernels(&mut self, ids: &[String]) -> Result<()> {
        let all = catalog();
        let mut chosen = Vec::with_capacity(ids.len());
        for id in ids {
            let arm = self
                .kernels
                .iter()
                .chain(all.iter())
                .find(|a| a.id == *id)
                .ok_or_else(|| HarnessError::config(format!("unknown kernel id `{id}`")))?;
            chosen.push(arm.clone());
        }
        self.kernels = chosen;
        Ok(())
    }

    pub fn cost_spec(&self) -> Result<CostSpec> {
        CostSpec::new(self.cost.q, self.cost.r).map_err(|e| HarnessError::config(e.to_string()))
    }

    /// The plant box as a linear model carrying the process noise.
    pub fn model_box(&self) -> Result<UncertainLinearModel> {
        let m = self.model;
        UncertainLinearModel::new(m.a_min, m.a_max, m.b_min, m.b_max, self.v)
            .map_err(|e| HarnessError::config(format!("model box: {e}")))
    }

    pub fn oracle_spec(&self, seed: u64) -> OracleSpec {
        OracleSpec { n_rollouts: self.oracle.n_rollouts, horizon: self.oracle.horizon, x0: self.oracle.x0, seed }
    }

    /// Gain interval used by the study.
    ///
    /// The configured (or derived) interval is intersected with the
    /// stability interval, less `stability_margin`, of the plant box and of
    /// every box an LQR kernel integrates over.
    pub fn effective_domain(&self) -> Result<ControllerDomain> {
        let model = self.model_box()?;
        let base = match self.domain {
            Some([lo, hi]) => ControllerDomain::new(lo, hi),
            None => stability_interval(&model).and_then(|d| shrink_domain(&d, self.domain_shrink)),
        }
        .map_err(|e| HarnessError::config(format!("domain: {e}")))?;
        let mut boxes = vec![model];
        for arm in &self.kernels {
            boxes.extend(arm.kernel.boxes(&model));
        }
        let mut dom = base;
        for b in &boxes {
            let stable = stability_interval_with_margin(b, self.stability_margin)
                .map_err(|e| HarnessError::config(format!("stability interval: {e}")))?;
            dom = dom
                .intersect(&stable)
                .map_err(|_| HarnessError::config("domain does not meet the stability interval"))?;
        }
        Ok(dom)
    }

    pub fn f_bar(&self, domain: &ControllerDomain) -> f64 {
        self.calibration.f_bar.unwrap_or_else(|| domain.midpoint())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(HarnessError::config(m));
        if self.replicates == 0 {
            return fail("replicates must be >= 1");
        }
        if self.n_evals.is_empty() || self.n_evals.contains(&0) {
            return fail("n_evals must list values >= 1");
        }
        if self.grid < 2 {
            return fail("grid must be >= 2");
        }
        if self.kernels.is_empty() {
            return fail("at least one kernel is required");
        }
        let mut ids: Vec<&str> = self.kernels.iter().map(|a| a.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return fail("kernel ids must be unique");
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return fail("noise_sd must be >= 0");
        }
        if !(self.gp_noise_var >= 0.0 && self.gp_noise_var.is_finite()) {
            return fail("gp_noise_var must be >= 0");
        }
        if !self.prior_mean.is_finite() {
            return fail("prior_mean must be finite");
        }
        if !(0.0..1.0).contains(&self.domain_shrink) {
            return fail("domain_shrink must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.stability_margin) {
            return fail("stability_margin must lie in [0, 1)");
        }
        if !(self.calibration.target > 0.0 && self.calibration.target.is_finite()) {
            return fail("calibration target must be > 0");
        }
        if self.rollout.horizon == 0 || self.rollout.n_rollouts == 0 {
            return fail("rollout horizon and n_rollouts must be >= 1");
        }
        if self.oracle.horizon == 0 || self.oracle.n_rollouts == 0 {
            return fail("oracle horizon and n_rollouts must be >= 1");
        }
        if self.study == Study::FitDemo && (self.fit_demo.examples.is_empty() || self.fit_demo.gains.is_empty()) {
            return fail("fit_demo needs at least one example and one gain");
        }
        if self.study == Study::KernelEval && (self.kernel_eval.grid < 2 || self.kernel_eval.points == 0) {
            return fail("kernel_eval needs grid >= 2 and points >= 1");
        }
        self.cost_spec()?;
        let domain = self.effective_domain()?;
        if let Some(f) = self.fit_demo.gains.iter().find(|f| !domain.contains(**f)) {
            if self.study == Study::FitDemo {
                return Err(HarnessError::config(format!("fit_demo gain {f} lies outside the domain")));
            }
        }
        for arm in &self.kernels {
            arm.validate()?;
        }
        Ok(())
    }
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}
