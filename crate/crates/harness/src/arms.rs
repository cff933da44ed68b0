//! Kernel arms: serializable kernel specifications and their construction.

use serde::{Deserialize, Serialize};

use lqrbo_core::{
    calibrate_signal_variance, Bound, Calibration, ControllerDomain, CostSpec, FiniteFeatureLqr, HyperOptions,
    HyperSchedule, Hyperparameter, Kernel, NonparametricLqr, ParametricLqr, SquaredExponential, UncertainLinearModel,
};

use crate::error::{HarnessError, Result};

/// Covariance function as written in a config file.
///
/// Unset nominal parameters and box limits default to the midpoint and the
/// limits of the experiment's model box; an unset length scale defaults to
/// one fifth of the domain width. `calibrate` rescales the signal variance so
/// that `k(f_bar, f_bar)` equals the configured calibration target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Se {
        sigma_se_sq: f64,
        #[serde(default)]
        length_scale: Option<f64>,
        #[serde(default)]
        calibrate: bool,
    },
    Parametric {
        sigma_p_sq: f64,
        #[serde(default)]
        a_bar: Option<f64>,
        #[serde(default)]
        b_bar: Option<f64>,
        #[serde(default)]
        calibrate: bool,
    },
    FiniteFeature {
        sigma_n_sq: f64,
        m: usize,
        #[serde(default)]
        a_min: Option<f64>,
        #[serde(default)]
        a_max: Option<f64>,
        #[serde(default)]
        b_min: Option<f64>,
        #[serde(default)]
        b_max: Option<f64>,
        /// Widens both intervals about their midpoints by this fraction.
        #[serde(default)]
        inflate: f64,
        #[serde(default)]
        calibrate: bool,
    },
    Nonparametric {
        sigma_n_sq: f64,
        #[serde(default)]
        a_min: Option<f64>,
        #[serde(default)]
        a_max: Option<f64>,
        #[serde(default)]
        b_min: Option<f64>,
        #[serde(default)]
        b_max: Option<f64>,
        /// Widens both intervals about their midpoints by this fraction.
        #[serde(default)]
        inflate: f64,
        #[serde(default)]
        calibrate: bool,
    },
    Sum {
        first: Box<KernelSpec>,
        second: Box<KernelSpec>,
        #[serde(default)]
        calibrate: bool,
    },
}

/// Integration box of an LQR kernel: the model box with optional overrides.
fn resolve_box(model: &UncertainLinearModel, limits: [Option<f64>; 4], inflate: f64) -> Result<UncertainLinearModel> {
    let [a_min, a_max, b_min, b_max] = limits;
    let m = UncertainLinearModel::new(
        a_min.unwrap_or(model.a_min),
        a_max.unwrap_or(model.a_max),
        b_min.unwrap_or(model.b_min),
        b_max.unwrap_or(model.b_max),
        model.v,
    )
    .map_err(|e| HarnessError::config(format!("kernel box: {e}")))?;
    if !(inflate >= 0.0 && inflate.is_finite()) {
        return Err(HarnessError::config("kernel box inflate must be >= 0"));
    }
    Ok(if inflate > 0.0 { m.inflate(inflate) } else { m })
}

/// Everything a kernel needs from the experiment to be built.
#[derive(Debug, Clone, Copy)]
pub struct BuildContext {
    pub model: UncertainLinearModel,
    pub cost: CostSpec,
    pub domain: ControllerDomain,
    pub calibration: Calibration,
}

impl KernelSpec {
    /// Nonparametric kernel over the model box.
    pub fn nonparametric(sigma_n_sq: f64, calibrate: bool) -> Self {
        KernelSpec::Nonparametric {
            sigma_n_sq,
            a_min: None,
            a_max: None,
            b_min: None,
            b_max: None,
            inflate: 0.0,
            calibrate,
        }
    }

    /// Integration box of a finite-feature or nonparametric kernel.
    fn own_box(&self, model: &UncertainLinearModel) -> Option<Result<UncertainLinearModel>> {
        match self {
            KernelSpec::FiniteFeature { a_min, a_max, b_min, b_max, inflate, .. }
            | KernelSpec::Nonparametric { a_min, a_max, b_min, b_max, inflate, .. } => {
                Some(resolve_box(model, [*a_min, *a_max, *b_min, *b_max], *inflate))
            }
            _ => None,
        }
    }

    pub fn calibrate(&self) -> bool {
        match self {
            KernelSpec::Se { calibrate, .. }
            | KernelSpec::Parametric { calibrate, .. }
            | KernelSpec::FiniteFeature { calibrate, .. }
            | KernelSpec::Nonparametric { calibrate, .. }
            | KernelSpec::Sum { calibrate, .. } => *calibrate,
        }
    }

    /// Model boxes integrated over by this kernel.
    pub fn boxes(&self, model: &UncertainLinearModel) -> Vec<UncertainLinearModel> {
        match self {
            KernelSpec::FiniteFeature { .. } | KernelSpec::Nonparametric { .. } => {
                self.own_box(model).and_then(|b| b.ok()).into_iter().collect()
            }
            KernelSpec::Sum { first, second, .. } => {
                let mut v = first.boxes(model);
                v.extend(second.boxes(model));
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn build(&self, ctx: &BuildContext) -> Result<Kernel> {
        let cfg = |e: lqrbo_core::Error| HarnessError::config(format!("kernel: {e}"));
        let (am, bm) = ctx.model.midpoint();
        let k: Kernel = match self {
            KernelSpec::Se { sigma_se_sq, length_scale, .. } => {
                let ell = length_scale.unwrap_or(ctx.domain.width() / 5.0);
                SquaredExponential::new(*sigma_se_sq, ell).map_err(cfg)?.into()
            }
            KernelSpec::Parametric { sigma_p_sq, a_bar, b_bar, .. } => {
                ParametricLqr::new(*sigma_p_sq, a_bar.unwrap_or(am), b_bar.unwrap_or(bm), ctx.cost, ctx.model.v)
                    .map_err(cfg)?
                    .into()
            }
            KernelSpec::FiniteFeature { sigma_n_sq, m, .. } => {
                let b = self.own_box(&ctx.model).expect("finite-feature kernel has a box")?;
                FiniteFeatureLqr::new(*sigma_n_sq, b, *m, ctx.cost).map_err(cfg)?.into()
            }
            KernelSpec::Nonparametric { sigma_n_sq, .. } => {
                let b = self.own_box(&ctx.model).expect("nonparametric kernel has a box")?;
                NonparametricLqr::new(*sigma_n_sq, b, ctx.cost).map_err(cfg)?.into()
            }
            KernelSpec::Sum { first, second, .. } => Kernel::sum(first.build(ctx)?, second.build(ctx)?),
        };
        if self.calibrate() {
            Ok(calibrate_signal_variance(&k, ctx.calibration.f_bar, ctx.calibration.target)?)
        } else {
            Ok(k)
        }
    }

    fn validate(&self) -> Result<()> {
        let non_negative = |x: f64, name: &str| {
            if x >= 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(HarnessError::config(format!("{name} must be >= 0")))
            }
        };
        match self {
            KernelSpec::Se { sigma_se_sq, length_scale, .. } => {
                non_negative(*sigma_se_sq, "sigma_se_sq")?;
                if let Some(l) = length_scale {
                    if !(*l > 0.0 && l.is_finite()) {
                        return Err(HarnessError::config("length_scale must be > 0"));
                    }
                }
                Ok(())
            }
            KernelSpec::Parametric { sigma_p_sq, .. } => non_negative(*sigma_p_sq, "sigma_p_sq"),
            KernelSpec::FiniteFeature { sigma_n_sq, m, inflate, .. } => {
                if !(*inflate >= 0.0 && inflate.is_finite()) {
                    return Err(HarnessError::config("inflate must be >= 0"));
                }
                if *m == 0 {
                    return Err(HarnessError::config("m must be >= 1"));
                }
                non_negative(*sigma_n_sq, "sigma_n_sq")
            }
            KernelSpec::Nonparametric { sigma_n_sq, inflate, .. } => {
                non_negative(*inflate, "inflate")?;
                non_negative(*sigma_n_sq, "sigma_n_sq")
            }
            KernelSpec::Sum { first, second, .. } => {
                first.validate()?;
                second.validate()
            }
        }
    }
}

/// Bounds of one hyperparameter fitted by marginal likelihood. Unset limits of
/// `a_bar` and `b_bar` default to the model box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundSpec {
    pub param: String,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
}

/// One kernel configuration compared in a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    pub id: String,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub optimize: Vec<BoundSpec>,
    /// Data points required before hyperparameters are refitted.
    #[serde(default)]
    pub min_points: Option<usize>,
}

/// Refit threshold used when an optimized arm does not set `min_points`.
pub const DEFAULT_MIN_POINTS: usize = 2;

impl ArmSpec {
    pub fn fixed(id: &str, kernel: KernelSpec) -> Self {
        Self { id: id.to_string(), kernel, optimize: Vec::new(), min_points: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(HarnessError::config(format!(
                "kernel id `{}` must be a non-empty [A-Za-z0-9_-] word",
                self.id
            )));
        }
        self.kernel.validate()?;
        for b in &self.optimize {
            parse_param(&b.param)?;
        }
        Ok(())
    }

    /// Resolved hyperparameter schedule, if any parameter is optimized.
    pub fn hyper(&self, ctx: &BuildContext) -> Result<Option<HyperSchedule>> {
        if self.optimize.is_empty() {
            return Ok(None);
        }
        let m = &ctx.model;
        let mut bounds = Vec::with_capacity(self.optimize.len());
        for spec in &self.optimize {
            let param = parse_param(&spec.param)?;
            let (dlo, dhi) = match param {
                Hyperparameter::ABar | Hyperparameter::AMin | Hyperparameter::AMax => (Some(m.a_min), Some(m.a_max)),
                Hyperparameter::BBar | Hyperparameter::BMin | Hyperparameter::BMax => (Some(m.b_min), Some(m.b_max)),
                _ => (None, None),
            };
            let (lo, hi) = match (spec.lo.or(dlo), spec.hi.or(dhi)) {
                (Some(lo), Some(hi)) => (lo, hi),
                _ => return Err(HarnessError::config(format!("bounds of `{}` must be given", spec.param))),
            };
            bounds.push(Bound::new(param, lo, hi).map_err(|e| HarnessError::config(format!("{}: {e}", spec.param)))?);
        }
        let options =
            HyperOptions { calibration: self.kernel.calibrate().then_some(ctx.calibration), ..HyperOptions::default() };
        Ok(Some(HyperSchedule { bounds, options, min_points: self.min_points.unwrap_or(DEFAULT_MIN_POINTS) }))
    }
}

fn parse_param(name: &str) -> Result<Hyperparameter> {
    Hyperparameter::ALL
        .iter()
        .copied()
        .find(|h| h.name() == name)
        .ok_or_else(|| HarnessError::config(format!("unknown hyperparameter `{name}`")))
}

/// Built-in arms selectable by id.
pub fn catalog() -> Vec<ArmSpec> {
    let bound = |param: &str, lo: Option<f64>, hi: Option<f64>| BoundSpec { param: param.to_string(), lo, hi };
    let se = KernelSpec::Se { sigma_se_sq: 50.0, length_scale: None, calibrate: false };
    let lqr1 = KernelSpec::Parametric { sigma_p_sq: 1.0, a_bar: None, b_bar: None, calibrate: true };
    let mut wide = KernelSpec::nonparametric(1.0, true);
    if let KernelSpec::Nonparametric { inflate, .. } = &mut wide {
        *inflate = 0.5;
    }
    vec![
        ArmSpec::fixed("se", se.clone()),
        ArmSpec {
            id: "se_opt".into(),
            kernel: se,
            optimize: vec![bound("sigma_se_sq", Some(1.0), Some(200.0)), bound("length_scale", Some(0.05), Some(1.6))],
            min_points: None,
        },
        ArmSpec::fixed("lqr1", lqr1.clone()),
        ArmSpec {
            id: "lqr2".into(),
            kernel: lqr1,
            optimize: vec![bound("a_bar", None, None), bound("b_bar", None, None)],
            min_points: None,
        },
        ArmSpec::fixed("lqr3", KernelSpec::nonparametric(1.0, true)),
        ArmSpec::fixed("lqr3_wide", wide),
        ArmSpec::fixed(
            "ff",
            KernelSpec::FiniteFeature {
                sigma_n_sq: 1.0,
                m: 20,
                a_min: None,
                a_max: None,
                b_min: None,
                b_max: None,
                inflate: 0.0,
                calibrate: true,
            },
        ),
        ArmSpec::fixed(
            "combined",
            KernelSpec::Sum {
                first: Box::new(KernelSpec::nonparametric(1.0, true)),
                second: Box::new(KernelSpec::Se { sigma_se_sq: 1.0, length_scale: None, calibrate: false }),
                calibrate: false,
            },
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> BuildContext {
        BuildContext {
            model: UncertainLinearModel::new(0.8, 1.0, 0.9, 1.1, 1.0).unwrap(),
            cost: CostSpec::default(),
            domain: ControllerDomain::new(-1.635, -0.001).unwrap(),
            calibration: Calibration { f_bar: -0.82, target: 10.0 },
        }
    }

    #[test]
    fn calibrated_arms_hit_the_target() {
        for arm in catalog() {
            let k = arm.kernel.build(&ctx()).unwrap();
            if arm.kernel.calibrate() {
                assert!((k.eval(-0.82, -0.82).unwrap() - 10.0).abs() < 1e-9, "{}", arm.id);
            }
        }
    }

    #[test]
    fn defaults_come_from_the_model_box_and_domain() {
        let c = ctx();
        let se = catalog()[0].kernel.build(&c).unwrap();
        assert_eq!(se.get(Hyperparameter::LengthScale), Some(c.domain.width() / 5.0));
        let lqr1 = catalog().into_iter().find(|a| a.id == "lqr1").unwrap().kernel.build(&c).unwrap();
        assert_eq!(lqr1.get(Hyperparameter::ABar), Some(0.9));
        assert_eq!(lqr1.get(Hyperparameter::BBar), Some(1.0));
    }

    #[test]
    fn lqr2_bounds_default_to_the_box() {
        let arm = catalog().into_iter().find(|a| a.id == "lqr2").unwrap();
        let h = arm.hyper(&ctx()).unwrap().unwrap();
        assert_eq!((h.bounds[0].lo, h.bounds[0].hi), (0.8, 1.0));
        assert_eq!((h.bounds[1].lo, h.bounds[1].hi), (0.9, 1.1));
        assert!(h.options.calibration.is_some());
        assert_eq!(h.min_points, DEFAULT_MIN_POINTS);
    }

    #[test]
    fn kernel_specs_round_trip_through_json() {
        for arm in catalog() {
            let text = serde_json::to_string(&arm).unwrap();
            assert_eq!(serde_json::from_str::<ArmSpec>(&text).unwrap(), arm);
        }
        let arm: ArmSpec = serde_json::from_str(
            r#"{"id":"np","kernel":{"type":"nonparametric","sigma_n_sq":20,"a_min":0.85,"inflate":0.5}}"#,
        )
        .unwrap();
        assert!((arm.kernel.boxes(&ctx().model)[0].a_min - (0.925 - 0.075 * 1.5)).abs() < 1e-15);
    }

    #[test]
    fn unknown_parameters_are_rejected() {
        let mut arm = catalog()[0].clone();
        arm.optimize.push(BoundSpec { param: "sigma".into(), lo: Some(0.0), hi: Some(1.0) });
        assert!(matches!(arm.validate(), Err(HarnessError::Config(_))));
    }
}
