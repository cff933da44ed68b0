//! Marginal-likelihood fitting of kernel hyperparameters.
//!
//! A uniform grid over the bounded parameters seeds a Nelder–Mead refinement.
//! The incumbent kernel always competes, so the result never has a lower
//! marginal likelihood than the kernel the state started with.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gp::GpState;
use crate::kernel::{Hyperparameter, Kernel};
use crate::lqr::calibrate_signal_variance;
use crate::simplex::nelder_mead;

/// Search interval for one free hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub param: Hyperparameter,
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub fn new(param: Hyperparameter, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::InvalidParameter("bound requires finite lo <= hi"));
        }
        Ok(Self { param, lo, hi })
    }
}

/// Signal-variance normalization `k(f_bar, f_bar) = target`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub f_bar: f64,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperOptions {
    pub grid_per_axis: usize,
    pub max_evals: usize,
    pub tol: f64,
    /// Applied to every candidate before its likelihood is computed.
    pub calibration: Option<Calibration>,
}

impl Default for HyperOptions {
    fn default() -> Self {
        Self { grid_per_axis: 9, max_evals: 200, tol: 1e-9, calibration: None }
    }
}

/// Outcome of a hyperparameter search.
#[derive(Debug, Clone)]
pub struct HyperFit {
    pub kernel: Kernel,
    pub log_marginal_likelihood: f64,
    pub evaluations: usize,
    pub improved: bool,
}

/// Kernel with `values` assigned to the bounded parameters, calibrated if requested.
pub fn candidate(base: &Kernel, bounds: &[Bound], values: &[f64], opts: &HyperOptions) -> Result<Kernel> {
    let mut k = base.clone();
    for (b, &x) in bounds.iter().zip(values) {
        k.set(b.param, x)?;
    }
    match opts.calibration {
        Some(c) => calibrate_signal_variance(&k, c.f_bar, c.target),
        None => Ok(k),
    }
}

/// Maximizes the log marginal likelihood over `bounds`; falls back to the
/// incumbent kernel when no candidate is better or evaluation fails.
pub fn optimize_hyperparameters(gp: &GpState, bounds: &[Bound], opts: &HyperOptions) -> HyperFit {
    let incumbent = gp.kernel().clone();
    let incumbent_lml = gp.log_marginal_likelihood().unwrap_or(f64::NEG_INFINITY);
    let mut fit =
        HyperFit { kernel: incumbent.clone(), log_marginal_likelihood: incumbent_lml, evaluations: 0, improved: false };
    if bounds.is_empty() || gp.is_empty() {
        return fit;
    }

    let d = bounds.len();
    let lo: Vec<f64> = bounds.iter().map(|b| b.lo).collect();
    let hi: Vec<f64> = bounds.iter().map(|b| b.hi).collect();
    let mut evaluations = 0usize;
    let mut objective = |x: &[f64]| -> f64 {
        evaluations += 1;
        candidate(&incumbent, bounds, x, opts)
            .and_then(|k| gp.log_marginal_likelihood_with(&k))
            .map_or(f64::INFINITY, |l| -l)
    };

    let g = opts.grid_per_axis.max(1);
    let total = g.pow(d as u32);
    let mut best_x: Vec<f64> = lo.clone();
    let mut best_v = f64::INFINITY;
    let mut idx = alloc::vec![0usize; d];
    let mut x = alloc::vec![0.0; d];
    for _ in 0..total {
        for i in 0..d {
            x[i] =
                if g == 1 { 0.5 * (lo[i] + hi[i]) } else { lo[i] + (hi[i] - lo[i]) * idx[i] as f64 / (g - 1) as f64 };
        }
        let v = objective(&x);
        if v < best_v {
            best_v = v;
            best_x.copy_from_slice(&x);
        }
        for slot in idx.iter_mut() {
            *slot += 1;
            if *slot < g {
                break;
            }
            *slot = 0;
        }
    }

    if best_v.is_finite() {
        let step: Vec<f64> = (0..d)
            .map(|i| {
                let w = hi[i] - lo[i];
                if g > 1 {
                    w / (g - 1) as f64
                } else {
                    0.25 * w
                }
            })
            .collect();
        let r = nelder_mead(&mut objective, &best_x, &step, &lo, &hi, opts.max_evals, opts.tol);
        if r.value < best_v {
            best_v = r.value;
            best_x = r.x;
        }
    }
    fit.evaluations = evaluations;

    if best_v.is_finite() && -best_v > incumbent_lml {
        if let Ok(k) = candidate(&incumbent, bounds, &best_x, opts) {
            fit.kernel = k;
            fit.log_marginal_likelihood = -best_v;
            fit.improved = true;
        }
    }
    fit
}
