//! Bayesian optimization of scalar feedback gains with LQR-structured
//! Gaussian-process kernels.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod bo;
pub mod control;
pub mod error;
pub mod gp;
pub mod hyperopt;
pub mod kernel;
pub mod lqr;
pub mod quadrature;
pub mod seed;
pub mod sim;
pub mod simplex;

pub use bo::{
    best_observed, expected_improvement, expected_improvement_gaussian, next_query, regret, regret_at_suggestion,
    run_bo, BoConfig, BoFailure, BoOutcome, BoSession, CostEvaluator, HyperSchedule, RegretRecord,
};
pub use control::{
    lqr_cost, shrink_domain, stability_interval, stability_interval_with_margin, ControllerDomain, CostSpec,
    NonlinearSinPlant, ScalarPlant, UncertainLinearModel,
};
pub use error::{Error, Result};
pub use gp::{gram, GpState, Prediction};
pub use hyperopt::{optimize_hyperparameters, Bound, Calibration, HyperFit, HyperOptions};
pub use kernel::{Hyperparameter, Kernel, KernelKind, SquaredExponential};
pub use lqr::{
    calibrate_signal_variance, k_finite_feature, k_nonparametric, k_parametric, k_sum, FeatureVector, FiniteFeatureLqr,
    NonparametricLqr, ParametricLqr,
};
pub use seed::{derive_seed, SeedTag};
pub use sim::{
    estimate_cost, rollout, true_cost_grid, true_cost_grid_with_divergence, EvalMode, Evaluator, OracleSpec, Rollout,
};
