//! Runs a configured study and writes its files.

use std::path::PathBuf;

use crate::config::{ExperimentConfig, Study};
use crate::error::{HarnessError, Result};
use crate::output::{output_path, write_csv, write_json, write_records, Summary};
use crate::studies::{run_bo_study, run_fit_demo, run_kernel_eval, run_rmse_study};

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: Option<Summary>,
}

/// Runs the study named in `cfg` and writes its outputs under `cfg.out`.
///
/// Replicated studies return [`HarnessError::AllRunsFailed`] after writing
/// their files when no run produced a metric.
pub fn execute(cfg: &ExperimentConfig) -> Result<RunReport> {
    let dir = cfg.out.as_path();
    let id = cfg.study.id();
    let mut files = Vec::new();
    let mut push = |name: String| -> Result<PathBuf> {
        let p = output_path(dir, &name)?;
        files.push(p.clone());
        Ok(p)
    };
    write_json(&push(format!("{id}_config.json"))?, cfg)?;
    let summary = match cfg.study {
        Study::RmseStudy | Study::BoLinear | Study::BoNonlinear => {
            let result = if cfg.study == Study::RmseStudy { run_rmse_study(cfg)? } else { run_bo_study(cfg)? };
            write_records(&push(format!("{id}_records.csv"))?, &result.records)?;
            let summary = result.summary(cfg);
            write_json(&push(format!("{id}_summary.json"))?, &summary)?;
            Some(summary)
        }
        Study::FitDemo => {
            let demo = run_fit_demo(cfg)?;
            for (e, rows) in demo.examples.iter().enumerate() {
                write_csv(&push(format!("{id}_example{}.csv", e + 1))?, rows)?;
            }
            write_csv(&push(format!("{id}_data.csv"))?, &demo.data)?;
            None
        }
        Study::KernelEval => {
            let ev = run_kernel_eval(cfg)?;
            write_csv(&push(format!("{id}_values.csv"))?, &ev.values)?;
            write_csv(&push(format!("{id}_spectra.csv"))?, &ev.spectra)?;
            None
        }
    };
    if let Some(s) = &summary {
        if s.rows.iter().all(|r| r.n + r.n_excluded == 0) {
            return Err(HarnessError::AllRunsFailed);
        }
    }
    Ok(RunReport { files, summary })
}
