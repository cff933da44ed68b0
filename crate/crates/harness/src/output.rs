//! Record types and their CSV / JSON serialization.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One metric of one kernel arm in one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub study: String,
    pub replicate: usize,
    pub kernel: String,
    /// Sampled plant parameters (`a_tilde`, `b_tilde` for the sine plant).
    pub a: f64,
    pub b: f64,
    pub seed: u64,
    pub n_evals: usize,
    pub metric: String,
    pub value: f64,
    pub outlier: bool,
}

/// A run that produced no metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replicate: usize,
    pub kernel: String,
    pub n_evals: usize,
    pub error: String,
}

/// Statistics of one `(kernel, n_evals)` cell over non-outlier records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub kernel: String,
    pub n_evals: usize,
    pub metric: String,
    pub mean: Option<f64>,
    /// Sample standard deviation (`n - 1` denominator).
    pub std: Option<f64>,
    pub median: Option<f64>,
    pub n: usize,
    pub n_excluded: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub study: String,
    pub seed: u64,
    pub replicates: usize,
    pub domain: [f64; 2],
    pub rows: Vec<SummaryRow>,
    pub failures: Vec<Failure>,
}

/// Posterior fit of one kernel on one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub f: f64,
    pub true_cost: f64,
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub post_mean: f64,
    pub post_sd: f64,
    pub kernel: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub example: usize,
    pub a: f64,
    pub b: f64,
    pub f: f64,
    pub j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub kernel: String,
    pub f: f64,
    pub f_prime: f64,
    pub k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub kernel: String,
    pub index: usize,
    pub eigenvalue: f64,
}

/// Mean and sample standard deviation; `None` for an empty slice.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Sorts records by study, kernel, evaluation count and replicate.
pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|x, y| {
        (&x.study, &x.kernel, x.n_evals, x.replicate, &x.metric).cmp(&(
            &y.study,
            &y.kernel,
            y.n_evals,
            y.replicate,
            &y.metric,
        ))
    });
}

pub fn sort_failures(failures: &mut [Failure]) {
    failures.sort_by(|x, y| (&x.kernel, x.n_evals, x.replicate).cmp(&(&y.kernel, y.n_evals, y.replicate)));
}

/// Per-cell statistics. Outlier records are excluded but counted; failures
/// are counted under `metric`.
/// Kept values, outlier count and failure count of one cell.
type Cell = (Vec<f64>, usize, usize);

pub fn summarize(records: &[RunRecord], failures: &[Failure], metric: &str) -> Vec<SummaryRow> {
    let mut cells: BTreeMap<(String, usize, String), Cell> = BTreeMap::new();
    for r in records {
        let cell = cells.entry((r.kernel.clone(), r.n_evals, r.metric.clone())).or_default();
        if r.outlier {
            cell.1 += 1;
        } else {
            cell.0.push(r.value);
        }
    }
    for f in failures {
        cells.entry((f.kernel.clone(), f.n_evals, metric.to_string())).or_default().2 += 1;
    }
    cells
        .into_iter()
        .map(|((kernel, n_evals, metric), (values, n_excluded, n_failed))| {
            let ms = mean_std(&values);
            SummaryRow {
                kernel,
                n_evals,
                metric,
                mean: ms.map(|m| m.0),
                std: ms.map(|m| m.1),
                median: median(&values),
                n: values.len(),
                n_excluded,
                n_failed,
            }
        })
        .collect()
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes an empty CSV with only the header line of `RunRecord`.
fn write_record_header(path: &Path) -> Result<()> {
    fs::write(path, "study,replicate,kernel,a,b,seed,n_evals,metric,value,outlier\n")?;
    Ok(())
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    if records.is_empty() {
        write_record_header(path)
    } else {
        write_csv(path, records)
    }
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// `dir/name`, creating `dir` if needed.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}
