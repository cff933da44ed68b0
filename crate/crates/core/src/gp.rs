//! Gaussian-process regression over a scalar gain.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::kernel::Kernel;

/// Jitter multipliers tried after a plain factorization fails, relative to
/// `trace / N` of the noisy Gram matrix.
pub const JITTER_LADDER: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];
/// Relative size of a negative posterior variance that is clamped to zero.
pub const VARIANCE_CLAMP_REL: f64 = 1e-6;

/// Posterior mean and variance at one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn std(&self) -> f64 {
        libm::sqrt(self.variance)
    }
}

#[derive(Debug, Clone)]
struct Cache {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
    mean_diag: f64,
}

/// Dataset, kernel and cached factorization of `K_N + sigma^2 I`.
///
/// Observations are kept sorted by `(f, J)`, so results do not depend on the
/// order in which data arrive.
#[derive(Debug, Clone)]
pub struct GpState {
    prior_mean: f64,
    kernel: Kernel,
    noise_var: f64,
    xs: Vec<f64>,
    ys: Vec<f64>,
    cache: Option<Cache>,
}

/// `K_ij = k(f_i, f_j)`, exactly symmetric.
pub fn gram(kernel: &Kernel, points: &[f64]) -> Result<DMatrix<f64>> {
    kernel.gram(points)
}

impl GpState {
    pub fn new(kernel: Kernel, noise_var: f64, prior_mean: f64) -> Result<Self> {
        if !(noise_var >= 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidParameter("observation noise variance must be >= 0"));
        }
        if !prior_mean.is_finite() {
            return Err(Error::InvalidParameter("prior mean must be finite"));
        }
        Ok(Self { prior_mean, kernel, noise_var, xs: Vec::new(), ys: Vec::new(), cache: None })
    }

    pub fn with_data(kernel: Kernel, noise_var: f64, prior_mean: f64, data: &[(f64, f64)]) -> Result<Self> {
        if data.iter().any(|d| !d.0.is_finite() || !d.1.is_finite()) {
            return Err(Error::InvalidParameter("observations must be finite"));
        }
        let mut gp = Self::new(kernel, noise_var, prior_mean)?;
        let mut sorted = data.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        gp.xs = sorted.iter().map(|d| d.0).collect();
        gp.ys = sorted.iter().map(|d| d.1).collect();
        gp.refresh()?;
        Ok(gp)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Observed gains in ascending order.
    pub fn inputs(&self) -> &[f64] {
        &self.xs
    }

    pub fn targets(&self) -> &[f64] {
        &self.ys
    }

    /// Jitter added to the diagonal by the current factorization.
    pub fn jitter(&self) -> f64 {
        self.cache.as_ref().map_or(0.0, |c| c.jitter)
    }

    /// Appends an observation. The state is unchanged on error.
    pub fn push(&mut self, f: f64, j: f64) -> Result<()> {
        if !f.is_finite() || !j.is_finite() {
            return Err(Error::InvalidParameter("observations must be finite"));
        }
        let at = self
            .xs
            .iter()
            .zip(&self.ys)
            .position(|(x, y)| x.total_cmp(&f).then(y.total_cmp(&j)).is_gt())
            .unwrap_or(self.xs.len());
        self.xs.insert(at, f);
        self.ys.insert(at, j);
        if let Err(e) = self.refresh() {
            self.xs.remove(at);
            self.ys.remove(at);
            self.refresh()?;
            return Err(e);
        }
        Ok(())
    }

    /// Replaces the kernel. The state is unchanged on error.
    pub fn set_kernel(&mut self, kernel: Kernel) -> Result<()> {
        let cache = self.factorize(&kernel, self.noise_var)?;
        self.kernel = kernel;
        self.cache = cache;
        Ok(())
    }

    fn refresh(&mut self) -> Result<()> {
        self.cache = self.factorize(&self.kernel, self.noise_var)?;
        Ok(())
    }

    fn factorize(&self, kernel: &Kernel, noise_var: f64) -> Result<Option<Cache>> {
        let n = self.xs.len();
        if n == 0 {
            return Ok(None);
        }
        let mut a = kernel.gram(&self.xs)?;
        for i in 0..n {
            a[(i, i)] += noise_var;
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::Factorization { jitter: 0.0 });
        }
        let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
        let scale = trace / n as f64;
        let mut jitter = 0.0;
        let mut chol = Cholesky::new(a.clone());
        if chol.is_none() && scale > 0.0 {
            for m in JITTER_LADDER {
                jitter = m * scale;
                let mut aj = a.clone();
                for i in 0..n {
                    aj[(i, i)] += jitter;
                }
                chol = Cholesky::new(aj);
                if chol.is_some() {
                    break;
                }
            }
        }
        let chol = chol.ok_or(Error::Factorization { jitter })?;
        let resid = DVector::from_iterator(n, self.ys.iter().map(|y| y - self.prior_mean));
        let alpha = chol.solve(&resid);
        let mean_diag = (trace - noise_var * n as f64) / n as f64;
        Ok(Some(Cache { chol, alpha, jitter, mean_diag }))
    }

    /// Posterior at a single input.
    pub fn posterior(&self, f_star: f64) -> Result<Prediction> {
        Ok(self.predict(&[f_star])?[0])
    }

    /// Posterior at several inputs sharing one cross-covariance evaluation.
    pub fn predict(&self, points: &[f64]) -> Result<Vec<Prediction>> {
        let prior = self.kernel.diag(points)?;
        let Some(cache) = &self.cache else {
            return Ok(prior.into_iter().map(|variance| Prediction { mean: self.prior_mean, variance }).collect());
        };
        let ks = self.kernel.cross(&self.xs, points)?;
        let means = ks.tr_mul(&cache.alpha);
        let v =
            cache.chol.l_dirty().solve_lower_triangular(&ks).ok_or(Error::Factorization { jitter: cache.jitter })?;
        let mut out = Vec::with_capacity(points.len());
        for (j, &kss) in prior.iter().enumerate() {
            let reduction = v.column(j).norm_squared();
            let mut variance = kss - reduction;
            if variance < 0.0 {
                let tol = VARIANCE_CLAMP_REL * kss.max(cache.mean_diag).max(0.0);
                if variance < -tol {
                    return Err(Error::NegativeVariance(variance));
                }
                variance = 0.0;
            }
            out.push(Prediction { mean: self.prior_mean + means[j], variance });
        }
        Ok(out)
    }

    pub fn predict_mean(&self, points: &[f64]) -> Result<Vec<f64>> {
        let Some(cache) = &self.cache else {
            return Ok(alloc::vec![self.prior_mean; points.len()]);
        };
        let ks = self.kernel.cross(&self.xs, points)?;
        Ok(ks.tr_mul(&cache.alpha).iter().map(|m| self.prior_mean + m).collect())
    }

    /// `-1/2 r^T (K + sigma^2 I)^-1 r - 1/2 log det (K + sigma^2 I) - N/2 log 2 pi`.
    pub fn log_marginal_likelihood(&self) -> Result<f64> {
        let cache = self.cache.as_ref().ok_or(Error::InvalidParameter("log marginal likelihood needs data"))?;
        Ok(self.lml_from(cache))
    }

    /// Log marginal likelihood of the current data under another kernel.
    pub fn log_marginal_likelihood_with(&self, kernel: &Kernel) -> Result<f64> {
        let cache = self
            .factorize(kernel, self.noise_var)?
            .ok_or(Error::InvalidParameter("log marginal likelihood needs data"))?;
        Ok(self.lml_from(&cache))
    }

    fn lml_from(&self, cache: &Cache) -> f64 {
        let n = self.xs.len();
        let fit: f64 = self.ys.iter().zip(cache.alpha.iter()).map(|(y, a)| (y - self.prior_mean) * a).sum();
        let l = cache.chol.l_dirty();
        let log_det: f64 = 2.0 * (0..n).map(|i| libm::log(l[(i, i)])).sum::<f64>();
        -0.5 * fit - 0.5 * log_det - 0.5 * n as f64 * libm::log(2.0 * PI)
    }
}
