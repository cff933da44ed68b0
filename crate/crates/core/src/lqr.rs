//! LQR kernels.
//!
//! Every kernel here is built from the closed-form cost feature
//! `phi_(a,b)(f) = v (q + r f^2) / (1 - (a + b f)^2)` of a linear model:
//!
//! * [`ParametricLqr`]: one feature at a nominal model, rank one.
//! * [`FiniteFeatureLqr`]: `m x m` features on a lower-limit grid of the
//!   model box with prior scale `sigma_n^2 |box| / m^2`.
//! * [`NonparametricLqr`]: the `m -> inf` limit, an integral of
//!   `phi(f) phi(f')` over the box, evaluated by tensor Gauss–Legendre.
//!
//! The nonparametric kernel verifies each point against a rule of twice the
//! order. Gains close to the stability boundary produce integrands peaked at a
//! box corner or edge, so the order escalates per point (48, 96, 192, 384,
//! then an edge-graded composite rule). Entries between two points use the
//! finer of their two rules, which keeps every Gram matrix a positively
//! weighted sum of outer products and therefore positive semidefinite.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::control::{lqr_cost, CostSpec, UncertainLinearModel};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::quadrature::{integrate_adaptive_2d, GaussLegendre};

/// Default Gauss–Legendre points per axis for the nonparametric kernel.
pub const DEFAULT_QUADRATURE_ORDER: usize = 48;
/// Target agreement with the doubled-order rule.
pub const QUADRATURE_TARGET_REL: f64 = 1e-8;
/// Largest accepted disagreement before the evaluation fails.
pub const QUADRATURE_ACCEPT_REL: f64 = 1e-6;
const GRADED_DEPTH: u32 = 10;

/// Parametric LQR kernel `sigma_p^2 phi(f) phi(f')` at the nominal model
/// `(a_bar, b_bar)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParametricLqr {
    pub sigma_p_sq: f64,
    pub a_bar: f64,
    pub b_bar: f64,
    pub cost: CostSpec,
    pub v: f64,
}

impl ParametricLqr {
    pub fn new(sigma_p_sq: f64, a_bar: f64, b_bar: f64, cost: CostSpec, v: f64) -> Result<Self> {
        if !(sigma_p_sq >= 0.0 && sigma_p_sq.is_finite()) {
            return Err(Error::InvalidParameter("sigma_p_sq must be >= 0"));
        }
        if !(v > 0.0) {
            return Err(Error::InvalidParameter("noise variance must be > 0"));
        }
        Ok(Self { sigma_p_sq, a_bar, b_bar, cost, v })
    }

    /// Nominal model at the box midpoint.
    pub fn at_midpoint(sigma_p_sq: f64, model: &UncertainLinearModel, cost: CostSpec) -> Result<Self> {
        let (a, b) = model.midpoint();
        Self::new(sigma_p_sq, a, b, cost, model.v)
    }

    #[inline]
    pub fn feature(&self, f: f64) -> Result<f64> {
        lqr_cost(self.a_bar, self.b_bar, f, &self.cost, self.v)
    }

    pub fn eval(&self, f: f64, fp: f64) -> Result<f64> {
        Ok(self.sigma_p_sq * self.feature(f)? * self.feature(fp)?)
    }

    pub fn cross(&self, xs: &[f64], ys: &[f64]) -> Result<DMatrix<f64>> {
        let px = xs.iter().map(|&f| self.feature(f)).collect::<Result<Vec<_>>>()?;
        let py = ys.iter().map(|&f| self.feature(f)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| self.sigma_p_sq * px[i] * py[j]))
    }

    pub fn diag(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&f| self.feature(f).map(|p| self.sigma_p_sq * p * p)).collect()
    }
}

/// Parametric LQR kernel as a free function.
pub fn k_parametric(
    f: f64,
    f_prime: f64,
    a_bar: f64,
    b_bar: f64,
    sigma_p_sq: f64,
    cost: &CostSpec,
    v: f64,
) -> Result<f64> {
    ParametricLqr::new(sigma_p_sq, a_bar, b_bar, *cost, v)?.eval(f, f_prime)
}

/// Feature map `Phi(f) = [phi_(a_i, b_i)(f)]` over a list of linear models.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub models: Vec<(f64, f64)>,
    pub cost: CostSpec,
    pub v: f64,
}

impl FeatureVector {
    pub fn new(models: Vec<(f64, f64)>, cost: CostSpec, v: f64) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidParameter("feature vector needs at least one model"));
        }
        if !(v > 0.0) {
            return Err(Error::InvalidParameter("noise variance must be > 0"));
        }
        Ok(Self { models, cost, v })
    }

    /// All `m^2` combinations of the lower limits of `m` equal partitions of
    /// each interval.
    pub fn lower_limits(model: &UncertainLinearModel, m: usize, cost: CostSpec) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("feature count m must be >= 1"));
        }
        let da = (model.a_max - model.a_min) / m as f64;
        let db = (model.b_max - model.b_min) / m as f64;
        let mut models = Vec::with_capacity(m * m);
        for j in 0..m {
            let b = model.b_min + db * j as f64;
            for i in 0..m {
                models.push((model.a_min + da * i as f64, b));
            }
        }
        Self::new(models, cost, model.v)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn eval(&self, f: f64) -> Result<Vec<f64>> {
        self.models.iter().map(|&(a, b)| lqr_cost(a, b, f, &self.cost, self.v)).collect()
    }
}

/// `Phi(f)^T (scale I) Phi(f')`.
pub fn k_finite_feature(f: f64, f_prime: f64, features: &FeatureVector, scale: f64) -> Result<f64> {
    let p = features.eval(f)?;
    let q = features.eval(f_prime)?;
    Ok(scale * dot(&p, &q))
}

/// Finite-feature LQR kernel on the lower-limit grid of a model box.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteFeatureLqr {
    sigma_n_sq: f64,
    model: UncertainLinearModel,
    m: usize,
    features: FeatureVector,
}

impl FiniteFeatureLqr {
    pub fn new(sigma_n_sq: f64, model: UncertainLinearModel, m: usize, cost: CostSpec) -> Result<Self> {
        if !(sigma_n_sq >= 0.0 && sigma_n_sq.is_finite()) {
            return Err(Error::InvalidParameter("sigma_n_sq must be >= 0"));
        }
        model.validate()?;
        let features = FeatureVector::lower_limits(&model, m, cost)?;
        Ok(Self { sigma_n_sq, model, m, features })
    }

    pub fn sigma_n_sq(&self) -> f64 {
        self.sigma_n_sq
    }

    pub fn set_sigma_n_sq(&mut self, s: f64) {
        self.sigma_n_sq = s;
    }

    pub fn model(&self) -> &UncertainLinearModel {
        &self.model
    }

    pub fn set_model(&mut self, model: UncertainLinearModel) -> Result<()> {
        *self = Self::new(self.sigma_n_sq, model, self.m, self.features.cost)?;
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn features(&self) -> &FeatureVector {
        &self.features
    }

    /// Diagonal prior weight `sigma_n^2 (a_max - a_min)(b_max - b_min) / m^2`.
    pub fn weight(&self) -> f64 {
        let m = self.m as f64;
        self.sigma_n_sq * (self.model.a_max - self.model.a_min) * (self.model.b_max - self.model.b_min) / (m * m)
    }

    pub fn eval(&self, f: f64, fp: f64) -> Result<f64> {
        k_finite_feature(f, fp, &self.features, self.weight())
    }

    pub fn cross(&self, xs: &[f64], ys: &[f64]) -> Result<DMatrix<f64>> {
        let px = xs.iter().map(|&f| self.features.eval(f)).collect::<Result<Vec<_>>>()?;
        let py = ys.iter().map(|&f| self.features.eval(f)).collect::<Result<Vec<_>>>()?;
        let w = self.weight();
        Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| w * dot(&px[i], &py[j])))
    }
}

/// Nonparametric LQR kernel
/// `sigma_n^2 int_box phi_(a,b)(f) phi_(a,b)(f') da db`.
#[derive(Debug, Clone)]
pub struct NonparametricLqr {
    pub sigma_n_sq: f64,
    /// Integration box; `v` is the process-noise variance of the features.
    pub model: UncertainLinearModel,
    pub cost: CostSpec,
    ladder: Arc<[GaussLegendre]>,
}

impl NonparametricLqr {
    pub fn new(sigma_n_sq: f64, model: UncertainLinearModel, cost: CostSpec) -> Result<Self> {
        Self::with_order(sigma_n_sq, model, cost, DEFAULT_QUADRATURE_ORDER)
    }

    pub fn with_order(sigma_n_sq: f64, model: UncertainLinearModel, cost: CostSpec, order: usize) -> Result<Self> {
        if !(sigma_n_sq >= 0.0 && sigma_n_sq.is_finite()) {
            return Err(Error::InvalidParameter("sigma_n_sq must be >= 0"));
        }
        if order < 2 {
            return Err(Error::InvalidParameter("quadrature order must be >= 2"));
        }
        model.validate()?;
        if !(model.v > 0.0) {
            return Err(Error::InvalidParameter("noise variance must be > 0"));
        }
        let ladder: Vec<GaussLegendre> = [order, 2 * order, 4 * order, 8 * order]
            .into_iter()
            .map(GaussLegendre::new)
            .chain(core::iter::once(GaussLegendre::graded(order, GRADED_DEPTH)))
            .collect();
        Ok(Self { sigma_n_sq, model, cost, ladder: ladder.into() })
    }

    /// Points per axis of the base rule.
    pub fn order(&self) -> usize {
        self.ladder[0].len()
    }

    pub fn eval(&self, f: f64, fp: f64) -> Result<f64> {
        let (lo, hi) = if f <= fp { (f, fp) } else { (fp, f) };
        let mut batch = Batch::new(self);
        match batch.entry(lo, hi) {
            Err(Error::Quadrature(_)) => self.eval_adaptive(lo, hi),
            other => other,
        }
    }

    fn eval_adaptive(&self, f: f64, fp: f64) -> Result<f64> {
        let m = self.model;
        let sf = m.v * self.cost.stage_weight(f);
        let sp = m.v * self.cost.stage_weight(fp);
        let mut g = |a: f64, b: f64| {
            let s1 = a + b * f;
            let s2 = a + b * fp;
            sf * sp / ((1.0 - s1 * s1) * (1.0 - s2 * s2))
        };
        let val = integrate_adaptive_2d(
            &mut g,
            (m.a_min, m.a_max),
            (m.b_min, m.b_max),
            self.order().min(24),
            QUADRATURE_ACCEPT_REL,
            24,
        )?;
        Ok(self.sigma_n_sq * val)
    }

    pub fn cross(&self, xs: &[f64], ys: &[f64]) -> Result<DMatrix<f64>> {
        let mut batch = Batch::new(self);
        let ix = xs.iter().map(|&f| batch.resolve(f)).collect::<Result<Vec<_>>>()?;
        let iy = ys.iter().map(|&f| batch.resolve(f)).collect::<Result<Vec<_>>>()?;
        let mut out = DMatrix::zeros(xs.len(), ys.len());
        for (j, &pj) in iy.iter().enumerate() {
            for (i, &pi) in ix.iter().enumerate() {
                out[(i, j)] = batch.value(pi, pj)?;
            }
        }
        Ok(out)
    }

    pub fn diag(&self, xs: &[f64]) -> Result<Vec<f64>> {
        let mut batch = Batch::new(self);
        xs.iter()
            .map(|&f| {
                let p = batch.resolve(f)?;
                batch.value(p, p)
            })
            .collect()
    }

    /// Rule level (index into the escalation ladder) needed at `f`.
    pub fn required_level(&self, f: f64) -> Result<usize> {
        let mut batch = Batch::new(self);
        let p = batch.resolve(f)?;
        Ok(batch.points[p].level)
    }
}

/// Nonparametric LQR kernel with a base rule of `order` points per axis.
pub fn k_nonparametric(
    f: f64,
    f_prime: f64,
    model: &UncertainLinearModel,
    sigma_n_sq: f64,
    cost: &CostSpec,
    order: usize,
) -> Result<f64> {
    NonparametricLqr::with_order(sigma_n_sq, *model, *cost, order)?.eval(f, f_prime)
}

struct Level {
    a: Vec<f64>,
    b: Vec<f64>,
    w: Vec<f64>,
}

struct Point {
    f: f64,
    scale: f64,
    level: usize,
    g: Vec<Option<Vec<f64>>>,
}

/// Per-call cache of mapped rules and per-point integrand vectors.
struct Batch<'k> {
    kernel: &'k NonparametricLqr,
    levels: Vec<Option<Level>>,
    points: Vec<Point>,
    index: BTreeMap<u64, usize>,
}

impl<'k> Batch<'k> {
    fn new(kernel: &'k NonparametricLqr) -> Self {
        let n = kernel.ladder.len();
        Self { kernel, levels: (0..n).map(|_| None).collect(), points: Vec::new(), index: BTreeMap::new() }
    }

    fn level(&mut self, l: usize) -> &Level {
        if self.levels[l].is_none() {
            let m = &self.kernel.model;
            let rule = &self.kernel.ladder[l];
            let (a, wa): (Vec<f64>, Vec<f64>) = rule.mapped(m.a_min, m.a_max).into_iter().unzip();
            let (b, wb): (Vec<f64>, Vec<f64>) = rule.mapped(m.b_min, m.b_max).into_iter().unzip();
            let mut w = Vec::with_capacity(a.len() * b.len());
            for &wbj in &wb {
                for &wai in &wa {
                    w.push(wai * wbj);
                }
            }
            self.levels[l] = Some(Level { a, b, w });
        }
        self.levels[l].as_ref().expect("level initialized above")
    }

    fn g_vector(&mut self, p: usize, l: usize) -> Result<()> {
        if self.points[p].g[l].is_some() {
            return Ok(());
        }
        let f = self.points[p].f;
        let lev = self.level(l);
        let mut g = Vec::with_capacity(lev.w.len());
        for &b in &lev.b {
            for &a in &lev.a {
                let s = a + b * f;
                let d = 1.0 - s * s;
                if !(d > 0.0) {
                    return Err(Error::Unstable { closed_loop: s });
                }
                g.push(1.0 / d);
            }
        }
        self.points[p].g[l] = Some(g);
        Ok(())
    }

    fn raw(&mut self, p: usize, q: usize, l: usize) -> Result<f64> {
        self.g_vector(p, l)?;
        self.g_vector(q, l)?;
        self.level(l);
        let w = &self.levels[l].as_ref().expect("level initialized").w;
        let gp = self.points[p].g[l].as_ref().expect("vector computed");
        let gq = self.points[q].g[l].as_ref().expect("vector computed");
        Ok(w.iter().zip(gp).zip(gq).map(|((w, x), y)| w * x * y).sum())
    }

    fn resolve(&mut self, f: f64) -> Result<usize> {
        if let Some(&p) = self.index.get(&f.to_bits()) {
            return Ok(p);
        }
        let k = self.kernel;
        let worst = k.model.worst_closed_loop(f);
        if !(worst.abs() < 1.0) || !f.is_finite() {
            return Err(Error::Unstable { closed_loop: worst });
        }
        let p = self.points.len();
        self.points.push(Point {
            f,
            scale: k.model.v * k.cost.stage_weight(f),
            level: 0,
            g: (0..k.ladder.len()).map(|_| None).collect(),
        });
        let top = k.ladder.len() - 1;
        let mut prev = self.raw(p, p, 0)?;
        let mut chosen = None;
        let mut last_rel = 0.0;
        for l in 1..=top {
            let cur = self.raw(p, p, l)?;
            let rel = if cur == 0.0 { 0.0 } else { (prev - cur).abs() / cur.abs() };
            last_rel = rel;
            if rel <= QUADRATURE_TARGET_REL {
                chosen = Some(l - 1);
                break;
            }
            prev = cur;
        }
        let level = match chosen {
            Some(l) => l,
            None if last_rel <= QUADRATURE_ACCEPT_REL => top - 1,
            None => {
                self.points.pop();
                return Err(Error::Quadrature(last_rel));
            }
        };
        let pt = &mut self.points[p];
        pt.level = level;
        // Finer vectors are only kept for the chosen level.
        for (l, g) in pt.g.iter_mut().enumerate() {
            if l > level {
                *g = None;
            }
        }
        self.index.insert(f.to_bits(), p);
        Ok(p)
    }

    fn value(&mut self, p: usize, q: usize) -> Result<f64> {
        let l = self.points[p].level.max(self.points[q].level);
        let raw = self.raw(p, q, l)?;
        Ok(self.kernel.sigma_n_sq * self.points[p].scale * self.points[q].scale * raw)
    }

    fn entry(&mut self, f: f64, fp: f64) -> Result<f64> {
        let p = self.resolve(f)?;
        let q = self.resolve(fp)?;
        self.value(p, q)
    }
}

/// `k1(f, f') + k2(f, f')`.
pub fn k_sum(f: f64, f_prime: f64, k1: &Kernel, k2: &Kernel) -> Result<f64> {
    Ok(k1.eval(f, f_prime)? + k2.eval(f, f_prime)?)
}

/// Rescales the kernel's signal variance so that `k(f_bar, f_bar) = target`.
pub fn calibrate_signal_variance(kernel: &Kernel, f_bar: f64, target: f64) -> Result<Kernel> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::InvalidParameter("calibration target must be > 0"));
    }
    let current = kernel.eval(f_bar, f_bar)?;
    if !(current > 0.0 && current.is_finite()) {
        return Err(Error::InvalidParameter("kernel variance at calibration point must be > 0"));
    }
    let mut out = kernel.clone();
    if current != target {
        out.scale_signal(target / current);
    }
    Ok(out)
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
