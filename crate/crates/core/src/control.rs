//! Scalar plants, quadratic cost and the stabilizing gain set.
//!
//! For the linear plant `x[t+1] = a x[t] + b u[t] + v[t]` under `u[t] = f x[t]`
//! the stationary average cost has the closed form
//!
//! ```text
//! J(f) = v (q + r f^2) / (1 - (a + b f)^2)
//! ```
//!
//! which is the building block of every LQR kernel in this crate.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Quadratic cost weights on state (`q`) and input (`r`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostSpec {
    pub q: f64,
    pub r: f64,
}

impl CostSpec {
    pub fn new(q: f64, r: f64) -> Result<Self> {
        if !(q >= 0.0 && q.is_finite()) {
            return Err(Error::InvalidParameter("state weight q must be >= 0"));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidParameter("input weight r must be > 0"));
        }
        Ok(Self { q, r })
    }

    /// Stage cost weight `q + r f^2` of the closed loop.
    #[inline]
    pub fn stage_weight(&self, f: f64) -> f64 {
        self.q + self.r * f * f
    }
}

impl Default for CostSpec {
    fn default() -> Self {
        Self { q: 1.0, r: 1.0 }
    }
}

/// Interval-bounded linear model `a in [a_min, a_max]`, `b in [b_min, b_max]`
/// with process-noise variance `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertainLinearModel {
    pub a_min: f64,
    pub a_max: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub v: f64,
}

impl UncertainLinearModel {
    pub fn new(a_min: f64, a_max: f64, b_min: f64, b_max: f64, v: f64) -> Result<Self> {
        let m = Self { a_min, a_max, b_min, b_max, v };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.a_min, self.a_max, self.b_min, self.b_max, self.v].iter().all(|x| x.is_finite());
        if !all_finite {
            return Err(Error::InvalidParameter("model bounds must be finite"));
        }
        if self.a_min > self.a_max || self.b_min > self.b_max {
            return Err(Error::InvalidParameter("model bounds must be ordered"));
        }
        if self.v < 0.0 {
            return Err(Error::InvalidParameter("noise variance must be >= 0"));
        }
        Ok(())
    }

    pub fn midpoint(&self) -> (f64, f64) {
        (0.5 * (self.a_min + self.a_max), 0.5 * (self.b_min + self.b_max))
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        [(self.a_min, self.b_min), (self.a_min, self.b_max), (self.a_max, self.b_min), (self.a_max, self.b_max)]
    }

    /// Widens both intervals about their midpoints by `fraction` of their width.
    pub fn inflate(&self, fraction: f64) -> Self {
        let ha = 0.5 * (self.a_max - self.a_min) * (1.0 + fraction);
        let hb = 0.5 * (self.b_max - self.b_min) * (1.0 + fraction);
        let (am, bm) = self.midpoint();
        Self { a_min: am - ha, a_max: am + ha, b_min: bm - hb, b_max: bm + hb, v: self.v }
    }

    /// Largest `|a + b f|` over the box; the box is stable at `f` iff this is `< 1`.
    pub fn worst_closed_loop(&self, f: f64) -> f64 {
        self.corners().iter().map(|&(a, b)| a + b * f).fold(0.0_f64, |acc, s| if s.abs() > acc.abs() { s } else { acc })
    }
}

/// Closed interval of admissible feedback gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerDomain {
    pub lo: f64,
    pub hi: f64,
}

impl ControllerDomain {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter("domain requires finite lo < hi"));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.lo && f <= self.hi
    }

    pub fn check(&self, f: f64) -> Result<()> {
        if self.contains(f) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { f, lo: self.lo, hi: self.hi })
        }
    }

    /// `n` equally spaced points including both endpoints.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => alloc::vec![self.midpoint()],
            _ => {
                let step = self.width() / (n - 1) as f64;
                (0..n).map(|i| if i == n - 1 { self.hi } else { self.lo + step * i as f64 }).collect()
            }
        }
    }

    pub fn intersect(&self, other: &Self) -> Result<Self> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(Error::EmptyInterval)
        }
    }
}

/// Sine plant `x[t+1] = a_tilde sin(x[t]) + b_tilde u[t] + v[t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearSinPlant {
    pub a_tilde: f64,
    pub b_tilde: f64,
    pub v: f64,
}

impl NonlinearSinPlant {
    pub fn new(a_tilde: f64, b_tilde: f64, v: f64) -> Result<Self> {
        if !(a_tilde.is_finite() && b_tilde.is_finite()) {
            return Err(Error::InvalidParameter("plant coefficients must be finite"));
        }
        if !(v >= 0.0) {
            return Err(Error::InvalidParameter("noise variance must be >= 0"));
        }
        Ok(Self { a_tilde, b_tilde, v })
    }
}

/// First-order plant used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarPlant {
    Linear { a: f64, b: f64, v: f64 },
    Sin(NonlinearSinPlant),
}

impl ScalarPlant {
    pub fn noise_var(&self) -> f64 {
        match *self {
            ScalarPlant::Linear { v, .. } => v,
            ScalarPlant::Sin(p) => p.v,
        }
    }

    /// One step of the closed loop without noise.
    #[inline]
    pub fn drift(&self, x: f64, u: f64) -> f64 {
        match *self {
            ScalarPlant::Linear { a, b, .. } => a * x + b * u,
            ScalarPlant::Sin(p) => p.a_tilde * libm::sin(x) + p.b_tilde * u,
        }
    }
}

/// Stationary average cost of the linear closed loop `a + b f`.
///
/// Fails with [`Error::Unstable`] when `|a + b f| >= 1`, including the
/// boundary itself.
pub fn lqr_cost(a: f64, b: f64, f: f64, cost: &CostSpec, v: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::InvalidParameter("noise variance must be > 0"));
    }
    let s = a + b * f;
    if !(s.abs() < 1.0) {
        return Err(Error::Unstable { closed_loop: s });
    }
    Ok(v * cost.stage_weight(f) / (1.0 - s * s))
}

/// Open interval of gains stabilizing every model in the box.
///
/// `a + b f` is affine in `(a, b)`, so the extremes over the box are taken at
/// the corners. Requires `b` bounded away from zero on one side.
pub fn stability_interval(model: &UncertainLinearModel) -> Result<ControllerDomain> {
    model.validate()?;
    if model.b_min <= 0.0 && model.b_max >= 0.0 {
        return Err(Error::InvalidParameter("input gain interval must exclude zero"));
    }
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    for (a, b) in model.corners() {
        // |a + b f| < 1  <=>  (-1 - a)/b < f < (1 - a)/b   for b > 0
        let (l, h) = if b > 0.0 { ((-1.0 - a) / b, (1.0 - a) / b) } else { ((1.0 - a) / b, (-1.0 - a) / b) };
        lo = lo.max(l);
        hi = hi.min(h);
    }
    if lo < hi {
        Ok(ControllerDomain { lo, hi })
    } else {
        Err(Error::EmptyInterval)
    }
}

/// Stability interval restricted so that `|a + b f| <= 1 - margin` on the box.
pub fn stability_interval_with_margin(model: &UncertainLinearModel, margin: f64) -> Result<ControllerDomain> {
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::InvalidParameter("margin must lie in [0, 1)"));
    }
    let scaled = 1.0 - margin;
    let open = stability_interval(model)?;
    let mut lo = open.lo;
    let mut hi = open.hi;
    for (a, b) in model.corners() {
        let (l, h) =
            if b > 0.0 { ((-scaled - a) / b, (scaled - a) / b) } else { ((scaled - a) / b, (-scaled - a) / b) };
        lo = lo.max(l);
        hi = hi.min(h);
    }
    ControllerDomain::new(lo, hi).map_err(|_| Error::EmptyInterval)
}

/// Shrinks the interval symmetrically about its midpoint; `fraction` is the
/// share of total width removed.
pub fn shrink_domain(dom: &ControllerDomain, fraction: f64) -> Result<ControllerDomain> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter("shrink fraction must lie in [0, 1)"));
    }
    if fraction == 0.0 {
        return Ok(*dom);
    }
    let half = 0.5 * dom.width() * (1.0 - fraction);
    let mid = dom.midpoint();
    ControllerDomain::new(mid - half, mid + half)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> CostSpec {
        CostSpec::default()
    }

    #[test]
    fn deadbeat_gain_cost() {
        let j = lqr_cost(0.9, 1.0, -0.9, &unit(), 1.0).unwrap();
        assert!((j - 1.81).abs() < 1e-12);
    }

    #[test]
    fn open_loop_cost() {
        let j = lqr_cost(0.9, 1.0, 0.0, &unit(), 1.0).unwrap();
        assert!((j - 1.0 / 0.19).abs() < 1e-12);
    }

    #[test]
    fn cost_solves_stationary_variance() {
        let (a, b, f) = (0.7, 1.3, -0.2);
        let s: f64 = a + b * f;
        let p = 1.0 / (1.0 - s * s);
        assert!((p - p * s * s - 1.0).abs() < 1e-12);
        let j = lqr_cost(a, b, f, &unit(), 1.0).unwrap();
        assert!((j - unit().stage_weight(f) * p).abs() < 1e-12);
    }

    #[test]
    fn boundary_gain_is_a_domain_error() {
        assert!(matches!(lqr_cost(0.9, 1.0, 0.1, &unit(), 1.0), Err(Error::Unstable { .. })));
        assert!(lqr_cost(0.9, 1.0, 0.5, &unit(), 1.0).is_err());
        assert!(lqr_cost(0.9, 1.0, -0.5, &unit(), 0.0).is_err());
    }

    #[test]
    fn paper_box_stability_interval() {
        let m = UncertainLinearModel::new(0.8, 1.0, 0.9, 1.1, 1.0).unwrap();
        let d = stability_interval(&m).unwrap();
        assert!((d.lo - (-1.8 / 1.1)).abs() < 1e-12);
        assert!(d.hi.abs() < 1e-15);
    }

    #[test]
    fn degenerate_box_stability_interval() {
        let m = UncertainLinearModel::new(0.9, 0.9, 1.0, 1.0, 1.0).unwrap();
        let d = stability_interval(&m).unwrap();
        assert!((d.lo + 1.9).abs() < 1e-12);
        assert!((d.hi - 0.1).abs() < 1e-12);
    }

    #[test]
    fn infeasible_box_is_empty() {
        let m = UncertainLinearModel::new(-1.5, 1.5, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(stability_interval(&m), Err(Error::EmptyInterval));
        let z = UncertainLinearModel::new(0.5, 0.6, -0.1, 0.1, 1.0).unwrap();
        assert!(stability_interval(&z).is_err());
    }

    #[test]
    fn negative_input_gain_box_mirrors() {
        let pos = UncertainLinearModel::new(0.8, 1.0, 0.9, 1.1, 1.0).unwrap();
        let neg = UncertainLinearModel::new(0.8, 1.0, -1.1, -0.9, 1.0).unwrap();
        let dp = stability_interval(&pos).unwrap();
        let dn = stability_interval(&neg).unwrap();
        assert!((dp.lo + dn.hi).abs() < 1e-12);
        assert!((dp.hi + dn.lo).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_study_domain() {
        let m = UncertainLinearModel::new(0.9, 1.1, 0.9, 1.1, 1.0).unwrap();
        let d = shrink_domain(&stability_interval(&m).unwrap(), 0.2).unwrap();
        assert!((d.lo - (-1.57)).abs() < 5e-3, "{}", d.lo);
        assert!((d.hi - (-0.27)).abs() < 5e-3, "{}", d.hi);
    }

    #[test]
    fn shrink_examples() {
        let d = ControllerDomain::new(-1.8, 0.2).unwrap();
        assert_eq!(shrink_domain(&d, 0.0).unwrap(), d);
        let u = ControllerDomain::new(0.0, 1.0).unwrap();
        let s = shrink_domain(&u, 0.2).unwrap();
        assert!((s.lo - 0.1).abs() < 1e-15 && (s.hi - 0.9).abs() < 1e-15);
        assert!(shrink_domain(&u, 1.0).is_err());
    }

    #[test]
    fn margin_keeps_corners_inside() {
        let m = UncertainLinearModel::new(0.8, 1.0, 0.9, 1.1, 1.0).unwrap();
        let d = stability_interval_with_margin(&m, 5e-4).unwrap();
        for f in [d.lo, d.hi] {
            assert!(m.worst_closed_loop(f).abs() <= 1.0 - 5e-4 + 1e-12);
        }
        // The configured upper end -0.001 survives this margin untouched.
        assert!(d.hi > -0.001);
    }

    #[test]
    fn grid_includes_endpoints() {
        let d = ControllerDomain::new(-1.64, -0.001).unwrap();
        let g = d.grid(100);
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], -1.64);
        assert_eq!(g[99], -0.001);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
