//! Gauss–Legendre rules and tensor-product integration over a model box.

use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::control::UncertainLinearModel;
use crate::error::{Error, Result};

/// One-dimensional quadrature rule on the reference interval `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point Gauss–Legendre rule via Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be >= 1");
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let half = n.div_ceil(2);
        for i in 0..half {
            // Tricomi's initial guess, then Newton.
            let mut x = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            weights[i] = w;
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Composite rule whose panels halve in width toward both ends of
    /// `[-1, 1]`, `depth` times, each panel carrying an `order`-point rule.
    /// Resolves integrands peaked at an endpoint.
    pub fn graded(order: usize, depth: u32) -> Self {
        let base = Self::new(order);
        // Panel edges on [0, 1]: 0, 1/2, 3/4, ..., 1 - 2^-depth, 1.
        let mut edges = alloc::vec![0.0];
        for k in 1..=depth {
            edges.push(1.0 - libm::ldexp(1.0, -(k as i32)));
        }
        edges.push(1.0);
        let mut nodes = Vec::with_capacity(2 * base.len() * (edges.len() - 1));
        let mut weights = Vec::with_capacity(nodes.capacity());
        for sign in [-1.0, 1.0] {
            for w in edges.windows(2) {
                let (lo, hi) = (w[0], w[1]);
                let c = 0.5 * (lo + hi);
                let h = 0.5 * (hi - lo);
                for (&x, &wt) in base.nodes.iter().zip(&base.weights) {
                    nodes.push(sign * (c + h * x));
                    weights.push(h * wt);
                }
            }
        }
        let mut pairs: Vec<(f64, f64)> = nodes.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (nodes, weights) = pairs.into_iter().unzip();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Abscissas and weights mapped to `[lo, hi]`.
    pub fn mapped(&self, lo: f64, hi: f64) -> Vec<(f64, f64)> {
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| (c + h * x, h * w)).collect()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, lo: f64, hi: f64, mut g: F) -> f64 {
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * g(c + h * x);
        }
        h * acc
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor-product rule over `[a_min, a_max] x [b_min, b_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes_a: Vec<(f64, f64)>,
    pub nodes_b: Vec<(f64, f64)>,
    /// Points per axis.
    pub order: usize,
}

impl QuadratureRule {
    pub fn tensor(rule: &GaussLegendre, model: &UncertainLinearModel) -> Self {
        Self {
            nodes_a: rule.mapped(model.a_min, model.a_max),
            nodes_b: rule.mapped(model.b_min, model.b_max),
            order: rule.len(),
        }
    }

    pub fn gauss_legendre(order: usize, model: &UncertainLinearModel) -> Self {
        Self::tensor(&GaussLegendre::new(order), model)
    }

    pub fn integrate<F: FnMut(f64, f64) -> f64>(&self, mut g: F) -> f64 {
        let mut acc = 0.0;
        for &(b, wb) in &self.nodes_b {
            let mut inner = 0.0;
            for &(a, wa) in &self.nodes_a {
                inner += wa * g(a, b);
            }
            acc += wb * inner;
        }
        acc
    }
}

/// Adaptive quadrisection over a rectangle: a cell is accepted when its
/// `order`-point tensor estimate agrees with the sum over its four children
/// to `rel_tol` relative. Cells still unresolved at `max_depth` fail the call.
pub fn integrate_adaptive_2d<F: FnMut(f64, f64) -> f64>(
    g: &mut F,
    (a_lo, a_hi): (f64, f64),
    (b_lo, b_hi): (f64, f64),
    order: usize,
    rel_tol: f64,
    max_depth: u32,
) -> Result<f64> {
    let rule = GaussLegendre::new(order);
    let whole = cell(&rule, g, a_lo, a_hi, b_lo, b_hi);
    let mut worst = 0.0_f64;
    let total = refine(&rule, g, (a_lo, a_hi, b_lo, b_hi), whole, rel_tol, max_depth, &mut worst)?;
    let scale = total.abs().max(f64::MIN_POSITIVE);
    if worst / scale > rel_tol {
        return Err(Error::Quadrature(worst / scale));
    }
    Ok(total)
}

fn cell<F: FnMut(f64, f64) -> f64>(rule: &GaussLegendre, g: &mut F, a_lo: f64, a_hi: f64, b_lo: f64, b_hi: f64) -> f64 {
    rule.integrate(b_lo, b_hi, |b| rule.integrate(a_lo, a_hi, |a| g(a, b)))
}

fn refine<F: FnMut(f64, f64) -> f64>(
    rule: &GaussLegendre,
    g: &mut F,
    (a_lo, a_hi, b_lo, b_hi): (f64, f64, f64, f64),
    coarse: f64,
    rel_tol: f64,
    depth: u32,
    worst: &mut f64,
) -> Result<f64> {
    let am = 0.5 * (a_lo + a_hi);
    let bm = 0.5 * (b_lo + b_hi);
    let quads = [(a_lo, am, b_lo, bm), (am, a_hi, b_lo, bm), (a_lo, am, bm, b_hi), (am, a_hi, bm, b_hi)];
    let parts: [f64; 4] = quads.map(|(al, ah, bl, bh)| cell(rule, g, al, ah, bl, bh));
    let fine: f64 = parts.iter().sum();
    let err = (fine - coarse).abs();
    if err <= rel_tol * fine.abs() {
        return Ok(fine);
    }
    if depth == 0 {
        *worst = worst.max(err);
        return Ok(fine);
    }
    let mut acc = 0.0;
    for (q, p) in quads.into_iter().zip(parts) {
        acc += refine(rule, g, q, p, rel_tol, depth - 1, worst)?;
    }
    Ok(acc)
}
