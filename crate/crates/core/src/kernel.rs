//! Covariance functions over the scalar controller gain.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lqr::{FiniteFeatureLqr, NonparametricLqr, ParametricLqr};

/// Squared-exponential kernel `s2 exp(-(f - f')^2 / (2 l^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredExponential {
    pub sigma_se_sq: f64,
    pub length_scale: f64,
}

impl SquaredExponential {
    pub fn new(sigma_se_sq: f64, length_scale: f64) -> Result<Self> {
        if !(sigma_se_sq >= 0.0 && sigma_se_sq.is_finite()) {
            return Err(Error::InvalidParameter("sigma_se_sq must be >= 0"));
        }
        if !(length_scale > 0.0 && length_scale.is_finite()) {
            return Err(Error::InvalidParameter("length_scale must be > 0"));
        }
        Ok(Self { sigma_se_sq, length_scale })
    }

    #[inline]
    pub fn eval(&self, f: f64, fp: f64) -> f64 {
        let d = (f - fp) / self.length_scale;
        self.sigma_se_sq * libm::exp(-0.5 * d * d)
    }
}

/// Named kernel hyperparameters, spelled as in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Hyperparameter {
    SigmaSeSq,
    LengthScale,
    SigmaPSq,
    ABar,
    BBar,
    SigmaNSq,
    AMin,
    AMax,
    BMin,
    BMax,
}

impl Hyperparameter {
    pub const ALL: [Hyperparameter; 10] = [
        Hyperparameter::SigmaSeSq,
        Hyperparameter::LengthScale,
        Hyperparameter::SigmaPSq,
        Hyperparameter::ABar,
        Hyperparameter::BBar,
        Hyperparameter::SigmaNSq,
        Hyperparameter::AMin,
        Hyperparameter::AMax,
        Hyperparameter::BMin,
        Hyperparameter::BMax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Hyperparameter::SigmaSeSq => "sigma_se_sq",
            Hyperparameter::LengthScale => "length_scale",
            Hyperparameter::SigmaPSq => "sigma_p_sq",
            Hyperparameter::ABar => "a_bar",
            Hyperparameter::BBar => "b_bar",
            Hyperparameter::SigmaNSq => "sigma_n_sq",
            Hyperparameter::AMin => "a_min",
            Hyperparameter::AMax => "a_max",
            Hyperparameter::BMin => "b_min",
            Hyperparameter::BMax => "b_max",
        }
    }
}

impl fmt::Display for Hyperparameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Hyperparameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Hyperparameter::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or(Error::InvalidParameter("unknown hyperparameter name"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    SquaredExponential,
    ParametricLqr,
    FiniteFeatureLqr,
    NonparametricLqr,
    Sum,
}

/// Tagged covariance function.
#[derive(Debug, Clone)]
pub enum Kernel {
    SquaredExponential(SquaredExponential),
    ParametricLqr(ParametricLqr),
    FiniteFeatureLqr(FiniteFeatureLqr),
    NonparametricLqr(NonparametricLqr),
    Sum(Box<Kernel>, Box<Kernel>),
}

impl Kernel {
    pub fn sum(k1: Kernel, k2: Kernel) -> Self {
        Kernel::Sum(Box::new(k1), Box::new(k2))
    }

    pub fn kind(&self) -> KernelKind {
        match self {
            Kernel::SquaredExponential(_) => KernelKind::SquaredExponential,
            Kernel::ParametricLqr(_) => KernelKind::ParametricLqr,
            Kernel::FiniteFeatureLqr(_) => KernelKind::FiniteFeatureLqr,
            Kernel::NonparametricLqr(_) => KernelKind::NonparametricLqr,
            Kernel::Sum(..) => KernelKind::Sum,
        }
    }

    pub fn eval(&self, f: f64, fp: f64) -> Result<f64> {
        match self {
            Kernel::SquaredExponential(k) => Ok(k.eval(f, fp)),
            Kernel::ParametricLqr(k) => k.eval(f, fp),
            Kernel::FiniteFeatureLqr(k) => k.eval(f, fp),
            Kernel::NonparametricLqr(k) => k.eval(f, fp),
            Kernel::Sum(k1, k2) => Ok(k1.eval(f, fp)? + k2.eval(f, fp)?),
        }
    }

    /// Cross-covariance matrix `K[i, j] = k(xs[i], ys[j])`.
    pub fn cross(&self, xs: &[f64], ys: &[f64]) -> Result<DMatrix<f64>> {
        match self {
            Kernel::SquaredExponential(k) => Ok(DMatrix::from_fn(xs.len(), ys.len(), |i, j| k.eval(xs[i], ys[j]))),
            Kernel::ParametricLqr(k) => k.cross(xs, ys),
            Kernel::FiniteFeatureLqr(k) => k.cross(xs, ys),
            Kernel::NonparametricLqr(k) => k.cross(xs, ys),
            Kernel::Sum(k1, k2) => Ok(k1.cross(xs, ys)? + k2.cross(xs, ys)?),
        }
    }

    /// Prior variances `k(x, x)`.
    pub fn diag(&self, xs: &[f64]) -> Result<Vec<f64>> {
        match self {
            Kernel::SquaredExponential(k) => Ok(xs.iter().map(|_| k.sigma_se_sq).collect()),
            Kernel::ParametricLqr(k) => k.diag(xs),
            Kernel::FiniteFeatureLqr(k) => xs.iter().map(|&x| k.eval(x, x)).collect(),
            Kernel::NonparametricLqr(k) => k.diag(xs),
            Kernel::Sum(k1, k2) => {
                let d1 = k1.diag(xs)?;
                let d2 = k2.diag(xs)?;
                Ok(d1.into_iter().zip(d2).map(|(a, b)| a + b).collect())
            }
        }
    }

    /// Gram matrix: upper triangle evaluated, lower triangle mirrored, so the
    /// result is exactly symmetric.
    pub fn gram(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        let mut k = self.cross(points, points)?;
        let n = points.len();
        for j in 0..n {
            for i in (j + 1)..n {
                k[(i, j)] = k[(j, i)];
            }
        }
        Ok(k)
    }

    /// Multiplies every signal variance by `c`, scaling the kernel by `c`.
    pub fn scale_signal(&mut self, c: f64) {
        match self {
            Kernel::SquaredExponential(k) => k.sigma_se_sq *= c,
            Kernel::ParametricLqr(k) => k.sigma_p_sq *= c,
            Kernel::FiniteFeatureLqr(k) => k.set_sigma_n_sq(k.sigma_n_sq() * c),
            Kernel::NonparametricLqr(k) => k.sigma_n_sq *= c,
            Kernel::Sum(k1, k2) => {
                k1.scale_signal(c);
                k2.scale_signal(c);
            }
        }
    }

    pub fn get(&self, h: Hyperparameter) -> Option<f64> {
        use Hyperparameter::*;
        match self {
            Kernel::SquaredExponential(k) => match h {
                SigmaSeSq => Some(k.sigma_se_sq),
                LengthScale => Some(k.length_scale),
                _ => None,
            },
            Kernel::ParametricLqr(k) => match h {
                SigmaPSq => Some(k.sigma_p_sq),
                ABar => Some(k.a_bar),
                BBar => Some(k.b_bar),
                _ => None,
            },
            Kernel::FiniteFeatureLqr(k) => {
                let m = k.model();
                match h {
                    SigmaNSq => Some(k.sigma_n_sq()),
                    AMin => Some(m.a_min),
                    AMax => Some(m.a_max),
                    BMin => Some(m.b_min),
                    BMax => Some(m.b_max),
                    _ => None,
                }
            }
            Kernel::NonparametricLqr(k) => match h {
                SigmaNSq => Some(k.sigma_n_sq),
                AMin => Some(k.model.a_min),
                AMax => Some(k.model.a_max),
                BMin => Some(k.model.b_min),
                BMax => Some(k.model.b_max),
                _ => None,
            },
            Kernel::Sum(k1, k2) => k1.get(h).or_else(|| k2.get(h)),
        }
    }

    /// Sets a hyperparameter; on a sum the first child carrying it is changed.
    pub fn set(&mut self, h: Hyperparameter, value: f64) -> Result<()> {
        use Hyperparameter::*;
        if !value.is_finite() {
            return Err(Error::InvalidParameter("hyperparameter must be finite"));
        }
        match self {
            Kernel::SquaredExponential(k) => {
                let mut next = *k;
                match h {
                    SigmaSeSq => next.sigma_se_sq = value,
                    LengthScale => next.length_scale = value,
                    _ => return Err(missing(h)),
                }
                *k = SquaredExponential::new(next.sigma_se_sq, next.length_scale)?;
            }
            Kernel::ParametricLqr(k) => match h {
                SigmaPSq => k.sigma_p_sq = non_negative(value)?,
                ABar => k.a_bar = value,
                BBar => k.b_bar = value,
                _ => return Err(missing(h)),
            },
            Kernel::FiniteFeatureLqr(k) => {
                let mut m = *k.model();
                match h {
                    SigmaNSq => {
                        k.set_sigma_n_sq(non_negative(value)?);
                        return Ok(());
                    }
                    AMin => m.a_min = value,
                    AMax => m.a_max = value,
                    BMin => m.b_min = value,
                    BMax => m.b_max = value,
                    _ => return Err(missing(h)),
                }
                k.set_model(m)?;
            }
            Kernel::NonparametricLqr(k) => {
                let mut m = k.model;
                match h {
                    SigmaNSq => {
                        k.sigma_n_sq = non_negative(value)?;
                        return Ok(());
                    }
                    AMin => m.a_min = value,
                    AMax => m.a_max = value,
                    BMin => m.b_min = value,
                    BMax => m.b_max = value,
                    _ => return Err(missing(h)),
                }
                m.validate()?;
                k.model = m;
            }
            Kernel::Sum(k1, k2) => {
                if k1.get(h).is_some() {
                    return k1.set(h, value);
                }
                return k2.set(h, value);
            }
        }
        Ok(())
    }
}

fn missing(_h: Hyperparameter) -> Error {
    Error::InvalidParameter("kernel has no such hyperparameter")
}

fn non_negative(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter("signal variance must be >= 0"))
    }
}

impl From<SquaredExponential> for Kernel {
    fn from(k: SquaredExponential) -> Self {
        Kernel::SquaredExponential(k)
    }
}

impl From<ParametricLqr> for Kernel {
    fn from(k: ParametricLqr) -> Self {
        Kernel::ParametricLqr(k)
    }
}

impl From<FiniteFeatureLqr> for Kernel {
    fn from(k: FiniteFeatureLqr) -> Self {
        Kernel::FiniteFeatureLqr(k)
    }
}

impl From<NonparametricLqr> for Kernel {
    fn from(k: NonparametricLqr) -> Self {
        Kernel::NonparametricLqr(k)
    }
}
