//! Forward SDE coefficient families `dx = -f(t) x dt + g(t) dB` and the time
//! integrals derived from them.
//!
//! Variance-exploding (VE) families have `f = 0`. Variance-preserving (VP)
//! families are driven by a rate `beta(t)` with `f = beta / 2`, `g = sqrt(beta)`.
//! All built-in families use closed forms; custom coefficients fall back to
//! adaptive quadrature.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

pub type CoefficientFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied drift rate `f` and diffusion `g`.
#[derive(Clone)]
pub struct CustomCoefficients {
    pub drift: CoefficientFn,
    pub diffusion: CoefficientFn,
}

impl CustomCoefficients {
    pub fn new(
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomCoefficients { drift: Arc::new(drift), diffusion: Arc::new(diffusion) }
    }
}

impl fmt::Debug for CustomCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomCoefficients { .. }")
    }
}

impl PartialEq for CustomCoefficients {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.drift, &other.drift) && Arc::ptr_eq(&self.diffusion, &other.diffusion)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `g(t) = a e^{bt}`
    VeExp { a: f64, b: f64 },
    /// `g(t) = a`
    VeConst { a: f64 },
    /// `g(t) = sqrt(2 a t)`
    VeSqrt2at { a: f64 },
    /// `g(t) = (b + a t)^c`
    VePoly { a: f64, b: f64, c: f64 },
    /// `beta(t) = beta`
    VpConst { beta: f64 },
    /// `beta(t) = beta_min + (beta_max - beta_min) t`
    VpLinear { beta_min: f64, beta_max: f64 },
    /// `beta(t) = (b + a t)^rho` with `b = beta_min^{1/rho}`, `a = beta_max^{1/rho} - b`
    VpPoly { beta_min: f64, beta_max: f64, rho: f64 },
    /// `beta(t) = beta_min (beta_max / beta_min)^t`
    VpExp { beta_min: f64, beta_max: f64 },
    #[serde(skip)]
    Custom(CustomCoefficients),
}

impl Family {
    pub const BUILTIN_NAMES: [&'static str; 8] =
        ["ve_exp", "ve_const", "ve_sqrt2at", "ve_poly", "vp_const", "vp_linear", "vp_poly", "vp_exp"];

    pub fn name(&self) -> &'static str {
        match self {
            Family::VeExp { .. } => "ve_exp",
            Family::VeConst { .. } => "ve_const",
            Family::VeSqrt2at { .. } => "ve_sqrt2at",
            Family::VePoly { .. } => "ve_poly",
            Family::VpConst { .. } => "vp_const",
            Family::VpLinear { .. } => "vp_linear",
            Family::VpPoly { .. } => "vp_poly",
            Family::VpExp { .. } => "vp_exp",
            Family::Custom(_) => "custom",
        }
    }

    pub fn is_vp(&self) -> bool {
        matches!(
            self,
            Family::VpConst { .. } | Family::VpLinear { .. } | Family::VpPoly { .. } | Family::VpExp { .. }
        )
    }

    pub fn is_ve(&self) -> bool {
        matches!(
            self,
            Family::VeExp { .. } | Family::VeConst { .. } | Family::VeSqrt2at { .. } | Family::VePoly { .. }
        )
    }

    /// Named parameters in declaration order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Family::VeExp { a, b } => vec![("a", a), ("b", b)],
            Family::VeConst { a } => vec![("a", a)],
            Family::VeSqrt2at { a } => vec![("a", a)],
            Family::VePoly { a, b, c } => vec![("a", a), ("b", b), ("c", c)],
            Family::VpConst { beta } => vec![("beta", beta)],
            Family::VpLinear { beta_min, beta_max } => vec![("beta_min", beta_min), ("beta_max", beta_max)],
            Family::VpPoly { beta_min, beta_max, rho } => {
                vec![("beta_min", beta_min), ("beta_max", beta_max), ("rho", rho)]
            }
            Family::VpExp { beta_min, beta_max } => vec![("beta_min", beta_min), ("beta_max", beta_max)],
            Family::Custom(_) => vec![],
        }
    }

    /// VE polynomial family whose marginal standard deviation is
    /// `sigma(t) = (sigma_min^{1/rho} + (sigma_max^{1/rho} - sigma_min^{1/rho}) t)^rho`,
    /// so that `a2(t) = sigma(t)^2 - sigma(0)^2`.
    pub fn ve_poly_from_sigma(sigma_min: f64, sigma_max: f64, rho: f64) -> Result<Family> {
        if !(sigma_min > 0.0 && sigma_max > sigma_min && rho > 0.5 && sigma_max.is_finite() && rho.is_finite()) {
            return Err(Error::domain("need 0 < sigma_min < sigma_max and rho > 1/2"));
        }
        let base = sigma_min.powf(1.0 / rho);
        let slope = sigma_max.powf(1.0 / rho) - base;
        let k = (2.0 * rho * slope).powf(1.0 / (2.0 * rho - 1.0));
        let fam = Family::VePoly { a: k * slope, b: k * base, c: rho - 0.5 };
        fam.validate()?;
        Ok(fam)
    }

    /// VP polynomial family from the `(b + a t)^rho` parameterization.
    pub fn vp_poly_from_ab(a: f64, b: f64, rho: f64) -> Result<Family> {
        let fam = Family::VpPoly { beta_min: b.powf(rho), beta_max: (a + b).powf(rho), rho };
        fam.validate()?;
        Ok(fam)
    }

    /// `(a, b)` of the `(b + a t)^rho` form of a VP polynomial family.
    pub fn vp_poly_ab(beta_min: f64, beta_max: f64, rho: f64) -> (f64, f64) {
        let b = beta_min.powf(1.0 / rho);
        (beta_max.powf(1.0 / rho) - b, b)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::domain(format!("{}: {msg}", self.name())));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        match *self {
            Family::VeExp { a, b } => {
                if !(pos(a) && pos(b)) {
                    return bad("a and b must be positive");
                }
            }
            Family::VeConst { a } | Family::VeSqrt2at { a } => {
                if !pos(a) {
                    return bad("a must be positive");
                }
            }
            Family::VePoly { a, b, c } => {
                if !(pos(a) && pos(b) && pos(c)) {
                    return bad("a, b and c must be positive");
                }
            }
            Family::VpConst { beta } => {
                if !pos(beta) {
                    return bad("beta must be positive");
                }
            }
            Family::VpLinear { beta_min, beta_max } => {
                if !(pos(beta_min) && beta_max.is_finite() && beta_max >= beta_min) {
                    return bad("need 0 < beta_min <= beta_max");
                }
            }
            Family::VpPoly { beta_min, beta_max, rho } => {
                if !(pos(beta_min) && beta_max.is_finite() && beta_max > beta_min) {
                    return bad("need 0 < beta_min < beta_max");
                }
                if !(rho.is_finite() && rho >= 1.0) {
                    return bad("rho must be at least 1");
                }
            }
            Family::VpExp { beta_min, beta_max } => {
                if !(pos(beta_min) && beta_max.is_finite() && beta_max > beta_min) {
                    return bad("need 0 < beta_min < beta_max");
                }
            }
            Family::Custom(_) => {}
        }
        Ok(())
    }

    /// The VP rate `beta(t)`; `None` for other families.
    pub fn beta(&self, t: f64) -> Option<f64> {
        Some(match *self {
            Family::VpConst { beta } => beta,
            Family::VpLinear { beta_min, beta_max } => beta_min + (beta_max - beta_min) * t,
            Family::VpPoly { beta_min, beta_max, rho } => {
                let (a, b) = Family::vp_poly_ab(beta_min, beta_max, rho);
                (b + a * t).powf(rho)
            }
            Family::VpExp { beta_min, beta_max } => beta_min * ((beta_max / beta_min).ln() * t).exp(),
            _ => return None,
        })
    }

    /// `int_{t0}^{t1} beta` for VP families, written to avoid cancellation on short intervals where possible.
    pub fn beta_integral(&self, t0: f64, t1: f64) -> Option<f64> {
        let dt = t1 - t0;
        Some(match *self {
            Family::VpConst { beta } => beta * dt,
            Family::VpLinear { beta_min, beta_max } => dt * (beta_min + 0.5 * (beta_max - beta_min) * (t0 + t1)),
            Family::VpPoly { beta_min, beta_max, rho } => {
                let (a, b) = Family::vp_poly_ab(beta_min, beta_max, rho);
                ((b + a * t1).powf(rho + 1.0) - (b + a * t0).powf(rho + 1.0)) / (a * (rho + 1.0))
            }
            Family::VpExp { beta_min, beta_max } => {
                let lr = (beta_max / beta_min).ln();
                beta_min * (lr * t0).exp() * (lr * dt).exp_m1() / lr
            }
            _ => return None,
        })
    }
}

/// Gaussian transition-kernel coefficients: `x_t | x_0 ~ N(a1 x_0, a2 I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelParams {
    pub a1: f64,
    pub a2: f64,
}

/// Zero-mean isotropic Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianMarginal {
    pub variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct ScheduleSpec {
    family: Family,
    horizon: f64,
}

#[derive(Clone, Serialize, Deserialize)]
struct SpecRepr {
    #[serde(flatten)]
    family: Family,
    horizon: f64,
}

impl TryFrom<SpecRepr> for ScheduleSpec {
    type Error = Error;
    fn try_from(r: SpecRepr) -> Result<Self> {
        ScheduleSpec::new(r.family, r.horizon)
    }
}

impl From<ScheduleSpec> for SpecRepr {
    fn from(s: ScheduleSpec) -> Self {
        SpecRepr { family: s.family, horizon: s.horizon }
    }
}

impl ScheduleSpec {
    pub fn new(family: Family, horizon: f64) -> Result<Self> {
        family.validate()?;
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain(format!("horizon must be positive and finite, got {horizon}")));
        }
        Ok(ScheduleSpec { family, horizon })
    }

    pub fn custom(
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static,
        horizon: f64,
    ) -> Result<Self> {
        ScheduleSpec::new(Family::Custom(CustomCoefficients::new(drift, diffusion)), horizon)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        ScheduleSpec::new(self.family.clone(), horizon)
    }

    pub fn is_vp(&self) -> bool {
        self.family.is_vp()
    }

    pub fn is_ve(&self) -> bool {
        self.family.is_ve()
    }

    /// Drift rate `f(t)`.
    pub fn f(&self, t: f64) -> f64 {
        match &self.family {
            Family::Custom(c) => (c.drift)(t),
            fam => fam.beta(t).map_or(0.0, |b| 0.5 * b),
        }
    }

    /// Diffusion `g(t)`.
    pub fn g(&self, t: f64) -> f64 {
        match &self.family {
            Family::Custom(c) => (c.diffusion)(t),
            _ => self.g2(t).sqrt(),
        }
    }

    /// Squared diffusion `g(t)^2`.
    pub fn g2(&self, t: f64) -> f64 {
        match self.family {
            Family::VeExp { a, b } => a * a * (2.0 * b * t).exp(),
            Family::VeConst { a } => a * a,
            Family::VeSqrt2at { a } => 2.0 * a * t,
            Family::VePoly { a, b, c } => (b + a * t).powf(2.0 * c),
            Family::Custom(ref c) => {
                let g = (c.diffusion)(t);
                g * g
            }
            ref vp => vp.beta(t).expect("VP family"),
        }
    }

    /// Snap `t` into `[0, T]`, tolerating rounding noise from step arithmetic.
    pub fn check_time(&self, t: f64) -> Result<f64> {
        let tol = 1e-10 * self.horizon.max(1.0);
        if !t.is_finite() || t < -tol || t > self.horizon + tol {
            return Err(Error::domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(t.clamp(0.0, self.horizon))
    }

    fn check_interval(&self, t0: f64, t1: f64) -> Result<(f64, f64)> {
        let a = self.check_time(t0)?;
        let b = self.check_time(t1)?;
        if a > b {
            return Err(Error::domain(format!("inverted interval [{t0}, {t1}]")));
        }
        Ok((a, b))
    }

    /// `int_{t0}^{t1} f(s) ds`.
    pub fn int_f(&self, t0: f64, t1: f64) -> Result<f64> {
        let (a, b) = self.check_interval(t0, t1)?;
        match &self.family {
            Family::Custom(c) => quad::integrate(|s| (c.drift)(s), a, b),
            fam => Ok(fam.beta_integral(a, b).map_or(0.0, |v| 0.5 * v)),
        }
    }

    /// `int_{t0}^{t1} g(s)^2 ds`.
    pub fn int_g2(&self, t0: f64, t1: f64) -> Result<f64> {
        let (t0, t1) = self.check_interval(t0, t1)?;
        Ok(match self.family {
            Family::VeExp { a, b } => a * a * (2.0 * b * t0).exp() * (2.0 * b * (t1 - t0)).exp_m1() / (2.0 * b),
            Family::VeConst { a } => a * a * (t1 - t0),
            Family::VeSqrt2at { a } => a * (t1 - t0) * (t1 + t0),
            Family::VePoly { a, b, c } => {
                let p = 2.0 * c + 1.0;
                ((b + a * t1).powf(p) - (b + a * t0).powf(p)) / (a * p)
            }
            Family::Custom(_) => return quad::integrate(|s| self.g2(s), t0, t1),
            ref vp => vp.beta_integral(t0, t1).expect("VP family"),
        })
    }

    /// Transition-kernel coefficients `a1(t) = exp(-int_0^t f)` and
    /// `a2(t) = int_0^t exp(-2 int_s^t f) g(s)^2 ds`.
    pub fn kernel_params(&self, t: f64) -> Result<KernelParams> {
        let t = self.check_time(t)?;
        match &self.family {
            Family::Custom(c) => {
                let drift = |s: f64| (c.drift)(s);
                let big_f = |s: f64| quad::integrate(drift, 0.0, s);
                let ft = big_f(t)?;
                let a2 = quad::integrate_fallible(|s| Ok((-2.0 * (ft - big_f(s)?)).exp() * self.g2(s)), 0.0, t)?;
                Ok(KernelParams { a1: (-ft).exp(), a2 })
            }
            fam if fam.is_vp() => {
                let b = fam.beta_integral(0.0, t).expect("VP family");
                Ok(KernelParams { a1: (-0.5 * b).exp(), a2: -(-b).exp_m1() })
            }
            _ => Ok(KernelParams { a1: 1.0, a2: self.int_g2(0.0, t)? }),
        }
    }

    /// The reverse-process initial law: `N(0, a2(T) I)`.
    pub fn prior_distribution(&self) -> Result<GaussianMarginal> {
        Ok(GaussianMarginal { variance: self.kernel_params(self.horizon)?.a2 })
    }
}
