//! Iteration-complexity prescriptions: for a target accuracy `eps` in W2 and a
//! dimension `d`, the horizon, stepsize cap, score-error cap and implied step
//! count that each schedule family needs.
//!
//! Only the closed-form pieces are evaluated. Multiplicative constants hidden in
//! the asymptotic statements are not recovered, which `DISCLAIMER` records.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::schedule::Family;
use crate::search::GRID_POINTS;

pub const DISCLAIMER: &str =
    "closed-form horizon and caps only; multiplicative constants hidden in the order statements are suppressed";

/// Target accuracy, dimension and the data constants some prescriptions use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComplexityQuery {
    pub eps: f64,
    pub d: usize,
    pub m0: f64,
    pub l0: f64,
    pub x_star_norm: f64,
    /// Time-Lipschitz score constant; only the constant-coefficient cap uses it.
    pub m1: f64,
}

impl ComplexityQuery {
    /// Standard-normal data constants: `m0 = L0 = 1`, `x* = 0`, `M1 = 0`.
    pub fn new(eps: f64, d: usize) -> Self {
        ComplexityQuery { eps, d, m0: 1.0, l0: 1.0, x_star_norm: 0.0, m1: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::domain(format!("eps must be positive, got {}", self.eps)));
        }
        if self.d == 0 {
            return Err(Error::domain("d must be at least 1"));
        }
        if !(self.m0 > 0.0 && self.m0 <= self.l0 && self.l0.is_finite()) {
            return Err(Error::domain("need 0 < m0 <= L0"));
        }
        if !(self.x_star_norm >= 0.0 && self.m1 >= 0.0) {
            return Err(Error::domain("||x*|| and M1 must be nonnegative"));
        }
        Ok(())
    }

    fn sqrt_d(&self) -> f64 {
        (self.d as f64).sqrt()
    }

    /// `sqrt(2 d / m0) + ||x*||`.
    fn x0_bound(&self) -> f64 {
        crate::bounds::x0_l2_default(self.m0, self.d, self.x_star_norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prescription {
    pub family: String,
    pub params: Vec<(String, f64)>,
    pub eps: f64,
    pub d: usize,
    /// Horizon `K eta`.
    pub horizon: f64,
    pub eta_max: f64,
    pub m_max: f64,
    pub k_min: u64,
    pub order_label: String,
    pub disclaimer: &'static str,
}

impl Prescription {
    /// `a=1;b=0.5` style rendering of the family parameters.
    pub fn params_string(&self) -> String {
        self.params.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
    }
}

/// `ceil(horizon / eta)`, treating quotients within a few ulps of an integer as that integer.
pub fn steps_for(horizon: f64, eta: f64) -> Result<u64> {
    let q = horizon / eta;
    if !(q.is_finite() && q > 0.0) {
        return Err(Error::domain(format!("horizon {horizon} and stepsize {eta} give no positive step count")));
    }
    if q > 9.0e15 {
        return Err(Error::Budget(format!("step count {q:e} is not representable")));
    }
    let r = q.round();
    Ok(if (q - r).abs() <= 8.0 * f64::EPSILON * q { r as u64 } else { q.ceil() as u64 })
}

/// Order of the step count for each family.
pub fn order_label(family: &Family) -> Result<&'static str> {
    Ok(match family {
        Family::VeExp { .. } => "O(d log(d/ε)/ε^2)",
        Family::VeConst { .. } => "O(d^{3/2} log(d/ε)/ε^3)",
        Family::VeSqrt2at { .. } => "O(d^{5/4}/ε^{5/2})",
        Family::VePoly { .. } => "O(d^{1/(2(2c+1))+1}/ε^{1/(2c+1)+2})",
        Family::VpConst { .. } => "O(d log(d/ε)/ε^2)",
        Family::VpLinear { .. } => "O(d sqrt(log(d/ε))/ε^2)",
        Family::VpPoly { .. } => "O(d (log(d/ε))^{1/(ρ+1)}/ε^2)",
        Family::VpExp { .. } => "O(d log(log(d/ε))/ε^2)",
        Family::Custom(_) => return Err(Error::Unsupported("no prescription for custom schedules".into())),
    })
}

pub const GENERAL_VP_ORDER: &str = "O(d (log(d/ε))^{3c3+1}/ε^2)";

fn positive_horizon(horizon: f64, what: &str) -> Result<f64> {
    if horizon > 0.0 && horizon.is_finite() {
        Ok(horizon)
    } else {
        Err(Error::domain(format!("{what} gives a nonpositive horizon {horizon}")))
    }
}

fn positive_log(x: f64, what: &str) -> Result<f64> {
    let l = x.ln();
    if l > 0.0 && l.is_finite() {
        Ok(l)
    } else {
        Err(Error::domain(format!("{what} = {x} must exceed 1 for its logarithm to be positive")))
    }
}

fn finish(
    family: &Family,
    q: &ComplexityQuery,
    horizon: f64,
    eta_max: f64,
    m_max: f64,
    order_label: &str,
) -> Result<Prescription> {
    let horizon = positive_horizon(horizon, family.name())?;
    Ok(Prescription {
        family: family.name().to_string(),
        params: family.params().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        eps: q.eps,
        d: q.d,
        horizon,
        eta_max,
        m_max,
        k_min: steps_for(horizon, eta_max)?,
        order_label: order_label.to_string(),
        disclaimer: DISCLAIMER,
    })
}

/// Prescription for a built-in family.
pub fn prescribe(family: &Family, q: &ComplexityQuery) -> Result<Prescription> {
    q.validate()?;
    family.validate()?;
    let label = order_label(family)?;
    let (eps, d) = (q.eps, q.d as f64);
    let eta_default = eps * eps / d;
    match *family {
        Family::VeExp { b, .. } => {
            let log_sd = positive_log(q.sqrt_d() / eps, "sqrt(d)/eps")?;
            let log_inv = positive_log(1.0 / eps, "1/eps")?;
            finish(family, q, log_sd / (2.0 * b), eta_default, eps / log_inv, label)
        }
        Family::VeConst { .. } => {
            if d / eps <= std::f64::consts::E {
                return Err(Error::domain(format!("need d/eps > e, got {}", d / eps)));
            }
            let log_de = (d / eps).ln();
            finish(family, q, q.sqrt_d() / eps, eta_default / log_de, eps / log_de.sqrt(), label)
        }
        Family::VeSqrt2at { .. } => finish(family, q, d.powf(0.25) / eps.sqrt(), eta_default, eps.powf(1.5), label),
        Family::VePoly { c, .. } => {
            let p = 2.0 * c + 1.0;
            let horizon = d.powf(1.0 / (2.0 * p)) / eps.powf(1.0 / p);
            finish(family, q, horizon, eta_default, eps.powf(1.0 + 2.0 * c / p), label)
        }
        Family::VpConst { beta } => prescribe_const_coeff_for(family, 0.5 * beta, beta.sqrt(), q, label),
        Family::VpLinear { beta_min, beta_max } => {
            let horizon = vp_poly_horizon(beta_max - beta_min, beta_min, 1.0, q)?;
            finish(family, q, horizon, eta_default, eps, label)
        }
        Family::VpPoly { beta_min, beta_max, rho } => {
            let (a, b) = Family::vp_poly_ab(beta_min, beta_max, rho);
            finish(family, q, vp_poly_horizon(a, b, rho, q)?, eta_default, eps, label)
        }
        Family::VpExp { beta_min, beta_max } => {
            let rate = (beta_max / beta_min).ln();
            if !(rate > 0.0) {
                return Err(Error::domain("vp_exp needs beta_max > beta_min"));
            }
            let log_sd = positive_log(q.sqrt_d() / eps, "sqrt(d)/eps")?;
            let inner = positive_log(rate / beta_min * log_sd, "(b/a) log(sqrt(d)/eps)")?;
            finish(family, q, inner / rate, eta_default, eps, label)
        }
        Family::Custom(_) => unreachable!("order_label rejects custom schedules"),
    }
}

/// `((a(rho+1))^{1/(rho+1)} / a) (log(sqrt(d)/eps))^{1/(rho+1)} - b/a` for `beta(t) = (b + a t)^rho`.
pub fn vp_poly_horizon(a: f64, b: f64, rho: f64, q: &ComplexityQuery) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && rho > 0.0) {
        return Err(Error::domain("need a, b, rho > 0"));
    }
    let log_sd = positive_log(q.sqrt_d() / q.eps, "sqrt(d)/eps")?;
    let e = 1.0 / (rho + 1.0);
    positive_horizon((a * (rho + 1.0)).powf(e) / a * log_sd.powf(e) - b / a, "vp_poly")
}

/// Constant-coefficient schedule `f = alpha`, `g = sigma`.
pub fn prescribe_const_coeff(alpha: f64, sigma: f64, q: &ComplexityQuery) -> Result<Prescription> {
    q.validate()?;
    if !(alpha > 0.0 && sigma > 0.0) {
        return Err(Error::domain("alpha and sigma must be positive"));
    }
    let mut p = prescribe_const_coeff_for(&Family::VpConst { beta: sigma * sigma }, alpha, sigma, q, "O(d log(d/ε)/ε^2)")?;
    p.family = "const_coeff".into();
    p.params = vec![("alpha".into(), alpha), ("sigma".into(), sigma)];
    Ok(p)
}

fn prescribe_const_coeff_for(
    family: &Family,
    alpha: f64,
    sigma: f64,
    q: &ComplexityQuery,
    label: &str,
) -> Result<Prescription> {
    let s2 = sigma * sigma;
    if q.m0 < 2.0 * alpha / s2 {
        return Err(Error::domain(format!("constant-coefficient prescription needs m0 >= 2 alpha / sigma^2 = {}", 2.0 * alpha / s2)));
    }
    let r = q.x0_bound();
    let d = q.d as f64;
    let c_tilde = r * (4.0 * alpha + s2 * q.l0) + alpha * (d * s2 / (2.0 * alpha)).sqrt() + sigma * d.sqrt();
    let rate = 3.0 * alpha + s2 * q.l0;
    let mut eta = (q.eps * alpha / (8.0 * c_tilde * rate)).powi(2);
    if q.m1 > 0.0 {
        let drift = 1.0 + 2.0 * r + sigma * d.sqrt() / (2.0 * alpha).sqrt();
        eta = eta.min(alpha / (8.0 * q.m1 * drift * s2));
    }
    let stability = alpha / (2.0 * alpha * alpha + 2.0 * (2.0 * alpha + s2 * q.l0).powi(2));
    eta = eta.min(1.0).min(stability);
    let ratio = 4.0 * r / q.eps - 1.0;
    let horizon = (ratio * 2.0 * alpha / (q.m0 * s2)).ln_1p() / (2.0 * alpha);
    finish(family, q, horizon, eta, q.eps * alpha / (8.0 * s2), label)
}

/// Growth constants for `beta(t) <= c1 (int_0^t beta)^{c3} + c2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

/// General increasing-`beta` VP prescription. The horizon solves
/// `int_0^T beta = log(sqrt(d)/eps)`; the growth condition is checked on a grid over `[0, T]`.
pub fn prescribe_vp_general(family: &Family, growth: GrowthConstants, q: &ComplexityQuery) -> Result<Prescription> {
    q.validate()?;
    family.validate()?;
    if !family.is_vp() {
        return Err(Error::Unsupported(format!("{} is not a VP family", family.name())));
    }
    let GrowthConstants { c1, c2, c3 } = growth;
    if !(c1 > 0.0 && c2 > 0.0 && c3 > 0.0) {
        return Err(Error::domain("growth constants must be positive"));
    }
    let target = positive_log(q.sqrt_d() / q.eps, "sqrt(d)/eps")?;
    let log_inv = positive_log(1.0 / q.eps, "1/eps")?;
    let cum = |t: f64| family.beta_integral(0.0, t).expect("VP family");
    let horizon = solve_increasing(cum, target)?;
    for i in 0..GRID_POINTS {
        let t = horizon * i as f64 / (GRID_POINTS - 1) as f64;
        let beta = family.beta(t).expect("VP family");
        let cap = c1 * cum(t).powf(c3) + c2;
        if beta > cap * (1.0 + 1e-12) {
            return Err(Error::domain(format!("growth condition fails at t = {t}: beta = {beta} > {cap}")));
        }
    }
    let eta = q.eps * q.eps / (q.d as f64 * log_inv.powf(3.0 / c3));
    let m_max = q.eps / target.powf(c3);
    let mut p = finish(family, q, horizon, eta, m_max, GENERAL_VP_ORDER)?;
    p.params.extend([("c1".to_string(), c1), ("c2".to_string(), c2), ("c3".to_string(), c3)]);
    Ok(p)
}

/// Root of an increasing function with `f(0) = 0` by bracketing and bisection.
fn solve_increasing<F: Fn(f64) -> f64>(f: F, target: f64) -> Result<f64> {
    let mut hi = 1.0;
    while f(hi) < target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numeric { what: "horizon bracket did not close".into(), achieved: hi });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `sqrt(d)/eps`: the lower-bound comparator for Gaussian data, constants suppressed.
pub fn lower_bound_gaussian(q: &ComplexityQuery) -> Result<f64> {
    q.validate()?;
    Ok(q.sqrt_d() / q.eps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingCell {
    pub eps: f64,
    pub d: usize,
    /// Family names from fewest to most steps.
    pub ranking: Vec<String>,
    pub k_min: Vec<(String, u64)>,
    /// Set when both VE exponential and VE constant schedules were evaluated.
    pub ve_const_exceeds_ve_exp: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsScaling {
    pub family: String,
    pub d: usize,
    pub eps: f64,
    /// `K(eps/2) / K(eps)`.
    pub halving_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingReport {
    pub rows: Vec<Prescription>,
    pub cells: Vec<OrderingCell>,
    pub eps_scaling: Vec<EpsScaling>,
}

/// Evaluate every family at every `(eps, d)`, rank by step count and record how
/// each count responds to halving `eps`.
pub fn ordering_report(families: &[Family], eps_list: &[f64], d_list: &[usize], base: &ComplexityQuery) -> Result<OrderingReport> {
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut eps_scaling = Vec::new();
    for &eps in eps_list {
        for &d in d_list {
            let q = ComplexityQuery { eps, d, ..*base };
            let mut k_min = Vec::with_capacity(families.len());
            for fam in families {
                let p = prescribe(fam, &q)?;
                let halved = prescribe(fam, &ComplexityQuery { eps: eps / 2.0, ..q })?;
                eps_scaling.push(EpsScaling {
                    family: p.family.clone(),
                    d,
                    eps,
                    halving_ratio: halved.k_min as f64 / p.k_min as f64,
                });
                k_min.push((p.family.clone(), p.k_min));
                rows.push(p);
            }
            let mut ranked = k_min.clone();
            ranked.sort_by_key(|(_, k)| *k);
            let lookup = |name: &str| k_min.iter().find(|(n, _)| n == name).map(|(_, k)| *k);
            let ve_const_exceeds_ve_exp = match (lookup("ve_const"), lookup("ve_exp")) {
                (Some(c), Some(e)) => Some(c > e),
                _ => None,
            };
            cells.push(OrderingCell {
                eps,
                d,
                ranking: ranked.into_iter().map(|(n, _)| n).collect(),
                k_min,
                ve_const_exceeds_ve_exp,
            });
        }
    }
    Ok(OrderingReport { rows, cells, eps_scaling })
}

/// One representative of every built-in family, as used by the default complexity table.
pub fn reference_families() -> Vec<Family> {
    vec![
        Family::VeExp { a: 1.0, b: 0.5 },
        Family::VeConst { a: 1.0 },
        Family::VeSqrt2at { a: 1.0 },
        Family::VePoly { a: 1.0, b: 1.0, c: 1.0 },
        Family::VpConst { beta: 1.0 },
        Family::VpLinear { beta_min: 0.1, beta_max: 20.0 },
        Family::VpPoly { beta_min: 0.1, beta_max: 20.0, rho: 5.0 },
        Family::VpExp { beta_min: 0.1, beta_max: 20.0 },
    ]
}
