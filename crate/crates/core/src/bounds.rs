//! Wasserstein upper bound for the reverse sampler and the stepsize conditions
//! under which it holds.
//!
//! Pointwise quantities take a forward time `u` in `[0, T]`; reverse step `k`
//! covers the forward cell `[T - k eta, T - (k-1) eta]`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianModel};
use crate::quad;
use crate::schedule::ScheduleSpec;
use crate::search::{grid_extremum, Extremum, Goal};

/// Data-regularity and score-error constants plus the run geometry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundContext {
    /// Strong convexity of `-log p0`.
    pub m0: f64,
    /// Smoothness of `-log p0`.
    pub l0: f64,
    /// L2 score error `M`.
    pub score_error: f64,
    /// Time-Lipschitz constant `M1` of the score.
    pub score_lipschitz: f64,
    /// Norm of the minimizer of `-log p0`.
    pub x_star_norm: f64,
    /// `||x0||_{L2}` when known exactly.
    pub x0_l2: Option<f64>,
    pub d: usize,
    pub spec: ScheduleSpec,
    pub steps: usize,
    pub eta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum X0Source {
    Supplied,
    /// `sqrt(2 d / m0) + ||x*||`, an upper bound on the true norm.
    DefaultBound,
}

/// `sqrt(2 d / m0) + ||x*||`.
pub fn x0_l2_default(m0: f64, d: usize, x_star_norm: f64) -> f64 {
    (2.0 * d as f64 / m0).sqrt() + x_star_norm
}

impl BoundContext {
    pub fn validate(&self) -> Result<()> {
        if !(self.m0 > 0.0 && self.m0 <= self.l0 && self.l0.is_finite()) {
            return Err(Error::domain(format!("need 0 < m0 <= L0, got m0 = {}, L0 = {}", self.m0, self.l0)));
        }
        let nonneg = |x: f64| x >= 0.0 && x.is_finite();
        if !(nonneg(self.score_error) && nonneg(self.score_lipschitz) && nonneg(self.x_star_norm)) {
            return Err(Error::domain("M, M1 and ||x*|| must be nonnegative"));
        }
        if let Some(x) = self.x0_l2 {
            if !nonneg(x) {
                return Err(Error::domain("||x0|| must be nonnegative"));
            }
        }
        if self.d == 0 {
            return Err(Error::domain("dimension must be at least 1"));
        }
        gaussian::check_grid(&self.spec, self.steps, self.eta)
    }

    /// Context for Gaussian data with exact scores: `m0 = L0 = 1/sigma0^2`,
    /// `||x0||_{L2} = sqrt(d sigma0^2)`, `M = M1 = 0`.
    pub fn gaussian(model: &GaussianModel, spec: &ScheduleSpec, steps: usize, eta: f64) -> Result<Self> {
        let ctx = BoundContext {
            m0: model.m0(),
            l0: model.m0(),
            score_error: 0.0,
            score_lipschitz: 0.0,
            x_star_norm: 0.0,
            x0_l2: Some((model.d as f64 * model.sigma0_sq).sqrt()),
            d: model.d,
            spec: spec.clone(),
            steps,
            eta,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn x0_norm(&self) -> (f64, X0Source) {
        match self.x0_l2 {
            Some(x) => (x, X0Source::Supplied),
            None => (x0_l2_default(self.m0, self.d, self.x_star_norm), X0Source::DefaultBound),
        }
    }

    /// Strong log-concavity of the forward marginal: `1 / (a1^2 / m0 + a2)`.
    pub fn concavity(&self, u: f64) -> Result<f64> {
        let k = self.spec.kernel_params(u)?;
        Ok(1.0 / (k.a1 * k.a1 / self.m0 + k.a2))
    }

    /// `c(u) = g^2 / (a1^2 / m0 + a2)`.
    pub fn q_c(&self, u: f64) -> Result<f64> {
        Ok(self.spec.g2(u) * self.concavity(u)?)
    }

    /// `m(u) = 2 g^2 / (a1^2 / m0 + a2) - 2 f`.
    pub fn q_m(&self, u: f64) -> Result<f64> {
        Ok(2.0 * self.q_c(u)? - 2.0 * self.spec.f(u))
    }

    /// Lipschitz constant of the score at forward time `u`: `min(1 / a2, L0 / a1^2)`.
    /// At `u = 0` the first branch is infinite and the result is `L0`.
    pub fn q_l(&self, u: f64) -> Result<f64> {
        let k = self.spec.kernel_params(u)?;
        let second = self.l0 / (k.a1 * k.a1);
        Ok(if k.a2 > 0.0 { (1.0 / k.a2).min(second) } else { second })
    }

    /// `g^2 a - f`, the drift margin shared by `mu` and the stepsize conditions.
    pub fn drift_margin(&self, u: f64) -> Result<f64> {
        Ok(self.q_c(u)? - self.spec.f(u))
    }

    /// Closed form of [`Self::drift_margin`] for VP families:
    /// `(beta / 2) (m0 - (1 - m0) e^{-B}) / (m0 + (1 - m0) e^{-B})`, `B = int_0^u beta`.
    pub fn drift_margin_vp_closed(&self, u: f64) -> Option<f64> {
        let fam = self.spec.family();
        let beta = fam.beta(u)?;
        let e = (-fam.beta_integral(0.0, u)?).exp();
        let m0 = self.m0;
        Some(0.5 * beta * (m0 - (1.0 - m0) * e) / (m0 + (1.0 - m0) * e))
    }

    /// `mu(u) = g^2 a - f - eta f^2 - eta g^4 L^2`.
    pub fn q_mu(&self, u: f64) -> Result<f64> {
        let f = self.spec.f(u);
        let g2 = self.spec.g2(u);
        let l = self.q_l(u)?;
        Ok(self.drift_margin(u)? - self.eta * f * f - self.eta * g2 * g2 * l * l)
    }

    fn f_plus_g2l(&self, u: f64) -> Result<f64> {
        Ok(self.spec.f(u) + self.spec.g2(u) * self.q_l(u)?)
    }

    /// `int_{t0}^{t1} c`.
    pub fn int_c(&self, t0: f64, t1: f64) -> Result<f64> {
        quad::integrate_fallible(|u| self.q_c(u), t0, t1)
    }

    /// `sup_{0<=t<=T} exp(-1/2 int_{T-t}^T m) a1(T) ||x0||`.
    pub fn q_c1(&self) -> Result<Extremum> {
        let horizon = self.spec.horizon();
        let scale = self.spec.kernel_params(horizon)?.a1 * self.x0_norm().0;
        grid_extremum(
            |t| {
                let decay = quad::integrate_fallible(|u| self.q_m(u), horizon - t, horizon)?;
                Ok((-0.5 * decay).exp() * scale)
            },
            0.0,
            horizon,
            Goal::Max,
        )
    }

    /// `sup_{0<=t<=T} (a1(t)^2 ||x0||^2 + d a2(t))^{1/2}`.
    pub fn q_c2(&self) -> Result<Extremum> {
        let x0 = self.x0_norm().0;
        grid_extremum(
            |t| {
                let k = self.spec.kernel_params(t)?;
                Ok((k.a1 * k.a1 * x0 * x0 + self.d as f64 * k.a2).sqrt())
            },
            0.0,
            self.spec.horizon(),
            Goal::Max,
        )
    }

    fn cell(&self, k: usize) -> Result<(f64, f64)> {
        if k == 0 || k > self.steps {
            return Err(Error::domain(format!("step {k} outside 1..={}", self.steps)));
        }
        let horizon = self.spec.horizon();
        Ok((
            self.spec.check_time(horizon - k as f64 * self.eta)?,
            self.spec.check_time(horizon - (k - 1) as f64 * self.eta)?,
        ))
    }

    fn h_with(&self, k: usize, c1: f64, c2: f64) -> Result<f64> {
        let (lo, hi) = self.cell(k)?;
        let drift_lip = quad::integrate_fallible(|u| self.f_plus_g2l(u), lo, hi)?;
        Ok(c1 * drift_lip + c2 * self.spec.int_f(lo, hi)? + (self.spec.int_g2(lo, hi)? * self.d as f64).sqrt())
    }

    /// One-step displacement amplitude of the continuous reverse process on step `k`.
    pub fn q_h(&self, k: usize) -> Result<f64> {
        self.h_with(k, self.q_c1()?.value, self.q_c2()?.value)
    }

    /// `a1(T) ||x0||`: distance between the forward law at `T` and the prior.
    pub fn prior_gap(&self) -> Result<f64> {
        Ok(self.spec.kernel_params(self.spec.horizon())?.a1 * self.x0_norm().0)
    }

    /// Right-hand sides of the two stepsize conditions at forward time `u`.
    /// A vanishing numerator and denominator make the condition vacuous (`+inf`).
    pub fn stepsize_rhs(&self, u: f64) -> Result<(f64, f64)> {
        let margin = self.drift_margin(u)?;
        self.rhs_from_margin(u, margin)
    }

    /// [`Self::stepsize_rhs`] built from the VP closed-form margin.
    pub fn stepsize_rhs_vp_closed(&self, u: f64) -> Result<Option<(f64, f64)>> {
        match self.drift_margin_vp_closed(u) {
            Some(margin) => Ok(Some(self.rhs_from_margin(u, margin)?)),
            None => Ok(None),
        }
    }

    fn rhs_from_margin(&self, u: f64, margin: f64) -> Result<(f64, f64)> {
        let f = self.spec.f(u);
        let g2 = self.spec.g2(u);
        let l = self.q_l(u)?;
        let den = f * f + g2 * g2 * l * l + self.score_lipschitz * g2;
        let first = if den == 0.0 && margin == 0.0 { f64::INFINITY } else { margin / den };
        let second = if margin == 0.0 { f64::INFINITY } else { 1.0 / margin };
        Ok((first, second))
    }

    pub fn stepsize_admissible(&self) -> Result<AdmissibilityReport> {
        self.validate()?;
        let horizon = self.spec.horizon();
        let first = grid_extremum(|u| Ok(self.stepsize_rhs(u)?.0), 0.0, horizon, Goal::Min)?;
        let second = grid_extremum(|u| Ok(self.stepsize_rhs(u)?.1), 0.0, horizon, Goal::Min)?;

        let vp_closed_form_max_rel_diff = if self.spec.is_vp() {
            let mut worst: f64 = 0.0;
            for i in 0..crate::search::GRID_POINTS {
                let u = horizon * i as f64 / (crate::search::GRID_POINTS - 1) as f64;
                let general = self.drift_margin(u)?;
                let closed = self.drift_margin_vp_closed(u).expect("VP family");
                // Scaled by the size of the cancelling terms, not the margin itself.
                let scale = self.q_c(u)? + self.spec.f(u).abs();
                worst = worst.max((general - closed).abs() / scale);
            }
            if worst > 1e-10 {
                return Err(Error::Numeric {
                    what: "general and closed-form VP drift margins disagree".into(),
                    achieved: worst,
                });
            }
            Some(worst)
        } else {
            None
        };

        let violation = if first.value <= 0.0 {
            Some(format!("right-hand side {:e} at t = {} is nonpositive; no stepsize is admissible", first.value, first.arg))
        } else if second.value <= 0.0 {
            Some(format!("right-hand side {:e} at t = {} is nonpositive; no stepsize is admissible", second.value, second.arg))
        } else {
            None
        };
        let (eta_max, binding) = if violation.is_some() {
            (0.0, if first.value <= 0.0 { CONDITION_1 } else { CONDITION_2 })
        } else if first.value <= second.value {
            (first.value, CONDITION_1)
        } else {
            (second.value, CONDITION_2)
        };
        Ok(AdmissibilityReport {
            admissible: violation.is_none() && self.eta <= eta_max,
            eta: self.eta,
            eta_max,
            binding: binding.to_string(),
            condition_1: first,
            condition_2: second,
            violation,
            vp_closed_form_max_rel_diff,
        })
    }

    /// Evaluate the full upper bound on `W2(law(y_K), p0)`.
    ///
    /// The product-sum is accumulated by Horner's rule, `S_k = F_k S_{k-1} + B_k`,
    /// which never forms the products explicitly and so cannot underflow.
    pub fn theorem_bound(&self) -> Result<BoundReport> {
        let adm = self.stepsize_admissible()?;
        if !adm.admissible {
            return Err(Error::Admissibility {
                condition: adm.binding.clone(),
                detail: adm.violation.clone().unwrap_or_else(|| {
                    format!("eta = {} exceeds the admissible maximum {}", self.eta, adm.eta_max)
                }),
            });
        }
        let horizon = self.spec.horizon();
        let (x0, x0_source) = self.x0_norm();
        let int_c = self.int_c(0.0, horizon)?;
        let prior_term = (-int_c).exp() * x0;
        let c1 = self.q_c1()?;
        let c2 = self.q_c2()?;
        let mut steps = Vec::with_capacity(self.steps);
        let mut acc = 0.0;
        for k in 1..=self.steps {
            let (lo, hi) = self.cell(k)?;
            let g2 = self.spec.int_g2(lo, hi)?;
            let mu = quad::integrate_fallible(|u| self.q_mu(u), lo, hi)?;
            let factor = 1.0 - mu + self.score_lipschitz * self.eta * g2;
            if !(factor > 0.0 && factor < 1.0) {
                return Err(Error::Admissibility {
                    condition: "per-step contraction factor in (0, 1)".into(),
                    detail: format!("factor {factor} at step {k}"),
                });
            }
            let h = self.h_with(k, c1.value, c2.value)?;
            let sq = quad::integrate_fallible(|u| Ok(self.f_plus_g2l(u)?.powi(2)), lo, hi)?;
            let bracket = self.score_lipschitz * self.eta * (1.0 + x0 + c2.value) * g2
                + self.score_error * g2
                + self.eta.sqrt() * h * sq.sqrt();
            acc = factor * acc + bracket;
            steps.push(StepTerms { k, factor, h, bracket });
        }
        Ok(BoundReport {
            total: prior_term + acc,
            prior_term,
            discretization_term: acc,
            int_c,
            x0_l2: x0,
            x0_source,
            c1,
            c2,
            admissibility: adm,
            steps,
        })
    }
}

pub const CONDITION_1: &str = "stepsize condition 1: eta <= min_t (g^2 a - f) / (f^2 + g^4 L^2 + M1 g^2)";
pub const CONDITION_2: &str = "stepsize condition 2: eta <= min_t 1 / (g^2 a - f)";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub eta: f64,
    /// Largest admissible stepsize; 0 when none is.
    pub eta_max: f64,
    /// The condition attaining `eta_max`.
    pub binding: String,
    pub condition_1: Extremum,
    pub condition_2: Extremum,
    pub violation: Option<String>,
    /// For VP families, the worst grid disagreement between the general and
    /// closed-form drift margins.
    pub vp_closed_form_max_rel_diff: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepTerms {
    pub k: usize,
    pub factor: f64,
    pub h: f64,
    pub bracket: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub total: f64,
    /// `exp(-int_0^T c) ||x0||`.
    pub prior_term: f64,
    pub discretization_term: f64,
    pub int_c: f64,
    pub x0_l2: f64,
    pub x0_source: X0Source,
    pub c1: Extremum,
    pub c2: Extremum,
    pub admissibility: AdmissibilityReport,
    pub steps: Vec<StepTerms>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::Family;

    fn ctx(fam: Family, horizon: f64, steps: usize, m0: f64) -> BoundContext {
        let spec = ScheduleSpec::new(fam, horizon).unwrap();
        BoundContext {
            m0,
            l0: m0,
            score_error: 0.0,
            score_lipschitz: 0.0,
            x_star_norm: 0.0,
            x0_l2: None,
            d: 4,
            spec,
            steps,
            eta: horizon / steps as f64,
        }
    }

    #[test]
    fn x0_default_examples() {
        assert!((x0_l2_default(2.0, 8, 0.0) - 8f64.sqrt()).abs() < 1e-15);
        assert!((x0_l2_default(1.0, 1, 1.0) - (2f64.sqrt() + 1.0)).abs() < 1e-15);
        let c = ctx(Family::VeConst { a: 1.0 }, 1.0, 10, 1.0 / 0.64);
        assert!((c.x0_norm().0 - (2.0 * 4.0 * 0.64f64).sqrt()).abs() < 1e-14);
        assert_eq!(c.x0_norm().1, X0Source::DefaultBound);
    }

    #[test]
    fn lipschitz_examples() {
        let c = ctx(Family::VeConst { a: 2.0 }, 3.0, 10, 0.5);
        assert_eq!(c.q_l(0.0).unwrap(), 0.5);
        for &u in &[0.01, 0.5, 1.0, 3.0] {
            assert!((c.q_l(u).unwrap() - (1.0 / (4.0 * u)).min(0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn c_integral_closed_forms() {
        let (a, b, m0) = (1.5, 0.8, 0.7);
        let c = ctx(Family::VeExp { a, b }, 2.0, 10, m0);
        for &t in &[0.3, 1.0, 2.0] {
            let want = ((2.0 * b - m0 * a * a + m0 * a * a * (2.0 * b * t).exp()) / (2.0 * b)).ln();
            assert!((c.int_c(0.0, t).unwrap() - want).abs() < 1e-10 * want);
        }
        let c = ctx(Family::VeSqrt2at { a }, 2.0, 10, m0);
        for &t in &[0.3, 1.0, 2.0] {
            let want = (1.0 + m0 * a * t * t).ln();
            assert!((c.int_c(0.0, t).unwrap() - want).abs() < 1e-10 * want);
        }
        let c = ctx(Family::VpLinear { beta_min: 0.1, beta_max: 20.0 }, 1.0, 10, m0);
        let b_int = c.spec.family().beta_integral(0.0, 1.0).unwrap();
        let want = (m0 * b_int.exp() + 1.0 - m0).ln();
        assert!((c.int_c(0.0, 1.0).unwrap() - want).abs() < 1e-10 * want);
    }

    #[test]
    fn c1_without_drift_is_x0_norm() {
        let c = ctx(Family::VeExp { a: 1.0, b: 0.5 }, 2.0, 10, 1.0);
        let c1 = c.q_c1().unwrap();
        assert_eq!(c1.arg, 0.0);
        assert!((c1.value - c.x0_norm().0).abs() < 1e-14);
    }

    #[test]
    fn c2_examples() {
        let (a, horizon) = (1.3, 2.0);
        let c = ctx(Family::VeConst { a }, horizon, 10, 1.0);
        let x0 = c.x0_norm().0;
        let want = (x0 * x0 + a * a * 4.0 * horizon).sqrt();
        assert!((c.q_c2().unwrap().value - want).abs() < 1e-13 * want);
        let c = ctx(Family::VpLinear { beta_min: 0.1, beta_max: 20.0 }, 1.0, 10, 1.0);
        let x0 = c.x0_norm().0;
        assert!(c.q_c2().unwrap().value <= (x0 * x0 + 4.0).sqrt() * (1.0 + 1e-15));
    }

    #[test]
    fn prior_gap_examples() {
        let c = ctx(Family::VeConst { a: 1.0 }, 3.0, 10, 1.0);
        assert_eq!(c.prior_gap().unwrap(), c.x0_norm().0);
        let c = ctx(Family::VpConst { beta: 10.0 }, 1.0, 10, 1.0);
        assert!((c.prior_gap().unwrap() - (-5f64).exp() * c.x0_norm().0).abs() < 1e-16);
    }

    #[test]
    fn ve_stepsize_rhs_is_positive() {
        let c = ctx(Family::VeSqrt2at { a: 1.0 }, 1.0, 100, 1.0);
        let rep = c.stepsize_admissible().unwrap();
        assert!(rep.violation.is_none());
        assert!(rep.eta_max > 0.0);
        assert!(rep.vp_closed_form_max_rel_diff.is_none());
    }

    #[test]
    fn vp_weak_convexity_is_inadmissible() {
        for m0 in [0.5, 0.3] {
            let c = ctx(Family::VpLinear { beta_min: 0.1, beta_max: 20.0 }, 1.0, 1000, m0);
            let rep = c.stepsize_admissible().unwrap();
            assert!(!rep.admissible);
            assert_eq!(rep.eta_max, 0.0);
            assert!(rep.binding.contains("condition 1"));
            assert!(rep.violation.is_some());
            assert!(c.theorem_bound().is_err());
        }
    }

    #[test]
    fn single_step_bound_is_prior_term_plus_one_bracket() {
        let c = ctx(Family::VeExp { a: 1.0, b: 1.0 }, 0.01, 1, 1.0);
        let rep = c.theorem_bound().unwrap();
        assert_eq!(rep.steps.len(), 1);
        assert!((rep.total - (rep.prior_term + rep.steps[0].bracket)).abs() < 1e-15);
    }

    #[test]
    fn oversized_step_reports_binding_condition() {
        let c = ctx(Family::VpLinear { beta_min: 0.1, beta_max: 20.0 }, 1.0, 2, 1.5625);
        match c.theorem_bound().unwrap_err() {
            Error::Admissibility { condition, .. } => assert!(condition.starts_with("stepsize condition")),
            e => panic!("unexpected {e}"),
        }
    }
}
