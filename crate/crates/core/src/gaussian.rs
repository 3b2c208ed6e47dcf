//! Closed-form ground truth for isotropic Gaussian data `p0 = N(0, sigma0^2 I_d)`.
//!
//! Every law in play stays isotropic Gaussian, so states are represented by a
//! per-coordinate variance and nothing here materializes `d`-vectors except the
//! Monte-Carlo score fit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics;
use crate::quad;
use crate::schedule::ScheduleSpec;

/// Largest step count any search or recursion will attempt.
pub const MAX_STEPS: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct GaussianModel {
    pub sigma0_sq: f64,
    pub d: usize,
}

impl GaussianModel {
    pub fn new(sigma0_sq: f64, d: usize) -> Result<Self> {
        if !(sigma0_sq.is_finite() && sigma0_sq > 0.0) {
            return Err(Error::domain(format!("sigma0_sq must be positive, got {sigma0_sq}")));
        }
        if d == 0 {
            return Err(Error::domain("dimension must be at least 1"));
        }
        Ok(GaussianModel { sigma0_sq, d })
    }

    /// Strong convexity and smoothness of `-log p0` coincide: `1 / sigma0^2`.
    pub fn m0(&self) -> f64 {
        1.0 / self.sigma0_sq
    }

    /// Forward marginal variance `a1(t)^2 sigma0^2 + a2(t)`.
    pub fn marginal_variance(&self, spec: &ScheduleSpec, t: f64) -> Result<f64> {
        let k = spec.kernel_params(t)?;
        Ok(k.a1 * k.a1 * self.sigma0_sq + k.a2)
    }

    /// `s` such that the score at time `t` is `-s x`.
    pub fn score_coefficient(&self, spec: &ScheduleSpec, t: f64) -> Result<f64> {
        Ok(1.0 / self.marginal_variance(spec, t)?)
    }

    pub fn exact_score(&self, spec: &ScheduleSpec, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let s = self.score_coefficient(spec, t)?;
        Ok(x.iter().map(|v| -s * v).collect())
    }

    /// `gamma(t) = g(t)^2 / (a1^2 sigma0^2 + a2)`.
    pub fn gamma(&self, spec: &ScheduleSpec, t: f64) -> Result<f64> {
        Ok(spec.g2(t) * self.score_coefficient(spec, t)?)
    }

    /// `alpha(t) = gamma(t) - f(t)`, the per-unit-time contraction of the reverse chain.
    pub fn alpha(&self, spec: &ScheduleSpec, t: f64) -> Result<f64> {
        Ok(self.gamma(spec, t)? - spec.f(t))
    }

    /// Exact per-coordinate variance of the discrete reverse chain with exact scores.
    pub fn variance_recursion(&self, spec: &ScheduleSpec, steps: usize, eta: f64) -> Result<VarianceTrace> {
        check_grid(spec, steps, eta)?;
        let horizon = spec.horizon();
        let mut trace = VarianceTrace {
            sigma_hat_sq: Vec::with_capacity(steps + 1),
            alpha_integrals: Vec::with_capacity(steps),
            g2_integrals: Vec::with_capacity(steps),
            contraction_warnings: Vec::new(),
        };
        let mut var = spec.prior_distribution()?.variance;
        trace.sigma_hat_sq.push(var);
        for k in 1..=steps {
            let lo = spec.check_time(horizon - k as f64 * eta)?;
            let hi = spec.check_time(horizon - (k - 1) as f64 * eta)?;
            let a = self.alpha_integral(spec, lo, hi)?;
            let g2 = spec.int_g2(lo, hi)?;
            if a >= 1.0 {
                trace.contraction_warnings.push(k);
            }
            var = (1.0 - a) * (1.0 - a) * var + g2;
            trace.sigma_hat_sq.push(var);
            trace.alpha_integrals.push(a);
            trace.g2_integrals.push(g2);
        }
        Ok(trace)
    }

    /// `int_{t0}^{t1} alpha` over forward time.
    pub fn alpha_integral(&self, spec: &ScheduleSpec, t0: f64, t1: f64) -> Result<f64> {
        quad::integrate_fallible(|t| self.alpha(spec, t), t0, t1)
    }

    /// Exact W2 between `N(0, sigma_hat^2 I_d)` and the data law.
    pub fn w2_exact(&self, sigma_hat: f64) -> f64 {
        metrics::w2_gaussian_isotropic(sigma_hat * sigma_hat, self.sigma0_sq, self.d)
    }

    /// First-order coefficient `c0` in `sigma_hat_K^2 = limit + c0 eta + O(eta^2)`,
    /// with `A(t) = int_0^t alpha` and `Q(t) = int_0^t alpha^2`:
    ///
    /// `c0 = -e^{-2A(T)} Q(T) a2(T) - int_0^T e^{-2A} Q g^2 + int_0^T e^{-2A} alpha g^2`.
    pub fn compute_c0(&self, spec: &ScheduleSpec) -> Result<f64> {
        let horizon = spec.horizon();
        let cum_alpha = |t: f64| self.alpha_integral(spec, 0.0, t);
        let cum_alpha_sq = |t: f64| {
            quad::integrate_fallible(
                |s| {
                    let a = self.alpha(spec, s)?;
                    Ok(a * a)
                },
                0.0,
                t,
            )
        };
        let terminal = -(-2.0 * cum_alpha(horizon)?).exp() * cum_alpha_sq(horizon)? * spec.prior_distribution()?.variance;
        let body = quad::integrate_fallible(
            |t| {
                let weight = (-2.0 * cum_alpha(t)?).exp() * spec.g2(t);
                Ok(weight * (self.alpha(spec, t)? - cum_alpha_sq(t)?))
            },
            0.0,
            horizon,
        )?;
        Ok(terminal + body)
    }

    /// Least-squares fit of `s(x) = -theta x` to the denoising score-matching
    /// loss at time `t`, from `samples` independent pairs `(x0, z)`.
    pub fn fit_linear_score(&self, spec: &ScheduleSpec, t: f64, samples: usize, seed: u64) -> Result<LinearScoreFit> {
        if samples < 2 {
            return Err(Error::domain("need at least two samples"));
        }
        let k = spec.kernel_params(t)?;
        if k.a2 <= 0.0 {
            return Err(Error::domain("score matching needs t > 0 so that the kernel has noise"));
        }
        let sd0 = self.sigma0_sq.sqrt();
        let noise_sd = k.a2.sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Per sample: u = <x_t, z> / sqrt(a2) and v = |x_t|^2; theta_hat = sum u / sum v.
        let mut uv = Vec::with_capacity(samples);
        let (mut su, mut sv) = (0.0, 0.0);
        for _ in 0..samples {
            let (mut u, mut v) = (0.0, 0.0);
            for _ in 0..self.d {
                let x0 = sd0 * Distribution::<f64>::sample(&StandardNormal, &mut rng);
                let z: f64 = StandardNormal.sample(&mut rng);
                let xt = k.a1 * x0 + noise_sd * z;
                u += xt * z / noise_sd;
                v += xt * xt;
            }
            su += u;
            sv += v;
            uv.push((u, v));
        }
        let theta = su / sv;
        // Delta-method standard error of a ratio estimator.
        let resid: f64 = uv.iter().map(|&(u, v)| (u - theta * v).powi(2)).sum();
        let std_error = resid.sqrt() / sv;
        Ok(LinearScoreFit { theta, std_error, theta_exact: self.score_coefficient(spec, t)? })
    }

    /// Smallest `K` such that the chain with stepsize `eta` and horizon `K eta`
    /// reaches `W2 <= eps`, scanning `K = 1, 2, ...` up to `max_horizon / eta`.
    ///
    /// Step `k` of a `K`-step chain covers forward cell `K - k`, and each cell's
    /// integrals do not depend on `K`, so extending `K` by one only appends a
    /// cell: `sigma_hat_K^2 = P_K a2(K eta) + S_K` with `P` the product of the
    /// squared contractions of cells `0..K` and `S` the propagated noise.
    pub fn minimal_k_search(&self, spec: &ScheduleSpec, eps: f64, eta: f64, max_horizon: f64) -> Result<KSearch> {
        if !(eps > 0.0) {
            return Err(Error::domain("eps must be positive"));
        }
        if !(eta > 0.0 && eta.is_finite() && max_horizon.is_finite()) {
            return Err(Error::domain("eta and max_horizon must be positive and finite"));
        }
        let ratio = max_horizon / eta;
        if ratio > MAX_STEPS as f64 + 0.5 {
            return Err(Error::Budget(format!("search would need up to {ratio:.0} steps, cap is {MAX_STEPS}")));
        }
        let k_limit = (ratio * (1.0 + 1e-12)).floor() as usize;
        if k_limit == 0 {
            return Err(Error::domain("max_horizon is shorter than one step"));
        }
        let wide = spec.with_horizon(k_limit as f64 * eta)?;
        let (mut product, mut noise) = (1.0, 0.0);
        let mut best = (0, f64::INFINITY);
        for k in 1..=k_limit {
            let lo = (k - 1) as f64 * eta;
            let hi = k as f64 * eta;
            let a = self.alpha_integral(&wide, lo, hi)?;
            noise += wide.int_g2(lo, hi)? * product;
            product *= (1.0 - a) * (1.0 - a);
            let var = product * wide.kernel_params(hi)?.a2 + noise;
            let w2 = self.w2_exact(var.sqrt());
            if w2 <= eps {
                return Ok(KSearch::Found { steps: k, w2 });
            }
            if w2 < best.1 {
                best = (k, w2);
            }
        }
        Ok(KSearch::NotAchievable { best_steps: best.0, best_w2: best.1 })
    }
}

pub(crate) fn check_grid(spec: &ScheduleSpec, steps: usize, eta: f64) -> Result<()> {
    if steps == 0 {
        return Err(Error::domain("need at least one step"));
    }
    if steps > MAX_STEPS {
        return Err(Error::Budget(format!("{steps} steps exceeds the cap of {MAX_STEPS}")));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::domain(format!("stepsize must be positive, got {eta}")));
    }
    let horizon = spec.horizon();
    if ((steps as f64 * eta) - horizon).abs() > 1e-12 * horizon {
        return Err(Error::domain(format!("K * eta = {} does not match horizon {horizon}", steps as f64 * eta)));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceTrace {
    /// `sigma_hat_k^2` for `k = 0..=K`.
    pub sigma_hat_sq: Vec<f64>,
    pub alpha_integrals: Vec<f64>,
    pub g2_integrals: Vec<f64>,
    /// Steps whose alpha integral reached 1.
    pub contraction_warnings: Vec<usize>,
}

impl VarianceTrace {
    pub fn terminal(&self) -> f64 {
        *self.sigma_hat_sq.last().expect("trace is never empty")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearScoreFit {
    pub theta: f64,
    pub std_error: f64,
    pub theta_exact: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum KSearch {
    Found { steps: usize, w2: f64 },
    NotAchievable { best_steps: usize, best_w2: f64 },
}
