//! Reverse-time exponential-integrator sampler.
//!
//! For `k = 1..=K` the update is
//! `y_k = y_{k-1} + I_f y_{k-1} + I_g s(y_{k-1}) + sqrt(I_g) xi_k`,
//! where `I_f` and `I_g` integrate `f` and `g^2` over the forward-time cell
//! `[T - k eta, T - (k-1) eta]`, and `y_0 ~ N(0, a2(T) I)`.
//!
//! Random numbers come from ChaCha8 keyed by the run seed. Chain `c` draws its
//! Gaussian noise from stream `2c` and score perturbations from stream `2c + 1`,
//! each read sequentially from its start: the prior draw first, then steps
//! `1..=K` in order. Chains are reduced in fixed-size blocks merged in chain
//! order, so results are bit-identical for any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianModel};
use crate::metrics;
use crate::quad;
use crate::schedule::ScheduleSpec;

pub type StreamRng = ChaCha8Rng;

/// Refinement factor used by [`run_fine_reference`] callers as the default.
pub const FINE_REFINEMENT: usize = 64;

const DIVERGENCE_THRESHOLD: f64 = 1e12;
const BLOCK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScoreMode {
    ExactGaussian,
    /// Exact Gaussian score plus isotropic noise of L2 norm `m` in expectation.
    Perturbed { m: f64 },
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub d: usize,
    pub steps: usize,
    pub eta: f64,
    pub seed: u64,
    pub chains: usize,
    pub score_mode: ScoreMode,
    /// Keep every terminal state (`chains x d`, row-major) in the result.
    #[serde(default)]
    pub keep_states: bool,
    /// Steps at which pooled second moments are also recorded.
    #[serde(default)]
    pub checkpoints: Vec<usize>,
}

impl SamplerConfig {
    pub fn validate(&self, spec: &ScheduleSpec) -> Result<()> {
        if self.d == 0 || self.chains == 0 {
            return Err(Error::domain("dimension and chain count must be at least 1"));
        }
        gaussian::check_grid(spec, self.steps, self.eta)?;
        if let ScoreMode::Perturbed { m } = self.score_mode {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(Error::domain("score error magnitude must be nonnegative"));
            }
        }
        if let Some(&k) = self.checkpoints.iter().find(|&&k| k == 0 || k > self.steps) {
            return Err(Error::domain(format!("checkpoint {k} is outside steps 1..={}", self.steps)));
        }
        Ok(())
    }
}

/// Per-step data handed to score functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepContext {
    /// Step index, `1..=K`.
    pub k: usize,
    /// Forward time at which the score is evaluated, `T - (k-1) eta`.
    pub time: f64,
    /// Forward-time cell `[t_lo, t_hi]` covered by the step.
    pub t_lo: f64,
    pub t_hi: f64,
    pub int_f: f64,
    pub int_g2: f64,
}

/// Score estimate `s(y, t)`; writes into `out`.
///
/// Any randomness must come from `rng`, the chain's perturbation stream.
pub trait ScoreFn: Sync {
    fn eval(&self, x: &[f64], step: &StepContext, rng: &mut StreamRng, out: &mut [f64]);
}

impl<S: ScoreFn + ?Sized> ScoreFn for Box<S> {
    fn eval(&self, x: &[f64], step: &StepContext, rng: &mut StreamRng, out: &mut [f64]) {
        (**self).eval(x, step, rng, out)
    }
}

impl<S: ScoreFn + ?Sized> ScoreFn for &S {
    fn eval(&self, x: &[f64], step: &StepContext, rng: &mut StreamRng, out: &mut [f64]) {
        (**self).eval(x, step, rng, out)
    }
}

/// Linear score `-c_k x` with one coefficient per step.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedScore {
    coeffs: Vec<f64>,
}

impl TabulatedScore {
    /// Exact Gaussian score averaged over each step: `c_k = int gamma / int g^2`.
    ///
    /// With this choice the step's linear coefficient is exactly `1 - int alpha`,
    /// so the chain's variance follows the Gaussian recursion without an extra
    /// left-endpoint error.
    pub fn gaussian_step_averaged(model: &GaussianModel, spec: &ScheduleSpec, steps: usize, eta: f64) -> Result<Self> {
        let coeffs = step_cells(spec, steps, eta)?
            .iter()
            .map(|c| {
                if c.int_g2 > 0.0 {
                    Ok(quad::integrate_fallible(|t| model.gamma(spec, t), c.t_lo, c.t_hi)? / c.int_g2)
                } else {
                    model.score_coefficient(spec, c.time)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TabulatedScore { coeffs })
    }

    /// Exact Gaussian score evaluated at the left end of each reverse step.
    pub fn gaussian_left_point(model: &GaussianModel, spec: &ScheduleSpec, steps: usize, eta: f64) -> Result<Self> {
        let coeffs = step_cells(spec, steps, eta)?
            .iter()
            .map(|c| model.score_coefficient(spec, c.time))
            .collect::<Result<Vec<_>>>()?;
        Ok(TabulatedScore { coeffs })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }
}

impl ScoreFn for TabulatedScore {
    fn eval(&self, x: &[f64], step: &StepContext, _rng: &mut StreamRng, out: &mut [f64]) {
        let c = self.coeffs[step.k - 1];
        for (o, v) in out.iter_mut().zip(x) {
            *o = -c * v;
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroScore;

impl ScoreFn for ZeroScore {
    fn eval(&self, _x: &[f64], _step: &StepContext, _rng: &mut StreamRng, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Adapter for closures.
pub struct FnScore<F>(pub F);

impl<F> ScoreFn for FnScore<F>
where
    F: Fn(&[f64], &StepContext, &mut StreamRng, &mut [f64]) + Sync,
{
    fn eval(&self, x: &[f64], step: &StepContext, rng: &mut StreamRng, out: &mut [f64]) {
        (self.0)(x, step, rng, out)
    }
}

/// Adds `N(0, (m^2 / d) I)` to every evaluation of `base`, so the error has
/// L2 norm `m` in expectation (not per sample).
pub struct Perturbed<S> {
    pub base: S,
    pub m: f64,
}

pub fn perturbed_score<S: ScoreFn>(base: S, m: f64) -> Result<Perturbed<S>> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::domain("score error magnitude must be nonnegative"));
    }
    Ok(Perturbed { base, m })
}

impl<S: ScoreFn> ScoreFn for Perturbed<S> {
    fn eval(&self, x: &[f64], step: &StepContext, rng: &mut StreamRng, out: &mut [f64]) {
        self.base.eval(x, step, rng, out);
        if self.m == 0.0 {
            return;
        }
        let scale = self.m / (out.len() as f64).sqrt();
        for o in out.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *o += scale * z;
        }
    }
}

/// The score a config's mode denotes for Gaussian data.
pub fn gaussian_score(model: &GaussianModel, spec: &ScheduleSpec, config: &SamplerConfig) -> Result<Box<dyn ScoreFn>> {
    let exact = TabulatedScore::gaussian_step_averaged(model, spec, config.steps, config.eta)?;
    match config.score_mode {
        ScoreMode::ExactGaussian => Ok(Box::new(exact)),
        ScoreMode::Perturbed { m } => Ok(Box::new(perturbed_score(exact, m)?)),
        ScoreMode::Custom => Err(Error::Unsupported("custom score mode needs a caller-supplied score".into())),
    }
}

fn step_cells(spec: &ScheduleSpec, steps: usize, eta: f64) -> Result<Vec<StepContext>> {
    gaussian::check_grid(spec, steps, eta)?;
    let horizon = spec.horizon();
    (1..=steps)
        .map(|k| {
            let t_lo = spec.check_time(horizon - k as f64 * eta)?;
            let t_hi = spec.check_time(horizon - (k - 1) as f64 * eta)?;
            Ok(StepContext { k, time: t_hi, t_lo, t_hi, int_f: spec.int_f(t_lo, t_hi)?, int_g2: spec.int_g2(t_lo, t_hi)? })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub k: usize,
    pub second_moment: f64,
    pub second_moment_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub d: usize,
    pub chains: usize,
    pub steps: usize,
    pub eta: f64,
    pub seed: u64,
    /// Per-coordinate empirical mean of `y_K`.
    pub mean: Vec<f64>,
    /// Per-coordinate unbiased empirical variance of `y_K`.
    pub variance: Vec<f64>,
    /// Average of `variance` over coordinates.
    pub pooled_variance: f64,
    /// Average over chains and coordinates of `y_K^2`.
    pub second_moment: f64,
    /// Monte-Carlo standard error of `second_moment`, from per-chain averages.
    pub second_moment_se: f64,
    pub checkpoints: Vec<Checkpoint>,
    #[serde(skip)]
    pub states: Option<Vec<f64>>,
}

impl RunResult {
    /// W2 between the Gaussian matching the empirical moments and `N(0, sigma0_sq I)`.
    pub fn w2_moment_matched(&self, sigma0_sq: f64) -> f64 {
        let zeros = vec![0.0; self.d];
        let target = vec![sigma0_sq; self.d];
        metrics::w2_gaussian_general(&self.mean, &self.variance, &zeros, &target).expect("lengths match")
    }
}

#[derive(Clone)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    // Per-chain average of squared coordinates, and its square.
    chain_sq: f64,
    chain_sq_sq: f64,
    checkpoints: Vec<(f64, f64)>,
    states: Vec<f64>,
}

impl Moments {
    fn new(d: usize, checkpoints: usize) -> Self {
        Moments {
            sum: vec![0.0; d],
            sum_sq: vec![0.0; d],
            chain_sq: 0.0,
            chain_sq_sq: 0.0,
            checkpoints: vec![(0.0, 0.0); checkpoints],
            states: Vec::new(),
        }
    }

    fn merge(&mut self, other: &Moments) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(&other.sum_sq) {
            *a += b;
        }
        self.chain_sq += other.chain_sq;
        self.chain_sq_sq += other.chain_sq_sq;
        for (a, b) in self.checkpoints.iter_mut().zip(&other.checkpoints) {
            a.0 += b.0;
            a.1 += b.1;
        }
        self.states.extend_from_slice(&other.states);
    }
}

fn mean_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn mean_and_se(sum: f64, sum_sq: f64, n: usize) -> (f64, f64) {
    let n = n as f64;
    let mean = sum / n;
    let var = if n > 1.0 { ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    (mean, (var / n).sqrt())
}

/// Run `config.chains` independent reverse chains in the ambient rayon pool.
pub fn run_reverse(spec: &ScheduleSpec, config: &SamplerConfig, score: &dyn ScoreFn) -> Result<RunResult> {
    config.validate(spec)?;
    let cells = step_cells(spec, config.steps, config.eta)?;
    let prior_sd = spec.prior_distribution()?.variance.sqrt();
    let base_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n_blocks = config.chains.div_ceil(BLOCK);

    let blocks: Vec<Result<Moments>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Moments::new(config.d, config.checkpoints.len());
            let mut y = vec![0.0; config.d];
            let mut s = vec![0.0; config.d];
            for chain in b * BLOCK..((b + 1) * BLOCK).min(config.chains) {
                let mut noise = base_rng.clone();
                noise.set_stream(2 * chain as u64);
                let mut perturb = base_rng.clone();
                perturb.set_stream(2 * chain as u64 + 1);
                for v in y.iter_mut() {
                    let z: f64 = noise.sample(StandardNormal);
                    *v = prior_sd * z;
                }
                for cell in &cells {
                    score.eval(&y, cell, &mut perturb, &mut s);
                    let drift = 1.0 + cell.int_f;
                    let sd = cell.int_g2.sqrt();
                    let mut blown = false;
                    for (v, sv) in y.iter_mut().zip(&s) {
                        let z: f64 = noise.sample(StandardNormal);
                        *v = drift * *v + cell.int_g2 * sv + sd * z;
                        blown |= !(v.abs() <= DIVERGENCE_THRESHOLD);
                    }
                    if blown {
                        return Err(Error::Divergence { step: cell.k, chain });
                    }
                    for (slot, _) in config.checkpoints.iter().enumerate().filter(|(_, &k)| k == cell.k) {
                        let v = mean_sq(&y);
                        acc.checkpoints[slot].0 += v;
                        acc.checkpoints[slot].1 += v * v;
                    }
                }
                for i in 0..config.d {
                    acc.sum[i] += y[i];
                    acc.sum_sq[i] += y[i] * y[i];
                }
                let v = mean_sq(&y);
                acc.chain_sq += v;
                acc.chain_sq_sq += v * v;
                if config.keep_states {
                    acc.states.extend_from_slice(&y);
                }
            }
            Ok(acc)
        })
        .collect();

    let mut total = Moments::new(config.d, config.checkpoints.len());
    for block in blocks {
        total.merge(&block?);
    }
    let n = config.chains as f64;
    let mean: Vec<f64> = total.sum.iter().map(|s| s / n).collect();
    let variance: Vec<f64> = total
        .sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| if config.chains > 1 { (sq - n * m * m) / (n - 1.0) } else { 0.0 })
        .collect();
    let pooled_variance = variance.iter().sum::<f64>() / config.d as f64;
    let (second_moment, second_moment_se) = mean_and_se(total.chain_sq, total.chain_sq_sq, config.chains);
    let checkpoints = config
        .checkpoints
        .iter()
        .zip(&total.checkpoints)
        .map(|(&k, &(s, ss))| {
            let (m, se) = mean_and_se(s, ss, config.chains);
            Checkpoint { k, second_moment: m, second_moment_se: se }
        })
        .collect();
    Ok(RunResult {
        d: config.d,
        chains: config.chains,
        steps: config.steps,
        eta: config.eta,
        seed: config.seed,
        mean,
        variance,
        pooled_variance,
        second_moment,
        second_moment_se,
        checkpoints,
        states: config.keep_states.then_some(total.states),
    })
}

/// The same integrator on a grid `refine` times finer, with the Gaussian score
/// implied by `config.score_mode`. Checkpoints are rescaled to the fine grid.
pub fn run_fine_reference(
    spec: &ScheduleSpec,
    config: &SamplerConfig,
    model: &GaussianModel,
    refine: usize,
) -> Result<RunResult> {
    if refine == 0 {
        return Err(Error::domain("refinement factor must be at least 1"));
    }
    let fine = SamplerConfig {
        steps: config.steps * refine,
        eta: config.eta / refine as f64,
        checkpoints: config.checkpoints.iter().map(|k| k * refine).collect(),
        ..config.clone()
    };
    let score = gaussian_score(model, spec, &fine)?;
    run_reverse(spec, &fine, &score)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::Family;

    fn config(d: usize, steps: usize, eta: f64, chains: usize) -> SamplerConfig {
        SamplerConfig {
            d,
            steps,
            eta,
            seed: 11,
            chains,
            score_mode: ScoreMode::ExactGaussian,
            keep_states: false,
            checkpoints: vec![],
        }
    }

    #[test]
    fn zero_steps_rejected() {
        let spec = ScheduleSpec::new(Family::VeConst { a: 1.0 }, 1.0).unwrap();
        let err = run_reverse(&spec, &config(2, 0, 1.0, 4), &ZeroScore).unwrap_err();
        assert_eq!(err.kind(), "domain");
    }

    #[test]
    fn zero_score_accumulates_noise() {
        let spec = ScheduleSpec::new(Family::VeConst { a: 1.0 }, 2.0).unwrap();
        let cfg = config(4, 20, 0.1, 20_000);
        let r = run_reverse(&spec, &cfg, &ZeroScore).unwrap();
        // a2(T) + sum of step variances = 2 + 2.
        assert!((r.second_moment - 4.0).abs() < 3.0 * r.second_moment_se, "{r:?}");
    }

    #[test]
    fn perturbation_has_requested_l2_norm() {
        let m = 0.3;
        let d = 5;
        let p = perturbed_score(ZeroScore, m).unwrap();
        let ctx = StepContext { k: 1, time: 1.0, t_lo: 0.0, t_hi: 1.0, int_f: 0.0, int_g2: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mut out = vec![0.0; d];
        let (mut s, mut ss) = (0.0, 0.0);
        for _ in 0..n {
            p.eval(&[0.0; 5], &ctx, &mut rng, &mut out);
            let sq: f64 = out.iter().map(|v| v * v).sum();
            s += sq;
            ss += sq * sq;
        }
        let (mean, se) = mean_and_se(s, ss, n);
        assert!((mean - m * m).abs() < 3.0 * se);
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let spec = ScheduleSpec::new(Family::VpLinear { beta_min: 0.1, beta_max: 20.0 }, 1.0).unwrap();
        let model = GaussianModel::new(0.64, 3).unwrap();
        let base = TabulatedScore::gaussian_step_averaged(&model, &spec, 10, 0.1).unwrap();
        let mut cfg = config(3, 10, 0.1, 300);
        cfg.keep_states = true;
        let a = run_reverse(&spec, &cfg, &base).unwrap();
        let b = run_reverse(&spec, &cfg, &perturbed_score(base.clone(), 0.0).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn step_averaged_score_reproduces_recursion_contraction() {
        let spec = ScheduleSpec::new(Family::VeExp { a: 1.0, b: 1.0 }, 1.0).unwrap();
        let model = GaussianModel::new(0.64, 1).unwrap();
        let score = TabulatedScore::gaussian_step_averaged(&model, &spec, 10, 0.1).unwrap();
        let trace = model.variance_recursion(&spec, 10, 0.1).unwrap();
        let cells = step_cells(&spec, 10, 0.1).unwrap();
        for (i, c) in cells.iter().enumerate() {
            let linear = 1.0 + c.int_f - c.int_g2 * score.coefficients()[i];
            assert!((linear - (1.0 - trace.alpha_integrals[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn divergence_is_reported_with_step() {
        let spec = ScheduleSpec::new(Family::VeConst { a: 1.0 }, 10.0).unwrap();
        let blow_up = FnScore(|x: &[f64], _: &StepContext, _: &mut StreamRng, out: &mut [f64]| {
            for (o, v) in out.iter_mut().zip(x) {
                *o = 50.0 * v;
            }
        });
        match run_reverse(&spec, &config(1, 100, 0.1, 3), &blow_up).unwrap_err() {
            Error::Divergence { step, chain } => {
                assert!(step > 1 && step <= 100);
                assert_eq!(chain, 0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let spec = ScheduleSpec::new(Family::VpLinear { beta_min: 0.1, beta_max: 20.0 }, 1.0).unwrap();
        let model = GaussianModel::new(0.64, 3).unwrap();
        let mut cfg = config(3, 50, 0.02, 2_000);
        cfg.score_mode = ScoreMode::Perturbed { m: 0.1 };
        cfg.keep_states = true;
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let score = gaussian_score(&model, &spec, &cfg).unwrap();
                run_reverse(&spec, &cfg, &score).unwrap()
            })
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a, b);
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn refine_one_equals_plain_run() {
        let spec = ScheduleSpec::new(Family::VeExp { a: 1.0, b: 1.0 }, 1.0).unwrap();
        let model = GaussianModel::new(0.64, 2).unwrap();
        let cfg = config(2, 10, 0.1, 500);
        let plain = run_reverse(&spec, &cfg, &gaussian_score(&model, &spec, &cfg).unwrap()).unwrap();
        assert_eq!(run_fine_reference(&spec, &cfg, &model, 1).unwrap(), plain);
    }
}
