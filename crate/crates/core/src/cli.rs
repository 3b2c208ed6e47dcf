//! Command-line front end. Each subcommand produces a set of named artifacts
//! that are written to the output directory, or the primary one to stdout when
//! no directory is given.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::complexity::{self, ComplexityQuery};
use crate::config::{self, Config, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::sampler;
use crate::schedule::Family;

pub const OUT_ENV: &str = "DIFFLAB_OUT";

#[derive(Debug, Parser)]
#[command(name = "difflab", version, about = "Diffusion sampler experiments, error bounds and complexity tables")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides sampler.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for chain-level parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory; the DIFFLAB_OUT environment variable takes precedence.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the reverse sampler and compare with the exact variance recursion.
    Sample,
    /// Evaluate the Wasserstein upper bound with every intermediate term.
    Bound,
    /// Tabulate step-count prescriptions across families, accuracies and dimensions.
    Complexity(ComplexityArgs),
    /// Smallest step count reaching a W2 target on the exact recursion.
    LowerBound(LowerBoundArgs),
    /// First-order stepsize coefficient with a Richardson cross-check.
    C0(C0Args),
    /// Report whether the configured stepsize is admissible.
    CheckStepsize,
    /// Tabulate t, f, g, a1, a2 on a uniform grid.
    ScheduleDump(DumpArgs),
    /// Print a config file with every default written out.
    ReferenceConfig,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ComplexityArgs {
    /// Family names; defaults to every built-in family with reference parameters.
    #[arg(long = "family", value_delimiter = ',')]
    pub families: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.1, 0.05])]
    pub eps: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [4, 16, 64])]
    pub d: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub m0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub l0: f64,
    #[arg(long, default_value_t = 0.0)]
    pub x_star_norm: f64,
    #[arg(long, default_value_t = 0.0)]
    pub m1: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct LowerBoundArgs {
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    /// Stepsize; defaults to the configured horizon over sampler.steps.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, default_value_t = 100.0)]
    pub max_horizon: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct C0Args {
    #[arg(long, default_value_t = 1e-3)]
    pub eta: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DumpArgs {
    #[arg(long, default_value_t = 1025)]
    pub points: usize,
}

/// One output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Everything a command produced: files plus a short human summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    pub summary: String,
}

fn text(name: &str, body: String) -> Artifact {
    Artifact { name: name.into(), bytes: body.into_bytes() }
}

fn json_artifact(name: &str, value: &Value) -> Artifact {
    let mut s = serde_json::to_string_pretty(value).expect("json serializes");
    s.push('\n');
    text(name, s)
}

/// 17 significant digits, enough to round-trip any double.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn envelope(command: &str, config: Value, body: Value) -> Value {
    let mut v = json!({ "format_version": FORMAT_VERSION, "command": command, "config": config });
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
        dst.extend(src);
    }
    v
}

fn csv_preamble(config: &Value) -> String {
    format!("# difflab format_version={FORMAT_VERSION} config={}\n", serde_json::to_string(config).expect("json"))
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

impl Cli {
    fn load_config(&self) -> Result<Config> {
        let path = self.config.as_deref().ok_or_else(|| Error::Schema("--config is required for this command".into()))?;
        let mut cfg = Config::load(path)?;
        if let Some(seed) = self.seed {
            cfg.sampler.seed = seed;
        }
        Ok(cfg)
    }

    /// Run the command without touching the filesystem except to read the config.
    pub fn execute(&self) -> Result<Outcome> {
        match &self.command {
            Command::Sample => cmd_sample(&self.load_config()?),
            Command::Bound => cmd_bound(&self.load_config()?),
            Command::Complexity(args) => cmd_complexity(args),
            Command::LowerBound(args) => cmd_lower_bound(&self.load_config()?, args),
            Command::C0(args) => cmd_c0(&self.load_config()?, args),
            Command::CheckStepsize => cmd_check_stepsize(&self.load_config()?),
            Command::ScheduleDump(args) => cmd_schedule_dump(&self.load_config()?, args),
            Command::ReferenceConfig => Ok(Outcome {
                artifacts: vec![text("difflab.toml", config::reference_config())],
                summary: String::new(),
            }),
        }
    }

    pub fn out_dir(&self) -> Option<PathBuf> {
        std::env::var_os(OUT_ENV).map(PathBuf::from).or_else(|| self.out.clone())
    }
}

pub fn cmd_sample(cfg: &Config) -> Result<Outcome> {
    let model = cfg.model()?;
    let spec = &cfg.schedule;
    let sc = cfg.sampler_config();
    let ctx = cfg.bound_context()?;
    let adm = ctx.stepsize_admissible()?;
    if cfg.sampler.require_admissible && !adm.admissible {
        return Err(Error::Admissibility {
            condition: adm.binding.clone(),
            detail: adm
                .violation
                .clone()
                .unwrap_or_else(|| format!("eta = {} exceeds the admissible maximum {}", sc.eta, adm.eta_max)),
        });
    }
    let w2_bound = if adm.admissible { Some(ctx.theorem_bound()?.total) } else { None };
    let trace = model.variance_recursion(spec, sc.steps, sc.eta)?;
    let score = sampler::gaussian_score(&model, spec, &sc)?;
    let run = sampler::run_reverse(spec, &sc, score.as_ref())?;
    let sigma_hat_k_sq = trace.terminal();
    let checkpoints: Vec<Value> = run
        .checkpoints
        .iter()
        .map(|c| json!({ "k": c.k, "second_moment": c.second_moment, "second_moment_se": c.second_moment_se, "sigma_hat_sq": trace.sigma_hat_sq[c.k] }))
        .collect();
    let body = json!({
        "sigma_hat_K_sq": sigma_hat_k_sq,
        "empirical_var": run.pooled_variance,
        "second_moment": run.second_moment,
        "second_moment_se": run.second_moment_se,
        "mean": run.mean,
        "variance": run.variance,
        "w2_exact": model.w2_exact(sigma_hat_k_sq.sqrt()),
        "w2_moment_matched": run.w2_moment_matched(model.sigma0_sq),
        "w2_bound": w2_bound,
        "admissible": adm.admissible,
        "eta": sc.eta,
        "checkpoints": checkpoints,
        "contraction_warnings": trace.contraction_warnings,
    });
    let config = to_value(cfg);
    let mut artifacts = vec![json_artifact("sample.json", &envelope("sample", config.clone(), body))];

    let mut csv = csv_preamble(&config);
    csv.push_str("k,sigma_hat_sq,alpha_int,g2_int\n");
    for (k, v) in trace.sigma_hat_sq.iter().enumerate() {
        if k == 0 {
            let _ = writeln!(csv, "0,{},,", fmt_f64(*v));
        } else {
            let _ = writeln!(
                csv,
                "{k},{},{},{}",
                fmt_f64(*v),
                fmt_f64(trace.alpha_integrals[k - 1]),
                fmt_f64(trace.g2_integrals[k - 1])
            );
        }
    }
    artifacts.push(text("trace.csv", csv));

    if let Some(states) = &run.states {
        artifacts.push(Artifact { name: "states.bin".into(), bytes: encode_states(run.d, run.chains, states) });
    }
    let summary = format!(
        "sigma_hat_K^2 = {sigma_hat_k_sq:.10}  empirical variance = {:.10} (se of second moment {:.2e})",
        run.pooled_variance, run.second_moment_se
    );
    Ok(Outcome { artifacts, summary })
}

/// Little-endian `u64 d`, `u64 chains`, then `chains x d` doubles row-major.
pub fn encode_states(d: usize, chains: usize, states: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * states.len());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    out.extend_from_slice(&(chains as u64).to_le_bytes());
    for x in states {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn cmd_bound(cfg: &Config) -> Result<Outcome> {
    let ctx = cfg.bound_context()?;
    let report = ctx.theorem_bound()?;
    let model = cfg.model()?;
    let sigma_hat = model.variance_recursion(&cfg.schedule, ctx.steps, ctx.eta)?.terminal().sqrt();
    let config = to_value(cfg);
    let body = json!({
        "bound": to_value(&report),
        "prior_gap": ctx.prior_gap()?,
        "w2_exact": model.w2_exact(sigma_hat),
    });
    let mut csv = csv_preamble(&config);
    csv.push_str("k,factor,h,bracket\n");
    for s in &report.steps {
        let _ = writeln!(csv, "{},{},{},{}", s.k, fmt_f64(s.factor), fmt_f64(s.h), fmt_f64(s.bracket));
    }
    Ok(Outcome {
        summary: format!("bound = {:.10}  (prior term {:.6e}, w2 exact {:.6e})", report.total, report.prior_term, model.w2_exact(sigma_hat)),
        artifacts: vec![json_artifact("bound.json", &envelope("bound", config, body)), text("bound_steps.csv", csv)],
    })
}

fn family_by_name(name: &str) -> Result<Family> {
    complexity::reference_families()
        .into_iter()
        .find(|f| f.name() == name)
        .ok_or_else(|| Error::Schema(format!("unknown family `{name}`; expected one of {}", Family::BUILTIN_NAMES.join(", "))))
}

pub fn cmd_complexity(args: &ComplexityArgs) -> Result<Outcome> {
    let families = if args.families.is_empty() {
        complexity::reference_families()
    } else {
        args.families.iter().map(|n| family_by_name(n)).collect::<Result<_>>()?
    };
    let base = ComplexityQuery { eps: 0.1, d: 1, m0: args.m0, l0: args.l0, x_star_norm: args.x_star_norm, m1: args.m1 };
    let mut rows = Vec::new();
    let mut lower = Vec::new();
    for &eps in &args.eps {
        for &d in &args.d {
            let q = ComplexityQuery { eps, d, ..base };
            lower.push(json!({ "eps": eps, "d": d, "lower_bound": complexity::lower_bound_gaussian(&q)? }));
            for fam in &families {
                rows.push(complexity::prescribe(fam, &q)?);
            }
        }
    }
    let ordering = complexity::ordering_report(&families, &args.eps, &args.d, &base)?;
    let mut config = to_value(args);
    config["families"] = to_value(&families.iter().map(|f| json!({ "family": f.name(), "params": f.params() })).collect::<Vec<_>>());

    let mut csv = csv_preamble(&config);
    csv.push_str("family,params,eps,d,T,eta_max,M_max,K_min,order_label\n");
    for p in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},\"{}\"",
            p.family,
            p.params_string(),
            fmt_f64(p.eps),
            p.d,
            fmt_f64(p.horizon),
            fmt_f64(p.eta_max),
            fmt_f64(p.m_max),
            p.k_min,
            p.order_label
        );
    }
    let body = json!({
        "disclaimer": complexity::DISCLAIMER,
        "lower_bounds": lower,
        "cells": to_value(&ordering.cells),
        "eps_scaling": to_value(&ordering.eps_scaling),
    });
    Ok(Outcome {
        summary: format!("{} prescriptions", rows.len()),
        artifacts: vec![text("complexity.csv", csv), json_artifact("complexity.json", &envelope("complexity", config, body))],
    })
}

pub fn cmd_lower_bound(cfg: &Config, args: &LowerBoundArgs) -> Result<Outcome> {
    let model = cfg.model()?;
    let eta = args.eta.unwrap_or_else(|| cfg.eta());
    let search = model.minimal_k_search(&cfg.schedule, args.eps, eta, args.max_horizon)?;
    let lower = complexity::lower_bound_gaussian(&ComplexityQuery::new(args.eps, model.d))?;
    let config = json!({ "config": to_value(cfg), "args": to_value(args), "eta": eta });
    let summary = match search {
        crate::gaussian::KSearch::Found { steps, w2 } => format!("K = {steps}  W2 = {w2:.10e}  (sqrt(d)/eps = {lower})"),
        crate::gaussian::KSearch::NotAchievable { best_steps, best_w2 } => {
            format!("not achievable within the horizon cap; best K = {best_steps}  W2 = {best_w2:.10e}")
        }
    };
    let body = json!({ "search": to_value(&search), "lower_bound": lower });
    Ok(Outcome { summary, artifacts: vec![json_artifact("lower_bound.json", &envelope("lower-bound", config, body))] })
}

pub fn cmd_c0(cfg: &Config, args: &C0Args) -> Result<Outcome> {
    let model = cfg.model()?;
    let spec = &cfg.schedule;
    let c0 = model.compute_c0(spec)?;
    let steps = complexity::steps_for(spec.horizon(), args.eta)? as usize;
    let eta = spec.horizon() / steps as f64;
    let coarse = model.variance_recursion(spec, steps, eta)?.terminal();
    let fine = model.variance_recursion(spec, 2 * steps, eta / 2.0)?.terminal();
    let slope = (coarse - fine) * 2.0 / eta;
    let config = json!({ "config": to_value(cfg), "args": to_value(args) });
    let body = json!({
        "c0": c0,
        "eta": eta,
        "steps": steps,
        "sigma_hat_sq_eta": coarse,
        "sigma_hat_sq_half_eta": fine,
        "richardson_slope": slope,
        "relative_difference": (slope - c0).abs() / c0.abs(),
    });
    Ok(Outcome {
        summary: format!("c0 = {c0:.10e}  Richardson slope at eta = {eta:e}: {slope:.10e}"),
        artifacts: vec![json_artifact("c0.json", &envelope("c0", config, body))],
    })
}

pub fn cmd_check_stepsize(cfg: &Config) -> Result<Outcome> {
    let report = cfg.bound_context()?.stepsize_admissible()?;
    let summary = if report.admissible {
        format!("admissible: eta = {:e} <= {:e} ({})", report.eta, report.eta_max, report.binding)
    } else {
        let detail = report.violation.clone().unwrap_or_else(|| format!("eta = {:e} > {:e}", report.eta, report.eta_max));
        format!("not admissible: {}: {detail}", report.binding)
    };
    let body = json!({ "admissibility": to_value(&report) });
    Ok(Outcome { summary, artifacts: vec![json_artifact("stepsize.json", &envelope("check-stepsize", to_value(cfg), body))] })
}

pub fn cmd_schedule_dump(cfg: &Config, args: &DumpArgs) -> Result<Outcome> {
    if args.points < 2 {
        return Err(Error::Schema("--points must be at least 2".into()));
    }
    let spec = &cfg.schedule;
    let config = json!({ "schedule": to_value(spec), "args": to_value(args) });
    let mut csv = csv_preamble(&config);
    csv.push_str("t,f,g,a1,a2\n");
    for i in 0..args.points {
        let t = spec.horizon() * i as f64 / (args.points - 1) as f64;
        let k = spec.kernel_params(t)?;
        let _ = writeln!(csv, "{},{},{},{},{}", fmt_f64(t), fmt_f64(spec.f(t)), fmt_f64(spec.g(t)), fmt_f64(k.a1), fmt_f64(k.a2));
    }
    Ok(Outcome { summary: String::new(), artifacts: vec![text("schedule.csv", csv)] })
}

fn write_outcome(outcome: &Outcome, dir: Option<&Path>) -> Result<()> {
    use std::io::Write;
    match dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            for a in &outcome.artifacts {
                std::fs::write(dir.join(&a.name), &a.bytes)?;
            }
            let mut out = std::io::stdout().lock();
            if !outcome.summary.is_empty() {
                writeln!(out, "{}", outcome.summary)?;
            }
            for a in &outcome.artifacts {
                writeln!(out, "wrote {}", dir.join(&a.name).display())?;
            }
        }
        None => {
            let mut out = std::io::stdout().lock();
            if let Some(a) = outcome.artifacts.first() {
                out.write_all(&a.bytes)?;
            }
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let outcome = match cli.threads {
        Some(n) => {
            if n == 0 {
                return Err(Error::Schema("--threads must be at least 1".into()));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
            pool.install(|| cli.execute())?
        }
        None => cli.execute()?,
    };
    write_outcome(&outcome, cli.out_dir().as_deref())
}

/// Entry point for the binary: machine-readable error JSON on stderr and a nonzero exit on failure.
pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            let err = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{err}");
            std::process::ExitCode::from(if matches!(e, Error::Schema(_)) { 2 } else { 1 })
        }
    }
}
