//! C ABI over the difflab core.
//!
//! Every fallible function returns a `DlStatus`; on failure a message is
//! kept per thread and can be read with `dl_last_error_message`. Handles are
//! opaque and must be released with their matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use difflab::bounds::BoundContext;
use difflab::complexity::{self, ComplexityQuery};
use difflab::sampler::{self, RunResult, SamplerConfig, ScoreMode};
use difflab::{Error, Family, GaussianModel, ScheduleSpec};

/// Result codes. Zero is success; the others mirror the core error kinds.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DlStatus {
    DlOk = 0,
    DlNullPointer = 1,
    DlInvalidString = 2,
    DlDomain = 3,
    DlNumeric = 4,
    DlAdmissibility = 5,
    DlDivergence = 6,
    DlBudget = 7,
    DlUnsupported = 8,
    DlSchema = 9,
    DlIo = 10,
    DlPanic = 11,
}

/// A forward-noise schedule on `[0, horizon]`.
pub struct DlSchedule(ScheduleSpec);

/// Terminal moments of a sampler run.
pub struct DlRun(RunResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DlStatus {
    match e {
        Error::Domain(_) => DlStatus::DlDomain,
        Error::Numeric { .. } => DlStatus::DlNumeric,
        Error::Admissibility { .. } => DlStatus::DlAdmissibility,
        Error::Divergence { .. } => DlStatus::DlDivergence,
        Error::Budget(_) => DlStatus::DlBudget,
        Error::Unsupported(_) => DlStatus::DlUnsupported,
        Error::Schema(_) => DlStatus::DlSchema,
        Error::Io(_) => DlStatus::DlIo,
    }
}

struct Fail(DlStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(DlStatus::DlNullPointer, format!("{what} is null"))
}

/// Run `body`, translating errors and panics into a status and the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> DlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            DlStatus::DlOk
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DlStatus::DlPanic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn schedule<'a>(p: *const DlSchedule) -> Result<&'a ScheduleSpec, Fail> {
    p.as_ref().map(|s| &s.0).ok_or_else(|| null("schedule"))
}

fn family_from(name: &str, p: &[f64]) -> Result<Family, Fail> {
    let want = |n: usize| {
        if p.len() == n {
            Ok(())
        } else {
            Err(Fail(DlStatus::DlDomain, format!("{name} takes {n} parameters, got {}", p.len())))
        }
    };
    let fam = match name {
        "ve_exp" => want(2).map(|_| Family::VeExp { a: p[0], b: p[1] }),
        "ve_const" => want(1).map(|_| Family::VeConst { a: p[0] }),
        "ve_sqrt2at" => want(1).map(|_| Family::VeSqrt2at { a: p[0] }),
        "ve_poly" => want(3).map(|_| Family::VePoly { a: p[0], b: p[1], c: p[2] }),
        "vp_const" => want(1).map(|_| Family::VpConst { beta: p[0] }),
        "vp_linear" => want(2).map(|_| Family::VpLinear { beta_min: p[0], beta_max: p[1] }),
        "vp_poly" => want(3).map(|_| Family::VpPoly { beta_min: p[0], beta_max: p[1], rho: p[2] }),
        "vp_exp" => want(2).map(|_| Family::VpExp { beta_min: p[0], beta_max: p[1] }),
        _ => Err(Fail(DlStatus::DlUnsupported, format!("unknown family `{name}`"))),
    }?;
    Ok(fam)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn dl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Create a built-in schedule. `params` lists the family parameters in declaration
/// order, e.g. `{a, b}` for `ve_exp` or `{beta_min, beta_max, rho}` for `vp_poly`.
///
/// # Safety
/// `family` must be a NUL-terminated string, `params` must point to `n_params`
/// doubles (or be null when `n_params` is 0), and `out_schedule` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dl_schedule_new(
    family: *const c_char,
    params: *const f64,
    n_params: usize,
    horizon: f64,
    out_schedule: *mut *mut DlSchedule,
) -> DlStatus {
    guard(|| {
        let slot = out(out_schedule, "out_schedule")?;
        *slot = ptr::null_mut();
        if family.is_null() {
            return Err(null("family"));
        }
        let name = CStr::from_ptr(family)
            .to_str()
            .map_err(|_| Fail(DlStatus::DlInvalidString, "family is not UTF-8".into()))?;
        let p: &[f64] = if n_params == 0 {
            &[]
        } else if params.is_null() {
            return Err(null("params"));
        } else {
            std::slice::from_raw_parts(params, n_params)
        };
        let spec = ScheduleSpec::new(family_from(name, p)?, horizon)?;
        *slot = Box::into_raw(Box::new(DlSchedule(spec)));
        Ok(())
    })
}

/// Release a schedule. Null is ignored.
///
/// # Safety
/// `schedule` must come from `dl_schedule_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dl_schedule_free(schedule: *mut DlSchedule) {
    if !schedule.is_null() {
        drop(Box::from_raw(schedule));
    }
}

/// Transition-kernel coefficients: `x_t | x_0 ~ N(a1 x_0, a2 I)`.
///
/// # Safety
/// Pointers must be valid; `schedule` must be live.
#[no_mangle]
pub unsafe extern "C" fn dl_schedule_kernel(schedule: *const DlSchedule, t: f64, a1: *mut f64, a2: *mut f64) -> DlStatus {
    guard(|| {
        let k = self::schedule(schedule)?.kernel_params(t)?;
        *out(a1, "a1")? = k.a1;
        *out(a2, "a2")? = k.a2;
        Ok(())
    })
}

/// Terminal per-coordinate variance of the discrete reverse chain for
/// `N(0, sigma0_sq I_d)` data with the exact score, using `steps` equal steps.
///
/// # Safety
/// Pointers must be valid; `schedule` must be live.
#[no_mangle]
pub unsafe extern "C" fn dl_gaussian_terminal_variance(
    schedule: *const DlSchedule,
    sigma0_sq: f64,
    d: usize,
    steps: usize,
    out_variance: *mut f64,
) -> DlStatus {
    guard(|| {
        let spec = self::schedule(schedule)?;
        let model = GaussianModel::new(sigma0_sq, d)?;
        let eta = spec.horizon() / steps.max(1) as f64;
        *out(out_variance, "out_variance")? = model.variance_recursion(spec, steps, eta)?.terminal();
        Ok(())
    })
}

/// First-order stepsize coefficient of the terminal variance.
///
/// # Safety
/// Pointers must be valid; `schedule` must be live.
#[no_mangle]
pub unsafe extern "C" fn dl_gaussian_c0(schedule: *const DlSchedule, sigma0_sq: f64, d: usize, out_c0: *mut f64) -> DlStatus {
    guard(|| {
        let spec = self::schedule(schedule)?;
        *out(out_c0, "out_c0")? = GaussianModel::new(sigma0_sq, d)?.compute_c0(spec)?;
        Ok(())
    })
}

fn gaussian_context(spec: &ScheduleSpec, sigma0_sq: f64, d: usize, steps: usize) -> Result<BoundContext, Fail> {
    let model = GaussianModel::new(sigma0_sq, d)?;
    Ok(BoundContext::gaussian(&model, spec, steps, spec.horizon() / steps.max(1) as f64)?)
}

/// Stepsize admissibility for Gaussian data. `out_admissible` receives 1 or 0,
/// `out_eta_max` the largest admissible stepsize (0 when none is).
///
/// # Safety
/// Pointers must be valid; `schedule` must be live.
#[no_mangle]
pub unsafe extern "C" fn dl_stepsize_admissible(
    schedule: *const DlSchedule,
    sigma0_sq: f64,
    d: usize,
    steps: usize,
    out_admissible: *mut i32,
    out_eta_max: *mut f64,
) -> DlStatus {
    guard(|| {
        let report = gaussian_context(self::schedule(schedule)?, sigma0_sq, d, steps)?.stepsize_admissible()?;
        *out(out_admissible, "out_admissible")? = i32::from(report.admissible);
        *out(out_eta_max, "out_eta_max")? = report.eta_max;
        Ok(())
    })
}

/// Wasserstein upper bound for Gaussian data with score error `score_error`
/// and time-Lipschitz constant `score_lipschitz`.
///
/// # Safety
/// Pointers must be valid; `schedule` must be live.
#[no_mangle]
pub unsafe extern "C" fn dl_theorem_bound(
    schedule: *const DlSchedule,
    sigma0_sq: f64,
    d: usize,
    steps: usize,
    score_error: f64,
    score_lipschitz: f64,
    out_bound: *mut f64,
) -> DlStatus {
    guard(|| {
        let mut ctx = gaussian_context(self::schedule(schedule)?, sigma0_sq, d, steps)?;
        ctx.score_error = score_error;
        ctx.score_lipschitz = score_lipschitz;
        *out(out_bound, "out_bound")? = ctx.theorem_bound()?.total;
        Ok(())
    })
}

/// Step-count prescription for the schedule's family at accuracy `eps` in dimension `d`,
/// with standard-normal data constants. The schedule's horizon is ignored.
///
/// # Safety
/// Pointers must be valid; `schedule` must be live.
#[no_mangle]
pub unsafe extern "C" fn dl_prescribe(
    schedule: *const DlSchedule,
    eps: f64,
    d: usize,
    out_horizon: *mut f64,
    out_eta_max: *mut f64,
    out_m_max: *mut f64,
    out_k_min: *mut u64,
) -> DlStatus {
    guard(|| {
        let p = complexity::prescribe(self::schedule(schedule)?.family(), &ComplexityQuery::new(eps, d))?;
        *out(out_horizon, "out_horizon")? = p.horizon;
        *out(out_eta_max, "out_eta_max")? = p.eta_max;
        *out(out_m_max, "out_m_max")? = p.m_max;
        *out(out_k_min, "out_k_min")? = p.k_min;
        Ok(())
    })
}

/// Run the reverse sampler on Gaussian data with the exact score plus
/// isotropic noise of L2 magnitude `score_error` (0 for the exact score).
///
/// # Safety
/// Pointers must be valid; `schedule` must be live.
#[no_mangle]
pub unsafe extern "C" fn dl_sample(
    schedule: *const DlSchedule,
    sigma0_sq: f64,
    d: usize,
    steps: usize,
    chains: usize,
    seed: u64,
    score_error: f64,
    out_run: *mut *mut DlRun,
) -> DlStatus {
    guard(|| {
        let slot = out(out_run, "out_run")?;
        *slot = ptr::null_mut();
        let spec = self::schedule(schedule)?;
        let model = GaussianModel::new(sigma0_sq, d)?;
        let config = SamplerConfig {
            d,
            steps,
            eta: spec.horizon() / steps.max(1) as f64,
            seed,
            chains,
            score_mode: if score_error == 0.0 { ScoreMode::ExactGaussian } else { ScoreMode::Perturbed { m: score_error } },
            keep_states: false,
            checkpoints: Vec::new(),
        };
        config.validate(spec)?;
        let score = sampler::gaussian_score(&model, spec, &config)?;
        let run = sampler::run_reverse(spec, &config, score.as_ref())?;
        *slot = Box::into_raw(Box::new(DlRun(run)));
        Ok(())
    })
}

/// Release a run. Null is ignored.
///
/// # Safety
/// `run` must come from `dl_sample` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dl_run_free(run: *mut DlRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Pooled per-coordinate second moment of the terminal states and its standard error.
///
/// # Safety
/// Pointers must be valid; `run` must be live.
#[no_mangle]
pub unsafe extern "C" fn dl_run_second_moment(run: *const DlRun, out_moment: *mut f64, out_std_error: *mut f64) -> DlStatus {
    guard(|| {
        let r = &run.as_ref().ok_or_else(|| null("run"))?.0;
        *out(out_moment, "out_moment")? = r.second_moment;
        *out(out_std_error, "out_std_error")? = r.second_moment_se;
        Ok(())
    })
}

/// W2 between the moment-matched Gaussian of the terminal states and `N(0, sigma0_sq I)`.
///
/// # Safety
/// Pointers must be valid; `run` must be live.
#[no_mangle]
pub unsafe extern "C" fn dl_run_w2_moment_matched(run: *const DlRun, sigma0_sq: f64, out_w2: *mut f64) -> DlStatus {
    guard(|| {
        let r = &run.as_ref().ok_or_else(|| null("run"))?.0;
        *out(out_w2, "out_w2")? = r.w2_moment_matched(sigma0_sq);
        Ok(())
    })
}
