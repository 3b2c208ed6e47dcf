//! Adaptive Simpson quadrature.
//!
//! Built-in schedules never depend on this for their own formulas; it serves
//! custom schedules, per-step integrals of derived rates, and cross-checks.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
    /// Hard cap on integrand evaluations per call.
    pub max_evals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-12,
            rel_tol: 1e-10,
            max_depth: 60,
            max_evals: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    /// Sum of local Richardson error estimates.
    pub error: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Integrate with default tolerances, failing if the tolerance is not met.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    let r = integrate_with(f, a, b, QuadOptions::default());
    if r.converged && r.value.is_finite() {
        Ok(r.value)
    } else {
        Err(Error::Numeric {
            what: format!("adaptive quadrature on [{a}, {b}] did not converge"),
            achieved: r.error,
        })
    }
}

/// Like [`integrate`] for integrands that can themselves fail; the first
/// integrand error is returned in preference to a convergence failure.
pub fn integrate_fallible<F: Fn(f64) -> Result<f64>>(f: F, a: f64, b: f64) -> Result<f64> {
    let failure = std::cell::RefCell::new(None);
    let r = integrate(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        a,
        b,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => r,
    }
}

/// Integrate over `[a, b]`; `a > b` gives the negated integral.
pub fn integrate_with<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, opts: QuadOptions) -> QuadResult {
    if a == b {
        return QuadResult { value: 0.0, error: 0.0, evals: 0, converged: true };
    }
    if a > b {
        let r = integrate_with(f, b, a, opts);
        return QuadResult { value: -r.value, ..r };
    }
    let mut st = State { evals: 3, error: 0.0, converged: true, opts };
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let eps = opts.abs_tol.max(opts.rel_tol * whole.abs());
    let value = refine(&f, a, fa, m, fm, b, fb, whole, eps, 0, &mut st);
    QuadResult { value, error: st.error, evals: st.evals, converged: st.converged && value.is_finite() }
}

struct State {
    evals: usize,
    error: f64,
    converged: bool,
    opts: QuadOptions,
}

// Every interval is split at least this many times before its estimate is trusted,
// so that a lucky agreement of two coarse Simpson rules cannot end the search.
const MIN_DEPTH: u32 = 2;

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
    st: &mut State,
) -> f64 {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    st.evals += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    let accept = depth >= MIN_DEPTH && delta.abs() <= 15.0 * eps;
    let exhausted = depth >= st.opts.max_depth
        || st.evals >= st.opts.max_evals
        || !(lm > a && m > lm && rm > m && b > rm)
        || !delta.is_finite();
    if accept || exhausted {
        if !accept {
            st.converged = false;
        }
        st.error += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    refine(f, a, fa, lm, flm, m, fm, left, 0.5 * eps, depth + 1, st)
        + refine(f, m, fm, rm, frm, b, fb, right, 0.5 * eps, depth + 1, st)
}
