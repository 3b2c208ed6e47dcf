//! Extrema of scalar functions on an interval: dense grid, then golden-section
//! refinement around the best grid point.

use serde::Serialize;

use crate::error::{Error, Result};

pub const GRID_POINTS: usize = 1024;
const GOLDEN_PASSES: usize = 3;
const ITERS_PER_PASS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Extremum {
    pub arg: f64,
    pub value: f64,
    pub grid_arg: f64,
    pub grid_value: f64,
}

fn better(goal: Goal, a: f64, b: f64) -> bool {
    match goal {
        Goal::Max => a > b,
        Goal::Min => a < b,
    }
}

pub fn grid_extremum<F>(mut f: F, lo: f64, hi: f64, goal: Goal) -> Result<Extremum>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut eval = |t: f64| -> Result<f64> {
        let v = f(t)?;
        if v.is_nan() {
            return Err(Error::Numeric { what: format!("objective is NaN at t = {t}"), achieved: f64::NAN });
        }
        Ok(v)
    };
    if hi <= lo {
        let v = eval(lo)?;
        return Ok(Extremum { arg: lo, value: v, grid_arg: lo, grid_value: v });
    }
    let h = (hi - lo) / (GRID_POINTS - 1) as f64;
    let node = |i: usize| if i == GRID_POINTS - 1 { hi } else { lo + i as f64 * h };
    let mut best_i = 0;
    let mut best_v = eval(lo)?;
    for i in 1..GRID_POINTS {
        let v = eval(node(i))?;
        if better(goal, v, best_v) {
            best_i = i;
            best_v = v;
        }
    }
    let grid_arg = node(best_i);
    let mut arg = grid_arg;
    let mut value = best_v;

    // Each pass searches a bracket of one grid spacing on both sides of the
    // incumbent, so a pass can move the incumbent into a neighbouring cell.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..GOLDEN_PASSES {
        let mut a = (arg - h).max(lo);
        let mut b = (arg + h).min(hi);
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let mut f1 = eval(x1)?;
        let mut f2 = eval(x2)?;
        for _ in 0..ITERS_PER_PASS {
            if better(goal, f1, f2) || f1 == f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = eval(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = eval(x2)?;
            }
        }
        for (x, v) in [(x1, f1), (x2, f2)] {
            if better(goal, v, value) {
                arg = x;
                value = v;
            }
        }
    }
    Ok(Extremum { arg, value, grid_arg, grid_value: best_v })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interior_maximum_is_refined_below_grid_spacing() {
        let peak = 0.123_456_789;
        let e = grid_extremum(|t| Ok(-(t - peak) * (t - peak)), 0.0, 1.0, Goal::Max).unwrap();
        assert!((e.arg - peak).abs() < 1e-6);
        assert!(e.value >= e.grid_value);
    }

    #[test]
    fn monotone_minimum_sits_at_endpoint() {
        let e = grid_extremum(|t| Ok(t.exp()), 0.5, 2.0, Goal::Min).unwrap();
        assert_eq!(e.arg, 0.5);
        assert_eq!(e.value, 0.5f64.exp());
    }

    #[test]
    fn infinite_values_are_allowed() {
        let e = grid_extremum(|t| Ok(if t == 0.0 { f64::INFINITY } else { 1.0 / t }), 0.0, 1.0, Goal::Min).unwrap();
        assert_eq!(e.value, 1.0);
    }

    #[test]
    fn nan_is_an_error() {
        assert!(grid_extremum(|_| Ok(f64::NAN), 0.0, 1.0, Goal::Max).is_err());
    }
}
