//! 2-Wasserstein distances.

use crate::error::{Error, Result};

/// W2 between `N(m, var1 I_d)` and `N(m, var2 I_d)`.
pub fn w2_gaussian_isotropic(var1: f64, var2: f64, d: usize) -> f64 {
    (d as f64).sqrt() * (var1.sqrt() - var2.sqrt()).abs()
}

/// W2 between Gaussians with diagonal covariances.
pub fn w2_gaussian_general(mean1: &[f64], cov_diag1: &[f64], mean2: &[f64], cov_diag2: &[f64]) -> Result<f64> {
    let d = mean1.len();
    if mean2.len() != d || cov_diag1.len() != d || cov_diag2.len() != d {
        return Err(Error::domain("mean and covariance lengths differ"));
    }
    if cov_diag1.iter().chain(cov_diag2).any(|&c| !(c >= 0.0)) {
        return Err(Error::domain("covariance entries must be nonnegative"));
    }
    let mut acc = 0.0;
    for i in 0..d {
        let dm = mean1[i] - mean2[i];
        let ds = cov_diag1[i].sqrt() - cov_diag2[i].sqrt();
        acc += dm * dm + ds * ds;
    }
    Ok(acc.sqrt())
}

/// Exact W2 between two equally weighted 1-D empirical measures (sorted coupling).
pub fn w2_empirical_1d(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    if samples_a.len() != samples_b.len() {
        return Err(Error::domain(format!("sample counts differ: {} vs {}", samples_a.len(), samples_b.len())));
    }
    if samples_a.is_empty() {
        return Err(Error::domain("no samples"));
    }
    if samples_a.iter().chain(samples_b).any(|x| x.is_nan()) {
        return Err(Error::domain("samples contain NaN"));
    }
    let mut a = samples_a.to_vec();
    let mut b = samples_b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let ss: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}
