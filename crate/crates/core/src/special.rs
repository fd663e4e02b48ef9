//! Log-domain Gamma and Beta functions.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// `ln B(alpha) = sum ln Gamma(alpha_i) - ln Gamma(sum alpha_i)`.
pub fn ln_beta_multivariate(alpha: &[f64]) -> Result<f64> {
    if alpha.is_empty() {
        return Err(Error::Params("Beta function needs at least one argument".into()));
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(Error::Params(format!("Beta function arguments must be positive, got {a}")));
    }
    let total: f64 = alpha.iter().sum();
    Ok(alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>() - ln_gamma(total))
}

/// `B(alpha) = prod Gamma(alpha_i) / Gamma(sum alpha_i)`.
pub fn beta_multivariate(alpha: &[f64]) -> Result<f64> {
    ln_beta_multivariate(alpha).map(f64::exp)
}

pub fn ln_beta(a: f64, b: f64) -> Result<f64> {
    ln_beta_multivariate(&[a, b])
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// `ln sum exp(x_i)` without overflow.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
