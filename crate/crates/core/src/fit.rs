//! Log-log slope fits and Richardson extrapolation.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Least-squares line through `(ln tau, ln value)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub rms_residual: f64,
}

pub fn loglog_fit(taus: &[f64], values: &[f64]) -> Result<LogLogFit> {
    if taus.len() != values.len() || taus.len() < 2 {
        return Err(Error::InvalidParameter("need at least two (tau, value) pairs".into()));
    }
    if taus.iter().chain(values).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter("log-log fit needs positive finite data".into()));
    }
    let xs: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("tau values must be distinct".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(LogLogFit { slope, intercept, rms_residual: (ss / n).sqrt() })
}

/// Extrapolates `values(tau)` to `tau -> inf`, modelling the error as a
/// polynomial in `tau^-order` through all supplied points (Neville).
pub fn richardson<T: Real>(taus: &[T], values: &[Complex<T>], order: T) -> Result<Complex<T>> {
    if taus.len() != values.len() || taus.is_empty() {
        return Err(Error::InvalidParameter("richardson needs matching non-empty inputs".into()));
    }
    let s: Vec<T> = taus.iter().map(|t| t.powf(-order)).collect();
    let mut p = values.to_vec();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            let den = s[i] - s[i + m];
            if den == T::zero() {
                return Err(Error::InvalidParameter("tau values must be distinct".into()));
            }
            // Neville step evaluated at s = 0.
            p[i] = (p[i + 1] * s[i] - p[i] * s[i + m]) / den;
        }
    }
    Ok(p[0])
}
