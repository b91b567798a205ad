//! Algebraic decay-rate fitting: least squares of `log y` against
//! `log(1 + t)` over a time window.

use crate::error::{Error, Result};

/// Result of a power-law fit `y ~ exp(intercept) (1 + t)^exponent`.
#[derive(Clone, Copy, Debug)]
pub struct RateFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Root-mean-square residual of `log y` around the fit.
    pub residual: f64,
    pub window: [f64; 2],
}

/// Fit the decay exponent on samples inside `[t_lo, t_hi]`. Rejects
/// windows with fewer than eight samples or non-positive values.
pub fn fit_decay_exponent(times: &[f64], values: &[f64], window: [f64; 2]) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} times vs {} values",
            times.len(),
            values.len()
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t < window[0] || t > window[1] {
            continue;
        }
        if !(v > 0.0) {
            return Err(Error::Diagnostics(format!(
                "non-positive value {v} at t = {t} inside the fit window"
            )));
        }
        xs.push((1.0 + t).ln());
        ys.push(v.ln());
    }
    let n = xs.len();
    if n < 8 {
        return Err(Error::Diagnostics(format!(
            "only {n} samples in the fit window [{}, {}]; need at least 8",
            window[0], window[1]
        )));
    }
    let nf = n as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let denom = nf * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(Error::Diagnostics("degenerate fit window".into()));
    }
    let exponent = (nf * sxy - sx * sy) / denom;
    let intercept = (sy - exponent * sx) / nf;
    let mut ss = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let r = y - (exponent * x + intercept);
        ss += r * r;
    }
    Ok(RateFit {
        exponent,
        intercept,
        residual: (ss / nf).sqrt(),
        window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn exact_power_law_recovered() {
        let times = grid_times(0.0, 300.0, 200);
        let values: Vec<f64> = times.iter().map(|t| (1.0 + t).powf(-0.75)).collect();
        let fit = fit_decay_exponent(&times, &values, [5.0, 300.0]).unwrap();
        assert!((fit.exponent + 0.75).abs() < 1e-6);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn perturbed_power_law_within_tolerance() {
        let times = grid_times(0.0, 220.0, 600);
        let values: Vec<f64> = times
            .iter()
            .map(|t| 2.0 * (1.0 + t).powf(-1.25) * (1.0 + 0.01 * t.sin()))
            .collect();
        let fit = fit_decay_exponent(&times, &values, [10.0, 200.0]).unwrap();
        assert!((fit.exponent + 1.25).abs() < 0.02, "exponent {}", fit.exponent);
    }

    #[test]
    fn constant_series_has_zero_exponent() {
        let times = grid_times(0.0, 100.0, 64);
        let values = vec![3.5; 64];
        let fit = fit_decay_exponent(&times, &values, [0.0, 100.0]).unwrap();
        assert!(fit.exponent.abs() < 1e-6);
    }

    #[test]
    fn rejects_sparse_windows_and_bad_values() {
        let times = grid_times(0.0, 100.0, 64);
        let values = vec![1.0; 64];
        assert!(fit_decay_exponent(&times, &values, [99.0, 100.0]).is_err());
        let mut bad = values.clone();
        bad[32] = 0.0;
        assert!(fit_decay_exponent(&times, &bad, [0.0, 100.0]).is_err());
    }
}
