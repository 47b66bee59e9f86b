//! Power-law rate fitting on log-log axes.

use serde::Serialize;

use crate::error::{Error, Result};

/// Minimum number of curve points inside a fit window.
pub const MIN_FIT_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn least_squares_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!("{} abscissae for {} ordinates", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData(format!("{} points, need at least 2", xs.len())));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - slope * x - intercept).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    Ok(LineFit { slope, intercept, r_squared })
}

/// Fits `ln(value) ≈ slope·ln(k) + intercept` over `k ∈ [lo, hi]`.
pub fn fit_rate(curve: &[(f64, f64)], window: (f64, f64)) -> Result<LineFit> {
    let (lo, hi) = window;
    let inside: Vec<(f64, f64)> = curve.iter().copied().filter(|&(k, _)| k >= lo && k <= hi).collect();
    if inside.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} points in window [{lo}, {hi}], need at least {MIN_FIT_POINTS}",
            inside.len()
        )));
    }
    if let Some(&(k, value)) = inside.iter().find(|&&(k, v)| !(v > 0.0) || !(k > 0.0)) {
        return Err(Error::NonPositive { k, value });
    }
    let xs: Vec<f64> = inside.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = inside.iter().map(|p| p.1.ln()).collect();
    least_squares_line(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        (0..=50).map(|i| 10f64.powf(3.0 + i as f64 / 25.0)).collect()
    }

    #[test]
    fn exact_power_laws() {
        let c: Vec<_> = grid().into_iter().map(|k| (k, 5.0 * k.powf(-2.0 / 3.0))).collect();
        let f = fit_rate(&c, (1e3, 1e5)).unwrap();
        assert!((f.slope + 2.0 / 3.0).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let c: Vec<_> = grid().into_iter().map(|k| (k, 3.0 / k)).collect();
        assert!((fit_rate(&c, (1e3, 1e5)).unwrap().slope + 1.0).abs() < 1e-9);
    }

    #[test]
    fn window_needs_eight_points() {
        let c: Vec<_> = grid().into_iter().take(7).map(|k| (k, 1.0 / k)).collect();
        assert!(matches!(fit_rate(&c, (1.0, 1e9)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn zero_value_rejected() {
        let mut c: Vec<_> = grid().into_iter().map(|k| (k, 1.0 / k)).collect();
        c[10].1 = 0.0;
        assert!(matches!(fit_rate(&c, (1e3, 1e5)), Err(Error::NonPositive { .. })));
    }
}
