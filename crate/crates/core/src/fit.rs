//! Least-squares fits used by order and convergence checks.

use crate::error::{Error, Result};

/// Least-squares slope of `ln y` against `ln x`.
///
/// Needs at least two points with distinct positive `x` and positive `y`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Usage("slope fit: x and y differ in length".into()));
    }
    if x.len() < 2 {
        return Err(Error::Usage("slope fit needs at least two points".into()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Numerical("slope fit needs finite positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::Usage("slope fit needs distinct x values".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn degenerate_fits_are_refused() {
        assert!(loglog_slope(&[1.0], &[1.0]).is_err());
        assert!(loglog_slope(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(loglog_slope(&[1.0, 2.0], &[0.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn power_laws_are_recovered(p in -5.0f64..8.0, c in 0.01f64..100.0) {
            let x = [0.04f64, 0.07, 0.1, 0.2];
            let y: Vec<f64> = x.iter().map(|v| c * v.powf(p)).collect();
            prop_assert!((loglog_slope(&x, &y).unwrap() - p).abs() < 1e-10);
        }
    }
}
