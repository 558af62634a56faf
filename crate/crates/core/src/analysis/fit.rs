//! Least-squares line fits, in particular log-log power-law fits.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination, clamped to `[0, 1]`.
    pub r_squared: f64,
    /// Residual standard error with `n - 2` degrees of freedom.
    pub residual_se: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::invalid("points", "x and y lengths differ"));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::invalid("points", format!("need >= 3 points, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("points", "non-finite coordinate"));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("points", "abscissae must not all coincide"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        residual_se: (sse / (nf - 2.0)).sqrt(),
    })
}

/// Fits `log(value) = intercept + slope · log(N)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::invalid(
            "points",
            format!("need >= 3 points, got {}", points.len()),
        ));
    }
    if let Some(&(n, v)) = points.iter().find(|(n, v)| !(*n > 0.0) || !(*v > 0.0)) {
        return Err(Error::invalid(
            "points",
            format!("N and value must be positive, got ({n}, {v})"),
        ));
    }
    let mut ns: Vec<f64> = points.iter().map(|p| p.0).collect();
    ns.sort_by(f64::total_cmp);
    if ns.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("points", "N values must be distinct"));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    linear_fit(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&n: &f64| (n, 3.0 * n.sqrt()))
            .collect();
        let f = fit_power_law(&pts).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_data_has_zero_slope() {
        let pts = [(10.0, 2.0), (20.0, 2.0), (40.0, 2.0)];
        let f = fit_power_law(&pts).unwrap();
        assert!(f.slope.abs() < 1e-12);
    }

    #[test]
    fn noisy_data_slope() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<(f64, f64)> = (0..12)
            .map(|k| {
                let n = 10f64 * 2f64.powi(k);
                let noise = 1.0 + rng.random_range(-0.01..0.01);
                (n, 3.0 * n.sqrt() * noise)
            })
            .collect();
        let f = fit_power_law(&pts).unwrap();
        assert!((f.slope - 0.5).abs() < 0.02, "{}", f.slope);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, -2.0), (3.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (1.0, 2.0), (3.0, 1.0)]).is_err());
    }
}
