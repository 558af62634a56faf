//! Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `Q_KS(λ) = 2 Σ_{k>=1} (-1)^{k-1} e^{-2 k² λ²}`, the Kolmogorov survival
/// function.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = sign * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs() {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS statistic `sup |F_a - F_b|` and its asymptotic p-value
/// (with the Stephens small-sample correction).
pub fn ks_two_sample(sample_a: &[f64], sample_b: &[f64]) -> Result<KsResult> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::EmptyRequest("ks_two_sample needs two nonempty samples"));
    }
    if sample_a.iter().chain(sample_b).any(|v| v.is_nan()) {
        return Err(Error::invalid("sample", "NaN in sample"));
    }
    let mut xa = sample_a.to_vec();
    let mut xb = sample_b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len(), xb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let x = xa[i].min(xb[j]);
        while i < na && xa[i] <= x {
            i += 1;
        }
        while j < nb && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na as f64 - j as f64 / nb as f64).abs());
    }
    let ne = (na * nb) as f64 / (na + nb) as f64;
    let sq = ne.sqrt();
    let p_value = kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d);
    Ok(KsResult {
        statistic: d,
        p_value,
    })
}
