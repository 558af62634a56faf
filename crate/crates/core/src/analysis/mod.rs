//! Closed-form front statistics, coalescent timescales, and the
//! statistical tools used to compare simulations against them.

pub mod fit;
pub mod ks;
pub mod laplace;
pub mod quadrature;
pub mod special;

pub use fit::{fit_power_law, linear_fit, FitResult};
pub use ks::{kolmogorov_survival, ks_two_sample, KsResult};
pub use laplace::{
    analytic_mean_xi, asymptotic_mean_xi, compute_I, compute_jn, compute_jn_prime0, laplace_xi,
    pair_merge_probability,
};
pub use quadrature::{integrate, QuadResult, QuadratureSpec};
pub use special::{digamma, EULER_GAMMA};

use crate::error::{Error, Result};

/// Named constants used by the front formulas.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticConstants {
    pub euler_gamma: f64,
}

impl Default for AnalyticConstants {
    fn default() -> Self {
        Self {
            euler_gamma: EULER_GAMMA,
        }
    }
}

/// Stationary large-`N` limits of the extremal positions for `0 <= a < 1`:
/// `(lim E[M] - log N, lim E[m]) = (γ - log(1-a)/(1-a), -log(1-a)/(1-a))`.
pub fn front_position_limits(a: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&a) {
        return Err(Error::invalid(
            "a",
            format!("front limits diverge unless 0 <= a < 1, got {a}"),
        ));
    }
    let min_limit = -(1.0 - a).ln() / (1.0 - a);
    Ok((EULER_GAMMA + min_limit, min_limit))
}

/// Number of generations per unit of coalescent time.
///
/// `N` for `a < 1/2`, `N / log N` at `a = 1/2`, `N^{(1-a)/a}` for
/// `1/2 < a < 1`, `log N` at `a = 1`, and `1` for `a > 1`.
pub fn theoretical_timescale(n: usize, a: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("N", "timescale needs N >= 2"));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::invalid("a", format!("must be finite and > 0, got {a}")));
    }
    let nf = n as f64;
    Ok(if a < 0.5 {
        nf
    } else if a == 0.5 {
        nf / nf.ln()
    } else if a < 1.0 {
        nf.powf((1.0 - a) / a)
    } else if a == 1.0 {
        nf.ln()
    } else {
        1.0
    })
}

/// Same as [`theoretical_timescale`] with a real-valued `N >= 2`.
pub fn theoretical_timescale_real(n: f64, a: f64) -> Result<f64> {
    if !(n >= 2.0) {
        return Err(Error::invalid("N", "timescale needs N >= 2"));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::invalid("a", format!("must be finite and > 0, got {a}")));
    }
    Ok(if a < 0.5 {
        n
    } else if a == 0.5 {
        n / n.ln()
    } else if a < 1.0 {
        n.powf((1.0 - a) / a)
    } else if a == 1.0 {
        n.ln()
    } else {
        1.0
    })
}
