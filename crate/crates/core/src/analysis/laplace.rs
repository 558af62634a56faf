//! Laplace-transform machinery for the one-step increment of the
//! equivalent position.
//!
//! With `E` a standard exponential,
//!
//! * `I(t) = E[exp(-t e^{aE})] = ∫_0^∞ e^{-x - t e^{ax}} dx`,
//! * `J_N(λ) = Γ(λ)^{-1} ∫_0^∞ I(x/N)^N x^{λ-1} dx`,
//! * `Λ(λ) = E[e^{-λζ}] = J_N(λ) Γ(N + aλ + 1) / (N^λ Γ(N + 1))`,
//! * `E[ζ] = log N - a ψ(N + 1) - J_N'(0)`.
//!
//! `I` is always carried together with its complement `1 - I`, computed
//! by its own quadrature, so that `I(x/N)^N - e^{-x}` keeps full relative
//! precision for small `x/N`.

use super::quadrature::{integrate_pieces, QuadratureSpec};
use super::special::{digamma, ln_gamma, ln_gamma_ratio};
use crate::error::{Error, Result};

/// Below this point the `J` integrands use their linearization at zero.
///
/// For `a > 1/2` the next term of `1 - I(t)` is of order `t^{1/a}`, not
/// `t^2`, so the cutoff has to be small for the dropped piece to vanish.
pub const LINEARIZATION_CUTOFF: f64 = 1e-12;

/// Inner quadratures run to a tighter relative tolerance than the outer
/// integrals they feed, floored above the roundoff limit of the GK21
/// error estimate.
fn inner_spec(outer: &QuadratureSpec) -> QuadratureSpec {
    QuadratureSpec {
        abs_tol: 1e-300,
        rel_tol: (outer.rel_tol * 1e-2).max(1e-13),
        max_subdivisions: outer.max_subdivisions,
    }
}

/// `I(t)` together with `1 - I(t)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaplaceFactor {
    pub value: f64,
    pub complement: f64,
}

impl LaplaceFactor {
    /// `log I(t)`, accurate when `I` is close to 1.
    pub fn ln(&self) -> f64 {
        if self.complement < 0.5 {
            (-self.complement).ln_1p()
        } else {
            self.value.ln()
        }
    }
}

fn check_pulling(a: f64) -> Result<()> {
    if !(a >= 0.0) || !a.is_finite() {
        return Err(Error::invalid("a", format!("must be finite and >= 0, got {a}")));
    }
    Ok(())
}

fn check_subcritical(a: f64) -> Result<()> {
    if !(0.0..1.0).contains(&a) {
        return Err(Error::invalid("a", format!("must lie in [0, 1), got {a}")));
    }
    Ok(())
}

fn check_population(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("N", "population size must be >= 1"));
    }
    Ok(())
}

/// Evaluates `I(t)` and `1 - I(t)` for any `a >= 0`.
///
/// The integrands are split where `t e^{ax} = 1`; past the point where
/// `t (e^{ax} - 1) >= 40` the remaining mass of `I` is below `e^{-40}` of
/// its value and the complement's tail is `e^{-x}` integrated exactly.
pub fn laplace_factor(t: f64, a: f64, spec: &QuadratureSpec) -> Result<LaplaceFactor> {
    check_pulling(a)?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::invalid("t", format!("must be finite and >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(LaplaceFactor {
            value: 1.0,
            complement: 0.0,
        });
    }
    if a == 0.0 {
        return Ok(LaplaceFactor {
            value: (-t).exp(),
            complement: -(-t).exp_m1(),
        });
    }
    let inner = inner_spec(spec);
    let knee = if t < 1.0 { (1.0 / t).ln() / a } else { 0.0 };
    let end = (1.0 + 40.0 / t).ln() / a;
    let end = end.max(knee);

    let complement_integrand = |x: f64| -(-x).exp() * (-t * (a * x).exp()).exp_m1();
    let head = integrate_pieces(complement_integrand, &[0.0, knee, end], &inner)?;
    let complement = head.value + (-end).exp();

    let value = if complement < 0.5 {
        1.0 - complement
    } else {
        let direct = |x: f64| (-x - t * (a * x).exp()).exp();
        integrate_pieces(direct, &[0.0, knee, end], &inner)?.value
    };
    Ok(LaplaceFactor { value, complement })
}

/// `I(t) = E[exp(-t e^{aE})]`.
#[allow(non_snake_case)]
pub fn compute_I(t: f64, a: f64) -> Result<f64> {
    compute_i_with(t, a, &QuadratureSpec::default())
}

pub fn compute_i_with(t: f64, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    Ok(laplace_factor(t, a, spec)?.value)
}

/// `I(x/N)^N - e^{-x}`, evaluated as `e^{-x} expm1(N log I(x/N) + x)`.
fn power_gap(x: f64, n: usize, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    let f = laplace_factor(x / n as f64, a, spec)?;
    let log_pow = n as f64 * f.ln();
    Ok((-x).exp() * (log_pow + x).exp_m1())
}

/// `I(x/N)^N`, exposed for the pointwise limit `e^{-x/(1-a)}`.
pub fn scaled_power(x: f64, n: usize, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    check_population(n)?;
    let f = laplace_factor(x / n as f64, a, spec)?;
    Ok((n as f64 * f.ln()).exp())
}

/// Truncation point for `∫ x^{λ-1} g(x)` where `|g| <= 2 e^{-x}`.
fn upper_cutoff(lambda: f64, abs_tol: f64) -> f64 {
    let target = (abs_tol * 1e-3).max(1e-300).ln();
    let mut x: f64 = 30.0;
    // x^{λ-1} e^{-x} below target
    while (lambda - 1.0) * x.ln() - x > target {
        x += 5.0;
    }
    x
}

/// `∫_0^∞ x^{λ-1} (I(x/N)^N - e^{-x}) dx` for `λ > -1`, split at
/// `LINEARIZATION_CUTOFF`, `10^{-6}` and `x = 1`.
fn gap_moment(lambda: f64, n: usize, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    let slope = -a / (1.0 - a);
    let eps = LINEARIZATION_CUTOFF;
    // x^{λ-1} · slope·x integrated on [0, eps]
    let near_zero = slope * eps.powf(lambda + 1.0) / (lambda + 1.0);
    let upper = upper_cutoff(lambda, spec.abs_tol);

    let mut failure = None;
    let integrand = |x: f64| match power_gap(x, n, a, spec) {
        Ok(g) => x.powf(lambda - 1.0) * g,
        Err(e) => {
            failure.get_or_insert(e);
            f64::NAN
        }
    };
    let body = integrate_pieces(integrand, &[eps, 1e-6, 1.0, upper], spec);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(near_zero + body?.value)
}

/// `J_N'(0) = ∫_0^∞ x^{-1} (I(x/N)^N - e^{-x}) dx`.
pub fn compute_jn_prime0(n: usize, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    check_population(n)?;
    check_subcritical(a)?;
    spec.validate()?;
    if a == 0.0 {
        return Ok(0.0);
    }
    gap_moment(0.0, n, a, spec)
}

/// `J_N(λ)` for `λ > -1`, through `1 + Γ(λ)^{-1} ∫ x^{λ-1} (I(x/N)^N - e^{-x}) dx`.
///
/// The subtracted form equals the defining integral for `λ > 0` and
/// continues it analytically to `λ > -1`, which the central difference
/// at zero needs.
pub fn compute_jn(lambda: f64, n: usize, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    check_population(n)?;
    check_subcritical(a)?;
    spec.validate()?;
    if !(lambda > -1.0) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", format!("must be > -1, got {lambda}")));
    }
    if lambda == 0.0 || a == 0.0 {
        return Ok(1.0);
    }
    // 1/Γ(λ) = λ/Γ(λ+1) stays finite through λ = 0
    Ok(1.0 + lambda * gap_moment(lambda, n, a, spec)? / ln_gamma(lambda + 1.0).exp())
}

/// `Λ(λ) = E[e^{-λζ}]`; defined here for `λ > -1`.
pub fn laplace_xi(lambda: f64, n: usize, a: f64) -> Result<f64> {
    laplace_xi_with(lambda, n, a, &QuadratureSpec::default())
}

pub fn laplace_xi_with(lambda: f64, n: usize, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    Ok(ln_laplace_xi_with(lambda, n, a, spec)?.exp())
}

/// `log Λ(λ)`.
pub fn ln_laplace_xi_with(lambda: f64, n: usize, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    let jn = compute_jn(lambda, n, a, spec)?;
    if lambda == 0.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let gamma_part = ln_gamma_ratio(nf + 1.0, a * lambda);
    Ok(jn.ln() + gamma_part - lambda * nf.ln())
}

/// Exact finite-`N` mean of the increment, `log N - a ψ(N+1) - J_N'(0)`.
pub fn analytic_mean_xi(n: usize, a: f64) -> Result<f64> {
    analytic_mean_xi_with(n, a, &QuadratureSpec::default())
}

pub fn analytic_mean_xi_with(n: usize, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    let jp = compute_jn_prime0(n, a, spec)?;
    let nf = n as f64;
    Ok(nf.ln() - a * digamma(nf + 1.0)? - jp)
}

/// Large-`N` form `(1 - a) log N - log(1 - a)`.
pub fn asymptotic_mean_xi(n: usize, a: f64) -> Result<f64> {
    check_population(n)?;
    check_subcritical(a)?;
    Ok((1.0 - a) * (n as f64).ln() - (1.0 - a).ln())
}

/// `E[e^{2aE} e^{-t e^{aE}}] = ∫_0^∞ e^{(2a-1)x - t e^{ax}} dx` for `t > 0`.
fn second_moment_kernel(t: f64, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    let knee = if t < 1.0 { (1.0 / t).ln() / a } else { 0.0 };
    let end = ((1.0 + 60.0 / t).ln() / a).max(knee);
    let f = |x: f64| ((2.0 * a - 1.0) * x - t * (a * x).exp()).exp();
    Ok(integrate_pieces(f, &[0.0, knee, end], spec)?.value)
}

/// Solves `(N-1) (-log I(t)) = level` for `t` by bisection in `log t`.
fn level_crossing(level: f64, n: usize, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    let weight = (n - 1) as f64;
    let g = |t: f64| -> Result<f64> { Ok(-weight * laplace_factor(t, a, spec)?.ln() - level) };
    let (mut lo, mut hi) = (-60.0f64, 10.0f64);
    while g(lo.exp())? > 0.0 {
        lo -= 20.0;
    }
    while g(hi.exp())? < 0.0 {
        hi += 5.0;
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if g(mid.exp())? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One-generation pair-merge probability `c_N = E[Σ θ_i²]` of the
/// stationary weights `θ_i ∝ e^{aE_i}`, by quadrature.
///
/// Uses `S^{-2} = ∫ t e^{-tS} dt` to factor the expectation:
/// `c_N = N ∫_0^∞ t K(t) I(t)^{N-1} dt` with
/// `K(t) = E[e^{2aE} e^{-t e^{aE}}]`, integrated over `log t`.
/// Valid for every `a >= 0`.
pub fn pair_merge_probability(n: usize, a: f64) -> Result<f64> {
    pair_merge_probability_with(n, a, &QuadratureSpec::default())
}

pub fn pair_merge_probability_with(n: usize, a: f64, spec: &QuadratureSpec) -> Result<f64> {
    check_population(n)?;
    check_pulling(a)?;
    spec.validate()?;
    if n == 1 {
        return Ok(1.0);
    }
    if a == 0.0 {
        return Ok(1.0 / n as f64);
    }
    let inner = inner_spec(spec);
    let center = level_crossing(1.0, n, a, &inner)?;
    let top = level_crossing(60.0, n, a, &inner)?;
    let small_t_power = (1.0 / a).min(2.0);
    let bottom = center - 40.0 / small_t_power - 5.0;
    let nf = n as f64;

    let mut failure = None;
    let integrand = |y: f64| {
        let t = y.exp();
        let eval = || -> Result<f64> {
            let k = second_moment_kernel(t, a, &inner)?;
            let f = laplace_factor(t, a, &inner)?;
            Ok(nf * t * t * k * ((nf - 1.0) * f.ln()).exp())
        };
        match eval() {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    };
    let r = integrate_pieces(integrand, &[bottom, center, top + 2.0], spec);
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(r?.value)
}
