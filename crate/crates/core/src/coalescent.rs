//! Block-counting chains of Kingman and Beta Λ-coalescents.

use rand::Rng;

use crate::analysis::special::{ln_beta, ln_gamma};
use crate::error::{Error, Result};
use crate::rng::sample_exponential;

/// Merger measure of a Λ-coalescent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LambdaMeasure {
    /// Pairwise mergers only, each pair at rate 1.
    Kingman,
    /// `Λ = Beta(alpha_prime, beta_prime)`.
    Beta { alpha_prime: f64, beta_prime: f64 },
}

impl LambdaMeasure {
    pub fn beta(alpha_prime: f64, beta_prime: f64) -> Result<Self> {
        for (name, v) in [("alpha_prime", alpha_prime), ("beta_prime", beta_prime)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(Self::Beta {
            alpha_prime,
            beta_prime,
        })
    }

    /// Beta(1, 1).
    pub fn bolthausen_sznitman() -> Self {
        Self::Beta {
            alpha_prime: 1.0,
            beta_prime: 1.0,
        }
    }

    /// Limit coalescent of the exponential model with parameter `a`.
    ///
    /// Kingman for `a <= 1/2`, Beta(2 - 1/a, 1/a) for `1/2 < a <= 1`.
    /// Above 1 the genealogy does not need rescaling and no continuous
    /// limit exists.
    pub fn from_pulling(a: f64) -> Result<Self> {
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::invalid("a", format!("must be finite and >= 0, got {a}")));
        }
        if a <= 0.5 {
            Ok(Self::Kingman)
        } else if a <= 1.0 {
            Self::beta(2.0 - 1.0 / a, 1.0 / a)
        } else {
            Err(Error::invalid("a", format!("no Λ-coalescent limit for a > 1, got {a}")))
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Kingman => Ok(()),
            Self::Beta {
                alpha_prime,
                beta_prime,
            } => Self::beta(alpha_prime, beta_prime).map(|_| ()),
        }
    }
}

fn check_bk(b: usize, k: usize) -> Result<()> {
    if k < 2 || k > b {
        return Err(Error::invalid("k", format!("need 2 <= k <= b, got k={k}, b={b}")));
    }
    Ok(())
}

/// Rate at which one specific group of `k` out of `b` blocks merges.
pub fn lambda_rate(measure: &LambdaMeasure, b: usize, k: usize) -> Result<f64> {
    check_bk(b, k)?;
    measure.validate()?;
    Ok(ln_lambda_rate(measure, b, k).exp())
}

fn ln_lambda_rate(measure: &LambdaMeasure, b: usize, k: usize) -> f64 {
    match *measure {
        LambdaMeasure::Kingman => {
            if k == 2 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        LambdaMeasure::Beta {
            alpha_prime,
            beta_prime,
        } => {
            ln_beta(alpha_prime + (k - 2) as f64, beta_prime + (b - k) as f64)
                - ln_beta(alpha_prime, beta_prime)
        }
    }
}

fn ln_binomial(b: usize, k: usize) -> f64 {
    ln_gamma(b as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((b - k) as f64 + 1.0)
}

/// `C(b, k) λ_{b,k}` for `k = 2..=b`; entry `i` holds `k = i + 2`.
pub fn total_merge_rates(measure: &LambdaMeasure, b: usize) -> Result<Vec<f64>> {
    if b < 2 {
        return Err(Error::invalid("b", format!("need b >= 2, got {b}")));
    }
    measure.validate()?;
    if let LambdaMeasure::Kingman = measure {
        let mut rates = vec![0.0; b - 1];
        rates[0] = (b * (b - 1) / 2) as f64;
        return Ok(rates);
    }
    Ok((2..=b)
        .map(|k| (ln_binomial(b, k) + ln_lambda_rate(measure, b, k)).exp())
        .collect())
}

/// Jump times of the block count; starts with `(0, n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockCountPath {
    pub events: Vec<(f64, usize)>,
    pub horizon: f64,
}

impl BlockCountPath {
    /// Block count at time `t <= horizon`.
    pub fn block_count_at(&self, t: f64) -> usize {
        let idx = self.events.partition_point(|&(s, _)| s <= t);
        self.events[idx.saturating_sub(1)].1
    }

    pub fn final_count(&self) -> usize {
        self.events.last().map_or(0, |e| e.1)
    }
}

/// Cached jump tables for repeated simulation from at most `n` blocks.
#[derive(Clone, Debug)]
pub struct BlockCountingChain {
    max_blocks: usize,
    // per b: total rate and cumulative jump weights over k = 2..=b
    total: Vec<f64>,
    cumulative: Vec<Vec<f64>>,
}

impl BlockCountingChain {
    pub fn new(measure: &LambdaMeasure, max_blocks: usize) -> Result<Self> {
        if max_blocks == 0 {
            return Err(Error::invalid("n", "need n >= 1"));
        }
        measure.validate()?;
        let mut total = vec![0.0; max_blocks + 1];
        let mut cumulative = vec![Vec::new(); max_blocks + 1];
        for b in 2..=max_blocks {
            let rates = total_merge_rates(measure, b)?;
            let mut acc = 0.0;
            cumulative[b] = rates
                .iter()
                .map(|r| {
                    acc += r;
                    acc
                })
                .collect();
            total[b] = acc;
        }
        Ok(Self {
            max_blocks,
            total,
            cumulative,
        })
    }

    /// Total jump rate out of `b` blocks.
    pub fn total_rate(&self, b: usize) -> f64 {
        self.total[b]
    }

    pub fn simulate<R: Rng + ?Sized>(&self, n: usize, horizon: f64, rng: &mut R) -> Result<BlockCountPath> {
        if n == 0 || n > self.max_blocks {
            return Err(Error::invalid("n", format!("need 1 <= n <= {}, got {n}", self.max_blocks)));
        }
        if !(horizon > 0.0) {
            return Err(Error::invalid("horizon", format!("must be > 0, got {horizon}")));
        }
        let mut events = vec![(0.0, n)];
        let mut t = 0.0;
        let mut b = n;
        while b > 1 {
            t += sample_exponential(rng) / self.total[b];
            if t > horizon {
                break;
            }
            let cum = &self.cumulative[b];
            let u = rng.random::<f64>() * self.total[b];
            let idx = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
            let k = idx + 2;
            b = b - k + 1;
            events.push((t, b));
        }
        Ok(BlockCountPath { events, horizon })
    }

    /// Law of the block count at time `t` from `n` blocks, indexed by count
    /// (entry 0 is unused).
    ///
    /// Computed by uniformization of the pure-death generator.
    pub fn distribution_at(&self, n: usize, t: f64) -> Result<Vec<f64>> {
        if n == 0 || n > self.max_blocks {
            return Err(Error::invalid("n", format!("need 1 <= n <= {}, got {n}", self.max_blocks)));
        }
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::invalid("t", format!("must be finite and >= 0, got {t}")));
        }
        let rate = (2..=n).map(|b| self.total[b]).fold(0.0, f64::max);
        let mut current = vec![0.0; n + 1];
        current[n] = 1.0;
        if rate == 0.0 || t == 0.0 {
            return Ok(current);
        }
        let lt = rate * t;
        let mut out = vec![0.0; n + 1];
        // Poisson(lt) weights, computed in log space to survive large lt
        let mut mass = 0.0;
        let mut m = 0usize;
        loop {
            let w = (m as f64 * lt.ln() - lt - ln_gamma(m as f64 + 1.0)).exp();
            for (o, c) in out.iter_mut().zip(&current) {
                *o += w * c;
            }
            mass += w;
            if (m as f64 > lt && 1.0 - mass < 1e-15) || m > 100_000 {
                break;
            }
            // one step of the uniformized chain
            let mut next = vec![0.0; n + 1];
            for b in 1..=n {
                let p = current[b];
                if p == 0.0 {
                    continue;
                }
                if b == 1 {
                    next[1] += p;
                    continue;
                }
                let mut left = p;
                let mut prev = 0.0;
                for (i, &c) in self.cumulative[b].iter().enumerate() {
                    let jump = p * (c - prev) / rate;
                    prev = c;
                    next[b - (i + 2) + 1] += jump;
                    left -= jump;
                }
                next[b] += left;
            }
            current = next;
            m += 1;
        }
        Ok(out)
    }
}

/// One path of the block-counting chain from `n` blocks up to `horizon`.
pub fn simulate_block_counting<R: Rng + ?Sized>(
    measure: &LambdaMeasure,
    n: usize,
    horizon: f64,
    rng: &mut R,
) -> Result<BlockCountPath> {
    BlockCountingChain::new(measure, n)?.simulate(n, horizon, rng)
}

/// Exact law of the block count at time `t`, indexed by count.
pub fn block_count_distribution(measure: &LambdaMeasure, n: usize, t: f64) -> Result<Vec<f64>> {
    BlockCountingChain::new(measure, n)?.distribution_at(n, t)
}

/// Mean of a law indexed by block count.
pub fn distribution_mean(law: &[f64]) -> f64 {
    law.iter().enumerate().map(|(b, p)| b as f64 * p).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::quadrature::{integrate, QuadratureSpec};
    use crate::rng::RngStream;
    use crate::stats::mean_and_se;

    fn beta_from(a: f64) -> LambdaMeasure {
        LambdaMeasure::from_pulling(a).unwrap()
    }

    #[test]
    fn measure_routing() {
        assert_eq!(LambdaMeasure::from_pulling(0.25).unwrap(), LambdaMeasure::Kingman);
        assert_eq!(LambdaMeasure::from_pulling(0.5).unwrap(), LambdaMeasure::Kingman);
        assert_eq!(LambdaMeasure::from_pulling(1.0).unwrap(), LambdaMeasure::bolthausen_sznitman());
        match LambdaMeasure::from_pulling(0.75).unwrap() {
            LambdaMeasure::Beta { alpha_prime, beta_prime } => {
                assert!((alpha_prime - 2.0 / 3.0).abs() < 1e-15);
                assert!((beta_prime - 4.0 / 3.0).abs() < 1e-15);
            }
            m => panic!("{m:?}"),
        }
        assert!(LambdaMeasure::from_pulling(1.5).is_err());
        assert!(LambdaMeasure::beta(0.0, 1.0).is_err());
    }

    #[test]
    fn rate_examples() {
        let bs = LambdaMeasure::bolthausen_sznitman();
        assert!((lambda_rate(&bs, 2, 2).unwrap() - 1.0).abs() < 1e-14);
        // ∫ (1-x) dx
        assert!((lambda_rate(&bs, 3, 2).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(lambda_rate(&LambdaMeasure::Kingman, 5, 2).unwrap(), 1.0);
        assert_eq!(lambda_rate(&LambdaMeasure::Kingman, 5, 3).unwrap(), 0.0);
        assert!(lambda_rate(&bs, 3, 1).is_err());
        assert!(lambda_rate(&bs, 3, 4).is_err());
    }

    #[test]
    fn total_rate_examples() {
        assert_eq!(total_merge_rates(&LambdaMeasure::Kingman, 4).unwrap(), vec![6.0, 0.0, 0.0]);
        let r = total_merge_rates(&LambdaMeasure::bolthausen_sznitman(), 3).unwrap();
        assert!((r[0] - 1.5).abs() < 1e-13 && (r[1] - 0.5).abs() < 1e-13);
        assert!(total_merge_rates(&LambdaMeasure::Kingman, 1).is_err());
    }

    #[test]
    fn rates_match_beta_integral() {
        // ∫ x^{k-2} (1-x)^{b-k} Beta(α,β)(dx) by quadrature
        let spec = QuadratureSpec::default();
        for a in [0.6, 0.75, 0.9] {
            let m = beta_from(a);
            let LambdaMeasure::Beta { alpha_prime: al, beta_prime: be } = m else { unreachable!() };
            let norm = ln_beta(al, be).exp();
            for (b, k) in [(2, 2), (5, 3), (7, 7), (6, 2)] {
                // substitute x = s^{1/al} to remove the endpoint singularity
                let f = |s: f64| {
                    if s <= 0.0 {
                        return 0.0;
                    }
                    let x = s.powf(1.0 / al);
                    x.powi(k as i32 - 2) * (1.0 - x).powf(be - 1.0 + (b - k) as f64) / al
                };
                let direct = integrate(f, 0.0, 1.0, &spec).unwrap().value / norm;
                let r = lambda_rate(&m, b, k).unwrap();
                assert!((r - direct).abs() < 1e-8 * direct.max(1e-3), "a={a} b={b} k={k}: {r} vs {direct}");
            }
        }
    }

    #[test]
    fn consistency_recursion() {
        for a in [0.6, 0.75, 0.9, 1.0] {
            let m = beta_from(a);
            for b in 2..=20 {
                for k in 2..=b {
                    let lhs = lambda_rate(&m, b, k).unwrap();
                    let rhs = lambda_rate(&m, b + 1, k).unwrap() + lambda_rate(&m, b + 1, k + 1).unwrap();
                    assert!((lhs - rhs).abs() < 1e-12, "a={a} b={b} k={k}");
                }
            }
        }
    }

    #[test]
    fn bolthausen_sznitman_closed_form() {
        let bs = LambdaMeasure::bolthausen_sznitman();
        let fact = |n: usize| (1..=n).map(|i| i as f64).product::<f64>();
        for b in 2..=20 {
            for k in 2..=b {
                let closed = fact(k - 2) * fact(b - k) / fact(b - 1);
                assert!((lambda_rate(&bs, b, k).unwrap() - closed).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trivial_paths() {
        let mut rng = RngStream::new(1, 0);
        let p = simulate_block_counting(&LambdaMeasure::Kingman, 1, 5.0, &mut rng).unwrap();
        assert_eq!(p.events, vec![(0.0, 1)]);
        assert!(simulate_block_counting(&LambdaMeasure::Kingman, 0, 5.0, &mut rng).is_err());
        assert!(simulate_block_counting(&LambdaMeasure::Kingman, 3, 0.0, &mut rng).is_err());
    }

    #[test]
    fn kingman_pair_absorption_mean() {
        let chain = BlockCountingChain::new(&LambdaMeasure::Kingman, 2).unwrap();
        let mut rng = RngStream::new(2, 0);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| chain.simulate(2, 1e9, &mut rng).unwrap().events[1].0)
            .collect();
        let (m, se) = mean_and_se(&xs);
        assert!((m - 1.0).abs() < 3.0 * se, "{m}");
    }

    #[test]
    fn paths_strictly_decrease() {
        let mut rng = RngStream::new(3, 0);
        for a in [0.3, 0.7, 1.0] {
            let chain = BlockCountingChain::new(&beta_from(a), 30).unwrap();
            for _ in 0..200 {
                let p = chain.simulate(30, 10.0, &mut rng).unwrap();
                assert_eq!(p.events[0], (0.0, 30));
                for w in p.events.windows(2) {
                    assert!(w[1].0 > w[0].0 && w[1].0 <= 10.0);
                    assert!(w[1].1 < w[0].1 && w[1].1 >= 1);
                }
            }
        }
    }

    /// Competing clocks, one per merger size, with rates from numerical
    /// integration of the uniform density.
    fn oracle_bs_count_at(n: usize, t_end: f64, rng: &mut RngStream) -> usize {
        let spec = QuadratureSpec::default();
        let mut b = n;
        let mut t = 0.0;
        while b > 1 {
            let mut best = (f64::INFINITY, 0);
            for k in 2..=b {
                let lam = integrate(|x| x.powi(k as i32 - 2) * (1.0 - x).powi((b - k) as i32), 0.0, 1.0, &spec)
                    .unwrap()
                    .value;
                let binom = (0..k).fold(1.0, |acc, i| acc * (b - i) as f64 / (i + 1) as f64);
                let clock = -(1.0 - rng.random::<f64>()).ln() / (binom * lam);
                if clock < best.0 {
                    best = (clock, k);
                }
            }
            if t + best.0 > t_end {
                break;
            }
            t += best.0;
            b -= best.1 - 1;
        }
        b
    }

    #[test]
    fn bolthausen_sznitman_matches_oracle() {
        let chain = BlockCountingChain::new(&LambdaMeasure::bolthausen_sznitman(), 10).unwrap();
        let mut rng = RngStream::new(4, 0);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| chain.simulate(10, 1.0, &mut rng).unwrap().block_count_at(1.0) as f64)
            .collect();
        let mut orng = RngStream::new(5, 0);
        let ys: Vec<f64> = (0..10_000).map(|_| oracle_bs_count_at(10, 1.0, &mut orng) as f64).collect();
        let (mx, sx) = mean_and_se(&xs);
        let (my, sy) = mean_and_se(&ys);
        assert!((mx - my).abs() < 3.0 * (sx * sx + sy * sy).sqrt(), "{mx} vs {my}");
    }

    #[test]
    fn kingman_two_block_law() {
        let law = block_count_distribution(&LambdaMeasure::Kingman, 2, 0.7).unwrap();
        assert!((law[2] - (-0.7f64).exp()).abs() < 1e-13);
        assert!((law[1] - (1.0 - (-0.7f64).exp())).abs() < 1e-13);
        // three blocks: 3 -> 2 at rate 3, 2 -> 1 at rate 1
        let t: f64 = 0.4;
        let law = block_count_distribution(&LambdaMeasure::Kingman, 3, t).unwrap();
        let p3 = (-3.0 * t).exp();
        let p2 = 1.5 * ((-t).exp() - (-3.0 * t).exp());
        assert!((law[3] - p3).abs() < 1e-13);
        assert!((law[2] - p2).abs() < 1e-13);
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn exact_law_matches_simulation() {
        let m = beta_from(0.75);
        let chain = BlockCountingChain::new(&m, 8).unwrap();
        let law = chain.distribution_at(8, 0.5).unwrap();
        let mut rng = RngStream::new(6, 0);
        let draws = 40_000;
        let mut counts = [0usize; 9];
        for _ in 0..draws {
            counts[chain.simulate(8, 0.5, &mut rng).unwrap().block_count_at(0.5)] += 1;
        }
        for b in 1..=8 {
            let p = law[b];
            let p_hat = counts[b] as f64 / draws as f64;
            let se = (p * (1.0 - p) / draws as f64).sqrt().max(1e-4);
            assert!((p_hat - p).abs() < 4.0 * se, "b={b}: {p_hat} vs {p}");
        }
    }
}
