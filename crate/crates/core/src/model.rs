//! Forward simulation of the (N,a)-exponential model.
//!
//! Given the current positions, the next generation is the `N` rightmost
//! atoms of a Poisson point process with intensity `e^{x_eq - y} dy`, where
//! `x_eq = log Σ e^{a X(j)}` is the equivalent position. Each child picks
//! its parent independently with probability `e^{a X(k)} / e^{x_eq}`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::genealogy::WeightVector;
use crate::rng::{enforce_strict_decrease, fill_top_atoms, sample_exponential, sample_zn};

/// Spacing used to break ties in initial conditions.
pub const TIE_BREAK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    n: usize,
    a: f64,
}

impl ModelParams {
    /// `n >= 1`, `a >= 0` and finite. `a = 0` is the neutral limit.
    pub fn new(n: usize, a: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("N", "population size must be >= 1"));
        }
        if !(a >= 0.0) || !a.is_finite() {
            return Err(Error::invalid("a", format!("must be finite and >= 0, got {a}")));
        }
        Ok(Self { n, a })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> f64 {
        self.a
    }
}

/// `log Σ_j e^{a x_j}`, shifted by the largest term.
pub fn equivalent_position(positions: &[f64], a: f64) -> Result<f64> {
    if positions.is_empty() {
        return Err(Error::EmptyRequest("equivalent_position needs positions"));
    }
    if !a.is_finite() {
        return Err(Error::invalid("a", "must be finite"));
    }
    Ok(log_sum_exp_scaled(positions, a))
}

fn log_sum_exp_scaled(xs: &[f64], a: f64) -> f64 {
    let top = xs
        .iter()
        .map(|&x| a * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = xs.iter().map(|&x| (a * x - top).exp()).sum();
    top + sum.ln()
}

/// Normalized selection probabilities `θ_k = e^{a x_k} / Σ_i e^{a x_i}`.
pub fn selection_weights(positions: &[f64], a: f64) -> Result<WeightVector> {
    let lse = equivalent_position(positions, a)?;
    let weights = positions.iter().map(|&x| (a * x - lse).exp()).collect();
    Ok(WeightVector::from_normalized(weights))
}

/// Ranked positions of one generation plus its equivalent position.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontState {
    positions: Vec<f64>,
    x_eq: f64,
    generation: u64,
}

impl FrontState {
    /// Builds generation 0 from arbitrary positions.
    ///
    /// Positions are sorted in decreasing order; ties are separated by
    /// `TIE_BREAK` (or one ulp where that is too small to register).
    pub fn new(init: &[f64], params: &ModelParams) -> Result<Self> {
        if init.len() != params.n() {
            return Err(Error::invalid(
                "init",
                format!("expected {} positions, got {}", params.n(), init.len()),
            ));
        }
        if init.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("init", "positions must be finite"));
        }
        let mut positions = init.to_vec();
        positions.sort_by(|a, b| b.total_cmp(a));
        for k in 1..positions.len() {
            if positions[k] >= positions[k - 1] {
                let prev = positions[k - 1];
                positions[k] = (prev - TIE_BREAK).min(prev.next_down());
            }
        }
        let x_eq = log_sum_exp_scaled(&positions, params.a());
        Ok(Self {
            positions,
            x_eq,
            generation: 0,
        })
    }

    /// All particles at the origin (the default initial condition).
    pub fn at_origin(params: &ModelParams) -> Self {
        Self::new(&vec![0.0; params.n()], params).expect("finite init of the right length")
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn x_eq(&self) -> f64 {
        self.x_eq
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn max(&self) -> f64 {
        self.positions[0]
    }

    pub fn min(&self) -> f64 {
        self.positions[self.positions.len() - 1]
    }
}

/// One generation's summary.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub generation: u64,
    pub x_eq: f64,
    pub max: f64,
    pub min: f64,
    /// `x_eq(n) - a x_eq(n-1)`.
    pub zeta: f64,
    /// Parent (0-based rank in the previous generation) of each particle;
    /// empty when parent tracking is off.
    pub parent_indices: Vec<usize>,
}

/// Reusable stepping engine; avoids reallocating per generation.
#[derive(Clone, Debug)]
pub struct FrontSimulator {
    params: ModelParams,
    track_parents: bool,
    atoms: Vec<f64>,
    cumulative: Vec<f64>,
}

impl FrontSimulator {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            track_parents: true,
            atoms: Vec::with_capacity(params.n()),
            cumulative: Vec::with_capacity(params.n()),
        }
    }

    /// Skip parent sampling when only front statistics are needed.
    ///
    /// Turning tracking off changes how many variates a step consumes.
    pub fn track_parents(mut self, on: bool) -> Self {
        self.track_parents = on;
        self
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Advances `state` by one generation in place.
    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut FrontState, rng: &mut R) -> StepRecord {
        let n = self.params.n();
        let a = self.params.a();

        let parent_indices = if self.track_parents {
            self.cumulative.clear();
            let top = a * state.positions[0];
            let mut acc = 0.0;
            for &x in &state.positions {
                acc += (a * x - top).exp();
                self.cumulative.push(acc);
            }
            let total = acc;
            (0..n)
                .map(|_| {
                    let u = rng.random::<f64>() * total;
                    self.cumulative.partition_point(|&c| c <= u).min(n - 1)
                })
                .collect()
        } else {
            Vec::new()
        };

        fill_top_atoms(&mut self.atoms, n, rng);
        let old_eq = state.x_eq;
        for (dst, &p) in state.positions.iter_mut().zip(&self.atoms) {
            *dst = old_eq + p;
        }
        enforce_strict_decrease(&mut state.positions);
        state.x_eq = log_sum_exp_scaled(&state.positions, a);
        state.generation += 1;

        StepRecord {
            generation: state.generation,
            x_eq: state.x_eq,
            max: state.max(),
            min: state.min(),
            zeta: state.x_eq - a * old_eq,
            parent_indices,
        }
    }
}

/// Pure one-step update with parent tracking.
pub fn step_front<R: Rng + ?Sized>(
    state: &FrontState,
    params: &ModelParams,
    rng: &mut R,
) -> (FrontState, StepRecord) {
    let mut next = state.clone();
    let record = FrontSimulator::new(*params).step(&mut next, rng);
    (next, record)
}

/// Runs `n_steps` generations from `init`.
pub fn simulate_front<R: Rng + ?Sized>(
    params: &ModelParams,
    init: &[f64],
    n_steps: usize,
    rng: &mut R,
) -> Result<Vec<StepRecord>> {
    if n_steps == 0 {
        return Err(Error::invalid("n_steps", "must be >= 1"));
    }
    let mut state = FrontState::new(init, params)?;
    let mut sim = FrontSimulator::new(*params);
    Ok((0..n_steps).map(|_| sim.step(&mut state, rng)).collect())
}

/// One draw of `ζ = log Σ_{j<=N} e^{a p_j}` from the top atoms.
pub fn sample_zeta<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> f64 {
    let a = params.a();
    if a == 0.0 {
        return (params.n() as f64).ln();
    }
    // e^{a p_k} = Γ_k^{-a}; the largest term is k = 1
    let mut arrival = sample_exponential(rng);
    let first = arrival;
    let mut sum = 1.0;
    for _ in 1..params.n() {
        arrival += sample_exponential(rng);
        sum += (first / arrival).powf(a);
    }
    -a * first.ln() + sum.ln()
}

/// `ζ` through the identity `ζ =_d a Z_N + log Σ_{j<=N} e^{a E_j}`.
pub fn sample_zeta_via_zn<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> f64 {
    let a = params.a();
    let z = sample_zn(params.n(), rng).expect("N >= 1 by construction");
    let scaled: Vec<f64> = (0..params.n()).map(|_| sample_exponential(rng)).collect();
    a * z + log_sum_exp_scaled(&scaled, a)
}

/// Generations of burn-in after which `a^n` has dropped below `e^{-20}`:
/// `ceil(20 / (1 - a))` for `a < 1`.
pub fn default_burn_in(a: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&a) {
        return Err(Error::invalid("a", "burn-in is defined for 0 <= a < 1"));
    }
    Ok((20.0 / (1.0 - a)).ceil() as usize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{analytic_mean_xi, special::EULER_GAMMA};
    use crate::rng::RngStream;
    use crate::stats::mean_and_se;
    use proptest::prelude::*;
    use rand::Rng;

    fn params(n: usize, a: f64) -> ModelParams {
        ModelParams::new(n, a).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0, 0.5).is_err());
        assert!(ModelParams::new(3, -0.1).is_err());
        assert!(ModelParams::new(3, f64::INFINITY).is_err());
        assert!(ModelParams::new(3, 0.0).is_ok());
    }

    #[test]
    fn equivalent_position_examples() {
        assert!((equivalent_position(&[2.5], 0.3).unwrap() - 0.75).abs() < 1e-15);
        let same = equivalent_position(&[1.5; 8], 0.4).unwrap();
        assert!((same - (0.6 + 8f64.ln())).abs() < 1e-14);
        let v = equivalent_position(&[0.0, -(2f64.ln())], 1.0).unwrap();
        assert!((v - 1.5f64.ln()).abs() < 1e-15);
        assert!((v - 0.405_465).abs() < 1e-6);
        assert!(equivalent_position(&[], 1.0).is_err());
        // no overflow at large a·x
        let big = equivalent_position(&[1000.0, 999.0], 2.0).unwrap();
        assert!((big - (2000.0 + (1.0 + (-2f64).exp()).ln())).abs() < 1e-12);
    }

    #[test]
    fn selection_weight_examples() {
        let w = selection_weights(&[3.0; 4], 0.7).unwrap();
        assert!(w.weights().iter().all(|&x| (x - 0.25).abs() < 1e-15));
        let w = selection_weights(&[2f64.ln(), 0.0], 1.0).unwrap();
        assert!((w.weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w.weights()[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(selection_weights(&[], 1.0).is_err());
    }

    #[test]
    fn single_particle_step() {
        let p = params(1, 0.6);
        let state = FrontState::new(&[1.3], &p).unwrap();
        let mut rng = RngStream::new(41, 0);
        let (next, rec) = step_front(&state, &p, &mut rng);
        let p1 = next.positions()[0] - 0.6 * 1.3;
        assert!((rec.zeta - 0.6 * p1).abs() < 1e-12);
        assert_eq!(rec.parent_indices, vec![0]);
    }

    #[test]
    fn uniform_parents_for_equal_positions() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let n = 5;
        let p = params(n, 0.8);
        let state = FrontState::new(&[0.0; 5], &p).unwrap();
        // tie-breaking makes weights differ by ~1e-12 only
        let mut rng = RngStream::new(42, 0);
        let mut counts = vec![0usize; n];
        let mut sim = FrontSimulator::new(p);
        let mut draws = 0usize;
        while draws < 100_000 {
            let mut s = state.clone();
            let rec = sim.step(&mut s, &mut rng);
            for &k in &rec.parent_indices {
                counts[k] += 1;
            }
            draws += n;
        }
        let e = draws as f64 / n as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        let crit = ChiSquared::new((n - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "{chi2} {counts:?}");
    }

    #[test]
    fn mean_zeta_matches_analytic() {
        let p = params(100, 0.5);
        let mut state = FrontState::at_origin(&p);
        let mut sim = FrontSimulator::new(p).track_parents(false);
        let mut rng = RngStream::new(43, 0);
        let zetas: Vec<f64> = (0..100_000).map(|_| sim.step(&mut state, &mut rng).zeta).collect();
        let (m, se) = mean_and_se(&zetas);
        let exact = analytic_mean_xi(100, 0.5).unwrap();
        assert!((m - exact).abs() < 3.0 * se, "{m} vs {exact} (se {se})");
    }

    #[test]
    fn single_atom_zeta_is_scaled_gumbel() {
        let p = params(1, 0.7);
        let mut rng = RngStream::new(44, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_zeta(&p, &mut rng)).collect();
        let (m, se) = mean_and_se(&xs);
        assert!((m - 0.7 * EULER_GAMMA).abs() < 3.0 * se);
    }

    #[test]
    fn zeta_identity_in_law() {
        use crate::analysis::ks_two_sample;
        let p = params(50, 0.75);
        let mut rng = RngStream::new(45, 0);
        let direct: Vec<f64> = (0..10_000).map(|_| sample_zeta(&p, &mut rng)).collect();
        let via: Vec<f64> = (0..10_000).map(|_| sample_zeta_via_zn(&p, &mut rng)).collect();
        let ks = ks_two_sample(&direct, &via).unwrap();
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn neutral_zeta_is_log_n() {
        let p = params(7, 0.0);
        let mut rng = RngStream::new(46, 0);
        assert_eq!(sample_zeta(&p, &mut rng), 7f64.ln());
        let recs = simulate_front(&p, &[3.0, 1.0, 0.0, -2.0, 5.0, 4.0, 9.0], 20, &mut rng).unwrap();
        for r in &recs {
            assert_eq!(r.x_eq, r.zeta);
            assert!((r.x_eq - 7f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn replay_is_identical() {
        let p = params(30, 0.4);
        let init: Vec<f64> = (0..30).map(|k| -(k as f64) * 0.1).collect();
        let a = simulate_front(&p, &init, 50, &mut RngStream::new(7, 2)).unwrap();
        let b = simulate_front(&p, &init, 50, &mut RngStream::new(7, 2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_errors() {
        let p = params(2, 0.5);
        let mut rng = RngStream::new(1, 1);
        assert!(simulate_front(&p, &[0.0, f64::NAN], 3, &mut rng).is_err());
        assert!(simulate_front(&p, &[0.0], 3, &mut rng).is_err());
        assert!(simulate_front(&p, &[0.0, 1.0], 0, &mut rng).is_err());
    }

    #[test]
    fn ties_are_broken() {
        let p = params(4, 0.5);
        let s = FrontState::new(&[0.0; 4], &p).unwrap();
        assert_eq!(s.positions(), &[0.0, -1e-12, -2e-12, -3e-12]);
        let s = FrontState::new(&[1e8, 1e8], &params(2, 0.5)).unwrap();
        assert!(s.positions()[1] < s.positions()[0]);
    }

    #[test]
    fn burn_in_default() {
        assert_eq!(default_burn_in(0.5).unwrap(), 40);
        assert_eq!(default_burn_in(0.75).unwrap(), 80);
        assert!(default_burn_in(1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn step_invariants(seed in any::<u64>(), n in 1usize..60, a in 0.0f64..2.0) {
            let p = params(n, a);
            let init: Vec<f64> = (0..n).map(|k| (k as f64 * 0.37).sin() * 3.0).collect();
            let mut state = FrontState::new(&init, &p).unwrap();
            let mut sim = FrontSimulator::new(p);
            let mut rng = RngStream::new(seed, 0);
            let mut probe = rng.clone();
            for _ in 0..5 {
                let old_eq = state.x_eq();
                let rec = sim.step(&mut state, &mut rng);
                // replay the same draws to recover the atoms
                for _ in 0..n { let _: f64 = probe.random(); }
                let atoms = crate::rng::sample_top_atoms(n, &mut probe).unwrap();
                prop_assert!(state.positions().windows(2).all(|w| w[0] > w[1]));
                let lse = equivalent_position(state.positions(), a).unwrap();
                prop_assert!((lse - rec.x_eq).abs() <= 1e-10 * lse.abs().max(1.0));
                prop_assert!((rec.x_eq - a * old_eq - rec.zeta).abs() <= 1e-10 * rec.x_eq.abs().max(1.0));
                prop_assert!((rec.max - (old_eq + atoms.first())).abs() <= 1e-12 * old_eq.abs().max(1.0));
                prop_assert!((rec.min - (old_eq + atoms.last())).abs() <= 1e-12 * old_eq.abs().max(1.0));
                prop_assert!(rec.parent_indices.iter().all(|&k| k < n));
            }
        }

        #[test]
        fn constant_shift_contracts_geometrically(seed in any::<u64>(), c in -5.0f64..5.0) {
            let p = params(12, 0.6);
            let init: Vec<f64> = (0..12).map(|k| -(k as f64) * 0.25).collect();
            let shifted: Vec<f64> = init.iter().map(|x| x + c).collect();
            let s0 = FrontState::new(&init, &p).unwrap();
            let s1 = FrontState::new(&shifted, &p).unwrap();
            prop_assert!((s1.x_eq() - s0.x_eq() - 0.6 * c).abs() < 1e-9);
            let a = simulate_front(&p, &init, 10, &mut RngStream::new(seed, 0)).unwrap();
            let b = simulate_front(&p, &shifted, 10, &mut RngStream::new(seed, 0)).unwrap();
            for (n, (ra, rb)) in a.iter().zip(&b).enumerate() {
                let expected = 0.6f64.powi(n as i32 + 2) * c;
                prop_assert!((rb.x_eq - ra.x_eq - expected).abs() < 1e-9, "step {}", n + 1);
            }
        }
    }
}
