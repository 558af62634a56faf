//! Backward-in-time genealogy through the Cannings representation.
//!
//! Looking back from a stationary front, the weight vectors of successive
//! generations are i.i.d. with the law of `(e^{aE_i} / Σ_k e^{aE_k})_i` for
//! i.i.d. standard exponentials `E_i`, and every lineage picks its parent
//! independently from the current weights. Genealogies are therefore
//! simulated from fresh weight draws, never from a realized front.

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::rng::{sample_exponential, uniform_open0};

/// Tolerance on `Σ w = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Selection probabilities of one generation.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
}

impl WeightVector {
    /// Validates non-negative entries summing to one.
    ///
    /// Stationary draws are strictly positive; zero entries are accepted
    /// so degenerate laws can be injected in tests.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyRequest("weight vector needs N >= 1 entries"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights", "entries must be finite and >= 0"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL * weights.len().max(1) as f64 {
            return Err(Error::invalid("weights", format!("sum to {sum}, not 1")));
        }
        Ok(Self { weights })
    }

    pub(crate) fn from_normalized(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Conditional probability that two lineages pick the same parent.
    pub fn sum_of_squares(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }

    /// Inverse-CDF categorical draw using one uniform.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (k, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        // rounding left u beyond the last partial sum; take the last positive entry
        self.weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }
}

/// Unnormalized stationary weights as a running cumulative sum.
///
/// `e^{aE_i}` is evaluated as `e^{a(E_i - max E)}` so large `a` cannot
/// overflow. Returns the total.
fn fill_stationary_cumulative<R: Rng + ?Sized>(
    out: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
    params: &ModelParams,
    rng: &mut R,
) -> f64 {
    let n = params.n();
    let a = params.a();
    scratch.clear();
    scratch.extend((0..n).map(|_| sample_exponential(rng)));
    let top = scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.clear();
    let mut acc = 0.0;
    for &e in scratch.iter() {
        acc += (a * (e - top)).exp();
        out.push(acc);
    }
    acc
}

/// `Σ θ_i²` of one fresh stationary weight draw.
fn stationary_sum_of_squares<R: Rng + ?Sized>(
    scratch: &mut Vec<f64>,
    params: &ModelParams,
    rng: &mut R,
) -> f64 {
    let a = params.a();
    scratch.clear();
    scratch.extend((0..params.n()).map(|_| sample_exponential(rng)));
    let top = scratch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut s1, mut s2) = (0.0, 0.0);
    for &e in scratch.iter() {
        let w = (a * (e - top)).exp();
        s1 += w;
        s2 += w * w;
    }
    s2 / (s1 * s1)
}

/// One i.i.d. draw of the stationary Cannings weights.
pub fn sample_stationary_weights<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> WeightVector {
    let mut cumulative = Vec::with_capacity(params.n());
    let mut scratch = Vec::with_capacity(params.n());
    let total = fill_stationary_cumulative(&mut cumulative, &mut scratch, params, rng);
    let mut prev = 0.0;
    let weights = cumulative
        .iter()
        .map(|&c| {
            let w = (c - prev) / total;
            prev = c;
            w
        })
        .collect();
    WeightVector::from_normalized(weights)
}

/// Parent index (0-based) chosen by each of a set of lineages.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParentMap {
    pub parents: Vec<usize>,
}

/// `n_lineages` i.i.d. categorical draws from `weights`.
pub fn sample_parent_map<R: Rng + ?Sized>(
    weights: &WeightVector,
    n_lineages: usize,
    rng: &mut R,
) -> Result<ParentMap> {
    if n_lineages == 0 {
        return Err(Error::EmptyRequest("sample_parent_map needs >= 1 lineage"));
    }
    Ok(ParentMap {
        parents: (0..n_lineages).map(|_| weights.sample_index(rng)).collect(),
    })
}

/// Ancestral partition of a sample.
///
/// Block ids are `0..num_blocks`, numbered by the smallest individual in
/// each block; `ancestor_of_block[b]` is the 0-based index of the block's
/// ancestor in the current generation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    block_of: Vec<usize>,
    ancestor_of_block: Vec<usize>,
}

impl Partition {
    /// Every individual `i` in its own block with ancestor `i`.
    pub fn singletons(n_sample: usize) -> Self {
        Self {
            block_of: (0..n_sample).collect(),
            ancestor_of_block: (0..n_sample).collect(),
        }
    }

    /// Singletons with individual `i` attached to `ancestors[i]`.
    pub fn singletons_with_ancestors(ancestors: &[usize]) -> Result<Self> {
        let mut seen = ancestors.to_vec();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("ancestors", "must be distinct"));
        }
        Ok(Self {
            block_of: (0..ancestors.len()).collect(),
            ancestor_of_block: ancestors.to_vec(),
        })
    }

    pub fn block_of(&self) -> &[usize] {
        &self.block_of
    }

    pub fn ancestor_of_block(&self) -> &[usize] {
        &self.ancestor_of_block
    }

    pub fn num_blocks(&self) -> usize {
        self.ancestor_of_block.len()
    }

    pub fn sample_size(&self) -> usize {
        self.block_of.len()
    }

    /// Blocks as sorted member lists, in block-id order.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_blocks()];
        for (i, &b) in self.block_of.iter().enumerate() {
            out[b].push(i);
        }
        out
    }

    /// Checks the labeling and injectivity invariants.
    pub fn validate(&self) -> Result<()> {
        let mut next = 0;
        for &b in &self.block_of {
            if b > next {
                return Err(Error::invalid("partition", "block ids not canonical"));
            }
            if b == next {
                next += 1;
            }
        }
        if next != self.ancestor_of_block.len() {
            return Err(Error::invalid("partition", "block count mismatch"));
        }
        let mut anc = self.ancestor_of_block.clone();
        anc.sort_unstable();
        if anc.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("partition", "two blocks share an ancestor"));
        }
        Ok(())
    }
}

/// Merges blocks whose ancestors choose the same parent.
///
/// `parent_map.parents[b]` is the parent of block `b`'s ancestor; all
/// indices must be below `n`.
pub fn coalesce_step(partition: &Partition, parent_map: &ParentMap, n: usize) -> Result<Partition> {
    if parent_map.parents.len() != partition.num_blocks() {
        return Err(Error::invalid(
            "parent_map",
            format!(
                "{} parents for {} blocks",
                parent_map.parents.len(),
                partition.num_blocks()
            ),
        ));
    }
    if let Some(&bad) = partition.ancestor_of_block.iter().find(|&&x| x >= n) {
        return Err(Error::IndexOutOfRange { index: bad, bound: n });
    }
    if let Some(&bad) = parent_map.parents.iter().find(|&&x| x >= n) {
        return Err(Error::IndexOutOfRange { index: bad, bound: n });
    }
    // relabel in order of first appearance over individuals
    let mut new_id_of_parent: Vec<(usize, usize)> = Vec::new();
    let mut ancestor_of_block = Vec::new();
    let block_of = partition
        .block_of
        .iter()
        .map(|&b| {
            let parent = parent_map.parents[b];
            match new_id_of_parent.iter().find(|(p, _)| *p == parent) {
                Some(&(_, id)) => id,
                None => {
                    let id = ancestor_of_block.len();
                    new_id_of_parent.push((parent, id));
                    ancestor_of_block.push(parent);
                    id
                }
            }
        })
        .collect();
    Ok(Partition {
        block_of,
        ancestor_of_block,
    })
}

/// Draws parents for the current blocks from one generation's weights.
///
/// Blocks are visited in increasing ancestor order, so the draws depend
/// on the set of ancestors and not on how the sample is labeled.
fn draw_parents<R: Rng + ?Sized>(
    partition: &Partition,
    cumulative: &[f64],
    total: f64,
    rng: &mut R,
) -> ParentMap {
    let n = cumulative.len();
    let mut order: Vec<usize> = (0..partition.num_blocks()).collect();
    order.sort_unstable_by_key(|&b| partition.ancestor_of_block[b]);
    let mut parents = vec![0; partition.num_blocks()];
    for b in order {
        let u = rng.random::<f64>() * total;
        parents[b] = cumulative.partition_point(|&c| c <= u).min(n - 1);
    }
    ParentMap { parents }
}

/// Ancestral partitions `Π_1, ..., Π_horizon` of the `n_sample` rightmost
/// individuals, starting from singletons on ancestors `0..n_sample`.
///
/// Once a single block remains it is carried forward unchanged.
pub fn simulate_ancestral_process<R: Rng + ?Sized>(
    params: &ModelParams,
    n_sample: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<Partition>> {
    check_sample(params, n_sample)?;
    simulate_ancestral_process_from(params, Partition::singletons(n_sample), horizon, rng)
}

/// Same as [`simulate_ancestral_process`] from an arbitrary initial partition.
pub fn simulate_ancestral_process_from<R: Rng + ?Sized>(
    params: &ModelParams,
    initial: Partition,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<Partition>> {
    initial.validate()?;
    if let Some(&bad) = initial.ancestor_of_block.iter().find(|&&x| x >= params.n()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            bound: params.n(),
        });
    }
    let mut cumulative = Vec::with_capacity(params.n());
    let mut scratch = Vec::with_capacity(params.n());
    let mut current = initial;
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        if current.num_blocks() > 1 {
            let total = fill_stationary_cumulative(&mut cumulative, &mut scratch, params, rng);
            let parents = draw_parents(&current, &cumulative, total, rng);
            current = coalesce_step(&current, &parents, params.n())?;
        }
        out.push(current.clone());
    }
    Ok(out)
}

/// Block count of the ancestral process after exactly `generations` steps.
pub fn ancestral_block_count<R: Rng + ?Sized>(
    params: &ModelParams,
    n_sample: usize,
    generations: usize,
    rng: &mut R,
) -> Result<usize> {
    check_sample(params, n_sample)?;
    let mut cumulative = Vec::with_capacity(params.n());
    let mut scratch = Vec::with_capacity(params.n());
    let mut current = Partition::singletons(n_sample);
    for _ in 0..generations {
        if current.num_blocks() == 1 {
            break;
        }
        let total = fill_stationary_cumulative(&mut cumulative, &mut scratch, params, rng);
        let parents = draw_parents(&current, &cumulative, total, rng);
        current = coalesce_step(&current, &parents, params.n())?;
    }
    Ok(current.num_blocks())
}

fn check_sample(params: &ModelParams, n_sample: usize) -> Result<()> {
    if n_sample == 0 {
        return Err(Error::invalid("n_sample", "must be >= 1"));
    }
    if n_sample > params.n() {
        return Err(Error::invalid(
            "n_sample",
            format!("{} exceeds N = {}", n_sample, params.n()),
        ));
    }
    Ok(())
}

/// Generations until two distinct lineages share a parent.
///
/// Each generation draws fresh weights and merges with probability
/// `Σ θ_i²`, the conditional chance both lineages pick the same parent.
pub fn pair_coalescence_time<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> Result<u64> {
    if params.n() < 2 {
        return Err(Error::invalid("N", "pair coalescence needs N >= 2"));
    }
    let mut scratch = Vec::with_capacity(params.n());
    let mut t = 0u64;
    loop {
        t += 1;
        let s2 = stationary_sum_of_squares(&mut scratch, params, rng);
        if rng.random::<f64>() < s2 {
            return Ok(t);
        }
    }
}

/// Pair coalescence driven by caller-supplied weights per generation.
pub fn pair_coalescence_time_with<R, F>(mut next_weights: F, rng: &mut R) -> u64
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> WeightVector,
{
    let mut t = 0u64;
    loop {
        t += 1;
        let s2 = next_weights(rng).sum_of_squares();
        if rng.random::<f64>() < s2 {
            return t;
        }
    }
}

/// Geometric variate on `{1, 2, ...}` with success probability `p`.
///
/// Because generations are i.i.d., the pair coalescence time is exactly
/// geometric with parameter `c_N = E[Σ θ_i²]`.
pub fn sample_geometric<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<u64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid("p", format!("must lie in (0, 1], got {p}")));
    }
    if p == 1.0 {
        return Ok(1);
    }
    let u = uniform_open0(rng);
    let t = (u.ln() / (-p).ln_1p()).ceil();
    Ok((t as u64).max(1))
}

/// Monte Carlo estimate of `c_N = E[Σ θ_i²]` and its standard error.
#[allow(non_snake_case)]
pub fn estimate_cN<R: Rng + ?Sized>(
    params: &ModelParams,
    replicas: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if replicas < 2 {
        return Err(Error::invalid("replicas", "need >= 2 weight draws"));
    }
    if params.n() == 1 {
        return Ok((1.0, 0.0));
    }
    if params.a() == 0.0 {
        return Ok((1.0 / params.n() as f64, 0.0));
    }
    let mut scratch = Vec::with_capacity(params.n());
    let draws: crate::stats::Running = (0..replicas)
        .map(|_| stationary_sum_of_squares(&mut scratch, params, rng))
        .collect();
    Ok((draws.mean(), draws.standard_error()))
}
