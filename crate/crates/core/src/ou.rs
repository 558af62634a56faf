//! Branching Ornstein–Uhlenbeck particles with selection of the `N`
//! rightmost, and the genealogy they leave behind.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::sample_exponential;
use crate::stats::Running;

/// Motion and branching parameters of a single particle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OUParams {
    pub mu: f64,
    pub sigma: f64,
    pub branch_rate: f64,
}

impl Default for OUParams {
    fn default() -> Self {
        Self {
            mu: 0.0,
            sigma: 1.0,
            branch_rate: 1.0,
        }
    }
}

impl OUParams {
    pub fn new(mu: f64, sigma: f64, branch_rate: f64) -> Result<Self> {
        if !(mu >= 0.0) || !mu.is_finite() {
            return Err(Error::invalid("mu", format!("must be finite and >= 0, got {mu}")));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid("sigma", format!("must be finite and > 0, got {sigma}")));
        }
        if !(branch_rate > 0.0) || !branch_rate.is_finite() {
            return Err(Error::invalid(
                "branch_rate",
                format!("must be finite and > 0, got {branch_rate}"),
            ));
        }
        Ok(Self {
            mu,
            sigma,
            branch_rate,
        })
    }

    /// Mean factor and standard deviation of the transition over `delta`.
    pub fn transition_coefficients(&self, delta: f64) -> (f64, f64) {
        if self.mu == 0.0 {
            return (1.0, self.sigma * delta.sqrt());
        }
        let var = -(-2.0 * self.mu * delta).exp_m1() / (2.0 * self.mu);
        ((-self.mu * delta).exp(), self.sigma * var.sqrt())
    }
}

/// Exact OU transition from `x` over `delta >= 0`.
pub fn ou_transition<R: Rng + ?Sized>(x: f64, params: &OUParams, delta: f64, rng: &mut R) -> Result<f64> {
    if !(delta >= 0.0) {
        return Err(Error::invalid("delta", format!("must be >= 0, got {delta}")));
    }
    let (decay, sd) = params.transition_coefficients(delta);
    let z: f64 = rng.sample(StandardNormal);
    Ok(x * decay + sd * z)
}

/// Branching OU run with pulling strength `gamma_pull / (log N)^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BOUConfig {
    pub n: usize,
    pub gamma_pull: f64,
    pub horizon: f64,
    pub pair_samples: usize,
    /// Equally spaced sampling instants over the second half of the run.
    pub snapshots: usize,
}

impl BOUConfig {
    pub fn new(n: usize, gamma_pull: f64, horizon: f64, pair_samples: usize) -> Result<Self> {
        let cfg = Self {
            n,
            gamma_pull,
            horizon,
            pair_samples,
            snapshots: 20,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_snapshots(mut self, snapshots: usize) -> Result<Self> {
        self.snapshots = snapshots;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::invalid("N", format!("need N >= 2, got {}", self.n)));
        }
        if !(self.gamma_pull > 0.0) || !self.gamma_pull.is_finite() {
            return Err(Error::invalid(
                "gamma",
                format!("must be finite and > 0, got {}", self.gamma_pull),
            ));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid(
                "horizon",
                format!("must be finite and > 0, got {}", self.horizon),
            ));
        }
        if self.pair_samples == 0 {
            return Err(Error::invalid("pair_samples", "must be >= 1"));
        }
        if self.snapshots == 0 {
            return Err(Error::invalid("snapshots", "must be >= 1"));
        }
        Ok(())
    }

    pub fn mu(&self) -> f64 {
        let l = (self.n as f64).ln();
        self.gamma_pull / (l * l)
    }

    pub fn ou_params(&self) -> OUParams {
        OUParams {
            mu: self.mu(),
            ..OUParams::default()
        }
    }
}

const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug)]
struct Node {
    parent: usize,
    children: [usize; 2],
    // split time; unused for leaves
    time: f64,
}

/// Ancestry of the living particles.
///
/// Leaves are particles and internal nodes are binary splits carrying
/// their time. A split that loses one subtree is spliced out, so only
/// ancestors of living particles are retained.
#[derive(Clone, Debug)]
pub struct GenealogyBuffer {
    nodes: Vec<Node>,
    free: Vec<usize>,
    leaf_of: Vec<usize>,
    roots: usize,
    marks: Vec<u64>,
    stamp: u64,
}

impl GenealogyBuffer {
    /// `n` unrelated particles.
    pub fn new(n: usize) -> Self {
        let leaf = Node {
            parent: NONE,
            children: [NONE; 2],
            time: 0.0,
        };
        Self {
            nodes: vec![leaf; n],
            free: Vec::new(),
            leaf_of: (0..n).collect(),
            roots: n,
            marks: vec![0; n],
            stamp: 0,
        }
    }

    pub fn num_alive(&self) -> usize {
        self.leaf_of.len()
    }

    /// Number of trees in the forest.
    pub fn num_roots(&self) -> usize {
        self.roots
    }

    pub fn retained_nodes(&self) -> usize {
        self.nodes.len() - self.free.len()
    }

    fn alloc(&mut self, node: Node) -> usize {
        match self.free.pop() {
            Some(id) => {
                self.nodes[id] = node;
                id
            }
            None => {
                self.nodes.push(node);
                self.marks.push(0);
                self.nodes.len() - 1
            }
        }
    }

    fn replace_child(&mut self, parent: usize, old: usize, new: usize) {
        if parent == NONE {
            return;
        }
        let c = &mut self.nodes[parent].children;
        if c[0] == old {
            c[0] = new;
        } else {
            debug_assert_eq!(c[1], old);
            c[1] = new;
        }
    }

    fn check_alive(&self, particle: usize) -> Result<usize> {
        self.leaf_of
            .get(particle)
            .copied()
            .ok_or(Error::DeadParticle(particle))
    }

    /// Splits `particle` at `time`; the child gets id `num_alive()` before the call.
    pub fn branch(&mut self, particle: usize, time: f64) -> Result<usize> {
        let leaf = self.check_alive(particle)?;
        let up = self.nodes[leaf].parent;
        let child = self.alloc(Node {
            parent: NONE,
            children: [NONE; 2],
            time: 0.0,
        });
        let split = self.alloc(Node {
            parent: up,
            children: [leaf, child],
            time,
        });
        self.replace_child(up, leaf, split);
        self.nodes[leaf].parent = split;
        self.nodes[child].parent = split;
        self.leaf_of.push(child);
        Ok(self.leaf_of.len() - 1)
    }

    /// Removes `particle`; the last particle takes over its id.
    pub fn kill(&mut self, particle: usize) -> Result<()> {
        let leaf = self.check_alive(particle)?;
        let split = self.nodes[leaf].parent;
        self.free.push(leaf);
        if split == NONE {
            self.roots -= 1;
        } else {
            let [c0, c1] = self.nodes[split].children;
            let sibling = if c0 == leaf { c1 } else { c0 };
            let up = self.nodes[split].parent;
            self.nodes[sibling].parent = up;
            self.replace_child(up, split, sibling);
            self.free.push(split);
        }
        self.leaf_of.swap_remove(particle);
        Ok(())
    }

    /// Time of the most recent split shared by two particles, if any.
    pub fn common_ancestor_time(&mut self, i: usize, j: usize) -> Result<Option<f64>> {
        let li = self.check_alive(i)?;
        let lj = self.check_alive(j)?;
        if li == lj {
            return Ok(None);
        }
        self.stamp += 1;
        let mut v = li;
        while v != NONE {
            self.marks[v] = self.stamp;
            v = self.nodes[v].parent;
        }
        let mut v = lj;
        while v != NONE {
            if self.marks[v] == self.stamp {
                return Ok(Some(self.nodes[v].time));
            }
            v = self.nodes[v].parent;
        }
        Ok(None)
    }

    /// Structural check: binary splits, consistent back-pointers, every
    /// living particle reaches a root, no cycles, no orphaned nodes.
    pub fn is_consistent_forest(&self) -> bool {
        let live = self.retained_nodes();
        let mut freed = vec![false; self.nodes.len()];
        for &f in &self.free {
            freed[f] = true;
        }
        let mut reached = vec![false; self.nodes.len()];
        let mut roots = 0;
        for &leaf in &self.leaf_of {
            let mut v = leaf;
            let mut steps = 0;
            while v != NONE {
                if freed[v] || steps > live {
                    return false;
                }
                if reached[v] {
                    break;
                }
                reached[v] = true;
                let p = self.nodes[v].parent;
                if p == NONE {
                    roots += 1;
                } else if !self.nodes[p].children.contains(&v) {
                    return false;
                }
                v = p;
                steps += 1;
            }
        }
        let all_reached = (0..self.nodes.len()).all(|v| freed[v] || reached[v]);
        all_reached && roots == self.roots && reached.iter().filter(|&&r| r).count() == live
    }
}

/// Age of the MRCA of two living particles at time `now`.
///
/// `i == j` gives 0; pairs without a common ancestor in the retained
/// history give `+∞` (censored).
pub fn estimate_mrca_age(buffer: &mut GenealogyBuffer, i: usize, j: usize, now: f64) -> Result<f64> {
    if i == j {
        buffer.check_alive(i)?;
        return Ok(0.0);
    }
    Ok(match buffer.common_ancestor_time(i, j)? {
        Some(t) => now - t,
        None => f64::INFINITY,
    })
}

/// Outcome of [`bou_run`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BOUResult {
    pub avg_mrca_age: f64,
    pub standard_error: f64,
    pub censored_fraction: f64,
    /// Set when the first sampling instant still sees several unrelated
    /// families, i.e. the first half of the run was too short to burn in.
    pub burn_in_warning: bool,
}

/// Particle system state during a run.
struct Population {
    positions: Vec<f64>,
    genealogy: GenealogyBuffer,
}

impl Population {
    fn new(n: usize) -> Self {
        Self {
            positions: vec![0.0; n],
            genealogy: GenealogyBuffer::new(n),
        }
    }

    fn advance<R: Rng + ?Sized>(&mut self, decay: f64, sd: f64, rng: &mut R) {
        for x in &mut self.positions {
            let z: f64 = rng.sample(StandardNormal);
            *x = *x * decay + sd * z;
        }
    }

    /// Uniform particle duplicates, then the leftmost of the `N + 1` dies.
    fn branch_and_select<R: Rng + ?Sized>(&mut self, time: f64, rng: &mut R) -> Result<()> {
        let n = self.positions.len();
        let parent = rng.random_range(0..n);
        self.genealogy.branch(parent, time)?;
        self.positions.push(self.positions[parent]);
        let (leftmost, _) = self
            .positions
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (k, &x)| if x < best.1 { (k, x) } else { best });
        self.genealogy.kill(leftmost)?;
        self.positions.swap_remove(leftmost);
        Ok(())
    }
}

/// Event-driven run: all particles start at 0; branching events arrive at
/// rate `N · branch_rate`. MRCA ages of random distinct pairs are sampled
/// at `snapshots` equally spaced instants over the second half of the
/// horizon; the standard error comes from the spread of snapshot means.
pub fn bou_run<R: Rng + ?Sized>(config: &BOUConfig, rng: &mut R) -> Result<BOUResult> {
    config.validate()?;
    let ou = config.ou_params();
    let n = config.n;
    let event_rate = n as f64 * ou.branch_rate;
    let half = 0.5 * config.horizon;
    let sample_times: Vec<f64> = (1..=config.snapshots)
        .map(|s| half + half * s as f64 / config.snapshots as f64)
        .collect();
    let per_snapshot = config.pair_samples.div_ceil(config.snapshots);

    let mut pop = Population::new(n);
    let mut t = 0.0;
    let mut next_sample = 0;
    let mut snapshot_means = Running::default();
    let mut censored = 0usize;
    let mut drawn = 0usize;
    let mut burn_in_warning = false;

    while next_sample < sample_times.len() {
        let dt = sample_exponential(rng) / event_rate;
        while next_sample < sample_times.len() && sample_times[next_sample] < t + dt {
            let now = sample_times[next_sample];
            if next_sample == 0 && pop.genealogy.num_roots() > 1 {
                burn_in_warning = true;
            }
            let mut ages = Running::default();
            for _ in 0..per_snapshot {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                let age = estimate_mrca_age(&mut pop.genealogy, i, j, now)?;
                drawn += 1;
                if age.is_finite() {
                    ages.push(age);
                } else {
                    censored += 1;
                }
            }
            if ages.count() > 0 {
                snapshot_means.push(ages.mean());
            }
            next_sample += 1;
        }
        if next_sample == sample_times.len() {
            break;
        }
        t += dt;
        let (decay, sd) = ou.transition_coefficients(dt);
        pop.advance(decay, sd, rng);
        pop.branch_and_select(t, rng)?;
    }

    let (avg, se) = match snapshot_means.count() {
        0 => (f64::INFINITY, f64::NAN),
        1 => (snapshot_means.mean(), f64::NAN),
        _ => (snapshot_means.mean(), snapshot_means.standard_error()),
    };
    Ok(BOUResult {
        avg_mrca_age: avg,
        standard_error: se,
        censored_fraction: censored as f64 / drawn as f64,
        burn_in_warning,
    })
}
