//! Reproducible samplers for every random object the tests consume.
//!
//! Every sampler is a pure function of `(chain, parameters, RngSeed)`. An
//! [`RngSeed`] names one ChaCha8 stream; independent pieces of a sample (the
//! two walks of a two-path sample, the branches of a star-split sample, the
//! `i`-th of `m` trajectories) each get their own derived stream, so results
//! never depend on evaluation order or on how work is spread over threads.
//!
//! Walks "backward" from a state use the forward kernel: on a reversible
//! chain a walk conditioned to pass through `sigma` at position `j` is two
//! independent walks from `sigma`, one of them read in reverse.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::chain::{LabeledChain, StateId};
use crate::error::{invalid, Result};

/// Default cap on geometric trajectory lengths.
pub const DEFAULT_GEOMETRIC_CAP: usize = 1_000_000;

/// Anything that can take a random step and label a state.
///
/// [`LabeledChain`] implements it with `State = StateId`; implicit chains such
/// as [`crate::zoo::GridDistrictingChain`] carry their own state type.
pub trait ChainSampler: Sync {
    type State: Clone + Send + Sync + PartialEq + std::fmt::Debug;

    fn step<R: Rng + ?Sized>(&self, from: &Self::State, rng: &mut R) -> Self::State;

    fn label(&self, state: &Self::State) -> f64;

    /// Integer encoding of a state for reports.
    fn describe(&self, state: &Self::State) -> Vec<u64>;

    fn check_state(&self, _state: &Self::State) -> Result<()> {
        Ok(())
    }
}

impl ChainSampler for LabeledChain {
    type State = StateId;

    fn step<R: Rng + ?Sized>(&self, from: &StateId, rng: &mut R) -> StateId {
        self.step_with(*from, rng.random::<f64>())
    }

    fn label(&self, state: &StateId) -> f64 {
        LabeledChain::label(self, *state)
    }

    fn describe(&self, state: &StateId) -> Vec<u64> {
        vec![state.0 as u64]
    }

    fn check_state(&self, state: &StateId) -> Result<()> {
        LabeledChain::check_state(self, *state, "sigma0")
    }
}

/// What a derived stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// The `index`-th independent replicate (trajectory, sample, dimension).
    Item,
    Forward,
    Backward,
    /// Split points (`xi`) and pivot positions.
    Split,
    Length,
    /// Start states drawn from the stationary distribution.
    Start,
    /// The `s`-th branch of a branching sample.
    Branch(u32),
}

impl Role {
    fn code(self) -> u64 {
        match self {
            Role::Item => 0,
            Role::Forward => 1,
            Role::Backward => 2,
            Role::Split => 3,
            Role::Length => 4,
            Role::Start => 5,
            Role::Branch(s) => 16 + u64::from(s),
        }
    }
}

/// A seed plus a stream id.
///
/// Derivation: `substream(i, r)` keeps `seed` and replaces the stream id with
/// `mix64(stream_id ^ mix64(i * 2^32 + code(r)))`, where `mix64` is the
/// SplitMix64 finalizer. `mix64` is a bijection on `u64`, so distinct
/// `(i, r)` with `i < 2^32` give distinct streams under one parent.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct RngSeed {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSeed {
    pub fn new(seed: u64) -> Self {
        RngSeed { seed, stream_id: 0 }
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        RngSeed { seed, stream_id }
    }

    pub fn substream(self, index: u64, role: Role) -> RngSeed {
        debug_assert!(index < 1 << 32, "substream index {index} exceeds 2^32");
        let code = (index << 32) | role.code();
        RngSeed {
            seed: self.seed,
            stream_id: mix64(self.stream_id ^ mix64(code)),
        }
    }

    /// Stream for the `index`-th replicate.
    pub fn item(self, index: u64) -> RngSeed {
        self.substream(index, Role::Item)
    }

    pub fn role(self, role: Role) -> RngSeed {
        self.substream(0, role)
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sequence of states `X_0..X_k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory<T = StateId> {
    pub states: Vec<T>,
}

impl<T> Trajectory<T> {
    /// Number of steps (`len - 1`).
    pub fn k(&self) -> usize {
        self.states.len() - 1
    }

    pub fn start(&self) -> &T {
        &self.states[0]
    }

    pub fn last(&self) -> &T {
        self.states.last().expect("trajectories are nonempty")
    }
}

fn walk<S: ChainSampler>(chain: &S, start: &S::State, k: usize, seed: RngSeed) -> Vec<S::State> {
    let mut rng = seed.rng();
    let mut states = Vec::with_capacity(k + 1);
    states.push(start.clone());
    for _ in 0..k {
        let next = chain.step(states.last().expect("nonempty"), &mut rng);
        states.push(next);
    }
    states
}

/// `k`-step walk from `start`.
pub fn sample_trajectory<S: ChainSampler>(chain: &S, start: &S::State, k: usize, seed: RngSeed) -> Trajectory<S::State> {
    Trajectory { states: walk(chain, start, k, seed) }
}

/// Stationary start state for an explicit chain.
pub fn sample_stationary_state(chain: &LabeledChain, seed: RngSeed) -> StateId {
    chain.stationary_state_with(seed.role(Role::Start).rng().random::<f64>())
}

/// Two independent `k`-step walks `Y`, `Z` from `sigma0`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoPathSample<T = StateId> {
    pub y: Trajectory<T>,
    pub z: Trajectory<T>,
}

pub fn sample_two_paths<S: ChainSampler>(chain: &S, sigma0: &S::State, k: usize, seed: RngSeed) -> TwoPathSample<S::State> {
    TwoPathSample {
        y: sample_trajectory(chain, sigma0, k, seed.role(Role::Backward)),
        z: sample_trajectory(chain, sigma0, k, seed.role(Role::Forward)),
    }
}

/// Serial-test shape: `xi` uniform on `{0..k}`, walks `Y_1..Y_xi` and
/// `Z_1..Z_{k-xi}` from `sigma0`.
#[derive(Clone, Debug, PartialEq)]
pub struct SerialSample<T = StateId> {
    pub k: usize,
    pub xi: usize,
    /// `Y_0 = sigma0, .., Y_xi`.
    pub y: Trajectory<T>,
    /// `Z_0 = sigma0, .., Z_{k - xi}`.
    pub z: Trajectory<T>,
}

pub fn sample_serial<S: ChainSampler>(chain: &S, sigma0: &S::State, k: usize, seed: RngSeed) -> SerialSample<S::State> {
    let xi = seed.role(Role::Split).rng().random_range(0..=k as u64) as usize;
    SerialSample {
        k,
        xi,
        y: sample_trajectory(chain, sigma0, xi, seed.role(Role::Backward)),
        z: sample_trajectory(chain, sigma0, k - xi, seed.role(Role::Forward)),
    }
}

/// Parallel-test shape: `X_1..X_k` from `sigma0`, then `m - 1` branches of
/// length `k` from `X_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParallelSample<T = StateId> {
    pub x: Trajectory<T>,
    /// Each branch starts at `X_k` (`Z^s_0 = X_k`).
    pub branches: Vec<Trajectory<T>>,
}

pub fn sample_parallel<S: ChainSampler>(
    chain: &S,
    sigma0: &S::State,
    k: usize,
    m: usize,
    seed: RngSeed,
) -> Result<ParallelSample<S::State>> {
    if m == 0 {
        return Err(invalid("m", "need at least one trajectory"));
    }
    let x = sample_trajectory(chain, sigma0, k, seed.role(Role::Forward));
    let hub = x.last().clone();
    let branches = (2..=m)
        .map(|s| sample_trajectory(chain, &hub, k, seed.role(Role::Branch(s as u32))))
        .collect();
    Ok(ParallelSample { x, branches })
}

/// Star-split shape.
///
/// `xi` is uniform on `{1..k}`; `X_1..X_xi` and `Y_1..Y_{k-xi}` are walks
/// from `sigma0`; `m - 1` branches `Z^s_1..Z^s_k` (`s = 2..m`) start at `X_xi`.
#[derive(Clone, Debug, PartialEq)]
pub struct StarSplitSample<T = StateId> {
    pub sigma0: T,
    pub k: usize,
    pub xi: usize,
    /// `X_1..X_xi`.
    pub pre_branch: Vec<T>,
    /// `Y_1..Y_{k-xi}`.
    pub side: Vec<T>,
    /// `Z^s_1..Z^s_k` for `s = 2..m`.
    pub branches: Vec<Vec<T>>,
}

impl<T> StarSplitSample<T> {
    /// The branch point `X_xi`.
    pub fn hub(&self) -> &T {
        &self.pre_branch[self.xi - 1]
    }

    pub fn m(&self) -> usize {
        self.branches.len() + 1
    }
}

pub fn sample_star_split<S: ChainSampler>(
    chain: &S,
    sigma0: &S::State,
    k: usize,
    m: usize,
    seed: RngSeed,
) -> Result<StarSplitSample<S::State>> {
    if k == 0 {
        return Err(invalid("k", "the star-split test needs k >= 1"));
    }
    if m == 0 {
        return Err(invalid("m", "need at least one leg"));
    }
    let xi = seed.role(Role::Split).rng().random_range(1..=k as u64) as usize;
    let mut pre = walk(chain, sigma0, xi, seed.role(Role::Forward));
    let mut side = walk(chain, sigma0, k - xi, seed.role(Role::Backward));
    pre.remove(0);
    side.remove(0);
    let hub = pre[xi - 1].clone();
    let branches = (2..=m)
        .map(|s| {
            let mut branch = walk(chain, &hub, k, seed.role(Role::Branch(s as u32)));
            branch.remove(0);
            branch
        })
        .collect();
    Ok(StarSplitSample {
        sigma0: sigma0.clone(),
        k,
        xi,
        pre_branch: pre,
        side,
        branches,
    })
}

/// Length drawn with `Pr[k = t] = (1/(mu+1)) (1 - 1/(mu+1))^t`, `t >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricLength {
    pub mu: f64,
    pub realized_k: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeometricTrajectory<T = StateId> {
    pub trajectory: Trajectory<T>,
    pub length: GeometricLength,
    /// The drawn length exceeded the cap and was cut to it.
    pub truncated: bool,
}

/// Draws a geometric length with mean `mu`, capped at `cap`.
pub fn sample_geometric_length(mu: f64, cap: usize, seed: RngSeed) -> Result<(GeometricLength, bool)> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(invalid("mu", format!("mean length must be positive and finite, got {mu}")));
    }
    let dist = Geometric::new(1.0 / (mu + 1.0)).map_err(|e| invalid("mu", e.to_string()))?;
    let drawn = dist.sample(&mut seed.role(Role::Length).rng());
    let truncated = drawn > cap as u64;
    let realized_k = if truncated { cap } else { drawn as usize };
    Ok((GeometricLength { mu, realized_k }, truncated))
}

pub fn sample_geometric_trajectory<S: ChainSampler>(
    chain: &S,
    sigma0: &S::State,
    mu: f64,
    cap: usize,
    seed: RngSeed,
) -> Result<GeometricTrajectory<S::State>> {
    let (length, truncated) = sample_geometric_length(mu, cap, seed)?;
    Ok(GeometricTrajectory {
        trajectory: sample_trajectory(chain, sigma0, length.realized_k, seed.role(Role::Forward)),
        length,
        truncated,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PivotMode {
    /// `j_i ~ Uniform{0..k_i}`, independently per dimension.
    Uniform,
    Fixed(Vec<usize>),
}

/// One trajectory per component with `trajectories[i].states[pivots[i]] = sigma0[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryProductSample<T = StateId> {
    pub trajectories: Vec<Trajectory<T>>,
    pub pivots: Vec<usize>,
}

/// Walk of length `k` through `sigma` at position `j`: `j` steps backward,
/// `k - j` forward.
pub fn sample_through<S: ChainSampler>(chain: &S, sigma: &S::State, k: usize, j: usize, seed: RngSeed) -> Trajectory<S::State> {
    let mut states = walk(chain, sigma, j, seed.role(Role::Backward));
    states.reverse();
    let forward = walk(chain, sigma, k - j, seed.role(Role::Forward));
    states.extend(forward.into_iter().skip(1));
    Trajectory { states }
}

pub fn sample_trajectory_product<S: ChainSampler>(
    chains: &[&S],
    sigma0: &[S::State],
    k: &[usize],
    pivots: &PivotMode,
    seed: RngSeed,
) -> Result<TrajectoryProductSample<S::State>> {
    let d = chains.len();
    if d == 0 {
        return Err(invalid("chains", "need at least one component"));
    }
    if sigma0.len() != d || k.len() != d {
        return Err(invalid("sigma0", format!("{d} components but {} start states and {} lengths", sigma0.len(), k.len())));
    }
    let pivots: Vec<usize> = match pivots {
        PivotMode::Uniform => (0..d)
            .map(|i| seed.substream(i as u64, Role::Split).rng().random_range(0..=k[i] as u64) as usize)
            .collect(),
        PivotMode::Fixed(j) => {
            if j.len() != d {
                return Err(invalid("pivots", format!("{} pivots for {d} components", j.len())));
            }
            if let Some(i) = (0..d).find(|&i| j[i] > k[i]) {
                return Err(invalid("pivots", format!("pivot {} exceeds length {} in component {i}", j[i], k[i])));
            }
            j.clone()
        }
    };
    let trajectories = (0..d)
        .map(|i| sample_through(chains[i], &sigma0[i], k[i], pivots[i], seed.item(i as u64)))
        .collect();
    Ok(TrajectoryProductSample { trajectories, pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_cycle() -> LabeledChain {
        LabeledChain::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]], None, vec![0.0, 1.0]).unwrap()
    }

    fn coin() -> LabeledChain {
        LabeledChain::from_rows(vec![vec![0.5, 0.5], vec![0.5, 0.5]], None, vec![0.0, 1.0]).unwrap()
    }

    #[test]
    fn zero_steps() {
        let t = sample_trajectory(&coin(), &StateId(1), 0, RngSeed::new(3));
        assert_eq!(t.states, vec![StateId(1)]);
    }

    #[test]
    fn deterministic_cycle() {
        let t = sample_trajectory(&two_cycle(), &StateId(0), 3, RngSeed::new(9));
        assert_eq!(t.states, vec![StateId(0), StateId(1), StateId(0), StateId(1)]);
    }

    #[test]
    fn coin_transition_frequencies_within_three_sigma() {
        let n = 100_000;
        let t = sample_trajectory(&coin(), &StateId(0), n, RngSeed::new(1));
        let switches = t.states.windows(2).filter(|w| w[0] != w[1]).count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((switches - n as f64 / 2.0).abs() < 3.0 * sigma, "{switches}");
    }

    #[test]
    fn two_paths_shapes() {
        let s = sample_two_paths(&coin(), &StateId(0), 0, RngSeed::new(1));
        assert_eq!(s.y.states, vec![StateId(0)]);
        assert_eq!(s.z.states, vec![StateId(0)]);
        let s = sample_two_paths(&two_cycle(), &StateId(0), 2, RngSeed::new(1));
        assert_eq!(s.y.states, vec![StateId(0), StateId(1), StateId(0)]);
        assert_eq!(s.y, s.z);
    }

    #[test]
    fn two_paths_use_distinct_streams() {
        let s = sample_two_paths(&coin(), &StateId(0), 64, RngSeed::new(5));
        assert_ne!(s.y, s.z);
    }

    #[test]
    fn serial_lengths_add_up() {
        for seed in 0..50 {
            let s = sample_serial(&coin(), &StateId(0), 7, RngSeed::new(seed));
            assert!(s.xi <= 7);
            assert_eq!(s.y.k() + s.z.k(), 7);
            assert_eq!(s.y.k(), s.xi);
        }
    }

    #[test]
    fn star_split_edge_cases() {
        let s = sample_star_split(&coin(), &StateId(0), 5, 1, RngSeed::new(2)).unwrap();
        assert!(s.branches.is_empty());
        assert_eq!(s.pre_branch.len() + s.side.len(), 5);
        for seed in 0..20 {
            let s = sample_star_split(&coin(), &StateId(0), 1, 3, RngSeed::new(seed)).unwrap();
            assert_eq!(s.xi, 1);
            assert_eq!(s.pre_branch.len(), 1);
            assert!(s.side.is_empty());
        }
        let s = sample_star_split(&two_cycle(), &StateId(0), 2, 3, RngSeed::new(4)).unwrap();
        assert_eq!(s.branches.len(), 2);
        let hub = *s.hub();
        for branch in &s.branches {
            assert_eq!(branch.len(), 2);
            // two-cycle: the first branch step leaves the hub
            assert_ne!(branch[0], hub);
            assert_eq!(branch[1], hub);
        }
        assert!(sample_star_split(&coin(), &StateId(0), 0, 2, RngSeed::new(1)).is_err());
    }

    #[test]
    fn xi_covers_one_through_k() {
        let mut seen = [false; 4];
        for seed in 0..200 {
            let s = sample_star_split(&coin(), &StateId(0), 3, 2, RngSeed::new(seed)).unwrap();
            seen[s.xi] = true;
        }
        assert_eq!(seen, [false, true, true, true]);
    }

    #[test]
    fn parallel_branches_start_at_endpoint() {
        let s = sample_parallel(&two_cycle(), &StateId(0), 3, 4, RngSeed::new(1)).unwrap();
        assert_eq!(s.branches.len(), 3);
        for b in &s.branches {
            assert_eq!(b.start(), s.x.last());
        }
    }

    #[test]
    fn geometric_length_rejects_bad_mean() {
        assert!(sample_geometric_length(0.0, 10, RngSeed::new(1)).is_err());
        assert!(sample_geometric_length(f64::NAN, 10, RngSeed::new(1)).is_err());
    }

    #[test]
    fn geometric_cap_is_flagged() {
        let mut truncated = 0;
        for seed in 0..100 {
            let (len, flag) = sample_geometric_length(50.0, 3, RngSeed::new(seed)).unwrap();
            assert!(len.realized_k <= 3);
            truncated += flag as usize;
        }
        assert!(truncated > 80);
    }

    #[test]
    fn geometric_pmf_at_zero_and_ratio() {
        let draws = 200_000u64;
        let mut counts = [0u64; 3];
        for i in 0..draws {
            let (len, _) = sample_geometric_length(1.0, DEFAULT_GEOMETRIC_CAP, RngSeed::with_stream(7, i)).unwrap();
            if len.realized_k < 3 {
                counts[len.realized_k] += 1;
            }
        }
        let p0 = counts[0] as f64 / draws as f64;
        let sd = (0.25 / draws as f64).sqrt();
        assert!((p0 - 0.5).abs() < 4.0 * sd, "{p0}");
        let ratio = counts[1] as f64 / counts[0] as f64;
        assert!((ratio - 0.5).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn product_with_fixed_pivots() {
        let c = two_cycle();
        let s = sample_trajectory_product(&[&c, &c], &[StateId(0), StateId(1)], &[2, 3], &PivotMode::Fixed(vec![2, 3]), RngSeed::new(1)).unwrap();
        assert_eq!(s.trajectories[0].states, vec![StateId(0), StateId(1), StateId(0)]);
        assert_eq!(s.trajectories[1].states, vec![StateId(0), StateId(1), StateId(0), StateId(1)]);
        assert!(sample_trajectory_product(&[&c], &[StateId(0)], &[1], &PivotMode::Fixed(vec![2]), RngSeed::new(1)).is_err());
    }

    #[test]
    fn product_of_one_component_is_a_walk_through_the_pivot() {
        let c = coin();
        for seed in 0..20 {
            let s = sample_trajectory_product(&[&c], &[StateId(1)], &[4], &PivotMode::Uniform, RngSeed::new(seed)).unwrap();
            assert_eq!(s.trajectories[0].states[s.pivots[0]], StateId(1));
            assert_eq!(s.trajectories[0].k(), 4);
        }
    }

    #[test]
    fn substreams_are_distinct() {
        let base = RngSeed::with_stream(1, 42);
        let mut ids: Vec<u64> = (0..1000).map(|i| base.item(i).stream_id).collect();
        ids.extend([Role::Forward, Role::Backward, Role::Split, Role::Length, Role::Start, Role::Branch(0), Role::Branch(9)].map(|r| base.role(r).stream_id));
        let before = ids.len();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), before);
    }
}
