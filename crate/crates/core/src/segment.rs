//! Trajectories, trajectory segments and the segment distribution.
//!
//! A segment is a window `(t, l)` of a trajectory that starts in a transient
//! state and ends no later than absorption, i.e. `l <= h_t`. The segment
//! distribution weights each window position equally, so its start-command
//! marginal for length `l` is proportional to `sum_{t <= N - l} nu_t`.
//! The sampler draws `(t, l)` uniformly from `{l >= 1, t + l <= N}` and
//! rejects windows with `l > h_t`, which reproduces that law exactly.

use std::io::{self, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::command::{CeState, CommandExtension, GoalMap};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::scalar::Scalar;

/// `P(S_t = s, H_t = h, G_t = g)` for `t in 0..=N`, `h in 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationTensor<T> {
    max_horizon: usize,
    n_states: usize,
    n_goals: usize,
    nu: Vec<T>,
}

impl<T: Scalar> VisitationTensor<T> {
    fn slice_len(&self) -> usize {
        self.n_states * (self.max_horizon + 1) * self.n_goals
    }

    #[inline]
    fn offset(&self, st: CeState) -> usize {
        (st.s * (self.max_horizon + 1) + st.h) * self.n_goals + st.g
    }

    #[inline]
    pub fn get(&self, t: usize, st: CeState) -> T {
        self.nu[t * self.slice_len() + self.offset(st)]
    }

    /// Time slice `t`, flattened `[s][h][g]`.
    pub fn slice(&self, t: usize) -> &[T] {
        let n = self.slice_len();
        &self.nu[t * n..(t + 1) * n]
    }

    pub fn max_horizon(&self) -> usize {
        self.max_horizon
    }
}

/// Forward recursion of the CE state distribution under `policy`.
pub fn visitation<T: Scalar>(ce: &CommandExtension<T>, policy: &Policy<T>) -> VisitationTensor<T> {
    let (ns, nn, ng) = (ce.n_states(), ce.horizon(), ce.n_goals());
    let mut tensor = VisitationTensor {
        max_horizon: nn,
        n_states: ns,
        n_goals: ng,
        nu: vec![T::zero(); (nn + 1) * ns * (nn + 1) * ng],
    };
    let len = tensor.slice_len();
    for st in ce.transient_states() {
        let o = tensor.offset(st);
        tensor.nu[o] = ce.initial_prob(st);
    }
    for t in 0..nn {
        let (head, tail) = tensor.nu.split_at_mut((t + 1) * len);
        let current = &head[t * len..];
        let next = &mut tail[..len];
        for s in 0..ns {
            for h in 0..=nn {
                for g in 0..ng {
                    let i = (s * (nn + 1) + h) * ng + g;
                    let mass = current[i];
                    if mass == T::zero() {
                        continue;
                    }
                    if h == 0 {
                        next[i] = next[i] + mass;
                        continue;
                    }
                    let row = policy.row(CeState::new(s, h, g));
                    for (a, &pa) in row.iter().enumerate() {
                        let w = mass * pa;
                        if w == T::zero() {
                            continue;
                        }
                        for (s2, &p) in ce.base().row(s, a).iter().enumerate() {
                            let j = (s2 * (nn + 1) + h - 1) * ng + g;
                            next[j] = next[j] + w * p;
                        }
                    }
                }
            }
        }
    }
    tensor
}

/// `P(H~_0 = h', G~_0 = g' | S~_0 = s, l = l)`, flattened `[h' in 0..=N][g']`.
#[derive(Debug, Clone, PartialEq)]
pub struct StartWeights<T> {
    n_goals: usize,
    weights: Vec<T>,
    empty: bool,
}

impl<T: Scalar> StartWeights<T> {
    #[inline]
    pub fn get(&self, h: usize, g: usize) -> T {
        self.weights[h * self.n_goals + g]
    }

    /// True when no segment of this length starts in this state.
    pub fn is_empty(&self) -> bool {
        self.empty
    }

    /// Nonzero `(h', g', weight)` entries.
    pub fn support(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > T::zero())
            .map(|(i, w)| (i / self.n_goals, i % self.n_goals, *w))
    }

    pub fn total(&self) -> T {
        self.weights.iter().copied().sum()
    }
}

/// Start-command weights for segments of length `l` starting in `s`.
pub fn start_weights<T: Scalar>(ce: &CommandExtension<T>, policy: &Policy<T>, s: usize, l: usize) -> StartWeights<T> {
    start_weights_from(&visitation(ce, policy), s, l)
}

/// As [`start_weights`], reusing a visitation tensor.
pub fn start_weights_from<T: Scalar>(nu: &VisitationTensor<T>, s: usize, l: usize) -> StartWeights<T> {
    let (nn, ng) = (nu.max_horizon, nu.n_goals);
    assert!((1..=nn).contains(&l), "segment length {l} outside 1..={nn}");
    let mut weights = vec![T::zero(); (nn + 1) * ng];
    for h in l..=nn {
        for g in 0..ng {
            weights[h * ng + g] = (0..=nn - l).map(|t| nu.get(t, CeState::new(s, h, g))).sum();
        }
    }
    let total: T = weights.iter().copied().sum();
    let empty = total <= T::zero();
    if !empty {
        weights.iter_mut().for_each(|w| *w = *w / total);
    }
    StartWeights { n_goals: ng, weights, empty }
}

/// Trajectory padded to `N` transitions. After absorption at step `h0` the
/// state repeats and the fixed absorbing action is recorded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub h0: usize,
    pub g0: usize,
    /// `s_0..=s_N`.
    pub states: Vec<usize>,
    /// `a_0..a_{N-1}`.
    pub actions: Vec<usize>,
}

impl Trajectory {
    /// Number of transitions before absorption.
    pub fn len(&self) -> usize {
        self.h0
    }

    pub fn is_empty(&self) -> bool {
        self.h0 == 0
    }

    pub fn ce_state(&self, t: usize) -> CeState {
        CeState::new(self.states[t], self.h0.saturating_sub(t), self.g0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub h0: usize,
    pub g0: usize,
    /// `s_0..=s_l`.
    pub states: Vec<usize>,
    /// `a_0..a_{l-1}`.
    pub actions: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn s0(&self) -> usize {
        self.states[0]
    }

    pub fn final_state(&self) -> usize {
        *self.states.last().expect("segment has states")
    }

    /// Goal realized at the end of the segment.
    pub fn realized_goal(&self, goal_map: &GoalMap) -> usize {
        goal_map.goal(self.final_state())
    }
}

/// Samples trajectories with categorical tables built once per policy.
pub struct TrajectorySampler<'a, T> {
    ce: &'a CommandExtension<T>,
    initial: WeightedIndex<f64>,
    transitions: Vec<WeightedIndex<f64>>,
    actions: Vec<WeightedIndex<f64>>,
}

fn categorical<T: Scalar>(row: &[T]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(row.iter().map(|p| p.as_f64()))
        .map_err(|e| Error::InvalidPolicy(format!("cannot sample from row {row:?}: {e}")))
}

impl<'a, T: Scalar> TrajectorySampler<'a, T> {
    pub fn new(ce: &'a CommandExtension<T>, policy: &Policy<T>) -> Result<Self> {
        policy.check_against(ce)?;
        let initial: Vec<T> = ce.transient_states().map(|st| ce.initial_prob(st)).collect();
        let mut transitions = Vec::with_capacity(ce.n_states() * ce.n_actions());
        for s in 0..ce.n_states() {
            for a in 0..ce.n_actions() {
                transitions.push(categorical(ce.base().row(s, a))?);
            }
        }
        let actions = policy.rows().map(categorical).collect::<Result<_>>()?;
        Ok(Self { ce, initial: categorical(&initial)?, transitions, actions })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Trajectory {
        let ce = self.ce;
        let (nn, ng) = (ce.horizon(), ce.n_goals());
        let i = self.initial.sample(rng);
        let (mut s, h0, g0) = (i / (nn * ng), (i / ng) % nn + 1, i % ng);
        let mut states = Vec::with_capacity(nn + 1);
        let mut actions = Vec::with_capacity(nn);
        states.push(s);
        for t in 0..nn {
            let h = h0.saturating_sub(t);
            let a = if h == 0 {
                ce.absorbing_action()
            } else {
                self.actions[ce.transient_index(CeState::new(s, h, g0))].sample(rng)
            };
            if h > 0 {
                s = self.transitions[s * ce.n_actions() + a].sample(rng);
            }
            actions.push(a);
            states.push(s);
        }
        Trajectory { h0, g0, states, actions }
    }
}

/// One trajectory under `policy`; build a [`TrajectorySampler`] for batches.
pub fn sample_trajectory<T: Scalar, R: Rng + ?Sized>(
    ce: &CommandExtension<T>,
    policy: &Policy<T>,
    rng: &mut R,
) -> Result<Trajectory> {
    Ok(TrajectorySampler::new(ce, policy)?.sample(rng))
}

/// Maps `k in 0..N(N+1)/2` onto the window grid `{(t, l) : l >= 1, t + l <= N}`.
fn grid_window(mut k: usize, max_horizon: usize) -> (usize, usize) {
    for t in 0..max_horizon {
        let row = max_horizon - t;
        if k < row {
            return (t, k + 1);
        }
        k -= row;
    }
    unreachable!("grid index out of range")
}

/// One proposal of the rejection sampler: a uniform window `(t, l)` accepted
/// iff `l <= h_t`.
pub fn sample_segment<R: Rng + ?Sized>(traj: &Trajectory, max_horizon: usize, rng: &mut R) -> Option<Segment> {
    let k = rng.random_range(0..max_horizon * (max_horizon + 1) / 2);
    let (t, l) = grid_window(k, max_horizon);
    let h_t = traj.h0.saturating_sub(t);
    if l > h_t {
        return None;
    }
    Some(Segment {
        h0: h_t,
        g0: traj.g0,
        states: traj.states[t..=t + l].to_vec(),
        actions: traj.actions[t..t + l].to_vec(),
    })
}

/// Draws a trajectory uniformly from `batch` and a window proposal for it,
/// repeating both until a proposal is accepted. Redrawing the trajectory on
/// every proposal keeps the accepted law proportional to the number of
/// fitting windows per trajectory. The window `(0, 1)` always fits, so this
/// terminates.
pub fn sample_segment_from_batch<R: Rng + ?Sized>(batch: &[Trajectory], max_horizon: usize, rng: &mut R) -> Segment {
    assert!(!batch.is_empty(), "empty trajectory batch");
    loop {
        let traj = &batch[rng.random_range(0..batch.len())];
        if let Some(seg) = sample_segment(traj, max_horizon, rng) {
            return seg;
        }
    }
}

/// Parameters of a sampled batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchConfig {
    pub batch_size: usize,
    pub segments_per_trajectory: usize,
    pub workers: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self { batch_size: 10_000, segments_per_trajectory: 1, workers: 1 }
    }
}

/// Samples `batch_size` trajectories and `batch_size * segments_per_trajectory`
/// accepted segments from them. Each worker samples its share of the
/// trajectories and draws its share of the segments from that share, using
/// ChaCha stream `w` of `seed`; output depends only on `(seed, workers)`.
pub fn sample_segments<T: Scalar>(
    ce: &CommandExtension<T>,
    policy: &Policy<T>,
    config: BatchConfig,
    seed: u64,
) -> Result<Vec<Segment>> {
    if config.batch_size == 0 {
        return Err(Error::EmptyBatch);
    }
    let sampler = TrajectorySampler::new(ce, policy)?;
    let workers = config.workers.max(1);
    let chunk = config.batch_size / workers;
    let extra = config.batch_size % workers;
    let per_worker: Vec<Vec<Segment>> = (0..workers)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(w as u64);
            let n = chunk + usize::from(w < extra);
            if n == 0 {
                return Vec::new();
            }
            let trajectories: Vec<Trajectory> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
            (0..n * config.segments_per_trajectory)
                .map(|_| sample_segment_from_batch(&trajectories, ce.horizon(), &mut rng))
                .collect()
        })
        .collect();
    Ok(per_worker.into_iter().flatten().collect())
}

/// Writes one `l,s0,h0,g0,a0,final_state,realized_goal` line per segment.
pub fn write_segment_dump<W: Write>(out: &mut W, segments: &[Segment], goal_map: &GoalMap) -> io::Result<()> {
    writeln!(out, "l,s0,h0,g0,a0,final_state,realized_goal")?;
    for seg in segments {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            seg.len(),
            seg.s0(),
            seg.h0,
            seg.g0,
            seg.actions[0],
            seg.final_state(),
            seg.realized_goal(goal_map)
        )?;
    }
    Ok(())
}
