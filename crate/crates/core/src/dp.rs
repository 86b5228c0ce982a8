//! Backward induction over the remaining horizon. All reward arrives on
//! absorption, so `Q((s,1,g),a)` is the one-step probability of landing in
//! the goal's preimage and higher horizons propagate `V(., h-1, g)`.

use crate::command::{CeState, CommandExtension};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::scalar::Scalar;

/// `V` and `Q` over transient CE states, indexed like
/// [`CommandExtension::transient_states`]. Absorbing states have value 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables<T> {
    n_actions: usize,
    index: Indexer,
    v: Vec<T>,
    q: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Indexer {
    max_horizon: usize,
    n_goals: usize,
}

impl Indexer {
    #[inline]
    fn of(&self, st: CeState) -> usize {
        (st.s * self.max_horizon + st.h - 1) * self.n_goals + st.g
    }
}

impl<T: Scalar> ValueTables<T> {
    fn zeros(ce: &CommandExtension<T>) -> Self {
        Self {
            n_actions: ce.n_actions(),
            index: Indexer { max_horizon: ce.horizon(), n_goals: ce.n_goals() },
            v: vec![T::zero(); ce.n_transient()],
            q: vec![T::zero(); ce.n_transient() * ce.n_actions()],
        }
    }

    #[inline]
    pub fn v(&self, st: CeState) -> T {
        if st.is_absorbing() {
            return T::zero();
        }
        self.v[self.index.of(st)]
    }

    #[inline]
    pub fn q(&self, st: CeState, action: usize) -> T {
        self.q[self.index.of(st) * self.n_actions + action]
    }

    pub fn q_row(&self, st: CeState) -> &[T] {
        let o = self.index.of(st) * self.n_actions;
        &self.q[o..o + self.n_actions]
    }

    /// All `V` entries in transient-state order.
    pub fn values(&self) -> &[T] {
        &self.v
    }

    pub fn q_values(&self) -> &[T] {
        &self.q
    }
}

/// One-step lookahead for every action at a transient state, reading
/// `V(., h-1, g)` from `tables` for `h >= 2`.
fn lookahead<T: Scalar>(ce: &CommandExtension<T>, tables: &ValueTables<T>, st: CeState, out: &mut [T]) {
    let base = ce.base();
    for (a, q) in out.iter_mut().enumerate() {
        *q = if st.h == 1 {
            ce.goal_map().preimage(st.g).iter().map(|&s2| base.p(st.s, a, s2)).sum()
        } else {
            base.row(st.s, a)
                .iter()
                .enumerate()
                .map(|(s2, p)| *p * tables.v(CeState::new(s2, st.h - 1, st.g)))
                .sum()
        };
    }
}

/// Policy evaluation by backward induction.
pub fn evaluate<T: Scalar>(ce: &CommandExtension<T>, policy: &Policy<T>) -> ValueTables<T> {
    let mut tables = ValueTables::zeros(ce);
    let na = ce.n_actions();
    let mut q = vec![T::zero(); na];
    for h in 1..=ce.horizon() {
        for s in 0..ce.n_states() {
            for g in 0..ce.n_goals() {
                let st = CeState::new(s, h, g);
                lookahead(ce, &tables, st, &mut q);
                let i = tables.index.of(st);
                tables.v[i] = policy.row(st).iter().zip(&q).map(|(p, q)| *p * *q).sum();
                tables.q[i * na..(i + 1) * na].copy_from_slice(&q);
            }
        }
    }
    tables
}

/// Maximizing action sets per transient state, ties kept.
#[derive(Debug, Clone, PartialEq)]
pub struct ArgmaxSets {
    index: Indexer,
    sets: Vec<Vec<usize>>,
}

impl ArgmaxSets {
    pub fn get(&self, st: CeState) -> &[usize] {
        &self.sets[self.index.of(st)]
    }

    /// Deterministic optimal policy picking the lowest-index maximizer.
    pub fn greedy_policy<T: Scalar>(&self, ce: &CommandExtension<T>) -> Policy<T> {
        Policy::deterministic(ce, |st| self.get(st)[0]).expect("one-hot rows are normalized")
    }
}

/// Optimal values and maximizing action sets by backward induction.
pub fn optimal<T: Scalar>(ce: &CommandExtension<T>) -> (ValueTables<T>, ArgmaxSets) {
    let mut tables = ValueTables::zeros(ce);
    let na = ce.n_actions();
    let mut sets = vec![Vec::new(); ce.n_transient()];
    let mut q = vec![T::zero(); na];
    for h in 1..=ce.horizon() {
        for s in 0..ce.n_states() {
            for g in 0..ce.n_goals() {
                let st = CeState::new(s, h, g);
                lookahead(ce, &tables, st, &mut q);
                let i = tables.index.of(st);
                let best = q.iter().copied().fold(T::neg_infinity(), T::max);
                tables.v[i] = best;
                tables.q[i * na..(i + 1) * na].copy_from_slice(&q);
                sets[i] = argmax_set(&q, best);
            }
        }
    }
    let index = tables.index;
    (tables, ArgmaxSets { index, sets })
}

pub(crate) fn argmax_set<T: Scalar>(values: &[T], best: T) -> Vec<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| best - **v <= T::tie_tol())
        .map(|(a, _)| a)
        .collect()
}

/// Base-state distribution `steps` transitions after taking `action` in
/// `start.s`, later actions drawn from `policy(. | ., start.h - i, start.g)`.
pub(crate) fn reach_distribution<T: Scalar>(
    ce: &CommandExtension<T>,
    policy: &Policy<T>,
    start: CeState,
    action: usize,
    steps: usize,
) -> Vec<T> {
    let base = ce.base();
    let ns = ce.n_states();
    let mut dist = base.row(start.s, action).to_vec();
    let mut next = vec![T::zero(); ns];
    for i in 1..steps {
        next.iter_mut().for_each(|x| *x = T::zero());
        for (s, &mass) in dist.iter().enumerate() {
            if mass == T::zero() {
                continue;
            }
            let row = policy.row(CeState::new(s, start.h - i, start.g));
            for (b, &pb) in row.iter().enumerate() {
                if pb == T::zero() {
                    continue;
                }
                let w = mass * pb;
                for (s2, &p) in base.row(s, b).iter().enumerate() {
                    next[s2] = next[s2] + w * p;
                }
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    dist
}

/// Mass of `dist` on each goal's preimage.
pub(crate) fn goal_masses<T: Scalar>(ce: &CommandExtension<T>, dist: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); ce.n_goals()];
    for (s, &p) in dist.iter().enumerate() {
        let g = ce.goal_map().goal(s);
        out[g] = out[g] + p;
    }
    out
}

/// Probability that the state reached `steps` transitions after taking
/// `action` from `start` maps to `target`, with the remaining actions drawn
/// from `policy` under the start command.
pub fn goal_reach<T: Scalar>(
    ce: &CommandExtension<T>,
    policy: &Policy<T>,
    start: CeState,
    action: usize,
    steps: usize,
    target: usize,
) -> Result<T> {
    if steps == 0 || steps > start.h {
        return Err(Error::HorizonTooLong { steps, start: start.h });
    }
    if start.h > ce.horizon() || start.s >= ce.n_states() || start.g >= ce.n_goals() {
        return Err(Error::OutOfRange(format!("{start:?}")));
    }
    if action >= ce.n_actions() || target >= ce.n_goals() {
        return Err(Error::OutOfRange(format!("action {action}, goal {target}")));
    }
    let dist = reach_distribution(ce, policy, start, action, steps);
    Ok(ce.goal_map().preimage(target).iter().map(|&s| dist[s]).sum())
}

/// Goal-reaching objective: `V` weighted by the initial CE distribution.
pub fn j_objective<T: Scalar>(ce: &CommandExtension<T>, policy: &Policy<T>) -> T {
    j_from_values(ce, &evaluate(ce, policy))
}

pub fn j_from_values<T: Scalar>(ce: &CommandExtension<T>, values: &ValueTables<T>) -> T {
    ce.transient_states().map(|st| ce.initial_prob(st) * values.v(st)).sum()
}
