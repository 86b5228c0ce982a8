//! Test-only oracles, independent of the library's visitation and sampling
//! code paths.
#![allow(dead_code)]

use std::collections::BTreeMap;

use eudrl_core::{
    build_ce, exact_step, iteration::AveragePolicy, AverageQ, BaseMdp, CeState, CommandExtension, GoalMap, Policy,
    Segment, SegmentStarts,
};

/// Every trajectory with positive probability, by direct product of the
/// initial, policy and transition terms.
pub fn enumerate_trajectories(ce: &CommandExtension<f64>, policy: &Policy<f64>) -> Vec<(f64, Vec<usize>, Vec<usize>, usize, usize)> {
    let nn = ce.horizon();
    let mut out = Vec::new();
    for s0 in 0..ce.n_states() {
        for h0 in 1..=nn {
            for g0 in 0..ce.n_goals() {
                let p0 = ce.base().mu0()[s0] * ce.initial_command(s0, h0, g0);
                if p0 == 0.0 {
                    continue;
                }
                let mut stack = vec![(p0, vec![s0], Vec::<usize>::new())];
                while let Some((p, states, actions)) = stack.pop() {
                    let t = actions.len();
                    if t == h0 {
                        let (mut states, mut actions) = (states, actions);
                        let last = *states.last().unwrap();
                        while actions.len() < nn {
                            actions.push(ce.absorbing_action());
                            states.push(last);
                        }
                        out.push((p, states, actions, h0, g0));
                        continue;
                    }
                    let s = states[t];
                    for a in 0..ce.n_actions() {
                        let pa = policy.row(CeState::new(s, h0 - t, g0))[a];
                        for s2 in 0..ce.n_states() {
                            let w = p * pa * ce.base().p(s, a, s2);
                            if w > 0.0 {
                                let mut st = states.clone();
                                st.push(s2);
                                let mut ac = actions.clone();
                                ac.push(a);
                                stack.push((w, st, ac));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Segment distribution: every window `(t, l)` with `t + l <= N` and
/// `l <= h_t` of every trajectory, weighted by the trajectory probability,
/// then normalized.
pub fn brute_force_segment_distribution(ce: &CommandExtension<f64>, policy: &Policy<f64>) -> BTreeMap<Segment, f64> {
    let nn = ce.horizon();
    let mut dist = BTreeMap::new();
    for (p, states, actions, h0, g0) in enumerate_trajectories(ce, policy) {
        for t in 0..nn {
            for l in 1..=nn - t {
                let h_t = h0.saturating_sub(t);
                if l > h_t {
                    continue;
                }
                let seg = Segment {
                    h0: h_t,
                    g0,
                    states: states[t..=t + l].to_vec(),
                    actions: actions[t..t + l].to_vec(),
                };
                *dist.entry(seg).or_insert(0.0) += p;
            }
        }
    }
    let total: f64 = dist.values().sum();
    dist.values_mut().for_each(|v| *v /= total);
    dist
}

pub fn total_variation(exact: &BTreeMap<Segment, f64>, samples: &[Segment]) -> f64 {
    let mut counts: BTreeMap<&Segment, usize> = BTreeMap::new();
    for s in samples {
        *counts.entry(s).or_default() += 1;
    }
    let n = samples.len() as f64;
    let mut tv = 0.0;
    for (seg, p) in exact {
        tv += (p - counts.get(seg).copied().unwrap_or(0) as f64 / n).abs();
    }
    for (seg, c) in &counts {
        if !exact.contains_key(*seg) {
            tv += *c as f64 / n;
        }
    }
    tv / 2.0
}

/// `Q_A * pi_A` renormalized per goal; rows with no mass keep `policy`.
pub fn bayes_step(ce: &CommandExtension<f64>, policy: &Policy<f64>) -> Policy<f64> {
    let starts = SegmentStarts::new(ce, policy);
    let avg: AveragePolicy<f64> = eudrl_core::average_policy(ce, policy, &starts);
    let q = AverageQ::new(ce, policy, &starts);
    let mut next = policy.clone();
    for st in ce.transient_states() {
        let Some(pa) = avg.row(st.s, st.h) else { continue };
        let num: Vec<f64> = (0..ce.n_actions())
            .map(|a| q.get(st.s, st.h, a, st.g).map_or(0.0, |qa| qa * pa[a]))
            .collect();
        let total: f64 = num.iter().sum();
        if total > 0.0 {
            for (dst, v) in next.row_mut(st).iter_mut().zip(&num) {
                *dst = v / total;
            }
        }
    }
    next
}

pub fn bayes_gap(ce: &CommandExtension<f64>, policy: &Policy<f64>) -> f64 {
    exact_step(ce, policy).max_abs_diff(&bayes_step(ce, policy))
}

/// Deterministic CE from a successor table `next[s * A + a]`, identity goals,
/// uniform start state and a uniform command over the feasible `(h, g)`.
pub fn deterministic_ce(n_states: usize, n_actions: usize, max_horizon: usize, next: &[usize]) -> CommandExtension<f64> {
    let mut t = vec![0.0; n_states * n_actions * n_states];
    for s in 0..n_states {
        for a in 0..n_actions {
            t[(s * n_actions + a) * n_states + next[s * n_actions + a]] = 1.0;
        }
    }
    let base = BaseMdp::new(n_states, n_actions, t, vec![1.0 / n_states as f64; n_states]).unwrap();
    // reachable[h][s] = set of states reachable in exactly h steps
    let mut reach = vec![vec![vec![false; n_states]; n_states]; max_horizon + 1];
    for s in 0..n_states {
        reach[0][s][s] = true;
    }
    for h in 1..=max_horizon {
        for s in 0..n_states {
            for a in 0..n_actions {
                let s2 = next[s * n_actions + a];
                for g in 0..n_states {
                    if reach[h - 1][s2][g] {
                        reach[h][s][g] = true;
                    }
                }
            }
        }
    }
    let ng = n_states;
    let mut initial = vec![0.0; n_states * (max_horizon + 1) * ng];
    for s in 0..n_states {
        let feasible: Vec<(usize, usize)> = (1..=max_horizon)
            .flat_map(|h| (0..ng).map(move |g| (h, g)))
            .filter(|&(h, g)| reach[h][s][g])
            .collect();
        for &(h, g) in &feasible {
            initial[(s * (max_horizon + 1) + h) * ng + g] = 1.0 / feasible.len() as f64;
        }
    }
    build_ce(base, GoalMap::identity(n_states), max_horizon, initial).unwrap()
}

/// All successor tables for `n_states` states and `n_actions` actions.
pub fn all_successor_tables(n_states: usize, n_actions: usize) -> Vec<Vec<usize>> {
    let cells = n_states * n_actions;
    let total = n_states.pow(cells as u32);
    (0..total)
        .map(|mut code| {
            (0..cells)
                .map(|_| {
                    let d = code % n_states;
                    code /= n_states;
                    d
                })
                .collect()
        })
        .collect()
}
