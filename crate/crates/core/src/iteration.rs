//! The eUDRL policy update.
//!
//! Each step refits the policy to the first-action conditional of the
//! segment distribution given the relabeled command (segment length, goal
//! reached at the segment end). Without function approximation the fit is
//! exact, which gives the closed form
//!
//! ```text
//! pi'(a | s, h, g) ∝ sum_{h' >= h, g'} w(h', g' | s, h) pi(a | s, h', g') R(g | s, h', g', a, h)
//! ```
//!
//! where `w` are the segment start weights and `R` the goal-reach
//! probability. The same quantity factors as `Q_A * pi_A` (average Q times
//! average policy) after Bayes' rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::command::{CeState, CommandExtension};
use crate::dp::{goal_masses, reach_distribution};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::scalar::Scalar;
use crate::segment::{sample_segments, start_weights_from, visitation, BatchConfig, Segment, StartWeights};

/// Start weights for every `(s, l)`, from one visitation pass.
#[derive(Debug, Clone)]
pub struct SegmentStarts<T> {
    max_horizon: usize,
    weights: Vec<StartWeights<T>>,
}

impl<T: Scalar> SegmentStarts<T> {
    pub fn new(ce: &CommandExtension<T>, policy: &Policy<T>) -> Self {
        let nu = visitation(ce, policy);
        let nn = ce.horizon();
        let weights = (0..ce.n_states())
            .flat_map(|s| (1..=nn).map(move |l| (s, l)))
            .map(|(s, l)| start_weights_from(&nu, s, l))
            .collect();
        Self { max_horizon: nn, weights }
    }

    pub fn get(&self, s: usize, l: usize) -> &StartWeights<T> {
        &self.weights[s * self.max_horizon + l - 1]
    }
}

/// `pi_A(a | s, h)`; rows whose start weights are empty are undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragePolicy<T> {
    max_horizon: usize,
    n_actions: usize,
    rows: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> AveragePolicy<T> {
    pub fn row(&self, s: usize, h: usize) -> Option<&[T]> {
        self.rows[s * self.max_horizon + h - 1].as_deref()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
}

/// Average policy: the current policy marginalized over the start command
/// of segments of length `h` starting in `s`.
pub fn average_policy<T: Scalar>(
    ce: &CommandExtension<T>,
    policy: &Policy<T>,
    starts: &SegmentStarts<T>,
) -> AveragePolicy<T> {
    let na = ce.n_actions();
    let mut rows = Vec::with_capacity(ce.n_states() * ce.horizon());
    for s in 0..ce.n_states() {
        for h in 1..=ce.horizon() {
            let w = starts.get(s, h);
            if w.is_empty() {
                rows.push(None);
                continue;
            }
            let mut row = vec![T::zero(); na];
            for (h2, g2, wt) in w.support() {
                for (r, p) in row.iter_mut().zip(policy.row(CeState::new(s, h2, g2))) {
                    *r = *r + wt * *p;
                }
            }
            rows.push(Some(row));
        }
    }
    AveragePolicy { max_horizon: ce.horizon(), n_actions: na, rows }
}

/// `Q_A(s, h, a)` for target goal `g`: probability that a segment of length
/// `h` starting in `s` with first action `a` ends in `g`'s preimage. `None`
/// when that first action has zero probability.
pub fn average_q<T: Scalar>(
    ce: &CommandExtension<T>,
    policy: &Policy<T>,
    starts: &SegmentStarts<T>,
    s: usize,
    h: usize,
    action: usize,
    target: usize,
) -> Option<T> {
    let mut num = T::zero();
    let mut den = T::zero();
    for (h2, g2, wt) in starts.get(s, h).support() {
        let start = CeState::new(s, h2, g2);
        let bayes = wt * policy.row(start)[action];
        if bayes == T::zero() {
            continue;
        }
        let dist = reach_distribution(ce, policy, start, action, h);
        let hit: T = ce.goal_map().preimage(target).iter().map(|&x| dist[x]).sum();
        num = num + bayes * hit;
        den = den + bayes;
    }
    (den > T::zero()).then(|| num / den)
}

/// `Q_A` for every `(s, h, a, g)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageQ<T> {
    max_horizon: usize,
    n_actions: usize,
    n_goals: usize,
    values: Vec<Option<T>>,
}

impl<T: Scalar> AverageQ<T> {
    pub fn new(ce: &CommandExtension<T>, policy: &Policy<T>, starts: &SegmentStarts<T>) -> Self {
        let (nn, na, ng) = (ce.horizon(), ce.n_actions(), ce.n_goals());
        let mut values = Vec::with_capacity(ce.n_states() * nn * na * ng);
        for s in 0..ce.n_states() {
            for h in 1..=nn {
                for a in 0..na {
                    for g in 0..ng {
                        values.push(average_q(ce, policy, starts, s, h, a, g));
                    }
                }
            }
        }
        Self { max_horizon: nn, n_actions: na, n_goals: ng, values }
    }

    pub fn get(&self, s: usize, h: usize, action: usize, target: usize) -> Option<T> {
        self.values[((s * self.max_horizon + h - 1) * self.n_actions + action) * self.n_goals + target]
    }
}

/// One exact eUDRL update. Commands that are never realized keep their
/// current row.
pub fn exact_step<T: Scalar>(ce: &CommandExtension<T>, policy: &Policy<T>) -> Policy<T> {
    let starts = SegmentStarts::new(ce, policy);
    let (na, ng) = (ce.n_actions(), ce.n_goals());
    let mut next = policy.clone();
    let mut scores = vec![T::zero(); ng * na];
    for s in 0..ce.n_states() {
        for h in 1..=ce.horizon() {
            let w = starts.get(s, h);
            if w.is_empty() {
                continue;
            }
            scores.iter_mut().for_each(|x| *x = T::zero());
            for (h2, g2, wt) in w.support() {
                let start = CeState::new(s, h2, g2);
                for (a, &pa) in policy.row(start).iter().enumerate() {
                    let weight = wt * pa;
                    if weight == T::zero() {
                        continue;
                    }
                    let hits = goal_masses(ce, &reach_distribution(ce, policy, start, a, h));
                    for (g, hit) in hits.into_iter().enumerate() {
                        scores[g * na + a] = scores[g * na + a] + weight * hit;
                    }
                }
            }
            for g in 0..ng {
                let row = &scores[g * na..(g + 1) * na];
                let total: T = row.iter().copied().sum();
                if total > T::zero() {
                    for (dst, src) in next.row_mut(CeState::new(s, h, g)).iter_mut().zip(row) {
                        *dst = *src / total;
                    }
                }
            }
        }
    }
    next
}

/// Tabular maximum-likelihood fit of `pi(a0 | s0, l, rho(s_l))` to segments.
/// Inputs without data keep the row of `previous`.
pub fn fit_segments<T: Scalar>(ce: &CommandExtension<T>, previous: &Policy<T>, segments: &[Segment]) -> Policy<T> {
    let na = ce.n_actions();
    let mut counts = vec![0u64; ce.n_transient() * na];
    for seg in segments {
        let cmd = CeState::new(seg.s0(), seg.len(), seg.realized_goal(ce.goal_map()));
        counts[ce.transient_index(cmd) * na + seg.actions[0]] += 1;
    }
    let mut next = previous.clone();
    for st in ce.transient_states() {
        let row = &counts[ce.transient_index(st) * na..][..na];
        let total: u64 = row.iter().sum();
        if total == 0 {
            continue;
        }
        let total = T::from_u64(total).unwrap();
        for (dst, c) in next.row_mut(st).iter_mut().zip(row) {
            *dst = T::from_u64(*c).unwrap() / total;
        }
    }
    next
}

/// One sampled eUDRL update: a batch of trajectories under `policy`,
/// relabeled segments, and the empirical first-action conditional.
pub fn sampled_step<T: Scalar, R: Rng + ?Sized>(
    ce: &CommandExtension<T>,
    policy: &Policy<T>,
    config: BatchConfig,
    rng: &mut R,
) -> Result<Policy<T>> {
    sampled_step_with_segments(ce, policy, config, rng).map(|(next, _)| next)
}

/// As [`sampled_step`], also returning the training segments.
pub fn sampled_step_with_segments<T: Scalar, R: Rng + ?Sized>(
    ce: &CommandExtension<T>,
    policy: &Policy<T>,
    config: BatchConfig,
    rng: &mut R,
) -> Result<(Policy<T>, Vec<Segment>)> {
    let segments = sample_segments(ce, policy, config, rng.random())?;
    Ok((fit_segments(ce, policy, &segments), segments))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    Exact,
    Sampled(BatchConfig),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub iterations: usize,
    pub mode: StepMode,
    pub seed: u64,
}

/// Applies `iterations` updates from `policy0`, calling `observe(n, pi_n)`
/// for `n = 0..=iterations` and collecting its results.
pub fn run<T, M, F>(ce: &CommandExtension<T>, policy0: Policy<T>, config: RunConfig, mut observe: F) -> Result<Vec<M>>
where
    T: Scalar,
    F: FnMut(usize, &Policy<T>) -> Result<M>,
{
    run_detailed(ce, policy0, config, |n, p, _| observe(n, p))
}

/// As [`run`]; in sampled mode `observe` also sees the segments `pi_n` was
/// fitted to (`None` for `n = 0` and in exact mode).
pub fn run_detailed<T, M, F>(
    ce: &CommandExtension<T>,
    policy0: Policy<T>,
    config: RunConfig,
    mut observe: F,
) -> Result<Vec<M>>
where
    T: Scalar,
    F: FnMut(usize, &Policy<T>, Option<&[Segment]>) -> Result<M>,
{
    if let StepMode::Sampled(batch) = config.mode {
        if batch.batch_size == 0 {
            return Err(Error::EmptyBatch);
        }
    }
    policy0.check_against(ce)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut policy = policy0;
    let mut rows = Vec::with_capacity(config.iterations + 1);
    rows.push(observe(0, &policy, None)?);
    for n in 1..=config.iterations {
        match config.mode {
            StepMode::Exact => {
                policy = exact_step(ce, &policy);
                rows.push(observe(n, &policy, None)?);
            }
            StepMode::Sampled(batch) => {
                let (next, segments) = sampled_step_with_segments(ce, &policy, batch, &mut rng)?;
                policy = next;
                rows.push(observe(n, &policy, Some(&segments))?);
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::command::random_ce;
    use crate::demo::{build_demo, fixed_point, optimal_policy, symmetric_policy};

    const ST0: CeState = CeState { s: 0, h: 1, g: 0 };
    const ST1: CeState = CeState { s: 0, h: 1, g: 1 };

    #[test]
    fn demo_average_policy_is_flat_under_symmetry() {
        let ce = build_demo::<f64>(0.6).unwrap();
        for beta in [0.0, 0.3, 0.5, 0.9, 1.0] {
            let pi = symmetric_policy::<f64>(0.6, beta).unwrap();
            let avg = average_policy(&ce, &pi, &SegmentStarts::new(&ce, &pi));
            let row = avg.row(0, 1).unwrap();
            assert!((row[0] - 0.5).abs() < 1e-15 && (row[1] - 0.5).abs() < 1e-15);
            assert!(avg.row(1, 1).is_none());
        }
    }

    #[test]
    fn command_independent_policy_is_its_own_average() {
        let ce = random_ce::<f64>(3, 3, 2, 3, 3).unwrap();
        let base_row = [0.2, 0.5, 0.3];
        let pi = Policy::from_fn(&ce, |_, a| base_row[a]).unwrap();
        let avg = average_policy(&ce, &pi, &SegmentStarts::new(&ce, &pi));
        for s in 0..3 {
            for h in 1..=3 {
                if let Some(row) = avg.row(s, h) {
                    for a in 0..3 {
                        assert!((row[a] - base_row[a]).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn single_horizon_average_policy() {
        let ce = random_ce::<f64>(3, 2, 3, 1, 14).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pi = Policy::random(&ce, &mut rng);
        let avg = average_policy(&ce, &pi, &SegmentStarts::new(&ce, &pi));
        for s in 0..3 {
            let row = avg.row(s, 1).unwrap();
            for (a, &got) in row.iter().enumerate() {
                let expect: f64 = (0..3)
                    .map(|g| ce.initial_command(s, 1, g) * pi.row(CeState::new(s, 1, g))[a])
                    .sum();
                assert!((got - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn demo_average_q() {
        let ce = build_demo::<f64>(0.6).unwrap();
        let pi = Policy::uniform(&ce);
        let starts = SegmentStarts::new(&ce, &pi);
        assert!((average_q(&ce, &pi, &starts, 0, 1, 0, 0).unwrap() - 0.6).abs() < 1e-15);
        assert!((average_q(&ce, &pi, &starts, 0, 1, 1, 0).unwrap() - 0.4).abs() < 1e-15);
        let total: f64 = (0..2).map(|g| average_q(&ce, &pi, &starts, 0, 1, 1, g).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(average_q(&ce, &pi, &starts, 1, 1, 0, 0).is_none());
    }

    #[test]
    fn horizon_one_average_q_is_policy_free() {
        let ce = random_ce::<f64>(3, 2, 2, 3, 30).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pi = Policy::random(&ce, &mut rng);
        let starts = SegmentStarts::new(&ce, &pi);
        for s in 0..3 {
            for a in 0..2 {
                for g in 0..2 {
                    let expect: f64 = ce.goal_map().preimage(g).iter().map(|&x| ce.base().p(s, a, x)).sum();
                    if let Some(q) = average_q(&ce, &pi, &starts, s, 1, a, g) {
                        assert!((q - expect).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn demo_exact_step_lands_on_fixed_point() {
        let ce = build_demo::<f64>(0.6).unwrap();
        for pi0 in [Policy::uniform(&ce), optimal_policy(0.6).unwrap()] {
            let pi1 = exact_step(&ce, &pi0);
            assert!((pi1.row(ST0)[0] - 0.6).abs() < 1e-12);
            assert!((pi1.row(ST0)[1] - 0.4).abs() < 1e-12);
            assert!((pi1.row(ST1)[1] - 0.6).abs() < 1e-12);
        }
        let fp = fixed_point::<f64>(0.6).unwrap();
        assert!(exact_step(&ce, &fp).max_abs_diff(&fp) < 1e-12);
    }

    #[test]
    fn deterministic_demo_converges_in_one_step() {
        let ce = build_demo::<f64>(1.0).unwrap();
        let pi1 = exact_step(&ce, &Policy::uniform(&ce));
        assert_eq!(pi1.row(ST0), &[1.0, 0.0]);
        assert_eq!(pi1.row(ST1), &[0.0, 1.0]);
        assert_eq!(exact_step(&ce, &pi1), pi1);
    }

    #[test]
    fn unrealized_commands_keep_their_rows() {
        let ce = build_demo::<f64>(0.6).unwrap();
        let pi0 = Policy::uniform(&ce);
        let pi1 = exact_step(&ce, &pi0);
        assert_eq!(pi1.row(CeState::new(1, 1, 0)), pi0.row(CeState::new(1, 1, 0)));
    }

    #[test]
    fn sampled_demo_step_is_close() {
        let ce = build_demo::<f64>(0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = BatchConfig { batch_size: 10_000, ..BatchConfig::default() };
        let pi1 = sampled_step(&ce, &Policy::uniform(&ce), cfg, &mut rng).unwrap();
        let fp = fixed_point::<f64>(0.6).unwrap();
        for st in [ST0, ST1] {
            for a in 0..2 {
                assert!((pi1.row(st)[a] - fp.row(st)[a]).abs() <= 0.05);
            }
        }
        assert!(sampled_step(&ce, &pi1, BatchConfig { batch_size: 0, ..cfg }, &mut rng).is_err());
    }

    #[test]
    fn sampled_deterministic_demo_is_exact() {
        let ce = build_demo::<f64>(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pi1 = sampled_step(&ce, &Policy::uniform(&ce), BatchConfig::default(), &mut rng).unwrap();
        assert_eq!(pi1.row(ST0), &[1.0, 0.0]);
        assert_eq!(pi1.row(ST1), &[0.0, 1.0]);
    }

    #[test]
    fn run_collects_initial_row_and_is_deterministic() {
        let ce = build_demo::<f64>(0.6).unwrap();
        let cfg = RunConfig { iterations: 0, mode: StepMode::Exact, seed: 0 };
        let rows = run(&ce, Policy::uniform(&ce), cfg, |n, p| Ok((n, p.clone()))).unwrap();
        assert_eq!(rows.len(), 1);
        let cfg = RunConfig {
            iterations: 3,
            mode: StepMode::Sampled(BatchConfig { batch_size: 500, segments_per_trajectory: 1, workers: 2 }),
            seed: 9,
        };
        let a = run(&ce, Policy::uniform(&ce), cfg, |_, p| Ok(p.clone())).unwrap();
        let b = run(&ce, Policy::uniform(&ce), cfg, |_, p| Ok(p.clone())).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
    }
}
