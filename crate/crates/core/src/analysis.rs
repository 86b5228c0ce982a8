//! Divergence diagnostics: the horizon-one non-convergence certificate and
//! the per-iteration metrics (RMSVE, sup distance to the optimal policy,
//! goal-reaching objective).

use serde::Serialize;

use crate::command::{CeState, CommandExtension};
use crate::dp::{argmax_set, evaluate, j_from_values, optimal, ValueTables};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::scalar::Scalar;
use crate::segment::visitation;

/// Witness that eUDRL cannot converge to the optimal policy set: at state
/// `s`, goals `g0` and `g1` have disjoint horizon-one optimal action sets
/// while their horizon-one action values stay within a factor `1 - delta`
/// of the best one. Applicable iff `delta < 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct LemmaCertificate<T> {
    pub s: usize,
    pub g0: usize,
    pub g1: usize,
    #[serde(rename = "M0")]
    pub m0: Vec<usize>,
    #[serde(rename = "M1")]
    pub m1: Vec<usize>,
    pub delta: T,
    pub applicable: bool,
}

/// Scans every state and unordered goal pair for a certificate.
///
/// Horizon-one action values do not depend on the policy, so this is a
/// property of the environment alone. Goals unreachable in one step from `s`
/// are skipped.
pub fn check_lemma<T: Scalar>(ce: &CommandExtension<T>) -> Vec<LemmaCertificate<T>> {
    let na = ce.n_actions();
    let mut certs = Vec::new();
    for s in 0..ce.n_states() {
        let q: Vec<Vec<T>> = (0..ce.n_goals())
            .map(|g| {
                (0..na)
                    .map(|a| ce.goal_map().preimage(g).iter().map(|&x| ce.base().p(s, a, x)).sum())
                    .collect()
            })
            .collect();
        let stats: Vec<Option<(Vec<usize>, T)>> = q
            .iter()
            .map(|row| {
                let best = row.iter().copied().fold(T::neg_infinity(), T::max);
                if best <= T::zero() {
                    return None;
                }
                let worst = row.iter().copied().fold(T::infinity(), T::min);
                Some((argmax_set(row, best), T::one() - worst / best))
            })
            .collect();
        for g0 in 0..ce.n_goals() {
            for g1 in g0 + 1..ce.n_goals() {
                let (Some((m0, d0)), Some((m1, d1))) = (&stats[g0], &stats[g1]) else {
                    continue;
                };
                if m0.iter().any(|a| m1.contains(a)) {
                    continue;
                }
                let delta = d0.max(*d1);
                certs.push(LemmaCertificate {
                    s,
                    g0,
                    g1,
                    m0: m0.clone(),
                    m1: m1.clone(),
                    delta,
                    applicable: delta < T::one(),
                });
            }
        }
    }
    certs
}

/// Root mean square of `V_n - V*` over `states`, unweighted.
pub fn rmsve<T: Scalar>(values: &ValueTables<T>, optimal: &ValueTables<T>, states: &[CeState]) -> Result<T> {
    if states.is_empty() {
        return Err(Error::EmptyStateSet);
    }
    let sq: T = states.iter().map(|st| (values.v(*st) - optimal.v(*st)).powi(2)).sum();
    Ok((sq / T::from_usize(states.len()).unwrap()).sqrt())
}

/// RMSVE with squared errors weighted by the initial CE distribution.
/// States with no initial mass contribute nothing.
pub fn rmsve_initial_weighted<T: Scalar>(
    ce: &CommandExtension<T>,
    values: &ValueTables<T>,
    optimal: &ValueTables<T>,
    states: &[CeState],
) -> Result<T> {
    let total: T = states.iter().map(|st| ce.initial_prob(*st)).sum();
    if states.is_empty() || total <= T::zero() {
        return Err(Error::EmptyStateSet);
    }
    let sq: T = states
        .iter()
        .map(|st| ce.initial_prob(*st) * (values.v(*st) - optimal.v(*st)).powi(2))
        .sum();
    Ok((sq / total).sqrt())
}

/// Largest `|pi_n(a|st) - pi*(a|st)|` over `states` and actions.
pub fn sup_dist<T: Scalar>(policy: &Policy<T>, reference: &Policy<T>, states: &[CeState]) -> T {
    states
        .iter()
        .flat_map(|st| policy.row(*st).iter().zip(reference.row(*st)))
        .map(|(a, b)| (*a - *b).abs())
        .fold(T::zero(), T::max)
}

/// Transient states visited with positive probability under the uniform
/// policy (equivalently under any full-support policy).
pub fn metric_state_set<T: Scalar>(ce: &CommandExtension<T>) -> Vec<CeState> {
    let nu = visitation(ce, &Policy::uniform(ce));
    ce.transient_states()
        .filter(|st| (0..=ce.horizon()).any(|t| nu.get(t, *st) > T::zero()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(bound = "T: Scalar")]
pub struct MetricsRow<T> {
    pub n: usize,
    pub rmsve: T,
    pub sup_dist: T,
    pub j: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RmsveWeighting {
    #[default]
    Uniform,
    Initial,
}

/// Precomputed optimum and state set for per-iteration metrics.
#[derive(Debug, Clone)]
pub struct MetricsEvaluator<'a, T> {
    ce: &'a CommandExtension<T>,
    optimal_values: ValueTables<T>,
    reference: Policy<T>,
    states: Vec<CeState>,
    weighting: RmsveWeighting,
}

impl<'a, T: Scalar> MetricsEvaluator<'a, T> {
    /// The reference optimal policy takes the lowest-index maximizer.
    pub fn new(ce: &'a CommandExtension<T>) -> Self {
        let (optimal_values, sets) = optimal(ce);
        let reference = sets.greedy_policy(ce);
        Self { ce, optimal_values, reference, states: metric_state_set(ce), weighting: RmsveWeighting::Uniform }
    }

    pub fn with_weighting(mut self, weighting: RmsveWeighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn reference_policy(&self) -> &Policy<T> {
        &self.reference
    }

    pub fn optimal_values(&self) -> &ValueTables<T> {
        &self.optimal_values
    }

    pub fn states(&self) -> &[CeState] {
        &self.states
    }

    pub fn row(&self, n: usize, policy: &Policy<T>) -> Result<MetricsRow<T>> {
        let values = evaluate(self.ce, policy);
        let rmsve = match self.weighting {
            RmsveWeighting::Uniform => rmsve(&values, &self.optimal_values, &self.states)?,
            RmsveWeighting::Initial => {
                rmsve_initial_weighted(self.ce, &values, &self.optimal_values, &self.states)?
            }
        };
        Ok(MetricsRow {
            n,
            rmsve,
            sup_dist: sup_dist(policy, &self.reference, &self.states),
            j: j_from_values(self.ce, &values),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::command::random_ce;
    use crate::demo::{build_demo, fixed_point, optimal_policy};

    #[test]
    fn demo_certificates() {
        let c = check_lemma(&build_demo::<f64>(0.6).unwrap());
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].s, c[0].g0, c[0].g1), (0, 0, 1));
        assert_eq!((c[0].m0.as_slice(), c[0].m1.as_slice()), (&[0][..], &[1][..]));
        assert!((c[0].delta - 1.0 / 3.0).abs() < 1e-12);
        assert!(c[0].applicable);

        let c = check_lemma(&build_demo::<f64>(1.0).unwrap());
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].delta, 1.0);
        assert!(!c[0].applicable);

        assert!(check_lemma(&build_demo::<f64>(0.5).unwrap()).is_empty());
    }

    #[test]
    fn delta_grows_with_alpha() {
        let mut last = -1.0;
        for alpha in [0.6, 0.7, 0.8, 0.9] {
            let d = check_lemma(&build_demo::<f64>(alpha).unwrap())[0].delta;
            assert!((d - (2.0 * alpha - 1.0) / alpha).abs() < 1e-12);
            assert!(d > last);
            last = d;
        }
    }

    #[test]
    fn certificate_json_field_names() {
        let c = check_lemma(&build_demo::<f64>(0.6).unwrap());
        let v: serde_json::Value = serde_json::to_value(&c[0]).unwrap();
        for key in ["s", "g0", "g1", "M0", "M1", "delta", "applicable"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn demo_metric_values() {
        let ce = build_demo::<f64>(0.6).unwrap();
        let eval = MetricsEvaluator::new(&ce);
        assert_eq!(eval.states(), &[CeState::new(0, 1, 0), CeState::new(0, 1, 1)]);
        let row = eval.row(1, &fixed_point(0.6).unwrap()).unwrap();
        assert!((row.rmsve - 0.08).abs() < 1e-12);
        assert!((row.sup_dist - 0.4).abs() < 1e-12);
        assert!((row.j - 0.52).abs() < 1e-12);
        let row = eval.row(0, &optimal_policy(0.6).unwrap()).unwrap();
        assert_eq!((row.rmsve, row.sup_dist), (0.0, 0.0));
        assert!((row.j - 0.6).abs() < 1e-12);
    }

    #[test]
    fn tie_case_sup_dist() {
        let ce = build_demo::<f64>(0.5).unwrap();
        let eval = MetricsEvaluator::new(&ce);
        let row = eval.row(1, &fixed_point(0.5).unwrap()).unwrap();
        assert!((row.sup_dist - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rmsve_edge_cases() {
        let ce = random_ce::<f64>(3, 2, 2, 2, 1).unwrap();
        let (opt, _) = optimal(&ce);
        let states: Vec<_> = ce.transient_states().collect();
        assert_eq!(rmsve(&opt, &opt, &states).unwrap(), 0.0);
        assert!(matches!(rmsve(&opt, &opt, &[]), Err(Error::EmptyStateSet)));

        let demo = build_demo::<f64>(0.6).unwrap();
        let (opt, _) = optimal(&demo);
        // V(0,1,0) under "always action 1" is 0.4 versus 0.6 optimal
        let pi = Policy::deterministic(&demo, |_| 1).unwrap();
        let v = evaluate(&demo, &pi);
        let r = rmsve(&v, &opt, &[CeState::new(0, 1, 0)]).unwrap();
        assert!((r - 0.2).abs() < 1e-12);
        let w = rmsve_initial_weighted(&demo, &v, &opt, &[CeState::new(0, 1, 0), CeState::new(0, 1, 1)]).unwrap();
        assert!((w - (0.5f64 * 0.04).sqrt()).abs() < 1e-12);
    }
}
