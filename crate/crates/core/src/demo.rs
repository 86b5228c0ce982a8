//! Two-state, horizon-one environment where eUDRL stalls at a suboptimal
//! fixed point for every `alpha < 1`.
//!
//! From state 0, action 0 stays with probability `alpha` and action 1 stays
//! with probability `1 - alpha`. State 1 loops on itself. Episodes start in
//! state 0 with horizon 1 and a uniformly drawn goal; goals are states.

use crate::command::{build_ce, CeState, CommandExtension, GoalMap};
use crate::error::{Error, Result};
use crate::mdp::BaseMdp;
use crate::policy::Policy;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemoParams {
    alpha: f64,
}

impl DemoParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.5..=1.0).contains(&alpha) {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

pub fn build_demo<T: Scalar>(alpha: f64) -> Result<CommandExtension<T>> {
    let alpha = T::lit(DemoParams::new(alpha)?.alpha);
    let (one, zero) = (T::one(), T::zero());
    let transitions = vec![
        alpha, one - alpha, //
        one - alpha, alpha, //
        zero, one, //
        zero, one,
    ];
    let base = BaseMdp::new(2, 2, transitions, vec![one, zero])?;
    let half = T::lit(0.5);
    // [s][h in 0..=1][g]
    let initial_command = vec![zero, zero, half, half, zero, zero, half, half];
    build_ce(base, GoalMap::identity(2), 1, initial_command)
}

/// The policy eUDRL reaches after one step: `pi(a | 0, 1, g) = p_T(g | a, 0)`.
///
/// State 1 is never a start state; its rows copy state 0's so the policy
/// stays in the symmetric family.
pub fn fixed_point<T: Scalar>(alpha: f64) -> Result<Policy<T>> {
    let ce = build_demo::<T>(alpha)?;
    let base = ce.base().clone();
    Policy::from_fn(&ce, |st: CeState, a| base.p(0, a, st.g))
}

/// The optimal policy: take the action matching the goal.
pub fn optimal_policy<T: Scalar>(alpha: f64) -> Result<Policy<T>> {
    let ce = build_demo::<T>(alpha)?;
    Policy::deterministic(&ce, |st| st.g)
}

/// Policy with `pi(a | 0, 1, g) = beta` if `a == g`, else `1 - beta`.
pub fn symmetric_policy<T: Scalar>(alpha: f64, beta: f64) -> Result<Policy<T>> {
    let ce = build_demo::<T>(alpha)?;
    let beta = T::lit(beta);
    Policy::from_fn(&ce, |st, a| if a == st.g { beta } else { T::one() - beta })
}
