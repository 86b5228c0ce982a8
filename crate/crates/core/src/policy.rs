use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::command::{CeState, CommandExtension};
use crate::error::{Error, Result};
use crate::scalar::{row_sum, Scalar};

/// Tabular command-conditioned policy `pi(a | s, h, g)` over transient CE
/// states. Absorbing states always take the fixed absorbing action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Policy<T> {
    n_states: usize,
    max_horizon: usize,
    n_goals: usize,
    n_actions: usize,
    absorbing_action: usize,
    /// Flattened `[s][h - 1][g][a]`.
    probs: Vec<T>,
}

impl<T: Scalar> Policy<T> {
    /// Policy with every row produced by `row(state, action)`. Rows are
    /// validated, not renormalized.
    pub fn from_fn(ce: &CommandExtension<T>, mut row: impl FnMut(CeState, usize) -> T) -> Result<Self> {
        let na = ce.n_actions();
        let mut probs = Vec::with_capacity(ce.n_transient() * na);
        for st in ce.transient_states() {
            probs.extend((0..na).map(|a| row(st, a)));
        }
        let policy = Self {
            n_states: ce.n_states(),
            max_horizon: ce.horizon(),
            n_goals: ce.n_goals(),
            n_actions: na,
            absorbing_action: ce.absorbing_action(),
            probs,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn uniform(ce: &CommandExtension<T>) -> Self {
        let p = T::one() / T::from_usize(ce.n_actions()).unwrap();
        Self::from_fn(ce, |_, _| p).expect("uniform rows are normalized")
    }

    /// Deterministic policy taking `choose(state)` everywhere.
    pub fn deterministic(ce: &CommandExtension<T>, mut choose: impl FnMut(CeState) -> usize) -> Result<Self> {
        let mut current = None;
        Self::from_fn(ce, |st, a| {
            if a == 0 {
                current = Some(choose(st));
            }
            if current == Some(a) {
                T::one()
            } else {
                T::zero()
            }
        })
    }

    /// Random policy with every row drawn from a flat Dirichlet, hence full
    /// support almost surely.
    pub fn random<R: Rng + ?Sized>(ce: &CommandExtension<T>, rng: &mut R) -> Self {
        let na = ce.n_actions();
        let mut probs = Vec::with_capacity(ce.n_transient() * na);
        for _ in 0..ce.n_transient() {
            probs.extend(crate::mdp::flat_dirichlet::<T, _>(na, rng));
        }
        Self {
            n_states: ce.n_states(),
            max_horizon: ce.horizon(),
            n_goals: ce.n_goals(),
            n_actions: na,
            absorbing_action: ce.absorbing_action(),
            probs,
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn absorbing_action(&self) -> usize {
        self.absorbing_action
    }

    #[inline]
    fn offset(&self, st: CeState) -> usize {
        debug_assert!(st.is_transient());
        ((st.s * self.max_horizon + st.h - 1) * self.n_goals + st.g) * self.n_actions
    }

    /// Action distribution at a transient state.
    #[inline]
    pub fn row(&self, st: CeState) -> &[T] {
        let o = self.offset(st);
        &self.probs[o..o + self.n_actions]
    }

    #[inline]
    pub fn row_mut(&mut self, st: CeState) -> &mut [T] {
        let o = self.offset(st);
        let n = self.n_actions;
        &mut self.probs[o..o + n]
    }

    /// `pi(a | state)`, including the deterministic absorbing action.
    #[inline]
    pub fn prob(&self, st: CeState, action: usize) -> T {
        if st.is_absorbing() {
            return if action == self.absorbing_action { T::one() } else { T::zero() };
        }
        self.row(st)[action]
    }

    /// Rows in `(s, h, g)` order.
    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.probs.chunks_exact(self.n_actions)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.n_states * self.max_horizon * self.n_goals * self.n_actions;
        if self.probs.len() != expected {
            return Err(Error::InvalidPolicy(format!(
                "{} probabilities, expected {expected}",
                self.probs.len()
            )));
        }
        if self.absorbing_action >= self.n_actions {
            return Err(Error::InvalidPolicy(format!(
                "absorbing action {} out of range",
                self.absorbing_action
            )));
        }
        for (i, row) in self.rows().enumerate() {
            let g = i % self.n_goals;
            let h = (i / self.n_goals) % self.max_horizon + 1;
            let s = i / (self.n_goals * self.max_horizon);
            if row.iter().any(|p| *p < T::zero() || p.is_nan()) {
                return Err(Error::InvalidPolicy(format!("negative entry in row (s={s}, h={h}, g={g})")));
            }
            let sum = row_sum(row);
            if (sum - T::one()).abs() > T::prob_tol() {
                return Err(Error::InvalidPolicy(format!("row (s={s}, h={h}, g={g}) sums to {sum}")));
            }
        }
        Ok(())
    }

    /// Checks that the policy is shaped for `ce` and normalized.
    pub fn check_against(&self, ce: &CommandExtension<T>) -> Result<()> {
        if (self.n_states, self.max_horizon, self.n_goals, self.n_actions)
            != (ce.n_states(), ce.horizon(), ce.n_goals(), ce.n_actions())
        {
            return Err(Error::InvalidPolicy(format!(
                "policy shaped (S={}, N={}, G={}, A={}) does not match the environment (S={}, N={}, G={}, A={})",
                self.n_states,
                self.max_horizon,
                self.n_goals,
                self.n_actions,
                ce.n_states(),
                ce.horizon(),
                ce.n_goals(),
                ce.n_actions()
            )));
        }
        if self.absorbing_action != ce.absorbing_action() {
            return Err(Error::InvalidPolicy("absorbing action differs from the environment".into()));
        }
        self.validate()
    }

    /// Largest absolute difference over all transient rows.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }

    /// Largest total-variation distance between corresponding rows.
    pub fn max_tv(&self, other: &Self) -> T {
        self.rows()
            .zip(other.rows())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (*x - *y).abs()).sum::<T>() / T::lit(2.0))
            .fold(T::zero(), T::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policy serializes")
    }

    /// Parses a snapshot written by [`Policy::to_json`] and checks it against `ce`.
    pub fn from_json(json: &str, ce: &CommandExtension<T>) -> Result<Self> {
        let policy: Self = serde_json::from_str(json)?;
        policy.check_against(ce)?;
        Ok(policy)
    }
}
