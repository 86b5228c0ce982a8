//! Finite base MDP: dense state and action indices, a transition tensor and
//! an initial state distribution. Rewards live on the command extension.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use crate::error::{Error, Result};
use crate::scalar::{row_sum, Scalar};

/// First invariant a [`BaseMdp`] fails.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Shape { what: &'static str, expected: usize, found: usize },
    NegativeTransition { state: usize, action: usize, next: usize, value: f64 },
    Row { state: usize, action: usize, sum: f64 },
    NegativeInitial { state: usize, value: f64 },
    Initial { sum: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape { what, expected, found } => {
                write!(f, "{what} has length {found}, expected {expected}")
            }
            Violation::NegativeTransition { state, action, next, value } => write!(
                f,
                "p_T[{state}][{action}][{next}] = {value} is negative"
            ),
            Violation::Row { state, action, sum } => {
                write!(f, "transition row (s={state}, a={action}) sums to {sum}")
            }
            Violation::NegativeInitial { state, value } => {
                write!(f, "mu0[{state}] = {value} is negative")
            }
            Violation::Initial { sum } => write!(f, "mu0 sums to {sum}"),
        }
    }
}

impl std::error::Error for Violation {}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseMdp<T> {
    n_states: usize,
    n_actions: usize,
    /// Flattened `[state][action][next_state]`.
    transitions: Vec<T>,
    mu0: Vec<T>,
}

impl<T: Scalar> BaseMdp<T> {
    /// Builds and validates a base MDP from a flat `[s][a][s']` tensor.
    pub fn new(n_states: usize, n_actions: usize, transitions: Vec<T>, mu0: Vec<T>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidSize(format!(
                "n_states = {n_states}, n_actions = {n_actions}; both must be positive"
            )));
        }
        let mdp = Self::new_unchecked(n_states, n_actions, transitions, mu0);
        mdp.validate()?;
        Ok(mdp)
    }

    /// Builds from nested `[s][a][s']` rows.
    pub fn from_rows(rows: &[Vec<Vec<T>>], mu0: Vec<T>) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        for per_action in rows {
            if per_action.len() != n_actions {
                return Err(Violation::Shape {
                    what: "p_T action dimension",
                    expected: n_actions,
                    found: per_action.len(),
                }
                .into());
            }
            for row in per_action {
                if row.len() != n_states {
                    return Err(Error::InvalidMdp(Violation::Shape {
                        what: "p_T next-state dimension",
                        expected: n_states,
                        found: row.len(),
                    }));
                }
                flat.extend_from_slice(row);
            }
        }
        Self::new(n_states, n_actions, flat, mu0)
    }

    /// No validation; pair with [`BaseMdp::validate`].
    pub fn new_unchecked(n_states: usize, n_actions: usize, transitions: Vec<T>, mu0: Vec<T>) -> Self {
        Self { n_states, n_actions, transitions, mu0 }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn mu0(&self) -> &[T] {
        &self.mu0
    }

    /// `p_T(next | state, action)`.
    #[inline]
    pub fn p(&self, state: usize, action: usize, next: usize) -> T {
        self.transitions[(state * self.n_actions + action) * self.n_states + next]
    }

    #[inline]
    pub fn row(&self, state: usize, action: usize) -> &[T] {
        let start = (state * self.n_actions + action) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    /// Checks every invariant, reporting the first one violated.
    pub fn validate(&self) -> Result<(), Violation> {
        let (ns, na) = (self.n_states, self.n_actions);
        if self.transitions.len() != ns * na * ns {
            return Err(Violation::Shape {
                what: "p_T",
                expected: ns * na * ns,
                found: self.transitions.len(),
            });
        }
        if self.mu0.len() != ns {
            return Err(Violation::Shape { what: "mu0", expected: ns, found: self.mu0.len() });
        }
        let tol = T::prob_tol();
        for s in 0..ns {
            for a in 0..na {
                let row = self.row(s, a);
                if let Some((next, v)) = row.iter().enumerate().find(|(_, v)| **v < T::zero() || v.is_nan()) {
                    return Err(Violation::NegativeTransition {
                        state: s,
                        action: a,
                        next,
                        value: v.as_f64(),
                    });
                }
                let sum = row_sum(row);
                if (sum - T::one()).abs() > tol {
                    return Err(Violation::Row { state: s, action: a, sum: sum.as_f64() });
                }
            }
        }
        if let Some((state, v)) = self.mu0.iter().enumerate().find(|(_, v)| **v < T::zero() || v.is_nan()) {
            return Err(Violation::NegativeInitial { state, value: v.as_f64() });
        }
        let sum = row_sum(&self.mu0);
        if (sum - T::one()).abs() > tol {
            return Err(Violation::Initial { sum: sum.as_f64() });
        }
        Ok(())
    }
}

/// Random base MDP with every transition row and the initial distribution
/// drawn from a flat Dirichlet. Pure function of its arguments.
pub fn random_mdp<T: Scalar>(n_states: usize, n_actions: usize, seed: u64) -> Result<BaseMdp<T>> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidSize(format!(
            "n_states = {n_states}, n_actions = {n_actions}; both must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transitions.extend(flat_dirichlet::<T, _>(n_states, &mut rng));
    }
    let mu0 = flat_dirichlet(n_states, &mut rng);
    BaseMdp::new(n_states, n_actions, transitions, mu0)
}

/// Normalized i.i.d. unit exponentials.
pub(crate) fn flat_dirichlet<T: Scalar, R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<T> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| T::lit(x / total)).collect()
}
