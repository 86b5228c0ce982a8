//! Command extension of a base MDP: states carry a remaining horizon and a
//! goal, the horizon counts down to an absorbing level `h = 0`, and the only
//! reward is paid on absorption when the reached state maps to the goal.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{flat_dirichlet, random_mdp, BaseMdp};
use crate::scalar::{row_sum, Scalar};

/// Surjective map from base states onto goal labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoalMap {
    n_goals: usize,
    rho: Vec<usize>,
    preimages: Vec<Vec<usize>>,
}

impl GoalMap {
    pub fn new(n_goals: usize, rho: Vec<usize>) -> Result<Self> {
        if n_goals == 0 {
            return Err(Error::InvalidGoalMap("n_goals must be positive".into()));
        }
        let mut preimages = vec![Vec::new(); n_goals];
        for (s, &g) in rho.iter().enumerate() {
            if g >= n_goals {
                return Err(Error::InvalidGoalMap(format!(
                    "rho[{s}] = {g} is not a goal index below {n_goals}"
                )));
            }
            preimages[g].push(s);
        }
        if let Some(g) = preimages.iter().position(Vec::is_empty) {
            return Err(Error::InvalidGoalMap(format!("goal {g} is not attained by any state")));
        }
        Ok(Self { n_goals, rho, preimages })
    }

    /// Goals are the states themselves.
    pub fn identity(n_states: usize) -> Self {
        Self::new(n_states, (0..n_states).collect()).expect("identity map is surjective")
    }

    pub fn n_goals(&self) -> usize {
        self.n_goals
    }

    #[inline]
    pub fn goal(&self, state: usize) -> usize {
        self.rho[state]
    }

    pub fn rho(&self) -> &[usize] {
        &self.rho
    }

    /// States mapped onto `goal`.
    #[inline]
    pub fn preimage(&self, goal: usize) -> &[usize] {
        &self.preimages[goal]
    }
}

/// State of the command extension: base state, remaining horizon, goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CeState {
    pub s: usize,
    pub h: usize,
    pub g: usize,
}

impl CeState {
    pub fn new(s: usize, h: usize, g: usize) -> Self {
        Self { s, h, g }
    }

    pub fn is_transient(&self) -> bool {
        self.h >= 1
    }

    pub fn is_absorbing(&self) -> bool {
        self.h == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandExtension<T> {
    base: BaseMdp<T>,
    goal_map: GoalMap,
    max_horizon: usize,
    /// Flattened `[state][h in 0..=N][goal]`, conditional on the start state.
    initial_command: Vec<T>,
    absorbing_action: usize,
}

impl<T: Scalar> CommandExtension<T> {
    /// Validates and assembles a command extension. `initial_command` is the
    /// flattened `[s][h][g]` conditional over `h in 0..=max_horizon`.
    pub fn new(
        base: BaseMdp<T>,
        goal_map: GoalMap,
        max_horizon: usize,
        initial_command: Vec<T>,
    ) -> Result<Self> {
        base.validate()?;
        if max_horizon == 0 {
            return Err(Error::InvalidSize("max horizon N must be positive".into()));
        }
        if goal_map.rho().len() != base.n_states() {
            return Err(Error::InvalidGoalMap(format!(
                "rho has {} entries for {} states",
                goal_map.rho().len(),
                base.n_states()
            )));
        }
        let ng = goal_map.n_goals();
        let per_state = (max_horizon + 1) * ng;
        if initial_command.len() != base.n_states() * per_state {
            return Err(Error::InvalidInitialCommand(format!(
                "expected {} entries ([s][h in 0..={max_horizon}][g]), found {}",
                base.n_states() * per_state,
                initial_command.len()
            )));
        }
        for s in 0..base.n_states() {
            let block = &initial_command[s * per_state..(s + 1) * per_state];
            if let Some(i) = block.iter().position(|v| *v < T::zero() || v.is_nan()) {
                return Err(Error::InvalidInitialCommand(format!(
                    "negative entry at (s={s}, h={}, g={})",
                    i / ng,
                    i % ng
                )));
            }
            if let Some(g) = block[..ng].iter().position(|v| *v > T::zero()) {
                return Err(Error::InvalidInitialCommand(format!(
                    "mass on absorbing start (s={s}, h=0, g={g})"
                )));
            }
            if base.mu0()[s] > T::zero() {
                let sum = row_sum(block);
                if (sum - T::one()).abs() > T::prob_tol() {
                    return Err(Error::InvalidInitialCommand(format!(
                        "row for start state {s} sums to {sum}"
                    )));
                }
            }
        }
        Ok(Self { base, goal_map, max_horizon, initial_command, absorbing_action: 0 })
    }

    /// Action every policy takes on absorbing states. Defaults to 0.
    pub fn with_absorbing_action(mut self, action: usize) -> Result<Self> {
        if action >= self.base.n_actions() {
            return Err(Error::OutOfRange(format!("absorbing action {action}")));
        }
        self.absorbing_action = action;
        Ok(self)
    }

    pub fn base(&self) -> &BaseMdp<T> {
        &self.base
    }

    pub fn goal_map(&self) -> &GoalMap {
        &self.goal_map
    }

    pub fn n_states(&self) -> usize {
        self.base.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.base.n_actions()
    }

    pub fn n_goals(&self) -> usize {
        self.goal_map.n_goals()
    }

    /// Maximum remaining horizon `N`.
    pub fn horizon(&self) -> usize {
        self.max_horizon
    }

    pub fn absorbing_action(&self) -> usize {
        self.absorbing_action
    }

    /// `P(H_0 = h, G_0 = g | S_0 = s)`.
    #[inline]
    pub fn initial_command(&self, s: usize, h: usize, g: usize) -> T {
        self.initial_command[(s * (self.max_horizon + 1) + h) * self.n_goals() + g]
    }

    /// Joint initial distribution over CE states.
    #[inline]
    pub fn initial_prob(&self, state: CeState) -> T {
        self.base.mu0()[state.s] * self.initial_command(state.s, state.h, state.g)
    }

    /// Every transient state, ordered by `(s, h, g)`.
    pub fn transient_states(&self) -> impl Iterator<Item = CeState> + '_ {
        let (ns, nh, ng) = (self.n_states(), self.max_horizon, self.n_goals());
        (0..ns).flat_map(move |s| {
            (1..=nh).flat_map(move |h| (0..ng).map(move |g| CeState::new(s, h, g)))
        })
    }

    pub fn n_transient(&self) -> usize {
        self.n_states() * self.max_horizon * self.n_goals()
    }

    /// Dense index of a transient state, matching [`Self::transient_states`].
    #[inline]
    pub fn transient_index(&self, state: CeState) -> usize {
        (state.s * self.max_horizon + state.h - 1) * self.n_goals() + state.g
    }

    fn check_state(&self, state: CeState) -> Result<()> {
        if state.s >= self.n_states() || state.h > self.max_horizon || state.g >= self.n_goals() {
            return Err(Error::OutOfRange(format!("{state:?}")));
        }
        Ok(())
    }

    /// Probability of moving `from --action--> to`.
    ///
    /// Transient states decrement the horizon and keep the goal; absorbing
    /// states loop on themselves under the fixed absorbing action and reject
    /// any other action.
    pub fn transition(&self, from: CeState, action: usize, to: CeState) -> Result<T> {
        self.check_state(from)?;
        self.check_state(to)?;
        if action >= self.n_actions() {
            return Err(Error::OutOfRange(format!("action {action}")));
        }
        if from.is_absorbing() {
            if action != self.absorbing_action {
                return Err(Error::AbsorbingAction {
                    state: from,
                    action,
                    fixed: self.absorbing_action,
                });
            }
            return Ok(if to == from { T::one() } else { T::zero() });
        }
        if to.h + 1 != from.h || to.g != from.g {
            return Ok(T::zero());
        }
        Ok(self.base.p(from.s, action, to.s))
    }

    pub fn reward(&self, to: CeState, from: CeState, action: usize) -> T {
        ce_reward(to, from, action, &self.goal_map)
    }
}

/// Builds a command extension; see [`CommandExtension::new`].
pub fn build_ce<T: Scalar>(
    base: BaseMdp<T>,
    goal_map: GoalMap,
    max_horizon: usize,
    initial_command: Vec<T>,
) -> Result<CommandExtension<T>> {
    CommandExtension::new(base, goal_map, max_horizon, initial_command)
}

/// One exactly when leaving horizon 1 into a state whose goal label is the
/// commanded goal.
pub fn ce_reward<T: Scalar>(to: CeState, from: CeState, _action: usize, goal_map: &GoalMap) -> T {
    if from.h == 1 && goal_map.goal(to.s) == from.g {
        T::one()
    } else {
        T::zero()
    }
}

/// Random command extension for property tests: Dirichlet base MDP, a
/// surjective goal map, and a Dirichlet initial command over `h in 1..=N`.
pub fn random_ce<T: Scalar>(
    n_states: usize,
    n_actions: usize,
    n_goals: usize,
    max_horizon: usize,
    seed: u64,
) -> Result<CommandExtension<T>> {
    use rand::Rng;
    if n_goals == 0 || n_goals > n_states {
        return Err(Error::InvalidSize(format!(
            "n_goals = {n_goals} must lie in 1..={n_states}"
        )));
    }
    let base = random_mdp(n_states, n_actions, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let rho = (0..n_states)
        .map(|s| if s < n_goals { s } else { rng.random_range(0..n_goals) })
        .collect();
    let goal_map = GoalMap::new(n_goals, rho)?;
    let mut initial = Vec::with_capacity(n_states * (max_horizon + 1) * n_goals);
    for _ in 0..n_states {
        initial.extend(std::iter::repeat_n(T::zero(), n_goals));
        initial.extend(flat_dirichlet::<T, _>(max_horizon * n_goals, &mut rng));
    }
    CommandExtension::new(base, goal_map, max_horizon, initial)
}
