//! Self-contained JSON description of a command extension.
//!
//! ```json
//! {
//!   "name": "demo",
//!   "n_states": 2, "n_actions": 2, "n_goals": 2,
//!   "p_T": [[[0.6, 0.4], [0.4, 0.6]], [[0.0, 1.0], [0.0, 1.0]]],
//!   "mu0": [1.0, 0.0],
//!   "rho": [0, 1],
//!   "N": 1,
//!   "initial_command": [[[0.0, 0.0], [0.5, 0.5]], [[0.0, 0.0], [0.5, 0.5]]]
//! }
//! ```
//!
//! `p_T` is indexed `[s][a][s']` and `initial_command` `[s][h][g]` with
//! `h` running over `0..=N` (the `h = 0` block must be zero). Optional
//! `state_labels`, `action_labels` and `goal_labels` name the indices.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::command::{build_ce, CommandExtension, GoalMap};
use crate::error::{Error, Result};
use crate::mdp::BaseMdp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_goals: usize,
    #[serde(rename = "p_T")]
    pub p_t: Vec<Vec<Vec<f64>>>,
    pub mu0: Vec<f64>,
    pub rho: Vec<usize>,
    #[serde(rename = "N")]
    pub max_horizon: usize,
    pub initial_command: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absorbing_action: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_labels: Option<Vec<String>>,
}

fn expect_len(what: &str, found: usize, expected: usize) -> Result<()> {
    if found != expected {
        return Err(Error::Spec(format!("{what} has length {found}, expected {expected}")));
    }
    Ok(())
}

impl EnvironmentSpec {
    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Spec(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Shape checks with the offending location, then the full CE validation.
    pub fn to_ce(&self) -> Result<CommandExtension<f64>> {
        let (ns, na, ng, nn) = (self.n_states, self.n_actions, self.n_goals, self.max_horizon);
        expect_len("p_T", self.p_t.len(), ns)?;
        for (s, per_action) in self.p_t.iter().enumerate() {
            expect_len(&format!("p_T[{s}]"), per_action.len(), na)?;
            for (a, row) in per_action.iter().enumerate() {
                expect_len(&format!("p_T[{s}][{a}]"), row.len(), ns)?;
            }
        }
        expect_len("mu0", self.mu0.len(), ns)?;
        expect_len("rho", self.rho.len(), ns)?;
        expect_len("initial_command", self.initial_command.len(), ns)?;
        let mut initial = Vec::with_capacity(ns * (nn + 1) * ng);
        for (s, per_h) in self.initial_command.iter().enumerate() {
            expect_len(&format!("initial_command[{s}]"), per_h.len(), nn + 1)?;
            for (h, row) in per_h.iter().enumerate() {
                expect_len(&format!("initial_command[{s}][{h}]"), row.len(), ng)?;
                initial.extend_from_slice(row);
            }
        }
        for (what, labels, n) in [
            ("state_labels", &self.state_labels, ns),
            ("action_labels", &self.action_labels, na),
            ("goal_labels", &self.goal_labels, ng),
        ] {
            if let Some(labels) = labels {
                expect_len(what, labels.len(), n)?;
            }
        }
        let base = BaseMdp::from_rows(&self.p_t, self.mu0.clone())?;
        let goal_map = GoalMap::new(ng, self.rho.clone())?;
        let ce = build_ce(base, goal_map, nn, initial)?;
        match self.absorbing_action {
            Some(a) => ce.with_absorbing_action(a),
            None => Ok(ce),
        }
    }

    /// Inverse of [`EnvironmentSpec::to_ce`], without labels.
    pub fn from_ce(ce: &CommandExtension<f64>, name: Option<String>) -> Self {
        let (ns, na, ng, nn) = (ce.n_states(), ce.n_actions(), ce.n_goals(), ce.horizon());
        let p_t = (0..ns)
            .map(|s| (0..na).map(|a| ce.base().row(s, a).to_vec()).collect())
            .collect();
        let initial_command = (0..ns)
            .map(|s| {
                (0..=nn)
                    .map(|h| (0..ng).map(|g| ce.initial_command(s, h, g)).collect())
                    .collect()
            })
            .collect();
        Self {
            name,
            n_states: ns,
            n_actions: na,
            n_goals: ng,
            p_t,
            mu0: ce.base().mu0().to_vec(),
            rho: ce.goal_map().rho().to_vec(),
            max_horizon: nn,
            initial_command,
            absorbing_action: (ce.absorbing_action() != 0).then_some(ce.absorbing_action()),
            state_labels: None,
            action_labels: None,
            goal_labels: None,
        }
    }

    /// Label of state `s`, or its index.
    pub fn state_label(&self, s: usize) -> String {
        self.state_labels.as_ref().map_or_else(|| s.to_string(), |l| l[s].clone())
    }

    pub fn goal_label(&self, g: usize) -> String {
        self.goal_labels.as_ref().map_or_else(|| g.to_string(), |l| l[g].clone())
    }
}
