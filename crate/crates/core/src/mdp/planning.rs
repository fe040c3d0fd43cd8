//! Exact finite-horizon planning and regret accounting.
//!
//! Levels are 0-based in storage: level index `h` holds the 1-based step
//! `h + 1`, and index `H` is the terminal level with value 0.

use super::model::{CausalMdp, ComposedModel};
use crate::error::{check_index, Error, Result};

/// Slack allowed for a negative regret increment before it is treated as a bug.
pub const REGRET_SLACK: f64 = 1e-9;

/// Index of the largest entry; ties go to the lowest index.
#[inline]
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `v: [(H+1) × S]`, `q: [H × S × A]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables {
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub v: Vec<f64>,
    pub q: Vec<f64>,
}

impl ValueTables {
    #[inline]
    pub fn value(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.n_states + s]
    }

    #[inline]
    pub fn q_row(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.n_states + s) * self.n_actions;
        &self.q[start..start + self.n_actions]
    }

    /// Greedy policy with lowest-index tie-breaking.
    pub fn greedy_policy(&self) -> Policy {
        Policy::from_fn(self.horizon, self.n_states, |h, s| {
            argmax_first(self.q_row(h, s))
        })
    }
}

/// Deterministic non-stationary policy, `actions[h * S + s]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    horizon: usize,
    n_states: usize,
    actions: Vec<usize>,
}

impl Policy {
    pub fn new(horizon: usize, n_states: usize, actions: Vec<usize>) -> Result<Self> {
        if actions.len() != horizon * n_states {
            return Err(Error::InvalidModel(format!(
                "policy table has {} entries, expected {}",
                actions.len(),
                horizon * n_states
            )));
        }
        Ok(Policy {
            horizon,
            n_states,
            actions,
        })
    }

    pub fn from_fn(
        horizon: usize,
        n_states: usize,
        mut f: impl FnMut(usize, usize) -> usize,
    ) -> Self {
        let mut actions = Vec::with_capacity(horizon * n_states);
        for h in 0..horizon {
            for s in 0..n_states {
                actions.push(f(h, s));
            }
        }
        Policy {
            horizon,
            n_states,
            actions,
        }
    }

    pub fn constant(horizon: usize, n_states: usize, action: usize) -> Self {
        Policy::from_fn(horizon, n_states, |_, _| action)
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h * self.n_states + s]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub(crate) fn validate_for(&self, mdp: &CausalMdp) -> Result<()> {
        if self.horizon != mdp.horizon() || self.n_states != mdp.n_states() {
            return Err(Error::InvalidModel(format!(
                "policy shape {}x{} does not match model {}x{}",
                self.horizon,
                self.n_states,
                mdp.horizon(),
                mdp.n_states()
            )));
        }
        for &a in &self.actions {
            check_index("action", a, mdp.n_actions())?;
        }
        Ok(())
    }
}

fn backup_q(model: &ComposedModel, next_v: &[f64], s: usize, a: usize) -> f64 {
    let expected: f64 = model
        .transition(s, a)
        .iter()
        .zip(next_v)
        .map(|(p, v)| p * v)
        .sum();
    model.reward(s, a) + expected
}

/// Optimal `V*` and `Q*` by backward induction from `V*_{H+1} = 0`.
pub fn exact_value_iteration(mdp: &CausalMdp) -> ValueTables {
    exact_value_iteration_composed(&mdp.composed())
}

pub fn exact_value_iteration_composed(model: &ComposedModel) -> ValueTables {
    let (h_n, s_n, a_n) = (model.horizon, model.n_states, model.n_actions);
    let mut v = vec![0.0; (h_n + 1) * s_n];
    let mut q = vec![0.0; h_n * s_n * a_n];
    for h in (0..h_n).rev() {
        let (head, tail) = v.split_at_mut((h + 1) * s_n);
        let next_v = &tail[..s_n];
        let cur_v = &mut head[h * s_n..];
        for s in 0..s_n {
            let row = &mut q[(h * s_n + s) * a_n..(h * s_n + s + 1) * a_n];
            for (a, slot) in row.iter_mut().enumerate() {
                *slot = backup_q(model, next_v, s, a);
            }
            cur_v[s] = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    ValueTables {
        horizon: h_n,
        n_states: s_n,
        n_actions: a_n,
        v,
        q,
    }
}

/// Exact `V^π` and `Q^π` of a deterministic policy.
pub fn policy_value(mdp: &CausalMdp, policy: &Policy) -> Result<ValueTables> {
    policy.validate_for(mdp)?;
    Ok(policy_value_composed(&mdp.composed(), policy))
}

pub fn policy_value_composed(model: &ComposedModel, policy: &Policy) -> ValueTables {
    let (h_n, s_n, a_n) = (model.horizon, model.n_states, model.n_actions);
    let mut v = vec![0.0; (h_n + 1) * s_n];
    let mut q = vec![0.0; h_n * s_n * a_n];
    for h in (0..h_n).rev() {
        let (head, tail) = v.split_at_mut((h + 1) * s_n);
        let next_v = &tail[..s_n];
        for s in 0..s_n {
            for a in 0..a_n {
                q[(h * s_n + s) * a_n + a] = backup_q(model, next_v, s, a);
            }
            head[h * s_n + s] = q[(h * s_n + s) * a_n + policy.action(h, s)];
        }
    }
    ValueTables {
        horizon: h_n,
        n_states: s_n,
        n_actions: a_n,
        v,
        q,
    }
}

/// Value of `V^π_1(s1)` only; cheaper than the full table for per-episode regret.
pub fn policy_start_value(model: &ComposedModel, policy: &Policy, s1: usize) -> f64 {
    let s_n = model.n_states;
    let mut next = vec![0.0; s_n];
    let mut cur = vec![0.0; s_n];
    for h in (0..model.horizon).rev() {
        for (s, slot) in cur.iter_mut().enumerate() {
            *slot = backup_q(model, &next, s, policy.action(h, s));
        }
        std::mem::swap(&mut cur, &mut next);
    }
    next[s1]
}

/// Exact value of a randomised policy `probs[(h * S + s) * A + a]`.
pub fn stochastic_policy_value(mdp: &CausalMdp, probs: &[f64]) -> Result<Vec<f64>> {
    let (h_n, s_n, a_n) = (mdp.horizon(), mdp.n_states(), mdp.n_actions());
    if probs.len() != h_n * s_n * a_n {
        return Err(Error::InvalidModel(format!(
            "stochastic policy has {} entries, expected {}",
            probs.len(),
            h_n * s_n * a_n
        )));
    }
    let model = mdp.composed();
    let mut v = vec![0.0; (h_n + 1) * s_n];
    for h in (0..h_n).rev() {
        let (head, tail) = v.split_at_mut((h + 1) * s_n);
        let next_v = &tail[..s_n];
        for s in 0..s_n {
            let weights = &probs[(h * s_n + s) * a_n..(h * s_n + s + 1) * a_n];
            head[h * s_n + s] = weights
                .iter()
                .enumerate()
                .map(|(a, w)| w * backup_q(&model, next_v, s, a))
                .sum();
        }
    }
    Ok(v)
}

/// `V^unif` of the policy that picks every action uniformly at every step.
pub fn uniform_policy_value(mdp: &CausalMdp) -> Vec<f64> {
    let a_n = mdp.n_actions();
    let probs = vec![1.0 / a_n as f64; mdp.horizon() * mdp.n_states() * a_n];
    stochastic_policy_value(mdp, &probs).expect("shape matches by construction")
}

/// One episode's contribution to `R_K`: `V*_1(s1) - V^π_1(s1)`.
pub fn regret_increment(v_star_1: f64, v_pi_1: f64) -> Result<f64> {
    let inc = v_star_1 - v_pi_1;
    if inc < -REGRET_SLACK {
        return Err(Error::Internal(format!(
            "policy value {v_pi_1} exceeds optimal value {v_star_1}"
        )));
    }
    Ok(inc)
}
