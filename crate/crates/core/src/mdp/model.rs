use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};

/// Tolerance applied to every probability row sum.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Dimensions of a tabular causal MDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_parent_vals: usize,
    pub horizon: usize,
}

/// Ground-truth causal MDP.
///
/// Tables are dense and row-major:
/// `p_z_given_sa[(s * A + a) * Z + z]`, `p_s_given_sz[(s * Z + z) * S + y]`,
/// `r_sz[s * Z + z]`.
///
/// `reward_bound` is a known upper bound on any single-step reward. It is 1
/// unless some entry of `r_sz` exceeds 1 or a larger structural bound is set
/// with [`CausalMdp::with_reward_bound`]. Learners clip values at
/// `horizon * reward_bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCausalMdp")]
pub struct CausalMdp {
    n_states: usize,
    n_actions: usize,
    n_parent_vals: usize,
    horizon: usize,
    reward_bound: f64,
    p_z_given_sa: Vec<f64>,
    p_s_given_sz: Vec<f64>,
    r_sz: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCausalMdp {
    n_states: usize,
    n_actions: usize,
    n_parent_vals: usize,
    horizon: usize,
    reward_bound: f64,
    p_z_given_sa: Vec<f64>,
    p_s_given_sz: Vec<f64>,
    r_sz: Vec<f64>,
}

impl TryFrom<RawCausalMdp> for CausalMdp {
    type Error = Error;

    fn try_from(raw: RawCausalMdp) -> Result<Self> {
        let dims = Dims {
            n_states: raw.n_states,
            n_actions: raw.n_actions,
            n_parent_vals: raw.n_parent_vals,
            horizon: raw.horizon,
        };
        CausalMdp::new(dims, raw.p_z_given_sa, raw.p_s_given_sz, raw.r_sz)?
            .with_reward_bound(raw.reward_bound)
    }
}

pub(crate) fn check_rows(name: &str, table: &[f64], row_len: usize) -> Result<()> {
    for (row_idx, row) in table.chunks_exact(row_len).enumerate() {
        if let Some(bad) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidModel(format!(
                "{name} row {row_idx} has invalid entry {bad}"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidModel(format!(
                "{name} row {row_idx} sums to {sum}"
            )));
        }
    }
    Ok(())
}

impl CausalMdp {
    pub fn new(
        dims: Dims,
        p_z_given_sa: Vec<f64>,
        p_s_given_sz: Vec<f64>,
        r_sz: Vec<f64>,
    ) -> Result<Self> {
        let Dims {
            n_states: s,
            n_actions: a,
            n_parent_vals: z,
            horizon: h,
        } = dims;
        if s == 0 || a == 0 || z == 0 || h == 0 {
            return Err(Error::InvalidModel(format!(
                "all dimensions must be positive, got {dims:?}"
            )));
        }
        let expect = |name: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(Error::InvalidModel(format!(
                    "{name} has {got} entries, expected {want}"
                )))
            }
        };
        expect("p_z_given_sa", p_z_given_sa.len(), s * a * z)?;
        expect("p_s_given_sz", p_s_given_sz.len(), s * z * s)?;
        expect("r_sz", r_sz.len(), s * z)?;
        check_rows("p_z_given_sa", &p_z_given_sa, z)?;
        check_rows("p_s_given_sz", &p_s_given_sz, s)?;
        let mut max_r: f64 = 0.0;
        for (i, r) in r_sz.iter().enumerate() {
            if !r.is_finite() || *r < 0.0 {
                return Err(Error::InvalidModel(format!("r_sz[{i}] = {r}")));
            }
            max_r = max_r.max(*r);
        }
        Ok(CausalMdp {
            n_states: s,
            n_actions: a,
            n_parent_vals: z,
            horizon: h,
            reward_bound: max_r.max(1.0),
            p_z_given_sa,
            p_s_given_sz,
            r_sz,
        })
    }

    /// Replaces the per-step reward bound. Must dominate every reward entry.
    pub fn with_reward_bound(mut self, bound: f64) -> Result<Self> {
        let max_r = self.r_sz.iter().copied().fold(0.0, f64::max);
        if !bound.is_finite() || bound <= 0.0 || bound < max_r {
            return Err(Error::InvalidModel(format!(
                "reward bound {bound} does not dominate max reward {max_r}"
            )));
        }
        self.reward_bound = bound;
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n_states: self.n_states,
            n_actions: self.n_actions,
            n_parent_vals: self.n_parent_vals,
            horizon: self.horizon,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_parent_vals(&self) -> usize {
        self.n_parent_vals
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    /// Largest value any policy can collect from any state.
    pub fn value_cap(&self) -> f64 {
        self.horizon as f64 * self.reward_bound
    }

    /// `P(· | s, a)` over parent values.
    #[inline]
    pub fn parent_dist(&self, s: usize, a: usize) -> &[f64] {
        let z = self.n_parent_vals;
        let start = (s * self.n_actions + a) * z;
        &self.p_z_given_sa[start..start + z]
    }

    /// `P(· | s, z)` over next states.
    #[inline]
    pub fn next_state_dist(&self, s: usize, z: usize) -> &[f64] {
        let n = self.n_states;
        let start = (s * self.n_parent_vals + z) * n;
        &self.p_s_given_sz[start..start + n]
    }

    #[inline]
    pub fn reward_sz(&self, s: usize, z: usize) -> f64 {
        self.r_sz[s * self.n_parent_vals + z]
    }

    pub fn p_z_given_sa(&self) -> &[f64] {
        &self.p_z_given_sa
    }

    pub fn p_s_given_sz(&self) -> &[f64] {
        &self.p_s_given_sz
    }

    pub fn r_sz(&self) -> &[f64] {
        &self.r_sz
    }

    fn check_sa(&self, s: usize, a: usize) -> Result<()> {
        check_index("state", s, self.n_states)?;
        check_index("action", a, self.n_actions)
    }

    /// `P(s' | s, a) = Σ_z P(s' | s, z) P(z | s, a)`.
    pub fn compose_transition(&self, s: usize, a: usize) -> Result<Vec<f64>> {
        self.check_sa(s, a)?;
        let mut out = vec![0.0; self.n_states];
        self.compose_transition_into(s, a, &mut out);
        Ok(out)
    }

    pub(crate) fn compose_transition_into(&self, s: usize, a: usize, out: &mut [f64]) {
        out.fill(0.0);
        for (z, &w) in self.parent_dist(s, a).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.next_state_dist(s, z)) {
                *o += w * p;
            }
        }
    }

    /// `R(s, a) = Σ_z R(s, z) P(z | s, a)`.
    pub fn compose_reward(&self, s: usize, a: usize) -> Result<f64> {
        self.check_sa(s, a)?;
        Ok(self.compose_reward_unchecked(s, a))
    }

    #[inline]
    pub(crate) fn compose_reward_unchecked(&self, s: usize, a: usize) -> f64 {
        let z_count = self.n_parent_vals;
        let rewards = &self.r_sz[s * z_count..(s + 1) * z_count];
        self.parent_dist(s, a)
            .iter()
            .zip(rewards)
            .map(|(w, r)| w * r)
            .sum()
    }

    /// Flat MDP view: `R(s,a)` and `P(s'|s,a)` for every pair.
    pub fn composed(&self) -> ComposedModel {
        let (s_n, a_n) = (self.n_states, self.n_actions);
        let mut rewards = Vec::with_capacity(s_n * a_n);
        let mut transitions = vec![0.0; s_n * a_n * s_n];
        for s in 0..s_n {
            for a in 0..a_n {
                rewards.push(self.compose_reward_unchecked(s, a));
                let row = (s * a_n + a) * s_n;
                self.compose_transition_into(s, a, &mut transitions[row..row + s_n]);
            }
        }
        ComposedModel {
            n_states: s_n,
            n_actions: a_n,
            horizon: self.horizon,
            rewards,
            transitions,
        }
    }
}

/// The action-level MDP induced by marginalising out the parent variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ComposedModel {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: usize,
    /// `[S × A]`
    pub rewards: Vec<f64>,
    /// `[S × A × S]`
    pub transitions: Vec<f64>,
}

impl ComposedModel {
    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    #[inline]
    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }
}
