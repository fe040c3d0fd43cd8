use serde::{Deserialize, Serialize};

use super::model::{check_rows, CausalMdp, ROW_SUM_TOL};
use crate::error::{Error, Result};

/// Factor sizes, scopes and the precomputed projections `s -> s[I]`.
///
/// The state space is the product `S_1 × … × S_m` with mixed-radix,
/// little-endian indexing: `s = Σ_i s_i · Π_{j<i} S_j`. A scope index
/// `s[I]` uses the same convention over the sorted members of `I`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScopeStructure {
    factor_sizes: Vec<usize>,
    transition_scopes: Vec<Vec<usize>>,
    reward_scopes: Vec<Vec<usize>>,
    strides: Vec<usize>,
    transition_proj: Vec<Vec<usize>>,
    reward_proj: Vec<Vec<usize>>,
}

fn scope_size(factor_sizes: &[usize], scope: &[usize]) -> usize {
    scope.iter().map(|&j| factor_sizes[j]).product()
}

impl ScopeStructure {
    pub fn new(
        factor_sizes: Vec<usize>,
        transition_scopes: Vec<Vec<usize>>,
        reward_scopes: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let m = factor_sizes.len();
        if m == 0 || factor_sizes.contains(&0) {
            return Err(Error::InvalidModel("factor sizes must be positive".into()));
        }
        if transition_scopes.len() != m || reward_scopes.len() != m {
            return Err(Error::InvalidModel(format!(
                "expected {m} transition and reward scopes"
            )));
        }
        let mut transition_scopes = transition_scopes;
        let mut reward_scopes = reward_scopes;
        for scope in transition_scopes.iter_mut().chain(reward_scopes.iter_mut()) {
            scope.sort_unstable();
            scope.dedup();
            if let Some(&bad) = scope.iter().find(|&&j| j >= m) {
                return Err(Error::InvalidModel(format!("scope member {bad} >= {m}")));
            }
        }
        let mut strides = Vec::with_capacity(m);
        let mut acc = 1usize;
        for &size in &factor_sizes {
            strides.push(acc);
            acc = acc
                .checked_mul(size)
                .ok_or_else(|| Error::TooLarge("state space overflows usize".into()))?;
        }
        let n_states = acc;
        let project = |scope: &[usize]| -> Vec<usize> {
            (0..n_states)
                .map(|s| {
                    let mut idx = 0;
                    let mut mult = 1;
                    for &j in scope {
                        idx += ((s / strides[j]) % factor_sizes[j]) * mult;
                        mult *= factor_sizes[j];
                    }
                    idx
                })
                .collect()
        };
        let transition_proj = transition_scopes.iter().map(|sc| project(sc)).collect();
        let reward_proj = reward_scopes.iter().map(|sc| project(sc)).collect();
        Ok(ScopeStructure {
            factor_sizes,
            transition_scopes,
            reward_scopes,
            strides,
            transition_proj,
            reward_proj,
        })
    }

    pub fn n_factors(&self) -> usize {
        self.factor_sizes.len()
    }

    pub fn factor_sizes(&self) -> &[usize] {
        &self.factor_sizes
    }

    pub fn n_states(&self) -> usize {
        self.factor_sizes.iter().product()
    }

    pub fn transition_scopes(&self) -> &[Vec<usize>] {
        &self.transition_scopes
    }

    pub fn reward_scopes(&self) -> &[Vec<usize>] {
        &self.reward_scopes
    }

    /// `S[I_i]`.
    pub fn transition_scope_size(&self, i: usize) -> usize {
        scope_size(&self.factor_sizes, &self.transition_scopes[i])
    }

    /// `S[J_i]`.
    pub fn reward_scope_size(&self, i: usize) -> usize {
        scope_size(&self.factor_sizes, &self.reward_scopes[i])
    }

    /// Value of factor `i` in full state `s`.
    #[inline]
    pub fn factor_value(&self, s: usize, i: usize) -> usize {
        (s / self.strides[i]) % self.factor_sizes[i]
    }

    /// `s[I_i]`.
    #[inline]
    pub fn transition_scope_index(&self, i: usize, s: usize) -> usize {
        self.transition_proj[i][s]
    }

    /// `s[J_i]`.
    #[inline]
    pub fn reward_scope_index(&self, i: usize, s: usize) -> usize {
        self.reward_proj[i][s]
    }
}

/// Factored view of a causal MDP: scope structure plus per-factor tables
/// `p_scope[i][(s[I_i] * Z + z) * S_i + y_i]` and `r_scope[i][s[J_i] * Z + z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFactoredSpec", into = "RawFactoredSpec")]
pub struct FactoredSpec {
    structure: ScopeStructure,
    n_parent_vals: usize,
    p_scope: Vec<Vec<f64>>,
    r_scope: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawFactoredSpec {
    factor_sizes: Vec<usize>,
    transition_scopes: Vec<Vec<usize>>,
    reward_scopes: Vec<Vec<usize>>,
    n_parent_vals: usize,
    p_scope: Vec<Vec<f64>>,
    r_scope: Vec<Vec<f64>>,
}

impl TryFrom<RawFactoredSpec> for FactoredSpec {
    type Error = Error;

    fn try_from(raw: RawFactoredSpec) -> Result<Self> {
        FactoredSpec::new(
            raw.factor_sizes,
            raw.transition_scopes,
            raw.reward_scopes,
            raw.n_parent_vals,
            raw.p_scope,
            raw.r_scope,
        )
    }
}

impl From<FactoredSpec> for RawFactoredSpec {
    fn from(spec: FactoredSpec) -> Self {
        let st = spec.structure;
        RawFactoredSpec {
            factor_sizes: st.factor_sizes,
            transition_scopes: st.transition_scopes,
            reward_scopes: st.reward_scopes,
            n_parent_vals: spec.n_parent_vals,
            p_scope: spec.p_scope,
            r_scope: spec.r_scope,
        }
    }
}

impl FactoredSpec {
    pub fn new(
        factor_sizes: Vec<usize>,
        transition_scopes: Vec<Vec<usize>>,
        reward_scopes: Vec<Vec<usize>>,
        n_parent_vals: usize,
        p_scope: Vec<Vec<f64>>,
        r_scope: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let structure = ScopeStructure::new(factor_sizes, transition_scopes, reward_scopes)?;
        let m = structure.n_factors();
        if n_parent_vals == 0 {
            return Err(Error::InvalidModel("parent count must be positive".into()));
        }
        if p_scope.len() != m || r_scope.len() != m {
            return Err(Error::InvalidModel(format!("expected {m} scope tables")));
        }
        for i in 0..m {
            let si = structure.factor_sizes[i];
            let rows = structure.transition_scope_size(i) * n_parent_vals;
            if p_scope[i].len() != rows * si {
                return Err(Error::InvalidModel(format!(
                    "p_scope[{i}] has {} entries, expected {}",
                    p_scope[i].len(),
                    rows * si
                )));
            }
            check_rows(&format!("p_scope[{i}]"), &p_scope[i], si)?;
            let r_len = structure.reward_scope_size(i) * n_parent_vals;
            if r_scope[i].len() != r_len {
                return Err(Error::InvalidModel(format!(
                    "r_scope[{i}] has {} entries, expected {r_len}",
                    r_scope[i].len()
                )));
            }
            if let Some(r) = r_scope[i].iter().find(|r| !r.is_finite() || **r < 0.0) {
                return Err(Error::InvalidModel(format!("r_scope[{i}] has entry {r}")));
            }
        }
        Ok(FactoredSpec {
            structure,
            n_parent_vals,
            p_scope,
            r_scope,
        })
    }

    pub fn structure(&self) -> &ScopeStructure {
        &self.structure
    }

    pub fn n_factors(&self) -> usize {
        self.structure.n_factors()
    }

    pub fn factor_sizes(&self) -> &[usize] {
        self.structure.factor_sizes()
    }

    pub fn n_states(&self) -> usize {
        self.structure.n_states()
    }

    pub fn n_parent_vals(&self) -> usize {
        self.n_parent_vals
    }

    pub fn transition_scopes(&self) -> &[Vec<usize>] {
        self.structure.transition_scopes()
    }

    pub fn reward_scopes(&self) -> &[Vec<usize>] {
        self.structure.reward_scopes()
    }

    pub fn p_scope(&self) -> &[Vec<f64>] {
        &self.p_scope
    }

    pub fn r_scope(&self) -> &[Vec<f64>] {
        &self.r_scope
    }

    pub fn transition_scope_size(&self, i: usize) -> usize {
        self.structure.transition_scope_size(i)
    }

    pub fn reward_scope_size(&self, i: usize) -> usize {
        self.structure.reward_scope_size(i)
    }

    #[inline]
    pub fn factor_value(&self, s: usize, i: usize) -> usize {
        self.structure.factor_value(s, i)
    }

    #[inline]
    pub fn transition_scope_index(&self, i: usize, s: usize) -> usize {
        self.structure.transition_scope_index(i, s)
    }

    #[inline]
    pub fn reward_scope_index(&self, i: usize, s: usize) -> usize {
        self.structure.reward_scope_index(i, s)
    }

    /// `P_i(· | s[I_i], z)` over the values of factor `i`.
    #[inline]
    pub fn scope_row(&self, i: usize, scope_idx: usize, z: usize) -> &[f64] {
        let n = self.structure.factor_sizes[i];
        let start = (scope_idx * self.n_parent_vals + z) * n;
        &self.p_scope[i][start..start + n]
    }

    #[inline]
    pub fn scope_reward(&self, i: usize, scope_idx: usize, z: usize) -> f64 {
        self.r_scope[i][scope_idx * self.n_parent_vals + z]
    }

    /// `Σ_i R_i(s[J_i], z)`, summed in factor order starting from 0.
    #[inline]
    pub fn reward(&self, s: usize, z: usize) -> f64 {
        scope_reward_sum(&self.structure, &self.r_scope, self.n_parent_vals, s, z)
    }

    /// `Π_i P_i(y[i] | s[I_i], z)`, multiplied in factor order starting from 1.
    #[inline]
    pub fn transition_prob(&self, s: usize, z: usize, y: usize) -> f64 {
        (0..self.n_factors()).fold(1.0, |acc, i| {
            let scope_idx = self.transition_scope_index(i, s);
            acc * self.scope_row(i, scope_idx, z)[self.factor_value(y, i)]
        })
    }

    /// Expands the product and sum rules into flat `(P(s'|s,z), R(s,z))`.
    pub fn expand(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_states();
        let z_n = self.n_parent_vals;
        let mut p = vec![0.0; n * z_n * n];
        let mut r = vec![0.0; n * z_n];
        for s in 0..n {
            for z in 0..z_n {
                r[s * z_n + z] = self.reward(s, z);
                let row = &mut p[(s * z_n + z) * n..(s * z_n + z + 1) * n];
                for (y, out) in row.iter_mut().enumerate() {
                    *out = self.transition_prob(s, z, y);
                }
            }
        }
        (p, r)
    }

    /// Checks that this factorisation reproduces `mdp` entrywise within 1e-9.
    pub fn check_consistent(&self, mdp: &CausalMdp) -> Result<()> {
        if self.n_states() != mdp.n_states() || self.n_parent_vals != mdp.n_parent_vals() {
            return Err(Error::InvalidModel(format!(
                "factored spec has S={}, Z={}; model has S={}, Z={}",
                self.n_states(),
                self.n_parent_vals,
                mdp.n_states(),
                mdp.n_parent_vals()
            )));
        }
        let (p, r) = self.expand();
        let worst = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        let dp = worst(&p, mdp.p_s_given_sz());
        let dr = worst(&r, mdp.r_sz());
        if dp > ROW_SUM_TOL || dr > ROW_SUM_TOL {
            return Err(Error::InvalidModel(format!(
                "factored expansion differs from model (transitions {dp:e}, rewards {dr:e})"
            )));
        }
        Ok(())
    }

    /// The single-factor spec (`m = 1`, `I_1 = J_1 = {1}`) of a flat model.
    pub fn trivial(mdp: &CausalMdp) -> Self {
        FactoredSpec::new(
            vec![mdp.n_states()],
            vec![vec![0]],
            vec![vec![0]],
            mdp.n_parent_vals(),
            vec![mdp.p_s_given_sz().to_vec()],
            vec![mdp.r_sz().to_vec()],
        )
        .expect("a valid model is a valid single-factor spec")
    }
}

/// `Σ_i R_i(s[J_i], z)` over explicit scope reward tables.
#[inline]
pub fn scope_reward_sum(
    structure: &ScopeStructure,
    r_scope: &[Vec<f64>],
    n_keys: usize,
    s: usize,
    z: usize,
) -> f64 {
    (0..structure.n_factors()).fold(0.0, |acc, i| {
        acc + r_scope[i][structure.reward_scope_index(i, s) * n_keys + z]
    })
}
