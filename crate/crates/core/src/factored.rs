//! CF-UCBVI and the two non-causal baselines, UCBVI and F-UCBVI.
//!
//! The baselines reuse the causal machinery with the action playing the role
//! of the parent value: counts are keyed by `(s, a)` or `(s[I_i], a)` and the
//! optimistic value of a key is the action value itself.

use crate::causal::{
    check_delta, parent_backup, BonusParams, CountModel, CountTables, ParentModel, QTables,
};
use crate::error::{check_index, Error, Result};
use crate::learner::Learner;
use crate::mdp::{
    argmax_first, scope_reward_sum, CausalMdp, ComposedModel, Dims, FactoredSpec, ScopeStructure,
    Trajectory,
};

/// Per-factor counts `N(s[I_i], k, y[i])` and `N(s[I_i], k)` for a key axis
/// `k` (parent value for CF-UCBVI, action for F-UCBVI).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScopeCountTables {
    n_keys: usize,
    factor_sizes: Vec<usize>,
    n_scope_zy: Vec<Vec<u64>>,
    n_scope_z: Vec<Vec<u64>>,
    total: u64,
}

impl ScopeCountTables {
    pub fn new(structure: &ScopeStructure, n_keys: usize) -> Self {
        let m = structure.n_factors();
        let factor_sizes = structure.factor_sizes().to_vec();
        let n_scope_z = (0..m)
            .map(|i| vec![0; structure.transition_scope_size(i) * n_keys])
            .collect();
        let n_scope_zy = (0..m)
            .map(|i| vec![0; structure.transition_scope_size(i) * n_keys * factor_sizes[i]])
            .collect();
        ScopeCountTables {
            n_keys,
            factor_sizes,
            n_scope_zy,
            n_scope_z,
            total: 0,
        }
    }

    /// Increments `(s[I_i], key, next[i])` for every factor.
    pub fn record(
        &mut self,
        structure: &ScopeStructure,
        s: usize,
        key: usize,
        next: usize,
    ) -> Result<()> {
        let n = structure.n_states();
        check_index("state", s, n)?;
        check_index("key", key, self.n_keys)?;
        check_index("next state", next, n)?;
        for i in 0..self.factor_sizes.len() {
            let row = structure.transition_scope_index(i, s) * self.n_keys + key;
            self.n_scope_z[i][row] += 1;
            self.n_scope_zy[i][row * self.factor_sizes[i] + structure.factor_value(next, i)] += 1;
        }
        self.total += 1;
        Ok(())
    }

    #[inline]
    pub fn n_scope_z(&self, i: usize, scope_idx: usize, key: usize) -> u64 {
        self.n_scope_z[i][scope_idx * self.n_keys + key]
    }

    #[inline]
    pub fn n_scope_zy(&self, i: usize, scope_idx: usize, key: usize, y: usize) -> u64 {
        self.n_scope_zy[i][(scope_idx * self.n_keys + key) * self.factor_sizes[i] + y]
    }

    /// Raw per-factor tables, for inspection.
    pub fn factor_tables(&self, i: usize) -> (&[u64], &[u64]) {
        (&self.n_scope_zy[i], &self.n_scope_z[i])
    }

    pub fn n_keys(&self) -> usize {
        self.n_keys
    }

    pub fn total(&self) -> u64 {
        self.total
    }
}

/// Bonus parameters for scope-wise bonuses.
///
/// `log_term` is `ln(5·(Σ_i S[I_i])·H·K·Z·T/δ)`; `n_keys` stands in for `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredBonusParams {
    pub delta: f64,
    pub horizon: usize,
    pub factor_sizes: Vec<usize>,
    pub scope_sizes: Vec<usize>,
    pub n_keys: usize,
    pub n_episodes: usize,
    pub total_steps: usize,
    pub log_term: f64,
    pub scale: f64,
    pub value_cap: f64,
}

impl FactoredBonusParams {
    pub fn new(
        delta: f64,
        horizon: usize,
        structure: &ScopeStructure,
        n_keys: usize,
        n_episodes: usize,
    ) -> Result<Self> {
        check_delta(delta)?;
        if horizon == 0 || n_keys == 0 || n_episodes == 0 {
            return Err(Error::Config("bonus sizes must be positive".into()));
        }
        let scope_sizes: Vec<usize> = (0..structure.n_factors())
            .map(|i| structure.transition_scope_size(i))
            .collect();
        let total_steps = n_episodes * horizon;
        let scope_total: usize = scope_sizes.iter().sum();
        let log_term = (5.0
            * scope_total as f64
            * horizon as f64
            * n_episodes as f64
            * n_keys as f64
            * total_steps as f64
            / delta)
            .ln();
        Ok(FactoredBonusParams {
            delta,
            horizon,
            factor_sizes: structure.factor_sizes().to_vec(),
            scope_sizes,
            n_keys,
            n_episodes,
            total_steps,
            log_term,
            scale: 1.0,
            value_cap: horizon as f64,
        })
    }

    pub fn with_log_term(mut self, log_term: f64) -> Self {
        self.log_term = log_term;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_value_cap(mut self, cap: f64) -> Self {
        self.value_cap = cap;
        self
    }
}

/// `7·H·L·sqrt(S_i / n)`, times `params.scale`. `n` must be positive.
pub fn factored_bonus(params: &FactoredBonusParams, factor: usize, n_visits: u64) -> Result<f64> {
    check_index("factor", factor, params.factor_sizes.len())?;
    if n_visits == 0 {
        return Err(Error::Internal(
            "bonus requested for an unvisited scope pair".into(),
        ));
    }
    Ok(params.scale
        * 7.0
        * params.horizon as f64
        * params.log_term
        * (params.factor_sizes[factor] as f64 / n_visits as f64).sqrt())
}

/// Product-of-scopes estimate `Π_i P̂_i(y[i] | s[I_i], k)` with summed bonuses.
pub struct ScopeCountModel<'a> {
    structure: &'a ScopeStructure,
    counts: &'a ScopeCountTables,
    /// Per factor, bonus per `(s[I_i], key)`; unused where unvisited.
    bonus: Vec<Vec<f64>>,
}

impl<'a> ScopeCountModel<'a> {
    pub fn new(
        structure: &'a ScopeStructure,
        counts: &'a ScopeCountTables,
        params: &FactoredBonusParams,
    ) -> Self {
        let bonus = (0..structure.n_factors())
            .map(|i| {
                counts.n_scope_z[i]
                    .iter()
                    .map(|&n| {
                        if n > 0 {
                            factored_bonus(params, i, n).expect("visited pair has n > 0")
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        ScopeCountModel {
            structure,
            counts,
            bonus,
        }
    }

    /// `Σ_{s'} Π_i P̂_i(s'[i] | s[I_i], k)` for a visited row, `None` otherwise.
    pub fn row_mass(&self, s: usize, key: usize) -> Option<f64> {
        let ones = vec![1.0; self.structure.n_states()];
        self.backup_terms(s, key, &ones).map(|(mass, _)| mass)
    }
}

impl ParentModel for ScopeCountModel<'_> {
    fn backup_terms(&self, s: usize, key: usize, next_v: &[f64]) -> Option<(f64, f64)> {
        let st = self.structure;
        let m = st.n_factors();
        let n_keys = self.counts.n_keys;
        let mut rows = Vec::with_capacity(m);
        let mut bonus = 0.0;
        for i in 0..m {
            let row = st.transition_scope_index(i, s) * n_keys + key;
            let n = self.counts.n_scope_z[i][row];
            if n == 0 {
                return None;
            }
            let si = self.counts.factor_sizes[i];
            rows.push((
                &self.counts.n_scope_zy[i][row * si..(row + 1) * si],
                n as f64,
            ));
            bonus += self.bonus[i][row];
        }
        let pv = next_v
            .iter()
            .enumerate()
            .map(|(y, v)| {
                let p = rows.iter().enumerate().fold(1.0, |acc, (i, (counts, n))| {
                    acc * (counts[st.factor_value(y, i)] as f64 / n)
                });
                p * v
            })
            .sum();
        Some((pv, bonus))
    }
}

/// True scope transitions `Π_i P_i(y[i] | s[I_i], k)` with zero bonus.
pub struct ScopePlugInModel<'a>(pub &'a FactoredSpec);

impl ParentModel for ScopePlugInModel<'_> {
    fn backup_terms(&self, s: usize, key: usize, next_v: &[f64]) -> Option<(f64, f64)> {
        let pv = next_v
            .iter()
            .enumerate()
            .map(|(y, v)| self.0.transition_prob(s, key, y) * v)
            .sum();
        Some((pv, 0.0))
    }
}

/// True composed `P(s'|s,a)` with zero bonus, for action-keyed backups.
pub struct ActionPlugInModel<'a>(pub &'a ComposedModel);

impl ParentModel for ActionPlugInModel<'_> {
    fn backup_terms(&self, s: usize, a: usize, next_v: &[f64]) -> Option<(f64, f64)> {
        let pv = self
            .0
            .transition(s, a)
            .iter()
            .zip(next_v)
            .map(|(p, v)| p * v)
            .sum();
        Some((pv, 0.0))
    }
}

/// Backward induction directly over `(s, a)`:
/// `Q = min(cap, R(s,a) + P̂V + b)`, `Q = cap` when unvisited.
pub fn action_backup<M: ParentModel + ?Sized>(
    dims: Dims,
    rewards_sa: &[f64],
    cap: f64,
    model: &M,
) -> QTables {
    let Dims {
        n_states: s_n,
        n_actions: a_n,
        horizon: h_n,
        ..
    } = dims;
    let mut t = QTables::saturated(dims, cap, false);
    for h in (0..h_n).rev() {
        let (head, tail) = t.v.split_at_mut((h + 1) * s_n);
        let next_v = &tail[..s_n];
        for s in 0..s_n {
            let row = &mut t.q_sa[(h * s_n + s) * a_n..(h * s_n + s + 1) * a_n];
            for (a, slot) in row.iter_mut().enumerate() {
                *slot = match model.backup_terms(s, a, next_v) {
                    Some((pv, b)) => cap.min(rewards_sa[s * a_n + a] + pv + b),
                    None => cap,
                };
            }
            head[h * s_n + s] = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    t
}

/// What CF-UCBVI may know: scope structure, `R_i(s[J_i], z)`, `P(z|s,a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredView {
    pub dims: Dims,
    pub structure: ScopeStructure,
    pub r_scope: Vec<Vec<f64>>,
    pub p_z_given_sa: Vec<f64>,
    /// `Σ_i R_i(s[J_i], z)` expanded once, `[S × Z]`.
    pub r_sz: Vec<f64>,
}

impl FactoredView {
    pub fn new(mdp: &CausalMdp, spec: &FactoredSpec) -> Result<Self> {
        if spec.n_states() != mdp.n_states() || spec.n_parent_vals() != mdp.n_parent_vals() {
            return Err(Error::Config(
                "factored spec does not match the model sizes".into(),
            ));
        }
        let structure = spec.structure().clone();
        let z_n = mdp.n_parent_vals();
        let r_scope = spec.r_scope().to_vec();
        let r_sz = (0..mdp.n_states())
            .flat_map(|s| {
                let structure = &structure;
                let r_scope = &r_scope;
                (0..z_n).map(move |z| scope_reward_sum(structure, r_scope, z_n, s, z))
            })
            .collect();
        Ok(FactoredView {
            dims: mdp.dims(),
            structure,
            r_scope,
            p_z_given_sa: mdp.p_z_given_sa().to_vec(),
            r_sz,
        })
    }
}

/// One CF-UCB-Q-values pass from cumulative scope counts.
pub fn cfucbvi_backup(
    counts: &ScopeCountTables,
    view: &FactoredView,
    params: &FactoredBonusParams,
) -> QTables {
    let model = ScopeCountModel::new(&view.structure, counts, params);
    parent_backup(
        view.dims,
        &view.r_sz,
        &view.p_z_given_sa,
        params.value_cap,
        &model,
    )
}

/// UCBVI backup; `counts` are keyed by action.
pub fn ucbvi_baseline_backup(
    counts: &CountTables,
    dims: Dims,
    rewards_sa: &[f64],
    params: &BonusParams,
) -> QTables {
    let model = CountModel::new(counts, params);
    action_backup(dims, rewards_sa, params.value_cap, &model)
}

/// F-UCBVI backup; `counts` are keyed by action.
pub fn fucbvi_baseline_backup(
    counts: &ScopeCountTables,
    structure: &ScopeStructure,
    dims: Dims,
    rewards_sa: &[f64],
    params: &FactoredBonusParams,
) -> QTables {
    let model = ScopeCountModel::new(structure, counts, params);
    action_backup(dims, rewards_sa, params.value_cap, &model)
}

pub struct CfUcbvi {
    view: FactoredView,
    params: FactoredBonusParams,
    counts: ScopeCountTables,
    tables: QTables,
}

impl CfUcbvi {
    pub fn new(mdp: &CausalMdp, spec: &FactoredSpec, params: FactoredBonusParams) -> Result<Self> {
        let view = FactoredView::new(mdp, spec)?;
        let counts = ScopeCountTables::new(&view.structure, mdp.n_parent_vals());
        let tables = QTables::saturated(view.dims, params.value_cap, true);
        Ok(CfUcbvi {
            view,
            params,
            counts,
            tables,
        })
    }

    pub fn counts(&self) -> &ScopeCountTables {
        &self.counts
    }

    pub fn tables(&self) -> &QTables {
        &self.tables
    }
}

impl Learner for CfUcbvi {
    fn name(&self) -> &'static str {
        "cf-ucbvi"
    }

    fn plan(&mut self) {
        self.tables = cfucbvi_backup(&self.counts, &self.view, &self.params);
    }

    fn act(&self, state: usize, level: usize) -> usize {
        argmax_first(self.tables.q_row(level, state))
    }

    fn observe(&mut self, trajectory: &Trajectory) -> Result<()> {
        for st in &trajectory.steps {
            self.counts
                .record(&self.view.structure, st.state, st.parent, st.next_state)?;
        }
        Ok(())
    }

    fn value_estimate(&self, state: usize) -> f64 {
        self.tables.value(0, state)
    }

    fn horizon(&self) -> usize {
        self.view.dims.horizon
    }

    fn n_states(&self) -> usize {
        self.view.dims.n_states
    }
}

/// UCBVI: sees only `R(s,a)` and observed transitions.
pub struct Ucbvi {
    dims: Dims,
    rewards_sa: Vec<f64>,
    params: BonusParams,
    counts: CountTables,
    tables: QTables,
}

impl Ucbvi {
    /// `params` must be keyed by action, i.e. built with `n_parent_vals = A`.
    pub fn new(mdp: &CausalMdp, params: BonusParams) -> Self {
        let dims = mdp.dims();
        Ucbvi {
            dims,
            rewards_sa: mdp.composed().rewards,
            params,
            counts: CountTables::new(dims.n_states, dims.n_actions),
            tables: QTables::saturated(dims, params.value_cap, false),
        }
    }

    /// `L' = ln(5·S·A·H·K·T/δ)` and the model's value cap.
    pub fn default_params(mdp: &CausalMdp, delta: f64, n_episodes: usize) -> Result<BonusParams> {
        Ok(BonusParams::new(
            delta,
            mdp.horizon(),
            mdp.n_states(),
            mdp.n_actions(),
            n_episodes,
        )?
        .with_value_cap(mdp.value_cap()))
    }

    pub fn counts(&self) -> &CountTables {
        &self.counts
    }

    pub fn tables(&self) -> &QTables {
        &self.tables
    }
}

impl Learner for Ucbvi {
    fn name(&self) -> &'static str {
        "ucbvi"
    }

    fn plan(&mut self) {
        self.tables =
            ucbvi_baseline_backup(&self.counts, self.dims, &self.rewards_sa, &self.params);
    }

    fn act(&self, state: usize, level: usize) -> usize {
        argmax_first(self.tables.q_row(level, state))
    }

    fn observe(&mut self, trajectory: &Trajectory) -> Result<()> {
        for st in &trajectory.steps {
            self.counts.record(st.state, st.action, st.next_state)?;
        }
        Ok(())
    }

    fn value_estimate(&self, state: usize) -> f64 {
        self.tables.value(0, state)
    }

    fn horizon(&self) -> usize {
        self.dims.horizon
    }

    fn n_states(&self) -> usize {
        self.dims.n_states
    }
}

/// F-UCBVI: scope-wise counts conditioned on the full action.
pub struct FUcbvi {
    dims: Dims,
    structure: ScopeStructure,
    rewards_sa: Vec<f64>,
    params: FactoredBonusParams,
    counts: ScopeCountTables,
    tables: QTables,
}

impl FUcbvi {
    /// `params` must be keyed by action (`n_keys = A`).
    pub fn new(mdp: &CausalMdp, spec: &FactoredSpec, params: FactoredBonusParams) -> Result<Self> {
        if spec.n_states() != mdp.n_states() {
            return Err(Error::Config(
                "factored spec does not match the model sizes".into(),
            ));
        }
        let dims = mdp.dims();
        let structure = spec.structure().clone();
        let counts = ScopeCountTables::new(&structure, dims.n_actions);
        Ok(FUcbvi {
            dims,
            structure,
            rewards_sa: mdp.composed().rewards,
            tables: QTables::saturated(dims, params.value_cap, false),
            params,
            counts,
        })
    }

    /// `L'' = ln(5·(Σ_i S[I_i])·A·H·K·T/δ)` and the model's value cap.
    pub fn default_params(
        mdp: &CausalMdp,
        spec: &FactoredSpec,
        delta: f64,
        n_episodes: usize,
    ) -> Result<FactoredBonusParams> {
        Ok(FactoredBonusParams::new(
            delta,
            mdp.horizon(),
            spec.structure(),
            mdp.n_actions(),
            n_episodes,
        )?
        .with_value_cap(mdp.value_cap()))
    }

    pub fn counts(&self) -> &ScopeCountTables {
        &self.counts
    }

    pub fn tables(&self) -> &QTables {
        &self.tables
    }
}

impl Learner for FUcbvi {
    fn name(&self) -> &'static str {
        "f-ucbvi"
    }

    fn plan(&mut self) {
        self.tables = fucbvi_baseline_backup(
            &self.counts,
            &self.structure,
            self.dims,
            &self.rewards_sa,
            &self.params,
        );
    }

    fn act(&self, state: usize, level: usize) -> usize {
        argmax_first(self.tables.q_row(level, state))
    }

    fn observe(&mut self, trajectory: &Trajectory) -> Result<()> {
        for st in &trajectory.steps {
            self.counts
                .record(&self.structure, st.state, st.action, st.next_state)?;
        }
        Ok(())
    }

    fn value_estimate(&self, state: usize) -> f64 {
        self.tables.value(0, state)
    }

    fn horizon(&self) -> usize {
        self.dims.horizon
    }

    fn n_states(&self) -> usize {
        self.dims.n_states
    }
}

/// CF-UCBVI parameters for a model: `L` from the scopes, cap from the model.
pub fn cf_default_params(
    mdp: &CausalMdp,
    spec: &FactoredSpec,
    delta: f64,
    n_episodes: usize,
) -> Result<FactoredBonusParams> {
    Ok(FactoredBonusParams::new(
        delta,
        mdp.horizon(),
        spec.structure(),
        mdp.n_parent_vals(),
        n_episodes,
    )?
    .with_value_cap(mdp.value_cap()))
}
