//! C-UCBVI: optimistic value iteration over (state, parent-value) pairs.

use crate::error::{check_index, Error, Result};
use crate::learner::Learner;
use crate::mdp::{argmax_first, CausalMdp, Dims, Policy, Trajectory};

/// Visit counts `N(s,z,y)` and `N(s,z)`.
///
/// The parent axis is generic: the UCBVI baseline reuses this table keyed by
/// action instead of parent value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTables {
    n_states: usize,
    n_keys: usize,
    n_szy: Vec<u64>,
    n_sz: Vec<u64>,
    total: u64,
}

impl CountTables {
    pub fn new(n_states: usize, n_keys: usize) -> Self {
        CountTables {
            n_states,
            n_keys,
            n_szy: vec![0; n_states * n_keys * n_states],
            n_sz: vec![0; n_states * n_keys],
            total: 0,
        }
    }

    pub fn record(&mut self, s: usize, z: usize, next: usize) -> Result<()> {
        check_index("state", s, self.n_states)?;
        check_index("parent value", z, self.n_keys)?;
        check_index("next state", next, self.n_states)?;
        let pair = s * self.n_keys + z;
        self.n_sz[pair] += 1;
        self.n_szy[pair * self.n_states + next] += 1;
        self.total += 1;
        Ok(())
    }

    #[inline]
    pub fn n_sz(&self, s: usize, z: usize) -> u64 {
        self.n_sz[s * self.n_keys + z]
    }

    #[inline]
    pub fn n_szy(&self, s: usize, z: usize, y: usize) -> u64 {
        self.n_szy[(s * self.n_keys + z) * self.n_states + y]
    }

    #[inline]
    fn next_counts(&self, s: usize, z: usize) -> &[u64] {
        let start = (s * self.n_keys + z) * self.n_states;
        &self.n_szy[start..start + self.n_states]
    }

    /// Steps recorded so far.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_keys(&self) -> usize {
        self.n_keys
    }

    /// `P̂(·|s,z) = N(s,z,·) / N(s,z)`, or `None` when `(s,z)` is unvisited.
    pub fn empirical_transition(&self, s: usize, z: usize) -> Option<Vec<f64>> {
        let n = self.n_sz(s, z);
        if n == 0 {
            return None;
        }
        let n = n as f64;
        Some(
            self.next_counts(s, z)
                .iter()
                .map(|&c| c as f64 / n)
                .collect(),
        )
    }

    /// `Σ_y P̂(y|s,z) v(y)`, or `None` when unvisited.
    #[inline]
    pub(crate) fn expected_next(&self, s: usize, z: usize, next_v: &[f64]) -> Option<f64> {
        let n = self.n_sz(s, z);
        if n == 0 {
            return None;
        }
        let n = n as f64;
        Some(
            self.next_counts(s, z)
                .iter()
                .zip(next_v)
                .map(|(&c, v)| (c as f64 / n) * v)
                .sum(),
        )
    }
}

/// Hoeffding bonus parameters.
///
/// `log_term` is `ln(5·S·H·K·Z·T/δ)` with `T = K·H`. `scale` multiplies the
/// whole bonus and is 1 for the textbook constants. `value_cap` is the clip
/// level applied to every optimistic value; it is `H` for rewards in `[0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BonusParams {
    pub delta: f64,
    pub horizon: usize,
    pub n_states: usize,
    pub n_parent_vals: usize,
    pub n_episodes: usize,
    pub total_steps: usize,
    pub log_term: f64,
    pub scale: f64,
    pub value_cap: f64,
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "delta must lie in (0,1), got {delta}"
        )))
    }
}

impl BonusParams {
    pub fn new(
        delta: f64,
        horizon: usize,
        n_states: usize,
        n_parent_vals: usize,
        n_episodes: usize,
    ) -> Result<Self> {
        check_delta(delta)?;
        if horizon == 0 || n_states == 0 || n_parent_vals == 0 || n_episodes == 0 {
            return Err(Error::Config("bonus sizes must be positive".into()));
        }
        let total_steps = n_episodes * horizon;
        let log_term = (5.0
            * n_states as f64
            * horizon as f64
            * n_episodes as f64
            * n_parent_vals as f64
            * total_steps as f64
            / delta)
            .ln();
        Ok(BonusParams {
            delta,
            horizon,
            n_states,
            n_parent_vals,
            n_episodes,
            total_steps,
            log_term,
            scale: 1.0,
            value_cap: horizon as f64,
        })
    }

    pub fn for_mdp(mdp: &CausalMdp, delta: f64, n_episodes: usize) -> Result<Self> {
        Ok(BonusParams::new(
            delta,
            mdp.horizon(),
            mdp.n_states(),
            mdp.n_parent_vals(),
            n_episodes,
        )?
        .with_value_cap(mdp.value_cap()))
    }

    /// Overrides `L`, e.g. to align log constants between learners.
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

/// `7·H·L·sqrt(S / n)`, times `params.scale`. `n` must be positive.
pub fn hoeffding_bonus(params: &BonusParams, n_visits: u64) -> Result<f64> {
    if n_visits == 0 {
        return Err(Error::Internal(
            "bonus requested for an unvisited pair".into(),
        ));
    }
    Ok(params.scale
        * 7.0
        * params.horizon as f64
        * params.log_term
        * (params.n_states as f64 / n_visits as f64).sqrt())
}

/// Optimistic tables: `q_sz: [H × S × Z]`, `q_sa: [H × S × A]`, `v: [(H+1) × S]`.
///
/// Action-level learners leave `q_sz` empty.
#[derive(Debug, Clone, PartialEq)]
pub struct QTables {
    pub horizon: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_parent_vals: usize,
    pub q_sz: Vec<f64>,
    pub q_sa: Vec<f64>,
    pub v: Vec<f64>,
}

impl QTables {
    /// Tables before any data: every entry at the cap, terminal level at 0.
    pub fn saturated(dims: Dims, cap: f64, with_sz: bool) -> Self {
        let Dims {
            n_states: s,
            n_actions: a,
            n_parent_vals: z,
            horizon: h,
        } = dims;
        let mut v = vec![cap; (h + 1) * s];
        v[h * s..].fill(0.0);
        QTables {
            horizon: h,
            n_states: s,
            n_actions: a,
            n_parent_vals: if with_sz { z } else { 0 },
            q_sz: if with_sz {
                vec![cap; h * s * z]
            } else {
                Vec::new()
            },
            q_sa: vec![cap; h * s * a],
            v,
        }
    }

    #[inline]
    pub fn q_row(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.n_states + s) * self.n_actions;
        &self.q_sa[start..start + self.n_actions]
    }

    #[inline]
    pub fn q_sz(&self, h: usize, s: usize, z: usize) -> f64 {
        self.q_sz[(h * self.n_states + s) * self.n_parent_vals + z]
    }

    #[inline]
    pub fn value(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.n_states + s]
    }

    pub fn greedy_policy(&self) -> Policy {
        Policy::from_fn(self.horizon, self.n_states, |h, s| {
            greedy_action(self, s, h)
        })
    }
}

/// `argmax_a Q(h,s,a)`, lowest index on ties.
pub fn greedy_action(tables: &QTables, s: usize, h: usize) -> usize {
    argmax_first(tables.q_row(h, s))
}

/// What a causal learner is allowed to know: `R(s,z)`, `P(z|s,a)` and sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalView {
    pub dims: Dims,
    pub r_sz: Vec<f64>,
    pub p_z_given_sa: Vec<f64>,
    pub value_cap: f64,
}

impl CausalView {
    pub fn from_mdp(mdp: &CausalMdp) -> Self {
        CausalView {
            dims: mdp.dims(),
            r_sz: mdp.r_sz().to_vec(),
            p_z_given_sa: mdp.p_z_given_sa().to_vec(),
            value_cap: mdp.value_cap(),
        }
    }
}

/// Source of `(P̂V)(s,z)` and the matching bonus for the (s,z) backup.
pub trait ParentModel {
    /// `Some((Σ_y P̂(y|s,z) v(y), bonus))`, or `None` for an unvisited pair.
    fn backup_terms(&self, s: usize, z: usize, next_v: &[f64]) -> Option<(f64, f64)>;
}

/// Count-based estimate with the Hoeffding bonus.
pub struct CountModel<'a> {
    counts: &'a CountTables,
    bonus: Vec<f64>,
}

impl<'a> CountModel<'a> {
    pub fn new(counts: &'a CountTables, params: &BonusParams) -> Self {
        let (s_n, z_n) = (counts.n_states(), counts.n_keys());
        let mut bonus = vec![0.0; s_n * z_n];
        for s in 0..s_n {
            for z in 0..z_n {
                let n = counts.n_sz(s, z);
                if n > 0 {
                    bonus[s * z_n + z] =
                        hoeffding_bonus(params, n).expect("visited pair has n > 0");
                }
            }
        }
        CountModel { counts, bonus }
    }
}

impl ParentModel for CountModel<'_> {
    #[inline]
    fn backup_terms(&self, s: usize, z: usize, next_v: &[f64]) -> Option<(f64, f64)> {
        let pv = self.counts.expected_next(s, z, next_v)?;
        Some((pv, self.bonus[s * self.counts.n_keys() + z]))
    }
}

/// The true `P(s'|s,z)` with zero bonus.
pub struct PlugInModel<'a>(pub &'a CausalMdp);

impl ParentModel for PlugInModel<'_> {
    fn backup_terms(&self, s: usize, z: usize, next_v: &[f64]) -> Option<(f64, f64)> {
        let pv = self
            .0
            .next_state_dist(s, z)
            .iter()
            .zip(next_v)
            .map(|(p, v)| p * v)
            .sum();
        Some((pv, 0.0))
    }
}

/// Backward induction over (s,z): clipped optimistic `q`, mixed into `Q`
/// through `P(z|s,a)`, maximised into `V`. Unvisited pairs get `q = cap`.
pub fn parent_backup<M: ParentModel + ?Sized>(
    dims: Dims,
    rewards_sz: &[f64],
    p_z_given_sa: &[f64],
    cap: f64,
    model: &M,
) -> QTables {
    let Dims {
        n_states: s_n,
        n_actions: a_n,
        n_parent_vals: z_n,
        horizon: h_n,
    } = dims;
    let mut t = QTables::saturated(dims, cap, true);
    for h in (0..h_n).rev() {
        let (head, tail) = t.v.split_at_mut((h + 1) * s_n);
        let next_v = &tail[..s_n];
        let q_level = &mut t.q_sz[h * s_n * z_n..(h + 1) * s_n * z_n];
        for s in 0..s_n {
            for z in 0..z_n {
                q_level[s * z_n + z] = match model.backup_terms(s, z, next_v) {
                    Some((pv, b)) => cap.min(rewards_sz[s * z_n + z] + pv + b),
                    None => cap,
                };
            }
        }
        for s in 0..s_n {
            let q_s = &q_level[s * z_n..(s + 1) * z_n];
            let row = &mut t.q_sa[(h * s_n + s) * a_n..(h * s_n + s + 1) * a_n];
            for (a, slot) in row.iter_mut().enumerate() {
                let w = &p_z_given_sa[(s * a_n + a) * z_n..(s * a_n + a + 1) * z_n];
                // Written as a shortfall from the cap so that saturated rows tie exactly.
                *slot = cap - w.iter().zip(q_s).map(|(p, q)| p * (cap - q)).sum::<f64>();
            }
            head[h * s_n + s] = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
    }
    t
}

/// One C-UCB-Q-values pass from cumulative counts.
pub fn cucbvi_backup(counts: &CountTables, view: &CausalView, params: &BonusParams) -> QTables {
    let model = CountModel::new(counts, params);
    parent_backup(
        view.dims,
        &view.r_sz,
        &view.p_z_given_sa,
        params.value_cap,
        &model,
    )
}

/// The C-UCBVI learner.
pub struct CUcbvi {
    view: CausalView,
    params: BonusParams,
    counts: CountTables,
    tables: QTables,
}

impl CUcbvi {
    pub fn new(mdp: &CausalMdp, params: BonusParams) -> Self {
        let view = CausalView::from_mdp(mdp);
        let counts = CountTables::new(mdp.n_states(), mdp.n_parent_vals());
        let tables = QTables::saturated(view.dims, params.value_cap, true);
        CUcbvi {
            view,
            params,
            counts,
            tables,
        }
    }

    pub fn counts(&self) -> &CountTables {
        &self.counts
    }

    pub fn tables(&self) -> &QTables {
        &self.tables
    }
}

impl Learner for CUcbvi {
    fn name(&self) -> &'static str {
        "c-ucbvi"
    }

    fn plan(&mut self) {
        self.tables = cucbvi_backup(&self.counts, &self.view, &self.params);
    }

    fn act(&self, state: usize, level: usize) -> usize {
        greedy_action(&self.tables, state, level)
    }

    fn observe(&mut self, trajectory: &Trajectory) -> Result<()> {
        for st in &trajectory.steps {
            self.counts.record(st.state, st.parent, st.next_state)?;
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
