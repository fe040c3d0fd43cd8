//! Causal linear MDPs and LSVI-UCB on composed features.
//!
//! With `P(s'|s,z) = ⟨φ(s,z), μ(s')⟩` and `R(s,z) = ⟨φ(s,z), ω⟩`, the
//! action-level model is linear in `ψ(s,a) = Σ_z P(z|s,a) φ(s,z)`, so a
//! standard linear-MDP learner can run on `ψ`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_index, Error, Result};
use crate::learner::Learner;
use crate::mdp::{argmax_first, CausalMdp, Dims, Trajectory};
use crate::random::dirichlet_ones;
use crate::seed::substream;

const FEATURE_TOL: f64 = 1e-9;

/// `phi[(s * Z + z) * d + j]`, `mu[j * S + s']`, `omega[j]`,
/// `p_z_given_sa[(s * A + a) * Z + z]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLinearEnv", into = "RawLinearEnv")]
pub struct LinearCausalEnv {
    dims: Dims,
    dim: usize,
    phi: Vec<f64>,
    mu: Vec<f64>,
    omega: Vec<f64>,
    p_z_given_sa: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawLinearEnv {
    n_states: usize,
    n_actions: usize,
    n_parent_vals: usize,
    horizon: usize,
    dim: usize,
    phi: Vec<f64>,
    mu: Vec<f64>,
    omega: Vec<f64>,
    p_z_given_sa: Vec<f64>,
}

impl TryFrom<RawLinearEnv> for LinearCausalEnv {
    type Error = Error;

    fn try_from(raw: RawLinearEnv) -> Result<Self> {
        let dims = Dims {
            n_states: raw.n_states,
            n_actions: raw.n_actions,
            n_parent_vals: raw.n_parent_vals,
            horizon: raw.horizon,
        };
        LinearCausalEnv::new(dims, raw.dim, raw.phi, raw.mu, raw.omega, raw.p_z_given_sa)
    }
}

impl From<LinearCausalEnv> for RawLinearEnv {
    fn from(env: LinearCausalEnv) -> Self {
        RawLinearEnv {
            n_states: env.dims.n_states,
            n_actions: env.dims.n_actions,
            n_parent_vals: env.dims.n_parent_vals,
            horizon: env.dims.horizon,
            dim: env.dim,
            phi: env.phi,
            mu: env.mu,
            omega: env.omega,
            p_z_given_sa: env.p_z_given_sa,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

impl LinearCausalEnv {
    pub fn new(
        dims: Dims,
        dim: usize,
        phi: Vec<f64>,
        mu: Vec<f64>,
        omega: Vec<f64>,
        p_z_given_sa: Vec<f64>,
    ) -> Result<Self> {
        let Dims {
            n_states: s_n,
            n_actions: a_n,
            n_parent_vals: z_n,
            horizon,
        } = dims;
        if s_n == 0 || a_n == 0 || z_n == 0 || horizon == 0 || dim == 0 {
            return Err(Error::InvalidModel(format!(
                "sizes must be positive: {dims:?}, d = {dim}"
            )));
        }
        if phi.len() != s_n * z_n * dim
            || mu.len() != dim * s_n
            || omega.len() != dim
            || p_z_given_sa.len() != s_n * a_n * z_n
        {
            return Err(Error::InvalidModel(
                "linear env table sizes are inconsistent".into(),
            ));
        }
        crate::mdp::check_rows("p_z_given_sa", &p_z_given_sa, z_n)?;
        let root_d = (dim as f64).sqrt();
        if norm(&omega) > root_d + FEATURE_TOL {
            return Err(Error::InvalidModel("‖ω‖ exceeds √d".into()));
        }
        let mu_total: Vec<f64> = (0..dim)
            .map(|j| mu[j * s_n..(j + 1) * s_n].iter().sum())
            .collect();
        if norm(&mu_total) > root_d + FEATURE_TOL {
            return Err(Error::InvalidModel("‖μ(S)‖ exceeds √d".into()));
        }
        let env = LinearCausalEnv {
            dims,
            dim,
            phi,
            mu,
            omega,
            p_z_given_sa,
        };
        for s in 0..s_n {
            for z in 0..z_n {
                let f = env.features(s, z);
                if norm(f) > 1.0 + FEATURE_TOL {
                    return Err(Error::InvalidModel(format!("‖φ({s},{z})‖ exceeds 1")));
                }
                let r = dot(f, &env.omega);
                if !(-FEATURE_TOL..=1.0 + FEATURE_TOL).contains(&r) {
                    return Err(Error::InvalidModel(format!("⟨φ({s},{z}), ω⟩ = {r}")));
                }
                let row = env.next_state_row(s, z);
                if row.iter().any(|&p| p < -1e-12) {
                    return Err(Error::InvalidModel(format!(
                        "⟨φ({s},{z}), μ(·)⟩ has a negative entry"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > FEATURE_TOL {
                    return Err(Error::InvalidModel(format!(
                        "⟨φ({s},{z}), μ(·)⟩ sums to {sum}"
                    )));
                }
            }
        }
        Ok(env)
    }

    /// The one-hot embedding of a tabular model: `d = S·Z`, `φ(s,z) = e_{s·Z+z}`.
    pub fn from_tabular(mdp: &CausalMdp) -> Result<Self> {
        let dims = mdp.dims();
        let (s_n, z_n) = (dims.n_states, dims.n_parent_vals);
        let d = s_n * z_n;
        let mut phi = vec![0.0; s_n * z_n * d];
        for k in 0..d {
            phi[k * d + k] = 1.0;
        }
        LinearCausalEnv::new(
            dims,
            d,
            phi,
            mdp.p_s_given_sz().to_vec(),
            mdp.r_sz().to_vec(),
            mdp.p_z_given_sa().to_vec(),
        )
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    #[inline]
    pub fn features(&self, s: usize, z: usize) -> &[f64] {
        let start = (s * self.dims.n_parent_vals + z) * self.dim;
        &self.phi[start..start + self.dim]
    }

    /// `μ(s')` as a `d`-vector.
    pub fn measure_at(&self, next: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|j| self.mu[j * self.dims.n_states + next])
            .collect()
    }

    fn next_state_row(&self, s: usize, z: usize) -> Vec<f64> {
        let f = self.features(s, z);
        (0..self.dims.n_states)
            .map(|y| dot(f, &self.measure_at(y)))
            .collect()
    }

    pub fn parent_dist(&self, s: usize, a: usize) -> &[f64] {
        let z_n = self.dims.n_parent_vals;
        let start = (s * self.dims.n_actions + a) * z_n;
        &self.p_z_given_sa[start..start + z_n]
    }

    /// `ψ(s,a) = Σ_z P(z|s,a) φ(s,z)`.
    pub fn compose_features(&self, s: usize, a: usize) -> Result<Vec<f64>> {
        check_index("state", s, self.dims.n_states)?;
        check_index("action", a, self.dims.n_actions)?;
        let mut psi = vec![0.0; self.dim];
        for (z, &w) in self.parent_dist(s, a).iter().enumerate() {
            for (p, f) in psi.iter_mut().zip(self.features(s, z)) {
                *p += w * f;
            }
        }
        Ok(psi)
    }

    /// `ψ` for every `(s,a)`, `[S × A × d]`.
    pub fn feature_table(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dims.n_states * self.dims.n_actions * self.dim);
        for s in 0..self.dims.n_states {
            for a in 0..self.dims.n_actions {
                out.extend(self.compose_features(s, a).expect("indices in range"));
            }
        }
        out
    }

    /// Expands into the tabular causal MDP with `P(s'|s,z) = ⟨φ, μ(s')⟩`
    /// and `R(s,z) = ⟨φ, ω⟩`; round-off below zero is clamped.
    pub fn to_causal_mdp(&self) -> Result<CausalMdp> {
        let (s_n, z_n) = (self.dims.n_states, self.dims.n_parent_vals);
        let mut ps = Vec::with_capacity(s_n * z_n * s_n);
        let mut r = Vec::with_capacity(s_n * z_n);
        for s in 0..s_n {
            for z in 0..z_n {
                ps.extend(self.next_state_row(s, z).into_iter().map(|p| p.max(0.0)));
                r.push(dot(self.features(s, z), &self.omega).clamp(0.0, 1.0));
            }
        }
        CausalMdp::new(self.dims, self.p_z_given_sa.clone(), ps, r)?.with_reward_bound(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearEnvParams {
    pub dim: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_parent_vals: usize,
    pub horizon: usize,
    pub seed: u64,
}

/// Random causal linear MDP. `φ(s,z) ~ Dir(1_d)` lies on the simplex, each
/// `μ^(j) ~ Dir(1_S)` is a distribution over states, `ω ~ U[0,1]^d`, and
/// `P(z|s,a) ~ Dir(1_Z)`; the invariants then hold by construction.
pub fn generate_linear_env(params: &LinearEnvParams) -> Result<LinearCausalEnv> {
    let LinearEnvParams {
        dim,
        n_states,
        n_actions,
        n_parent_vals,
        horizon,
        seed,
    } = *params;
    if dim == 0 || n_states == 0 || n_actions == 0 || n_parent_vals == 0 || horizon == 0 {
        return Err(Error::Config(format!(
            "linear env sizes must be positive: {params:?}"
        )));
    }
    let entries = n_states
        .checked_mul(n_parent_vals)
        .and_then(|x| x.checked_mul(dim.max(n_actions)))
        .filter(|&e| e <= crate::envgen::DEFAULT_MAX_ENTRIES)
        .ok_or_else(|| Error::TooLarge(format!("linear env too large: {params:?}")))?;
    debug_assert!(entries > 0);

    let mut rng = substream(seed, "phi");
    let phi: Vec<f64> = (0..n_states * n_parent_vals)
        .flat_map(|_| dirichlet_ones(&mut rng, dim))
        .collect();
    let mut rng = substream(seed, "mu");
    let mu: Vec<f64> = (0..dim)
        .flat_map(|_| dirichlet_ones(&mut rng, n_states))
        .collect();
    let mut rng = substream(seed, "omega");
    let omega: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let mut rng = substream(seed, "pz");
    let pz: Vec<f64> = (0..n_states * n_actions)
        .flat_map(|_| dirichlet_ones(&mut rng, n_parent_vals))
        .collect();
    let dims = Dims {
        n_states,
        n_actions,
        n_parent_vals,
        horizon,
    };
    LinearCausalEnv::new(dims, dim, phi, mu, omega, pz)
}

/// Ridge regulariser `λ` and bonus multiplier `β`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsviParams {
    pub lambda: f64,
    pub beta: f64,
}

impl LsviParams {
    /// `λ = 1`, `β = c·d·H·sqrt(ln(2·d·T/δ))` with `T = K·H`.
    pub fn schedule(dim: usize, horizon: usize, n_episodes: usize, delta: f64, c: f64) -> Self {
        let t = (n_episodes * horizon) as f64;
        let beta = c * dim as f64 * horizon as f64 * (2.0 * dim as f64 * t / delta).ln().sqrt();
        LsviParams { lambda: 1.0, beta }
    }
}

/// Per-level sufficient statistics of the observed transitions.
#[derive(Debug, Clone, PartialEq)]
struct LevelData {
    /// `Σ_τ ψ_τ ψ_τᵀ`
    gram: DMatrix<f64>,
    /// Summed rewards per `(s,a)`.
    reward_sum: Vec<f64>,
    /// Transition counts per `(s,a,s')`.
    next_counts: Vec<u64>,
}

/// Regression data and hyper-parameters for LSVI-UCB.
#[derive(Debug, Clone, PartialEq)]
pub struct LsviState {
    dims: Dims,
    dim: usize,
    /// `ψ` table, `[S × A × d]`.
    psi: Vec<f64>,
    params: LsviParams,
    levels: Vec<LevelData>,
}

/// Output of one planning pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LsviPlan {
    pub dims: Dims,
    /// `[H × S × A]`
    pub q: Vec<f64>,
    /// `[(H+1) × S]`
    pub v: Vec<f64>,
    /// `w_h` per level.
    pub weights: Vec<Vec<f64>>,
    /// `Λ_h` per level, row-major `d × d`.
    pub grams: Vec<Vec<f64>>,
}

impl LsviPlan {
    #[inline]
    pub fn q_row(&self, h: usize, s: usize) -> &[f64] {
        let a_n = self.dims.n_actions;
        let start = (h * self.dims.n_states + s) * a_n;
        &self.q[start..start + a_n]
    }

    #[inline]
    pub fn value(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.dims.n_states + s]
    }
}

impl LsviState {
    pub fn new(dims: Dims, dim: usize, psi: Vec<f64>, params: LsviParams) -> Result<Self> {
        let usable = params.lambda > 0.0 && params.beta >= 0.0;
        if !usable {
            return Err(Error::Config(format!(
                "need λ > 0 and β >= 0, got {params:?}"
            )));
        }
        if psi.len() != dims.n_states * dims.n_actions * dim {
            return Err(Error::Config("feature table has the wrong size".into()));
        }
        let level = LevelData {
            gram: DMatrix::zeros(dim, dim),
            reward_sum: vec![0.0; dims.n_states * dims.n_actions],
            next_counts: vec![0; dims.n_states * dims.n_actions * dims.n_states],
        };
        Ok(LsviState {
            dims,
            dim,
            psi,
            params,
            levels: vec![level; dims.horizon],
        })
    }

    pub fn for_env(env: &LinearCausalEnv, params: LsviParams) -> Result<Self> {
        LsviState::new(env.dims(), env.dim(), env.feature_table(), params)
    }

    #[inline]
    fn psi(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.dims.n_actions + a) * self.dim;
        &self.psi[start..start + self.dim]
    }

    /// Adds one observed transition at `level`.
    pub fn push(
        &mut self,
        level: usize,
        s: usize,
        a: usize,
        reward: f64,
        next: usize,
    ) -> Result<()> {
        check_index("level", level, self.dims.horizon)?;
        check_index("state", s, self.dims.n_states)?;
        check_index("action", a, self.dims.n_actions)?;
        check_index("next state", next, self.dims.n_states)?;
        let psi = DVector::from_column_slice(self.psi(s, a));
        let (a_n, s_n) = (self.dims.n_actions, self.dims.n_states);
        let data = &mut self.levels[level];
        data.gram += &psi * psi.transpose();
        data.reward_sum[s * a_n + a] += reward;
        data.next_counts[(s * a_n + a) * s_n + next] += 1;
        Ok(())
    }

    /// `Λ_h = λI + Σ ψψᵀ`.
    pub fn gram(&self, level: usize) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * self.params.lambda + &self.levels[level].gram
    }

    pub fn params(&self) -> LsviParams {
        self.params
    }
}

/// One LSVI-UCB planning pass over all levels, with values clipped at `cap`.
pub fn lsvi_ucb_episode(state: &LsviState, cap: f64) -> LsviPlan {
    let Dims {
        n_states: s_n,
        n_actions: a_n,
        horizon: h_n,
        ..
    } = state.dims;
    let d = state.dim;
    let mut q = vec![0.0; h_n * s_n * a_n];
    let mut v = vec![0.0; (h_n + 1) * s_n];
    let mut weights = vec![Vec::new(); h_n];
    let mut grams = vec![Vec::new(); h_n];
    for h in (0..h_n).rev() {
        let gram = state.gram(h);
        let chol = gram
            .clone()
            .cholesky()
            .expect("λI + Σψψᵀ is positive definite for λ > 0");
        let data = &state.levels[h];
        let next_v = v[(h + 1) * s_n..(h + 2) * s_n].to_vec();
        let mut rhs = DVector::zeros(d);
        for s in 0..s_n {
            for a in 0..a_n {
                let counts = &data.next_counts[(s * a_n + a) * s_n..(s * a_n + a + 1) * s_n];
                let target = data.reward_sum[s * a_n + a]
                    + counts
                        .iter()
                        .zip(&next_v)
                        .map(|(&c, v)| c as f64 * v)
                        .sum::<f64>();
                if target != 0.0 {
                    rhs += DVector::from_column_slice(state.psi(s, a)) * target;
                }
            }
        }
        let w = chol.solve(&rhs);
        for s in 0..s_n {
            for a in 0..a_n {
                let psi = DVector::from_column_slice(state.psi(s, a));
                let width = psi.dot(&chol.solve(&psi)).max(0.0).sqrt();
                q[(h * s_n + s) * a_n + a] = cap.min(w.dot(&psi) + state.params.beta * width);
            }
            v[h * s_n + s] = q[(h * s_n + s) * a_n..(h * s_n + s + 1) * a_n]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
        }
        weights[h] = w.as_slice().to_vec();
        grams[h] = gram.transpose().as_slice().to_vec();
    }
    LsviPlan {
        dims: state.dims,
        q,
        v,
        weights,
        grams,
    }
}

/// LSVI-UCB driven through the common learner interface. It knows `φ` and
/// `P(z|s,a)` (hence `ψ`) but not `μ` or `ω`.
pub struct LsviUcb {
    state: LsviState,
    cap: f64,
    plan: LsviPlan,
}

impl LsviUcb {
    pub fn new(env: &LinearCausalEnv, params: LsviParams) -> Result<Self> {
        let state = LsviState::for_env(env, params)?;
        let cap = env.dims().horizon as f64;
        let plan = lsvi_ucb_episode(&state, cap);
        Ok(LsviUcb { state, cap, plan })
    }

    pub fn state(&self) -> &LsviState {
        &self.state
    }

    pub fn plan_tables(&self) -> &LsviPlan {
        &self.plan
    }
}

impl Learner for LsviUcb {
    fn name(&self) -> &'static str {
        "lsvi-ucb"
    }

    fn plan(&mut self) {
        self.plan = lsvi_ucb_episode(&self.state, self.cap);
    }

    fn act(&self, state: usize, level: usize) -> usize {
        argmax_first(self.plan.q_row(level, state))
    }

    fn observe(&mut self, trajectory: &Trajectory) -> Result<()> {
        for st in &trajectory.steps {
            self.state
                .push(st.level, st.state, st.action, st.reward, st.next_state)?;
        }
        Ok(())
    }

    fn value_estimate(&self, state: usize) -> f64 {
        self.plan.value(0, state)
    }

    fn horizon(&self) -> usize {
        self.state.dims.horizon
    }

    fn n_states(&self) -> usize {
        self.state.dims.n_states
    }
}
