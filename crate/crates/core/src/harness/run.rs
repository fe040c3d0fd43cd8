use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig, ExperimentKind, SweepAxis};
use crate::causal::{BonusParams, CUcbvi};
use crate::envgen::{generate_env, EnvParams, GeneratedEnv};
use crate::error::{Error, Result};
use crate::factored::{cf_default_params, CfUcbvi, FUcbvi, Ucbvi};
use crate::learner::Learner;
use crate::linear::{generate_linear_env, LinearCausalEnv, LinearEnvParams, LsviParams, LsviUcb};
use crate::mdp::{
    episode_rollout, exact_value_iteration, policy_start_value, regret_increment, CausalMdp,
    ComposedModel,
};
use crate::seed::{mix, substream};

/// A ground-truth instance the harness can run learners on.
#[derive(Debug, Clone)]
pub enum Instance {
    Factored(GeneratedEnv),
    Linear {
        env: LinearCausalEnv,
        mdp: CausalMdp,
    },
}

impl Instance {
    pub fn mdp(&self) -> &CausalMdp {
        match self {
            Instance::Factored(env) => &env.mdp,
            Instance::Linear { mdp, .. } => mdp,
        }
    }
}

/// Ground truth plus the quantities every run of it needs.
#[derive(Debug, Clone)]
pub struct PreparedInstance {
    pub instance: Instance,
    pub composed: ComposedModel,
    /// `V*_1(s_1)`.
    pub v_star: f64,
    pub start_state: usize,
}

impl PreparedInstance {
    pub fn new(instance: Instance, start_state: usize) -> Result<Self> {
        let mdp = instance.mdp();
        crate::error::check_index("start state", start_state, mdp.n_states())?;
        let v_star = exact_value_iteration(mdp).value(0, start_state);
        let composed = mdp.composed();
        Ok(PreparedInstance {
            instance,
            composed,
            v_star,
            start_state,
        })
    }
}

/// Per-episode cumulative regret of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub algo: Algorithm,
    pub seed: u64,
    pub cum_regret: Vec<f64>,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }
}

/// A finished run: the trace, the learner's `V_{k,1}(s_1)` per episode, and timing.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trace: RegretTrace,
    pub value_estimates: Vec<f64>,
    pub v_star: f64,
    pub wall_clock_secs: f64,
}

impl RunOutput {
    /// Whether `V_{k,1}(s_1) ≥ V*_1(s_1) − tol` held in every episode.
    pub fn always_optimistic(&self, tol: f64) -> bool {
        self.value_estimates.iter().all(|&v| v >= self.v_star - tol)
    }
}

/// The episode loop: plan, act greedily, score the policy exactly, learn.
pub fn run_learner(
    learner: &mut dyn Learner,
    prepared: &PreparedInstance,
    algo: Algorithm,
    episodes: usize,
    seed: u64,
) -> Result<RunOutput> {
    let started = Instant::now();
    let mdp = prepared.instance.mdp();
    let s1 = prepared.start_state;
    let mut rng = substream(seed, "rollout");
    let mut cum_regret = Vec::with_capacity(episodes);
    let mut value_estimates = Vec::with_capacity(episodes);
    let mut total = 0.0;
    for _ in 0..episodes {
        learner.plan();
        value_estimates.push(learner.value_estimate(s1));
        let policy = learner.policy();
        let v_pi = policy_start_value(&prepared.composed, &policy, s1);
        total += regret_increment(prepared.v_star, v_pi)?;
        cum_regret.push(total);
        let trajectory = episode_rollout(mdp, &policy, s1, &mut rng)?;
        learner.observe(&trajectory)?;
    }
    Ok(RunOutput {
        trace: RegretTrace {
            algo,
            seed,
            cum_regret,
        },
        value_estimates,
        v_star: prepared.v_star,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Builds `algo` for `instance` from the run settings in `config`.
pub fn build_learner(
    config: &ExperimentConfig,
    instance: &Instance,
    algo: Algorithm,
) -> Result<Box<dyn Learner>> {
    let (delta, k, scale) = (config.delta, config.episodes, config.bonus_scale);
    let learner: Box<dyn Learner> = match (algo, instance) {
        (Algorithm::CUcbvi, inst) => {
            let mdp = inst.mdp();
            let params = BonusParams::for_mdp(mdp, delta, k)?.with_scale(scale);
            Box::new(CUcbvi::new(mdp, params))
        }
        (Algorithm::Ucbvi, inst) => {
            let mdp = inst.mdp();
            let params = Ucbvi::default_params(mdp, delta, k)?.with_scale(scale);
            Box::new(Ucbvi::new(mdp, params))
        }
        (Algorithm::CfUcbvi, Instance::Factored(env)) => {
            let params = cf_default_params(&env.mdp, &env.spec, delta, k)?.with_scale(scale);
            Box::new(CfUcbvi::new(&env.mdp, &env.spec, params)?)
        }
        (Algorithm::FUcbvi, Instance::Factored(env)) => {
            let params = FUcbvi::default_params(&env.mdp, &env.spec, delta, k)?.with_scale(scale);
            Box::new(FUcbvi::new(&env.mdp, &env.spec, params)?)
        }
        (Algorithm::LsviUcb, Instance::Linear { env, .. }) => {
            let mut params = LsviParams::schedule(
                env.dim(),
                env.dims().horizon,
                k,
                delta,
                config.linear.beta_c,
            );
            params.lambda = config.linear.lambda;
            Box::new(LsviUcb::new(env, params)?)
        }
        (algo, _) => {
            return Err(Error::Config(format!(
                "{algo} needs a {} instance",
                if algo == Algorithm::LsviUcb {
                    "linear"
                } else {
                    "factored"
                }
            )))
        }
    };
    Ok(learner)
}

/// One run of `algo` on `prepared` with the given seed.
pub fn run_single(
    config: &ExperimentConfig,
    prepared: &PreparedInstance,
    algo: Algorithm,
    seed: u64,
) -> Result<RunOutput> {
    let mut learner = build_learner(config, &prepared.instance, algo)?;
    run_learner(learner.as_mut(), prepared, algo, config.episodes, seed)
}

/// One point of a sweep (or the single point of an unswept experiment).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepPoint {
    pub key: &'static str,
    pub value: usize,
}

pub const NO_SWEEP: SweepPoint = SweepPoint {
    key: "none",
    value: 0,
};

pub fn sweep_points(config: &ExperimentConfig) -> Vec<SweepPoint> {
    match &config.sweep {
        None => vec![NO_SWEEP],
        Some(sweep) => sweep
            .values
            .iter()
            .map(|&value| SweepPoint {
                key: sweep.axis.as_str(),
                value,
            })
            .collect(),
    }
}

/// Seed of the environment for one rep; shared by all algorithms and sweep
/// points. Reward and per-bit transition tables are drawn from substreams
/// that do not depend on `m`, so points of an `m` sweep differ only in
/// `P(z|s,a)`.
pub fn env_seed(base: u64, rep: usize) -> u64 {
    mix(base, &[0x656e76, rep as u64])
}

/// Seed of one run.
pub fn run_seed(base: u64, algo: Algorithm, point: SweepPoint, rep: usize) -> u64 {
    mix(base, &[algo.code(), point.value as u64, rep as u64])
}

/// Generates the ground truth for a sweep point and rep.
pub fn make_instance(config: &ExperimentConfig, point: SweepPoint, rep: usize) -> Result<Instance> {
    let seed = env_seed(config.seed, rep);
    if config.experiment == ExperimentKind::Linear {
        let lc = config.linear;
        let env = generate_linear_env(&LinearEnvParams {
            dim: lc.dim,
            n_states: lc.n_states,
            n_actions: lc.n_actions,
            n_parent_vals: lc.n_parent_vals,
            horizon: config.horizon,
            seed,
        })?;
        let mdp = env.to_causal_mdp()?;
        return Ok(Instance::Linear { env, mdp });
    }
    let mut params = EnvParams {
        m: config.m,
        n: config.n,
        d_s: config.d_s,
        horizon: config.horizon,
        seed,
    };
    if let Some(sweep) = &config.sweep {
        match sweep.axis {
            SweepAxis::M => params.m = point.value,
            SweepAxis::DS => params.d_s = point.value,
        }
    }
    Ok(Instance::Factored(generate_env(&params)?))
}
