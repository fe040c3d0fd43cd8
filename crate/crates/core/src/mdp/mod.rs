//! Ground-truth causal MDPs: composition, exact planning, rollout and regret.

mod factored;
mod model;
mod planning;
mod rollout;

pub use factored::{scope_reward_sum, FactoredSpec, ScopeStructure};
pub(crate) use model::check_rows;
pub use model::{CausalMdp, ComposedModel, Dims, ROW_SUM_TOL};
pub use planning::{
    argmax_first, exact_value_iteration, exact_value_iteration_composed, policy_start_value,
    policy_value, policy_value_composed, regret_increment, stochastic_policy_value,
    uniform_policy_value, Policy, ValueTables, REGRET_SLACK,
};
pub use rollout::{episode_rollout, sample_index, Step, Trajectory};
