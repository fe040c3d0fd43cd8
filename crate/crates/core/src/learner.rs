//! The interface shared by every learner the harness can drive.

use crate::error::Result;
use crate::mdp::{Policy, Trajectory};

pub trait Learner: Send {
    fn name(&self) -> &'static str;

    /// Recomputes the optimistic tables from everything observed so far.
    fn plan(&mut self);

    /// Greedy action at `(state, level)` under the current tables.
    fn act(&self, state: usize, level: usize) -> usize;

    /// Ingests one finished episode.
    fn observe(&mut self, trajectory: &Trajectory) -> Result<()>;

    /// Current `V_{k,1}(state)`.
    fn value_estimate(&self, state: usize) -> f64;

    fn horizon(&self) -> usize;

    fn n_states(&self) -> usize;

    /// The greedy policy for the current episode.
    fn policy(&self) -> Policy {
        Policy::from_fn(self.horizon(), self.n_states(), |h, s| self.act(s, h))
    }
}
