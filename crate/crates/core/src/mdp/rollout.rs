use rand::Rng;

use super::model::CausalMdp;
use super::planning::Policy;
use crate::error::{check_index, Result};

/// One environment step. `level` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub level: usize,
    pub state: usize,
    pub action: usize,
    pub parent: usize,
    pub next_state: usize,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn start_state(&self) -> Option<usize> {
        self.steps.first().map(|s| s.state)
    }

    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Draws an index from `probs` by inverse CDF.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    // Rounding left u above the final cumulative sum.
    last_positive
}

/// Plays one episode: `z_h ~ P(·|s_h,a_h)`, then `s_{h+1} ~ P(·|s_h,z_h)`.
pub fn episode_rollout<R: Rng + ?Sized>(
    mdp: &CausalMdp,
    policy: &Policy,
    s1: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    check_index("start state", s1, mdp.n_states())?;
    policy.validate_for(mdp)?;
    Ok(rollout_unchecked(mdp, policy, s1, rng))
}

pub(crate) fn rollout_unchecked<R: Rng + ?Sized>(
    mdp: &CausalMdp,
    policy: &Policy,
    s1: usize,
    rng: &mut R,
) -> Trajectory {
    let mut steps = Vec::with_capacity(mdp.horizon());
    let mut state = s1;
    for level in 0..mdp.horizon() {
        let action = policy.action(level, state);
        let parent = sample_index(rng, mdp.parent_dist(state, action));
        let next_state = sample_index(rng, mdp.next_state_dist(state, parent));
        steps.push(Step {
            level,
            state,
            action,
            parent,
            next_state,
            reward: mdp.reward_sz(state, parent),
        });
        state = next_state;
    }
    Trajectory { steps }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Dims;
    use crate::random::random_mdp;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn trajectory_is_chained_and_full_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = random_mdp(&mut rng, 4, 3, 2, 5);
        let pi = Policy::from_fn(5, 4, |h, s| (h + s) % 3);
        let traj = episode_rollout(&mdp, &pi, 0, &mut rng).unwrap();
        assert_eq!(traj.len(), 5);
        for w in traj.steps.windows(2) {
            assert_eq!(w[0].next_state, w[1].state);
        }
        for st in &traj.steps {
            assert_eq!(st.action, pi.action(st.level, st.state));
        }
    }

    #[test]
    fn deterministic_dynamics_fix_the_path() {
        let dims = Dims {
            n_states: 3,
            n_actions: 2,
            n_parent_vals: 2,
            horizon: 4,
        };
        // action a forces z = a; z = 0 moves s -> s+1 mod 3, z = 1 stays.
        let mut pz = vec![0.0; 3 * 2 * 2];
        for s in 0..3 {
            for a in 0..2 {
                pz[(s * 2 + a) * 2 + a] = 1.0;
            }
        }
        let mut ps = vec![0.0; 3 * 2 * 3];
        for s in 0..3 {
            ps[(s * 2) * 3 + (s + 1) % 3] = 1.0;
            ps[(s * 2 + 1) * 3 + s] = 1.0;
        }
        let mdp = CausalMdp::new(dims, pz, ps, vec![0.5; 6]).unwrap();
        let pi = Policy::from_fn(4, 3, |h, _| h % 2);
        let a = episode_rollout(&mdp, &pi, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = episode_rollout(&mdp, &pi, 0, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
        let states: Vec<usize> = a.steps.iter().map(|s| s.state).collect();
        assert_eq!(states, vec![0, 1, 1, 2]);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let mut gen = ChaCha8Rng::seed_from_u64(2);
        let mdp = random_mdp(&mut gen, 5, 3, 3, 6);
        let pi = Policy::constant(6, 5, 1);
        let a = episode_rollout(&mdp, &pi, 2, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = episode_rollout(&mdp, &pi, 2, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_start_state_is_rejected() {
        let mut gen = ChaCha8Rng::seed_from_u64(2);
        let mdp = random_mdp(&mut gen, 2, 2, 2, 2);
        let pi = Policy::constant(2, 2, 0);
        assert!(episode_rollout(&mdp, &pi, 2, &mut gen).is_err());
    }
}
