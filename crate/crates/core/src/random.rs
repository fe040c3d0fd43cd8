//! Random instance builders shared by tests, benches and `verify`.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::mdp::{CausalMdp, Dims, FactoredSpec};

/// One draw from `Dir(1_k)`: normalised unit-rate exponentials.
pub fn dirichlet_ones<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..k)
        .map(|_| {
            let e: f64 = Exp1.sample(rng);
            e
        })
        .collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|x| *x /= total);
    } else {
        draws.iter_mut().for_each(|x| *x = 1.0 / k as f64);
    }
    draws
}

fn dirichlet_rows<R: Rng + ?Sized>(rng: &mut R, rows: usize, k: usize) -> Vec<f64> {
    (0..rows).flat_map(|_| dirichlet_ones(rng, k)).collect()
}

/// Flat causal MDP with `Dir(1)` rows and `U[0,1]` rewards.
pub fn random_mdp<R: Rng + ?Sized>(
    rng: &mut R,
    n_states: usize,
    n_actions: usize,
    n_parent_vals: usize,
    horizon: usize,
) -> CausalMdp {
    let pz = dirichlet_rows(rng, n_states * n_actions, n_parent_vals);
    let ps = dirichlet_rows(rng, n_states * n_parent_vals, n_states);
    let r = (0..n_states * n_parent_vals)
        .map(|_| rng.random::<f64>())
        .collect();
    let dims = Dims {
        n_states,
        n_actions,
        n_parent_vals,
        horizon,
    };
    CausalMdp::new(dims, pz, ps, r).expect("random rows are valid")
}

/// Factored instance with the given factor sizes and scopes. Reward scope
/// tables draw from `U[0,1]`, so the reward bound is the factor count.
pub fn random_factored_mdp<R: Rng + ?Sized>(
    rng: &mut R,
    factor_sizes: &[usize],
    transition_scopes: &[Vec<usize>],
    reward_scopes: &[Vec<usize>],
    n_actions: usize,
    n_parent_vals: usize,
    horizon: usize,
) -> (CausalMdp, FactoredSpec) {
    let size = |scope: &[usize]| scope.iter().map(|&j| factor_sizes[j]).product::<usize>();
    let p_scope = factor_sizes
        .iter()
        .zip(transition_scopes)
        .map(|(&si, scope)| dirichlet_rows(rng, size(scope) * n_parent_vals, si))
        .collect();
    let r_scope = reward_scopes
        .iter()
        .map(|scope| {
            (0..size(scope) * n_parent_vals)
                .map(|_| rng.random::<f64>())
                .collect()
        })
        .collect();
    let spec = FactoredSpec::new(
        factor_sizes.to_vec(),
        transition_scopes.to_vec(),
        reward_scopes.to_vec(),
        n_parent_vals,
        p_scope,
        r_scope,
    )
    .expect("random scope tables are valid");
    let n_states = spec.n_states();
    let pz = dirichlet_rows(rng, n_states * n_actions, n_parent_vals);
    let (ps, r) = spec.expand();
    let dims = Dims {
        n_states,
        n_actions,
        n_parent_vals,
        horizon,
    };
    let mdp = CausalMdp::new(dims, pz, ps, r)
        .and_then(|m| m.with_reward_bound(factor_sizes.len() as f64))
        .expect("expanded tables are valid");
    (mdp, spec)
}
