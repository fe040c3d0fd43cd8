//! The seeded synthetic intervention environment.
//!
//! States are `d_s`-bit binary vectors, actions are interventions
//! `do(X_1 = i_1, …, X_n = i_n)` with `i_j ∈ {1..m}`, and the parents are `n`
//! binary variables (`Z = 2^n`). Each bit of the next state depends only on
//! the same bit of the current state and on `z`.
//!
//! Tables draw from named ChaCha20 substreams of `seed` (see [`crate::seed`]):
//!
//! | substream | draw order | distribution |
//! |-----------|------------|--------------|
//! | `rewards` | factor `i`, bit value, `z` | `U[0,1)` |
//! | `pz`      | state, action | `Dir(1_Z)` |
//! | `trans`   | factor `i`, bit value, `z` | `Dir(1_2)` |

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear::{LinearCausalEnv, LinearEnvParams};
use crate::mdp::{CausalMdp, Dims, FactoredSpec};
use crate::random::dirichlet_ones;
use crate::seed::substream;

/// Default ceiling on the number of table entries an instance may allocate.
pub const DEFAULT_MAX_ENTRIES: usize = 50_000_000;

pub const ENV_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvParams {
    /// Values per manipulable variable.
    pub m: usize,
    /// Manipulable variables, and also parent variables.
    pub n: usize,
    /// State bits.
    pub d_s: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl EnvParams {
    pub fn n_actions(&self) -> Option<usize> {
        self.m.checked_pow(u32::try_from(self.n).ok()?)
    }

    pub fn n_parent_vals(&self) -> Option<usize> {
        1usize.checked_shl(u32::try_from(self.n).ok()?)
    }

    pub fn n_states(&self) -> Option<usize> {
        1usize.checked_shl(u32::try_from(self.d_s).ok()?)
    }

    fn validate(&self, max_entries: usize) -> Result<(usize, usize, usize)> {
        if self.m < 2 || self.n < 1 || self.d_s < 1 || self.horizon < 1 {
            return Err(Error::Config(format!(
                "need m >= 2, n >= 1, d_s >= 1, H >= 1; got {self:?}"
            )));
        }
        let too_large = || Error::TooLarge(format!("sizes overflow for {self:?}"));
        let a = self.n_actions().ok_or_else(too_large)?;
        let z = self
            .n_parent_vals()
            .filter(|&z| z < usize::MAX / 2)
            .ok_or_else(too_large)?;
        let s = self
            .n_states()
            .filter(|&s| s < usize::MAX / 2)
            .ok_or_else(too_large)?;
        let entries = s
            .checked_mul(a)
            .and_then(|sa| sa.checked_mul(z))
            .and_then(|x| x.checked_add(s.checked_mul(z)?.checked_mul(s)?))
            .ok_or_else(too_large)?;
        if entries > max_entries {
            return Err(Error::TooLarge(format!(
                "S={s}, A={a}, Z={z} needs {entries} table entries, cap is {max_entries}"
            )));
        }
        Ok((s, a, z))
    }
}

/// A generated instance: the flat model and its factorisation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedEnv {
    pub params: EnvParams,
    pub mdp: CausalMdp,
    pub spec: FactoredSpec,
}

pub fn generate_env(params: &EnvParams) -> Result<GeneratedEnv> {
    generate_env_capped(params, DEFAULT_MAX_ENTRIES)
}

pub fn generate_env_capped(params: &EnvParams, max_entries: usize) -> Result<GeneratedEnv> {
    let (s_n, a_n, z_n) = params.validate(max_entries)?;
    let d = params.d_s;

    let mut rng = substream(params.seed, "rewards");
    let r_scope: Vec<Vec<f64>> = (0..d)
        .map(|_| (0..2 * z_n).map(|_| rng.random::<f64>()).collect())
        .collect();

    let mut rng = substream(params.seed, "pz");
    let mut pz = Vec::with_capacity(s_n * a_n * z_n);
    for _ in 0..s_n * a_n {
        pz.extend(dirichlet_ones(&mut rng, z_n));
    }

    let mut rng = substream(params.seed, "trans");
    let p_scope: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            (0..2 * z_n)
                .flat_map(|_| dirichlet_ones(&mut rng, 2))
                .collect()
        })
        .collect();

    let scopes: Vec<Vec<usize>> = (0..d).map(|i| vec![i]).collect();
    let spec = FactoredSpec::new(vec![2; d], scopes.clone(), scopes, z_n, p_scope, r_scope)?;
    let (ps, r) = spec.expand();
    let dims = Dims {
        n_states: s_n,
        n_actions: a_n,
        n_parent_vals: z_n,
        horizon: params.horizon,
    };
    let mdp = CausalMdp::new(dims, pz, ps, r)?.with_reward_bound(d as f64)?;
    Ok(GeneratedEnv {
        params: *params,
        mdp,
        spec,
    })
}

/// Mixed-radix, little-endian: `Σ_j (i_j - 1)·m^(j-1)`, coordinates in `1..=m`.
pub fn intervention_encode(assignment: &[usize], m: usize) -> Result<usize> {
    let mut index = 0usize;
    let mut mult = 1usize;
    for &coord in assignment {
        if coord < 1 || coord > m {
            return Err(Error::IndexOutOfRange {
                what: "intervention value",
                index: coord,
                size: m,
            });
        }
        index += (coord - 1) * mult;
        mult = mult
            .checked_mul(m)
            .ok_or_else(|| Error::TooLarge("intervention index overflows".into()))?;
    }
    Ok(index)
}

pub fn intervention_decode(index: usize, m: usize, n: usize) -> Result<Vec<usize>> {
    let total = m
        .checked_pow(n as u32)
        .ok_or_else(|| Error::TooLarge("intervention space overflows".into()))?;
    if index >= total {
        return Err(Error::IndexOutOfRange {
            what: "action",
            index,
            size: total,
        });
    }
    let mut rest = index;
    Ok((0..n)
        .map(|_| {
            let c = rest % m + 1;
            rest /= m;
            c
        })
        .collect())
}

/// Versioned JSON fixture for exchanging instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvDocument {
    pub schema: u32,
    #[serde(flatten)]
    pub payload: EnvPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum EnvPayload {
    #[serde(rename = "causal-factored")]
    Factored {
        params: EnvParams,
        mdp: CausalMdp,
        factored: FactoredSpec,
    },
    #[serde(rename = "causal-linear")]
    Linear {
        params: LinearEnvParams,
        env: LinearCausalEnv,
    },
}

impl EnvDocument {
    pub fn factored(env: &GeneratedEnv) -> Self {
        EnvDocument {
            schema: ENV_SCHEMA,
            payload: EnvPayload::Factored {
                params: env.params,
                mdp: env.mdp.clone(),
                factored: env.spec.clone(),
            },
        }
    }

    pub fn linear(params: LinearEnvParams, env: &LinearCausalEnv) -> Self {
        EnvDocument {
            schema: ENV_SCHEMA,
            payload: EnvPayload::Linear {
                params,
                env: env.clone(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tables serialise")
    }

    /// Parses and validates, including factored-vs-flat consistency.
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: EnvDocument =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if doc.schema != ENV_SCHEMA {
            return Err(Error::Parse(format!(
                "unsupported environment schema {}",
                doc.schema
            )));
        }
        if let EnvPayload::Factored { mdp, factored, .. } = &doc.payload {
            factored.check_consistent(mdp)?;
        }
        Ok(doc)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: usize, n: usize, d_s: usize, seed: u64) -> EnvParams {
        EnvParams {
            m,
            n,
            d_s,
            horizon: 2,
            seed,
        }
    }

    #[test]
    fn experiment_one_sizes() {
        let env = generate_env(&params(4, 3, 3, 0)).unwrap();
        assert_eq!(env.mdp.n_actions(), 64);
        assert_eq!(env.mdp.n_parent_vals(), 8);
        assert_eq!(env.mdp.n_states(), 8);
        assert_eq!(env.mdp.reward_bound(), 3.0);
        env.spec.check_consistent(&env.mdp).unwrap();
        assert_eq!(env.spec.transition_scopes(), &[vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn minimal_instance() {
        let env = generate_env(&params(2, 1, 1, 3)).unwrap();
        assert_eq!(
            (
                env.mdp.n_actions(),
                env.mdp.n_parent_vals(),
                env.mdp.n_states()
            ),
            (2, 2, 2)
        );
        for row in env.mdp.p_s_given_sz().chunks(2) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for row in env.mdp.p_z_given_sa().chunks(2) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seeds_are_deterministic_and_distinct() {
        let a = generate_env(&params(3, 2, 2, 17)).unwrap();
        let b = generate_env(&params(3, 2, 2, 17)).unwrap();
        let c = generate_env(&params(3, 2, 2, 18)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.mdp.p_z_given_sa(), c.mdp.p_z_given_sa());
        assert_ne!(a.mdp.r_sz(), c.mdp.r_sz());
        assert_ne!(a.mdp.p_s_given_sz(), c.mdp.p_s_given_sz());
    }

    #[test]
    fn changing_m_keeps_reward_and_transition_streams() {
        // Substreams are per table, so the action count only affects `pz`.
        let a = generate_env(&params(3, 2, 2, 5)).unwrap();
        let b = generate_env(&params(5, 2, 2, 5)).unwrap();
        assert_eq!(a.spec.r_scope(), b.spec.r_scope());
        assert_eq!(a.spec.p_scope(), b.spec.p_scope());
    }

    #[test]
    fn rewards_stay_within_factor_count() {
        let env = generate_env(&params(2, 2, 4, 9)).unwrap();
        assert!(env.mdp.r_sz().iter().all(|&r| (0.0..=4.0).contains(&r)));
    }

    #[test]
    fn refuses_oversized_instances() {
        let err = generate_env_capped(&params(7, 5, 3, 0), 1_000_000);
        assert!(matches!(err, Err(Error::TooLarge(_))));
        assert!(generate_env(&params(1, 3, 3, 0)).is_err());
        assert!(generate_env(&params(2, 0, 3, 0)).is_err());
        assert!(generate_env(&params(2, 70, 3, 0)).is_err());
    }

    #[test]
    fn intervention_radix() {
        assert_eq!(intervention_encode(&[1, 1, 1], 4).unwrap(), 0);
        assert_eq!(intervention_encode(&[2, 1, 1], 4).unwrap(), 1);
        assert_eq!(intervention_encode(&[1, 2, 1], 4).unwrap(), 4);
        assert!(intervention_encode(&[0, 1, 1], 4).is_err());
        assert!(intervention_encode(&[5, 1, 1], 4).is_err());
        assert!(intervention_decode(64, 4, 3).is_err());
    }

    #[test]
    fn intervention_round_trip_exhaustive() {
        let mut seen = [false; 27];
        for idx in 0..27 {
            let assignment = intervention_decode(idx, 3, 3).unwrap();
            assert!(assignment.iter().all(|&c| (1..=3).contains(&c)));
            let back = intervention_encode(&assignment, 3).unwrap();
            assert_eq!(back, idx);
            seen[back] = true;
        }
        assert!(seen.iter().all(|&x| x));
    }

    #[test]
    fn dirichlet_two_mean() {
        let mut rng = substream(123, "dirichlet-check");
        let n = 100_000;
        let mean = (0..n).map(|_| dirichlet_ones(&mut rng, 2)[0]).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.005, "{mean}");
    }

    #[test]
    fn json_round_trip() {
        let env = generate_env(&params(2, 2, 2, 4)).unwrap();
        let doc = EnvDocument::factored(&env);
        let text = doc.to_json();
        assert!(text.contains("\"kind\": \"causal-factored\""));
        let back = EnvDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
        let bumped = text.replacen("\"schema\": 1", "\"schema\": 2", 1);
        assert!(EnvDocument::from_json(&bumped).is_err());
    }
}
