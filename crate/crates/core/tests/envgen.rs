use cmdp_core::envgen::{generate_env, generate_env_capped, EnvDocument, EnvParams};

fn params(seed: u64) -> EnvParams {
    EnvParams {
        m: 4,
        n: 3,
        d_s: 3,
        horizon: 5,
        seed,
    }
}

#[test]
fn sizes_match_the_binary_layout() {
    let env = generate_env(&params(0)).unwrap();
    let d = env.mdp.dims();
    assert_eq!(
        (d.n_states, d.n_actions, d.n_parent_vals, d.horizon),
        (8, 64, 8, 5)
    );
    assert_eq!(env.spec.factor_sizes(), &[2, 2, 2]);
    assert_eq!(env.mdp.reward_bound(), 3.0);
}

#[test]
fn same_seed_same_tables_other_seed_differs() {
    assert_eq!(
        generate_env(&params(7)).unwrap(),
        generate_env(&params(7)).unwrap()
    );
    assert_ne!(
        generate_env(&params(7)).unwrap(),
        generate_env(&params(8)).unwrap()
    );
}

#[test]
fn each_bit_moves_on_its_own() {
    let env = generate_env(&params(3)).unwrap();
    let bit = |s: usize, i: usize| (s >> i) & 1;
    for s in 0..8 {
        for z in 0..8 {
            for y in 0..8 {
                let product: f64 = (0..3)
                    .map(|i| {
                        let row = env.spec.scope_row(i, bit(s, i), z);
                        row[bit(y, i)]
                    })
                    .product();
                let flat = env.mdp.next_state_dist(s, z)[y];
                assert!((flat - product).abs() < 1e-12, "s={s} z={z} y={y}");
            }
            let reward: f64 = (0..3).map(|i| env.spec.scope_reward(i, bit(s, i), z)).sum();
            assert!((env.mdp.reward_sz(s, z) - reward).abs() < 1e-12);
        }
    }
}

#[test]
fn changing_m_keeps_rewards_and_transitions() {
    let small = generate_env(&params(5)).unwrap();
    let large = generate_env(&EnvParams { m: 6, ..params(5) }).unwrap();
    assert_eq!(small.mdp.r_sz(), large.mdp.r_sz());
    assert_eq!(small.mdp.p_s_given_sz(), large.mdp.p_s_given_sz());
    assert_eq!(large.mdp.n_actions(), 216);
}

#[test]
fn oversized_and_degenerate_requests_fail() {
    assert!(generate_env_capped(&params(0), 100).is_err());
    assert!(generate_env(&EnvParams { m: 1, ..params(0) }).is_err());
    assert!(generate_env(&EnvParams {
        d_s: 0,
        ..params(0)
    })
    .is_err());
    assert!(generate_env(&EnvParams {
        n: 200,
        ..params(0)
    })
    .is_err());
}

#[test]
fn fixture_round_trips_through_disk() {
    let env = generate_env(&params(11)).unwrap();
    let doc = EnvDocument::factored(&env);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("env.json");
    doc.write(&path).unwrap();
    let back = EnvDocument::read(&path).unwrap();
    assert_eq!(back, doc);
    assert_eq!(back.to_json(), doc.to_json());
    assert!(EnvDocument::from_json("{\"schema\": 99}").is_err());
}
