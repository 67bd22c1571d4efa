use std::sync::OnceLock;

use lds_core::lds_model::{build_default_network, MissionConfig};
use lds_core::pomdp::{build_model, Belief, PomdpModel};
use lds_core::solver::{policy_map, read_policy, save_policy, solve, AlphaPolicy, SolverSettings};
use proptest::prelude::*;

fn solved() -> &'static (PomdpModel, AlphaPolicy) {
    static S: OnceLock<(PomdpModel, AlphaPolicy)> = OnceLock::new();
    S.get_or_init(|| {
        let config = MissionConfig::default();
        let net = build_default_network(&config).unwrap();
        let model = build_model(&config, &net.discrete).unwrap();
        let policy = solve(&model, &SolverSettings::for_lds(&model, 1e-2, 120.0)).unwrap().policy;
        (model, policy)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lookup_agrees_with_full_scan(v in 0usize..101, p in 0.0f64..=1.0, support in 0u8..3) {
        let (model, policy) = solved();
        let lookup = policy.lds_lookup(model);
        let p = match support {
            0 => 0.0,
            1 => 1.0,
            _ => p,
        };
        let b = model.lds_belief(v, p);
        prop_assert_eq!(lookup.action(&b).unwrap(), policy.action(&b).unwrap());
    }

    #[test]
    fn unlisted_supports_fall_back_to_scan(weights in prop::collection::vec(0.0f64..1.0, 6)) {
        let (model, policy) = solved();
        let lookup = policy.lds_lookup(model);
        let lds = model.lds().unwrap();
        let mut probs = vec![0.0; model.n_states()];
        for (i, w) in weights.iter().enumerate() {
            probs[lds.state_index(10 * i, i % 2)] += w + 1e-3;
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|x| *x /= total);
        let b = Belief::new(probs).unwrap();
        prop_assert_eq!(lookup.action(&b).unwrap(), policy.action(&b).unwrap());
    }
}

#[test]
fn policy_map_matches_policy_action() {
    let (model, policy) = solved();
    let cells = policy_map(policy, model, 0.05).unwrap();
    assert_eq!(cells.len(), 101 * 21);
    for c in cells.iter().step_by(7) {
        let b = model.lds_belief(c.volume_index, c.belief);
        assert_eq!(c.action, policy.action(&b).unwrap());
    }
    assert!(policy_map(policy, model, 0.3).is_err());
}

#[test]
fn saved_policy_reloads_identically() {
    let (_, policy) = solved();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.txt");
    save_policy(policy, &path).unwrap();
    assert_eq!(&read_policy(&path).unwrap(), policy);
}
