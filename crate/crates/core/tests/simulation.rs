use std::sync::OnceLock;

use lds_core::baseline::{ConopsAgent, ConopsParams};
use lds_core::bayesnet::HybridNetwork;
use lds_core::lds_model::{build_default_network, MissionConfig};
use lds_core::pomdp::{build_model, PomdpModel, ACCUMULATE, DECLARE_ABIOTIC, DECLARE_BIOTIC, N_ACTIONS};
use lds_core::sim::{evaluate, pareto_flags, rollout, rollout_rng, Agent, EvalSpec, Environment, Outcome};
use proptest::prelude::*;

struct Fixture {
    config: MissionConfig,
    network: HybridNetwork,
    model: PomdpModel,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let config = MissionConfig::default();
        let network = build_default_network(&config).unwrap();
        let model = build_model(&config, &network.discrete).unwrap();
        Fixture { config, network, model }
    })
}

#[test]
fn microscope_binning_matches_cpt() {
    let f = fixture();
    let env = Environment::new(&f.config, &f.network).unwrap();
    let net = &f.network.discrete;
    let k3 = net.variable("o_3").unwrap().cardinality;
    let want = net.table("o_2").unwrap().rows[1][1];
    let mut s = env.reset(rollout_rng(11, 0));
    let n = 100_000;
    let mut hits = 0;
    for _ in 0..n {
        s.life = 1;
        s.volume = 1.0;
        let (_, o) = env.step(&mut s, 4).unwrap();
        let Outcome::Reading { symbol: Some(sym), .. } = o else {
            panic!("microscope use at full volume must read")
        };
        hits += usize::from(sym / k3 == 1);
    }
    let got = hits as f64 / n as f64;
    assert!((got - want).abs() <= 0.01, "{got} vs {want}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn volume_stays_in_range_and_moves_only_by_rule(actions in prop::collection::vec(0usize..N_ACTIONS, 1..120), seed in any::<u64>()) {
        let f = fixture();
        let env = Environment::new(&f.config, &f.network).unwrap();
        let mut s = env.reset(rollout_rng(seed, 0));
        for a in actions {
            let before = s.volume;
            env.step(&mut s, a).unwrap();
            prop_assert!((0.0..=f.config.s_v_max).contains(&s.volume));
            prop_assert!(s.life <= 1);
            if s.volume < before {
                prop_assert!(a < ACCUMULATE || a == DECLARE_ABIOTIC || a == DECLARE_BIOTIC);
            }
            if a == DECLARE_ABIOTIC || a == DECLARE_BIOTIC {
                prop_assert_eq!(s.volume, 0.0);
            }
        }
    }

    #[test]
    fn pareto_matches_frontier_sweep(points in prop::collection::vec(prop::option::weighted(0.9, (0u8..6, 0u8..6)), 0..12)) {
        let pts: Vec<(Option<f64>, Option<f64>)> = points
            .iter()
            .map(|p| p.map_or((None, None), |(a, b)| (Some(a as f64 / 5.0), Some(b as f64 / 5.0))))
            .collect();
        // staircase: sort by (x, y); a point is efficient when its y beats
        // every strictly-smaller-x y and it is not a duplicate-x loser
        let mut idx: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].0.is_some()).collect();
        idx.sort_by(|&i, &j| pts[i].partial_cmp(&pts[j]).unwrap());
        let mut want = vec![false; pts.len()];
        let mut best_y = f64::INFINITY;
        let mut k = 0;
        while k < idx.len() {
            let x = pts[idx[k]].0;
            let group: Vec<usize> = idx[k..].iter().copied().take_while(|&i| pts[i].0 == x).collect();
            let ymin = pts[group[0]].1.unwrap();
            if ymin < best_y {
                for &i in &group {
                    want[i] = pts[i].1.unwrap() == ymin;
                }
                best_y = ymin;
            }
            k += group.len();
        }
        prop_assert_eq!(pareto_flags(&pts), want);
    }
}

struct Fixed(usize);

impl Agent for Fixed {
    fn act(&mut self) -> usize {
        self.0
    }
    fn observe(&mut self, _: usize, _: usize, _: Option<usize>) {}
    fn reset(&mut self) {}
    fn belief_biotic(&self) -> f64 {
        0.5
    }
}

#[test]
fn first_step_from_empty_chamber_accumulates() {
    let f = fixture();
    let env = Environment::new(&f.config, &f.network).unwrap();
    let mut agent = ConopsAgent::new(&f.model, ConopsParams::new(0.95, 0.05).unwrap()).unwrap();
    let r = rollout(&env, &mut agent, 1, rollout_rng(5, 0)).unwrap();
    assert!(r.events.is_empty());
    assert_eq!(r.action_counts[ACCUMULATE], 1);
    assert_eq!(r.action_counts.iter().sum::<u64>(), 1);
}

#[test]
fn evaluation_is_deterministic_across_thread_counts() {
    let f = fixture();
    let env = Environment::new(&f.config, &f.network).unwrap();
    let spec = EvalSpec { rollouts: 40, horizon: 120, seed: 99 };
    let params = ConopsParams::new(0.95, 0.05).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| evaluate(&env, || ConopsAgent::new(&f.model, params), &spec).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.rollouts, b.rollouts);
    assert_eq!(a.metrics, b.metrics);
}

#[test]
fn metrics_algebra() {
    let f = fixture();
    let env = Environment::new(&f.config, &f.network).unwrap();
    let spec = EvalSpec { rollouts: 60, horizon: 200, seed: 3 };
    let m = evaluate(&env, || ConopsAgent::new(&f.model, ConopsParams::new(0.9, 0.1).unwrap()), &spec).unwrap().metrics;
    assert_eq!(m.biotic_events + m.abiotic_events, m.declarations);
    let (fnr, fpr) = (m.fnr.unwrap(), m.fpr.unwrap());
    assert_eq!(fnr, m.false_negatives as f64 / m.biotic_events as f64);
    assert_eq!(fpr, m.false_positives as f64 / m.abiotic_events as f64);
    assert!((m.tpr.unwrap() + fnr - 1.0).abs() <= f64::EPSILON);
    assert!((m.tnr.unwrap() + fpr - 1.0).abs() <= f64::EPSILON);
    assert!((0.0..=1.0).contains(&fnr) && (0.0..=1.0).contains(&fpr));
}

#[test]
fn unreachable_thresholds_never_declare() {
    let f = fixture();
    let env = Environment::new(&f.config, &f.network).unwrap();
    let spec = EvalSpec { rollouts: 30, horizon: 200, seed: 8 };
    let e = evaluate(&env, || ConopsAgent::new(&f.model, ConopsParams::new(1.0, 0.0).unwrap()), &spec).unwrap();
    assert_eq!(e.metrics.declarations, 0);
    for r in &e.rollouts {
        assert_eq!(r.action_counts[DECLARE_ABIOTIC] + r.action_counts[DECLARE_BIOTIC], 0);
    }
}

#[test]
fn conops_never_runs_an_infeasible_instrument() {
    let f = fixture();
    let env = Environment::new(&f.config, &f.network).unwrap();
    let lds = f.model.lds().unwrap();
    for seed in 0..20 {
        let mut agent = ConopsAgent::new(&f.model, ConopsParams::new(0.975, 0.025).unwrap()).unwrap();
        let mut s = env.reset(rollout_rng(seed, 0));
        agent.reset();
        for _ in 0..200 {
            let a = agent.act();
            if a < ACCUMULATE {
                assert!(lds.usage_cells[a] <= env.volume_index(s.volume), "a{} at {}", a + 1, s.volume);
            }
            match env.step(&mut s, a).unwrap().1 {
                Outcome::Reading { volume_index, symbol } => agent.observe(a, volume_index, symbol),
                Outcome::Declared => agent.reset(),
            }
        }
    }
}

#[test]
fn conops_belief_matches_direct_filter() {
    let f = fixture();
    let env = Environment::new(&f.config, &f.network).unwrap();
    let lds = f.model.lds().unwrap();
    let mut agent = ConopsAgent::new(&f.model, ConopsParams::new(1.0, 0.0).unwrap()).unwrap();
    let mut direct = f.model.initial_belief();
    let mut s = env.reset(rollout_rng(21, 0));
    for _ in 0..150 {
        let a = agent.act();
        let Outcome::Reading { volume_index, symbol } = env.step(&mut s, a).unwrap().1 else {
            unreachable!("thresholds are unreachable")
        };
        agent.observe(a, volume_index, symbol);
        direct = f.model.belief_update(&direct, a, lds.obs_index(a, volume_index, symbol)).unwrap();
        assert_eq!(agent.tracker().belief(), &direct);
    }
}

#[test]
fn scripted_declarer_counts_every_step() {
    let f = fixture();
    let env = Environment::new(&f.config, &f.network).unwrap();
    let spec = EvalSpec { rollouts: 20, horizon: 15, seed: 2 };
    let m = evaluate(&env, || Ok(Fixed(DECLARE_BIOTIC)), &spec).unwrap().metrics;
    assert_eq!(m.declarations, 20 * 15);
    assert_eq!((m.fnr, m.fpr), (Some(0.0), Some(1.0)));
}
