//! Monte Carlo evaluation against the continuous measurement network.
//!
//! Each rollout is a multi-sample mission of a fixed number of steps. A
//! declaration is recorded as an event, empties the chamber and resets the
//! agent's belief to the prior; the life state is redrawn at the next
//! accumulation. Rates are per declaration event.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bayesnet::{BayesNetError, HybridNetwork};
use crate::lds_model::{cells, instrument_specs, MissionConfig, ModelError, VOLUME_STEP};
use crate::pomdp::{build_model, reward, Belief, PomdpError, PomdpModel, State, ACCUMULATE, DECLARE_ABIOTIC, DECLARE_BIOTIC, N_ACTIONS};
use crate::solver::{load_policy, save_policy, solve, AlphaPolicy, PolicyLookup, SolverError, SolverMeta, SolverSettings};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Pomdp(#[from] PomdpError),
    #[error(transparent)]
    Network(#[from] BayesNetError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Invalid(String),
}

/// Hidden state of the simulated lander.
#[derive(Debug, Clone)]
pub struct EnvState {
    pub life: usize,
    /// Chamber fill, continuous, in `[0, s_V_max]`.
    pub volume: f64,
    pub step: usize,
    pub rng: ChaCha8Rng,
}

/// What the agent sees after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Volume reading, plus the joint symbol for a feasible instrument use.
    Reading { volume_index: usize, symbol: Option<usize> },
    Declared,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeclarationEvent {
    pub step: usize,
    /// `DECLARE_ABIOTIC` or `DECLARE_BIOTIC`.
    pub declared: usize,
    pub truth: usize,
    /// Agent's `b(s_L = 1)` when it declared.
    pub belief: f64,
    /// Feasible instrument uses since the previous declaration.
    pub instruments: u32,
}

impl DeclarationEvent {
    pub fn declared_biotic(&self) -> bool {
        self.declared == DECLARE_BIOTIC
    }
}

struct Reader {
    vars: Vec<usize>,
    cards: Vec<usize>,
    usage: f64,
}

/// Environment driven by the continuous families of a network.
pub struct Environment<'a> {
    network: &'a HybridNetwork,
    config: MissionConfig,
    readers: Vec<Reader>,
    accumulation: Option<Normal<f64>>,
}

impl<'a> Environment<'a> {
    pub fn new(config: &MissionConfig, network: &'a HybridNetwork) -> Result<Self, SimError> {
        let sigma = config.sigma_acc();
        if !(config.v_acc > 0.0 && sigma >= 0.0) {
            return Err(SimError::Invalid(format!("accumulation N({}, {sigma}^2) is not usable", config.v_acc)));
        }
        let net = &network.discrete;
        let mut readers = Vec::new();
        for spec in instrument_specs(config) {
            let mut vars = Vec::new();
            let mut cards = Vec::new();
            for m in &spec.measures {
                let i = net.index_of(m).ok_or_else(|| BayesNetError::UnknownVariable(m.clone()))?;
                vars.push(i);
                cards.push(net.cardinality(i));
            }
            readers.push(Reader { vars, cards, usage: spec.usage });
        }
        Ok(Environment {
            network,
            config: config.clone(),
            readers,
            accumulation: (sigma > 0.0).then(|| Normal::new(config.v_acc, sigma).expect("checked")),
        })
    }

    pub fn config(&self) -> &MissionConfig {
        &self.config
    }

    /// Fresh mission: empty chamber, life drawn from the prior.
    pub fn reset(&self, mut rng: ChaCha8Rng) -> EnvState {
        let life = usize::from(rng.random::<f64>() < self.config.p_biotic);
        EnvState { life, volume: 0.0, step: 0, rng }
    }

    /// Grid cell the agent observes for a continuous fill.
    pub fn volume_index(&self, volume: f64) -> usize {
        ((volume / VOLUME_STEP + 1e-9).floor() as usize).min(self.config.max_volume_index())
    }

    fn draw_increment(&self, rng: &mut ChaCha8Rng) -> f64 {
        match &self.accumulation {
            None => self.config.v_acc,
            Some(normal) => loop {
                let v = normal.sample(rng);
                if v >= 0.0 {
                    break v;
                }
            },
        }
    }

    /// Applies `action` and returns the reward with the agent's view of the
    /// result. Declarations are scored against the current life state.
    pub fn step(&self, env: &mut EnvState, action: usize) -> Result<(f64, Outcome), SimError> {
        let state = State {
            life: env.life,
            volume_index: self.volume_index(env.volume),
            terminal: false,
        };
        let r = reward(state, action, &self.config);
        env.step += 1;
        let outcome = match action {
            ACCUMULATE => {
                let v = self.draw_increment(&mut env.rng);
                env.volume = (env.volume + v).min(self.config.s_v_max);
                env.life = usize::from(env.rng.random::<f64>() < self.config.p_biotic);
                Outcome::Reading {
                    volume_index: self.volume_index(env.volume),
                    symbol: None,
                }
            }
            DECLARE_ABIOTIC | DECLARE_BIOTIC => {
                env.volume = 0.0;
                Outcome::Declared
            }
            a if a < self.readers.len() => {
                let reader = &self.readers[a];
                if cells(reader.usage) <= state.volume_index {
                    env.volume = (env.volume - reader.usage).max(0.0);
                    let (_, bins) = self.network.sample_native(env.life, &mut env.rng)?;
                    let symbol = reader.vars.iter().zip(&reader.cards).fold(0, |acc, (&v, &k)| acc * k + bins[v]);
                    Outcome::Reading {
                        volume_index: self.volume_index(env.volume),
                        symbol: Some(symbol),
                    }
                } else {
                    Outcome::Reading {
                        volume_index: state.volume_index,
                        symbol: None,
                    }
                }
            }
            a => return Err(SimError::Invalid(format!("action {a} out of range"))),
        };
        Ok((r, outcome))
    }
}

/// Decision maker driven by the rollout loop.
pub trait Agent {
    fn act(&mut self) -> usize;
    fn observe(&mut self, action: usize, volume_index: usize, symbol: Option<usize>);
    /// Start of a mission, and again after every declaration.
    fn reset(&mut self);
    fn belief_biotic(&self) -> f64;
}

/// Belief over the LDS model's states, updated with
/// [`PomdpModel::track_update`]. Shared by every agent.
#[derive(Debug, Clone)]
pub struct BeliefTracker<'m> {
    model: &'m PomdpModel,
    belief: Belief,
    volume_index: usize,
    p_biotic: f64,
}

impl<'m> BeliefTracker<'m> {
    pub fn new(model: &'m PomdpModel) -> Result<Self, SimError> {
        let lds = model.lds().ok_or_else(|| SimError::Invalid("agents need an LDS model".into()))?;
        Ok(BeliefTracker {
            model,
            belief: model.lds_belief(0, lds.p_biotic),
            volume_index: 0,
            p_biotic: lds.p_biotic,
        })
    }

    pub fn reset(&mut self) {
        self.belief = self.model.lds_belief(0, self.p_biotic);
        self.volume_index = 0;
    }

    pub fn update(&mut self, action: usize, volume_index: usize, symbol: Option<usize>) {
        let idx = volume_index.min(self.model.lds().expect("checked").n_volumes - 1);
        self.belief = self
            .model
            .track_update(&self.belief, action, idx, symbol)
            .expect("tracking accepts every in-range reading");
        self.volume_index = idx;
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn volume_index(&self) -> usize {
        self.volume_index
    }

    pub fn biotic(&self) -> f64 {
        self.model.life_marginal(&self.belief)[1]
    }

    pub fn model(&self) -> &'m PomdpModel {
        self.model
    }
}

/// Follows an alpha-vector policy.
pub struct PolicyAgent<'a> {
    tracker: BeliefTracker<'a>,
    lookup: &'a PolicyLookup<'a>,
}

impl<'a> PolicyAgent<'a> {
    pub fn new(model: &'a PomdpModel, lookup: &'a PolicyLookup<'a>) -> Result<Self, SimError> {
        Ok(PolicyAgent {
            tracker: BeliefTracker::new(model)?,
            lookup,
        })
    }
}

impl Agent for PolicyAgent<'_> {
    fn act(&mut self) -> usize {
        self.lookup.action(self.tracker.belief()).expect("policy matches model")
    }

    fn observe(&mut self, action: usize, volume_index: usize, symbol: Option<usize>) {
        self.tracker.update(action, volume_index, symbol);
    }

    fn reset(&mut self) {
        self.tracker.reset();
    }

    fn belief_biotic(&self) -> f64 {
        self.tracker.biotic()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutResult {
    pub events: Vec<DeclarationEvent>,
    /// Discounted reward up to and including the first declaration.
    pub discounted_return: f64,
    pub action_counts: [u64; N_ACTIONS],
}

/// Runs one mission of exactly `horizon` steps.
pub fn rollout<A: Agent>(env: &Environment, agent: &mut A, horizon: usize, rng: ChaCha8Rng) -> Result<RolloutResult, SimError> {
    let gamma = env.config.discount;
    let mut state = env.reset(rng);
    agent.reset();
    let mut events = Vec::new();
    let mut ret = 0.0;
    let mut weight = 1.0;
    let mut counting = true;
    let mut counts = [0u64; N_ACTIONS];
    let mut uses = 0u32;
    for t in 0..horizon {
        let action = agent.act();
        let truth = state.life;
        let (r, outcome) = env.step(&mut state, action)?;
        counts[action] += 1;
        if counting {
            ret += weight * r;
            weight *= gamma;
        }
        match outcome {
            Outcome::Reading { volume_index, symbol } => {
                if symbol.is_some() {
                    uses += 1;
                }
                agent.observe(action, volume_index, symbol);
            }
            Outcome::Declared => {
                events.push(DeclarationEvent {
                    step: t,
                    declared: action,
                    truth,
                    belief: agent.belief_biotic(),
                    instruments: uses,
                });
                uses = 0;
                counting = false;
                agent.reset();
            }
        }
    }
    Ok(RolloutResult {
        events,
        discounted_return: ret,
        action_counts: counts,
    })
}

/// Stream `index` of the master seed.
pub fn rollout_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Aggregate metrics; `None` marks a rate whose class saw no events.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub rollouts: usize,
    pub horizon: usize,
    pub declarations: u64,
    /// Events whose true state was biotic.
    pub biotic_events: u64,
    pub abiotic_events: u64,
    pub false_negatives: u64,
    pub false_positives: u64,
    pub fnr: Option<f64>,
    pub fpr: Option<f64>,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub fnr_stderr: Option<f64>,
    pub fpr_stderr: Option<f64>,
    pub mean_instruments_per_declaration: Option<f64>,
    pub action_counts: [u64; N_ACTIONS],
    pub mean_return: f64,
    pub return_stderr: f64,
}

impl MetricsSummary {
    pub fn from_rollouts(results: &[RolloutResult], horizon: usize) -> Self {
        let mut s = MetricsSummary {
            rollouts: results.len(),
            horizon,
            declarations: 0,
            biotic_events: 0,
            abiotic_events: 0,
            false_negatives: 0,
            false_positives: 0,
            fnr: None,
            fpr: None,
            tpr: None,
            tnr: None,
            fnr_stderr: None,
            fpr_stderr: None,
            mean_instruments_per_declaration: None,
            action_counts: [0; N_ACTIONS],
            mean_return: 0.0,
            return_stderr: 0.0,
        };
        let mut uses = 0u64;
        for r in results {
            for e in &r.events {
                s.declarations += 1;
                uses += u64::from(e.instruments);
                if e.truth == 1 {
                    s.biotic_events += 1;
                    s.false_negatives += u64::from(!e.declared_biotic());
                } else {
                    s.abiotic_events += 1;
                    s.false_positives += u64::from(e.declared_biotic());
                }
            }
            for (c, x) in s.action_counts.iter_mut().zip(&r.action_counts) {
                *c += x;
            }
        }
        let rate = |k: u64, n: u64| (n > 0).then(|| k as f64 / n as f64);
        let stderr = |p: Option<f64>, n: u64| p.map(|p| (p * (1.0 - p) / n as f64).sqrt());
        s.fnr = rate(s.false_negatives, s.biotic_events);
        s.fpr = rate(s.false_positives, s.abiotic_events);
        s.tpr = s.fnr.map(|x| 1.0 - x);
        s.tnr = s.fpr.map(|x| 1.0 - x);
        s.fnr_stderr = stderr(s.fnr, s.biotic_events);
        s.fpr_stderr = stderr(s.fpr, s.abiotic_events);
        s.mean_instruments_per_declaration = rate(uses, s.declarations);
        let n = results.len() as f64;
        if n > 0.0 {
            s.mean_return = results.iter().map(|r| r.discounted_return).sum::<f64>() / n;
            if n > 1.0 {
                let var = results.iter().map(|r| (r.discounted_return - s.mean_return).powi(2)).sum::<f64>() / (n - 1.0);
                s.return_stderr = (var / n).sqrt();
            }
        }
        s
    }

    /// `(FNR + FPR) / 2`, when both are defined.
    pub fn mean_error(&self) -> Option<f64> {
        Some(0.5 * (self.fnr? + self.fpr?))
    }
}

/// Rollout count, horizon and master seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSpec {
    pub rollouts: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl EvalSpec {
    pub fn from_config(config: &MissionConfig) -> Self {
        EvalSpec {
            rollouts: config.evaluation.rollouts,
            horizon: config.evaluation.horizon,
            seed: config.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metrics: MetricsSummary,
    pub rollouts: Vec<RolloutResult>,
}

/// Runs `spec.rollouts` independent missions in parallel. Rollout `i` uses
/// stream `i` of the master seed and results are merged in index order, so
/// the outcome does not depend on the thread count.
pub fn evaluate<A, F>(env: &Environment, make_agent: F, spec: &EvalSpec) -> Result<Evaluation, SimError>
where
    A: Agent,
    F: Fn() -> Result<A, SimError> + Sync,
{
    if spec.rollouts == 0 || spec.horizon == 0 {
        return Err(SimError::Invalid("need at least one rollout of at least one step".into()));
    }
    let rollouts = (0..spec.rollouts as u64)
        .into_par_iter()
        .map(|i| {
            let mut agent = make_agent()?;
            rollout(env, &mut agent, spec.horizon, rollout_rng(spec.seed, i))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Evaluation {
        metrics: MetricsSummary::from_rollouts(&rollouts, spec.horizon),
        rollouts,
    })
}

/// Evaluates an alpha-vector policy solved for `model` in an environment
/// built from `env_config` (which may differ, e.g. in `v_acc`).
pub fn evaluate_policy(
    policy: &AlphaPolicy,
    model: &PomdpModel,
    env_config: &MissionConfig,
    network: &HybridNetwork,
    spec: &EvalSpec,
) -> Result<Evaluation, SimError> {
    if policy.fingerprint != model.fingerprint() {
        return Err(SolverError::FingerprintMismatch {
            expected: model.fingerprint().to_string(),
            found: policy.fingerprint.clone(),
        }
        .into());
    }
    let env = Environment::new(env_config, network)?;
    let lookup = policy.lds_lookup(model);
    evaluate(&env, || PolicyAgent::new(model, &lookup), spec)
}

/// Pareto-efficient points: no other point has both rates `<=` with one
/// strictly lower. Points with an undefined rate are never efficient and
/// never dominate.
pub fn pareto_flags(points: &[(Option<f64>, Option<f64>)]) -> Vec<bool> {
    points
        .iter()
        .map(|p| match *p {
            (Some(a), Some(b)) => !points.iter().any(|q| match *q {
                (Some(x), Some(y)) => x <= a && y <= b && (x < a || y < b),
                _ => false,
            }),
            _ => false,
        })
        .collect()
}

/// Solver settings for a config: its precision and timeout, with every
/// volume slice as a root.
pub fn solver_settings(config: &MissionConfig, model: &PomdpModel) -> SolverSettings {
    SolverSettings::for_lds(model, config.solver.precision, config.solver.timeout_secs)
}

/// Cache file for a model's policy under the given precision.
pub fn policy_cache_path(dir: &Path, model: &PomdpModel, precision: f64) -> PathBuf {
    let mut h = Sha256::new();
    h.update(model.fingerprint().as_bytes());
    h.update(precision.to_le_bytes());
    let digest = h.finalize();
    let hex: String = digest.iter().take(12).map(|b| format!("{b:02x}")).collect();
    dir.join(format!("policy-{hex}.txt"))
}

/// Loads a cached policy for `model` or solves and caches it. Returns the
/// policy and whether it came from the cache.
pub fn cached_solve(model: &PomdpModel, settings: &SolverSettings, cache: Option<&Path>) -> Result<(AlphaPolicy, bool), SimError> {
    let path = cache.map(|d| policy_cache_path(d, model, settings.precision));
    if let Some(p) = &path {
        if let Ok(policy) = load_policy(p, model) {
            if !policy.meta.timed_out {
                return Ok((policy, true));
            }
        }
    }
    let out = solve(model, settings)?;
    if let (Some(p), Some(dir)) = (&path, cache) {
        std::fs::create_dir_all(dir).map_err(|e| SolverError::Io {
            path: dir.display().to_string(),
            message: e.to_string(),
        })?;
        save_policy(&out.policy, p)?;
    }
    Ok((out.policy, false))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaRow {
    pub lambda: f64,
    pub metrics: Option<MetricsSummary>,
    pub solver: Option<SolverMeta>,
    /// Why the row has no metrics, or a note on a usable timed-out solve.
    pub error: Option<String>,
    pub pareto: bool,
}

/// Solves and evaluates one policy per `λ`. A failed solve flags its row
/// and the sweep continues.
pub fn lambda_sweep(
    config: &MissionConfig,
    network: &HybridNetwork,
    lambdas: &[f64],
    spec: &EvalSpec,
    cache: Option<&Path>,
) -> Result<Vec<LambdaRow>, SimError> {
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(SimError::Invalid(format!("lambda {lambda} outside [0, 1]")));
        }
        let cfg = config.with_lambda(lambda);
        let model = build_model(&cfg, &network.discrete)?;
        let row = match cached_solve(&model, &solver_settings(&cfg, &model), cache) {
            Ok((policy, _)) => {
                let eval = evaluate_policy(&policy, &model, &cfg, network, spec)?;
                LambdaRow {
                    lambda,
                    metrics: Some(eval.metrics),
                    error: policy.meta.timed_out.then(|| "solver timed out; policy evaluated anyway".into()),
                    solver: Some(policy.meta),
                    pareto: false,
                }
            }
            Err(SimError::Solver(e)) => LambdaRow {
                lambda,
                metrics: None,
                solver: match &e {
                    SolverError::Timeout(meta) => Some(meta.clone()),
                    _ => None,
                },
                error: Some(e.to_string()),
                pareto: false,
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    let points: Vec<_> = rows.iter().map(|r| r.metrics.as_ref().map_or((None, None), |m| (m.fnr, m.fpr))).collect();
    for (row, flag) in rows.iter_mut().zip(pareto_flags(&points)) {
        row.pareto = flag;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lds_model::build_default_network;

    fn small() -> (MissionConfig, HybridNetwork) {
        let mut c = MissionConfig::default();
        c.network.samples_per_row = 20_000;
        let net = build_default_network(&c).unwrap();
        (c, net)
    }

    struct Scripted(Vec<usize>, usize);

    impl Agent for Scripted {
        fn act(&mut self) -> usize {
            let a = self.0[self.1 % self.0.len()];
            self.1 += 1;
            a
        }
        fn observe(&mut self, _: usize, _: usize, _: Option<usize>) {}
        fn reset(&mut self) {}
        fn belief_biotic(&self) -> f64 {
            0.5
        }
    }

    #[test]
    fn exact_accumulation_without_spread() {
        let (mut c, net) = small();
        c.sigma_acc = Some(0.0);
        let env = Environment::new(&c, &net).unwrap();
        let mut s = env.reset(rollout_rng(1, 0));
        let (r, o) = env.step(&mut s, ACCUMULATE).unwrap();
        assert_eq!(s.volume, 0.03);
        assert_eq!(o, Outcome::Reading { volume_index: 3, symbol: None });
        assert_eq!(r, -c.accumulate_cost);
    }

    #[test]
    fn declaration_empties_chamber() {
        let (c, net) = small();
        let env = Environment::new(&c, &net).unwrap();
        let mut s = env.reset(rollout_rng(2, 0));
        env.step(&mut s, ACCUMULATE).unwrap();
        let (_, o) = env.step(&mut s, DECLARE_BIOTIC).unwrap();
        assert_eq!(o, Outcome::Declared);
        assert_eq!(s.volume, 0.0);
    }

    #[test]
    fn infeasible_instrument_is_penalized_noop() {
        let (c, net) = small();
        let env = Environment::new(&c, &net).unwrap();
        let mut s = env.reset(rollout_rng(3, 0));
        let (r, o) = env.step(&mut s, 0).unwrap();
        assert_eq!(r, -crate::pomdp::PENALTY_INFEASIBLE);
        assert_eq!(o, Outcome::Reading { volume_index: 0, symbol: None });
        assert_eq!(s.volume, 0.0);
    }

    #[test]
    fn always_abiotic_gives_unit_fnr() {
        let (c, net) = small();
        let env = Environment::new(&c, &net).unwrap();
        let spec = EvalSpec { rollouts: 50, horizon: 20, seed: 9 };
        let m = evaluate(&env, || Ok(Scripted(vec![DECLARE_ABIOTIC], 0)), &spec).unwrap().metrics;
        assert_eq!(m.fnr, Some(1.0));
        assert_eq!(m.fpr, Some(0.0));
        assert_eq!(m.declarations, 50 * 20);
    }

    #[test]
    fn undefined_rates_are_none() {
        let (c, net) = small();
        let env = Environment::new(&c, &net).unwrap();
        let spec = EvalSpec { rollouts: 3, horizon: 10, seed: 1 };
        let m = evaluate(&env, || Ok(Scripted(vec![ACCUMULATE], 0)), &spec).unwrap().metrics;
        assert_eq!(m.declarations, 0);
        assert_eq!((m.fnr, m.fpr, m.fnr_stderr), (None, None, None));
        assert_eq!(m.mean_error(), None);
    }

    #[test]
    fn pareto_small_cases() {
        assert_eq!(pareto_flags(&[(Some(0.3), Some(0.3))]), vec![true]);
        assert_eq!(pareto_flags(&[(Some(0.3), Some(0.3)), (Some(0.2), Some(0.3))]), vec![false, true]);
        assert_eq!(pareto_flags(&[(Some(0.3), Some(0.1)), (Some(0.1), Some(0.3))]), vec![true, true]);
        assert_eq!(pareto_flags(&[(None, Some(0.0)), (Some(0.5), Some(0.5))]), vec![false, true]);
    }
}
