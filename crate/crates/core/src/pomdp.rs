//! Explicit tabular POMDPs and the LDS instantiation.
//!
//! [`PomdpModel`] is generic: sparse transition rows `T(s, a, ·)`, sparse
//! observation rows `O(a, s', ·)` and dense rewards. [`build_model`] fills it
//! in for the life-detection suite.
//!
//! LDS layout: non-terminal state `2 * v + l` has volume index `v` (grid step
//! [`VOLUME_STEP`]) and life state `l` (0 abiotic, 1 biotic); the last state
//! is the absorbing terminal. Volume is observed exactly, so every
//! observation carries it: for an instrument with `k` joint symbols the
//! observation index is `v * k + symbol`, for the other actions it is `v`
//! (the null reading). Index `n_volumes * k` (or `n_volumes`) is reserved for
//! the terminal state.

use serde::Serialize;
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::bayesnet::{BayesNetError, DiscreteBayesNet};
use crate::lds_model::{cells, instrument_specs, joint_observation_alphabet, on_grid, Instrument, MissionConfig, VOLUME_STEP};

/// Magnitude of the reward for using an instrument without enough volume.
pub const PENALTY_INFEASIBLE: f64 = 10.0;

pub const N_ACTIONS: usize = 9;
pub const ACCUMULATE: usize = 6;
pub const DECLARE_ABIOTIC: usize = 7;
pub const DECLARE_BIOTIC: usize = 8;

const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum PomdpError {
    #[error("`{field}` = {value} is not representable on the {VOLUME_STEP} volume grid")]
    OffGrid { field: String, value: f64 },
    #[error("observation {observation} has zero probability after action {action}")]
    ImpossibleObservation { action: usize, observation: usize },
    #[error("invalid belief: {0}")]
    InvalidBelief(String),
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error(transparent)]
    Network(#[from] BayesNetError),
}

/// Human-readable action id, `a1`..`a9`.
pub fn action_id(action: usize) -> String {
    format!("a{}", action + 1)
}

pub fn action_name(action: usize) -> &'static str {
    match action {
        ACCUMULATE => "accumulate",
        DECLARE_ABIOTIC => "declare_abiotic",
        DECLARE_BIOTIC => "declare_biotic",
        a => Instrument::from_action(a).map(Instrument::name).unwrap_or("?"),
    }
}

/// Decoded LDS state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct State {
    pub life: usize,
    pub volume_index: usize,
    pub terminal: bool,
}

/// Index bookkeeping for the LDS model.
#[derive(Debug, Clone, PartialEq)]
pub struct LdsLayout {
    pub n_volumes: usize,
    /// Joint symbol count per action (0 for non-instrument actions).
    pub symbols: Vec<usize>,
    /// Usage per instrument in grid cells.
    pub usage_cells: Vec<usize>,
    pub p_biotic: f64,
    pub lambda: f64,
    /// `P(symbol | life)` per instrument: `[instrument][life][symbol]`.
    pub symbol_probs: Vec<[Vec<f64>; 2]>,
    /// Joint bin tuples per instrument, in symbol order.
    pub alphabets: Vec<Vec<Vec<usize>>>,
}

impl LdsLayout {
    pub fn n_states(&self) -> usize {
        2 * self.n_volumes + 1
    }

    pub fn terminal(&self) -> usize {
        2 * self.n_volumes
    }

    pub fn state_index(&self, volume_index: usize, life: usize) -> usize {
        debug_assert!(volume_index < self.n_volumes && life < 2);
        2 * volume_index + life
    }

    pub fn state(&self, index: usize) -> State {
        if index == self.terminal() {
            State {
                life: 0,
                volume_index: 0,
                terminal: true,
            }
        } else {
            State {
                life: index % 2,
                volume_index: index / 2,
                terminal: false,
            }
        }
    }

    fn stride(&self, action: usize) -> usize {
        self.symbols[action].max(1)
    }

    pub fn obs_count(&self, action: usize) -> usize {
        self.n_volumes * self.stride(action) + 1
    }

    pub fn terminal_obs(&self, action: usize) -> usize {
        self.n_volumes * self.stride(action)
    }

    /// Observation index for a reading at `volume_index`; `symbol` must be
    /// `Some` exactly for instrument actions.
    pub fn obs_index(&self, action: usize, volume_index: usize, symbol: Option<usize>) -> usize {
        volume_index * self.stride(action) + symbol.unwrap_or(0)
    }

    /// `(volume_index, symbol)`, or `None` for the terminal observation.
    pub fn decode_obs(&self, action: usize, obs: usize) -> Option<(usize, Option<usize>)> {
        if obs >= self.terminal_obs(action) {
            return None;
        }
        let k = self.stride(action);
        let sym = (self.symbols[action] > 0).then_some(obs % k);
        Some((obs / k, sym))
    }

    pub fn usage(&self, action: usize) -> Option<f64> {
        self.usage_cells.get(action).map(|&c| c as f64 * VOLUME_STEP)
    }
}

/// Sparse row: `(index, probability)` pairs sorted by index.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct PomdpModel {
    n_states: usize,
    action_names: Vec<String>,
    obs_counts: Vec<usize>,
    transitions: Vec<Vec<SparseRow>>,
    observations: Vec<Vec<SparseRow>>,
    rewards: Vec<Vec<f64>>,
    discount: f64,
    initial: Vec<f64>,
    lds: Option<LdsLayout>,
    fingerprint: String,
}

impl PomdpModel {
    /// Assembles a model from dense tables: `t[a][s][s']`, `o[a][s'][o]`,
    /// `r[a][s]`. Zero entries are dropped.
    pub fn from_dense(
        action_names: Vec<String>,
        t: Vec<Vec<Vec<f64>>>,
        o: Vec<Vec<Vec<f64>>>,
        r: Vec<Vec<f64>>,
        discount: f64,
        initial: Vec<f64>,
    ) -> Result<Self, PomdpError> {
        let sparse = |rows: Vec<Vec<f64>>| -> Vec<SparseRow> {
            rows.into_iter()
                .map(|row| row.into_iter().enumerate().filter(|&(_, p)| p != 0.0).collect())
                .collect()
        };
        let obs_counts = o.iter().map(|rows| rows.first().map_or(0, Vec::len)).collect();
        Self::from_sparse(
            action_names,
            obs_counts,
            t.into_iter().map(sparse).collect(),
            o.into_iter().map(sparse).collect(),
            r,
            discount,
            initial,
        )
    }

    pub fn from_sparse(
        action_names: Vec<String>,
        obs_counts: Vec<usize>,
        transitions: Vec<Vec<SparseRow>>,
        observations: Vec<Vec<SparseRow>>,
        rewards: Vec<Vec<f64>>,
        discount: f64,
        initial: Vec<f64>,
    ) -> Result<Self, PomdpError> {
        let mut m = PomdpModel {
            n_states: initial.len(),
            action_names,
            obs_counts,
            transitions,
            observations,
            rewards,
            discount,
            initial,
            lds: None,
            fingerprint: String::new(),
        };
        let problems = m.check();
        if !problems.is_empty() {
            return Err(PomdpError::Malformed(problems.join("; ")));
        }
        m.fingerprint = m.compute_fingerprint();
        Ok(m)
    }

    /// Every structural or stochasticity problem; empty for a valid model.
    pub fn check(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.n_states;
        let na = self.action_names.len();
        if n == 0 || na == 0 {
            out.push("model needs at least one state and one action".into());
            return out;
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            out.push(format!("discount {} outside (0, 1)", self.discount));
        }
        if self.transitions.len() != na || self.observations.len() != na || self.rewards.len() != na || self.obs_counts.len() != na {
            out.push("per-action tables disagree on the action count".into());
            return out;
        }
        let row_ok = |row: &SparseRow, width: usize| -> Option<String> {
            let mut sum = 0.0;
            let mut last = None;
            for &(i, p) in row {
                if i >= width {
                    return Some(format!("index {i} out of range {width}"));
                }
                if last.is_some_and(|l| i <= l) {
                    return Some("indices not strictly ascending".into());
                }
                if !(p >= 0.0) {
                    return Some(format!("negative entry {p}"));
                }
                last = Some(i);
                sum += p;
            }
            ((sum - 1.0).abs() > STOCHASTIC_TOL).then(|| format!("sums to {sum}"))
        };
        for a in 0..na {
            if self.transitions[a].len() != n || self.observations[a].len() != n || self.rewards[a].len() != n {
                out.push(format!("action {a}: tables must have {n} rows"));
                continue;
            }
            for s in 0..n {
                if let Some(e) = row_ok(&self.transitions[a][s], n) {
                    out.push(format!("T(s={s}, a={a}): {e}"));
                }
                if let Some(e) = row_ok(&self.observations[a][s], self.obs_counts[a]) {
                    out.push(format!("O(a={a}, s'={s}): {e}"));
                }
                let r = self.rewards[a][s];
                if !r.is_finite() {
                    out.push(format!("R(s={s}, a={a}) = {r}"));
                }
            }
        }
        let total: f64 = self.initial.iter().sum();
        if self.initial.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > STOCHASTIC_TOL {
            out.push("initial belief is not a distribution".into());
        }
        out
    }

    fn compute_fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"pomdp-v1");
        h.update((self.n_states as u64).to_le_bytes());
        h.update((self.action_names.len() as u64).to_le_bytes());
        for name in &self.action_names {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
        }
        for &c in &self.obs_counts {
            h.update((c as u64).to_le_bytes());
        }
        let mut rows = |table: &[Vec<SparseRow>]| {
            for per_action in table {
                for row in per_action {
                    h.update((row.len() as u64).to_le_bytes());
                    for &(i, p) in row {
                        h.update((i as u64).to_le_bytes());
                        h.update(p.to_bits().to_le_bytes());
                    }
                }
            }
        };
        rows(&self.transitions);
        rows(&self.observations);
        for per_action in &self.rewards {
            for r in per_action {
                h.update(r.to_bits().to_le_bytes());
            }
        }
        h.update(self.discount.to_bits().to_le_bytes());
        for p in &self.initial {
            h.update(p.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.action_names.len()
    }

    pub fn action_names(&self) -> &[String] {
        &self.action_names
    }

    pub fn obs_count(&self, action: usize) -> usize {
        self.obs_counts[action]
    }

    pub fn transition(&self, action: usize, state: usize) -> &[(usize, f64)] {
        &self.transitions[action][state]
    }

    pub fn observation_row(&self, action: usize, next_state: usize) -> &[(usize, f64)] {
        &self.observations[action][next_state]
    }

    pub fn observation_prob(&self, action: usize, next_state: usize, obs: usize) -> f64 {
        let row = &self.observations[action][next_state];
        row.binary_search_by_key(&obs, |&(o, _)| o).map_or(0.0, |i| row[i].1)
    }

    pub fn reward(&self, action: usize, state: usize) -> f64 {
        self.rewards[action][state]
    }

    pub fn rewards(&self, action: usize) -> &[f64] {
        &self.rewards[action]
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_belief(&self) -> Belief {
        Belief {
            probs: self.initial.clone(),
        }
    }

    pub fn lds(&self) -> Option<&LdsLayout> {
        self.lds.as_ref()
    }

    /// Hex SHA-256 over every table, the discount and the initial belief.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// `(min, max)` over all rewards.
    pub fn reward_range(&self) -> (f64, f64) {
        self.rewards
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| (lo.min(r), hi.max(r)))
    }

    /// Same model with `c` added to every reward.
    pub fn shifted_rewards(&self, c: f64) -> PomdpModel {
        let mut m = self.clone();
        for row in &mut m.rewards {
            for r in row {
                *r += c;
            }
        }
        m.fingerprint = m.compute_fingerprint();
        m
    }

    /// `Σ_s T(s' | s, a) b(s)` as a dense vector.
    pub fn predict(&self, belief: &Belief, action: usize) -> Vec<f64> {
        let mut next = vec![0.0; self.n_states];
        for (s, &p) in belief.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for &(s2, t) in &self.transitions[action][s] {
                next[s2] += p * t;
            }
        }
        next
    }

    /// Bayes filter: `b'(s') ∝ O(o | a, s') Σ_s T(s' | s, a) b(s)`.
    pub fn belief_update(&self, belief: &Belief, action: usize, obs: usize) -> Result<Belief, PomdpError> {
        if belief.probs.len() != self.n_states {
            return Err(PomdpError::InvalidBelief(format!("length {} != {}", belief.probs.len(), self.n_states)));
        }
        if action >= self.n_actions() || obs >= self.obs_counts[action] {
            return Err(PomdpError::ImpossibleObservation { action, observation: obs });
        }
        let mut next = self.predict(belief, action);
        for (s2, p) in next.iter_mut().enumerate() {
            if *p != 0.0 {
                *p *= self.observation_prob(action, s2, obs);
            }
        }
        let total: f64 = next.iter().sum();
        if !(total > 0.0) {
            return Err(PomdpError::ImpossibleObservation { action, observation: obs });
        }
        for p in &mut next {
            *p /= total;
        }
        Ok(Belief { probs: next })
    }

    /// `P(o | b, a)` for every observation with positive probability,
    /// ascending by observation index.
    pub fn observation_probs(&self, belief: &Belief, action: usize) -> Vec<(usize, f64)> {
        let next = self.predict(belief, action);
        let mut acc: std::collections::BTreeMap<usize, f64> = std::collections::BTreeMap::new();
        for (s2, &p) in next.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for &(o, q) in &self.observations[action][s2] {
                *acc.entry(o).or_insert(0.0) += p * q;
            }
        }
        acc.into_iter().filter(|&(_, p)| p > 0.0).collect()
    }

    /// Expected immediate reward `Σ_s b(s) R(s, a)`.
    pub fn expected_reward(&self, belief: &Belief, action: usize) -> f64 {
        belief.dot(&self.rewards[action])
    }

    /// LDS belief at a volume index with `P(biotic) = p`.
    pub fn lds_belief(&self, volume_index: usize, p_biotic: f64) -> Belief {
        let lds = self.lds.as_ref().expect("LDS model");
        let mut probs = vec![0.0; self.n_states];
        probs[lds.state_index(volume_index, 0)] = 1.0 - p_biotic;
        probs[lds.state_index(volume_index, 1)] = p_biotic;
        Belief { probs }
    }

    /// `P(symbol | life)` for an instrument action, over its joint alphabet.
    pub fn observation_distribution(&self, action: usize, life: usize) -> Option<&[f64]> {
        let lds = self.lds.as_ref()?;
        lds.symbol_probs.get(action).map(|p| p[life].as_slice())
    }

    /// Belief tracking for an agent in an environment that may stray from
    /// the model (for example a different accumulation rate). Uses the exact
    /// filter when the reading is possible under the model; otherwise places
    /// the belief at the observed volume and applies only the life-state part
    /// of the update. `symbol == None` after an instrument action means the
    /// use was infeasible and leaves the belief unchanged.
    pub fn track_update(&self, belief: &Belief, action: usize, volume_index: usize, symbol: Option<usize>) -> Result<Belief, PomdpError> {
        let lds = self.lds.as_ref().ok_or_else(|| PomdpError::Malformed("tracking needs an LDS model".into()))?;
        let instrument = action < lds.symbol_probs.len();
        if instrument && symbol.is_none() {
            return Ok(belief.clone());
        }
        if volume_index >= lds.n_volumes || action >= DECLARE_ABIOTIC {
            return Err(PomdpError::ImpossibleObservation { action, observation: volume_index });
        }
        let obs = lds.obs_index(action, volume_index, symbol);
        match self.belief_update(belief, action, obs) {
            Ok(b) => Ok(b),
            Err(PomdpError::ImpossibleObservation { .. }) => {
                let mut life = if action == ACCUMULATE {
                    [1.0 - lds.p_biotic, lds.p_biotic]
                } else {
                    self.life_marginal(belief)
                };
                if let (true, Some(sym)) = (instrument, symbol) {
                    let w = [life[0] * lds.symbol_probs[action][0][sym], life[1] * lds.symbol_probs[action][1][sym]];
                    let total = w[0] + w[1];
                    if total > 0.0 {
                        life = [w[0] / total, w[1] / total];
                    }
                }
                Ok(self.lds_belief(volume_index, life[1]))
            }
            Err(e) => Err(e),
        }
    }

    /// `[P(abiotic), P(biotic)]` over the non-terminal mass, renormalized.
    pub fn life_marginal(&self, belief: &Belief) -> [f64; 2] {
        let lds = self.lds.as_ref().expect("LDS model");
        let mut m = [0.0; 2];
        for (s, &p) in belief.probs.iter().enumerate().take(lds.terminal()) {
            m[s % 2] += p;
        }
        let total = m[0] + m[1];
        if total > 0.0 {
            [m[0] / total, m[1] / total]
        } else {
            [1.0 - lds.p_biotic, lds.p_biotic]
        }
    }

    pub fn summary(&self) -> ModelSummary {
        let (rmin, rmax) = self.reward_range();
        ModelSummary {
            states: self.n_states,
            non_terminal_states: self.lds.as_ref().map_or(self.n_states, |l| l.terminal()),
            actions: self.action_names.clone(),
            observation_counts: self.obs_counts.clone(),
            instrument_symbols: self.lds.as_ref().map(|l| l.symbols.clone()).unwrap_or_default(),
            reward_min: rmin,
            reward_max: rmax,
            discount: self.discount,
            fingerprint: self.fingerprint.clone(),
        }
    }
}

/// Counts and ranges for review; serializes to TOML.
#[derive(Debug, Clone, Serialize)]
pub struct ModelSummary {
    pub states: usize,
    pub non_terminal_states: usize,
    pub actions: Vec<String>,
    pub observation_counts: Vec<usize>,
    pub instrument_symbols: Vec<usize>,
    pub reward_min: f64,
    pub reward_max: f64,
    pub discount: f64,
    pub fingerprint: String,
}

impl ModelSummary {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("summary serializes")
    }
}

/// Probability vector over all model states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    pub probs: Vec<f64>,
}

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Self, PomdpError> {
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(PomdpError::InvalidBelief(format!("entries must be >= 0 and sum to 1 (sum {total})")));
        }
        Ok(Belief { probs })
    }

    pub fn point(n: usize, state: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[state] = 1.0;
        Belief { probs }
    }

    pub fn uniform(n: usize) -> Self {
        Belief {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn dot(&self, v: &[f64]) -> f64 {
        self.probs.iter().zip(v).filter(|(p, _)| **p != 0.0).map(|(p, x)| p * x).sum()
    }

    pub fn support(&self) -> Vec<usize> {
        self.probs.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(i, _)| i).collect()
    }
}

/// Reward for an LDS state/action pair.
pub fn reward(state: State, action: usize, config: &MissionConfig) -> f64 {
    if state.terminal {
        return 0.0;
    }
    match action {
        ACCUMULATE => -config.accumulate_cost,
        DECLARE_ABIOTIC => {
            if state.life == 0 {
                0.0
            } else {
                -config.lambda
            }
        }
        DECLARE_BIOTIC => {
            if state.life == 1 {
                0.0
            } else {
                -config.lambda
            }
        }
        a => {
            let usage = config.instruments.get(Instrument::from_action(a).expect("instrument action"));
            if cells(usage) <= state.volume_index {
                -(1.0 - config.lambda) * usage / config.s_v_max
            } else {
                -PENALTY_INFEASIBLE
            }
        }
    }
}

/// Distribution of the accumulated increment in grid cells: the normal
/// density integrated over each cell `[(k - ½)Δ, (k + ½)Δ)`, truncated to
/// `[max(0, μ - 4σ), μ + 4σ]` and renormalized.
pub fn accumulation_cells(v_acc: f64, sigma: f64) -> Vec<(usize, f64)> {
    if sigma == 0.0 {
        return vec![(cells(v_acc), 1.0)];
    }
    let lo = (v_acc - 4.0 * sigma).max(0.0);
    let hi = v_acc + 4.0 * sigma;
    let normal = Normal::new(v_acc, sigma).expect("positive sigma");
    let k_lo = (lo / VOLUME_STEP + 0.5).floor() as usize;
    let k_hi = (hi / VOLUME_STEP + 0.5).floor() as usize;
    let mut out = Vec::new();
    for k in k_lo..=k_hi {
        let a = ((k as f64 - 0.5) * VOLUME_STEP).max(lo);
        let b = ((k as f64 + 0.5) * VOLUME_STEP).min(hi);
        if b > a {
            let p = normal.cdf(b) - normal.cdf(a);
            if p > 0.0 {
                out.push((k, p));
            }
        }
    }
    let total: f64 = out.iter().map(|&(_, p)| p).sum();
    for (_, p) in &mut out {
        *p /= total;
    }
    out
}

/// Builds the LDS POMDP from a validated config and the discretized network.
pub fn build_model(config: &MissionConfig, network: &DiscreteBayesNet) -> Result<PomdpModel, PomdpError> {
    let specs = instrument_specs(config);
    for s in &specs {
        if !on_grid(s.usage) {
            return Err(PomdpError::OffGrid {
                field: format!("instruments.{}", s.name),
                value: s.usage,
            });
        }
    }
    for (field, value) in [("s_v_max", config.s_v_max), ("v_acc", config.v_acc)] {
        if !on_grid(value) {
            return Err(PomdpError::OffGrid {
                field: field.into(),
                value,
            });
        }
    }

    let mut symbol_probs = Vec::new();
    let mut alphabets = Vec::new();
    for s in &specs {
        let alphabet = joint_observation_alphabet(s, network)?;
        let vars: Vec<usize> = s
            .measures
            .iter()
            .map(|m| network.index_of(m).ok_or_else(|| BayesNetError::UnknownVariable(m.clone())))
            .collect::<Result<_, _>>()?;
        let mut per_life = [Vec::new(), Vec::new()];
        for (life, probs) in per_life.iter_mut().enumerate() {
            for tuple in &alphabet {
                let evidence: Vec<(usize, usize)> = vars.iter().copied().zip(tuple.iter().copied()).collect();
                probs.push(network.evidence_likelihood_indexed(&evidence, life)?);
            }
            let total: f64 = probs.iter().sum();
            for p in probs.iter_mut() {
                *p /= total;
            }
        }
        symbol_probs.push(per_life);
        alphabets.push(alphabet);
    }

    let n_vol = cells(config.s_v_max) + 1;
    let mut symbols: Vec<usize> = alphabets.iter().map(Vec::len).collect();
    symbols.extend([0, 0, 0]);
    let layout = LdsLayout {
        n_volumes: n_vol,
        symbols,
        usage_cells: specs.iter().map(|s| cells(s.usage)).collect(),
        p_biotic: config.p_biotic,
        lambda: config.lambda,
        symbol_probs,
        alphabets,
    };
    let n = layout.n_states();
    let term = layout.terminal();
    let acc = accumulation_cells(config.v_acc, config.sigma_acc());

    let mut transitions = vec![vec![SparseRow::new(); n]; N_ACTIONS];
    let mut observations = vec![vec![SparseRow::new(); n]; N_ACTIONS];
    let mut rewards = vec![vec![0.0; n]; N_ACTIONS];

    for a in 0..N_ACTIONS {
        for s in 0..n {
            let st = layout.state(s);
            rewards[a][s] = reward(st, a, config);
            transitions[a][s] = if st.terminal {
                vec![(term, 1.0)]
            } else {
                match a {
                    ACCUMULATE => {
                        let mut row = vec![0.0; n];
                        for &(k, p) in &acc {
                            let v2 = (st.volume_index + k).min(n_vol - 1);
                            row[layout.state_index(v2, 0)] += p * (1.0 - config.p_biotic);
                            row[layout.state_index(v2, 1)] += p * config.p_biotic;
                        }
                        row.into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect()
                    }
                    DECLARE_ABIOTIC | DECLARE_BIOTIC => vec![(term, 1.0)],
                    _ => {
                        let u = layout.usage_cells[a];
                        if st.volume_index >= u {
                            vec![(layout.state_index(st.volume_index - u, st.life), 1.0)]
                        } else {
                            vec![(s, 1.0)]
                        }
                    }
                }
            };
            observations[a][s] = if st.terminal {
                vec![(layout.terminal_obs(a), 1.0)]
            } else if a < layout.symbol_probs.len() {
                layout.symbol_probs[a][st.life]
                    .iter()
                    .enumerate()
                    .filter(|&(_, &p)| p > 0.0)
                    .map(|(sym, &p)| (layout.obs_index(a, st.volume_index, Some(sym)), p))
                    .collect()
            } else {
                vec![(layout.obs_index(a, st.volume_index, None), 1.0)]
            };
        }
    }

    let mut initial = vec![0.0; n];
    initial[layout.state_index(0, 0)] = 1.0 - config.p_biotic;
    initial[layout.state_index(0, 1)] = config.p_biotic;
    let names = (0..N_ACTIONS).map(action_id).collect();
    let obs_counts = (0..N_ACTIONS).map(|a| layout.obs_count(a)).collect();
    let mut model = PomdpModel::from_sparse(names, obs_counts, transitions, observations, rewards, config.discount, initial)?;
    model.lds = Some(layout);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lds_model::build_default_network;

    fn model() -> PomdpModel {
        let mut c = MissionConfig::default();
        c.network.samples_per_row = 20_000;
        let net = build_default_network(&c).unwrap();
        build_model(&c, &net.discrete).unwrap()
    }

    #[test]
    fn sizes_and_stochastic_rows() {
        let m = model();
        assert_eq!(m.n_states(), 203);
        assert_eq!(m.n_actions(), 9);
        assert!(m.check().is_empty());
        let lds = m.lds().unwrap();
        assert_eq!(lds.symbols, vec![108, 12, 12, 9, 4, 2, 0, 0, 0]);
    }

    #[test]
    fn microscope_moves_volume_down() {
        let m = model();
        let lds = m.lds().unwrap();
        let s = lds.state_index(60, 1);
        assert_eq!(m.transition(4, s), &[(lds.state_index(59, 1), 1.0)]);
    }

    #[test]
    fn accumulation_from_empty() {
        let m = model();
        let lds = m.lds().unwrap();
        let row = m.transition(ACCUMULATE, lds.state_index(0, 1));
        let mean: f64 = row.iter().map(|&(s, p)| lds.state(s).volume_index as f64 * VOLUME_STEP * p).sum();
        assert!((mean - 0.03).abs() < VOLUME_STEP / 2.0, "{mean}");
        for &(s, _) in row {
            let v = lds.state(s).volume_index as f64 * VOLUME_STEP;
            assert!(v <= 0.03 + 4.0 * 0.015 + VOLUME_STEP / 2.0 + 1e-12);
        }
        let bio: f64 = row.iter().filter(|&&(s, _)| s % 2 == 1).map(|&(_, p)| p).sum();
        assert!((bio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn accumulation_clamps_at_top() {
        let m = model();
        let lds = m.lds().unwrap();
        let row = m.transition(ACCUMULATE, lds.state_index(100, 0));
        assert!(row.iter().all(|&(s, _)| lds.state(s).volume_index == 100));
    }

    #[test]
    fn declarations_are_absorbing() {
        let m = model();
        let lds = m.lds().unwrap();
        for a in [DECLARE_ABIOTIC, DECLARE_BIOTIC] {
            assert_eq!(m.transition(a, lds.state_index(17, 0)), &[(lds.terminal(), 1.0)]);
        }
        for a in 0..N_ACTIONS {
            assert_eq!(m.transition(a, lds.terminal()), &[(lds.terminal(), 1.0)]);
            assert_eq!(m.reward(a, lds.terminal()), 0.0);
        }
    }

    #[test]
    fn reward_cases() {
        let c = MissionConfig::default();
        let st = |life, v| State {
            life,
            volume_index: v,
            terminal: false,
        };
        assert_eq!(reward(st(1, 30), DECLARE_BIOTIC, &c), 0.0);
        assert_eq!(reward(st(0, 30), DECLARE_BIOTIC, &c), -0.72);
        assert_eq!(reward(st(1, 50), 5, &c), -PENALTY_INFEASIBLE);
        assert!((reward(st(1, 50), 4, &c) + 0.28 * 0.01).abs() < 1e-15);
        assert_eq!(reward(st(0, 0), ACCUMULATE, &c), -c.accumulate_cost);
    }

    #[test]
    fn nanopore_distribution_matches_cpt() {
        let mut c = MissionConfig::default();
        c.network.samples_per_row = 20_000;
        let net = build_default_network(&c).unwrap();
        let m = build_model(&c, &net.discrete).unwrap();
        let row = &net.discrete.table("o_1").unwrap().rows[1];
        let d = m.observation_distribution(5, 1).unwrap();
        assert!((d[0] - row[0]).abs() < 1e-12 && (d[1] - row[1]).abs() < 1e-12);
    }

    #[test]
    fn accumulate_resets_life_belief() {
        let m = model();
        let b = m.lds_belief(10, 0.93);
        let obs = m.lds().unwrap().obs_index(ACCUMULATE, 13, None);
        let b2 = m.belief_update(&b, ACCUMULATE, obs).unwrap();
        assert!((m.life_marginal(&b2)[1] - 0.5).abs() < 1e-12);
        assert_eq!(b2.support().iter().map(|&s| s / 2).collect::<Vec<_>>(), vec![13, 13]);
    }

    #[test]
    fn impossible_observation_errors() {
        let m = model();
        let b = m.lds_belief(10, 0.5);
        let obs = m.lds().unwrap().obs_index(4, 3, Some(0));
        assert!(matches!(m.belief_update(&b, 4, obs), Err(PomdpError::ImpossibleObservation { .. })));
        let tracked = m.track_update(&b, 4, 3, Some(0)).unwrap();
        assert_eq!(tracked.support().iter().map(|&s| s / 2).collect::<Vec<_>>(), vec![3, 3]);
    }

    #[test]
    fn fingerprint_tracks_lambda() {
        let m = model();
        let mut c = MissionConfig::default();
        c.network.samples_per_row = 20_000;
        c.lambda = 0.9;
        let net = build_default_network(&c).unwrap();
        let m2 = build_model(&c, &net.discrete).unwrap();
        assert_ne!(m.fingerprint(), m2.fingerprint());
        assert_eq!(m.fingerprint(), model().fingerprint());
    }

    #[test]
    fn off_grid_usage_rejected() {
        let mut c = MissionConfig::default();
        c.network.samples_per_row = 20_000;
        let net = build_default_network(&c).unwrap();
        c.instruments.nanopore = 0.885;
        assert!(matches!(build_model(&c, &net.discrete), Err(PomdpError::OffGrid { .. })));
    }

    #[test]
    fn accumulation_cells_degenerate_and_truncated() {
        assert_eq!(accumulation_cells(0.03, 0.0), vec![(3, 1.0)]);
        let d = accumulation_cells(0.03, 0.015);
        let total: f64 = d.iter().map(|&(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(d.first().unwrap().0, 0);
        assert_eq!(d.last().unwrap().0, 9);
    }
}
