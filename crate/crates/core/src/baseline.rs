//! The scripted Concept of Operations: fill the chamber, run the instruments
//! in order, declare when the belief crosses a threshold.

use serde::Serialize;

use crate::bayesnet::HybridNetwork;
use crate::lds_model::{Instrument, MissionConfig};
use crate::pomdp::{build_model, PomdpModel, ACCUMULATE, DECLARE_ABIOTIC, DECLARE_BIOTIC};
use crate::sim::{evaluate, pareto_flags, Agent, BeliefTracker, EvalSpec, Environment, Evaluation, MetricsSummary, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConopsParams {
    pub t_biotic: f64,
    pub t_abiotic: f64,
}

impl ConopsParams {
    pub fn new(t_biotic: f64, t_abiotic: f64) -> Result<Self, SimError> {
        if !(0.9..=1.0).contains(&t_biotic) {
            return Err(SimError::Invalid(format!("T_biotic {t_biotic} outside [0.9, 1]")));
        }
        if !(0.0..=0.1).contains(&t_abiotic) {
            return Err(SimError::Invalid(format!("T_abiotic {t_abiotic} outside [0, 0.1]")));
        }
        Ok(ConopsParams { t_biotic, t_abiotic })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Fill to the maximum.
    Accumulate,
    /// Next instrument to run.
    Run(usize),
}

/// Phase bookkeeping for [`conops_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConopsState {
    pub phase: Phase,
    /// An instrument reading arrived since the last step.
    pub fresh_reading: bool,
}

impl Default for ConopsState {
    fn default() -> Self {
        ConopsState {
            phase: Phase::Accumulate,
            fresh_reading: false,
        }
    }
}

/// Volume facts the stepper needs, in grid cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConopsLimits {
    pub max_volume_index: usize,
    /// Usage per instrument, `a_1` first.
    pub usage_cells: Vec<usize>,
}

impl ConopsLimits {
    pub fn from_model(model: &PomdpModel) -> Result<Self, SimError> {
        let lds = model.lds().ok_or_else(|| SimError::Invalid("ConOps needs an LDS model".into()))?;
        Ok(ConopsLimits {
            max_volume_index: lds.n_volumes - 1,
            usage_cells: lds.usage_cells.clone(),
        })
    }
}

/// Next ConOps action.
///
/// Thresholds are only checked right after an instrument reading. An
/// infeasible nanopore is skipped; any other infeasible instrument sends the
/// script back to accumulation, as does running out of instruments.
pub fn conops_step(state: &mut ConopsState, belief_biotic: f64, volume_index: usize, limits: &ConopsLimits, params: &ConopsParams) -> usize {
    if std::mem::take(&mut state.fresh_reading) {
        if belief_biotic >= params.t_biotic {
            state.phase = Phase::Accumulate;
            return DECLARE_BIOTIC;
        }
        if belief_biotic <= params.t_abiotic {
            state.phase = Phase::Accumulate;
            return DECLARE_ABIOTIC;
        }
    }
    let full = volume_index >= limits.max_volume_index;
    let mut restarted = false;
    loop {
        match state.phase {
            Phase::Accumulate if !full => return ACCUMULATE,
            Phase::Accumulate => state.phase = Phase::Run(0),
            Phase::Run(i) if i >= limits.usage_cells.len() => {
                state.phase = Phase::Accumulate;
                // full chamber and nothing runnable: accumulate anyway
                if restarted || !full {
                    return ACCUMULATE;
                }
                restarted = true;
            }
            Phase::Run(i) => {
                if limits.usage_cells[i] <= volume_index {
                    state.phase = Phase::Run(i + 1);
                    state.fresh_reading = true;
                    return i;
                }
                if Instrument::from_action(i) == Some(Instrument::Nanopore) {
                    state.phase = Phase::Run(i + 1);
                } else {
                    state.phase = Phase::Accumulate;
                    return ACCUMULATE;
                }
            }
        }
    }
}

/// ConOps driven by the same belief tracker as the policy agent.
pub struct ConopsAgent<'m> {
    tracker: BeliefTracker<'m>,
    limits: ConopsLimits,
    params: ConopsParams,
    state: ConopsState,
}

impl<'m> ConopsAgent<'m> {
    pub fn new(model: &'m PomdpModel, params: ConopsParams) -> Result<Self, SimError> {
        Ok(ConopsAgent {
            tracker: BeliefTracker::new(model)?,
            limits: ConopsLimits::from_model(model)?,
            params,
            state: ConopsState::default(),
        })
    }

    pub fn tracker(&self) -> &BeliefTracker<'m> {
        &self.tracker
    }
}

impl Agent for ConopsAgent<'_> {
    fn act(&mut self) -> usize {
        conops_step(&mut self.state, self.tracker.biotic(), self.tracker.volume_index(), &self.limits, &self.params)
    }

    fn observe(&mut self, action: usize, volume_index: usize, symbol: Option<usize>) {
        self.tracker.update(action, volume_index, symbol);
    }

    fn reset(&mut self) {
        self.tracker.reset();
        self.state = ConopsState::default();
    }

    fn belief_biotic(&self) -> f64 {
        self.tracker.biotic()
    }
}

/// Evaluates one threshold pair. Beliefs are tracked with `model`; the
/// environment is built from `env_config`.
pub fn evaluate_conops(
    params: ConopsParams,
    model: &PomdpModel,
    env_config: &MissionConfig,
    network: &HybridNetwork,
    spec: &EvalSpec,
) -> Result<Evaluation, SimError> {
    let env = Environment::new(env_config, network)?;
    evaluate(&env, || ConopsAgent::new(model, params), spec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConopsRow {
    pub params: ConopsParams,
    pub metrics: MetricsSummary,
    pub pareto: bool,
}

/// Every `(T_biotic, T_abiotic)` pair of the config grid, biotic-major.
pub fn threshold_sweep(config: &MissionConfig, network: &HybridNetwork, spec: &EvalSpec) -> Result<Vec<ConopsRow>, SimError> {
    let model = build_model(config, &network.discrete)?;
    let mut rows = Vec::new();
    for &tb in &config.conops.t_biotic {
        for &ta in &config.conops.t_abiotic {
            let params = ConopsParams::new(tb, ta)?;
            let metrics = evaluate_conops(params, &model, config, network, spec)?.metrics;
            rows.push(ConopsRow {
                params,
                metrics,
                pareto: false,
            });
        }
    }
    let points: Vec<_> = rows.iter().map(|r| (r.metrics.fnr, r.metrics.fpr)).collect();
    for (row, flag) in rows.iter_mut().zip(pareto_flags(&points)) {
        row.pareto = flag;
    }
    Ok(rows)
}
