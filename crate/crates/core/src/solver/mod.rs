//! Point-based POMDP solving: alpha-vector policies, a SARSOP-style
//! bound-squeezing solver, policy lookup, dominance maps and policy files.

mod bounds;
mod io;
mod sarsop;

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::pomdp::{action_id, action_name, Belief, PomdpModel};

pub use io::{load_policy, read_policy, save_policy, POLICY_FORMAT_VERSION};
pub use sarsop::{solve, volume_roots, BoundSample, SolveOutcome, SolverSettings};

/// Values within this distance of the best count as tied; ties go to the
/// lowest action id.
pub const TIE_TOL: f64 = 1e-12;

/// Pointwise-dominance tolerance for pruning.
pub const PRUNE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("policy has no vectors")]
    EmptyPolicy,
    #[error("belief has {got} entries, policy expects {expected}")]
    BeliefLength { got: usize, expected: usize },
    #[error("timed out after {:.1}s before the first backup", .0.wall_secs)]
    Timeout(SolverMeta),
    #[error("policy was solved for model {found}, expected {expected}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("malformed policy file: {0}")]
    Malformed(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid solver input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector {
    pub action: usize,
    pub values: Vec<f64>,
}

impl AlphaVector {
    pub fn value(&self, belief: &Belief) -> f64 {
        belief.dot(&self.values)
    }
}

/// Run statistics attached to a policy.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverMeta {
    pub lower: f64,
    pub upper: f64,
    /// `upper - lower` at the initial belief.
    pub gap: f64,
    pub wall_secs: f64,
    pub iterations: u64,
    pub backups: u64,
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaPolicy {
    pub vectors: Vec<AlphaVector>,
    pub fingerprint: String,
    pub n_states: usize,
    pub discount: f64,
    pub lambda: Option<f64>,
    pub meta: SolverMeta,
}

/// `(value, action)` of the best vector among `ids`; ties within
/// [`TIE_TOL`] go to the lowest action id.
fn best_of<'a>(vectors: impl Iterator<Item = &'a AlphaVector>, belief: &[(usize, f64)]) -> Option<(f64, usize)> {
    let mut scored: Vec<(f64, usize)> = vectors
        .map(|v| (belief.iter().map(|&(s, p)| p * v.values[s]).sum::<f64>(), v.action))
        .collect();
    let max = scored.iter().map(|x| x.0).fold(f64::NEG_INFINITY, f64::max);
    scored.retain(|x| x.0 >= max - TIE_TOL);
    scored.into_iter().min_by_key(|x| x.1).map(|(_, a)| (max, a))
}

fn sparse(belief: &Belief) -> Vec<(usize, f64)> {
    belief.probs.iter().enumerate().filter(|(_, &p)| p != 0.0).map(|(i, &p)| (i, p)).collect()
}

impl AlphaPolicy {
    fn check_len(&self, belief: &Belief) -> Result<(), SolverError> {
        if self.vectors.is_empty() {
            return Err(SolverError::EmptyPolicy);
        }
        if belief.len() != self.n_states {
            return Err(SolverError::BeliefLength {
                got: belief.len(),
                expected: self.n_states,
            });
        }
        Ok(())
    }

    /// `max_α ⟨α, b⟩`.
    pub fn value(&self, belief: &Belief) -> Result<f64, SolverError> {
        self.check_len(belief)?;
        Ok(best_of(self.vectors.iter(), &sparse(belief)).expect("non-empty").0)
    }

    /// Action of the maximizing vector, lowest action id on ties.
    pub fn action(&self, belief: &Belief) -> Result<usize, SolverError> {
        self.check_len(belief)?;
        Ok(best_of(self.vectors.iter(), &sparse(belief)).expect("non-empty").1)
    }

    /// Drops vectors that are pointwise dominated (within [`PRUNE_TOL`]) by
    /// another vector whose action id is no higher.
    pub fn prune(&mut self) {
        self.vectors = prune_dominated(std::mem::take(&mut self.vectors), None);
    }

    /// Lookup with no precomputed supports; every query scans all vectors.
    pub fn lookup(&self) -> PolicyLookup<'_> {
        PolicyLookup {
            policy: self,
            table: HashMap::new(),
        }
    }

    /// Lookup with the winning candidates precomputed for each support.
    pub fn lookup_for(&self, supports: impl IntoIterator<Item = Vec<usize>>) -> PolicyLookup<'_> {
        let mut table = HashMap::new();
        for key in supports {
            let mut ids: Vec<usize> = Vec::new();
            for (i, v) in self.vectors.iter().enumerate() {
                if ids.iter().any(|&k| dominated_by(v, &self.vectors[k], Some(&key))) {
                    continue;
                }
                ids.retain(|&k| !dominated_by(&self.vectors[k], v, Some(&key)));
                ids.push(i);
            }
            ids.sort_unstable();
            table.insert(key, ids);
        }
        PolicyLookup { policy: self, table }
    }

    /// [`AlphaPolicy::lookup_for`] over every belief support an LDS agent
    /// can hold: one volume, either or both life values.
    pub fn lds_lookup(&self, model: &PomdpModel) -> PolicyLookup<'_> {
        match model.lds() {
            Some(lds) => self.lookup_for((0..lds.n_volumes).flat_map(|v| {
                let (a, b) = (lds.state_index(v, 0), lds.state_index(v, 1));
                [vec![a], vec![b], vec![a, b]]
            })),
            None => self.lookup(),
        }
    }
}

/// `a` can be dropped in favour of `b` on the given coordinates.
pub(crate) fn dominated_by(a: &AlphaVector, b: &AlphaVector, coords: Option<&[usize]>) -> bool {
    let ge = |s: usize| b.values[s] >= a.values[s] - PRUNE_TOL;
    let all_ge = match coords {
        Some(c) => c.iter().all(|&s| ge(s)),
        None => (0..a.values.len()).all(ge),
    };
    if !all_ge {
        return false;
    }
    if b.action <= a.action {
        return true;
    }
    // b has a higher action id: drop a only if it can never tie
    let gt = |s: usize| b.values[s] > a.values[s] + TIE_TOL + PRUNE_TOL;
    match coords {
        Some(c) => c.iter().all(|&s| gt(s)),
        None => (0..a.values.len()).all(gt),
    }
}

fn prune_dominated(vectors: Vec<AlphaVector>, coords: Option<&[usize]>) -> Vec<AlphaVector> {
    let mut keep: Vec<AlphaVector> = Vec::with_capacity(vectors.len());
    for v in vectors {
        if keep.iter().any(|k| dominated_by(&v, k, coords)) {
            continue;
        }
        keep.retain(|k| !dominated_by(k, &v, coords));
        keep.push(v);
    }
    keep
}

/// Policy lookup with per-support candidate lists. Gives the same answers
/// as [`AlphaPolicy::action`] and can be shared across threads.
pub struct PolicyLookup<'a> {
    policy: &'a AlphaPolicy,
    table: HashMap<Vec<usize>, Vec<usize>>,
}

impl PolicyLookup<'_> {
    pub fn action(&self, belief: &Belief) -> Result<usize, SolverError> {
        self.policy.check_len(belief)?;
        let b = sparse(belief);
        let key: Vec<usize> = b.iter().map(|&(s, _)| s).collect();
        let best = match self.table.get(&key) {
            Some(ids) => best_of(ids.iter().map(|&i| &self.policy.vectors[i]), &b),
            None => best_of(self.policy.vectors.iter(), &b),
        };
        Ok(best.expect("non-empty").1)
    }
}

/// One cell of a dominance map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyMapCell {
    /// `b(s_L = 1)`.
    pub belief: f64,
    pub volume: f64,
    pub volume_index: usize,
    pub action: usize,
}

impl PolicyMapCell {
    pub fn action_id(&self) -> String {
        action_id(self.action)
    }

    pub fn action_name(&self) -> &'static str {
        action_name(self.action)
    }
}

/// Dominating action at each `(b(s_L = 1), s_V)` grid point, volume-major.
/// `belief_step` must divide 1.
pub fn policy_map(policy: &AlphaPolicy, model: &PomdpModel, belief_step: f64) -> Result<Vec<PolicyMapCell>, SolverError> {
    let lds = model.lds().ok_or_else(|| SolverError::Invalid("policy maps need an LDS model".into()))?;
    let columns = (1.0 / belief_step).round();
    if !(belief_step > 0.0 && belief_step <= 1.0) || ((columns * belief_step) - 1.0).abs() > 1e-9 {
        return Err(SolverError::Invalid(format!("belief step {belief_step} does not divide 1")));
    }
    let columns = columns as usize;
    let lookup = policy.lds_lookup(model);
    let mut out = Vec::with_capacity((columns + 1) * lds.n_volumes);
    for v in 0..lds.n_volumes {
        for k in 0..=columns {
            let p = k as f64 / columns as f64;
            let action = lookup.action(&model.lds_belief(v, p))?;
            out.push(PolicyMapCell {
                belief: p,
                volume: v as f64 / (1.0 / crate::lds_model::VOLUME_STEP).round(),
                volume_index: v,
                action,
            });
        }
    }
    Ok(out)
}
