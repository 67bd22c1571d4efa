//! Trial-based bound squeezing over the reachable belief space.
//!
//! Lower bound: alpha vectors, seeded with each action's blind policy.
//! Upper bound: fully observable MDP values at the corners plus sawtooth
//! points. Each trial walks from the initial belief, taking the action with
//! the best upper bound and the observation with the largest weighted excess
//! gap, then backs both bounds up along the path in reverse.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::bounds::{LowerBound, SparseBelief, UpperBound};
use super::{AlphaPolicy, AlphaVector, SolverError, SolverMeta};
use crate::pomdp::{Belief, PomdpModel};

const HARD_MAX_DEPTH: usize = 5000;
const VALUE_ITER_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Target bound gap at the initial belief (and at every extra root).
    pub precision: f64,
    pub timeout: Duration,
    /// Record one [`BoundSample`] every this many trials.
    pub history_every: u64,
    /// Further beliefs whose gap must also close before the solver stops.
    pub roots: Vec<Belief>,
}

impl SolverSettings {
    pub fn new(precision: f64, timeout_secs: f64) -> Self {
        SolverSettings {
            precision,
            timeout: Duration::from_secs_f64(timeout_secs),
            history_every: 1,
            roots: Vec::new(),
        }
    }

    /// Settings for an LDS model with every volume slice as a root.
    pub fn for_lds(model: &PomdpModel, precision: f64, timeout_secs: f64) -> Self {
        SolverSettings {
            roots: volume_roots(model),
            ..SolverSettings::new(precision, timeout_secs)
        }
    }
}

/// Bounds at the initial belief after a trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundSample {
    pub iteration: u64,
    pub elapsed_secs: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub policy: AlphaPolicy,
    pub history: Vec<BoundSample>,
}

/// One action's successors from a belief.
struct Branch {
    reward: f64,
    /// `(observation, probability, posterior)`, ascending by observation.
    succ: Vec<(usize, f64, SparseBelief)>,
}

struct Solver<'m> {
    model: &'m PomdpModel,
    lower: LowerBound,
    upper: UpperBound,
    fallback: Vec<f64>,
    scratch: Vec<f64>,
    backups: u64,
}

fn blind_vectors(model: &PomdpModel, deadline: Instant) -> Vec<AlphaVector> {
    let n = model.n_states();
    let g = model.discount();
    let (rmin, _) = model.reward_range();
    (0..model.n_actions())
        .map(|a| {
            let mut v = vec![rmin / (1.0 - g); n];
            for _ in 0..1_000_000 {
                let next: Vec<f64> = (0..n)
                    .map(|s| model.reward(a, s) + g * model.transition(a, s).iter().map(|&(s2, p)| p * v[s2]).sum::<f64>())
                    .collect();
                let delta = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                v = next;
                if delta < VALUE_ITER_TOL || Instant::now() > deadline {
                    break;
                }
            }
            AlphaVector { action: a, values: v }
        })
        .collect()
}

/// Fully observable MDP values, iterated down from `R_max / (1 - γ)`.
fn mdp_values(model: &PomdpModel, deadline: Instant) -> Vec<f64> {
    let n = model.n_states();
    let g = model.discount();
    let (_, rmax) = model.reward_range();
    let mut v = vec![rmax / (1.0 - g); n];
    for _ in 0..1_000_000 {
        let next: Vec<f64> = (0..n)
            .map(|s| {
                (0..model.n_actions())
                    .map(|a| model.reward(a, s) + g * model.transition(a, s).iter().map(|&(s2, p)| p * v[s2]).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let delta = next.iter().zip(&v).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        v = next;
        if delta < VALUE_ITER_TOL {
            break;
        }
        if Instant::now() > deadline {
            // still an upper bound, just a loose one
            break;
        }
    }
    v
}

impl<'m> Solver<'m> {
    fn expand(&mut self, b: &[(usize, f64)], action: usize) -> Branch {
        let model = self.model;
        let mut touched: Vec<usize> = Vec::new();
        for &(s, p) in b {
            for &(s2, t) in model.transition(action, s) {
                if self.scratch[s2] == 0.0 {
                    touched.push(s2);
                }
                self.scratch[s2] += p * t;
            }
        }
        let mut by_obs: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        touched.sort_unstable();
        for &s2 in &touched {
            let p = std::mem::take(&mut self.scratch[s2]);
            if p <= 0.0 {
                continue;
            }
            for &(o, q) in model.observation_row(action, s2) {
                by_obs.entry(o).or_default().push((s2, p * q));
            }
        }
        let succ = by_obs
            .into_iter()
            .filter_map(|(o, mut post)| {
                let total: f64 = post.iter().map(|x| x.1).sum();
                if total <= 0.0 {
                    return None;
                }
                for x in &mut post {
                    x.1 /= total;
                }
                Some((o, total, post))
            })
            .collect();
        let reward = b.iter().map(|&(s, p)| p * model.reward(action, s)).sum();
        Branch { reward, succ }
    }

    fn expand_all(&mut self, b: &[(usize, f64)]) -> Vec<Branch> {
        (0..self.model.n_actions()).map(|a| self.expand(b, a)).collect()
    }

    fn q_upper(&self, branches: &[Branch]) -> Vec<f64> {
        let g = self.model.discount();
        branches
            .iter()
            .map(|br| br.reward + g * br.succ.iter().map(|(_, p, post)| p * self.upper.value(post)).sum::<f64>())
            .collect()
    }

    fn argmax(values: &[f64]) -> usize {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        values.iter().position(|&v| v >= max - super::TIE_TOL).expect("non-empty")
    }

    /// Backs up both bounds at `b`.
    fn backup(&mut self, b: &[(usize, f64)]) {
        let branches = self.expand_all(b);
        let q = self.q_upper(&branches);
        let best_q = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.upper.update(b, best_q);

        let model = self.model;
        let n = model.n_states();
        let g = model.discount();
        let mut best: Option<(f64, AlphaVector)> = None;
        for (a, br) in branches.iter().enumerate() {
            // best lower-bound vector per reached observation
            let chosen: Vec<(usize, usize)> = br.succ.iter().map(|(o, _, post)| (*o, self.lower.best(post).1)).collect();
            let mut w = vec![0.0; n];
            for (s2, wv) in w.iter_mut().enumerate() {
                let mut acc = 0.0;
                for &(o, p) in model.observation_row(a, s2) {
                    let values = match chosen.binary_search_by_key(&o, |&(oo, _)| oo) {
                        Ok(k) => &self.lower.vectors[chosen[k].1].values,
                        Err(_) => &self.fallback,
                    };
                    acc += p * values[s2];
                }
                *wv = acc;
            }
            let values: Vec<f64> = (0..n)
                .map(|s| model.reward(a, s) + g * model.transition(a, s).iter().map(|&(s2, p)| p * w[s2]).sum::<f64>())
                .collect();
            let val: f64 = b.iter().map(|&(s, p)| p * values[s]).sum();
            if best.as_ref().is_none_or(|(bv, _)| val > *bv + super::TIE_TOL) {
                best = Some((val, AlphaVector { action: a, values }));
            }
        }
        let (val, vector) = best.expect("at least one action");
        if val > self.lower.value(b) + 1e-12 {
            self.lower.insert(vector);
        }
        self.backups += 1;
    }

    fn gap(&mut self, b: &[(usize, f64)]) -> f64 {
        self.upper.value(b) - self.lower.value(b)
    }

    /// One trial from `b0`. Returns false if it stopped on the deadline.
    fn trial(&mut self, b0: &SparseBelief, eps: f64, max_depth: usize, deadline: Instant) -> bool {
        let g = self.model.discount();
        let mut path: Vec<SparseBelief> = Vec::new();
        let mut b = b0.clone();
        let mut threshold = eps;
        let mut in_time = true;
        for _ in 0..max_depth {
            if self.gap(&b) <= threshold {
                break;
            }
            if Instant::now() > deadline {
                in_time = false;
                break;
            }
            let branches = self.expand_all(&b);
            let q = self.q_upper(&branches);
            let a = Self::argmax(&q);
            self.upper.update(&b, q[a]);
            threshold /= g;
            let mut next: Option<(f64, SparseBelief)> = None;
            for (_, p, post) in &branches[a].succ {
                let excess = p * (self.gap(post) - threshold);
                if excess > 0.0 && next.as_ref().is_none_or(|(e, _)| excess > *e) {
                    next = Some((excess, post.clone()));
                }
            }
            path.push(b);
            match next {
                Some((_, post)) => b = post,
                None => break,
            }
        }
        for node in path.iter().rev() {
            self.backup(node);
        }
        in_time
    }
}

/// One root per volume slice of an LDS model, at the prior life belief, so
/// the policy covers every volume and not only those reachable from an
/// empty chamber.
pub fn volume_roots(model: &PomdpModel) -> Vec<Belief> {
    match model.lds() {
        Some(lds) => (1..lds.n_volumes).map(|v| model.lds_belief(v, lds.p_biotic)).collect(),
        None => Vec::new(),
    }
}

/// Solves `model` from its initial belief until the bound gap there is at
/// most `settings.precision` or the timeout passes. A timeout after at least
/// one backup still yields a policy, flagged in its metadata.
pub fn solve(model: &PomdpModel, settings: &SolverSettings) -> Result<SolveOutcome, SolverError> {
    if !(settings.precision > 0.0) {
        return Err(SolverError::Invalid(format!("precision {} must be > 0", settings.precision)));
    }
    let problems = model.check();
    if !problems.is_empty() {
        return Err(SolverError::Invalid(problems.join("; ")));
    }
    let start = Instant::now();
    let deadline = start + settings.timeout;
    let g = model.discount();
    let blind = blind_vectors(model, deadline);
    let fallback = blind
        .iter()
        .max_by(|a, b| {
            let sa: f64 = a.values.iter().sum();
            let sb: f64 = b.values.iter().sum();
            sa.total_cmp(&sb).then(b.action.cmp(&a.action))
        })
        .expect("at least one action")
        .values
        .clone();
    let corner = mdp_values(model, deadline);
    let mut solver = Solver {
        model,
        lower: LowerBound::new(blind),
        upper: UpperBound::new(corner),
        fallback,
        scratch: vec![0.0; model.n_states()],
        backups: 0,
    };

    let b0: SparseBelief = model.initial_belief().probs.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, &p)| (s, p)).collect();
    let (rmin, rmax) = model.reward_range();
    let span = ((rmax - rmin) / (1.0 - g)).max(settings.precision);
    let max_depth = (((settings.precision / span).ln() / g.ln()).ceil() as usize + 1).min(HARD_MAX_DEPTH);

    let mut roots = vec![b0.clone()];
    for r in &settings.roots {
        if r.len() != model.n_states() {
            return Err(SolverError::Invalid(format!("root belief has {} entries, model has {} states", r.len(), model.n_states())));
        }
        roots.push(r.probs.iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(s, &p)| (s, p)).collect());
    }

    let mut history = Vec::new();
    let mut iterations = 0u64;
    let mut timed_out = false;
    let sample = |solver: &mut Solver, iterations: u64, history: &mut Vec<BoundSample>| {
        history.push(BoundSample {
            iteration: iterations,
            elapsed_secs: start.elapsed().as_secs_f64(),
            lower: solver.lower.value(&b0),
            upper: solver.upper.value(&b0),
        });
    };
    sample(&mut solver, 0, &mut history);
    'passes: loop {
        let mut trials_this_pass = 0;
        for root in &roots {
            while solver.gap(root) > settings.precision {
                if Instant::now() > deadline || !solver.trial(root, settings.precision, max_depth, deadline) {
                    timed_out = true;
                    break 'passes;
                }
                iterations += 1;
                trials_this_pass += 1;
                if iterations.is_multiple_of(settings.history_every.max(1)) {
                    sample(&mut solver, iterations, &mut history);
                }
            }
        }
        if trials_this_pass == 0 {
            break;
        }
    }
    let (lower, upper) = (solver.lower.value(&b0), solver.upper.value(&b0));
    if history.last().is_none_or(|h| h.iteration != iterations) {
        history.push(BoundSample {
            iteration: iterations,
            elapsed_secs: start.elapsed().as_secs_f64(),
            lower,
            upper,
        });
    }
    let meta = SolverMeta {
        lower,
        upper,
        gap: upper - lower,
        wall_secs: start.elapsed().as_secs_f64(),
        iterations,
        backups: solver.backups,
        timed_out,
    };
    if timed_out && solver.backups == 0 {
        return Err(SolverError::Timeout(meta));
    }
    let mut policy = AlphaPolicy {
        vectors: solver.lower.alive().cloned().collect(),
        fingerprint: model.fingerprint().to_string(),
        n_states: model.n_states(),
        discount: g,
        lambda: model.lds().map(|l| l.lambda),
        meta,
    };
    policy.prune();
    Ok(SolveOutcome { policy, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two states, one action that always pays 0.
    fn trivial() -> PomdpModel {
        PomdpModel::from_dense(
            vec!["declare".into()],
            vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![0.0, 0.0]],
            0.95,
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn zero_reward_model_has_zero_value() {
        let out = solve(&trivial(), &SolverSettings::new(1e-6, 10.0)).unwrap();
        for k in 0..=10 {
            let p = k as f64 / 10.0;
            let v = out.policy.value(&Belief::new(vec![1.0 - p, p]).unwrap()).unwrap();
            assert!(v.abs() < 1e-9, "{v}");
        }
        assert!(!out.policy.meta.timed_out);
    }

    pub(crate) fn tiger() -> PomdpModel {
        let listen = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let reset = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        PomdpModel::from_dense(
            vec!["listen".into(), "open-left".into(), "open-right".into()],
            vec![listen, reset.clone(), reset.clone()],
            vec![vec![vec![0.85, 0.15], vec![0.15, 0.85]], reset.clone(), reset],
            vec![vec![-1.0, -1.0], vec![-100.0, 10.0], vec![10.0, -100.0]],
            0.95,
            vec![0.5, 0.5],
        )
        .unwrap()
    }

    #[test]
    fn tiger_bounds_meet() {
        let out = solve(&tiger(), &SolverSettings::new(1e-3, 30.0)).unwrap();
        let m = &out.policy.meta;
        assert!(!m.timed_out && m.gap <= 1e-3 && m.lower <= m.upper + 1e-9, "{m:?}");
        assert_eq!(out.policy.action(&Belief::uniform(2)).unwrap(), 0);
        assert_eq!(out.policy.action(&Belief::new(vec![0.02, 0.98]).unwrap()).unwrap(), 1);
        for w in out.history.windows(2) {
            assert!(w[1].lower >= w[0].lower - 1e-12 && w[1].upper <= w[0].upper + 1e-12);
        }
    }

    #[test]
    fn zero_timeout_is_an_error() {
        let m = tiger();
        let r = solve(
            &m,
            &SolverSettings {
                precision: 1e-9,
                timeout: Duration::ZERO,
                history_every: 1,
                roots: Vec::new(),
            },
        );
        assert!(matches!(r, Err(SolverError::Timeout(_))), "{r:?}");
    }
}
