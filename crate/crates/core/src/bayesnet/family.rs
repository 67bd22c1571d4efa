//! Continuous conditional families and histogram discretization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};

use super::{BayesNetError, ConditionalTable, DiscreteBayesNet, VariableSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Bernoulli,
    TruncatedCount,
    TruncatedGaussian,
    BetaScaled,
}

/// Parameters of one row of a continuous family, in the variable's native units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyParams {
    /// Value 1 with probability `p`, else 0.
    Bernoulli { p: f64 },
    /// Poisson(`mean`) restricted to the integers inside the variable's range.
    TruncatedCount { mean: f64 },
    /// Normal(`mean`, `sd`) restricted to the variable's range.
    TruncatedGaussian { mean: f64, sd: f64 },
    /// `lo + (hi - lo) * Beta(alpha, beta)` over the variable's range.
    BetaScaled { alpha: f64, beta: f64 },
}

impl FamilyParams {
    pub fn kind(&self) -> FamilyKind {
        match self {
            FamilyParams::Bernoulli { .. } => FamilyKind::Bernoulli,
            FamilyParams::TruncatedCount { .. } => FamilyKind::TruncatedCount,
            FamilyParams::TruncatedGaussian { .. } => FamilyKind::TruncatedGaussian,
            FamilyParams::BetaScaled { .. } => FamilyKind::BetaScaled,
        }
    }

    fn check(&self, lo: f64, hi: f64) -> Result<(), String> {
        match *self {
            FamilyParams::Bernoulli { p } if !(0.0..=1.0).contains(&p) => Err(format!("p = {p} outside [0, 1]")),
            FamilyParams::TruncatedCount { mean } if !(mean >= 0.0 && mean.is_finite()) => Err(format!("mean = {mean} must be >= 0")),
            FamilyParams::TruncatedCount { .. } if lo.ceil() > hi.floor() => Err("range contains no integers".into()),
            FamilyParams::TruncatedGaussian { mean, sd } if !(sd >= 0.0 && sd.is_finite() && mean.is_finite()) => {
                Err(format!("invalid gaussian (mean {mean}, sd {sd})"))
            }
            FamilyParams::TruncatedGaussian { mean, sd: 0.0 } if !(lo..=hi).contains(&mean) => {
                Err(format!("degenerate gaussian at {mean} outside [{lo}, {hi}]"))
            }
            FamilyParams::BetaScaled { alpha, beta } if !(alpha > 0.0 && beta > 0.0) => {
                Err(format!("beta shape ({alpha}, {beta}) must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Draws one native-unit value. `lo`/`hi` bound the truncated families.
    pub fn sample<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> f64 {
        match *self {
            FamilyParams::Bernoulli { p } => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
            FamilyParams::TruncatedCount { mean } => sample_truncated_poisson(mean, lo, hi, rng),
            FamilyParams::TruncatedGaussian { mean, sd } => sample_truncated_normal(mean, sd, lo, hi, rng),
            FamilyParams::BetaScaled { alpha, beta } => {
                let x: f64 = Beta::new(alpha, beta).expect("checked shape").sample(rng);
                lo + (hi - lo) * x
            }
        }
    }
}

fn sample_truncated_poisson<R: Rng + ?Sized>(mean: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let (k0, k1) = (lo.ceil().max(0.0) as u64, hi.floor() as u64);
    if mean == 0.0 {
        return k0 as f64;
    }
    // inverse transform over the renormalized pmf on [k0, k1]
    let log_pmf = |k: u64| -> f64 { k as f64 * mean.ln() - mean - (1..=k).map(|j| (j as f64).ln()).sum::<f64>() };
    let logs: Vec<f64> = (k0..=k1).map(log_pmf).collect();
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return (k0 + i as u64) as f64;
        }
        u -= w;
    }
    k1 as f64
}

fn sample_truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    let normal = Normal::new(mean, sd).expect("checked sd");
    for _ in 0..64 {
        let x = normal.sample(rng);
        if x >= lo && x <= hi {
            return x;
        }
    }
    // the range holds little mass; fall back to inverse-CDF sampling
    let cdf = NormalCdf::new(mean, sd).expect("checked sd");
    let (a, b) = (cdf.cdf(lo), cdf.cdf(hi));
    let u = a + (b - a) * rng.random::<f64>();
    cdf.inverse_cdf(u).clamp(lo, hi)
}

/// A continuous conditional distribution for one variable: one parameter set
/// per joint parent assignment (same row layout as [`ConditionalTable`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousFamily {
    pub variable: String,
    pub rows: Vec<FamilyParams>,
}

impl ContinuousFamily {
    pub fn new(variable: impl Into<String>, rows: Vec<FamilyParams>) -> Self {
        ContinuousFamily {
            variable: variable.into(),
            rows,
        }
    }

    pub fn kind(&self) -> Option<FamilyKind> {
        self.rows.first().map(FamilyParams::kind)
    }

    pub fn check(&self, spec: &VariableSpec) -> Result<(), BayesNetError> {
        let invalid = |reason: String| BayesNetError::InvalidFamily {
            variable: self.variable.clone(),
            reason,
        };
        let (lo, hi) = spec
            .range()
            .ok_or_else(|| BayesNetError::MissingBinEdges(spec.id.clone()))?;
        let kind = self.kind().ok_or_else(|| invalid("no rows".into()))?;
        for (i, row) in self.rows.iter().enumerate() {
            if row.kind() != kind {
                return Err(invalid(format!("row {i} mixes family kinds")));
            }
            row.check(lo, hi).map_err(|e| invalid(format!("row {i}: {e}")))?;
        }
        Ok(())
    }
}

/// Histogram-bins Monte Carlo draws of each family row into a conditional
/// table. Row `r` draws from its own ChaCha stream of `seed`, so the result is
/// a pure function of the inputs.
pub fn discretize(family: &ContinuousFamily, spec: &VariableSpec, samples_per_row: usize, seed: u64) -> Result<ConditionalTable, BayesNetError> {
    family.check(spec)?;
    let (lo, hi) = spec.range().expect("checked by family.check");
    if samples_per_row == 0 {
        return Err(BayesNetError::InvalidFamily {
            variable: family.variable.clone(),
            reason: "samples_per_row must be positive".into(),
        });
    }
    let mut rows = Vec::with_capacity(family.rows.len());
    for (r, params) in family.rows.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let mut counts = vec![0u64; spec.cardinality];
        for _ in 0..samples_per_row {
            let x = params.sample(lo, hi, &mut rng);
            let bin = spec.bin_of(x).ok_or_else(|| BayesNetError::SampleOutOfRange {
                variable: spec.id.clone(),
                value: x,
                lo,
                hi,
            })?;
            counts[bin] += 1;
        }
        let n = samples_per_row as f64;
        rows.push(counts.iter().map(|&c| c as f64 / n).collect());
    }
    Ok(ConditionalTable::new(family.variable.clone(), rows))
}

/// A discretized network paired with the continuous families it was built
/// from. The discrete side drives belief updates; the continuous side
/// generates native-unit measurements for simulation.
#[derive(Debug, Clone)]
pub struct HybridNetwork {
    pub discrete: DiscreteBayesNet,
    /// Indexed like `discrete.variables()`; `None` for the root.
    pub families: Vec<Option<ContinuousFamily>>,
    order: Vec<usize>,
}

impl HybridNetwork {
    /// Discretizes each family (variable `i` uses stream-seed `seed + i`) and
    /// assembles the network. The root gets a uniform placeholder table.
    pub fn build(specs: Vec<VariableSpec>, families: Vec<ContinuousFamily>, root: &str, samples_per_row: usize, seed: u64) -> Result<Self, BayesNetError> {
        let mut tables = Vec::with_capacity(specs.len());
        let mut fams = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            if spec.id == root {
                tables.push(ConditionalTable::new(root, vec![vec![1.0 / spec.cardinality as f64; spec.cardinality]]));
                fams.push(None);
                continue;
            }
            let fam = families
                .iter()
                .find(|f| f.variable == spec.id)
                .ok_or_else(|| BayesNetError::InvalidFamily {
                    variable: spec.id.clone(),
                    reason: "no continuous family".into(),
                })?;
            tables.push(discretize(fam, spec, samples_per_row, seed.wrapping_add(i as u64))?);
            fams.push(Some(fam.clone()));
        }
        let discrete = DiscreteBayesNet::new(specs, tables, root);
        let report = discrete.validate();
        if !report.is_clean() {
            let msgs: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            return Err(BayesNetError::Malformed(msgs.join("; ")));
        }
        for (i, fam) in fams.iter().enumerate() {
            if let Some(f) = fam {
                let expected: usize = discrete.parents_of(i).iter().map(|&p| discrete.cardinality(p)).product();
                if f.rows.len() != expected {
                    return Err(BayesNetError::InvalidFamily {
                        variable: f.variable.clone(),
                        reason: format!("{} rows, expected {expected}", f.rows.len()),
                    });
                }
            }
        }
        let order = discrete.topological_indices()?;
        Ok(HybridNetwork {
            discrete,
            families: fams,
            order,
        })
    }

    /// Draws native-unit values for every variable given the root's bin.
    /// Children pick their family row from the bins of their parents' draws.
    /// Returns `(native, binned)`.
    pub fn sample_native<R: Rng + ?Sized>(&self, root_value: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<usize>), BayesNetError> {
        let net = &self.discrete;
        let root = net.root_index().expect("validated");
        if root_value >= net.cardinality(root) {
            return Err(BayesNetError::ValueOutOfRange {
                variable: net.root().to_string(),
                value: root_value,
                cardinality: net.cardinality(root),
            });
        }
        let n = net.len();
        let mut native = vec![0.0; n];
        let mut bins = vec![0usize; n];
        for &var in &self.order {
            let spec = &net.variables()[var];
            if var == root {
                bins[var] = root_value;
                native[var] = match &spec.bin_edges {
                    Some(e) => 0.5 * (e[root_value] + e[root_value + 1]),
                    None => root_value as f64,
                };
                continue;
            }
            let fam = self.families[var].as_ref().expect("non-root has a family");
            let (lo, hi) = spec.range().expect("checked at build");
            let x = fam.rows[net.row_index(var, &bins)].sample(lo, hi, rng);
            native[var] = x;
            bins[var] = spec.bin_of(x).ok_or_else(|| BayesNetError::SampleOutOfRange {
                variable: spec.id.clone(),
                value: x,
                lo,
                hi,
            })?;
        }
        Ok((native, bins))
    }
}
