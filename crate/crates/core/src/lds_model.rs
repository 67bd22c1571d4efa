//! The Enceladus Life Detection Suite: biosignature catalog, instrument
//! table, mission configuration and the default measurement network.
//!
//! Default conditional families are configuration, not measured ground
//! truth. They satisfy the qualitative requirement that each strong
//! biosignature (`o_1`..`o_4`) is at least five times likelier to read
//! positive for a biotic sample than for an abiotic one; a network that
//! breaks this is rejected by [`build_default_network`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayesnet::{BayesNetError, ContinuousFamily, DiscreteBayesNet, FamilyParams, HybridNetwork, NetworkFile, VariableSpec};

pub const ROOT: &str = "s_L";

/// Volume grid resolution as a fraction of the chamber.
pub const VOLUME_STEP: f64 = 0.01;

/// Minimum positive/negative likelihood ratio for a strong biosignature.
pub const MIN_BIOSIGNATURE_RATIO: f64 = 5.0;

const BINARY_EDGES: [f64; 3] = [0.0, 0.5, 1.0];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {}", format_issues(.0))]
    Config(Vec<ConfigIssue>),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Network(#[from] BayesNetError),
    #[error("`{variable}` is not a strong biosignature: P(1|biotic)/P(1|abiotic) = {ratio:.3} < {MIN_BIOSIGNATURE_RATIO}")]
    WeakBiosignature { variable: String, ratio: f64 },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn format_issues(issues: &[ConfigIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

/// One field-level configuration problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "`{}`: {}", self.field, self.message)
    }
}

// ---------------------------------------------------------------------------
// Catalog

/// Static description of one network variable.
#[derive(Debug, Clone, Copy)]
pub struct CatalogEntry {
    pub id: &'static str,
    pub characteristic: &'static str,
    pub range: (f64, f64),
    pub parents: &'static [&'static str],
    pub default_edges: &'static [f64],
}

/// The root plus the ten measurement variables, in index order.
#[derive(Debug, Clone, Copy)]
pub struct BiosigVariableCatalog;

const CATALOG: [CatalogEntry; 11] = [
    CatalogEntry { id: ROOT, characteristic: "Life", range: (0.0, 1.0), parents: &[], default_edges: &BINARY_EDGES },
    CatalogEntry { id: "o_1", characteristic: "Polyelectrolyte presence", range: (0.0, 1.0), parents: &[ROOT], default_edges: &BINARY_EDGES },
    CatalogEntry { id: "o_2", characteristic: "Cell membrane presence", range: (0.0, 1.0), parents: &[ROOT], default_edges: &BINARY_EDGES },
    CatalogEntry { id: "o_3", characteristic: "Autofluorescence", range: (0.0, 1.0), parents: &[ROOT], default_edges: &BINARY_EDGES },
    CatalogEntry { id: "o_4", characteristic: "Molecular assembly index >= 15", range: (0.0, 1.0), parents: &[ROOT], default_edges: &BINARY_EDGES },
    CatalogEntry { id: "o_5", characteristic: "Biotic amino acid diversity", range: (0.0, 22.0), parents: &[ROOT], default_edges: &[0.0, 3.0, 8.0, 15.0, 22.0] },
    CatalogEntry { id: "o_6", characteristic: "L:R chirality ratio (%)", range: (0.0, 100.0), parents: &[ROOT], default_edges: &[0.0, 40.0, 70.0, 100.0] },
    CatalogEntry { id: "o_7", characteristic: "Salinity (%)", range: (0.0, 100.0), parents: &["o_2"], default_edges: &[0.0, 40.0, 60.0, 100.0] },
    CatalogEntry { id: "o_8", characteristic: "CHNOPS abundance (%)", range: (0.0, 100.0), parents: &["o_4", "o_5"], default_edges: &[0.0, 35.0, 55.0, 100.0] },
    CatalogEntry { id: "o_9", characteristic: "pH", range: (0.0, 14.0), parents: &["o_1", "o_5"], default_edges: &[0.0, 7.0, 8.5, 14.0] },
    CatalogEntry { id: "o_10", characteristic: "Redox potential (V)", range: (-0.5, 0.0), parents: &["o_5"], default_edges: &[-0.5, -0.3, -0.18, 0.0] },
];

impl BiosigVariableCatalog {
    pub fn entries() -> &'static [CatalogEntry] {
        &CATALOG
    }

    pub fn get(id: &str) -> Option<&'static CatalogEntry> {
        CATALOG.iter().find(|e| e.id == id)
    }

    pub fn index_of(id: &str) -> Option<usize> {
        CATALOG.iter().position(|e| e.id == id)
    }

    /// Strong biosignatures (binary presence tests).
    pub fn strong_biosignatures() -> &'static [&'static str] {
        &["o_1", "o_2", "o_3", "o_4"]
    }
}

// ---------------------------------------------------------------------------
// Instruments

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Instrument {
    Hrms,
    Sms,
    MuCeLif,
    Esa,
    Microscope,
    Nanopore,
}

impl Instrument {
    pub const ALL: [Instrument; 6] = [
        Instrument::Hrms,
        Instrument::Sms,
        Instrument::MuCeLif,
        Instrument::Esa,
        Instrument::Microscope,
        Instrument::Nanopore,
    ];

    /// Zero-based action index (`a_1` is 0).
    pub fn action(self) -> usize {
        self as usize
    }

    pub fn from_action(action: usize) -> Option<Instrument> {
        Self::ALL.get(action).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Instrument::Hrms => "HRMS",
            Instrument::Sms => "SMS",
            Instrument::MuCeLif => "uCE-LIF",
            Instrument::Esa => "ESA",
            Instrument::Microscope => "Microscope",
            Instrument::Nanopore => "Nanopore",
        }
    }

    /// Measured variables in ascending variable index.
    pub fn measures(self) -> &'static [&'static str] {
        match self {
            Instrument::Hrms => &["o_5", "o_7", "o_8", "o_10"],
            Instrument::Sms | Instrument::MuCeLif => &["o_5", "o_6"],
            Instrument::Esa => &["o_7", "o_8"],
            Instrument::Microscope => &["o_2", "o_3"],
            Instrument::Nanopore => &["o_1"],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentSpec {
    pub instrument: Instrument,
    pub action: usize,
    pub name: &'static str,
    pub measures: Vec<String>,
    /// Fraction of the chamber consumed per use.
    pub usage: f64,
}

/// Per-instrument sample usage, as chamber fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstrumentUsages {
    pub hrms: f64,
    pub sms: f64,
    pub mu_ce_lif: f64,
    pub esa: f64,
    pub microscope: f64,
    pub nanopore: f64,
}

impl Default for InstrumentUsages {
    fn default() -> Self {
        InstrumentUsages {
            hrms: 0.01,
            sms: 0.06,
            mu_ce_lif: 0.02,
            esa: 0.03,
            microscope: 0.01,
            nanopore: 0.89,
        }
    }
}

impl InstrumentUsages {
    pub fn get(&self, instrument: Instrument) -> f64 {
        match instrument {
            Instrument::Hrms => self.hrms,
            Instrument::Sms => self.sms,
            Instrument::MuCeLif => self.mu_ce_lif,
            Instrument::Esa => self.esa,
            Instrument::Microscope => self.microscope,
            Instrument::Nanopore => self.nanopore,
        }
    }

    fn field(instrument: Instrument) -> &'static str {
        match instrument {
            Instrument::Hrms => "instruments.hrms",
            Instrument::Sms => "instruments.sms",
            Instrument::MuCeLif => "instruments.mu_ce_lif",
            Instrument::Esa => "instruments.esa",
            Instrument::Microscope => "instruments.microscope",
            Instrument::Nanopore => "instruments.nanopore",
        }
    }
}

pub fn instrument_specs(config: &MissionConfig) -> Vec<InstrumentSpec> {
    Instrument::ALL
        .iter()
        .map(|&i| InstrumentSpec {
            instrument: i,
            action: i.action(),
            name: i.name(),
            measures: i.measures().iter().map(|s| s.to_string()).collect(),
            usage: config.instruments.get(i),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Mission configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSettings {
    /// Optional network definition file; relative paths resolve against the
    /// config file's directory. Without it the built-in defaults are used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub seed: u64,
    pub samples_per_row: usize,
    /// Bin edge overrides for the built-in network, keyed by variable id.
    pub bin_edges: BTreeMap<String, Vec<f64>>,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        NetworkSettings {
            file: None,
            seed: 17,
            samples_per_row: 100_000,
            bin_edges: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverLimits {
    pub precision: f64,
    pub timeout_secs: f64,
}

impl Default for SolverLimits {
    fn default() -> Self {
        SolverLimits {
            precision: 1e-3,
            timeout_secs: 600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSettings {
    pub rollouts: usize,
    pub horizon: usize,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        EvaluationSettings {
            rollouts: 10_000,
            horizon: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConopsGrid {
    pub t_biotic: Vec<f64>,
    pub t_abiotic: Vec<f64>,
}

impl Default for ConopsGrid {
    fn default() -> Self {
        ConopsGrid {
            t_biotic: vec![0.9, 0.925, 0.95, 0.975, 1.0],
            t_abiotic: vec![0.0, 0.025, 0.05, 0.075, 0.1],
        }
    }
}

/// Every knob of a run. Loaded from TOML; missing keys take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    /// Master seed for evaluation rollouts.
    pub seed: u64,
    /// Mean accumulated volume per accumulation step.
    pub v_acc: f64,
    /// Accumulation spread; `0.5 * v_acc` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_acc: Option<f64>,
    pub s_v_max: f64,
    /// Probability that a freshly accumulated sample is biotic.
    pub p_biotic: f64,
    pub lambda: f64,
    pub discount: f64,
    /// Cost charged per accumulation step, in reward units.
    pub accumulate_cost: f64,
    pub instruments: InstrumentUsages,
    pub network: NetworkSettings,
    pub solver: SolverLimits,
    pub evaluation: EvaluationSettings,
    pub conops: ConopsGrid,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for MissionConfig {
    fn default() -> Self {
        MissionConfig {
            seed: 20_250_101,
            v_acc: 0.03,
            sigma_acc: None,
            s_v_max: 1.0,
            p_biotic: 0.5,
            lambda: 0.72,
            discount: 0.99,
            accumulate_cost: 0.0005,
            instruments: InstrumentUsages::default(),
            network: NetworkSettings::default(),
            solver: SolverLimits::default(),
            evaluation: EvaluationSettings::default(),
            conops: ConopsGrid::default(),
            base_dir: None,
        }
    }
}

pub(crate) fn on_grid(x: f64) -> bool {
    let cells = x / VOLUME_STEP;
    (cells - cells.round()).abs() < 1e-6
}

/// Number of grid cells spanned by a volume that lies on the grid.
pub fn cells(x: f64) -> usize {
    (x / VOLUME_STEP).round() as usize
}

impl MissionConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            ModelError::Parse(m) => ModelError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sigma_acc(&self) -> f64 {
        self.sigma_acc.unwrap_or(0.5 * self.v_acc)
    }

    /// Same config with a different mean accumulation; spread follows
    /// `0.5 * v_acc` unless it was set explicitly.
    pub fn with_v_acc(&self, v_acc: f64) -> Self {
        MissionConfig { v_acc, ..self.clone() }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        MissionConfig { lambda, ..self.clone() }
    }

    pub fn max_volume_index(&self) -> usize {
        cells(self.s_v_max)
    }

    pub fn network_file_path(&self) -> Option<PathBuf> {
        let file = self.network.file.as_ref()?;
        Some(match (&self.base_dir, file.is_relative()) {
            (Some(dir), true) => dir.join(file),
            _ => file.clone(),
        })
    }

    /// All field-level problems; empty when the config is usable.
    pub fn issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: String| {
            out.push(ConfigIssue {
                field: field.to_string(),
                message,
            })
        };
        if !(0.0..=1.0).contains(&self.lambda) {
            bad("lambda", format!("{} is outside [0, 1]", self.lambda));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            bad("discount", format!("{} is outside (0, 1)", self.discount));
        }
        if !(0.0..=1.0).contains(&self.p_biotic) {
            bad("p_biotic", format!("{} is outside [0, 1]", self.p_biotic));
        }
        if !(self.s_v_max > 0.0 && self.s_v_max.is_finite()) || !on_grid(self.s_v_max) {
            bad("s_v_max", format!("{} must be a positive multiple of {VOLUME_STEP}", self.s_v_max));
        }
        if !(self.v_acc > 0.0 && self.v_acc <= self.s_v_max) {
            bad("v_acc", format!("{} must lie in (0, s_v_max]", self.v_acc));
        } else if !on_grid(self.v_acc) {
            bad("v_acc", format!("{} is not on the {VOLUME_STEP} volume grid", self.v_acc));
        }
        if !(self.sigma_acc() >= 0.0 && self.sigma_acc().is_finite()) {
            bad("sigma_acc", format!("{} must be >= 0", self.sigma_acc()));
        }
        if !(self.accumulate_cost >= 0.0 && self.accumulate_cost.is_finite()) {
            bad("accumulate_cost", format!("{} must be >= 0", self.accumulate_cost));
        }
        for i in Instrument::ALL {
            let u = self.instruments.get(i);
            let field = InstrumentUsages::field(i);
            if !(u > 0.0 && u <= 1.0 && u <= self.s_v_max) {
                bad(field, format!("usage {u} must lie in (0, min(1, s_v_max)]"));
            } else if !on_grid(u) {
                bad(field, format!("usage {u} is not on the {VOLUME_STEP} volume grid"));
            }
        }
        if self.network.samples_per_row < 10_000 {
            bad("network.samples_per_row", format!("{} is below 10000", self.network.samples_per_row));
        }
        for (id, edges) in &self.network.bin_edges {
            let field = format!("network.bin_edges.{id}");
            match BiosigVariableCatalog::get(id) {
                None => bad(&field, "unknown variable".into()),
                Some(e) if e.id == ROOT => bad(&field, "the root is not binned".into()),
                Some(e) => {
                    if edges.len() < 3 {
                        bad(&field, "need at least two bins".into());
                    } else if edges.windows(2).any(|w| !(w[0] < w[1])) {
                        bad(&field, "edges must be strictly ascending".into());
                    } else if edges[0] != e.range.0 || edges[edges.len() - 1] != e.range.1 {
                        bad(&field, format!("edges must span [{}, {}]", e.range.0, e.range.1));
                    }
                }
            }
        }
        if !(self.solver.precision > 0.0) {
            bad("solver.precision", "must be > 0".into());
        }
        if !(self.solver.timeout_secs > 0.0) {
            bad("solver.timeout_secs", "must be > 0".into());
        }
        if self.evaluation.rollouts == 0 {
            bad("evaluation.rollouts", "must be >= 1".into());
        }
        if self.evaluation.horizon == 0 {
            bad("evaluation.horizon", "must be >= 1".into());
        }
        if self.conops.t_biotic.is_empty() || self.conops.t_biotic.iter().any(|t| !(0.9..=1.0).contains(t)) {
            bad("conops.t_biotic", "thresholds must be non-empty and within [0.9, 1.0]".into());
        }
        if self.conops.t_abiotic.is_empty() || self.conops.t_abiotic.iter().any(|t| !(0.0..=0.1).contains(t)) {
            bad("conops.t_abiotic", "thresholds must be non-empty and within [0, 0.1]".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Config(issues))
        }
    }
}

// ---------------------------------------------------------------------------
// Default network

fn edges_for(config: &MissionConfig, entry: &CatalogEntry) -> Vec<f64> {
    config
        .network
        .bin_edges
        .get(entry.id)
        .cloned()
        .unwrap_or_else(|| entry.default_edges.to_vec())
}

fn midpoints(edges: &[f64]) -> Vec<f64> {
    edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Built-in conditional families. Rows for children of `o_5` are generated
/// from the midpoints of `o_5`'s bins so any bin layout gets a family.
pub fn default_families(specs: &[VariableSpec]) -> Vec<ContinuousFamily> {
    let edges = |id: &str| specs.iter().find(|s| s.id == id).and_then(|s| s.bin_edges.clone()).expect("catalog variable");
    let bern = |id: &str, abiotic: f64, biotic: f64| {
        ContinuousFamily::new(id, vec![FamilyParams::Bernoulli { p: abiotic }, FamilyParams::Bernoulli { p: biotic }])
    };
    let o5_mid = midpoints(&edges("o_5"));
    let gauss = |mean: f64, sd: f64| FamilyParams::TruncatedGaussian { mean, sd };

    let mut fams = vec![
        bern("o_1", 0.05, 0.85),
        bern("o_2", 0.03, 0.25),
        bern("o_3", 0.035, 0.20),
        bern("o_4", 0.10, 0.75),
        ContinuousFamily::new(
            "o_5",
            vec![FamilyParams::TruncatedCount { mean: 5.5 }, FamilyParams::TruncatedCount { mean: 7.0 }],
        ),
        ContinuousFamily::new(
            "o_6",
            vec![
                FamilyParams::BetaScaled { alpha: 3.75, beta: 7.75 },
                FamilyParams::BetaScaled { alpha: 9.5, beta: 3.0 },
            ],
        ),
        ContinuousFamily::new("o_7", vec![gauss(45.0, 15.0), gauss(55.0, 15.0)]),
    ];
    // o_8 | o_4, o_5
    let mut rows = Vec::new();
    for o4 in 0..2 {
        for &m in &o5_mid {
            rows.push(gauss(30.0 + 6.0 * o4 as f64 + m, 12.0));
        }
    }
    fams.push(ContinuousFamily::new("o_8", rows));
    // o_9 | o_1, o_5
    let mut rows = Vec::new();
    for o1 in 0..2 {
        for &m in &o5_mid {
            rows.push(gauss(9.0 - 1.0 * o1 as f64 - 0.1 * m, 1.0));
        }
    }
    fams.push(ContinuousFamily::new("o_9", rows));
    // o_10 | o_5
    fams.push(ContinuousFamily::new("o_10", o5_mid.iter().map(|&m| gauss(-0.15 - 0.006 * m, 0.08)).collect()));
    fams
}

/// Variable specs for the built-in network, honoring bin-edge overrides.
pub fn default_specs(config: &MissionConfig) -> Vec<VariableSpec> {
    CATALOG
        .iter()
        .map(|e| {
            let edges = edges_for(config, e);
            VariableSpec {
                id: e.id.to_string(),
                cardinality: edges.len() - 1,
                bin_edges: Some(edges),
                parents: e.parents.iter().map(|p| p.to_string()).collect(),
            }
        })
        .collect()
}

/// The built-in network as a definition file (the shipped reference file is
/// this, serialized).
pub fn default_network_file(config: &MissionConfig) -> NetworkFile {
    let specs = default_specs(config);
    let fams = default_families(&specs);
    NetworkFile::from_parts(ROOT, &specs, &fams)
}

/// Builds the discretized measurement network and its continuous families,
/// either from the config's network file or from the built-in defaults.
pub fn build_default_network(config: &MissionConfig) -> Result<HybridNetwork, ModelError> {
    config.validate()?;
    let file = match config.network_file_path() {
        Some(path) => NetworkFile::read(&path)?,
        None => default_network_file(config),
    };
    let net = file.build(config.network.samples_per_row, config.network.seed)?;
    check_catalog(&net.discrete)?;
    check_biosignatures(&net.discrete)?;
    Ok(net)
}

fn check_catalog(net: &DiscreteBayesNet) -> Result<(), ModelError> {
    if net.root() != ROOT {
        return Err(BayesNetError::Malformed(format!("root must be `{ROOT}`")).into());
    }
    for i in Instrument::ALL {
        for m in i.measures() {
            if net.variable(m).is_none() {
                return Err(BayesNetError::Malformed(format!("{} measures `{m}`, which the network lacks", i.name())).into());
            }
        }
    }
    Ok(())
}

fn check_biosignatures(net: &DiscreteBayesNet) -> Result<(), ModelError> {
    for id in BiosigVariableCatalog::strong_biosignatures() {
        let ratio = biosignature_ratio(net, id)?;
        if !(ratio >= MIN_BIOSIGNATURE_RATIO) {
            return Err(ModelError::WeakBiosignature {
                variable: id.to_string(),
                ratio,
            });
        }
    }
    Ok(())
}

/// `P(id = 1 | biotic) / P(id = 1 | abiotic)` read off the network.
pub fn biosignature_ratio(net: &DiscreteBayesNet, id: &str) -> Result<f64, BayesNetError> {
    let pos = net.evidence_likelihood(&[(id, 1)], 1)?;
    let neg = net.evidence_likelihood(&[(id, 1)], 0)?;
    Ok(if neg == 0.0 { f64::INFINITY } else { pos / neg })
}

/// Every joint bin tuple an instrument can report, over its measured
/// variables in ascending variable index; lexicographic with the first
/// variable most significant.
pub fn joint_observation_alphabet(instrument: &InstrumentSpec, net: &DiscreteBayesNet) -> Result<Vec<Vec<usize>>, BayesNetError> {
    let cards = instrument
        .measures
        .iter()
        .map(|m| net.variable(m).map(|v| v.cardinality).ok_or_else(|| BayesNetError::UnknownVariable(m.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let total: usize = cards.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![0usize; cards.len()];
    for _ in 0..total {
        out.push(digits.clone());
        for k in (0..digits.len()).rev() {
            digits[k] += 1;
            if digits[k] < cards[k] {
                break;
            }
            digits[k] = 0;
        }
    }
    Ok(out)
}
