//! TOML network definition files.
//!
//! ```toml
//! root = "s_L"
//!
//! [[variable]]
//! id = "s_L"
//! cardinality = 2
//! bin_edges = [0.0, 0.5, 1.0]
//!
//! [[variable]]
//! id = "o_1"
//! cardinality = 2
//! bin_edges = [0.0, 0.5, 1.0]
//! parents = ["s_L"]
//! family = "bernoulli"
//! rows = [{ p = 0.05 }, { p = 0.85 }]
//! ```
//!
//! `rows` lists one parameter set per joint parent assignment, in mixed radix
//! over `parents` with the first parent most significant. Keys per family:
//! `bernoulli` → `p`; `truncated_count` → `mean`; `truncated_gaussian` →
//! `mean`, `sd`; `beta_scaled` → `alpha`, `beta`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BayesNetError, ContinuousFamily, FamilyKind, FamilyParams, HybridNetwork, VariableSpec};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl RowEntry {
    fn to_params(&self, kind: FamilyKind) -> Result<FamilyParams, String> {
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| format!("missing `{name}`"));
        Ok(match kind {
            FamilyKind::Bernoulli => FamilyParams::Bernoulli { p: need(self.p, "p")? },
            FamilyKind::TruncatedCount => FamilyParams::TruncatedCount { mean: need(self.mean, "mean")? },
            FamilyKind::TruncatedGaussian => FamilyParams::TruncatedGaussian {
                mean: need(self.mean, "mean")?,
                sd: need(self.sd, "sd")?,
            },
            FamilyKind::BetaScaled => FamilyParams::BetaScaled {
                alpha: need(self.alpha, "alpha")?,
                beta: need(self.beta, "beta")?,
            },
        })
    }

    fn from_params(p: &FamilyParams) -> Self {
        let mut e = RowEntry::default();
        match *p {
            FamilyParams::Bernoulli { p } => e.p = Some(p),
            FamilyParams::TruncatedCount { mean } => e.mean = Some(mean),
            FamilyParams::TruncatedGaussian { mean, sd } => {
                e.mean = Some(mean);
                e.sd = Some(sd);
            }
            FamilyParams::BetaScaled { alpha, beta } => {
                e.alpha = Some(alpha);
                e.beta = Some(beta);
            }
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariableEntry {
    pub id: String,
    pub cardinality: usize,
    pub bin_edges: Vec<f64>,
    #[serde(default)]
    pub parents: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyKind>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<RowEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub root: String,
    #[serde(rename = "variable")]
    pub variables: Vec<VariableEntry>,
}

impl NetworkFile {
    pub fn from_toml_str(text: &str) -> Result<Self, BayesNetError> {
        toml::from_str(text).map_err(|e| BayesNetError::File(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self, BayesNetError> {
        let text = std::fs::read_to_string(path).map_err(|e| BayesNetError::File(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("network file serializes")
    }

    pub fn from_parts(root: &str, specs: &[VariableSpec], families: &[ContinuousFamily]) -> Self {
        let variables = specs
            .iter()
            .map(|s| {
                let fam = families.iter().find(|f| f.variable == s.id);
                VariableEntry {
                    id: s.id.clone(),
                    cardinality: s.cardinality,
                    bin_edges: s.bin_edges.clone().unwrap_or_default(),
                    parents: s.parents.clone(),
                    family: fam.and_then(|f| f.kind()),
                    rows: fam.map(|f| f.rows.iter().map(RowEntry::from_params).collect()).unwrap_or_default(),
                }
            })
            .collect();
        NetworkFile {
            root: root.to_string(),
            variables,
        }
    }

    pub fn specs(&self) -> Vec<VariableSpec> {
        self.variables
            .iter()
            .map(|v| VariableSpec {
                id: v.id.clone(),
                cardinality: v.cardinality,
                bin_edges: Some(v.bin_edges.clone()),
                parents: v.parents.clone(),
            })
            .collect()
    }

    pub fn families(&self) -> Result<Vec<ContinuousFamily>, BayesNetError> {
        let mut out = Vec::new();
        for v in &self.variables {
            if v.id == self.root {
                continue;
            }
            let kind = v.family.ok_or_else(|| BayesNetError::File(format!("variable `{}` has no family", v.id)))?;
            let rows = v
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| r.to_params(kind).map_err(|e| BayesNetError::File(format!("`{}` row {i}: {e}", v.id))))
                .collect::<Result<Vec<_>, _>>()?;
            out.push(ContinuousFamily::new(v.id.clone(), rows));
        }
        Ok(out)
    }

    pub fn build(&self, samples_per_row: usize, seed: u64) -> Result<HybridNetwork, BayesNetError> {
        HybridNetwork::build(self.specs(), self.families()?, &self.root, samples_per_row, seed)
    }
}
