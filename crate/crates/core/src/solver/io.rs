//! Policy files.
//!
//! Plain UTF-8 text, one item per line:
//!
//! ```text
//! ldsplan-policy 1
//! fingerprint <hex sha-256 of the model>
//! states <|S|>
//! discount <γ>
//! lambda <λ | NA>
//! meta <lower> <upper> <gap> <wall_secs> <iterations> <backups> <timed_out>
//! vectors <count>
//! a<id> <v_0> <v_1> ... <v_{|S|-1}>
//! ```
//!
//! Reals are written in shortest round-trip decimal form, so saving a loaded
//! policy reproduces the file byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use super::{AlphaPolicy, AlphaVector, SolverError, SolverMeta};
use crate::pomdp::PomdpModel;

pub const POLICY_FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "ldsplan-policy";

pub(crate) fn to_text(policy: &AlphaPolicy) -> String {
    let mut out = String::new();
    let m = &policy.meta;
    let lambda = policy.lambda.map_or("NA".to_string(), |l| l.to_string());
    writeln!(out, "{MAGIC} {POLICY_FORMAT_VERSION}").unwrap();
    writeln!(out, "fingerprint {}", policy.fingerprint).unwrap();
    writeln!(out, "states {}", policy.n_states).unwrap();
    writeln!(out, "discount {}", policy.discount).unwrap();
    writeln!(out, "lambda {lambda}").unwrap();
    writeln!(out, "meta {} {} {} {} {} {} {}", m.lower, m.upper, m.gap, m.wall_secs, m.iterations, m.backups, m.timed_out).unwrap();
    writeln!(out, "vectors {}", policy.vectors.len()).unwrap();
    for v in &policy.vectors {
        write!(out, "a{}", v.action + 1).unwrap();
        for x in &v.values {
            write!(out, " {x}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn malformed(msg: impl Into<String>) -> SolverError {
    SolverError::Malformed(msg.into())
}

fn field<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str, SolverError> {
    let line = line.ok_or_else(|| malformed(format!("missing `{key}` line")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| malformed(format!("expected `{key}`, found `{line}`")))
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, SolverError> {
    s.parse().map_err(|_| malformed(format!("bad {what} `{s}`")))
}

pub(crate) fn from_text(text: &str) -> Result<AlphaPolicy, SolverError> {
    let mut lines = text.lines();
    let version = field(lines.next(), MAGIC)?;
    if num::<u32>(version, "format version")? != POLICY_FORMAT_VERSION {
        return Err(malformed(format!("unsupported format version {version}")));
    }
    let fingerprint = field(lines.next(), "fingerprint")?.to_string();
    let n_states: usize = num(field(lines.next(), "states")?, "state count")?;
    let discount: f64 = num(field(lines.next(), "discount")?, "discount")?;
    let lambda = match field(lines.next(), "lambda")? {
        "NA" => None,
        s => Some(num(s, "lambda")?),
    };
    let meta_fields: Vec<&str> = field(lines.next(), "meta")?.split(' ').collect();
    if meta_fields.len() != 7 {
        return Err(malformed("`meta` needs 7 fields"));
    }
    let meta = SolverMeta {
        lower: num(meta_fields[0], "lower bound")?,
        upper: num(meta_fields[1], "upper bound")?,
        gap: num(meta_fields[2], "gap")?,
        wall_secs: num(meta_fields[3], "wall time")?,
        iterations: num(meta_fields[4], "iteration count")?,
        backups: num(meta_fields[5], "backup count")?,
        timed_out: num(meta_fields[6], "timeout flag")?,
    };
    let count: usize = num(field(lines.next(), "vectors")?, "vector count")?;
    let mut vectors = Vec::with_capacity(count);
    for k in 0..count {
        let line = lines.next().ok_or_else(|| malformed(format!("file ends after {k} of {count} vectors")))?;
        let mut parts = line.split(' ');
        let head = parts.next().unwrap_or_default();
        let action: usize = head
            .strip_prefix('a')
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&a| a >= 1)
            .ok_or_else(|| malformed(format!("vector {k}: bad action `{head}`")))?
            - 1;
        let values = parts.map(|s| num::<f64>(s, "vector entry")).collect::<Result<Vec<_>, _>>()?;
        if values.len() != n_states {
            return Err(malformed(format!("vector {k} has {} entries, expected {n_states}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(malformed(format!("vector {k} has a non-finite entry")));
        }
        vectors.push(AlphaVector { action, values });
    }
    if lines.any(|l| !l.trim().is_empty()) {
        return Err(malformed("trailing content after the last vector"));
    }
    Ok(AlphaPolicy {
        vectors,
        fingerprint,
        n_states,
        discount,
        lambda,
        meta,
    })
}

pub fn save_policy(policy: &AlphaPolicy, path: &Path) -> Result<(), SolverError> {
    std::fs::write(path, to_text(policy)).map_err(|e| SolverError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Reads a policy file without checking it against a model.
pub fn read_policy(path: &Path) -> Result<AlphaPolicy, SolverError> {
    let text = std::fs::read_to_string(path).map_err(|e| SolverError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    from_text(&text)
}

/// Reads a policy file and checks it was solved for `model`.
pub fn load_policy(path: &Path, model: &PomdpModel) -> Result<AlphaPolicy, SolverError> {
    let policy = read_policy(path)?;
    if policy.fingerprint != model.fingerprint() {
        return Err(SolverError::FingerprintMismatch {
            expected: model.fingerprint().to_string(),
            found: policy.fingerprint,
        });
    }
    Ok(policy)
}
