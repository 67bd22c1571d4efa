use std::path::{Path, PathBuf};
use std::time::Instant;

use lds_core::baseline::{evaluate_conops, threshold_sweep, ConopsParams};
use lds_core::bayesnet::HybridNetwork;
use lds_core::lds_model::{build_default_network, MissionConfig, ModelError};
use lds_core::pomdp::{build_model, PomdpModel};
use lds_core::sim::{evaluate_policy, lambda_sweep, solver_settings, EvalSpec};
use lds_core::solver::{load_policy, policy_map as build_policy_map, save_policy, solve as run_solver, SolverError};

use crate::error::CliError;
use crate::output::{sha256_hex, write_events, write_metrics, write_policy_map, MetricsRow, RowLabel, RunManifest};

pub const CACHE_ENV: &str = "LDSPLAN_CACHE_DIR";

struct Loaded {
    config: MissionConfig,
    path: Option<PathBuf>,
    hash: String,
}

impl Loaded {
    fn manifest(&self, seed: u64) -> RunManifest {
        RunManifest::new(self.path.clone(), self.hash.clone(), seed)
    }
}

fn load_config(path: Option<&Path>) -> Result<Loaded, CliError> {
    let (config, hash) = match path {
        Some(p) => {
            let bytes = std::fs::read(p).map_err(|e| CliError::io(p, e))?;
            (MissionConfig::load(p)?, sha256_hex(&bytes))
        }
        None => {
            let c = MissionConfig::default();
            let hash = sha256_hex(c.to_toml_string().as_bytes());
            (c, hash)
        }
    };
    Ok(Loaded {
        config,
        path: path.map(Path::to_path_buf),
        hash,
    })
}

fn model_for(config: &MissionConfig) -> Result<(HybridNetwork, PomdpModel), CliError> {
    let net = build_default_network(config)?;
    let model = build_model(config, &net.discrete)?;
    Ok((net, model))
}

pub fn validate(path: Option<&Path>) -> Result<(), CliError> {
    let loaded = load_config(path)?;
    let issues = loaded.config.issues();
    if !issues.is_empty() {
        return Err(ModelError::Config(issues).into());
    }
    let (_, model) = model_for(&loaded.config)?;
    let problems = model.check();
    if !problems.is_empty() {
        return Err(CliError::InvalidModel(problems));
    }
    let s = model.summary();
    println!(
        "ok: {} states, {} actions, rewards in [{}, {}], fingerprint {}",
        s.states,
        s.actions.len(),
        s.reward_min,
        s.reward_max,
        s.fingerprint
    );
    Ok(())
}

pub fn solve(path: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let loaded = load_config(path)?;
    let config = &loaded.config;
    let (_, model) = model_for(config)?;
    let mut manifest = loaded.manifest(config.seed);
    manifest.model_fingerprint = Some(model.fingerprint().to_string());
    let manifest_path = RunManifest::path_for(out);
    let result = run_solver(&model, &solver_settings(config, &model));
    let policy = match result {
        Ok(o) => o.policy,
        Err(SolverError::Timeout(meta)) => {
            manifest.solver = Some(meta.clone());
            manifest.outputs = vec![manifest_path.clone()];
            manifest.wall_secs = started.elapsed().as_secs_f64();
            manifest.write(&manifest_path)?;
            return Err(CliError::TimedOut(meta));
        }
        Err(e) => return Err(e.into()),
    };
    save_policy(&policy, out)?;
    let m = &policy.meta;
    println!(
        "lower {:.6} upper {:.6} gap {:.3e} vectors {} iterations {} backups {} wall {:.2}s",
        m.lower,
        m.upper,
        m.gap,
        policy.vectors.len(),
        m.iterations,
        m.backups,
        m.wall_secs
    );
    manifest.solver = Some(m.clone());
    manifest.outputs = vec![out.to_path_buf(), manifest_path.clone()];
    manifest.wall_secs = started.elapsed().as_secs_f64();
    manifest.write(&manifest_path)?;
    if m.timed_out {
        return Err(CliError::TimedOut(m.clone()));
    }
    Ok(())
}

pub struct EvalArgs<'a> {
    pub config: Option<&'a Path>,
    pub policy: Option<&'a Path>,
    pub conops: Option<(f64, f64)>,
    pub v_acc: Option<f64>,
    pub seed: Option<u64>,
    pub out: &'a Path,
    pub events: Option<&'a Path>,
}

fn scenario(config: &MissionConfig, v_acc: Option<f64>) -> Result<(MissionConfig, String), CliError> {
    match v_acc {
        None => Ok((config.clone(), "nominal".into())),
        Some(v) => {
            let env = config.with_v_acc(v);
            env.validate()?;
            Ok((env, format!("v_acc={v}")))
        }
    }
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let loaded = load_config(args.config)?;
    let config = &loaded.config;
    let seed = args.seed.unwrap_or(config.seed);
    let (env_config, scenario) = scenario(config, args.v_acc)?;
    let (net, model) = model_for(config)?;
    let spec = EvalSpec {
        rollouts: config.evaluation.rollouts,
        horizon: config.evaluation.horizon,
        seed,
    };
    let mut label = RowLabel {
        scenario,
        v_acc: env_config.v_acc,
        seed,
        ..Default::default()
    };
    let evaluation = match (args.policy, args.conops) {
        (Some(p), _) => {
            let policy = load_policy(p, &model)?;
            label.policy_id = p.file_stem().map_or_else(|| "policy".into(), |s| s.to_string_lossy().into_owned());
            label.lambda = policy.lambda;
            evaluate_policy(&policy, &model, &env_config, &net, &spec)?
        }
        (None, Some((tb, ta))) => {
            let params = ConopsParams::new(tb, ta)?;
            label.policy_id = "conops".into();
            label.t_biotic = Some(tb);
            label.t_abiotic = Some(ta);
            evaluate_conops(params, &model, &env_config, &net, &spec)?
        }
        (None, None) => return Err(CliError::Usage("need --policy or --conops".into())),
    };
    let row = MetricsRow {
        label,
        metrics: Some(evaluation.metrics),
        sweep: None,
    };
    write_metrics(args.out, std::slice::from_ref(&row), false)?;
    let manifest_path = RunManifest::path_for(args.out);
    let mut manifest = loaded.manifest(seed);
    manifest.model_fingerprint = Some(model.fingerprint().to_string());
    manifest.outputs.push(args.out.to_path_buf());
    if let Some(e) = args.events {
        write_events(e, &evaluation.rollouts)?;
        manifest.outputs.push(e.to_path_buf());
    }
    manifest.outputs.push(manifest_path.clone());
    manifest.wall_secs = started.elapsed().as_secs_f64();
    manifest.write(&manifest_path)?;
    if let Some(m) = &row.metrics {
        let show = |x: Option<f64>| x.map_or("NA".to_string(), |v| format!("{v:.4}"));
        println!("declarations {} fnr {} fpr {}", m.declarations, show(m.fnr), show(m.fpr));
    }
    Ok(())
}

/// Inclusive `lo:hi:step` grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("grid `{spec}` is not lo:hi:step with step > 0 and lo <= hi"));
    let parts: Vec<f64> = spec.split(':').map(|s| s.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [lo, hi, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0 && lo <= hi && lo.is_finite() && hi.is_finite()) {
        return Err(bad());
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((lo + i as f64 * step) * 1e10).round() / 1e10).collect())
}

fn cache_dir(flag: Option<PathBuf>, out: &Path) -> PathBuf {
    flag.or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
        .unwrap_or_else(|| out.parent().unwrap_or(Path::new(".")).join("policy-cache"))
}

pub fn sweep(path: Option<&Path>, lambda: Option<&str>, conops_grid: bool, seed: Option<u64>, out: &Path, cache: Option<PathBuf>) -> Result<(), CliError> {
    let started = Instant::now();
    let loaded = load_config(path)?;
    let config = &loaded.config;
    let seed = seed.unwrap_or(config.seed);
    let net = build_default_network(config)?;
    let spec = EvalSpec {
        rollouts: config.evaluation.rollouts,
        horizon: config.evaluation.horizon,
        seed,
    };
    let base = RowLabel {
        scenario: "nominal".into(),
        v_acc: config.v_acc,
        seed,
        ..Default::default()
    };
    let mut manifest = loaded.manifest(seed);
    let rows: Vec<MetricsRow> = match (lambda, conops_grid) {
        (Some(grid), _) => {
            let lambdas = parse_grid(grid)?;
            let dir = cache_dir(cache, out);
            let rows = lambda_sweep(config, &net, &lambdas, &spec, Some(&dir))?;
            manifest.outputs.push(dir);
            rows.into_iter()
                .map(|r| {
                    let status = match (&r.metrics, r.solver.as_ref().is_some_and(|m| m.timed_out)) {
                        (Some(_), false) => "ok".to_string(),
                        (Some(_), true) => "timeout".to_string(),
                        (None, _) => format!("failed: {}", r.error.as_deref().unwrap_or("unknown")),
                    };
                    MetricsRow {
                        label: RowLabel {
                            policy_id: format!("sarsop-{}", r.lambda),
                            lambda: Some(r.lambda),
                            ..base.clone()
                        },
                        metrics: r.metrics,
                        sweep: Some((r.pareto, status)),
                    }
                })
                .collect()
        }
        (None, true) => threshold_sweep(config, &net, &spec)?
            .into_iter()
            .map(|r| MetricsRow {
                label: RowLabel {
                    policy_id: "conops".into(),
                    t_biotic: Some(r.params.t_biotic),
                    t_abiotic: Some(r.params.t_abiotic),
                    ..base.clone()
                },
                metrics: Some(r.metrics),
                sweep: Some((r.pareto, "ok".into())),
            })
            .collect(),
        (None, false) => return Err(CliError::Usage("need --lambda or --conops-grid".into())),
    };
    write_metrics(out, &rows, true)?;
    let manifest_path = RunManifest::path_for(out);
    manifest.outputs.push(out.to_path_buf());
    manifest.outputs.push(manifest_path.clone());
    manifest.wall_secs = started.elapsed().as_secs_f64();
    manifest.write(&manifest_path)?;
    println!("{} rows, {} Pareto-efficient", rows.len(), rows.iter().filter(|r| r.sweep.as_ref().is_some_and(|s| s.0)).count());
    Ok(())
}

pub fn policy_map(path: Option<&Path>, policy: &Path, belief_step: f64, out: &Path) -> Result<(), CliError> {
    let started = Instant::now();
    let loaded = load_config(path)?;
    let (_, model) = model_for(&loaded.config)?;
    let policy = load_policy(policy, &model)?;
    let cells = build_policy_map(&policy, &model, belief_step)?;
    write_policy_map(out, &cells)?;
    let manifest_path = RunManifest::path_for(out);
    let mut manifest = loaded.manifest(loaded.config.seed);
    manifest.model_fingerprint = Some(model.fingerprint().to_string());
    manifest.outputs = vec![out.to_path_buf(), manifest_path.clone()];
    manifest.wall_secs = started.elapsed().as_secs_f64();
    manifest.write(&manifest_path)?;
    println!("{} cells", cells.len());
    Ok(())
}
