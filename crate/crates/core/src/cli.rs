//! Command-line front end: `run`, `compare`, `sweep` and `echo-config`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, ScenarioConfig};
use crate::engine::{run_batch, BatchResult};
use crate::error::{Error, Result};
use crate::output::{write_results, ResultFiles};
use crate::policies::PolicyKind;

#[derive(Debug, Parser)]
#[command(name = "hcrn", version, about = "Hybrid-cognition radar network simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a Monte-Carlo batch for one policy.
    Run(RunArgs),
    /// Run several policies on identical worlds.
    Compare(CompareArgs),
    /// Repeat a run while varying one scalar config field.
    Sweep(SweepArgs),
    /// Print the fully resolved config as JSON.
    EchoConfig(RunArgs),
}

/// Overrides applied on top of the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub seed_base: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Draw per-node interference perturbations that break the shared channel ranking.
    #[arg(long)]
    pub no_assumption1: bool,
    /// Drop measurements on simulated missed detections.
    #[arg(long)]
    pub detection_gating: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<String>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// One config per policy; repeat the flag.
    #[arg(long = "config")]
    pub configs: Vec<PathBuf>,
    /// Comma-separated policies to run on a single config instead.
    #[arg(long, value_delimiter = ',')]
    pub policies: Vec<String>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub policy: Option<String>,
    /// Dotted path of the field to vary, e.g. `policy_params.confidence`.
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[command(flatten)]
    pub overrides: Overrides,
}

fn load(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => parse_config(p),
        None => Ok(ScenarioConfig::default()),
    }
}

pub fn apply_overrides(cfg: &mut ScenarioConfig, o: &Overrides, policy: Option<&str>) -> Result<()> {
    if let Some(v) = o.seed_base {
        cfg.seed_base = v;
    }
    if let Some(v) = o.runs {
        cfg.runs = v;
    }
    if let Some(v) = o.horizon {
        cfg.horizon_cpis = v;
    }
    if let Some(v) = &o.out {
        cfg.output_dir = v.clone();
    }
    if o.no_assumption1 {
        cfg.assumption1 = false;
    }
    if o.detection_gating {
        cfg.detection_gating = true;
    }
    if let Some(p) = policy {
        cfg.policy = p.parse::<PolicyKind>()?;
    }
    if cfg.runs == 0 {
        return Err(Error::OutOfRange {
            what: "runs",
            detail: "at least one run is required".into(),
        });
    }
    cfg.resolve()?;
    Ok(())
}

fn batch(cfg: &ScenarioConfig) -> Result<BatchResult> {
    run_batch(&cfg.resolve()?, &cfg.seeds())
}

/// Run one policy's batch and write its result files.
pub fn cmd_run(cfg: &ScenarioConfig) -> Result<ResultFiles> {
    let result = batch(cfg)?;
    write_results(&cfg.output_dir, std::slice::from_ref(cfg), &[result])
}

/// Run several configs that share a world on the same seeds.
pub fn cmd_compare(configs: &[ScenarioConfig]) -> Result<ResultFiles> {
    let first = configs
        .first()
        .ok_or_else(|| Error::Config("compare needs at least one config".into()))?;
    for c in &configs[1..] {
        first.ensure_same_world(c)?;
    }
    let batches = configs.iter().map(batch).collect::<Result<Vec<_>>>()?;
    write_results(&first.output_dir, configs, &batches)
}

/// Set a numeric field addressed by a dotted path.
pub fn set_scalar(cfg: &ScenarioConfig, path: &str, value: f64) -> Result<ScenarioConfig> {
    let mut json = serde_json::to_value(cfg)?;
    let mut slot = &mut json;
    for key in path.split('.') {
        slot = slot
            .get_mut(key)
            .ok_or_else(|| Error::Config(format!("unknown config field {path:?}")))?;
    }
    *slot = match slot {
        serde_json::Value::Number(n) if n.is_u64() || n.is_i64() => {
            if value.fract() != 0.0 || value < 0.0 {
                return Err(Error::Config(format!("{path} needs a non-negative integer, got {value}")));
            }
            serde_json::Value::from(value as u64)
        }
        // Optional fields are null by default; whole numbers there are taken as counts.
        serde_json::Value::Null if value.fract() == 0.0 && value >= 0.0 => serde_json::Value::from(value as u64),
        serde_json::Value::Number(_) | serde_json::Value::Null => serde_json::Value::from(value),
        _ => return Err(Error::Config(format!("{path} is not a scalar numeric field"))),
    };
    let out: ScenarioConfig = serde_json::from_value(json).map_err(|e| Error::Config(format!("{path}: {e}")))?;
    out.resolve()?;
    Ok(out)
}

pub fn cmd_sweep(cfg: &ScenarioConfig, param: &str, values: &[f64]) -> Result<Vec<ResultFiles>> {
    values
        .iter()
        .map(|&v| {
            let mut c = set_scalar(cfg, param, v)?;
            c.output_dir = cfg.output_dir.join(format!("{param}={v}"));
            cmd_run(&c)
        })
        .collect()
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => {
            let mut cfg = load(a.config.as_deref())?;
            apply_overrides(&mut cfg, &a.overrides, a.policy.as_deref())?;
            let files = cmd_run(&cfg)?;
            println!("{}", files.records_csv.display());
        }
        Command::EchoConfig(a) => {
            let mut cfg = load(a.config.as_deref())?;
            apply_overrides(&mut cfg, &a.overrides, a.policy.as_deref())?;
            println!("{}", cfg.to_json()?);
        }
        Command::Compare(a) => {
            let mut configs = Vec::new();
            if a.configs.is_empty() || !a.policies.is_empty() {
                let base = load(a.configs.first().map(PathBuf::as_path))?;
                if a.configs.len() > 1 {
                    return Err(Error::Config("use either several --config or --policies, not both".into()));
                }
                let names: Vec<String> = if a.policies.is_empty() {
                    PolicyKind::ALL.iter().map(|p| p.label().to_string()).collect()
                } else {
                    a.policies.clone()
                };
                for name in &names {
                    let mut c = base.clone();
                    apply_overrides(&mut c, &a.overrides, Some(name))?;
                    configs.push(c);
                }
            } else {
                for p in &a.configs {
                    let mut c = parse_config(p)?;
                    apply_overrides(&mut c, &a.overrides, None)?;
                    configs.push(c);
                }
            }
            let files = cmd_compare(&configs)?;
            println!("{}", files.records_csv.display());
        }
        Command::Sweep(a) => {
            let mut cfg = load(a.config.as_deref())?;
            apply_overrides(&mut cfg, &a.overrides, a.policy.as_deref())?;
            for files in cmd_sweep(&cfg, &a.param, &a.values)? {
                println!("{}", files.records_csv.display());
            }
        }
    }
    Ok(())
}

/// Process exit code for a command outcome.
pub fn exit_code(result: &Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) if e.is_config_error() => 2,
        Err(_) => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_sets_nested_scalars() {
        let cfg = ScenarioConfig::default();
        let c = set_scalar(&cfg, "policy_params.confidence", 0.5).unwrap();
        assert_eq!(c.policy_params.confidence, 0.5);
        let c = set_scalar(&cfg, "horizon_cpis", 20.0).unwrap();
        assert_eq!(c.horizon_cpis, 20);
        assert!(set_scalar(&cfg, "horizon_cpis", 2.5).is_err());
        let c = set_scalar(&cfg, "policy_params.max_candidates", 3.0).unwrap();
        assert_eq!(c.policy_params.max_candidates, Some(3));
        assert!(set_scalar(&cfg, "nope", 1.0).is_err());
        assert!(set_scalar(&cfg, "geometry", 1.0).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Ok(())), 0);
        assert_eq!(exit_code(&Err(Error::Config("x".into()))), 2);
        assert_eq!(exit_code(&Err(Error::NotPositiveDefinite)), 3);
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "hcrn", "run", "--policy", "mc", "--runs", "2", "--horizon", "5", "--no-assumption1",
        ])
        .unwrap();
        let Command::Run(a) = cli.command else { panic!() };
        let mut cfg = ScenarioConfig::default();
        apply_overrides(&mut cfg, &a.overrides, a.policy.as_deref()).unwrap();
        assert_eq!(cfg.policy, PolicyKind::Mc);
        assert_eq!((cfg.runs, cfg.horizon_cpis, cfg.assumption1), (2, 5, false));

        let cli = Cli::try_parse_from(["hcrn", "compare", "--policies", "oracle,random"]).unwrap();
        let Command::Compare(a) = cli.command else { panic!() };
        assert_eq!(a.policies, vec!["oracle", "random"]);
    }
}
