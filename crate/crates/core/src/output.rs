//! Result files: per-CPI CSV, summary JSON, config echo and world snapshots.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ScenarioConfig;
use crate::engine::{BatchResult, ErrorQuantiles, WorldInfo};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 12] = [
    "run_id",
    "policy",
    "cpi",
    "chosen_channels",
    "utility_true",
    "utility_opt",
    "regret_inst",
    "regret_cum",
    "feedback_values",
    "feedback_avg",
    "collisions",
    "loc_error_m",
];

pub const RECORDS_FILE: &str = "records.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const WORLDS_FILE: &str = "worlds.json";

/// Paths of everything a command wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultFiles {
    pub records_csv: PathBuf,
    pub summary_json: PathBuf,
    pub config_json: Vec<PathBuf>,
    pub worlds_json: PathBuf,
}

#[derive(Debug, Serialize)]
struct PolicySummary<'a> {
    policy: &'a str,
    runs: usize,
    seeds: Vec<u64>,
    mean_regret_cum: &'a [f64],
    mean_feedback_avg: &'a [f64],
    mean_loc_error: &'a [f64],
    error_quantiles_full: &'a ErrorQuantiles,
    error_quantiles_post: &'a ErrorQuantiles,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    horizon_cpis: usize,
    convergence_cpi: usize,
    policies: Vec<PolicySummary<'a>>,
}

#[derive(Debug, Serialize)]
struct PolicyWorlds<'a> {
    policy: &'a str,
    runs: Vec<RunWorld<'a>>,
}

#[derive(Debug, Serialize)]
struct RunWorld<'a> {
    seed: u64,
    world: &'a WorldInfo,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Output {
        path: path.to_path_buf(),
        source,
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn write_records_csv(path: &Path, batches: &[BatchResult]) -> Result<()> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(CSV_HEADER)?;
    for batch in batches {
        let label = batch.policy.label();
        for run in &batch.runs {
            let run_id = run.seed.to_string();
            for rec in &run.records {
                let channels: Vec<String> = rec.channels.iter().map(ToString::to_string).collect();
                w.write_record([
                    run_id.as_str(),
                    label,
                    &rec.cpi.to_string(),
                    &channels.join(";"),
                    &fmt_f64(rec.utility_true),
                    &fmt_f64(rec.utility_opt),
                    &fmt_f64(rec.regret_inst),
                    &fmt_f64(rec.regret_cum),
                    &rec.feedback_values.to_string(),
                    &fmt_f64(rec.feedback_avg),
                    &rec.collisions.to_string(),
                    &fmt_f64(rec.loc_error),
                ])?;
            }
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

/// Write every output of a run or compare into `dir`.
pub fn write_results(dir: &Path, configs: &[ScenarioConfig], batches: &[BatchResult]) -> Result<ResultFiles> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let records_csv = dir.join(RECORDS_FILE);
    write_records_csv(&records_csv, batches)?;

    let horizon = batches.first().and_then(|b| b.runs.first()).map_or(0, |r| r.records.len());
    let summary = Summary {
        horizon_cpis: horizon,
        convergence_cpi: batches.first().map_or(0, |b| b.convergence_cpi),
        policies: batches
            .iter()
            .map(|b| PolicySummary {
                policy: b.policy.label(),
                runs: b.runs.len(),
                seeds: b.runs.iter().map(|r| r.seed).collect(),
                mean_regret_cum: &b.mean_regret_cum,
                mean_feedback_avg: &b.mean_feedback_avg,
                mean_loc_error: &b.mean_loc_error,
                error_quantiles_full: &b.quantiles_full,
                error_quantiles_post: &b.quantiles_post,
            })
            .collect(),
    };
    let summary_json = dir.join(SUMMARY_FILE);
    write_json(&summary_json, &summary)?;

    let config_json = if configs.len() == 1 {
        let p = dir.join("config.json");
        write_json(&p, &configs[0])?;
        vec![p]
    } else {
        configs
            .iter()
            .map(|c| {
                let p = dir.join(format!("config_{}.json", c.policy.label()));
                write_json(&p, c)?;
                Ok(p)
            })
            .collect::<Result<Vec<_>>>()?
    };

    let worlds: Vec<PolicyWorlds> = batches
        .iter()
        .map(|b| PolicyWorlds {
            policy: b.policy.label(),
            runs: b
                .runs
                .iter()
                .map(|r| RunWorld {
                    seed: r.seed,
                    world: &r.world,
                })
                .collect(),
        })
        .collect();
    let worlds_json = dir.join(WORLDS_FILE);
    write_json(&worlds_json, &worlds)?;

    Ok(ResultFiles {
        records_csv,
        summary_json,
        config_json,
        worlds_json,
    })
}
