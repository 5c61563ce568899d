//! Experiment execution and file output. Every CSV cell is written with
//! Rust's shortest round-trip float formatting and a decimal dot, so output
//! bytes depend only on (config, seed, library version); the manifest is
//! written last, atomically, once every CSV is in place.

use crate::config::{ExperimentKind, RunConfig};
use anyhow::{Context, Result};
use boolmodel::experiments::{
    bracket_threshold, chain_tail, confined_crossing_curve, crossing_decay, moment_sweep,
    CrossingRow, MomentSweep, TailFit, ThresholdBracket,
};
use boolmodel::SeedPath;
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

pub struct RunOutcome {
    /// File names (relative to the output directory) in write order.
    pub outputs: Vec<String>,
    /// Per-label scalar results, keyed by experiment label.
    pub results: Value,
}

/// Write one file atomically: into a temporary sibling, then rename.
fn write_file(dir: &Path, name: &str, content: &str) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temporary file in {}", dir.display()))?;
    tmp.write_all(content.as_bytes())?;
    tmp.persist(dir.join(name)).with_context(|| format!("writing {name}"))?;
    Ok(())
}

fn chain_tail_csv(fit: &TailFit) -> String {
    let mut out = String::from("n,count,estimate,stderr\n");
    for r in &fit.survival {
        let _ = writeln!(out, "{},{},{},{}", r.n, r.count, r.estimate, r.stderr);
    }
    out
}

fn crossing_csv(rows: &[CrossingRow]) -> String {
    let mut out = String::from("lambda,r,replicates,hits,estimate,stderr\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.lambda, r.r, r.replicates, r.hits, r.estimate, r.stderr
        );
    }
    out
}

fn sweep_batches_csv(sweep: &MomentSweep) -> String {
    let mut out = String::from("group,batch,n,volume_mean,count_mean,diameter_mean\n");
    for r in &sweep.batch_rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.group, r.batch, r.n, r.volume_mean, r.count_mean, r.diameter_mean
        );
    }
    out
}

fn sweep_groups_csv(sweep: &MomentSweep) -> String {
    let mut out = String::from("group,stat,first_half,second_half,ratio,diverged\n");
    for g in &sweep.groups {
        for (stat, s) in
            [("volume", g.volume), ("ball_count", g.ball_count), ("diameter", g.diameter)]
        {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                g.group, stat, s.first_half, s.second_half, s.ratio, s.diverged
            );
        }
    }
    out
}

fn bracket_probes_csv(bracket: &ThresholdBracket) -> String {
    let mut out = String::from("index,lambda,r,replicates,hits,estimate,stderr\n");
    for p in &bracket.trace {
        for r in &p.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                p.index, p.lambda, r.r, r.replicates, r.hits, r.estimate, r.stderr
            );
        }
    }
    out
}

fn bracket_decisions_csv(bracket: &ThresholdBracket) -> String {
    let mut out = String::from(
        "index,lambda,tail_estimate,tail_below,all_below,\
         trend_slope,trend_z,trend_threshold,trend_decreasing,decaying\n",
    );
    for p in &bracket.trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            p.index,
            p.lambda,
            p.tail_estimate,
            p.tail_below,
            p.all_below,
            p.trend.slope,
            p.trend.z,
            p.trend.threshold,
            p.trend.decreasing,
            p.decaying
        );
    }
    out
}

fn confined_csv(rows: &[boolmodel::experiments::ConfinedRow]) -> String {
    let mut out = String::from("alpha,replicates,hits,estimate,stderr\n");
    for r in rows {
        let _ =
            writeln!(out, "{},{},{},{},{}", r.alpha, r.replicates, r.hits, r.estimate, r.stderr);
    }
    out
}

/// Run every experiment in the config and write its CSVs. The caller wraps
/// this in the worker pool and writes the manifest afterwards.
pub fn execute(config: &RunConfig, master_seed: u64, out_dir: &Path) -> Result<RunOutcome> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let params = config.model_params()?;
    let root = SeedPath::root(master_seed);
    let mut outputs = Vec::new();
    let mut results = serde_json::Map::new();

    for (index, entry) in config.experiments.iter().enumerate() {
        let seed = root.child(index as u64);
        let label = &entry.label;
        let mut emit = |name: String, content: String| -> Result<()> {
            write_file(out_dir, &name, &content)?;
            outputs.push(name);
            Ok(())
        };
        let mut summary = match &entry.kind {
            ExperimentKind::ChainTail(c) => {
                let fit = chain_tail(&params, c, &seed)
                    .with_context(|| format!("experiment {label}"))?;
                emit(format!("{label}.csv"), chain_tail_csv(&fit))?;
                json!({
                    "eligible_replicates": fit.eligible_replicates,
                    "censored_fraction": fit.censored_fraction,
                    "rate": fit.rate,
                    "intercept": fit.intercept,
                    "r_squared": fit.r_squared,
                    "fit_lo": fit.fit_range.map(|r| r.0),
                    "fit_hi": fit.fit_range.map(|r| r.1),
                })
            }
            ExperimentKind::CrossingDecay(c) => {
                let rows = crossing_decay(&params, c, &seed)
                    .with_context(|| format!("experiment {label}"))?;
                emit(format!("{label}.csv"), crossing_csv(&rows))?;
                json!({ "rows": rows.len() })
            }
            ExperimentKind::MomentSweep(c) => {
                let sweep = moment_sweep(&params, c, &seed)
                    .with_context(|| format!("experiment {label}"))?;
                emit(format!("{label}.csv"), sweep_batches_csv(&sweep))?;
                emit(format!("{label}_groups.csv"), sweep_groups_csv(&sweep))?;
                json!({
                    "volume_flagged": sweep.volume_flagged,
                    "count_flagged": sweep.count_flagged,
                    "diameter_flagged": sweep.diameter_flagged,
                    "censored_fraction": sweep.censored_fraction,
                })
            }
            ExperimentKind::BracketThreshold(c) => {
                let bracket = bracket_threshold(&params, c, &seed)
                    .with_context(|| format!("experiment {label}"))?;
                emit(format!("{label}_probes.csv"), bracket_probes_csv(&bracket))?;
                emit(format!("{label}_decisions.csv"), bracket_decisions_csv(&bracket))?;
                json!({
                    "lambda_low": bracket.lambda_low,
                    "lambda_high": bracket.lambda_high,
                    "probes": bracket.trace.len(),
                })
            }
            ExperimentKind::ConfinedCrossing(c) => {
                let rows = confined_crossing_curve(&params, c, &seed)
                    .with_context(|| format!("experiment {label}"))?;
                emit(format!("{label}.csv"), confined_csv(&rows))?;
                json!({ "rows": rows.len() })
            }
        };
        if let Value::Object(map) = &mut summary {
            map.insert("kind".into(), json!(entry.kind.name()));
        }
        results.insert(label.clone(), summary);
    }
    Ok(RunOutcome { outputs, results: Value::Object(results) })
}

/// Write `manifest.json` atomically. Called only after `execute` has
/// persisted every CSV, so a manifest on disk certifies a complete run.
pub fn write_manifest(
    out_dir: &Path,
    config: &RunConfig,
    master_seed: u64,
    started_at: &str,
    finished_at: &str,
    wall_seconds: f64,
    outcome: &RunOutcome,
) -> Result<()> {
    let manifest = json!({
        "library_version": boolmodel::VERSION,
        "master_seed": master_seed,
        "started_at": started_at,
        "finished_at": finished_at,
        "wall_seconds": wall_seconds,
        "config": config,
        "outputs": outcome.outputs,
        "results": outcome.results,
    });
    let text = serde_json::to_string_pretty(&manifest)?;
    write_file(out_dir, "manifest.json", &format!("{text}\n"))
}
