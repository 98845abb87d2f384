//! Experiment plumbing for the scheduling simulator: config loading, batch
//! execution with persisted ledgers and summaries, and the what-if payment
//! query.
//!
//! Every output is a pure function of (config, seeds): ledgers are JSON
//! lines with full-precision numbers, CSV cells use the shortest exact
//! decimal form, and batch means accumulate in sorted seed order, so
//! re-running a manifest reproduces every file byte for byte.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use fairfedjs_core::domain::{validate_config, JobId, SchedulerKind, SimConfig};
use fairfedjs_core::metrics::{summarize, RunSummary};
use fairfedjs_core::scheduler::{jsi, order_fairfedjs, JsiRow};
use fairfedjs_core::simulator::run_simulation;
use fairfedjs_core::SimError;

/// Config source string that selects the bundled scenario instead of a file.
pub const REFERENCE_CONFIG: &str = "reference";

/// One experiment batch: which config, where to write, and the (scheduler,
/// seed) grid to run.
#[derive(Debug, Clone)]
pub struct ExperimentManifest {
    /// Path to a JSON config, or [`REFERENCE_CONFIG`] for the bundled one.
    pub config_path: String,
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub schedulers: Vec<SchedulerKind>,
}

/// Loads a config from `source`. [`REFERENCE_CONFIG`] builds the bundled
/// scenario; anything else is read as a JSON file, with unknown keys
/// rejected. `seed` replaces the config's own seed when given (the bundled
/// scenario redraws its payments from the new seed).
pub fn resolve_config(source: &str, seed: Option<u64>) -> Result<SimConfig> {
    if source == REFERENCE_CONFIG {
        return Ok(SimConfig::reference(seed.unwrap_or(0)));
    }
    let text = fs::read_to_string(source).with_context(|| format!("reading config {source}"))?;
    let mut config: SimConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing config {source}"))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

/// Checks the config at `source` and returns its violation list (empty when
/// runnable).
pub fn cmd_validate(source: &str) -> Result<Vec<String>> {
    let config = resolve_config(source, None)?;
    Ok(validate_config(&config))
}

/// Runs every (scheduler, seed) cell of the manifest, writing one
/// `ledger_<scheduler>_<seed>.jsonl` per cell plus a `summary.csv` with one
/// row per cell in manifest order.
pub fn cmd_run(manifest: &ExperimentManifest) -> Result<()> {
    run_cells(manifest, false)
}

/// Like [`cmd_run`], and additionally writes `comparison.csv` with one row
/// per scheduler: mean scheduling fairness, mean convergence round (over the
/// seeds that converged; empty if none did), and mean final accuracy over
/// jobs and seeds. Seeds are shared across schedulers, so rows compare
/// paired populations and training draws.
pub fn cmd_compare(manifest: &ExperimentManifest) -> Result<()> {
    run_cells(manifest, true)
}

fn run_cells(manifest: &ExperimentManifest, with_comparison: bool) -> Result<()> {
    if manifest.seeds.is_empty() {
        bail!("manifest needs at least one seed");
    }
    if manifest.schedulers.is_empty() {
        bail!("manifest needs at least one scheduler");
    }

    let base = resolve_config(&manifest.config_path, Some(manifest.seeds[0]))?;
    let violations = validate_config(&base);
    if !violations.is_empty() {
        bail!(
            "invalid config {}: {}",
            manifest.config_path,
            violations.join("; ")
        );
    }
    let num_jobs = base.jobs.len();

    fs::create_dir_all(&manifest.output_dir)
        .with_context(|| format!("creating {}", manifest.output_dir.display()))?;

    // summaries[scheduler][seed], keyed for sorted-seed aggregation.
    let mut summaries: BTreeMap<SchedulerKind, BTreeMap<u64, RunSummary>> = BTreeMap::new();
    let mut summary_rows: Vec<String> = Vec::new();

    for &scheduler in &manifest.schedulers {
        for &seed in &manifest.seeds {
            let mut config = resolve_config(&manifest.config_path, Some(seed))?;
            config.scheduler = scheduler;
            let ledgers = run_simulation(&config)?;

            let path =
                manifest
                    .output_dir
                    .join(format!("ledger_{}_{}.jsonl", scheduler.as_str(), seed));
            write_ledger(&path, &ledgers)?;

            let summary = summarize(
                &ledgers,
                config.convergence_epsilon,
                config.convergence_window,
            )?;
            summary_rows.push(summary_row(scheduler, seed, &summary));
            summaries
                .entry(scheduler)
                .or_default()
                .insert(seed, summary);
        }
    }

    write_summary_csv(
        &manifest.output_dir.join("summary.csv"),
        num_jobs,
        &summary_rows,
    )?;

    if with_comparison {
        write_comparison_csv(
            &manifest.output_dir.join("comparison.csv"),
            &manifest.schedulers,
            &summaries,
        )?;
    }
    Ok(())
}

fn write_ledger(path: &Path, ledgers: &[fairfedjs_core::domain::RoundLedger]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    for ledger in ledgers {
        serde_json::to_writer(&mut out, ledger)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn summary_row(scheduler: SchedulerKind, seed: u64, summary: &RunSummary) -> String {
    let mut cells = vec![
        scheduler.as_str().to_string(),
        seed.to_string(),
        summary.sf.to_string(),
        summary
            .convergence_round
            .map(|r| r.to_string())
            .unwrap_or_default(),
    ];
    cells.extend(summary.final_accuracy.values().map(|a| a.to_string()));
    cells.push(summary.mean_system_utility.to_string());
    cells.push(summary.mean_revenue.to_string());
    cells.join(",")
}

fn write_summary_csv(path: &Path, num_jobs: usize, rows: &[String]) -> Result<()> {
    let mut header = String::from("scheduler,seed,sf,convergence_round");
    for job in 0..num_jobs {
        header.push_str(&format!(",final_acc_job{job}"));
    }
    header.push_str(",mean_system_utility,mean_revenue");

    let mut text = header;
    for row in rows {
        text.push('\n');
        text.push_str(row);
    }
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_comparison_csv(
    path: &Path,
    schedulers: &[SchedulerKind],
    summaries: &BTreeMap<SchedulerKind, BTreeMap<u64, RunSummary>>,
) -> Result<()> {
    let mut text = String::from("scheduler,mean_sf,mean_convergence_round,mean_final_accuracy");
    for scheduler in schedulers {
        let per_seed = &summaries[scheduler];
        let runs = per_seed.len() as f64;

        let mean_sf = per_seed.values().map(|s| s.sf).sum::<f64>() / runs;
        let converged: Vec<f64> = per_seed
            .values()
            .filter_map(|s| s.convergence_round.map(f64::from))
            .collect();
        let mean_convergence = if converged.is_empty() {
            String::new()
        } else {
            (converged.iter().sum::<f64>() / converged.len() as f64).to_string()
        };
        let mean_accuracy = per_seed
            .values()
            .map(|s| s.final_accuracy.values().sum::<f64>() / s.final_accuracy.len() as f64)
            .sum::<f64>()
            / runs;

        text.push_str(&format!(
            "\n{},{},{},{}",
            scheduler.as_str(),
            mean_sf,
            mean_convergence,
            mean_accuracy
        ));
    }
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// A saved scheduling moment: the control weight and one index row per job,
/// enough to recompute the ranking offline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsiSnapshot {
    pub sigma: f64,
    pub jobs: Vec<JsiRow>,
}

/// Reports how `job`'s schedule index and rank would move if its payment
/// were `payment`, against the snapshot at `snapshot_path`. Read-only.
pub fn cmd_whatif(
    snapshot_path: &str,
    job: JobId,
    payment: f64,
    out: &mut impl Write,
) -> Result<()> {
    let text = fs::read_to_string(snapshot_path)
        .with_context(|| format!("reading snapshot {snapshot_path}"))?;
    let snapshot: JsiSnapshot =
        serde_json::from_str(&text).with_context(|| format!("parsing snapshot {snapshot_path}"))?;

    let row = snapshot
        .jobs
        .iter()
        .find(|r| r.job_id == job)
        .ok_or(SimError::UnknownJob(job))?;

    let current = order_fairfedjs(&snapshot.jobs, snapshot.sigma);
    let modified_rows: Vec<JsiRow> = snapshot
        .jobs
        .iter()
        .map(|r| {
            if r.job_id == job {
                JsiRow { payment, ..*r }
            } else {
                *r
            }
        })
        .collect();
    let modified = order_fairfedjs(&modified_rows, snapshot.sigma);

    let rank_of = |order: &[JobId]| {
        order
            .iter()
            .position(|&id| id == job)
            .expect("job is present")
            + 1
    };
    let old_index = jsi(row, snapshot.sigma);
    let new_index = jsi(&JsiRow { payment, ..*row }, snapshot.sigma);

    writeln!(out, "index ranking at sigma = {}:", snapshot.sigma)?;
    for (position, &id) in current.ordered_jobs.iter().enumerate() {
        let value = current.jsi.as_ref().expect("index ordering reports values")[&id];
        writeln!(out, "  rank {}: job {}  index {}", position + 1, id, value)?;
    }
    writeln!(
        out,
        "job {} payment {} -> {}: index {} -> {}, rank {} -> {}",
        job,
        row.payment,
        payment,
        old_index,
        new_index,
        rank_of(&current.ordered_jobs),
        rank_of(&modified.ordered_jobs),
    )?;
    Ok(())
}
