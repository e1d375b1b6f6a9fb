//! The `evaluate` pipeline: generate, complete, register, vote, fit.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use ravenbench::matrixgen::{generate_battery, DifficultyProfile};
use ravenbench::pipeline::{run_external_rep, run_repetition, trial_block, PreparedItem, RepRecord, Substrate};
use ravenbench::psychfit::{Interval, PsychWarning, TrialBlock};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::battery::{sha256_hex, write_manifest, BatteryManifest};
use crate::config::RunConfig;
use crate::failure::{CliResult, Classify, Failure};
use crate::plot::psychometric_svg;
use crate::records::{item_row, panel_rows, write_csv, write_json, ItemRow, RepRow, TrialRow};
use crate::summary::{summarize, PosteriorSummary};

pub const CONFIG_COPY: &str = "config.toml";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const REPORT_FILE: &str = "report.json";
pub const POSTERIOR_FILE: &str = "posterior.json";
pub const TRIALS_FILE: &str = "trials.csv";
pub const ITEMS_FILE: &str = "items.csv";
pub const REPS_FILE: &str = "reps.csv";
pub const RESULTS_FILE: &str = "results.csv";
pub const PSYCH_PLOT: &str = "psychometric.svg";
pub const FAILED_MARKER: &str = "FAILED";
pub const CASES_DIR: &str = "cases";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub manifest_sha256: String,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(manifest_sha256: String, config_bytes: &[u8]) -> Self {
        Provenance {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            manifest_sha256,
            config_sha256: sha256_hex(config_bytes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub substrate: String,
    pub seed: u64,
    pub reps: usize,
    pub score: usize,
    pub n_items: usize,
    pub items: Vec<ItemRow>,
    pub trials: Vec<TrialRow>,
    pub threshold: Option<Interval>,
    pub warnings: Vec<PsychWarning>,
    /// Why no psychometric fit was produced, when it was not.
    pub psych_notice: Option<String>,
    pub files: Vec<String>,
}

impl RunReport {
    pub fn score_line(&self) -> String {
        format!("{} / {}", self.score, self.n_items)
    }

    pub fn model_choices(&self) -> Vec<u8> {
        self.items.iter().map(|i| i.modal_choice as u8).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Runs `evaluate` for the config at `path`. On failure after the output
/// directory exists, a `FAILED` marker holding the error is left beside any
/// partial outputs.
pub fn evaluate(path: &Path, overrides: &Overrides) -> CliResult<(PathBuf, RunReport)> {
    let (cfg, bytes) = RunConfig::load(path)?;
    let out_dir = overrides
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| Failure::config(anyhow!("no output directory: set out_dir or pass --out")))?;
    if overrides.workers == Some(0) {
        return Err(Failure::config(anyhow!("workers must be at least 1")));
    }
    let workers = overrides
        .workers
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))
        .or_stage()?;
    let marker = out_dir.join(FAILED_MARKER);
    let _ = std::fs::remove_file(&marker);
    match run(&cfg, &bytes, &out_dir, workers) {
        Ok(report) => Ok((out_dir, report)),
        Err(f) => {
            let _ = std::fs::write(&marker, format!("exit {}\n{}\n", f.code, f));
            Err(f)
        }
    }
}

fn run(cfg: &RunConfig, config_bytes: &[u8], out: &Path, workers: usize) -> CliResult<RunReport> {
    std::fs::write(out.join(CONFIG_COPY), config_bytes).or_stage()?;
    let battery = generate_battery(cfg.seed, cfg.items, &DifficultyProfile::default_for(cfg.items))
        .context("generating battery")
        .or_stage()?;
    let manifest = BatteryManifest::new(cfg.seed, battery);
    let manifest_sha = write_manifest(out, &manifest).or_stage()?;
    let provenance = Provenance::new(manifest_sha, config_bytes);
    write_json(&out.join(PROVENANCE_FILE), &provenance).or_stage()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("starting worker pool")
        .or_stage()?;
    let eval = cfg.eval_config();
    let records = pool.install(|| {
        let prepared: Vec<PreparedItem> = manifest
            .items
            .par_iter()
            .enumerate()
            .map(|(i, item)| PreparedItem::new(i, item.clone(), &eval.register))
            .collect();
        match &cfg.substrate {
            Substrate::External { command, timeout_secs } => {
                let timeout = Duration::from_secs_f64(*timeout_secs);
                let cases = out.join(CASES_DIR);
                let per_rep: Vec<Vec<RepRecord>> = (0..eval.reps)
                    .into_par_iter()
                    .map(|rep| run_external_rep(&prepared, command, timeout, rep, &cases, &eval))
                    .collect::<Result<_, _>>()
                    .map_err(|e| Failure::external(anyhow!(e).context("external substrate")))?;
                let mut records: Vec<RepRecord> = per_rep.into_iter().flatten().collect();
                records.sort_by_key(|r| (r.item_index, r.rep));
                Ok::<_, Failure>(records)
            }
            substrate => {
                let units: Vec<(usize, usize)> = (0..prepared.len())
                    .flat_map(|i| (0..eval.reps).map(move |rep| (i, rep)))
                    .collect();
                Ok(units
                    .par_iter()
                    .map(|&(i, rep)| run_repetition(&prepared[i], substrate, rep, &eval).expect("in-process substrate"))
                    .collect())
            }
        }
    })?;

    let by_item: Vec<&[RepRecord]> = records.chunk_by(|a, b| a.item_index == b.item_index).collect();
    let blocks: Vec<TrialBlock> = by_item.iter().map(|r| trial_block(r[0].difficulty_rank, r)).collect();
    let items: Vec<ItemRow> = by_item.iter().zip(&blocks).map(|(r, b)| item_row(r, b)).collect();
    let trials: Vec<TrialRow> = blocks.iter().map(TrialRow::from).collect();

    write_csv(&out.join(REPS_FILE), records.iter().map(RepRow::new)).or_stage()?;
    write_csv(&out.join(RESULTS_FILE), records.iter().flat_map(panel_rows)).or_stage()?;
    write_csv(&out.join(ITEMS_FILE), &items).or_stage()?;
    write_csv(&out.join(TRIALS_FILE), &trials).or_stage()?;

    let mut files: Vec<String> = [CONFIG_COPY, crate::battery::MANIFEST_FILE, PROVENANCE_FILE, REPS_FILE, RESULTS_FILE, ITEMS_FILE, TRIALS_FILE]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let (summary, psych_notice) = match summarize(&blocks, &cfg.psych) {
        Ok(s) => (Some(s), None),
        Err(reason) => (None, Some(reason)),
    };
    if let Some(s) = &summary {
        write_json(&out.join(POSTERIOR_FILE), s).or_stage()?;
        files.push(POSTERIOR_FILE.to_string());
        if write_psych_plot(out, cfg.substrate.name(), s).or_stage()? {
            files.push(PSYCH_PLOT.to_string());
        }
    }
    files.push(REPORT_FILE.to_string());

    let report = RunReport {
        provenance,
        substrate: cfg.substrate.name().to_string(),
        seed: cfg.seed,
        reps: cfg.reps,
        score: items.iter().filter(|i| i.solved).count(),
        n_items: items.len(),
        items,
        trials,
        threshold: summary.as_ref().and_then(|s| s.threshold),
        warnings: summary.as_ref().map(|s| s.warnings.clone()).unwrap_or_default(),
        psych_notice,
        files,
    };
    write_json(&out.join(REPORT_FILE), &report).or_stage()?;
    Ok(report)
}

/// Writes `psychometric.svg`; false when there was nothing to draw.
pub fn write_psych_plot(out: &Path, label: &str, summary: &PosteriorSummary) -> anyhow::Result<bool> {
    match psychometric_svg(&[(label, summary)]) {
        Some(svg) => {
            std::fs::write(out.join(PSYCH_PLOT), svg)?;
            Ok(true)
        }
        None => Ok(false),
    }
}
