//! The remaining subcommands: `generate`, `psych`, `errors`, `compare`, `report`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use ravenbench::errstats::{build_error_grid, grid_tests, model_error_overlap, ErrorGrid, Participant, ResponseTable};
use ravenbench::matrixgen::{generate_battery, DifficultyProfile};
use ravenbench::psychfit::{Interval, TrialBlock};
use serde::{Deserialize, Serialize};

use crate::battery::{write_images, write_manifest, BatteryManifest};
use crate::config::RunConfig;
use crate::evaluate::{write_psych_plot, RunReport, CONFIG_COPY, POSTERIOR_FILE, PSYCH_PLOT, REPORT_FILE, TRIALS_FILE};
use crate::failure::{CliResult, Classify, Failure};
use crate::plot::{error_grid_svg, psychometric_svg};
use crate::records::{read_csv, read_json, write_csv, write_json, TrialRow};
use crate::summary::{disjoint, right_of, summarize, PosteriorSummary};

pub const ERROR_GRIDS_FILE: &str = "error_grids.json";
pub const ERROR_GRID_CSV: &str = "error_grid.csv";
pub const CELL_TESTS_FILE: &str = "cell_tests.csv";
pub const OVERLAP_FILE: &str = "overlap.json";
pub const COMPARISON_FILE: &str = "comparison.json";
pub const COMPARISON_PLOT: &str = "comparison.svg";
pub const MODEL_GROUP: &str = "model";

/// Writes a battery (manifest and PNGs) and returns the manifest hash.
pub fn generate(seed: u64, items: usize, out: &Path) -> CliResult<String> {
    if items == 0 {
        return Err(Failure::config(anyhow!("--items must be at least 1")));
    }
    let battery = generate_battery(seed, items, &DifficultyProfile::default_for(items))
        .context("generating battery")
        .or_stage()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).or_stage()?;
    write_images(out, &battery).or_stage()?;
    write_manifest(out, &BatteryManifest::new(seed, battery)).or_stage()
}

fn load_report(run: &Path) -> CliResult<RunReport> {
    read_json(&run.join(REPORT_FILE)).or_config()
}

/// Refits the psychometric function from `trials.csv` using the run's grid.
pub fn psych(run: &Path) -> CliResult<Option<PosteriorSummary>> {
    let (cfg, _) = RunConfig::load(&run.join(CONFIG_COPY))?;
    let rows: Vec<TrialRow> = read_csv(&run.join(TRIALS_FILE)).or_config()?;
    let blocks: Vec<TrialBlock> = rows.into_iter().map(TrialBlock::from).collect();
    match summarize(&blocks, &cfg.psych) {
        Ok(s) => {
            write_json(&run.join(POSTERIOR_FILE), &s).or_stage()?;
            write_psych_plot(run, cfg.substrate.name(), &s).or_stage()?;
            Ok(Some(s))
        }
        Err(reason) => {
            eprintln!("notice: {reason}; psychometric fit and plot omitted");
            Ok(None)
        }
    }
}

/// Redraws the run's figures from its saved outputs.
pub fn report(run: &Path) -> CliResult<Vec<PathBuf>> {
    let report = load_report(run)?;
    let mut written = Vec::new();
    let posterior = run.join(POSTERIOR_FILE);
    if posterior.exists() {
        let s: PosteriorSummary = read_json(&posterior).or_config()?;
        if write_psych_plot(run, &report.substrate, &s).or_stage()? {
            written.push(run.join(PSYCH_PLOT));
        }
    } else {
        eprintln!("notice: no psychometric fit in {}; plot omitted", run.display());
    }
    let grids = run.join(ERROR_GRIDS_FILE);
    if grids.exists() {
        let groups: Vec<(String, ErrorGrid)> = read_json(&grids).or_config()?;
        for (group, grid) in &groups {
            let path = run.join(grid_plot_name(group));
            std::fs::write(&path, error_grid_svg(group, grid)).or_stage()?;
            written.push(path);
        }
    }
    Ok(written)
}

fn grid_plot_name(group: &str) -> String {
    let safe: String = group
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("error_grid_{safe}.svg")
}

/// Reads a cohort CSV: `participant_id, group, age, education_years,
/// premorbid_score, sex, item_1..item_N` with chosen options 0..7.
pub struct Cohort {
    pub participants: Vec<Participant>,
    /// Rows with one or more blank item responses, left out of every analysis.
    pub excluded: usize,
}

pub fn read_cohort(path: &Path, n_items: usize) -> anyhow::Result<Cohort> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| anyhow!("cohort is missing column {name}"))
    };
    let fixed = ["participant_id", "group", "age", "education_years", "premorbid_score", "sex"]
        .map(|c| col(c));
    let fixed: Vec<usize> = fixed.into_iter().collect::<Result<_, _>>()?;
    let item_cols: Vec<usize> = (1..=n_items).map(|i| col(&format!("item_{i}"))).collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    let mut excluded = 0;
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        if item_cols.iter().any(|&c| field(c).is_empty()) {
            excluded += 1;
            continue;
        }
        let number = |i: usize, name: &str| {
            field(i)
                .parse::<f64>()
                .with_context(|| format!("row {}: {name} is not a number", line + 1))
        };
        let responses = item_cols
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                field(c)
                    .parse::<u8>()
                    .with_context(|| format!("row {}: item_{} is not an option index", line + 1, k + 1))
            })
            .collect::<Result<Vec<u8>, _>>()?;
        out.push(Participant {
            participant_id: field(fixed[0]).to_string(),
            group: field(fixed[1]).to_string(),
            age: number(fixed[2], "age")?,
            education_years: number(fixed[3], "education_years")?,
            premorbid_score: number(fixed[4], "premorbid_score")?,
            sex: field(fixed[5]).to_string(),
            responses,
        });
    }
    Ok(Cohort {
        participants: out,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub group: String,
    pub row: usize,
    pub item: usize,
    pub col: usize,
    pub option: usize,
    pub count: u64,
    pub group_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTestRow {
    pub group: String,
    pub reference: String,
    pub item: usize,
    pub option: usize,
    pub row: usize,
    pub col: usize,
    pub z: f64,
    pub p: f64,
    pub p_adjusted: f64,
    pub rejected: bool,
    pub family_size: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapOutput {
    pub substrate: String,
    pub report: Option<ravenbench::errstats::OverlapReport>,
    pub notice: Option<String>,
}

fn overlap_output(report: &RunReport, key: &[u8], cohort: &[Participant], alpha: f64) -> CliResult<OverlapOutput> {
    match model_error_overlap(&report.model_choices(), key, cohort, alpha) {
        Ok(r) => Ok(OverlapOutput { substrate: report.substrate.clone(), report: Some(r), notice: None }),
        Err(ravenbench::StatsError::NoModelErrors) => Ok(OverlapOutput {
            substrate: report.substrate.clone(),
            report: None,
            notice: Some("the model made no errors; overlap partition undefined".to_string()),
        }),
        Err(e) => Err(Failure::config(e)),
    }
}

#[derive(Debug, Clone)]
pub struct ErrorsOutcome {
    pub reference: String,
    pub groups: Vec<String>,
    pub rejected_cells: usize,
    pub excluded_participants: usize,
}

/// Error grids per cohort group and for the model's modal choices, per-cell
/// tests of every group against the reference group, and the model/cohort
/// error-overlap analysis.
pub fn errors(run: &Path, cohort_path: &Path, reference: Option<&str>, alpha: Option<f64>) -> CliResult<ErrorsOutcome> {
    let report = load_report(run)?;
    let (manifest, _) = BatteryManifest::load(run).or_config()?;
    let (cfg, _) = RunConfig::load(&run.join(CONFIG_COPY))?;
    let alpha = alpha.unwrap_or(cfg.alpha);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Failure::config(anyhow!("alpha must lie in (0, 1)")));
    }
    let key = manifest.answer_key();
    let n = key.len();
    let Cohort { participants: cohort, excluded } = read_cohort(cohort_path, n).or_config()?;
    let groups: BTreeSet<&str> = cohort.iter().map(|p| p.group.as_str()).collect();
    let reference = match reference {
        Some(r) if groups.contains(r) => r.to_string(),
        Some(r) => return Err(Failure::config(anyhow!("reference group {r} not present in cohort"))),
        None if groups.contains("control") => "control".to_string(),
        None => groups
            .iter()
            .next()
            .map(|g| g.to_string())
            .ok_or_else(|| Failure::config(anyhow!("cohort is empty")))?,
    };
    let table_of = |group: &str| -> CliResult<ResponseTable> {
        let rows = cohort.iter().filter(|p| p.group == group).map(|p| p.responses.clone()).collect();
        ResponseTable::new(n, rows).or_config()
    };
    let ref_table = table_of(&reference)?;
    let mut tables: Vec<(String, ResponseTable)> = Vec::new();
    for g in &groups {
        tables.push((g.to_string(), table_of(g)?));
    }
    tables.push((MODEL_GROUP.to_string(), ResponseTable::new(n, vec![report.model_choices()]).or_config()?));

    let mut grids = Vec::new();
    for (g, t) in &tables {
        grids.push((g.clone(), build_error_grid(t, &ref_table, &key).or_stage()?));
    }
    let ref_grid = &grids.iter().find(|(g, _)| *g == reference).expect("reference grid").1;
    let mut grid_rows = Vec::new();
    let mut test_rows = Vec::new();
    for (g, grid) in &grids {
        for (row, counts) in grid.counts.iter().enumerate() {
            let item = grid.item_order[row];
            for (col, &count) in counts.iter().enumerate() {
                grid_rows.push(GridRow {
                    group: g.clone(),
                    row,
                    item,
                    col,
                    option: grid.option_order[item][col],
                    count,
                    group_size: grid.group_size,
                });
            }
        }
        if *g == reference || grid.group_size == 0 {
            continue;
        }
        let tests = grid_tests(grid, ref_grid, alpha).or_stage()?;
        for c in &tests.cells {
            test_rows.push(CellTestRow {
                group: g.clone(),
                reference: reference.clone(),
                item: c.item,
                option: c.option,
                row: c.row,
                col: c.col,
                z: c.z,
                p: c.p,
                p_adjusted: c.p_adjusted,
                rejected: c.rejected,
                family_size: tests.family_size,
                skipped: tests.skipped,
            });
        }
    }
    write_csv(&run.join(ERROR_GRID_CSV), &grid_rows).or_stage()?;
    write_csv(&run.join(CELL_TESTS_FILE), &test_rows).or_stage()?;
    write_json(&run.join(ERROR_GRIDS_FILE), &grids).or_stage()?;
    for (g, grid) in &grids {
        std::fs::write(run.join(grid_plot_name(g)), error_grid_svg(g, grid)).or_stage()?;
    }
    let overlap = overlap_output(&report, &key, &cohort, alpha)?;
    write_json(&run.join(OVERLAP_FILE), &overlap).or_stage()?;
    Ok(ErrorsOutcome {
        reference,
        groups: grids.into_iter().map(|(g, _)| g).collect(),
        rejected_cells: test_rows.iter().filter(|r| r.rejected).count(),
        excluded_participants: excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSide {
    pub label: String,
    pub substrate: String,
    pub score: usize,
    pub n_items: usize,
    pub threshold: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemDiff {
    pub item: String,
    pub answer: usize,
    pub a_choice: usize,
    pub b_choice: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub manifest_sha256: String,
    pub a: RunSide,
    pub b: RunSide,
    pub thresholds_disjoint: bool,
    pub a_right_of_b: bool,
    /// Items where the two runs' modal choices differ.
    pub choice_diffs: Vec<ItemDiff>,
    pub overlap: Option<(OverlapOutput, OverlapOutput)>,
}

#[derive(Debug, thiserror::Error)]
#[error("runs used different batteries ({a} vs {b})")]
pub struct BatteryMismatch {
    pub a: String,
    pub b: String,
}

fn side(run: &Path, report: &RunReport) -> RunSide {
    let dir = run
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| report.substrate.clone());
    RunSide {
        label: dir,
        substrate: report.substrate.clone(),
        score: report.score,
        n_items: report.n_items,
        threshold: report.threshold,
    }
}

/// Side-by-side thresholds and choice differences of two runs on the same
/// battery; with a cohort, the overlap analysis for both.
pub fn compare(a: &Path, b: &Path, cohort: Option<&Path>, out: Option<&Path>) -> CliResult<Comparison> {
    let (ra, rb) = (load_report(a)?, load_report(b)?);
    let (ha, hb) = (&ra.provenance.manifest_sha256, &rb.provenance.manifest_sha256);
    if ha != hb {
        return Err(Failure::stage(BatteryMismatch { a: ha.clone(), b: hb.clone() }));
    }
    let choice_diffs = ra
        .items
        .iter()
        .zip(&rb.items)
        .filter(|(x, y)| x.modal_choice != y.modal_choice)
        .map(|(x, y)| ItemDiff {
            item: x.item.clone(),
            answer: x.answer,
            a_choice: x.modal_choice,
            b_choice: y.modal_choice,
        })
        .collect();
    let overlap = match cohort {
        Some(path) => {
            let (manifest, _) = BatteryManifest::load(a).or_config()?;
            let key = manifest.answer_key();
            let (cfg, _) = RunConfig::load(&a.join(CONFIG_COPY))?;
            let people = read_cohort(path, key.len()).or_config()?.participants;
            Some((
                overlap_output(&ra, &key, &people, cfg.alpha)?,
                overlap_output(&rb, &key, &people, cfg.alpha)?,
            ))
        }
        None => None,
    };
    let cmp = Comparison {
        manifest_sha256: ha.clone(),
        a: side(a, &ra),
        b: side(b, &rb),
        thresholds_disjoint: disjoint(ra.threshold.as_ref(), rb.threshold.as_ref()),
        a_right_of_b: right_of(ra.threshold.as_ref(), rb.threshold.as_ref()),
        choice_diffs,
        overlap,
    };
    if let Some(out) = out {
        std::fs::create_dir_all(out).or_stage()?;
        write_json(&out.join(COMPARISON_FILE), &cmp).or_stage()?;
        let summaries: Vec<(String, PosteriorSummary)> = [(a, &cmp.a), (b, &cmp.b)]
            .iter()
            .filter_map(|(dir, s)| {
                read_json::<PosteriorSummary>(&dir.join(POSTERIOR_FILE)).ok().map(|p| (s.label.clone(), p))
            })
            .collect();
        let series: Vec<(&str, &PosteriorSummary)> = summaries.iter().map(|(l, s)| (l.as_str(), s)).collect();
        match psychometric_svg(&series) {
            Some(svg) => std::fs::write(out.join(COMPARISON_PLOT), svg).or_stage()?,
            None => eprintln!("notice: no psychometric fits to plot"),
        }
    }
    Ok(cmp)
}

pub fn parse_alpha(s: &str) -> anyhow::Result<f64> {
    let a: f64 = s.parse()?;
    if !(a > 0.0 && a < 1.0) {
        bail!("alpha must lie in (0, 1)");
    }
    Ok(a)
}
