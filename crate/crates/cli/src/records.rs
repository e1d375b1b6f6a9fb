//! CSV row types for run outputs.

use std::path::Path;

use anyhow::Context;
use ravenbench::pipeline::{item_solved, modal_choice, RepRecord};
use ravenbench::psychfit::TrialBlock;
use ravenbench::register::RegistrationMode;
use ravenbench::simpanel::Metric;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRow {
    pub item: String,
    pub rank: u32,
    pub rep: usize,
    pub perturbation: String,
    pub magnitude: f64,
    pub substrate_id: String,
    pub converged: bool,
    pub choice: usize,
    pub answer: usize,
    pub correct: bool,
    pub tiebreak: String,
    pub homography: usize,
    pub near_identity: usize,
    pub fallback: usize,
    pub min_inliers: usize,
}

impl RepRow {
    pub fn new(r: &RepRecord) -> Self {
        let count = |mode| r.registrations.iter().filter(|(m, _)| *m == mode).count();
        RepRow {
            item: r.item_id.clone(),
            rank: r.difficulty_rank,
            rep: r.rep,
            perturbation: r.perturbation.kind().to_string(),
            magnitude: r.perturbation.magnitude(),
            substrate_id: r.substrate_id.clone(),
            converged: r.converged,
            choice: r.vote.choice,
            answer: r.answer_index,
            correct: r.correct(),
            tiebreak: r.vote.tiebreak.as_str().to_string(),
            homography: count(RegistrationMode::Homography),
            near_identity: count(RegistrationMode::NearIdentity),
            fallback: count(RegistrationMode::IdentityFallback),
            min_inliers: r.registrations.iter().map(|(_, n)| *n).min().unwrap_or(0),
        }
    }
}

/// One option's metric panel within one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub item: String,
    pub rep: usize,
    pub option: usize,
    pub hd: f64,
    pub mse: f64,
    pub wd: f64,
    pub ergas: f64,
    pub nmi: f64,
    pub win_hd: bool,
    pub win_mse: bool,
    pub win_wd: bool,
    pub win_ergas: bool,
    pub win_nmi: bool,
    pub registration: String,
    pub inliers: usize,
    pub choice: usize,
    pub tiebreak: String,
}

pub fn panel_rows(r: &RepRecord) -> Vec<PanelRow> {
    let won = |m: usize, k: usize| r.vote.winners[m] == k;
    r.vote
        .panels
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let (mode, inliers) = r.registrations[k];
            PanelRow {
                item: r.item_id.clone(),
                rep: r.rep,
                option: k,
                hd: p.get(Metric::Hd),
                mse: p.get(Metric::Mse),
                wd: p.get(Metric::Wd),
                ergas: p.get(Metric::Ergas),
                nmi: p.get(Metric::Nmi),
                win_hd: won(0, k),
                win_mse: won(1, k),
                win_wd: won(2, k),
                win_ergas: won(3, k),
                win_nmi: won(4, k),
                registration: mode.as_str().to_string(),
                inliers,
                choice: r.vote.choice,
                tiebreak: r.vote.tiebreak.as_str().to_string(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemRow {
    pub item: String,
    pub rank: u32,
    pub answer: usize,
    pub modal_choice: usize,
    pub k: u32,
    pub n: u32,
    pub solved: bool,
}

/// Per-item summary of records already grouped by item.
pub fn item_row(records: &[RepRecord], block: &TrialBlock) -> ItemRow {
    let first = &records[0];
    ItemRow {
        item: first.item_id.clone(),
        rank: first.difficulty_rank,
        answer: first.answer_index,
        modal_choice: modal_choice(records).unwrap_or(0),
        k: block.k,
        n: block.n,
        solved: item_solved(records),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub item_rank: f64,
    pub k: u32,
    pub n: u32,
}

impl From<&TrialBlock> for TrialRow {
    fn from(t: &TrialBlock) -> Self {
        TrialRow { item_rank: t.x, k: t.k, n: t.n }
    }
}

impl From<TrialRow> for TrialBlock {
    fn from(t: TrialRow) -> Self {
        TrialBlock { x: t.item_rank, k: t.k, n: t.n }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))
}
