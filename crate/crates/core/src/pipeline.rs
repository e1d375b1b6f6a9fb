//! Per-repetition evaluation: perturb, complete, register, vote.

use std::path::Path;
use std::time::Duration;

use image::GrayImage;
use serde::{Deserialize, Serialize};

use crate::error::ExternalError;
use crate::inpaint::{
    inpaint_lattice, inpaint_local, run_external, write_case_dir, InpaintRequest, LatticeConfig,
    LocalConfig,
};
use crate::matrixgen::{render_case, splitmix64, MatrixItem, RasterCase, RenderConfig};
use crate::psychfit::{perturb, PerturbSchedule, Perturbation, TrialBlock};
use crate::raster::{crop, paste};
use crate::register::{estimate, extract_features, Features, RegisterConfig, RegistrationMode};
use crate::simpanel::{panel, vote_panels, PanelConfig, VoteRecord};

pub const DEFAULT_REPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Substrate {
    Local(#[serde(default)] LocalConfig),
    Lattice(#[serde(default)] LatticeConfig),
    /// Pastes the rendered correct option; an upper-bound sanity check.
    Oracle,
    /// Fills the mask with one gray level; a chance-level floor.
    Constant { value: u8 },
    /// Out-of-process in-painter driven through the directory protocol.
    External { command: Vec<String>, timeout_secs: f64 },
}

impl Substrate {
    pub fn name(&self) -> &'static str {
        match self {
            Substrate::Local(_) => "local",
            Substrate::Lattice(_) => "lattice",
            Substrate::Oracle => "oracle",
            Substrate::Constant { .. } => "constant",
            Substrate::External { .. } => "external",
        }
    }

    pub fn is_external(&self) -> bool {
        matches!(self, Substrate::External { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub reps: usize,
    pub seed: u64,
    pub perturb: PerturbSchedule,
    pub register: RegisterConfig,
    pub panel: PanelConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            reps: DEFAULT_REPS,
            seed: 0,
            perturb: PerturbSchedule::default(),
            register: RegisterConfig::default(),
            panel: PanelConfig::default(),
        }
    }
}

/// An item with everything that does not depend on the repetition cached.
pub struct PreparedItem {
    pub index: usize,
    pub item: MatrixItem,
    pub case: RasterCase,
    pub option_features: Vec<Features>,
}

impl PreparedItem {
    pub fn new(index: usize, item: MatrixItem, register: &RegisterConfig) -> Self {
        let case = render_case(&item, &RenderConfig::default());
        let option_features = if register.enabled {
            (0..case.option_cells.len())
                .map(|k| extract_features(&case.completed_with(k), register))
                .collect()
        } else {
            Vec::new()
        };
        PreparedItem {
            index,
            item,
            case,
            option_features,
        }
    }

    pub fn stem(&self) -> &str {
        &self.item.id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub item_index: usize,
    pub item_id: String,
    pub difficulty_rank: u32,
    pub rep: usize,
    pub perturbation: Perturbation,
    pub substrate_id: String,
    pub converged: bool,
    pub vote: VoteRecord,
    /// Registration outcome and inlier count per option.
    pub registrations: Vec<(RegistrationMode, usize)>,
    pub answer_index: usize,
}

impl RepRecord {
    pub fn correct(&self) -> bool {
        self.vote.choice == self.answer_index
    }
}

/// Seed of repetition `rep` of the item at `item_index`.
pub fn rep_seed(seed: u64, item_index: usize, rep: usize) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(item_index as u64 + 1)) ^ (rep as u64 + 1))
}

/// The perturbed puzzle a substrate receives for one repetition.
pub fn perturbed_input(prep: &PreparedItem, rep: usize, cfg: &EvalConfig) -> (Perturbation, GrayImage) {
    let seed = rep_seed(cfg.seed, prep.index, rep);
    let p = cfg.perturb.for_rep(rep, splitmix64(seed ^ 0x5ca1e));
    (p, perturb(&prep.case.image, seed, &p))
}

/// In-process completion of the masked cell. `None` for external substrates.
pub fn fill_in_process(prep: &PreparedItem, input: GrayImage, substrate: &Substrate) -> Option<(GrayImage, String, bool)> {
    let req = || InpaintRequest::new(input.clone(), prep.case.mask.clone()).expect("rendered mask is valid");
    match substrate {
        Substrate::Local(cfg) => {
            let r = inpaint_local(&req(), cfg);
            Some((r.image, r.substrate_id, r.converged))
        }
        Substrate::Lattice(cfg) => {
            let r = inpaint_lattice(&req(), cfg);
            Some((r.image, r.substrate_id, r.converged))
        }
        Substrate::Oracle => {
            let mut img = input;
            let r = prep.case.geometry.answer_rect();
            paste(&mut img, &prep.case.option_cells[prep.item.answer_index], r.x, r.y);
            Some((img, "oracle".to_string(), true))
        }
        Substrate::Constant { value } => {
            let mut img = input;
            let r = prep.case.geometry.answer_rect();
            paste(&mut img, &crate::raster::filled(r.width, r.height, *value), r.x, r.y);
            Some((img, format!("constant:{value}"), true))
        }
        Substrate::External { .. } => None,
    }
}

/// Registers the completed image to every candidate and votes on the
/// answer-region crops.
pub fn score_fill(prep: &PreparedItem, filled: &GrayImage, cfg: &EvalConfig) -> (VoteRecord, Vec<(RegistrationMode, usize)>) {
    let region = prep.case.geometry.answer_rect();
    let source = cfg.register.enabled.then(|| extract_features(filled, &cfg.register));
    let mut panels = Vec::with_capacity(prep.case.option_cells.len());
    let mut regs = Vec::with_capacity(prep.case.option_cells.len());
    for (k, option) in prep.case.option_cells.iter().enumerate() {
        let aligned = match &source {
            Some(src) => {
                let reg = estimate(src, &prep.option_features[k], &cfg.register);
                regs.push((reg.mode, reg.inliers));
                reg.aligned_region(filled, region)
            }
            None => {
                regs.push((RegistrationMode::IdentityFallback, 0));
                crop(filled, region)
            }
        };
        panels.push(panel(&aligned, option, &cfg.panel).expect("crop matches option size"));
    }
    (vote_panels(panels), regs)
}

/// One in-process repetition.
pub fn run_repetition(prep: &PreparedItem, substrate: &Substrate, rep: usize, cfg: &EvalConfig) -> Option<RepRecord> {
    let (perturbation, input) = perturbed_input(prep, rep, cfg);
    let (filled, substrate_id, converged) = fill_in_process(prep, input, substrate)?;
    Some(record(prep, rep, perturbation, &filled, substrate_id, converged, cfg))
}

fn record(
    prep: &PreparedItem,
    rep: usize,
    perturbation: Perturbation,
    filled: &GrayImage,
    substrate_id: String,
    converged: bool,
    cfg: &EvalConfig,
) -> RepRecord {
    let (vote, registrations) = score_fill(prep, filled, cfg);
    RepRecord {
        item_index: prep.index,
        item_id: prep.item.id.clone(),
        difficulty_rank: prep.item.difficulty_rank,
        rep,
        perturbation,
        substrate_id,
        converged,
        vote,
        registrations,
        answer_index: prep.item.answer_index,
    }
}

/// Runs one repetition of every item through an external in-painter using a
/// case directory under `work_dir`.
pub fn run_external_rep(
    items: &[PreparedItem],
    command: &[String],
    timeout: Duration,
    rep: usize,
    work_dir: &Path,
    cfg: &EvalConfig,
) -> Result<Vec<RepRecord>, ExternalError> {
    let dir = work_dir.join(format!("rep_{rep:03}"));
    let inputs: Vec<(Perturbation, GrayImage)> = items.iter().map(|p| perturbed_input(p, rep, cfg)).collect();
    let listing: Vec<(String, &GrayImage, &crate::raster::Mask)> = items
        .iter()
        .zip(&inputs)
        .map(|(p, (_, img))| (p.stem().to_string(), img, &p.case.mask))
        .collect();
    write_case_dir(&dir, &listing)?;
    let results = run_external(&dir, command, timeout)?;
    items
        .iter()
        .zip(inputs)
        .map(|(p, (perturbation, _))| {
            let r = results
                .get(p.stem())
                .ok_or_else(|| ExternalError::MissingResult(p.stem().to_string()))?;
            Ok(record(p, rep, perturbation, &r.image, r.substrate_id.clone(), r.converged, cfg))
        })
        .collect()
}

/// All repetitions of one item, in order, with the success count.
pub fn run_repetitions(
    prep: &PreparedItem,
    substrate: &Substrate,
    cfg: &EvalConfig,
    work_dir: &Path,
) -> Result<(TrialBlock, Vec<RepRecord>), ExternalError> {
    let records: Vec<RepRecord> = match substrate {
        Substrate::External { command, timeout_secs } => {
            let mut out = Vec::with_capacity(cfg.reps);
            for rep in 0..cfg.reps {
                let dir = work_dir.join(prep.stem());
                out.extend(run_external_rep(
                    std::slice::from_ref(prep),
                    command,
                    Duration::from_secs_f64(*timeout_secs),
                    rep,
                    &dir,
                    cfg,
                )?);
            }
            out
        }
        _ => (0..cfg.reps)
            .map(|rep| run_repetition(prep, substrate, rep, cfg).expect("in-process substrate"))
            .collect(),
    };
    Ok((trial_block(prep.item.difficulty_rank, &records), records))
}

/// Success count of the given records at one difficulty rank.
pub fn trial_block(rank: u32, records: &[RepRecord]) -> TrialBlock {
    TrialBlock {
        x: rank as f64,
        k: records.iter().filter(|r| r.correct()).count() as u32,
        n: records.len() as u32,
    }
}

/// An item counts as solved when the modal choice across its repetitions is
/// the correct option (lowest option index on a tied mode).
pub fn item_solved(records: &[RepRecord]) -> bool {
    modal_choice(records).zip(records.first()).is_some_and(|(m, r)| m == r.answer_index)
}

pub fn modal_choice(records: &[RepRecord]) -> Option<usize> {
    let n = records.first()?.vote.panels.len();
    let mut counts = vec![0usize; n];
    for r in records {
        counts[r.vote.choice] += 1;
    }
    let top = *counts.iter().max()?;
    counts.iter().position(|&c| c == top)
}
