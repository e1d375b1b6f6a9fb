//! Answer-option construction from the distractor taxonomy.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use image::GrayImage;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::render::{fits_cell, render_cell, CellGeometry};
use super::rules::{realize_cell, RuleFamily, RuleParams, RuleSpec};
use super::shape::{Attribute, ShapeKind, ShapeSpec, SlotSet, ROTATIONS};
use super::MatrixItem;
use crate::error::GenError;
use crate::raster::filled;
use crate::simpanel::{vote, PanelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionLabel {
    Correct,
    RepetitionNeighbour,
    IncorrectRule,
    IncompleteRule,
    Random,
}

impl OptionLabel {
    pub const DISTRACTORS: [OptionLabel; 4] = [
        OptionLabel::RepetitionNeighbour,
        OptionLabel::IncorrectRule,
        OptionLabel::IncompleteRule,
        OptionLabel::Random,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub cell: Vec<ShapeSpec>,
    pub label: OptionLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionSet {
    pub options: Vec<OptionSpec>,
    pub answer_index: usize,
}

const JITTER_TRIES: usize = 40;
const RANDOM_TRIES: usize = 400;

struct Builder {
    interior: u32,
    accepted: Vec<(OptionSpec, Vec<u8>)>,
}

impl Builder {
    fn try_add(&mut self, label: OptionLabel, cell: Vec<ShapeSpec>) -> bool {
        if cell.is_empty()
            || !cell.iter().all(|s| s.is_valid() && s.intensity <= super::MAX_INK_INTENSITY)
            || !fits_cell(&cell, self.interior)
        {
            return false;
        }
        let pixels = render_cell(&cell, self.interior, 255).into_raw();
        if self.accepted.iter().any(|(_, p)| *p == pixels) {
            return false;
        }
        self.accepted.push((OptionSpec { cell, label }, pixels));
        true
    }

    fn count(&self, label: OptionLabel) -> usize {
        self.accepted.iter().filter(|(o, _)| o.label == label).count()
    }

    fn full(&self) -> bool {
        self.accepted.len() >= 8
    }
}

/// Builds the correct option plus seven distractors and shuffles them.
///
/// Rejects option sets in which an empty cell would vote for the correct
/// answer, so that no item is solvable without reading the matrix.
pub fn make_distractors(item: &MatrixItem, seed: u64) -> Result<OptionSet, GenError> {
    build_options(&item.rules, &item.base, &item.cells, seed)
}

pub(crate) fn build_options(
    rules: &[RuleSpec],
    base: &[ShapeSpec],
    cells: &[Vec<ShapeSpec>],
    seed: u64,
) -> Result<OptionSet, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = cells[8].clone();
    let mut b = Builder {
        interior: CellGeometry::default().interior(),
        accepted: Vec::with_capacity(8),
    };
    if !b.try_add(OptionLabel::Correct, truth.clone()) {
        return Err(GenError::DegenerateOptions);
    }

    // cell 8 (left neighbour) and cell 6 (neighbour above)
    for src in [&cells[7], &cells[5]] {
        if !b.try_add(OptionLabel::RepetitionNeighbour, src.clone()) {
            for _ in 0..JITTER_TRIES {
                let j = jitter(src, &mut rng);
                if b.try_add(OptionLabel::RepetitionNeighbour, j) {
                    break;
                }
            }
        }
    }

    let mut wrong = incorrect_rule_cells(rules, base);
    wrong.shuffle(&mut rng);
    for cell in wrong {
        if b.count(OptionLabel::IncorrectRule) == 2 {
            break;
        }
        b.try_add(OptionLabel::IncorrectRule, cell);
    }

    let limit = if rules.len() > 1 { 2 } else { 1 };
    let mut partial = incomplete_rule_cells(rules, base);
    partial.shuffle(&mut rng);
    for cell in partial {
        if b.count(OptionLabel::IncompleteRule) == limit || b.full() {
            break;
        }
        b.try_add(OptionLabel::IncompleteRule, cell);
    }

    let overlay = rules.iter().any(|r| r.attribute == Attribute::Overlay);
    let mut tries = 0;
    while !b.full() && tries < RANDOM_TRIES {
        tries += 1;
        let cell = random_perturbation(&truth, overlay, &mut rng);
        b.try_add(OptionLabel::Random, cell);
    }

    if !b.full()
        || b.count(OptionLabel::RepetitionNeighbour) == 0
        || b.count(OptionLabel::IncorrectRule) == 0
    {
        return Err(GenError::DegenerateOptions);
    }

    let interior = b.interior;
    let mut accepted = b.accepted;
    accepted.shuffle(&mut rng);
    let answer_index = accepted
        .iter()
        .position(|(o, _)| o.label == OptionLabel::Correct)
        .expect("correct option present");

    let rendered: Vec<GrayImage> = accepted
        .iter()
        .map(|(_, px)| GrayImage::from_raw(interior, interior, px.clone()).expect("cell-sized buffer"))
        .collect();
    let blank = filled(interior, interior, 255);
    let blank_vote = vote(&blank, &rendered, &PanelConfig::default()).expect("equal cell sizes");
    if blank_vote.choice == answer_index {
        return Err(GenError::BlankSolvable);
    }

    let options = accepted.into_iter().map(|(o, _)| o).collect();
    Ok(OptionSet {
        options,
        answer_index,
    })
}

/// Minimal visible change used when a neighbour repetition coincides with the answer.
fn jitter(cell: &[ShapeSpec], rng: &mut ChaCha8Rng) -> Vec<ShapeSpec> {
    let mut out = cell.to_vec();
    let delta = if rng.random_bool(0.5) { 40 } else { -40 };
    let size_delta = if rng.random_bool(0.5) { 6 } else { -6 };
    let use_size = rng.random_bool(0.5);
    for s in out.iter_mut() {
        if use_size {
            Attribute::Size.set(s, s.size_pct as i32 + size_delta);
        } else {
            let v = s.intensity as i32 + delta;
            if !Attribute::Intensity.set(s, v) {
                Attribute::Intensity.set(s, s.intensity as i32 - delta);
            }
        }
    }
    out
}

/// Answer cells obtained by swapping one rule for a wrong family.
pub(crate) fn incorrect_rule_cells(rules: &[RuleSpec], base: &[ShapeSpec]) -> Vec<Vec<ShapeSpec>> {
    let mut out = Vec::new();
    for (i, rule) in rules.iter().enumerate() {
        for alt in wrong_variants(rule) {
            let mut modified = rules.to_vec();
            modified[i] = alt;
            if let Ok(cell) = realize_cell(&modified, 2, 2, base) {
                out.push(cell);
            }
        }
    }
    out
}

fn wrong_variants(rule: &RuleSpec) -> Vec<RuleSpec> {
    let attr = rule.attribute;
    let axis = rule.axis;
    match (&rule.family, &rule.params) {
        (RuleFamily::Progression, RuleParams::Step { step }) => vec![
            RuleSpec::constant(attr, axis),
            RuleSpec::progression(attr, axis, -step),
            RuleSpec::progression(attr, axis, 2 * step),
        ],
        (RuleFamily::Constant, _) => vec![
            RuleSpec::progression(attr, axis, attr.unit()),
            RuleSpec::progression(attr, axis, -attr.unit()),
        ],
        (RuleFamily::Distribution3, RuleParams::Values { values }) => vec![
            RuleSpec::constant(attr, axis),
            RuleSpec::progression(attr, axis, values[1] - values[0]),
        ],
        (RuleFamily::Addition, RuleParams::Operands { lines }) => {
            vec![RuleSpec::overlay(RuleFamily::Subtraction, axis, *lines)]
        }
        (RuleFamily::Subtraction, RuleParams::Operands { lines }) => {
            vec![RuleSpec::overlay(RuleFamily::Addition, axis, *lines)]
        }
        _ => Vec::new(),
    }
}

/// Answer cells obtained by applying only a strict subset of the rules.
pub(crate) fn incomplete_rule_cells(rules: &[RuleSpec], base: &[ShapeSpec]) -> Vec<Vec<ShapeSpec>> {
    let n = rules.len();
    let full = (1u32 << n) - 1;
    (1..full)
        .filter_map(|bits| {
            let subset: Vec<RuleSpec> = rules
                .iter()
                .enumerate()
                .filter(|(i, _)| bits & (1 << i) != 0)
                .map(|(_, r)| r.clone())
                .collect();
            realize_cell(&subset, 2, 2, base).ok()
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Facet {
    Kind,
    Size,
    Intensity,
    Count,
    Rotation,
    Position,
}

/// Perturbs at least two attributes of the answer cell.
fn random_perturbation(truth: &[ShapeSpec], overlay: bool, rng: &mut ChaCha8Rng) -> Vec<ShapeSpec> {
    let mut facets = vec![
        Facet::Kind,
        Facet::Size,
        Facet::Intensity,
        Facet::Rotation,
        Facet::Position,
    ];
    if !overlay {
        facets.push(Facet::Count);
    }
    facets.shuffle(rng);
    let n = rng.random_range(2..=3);
    let mut out = truth.to_vec();
    for facet in &facets[..n] {
        match facet {
            Facet::Kind => {
                let kind = *ShapeKind::ALL.choose(rng).unwrap();
                out.iter_mut().for_each(|s| s.kind = kind);
            }
            Facet::Size => {
                let d = *[-12, -8, 8, 12].choose(rng).unwrap();
                out.iter_mut().for_each(|s| {
                    Attribute::Size.set(s, s.size_pct as i32 + d);
                });
            }
            Facet::Intensity => {
                let v = rng.random_range(0..=4) * 50;
                out.iter_mut().for_each(|s| s.intensity = v as u8);
            }
            Facet::Count => {
                let c = rng.random_range(1..=4);
                out.iter_mut().for_each(|s| s.count = c);
            }
            Facet::Rotation => {
                let r = *ROTATIONS.choose(rng).unwrap();
                out.iter_mut().for_each(|s| s.rotation = r);
            }
            Facet::Position => {
                if overlay {
                    let slots = SlotSet::from_slots(out.iter().map(|s| s.position));
                    let toggle = rng.random_range(0..9u8);
                    let template = out[0];
                    let next = if slots.contains(toggle) {
                        slots.difference(SlotSet::from_slots([toggle]))
                    } else {
                        slots.union(SlotSet::from_slots([toggle]))
                    };
                    out = next
                        .iter()
                        .map(|position| ShapeSpec {
                            position,
                            ..template
                        })
                        .collect();
                } else {
                    let p = rng.random_range(0..9u8);
                    out.iter_mut().for_each(|s| s.position = p);
                }
            }
        }
    }
    out
}
