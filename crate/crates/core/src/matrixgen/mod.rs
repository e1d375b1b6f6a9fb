//! Procedural 3×3 matrix puzzles with controlled difficulty.
//!
//! Difficulty is the number of interacting rules (1..=3). Rules are drawn
//! from a fixed schedule: single-rule items are one progression, two-rule
//! items add a second progression along the same axis, and three-rule items
//! add a compositional rule (overlay addition/subtraction or a three-value
//! distribution) on top of two progressions.

mod distractors;
mod render;
mod rules;
mod shape;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use distractors::{make_distractors, OptionLabel, OptionSet, OptionSpec};
pub use render::{
    fits_cell, render_case, render_cell, render_completed, CellGeometry, RasterCase, RenderConfig,
    IMAGE_SIZE,
};
pub use rules::{realize_cell, realize_grid, validate_rules, Axis, RuleFamily, RuleParams, RuleSpec};
pub use shape::{Attribute, ShapeKind, ShapeSpec, SlotSet, ROTATIONS};

use crate::error::GenError;

/// Darkest-to-lightest cap for drawn figures so they stay visible on white.
pub const MAX_INK_INTENSITY: u8 = 200;
pub const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "plan", content = "rules")]
pub enum ItemPlan {
    /// A single constant rule: all nine cells identical.
    ConstantOnly,
    /// This many rules (1..=3).
    Rules(u8),
}

impl ItemPlan {
    pub fn rule_count(self) -> u8 {
        match self {
            ItemPlan::ConstantOnly => 1,
            ItemPlan::Rules(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyProfile {
    pub plans: Vec<ItemPlan>,
}

impl DifficultyProfile {
    /// Equal thirds of one, two and three rules.
    pub fn default_for(n_items: usize) -> Self {
        let plans = (0..n_items)
            .map(|i| ItemPlan::Rules(1 + (3 * i / n_items.max(1)) as u8))
            .collect();
        DifficultyProfile { plans }
    }

    pub fn constant_only(n_items: usize) -> Self {
        DifficultyProfile {
            plans: vec![ItemPlan::ConstantOnly; n_items],
        }
    }

    fn validate(&self, n_items: usize) -> Result<(), GenError> {
        if n_items == 0 {
            return Err(GenError::NoItems);
        }
        if self.plans.len() != n_items {
            return Err(GenError::ProfileLength {
                profile: self.plans.len(),
                requested: n_items,
            });
        }
        for (index, plan) in self.plans.iter().enumerate() {
            let rules = plan.rule_count();
            if rules > 3 {
                return Err(GenError::TooManyRules { index, rules });
            }
            if rules == 0 {
                return Err(GenError::InvalidRules(format!("entry {index} has no rules")));
            }
            if index > 0 && rules < self.plans[index - 1].rule_count() {
                return Err(GenError::NonMonotoneProfile { index });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixItem {
    pub id: String,
    pub seed: u64,
    pub plan: ItemPlan,
    pub difficulty_rank: u32,
    pub rules: Vec<RuleSpec>,
    pub base: Vec<ShapeSpec>,
    /// Row-major; `cells[8]` is the ground-truth answer.
    pub cells: Vec<Vec<ShapeSpec>>,
    pub options: Vec<OptionSpec>,
    pub answer_index: usize,
}

impl MatrixItem {
    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th item (0-based) of a battery.
pub fn item_seed(battery_seed: u64, index: usize) -> u64 {
    splitmix64(battery_seed ^ splitmix64(index as u64 + 1))
}

pub fn item_id(index: usize) -> String {
    format!("item_{:03}", index + 1)
}

pub fn generate_battery(
    seed: u64,
    n_items: usize,
    profile: &DifficultyProfile,
) -> Result<Vec<MatrixItem>, GenError> {
    profile.validate(n_items)?;
    profile
        .plans
        .iter()
        .enumerate()
        .map(|(index, &plan)| {
            generate_item(&item_id(index), item_seed(seed, index), plan, index as u32 + 1)
                .map_err(|e| match e {
                    GenError::Unsatisfiable { attempts, .. } => GenError::Unsatisfiable {
                        item_index: index,
                        attempts,
                    },
                    other => other,
                })
        })
        .collect()
}

/// Regenerates a single item; identical inputs give an identical item.
pub fn generate_item(
    id: &str,
    seed: u64,
    plan: ItemPlan,
    difficulty_rank: u32,
) -> Result<MatrixItem, GenError> {
    if plan.rule_count() == 0 || plan.rule_count() > 3 {
        return Err(GenError::TooManyRules {
            index: difficulty_rank.saturating_sub(1) as usize,
            rules: plan.rule_count(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let (rules, base) = draw_design(plan, &mut rng);
        let option_seed = rng.random::<u64>();
        if let Ok(item) = assemble_item(id, seed, plan, difficulty_rank, rules, base, option_seed) {
            return Ok(item);
        }
    }
    Err(GenError::Unsatisfiable {
        item_index: difficulty_rank.saturating_sub(1) as usize,
        attempts: MAX_ATTEMPTS,
    })
}

/// Builds an item from an explicit design: realizes the grid, checks layout
/// and visibility, and constructs the options.
pub fn assemble_item(
    id: &str,
    seed: u64,
    plan: ItemPlan,
    difficulty_rank: u32,
    rules: Vec<RuleSpec>,
    base: Vec<ShapeSpec>,
    option_seed: u64,
) -> Result<MatrixItem, GenError> {
    validate_rules(&rules)?;
    let cells = realize_grid(&rules, &base)?;
    let interior = CellGeometry::default().interior();
    for (i, cell) in cells.iter().enumerate() {
        let visible = cell.iter().all(|s| s.intensity <= MAX_INK_INTENSITY);
        if cell.is_empty() || !visible || !fits_cell(cell, interior) {
            return Err(GenError::OutOfRange {
                attribute: "layout",
                row: i / 3,
                col: i % 3,
            });
        }
    }
    let set = distractors::build_options(&rules, &base, &cells, option_seed)?;
    Ok(MatrixItem {
        id: id.to_string(),
        seed,
        plan,
        difficulty_rank,
        rules,
        base,
        cells,
        options: set.options,
        answer_index: set.answer_index,
    })
}

enum Hard {
    Overlay(RuleFamily),
    Distribution(Attribute),
}

fn draw_design(plan: ItemPlan, rng: &mut ChaCha8Rng) -> (Vec<RuleSpec>, Vec<ShapeSpec>) {
    let kind = *ShapeKind::ALL.choose(rng).unwrap();
    let axis = if rng.random_bool(0.5) { Axis::Row } else { Axis::Column };
    let mut avail: Vec<Attribute> = Attribute::SCALAR
        .iter()
        .copied()
        .filter(|a| *a != Attribute::Rotation || kind.rotation_distinct())
        .collect();

    let (n_prog, hard) = match plan {
        ItemPlan::ConstantOnly => (0, None),
        ItemPlan::Rules(n) if n >= 3 => {
            let hard = if rng.random_bool(0.5) {
                avail.retain(|a| *a != Attribute::Count);
                let fam = if rng.random_bool(0.5) {
                    RuleFamily::Addition
                } else {
                    RuleFamily::Subtraction
                };
                Hard::Overlay(fam)
            } else {
                let attr = *avail.choose(rng).unwrap();
                avail.retain(|a| *a != attr);
                Hard::Distribution(attr)
            };
            (2, Some(hard))
        }
        ItemPlan::Rules(n) => (n as usize, None),
    };
    let overlay = matches!(hard, Some(Hard::Overlay(_)));

    let (size_lo, size_hi) = if overlay { (12, 28) } else { (16, 50) };
    let base_shape = ShapeSpec {
        kind,
        size_pct: rng.random_range(size_lo..=size_hi),
        intensity: rng.random_range(0..=MAX_INK_INTENSITY / 10) * 10,
        count: 1,
        rotation: 0,
        position: 4,
    };
    let mut base = base_shape;

    avail.shuffle(rng);
    let mut rules = Vec::new();
    if plan == ItemPlan::ConstantOnly {
        rules.push(RuleSpec::constant(Attribute::Intensity, axis));
    }
    for &attr in avail.iter().take(n_prog) {
        let step = progression_step(attr, overlay, rng);
        let start = progression_start(attr, step, overlay, rng);
        attr.set(&mut base, start);
        rules.push(RuleSpec::progression(attr, axis, step));
    }
    match hard {
        Some(Hard::Overlay(family)) => {
            rules.push(RuleSpec::overlay(family, axis, draw_operands(family, rng)));
        }
        Some(Hard::Distribution(attr)) => {
            rules.push(RuleSpec::distribution3(attr, axis, distribution_values(attr, overlay, rng)));
        }
        None => {}
    }
    (rules, vec![base])
}

fn progression_step(attr: Attribute, overlay: bool, rng: &mut ChaCha8Rng) -> i32 {
    let sign = if rng.random_bool(0.5) { 1 } else { -1 };
    let magnitude = match attr {
        Attribute::Size if overlay => *[4, 6].choose(rng).unwrap(),
        Attribute::Size => *[6, 8, 10].choose(rng).unwrap(),
        Attribute::Intensity => *[50, 60, 70].choose(rng).unwrap(),
        Attribute::Count | Attribute::Overlay => 1,
        Attribute::Rotation => 45,
    };
    sign * magnitude
}

/// Picks a start value so the three-step progression stays in range.
fn progression_start(attr: Attribute, step: i32, overlay: bool, rng: &mut ChaCha8Rng) -> i32 {
    let (lo, hi) = match attr {
        Attribute::Size if overlay => (12, 28),
        Attribute::Size => (16, 50),
        Attribute::Intensity => (0, MAX_INK_INTENSITY as i32),
        Attribute::Count => (1, 3),
        Attribute::Rotation => (0, 135),
        Attribute::Overlay => (0, 8),
    };
    let span = 2 * step.abs();
    let (a, b) = if step > 0 { (lo, hi - span) } else { (lo + span, hi) };
    let v = if b >= a { rng.random_range(a..=b) } else { lo };
    let unit = match attr {
        Attribute::Rotation => 45,
        Attribute::Intensity => 10,
        _ => 1,
    };
    if step > 0 {
        v / unit * unit
    } else {
        (v + unit - 1) / unit * unit
    }
}

fn distribution_values(attr: Attribute, overlay: bool, rng: &mut ChaCha8Rng) -> [i32; 3] {
    let pool: Vec<i32> = match attr {
        Attribute::Size if overlay => vec![12, 18, 24, 28],
        Attribute::Size => vec![16, 24, 32, 40],
        Attribute::Intensity => vec![0, 50, 100, 150, 200],
        Attribute::Count => vec![1, 2, 3],
        Attribute::Rotation => ROTATIONS.iter().map(|&r| r as i32).collect(),
        Attribute::Overlay => vec![0, 1, 2],
    };
    let picked: Vec<i32> = pool.choose_multiple(rng, 3).copied().collect();
    [picked[0], picked[1], picked[2]]
}

fn draw_operands(family: RuleFamily, rng: &mut ChaCha8Rng) -> [[SlotSet; 2]; 3] {
    let mut random_set = |lo: usize, hi: usize| {
        let mut slots: Vec<u8> = (0..9).collect();
        slots.shuffle(rng);
        let n = rng.random_range(lo..=hi);
        SlotSet::from_slots(slots.into_iter().take(n))
    };
    let mut line = || loop {
        let a = random_set(2, 4);
        let b = random_set(1, 3);
        let ok = match family {
            RuleFamily::Addition => {
                let u = a.union(b);
                u != a && u != b
            }
            _ => {
                let b = SlotSet::from_bits(a.bits() & b.bits());
                !b.is_empty() && !a.difference(b).is_empty()
            }
        };
        if ok {
            let b = if family == RuleFamily::Subtraction {
                SlotSet::from_bits(a.bits() & b.bits())
            } else {
                b
            };
            return [a, b];
        }
    };
    [line(), line(), line()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profile_is_thirds() {
        let p = DifficultyProfile::default_for(12);
        let counts: Vec<u8> = p.plans.iter().map(|p| p.rule_count()).collect();
        assert_eq!(counts, vec![1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 3, 3]);
    }

    #[test]
    fn profile_errors() {
        let bad = DifficultyProfile {
            plans: vec![ItemPlan::Rules(4)],
        };
        assert!(matches!(
            generate_battery(0, 1, &bad),
            Err(GenError::TooManyRules { index: 0, rules: 4 })
        ));
        let non_mono = DifficultyProfile {
            plans: vec![ItemPlan::Rules(2), ItemPlan::Rules(1)],
        };
        assert!(matches!(
            generate_battery(0, 2, &non_mono),
            Err(GenError::NonMonotoneProfile { index: 1 })
        ));
        assert!(matches!(
            generate_battery(0, 0, &DifficultyProfile::default_for(0)),
            Err(GenError::NoItems)
        ));
    }

    #[test]
    fn constant_only_item_has_identical_cells() {
        let items = generate_battery(0, 1, &DifficultyProfile::constant_only(1)).unwrap();
        let cells = &items[0].cells;
        assert!(cells.iter().all(|c| c == &cells[0]));
    }

    #[test]
    fn regeneration_is_identical() {
        let items = generate_battery(3, 12, &DifficultyProfile::default_for(12)).unwrap();
        for it in &items {
            let again = generate_item(&it.id, it.seed, it.plan, it.difficulty_rank).unwrap();
            assert_eq!(&again, it);
        }
    }

    #[test]
    fn subtraction_operands_are_subsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            for [a, b] in draw_operands(RuleFamily::Subtraction, &mut rng) {
                assert_eq!(b.difference(a), SlotSet::default());
                assert!(!a.difference(b).is_empty());
                assert!(!b.is_empty());
            }
        }
    }
}
