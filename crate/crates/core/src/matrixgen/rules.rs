//! Rule taxonomy and the cell-realization step.

use serde::{Deserialize, Serialize};

use super::shape::{Attribute, ShapeSpec, SlotSet};
use crate::error::GenError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleFamily {
    Constant,
    Progression,
    Addition,
    Subtraction,
    Distribution3,
}

/// Direction along which a rule varies. `Row` rules change from column to
/// column within each row; `Column` rules change from row to row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Row,
    Column,
}

impl Axis {
    /// (line index, position along the line) of a cell.
    pub fn line_and_rank(self, row: usize, col: usize) -> (usize, usize) {
        match self {
            Axis::Row => (row, col),
            Axis::Column => (col, row),
        }
    }

    pub fn other(self) -> Axis {
        match self {
            Axis::Row => Axis::Column,
            Axis::Column => Axis::Row,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleParams {
    None,
    Step { step: i32 },
    Values { values: [i32; 3] },
    /// Two operand slot sets per line; the third cell of the line is composed from them.
    Operands { lines: [[SlotSet; 2]; 3] },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub attribute: Attribute,
    pub family: RuleFamily,
    pub axis: Axis,
    pub params: RuleParams,
}

impl RuleSpec {
    pub fn constant(attribute: Attribute, axis: Axis) -> Self {
        RuleSpec {
            attribute,
            family: RuleFamily::Constant,
            axis,
            params: RuleParams::None,
        }
    }

    pub fn progression(attribute: Attribute, axis: Axis, step: i32) -> Self {
        RuleSpec {
            attribute,
            family: RuleFamily::Progression,
            axis,
            params: RuleParams::Step { step },
        }
    }

    pub fn distribution3(attribute: Attribute, axis: Axis, values: [i32; 3]) -> Self {
        RuleSpec {
            attribute,
            family: RuleFamily::Distribution3,
            axis,
            params: RuleParams::Values { values },
        }
    }

    pub fn overlay(family: RuleFamily, axis: Axis, lines: [[SlotSet; 2]; 3]) -> Self {
        RuleSpec {
            attribute: Attribute::Overlay,
            family,
            axis,
            params: RuleParams::Operands { lines },
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        let bad = |msg: &str| Err(GenError::InvalidRules(msg.to_string()));
        let is_overlay = self.attribute == Attribute::Overlay;
        let composes = matches!(self.family, RuleFamily::Addition | RuleFamily::Subtraction);
        if is_overlay != composes {
            return bad("overlay pairs exactly with addition or subtraction");
        }
        match (self.family, &self.params) {
            (RuleFamily::Constant, RuleParams::None) => Ok(()),
            (RuleFamily::Progression, RuleParams::Step { .. }) => Ok(()),
            (RuleFamily::Distribution3, RuleParams::Values { values }) => {
                if values[0] == values[1] || values[1] == values[2] || values[0] == values[2] {
                    bad("distribution3 needs three distinct values")
                } else {
                    Ok(())
                }
            }
            (RuleFamily::Addition | RuleFamily::Subtraction, RuleParams::Operands { .. }) => Ok(()),
            _ => bad("rule parameters do not match the rule family"),
        }
    }
}

/// Checks the rule-set invariants: 1..=3 rules, distinct attributes, and
/// each rule well-formed.
pub fn validate_rules(rules: &[RuleSpec]) -> Result<(), GenError> {
    if rules.is_empty() || rules.len() > 3 {
        return Err(GenError::InvalidRules(format!(
            "{} rules; expected 1 to 3",
            rules.len()
        )));
    }
    for (i, r) in rules.iter().enumerate() {
        r.validate()?;
        if rules[..i].iter().any(|q| q.attribute == r.attribute) {
            return Err(GenError::InvalidRules(format!(
                "attribute {:?} governed twice",
                r.attribute
            )));
        }
    }
    Ok(())
}

/// Applies every rule to `base` for the cell at (`row`, `col`).
///
/// Overlay rules pick the slot set first (the first base shape is the
/// template placed in every slot); the remaining rules then act on every
/// shape of the cell independently.
pub fn realize_cell(
    rules: &[RuleSpec],
    row: usize,
    col: usize,
    base: &[ShapeSpec],
) -> Result<Vec<ShapeSpec>, GenError> {
    let mut cell = base.to_vec();

    if let Some(rule) = rules.iter().find(|r| r.attribute == Attribute::Overlay) {
        let RuleParams::Operands { lines } = &rule.params else {
            return Err(GenError::InvalidRules("overlay without operands".into()));
        };
        let template = *base
            .first()
            .ok_or_else(|| GenError::InvalidRules("overlay needs a template shape".into()))?;
        let (line, rank) = rule.axis.line_and_rank(row, col);
        let [a, b] = lines[line];
        let slots = match (rank, rule.family) {
            (0, _) => a,
            (1, _) => b,
            (_, RuleFamily::Addition) => a.union(b),
            (_, _) => a.difference(b),
        };
        cell = slots
            .iter()
            .map(|position| ShapeSpec {
                position,
                ..template
            })
            .collect();
    }

    for rule in rules.iter().filter(|r| r.attribute != Attribute::Overlay) {
        let (line, rank) = rule.axis.line_and_rank(row, col);
        let value_for = |current: i32| -> Option<i32> {
            match (&rule.family, &rule.params) {
                (RuleFamily::Progression, RuleParams::Step { step }) => {
                    Some(current + rank as i32 * step)
                }
                (RuleFamily::Distribution3, RuleParams::Values { values }) => {
                    Some(values[(rank + 2 * line) % 3])
                }
                _ => None,
            }
        };
        for shape in cell.iter_mut() {
            if let Some(v) = value_for(rule.attribute.get(shape)) {
                if !rule.attribute.set(shape, v) {
                    return Err(GenError::OutOfRange {
                        attribute: rule.attribute.name(),
                        row,
                        col,
                    });
                }
            }
        }
    }
    Ok(cell)
}

/// Realizes all nine cells in row-major order.
pub fn realize_grid(rules: &[RuleSpec], base: &[ShapeSpec]) -> Result<Vec<Vec<ShapeSpec>>, GenError> {
    let mut cells = Vec::with_capacity(9);
    for row in 0..3 {
        for col in 0..3 {
            cells.push(realize_cell(rules, row, col, base)?);
        }
    }
    Ok(cells)
}
