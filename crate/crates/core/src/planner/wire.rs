//! The strict JSON plan format exchanged with planner backends.
//!
//! ```json
//! {"subtasks":[{"index":1,"category":"small gear","pick":{"x":301.2,"y":-4.8,"z":20.0},"slot":"gear-small-1"}]}
//! ```
//!
//! Parsing never repairs anything. Leading prose, code fences, unknown
//! fields, non-canonical category spellings and unknown slot ids are all
//! rejected. `schemas/plan.schema.json` in the repository root describes the
//! same format.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::BoardConfig;
use crate::geometry::BasePoint;
use crate::label::ComponentLabel;

use super::{AssemblyPlan, AssemblySubtask, Provenance, Violation};

#[derive(Debug, Error, PartialEq)]
pub enum PlanParseError {
    #[error("malformed plan: {message} near {fragment:?}")]
    Malformed { message: String, fragment: String },
    #[error("invalid plan: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WirePlan {
    subtasks: Vec<WireSubtask>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireSubtask {
    index: usize,
    category: String,
    pick: WirePoint,
    slot: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WirePoint {
    x: f64,
    y: f64,
    z: f64,
}

pub(super) fn to_wire_json(plan: &AssemblyPlan) -> String {
    let wire = WirePlan {
        subtasks: plan
            .subtasks
            .iter()
            .map(|s| WireSubtask {
                index: s.index,
                category: s.category.to_string(),
                pick: WirePoint {
                    x: s.pick.x,
                    y: s.pick.y,
                    z: s.pick.z,
                },
                slot: s.slot.clone(),
            })
            .collect(),
    };
    serde_json::to_string(&wire).expect("plan serializes")
}

fn fragment_at(text: &str, line: usize, column: usize) -> String {
    let Some(l) = text.lines().nth(line.saturating_sub(1)) else {
        return String::new();
    };
    let chars: Vec<char> = l.chars().collect();
    let at = column.saturating_sub(1).min(chars.len());
    let start = at.saturating_sub(20);
    let end = (at + 20).min(chars.len());
    chars[start..end].iter().collect()
}

fn malformed(text: &str, message: impl Into<String>, line: usize, column: usize) -> PlanParseError {
    PlanParseError::Malformed {
        message: message.into(),
        fragment: fragment_at(text, line, column),
    }
}

/// Parses a backend answer into a plan, resolving slot ids against `board`.
/// Indices must be contiguous from 1 and slots unique and known.
pub fn parse_plan_response(
    text: &str,
    board: &BoardConfig,
) -> Result<AssemblyPlan, PlanParseError> {
    let wire: WirePlan = serde_json::from_str(text)
        .map_err(|e| malformed(text, e.to_string(), e.line(), e.column()))?;
    if wire.subtasks.is_empty() {
        return Err(malformed(text, "plan has no subtasks", 1, 1));
    }
    let mut subtasks = Vec::with_capacity(wire.subtasks.len());
    let mut violations = Vec::new();
    let mut slots = HashSet::new();
    for (pos, w) in wire.subtasks.into_iter().enumerate() {
        let category: ComponentLabel = match w.category.parse() {
            Ok(l) if ComponentLabel::to_string(&l) == w.category => l,
            _ => {
                let at = text.find(&w.category).unwrap_or(0);
                return Err(PlanParseError::Malformed {
                    message: format!(
                        "category {:?} is not in canonical \"<size> <category>\" form",
                        w.category
                    ),
                    fragment: text[at..].chars().take(40).collect(),
                });
            }
        };
        if !([w.pick.x, w.pick.y, w.pick.z].iter().all(|v| v.is_finite())) {
            return Err(malformed(text, "pick coordinates must be finite", 1, 1));
        }
        if w.index != pos + 1 {
            violations.push(Violation::NonContiguousIndex {
                position: pos + 1,
                found: w.index,
            });
        }
        if !slots.insert(w.slot.clone()) {
            violations.push(Violation::DuplicateSlot {
                index: w.index,
                slot: w.slot.clone(),
            });
        }
        let place = match board.slot(&w.slot) {
            Some(s) => s.place,
            None => {
                violations.push(Violation::UnknownSlot {
                    index: w.index,
                    slot: w.slot.clone(),
                });
                BasePoint::new(f64::NAN, f64::NAN, f64::NAN)
            }
        };
        subtasks.push(AssemblySubtask {
            index: w.index,
            category,
            pick: BasePoint::new(w.pick.x, w.pick.y, w.pick.z),
            slot: w.slot,
            place,
        });
    }
    if violations.is_empty() {
        Ok(AssemblyPlan {
            subtasks,
            provenance: Provenance::Deterministic,
        })
    } else {
        Err(PlanParseError::Invalid(violations))
    }
}
