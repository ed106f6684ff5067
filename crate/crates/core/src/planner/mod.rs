//! Assembly planning: instruction + bindings → ordered pick/place subtasks.
//!
//! Two routes produce the same [`AssemblyPlan`]: [`plan_deterministic`]
//! resolves everything directly from the operator bindings, while
//! [`plan_llm`] prompts a chat backend and strictly validates what comes
//! back. [`validate_plan`] is shared by both.

mod backend;
mod finetune;
mod prompt;
mod wire;

pub use backend::{
    BackendConfig, BackendError, ChatCompletionsBackend, FixedBackend, PlannerBackend,
    ScriptedBackend, API_KEY_ENV,
};
pub use finetune::{
    generate_finetune_dataset, generate_finetune_samples, FineTuneRecord, FineTuneSample,
};
pub use prompt::{build_prompt, Prompt, NO_OBJECTS_SENTINEL, SYSTEM_PROMPT};
pub use wire::{parse_plan_response, PlanParseError};

use std::collections::HashSet;
use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::BoardConfig;
use crate::classification::AssociationResult;
use crate::geometry::BasePoint;
use crate::label::ComponentLabel;
use crate::localization::Candidate;

/// Distance within which a plan's pick point counts as naming a candidate.
pub const GROUNDING_TOLERANCE_MM: f64 = 1.0;
pub const DEFAULT_RETRIES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Deterministic,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRequest {
    pub instruction: String,
    pub mode: PlanMode,
}

impl InstructionRequest {
    pub fn deterministic(instruction: impl Into<String>) -> Self {
        Self {
            instruction: instruction.into(),
            mode: PlanMode::Deterministic,
        }
    }

    /// Component mentions in order. Separators: comma, semicolon, newline,
    /// `then`, `and`.
    pub fn mentions(&self) -> Result<Vec<ComponentLabel>, PlanError> {
        let normalized = self
            .instruction
            .to_ascii_lowercase()
            .replace([';', '\n'], ",")
            .replace(" then ", ",")
            .replace(" and ", ",");
        let mentions: Result<Vec<_>, _> = normalized
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.trim_start_matches("then ")
                    .trim_start_matches("and ")
                    .parse::<ComponentLabel>()
            })
            .collect();
        match mentions {
            Ok(m) if !m.is_empty() => Ok(m),
            Ok(_) => Err(PlanError::BadInstruction("no components mentioned".into())),
            Err(e) => Err(PlanError::BadInstruction(e.to_string())),
        }
    }
}

/// A localized candidate lifted into the base frame, with the operator's
/// label when one was bound to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedCandidate {
    pub candidate: Candidate,
    pub base: BasePoint,
    pub label: Option<ComponentLabel>,
}

impl GroundedCandidate {
    pub fn id(&self) -> usize {
        self.candidate.id
    }
}

/// Candidate whose base point lies within `tol` of `p`, nearest first.
pub fn grounded_at<'a>(
    cands: &'a [GroundedCandidate],
    p: &BasePoint,
    tol: f64,
) -> Option<&'a GroundedCandidate> {
    cands
        .iter()
        .map(|c| (c, c.base.distance(p)))
        .filter(|(_, d)| *d <= tol)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(c, _)| c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblySubtask {
    /// 1-based step number.
    pub index: usize,
    pub category: ComponentLabel,
    pub pick: BasePoint,
    pub slot: String,
    pub place: BasePoint,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Deterministic,
    Llm { model: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssemblyPlan {
    pub subtasks: Vec<AssemblySubtask>,
    pub provenance: Provenance,
}

impl AssemblyPlan {
    pub fn len(&self) -> usize {
        self.subtasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtasks.is_empty()
    }

    pub fn categories(&self) -> Vec<ComponentLabel> {
        self.subtasks.iter().map(|s| s.category).collect()
    }

    /// The strict JSON form a planner backend must answer with.
    pub fn to_wire_json(&self) -> String {
        wire::to_wire_json(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    NonContiguousIndex {
        position: usize,
        found: usize,
    },
    PickNotGrounded {
        index: usize,
        pick: BasePoint,
    },
    DuplicatePick {
        index: usize,
        candidate_id: usize,
    },
    UnknownSlot {
        index: usize,
        slot: String,
    },
    DuplicateSlot {
        index: usize,
        slot: String,
    },
    SlotOccupied {
        index: usize,
        slot: String,
    },
    SlotRejectsCategory {
        index: usize,
        slot: String,
        category: ComponentLabel,
    },
    CategoryMismatch {
        index: usize,
        candidate_id: usize,
        planned: ComponentLabel,
        classified: ComponentLabel,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonContiguousIndex { position, found } => {
                write!(f, "non-contiguous index: step {position} is numbered {found}")
            }
            Violation::PickNotGrounded { index, pick } => write!(
                f,
                "pick not grounded: step {index} picks ({:.3}, {:.3}, {:.3}) where no candidate was localized",
                pick.x, pick.y, pick.z
            ),
            Violation::DuplicatePick { index, candidate_id } => {
                write!(f, "step {index} picks candidate {candidate_id} a second time")
            }
            Violation::UnknownSlot { index, slot } => write!(f, "step {index} names unknown slot {slot:?}"),
            Violation::DuplicateSlot { index, slot } => write!(f, "step {index} reuses slot {slot:?}"),
            Violation::SlotOccupied { index, slot } => write!(f, "step {index} targets occupied slot {slot:?}"),
            Violation::SlotRejectsCategory { index, slot, category } => {
                write!(f, "step {index}: slot {slot:?} does not accept {category}")
            }
            Violation::CategoryMismatch { index, candidate_id, planned, classified } => write!(
                f,
                "step {index} calls candidate {candidate_id} a {planned} but the operator classified it as {classified}"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("bad instruction: {0}")]
    BadInstruction(String),
    #[error("unidentified component: {0} has no classified candidate")]
    UnidentifiedComponent(ComponentLabel),
    #[error("board full for category {0}")]
    BoardFull(ComponentLabel),
    #[error("backend transport failure: {0}")]
    Backend(#[from] BackendError),
    #[error("planner gave no valid plan after {attempts} attempts; last failure: {last}")]
    Exhausted { attempts: usize, last: String },
}

/// Checks every plan invariant against the grounded candidates and the
/// board. Reports all violations.
pub fn validate_plan(
    plan: &AssemblyPlan,
    cands: &[GroundedCandidate],
    board: &BoardConfig,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    let mut picked = HashSet::new();
    let mut slots = HashSet::new();
    for (pos, st) in plan.subtasks.iter().enumerate() {
        let index = st.index;
        if st.index != pos + 1 {
            violations.push(Violation::NonContiguousIndex {
                position: pos + 1,
                found: st.index,
            });
        }
        match grounded_at(cands, &st.pick, GROUNDING_TOLERANCE_MM) {
            None => violations.push(Violation::PickNotGrounded {
                index,
                pick: st.pick,
            }),
            Some(c) => {
                if !picked.insert(c.id()) {
                    violations.push(Violation::DuplicatePick {
                        index,
                        candidate_id: c.id(),
                    });
                }
                if let Some(classified) = c.label {
                    if classified != st.category {
                        violations.push(Violation::CategoryMismatch {
                            index,
                            candidate_id: c.id(),
                            planned: st.category,
                            classified,
                        });
                    }
                }
            }
        }
        if !slots.insert(st.slot.as_str()) {
            violations.push(Violation::DuplicateSlot {
                index,
                slot: st.slot.clone(),
            });
        }
        match board.slot(&st.slot) {
            None => violations.push(Violation::UnknownSlot {
                index,
                slot: st.slot.clone(),
            }),
            Some(slot) => {
                if slot.occupied {
                    violations.push(Violation::SlotOccupied {
                        index,
                        slot: st.slot.clone(),
                    });
                }
                if slot.accepts != st.category {
                    violations.push(Violation::SlotRejectsCategory {
                        index,
                        slot: st.slot.clone(),
                        category: st.category,
                    });
                }
            }
        }
    }
    violations
}

/// Reference planner. The k-th mention picks the candidate the operator
/// bound to that label (first unused binding in statement order) and places
/// it in the first free slot accepting the label.
pub fn plan_deterministic(
    req: &InstructionRequest,
    assoc: &AssociationResult,
    cands: &[GroundedCandidate],
    board: &BoardConfig,
) -> Result<AssemblyPlan, PlanError> {
    let mentions = req.mentions()?;
    let mut used_cands = HashSet::new();
    let mut used_slots = HashSet::new();
    let mut subtasks = Vec::with_capacity(mentions.len());
    for (k, label) in mentions.into_iter().enumerate() {
        let grounded = assoc
            .bindings
            .iter()
            .filter(|b| b.statement.label == label && !used_cands.contains(&b.candidate_id))
            .find_map(|b| cands.iter().find(|c| c.id() == b.candidate_id))
            .ok_or(PlanError::UnidentifiedComponent(label))?;
        let slot = board
            .free_slots_for(label)
            .into_iter()
            .find(|s| !used_slots.contains(s.id.as_str()))
            .ok_or(PlanError::BoardFull(label))?;
        used_cands.insert(grounded.id());
        used_slots.insert(slot.id.as_str());
        subtasks.push(AssemblySubtask {
            index: k + 1,
            category: label,
            pick: grounded.base,
            slot: slot.id.clone(),
            place: slot.place,
        });
    }
    Ok(AssemblyPlan {
        subtasks,
        provenance: Provenance::Deterministic,
    })
}

/// One backend round trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub latency_ms: f64,
    /// Why the response was rejected; `None` for the accepted one.
    pub rejection: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmOutcome {
    pub plan: AssemblyPlan,
    pub attempts: Vec<Attempt>,
}

impl LlmOutcome {
    pub fn total_latency_ms(&self) -> f64 {
        self.attempts.iter().map(|a| a.latency_ms).sum()
    }
}

/// Backend planner: prompt, call, strictly parse, validate; on a bad answer
/// retry up to `retries` more times. Transport errors are not retried.
pub fn plan_llm(
    req: &InstructionRequest,
    cands: &[GroundedCandidate],
    classification_text: &str,
    board: &BoardConfig,
    backend: &dyn PlannerBackend,
    retries: usize,
) -> Result<LlmOutcome, PlanError> {
    let prompt = build_prompt(&req.instruction, cands, classification_text, board);
    let mut attempts = Vec::new();
    let mut last = String::new();
    for attempt in 0..=retries {
        let started = Instant::now();
        let response = backend.complete(&prompt.system, &prompt.user)?;
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        log::info!(
            "planner backend {} attempt {} answered in {latency_ms:.1} ms",
            backend.model_id(),
            attempt + 1
        );
        let checked = parse_plan_response(&response, board)
            .map_err(|e| e.to_string())
            .and_then(|mut plan| {
                plan.provenance = Provenance::Llm {
                    model: backend.model_id(),
                };
                let violations = validate_plan(&plan, cands, board);
                if violations.is_empty() {
                    Ok(plan)
                } else {
                    Err(violations
                        .iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>()
                        .join("; "))
                }
            });
        match checked {
            Ok(plan) => {
                attempts.push(Attempt {
                    latency_ms,
                    rejection: None,
                });
                return Ok(LlmOutcome { plan, attempts });
            }
            Err(why) => {
                log::warn!("planner response rejected: {why}");
                attempts.push(Attempt {
                    latency_ms,
                    rejection: Some(why.clone()),
                });
                last = why;
            }
        }
    }
    Err(PlanError::Exhausted {
        attempts: attempts.len(),
        last,
    })
}
