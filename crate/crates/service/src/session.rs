//! One operator session and its phase machine.
//!
//! A session moves forward through
//! `created → localized → classified → planned → executing → done`, or
//! drops into `failed` when a step turns out to be infeasible. Every
//! operation either succeeds and leaves the session in its documented next
//! phase, or fails and leaves it untouched. Repeated calls behave as
//! follows:
//!
//! | call      | allowed in              | on repeat                       |
//! |-----------|-------------------------|---------------------------------|
//! | localize  | any phase               | returns the stored result       |
//! | classify  | localized, classified   | replaces the classification     |
//! | plan      | classified, planned     | replaces the plan               |
//! | step      | planned, executing      | runs the next subtask           |

use std::fmt;

use covillm_core::classification::{
    associate, parse_classification, AssociationResult, ClassificationStatement, ParseError,
};
use covillm_core::executor::{ExecutionEvent, WorkcellState};
use covillm_core::geometry::GeometryError;
use covillm_core::localization::{localize, Candidate, ExtractionStats, LocalizationError};
use covillm_core::pipeline::Workbench;
use covillm_core::planner::{
    plan_deterministic, plan_llm, AssemblyPlan, Attempt, BackendError, GroundedCandidate,
    InstructionRequest, PlanError, PlanMode, PlannerBackend, DEFAULT_RETRIES,
};
use covillm_core::{BoardConfig, DepthFrame, SceneSpec, TemporalState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Created,
    Localized,
    Classified,
    Planned,
    Executing,
    Done,
    Failed,
}

impl Phase {
    pub const ALL: [Phase; 7] = [
        Phase::Created,
        Phase::Localized,
        Phase::Classified,
        Phase::Planned,
        Phase::Executing,
        Phase::Done,
        Phase::Failed,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Done | Phase::Failed)
    }

    /// Whether `self → next` follows the phase order. Staying put is
    /// allowed, as is failing from anywhere.
    pub fn may_become(self, next: Phase) -> bool {
        use Phase::*;
        self == next
            || next == Failed && self != Done
            || matches!(
                (self, next),
                (Created, Localized)
                    | (Localized, Classified)
                    | (Classified, Planned)
                    | (Planned, Executing)
                    | (Planned, Done)
                    | (Executing, Done)
            )
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("phase serializes");
        f.write_str(s.as_str().expect("phase is a string"))
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("cannot {action} in phase {phase}")]
    Conflict { action: &'static str, phase: Phase },
    #[error("plan complete")]
    PlanComplete,
    #[error("session failed: {0}")]
    AlreadyFailed(String),
    #[error("localization: {0}")]
    Localization(#[from] LocalizationError),
    #[error("classification: {0}")]
    Classification(#[from] ParseError),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("{0}")]
    Plan(#[from] PlanError),
    #[error("llm planning is unavailable: {0}")]
    NoBackend(String),
}

/// How the session's frame came to be.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Source {
    Scene { scene: SceneSpec, seed: u64 },
    Upload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub request: InstructionRequest,
    pub plan: AssemblyPlan,
    /// Total backend round-trip time; absent for deterministic plans.
    pub latency_ms: Option<f64>,
    #[serde(default)]
    pub attempts: Vec<Attempt>,
}

/// Outcome of one `step` call. A failed step is still a recorded outcome:
/// its error event is in the log and the session is in `failed`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub phase: Phase,
    pub cursor: usize,
    /// Index of the first returned event in the session log.
    pub first_event: usize,
    pub events: Vec<ExecutionEvent>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// The persisted snapshot; also exactly what `GET /v1/sessions/{id}`
/// returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub phase: Phase,
    pub source: Source,
    pub frame_width: u32,
    pub frame_height: u32,
    pub surface_depth_mm: Option<f64>,
    pub candidates: Vec<Candidate>,
    pub localization_stats: Option<ExtractionStats>,
    pub classification_text: Option<String>,
    pub statements: Vec<ClassificationStatement>,
    pub association: AssociationResult,
    pub grounded: Vec<GroundedCandidate>,
    pub plan: Option<PlanRecord>,
    /// Slot occupancy as the console shows it.
    pub board: BoardConfig,
    pub workcell: Option<WorkcellState>,
    pub events: Vec<ExecutionEvent>,
    pub failure: Option<String>,
}

impl Session {
    pub fn new(id: String, source: Source, frame: &DepthFrame, board: BoardConfig) -> Self {
        Self {
            id,
            phase: Phase::Created,
            source,
            frame_width: frame.width(),
            frame_height: frame.height(),
            surface_depth_mm: None,
            candidates: Vec::new(),
            localization_stats: None,
            classification_text: None,
            statements: Vec::new(),
            association: AssociationResult::default(),
            grounded: Vec::new(),
            plan: None,
            board,
            workcell: None,
            events: Vec::new(),
            failure: None,
        }
    }

    fn conflict(&self, action: &'static str) -> SessionError {
        SessionError::Conflict {
            action,
            phase: self.phase,
        }
    }

    /// Runs localization on first call; afterwards returns what is stored.
    pub fn localize(
        &mut self,
        wb: &Workbench,
        frame: &DepthFrame,
    ) -> Result<&[Candidate], SessionError> {
        if self.phase == Phase::Created {
            let mut state = TemporalState::for_frame(frame);
            let loc = localize(
                std::slice::from_ref(frame),
                &wb.filter,
                &wb.localization,
                &mut state,
            )?;
            self.surface_depth_mm = Some(loc.surface_depth_mm);
            self.localization_stats = Some(loc.stats);
            self.candidates = loc.candidates;
            self.phase = Phase::Localized;
        }
        Ok(&self.candidates)
    }

    /// Parses and binds operator statements, replacing any earlier
    /// classification. Ambiguous or unmatched statements are part of the
    /// result, not an error.
    pub fn classify(
        &mut self,
        wb: &Workbench,
        text: &str,
    ) -> Result<&AssociationResult, SessionError> {
        if !matches!(self.phase, Phase::Localized | Phase::Classified) {
            return Err(self.conflict("classify"));
        }
        let statements = parse_classification(text)?;
        let association = associate(&statements, &self.candidates, &wb.localization.roi);
        let grounded = wb.ground(&self.candidates, Some(&association))?;
        self.classification_text = Some(text.to_string());
        self.statements = statements;
        self.association = association;
        self.grounded = grounded;
        self.phase = Phase::Classified;
        Ok(&self.association)
    }

    /// Plans the instruction, replacing any earlier plan. May block on the
    /// backend in llm mode.
    pub fn plan(
        &mut self,
        wb: &Workbench,
        req: &InstructionRequest,
        backend: Result<&dyn PlannerBackend, &str>,
    ) -> Result<&PlanRecord, SessionError> {
        if !matches!(self.phase, Phase::Classified | Phase::Planned) {
            return Err(self.conflict("plan"));
        }
        let record = match req.mode {
            PlanMode::Deterministic => PlanRecord {
                request: req.clone(),
                plan: plan_deterministic(req, &self.association, &self.grounded, &wb.board)?,
                latency_ms: None,
                attempts: Vec::new(),
            },
            PlanMode::Llm => {
                let backend = backend.map_err(|why| SessionError::NoBackend(why.to_string()))?;
                let text = self.classification_text.as_deref().unwrap_or_default();
                let out = plan_llm(
                    req,
                    &self.grounded,
                    text,
                    &wb.board,
                    backend,
                    DEFAULT_RETRIES,
                )?;
                PlanRecord {
                    request: req.clone(),
                    latency_ms: Some(out.total_latency_ms()),
                    plan: out.plan,
                    attempts: out.attempts,
                }
            }
        };
        let workcell = wb.workcell(&self.grounded);
        self.board = workcell.board.clone();
        self.workcell = Some(workcell);
        self.phase = Phase::Planned;
        Ok(self.plan.insert(record))
    }

    /// Executes the next subtask.
    pub fn step(&mut self, wb: &Workbench) -> Result<StepOutcome, SessionError> {
        match self.phase {
            Phase::Planned | Phase::Executing => {}
            Phase::Done => return Err(SessionError::PlanComplete),
            Phase::Failed => {
                return Err(SessionError::AlreadyFailed(
                    self.failure.clone().unwrap_or_default(),
                ))
            }
            _ => return Err(self.conflict("step")),
        }
        let phase = self.phase;
        let (Some(record), Some(workcell)) = (&self.plan, &mut self.workcell) else {
            return Err(SessionError::Conflict {
                action: "step",
                phase,
            });
        };
        let Some(subtask) = record.plan.subtasks.get(workcell.cursor) else {
            return Err(SessionError::PlanComplete);
        };
        let first_event = self.events.len();
        let (events, error) = match workcell.execute_step(subtask, wb.pick_tolerance_mm) {
            Ok(events) => (events, None),
            Err(e) => (vec![e.event.clone()], Some(e.to_string())),
        };
        let total = record.plan.len();
        let cursor = workcell.cursor;
        self.board = workcell.board.clone();
        self.events.extend(events.iter().cloned());
        self.phase = match &error {
            Some(_) => Phase::Failed,
            None if cursor == total => Phase::Done,
            None => Phase::Executing,
        };
        self.failure = error.clone();
        Ok(StepOutcome {
            phase: self.phase,
            cursor,
            first_event,
            events,
            error,
        })
    }
}

/// Whether a plan-stage failure came from talking to the backend rather
/// than from the request itself.
pub fn backend_failure(err: &SessionError) -> Option<&BackendError> {
    match err {
        SessionError::Plan(PlanError::Backend(e)) => Some(e),
        _ => None,
    }
}
