//! Simulated workcell that executes assembly plans.
//!
//! The arm teleports between waypoints and a synthetic clock stamps each
//! event. Every state change goes through [`WorkcellState::apply`], so an
//! event log replayed onto a copy of the initial state reproduces the final
//! state exactly.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::BoardConfig;
use crate::geometry::{BasePoint, RigidTransform};
use crate::label::ComponentLabel;
use crate::planner::{AssemblyPlan, AssemblySubtask, GroundedCandidate};

pub const DEFAULT_PICK_TOLERANCE_MM: f64 = 5.0;

/// Synthetic arm speed used to stamp move events.
const SPEED_MM_PER_MS: f64 = 0.25;
const GRIPPER_MS: u64 = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", content = "candidate_id", rename_all = "snake_case")]
pub enum Gripper {
    Open,
    Holding(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "at", content = "slot", rename_all = "snake_case")]
pub enum Whereabouts {
    Table,
    Held,
    Placed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkComponent {
    pub candidate_id: usize,
    pub position: BasePoint,
    pub label: Option<ComponentLabel>,
    pub whereabouts: Whereabouts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Move { target: BasePoint },
    Pick { candidate_id: usize },
    Place { candidate_id: usize, slot: String },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionEvent {
    pub timestamp_ms: u64,
    pub subtask: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl ExecutionEvent {
    pub fn is_error(&self) -> bool {
        matches!(self.kind, EventKind::Error { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "snake_case")]
pub enum Infeasibility {
    GripperBusy {
        holding: usize,
    },
    NoComponentAtPick {
        pick: BasePoint,
        nearest_mm: Option<f64>,
    },
    UnknownSlot {
        slot: String,
    },
    SlotOccupied {
        slot: String,
    },
    SlotRejects {
        slot: String,
        category: ComponentLabel,
    },
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasibility::GripperBusy { holding } => {
                write!(f, "gripper not open (holding candidate {holding})")
            }
            Infeasibility::NoComponentAtPick { pick, nearest_mm } => {
                write!(
                    f,
                    "no component at pick location ({:.1}, {:.1}, {:.1})",
                    pick.x, pick.y, pick.z
                )?;
                match nearest_mm {
                    Some(d) => write!(f, "; nearest is {d:.1} mm away"),
                    None => Ok(()),
                }
            }
            Infeasibility::UnknownSlot { slot } => write!(f, "unknown slot {slot:?}"),
            Infeasibility::SlotOccupied { slot } => write!(f, "slot occupied: {slot}"),
            Infeasibility::SlotRejects { slot, category } => {
                write!(f, "slot {slot} does not accept {category}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("step {index} infeasible: {}", .problems.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct StepError {
    pub index: usize,
    pub problems: Vec<Infeasibility>,
    /// The error event reported for this failure.
    pub event: ExecutionEvent,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("event refers to unknown candidate {0}")]
    UnknownCandidate(usize),
    #[error("event refers to unknown slot {0:?}")]
    UnknownSlot(String),
    #[error("inconsistent event: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRun {
    pub events: Vec<ExecutionEvent>,
    pub completed: usize,
    pub error: Option<StepError>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkcellState {
    pub components: Vec<WorkComponent>,
    pub gripper: Gripper,
    pub ee_pose: RigidTransform,
    pub board: BoardConfig,
    /// Number of completed subtasks.
    pub cursor: usize,
    pub clock_ms: u64,
}

impl WorkcellState {
    pub fn new(cands: &[GroundedCandidate], board: BoardConfig, home: RigidTransform) -> Self {
        let components = cands
            .iter()
            .map(|c| WorkComponent {
                candidate_id: c.id(),
                position: c.base,
                label: c.label,
                whereabouts: Whereabouts::Table,
            })
            .collect();
        Self {
            components,
            gripper: Gripper::Open,
            ee_pose: home,
            board,
            cursor: 0,
            clock_ms: 0,
        }
    }

    /// The simulated forward-kinematics pose, base ← end-effector.
    pub fn current_t_be(&self) -> RigidTransform {
        self.ee_pose
    }

    pub fn component(&self, id: usize) -> Option<&WorkComponent> {
        self.components.iter().find(|c| c.candidate_id == id)
    }

    pub fn on_table(&self) -> impl Iterator<Item = &WorkComponent> {
        self.components
            .iter()
            .filter(|c| c.whereabouts == Whereabouts::Table)
    }

    pub fn placed_count(&self) -> usize {
        self.components
            .iter()
            .filter(|c| matches!(c.whereabouts, Whereabouts::Placed(_)))
            .count()
    }

    fn nearest_on_table(&self, p: &BasePoint) -> Option<(&WorkComponent, f64)> {
        self.on_table()
            .map(|c| (c, c.position.distance(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub fn check_feasible(&self, st: &AssemblySubtask, tol: f64) -> Vec<Infeasibility> {
        let mut problems = Vec::new();
        if let Gripper::Holding(holding) = self.gripper {
            problems.push(Infeasibility::GripperBusy { holding });
        }
        match self.nearest_on_table(&st.pick) {
            Some((_, d)) if d <= tol => {}
            nearest => problems.push(Infeasibility::NoComponentAtPick {
                pick: st.pick,
                nearest_mm: nearest.map(|n| n.1),
            }),
        }
        match self.board.slot(&st.slot) {
            None => problems.push(Infeasibility::UnknownSlot {
                slot: st.slot.clone(),
            }),
            Some(s) => {
                if s.occupied {
                    problems.push(Infeasibility::SlotOccupied {
                        slot: st.slot.clone(),
                    });
                }
                if s.accepts != st.category {
                    problems.push(Infeasibility::SlotRejects {
                        slot: st.slot.clone(),
                        category: st.category,
                    });
                }
            }
        }
        problems
    }

    fn travel_ms(&self, to: &BasePoint) -> u64 {
        let t = self.ee_pose.translation();
        let from = BasePoint::new(t.x, t.y, t.z);
        1 + (from.distance(to) / SPEED_MM_PER_MS).round() as u64
    }

    /// Runs one subtask atomically: either all four events are applied or
    /// the state is left untouched and a single error event is returned.
    pub fn execute_step(
        &mut self,
        st: &AssemblySubtask,
        tol: f64,
    ) -> Result<Vec<ExecutionEvent>, StepError> {
        let problems = self.check_feasible(st, tol);
        if !problems.is_empty() {
            let message = problems
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            let event = ExecutionEvent {
                timestamp_ms: self.clock_ms,
                subtask: st.index,
                kind: EventKind::Error { message },
            };
            return Err(StepError {
                index: st.index,
                problems,
                event,
            });
        }
        let (target, _) = self.nearest_on_table(&st.pick).expect("checked feasible");
        let candidate_id = target.candidate_id;
        let place = self.board.slot(&st.slot).expect("checked feasible").place;

        let mut next = self.clone();
        let mut events = Vec::with_capacity(4);
        let mut emit = |state: &mut Self, dt: u64, kind: EventKind| {
            let ev = ExecutionEvent {
                timestamp_ms: state.clock_ms + dt,
                subtask: st.index,
                kind,
            };
            state.apply(&ev).expect("feasible step applies");
            events.push(ev);
        };
        let dt = next.travel_ms(&st.pick);
        emit(&mut next, dt, EventKind::Move { target: st.pick });
        emit(&mut next, GRIPPER_MS, EventKind::Pick { candidate_id });
        let dt = next.travel_ms(&place);
        emit(&mut next, dt, EventKind::Move { target: place });
        emit(
            &mut next,
            GRIPPER_MS,
            EventKind::Place {
                candidate_id,
                slot: st.slot.clone(),
            },
        );
        *self = next;
        Ok(events)
    }

    /// Executes subtasks in index order, halting at the first failure.
    pub fn execute_plan(&mut self, plan: &AssemblyPlan, tol: f64) -> PlanRun {
        let mut subtasks: Vec<&AssemblySubtask> = plan.subtasks.iter().collect();
        subtasks.sort_by_key(|s| s.index);
        let mut events = Vec::new();
        for (done, st) in subtasks.into_iter().enumerate() {
            match self.execute_step(st, tol) {
                Ok(evs) => events.extend(evs),
                Err(e) => {
                    events.push(e.event.clone());
                    return PlanRun {
                        events,
                        completed: done,
                        error: Some(e),
                    };
                }
            }
        }
        PlanRun {
            completed: plan.len(),
            events,
            error: None,
        }
    }

    /// Applies one recorded event. Error events leave the state untouched.
    pub fn apply(&mut self, ev: &ExecutionEvent) -> Result<(), ReplayError> {
        if ev.timestamp_ms < self.clock_ms {
            return Err(ReplayError::Inconsistent(format!(
                "timestamp {} before clock {}",
                ev.timestamp_ms, self.clock_ms
            )));
        }
        match &ev.kind {
            EventKind::Error { .. } => return Ok(()),
            EventKind::Move { target } => {
                self.ee_pose = self.ee_pose.with_translation(target.x, target.y, target.z);
                if let Gripper::Holding(id) = self.gripper {
                    self.component_mut(id)?.position = *target;
                }
            }
            EventKind::Pick { candidate_id } => {
                if self.gripper != Gripper::Open {
                    return Err(ReplayError::Inconsistent(
                        "pick with a closed gripper".into(),
                    ));
                }
                let c = self.component_mut(*candidate_id)?;
                if c.whereabouts != Whereabouts::Table {
                    return Err(ReplayError::Inconsistent(format!(
                        "candidate {candidate_id} is not on the table"
                    )));
                }
                c.whereabouts = Whereabouts::Held;
                self.gripper = Gripper::Holding(*candidate_id);
            }
            EventKind::Place { candidate_id, slot } => {
                if self.gripper != Gripper::Holding(*candidate_id) {
                    return Err(ReplayError::Inconsistent(format!(
                        "place of candidate {candidate_id} not held"
                    )));
                }
                let s = self
                    .board
                    .slot_mut(slot)
                    .ok_or_else(|| ReplayError::UnknownSlot(slot.clone()))?;
                if s.occupied {
                    return Err(ReplayError::Inconsistent(format!(
                        "slot {slot} already occupied"
                    )));
                }
                s.occupied = true;
                let place = s.place;
                let c = self.component_mut(*candidate_id)?;
                c.whereabouts = Whereabouts::Placed(slot.clone());
                c.position = place;
                self.gripper = Gripper::Open;
                self.cursor += 1;
            }
        }
        self.clock_ms = ev.timestamp_ms;
        Ok(())
    }

    fn component_mut(&mut self, id: usize) -> Result<&mut WorkComponent, ReplayError> {
        self.components
            .iter_mut()
            .find(|c| c.candidate_id == id)
            .ok_or(ReplayError::UnknownCandidate(id))
    }
}

/// One event per line, as streamed to the console.
pub fn events_to_jsonl(events: &[ExecutionEvent]) -> String {
    events
        .iter()
        .map(|e| serde_json::to_string(e).expect("event serializes") + "\n")
        .collect()
}
