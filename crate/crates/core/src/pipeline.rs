//! End-to-end wiring: frames → candidates → base-frame points → bindings →
//! plan → execution.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{BoardConfig, BoardError};
use crate::camera::CameraIntrinsics;
use crate::classification::{
    associate, parse_classification, AssociationResult, ClassificationStatement, ParseError,
};
use crate::depth::{FilterParams, TemporalState};
use crate::executor::{PlanRun, WorkcellState, DEFAULT_PICK_TOLERANCE_MM};
use crate::frame::DepthFrame;
use crate::geometry::{pixel_to_base, GeometryError, RigidTransform};
use crate::localization::{
    localize, Candidate, Localization, LocalizationError, LocalizationParams,
};
use crate::natb1::{self, CaseError, Product};
use crate::planner::{
    plan_deterministic, plan_llm, AssemblyPlan, GroundedCandidate, InstructionRequest, PlanError,
    PlanMode, PlannerBackend, DEFAULT_RETRIES,
};
use crate::scene::{synthesize_frame, SceneError, SceneSpec};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error("case: {0}")]
    Case(#[from] CaseError),
    #[error("localization: {0}")]
    Localization(#[from] LocalizationError),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("classification: {0}")]
    Classification(#[from] ParseError),
    #[error("planning: {0}")]
    Plan(#[from] PlanError),
    #[error("planning: llm mode needs a configured backend")]
    NoBackend,
    #[error("config: {0}")]
    Config(String),
}

/// Hand-eye calibration result plus the arm's home pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformConfig {
    /// Camera frame in the end-effector frame (fixed mount).
    pub ee_from_camera: RigidTransform,
    /// End-effector pose in the base frame when frames are captured.
    pub home_pose: RigidTransform,
}

impl Default for TransformConfig {
    /// Camera looking straight down from 400 mm above the table origin
    /// offset, with the table plane at base z = 0.
    fn default() -> Self {
        Self {
            ee_from_camera: RigidTransform::from_translation(0.0, -55.0, -40.0),
            home_pose: RigidTransform::from_axis_angle(
                [1.0, 0.0, 0.0],
                std::f64::consts::PI,
                [300.0, 0.0, 360.0],
            ),
        }
    }
}

impl TransformConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn load_board(path: &Path) -> Result<BoardConfig, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    let board: BoardConfig = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    board
        .validate()
        .map_err(|e: BoardError| PipelineError::Config(format!("{}: {e}", path.display())))?;
    Ok(board)
}

/// Everything the pipeline needs besides the per-run inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Workbench {
    pub camera: CameraIntrinsics,
    pub transforms: TransformConfig,
    pub filter: FilterParams,
    pub localization: LocalizationParams,
    pub board: BoardConfig,
    pub pick_tolerance_mm: f64,
}

impl Default for Workbench {
    fn default() -> Self {
        let camera = CameraIntrinsics::default();
        Self {
            localization: LocalizationParams::for_frame(camera.width, camera.height),
            camera,
            transforms: TransformConfig::default(),
            filter: FilterParams::default(),
            board: natb1::default_board(),
            pick_tolerance_mm: DEFAULT_PICK_TOLERANCE_MM,
        }
    }
}

/// Result of the perception half for one frame stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Perception {
    pub localization: Localization,
    pub statements: Vec<ClassificationStatement>,
    pub association: AssociationResult,
    pub grounded: Vec<GroundedCandidate>,
}

/// A benchmark product prepared end to end up to (but excluding) planning.
#[derive(Debug, Clone)]
pub struct PreparedCase {
    pub product: Product,
    pub scene: SceneSpec,
    pub frame: DepthFrame,
    pub classification_text: String,
    pub perception: Perception,
}

impl PreparedCase {
    pub fn request(&self, mode: PlanMode) -> InstructionRequest {
        InstructionRequest {
            instruction: self.product.instruction(),
            mode,
        }
    }
}

impl Workbench {
    pub fn localize(&self, frames: &[DepthFrame]) -> Result<Localization, PipelineError> {
        let mut state = TemporalState::new(self.camera.width, self.camera.height);
        Ok(localize(
            frames,
            &self.filter,
            &self.localization,
            &mut state,
        )?)
    }

    /// Lifts candidates into the base frame at the home pose, attaching the
    /// operator label bound to each.
    pub fn ground(
        &self,
        cands: &[Candidate],
        assoc: Option<&AssociationResult>,
    ) -> Result<Vec<GroundedCandidate>, GeometryError> {
        cands
            .iter()
            .map(|c| {
                let base = pixel_to_base(
                    c,
                    &self.camera,
                    &self.transforms.ee_from_camera,
                    &self.transforms.home_pose,
                )?;
                Ok(GroundedCandidate {
                    candidate: c.clone(),
                    base,
                    label: assoc.and_then(|a| a.label_of(c.id)),
                })
            })
            .collect()
    }

    pub fn perceive(
        &self,
        frames: &[DepthFrame],
        classification_text: &str,
    ) -> Result<Perception, PipelineError> {
        let localization = self.localize(frames)?;
        let statements = parse_classification(classification_text)?;
        let association = associate(
            &statements,
            &localization.candidates,
            &self.localization.roi,
        );
        let grounded = self.ground(&localization.candidates, Some(&association))?;
        Ok(Perception {
            localization,
            statements,
            association,
            grounded,
        })
    }

    pub fn plan(
        &self,
        perception: &Perception,
        classification_text: &str,
        req: &InstructionRequest,
        backend: Option<&dyn PlannerBackend>,
    ) -> Result<AssemblyPlan, PipelineError> {
        match req.mode {
            PlanMode::Deterministic => Ok(plan_deterministic(
                req,
                &perception.association,
                &perception.grounded,
                &self.board,
            )?),
            PlanMode::Llm => {
                let backend = backend.ok_or(PipelineError::NoBackend)?;
                let out = plan_llm(
                    req,
                    &perception.grounded,
                    classification_text,
                    &self.board,
                    backend,
                    DEFAULT_RETRIES,
                )?;
                Ok(out.plan)
            }
        }
    }

    pub fn workcell(&self, grounded: &[GroundedCandidate]) -> WorkcellState {
        WorkcellState::new(grounded, self.board.clone(), self.transforms.home_pose)
    }

    pub fn execute(
        &self,
        grounded: &[GroundedCandidate],
        plan: &AssemblyPlan,
    ) -> (WorkcellState, PlanRun) {
        let mut state = self.workcell(grounded);
        let run = state.execute_plan(plan, self.pick_tolerance_mm);
        (state, run)
    }

    /// Synthesizes a noiseless scene for `product`, localizes it and
    /// derives operator statements from ground truth. Deterministic in `seed`.
    pub fn prepare_product(
        &self,
        product: &Product,
        seed: u64,
    ) -> Result<PreparedCase, PipelineError> {
        let roi = self.localization.roi;
        let scene = natb1::product_scene(product, &self.camera, &roi, seed)?;
        let frame = synthesize_frame(&scene, &self.camera, seed)?;
        let truths = scene.ground_truth(&self.camera)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_57a7);
        let statements = natb1::ground_truth_statements(&truths, &roi, &mut rng);
        let classification_text = natb1::statements_text(&statements);
        let perception = self.perceive(std::slice::from_ref(&frame), &classification_text)?;
        Ok(PreparedCase {
            product: product.clone(),
            scene,
            frame,
            classification_text,
            perception,
        })
    }
}
