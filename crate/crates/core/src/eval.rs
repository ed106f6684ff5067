//! Sequence-generation benchmark over the nine task-board products.
//!
//! A trial at a given level plans all three products of that level on
//! freshly generated scenes. It counts as correct when every plan matches
//! the deterministic reference exactly: same categories in the same order,
//! each pick grounded on the same candidate, and the same slots.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::natb1;
use crate::pipeline::{PipelineError, Workbench};
use crate::planner::{
    grounded_at, plan_deterministic, plan_llm, AssemblyPlan, FixedBackend, GroundedCandidate,
    PlanMode, PlannerBackend, DEFAULT_RETRIES, GROUNDING_TOLERANCE_MM,
};
use crate::scene::synthesize_frame;

#[derive(Clone)]
pub enum EvalBackend {
    /// Answers every prompt with the reference plan for that scene.
    Oracle,
    /// Answers every prompt with prose.
    Garbage,
    Live(Arc<dyn PlannerBackend>),
}

impl EvalBackend {
    pub fn name(&self) -> String {
        match self {
            EvalBackend::Oracle => "oracle-mock".into(),
            EvalBackend::Garbage => "garbage-mock".into(),
            EvalBackend::Live(b) => b.model_id(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub level: u8,
    pub trials: usize,
    pub correct: usize,
    pub mean_latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub backend: String,
    pub levels: Vec<LevelReport>,
    /// One line per failed plan attempt.
    pub failures: Vec<String>,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("Backend: {}\n", self.backend);
        let _ = writeln!(
            out,
            "{:<8} | {:>7} | {:>17}",
            "Case", "Correct", "Mean latency (ms)"
        );
        let _ = writeln!(out, "{:-<8}-+-{:->7}-+-{:->17}", "", "", "");
        for l in &self.levels {
            let _ = writeln!(
                out,
                "{:<8} | {:>7} | {:>17.2}",
                format!("Case {}", l.level),
                format!("{}/{}", l.correct, l.trials),
                l.mean_latency_ms
            );
        }
        out
    }
}

fn same_plan(got: &AssemblyPlan, want: &AssemblyPlan, cands: &[GroundedCandidate]) -> bool {
    let id = |p| grounded_at(cands, p, GROUNDING_TOLERANCE_MM).map(GroundedCandidate::id);
    got.len() == want.len()
        && got.subtasks.iter().zip(&want.subtasks).all(|(g, w)| {
            g.category == w.category
                && g.slot == w.slot
                && id(&g.pick).is_some()
                && id(&g.pick) == id(&w.pick)
        })
}

pub fn scene_seed(seed: u64, level: u8, trial: usize, index: u8) -> u64 {
    seed.wrapping_mul(1_000_003) ^ ((level as u64) << 40) ^ ((trial as u64) << 20) ^ index as u64
}

/// Runs `trials` trials per level. Backend failures count as incorrect
/// trials; only scene preparation errors abort.
pub fn run_eval(
    wb: &Workbench,
    backend: &EvalBackend,
    trials: usize,
    seed: u64,
) -> Result<EvalReport, PipelineError> {
    let mut levels = Vec::new();
    let mut failures = Vec::new();
    for level in 1..=3u8 {
        let mut correct = 0;
        let mut latencies = Vec::new();
        for trial in 0..trials {
            let mut all_ok = true;
            for index in 1..=3u8 {
                let product = natb1::product(level, index)?;
                let case = wb.prepare_product(&product, scene_seed(seed, level, trial, index))?;
                let p = &case.perception;
                let req = case.request(PlanMode::Llm);
                let reference = plan_deterministic(&req, &p.association, &p.grounded, &wb.board)?;
                let fixed;
                let b: &dyn PlannerBackend = match backend {
                    EvalBackend::Oracle => {
                        fixed = FixedBackend::new("oracle-mock", reference.to_wire_json());
                        &fixed
                    }
                    EvalBackend::Garbage => {
                        fixed = FixedBackend::new(
                            "garbage-mock",
                            "Sure! First pick up the gear, then the pin.",
                        );
                        &fixed
                    }
                    EvalBackend::Live(b) => b.as_ref(),
                };
                let started = Instant::now();
                let outcome = plan_llm(
                    &req,
                    &p.grounded,
                    &case.classification_text,
                    &wb.board,
                    b,
                    DEFAULT_RETRIES,
                );
                latencies.push(started.elapsed().as_secs_f64() * 1e3);
                match outcome {
                    Ok(out) if same_plan(&out.plan, &reference, &p.grounded) => {}
                    Ok(_) => {
                        all_ok = false;
                        failures.push(format!(
                            "case {level} product {index} trial {}: plan differs from reference",
                            trial + 1
                        ));
                    }
                    Err(e) => {
                        all_ok = false;
                        failures.push(format!(
                            "case {level} product {index} trial {}: {e}",
                            trial + 1
                        ));
                    }
                }
            }
            correct += usize::from(all_ok);
        }
        let mean_latency_ms = if latencies.is_empty() {
            0.0
        } else {
            latencies.iter().sum::<f64>() / latencies.len() as f64
        };
        levels.push(LevelReport {
            level,
            trials,
            correct,
            mean_latency_ms,
        });
    }
    Ok(EvalReport {
        backend: backend.name(),
        levels,
        failures,
    })
}

/// Detection accuracy over randomized scenes. Each ground-truth component
/// is matched to the nearest unused candidate within `MATCH_RADIUS_PX`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub scenes: usize,
    pub components: usize,
    pub detected: usize,
    pub spurious: usize,
    pub max_centroid_error_px: f64,
    pub max_z_error_mm: f64,
}

impl LocalizationReport {
    pub fn recall(&self) -> f64 {
        if self.components == 0 {
            1.0
        } else {
            self.detected as f64 / self.components as f64
        }
    }
}

const MATCH_RADIUS_PX: f64 = 8.0;

/// Localizes `scenes` random scenes of one to four components, each
/// synthesized into `frames` consecutive noisy frames.
pub fn localization_benchmark(
    wb: &Workbench,
    scenes: usize,
    noise_sigma_mm: f64,
    dropout_rate: f64,
    frames: usize,
    seed: u64,
) -> Result<LocalizationReport, PipelineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = LocalizationReport {
        scenes,
        components: 0,
        detected: 0,
        spurious: 0,
        max_centroid_error_px: 0.0,
        max_z_error_mm: 0.0,
    };
    for _ in 0..scenes {
        let n = rng.random_range(1..=4);
        let scene = natb1::random_scene(
            n,
            &wb.camera,
            &wb.localization.roi,
            noise_sigma_mm,
            dropout_rate,
            &mut rng,
        )?;
        let truths = scene.ground_truth(&wb.camera)?;
        let stream = (0..frames.max(1))
            .map(|_| synthesize_frame(&scene, &wb.camera, rng.random()))
            .collect::<Result<Vec<_>, _>>()?;
        let cands = wb.localize(&stream)?.candidates;
        let mut used = vec![false; cands.len()];
        report.components += truths.len();
        for t in &truths {
            let (tx, ty) = t.raster_centroid();
            let best = cands
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .map(|(i, c)| (i, ((c.cx - tx).powi(2) + (c.cy - ty).powi(2)).sqrt()))
                .filter(|(_, d)| *d <= MATCH_RADIUS_PX)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((i, d)) = best {
                used[i] = true;
                report.detected += 1;
                report.max_centroid_error_px = report.max_centroid_error_px.max(d);
                let dz = (f64::from(cands[i].z_mm) - f64::from(t.top_depth_mm)).abs();
                report.max_z_error_mm = report.max_z_error_mm.max(dz);
            }
        }
        report.spurious += used.iter().filter(|u| !**u).count();
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_trial_counts_out_of_one() {
        let r = run_eval(&Workbench::default(), &EvalBackend::Oracle, 1, 5).unwrap();
        assert!(r.levels.iter().all(|l| l.trials == 1 && l.correct == 1));
        assert!(r
            .to_table()
            .lines()
            .any(|l| l.starts_with("Case 2") && l.contains("1/1")));
    }

    #[test]
    fn garbage_scores_zero() {
        let r = run_eval(&Workbench::default(), &EvalBackend::Garbage, 1, 5).unwrap();
        assert!(r.levels.iter().all(|l| l.correct == 0));
        assert_eq!(r.failures.len(), 9);
    }
}
