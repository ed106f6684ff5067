use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::board::BoardConfig;
use crate::label::ComponentLabel;
use crate::natb1;
use crate::pipeline::{PipelineError, Workbench};

use super::{build_prompt, plan_deterministic, AssemblyPlan, GroundedCandidate, PlanMode};

/// One chat-format training example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FineTuneRecord {
    pub system: String,
    pub user: String,
    pub assistant: String,
}

#[derive(Serialize, Deserialize)]
struct Message {
    role: String,
    content: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    messages: Vec<Message>,
}

impl FineTuneRecord {
    /// `{"messages":[system, user, assistant]}` on a single line.
    pub fn to_jsonl_line(&self) -> String {
        let msg = |role: &str, content: &str| Message {
            role: role.into(),
            content: content.into(),
        };
        let line = Line {
            messages: vec![
                msg("system", &self.system),
                msg("user", &self.user),
                msg("assistant", &self.assistant),
            ],
        };
        serde_json::to_string(&line).expect("record serializes")
    }

    pub fn from_jsonl_line(line: &str) -> Result<Self, String> {
        let parsed: Line = serde_json::from_str(line).map_err(|e| e.to_string())?;
        match parsed.messages.as_slice() {
            [s, u, a] if s.role == "system" && u.role == "user" && a.role == "assistant" => {
                Ok(Self {
                    system: s.content.clone(),
                    user: u.content.clone(),
                    assistant: a.content.clone(),
                })
            }
            _ => Err("expected system, user and assistant messages in that order".into()),
        }
    }
}

/// A record together with the context it was generated from, so the
/// assistant answer can be checked against it.
#[derive(Debug, Clone)]
pub struct FineTuneSample {
    pub record: FineTuneRecord,
    pub board: BoardConfig,
    pub grounded: Vec<GroundedCandidate>,
    pub plan: AssemblyPlan,
}

/// Marks a random subset of slots occupied while keeping enough free slots
/// for every mention in `needed`.
fn vary_board(board: &BoardConfig, needed: &[ComponentLabel], rng: &mut impl Rng) -> BoardConfig {
    let mut board = board.clone();
    let ids: Vec<String> = board.slots.iter().map(|s| s.id.clone()).collect();
    for id in ids {
        if !rng.random_bool(0.25) {
            continue;
        }
        let accepts = board.slot(&id).expect("own id").accepts;
        let want = needed.iter().filter(|&&l| l == accepts).count();
        if board.free_slots_for(accepts).len() > want {
            board.slot_mut(&id).expect("own id").occupied = true;
        }
    }
    board
}

pub fn generate_finetune_samples(
    wb: &Workbench,
    count: usize,
    seed: u64,
) -> Result<Vec<FineTuneSample>, PipelineError> {
    let products = natb1::products();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    while samples.len() < count {
        let product = products.choose(&mut rng).expect("nine products");
        let scene_seed: u64 = rng.random();
        let case = wb.prepare_product(product, scene_seed)?;
        let board = vary_board(&wb.board, &product.components, &mut rng);
        let req = case.request(PlanMode::Llm);
        let p = &case.perception;
        let plan = plan_deterministic(&req, &p.association, &p.grounded, &board)?;
        let prompt = build_prompt(
            &req.instruction,
            &p.grounded,
            &case.classification_text,
            &board,
        );
        samples.push(FineTuneSample {
            record: FineTuneRecord {
                system: prompt.system,
                user: prompt.user,
                assistant: plan.to_wire_json(),
            },
            board,
            grounded: p.grounded.clone(),
            plan,
        });
    }
    Ok(samples)
}

/// Chat-format examples over random benchmark scenes. Deterministic in `seed`.
pub fn generate_finetune_dataset(
    wb: &Workbench,
    count: usize,
    seed: u64,
) -> Result<Vec<FineTuneRecord>, PipelineError> {
    Ok(generate_finetune_samples(wb, count, seed)?
        .into_iter()
        .map(|s| s.record)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::{parse_plan_response, validate_plan};

    #[test]
    fn jsonl_round_trip() {
        let r = FineTuneRecord {
            system: "s\n\"q\"".into(),
            user: "u".into(),
            assistant: "{}".into(),
        };
        let line = r.to_jsonl_line();
        assert!(!line.contains('\n'));
        assert!(line.starts_with(r#"{"messages":[{"role":"system""#));
        assert_eq!(FineTuneRecord::from_jsonl_line(&line).unwrap(), r);
        assert!(FineTuneRecord::from_jsonl_line(r#"{"messages":[]}"#).is_err());
    }

    #[test]
    fn single_record_mentions_its_candidates() {
        let wb = Workbench::default();
        let samples = generate_finetune_samples(&wb, 1, 3).unwrap();
        let s = &samples[0];
        for g in &s.grounded {
            assert!(s.record.user.contains(&format!(
                "id {}: x={:.3} y={:.3} z={:.3}",
                g.id(),
                g.base.x,
                g.base.y,
                g.base.z
            )));
        }
        let plan = parse_plan_response(&s.record.assistant, &s.board).unwrap();
        assert!(validate_plan(&plan, &s.grounded, &s.board).is_empty());
    }

    #[test]
    fn deterministic_in_seed() {
        let wb = Workbench::default();
        let a = generate_finetune_dataset(&wb, 3, 11).unwrap();
        let b = generate_finetune_dataset(&wb, 3, 11).unwrap();
        assert_eq!(a, b);
    }
}
