use std::fmt::Write as _;

use crate::board::BoardConfig;
use crate::localization::{export_json, Candidate};

use super::GroundedCandidate;

pub const NO_OBJECTS_SENTINEL: &str = "NO OBJECTS DETECTED";

pub const SYSTEM_PROMPT: &str = r#"You are the task planner of a collaborative assembly cell. A robot arm picks components from a table and places them into slots on an assembly board.

Operational rules:
- Answer with exactly one JSON object and nothing else. No prose, no markdown fences.
- The object has the form {"subtasks":[{"index":1,"category":"<size> <category>","pick":{"x":<mm>,"y":<mm>,"z":<mm>},"slot":"<slot id>"}]}.
- index starts at 1 and increases by one per subtask.
- category is one of: small|medium|big followed by gear|circular_pin|rectangular_pin.
- Subtask order follows the order of components in the instruction.

Safety constraints:
- Never invent coordinates. Every pick point must be copied from the BASE FRAME list of a detected object.
- Pick each detected object at most once and use each slot at most once.
- Only use slots from the FREE SLOTS list, and only for the category the slot accepts.

Task knowledge:
- The operator classification lines name a component and where it lies in the image: a grid cell such as top-left or middle-center, an extreme such as leftmost or center, or an ordinal such as 2nd from left.
- Pixel x grows to the right and pixel y grows downwards. Associate each classification line with the detected object whose pixel centroid matches that spatial description, then use that object's base frame coordinates.
- If a component in the instruction has no matching detected object, do not guess."#;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

/// Renders the planner prompt. The output depends only on the inputs, so
/// equal inputs give byte-identical prompts.
pub fn build_prompt(
    instruction: &str,
    cands: &[GroundedCandidate],
    classification_text: &str,
    board: &BoardConfig,
) -> Prompt {
    let mut user = String::new();
    let _ = writeln!(user, "INSTRUCTION\n{}\n", instruction.trim());

    user.push_str("LOCALIZATION\n");
    if cands.is_empty() {
        let _ = writeln!(user, "{NO_OBJECTS_SENTINEL}\n");
    } else {
        let plain: Vec<Candidate> = cands.iter().map(|c| c.candidate.clone()).collect();
        let _ = writeln!(user, "{}\n", export_json(&plain));
        user.push_str("BASE FRAME (mm)\n");
        for c in cands {
            let _ = writeln!(
                user,
                "id {}: x={:.3} y={:.3} z={:.3}",
                c.id(),
                c.base.x,
                c.base.y,
                c.base.z
            );
        }
        user.push('\n');
    }

    user.push_str("CLASSIFICATION\n");
    let lines: Vec<&str> = classification_text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if lines.is_empty() {
        user.push_str("(none)\n");
    }
    for l in lines {
        let _ = writeln!(user, "{l}");
    }
    user.push('\n');

    user.push_str("FREE SLOTS\n");
    let free = board.free_slots();
    if free.is_empty() {
        user.push_str("(none)\n");
    }
    for s in free {
        let _ = writeln!(user, "{} accepts {}", s.id, s.accepts);
    }

    Prompt {
        system: SYSTEM_PROMPT.to_string(),
        user,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localization::BoundingBox;
    use crate::natb1::default_board;

    fn cand(id: usize) -> GroundedCandidate {
        GroundedCandidate {
            candidate: Candidate {
                id,
                cx: 100.0 + id as f64,
                cy: 50.0,
                z_mm: 380,
                area_px: 300,
                bbox: BoundingBox {
                    x: 90,
                    y: 40,
                    w: 20,
                    h: 20,
                },
            },
            base: [300.0 + id as f64, 1.5, 20.0].into(),
            label: None,
        }
    }

    #[test]
    fn empty_scene_has_sentinel() {
        let p = build_prompt("small gear", &[], "", &default_board());
        assert!(p.user.contains(NO_OBJECTS_SENTINEL));
        assert!(!p.user.contains("BASE FRAME"));
    }

    #[test]
    fn lists_each_candidate() {
        let cands: Vec<_> = (0..4).map(cand).collect();
        let p = build_prompt(
            "small gear",
            &cands,
            "small gear: leftmost\n# note\n",
            &default_board(),
        );
        assert_eq!(p.user.lines().filter(|l| l.starts_with("id ")).count(), 4);
        assert!(p.user.contains("id 3: x=303.000 y=1.500 z=20.000"));
        assert!(p.user.contains("small gear: leftmost"));
        assert!(!p.user.contains("# note"));
        assert_eq!(
            p.user.lines().filter(|l| l.contains(" accepts ")).count(),
            18
        );
    }

    #[test]
    fn stable_for_equal_inputs() {
        let cands: Vec<_> = (0..2).map(cand).collect();
        let a = build_prompt(
            "small gear",
            &cands,
            "small gear: leftmost",
            &default_board(),
        );
        let b = build_prompt(
            "small gear",
            &cands,
            "small gear: leftmost",
            &default_board(),
        );
        assert_eq!(a, b);
    }
}
