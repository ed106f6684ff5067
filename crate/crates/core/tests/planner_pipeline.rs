use std::path::PathBuf;

use covillm_core::natb1::{product, products};
use covillm_core::pipeline::Workbench;
use covillm_core::planner::{
    build_prompt, generate_finetune_samples, parse_plan_response, plan_llm, validate_plan,
    FineTuneRecord, FixedBackend, PlanMode, Provenance, DEFAULT_RETRIES,
};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

#[test]
fn case1_prompt_matches_golden_file() {
    let wb = Workbench::default();
    let case = wb.prepare_product(&product(1, 1).unwrap(), 42).unwrap();
    let p = build_prompt(
        &case.product.instruction(),
        &case.perception.grounded,
        &case.classification_text,
        &wb.board,
    );
    let rendered = format!("=== SYSTEM ===\n{}\n=== USER ===\n{}", p.system, p.user);
    let path = golden("case1_product1_prompt.txt");
    if std::env::var_os("COVILLM_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &rendered).unwrap();
    }
    let expected = std::fs::read_to_string(&path).expect("golden file present");
    assert_eq!(rendered, expected);
}

#[test]
fn every_table_product_plans_in_instruction_order() {
    let wb = Workbench::default();
    for p in products() {
        let case = wb.prepare_product(&p, 7).unwrap();
        let plan = wb
            .plan(
                &case.perception,
                &case.classification_text,
                &case.request(PlanMode::Deterministic),
                None,
            )
            .unwrap();
        assert_eq!(
            plan.categories(),
            p.components,
            "case {} product {}",
            p.level,
            p.index
        );
        for st in &plan.subtasks {
            let bound = case
                .perception
                .grounded
                .iter()
                .find(|g| g.base == st.pick)
                .expect("pick is a grounded point");
            assert_eq!(bound.label, Some(st.category));
        }
        assert!(validate_plan(&plan, &case.perception.grounded, &wb.board).is_empty());
    }
}

#[test]
fn echoing_backend_agrees_with_deterministic_path() {
    let wb = Workbench::default();
    for p in products() {
        let case = wb.prepare_product(&p, 8).unwrap();
        let det = wb
            .plan(
                &case.perception,
                &case.classification_text,
                &case.request(PlanMode::Deterministic),
                None,
            )
            .unwrap();
        let echo = FixedBackend::new("echo", det.to_wire_json());
        let req = case.request(PlanMode::Llm);
        let llm = plan_llm(
            &req,
            &case.perception.grounded,
            &case.classification_text,
            &wb.board,
            &echo,
            DEFAULT_RETRIES,
        )
        .unwrap();
        assert_eq!(llm.plan.subtasks, det.subtasks);
        assert_eq!(
            llm.plan.provenance,
            Provenance::Llm {
                model: "echo".into()
            }
        );
    }
}

#[test]
fn hundred_finetune_records_are_sound_and_stable() {
    let wb = Workbench::default();
    let samples = generate_finetune_samples(&wb, 100, 2025).unwrap();
    assert_eq!(samples.len(), 100);
    for (i, s) in samples.iter().enumerate() {
        let line = s.record.to_jsonl_line();
        let back = FineTuneRecord::from_jsonl_line(&line).unwrap();
        let plan = parse_plan_response(&back.assistant, &s.board)
            .unwrap_or_else(|e| panic!("record {i}: {e}"));
        assert!(
            validate_plan(&plan, &s.grounded, &s.board).is_empty(),
            "record {i}"
        );
        assert_eq!(plan.subtasks, s.plan.subtasks);
    }
    let again = generate_finetune_samples(&wb, 100, 2025).unwrap();
    let a: String = samples
        .iter()
        .map(|s| s.record.to_jsonl_line() + "\n")
        .collect();
    let b: String = again
        .iter()
        .map(|s| s.record.to_jsonl_line() + "\n")
        .collect();
    assert_eq!(a, b);
}
