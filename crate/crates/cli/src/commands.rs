use std::fmt;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use covillm_core::eval::{run_eval, EvalBackend};
use covillm_core::executor::events_to_jsonl;
use covillm_core::geometry::{valid_camera_height_range, ComponentFootprintSpec};
use covillm_core::natb1::{footprint_specs, product, OPERATING_HEIGHT_MM};
use covillm_core::pipeline::Workbench;
use covillm_core::planner::{
    generate_finetune_dataset, ChatCompletionsBackend, InstructionRequest, PlanMode, PlannerBackend,
};
use covillm_core::scene::synthesize_frame;
use covillm_core::{DepthFrame, SceneSpec};
use covillm_service::ServiceConfig;
use serde_json::json;

use crate::{Cli, Command, EvalBackendArg};

/// Marks an error as the caller's fault (bad flags, config, missing key),
/// which exits with status 2 instead of 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.is::<UsageError>()) {
        2
    } else {
        1
    }
}

/// Joins the error chain, skipping causes whose text the outer message
/// already includes (several core errors embed their source).
pub fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn load_config(cli: &Cli) -> Result<ServiceConfig> {
    match &cli.config {
        Some(path) => ServiceConfig::load(path).map_err(|e| usage(e.to_string())),
        None => Ok(ServiceConfig::default()),
    }
}

fn workbench(config: &ServiceConfig) -> Result<Workbench> {
    config.workbench().map_err(|e| usage(e.to_string()))
}

/// The configured chat-completions backend; a missing key is a usage error
/// raised before any network traffic.
fn live_backend(config: &ServiceConfig) -> Result<Arc<dyn PlannerBackend>> {
    let backend = ChatCompletionsBackend::from_env(config.backend.clone().unwrap_or_default())
        .map_err(|e| usage(format!("config: {e}")))?;
    Ok(Arc::new(backend))
}

pub fn dispatch(cli: &Cli) -> Result<ExitCode> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::GenScene {
            level,
            product,
            out,
        } => gen_scene(cli, &config, *level, *product, out),
        Command::Run {
            scene,
            classification,
            instruction,
            instruction_file,
            mode,
            events,
        } => {
            let instruction = match (instruction, instruction_file) {
                (Some(text), _) => text.clone(),
                (None, Some(path)) => read_text(path)?.trim().to_string(),
                (None, None) => {
                    return Err(usage(
                        "one of --instruction or --instruction-file is required",
                    ))
                }
            };
            run(
                cli,
                &config,
                scene,
                classification,
                InstructionRequest {
                    instruction,
                    mode: (*mode).into(),
                },
                events.as_deref(),
            )
        }
        Command::Eval { backend, trials } => eval(cli, &config, *backend, *trials as usize),
        Command::GenFinetune { count, out } => gen_finetune(cli, &config, *count as usize, out),
        Command::HeightRange { spec, area_min } => {
            height_range(cli, &config, spec.as_deref(), *area_min)
        }
        Command::Serve => serve(config),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn gen_scene(
    cli: &Cli,
    config: &ServiceConfig,
    level: u8,
    index: u8,
    out: &Path,
) -> Result<ExitCode> {
    let wb = workbench(config)?;
    let product = product(level, index).map_err(|e| usage(e.to_string()))?;
    let case = wb.prepare_product(&product, cli.seed)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let write = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = out.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
    };
    write(
        "scene.json",
        serde_json::to_string_pretty(&case.scene)?.as_bytes(),
    )?;
    write("frame.cvlm", &case.frame.to_bytes()?)?;
    write("frame.pgm", case.frame.to_pgm().as_bytes())?;
    write("classification.txt", case.classification_text.as_bytes())?;
    write(
        "instruction.txt",
        format!("{}\n", product.instruction()).as_bytes(),
    )?;
    if cli.json {
        let labels: Vec<_> = case.scene.components.iter().map(|c| c.label).collect();
        println!(
            "{}",
            json!({ "out": out, "level": level, "product": index, "components": labels })
        );
    } else {
        println!(
            "case {level} product {index}: {} -> {}",
            product.instruction(),
            out.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn load_frame(path: &Path, wb: &Workbench, seed: u64) -> Result<DepthFrame> {
    if path.extension().is_some_and(|e| e == "cvlm") {
        let bytes = fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        return DepthFrame::from_bytes(&bytes)
            .with_context(|| format!("scene: {}", path.display()));
    }
    let scene: SceneSpec = serde_json::from_str(&read_text(path)?)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    synthesize_frame(&scene, &wb.camera, seed).context("scene")
}

fn run(
    cli: &Cli,
    config: &ServiceConfig,
    scene: &Path,
    classification: &Path,
    req: InstructionRequest,
    events_out: Option<&Path>,
) -> Result<ExitCode> {
    let wb = workbench(config)?;
    let backend = match req.mode {
        PlanMode::Llm => Some(live_backend(config)?),
        PlanMode::Deterministic => None,
    };
    let text = read_text(classification)?;
    let frame = load_frame(scene, &wb, cli.seed)?;
    let perception = wb.perceive(std::slice::from_ref(&frame), &text)?;
    let plan = wb.plan(&perception, &text, &req, backend.as_deref())?;
    let (state, run) = wb.execute(&perception.grounded, &plan);
    if let Some(path) = events_out {
        fs::write(path, events_to_jsonl(&run.events))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if cli.json {
        let out = json!({
            "candidates": perception.localization.candidates,
            "association": perception.association,
            "plan": plan,
            "events": run.events,
            "completed": run.completed,
            "error": run.error.as_ref().map(ToString::to_string),
            "board": state.board,
        });
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!(
            "{} candidate(s); plan ({} step(s)):",
            perception.localization.candidates.len(),
            plan.len()
        );
        for st in &plan.subtasks {
            println!(
                "  {}. {} at ({:.1}, {:.1}, {:.1}) -> {}",
                st.index, st.category, st.pick.x, st.pick.y, st.pick.z, st.slot
            );
        }
        print!("{}", events_to_jsonl(&run.events));
    }
    match run.error {
        Some(e) => Err(anyhow::anyhow!("execution: {e}")),
        None => Ok(ExitCode::SUCCESS),
    }
}

fn eval(
    cli: &Cli,
    config: &ServiceConfig,
    backend: EvalBackendArg,
    trials: usize,
) -> Result<ExitCode> {
    let wb = workbench(config)?;
    let backend = match backend {
        EvalBackendArg::OracleMock => EvalBackend::Oracle,
        EvalBackendArg::GarbageMock => EvalBackend::Garbage,
        EvalBackendArg::Live => EvalBackend::Live(live_backend(config)?),
    };
    let report = run_eval(&wb, &backend, trials, cli.seed)?;
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.to_table());
        for f in &report.failures {
            log::info!("{f}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_finetune(cli: &Cli, config: &ServiceConfig, count: usize, out: &Path) -> Result<ExitCode> {
    let wb = workbench(config)?;
    let records = generate_finetune_dataset(&wb, count, cli.seed)?;
    let mut text = String::new();
    for r in &records {
        text.push_str(&r.to_jsonl_line());
        text.push('\n');
    }
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    if cli.json {
        println!("{}", json!({ "out": out, "records": records.len() }));
    } else {
        println!("wrote {} record(s) to {}", records.len(), out.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn height_range(
    cli: &Cli,
    config: &ServiceConfig,
    spec: Option<&Path>,
    area_min: Option<usize>,
) -> Result<ExitCode> {
    let wb = workbench(config)?;
    let specs: Vec<ComponentFootprintSpec> = match spec {
        Some(path) => serde_json::from_str(&read_text(path)?)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?,
        None => footprint_specs(),
    };
    let mut params = wb.localization;
    if let Some(a) = area_min {
        params.area_min_px = a;
    }
    let rows: Vec<_> = specs
        .iter()
        .map(|s| {
            let range = valid_camera_height_range(s, &params, &wb.camera);
            let covers = range
                .is_some_and(|(lo, hi)| lo <= OPERATING_HEIGHT_MM && OPERATING_HEIGHT_MM <= hi);
            (s, range, covers)
        })
        .collect();
    if cli.json {
        let out: Vec<_> = rows
            .iter()
            .map(|(s, r, covers)| {
                json!({
                    "category": s.category,
                    "z_lo_mm": r.map(|r| r.0),
                    "z_hi_mm": r.map(|r| r.1),
                    "contains_operating_height": covers,
                })
            })
            .collect();
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else {
        println!("{:<24} {:>10} {:>10}", "category", "z_lo (mm)", "z_hi (mm)");
        for (s, range, covers) in &rows {
            match range {
                Some((lo, hi)) => {
                    let flag = if *covers { "" } else { "  excludes 400 mm" };
                    println!("{:<24} {lo:>10.1} {hi:>10.1}{flag}", s.category);
                }
                None => println!(
                    "{:<24} {:>10} {:>10}  excludes 400 mm",
                    s.category, "empty", "empty"
                ),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn serve(config: ServiceConfig) -> Result<ExitCode> {
    // Validate before starting the runtime so config mistakes exit with 2.
    config.workbench().map_err(|e| usage(e.to_string()))?;
    let rt = tokio::runtime::Runtime::new().context("starting runtime")?;
    rt.block_on(covillm_service::serve(config))?;
    Ok(ExitCode::SUCCESS)
}
