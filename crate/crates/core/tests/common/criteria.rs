//! One check per acceptance criterion. Each returns a short summary on success
//! and the first violation on failure.

use std::cell::Cell;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use phoneagent::agents::prompts::{format_shortcut, ERROR_MARKER, FUTURE_MARKER};
use phoneagent::agents::{admit_proposals, evolve_shortcuts, EvolutionInput, ModelSession};
use phoneagent::cli;
use phoneagent::demo;
use phoneagent::device::{AppGraph, Device, SimDevice};
use phoneagent::eval::{
    action_accuracy, reflection_accuracy, satisfaction_score, score, sss_curve, sss_regression, termination_error_rate,
    AnnotationRecord, EvalError, Fraction, RubricItem, RubricKind, RubricMark, RubricSheet, StepMark,
};
use phoneagent::gateway::{AgentRole, AuditLog, MatchKey, ScriptBook, ScriptedBackend};
use phoneagent::memory::{
    load_memory, save_memory, Action, ArgValue, AtomicOperation, LongTermMemory, OrchestratorConfig, Outcome,
    Provenance, TaskQuery,
};
use phoneagent::orchestrator::{
    read_trajectory, ExitReason, Manifest, AUDIT_FILE, MANIFEST_FILE, MEMORY_AFTER_FILE, SCREENSHOT_DIR,
    TRAJECTORY_FILE,
};
use phoneagent::shortcut::{
    bind_arguments, execute_shortcut, tap_type_and_enter, validate_shortcut, GateDecision, GateMode, OperationTemplate,
    Shortcut, Slot, ValidatedShortcut,
};

use super::*;

pub type Verdict = Result<String, String>;

fn runner(cases: u32) -> TestRunner {
    let mut config = Config::with_cases(cases);
    config.failure_persistence = None;
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------- 1. golden run

pub const GOLDEN_FILES: [&str; 4] = [TRAJECTORY_FILE, MANIFEST_FILE, AUDIT_FILE, MEMORY_AFTER_FILE];
pub const SCREEN_DIGESTS: &str = "screenshots.sha256";

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/demo")
}

/// Every byte-stable artifact of a scenario run, keyed by relative path.
/// Screenshots are represented by one digest file per task.
pub fn collect_artifacts(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    files.insert("summary.json".to_string(), fs::read(root.join("summary.json")).unwrap());
    let mut dirs: Vec<_> = fs::read_dir(root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for dir in dirs {
        let name = dir.file_name().unwrap().to_string_lossy().to_string();
        for f in GOLDEN_FILES {
            files.insert(format!("{name}/{f}"), fs::read(dir.join(f)).unwrap());
        }
        let mut shots: Vec<_> = fs::read_dir(dir.join(SCREENSHOT_DIR))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        shots.sort();
        let digests: String = shots
            .iter()
            .map(|p| {
                format!(
                    "{}  {}\n",
                    sha256_hex(&fs::read(p).unwrap()),
                    p.file_name().unwrap().to_string_lossy()
                )
            })
            .collect();
        files.insert(format!("{name}/{SCREEN_DIGESTS}"), digests.into_bytes());
    }
    files
}

fn first_difference(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Option<String> {
    let keys: std::collections::BTreeSet<_> = a.keys().chain(b.keys()).collect();
    keys.into_iter().find(|k| a.get(*k) != b.get(*k)).cloned()
}

pub fn demo_run_artifacts() -> (BTreeMap<String, Vec<u8>>, Vec<ExitReason>) {
    let tmp = tempfile::tempdir().unwrap();
    let memory_path = tmp.path().join("memory.json");
    let out = tmp.path().join("run");
    let run = run_demo(true, demo_seed(), Some(&memory_path), Some(&out));
    let exits = run.runs.iter().map(|r| r.trajectory.exit_reason).collect();
    (collect_artifacts(&out), exits)
}

pub fn golden_run() -> Verdict {
    let started = Instant::now();
    let (first, exits) = demo_run_artifacts();
    let (second, _) = demo_run_artifacts();
    let elapsed = started.elapsed();

    if exits.len() != 5 || exits.iter().any(|e| *e != ExitReason::SelfReportedSuccess) {
        return Err(format!("demo exits were {exits:?}"));
    }
    if let Some(file) = first_difference(&first, &second) {
        return Err(format!("two consecutive runs differ in {file}"));
    }
    if elapsed >= Duration::from_secs(10) {
        return Err(format!("two runs took {elapsed:?}"));
    }

    let golden = golden_dir();
    if std::env::var("UPDATE_GOLDEN").as_deref() == Ok("1") {
        if golden.exists() {
            fs::remove_dir_all(&golden).unwrap();
        }
        for (rel, bytes) in &first {
            let path = golden.join(rel);
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(path, bytes).unwrap();
        }
        return Ok(format!("regenerated {} golden files", first.len()));
    }
    if !golden.exists() {
        return Err(format!(
            "no golden files at {}; run with UPDATE_GOLDEN=1",
            golden.display()
        ));
    }
    let expected = collect_golden(&golden);
    if let Some(file) = first_difference(&first, &expected) {
        return Err(format!("{file} does not match the golden copy"));
    }
    Ok(format!(
        "{} files byte-identical over two runs in {:.2}s",
        first.len(),
        elapsed.as_secs_f64()
    ))
}

fn collect_golden(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                files.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    files
}

// ---------------------------------------------------------------- 2. termination taxonomy

/// Five tasks on the blank phone, each built to end one particular way.
pub fn termination_tasks() -> Vec<(TaskQuery, ScriptBook, ExitReason)> {
    let mut tasks = Vec::new();

    let mut b = ScriptBuilder::new("clean");
    b.with_defaults()
        .always(AgentRole::ActionReflector, reflector_reply(Outcome::A))
        .at(AgentRole::Operator, 1, operator_reply("Wait()"))
        .at(AgentRole::Operator, 2, operator_reply("Stop(\"done\")"));
    tasks.push((
        TaskQuery::new("clean", "Wait once, then stop."),
        b.build(),
        ExitReason::SelfReportedSuccess,
    ));

    let mut b = ScriptBuilder::new("cap");
    b.with_defaults()
        .always(AgentRole::ActionReflector, reflector_reply(Outcome::A))
        .always(AgentRole::Operator, operator_reply("Swipe(100, 300, 100, 100)"));
    tasks.push((
        TaskQuery::new("cap", "Scroll forever."),
        b.build(),
        ExitReason::MaxIterations,
    ));

    let mut b = ScriptBuilder::new("errors");
    b.with_defaults()
        .always(AgentRole::ActionReflector, reflector_reply(Outcome::C))
        .always(AgentRole::Operator, operator_reply("Tap(50, 50)"));
    tasks.push((
        TaskQuery::new("errors", "Tap a dead spot."),
        b.build(),
        ExitReason::MaxConsecutiveErrors,
    ));

    let mut b = ScriptBuilder::new("repeats");
    b.with_defaults()
        .always(AgentRole::ActionReflector, reflector_reply(Outcome::A))
        .always(AgentRole::Operator, operator_reply("Tap(50, 50)"));
    tasks.push((
        TaskQuery::new("repeats", "Tap the same spot."),
        b.build(),
        ExitReason::MaxRepeatedActions,
    ));

    let mut b = ScriptBuilder::new("garbled");
    b.with_defaults()
        .always(AgentRole::ActionReflector, reflector_reply(Outcome::A))
        .always(AgentRole::Operator, "I would probably tap somewhere near the top.");
    tasks.push((
        TaskQuery::new("garbled", "Do anything."),
        b.build(),
        ExitReason::OtherError,
    ));

    tasks
}

pub fn termination_taxonomy() -> Verdict {
    let config = OrchestratorConfig::default();
    let memory = LongTermMemory::new();
    let mut exits = Vec::new();
    for (query, book, expected) in termination_tasks() {
        let (run, _) = run_single(blank_graph(), &config, book, &query, &memory);
        let t = &run.trajectory;
        if t.exit_reason != expected {
            return Err(format!(
                "{} exited {} ({}), expected {expected}",
                query.id, t.exit_reason, t.exit_detail
            ));
        }
        let expected_steps = match expected {
            ExitReason::SelfReportedSuccess => 2,
            ExitReason::MaxIterations => config.max_iterations,
            ExitReason::MaxConsecutiveErrors => config.max_consecutive_errors,
            ExitReason::MaxRepeatedActions => config.max_repeated_actions + 1,
            ExitReason::OtherError => 1,
        };
        if t.iterations() != expected_steps {
            return Err(format!(
                "{} took {} steps, expected {expected_steps}",
                query.id,
                t.iterations()
            ));
        }
        exits.push(t.exit_reason);
    }
    let te = termination_error_rate(&exits);
    if te != Ratio::new(4, 5) {
        return Err(format!("termination error rate {te}, expected 4/5"));
    }
    Ok(format!("five distinct exits, TE = {te}"))
}

// ---------------------------------------------------------------- 3. escalation

/// Branch condition for escalation at 0-based step `t`: the k outcomes just
/// before it all failed.
pub fn escalation_oracle(outcomes: &[Outcome], t: usize, k: usize) -> bool {
    t >= k && outcomes[t - k..t].iter().all(|o| matches!(o, Outcome::B | Outcome::C))
}

pub fn escalation_script(outcomes: &[Outcome]) -> ScriptBook {
    let mut b = ScriptBuilder::new("esc");
    b.with_defaults();
    for (i, o) in outcomes.iter().enumerate() {
        b.at(
            AgentRole::Operator,
            i + 1,
            operator_reply(&format!("Tap({}, 200)", 10 + i)),
        )
        .at(AgentRole::ActionReflector, i + 1, reflector_reply(*o));
    }
    b.at(
        AgentRole::Operator,
        outcomes.len() + 1,
        operator_reply("Stop(\"done\")"),
    );
    b.build()
}

/// Config where only escalation is in play: no cap is reachable.
pub fn escalation_config() -> OrchestratorConfig {
    OrchestratorConfig {
        max_iterations: 64,
        max_consecutive_errors: 64,
        max_repeated_actions: 64,
        ..OrchestratorConfig::default()
    }
}

pub fn check_escalation(outcomes: &[Outcome]) -> Result<(), String> {
    let config = escalation_config();
    let k = config.k_escalation;
    let query = TaskQuery::new("esc", "Tap around.");
    let (run, _) = run_single(
        blank_graph(),
        &config,
        escalation_script(outcomes),
        &query,
        &LongTermMemory::new(),
    );
    if run.trajectory.exit_reason != ExitReason::SelfReportedSuccess {
        return Err(format!("run ended with {}", run.trajectory.exit_reason));
    }
    let managers = requests_of(&run, AgentRole::Manager);
    if managers.len() != outcomes.len() + 1 {
        return Err(format!(
            "{} manager calls for {} outcomes",
            managers.len(),
            outcomes.len()
        ));
    }
    for (t, entry) in managers.iter().enumerate() {
        let text = entry.request_text();
        let payload: Vec<&str> = text.lines().filter(|l| l.starts_with(ERROR_MARKER)).collect();
        let expected = escalation_oracle(outcomes, t, k);
        if expected {
            let wanted: Vec<String> = (t - k..t).map(|i| format!("{ERROR_MARKER}{i}]")).collect();
            let ok = payload.len() == k && payload.iter().zip(&wanted).all(|(l, w)| l.starts_with(w.as_str()));
            if !ok {
                return Err(format!(
                    "{outcomes:?}: step {t} should carry errors of steps {wanted:?}, got {payload:?}"
                ));
            }
        } else if !payload.is_empty() {
            return Err(format!(
                "{outcomes:?}: step {t} got an error payload it should not have"
            ));
        }
        if run.trajectory.steps[t].escalated != expected {
            return Err(format!("{outcomes:?}: trajectory escalation flag wrong at step {t}"));
        }
    }
    Ok(())
}

pub fn outcome_strategy() -> impl Strategy<Value = Outcome> {
    prop_oneof![Just(Outcome::A), Just(Outcome::B), Just(Outcome::C)]
}

pub fn escalation_contract() -> Verdict {
    let mut runner = runner(1000);
    let escalated_cases = Cell::new(0usize);
    let cases = Cell::new(0usize);
    let result = runner.run(&prop::collection::vec(outcome_strategy(), 1..12), |outcomes| {
        cases.set(cases.get() + 1);
        if (0..outcomes.len() + 1).any(|t| escalation_oracle(&outcomes, t, 2)) {
            escalated_cases.set(escalated_cases.get() + 1);
        }
        check_escalation(&outcomes).map_err(TestCaseError::fail)
    });
    match result {
        Ok(()) => Ok(format!(
            "{} sequences, {} with escalation, 0 violations",
            cases.get(),
            escalated_cases.get()
        )),
        Err(e) => Err(e.to_string()),
    }
}

// ---------------------------------------------------------------- 4. shortcut equivalence

pub const EQ_WIDTH: u32 = 400;
pub const EQ_HEIGHT: u32 = 800;
const TEXTS: [&str; 4] = ["abc", "hello world", "42", "coffee near me"];

/// A random but valid single-app graph on a 400x800 screen.
pub fn random_graph(rng: &mut ChaCha8Rng) -> AppGraph {
    use phoneagent::device::{
        AppSpec, BBox, Element, ElementKind, Page, PopupRule, ScreenSize, SwipeDirection, Transition, Trigger,
    };

    let n_pages = rng.gen_range(1..=4);
    let names: Vec<String> = std::iter::once("home".to_string())
        .chain((1..=n_pages).map(|i| format!("p{i}")))
        .collect();
    let mut pages = Vec::new();
    let mut transitions = Vec::new();
    let pick = |rng: &mut ChaCha8Rng| names.choose(rng).unwrap().clone();
    for name in &names {
        let mut elements = Vec::new();
        for j in 0..rng.gen_range(0..=4) {
            let kind = *[
                ElementKind::Button,
                ElementKind::TextField,
                ElementKind::ListItem,
                ElementKind::StaticText,
            ]
            .choose(rng)
            .unwrap();
            let id = if kind == ElementKind::TextField {
                format!("field{j}")
            } else {
                format!("{name}.e{j}")
            };
            let y0 = 40 + j * 180;
            elements.push(Element {
                id: id.clone(),
                kind,
                label: format!("{name} {j}"),
                bbox: BBox::new(20, y0, 380, y0 + 140),
                content: None,
                clears: None,
            });
            if rng.gen_bool(0.6) {
                transitions.push(Transition {
                    from: name.clone(),
                    on: Trigger::Tap(id.clone()),
                    to: pick(rng),
                });
            }
            if kind == ElementKind::TextField && rng.gen_bool(0.6) {
                transitions.push(Transition {
                    from: name.clone(),
                    on: Trigger::Submit(id),
                    to: pick(rng),
                });
            }
        }
        for dir in [
            SwipeDirection::Up,
            SwipeDirection::Down,
            SwipeDirection::Left,
            SwipeDirection::Right,
        ] {
            if rng.gen_bool(0.3) {
                transitions.push(Transition {
                    from: name.clone(),
                    on: Trigger::Swipe(dir),
                    to: pick(rng),
                });
            }
        }
        if rng.gen_bool(0.3) {
            transitions.push(Transition {
                from: name.clone(),
                on: Trigger::Back,
                to: pick(rng),
            });
        }
        let in_app = name != "home";
        pages.push(Page {
            name: name.clone(),
            app: in_app.then(|| "App".to_string()),
            elements,
            loads_into: (in_app && rng.gen_bool(0.2)).then(|| pick(rng)),
        });
    }
    let mut popups = Vec::new();
    if rng.gen_bool(0.3) {
        pages.push(Page {
            name: "overlay".into(),
            app: None,
            elements: vec![Element {
                id: "overlay.close".into(),
                kind: ElementKind::Button,
                label: "Close".into(),
                bbox: BBox::new(300, 20, 380, 100),
                content: None,
                clears: None,
            }],
            loads_into: None,
        });
        popups.push(PopupRule {
            page: pick(rng),
            after_step: rng.gen_range(0..6),
            overlay: "overlay".into(),
            dismiss: "overlay.close".into(),
        });
    }
    let graph = AppGraph {
        name: "random".into(),
        screen: ScreenSize {
            width: EQ_WIDTH,
            height: EQ_HEIGHT,
        },
        apps: vec![AppSpec {
            name: "App".into(),
            entry: "p1".into(),
        }],
        pages,
        transitions,
        popups,
    };
    graph.validate().expect("generated graph is valid");
    graph
}

fn int_slot(rng: &mut ChaCha8Rng, arg: &str, max: u32) -> Slot {
    if rng.gen_bool(0.5) {
        Slot::Argument(arg.into())
    } else {
        Slot::Literal {
            literal: ArgValue::Int(rng.gen_range(0..=max as i64)),
        }
    }
}

/// A random valid shortcut over all nine operations.
pub fn random_shortcut(rng: &mut ChaCha8Rng, name: &str) -> ValidatedShortcut {
    let lit = |v: i64| Slot::Literal {
        literal: ArgValue::Int(v),
    };
    let mut ops = Vec::new();
    for _ in 0..rng.gen_range(1..=6) {
        let op = match rng.gen_range(0..9) {
            0 => OperationTemplate::new(
                "Tap",
                &[
                    ("x", int_slot(rng, "x", EQ_WIDTH)),
                    ("y", int_slot(rng, "y", EQ_HEIGHT)),
                ],
            ),
            1 => {
                let slot = if rng.gen_bool(0.5) {
                    Slot::Argument("text".into())
                } else {
                    Slot::Literal {
                        literal: ArgValue::Text(TEXTS.choose(rng).unwrap().to_string()),
                    }
                };
                OperationTemplate::new("Type", &[("text", slot)])
            }
            2 => OperationTemplate::new("Enter", &[]),
            3 => OperationTemplate::new(
                "Swipe",
                &[
                    ("x1", lit(rng.gen_range(0..=EQ_WIDTH as i64))),
                    ("y1", lit(rng.gen_range(0..=EQ_HEIGHT as i64))),
                    ("x2", lit(rng.gen_range(0..=EQ_WIDTH as i64))),
                    ("y2", lit(rng.gen_range(0..=EQ_HEIGHT as i64))),
                ],
            ),
            4 => OperationTemplate::new("Back", &[]),
            5 => OperationTemplate::new("Home", &[]),
            6 => OperationTemplate::new("Wait", &[]),
            7 => OperationTemplate::new(
                "Open_App",
                &[(
                    "app_name",
                    Slot::Literal {
                        literal: ArgValue::Text("App".into()),
                    },
                )],
            ),
            _ => OperationTemplate::new("Switch_App", &[]),
        };
        ops.push(op);
    }
    let mut arguments: Vec<String> = Vec::new();
    for op in &ops {
        for slot in op.arguments_map.values() {
            if let Slot::Argument(a) = slot {
                if !arguments.contains(a) {
                    arguments.push(a.clone());
                }
            }
        }
    }
    validate_shortcut(Shortcut {
        name: name.into(),
        arguments,
        description: "Random macro.".into(),
        precondition: "Any screen.".into(),
        operation_sequence: ops,
    })
    .expect("generated shortcut is valid")
}

pub fn random_binding(rng: &mut ChaCha8Rng, shortcut: &ValidatedShortcut) -> BTreeMap<String, ArgValue> {
    shortcut
        .arguments
        .iter()
        .map(|a| {
            let v = match a.as_str() {
                "x" => ArgValue::Int(rng.gen_range(0..=EQ_WIDTH as i64)),
                "y" => ArgValue::Int(rng.gen_range(0..=EQ_HEIGHT as i64)),
                _ => ArgValue::Text(TEXTS.choose(rng).unwrap().to_string()),
            };
            (a.clone(), v)
        })
        .collect()
}

fn equivalence_config() -> OrchestratorConfig {
    OrchestratorConfig {
        max_iterations: 64,
        max_consecutive_errors: 64,
        max_repeated_actions: 64,
        ..OrchestratorConfig::default()
    }
}

/// Runs the same work twice through the agent loop: once as a single shortcut
/// call, once as one atomic operation per step. Returns both iteration counts
/// and final simulator states.
pub fn loop_both_ways(
    graph: Arc<AppGraph>,
    prefix: &[AtomicOperation],
    shortcut: &ValidatedShortcut,
    binding: &BTreeMap<String, ArgValue>,
) -> Result<(usize, usize, SimDevice, SimDevice), String> {
    let call = bind_arguments(shortcut, binding).map_err(|e| e.to_string())?;
    let config = equivalence_config();
    let mut memory = LongTermMemory::new();
    memory.admit_shortcut(shortcut.clone(), Provenance::Seed).unwrap();
    let query = TaskQuery::new("eq", "Run the macro.");

    let mut with_shortcut: Vec<String> = prefix.iter().map(|o| o.to_string()).collect();
    with_shortcut.push(Action::Shortcut { call: call.clone() }.to_string());
    let mut stepwise: Vec<String> = prefix.iter().map(|o| o.to_string()).collect();
    stepwise.extend(call.expansion.iter().map(|o| o.to_string()));

    let mut results = Vec::new();
    for actions in [with_shortcut, stepwise] {
        let mut b = ScriptBuilder::new("eq");
        b.with_defaults()
            .always(AgentRole::ActionReflector, reflector_reply(Outcome::A));
        for (i, a) in actions.iter().enumerate() {
            b.at(AgentRole::Operator, i + 1, operator_reply(a));
        }
        b.at(AgentRole::Operator, actions.len() + 1, operator_reply("Stop(\"done\")"));
        let (run, device) = run_single(Arc::clone(&graph), &config, b.build(), &query, &memory);
        if run.trajectory.exit_reason != ExitReason::SelfReportedSuccess {
            return Err(format!(
                "loop ended with {}: {}",
                run.trajectory.exit_reason, run.trajectory.exit_detail
            ));
        }
        let ops = prefix.len() + call.expansion.len();
        if run.trajectory.device_operations() != ops {
            return Err(format!(
                "{} device operations, expected {ops}",
                run.trajectory.device_operations()
            ));
        }
        results.push((run.trajectory.iterations(), device));
    }
    let (stepwise_iters, stepwise_dev) = results.pop().unwrap();
    let (shortcut_iters, shortcut_dev) = results.pop().unwrap();
    Ok((shortcut_iters, stepwise_iters, shortcut_dev, stepwise_dev))
}

pub fn check_equivalence(seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = Arc::new(random_graph(&mut rng));
    let shortcut = random_shortcut(&mut rng, "Random_Macro");
    let binding = random_binding(&mut rng, &shortcut);
    let call = bind_arguments(&shortcut, &binding).map_err(|e| e.to_string())?;
    let n = call.expansion.len();

    let mut direct = SimDevice::new(Arc::clone(&graph));
    let start = direct.capture().unwrap();
    let trace = execute_shortcut(&mut direct, start, &call.expansion);
    if trace.failure.is_some() || trace.screens.len() != n + 1 {
        return Err(format!("seed {seed}: shortcut did not complete"));
    }
    let mut manual = SimDevice::new(Arc::clone(&graph));
    for op in &call.expansion {
        manual.execute(op).unwrap();
    }
    if direct.state() != manual.state() {
        return Err(format!("seed {seed}: execute_shortcut and stepwise execution disagree"));
    }
    if trace.final_screen().sim_truth.as_ref().map(|t| &t.page) != Some(&manual.state().page) {
        return Err(format!("seed {seed}: final screen is not the final page"));
    }

    let (a, b, dev_a, dev_b) =
        loop_both_ways(graph, &[], &shortcut, &binding).map_err(|e| format!("seed {seed}: {e}"))?;
    if dev_a.state() != manual.state() || dev_b.state() != manual.state() {
        return Err(format!("seed {seed}: agent-loop runs end in different states"));
    }
    if b - a != n - 1 {
        return Err(format!("seed {seed}: saved {} iterations for {n} operations", b - a));
    }
    Ok(n)
}

/// The search macro on the demo phone: three operations, two iterations saved.
pub fn tap_type_and_enter_savings() -> Result<usize, String> {
    let shortcut = validate_shortcut(tap_type_and_enter()).unwrap();
    let binding: BTreeMap<String, ArgValue> = [
        ("x".to_string(), ArgValue::Int(540)),
        ("y".to_string(), ArgValue::Int(260)),
        ("text".to_string(), ArgValue::Text("weather tomorrow".into())),
    ]
    .into();
    let open = [AtomicOperation::OpenApp {
        app_name: "Search".into(),
    }];
    let (a, b, dev_a, dev_b) = loop_both_ways(demo::graph(), &open, &shortcut, &binding)?;
    if dev_a.state() != dev_b.state() || dev_a.state().page != "search.results" {
        return Err(format!("ended on {} and {}", dev_a.state().page, dev_b.state().page));
    }
    Ok(b - a)
}

pub fn shortcut_equivalence() -> Verdict {
    let saved = tap_type_and_enter_savings()?;
    if saved != 2 {
        return Err(format!("Tap_Type_and_Enter saved {saved} iterations, expected 2"));
    }
    let mut runner = runner(200);
    let cases = Cell::new(0usize);
    let ops = Cell::new(0usize);
    runner
        .run(&any::<u64>(), |seed| {
            let n = check_equivalence(seed).map_err(TestCaseError::fail)?;
            cases.set(cases.get() + 1);
            ops.set(ops.get() + n);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "{} random triples ({} operations) equivalent; Tap_Type_and_Enter saves {saved}",
        cases.get(),
        ops.get()
    ))
}

// ---------------------------------------------------------------- 5. evolution plumbing

fn file_hash(path: &Path) -> String {
    sha256_hex(&fs::read(path).unwrap())
}

pub fn evolution_plumbing() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let memory_path = tmp.path().join("memory.json");
    save_memory(&demo_seed(), &memory_path).unwrap();

    let mut on_disk: Vec<LongTermMemory> = Vec::new();
    let run = run_demo_with(true, demo_seed(), Some(&memory_path), None, &mut |_| {
        on_disk.push(load_memory(&memory_path).unwrap());
    });
    on_disk.push(load_memory(&memory_path).unwrap());
    let tasks = demo::scenario().tasks;
    let n = tasks.len();

    let mut admitted_total = 0;
    let mut tips_total = 0;
    for (k, task) in tasks.iter().enumerate() {
        let after = &on_disk[k + 1];
        let summary = &run.evolutions[k];
        let mine = Provenance::Evolved(task.id.clone());

        // (a) provenance on disk
        for name in &summary.admitted {
            let entry = after.shortcuts().iter().find(|e| &e.shortcut.name == name);
            if entry.map(|e| &e.provenance) != Some(&mine) {
                return Err(format!(
                    "{name} admitted after {} is missing from disk or mislabeled",
                    task.id
                ));
            }
        }
        let fresh_tips: Vec<&str> = after
            .tips()
            .iter()
            .filter(|t| t.provenance == mine)
            .map(|t| t.tip.text.as_str())
            .collect();
        if fresh_tips.len() != summary.new_tips {
            return Err(format!(
                "{} reports {} new tips, disk has {}",
                task.id,
                summary.new_tips,
                fresh_tips.len()
            ));
        }
        admitted_total += summary.admitted.len();
        tips_total += fresh_tips.len();

        // (b) verbatim in the next task's Operator prompt
        if k + 1 < n {
            let next = &run.runs[k + 1];
            let prompt = requests_of(next, AgentRole::Operator)
                .first()
                .map(|e| e.request_text())
                .ok_or("next task made no operator call")?;
            for e in after.shortcuts().iter().filter(|e| e.provenance == mine) {
                if !prompt.contains(&format_shortcut(&e.shortcut)) {
                    return Err(format!(
                        "{} is not shown verbatim to {}",
                        e.shortcut.name, next.query.id
                    ));
                }
            }
            for tip in &fresh_tips {
                if !prompt.contains(tip) {
                    return Err(format!("tip {tip:?} is not shown to {}", next.query.id));
                }
            }
        }

        // future-task block: the remaining tasks, or nothing after the last
        let remaining = &tasks[k + 1..];
        for role in [AgentRole::TipReflector, AgentRole::ShortcutReflector] {
            let entry = requests_of(&run.runs[k], role)
                .pop()
                .ok_or_else(|| format!("no {role} call after {}", task.id))?;
            let text = entry.request_text();
            let lines: Vec<&str> = text.lines().filter(|l| l.starts_with(FUTURE_MARKER)).collect();
            if lines.len() != remaining.len() {
                return Err(format!(
                    "{role} after {} saw {} future tasks, expected {}",
                    task.id,
                    lines.len(),
                    remaining.len()
                ));
            }
            if remaining
                .iter()
                .any(|t| !lines.iter().any(|l| l.ends_with(t.query.as_str())))
            {
                return Err(format!("{role} after {} is missing a future task", task.id));
            }
            if remaining.is_empty() && text.contains("Future Tasks") {
                return Err(format!("{role} after the last task still has a future-task block"));
            }
        }
    }
    if admitted_total == 0 || tips_total == 0 {
        return Err("the scenario admitted nothing, so the check is vacuous".into());
    }

    // (c) with evolution off the file is untouched
    let off = tempfile::tempdir().unwrap();
    let path = off.path().join("memory.json");
    save_memory(&demo_seed(), &path).unwrap();
    let before = file_hash(&path);
    let out = off.path().join("run");
    let args = [
        "phoneagent",
        "run-scenario",
        "--evolve",
        "off",
        "--memory",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    cli::run_args(args, &mut std::io::empty(), &mut std::io::sink()).map_err(|e| e.to_string())?;
    if file_hash(&path) != before {
        return Err("memory file changed with --evolve off".into());
    }
    for t in &tasks {
        let dir = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .find(|p| p.file_name().unwrap().to_string_lossy().ends_with(&t.id))
            .ok_or("missing task directory")?;
        let m: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap();
        if m.memory_hash_before != m.memory_hash_after {
            return Err(format!("{} changed memory with evolution off", t.id));
        }
        read_trajectory(&dir).map_err(|e| e.to_string())?;
    }
    Ok(format!(
        "{admitted_total} shortcut(s) and {tips_total} tip(s) flowed task to task; hash stable with evolution off"
    ))
}

// ---------------------------------------------------------------- 6. validation gate

/// Well-formed shortcuts that mutations start from.
pub fn corpus_bases() -> Vec<Value> {
    let tap = |x: Value, y: Value| json!({"name": "Tap", "arguments_map": {"x": x, "y": y}});
    let bare = |name: &str| json!({"name": name, "arguments_map": {}});
    let lit = |v: i64| json!({"literal": v});
    vec![
        serde_json::to_value(tap_type_and_enter()).unwrap(),
        json!({"name": "Close_Popup_And_Swipe_Up", "arguments": ["x", "y"], "description": "Close a pop-up and scroll.",
               "precondition": "A pop-up covers a list.",
               "operation_sequence": [tap(json!("x"), json!("y")),
                 {"name": "Swipe", "arguments_map": {"x1": lit(540), "y1": lit(1800), "x2": lit(540), "y2": lit(600)}}]}),
        json!({"name": "Open_And_Search", "arguments": ["app", "x", "y", "text"], "description": "Open an app and search.",
               "precondition": "Any screen.",
               "operation_sequence": [bare("Home"), {"name": "Open_App", "arguments_map": {"app_name": "app"}},
                 tap(json!("x"), json!("y")), {"name": "Type", "arguments_map": {"text": "text"}}, bare("Enter")]}),
        json!({"name": "Go_Back_Twice", "description": "Leave two pages.", "precondition": "Inside an app.",
               "operation_sequence": [bare("Back"), bare("Back")]}),
        json!({"name": "Scroll_And_Tap", "arguments": ["x", "y"], "description": "Scroll down, then tap.",
               "precondition": "A scrollable list is showing.",
               "operation_sequence": [{"name": "Swipe", "arguments_map": {"x1": lit(540), "y1": lit(1800), "x2": lit(540), "y2": lit(600)}},
                 tap(json!("x"), json!("y"))]}),
        json!({"name": "Search_And_Open_First", "arguments": ["x", "y", "text"], "description": "Search and open the top result.",
               "precondition": "A search bar is visible.",
               "operation_sequence": [tap(json!("x"), json!("y")), {"name": "Type", "arguments_map": {"text": "text"}},
                 bare("Enter"), bare("Wait"), tap(lit(540), lit(480))]}),
        json!({"name": "Type_Note", "arguments": ["x", "y", "text"], "description": "Write into a text area.",
               "precondition": "A note editor is open.",
               "operation_sequence": [tap(json!("x"), json!("y")), {"name": "Type", "arguments_map": {"text": "text"}}]}),
        json!({"name": "Switch_And_Tap", "arguments": ["x", "y"], "description": "Open the app switcher and pick a card.",
               "precondition": "Another app was used recently.",
               "operation_sequence": [bare("Switch_App"), tap(json!("x"), json!("y"))]}),
    ]
}

type Mutation = (&'static str, fn(&mut Value, usize));

fn ops(v: &mut Value) -> &mut Vec<Value> {
    v["operation_sequence"].as_array_mut().unwrap()
}

fn args(v: &mut Value) -> &mut Vec<Value> {
    if v.get("arguments").is_none() {
        v["arguments"] = json!([]);
    }
    v["arguments"].as_array_mut().unwrap()
}

pub fn mutations() -> Vec<Mutation> {
    vec![
        ("invalid_name", |v, i| {
            v["name"] = json!(["Bad Name", "9lives", "", "dash-name"][i % 4])
        }),
        ("name_collision", |v, i| {
            v["name"] = json!(["Tap", "stop", "OPEN_APP", "Wait"][i % 4])
        }),
        ("missing_precondition", |v, _| v["precondition"] = json!("   ")),
        ("missing_precondition", |v, _| {
            v.as_object_mut().unwrap().remove("precondition");
        }),
        ("empty_sequence", |v, _| v["operation_sequence"] = json!([])),
        ("invalid_argument_name", |v, _| args(v).insert(0, json!("bad-arg"))),
        ("duplicate_argument", |v, _| {
            let a = args(v);
            match a.first().cloned() {
                Some(first) => a.push(first),
                None => a.extend([json!("a"), json!("a")]),
            }
        }),
        ("unknown_operation", |v, _| {
            ops(v).push(json!({"name": "Click", "arguments_map": {}}))
        }),
        ("missing_parameter", |v, _| {
            ops(v).push(json!({"name": "Tap", "arguments_map": {"x": {"literal": 1}}}))
        }),
        ("unexpected_parameter", |v, _| {
            ops(v).push(json!({"name": "Enter", "arguments_map": {"force": {"literal": 1}}}))
        }),
        ("unknown_slot_reference", |v, _| {
            ops(v).push(json!({"name": "Type", "arguments_map": {"text": "ghost"}}))
        }),
        ("literal_kind", |v, _| {
            ops(v).push(json!({"name": "Tap", "arguments_map": {"x": {"literal": "left"}, "y": {"literal": 5}}}))
        }),
        ("conflicting_argument_kind", |v, _| {
            args(v).push(json!("both"));
            ops(v).push(json!({"name": "Tap", "arguments_map": {"x": "both", "y": {"literal": 5}}}));
            ops(v).push(json!({"name": "Type", "arguments_map": {"text": "both"}}));
        }),
        ("unused_argument", |v, _| args(v).push(json!("spare"))),
        ("malformed_record", |v, _| v["arguments"] = json!("x")),
        ("malformed_record", |v, _| v["extra"] = json!(1)),
        ("malformed_record", |v, _| v["name"] = json!(42)),
        ("malformed_record", |v, _| {
            v["operation_sequence"] = json!({"name": "Tap"})
        }),
        ("malformed_record", |v, _| *v = json!(v["name"].clone())),
        ("malformed_record", |v, _| {
            ops(v)[0]["arguments_map"] = json!(["x", "y"]);
        }),
        ("duplicate_name", |_, _| {}),
    ]
}

/// Schema-valid proposals that do not do what they claim. They pass the gate
/// by design: nothing static can tell.
pub fn weak_proposals() -> Vec<Value> {
    vec![
        json!({"name": "Search_Without_Tap", "arguments": ["text"], "description": "Search for text.",
               "precondition": "A search bar is visible.",
               "operation_sequence": [{"name": "Type", "arguments_map": {"text": "text"}}, {"name": "Enter", "arguments_map": {}}]}),
        json!({"name": "Add_To_Cart", "arguments": ["x", "y"], "description": "Open an item and add it to the cart.",
               "precondition": "Search results are showing.",
               "operation_sequence": [{"name": "Tap", "arguments_map": {"x": "x", "y": "y"}}]}),
        json!({"name": "Send_Message", "arguments": ["text"], "description": "Type a message and send it.",
               "precondition": "A chat is open.",
               "operation_sequence": [{"name": "Type", "arguments_map": {"text": "text"}}]}),
    ]
}

/// Proposals with the rejection class each must get, or `None` for admission.
pub fn fuzz_corpus() -> Vec<(Value, Option<&'static str>)> {
    let mut corpus = Vec::new();
    for (i, base) in corpus_bases().into_iter().enumerate() {
        for (class, mutate) in mutations() {
            let mut v = base.clone();
            mutate(&mut v, i);
            corpus.push((v, Some(class)));
        }
    }
    corpus.extend(weak_proposals().into_iter().map(|v| (v, None)));
    corpus
}

fn memory_with_bases() -> LongTermMemory {
    let mut memory = demo_seed();
    let report = admit_proposals(corpus_bases(), &mut memory, &Provenance::Seed);
    assert!(report.rejected.is_empty(), "bases must be valid: {:?}", report.rejected);
    memory
}

pub fn validation_gate() -> Verdict {
    let corpus = fuzz_corpus();
    let malformed = corpus.iter().filter(|(_, c)| c.is_some()).count();
    if malformed < 100 {
        return Err(format!("only {malformed} malformed proposals"));
    }

    // one at a time
    let mut memory = memory_with_bases();
    let provenance = Provenance::Evolved("fuzz".into());
    for (i, (proposal, expected)) in corpus.iter().enumerate() {
        let report = admit_proposals(vec![proposal.clone()], &mut memory, &provenance);
        let got = report.rejected.first().map(|r| r.class.as_str());
        if got != *expected || report.admitted.len() != usize::from(expected.is_none()) {
            return Err(format!("proposal {i} ({proposal}) got {got:?}, expected {expected:?}"));
        }
    }
    let expected_count = corpus_bases().len() + weak_proposals().len();
    if memory.shortcuts().len() != expected_count {
        return Err(format!(
            "memory holds {} shortcuts, expected {expected_count}",
            memory.shortcuts().len()
        ));
    }

    // all at once through the shortcut reflector
    let mut batch_memory = memory_with_bases();
    let proposals: Vec<Value> = corpus.iter().map(|(v, _)| v.clone()).collect();
    let mut book = ScriptBook::new();
    book.push(
        AgentRole::ShortcutReflector,
        MatchKey::always(),
        format!("SHORTCUTS: {}", serde_json::to_string(&proposals).unwrap()),
    );
    let backend = ScriptedBackend::new(book);
    let mut audit = AuditLog::new();
    let mut session = ModelSession::new(&backend, &mut audit).for_task("fuzz");
    let query = TaskQuery::new("fuzz", "Anything.");
    let input = EvolutionInput {
        query: &query,
        plan: "",
        progress: "",
        actions: &[],
        errors: &[],
        future: &[],
    };
    let report = evolve_shortcuts(&mut session, &input, &mut batch_memory).map_err(|e| e.to_string())?;
    let got: Vec<&str> = report.rejected.iter().map(|r| r.class.as_str()).collect();
    let want: Vec<&str> = corpus.iter().filter_map(|(_, c)| *c).collect();
    if got != want {
        return Err("batch rejection classes differ from the one-at-a-time run".into());
    }

    // nothing invalid on disk
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("memory.json");
    for m in [&memory, &batch_memory] {
        save_memory(m, &path).unwrap();
        let reloaded = load_memory(&path).map_err(|e| e.to_string())?;
        for e in reloaded.shortcuts() {
            validate_shortcut(e.shortcut.clone().into_inner())
                .map_err(|err| format!("persisted {}: {err}", e.shortcut.name))?;
        }
        if reloaded.shortcuts().len() != expected_count {
            return Err("persisted memory has the wrong number of shortcuts".into());
        }
    }
    let classes: std::collections::BTreeSet<&str> = want.iter().copied().collect();
    Ok(format!(
        "{malformed} malformed proposals rejected across {} classes; {} weak but valid admitted",
        classes.len(),
        weak_proposals().len()
    ))
}

// ---------------------------------------------------------------- 7. metrics oracle

pub fn random_annotation(rng: &mut ChaCha8Rng, task: usize) -> (RubricSheet, AnnotationRecord) {
    let task_id = format!("task{task}");
    let n = rng.gen_range(1..=6);
    let tau = rng.gen_range(1..=12);
    let items = (1..=n)
        .map(|id| RubricItem {
            id,
            text: format!("rubric {id}"),
            kind: if rng.gen_bool(0.5) {
                RubricKind::Milestone
            } else {
                RubricKind::SatisfactionCriterion
            },
        })
        .collect();
    let mut rubrics: Vec<RubricMark> = (1..=n)
        .map(|rubric| RubricMark {
            rubric,
            fulfilled_at_step: rng.gen_bool(0.7).then(|| rng.gen_range(1..=tau)),
        })
        .collect();
    rubrics.shuffle(rng);
    let mut steps = Vec::new();
    for step in 1..=tau {
        if rng.gen_bool(0.8) {
            steps.push(StepMark {
                step,
                action_correct: rng.gen_bool(0.75),
                reflection_correct: rng.gen_bool(0.8).then(|| rng.gen_bool(0.85)),
            });
        }
    }
    let exit_reason = *ExitReason::ALL.choose(rng).unwrap();
    (
        RubricSheet {
            task_id: task_id.clone(),
            items,
        },
        AnnotationRecord {
            task_id,
            model: ["alpha", "beta"][task % 2].into(),
            trajectory_steps: tau,
            exit_reason,
            rubrics,
            steps,
        },
    )
}

type Exact = Ratio<i128>;

fn exact(f: Fraction) -> Exact {
    Ratio::new(*f.numer() as i128, *f.denom() as i128)
}

/// Closed-form least squares over exact rationals.
pub fn ols_oracle(points: &[(Fraction, Fraction)]) -> (f64, f64) {
    let n = Exact::from_integer(points.len() as i128);
    let (mut sx, mut sy, mut sxx, mut sxy) = (
        Exact::from_integer(0),
        Exact::from_integer(0),
        Exact::from_integer(0),
        Exact::from_integer(0),
    );
    for &(x, y) in points {
        let (x, y) = (exact(x), exact(y));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let f = |r: Exact| *r.numer() as f64 / *r.denom() as f64;
    (f(slope), f(intercept))
}

pub fn metrics_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let pairs: Vec<_> = (0..20).map(|i| random_annotation(&mut rng, i)).collect();
    let mut curves = Vec::new();
    let mut points = Vec::new();
    let (mut done, mut total, mut ok, mut marked, mut rok, mut rmarked) = (0u64, 0u64, 0u64, 0u64, 0u64, 0u64);

    for (sheet, ann) in &pairs {
        let tau = ann.trajectory_steps;
        let n = sheet.items.len() as u64;
        // direct counting, rubric by rubric and step by step
        let fulfilled = (1..=sheet.items.len())
            .filter(|id| {
                ann.rubrics
                    .iter()
                    .any(|m| m.rubric == *id && m.fulfilled_at_step.is_some())
            })
            .count() as u64;
        let ss = satisfaction_score(sheet, ann).map_err(|e| e.to_string())?;
        if ss != Ratio::new(fulfilled, n) {
            return Err(format!("{}: SS {ss} vs oracle {fulfilled}/{n}", ann.task_id));
        }
        let (mut c, mut m, mut rc, mut rm) = (0u64, 0u64, 0u64, 0u64);
        for step in 1..=tau {
            if let Some(s) = ann.steps.iter().find(|s| s.step == step) {
                m += 1;
                c += u64::from(s.action_correct);
                if let Some(r) = s.reflection_correct {
                    rm += 1;
                    rc += u64::from(r);
                }
            }
        }
        match (action_accuracy(ann), m) {
            (Err(EvalError::UndefinedMetric(_)), 0) => {}
            (Ok(aa), m) if m > 0 && aa == Ratio::new(c, m) => {}
            (got, _) => return Err(format!("{}: AA {got:?} vs oracle {c}/{m}", ann.task_id)),
        }
        match (reflection_accuracy(ann), rm) {
            (Err(EvalError::UndefinedMetric(_)), 0) => {}
            (Ok(ra), rm) if rm > 0 && ra == Ratio::new(rc, rm) => {}
            (got, _) => return Err(format!("{}: RA {got:?} vs oracle {rc}/{rm}", ann.task_id)),
        }
        let curve = sss_curve(sheet, ann, tau).map_err(|e| e.to_string())?;
        for (i, p) in curve.iter().enumerate() {
            let step = i + 1;
            let reached = ann
                .rubrics
                .iter()
                .filter(|r| r.fulfilled_at_step.is_some_and(|s| s <= step))
                .count() as u64;
            if p.x != Ratio::new(step as u64, tau as u64) || p.y != Ratio::new(reached, n) {
                return Err(format!("{}: SSS point {step} differs from the oracle", ann.task_id));
            }
            if i > 0 && p.y < curve[i - 1].y {
                return Err(format!("{}: SSS curve decreases at step {step}", ann.task_id));
            }
            points.push((p.x, p.y));
        }
        if curve.last().map(|p| p.y) != Some(ss) {
            return Err(format!("{}: SSS endpoint is not SS", ann.task_id));
        }
        curves.push(curve);
        done += fulfilled;
        total += n;
        ok += c;
        marked += m;
        rok += rc;
        rmarked += rm;
    }

    let sheets: Vec<RubricSheet> = pairs.iter().map(|(s, _)| s.clone()).collect();
    let anns: Vec<AnnotationRecord> = pairs.iter().map(|(_, a)| a.clone()).collect();
    let report = score(&sheets, &anns).map_err(|e| e.to_string())?;
    let clean = anns
        .iter()
        .filter(|a| a.exit_reason == ExitReason::SelfReportedSuccess)
        .count() as u64;
    let checks = [
        ("SS", Some(report.satisfaction_score), Some(Ratio::new(done, total))),
        (
            "AA",
            report.action_accuracy,
            (marked > 0).then(|| Ratio::new(ok, marked)),
        ),
        (
            "RA",
            report.reflection_accuracy,
            (rmarked > 0).then(|| Ratio::new(rok, rmarked)),
        ),
        (
            "TE",
            Some(report.termination_error_rate),
            Some(Ratio::new(anns.len() as u64 - clean, anns.len() as u64)),
        ),
    ];
    for (name, got, want) in checks {
        if got != want {
            return Err(format!("pooled {name} {got:?} vs oracle {want:?}"));
        }
    }

    let (slope, intercept) = sss_regression(&curves).map_err(|e| e.to_string())?;
    let (want_slope, want_intercept) = ols_oracle(&points);
    if (slope - want_slope).abs() > 1e-9 || (intercept - want_intercept).abs() > 1e-9 {
        return Err(format!(
            "regression ({slope}, {intercept}) vs closed form ({want_slope}, {want_intercept})"
        ));
    }
    Ok(format!(
        "20 annotations, {} curve points exact; OLS slope {slope:.6} within 1e-9",
        points.len()
    ))
}

// ---------------------------------------------------------------- 8. precondition misuse

pub const MISUSE_TASK: &str = "misuse";

/// Opens Shop, then Notes, then switches apps and, without picking the Shop
/// card, calls the search shortcut on the app switcher.
pub fn misuse_script() -> ScriptBook {
    let mut b = ScriptBuilder::new(MISUSE_TASK);
    b.with_defaults()
        .at(AgentRole::Operator, 1, operator_reply("Open_App(\"Shop\")"))
        .at(AgentRole::Operator, 2, operator_reply("Home()"))
        .at(AgentRole::Operator, 3, operator_reply("Open_App(\"Notes\")"))
        .at(AgentRole::Operator, 4, operator_reply("Switch_App()"))
        .at(
            AgentRole::Operator,
            5,
            operator_reply("Tap_Type_and_Enter(490, 260, \"earbuds\")"),
        )
        .at(AgentRole::Operator, 6, operator_reply("Stop(\"gave up\")"))
        .at(AgentRole::ActionReflector, 1, reflector_reply(Outcome::A))
        .at(AgentRole::ActionReflector, 2, reflector_reply(Outcome::A))
        .at(AgentRole::ActionReflector, 3, reflector_reply(Outcome::A))
        .at(AgentRole::ActionReflector, 4, reflector_reply(Outcome::A))
        .at(AgentRole::ActionReflector, 5, reflector_reply(Outcome::B));
    b.build()
}

pub fn misuse_memory() -> LongTermMemory {
    let mut memory = demo_seed();
    memory
        .admit_shortcut(validate_shortcut(tap_type_and_enter()).unwrap(), Provenance::Seed)
        .unwrap();
    memory
}

pub fn run_misuse(gate: GateMode) -> (phoneagent::orchestrator::TaskRun, SimDevice) {
    let config = OrchestratorConfig {
        precondition_gate: gate,
        ..OrchestratorConfig::default()
    };
    let query = TaskQuery::new(MISUSE_TASK, "Search Shop for earbuds after writing a note.");
    run_single(demo::graph(), &config, misuse_script(), &query, &misuse_memory())
}

pub fn precondition_misuse() -> Verdict {
    // model-mediated: the shortcut runs on the switcher and lands in the wrong app
    let (run, device) = run_misuse(GateMode::ModelMediated);
    let step = run.trajectory.steps.get(4).ok_or("the misuse step never ran")?;
    if step.pre_screen.sim_page.as_deref() != Some("app_switcher") {
        return Err(format!(
            "shortcut was called on {:?}, not the app switcher",
            step.pre_screen.sim_page
        ));
    }
    if step.gate != Some(GateDecision::Allow) || step.device_operations != 3 {
        return Err("model-mediated gate did not let the shortcut fire".into());
    }
    if !matches!(step.outcome, Some(Outcome::B | Outcome::C)) || step.error.is_none() {
        return Err(format!("reflector recorded {:?}", step.outcome));
    }
    if device.state().page.starts_with("shop.") {
        return Err("shortcut reached Shop even though the precondition did not hold".into());
    }
    let reflections = run.audit.by_caller(AgentRole::ActionReflector).count();
    let mediated_page = device.state().page.clone();

    // strict heuristic: denied before any device operation
    let (run, device) = run_misuse(GateMode::StrictHeuristic);
    let step = run.trajectory.steps.get(4).ok_or("the misuse step never ran")?;
    if !matches!(step.gate, Some(GateDecision::Deny { .. })) {
        return Err(format!("strict gate decided {:?}", step.gate));
    }
    if step.device_operations != 0 || step.outcome != Some(Outcome::C) || device.state().page != "app_switcher" {
        return Err("a denied shortcut still touched the device".into());
    }
    if run.audit.by_caller(AgentRole::ActionReflector).count() != reflections - 1 {
        return Err("the reflector was consulted about a denied call".into());
    }
    Ok(format!(
        "model-mediated: fired on the switcher, ended on {mediated_page}, outcome B; strict: denied, outcome C"
    ))
}

pub type Criterion = (&'static str, fn() -> Verdict);

pub fn all() -> Vec<Criterion> {
    vec![
        ("loop fidelity golden run", golden_run),
        ("termination taxonomy", termination_taxonomy),
        ("escalation contract", escalation_contract),
        ("shortcut equivalence", shortcut_equivalence),
        ("evolution plumbing", evolution_plumbing),
        ("validation gate", validation_gate),
        ("metrics oracle", metrics_oracle),
        ("precondition misuse", precondition_misuse),
    ]
}
