//! Command-line entry points.
//!
//! | exit code | meaning                                   |
//! |-----------|-------------------------------------------|
//! | 0         | success                                   |
//! | 2         | usage: bad flags, empty inputs            |
//! | 3         | i/o: missing or unreadable files          |
//! | 4         | decode: malformed JSON or file format     |
//! | 5         | validation: well-formed but invalid input |
//! | 6         | runtime: device, model or perception      |
//! | 7         | undefined metric                          |

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::agents::{retrieve_memory, seed_memory, ModelSession};
use crate::demo;
use crate::device::{AppGraph, BridgeDevice, Device, DeviceError, GraphError, SimDevice, SystemRunner};
use crate::eval::{self, AnnotationRecord, EvalError, RubricItem, RubricKind, RubricSheet};
use crate::gateway::{AuditLog, GatewayError, HttpBackend, ModelBackend, ScriptBook, ScriptedBackend};
use crate::memory::{load_memory, LongTermMemory, MemoryError, OrchestratorConfig, RetrievalThresholds, TaskQuery};
use crate::orchestrator::{
    read_trajectory, run_scenario, run_task, write_task_dir, OrchestratorError, Scenario, ScenarioOptions, TaskContext,
};
use crate::perception::{Perceptor, RemotePerceptor, SimPerceptor};
use crate::shortcut::{validate_shortcut, GateMode, Shortcut};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Decode(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    UndefinedMetric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Decode(_) => 4,
            CliError::Validation(_) => 5,
            CliError::Runtime(_) => 6,
            CliError::UndefinedMetric(_) => 7,
        }
    }
}

impl From<MemoryError> for CliError {
    fn from(e: MemoryError) -> Self {
        match e {
            MemoryError::NotFound(_) | MemoryError::Io { .. } => CliError::Io(e.to_string()),
            MemoryError::Decode(_) | MemoryError::Format(_) => CliError::Decode(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<OrchestratorError> for CliError {
    fn from(e: OrchestratorError) -> Self {
        match e {
            OrchestratorError::Io { .. } => CliError::Io(e.to_string()),
            OrchestratorError::Decode { .. } => CliError::Decode(e.to_string()),
            OrchestratorError::Scenario(_) => CliError::Validation(e.to_string()),
            OrchestratorError::Memory(m) => m.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Io { .. } => CliError::Io(e.to_string()),
            EvalError::Decode { .. } => CliError::Decode(e.to_string()),
            EvalError::Format(_) => CliError::Validation(e.to_string()),
            EvalError::UndefinedMetric(_) | EvalError::DegenerateFit | EvalError::TooFewPoints(_) => {
                CliError::UndefinedMetric(e.to_string())
            }
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Io { .. } => CliError::Io(e.to_string()),
            GraphError::Decode(_) => CliError::Decode(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DeviceError> for CliError {
    fn from(e: DeviceError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn decode_error(path: &Path, e: serde_json::Error) -> CliError {
    CliError::Decode(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

#[derive(Debug, Parser)]
#[command(name = "phoneagent", version, about = "Hierarchical multi-agent phone automation")]
pub struct Cli {
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one task and write its trajectory directory.
    RunTask(RunTaskArgs),
    /// Run a scenario of tasks in order, optionally evolving memory.
    RunScenario(RunScenarioArgs),
    /// Inspect, validate or retrieve from a long-term memory file.
    Memory {
        #[command(subcommand)]
        command: MemoryCommand,
    },
    /// Review a trajectory step by step and write an annotation record.
    Annotate(AnnotateArgs),
    /// Compute SS, AA, RA and TE over a directory of annotations.
    Score(ScoreArgs),
    /// Emit SSS curve data as CSV.
    Sss(SssArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GateFlag {
    Model,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Table,
    Json,
}

/// Loop settings. Flags override the config file, which overrides defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON file with orchestrator settings.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k_escalation: Option<usize>,
    #[arg(long)]
    pub history_window: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub max_consecutive_errors: Option<usize>,
    #[arg(long)]
    pub max_repeated_actions: Option<usize>,
    /// Precondition enforcement for shortcuts.
    #[arg(long, value_enum)]
    pub gate: Option<GateFlag>,
    /// Run the tip retriever when memory holds more tips than this.
    #[arg(long, value_name = "N")]
    pub retrieve_tips: Option<usize>,
    /// Run the shortcut retriever when memory holds more shortcuts than this.
    #[arg(long, value_name = "N")]
    pub retrieve_shortcuts: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<OrchestratorConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => serde_json::from_str(&read_text(path)?).map_err(|e| decode_error(path, e))?,
            None => OrchestratorConfig::default(),
        };
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.k_escalation, self.k_escalation);
        set(&mut c.m_history_window, self.history_window);
        set(&mut c.max_iterations, self.max_iterations);
        set(&mut c.max_consecutive_errors, self.max_consecutive_errors);
        set(&mut c.max_repeated_actions, self.max_repeated_actions);
        if let Some(g) = self.gate {
            c.precondition_gate = match g {
                GateFlag::Model => GateMode::ModelMediated,
                GateFlag::Strict => GateMode::StrictHeuristic,
            };
        }
        if self.retrieve_tips.is_some() || self.retrieve_shortcuts.is_some() {
            let base = c.retrieval.unwrap_or(RetrievalThresholds {
                max_tips: usize::MAX,
                max_shortcuts: usize::MAX,
            });
            c.retrieval = Some(RetrievalThresholds {
                max_tips: self.retrieve_tips.unwrap_or(base.max_tips),
                max_shortcuts: self.retrieve_shortcuts.unwrap_or(base.max_shortcuts),
            });
        }
        c.validate().map_err(|e| CliError::Validation(format!("config: {e}")))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    /// `script` (bundled demo script), `script:BOOK` or `http`.
    #[arg(long, default_value = "script")]
    pub backend: String,
}

#[derive(Debug, Clone, Args)]
pub struct RuntimeArgs {
    /// `sim` (bundled demo phone), `sim:GRAPH`, `bridge` or `bridge:SERIAL`.
    #[arg(long, default_value = "sim")]
    pub device: String,
    #[command(flatten)]
    pub backend: BackendArgs,
    /// `sim` or the base URL of a perception service. Defaults to `sim` on
    /// simulated devices.
    #[arg(long)]
    pub perception: Option<String>,
    /// JSON object mapping app names to package names, for `bridge`.
    #[arg(long, value_name = "FILE")]
    pub packages: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RunTaskArgs {
    /// A task JSON object, or a task file (use --task-id to pick one).
    #[arg(long, value_name = "FILE")]
    pub task: PathBuf,
    #[arg(long)]
    pub task_id: Option<String>,
    /// Long-term memory file. Seed tips only when absent.
    #[arg(long, value_name = "FILE")]
    pub memory: Option<PathBuf>,
    /// Trajectory directory to write.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub runtime: RuntimeArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct RunScenarioArgs {
    /// Scenario JSON. The bundled demo scenario when absent.
    #[arg(long, value_name = "FILE")]
    pub scenario: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub evolve: Toggle,
    /// Long-term memory file. Read if present; rewritten after each task
    /// when evolving.
    #[arg(long, value_name = "FILE")]
    pub memory: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub runtime: RuntimeArgs,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum MemoryCommand {
    /// Print tips and shortcuts.
    Show {
        #[arg(long, value_name = "FILE")]
        memory: Option<PathBuf>,
    },
    /// Check every entry and report problems.
    Validate {
        #[arg(long, value_name = "FILE")]
        memory: PathBuf,
    },
    /// Print what the experience retrievers select for a task.
    Retrieve {
        #[arg(long, value_name = "FILE")]
        task: PathBuf,
        #[arg(long)]
        task_id: Option<String>,
        #[arg(long, value_name = "FILE")]
        memory: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Debug, Clone, Args)]
pub struct AnnotateArgs {
    /// Trajectory directory written by run-task or run-scenario.
    #[arg(long, value_name = "DIR")]
    pub trajectory: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub rubrics: PathBuf,
    /// Where to write the record. `annotation.json` in the trajectory
    /// directory by default.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Label for the system under evaluation.
    #[arg(long, default_value = "")]
    pub model: String,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[arg(long, value_name = "DIR")]
    pub annotations: PathBuf,
    /// Rubric sheet file or directory of sheets. Without it, each
    /// annotation's own rubric list is taken as the sheet.
    #[arg(long, value_name = "PATH")]
    pub rubrics: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "table")]
    pub format: ReportFormat,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SssArgs {
    #[arg(long, value_name = "DIR")]
    pub annotations: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub rubrics: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

// ---------------------------------------------------------------- wiring

fn load_task(path: &Path, id: Option<&str>) -> Result<TaskQuery, CliError> {
    let text = read_text(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| decode_error(path, e))?;
    let tasks: Vec<TaskQuery> = if value.get("tasks").is_some() {
        serde_json::from_value(value["tasks"].clone()).map_err(|e| decode_error(path, e))?
    } else {
        vec![serde_json::from_value(value).map_err(|e| decode_error(path, e))?]
    };
    match id {
        Some(id) => tasks
            .into_iter()
            .find(|t| t.id == id)
            .ok_or_else(|| CliError::Usage(format!("no task `{id}` in {}", path.display()))),
        None if tasks.len() == 1 => Ok(tasks.into_iter().next().expect("one task")),
        None => Err(CliError::Usage(format!(
            "{} holds {} tasks; pick one with --task-id",
            path.display(),
            tasks.len()
        ))),
    }
}

fn load_memory_or_seed(path: Option<&Path>) -> Result<LongTermMemory, CliError> {
    match path {
        Some(p) => Ok(load_memory(p)?),
        None => Ok(seed_memory()),
    }
}

pub fn build_backend(spec: &str) -> Result<Box<dyn ModelBackend>, CliError> {
    match spec.split_once(':') {
        None if spec == "script" => Ok(Box::new(ScriptedBackend::new(demo::script()))),
        None if spec == "http" => Ok(Box::new(HttpBackend::from_env()?)),
        Some(("script", path)) => {
            let path = Path::new(path);
            let text = read_text(path)?;
            let book = ScriptBook::from_json_str(&text).map_err(|e| decode_error(path, e))?;
            Ok(Box::new(ScriptedBackend::new(book)))
        }
        _ => Err(CliError::Usage(format!(
            "unknown backend `{spec}`; expected script, script:BOOK or http"
        ))),
    }
}

enum DeviceSpec {
    Sim(Arc<AppGraph>),
    Bridge {
        serial: Option<String>,
        packages: BTreeMap<String, String>,
        captures: PathBuf,
    },
}

impl DeviceSpec {
    fn parse(runtime: &RuntimeArgs, out: &Path) -> Result<Self, CliError> {
        let (kind, arg) = match runtime.device.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (runtime.device.as_str(), None),
        };
        match kind {
            "sim" => {
                let graph = match arg {
                    None => demo::graph(),
                    Some(path) => {
                        let graph = AppGraph::load(Path::new(path))?;
                        Arc::new(graph)
                    }
                };
                Ok(DeviceSpec::Sim(graph))
            }
            "bridge" => {
                let packages = match &runtime.packages {
                    Some(p) => serde_json::from_str(&read_text(p)?).map_err(|e| decode_error(p, e))?,
                    None => BTreeMap::new(),
                };
                Ok(DeviceSpec::Bridge {
                    serial: arg.map(str::to_string),
                    packages,
                    captures: out.join("device_captures"),
                })
            }
            _ => Err(CliError::Usage(format!(
                "unknown device `{}`; expected sim, sim:GRAPH, bridge or bridge:SERIAL",
                runtime.device
            ))),
        }
    }

    fn open(&self) -> Result<Box<dyn Device>, DeviceError> {
        match self {
            DeviceSpec::Sim(graph) => Ok(Box::new(SimDevice::new(Arc::clone(graph)))),
            DeviceSpec::Bridge {
                serial,
                packages,
                captures,
            } => {
                std::fs::create_dir_all(captures).map_err(|e| DeviceError::Screenshot(e.to_string()))?;
                let device = BridgeDevice::connect(SystemRunner, serial.clone(), captures.clone())?
                    .with_packages(packages.clone());
                Ok(Box::new(device))
            }
        }
    }

    fn perceptor(&self, flag: Option<&str>) -> Result<Box<dyn Perceptor>, CliError> {
        match (flag, self) {
            (Some("sim"), _) | (None, DeviceSpec::Sim(_)) => Ok(Box::new(SimPerceptor::new())),
            (Some(url), _) => Ok(Box::new(RemotePerceptor::new(url))),
            (None, DeviceSpec::Bridge { .. }) => Err(CliError::Usage(
                "a real device needs --perception URL of a perception service".into(),
            )),
        }
    }
}

fn cmd_run_task(args: &RunTaskArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = args.config.resolve()?;
    let query = load_task(&args.task, args.task_id.as_deref())?;
    let memory = load_memory_or_seed(args.memory.as_deref())?;
    let spec = DeviceSpec::parse(&args.runtime, &args.out)?;
    let backend = build_backend(&args.runtime.backend.backend)?;
    let perceptor = spec.perceptor(args.runtime.perception.as_deref())?;
    let mut device = spec.open()?;
    let ctx = TaskContext {
        config: &config,
        perceptor: perceptor.as_ref(),
        backend: backend.as_ref(),
    };
    let run = run_task(&query, ctx, device.as_mut(), &memory);
    write_task_dir(&args.out, &run, &config, &memory, &memory)?;
    let t = &run.trajectory;
    let line = format!(
        "{}: {} after {} step(s), {} device operation(s)",
        t.task_id,
        t.exit_reason,
        t.iterations(),
        t.device_operations()
    );
    writeln!(out, "{line}").map_err(|e| CliError::Io(e.to_string()))?;
    if !t.exit_detail.is_empty() {
        writeln!(out, "  {}", t.exit_detail).map_err(|e| CliError::Io(e.to_string()))?;
    }
    Ok(())
}

fn cmd_run_scenario(args: &RunScenarioArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = args.config.resolve()?;
    let scenario = match &args.scenario {
        Some(p) => Scenario::load(p)?,
        None => demo::scenario(),
    };
    let memory = match &args.memory {
        Some(p) if p.exists() => load_memory(p)?,
        _ => seed_memory(),
    };
    let spec = DeviceSpec::parse(&args.runtime, &args.out)?;
    let backend = build_backend(&args.runtime.backend.backend)?;
    let perceptor = spec.perceptor(args.runtime.perception.as_deref())?;
    let ctx = TaskContext {
        config: &config,
        perceptor: perceptor.as_ref(),
        backend: backend.as_ref(),
    };
    let evolve = args.evolve == Toggle::On;
    let run = run_scenario(
        &scenario,
        ctx,
        &mut |_| spec.open(),
        memory,
        &ScenarioOptions {
            evolve,
            memory_path: args.memory.as_deref(),
            out_dir: Some(&args.out),
        },
    )?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    for (i, r) in run.runs.iter().enumerate() {
        let t = &r.trajectory;
        writeln!(out, "{}: {} after {} step(s)", t.task_id, t.exit_reason, t.iterations()).map_err(io)?;
        if let Some(e) = run.evolutions.get(i) {
            writeln!(
                out,
                "  evolved: {} new tip(s), admitted [{}], rejected {}",
                e.new_tips,
                e.admitted.join(", "),
                e.rejected.len()
            )
            .map_err(io)?;
        }
    }
    let exits: Vec<_> = run.runs.iter().map(|r| r.trajectory.exit_reason).collect();
    writeln!(out, "termination error rate: {}", eval::termination_error_rate(&exits)).map_err(io)?;
    writeln!(
        out,
        "memory: {} tip(s), {} shortcut(s)",
        run.memory.tips().len(),
        run.memory.shortcuts().len()
    )
    .map_err(io)?;
    Ok(())
}

fn show_memory(memory: &LongTermMemory, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "tips ({}):", memory.tips().len())?;
    for t in memory.tips() {
        writeln!(
            out,
            "  {}. {}  [{}]",
            t.tip.id,
            t.tip.text,
            provenance_label(&t.provenance)
        )?;
    }
    writeln!(out, "shortcuts ({}):", memory.shortcuts().len())?;
    for s in memory.shortcuts() {
        let shortcut: &Shortcut = &s.shortcut;
        writeln!(
            out,
            "  {}  [{}]",
            serde_json::to_string(shortcut).expect("shortcuts serialize"),
            provenance_label(&s.provenance)
        )?;
    }
    writeln!(out, "hash: {}", memory.content_hash())
}

fn provenance_label(p: &crate::memory::Provenance) -> String {
    match p {
        crate::memory::Provenance::Seed => "seed".into(),
        crate::memory::Provenance::Evolved(task) => format!("evolved after {task}"),
    }
}

/// Checks each shortcut record of a memory file on its own, so one bad entry
/// does not hide the others.
pub fn validation_report(text: &str) -> Vec<String> {
    let mut problems = Vec::new();
    let value: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) => return vec![format!("malformed JSON: {e}")],
    };
    if let Some(records) = value.get("shortcuts").and_then(|s| s.as_array()) {
        for (i, raw) in records.iter().enumerate() {
            let mut raw = raw.clone();
            if let Some(obj) = raw.as_object_mut() {
                obj.remove("provenance");
            }
            let name = raw
                .get("name")
                .and_then(|n| n.as_str())
                .unwrap_or("<unnamed>")
                .to_string();
            match serde_json::from_value::<Shortcut>(raw) {
                Err(e) => problems.push(format!("shortcut {i} `{name}`: malformed_record: {e}")),
                Ok(s) => {
                    if let Err(e) = validate_shortcut(s) {
                        problems.push(format!("shortcut {i} `{name}`: {}: {e}", e.class()));
                    }
                }
            }
        }
    }
    if problems.is_empty() {
        if let Err(e) = LongTermMemory::from_file_str(text) {
            problems.push(e.to_string());
        }
    }
    problems
}

fn cmd_memory(command: &MemoryCommand, out: &mut dyn Write) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    match command {
        MemoryCommand::Show { memory } => {
            let m = load_memory_or_seed(memory.as_deref())?;
            show_memory(&m, out).map_err(io)
        }
        MemoryCommand::Validate { memory } => {
            let text = read_text(memory)?;
            let problems = validation_report(&text);
            if problems.is_empty() {
                let m = LongTermMemory::from_file_str(&text)?;
                writeln!(
                    out,
                    "valid: {} tip(s), {} shortcut(s)",
                    m.tips().len(),
                    m.shortcuts().len()
                )
                .map_err(io)?;
                return Ok(());
            }
            for p in &problems {
                writeln!(out, "invalid: {p}").map_err(io)?;
            }
            Err(CliError::Validation(format!(
                "{} problem(s) in {}",
                problems.len(),
                memory.display()
            )))
        }
        MemoryCommand::Retrieve {
            task,
            task_id,
            memory,
            backend,
            config,
        } => {
            let config = config.resolve()?;
            let query = load_task(task, task_id.as_deref())?;
            let m = load_memory_or_seed(memory.as_deref())?;
            let backend = build_backend(&backend.backend)?;
            let thresholds = config.retrieval.unwrap_or(RetrievalThresholds {
                max_tips: 0,
                max_shortcuts: 0,
            });
            let mut audit = AuditLog::new();
            let mut session = ModelSession::new(backend.as_ref(), &mut audit).for_task(query.id.clone());
            let r =
                retrieve_memory(&mut session, &query, &m, thresholds).map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(
                out,
                "tips: {}{}",
                r.visible
                    .tips()
                    .iter()
                    .map(|t| t.tip.id.to_string())
                    .collect::<Vec<_>>()
                    .join(", "),
                if r.tips_retrieved {
                    ""
                } else {
                    " (all; retrieval skipped)"
                }
            )
            .map_err(io)?;
            writeln!(
                out,
                "shortcuts: {}{}",
                r.visible
                    .shortcuts()
                    .iter()
                    .map(|s| s.shortcut.name.clone())
                    .collect::<Vec<_>>()
                    .join(", "),
                if r.shortcuts_retrieved {
                    ""
                } else {
                    " (all; retrieval skipped)"
                }
            )
            .map_err(io)?;
            if !r.dropped.is_empty() {
                writeln!(out, "dropped: {}", r.dropped.join(", ")).map_err(io)?;
            }
            Ok(())
        }
    }
}

fn cmd_annotate(args: &AnnotateArgs, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    let trajectory = read_trajectory(&args.trajectory)?;
    let sheet = RubricSheet::load(&args.rubrics)?;
    let record = eval::annotate(&trajectory, &sheet, &args.model, &args.trajectory, input, out)?;
    let path = args
        .out
        .clone()
        .unwrap_or_else(|| args.trajectory.join("annotation.json"));
    write_text(&path, &record.to_json_string())?;
    writeln!(out, "\nwrote {}", path.display()).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(())
}

fn load_sheets(path: Option<&Path>, annotations: &[AnnotationRecord]) -> Result<Vec<RubricSheet>, CliError> {
    match path {
        Some(p) if p.is_dir() => {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| io_error(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|e| e == "json"))
                .collect();
            files.sort();
            files
                .iter()
                .map(|f| RubricSheet::load(f).map_err(CliError::from))
                .collect()
        }
        Some(p) => Ok(vec![RubricSheet::load(p)?]),
        None => Ok(annotations
            .iter()
            .map(|a| RubricSheet {
                task_id: a.task_id.clone(),
                items: a
                    .rubrics
                    .iter()
                    .map(|m| RubricItem {
                        id: m.rubric,
                        text: String::new(),
                        kind: RubricKind::SatisfactionCriterion,
                    })
                    .collect(),
            })
            .collect()),
    }
}

fn load_annotation_dir(dir: &Path) -> Result<Vec<AnnotationRecord>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Io(format!("{} is not a directory", dir.display())));
    }
    let annotations = eval::load_annotations(dir)?;
    if annotations.is_empty() {
        return Err(CliError::Usage(format!("no annotation files in {}", dir.display())));
    }
    Ok(annotations)
}

fn cmd_score(args: &ScoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let annotations = load_annotation_dir(&args.annotations)?;
    let sheets = load_sheets(args.rubrics.as_deref(), &annotations)?;
    let report = eval::score(&sheets, &annotations)?;
    let text = match args.format {
        ReportFormat::Table => report.to_table(),
        ReportFormat::Json => report.to_json_string(),
    };
    match &args.out {
        Some(p) => write_text(p, &text),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

fn cmd_sss(args: &SssArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let annotations = load_annotation_dir(&args.annotations)?;
    let sheets = load_sheets(args.rubrics.as_deref(), &annotations)?;
    let mut curves = Vec::new();
    for a in &annotations {
        let sheet = sheets
            .iter()
            .find(|s| s.task_id == a.task_id)
            .ok_or_else(|| CliError::Validation(format!("no rubric sheet for task `{}`", a.task_id)))?;
        curves.push((a.model.clone(), eval::sss_curve(sheet, a, a.trajectory_steps)?));
    }
    write_text(&args.out, &eval::sss_csv(&curves))?;
    let io = |e: std::io::Error| CliError::Io(e.to_string());
    let mut models: BTreeMap<&str, Vec<Vec<eval::SssPoint>>> = BTreeMap::new();
    for (m, c) in &curves {
        models.entry(m.as_str()).or_default().push(c.clone());
    }
    let mut failed = None;
    for (model, cs) in models {
        let label = if model.is_empty() { "(unlabeled)" } else { model };
        match eval::sss_regression(&cs) {
            Ok((slope, intercept)) => writeln!(out, "{label}: slope {slope:.4}, intercept {intercept:.4}"),
            Err(e) => {
                let line = writeln!(out, "{label}: {e}");
                failed.get_or_insert(e);
                line
            }
        }
        .map_err(io)?;
    }
    writeln!(out, "wrote {}", args.out.display()).map_err(io)?;
    match failed {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

/// Executes a parsed command line.
pub fn run(cli: &Cli, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::RunTask(a) => cmd_run_task(a, out),
        Command::RunScenario(a) => cmd_run_scenario(a, out),
        Command::Memory { command } => cmd_memory(command, out),
        Command::Annotate(a) => cmd_annotate(a, input, out),
        Command::Score(a) => cmd_score(a, out),
        Command::Sss(a) => cmd_sss(a, out),
    }
}

/// Parses `args` (program name first) and executes them. Flag errors come
/// back as [`CliError::Usage`] instead of exiting.
pub fn run_args<I, S>(args: I, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    run(&cli, input, out)
}
