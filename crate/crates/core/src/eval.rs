//! Benchmark files, human annotations and the evaluation metrics.
//!
//! Step numbers in annotations are 1-based: step `i` means "after the i-th
//! decision iteration". Metrics are exact fractions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::memory::TaskQuery;
use crate::orchestrator::{ExitReason, Trajectory};

pub type Fraction = Ratio<u64>;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("format error: {0}")]
    Format(String),
    #[error("{0} is undefined: no applicable steps")]
    UndefinedMetric(&'static str),
    #[error("degenerate fit: all x values are identical")]
    DegenerateFit,
    #[error("regression needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot decode {path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, EvalError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| EvalError::Decode {
        path: path.display().to_string(),
        source,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("eval records serialize") + "\n"
}

// ---------------------------------------------------------------- files

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RubricKind {
    Milestone,
    SatisfactionCriterion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RubricItem {
    pub id: usize,
    pub text: String,
    pub kind: RubricKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RubricSheet {
    pub task_id: String,
    pub items: Vec<RubricItem>,
}

impl RubricSheet {
    /// At least one item, and ids are exactly `1..=n` in some order.
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.items.is_empty() {
            return Err(EvalError::Format(format!(
                "rubric sheet `{}` has no items",
                self.task_id
            )));
        }
        let ids: BTreeSet<usize> = self.items.iter().map(|i| i.id).collect();
        if ids.len() != self.items.len() || ids.iter().copied().ne(1..=self.items.len()) {
            return Err(EvalError::Format(format!(
                "rubric ids of `{}` must be 1..={} without gaps or repeats",
                self.task_id,
                self.items.len()
            )));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self, EvalError> {
        let sheet: RubricSheet = serde_json::from_str(text).map_err(|source| EvalError::Decode {
            path: "<rubrics>".into(),
            source,
        })?;
        sheet.validate()?;
        Ok(sheet)
    }

    pub fn to_json_string(&self) -> String {
        to_json(self)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let sheet: RubricSheet = read_json(path)?;
        sheet.validate()?;
        Ok(sheet)
    }
}

/// A benchmark task file: one task per entry, mirroring the id, scenario,
/// apps and query columns of the task table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskFile {
    pub tasks: Vec<TaskQuery>,
}

impl TaskFile {
    pub fn from_json_str(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|source| EvalError::Decode {
            path: "<tasks>".into(),
            source,
        })
    }

    pub fn to_json_string(&self) -> String {
        to_json(self)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        read_json(path)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RubricMark {
    pub rubric: usize,
    /// First step after which the rubric holds. It holds from then on.
    pub fulfilled_at_step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepMark {
    pub step: usize,
    pub action_correct: bool,
    /// `None` when the step has no reflector verdict.
    pub reflection_correct: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub task_id: String,
    /// Label for the system under evaluation, used to group SSS curves.
    #[serde(default)]
    pub model: String,
    /// Length of the annotated trajectory in decision iterations.
    pub trajectory_steps: usize,
    pub exit_reason: ExitReason,
    pub rubrics: Vec<RubricMark>,
    pub steps: Vec<StepMark>,
}

impl AnnotationRecord {
    /// Checks the record against its rubric sheet: every rubric is covered
    /// once, no unknown ids, and fulfillment steps fall inside the trajectory.
    pub fn validate(&self, sheet: &RubricSheet) -> Result<(), EvalError> {
        if self.task_id != sheet.task_id {
            return Err(EvalError::Format(format!(
                "annotation for `{}` scored against rubrics of `{}`",
                self.task_id, sheet.task_id
            )));
        }
        let known: BTreeSet<usize> = sheet.items.iter().map(|i| i.id).collect();
        let mut seen = BTreeSet::new();
        for m in &self.rubrics {
            if !known.contains(&m.rubric) {
                return Err(EvalError::Format(format!(
                    "annotation references unknown rubric {}",
                    m.rubric
                )));
            }
            if !seen.insert(m.rubric) {
                return Err(EvalError::Format(format!("rubric {} is annotated twice", m.rubric)));
            }
            if let Some(s) = m.fulfilled_at_step {
                if s == 0 || s > self.trajectory_steps {
                    return Err(EvalError::Format(format!(
                        "rubric {} fulfilled at step {s}, outside 1..={}",
                        m.rubric, self.trajectory_steps
                    )));
                }
            }
        }
        if seen != known {
            let missing: Vec<String> = known.difference(&seen).map(usize::to_string).collect();
            return Err(EvalError::Format(format!(
                "rubrics {} are not annotated",
                missing.join(", ")
            )));
        }
        let mut steps = BTreeSet::new();
        for s in &self.steps {
            if s.step == 0 || s.step > self.trajectory_steps || !steps.insert(s.step) {
                return Err(EvalError::Format(format!(
                    "step mark {} is out of range or repeated",
                    s.step
                )));
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        to_json(self)
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        read_json(path)
    }
}

// ---------------------------------------------------------------- metrics

/// Fulfilled rubrics over all rubrics. Milestones and satisfaction criteria
/// weigh the same.
pub fn satisfaction_score(sheet: &RubricSheet, annotation: &AnnotationRecord) -> Result<Fraction, EvalError> {
    annotation.validate(sheet)?;
    let fulfilled = annotation
        .rubrics
        .iter()
        .filter(|m| m.fulfilled_at_step.is_some())
        .count();
    Ok(Ratio::new(fulfilled as u64, sheet.items.len() as u64))
}

/// Correct actions over annotated steps. A shortcut is one action.
pub fn action_accuracy(annotation: &AnnotationRecord) -> Result<Fraction, EvalError> {
    let total = annotation.steps.len() as u64;
    if total == 0 {
        return Err(EvalError::UndefinedMetric("action accuracy"));
    }
    let correct = annotation.steps.iter().filter(|s| s.action_correct).count() as u64;
    Ok(Ratio::new(correct, total))
}

/// Correct reflections over steps that have a reflector verdict.
pub fn reflection_accuracy(annotation: &AnnotationRecord) -> Result<Fraction, EvalError> {
    let verdicts: Vec<bool> = annotation.steps.iter().filter_map(|s| s.reflection_correct).collect();
    if verdicts.is_empty() {
        return Err(EvalError::UndefinedMetric("reflection accuracy"));
    }
    let correct = verdicts.iter().filter(|&&c| c).count() as u64;
    Ok(Ratio::new(correct, verdicts.len() as u64))
}

/// Share of tasks that did not end with a self-reported stop. Zero for an
/// empty list.
pub fn termination_error_rate(exits: &[ExitReason]) -> Fraction {
    if exits.is_empty() {
        return Ratio::from_integer(0);
    }
    let errors = exits.iter().filter(|r| !r.is_clean()).count() as u64;
    Ratio::new(errors, exits.len() as u64)
}

pub fn termination_error_rate_of(trajectories: &[Trajectory]) -> Fraction {
    termination_error_rate(&trajectories.iter().map(|t| t.exit_reason).collect::<Vec<_>>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SssPoint {
    pub x: Fraction,
    pub y: Fraction,
}

/// Satisfaction after each step, with steps normalized to `i / tau`.
pub fn sss_curve(sheet: &RubricSheet, annotation: &AnnotationRecord, tau: usize) -> Result<Vec<SssPoint>, EvalError> {
    annotation.validate(sheet)?;
    if tau != annotation.trajectory_steps {
        return Err(EvalError::Format(format!(
            "annotation covers {} steps, trajectory has {tau}",
            annotation.trajectory_steps
        )));
    }
    let n = sheet.items.len() as u64;
    let mut first: Vec<usize> = annotation.rubrics.iter().filter_map(|m| m.fulfilled_at_step).collect();
    first.sort_unstable();
    let mut points = Vec::with_capacity(tau);
    let mut reached = 0;
    for i in 1..=tau {
        while reached < first.len() && first[reached] <= i {
            reached += 1;
        }
        points.push(SssPoint {
            x: Ratio::new(i as u64, tau as u64),
            y: Ratio::new(reached as u64, n),
        });
    }
    Ok(points)
}

pub fn to_f64(f: Fraction) -> f64 {
    *f.numer() as f64 / *f.denom() as f64
}

/// Ordinary least squares over every point of every curve. Returns
/// `(slope, intercept)`.
pub fn sss_regression(curves: &[Vec<SssPoint>]) -> Result<(f64, f64), EvalError> {
    let points: Vec<(f64, f64)> = curves.iter().flatten().map(|p| (to_f64(p.x), to_f64(p.y))).collect();
    if points.len() < 2 {
        return Err(EvalError::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(EvalError::DegenerateFit);
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq)]
pub struct TaskMetrics {
    pub task_id: String,
    pub model: String,
    pub satisfaction_score: Fraction,
    pub action_accuracy: Option<Fraction>,
    pub reflection_accuracy: Option<Fraction>,
    pub exit_reason: ExitReason,
    pub steps: usize,
}

/// Pooled metrics: rubric, action and reflection counts are summed across
/// tasks before dividing.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub tasks: Vec<TaskMetrics>,
    pub satisfaction_score: Fraction,
    pub action_accuracy: Option<Fraction>,
    pub reflection_accuracy: Option<Fraction>,
    pub termination_error_rate: Fraction,
}

fn pooled(parts: impl Iterator<Item = (u64, u64)>) -> Option<Fraction> {
    let (n, d) = parts.fold((0, 0), |(a, b), (x, y)| (a + x, b + y));
    (d > 0).then(|| Ratio::new(n, d))
}

/// Scores annotated tasks against their rubric sheets, matched by task id.
pub fn score(sheets: &[RubricSheet], annotations: &[AnnotationRecord]) -> Result<MetricsReport, EvalError> {
    if annotations.is_empty() {
        return Err(EvalError::Format("no annotations to score".into()));
    }
    let by_id: BTreeMap<&str, &RubricSheet> = sheets.iter().map(|s| (s.task_id.as_str(), s)).collect();
    let mut tasks = Vec::new();
    for a in annotations {
        let sheet = by_id
            .get(a.task_id.as_str())
            .ok_or_else(|| EvalError::Format(format!("no rubric sheet for task `{}`", a.task_id)))?;
        tasks.push(TaskMetrics {
            task_id: a.task_id.clone(),
            model: a.model.clone(),
            satisfaction_score: satisfaction_score(sheet, a)?,
            action_accuracy: action_accuracy(a).ok(),
            reflection_accuracy: reflection_accuracy(a).ok(),
            exit_reason: a.exit_reason,
            steps: a.trajectory_steps,
        });
    }
    let satisfaction_score = pooled(annotations.iter().map(|a| {
        let done = a.rubrics.iter().filter(|m| m.fulfilled_at_step.is_some()).count();
        (done as u64, a.rubrics.len() as u64)
    }))
    .expect("validated sheets are non-empty");
    let action_accuracy = pooled(annotations.iter().map(|a| {
        let ok = a.steps.iter().filter(|s| s.action_correct).count();
        (ok as u64, a.steps.len() as u64)
    }));
    let reflection_accuracy = pooled(annotations.iter().map(|a| {
        let v: Vec<bool> = a.steps.iter().filter_map(|s| s.reflection_correct).collect();
        (v.iter().filter(|&&c| c).count() as u64, v.len() as u64)
    }));
    let exits: Vec<ExitReason> = annotations.iter().map(|a| a.exit_reason).collect();
    Ok(MetricsReport {
        tasks,
        satisfaction_score,
        action_accuracy,
        reflection_accuracy,
        termination_error_rate: termination_error_rate(&exits),
    })
}

fn pct(f: Option<Fraction>) -> String {
    match f {
        Some(f) => format!("{:.1}", to_f64(f) * 100.0),
        None => "n/a".into(),
    }
}

impl MetricsReport {
    pub fn to_json_string(&self) -> String {
        let value = serde_json::json!({
            "tasks": self.tasks.iter().map(|t| serde_json::json!({
                "task_id": t.task_id,
                "model": t.model,
                "satisfaction_score": t.satisfaction_score.to_string(),
                "action_accuracy": t.action_accuracy.map(|f| f.to_string()),
                "reflection_accuracy": t.reflection_accuracy.map(|f| f.to_string()),
                "exit_reason": t.exit_reason,
                "steps": t.steps,
            })).collect::<Vec<_>>(),
            "satisfaction_score": self.satisfaction_score.to_string(),
            "action_accuracy": self.action_accuracy.map(|f| f.to_string()),
            "reflection_accuracy": self.reflection_accuracy.map(|f| f.to_string()),
            "termination_error_rate": self.termination_error_rate.to_string(),
        });
        serde_json::to_string_pretty(&value).expect("json values serialize") + "\n"
    }

    /// Percentages, one row per task and a pooled total row.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<28} {:>7} {:>7} {:>7}  exit", "task", "SS%", "AA%", "RA%");
        for t in &self.tasks {
            let _ = writeln!(
                out,
                "{:<28} {:>7} {:>7} {:>7}  {}",
                t.task_id,
                pct(Some(t.satisfaction_score)),
                pct(t.action_accuracy),
                pct(t.reflection_accuracy),
                t.exit_reason
            );
        }
        let _ = writeln!(
            out,
            "{:<28} {:>7} {:>7} {:>7}  TE {}%",
            "all",
            pct(Some(self.satisfaction_score)),
            pct(self.action_accuracy),
            pct(self.reflection_accuracy),
            pct(Some(self.termination_error_rate))
        );
        out
    }
}

/// Plot data with columns `x, y, model`.
pub fn sss_csv(curves: &[(String, Vec<SssPoint>)]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "y", "model"]).expect("in-memory csv");
    for (model, points) in curves {
        for p in points {
            w.write_record([to_f64(p.x).to_string(), to_f64(p.y).to_string(), model.clone()])
                .expect("in-memory csv");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
}

/// Loads every `*.json` annotation in `dir`, sorted by file name.
pub fn load_annotations(dir: &Path) -> Result<Vec<AnnotationRecord>, EvalError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| AnnotationRecord::load(p)).collect()
}

// ---------------------------------------------------------------- review flow

fn prompt(input: &mut dyn BufRead, output: &mut dyn Write, question: &str) -> std::io::Result<String> {
    write!(output, "{question} ")?;
    output.flush()?;
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            "input ended during review",
        ));
    }
    Ok(line.trim().to_string())
}

fn ask_bool(
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    question: &str,
    allow_na: bool,
) -> std::io::Result<Option<bool>> {
    let choices = if allow_na { "[y/n/na]" } else { "[y/n]" };
    loop {
        match prompt(input, output, &format!("{question} {choices}"))?
            .to_ascii_lowercase()
            .as_str()
        {
            "y" | "yes" => return Ok(Some(true)),
            "n" | "no" => return Ok(Some(false)),
            "na" | "n/a" if allow_na => return Ok(None),
            _ => writeln!(output, "please answer {choices}")?,
        }
    }
}

/// Walks a trajectory step by step, asking whether the action and the
/// reflection were correct and which rubrics became fulfilled.
pub fn annotate(
    trajectory: &Trajectory,
    sheet: &RubricSheet,
    model: &str,
    trajectory_dir: &Path,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> Result<AnnotationRecord, EvalError> {
    sheet.validate()?;
    let io = |source| EvalError::Io {
        path: "<review>".into(),
        source,
    };
    let mut fulfilled: BTreeMap<usize, usize> = BTreeMap::new();
    let mut steps = Vec::new();
    writeln!(output, "task {}: {}", trajectory.task_id, trajectory.query).map_err(io)?;
    for item in &sheet.items {
        writeln!(output, "  rubric {}: {}", item.id, item.text).map_err(io)?;
    }
    for (i, step) in trajectory.steps.iter().enumerate() {
        let n = i + 1;
        writeln!(output, "\nstep {n}/{}", trajectory.steps.len()).map_err(io)?;
        let screen = step.post_screen.as_ref().unwrap_or(&step.pre_screen);
        writeln!(output, "  screenshot: {}", trajectory_dir.join(&screen.image).display()).map_err(io)?;
        writeln!(output, "  subgoal: {}", step.subgoal).map_err(io)?;
        match &step.action {
            Some(a) => writeln!(
                output,
                "  action: {}",
                serde_json::to_string(a).expect("actions serialize")
            ),
            None => writeln!(output, "  action: (none)"),
        }
        .map_err(io)?;
        if let Some(o) = step.outcome {
            writeln!(output, "  reflector outcome: {}", o.label()).map_err(io)?;
        }
        let action_correct = ask_bool(input, output, "action correct?", false)
            .map_err(io)?
            .unwrap_or(false);
        let reflection_correct = if step.outcome.is_some() {
            ask_bool(input, output, "reflection correct?", true).map_err(io)?
        } else {
            None
        };
        loop {
            let answer = prompt(
                input,
                output,
                "rubrics newly fulfilled (ids, comma separated, blank for none)?",
            )
            .map_err(io)?;
            let ids: Result<Vec<usize>, _> = answer
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::parse)
                .collect();
            match ids {
                Ok(ids) if ids.iter().all(|id| sheet.items.iter().any(|r| r.id == *id)) => {
                    for id in ids {
                        fulfilled.entry(id).or_insert(n);
                    }
                    break;
                }
                _ => writeln!(output, "unknown rubric id in {answer:?}").map_err(io)?,
            }
        }
        steps.push(StepMark {
            step: n,
            action_correct,
            reflection_correct,
        });
    }
    let record = AnnotationRecord {
        task_id: trajectory.task_id.clone(),
        model: model.to_string(),
        trajectory_steps: trajectory.steps.len(),
        exit_reason: trajectory.exit_reason,
        rubrics: sheet
            .items
            .iter()
            .map(|r| RubricMark {
                rubric: r.id,
                fulfilled_at_step: fulfilled.get(&r.id).copied(),
            })
            .collect(),
        steps,
    };
    record.validate(sheet)?;
    Ok(record)
}
