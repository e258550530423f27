use std::time::Instant;

use crate::agents::{
    manager_step, operator_step, reflect_action, retrieve_memory, take_notes, ManagerInput, ModelSession,
    NotetakerInput, OperatorInput, ReflectorInput,
};
use crate::device::{Device, DeviceError};
use crate::gateway::{AuditLog, ModelBackend};
use crate::memory::{
    Action, ActionRecord, ErrorRecord, ImageRef, LongTermMemory, OrchestratorConfig, Outcome, ScreenState, TaskQuery,
    WorkingMemory,
};
use crate::perception::{PerceptionError, PerceptionResult, Perceptor};
use crate::shortcut::{execute_shortcut, gate_precondition, GateDecision};

use super::persist::{screenshot_path, StepTiming};
use super::{
    check_termination, ExitReason, RetrievalRecord, ScreenRecord, ShortcutFailureRecord, StepRecord, Termination,
    Trajectory,
};

/// The collaborators one task runs against.
#[derive(Clone, Copy)]
pub struct TaskContext<'a> {
    pub config: &'a OrchestratorConfig,
    pub perceptor: &'a dyn Perceptor,
    pub backend: &'a dyn ModelBackend,
}

/// Everything a finished task produced.
#[derive(Debug, Clone)]
pub struct TaskRun {
    pub query: TaskQuery,
    pub trajectory: Trajectory,
    pub audit: AuditLog,
    /// Screenshots by screen number, as referenced from the trajectory.
    pub screens: Vec<ImageRef>,
    pub timings: Vec<StepTiming>,
    pub working: WorkingMemory,
}

impl TaskRun {
    /// A task that never started, for example because no device session
    /// could be opened.
    pub fn failed(query: &TaskQuery, detail: impl Into<String>) -> Self {
        Self {
            query: query.clone(),
            trajectory: Trajectory {
                task_id: query.id.clone(),
                query: query.query.clone(),
                retrieval: None,
                steps: Vec::new(),
                exit_reason: ExitReason::OtherError,
                exit_detail: detail.into(),
            },
            audit: AuditLog::new(),
            screens: Vec::new(),
            timings: Vec::new(),
            working: WorkingMemory::new(),
        }
    }
}

fn perceive_with_retry(perceptor: &dyn Perceptor, screen: &ScreenState) -> Result<PerceptionResult, PerceptionError> {
    perceptor.perceive(screen).or_else(|e| {
        log::warn!(
            "perception failed at device step {}: {e}; retrying once",
            screen.step_index
        );
        perceptor.perceive(screen)
    })
}

/// Failures that end the loop with `other_error`.
fn is_fatal(error: &DeviceError) -> bool {
    !matches!(error, DeviceError::OutOfBounds(_) | DeviceError::UnknownApp(_))
}

struct Screens {
    images: Vec<ImageRef>,
}

impl Screens {
    fn record(&mut self, screen: &ScreenState) -> ScreenRecord {
        let index = self.images.len();
        self.images.push(screen.image.clone());
        ScreenRecord {
            image: screenshot_path(index),
            width: screen.width,
            height: screen.height,
            sim_page: screen.sim_truth.as_ref().map(|t| match &t.overlay {
                Some(o) => format!("{} [{o}]", t.page),
                None => t.page.clone(),
            }),
        }
    }
}

/// A screen with its perception, carried from one step's post-state to the
/// next step's pre-state.
struct Observed {
    screen: ScreenState,
    perception: PerceptionResult,
    record: ScreenRecord,
}

/// Runs one task to completion.
///
/// Per step: perceive, Manager (with the last `k` errors when the last `k`
/// outcomes failed), Operator, precondition gate for shortcuts, execution,
/// perceive again, Action Reflector, Notetaker. The loop ends when the
/// Operator stops or a termination condition fires.
pub fn run_task(query: &TaskQuery, ctx: TaskContext<'_>, device: &mut dyn Device, memory: &LongTermMemory) -> TaskRun {
    let config = ctx.config;
    let mut audit = AuditLog::new();
    let mut screens = Screens { images: Vec::new() };
    let mut steps: Vec<StepRecord> = Vec::new();
    let mut timings = Vec::new();
    let mut wm = WorkingMemory::new();
    let mut retrieval = None;

    let (exit_reason, exit_detail) = 'run: {
        let mut session = ModelSession::new(ctx.backend, &mut audit).for_task(query.id.clone());

        let visible = match config.retrieval {
            Some(thresholds) => match retrieve_memory(&mut session, query, memory, thresholds) {
                Ok(r) => {
                    retrieval = Some(RetrievalRecord {
                        tips: r.visible.tips().iter().map(|t| t.tip.id).collect(),
                        shortcuts: r.visible.shortcuts().iter().map(|s| s.shortcut.name.clone()).collect(),
                        dropped: r.dropped,
                    });
                    r.visible
                }
                Err(e) => break 'run (ExitReason::OtherError, e.to_string()),
            },
            None => memory.clone(),
        };

        let mut current: Option<Observed> = None;
        loop {
            let index = steps.len();
            session.step = index;
            let started = Instant::now();

            let pre = match current.take() {
                Some(o) => o,
                None => {
                    let screen = match device.capture() {
                        Ok(s) => s,
                        Err(e) => break 'run (ExitReason::OtherError, e.to_string()),
                    };
                    let perception = match perceive_with_retry(ctx.perceptor, &screen) {
                        Ok(p) => p,
                        Err(e) => break 'run (ExitReason::OtherError, e.to_string()),
                    };
                    let record = screens.record(&screen);
                    Observed {
                        screen,
                        perception,
                        record,
                    }
                }
            };

            let escalated = wm.escalation_flag(config.k_escalation);
            let mut step = StepRecord {
                index,
                pre_screen: pre.record.clone(),
                perception: pre.perception.clone(),
                escalated,
                plan: String::new(),
                subgoal: String::new(),
                thought: String::new(),
                action: None,
                expectation: String::new(),
                gate: None,
                device_operations: 0,
                shortcut_trace: Vec::new(),
                shortcut_failure: None,
                post_screen: None,
                post_perception: None,
                outcome: None,
                error: None,
                progress: wm.progress.clone(),
                notes: wm.notes.clone(),
            };
            macro_rules! fail {
                ($detail:expr) => {{
                    step.plan = wm.plan.clone();
                    step.subgoal = wm.subgoal.clone();
                    steps.push(step);
                    timings.push(StepTiming::since(index, started));
                    break 'run (ExitReason::OtherError, $detail.to_string());
                }};
            }

            // Manager
            let escalation = escalated.then(|| wm.escalation_errors(config.k_escalation));
            match manager_step(
                &mut session,
                &ManagerInput {
                    query,
                    screen: &pre.screen,
                    working: &wm,
                    memory: &visible,
                    escalation,
                },
            ) {
                Ok(r) => {
                    wm.plan = r.plan;
                    wm.subgoal = r.subgoal;
                }
                Err(e) => fail!(e),
            }
            step.plan = wm.plan.clone();
            step.subgoal = wm.subgoal.clone();

            // Operator
            let decision = match operator_step(
                &mut session,
                &OperatorInput {
                    query,
                    screen: &pre.screen,
                    perception: &pre.perception,
                    working: &wm,
                    history_window: config.m_history_window,
                    memory: &visible,
                },
            ) {
                Ok(d) => d,
                Err(e) => fail!(e),
            };
            step.thought = decision.thought.clone();
            step.action = Some(decision.action.clone());
            step.expectation = decision.expectation.clone();

            // Execution
            let mut denial = None;
            let after: ScreenState = match &decision.action {
                Action::Stop { message } => {
                    steps.push(step);
                    timings.push(StepTiming::since(index, started));
                    break 'run (ExitReason::SelfReportedSuccess, message.clone());
                }
                Action::Atomic { operation } => match device.execute(operation) {
                    Ok(s) => {
                        step.device_operations = 1;
                        s
                    }
                    Err(e) if !is_fatal(&e) => {
                        log::info!("step {index}: {e}");
                        match device.capture() {
                            Ok(s) => s,
                            Err(e) => fail!(e),
                        }
                    }
                    Err(e) => fail!(e),
                },
                Action::Shortcut { call } => {
                    let shortcut = visible.shortcut(&call.name).expect("resolved against visible memory");
                    let gate = gate_precondition(shortcut, &pre.perception, config.precondition_gate);
                    step.gate = Some(gate.clone());
                    match gate {
                        GateDecision::Deny { reason } => {
                            denial = Some(reason);
                            pre.screen.clone()
                        }
                        GateDecision::Allow => {
                            let trace = execute_shortcut(device, pre.screen.clone(), &call.expansion);
                            step.device_operations = trace.screens.len() - 1;
                            step.shortcut_trace = trace.screens[1..].iter().map(|s| screens.record(s)).collect();
                            if let Some(f) = &trace.failure {
                                step.shortcut_failure = Some(ShortcutFailureRecord {
                                    index: f.index,
                                    error: f.error.to_string(),
                                });
                                if is_fatal(&f.error) {
                                    fail!(f.error);
                                }
                            }
                            trace.final_screen().clone()
                        }
                    }
                }
            };

            // Post-state
            let same_screen = step.device_operations == 0 && step.shortcut_trace.is_empty() && after == pre.screen;
            let post_record = if let Some(last) = step.shortcut_trace.last() {
                last.clone()
            } else if same_screen {
                pre.record.clone()
            } else {
                screens.record(&after)
            };
            let post_perception = if same_screen {
                Ok(pre.perception.clone())
            } else {
                perceive_with_retry(ctx.perceptor, &after)
            };
            step.post_screen = Some(post_record.clone());

            let synthesized = match (&denial, &post_perception) {
                (Some(reason), _) => Some((
                    format!("shortcut call was denied: {reason}"),
                    "the precondition is not satisfied on the current screen",
                    "reach a screen that satisfies the precondition, or use atomic operations",
                )),
                (None, Err(e)) => Some((
                    format!("the screen after the action could not be perceived: {e}"),
                    "perception service failure",
                    "retry the step",
                )),
                _ => None,
            };
            if let Some((description, cause, fix)) = synthesized {
                let error = ErrorRecord {
                    step_index: index,
                    description,
                    suspected_cause: cause.into(),
                    suggested_fix: fix.into(),
                };
                let record = ActionRecord {
                    step_index: index,
                    action: decision.action.clone(),
                    outcome: Outcome::C,
                    expectation: decision.expectation.clone(),
                };
                step.outcome = Some(Outcome::C);
                step.error = Some(error.clone());
                wm.record(record, Some(error)).expect("synthesized records pair up");
            }

            match post_perception {
                Ok(post_p) => {
                    if denial.is_none() {
                        // Action Reflector
                        let reflection = match reflect_action(
                            &mut session,
                            &ReflectorInput {
                                query,
                                before: &pre.screen,
                                before_perception: &pre.perception,
                                after: &after,
                                after_perception: &post_p,
                                action: &decision.action,
                                expectation: &decision.expectation,
                                subgoal: &wm.subgoal,
                                progress: &wm.progress,
                            },
                            index,
                        ) {
                            Ok(r) => r,
                            Err(e) => fail!(e),
                        };
                        step.outcome = Some(reflection.record.outcome);
                        step.error = reflection.error.clone();
                        wm.progress = reflection.progress;
                        if let Err(e) = wm.record(reflection.record, reflection.error) {
                            fail!(e);
                        }
                    }
                    // Notetaker
                    match take_notes(
                        &mut session,
                        &NotetakerInput {
                            query,
                            screen: &after,
                            perception: &post_p,
                            plan: &wm.plan,
                            subgoal: &wm.subgoal,
                            progress: &wm.progress,
                            notes: &wm.notes,
                        },
                    ) {
                        Ok(n) => wm.notes = n,
                        Err(e) => fail!(e),
                    }
                    step.post_perception = Some(post_p.clone());
                    current = Some(Observed {
                        screen: after,
                        perception: post_p,
                        record: post_record,
                    });
                }
                Err(_) => current = None,
            }

            step.progress = wm.progress.clone();
            step.notes = wm.notes.clone();
            steps.push(step);
            timings.push(StepTiming::since(index, started));

            if let Termination::Exit(reason) = check_termination(wm.action_history(), steps.len(), false, config) {
                break 'run (reason, String::new());
            }
        }
    };

    TaskRun {
        query: query.clone(),
        trajectory: Trajectory {
            task_id: query.id.clone(),
            query: query.query.clone(),
            retrieval,
            steps,
            exit_reason,
            exit_detail,
        },
        audit,
        screens: screens.images,
        timings,
        working: wm,
    }
}
