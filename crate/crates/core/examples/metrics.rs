//! Scores two hand-written annotations and fits a line through their
//! satisfaction curves.
//!
//! cargo run --example metrics

use phoneagent::eval::{
    score, sss_curve, sss_regression, AnnotationRecord, RubricItem, RubricKind, RubricMark, RubricSheet, StepMark,
};
use phoneagent::orchestrator::ExitReason;

fn sheet(task: &str, n: usize) -> RubricSheet {
    RubricSheet {
        task_id: task.into(),
        items: (1..=n)
            .map(|id| RubricItem {
                id,
                text: format!("rubric {id}"),
                kind: if id < n {
                    RubricKind::Milestone
                } else {
                    RubricKind::SatisfactionCriterion
                },
            })
            .collect(),
    }
}

fn record(task: &str, fulfilled: &[Option<usize>], correct: &[bool], exit: ExitReason) -> AnnotationRecord {
    AnnotationRecord {
        task_id: task.into(),
        model: "demo".into(),
        trajectory_steps: correct.len(),
        exit_reason: exit,
        rubrics: fulfilled
            .iter()
            .enumerate()
            .map(|(i, f)| RubricMark {
                rubric: i + 1,
                fulfilled_at_step: *f,
            })
            .collect(),
        steps: correct
            .iter()
            .enumerate()
            .map(|(i, &c)| StepMark {
                step: i + 1,
                action_correct: c,
                reflection_correct: Some(c || i % 2 == 0),
            })
            .collect(),
    }
}

fn main() -> anyhow::Result<()> {
    let sheets = vec![sheet("search", 3), sheet("shop", 4)];
    let annotations = vec![
        record(
            "search",
            &[Some(1), Some(3), Some(4)],
            &[true, true, false, true],
            ExitReason::SelfReportedSuccess,
        ),
        record(
            "shop",
            &[Some(2), Some(5), None, None],
            &[true, false, false, true, true, false],
            ExitReason::MaxConsecutiveErrors,
        ),
    ];
    let report = score(&sheets, &annotations)?;
    print!("{}", report.to_table());

    let curves = sheets
        .iter()
        .zip(&annotations)
        .map(|(s, a)| sss_curve(s, a, a.trajectory_steps))
        .collect::<Result<Vec<_>, _>>()?;
    for (a, c) in annotations.iter().zip(&curves) {
        let ys: Vec<String> = c.iter().map(|p| p.y.to_string()).collect();
        println!("{} satisfaction by step: {}", a.task_id, ys.join(" "));
    }
    let (slope, intercept) = sss_regression(&curves)?;
    println!("fit: slope {slope:.4}, intercept {intercept:.4}");
    Ok(())
}
