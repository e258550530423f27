//! Calls a text-input shortcut on the app switcher, where no input box
//! exists, under both precondition gates.
//!
//! cargo run --example precondition_misuse

use std::collections::BTreeMap;

use phoneagent::demo;
use phoneagent::device::Device;
use phoneagent::memory::{ArgValue, AtomicOperation};
use phoneagent::perception::{Perceptor, SimPerceptor};
use phoneagent::shortcut::{
    bind_arguments, execute_shortcut, gate_precondition, tap_type_and_enter, validate_shortcut, GateDecision, GateMode,
};

fn page(screen: &phoneagent::memory::ScreenState) -> &str {
    screen.sim_truth.as_ref().map_or("?", |t| t.page.as_str())
}

fn main() -> anyhow::Result<()> {
    let shortcut = validate_shortcut(tap_type_and_enter())?;
    let values = BTreeMap::from([
        ("x".to_string(), ArgValue::Int(490)),
        ("y".to_string(), ArgValue::Int(260)),
        ("text".to_string(), ArgValue::Text("earbuds".into())),
    ]);
    let call = bind_arguments(&shortcut, &values)?;

    for mode in [GateMode::ModelMediated, GateMode::StrictHeuristic] {
        let mut phone = demo::device();
        for app in ["Shop", "Notes"] {
            phone.execute(&AtomicOperation::OpenApp { app_name: app.into() })?;
        }
        let start = phone.execute(&AtomicOperation::SwitchApp)?;
        let seen = SimPerceptor::new().perceive(&start)?;
        print!("{mode:?} on {}: ", page(&start));
        match gate_precondition(&shortcut, &seen, mode) {
            GateDecision::Allow => {
                let trace = execute_shortcut(&mut phone, start, &call.expansion);
                println!("allowed, ended on {}", page(trace.final_screen()));
            }
            GateDecision::Deny { reason } => println!("denied: {reason}"),
        }
    }
    Ok(())
}
