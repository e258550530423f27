//! Validates a shortcut, binds its arguments and runs it on the simulator
//! as a single macro step.
//!
//! cargo run --example shortcut_macro

use std::collections::BTreeMap;

use phoneagent::demo;
use phoneagent::device::Device;
use phoneagent::memory::{ArgValue, AtomicOperation};
use phoneagent::shortcut::{bind_arguments, execute_shortcut, tap_type_and_enter, validate_shortcut};

fn main() -> anyhow::Result<()> {
    let shortcut = validate_shortcut(tap_type_and_enter())?;
    println!("{} {:?}", shortcut.name, shortcut.arguments);

    let values = BTreeMap::from([
        ("x".to_string(), ArgValue::Int(540)),
        ("y".to_string(), ArgValue::Int(260)),
        ("text".to_string(), ArgValue::Text("weather tomorrow".into())),
    ]);
    let call = bind_arguments(&shortcut, &values)?;
    for op in &call.expansion {
        println!("  expands to {op}");
    }

    let mut phone = demo::device();
    let start = phone.execute(&AtomicOperation::OpenApp {
        app_name: "Search".into(),
    })?;
    let trace = execute_shortcut(&mut phone, start, &call.expansion);
    for screen in &trace.screens {
        println!(
            "  screen {}",
            screen.sim_truth.as_ref().map_or("?", |t| t.page.as_str())
        );
    }
    match trace.failure {
        Some(f) => println!("stopped at operation {}: {}", f.index, f.error),
        None => println!("{} operations in one step", call.expansion.len()),
    }

    // A misspelled slot is caught before anything reaches the phone.
    let mut broken = tap_type_and_enter();
    broken.arguments[2] = "txt".into();
    let err = validate_shortcut(broken).unwrap_err();
    println!("rejected: {} ({err})", err.class());
    Ok(())
}
