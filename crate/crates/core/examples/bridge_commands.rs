//! Shows the adb commands a real-device session would issue, using a
//! runner that only records them.
//!
//! cargo run --example bridge_commands

use std::cell::RefCell;
use std::collections::BTreeMap;

use phoneagent::device::{BridgeDevice, CommandOutput, CommandRunner};
use phoneagent::memory::AtomicOperation;

#[derive(Default)]
struct Recorder {
    calls: RefCell<Vec<String>>,
}

impl CommandRunner for &Recorder {
    fn run(&self, program: &str, args: &[String]) -> std::io::Result<CommandOutput> {
        self.calls.borrow_mut().push(format!("{program} {}", args.join(" ")));
        Ok(CommandOutput {
            success: true,
            stdout: "Physical size: 1080x2400\n".into(),
            stderr: String::new(),
        })
    }
}

fn main() -> anyhow::Result<()> {
    let recorder = Recorder::default();
    let packages = BTreeMap::from([("Notes".to_string(), "com.example.notes".to_string())]);
    let device =
        BridgeDevice::connect(&recorder, Some("emulator-5554".into()), std::env::temp_dir())?.with_packages(packages);
    println!("connect: {}", recorder.calls.borrow().join("; "));

    let ops = [
        AtomicOperation::OpenApp {
            app_name: "Notes".into(),
        },
        AtomicOperation::Tap { x: 540, y: 1200 },
        AtomicOperation::Swipe {
            x1: 540,
            y1: 1800,
            x2: 540,
            y2: 600,
        },
        AtomicOperation::Type {
            text: "milk & eggs".into(),
        },
        AtomicOperation::Enter,
        AtomicOperation::SwitchApp,
        AtomicOperation::Back,
        AtomicOperation::Home,
        AtomicOperation::Wait,
    ];
    for op in &ops {
        match device.command_for(op)? {
            Some(args) => println!("{:<28} adb {}", op.to_string(), args.join(" ")),
            None => println!("{:<28} (no command)", op.to_string()),
        }
    }
    match device.command_for(&AtomicOperation::OpenApp {
        app_name: "Camera".into(),
    }) {
        Ok(_) => println!("Camera resolved"),
        Err(e) => println!("Camera: {e}"),
    }
    Ok(())
}
