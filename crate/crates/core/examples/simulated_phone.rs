//! Drives the bundled simulated phone by hand and prints what the
//! perception stage sees after each operation.
//!
//! cargo run --example simulated_phone

use phoneagent::demo;
use phoneagent::device::Device;
use phoneagent::memory::AtomicOperation;
use phoneagent::perception::{Perceptor, SimPerceptor};

fn main() -> anyhow::Result<()> {
    let mut phone = demo::device();
    let perceptor = SimPerceptor::new();
    let (w, h) = phone.screen_size();
    println!("screen {w}x{h}");

    let ops = [
        AtomicOperation::OpenApp {
            app_name: "Search".into(),
        },
        AtomicOperation::Tap { x: 540, y: 260 },
        AtomicOperation::Type {
            text: "weather tomorrow".into(),
        },
        AtomicOperation::Enter,
        AtomicOperation::Back,
        AtomicOperation::Home,
    ];
    for op in &ops {
        let screen = phone.execute(op)?;
        let page = screen.sim_truth.as_ref().map_or("?", |t| t.page.as_str());
        let seen = perceptor.perceive(&screen)?;
        println!("{op} -> {page} ({} elements)", seen.elements.len());
        for e in seen.elements.iter().take(4) {
            println!("    {:?} {:?} at {:?}", e.kind, e.content, e.center);
        }
    }
    println!("recent apps: {:?}", phone.state().recents);
    Ok(())
}
