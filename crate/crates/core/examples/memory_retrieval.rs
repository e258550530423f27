//! Narrows a long-term memory to what one task needs, with scripted
//! retriever responses.
//!
//! cargo run --example memory_retrieval

use phoneagent::agents::{retrieve_memory, seed_memory, ModelSession};
use phoneagent::gateway::{AgentRole, AuditLog, MatchKey, ScriptBook, ScriptedBackend};
use phoneagent::memory::{Provenance, RetrievalThresholds, TaskQuery};
use phoneagent::shortcut::{tap_type_and_enter, validate_shortcut};

fn main() -> anyhow::Result<()> {
    let mut memory = seed_memory();
    memory.add_tip(
        "Prices in the Shop app are shown under each product title.",
        Provenance::Seed,
    );
    memory.admit_shortcut(validate_shortcut(tap_type_and_enter())?, Provenance::Seed)?;
    let query = TaskQuery {
        id: "price".into(),
        scenario: "Online Shopping".into(),
        apps: vec!["Shop".into()],
        query: "Find the price of wireless earbuds.".into(),
    };

    let mut book = ScriptBook::new();
    let last = memory.tips().len();
    book.push(
        AgentRole::TipRetriever,
        MatchKey::always(),
        format!("SELECTED_TIPS: 1, {last}, 42"),
    );
    book.push(
        AgentRole::ShortcutRetriever,
        MatchKey::always(),
        "SELECTED_SHORTCUTS: Tap_Type_and_Enter",
    );
    let backend = ScriptedBackend::new(book);
    let mut audit = AuditLog::new();
    let mut session = ModelSession::new(&backend, &mut audit).for_task(query.id.clone());

    let thresholds = RetrievalThresholds {
        max_tips: 1,
        max_shortcuts: 0,
    };
    let r = retrieve_memory(&mut session, &query, &memory, thresholds)?;
    println!(
        "memory: {} tips, {} shortcuts",
        memory.tips().len(),
        memory.shortcuts().len()
    );
    for t in r.visible.tips() {
        println!("  tip {}: {}", t.tip.id, t.tip.text);
    }
    for s in r.visible.shortcuts() {
        println!("  shortcut {}", s.shortcut.name);
    }
    println!("unknown selections dropped: {:?}", r.dropped);
    Ok(())
}
