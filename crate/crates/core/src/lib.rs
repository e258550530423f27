//! Hierarchical multi-agent phone automation.
//!
//! A Manager plans, an Operator acts, a Reflector judges each action and a
//! Notetaker keeps task-relevant facts, all around a phone that is either a
//! deterministic simulator or a real device over adb. Between tasks, two
//! experience reflectors grow a long-term memory of Tips and Shortcuts.

pub mod agents;
pub mod cli;
pub mod demo;
pub mod device;
pub mod eval;
pub mod gateway;
pub mod memory;
pub mod orchestrator;
pub mod perception;
pub mod shortcut;

#[cfg(test)]
pub(crate) mod test_http;
