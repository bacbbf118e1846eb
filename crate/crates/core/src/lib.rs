//! Agentic question answering over long videos.
//!
//! A controller model runs an observe/think/act/memorize loop over a
//! three-tier memory ([`memory::HierMemory`]), calling temporally scoped
//! tools ([`tools`]) through pluggable model backends ([`backend`]) until it
//! answers a multiple-choice question or exhausts its step budget
//! ([`controller`]). [`costmodel`] holds the closed-form token estimates and
//! per-run usage accounting, and [`harness`] covers dataset ingestion,
//! stratified subsets, evaluation, trace logging and replay.

pub mod backend;
pub mod controller;
pub mod costmodel;
pub mod harness;
pub mod media;
pub mod memory;
pub mod tools;

mod digest;

pub use controller::{AgentConfig, Engine, FinalAnswer};
pub use media::{FrameRange, VideoHandle};
pub use memory::HierMemory;

/// Version string stamped into every trace header; replay refuses traces from
/// other versions.
pub const ENGINE_VERSION: &str = concat!("vidloop/", env!("CARGO_PKG_VERSION"));
