//! Batch runner for `gamechat-core`: JSON run configs, per-run trajectory and
//! transcript files, suite summaries, and a chat-completions negotiation
//! backend.

pub mod config;
pub mod llm;
pub mod output;
pub mod runner;

pub use config::{Backend, ConfigError, MethodSelection, RunConfig, VariantSelection};
pub use llm::{LlmBackend, LlmConfig};
pub use runner::{execute, run_config, RunError, SuiteOutput};
