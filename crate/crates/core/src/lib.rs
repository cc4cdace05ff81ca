//! Two-agent social mini-game navigation.
//!
//! Agents with unicycle kinematics share a single collision point (a doorway
//! gap or an intersection centre). Conflicts are resolved by a leader/follower
//! speed strategy, optionally overridden by a priority negotiation between the
//! agents, and every command passes through a control-barrier-function speed
//! filter before it is integrated.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the CLI and the HTTP
//! negotiation backend live in the `gamechat` companion crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod best_response;
pub mod engine;
pub mod geom;
pub mod metrics;
pub mod negotiation;
pub mod safety;
pub mod scenario;
pub mod sim;
pub mod smg;
pub mod strategy;

pub use engine::{run_one, Method, RunOptions, RunOutcome, Simulation, TickRecord};
pub use geom::Vec2;
pub use metrics::{RunRecord, SummaryTable};
pub use negotiation::{Consensus, DialogueState, Message, NegotiationBackend, RuleBackend, Verdict};
pub use scenario::{Asymmetry, ScenarioKind, ScenarioSpec};
pub use sim::{AgentParams, AgentState, ControlInput, Obstacle, PriorityType, WorldState};
pub use smg::SmgStatus;
pub use strategy::Role;
