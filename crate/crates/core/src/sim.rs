//! Fixed-step world model: unicycle agents, circular obstacles, input limits.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::geom::{wrap_angle, Vec2};

/// Simulation step used throughout the experiments (seconds).
pub const DEFAULT_DT: f64 = 0.2;
pub const DEFAULT_V_MAX: f64 = 0.3;
pub const DEFAULT_OMEGA_MAX: f64 = 1.0;
pub const AGENT_RADIUS: f64 = 0.1;
/// Goal tolerance: one agent radius, boundary inclusive.
pub const GOAL_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimError {
    NonFiniteInput,
    NonPositiveStep,
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::NonFiniteInput => f.write_str("control input or state is not finite"),
            SimError::NonPositiveStep => f.write_str("time step must be positive"),
        }
    }
}

impl core::error::Error for SimError {}

/// Unicycle pose. `heading` is kept in (-π, π].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub heading: f64,
}

impl AgentState {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading: wrap_angle(heading),
        }
    }

    pub fn direction(&self) -> Vec2 {
        Vec2::from_heading(self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub linear_velocity: f64,
    pub angular_velocity: f64,
}

impl ControlInput {
    pub const STOP: ControlInput = ControlInput {
        linear_velocity: 0.0,
        angular_velocity: 0.0,
    };

    pub const fn new(linear_velocity: f64, angular_velocity: f64) -> Self {
        Self {
            linear_velocity,
            angular_velocity,
        }
    }
}

/// Task category of an agent. Declaration order is ascending priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PriorityType {
    Grocery,
    Airport,
    Hospital,
}

impl PriorityType {
    pub const ALL: [PriorityType; 3] = [PriorityType::Hospital, PriorityType::Airport, PriorityType::Grocery];

    pub fn name(self) -> &'static str {
        match self {
            PriorityType::Hospital => "hospital",
            PriorityType::Airport => "airport",
            PriorityType::Grocery => "grocery",
        }
    }
}

impl fmt::Display for PriorityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub radius: f64,
    /// Body length used by the occupancy-interval model; the disc diameter.
    pub body_length: f64,
    pub v_max: f64,
    pub omega_max: f64,
    pub priority_type: PriorityType,
    pub task_string: String,
    pub goal: Vec2,
    pub goal_tolerance: f64,
}

impl AgentParams {
    pub fn new(priority_type: PriorityType, task_string: String, goal: Vec2) -> Self {
        Self {
            radius: AGENT_RADIUS,
            body_length: 2.0 * AGENT_RADIUS,
            v_max: DEFAULT_V_MAX,
            omega_max: DEFAULT_OMEGA_MAX,
            priority_type,
            task_string,
            goal,
            goal_tolerance: GOAL_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub center: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub state: AgentState,
    pub params: AgentParams,
}

/// Full world snapshot. Every agent observes all of it each tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub step: usize,
    pub dt: f64,
    pub agents: [Agent; 2],
    pub obstacles: Vec<Obstacle>,
}

impl WorldState {
    /// Simulation time, always `step × dt` (never accumulated).
    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn other(id: usize) -> usize {
        1 - id
    }
}

/// Forward-Euler unicycle update.
pub fn step_dynamics(state: AgentState, input: ControlInput, dt: f64) -> Result<AgentState, SimError> {
    if dt.is_nan() || dt <= 0.0 {
        return Err(SimError::NonPositiveStep);
    }
    if !input.linear_velocity.is_finite()
        || !input.angular_velocity.is_finite()
        || !state.position.is_finite()
        || !state.heading.is_finite()
    {
        return Err(SimError::NonFiniteInput);
    }
    let (sin, cos) = libm::sincos(state.heading);
    let v = input.linear_velocity;
    Ok(AgentState {
        position: Vec2::new(state.position.x + v * cos * dt, state.position.y + v * sin * dt),
        heading: wrap_angle(state.heading + input.angular_velocity * dt),
    })
}

/// Saturates `v` to `[0, v_cap]` and `ω` to `[-ω_max, ω_max]`.
///
/// `v_cap` above `params.v_max` is treated as `v_max`.
pub fn clamp_input(input: ControlInput, params: &AgentParams, v_cap: f64) -> ControlInput {
    let cap = v_cap.min(params.v_max).max(0.0);
    ControlInput {
        linear_velocity: input.linear_velocity.clamp(0.0, cap),
        angular_velocity: input.angular_velocity.clamp(-params.omega_max, params.omega_max),
    }
}

/// Boundary inclusive.
pub fn goal_reached(state: &AgentState, params: &AgentParams) -> bool {
    state.position.distance(params.goal) <= params.goal_tolerance
}
