//! Discretized best-response search around a recorded run.
//!
//! One agent (the deviator) replays the recorded run up to a subgame state,
//! then overrides its speed with a fixed multiple of `v_max` for a window of
//! steps and afterwards resumes its own controller. The other agent is pinned
//! to its recorded trajectory. A deviation improves if the deviator never
//! touches the other agent or an obstacle and reaches its goal strictly
//! earlier than in the recorded run.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::engine::{Method, RunOptions, Simulation};
use crate::negotiation::RuleBackend;
use crate::scenario::ScenarioSpec;
use crate::sim::{AgentState, SimError, WorldState};

/// Speed multipliers tried during a deviation window.
pub const MULTIPLIERS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
/// Longest deviation window, in steps.
pub const MAX_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub agent: usize,
    /// Step at which the window opens.
    pub start: usize,
    pub len: usize,
    pub multiplier: f64,
    /// Time to goal under the deviation; `None` if the goal was not reached.
    pub ttg: Option<f64>,
    pub collision_free: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub agent: usize,
    pub start: usize,
    pub baseline_ttg: f64,
    pub tried: usize,
    /// Collision-free deviations that reach the goal strictly earlier.
    pub improving: Vec<Deviation>,
}

/// Recorded states of both agents, indexed by step.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub spec: ScenarioSpec,
    pub method: Method,
    pub options: RunOptions,
    pub states: Vec<[AgentState; 2]>,
    pub ttg: [Option<f64>; 2],
}

impl Recording {
    pub fn capture(spec: &ScenarioSpec, method: Method, options: RunOptions) -> Result<Self, SimError> {
        let mut sim = Simulation::new(spec, method, options);
        let mut backend = RuleBackend::default();
        let mut states = Vec::new();
        loop {
            states.push([sim.world.agents[0].state, sim.world.agents[1].state]);
            if !sim.step(&mut backend)? {
                break;
            }
        }
        let ttg = sim.into_outcome().record().ttg;
        Ok(Self {
            spec: spec.clone(),
            method,
            options,
            states,
            ttg,
        })
    }

    fn pinned(&self, step: usize) -> &[AgentState; 2] {
        &self.states[step.min(self.states.len() - 1)]
    }

    /// Evenly spaced subgame steps strictly inside the deviator's run,
    /// preceded by the root.
    pub fn subgame_steps(&self, agent: usize, interior: usize) -> Vec<usize> {
        let dt = self.spec.dt;
        let end = self.ttg[agent].map_or(self.states.len(), |t| libm::round(t / dt) as usize);
        let mut out = Vec::with_capacity(interior + 1);
        out.push(0);
        out.extend((1..=interior).map(|k| k * end / (interior + 1)));
        out
    }
}

fn contact_free(world: &WorldState, agent: usize) -> bool {
    let me = &world.agents[agent];
    let other = &world.agents[WorldState::other(agent)];
    let p = me.state.position;
    p.distance(other.state.position) >= me.params.radius + other.params.radius
        && world
            .obstacles
            .iter()
            .all(|o| p.distance(o.center) >= me.params.radius + o.radius)
}

/// Replays the recording to `start` with the other agent pinned, applies the
/// deviation, and reports the deviator's time to goal.
pub fn evaluate_deviation(
    rec: &Recording,
    agent: usize,
    start: usize,
    len: usize,
    multiplier: f64,
) -> Result<Deviation, SimError> {
    let other = WorldState::other(agent);
    let mut sim = Simulation::new(&rec.spec, rec.method, rec.options);
    let mut backend = RuleBackend::default();
    let v_max = sim.world.agents[agent].params.v_max;
    let mut collision_free = true;
    let mut ttg = None;
    loop {
        let step = sim.world.step;
        sim.world.agents[other].state = rec.pinned(step)[other];
        if step >= start && !contact_free(&sim.world, agent) {
            collision_free = false;
        }
        let over = (step >= start && step < start + len).then_some((agent, multiplier * v_max));
        let running = sim.step_with(&mut backend, over)?;
        if let Some(tick) = sim.ticks.last() {
            if tick.agents[agent].at_goal {
                ttg = Some(tick.t);
                break;
            }
        }
        if !running {
            break;
        }
    }
    Ok(Deviation {
        agent,
        start,
        len,
        multiplier,
        ttg,
        collision_free,
    })
}

/// Tries every multiplier and window length from the subgame at `start`.
pub fn search(rec: &Recording, agent: usize, start: usize) -> Result<SearchReport, SimError> {
    let baseline_ttg = rec.ttg[agent].unwrap_or(f64::INFINITY);
    let mut tried = 0;
    let mut improving = Vec::new();
    for len in 1..=MAX_WINDOW {
        for &m in &MULTIPLIERS {
            let d = evaluate_deviation(rec, agent, start, len, m)?;
            tried += 1;
            if d.collision_free && d.ttg.is_some_and(|t| t < baseline_ttg - 1e-9) {
                improving.push(d);
            }
        }
    }
    Ok(SearchReport {
        agent,
        start,
        baseline_ttg,
        tried,
        improving,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_variant, ScenarioKind};

    fn rec() -> Recording {
        let spec = build_variant(ScenarioKind::Doorway, 0, 0).unwrap();
        Recording::capture(&spec, Method::GameChatNoLlm, RunOptions::default()).unwrap()
    }

    #[test]
    fn full_speed_leader_has_no_gain() {
        let r = rec();
        let d = evaluate_deviation(&r, 0, 0, 10, 1.0).unwrap();
        assert!(d.collision_free);
        assert_eq!(d.ttg, r.ttg[0]);
    }

    #[test]
    fn stopping_costs_time() {
        let r = rec();
        let d = evaluate_deviation(&r, 0, 0, 10, 0.0).unwrap();
        assert!(d.ttg.unwrap() > r.ttg[0].unwrap());
    }

    #[test]
    fn subgames_are_interior() {
        let r = rec();
        let s = r.subgame_steps(1, 3);
        assert_eq!(s.len(), 4);
        assert_eq!(s[0], 0);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(*s.last().unwrap() < r.states.len());
    }
}
