//! Social mini-game detection.
//!
//! Each agent casts a ray along its heading. When the rays cross ahead of both
//! agents at `Q` and the time windows in which the agents would occupy `Q`
//! (at full speed) overlap, the pair is in a social mini-game.

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::sim::{goal_reached, AgentState, WorldState};

/// Rays closer to parallel than this are treated as non-intersecting.
const PARALLEL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmgStatus {
    pub q_point: Option<Vec2>,
    pub d_self: f64,
    pub d_other: f64,
    pub enter_self: f64,
    pub exit_self: f64,
    pub enter_other: f64,
    pub exit_other: f64,
    pub active: bool,
}

impl SmgStatus {
    pub fn inactive() -> Self {
        Self {
            q_point: None,
            d_self: f64::INFINITY,
            d_other: f64::INFINITY,
            enter_self: f64::INFINITY,
            exit_self: f64::INFINITY,
            enter_other: f64::INFINITY,
            exit_other: f64::INFINITY,
            active: false,
        }
    }

    /// Time-to-Q of this agent at full speed.
    pub fn ttq_self(&self) -> f64 {
        self.enter_self
    }

    pub fn ttq_other(&self) -> f64 {
        self.enter_other
    }
}

/// Ray parameters `(s, t)` with `a + s·dir_a = b + t·dir_b`, or `None` for
/// parallel rays.
fn ray_parameters(a: &AgentState, b: &AgentState) -> Option<(f64, f64)> {
    let da = a.direction();
    let db = b.direction();
    let denom = da.cross(db);
    if libm::fabs(denom) < PARALLEL_EPS {
        return None;
    }
    let w = b.position - a.position;
    Some((w.cross(db) / denom, w.cross(da) / denom))
}

/// Intersection of the forward rays of `a` and `b`. `None` when the rays are
/// parallel or the crossing lies at or behind either agent.
pub fn ray_intersection(a: &AgentState, b: &AgentState) -> Option<Vec2> {
    let (s, t) = ray_parameters(a, b)?;
    if s > 0.0 && t > 0.0 {
        Some(a.position + a.direction() * s)
    } else {
        None
    }
}

/// Window `(enter, exit)` during which a body of length `l` moving at `v`
/// occupies a point `d` ahead. Requires `v > 0`.
pub fn occupancy_interval(d: f64, v: f64, l: f64) -> (f64, f64) {
    (d / v, (d + l) / v)
}

/// Signed distance from `state` to `q` along the agent's heading: positive
/// while `q` is still ahead.
pub fn distance_along(state: &AgentState, q: Vec2) -> f64 {
    (q - state.position).dot(state.direction())
}

/// Social mini-game status from the point of view of agent `self_id`.
///
/// Occupancy windows are evaluated at each agent's `v_max`. Overlap is closed:
/// windows that only touch still count.
pub fn detect_smg(world: &WorldState, self_id: usize) -> SmgStatus {
    let me = &world.agents[self_id];
    let other = &world.agents[WorldState::other(self_id)];
    if goal_reached(&me.state, &me.params) || goal_reached(&other.state, &other.params) {
        return SmgStatus::inactive();
    }
    let Some(q) = ray_intersection(&me.state, &other.state) else {
        return SmgStatus::inactive();
    };
    let d_self = me.state.position.distance(q);
    let d_other = other.state.position.distance(q);
    let (enter_self, exit_self) = occupancy_interval(d_self, me.params.v_max, me.params.body_length);
    let (enter_other, exit_other) = occupancy_interval(d_other, other.params.v_max, other.params.body_length);
    let active = enter_self <= exit_other && enter_other <= exit_self;
    SmgStatus {
        q_point: Some(q),
        d_self,
        d_other,
        enter_self,
        exit_self,
        enter_other,
        exit_other,
        active,
    }
}
