//! Control-barrier-function speed filter and the baseline controllers.
//!
//! Each neighbour (the other agent or a wall disc) gives a barrier
//! `h = ‖p − p_o‖² − (r + r_o + margin)²`. Treating the neighbour as static,
//! `ḣ = c·v` with `c = 2(p − p_o)·(cos θ, sin θ)`, and the filter keeps
//! `c·v + α·h ≥ 0` by lowering the forward speed only. The turn rate is never
//! touched.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::sim::{goal_reached, AgentState, ControlInput, WorldState};
use crate::smg::{distance_along, ray_intersection};
use crate::strategy::{heading_command, Decision, Role};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyConfig {
    /// Class-K gain (1/s).
    pub alpha: f64,
    pub margin: f64,
    /// Leader/follower speed ratio of the SMG-CBF baseline.
    pub zeta: f64,
}

impl SafetyConfig {
    pub const DEFAULT: SafetyConfig = SafetyConfig {
        alpha: 2.0,
        margin: 0.02,
        zeta: 2.5,
    };

    pub fn is_valid(&self) -> bool {
        self.alpha > 0.0 && self.margin >= 0.0 && self.zeta > 1.0
    }
}

impl Default for SafetyConfig {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Linear speed constraint `coeff_v·v + bound ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbfConstraint {
    pub coeff_v: f64,
    /// `α·h`.
    pub bound: f64,
    pub h_value: f64,
}

impl CbfConstraint {
    pub fn allows(&self, v: f64) -> bool {
        self.coeff_v * v + self.bound >= 0.0
    }

    /// Largest admissible speed, or `None` if the constraint never binds for
    /// `v ≥ 0`.
    pub fn speed_limit(&self) -> Option<f64> {
        (self.coeff_v < 0.0).then(|| self.bound / -self.coeff_v)
    }
}

pub fn build_cbf(
    self_state: &AgentState,
    self_radius: f64,
    other_center: Vec2,
    other_radius: f64,
    alpha: f64,
    margin: f64,
) -> CbfConstraint {
    let rel = self_state.position - other_center;
    let reach = self_radius + other_radius + margin;
    let h = rel.norm_sq() - reach * reach;
    CbfConstraint {
        coeff_v: 2.0 * rel.dot(self_state.direction()),
        bound: alpha * h,
        h_value: h,
    }
}

/// Adds a moving neighbour's contribution to a pair barrier. Approaching
/// motion is charged at `speed_bound`; receding motion is credited at the
/// observed speed.
pub fn with_neighbour_motion(
    c: CbfConstraint,
    self_state: &AgentState,
    other_state: &AgentState,
    observed_speed: f64,
    speed_bound: f64,
) -> CbfConstraint {
    let closing = (self_state.position - other_state.position).dot(other_state.direction());
    let speed = if closing > 0.0 { speed_bound } else { observed_speed };
    CbfConstraint {
        bound: c.bound - 2.0 * closing * speed,
        ..c
    }
}

/// Barriers for agent `id` against the other agent and every obstacle.
pub fn constraints_for(world: &WorldState, id: usize, cfg: &SafetyConfig) -> Vec<CbfConstraint> {
    let me = &world.agents[id];
    let other = &world.agents[WorldState::other(id)];
    let mut out = Vec::with_capacity(world.obstacles.len() + 1);
    out.push(build_cbf(
        &me.state,
        me.params.radius,
        other.state.position,
        other.params.radius,
        cfg.alpha,
        cfg.margin,
    ));
    out.extend(
        world
            .obstacles
            .iter()
            .map(|o| build_cbf(&me.state, me.params.radius, o.center, o.radius, cfg.alpha, cfg.margin)),
    );
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOutput {
    pub input: ControlInput,
    /// Some barrier was already negative.
    pub fault: bool,
    /// Smallest barrier value seen.
    pub min_h: f64,
}

/// Largest speed in `[0, min(v_nominal, v_cap)]` that satisfies every
/// constraint. A negative barrier stops the agent and flags a fault.
pub fn filter_control(u_nominal: ControlInput, constraints: &[CbfConstraint], v_cap: f64) -> FilterOutput {
    let min_h = constraints.iter().map(|c| c.h_value).fold(f64::INFINITY, f64::min);
    if min_h < 0.0 {
        return FilterOutput {
            input: ControlInput::new(0.0, u_nominal.angular_velocity),
            fault: true,
            min_h,
        };
    }
    let v = constraints
        .iter()
        .filter_map(CbfConstraint::speed_limit)
        .fold(u_nominal.linear_velocity.min(v_cap), f64::min)
        .max(0.0);
    FilterOutput {
        input: ControlInput::new(v, u_nominal.angular_velocity),
        fault: false,
        min_h,
    }
}

fn go_to_goal(world: &WorldState, id: usize, v_cap: f64, role: Role) -> Decision {
    let me = &world.agents[id];
    if goal_reached(&me.state, &me.params) {
        return Decision::parked(role);
    }
    let v = v_cap.min(me.params.v_max);
    Decision {
        nominal: ControlInput::new(v, heading_command(&me.state, &me.params)),
        v_cap: v,
        role,
        smg_active: false,
        held: false,
        yield_to: None,
    }
}

/// Go-to-goal at `v_max` with no conflict handling beyond the filter.
pub fn mpc_cbf_decision(world: &WorldState, id: usize) -> Decision {
    go_to_goal(world, id, world.agents[id].params.v_max, Role::Unassigned)
}

/// One-shot filtered command of the plain CBF baseline.
pub fn mpc_cbf_baseline(world: &WorldState, id: usize, cfg: &SafetyConfig) -> ControlInput {
    let d = mpc_cbf_decision(world, id);
    filter_control(d.nominal, &constraints_for(world, id, cfg), d.v_cap).input
}

/// Closest distance between the two agents if both kept their headings at
/// full speed, with the time it occurs (never in the past).
pub fn closest_approach(world: &WorldState) -> (f64, f64) {
    let [a, b] = &world.agents;
    let rel_p = b.state.position - a.state.position;
    let rel_v = b.state.direction() * b.params.v_max - a.state.direction() * a.params.v_max;
    let vv = rel_v.norm_sq();
    let t = if vv > 0.0 {
        (-rel_p.dot(rel_v) / vv).max(0.0)
    } else {
        0.0
    };
    ((rel_p + rel_v * t).norm(), t)
}

/// SMG-CBF baseline: once a conflict is predicted, the agent that would reach
/// the crossing later drives at `v_max/ζ` until the other's body has cleared
/// it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmgCbfController {
    pub id: usize,
    pub zeta: f64,
    /// Crossing point and leader id, once engaged.
    pub engaged: Option<(Vec2, usize)>,
    pub released: bool,
}

impl SmgCbfController {
    pub fn new(id: usize, zeta: f64) -> Self {
        Self {
            id,
            zeta,
            engaged: None,
            released: false,
        }
    }

    pub fn decide(&mut self, world: &WorldState, cfg: &SafetyConfig) -> Decision {
        let id = self.id;
        let other = WorldState::other(id);
        let me = &world.agents[id];
        let them = &world.agents[other];
        let at_goal = |i: usize| goal_reached(&world.agents[i].state, &world.agents[i].params);

        if self.engaged.is_none() && !self.released && !at_goal(id) && !at_goal(other) {
            if let Some(q) = ray_intersection(&me.state, &them.state) {
                let (gap, _) = closest_approach(world);
                if gap < me.params.radius + them.params.radius + cfg.margin {
                    let ttq_me = me.state.position.distance(q) / me.params.v_max;
                    let ttq_them = them.state.position.distance(q) / them.params.v_max;
                    let leader = if ttq_me < ttq_them || (ttq_me == ttq_them && id < other) {
                        id
                    } else {
                        other
                    };
                    self.engaged = Some((q, leader));
                }
            }
        }

        let mut role = Role::Unassigned;
        let mut cap = me.params.v_max;
        if let Some((q, leader)) = self.engaged {
            role = if leader == id { Role::Leader } else { Role::Follower };
            if role == Role::Follower && !self.released {
                let l = world.agents[leader].params.body_length;
                if distance_along(&world.agents[leader].state, q) <= -l || at_goal(leader) {
                    self.released = true;
                } else {
                    cap = me.params.v_max / self.zeta;
                }
            }
        }
        let mut d = go_to_goal(world, id, cap, role);
        d.smg_active = self.engaged.is_some() && !self.released;
        d
    }
}

/// Fixed ordering: agent 0 goes, agent 1 waits until agent 0's body has
/// cleared the crossing of the initial paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardcodedController {
    pub id: usize,
    pub q: Option<Vec2>,
    pub released: bool,
}

impl HardcodedController {
    pub fn new(id: usize, initial: &WorldState) -> Self {
        Self {
            id,
            q: ray_intersection(&initial.agents[0].state, &initial.agents[1].state),
            released: id == 0,
        }
    }

    pub fn decide(&mut self, world: &WorldState) -> Decision {
        let role = if self.id == 0 { Role::Leader } else { Role::Follower };
        if !self.released {
            let first = &world.agents[0];
            self.released = match self.q {
                Some(q) => {
                    distance_along(&first.state, q) <= -first.params.body_length
                        || goal_reached(&first.state, &first.params)
                }
                None => true,
            };
        }
        if !self.released {
            let mut d = Decision::parked(role);
            d.held = true;
            return d;
        }
        go_to_goal(world, self.id, world.agents[self.id].params.v_max, role)
    }
}
