//! Leader/follower role assignment and nominal control.
//!
//! Without an agreed priority order both agents fall back on the time-to-Q
//! rule: the agent that would reach `Q` first leads at full speed, the other
//! follows with its speed capped so it arrives at `Q` just as the leader's body
//! leaves it. A negotiated consensus replaces those roles with the priority
//! order and is never revoked.

use serde::{Deserialize, Serialize};

use crate::geom::{wrap_angle, Vec2};
use crate::negotiation::Consensus;
use crate::sim::{goal_reached, AgentParams, AgentState, ControlInput, PriorityType, WorldState};
use crate::smg::{detect_smg, distance_along, SmgStatus};

/// Proportional heading gain (1/s), saturated by `omega_max`.
pub const HEADING_GAIN: f64 = 2.0;

/// TTQ differences below this are ties (seconds).
const TTQ_TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Role {
    Leader,
    Follower,
    #[default]
    Unassigned,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Leader => "leader",
            Role::Follower => "follower",
            Role::Unassigned => "unassigned",
        }
    }
}

/// Social priority `p` of an agent; larger is more urgent.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PriorityRank(pub f64);

/// Numeric values assigned to the three priority types. Only the ordering is
/// meaningful for role assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankScale {
    pub hospital: f64,
    pub airport: f64,
    pub grocery: f64,
}

impl RankScale {
    pub const DEFAULT: RankScale = RankScale {
        hospital: 3.0,
        airport: 2.0,
        grocery: 1.0,
    };

    pub fn rank(&self, ty: PriorityType) -> PriorityRank {
        PriorityRank(match ty {
            PriorityType::Hospital => self.hospital,
            PriorityType::Airport => self.airport,
            PriorityType::Grocery => self.grocery,
        })
    }
}

impl Default for RankScale {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl PriorityType {
    pub fn rank(self) -> PriorityRank {
        RankScale::DEFAULT.rank(self)
    }
}

/// Speed limit that brings the follower to `Q` as the leader's body clears it:
/// `min(v_max, d_follower·v_max / (l + d_leader))`.
///
/// `d_leader` may be negative once the leader has passed `Q`; when
/// `l + d_leader ≤ 0` the leader is clear and the cap is `v_max`.
pub fn follower_speed_cap(d_follower: f64, d_leader: f64, l: f64, v_max: f64) -> f64 {
    let clear_in = l + d_leader;
    if clear_in <= 0.0 {
        return v_max;
    }
    (d_follower * v_max / clear_in).clamp(0.0, v_max)
}

/// Time-to-Q rule. Exact ties go to the lower agent id.
pub fn assign_roles_strategy1(smg: &SmgStatus, self_id: usize, other_id: usize) -> Role {
    let diff = smg.ttq_self() - smg.ttq_other();
    if diff < -TTQ_TIE_EPS {
        Role::Leader
    } else if diff > TTQ_TIE_EPS {
        Role::Follower
    } else if self_id < other_id {
        Role::Leader
    } else {
        Role::Follower
    }
}

/// Role implied by an agreed priority order. `Unassigned` when no consensus
/// was reached, in which case the time-to-Q rule stays in force.
pub fn assign_roles_consensus(consensus: &Consensus, self_id: usize) -> Role {
    match (consensus.reached, consensus.higher_priority_agent) {
        (true, Some(leader)) if leader == self_id => Role::Leader,
        (true, Some(_)) => Role::Follower,
        _ => Role::Unassigned,
    }
}

/// Turn-rate command toward the goal.
pub fn heading_command(state: &AgentState, params: &AgentParams) -> f64 {
    let bearing = (params.goal - state.position).angle();
    (HEADING_GAIN * wrap_angle(bearing - state.heading)).clamp(-params.omega_max, params.omega_max)
}

/// Go-to-goal command. Leaders and unassigned agents drive at `v_max`; a
/// follower drives at `follower_cap` until it reaches `Q` (`None` once past).
pub fn nominal_control(
    state: &AgentState,
    params: &AgentParams,
    role: Role,
    follower_cap: Option<f64>,
) -> ControlInput {
    let v = match (role, follower_cap) {
        (Role::Follower, Some(cap)) => cap.min(params.v_max),
        _ => params.v_max,
    };
    ControlInput::new(v, heading_command(state, params))
}

/// Where roles came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoleSource {
    TimeToQ,
    Consensus,
}

/// A resolved conflict over one collision point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub q: Vec2,
    pub leader: usize,
    pub source: RoleSource,
    /// Set once the follower has reached `Q`.
    pub follower_through: bool,
}

impl Episode {
    pub fn role_of(&self, id: usize) -> Role {
        if self.leader == id {
            Role::Leader
        } else {
            Role::Follower
        }
    }
}

/// Output of one controller tick, before the safety filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub nominal: ControlInput,
    /// Speed ceiling imposed by the strategy.
    pub v_cap: f64,
    pub role: Role,
    pub smg_active: bool,
    /// Deliberately held still (not a deadlock).
    pub held: bool,
    /// Follower of an open episode: yields to this agent's leader.
    pub yield_to: Option<usize>,
}

impl Decision {
    pub fn parked(role: Role) -> Self {
        Self {
            nominal: ControlInput::STOP,
            v_cap: 0.0,
            role,
            smg_active: false,
            held: false,
            yield_to: None,
        }
    }
}

/// Per-agent controller state for the negotiated leader/follower strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameChatController {
    pub id: usize,
    pub episode: Option<Episode>,
    pub consensus_leader: Option<usize>,
}

impl GameChatController {
    pub fn new(id: usize) -> Self {
        Self {
            id,
            episode: None,
            consensus_leader: None,
        }
    }

    /// Accepts an agreed leader. Later calls are ignored.
    pub fn apply_consensus(&mut self, leader: usize) {
        if self.consensus_leader.is_none() {
            self.consensus_leader = Some(leader);
        }
    }

    pub fn role(&self) -> Role {
        match (self.episode, self.consensus_leader) {
            (Some(e), _) => e.role_of(self.id),
            (None, Some(l)) if l == self.id => Role::Leader,
            (None, Some(_)) => Role::Follower,
            (None, None) => Role::Unassigned,
        }
    }

    /// One control tick. `time_to_q_enabled` gates the fallback rule (it is
    /// suppressed while an early dialogue is still running).
    pub fn decide(&mut self, world: &WorldState, time_to_q_enabled: bool) -> Decision {
        let id = self.id;
        let other = WorldState::other(id);
        let me = &world.agents[id];
        let smg = detect_smg(world, id);

        if let Some(leader) = self.consensus_leader {
            let needs_switch = match self.episode {
                Some(e) => e.source != RoleSource::Consensus && !e.follower_through,
                None => true,
            };
            if needs_switch {
                let q = self.episode.map(|e| e.q).or(smg.q_point);
                if let Some(q) = q {
                    self.episode = Some(Episode {
                        q,
                        leader,
                        source: RoleSource::Consensus,
                        follower_through: false,
                    });
                }
            }
        } else if time_to_q_enabled && self.episode.is_none() && smg.active {
            let leader = match assign_roles_strategy1(&smg, id, other) {
                Role::Leader => id,
                _ => other,
            };
            self.episode = Some(Episode {
                q: smg.q_point.expect("active SMG has a collision point"),
                leader,
                source: RoleSource::TimeToQ,
                follower_through: false,
            });
        }

        let role = self.role();
        if goal_reached(&me.state, &me.params) {
            return Decision::parked(role);
        }

        let mut cap = None;
        let mut yield_to = None;
        if let Some(ep) = self.episode.as_mut() {
            if ep.leader != id && !ep.follower_through {
                let d_follower = distance_along(&me.state, ep.q);
                if d_follower <= 0.0 {
                    ep.follower_through = true;
                } else {
                    yield_to = Some(ep.leader);
                    let d_leader = distance_along(&world.agents[ep.leader].state, ep.q);
                    cap = Some(follower_speed_cap(
                        d_follower,
                        d_leader,
                        me.params.body_length,
                        me.params.v_max,
                    ));
                }
            }
        }
        let nominal = nominal_control(&me.state, &me.params, role, cap);
        Decision {
            nominal,
            v_cap: nominal.linear_velocity,
            role,
            smg_active: smg.active,
            held: false,
            yield_to,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_variant, ScenarioKind};
    use crate::sim::step_dynamics;

    fn smg(ttq_self: f64, ttq_other: f64) -> SmgStatus {
        let mut s = SmgStatus::inactive();
        s.enter_self = ttq_self;
        s.enter_other = ttq_other;
        s.active = true;
        s
    }

    #[test]
    fn cap_values() {
        // 2.0·0.3/2.2 and 1.75·0.3/2.2
        assert!((follower_speed_cap(2.0, 2.0, 0.2, 0.3) - 0.272_727_272_727_272_7).abs() < 1e-12);
        assert!((follower_speed_cap(1.75, 2.0, 0.2, 0.3) - 0.238_636_363_636_363_6).abs() < 1e-12);
        assert!((follower_speed_cap(2.2, 2.0, 0.2, 0.3) - 0.3).abs() < 1e-12);
        assert_eq!(follower_speed_cap(5.0, 2.0, 0.2, 0.3), 0.3);
        // leader already past Q
        assert_eq!(follower_speed_cap(0.5, -0.3, 0.2, 0.3), 0.3);
        assert!((follower_speed_cap(0.05, -0.1, 0.2, 0.3) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn time_to_q_roles() {
        assert_eq!(assign_roles_strategy1(&smg(6.0, 6.5), 1, 0), Role::Leader);
        assert_eq!(assign_roles_strategy1(&smg(7.5, 6.667), 0, 1), Role::Follower);
        assert_eq!(assign_roles_strategy1(&smg(7.0, 7.0), 0, 1), Role::Leader);
        assert_eq!(assign_roles_strategy1(&smg(7.0, 7.0), 1, 0), Role::Follower);
    }

    #[test]
    fn consensus_roles() {
        use PriorityType::*;
        let c = Consensus::ground_truth(0.0, [Hospital, Grocery]);
        assert_eq!(assign_roles_consensus(&c, 0), Role::Leader);
        let c = Consensus::ground_truth(0.0, [Airport, Hospital]);
        assert_eq!(assign_roles_consensus(&c, 0), Role::Follower);
        assert_eq!(assign_roles_consensus(&Consensus::default(), 0), Role::Unassigned);
        assert!(Hospital.rank() > Airport.rank() && Airport.rank() > Grocery.rank());
    }

    #[test]
    fn leader_on_line_drives_straight_at_v_max() {
        let w = build_variant(ScenarioKind::Intersection, 0, 0).unwrap().initial_world();
        let a = &w.agents[0];
        let u = nominal_control(&a.state, &a.params, Role::Leader, None);
        assert_eq!(u.linear_velocity, 0.3);
        assert!(u.angular_velocity.abs() < 1e-12);
    }

    #[test]
    fn symmetric_doorway_follower_starts_at_cap() {
        let w = build_variant(ScenarioKind::Doorway, 0, 0).unwrap().initial_world();
        let mut c0 = GameChatController::new(0);
        let mut c1 = GameChatController::new(1);
        let d0 = c0.decide(&w, true);
        let d1 = c1.decide(&w, true);
        assert_eq!(d0.role, Role::Leader);
        assert_eq!(d1.role, Role::Follower);
        assert_eq!(d0.nominal.linear_velocity, 0.3);
        // d_f = d_l = √(2² + 0.5²)
        let d = libm::sqrt(4.25);
        let want = d * 0.3 / (0.2 + d);
        assert!((d1.nominal.linear_velocity - want).abs() < 1e-12);
        assert!(d1.nominal.angular_velocity.abs() < 1e-12);
    }

    #[test]
    fn follower_resumes_v_max_past_q() {
        let mut w = build_variant(ScenarioKind::Intersection, 0, 0).unwrap().initial_world();
        let mut c1 = GameChatController::new(1);
        c1.decide(&w, true);
        assert_eq!(c1.role(), Role::Follower);
        w.agents[0].state.position = Vec2::new(0.3, 0.0);
        w.agents[1].state.position = Vec2::new(0.0, 0.01);
        w.agents[1].state.heading = 0.1 + core::f64::consts::FRAC_PI_2;
        let d = c1.decide(&w, true);
        assert_eq!(d.nominal.linear_velocity, 0.3);
        assert!(d.nominal.angular_velocity < 0.0);
        assert!(c1.episode.unwrap().follower_through);
    }

    #[test]
    fn consensus_overrides_time_to_q_roles() {
        let w = build_variant(ScenarioKind::Doorway, 0, 0).unwrap().initial_world();
        let mut c0 = GameChatController::new(0);
        c0.decide(&w, true);
        assert_eq!(c0.role(), Role::Leader);
        c0.apply_consensus(1);
        let d = c0.decide(&w, true);
        assert_eq!(d.role, Role::Follower);
        assert!(d.nominal.linear_velocity < 0.3);
        // never revoked
        c0.apply_consensus(0);
        assert_eq!(c0.decide(&w, true).role, Role::Follower);
    }

    #[test]
    fn cap_holds_schedule_under_euler_steps() {
        // Pure strategy rollout (no safety filter): the follower's cap stays
        // at its initial value while both stay on schedule.
        let mut w = build_variant(ScenarioKind::Intersection, 0, 0).unwrap().initial_world();
        let mut c = [GameChatController::new(0), GameChatController::new(1)];
        let first = c[1].decide(&w, true).nominal.linear_velocity;
        for _ in 0..30 {
            let d = [c[0].decide(&w, true), c[1].decide(&w, true)];
            assert!((d[1].nominal.linear_velocity - first).abs() < 1e-9);
            let dt = w.dt;
            for (a, di) in w.agents.iter_mut().zip(&d) {
                a.state = step_dynamics(a.state, di.nominal, dt).unwrap();
            }
            w.step += 1;
        }
    }
}
