//! Tick loop: observe, negotiate, decide, filter, integrate.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::metrics::{detect_collision, evaluate, RunRecord};
use crate::negotiation::{Consensus, DialogueState, NegotiationBackend, RuleBackend, DEFAULT_LATENCY};
use crate::safety::{
    constraints_for, filter_control, mpc_cbf_decision, with_neighbour_motion, HardcodedController, SafetyConfig,
    SmgCbfController,
};
use crate::scenario::ScenarioSpec;
use crate::sim::{clamp_input, goal_reached, step_dynamics, ControlInput, SimError, WorldState};
use crate::strategy::{Decision, GameChatController, Role};

/// How long an early dialogue may hold back the time-to-Q rule (s).
pub const PRE_SMG_WINDOW: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MpcCbf,
    SmgCbf,
    GameChatNoLlm,
    GameChatGroundTruth,
    GameChatPreSmg,
    GameChatSmgComm,
    Hardcoded,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::MpcCbf,
        Method::SmgCbf,
        Method::GameChatNoLlm,
        Method::GameChatGroundTruth,
        Method::GameChatPreSmg,
        Method::GameChatSmgComm,
        Method::Hardcoded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::MpcCbf => "mpc-cbf",
            Method::SmgCbf => "smg-cbf",
            Method::GameChatNoLlm => "gamechat-no-llm",
            Method::GameChatGroundTruth => "gamechat-ground-truth",
            Method::GameChatPreSmg => "gamechat-pre-smg",
            Method::GameChatSmgComm => "gamechat-smg-comm",
            Method::Hardcoded => "hardcoded",
        }
    }

    /// Row label for summary tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::MpcCbf => "MPC-CBF",
            Method::SmgCbf => "SMG-CBF",
            Method::GameChatNoLlm => "GameChat (no LLM)",
            Method::GameChatGroundTruth => "GameChat Ground Truth",
            Method::GameChatPreSmg => "GameChat Pre-SMG Comm.",
            Method::GameChatSmgComm => "GameChat SMG Comm.",
            Method::Hardcoded => "Hardcoded",
        }
    }

    pub fn is_gamechat(self) -> bool {
        matches!(
            self,
            Method::GameChatNoLlm | Method::GameChatGroundTruth | Method::GameChatPreSmg | Method::GameChatSmgComm
        )
    }

    /// Methods that talk through a negotiation backend.
    pub fn uses_dialogue(self) -> bool {
        matches!(self, Method::GameChatPreSmg | Method::GameChatSmgComm)
    }

    /// Run length for a scenario horizon `t_max`. The sequential baseline
    /// gets twice as long since its second agent cannot start until the
    /// first is through.
    pub fn horizon(self, t_max: f64) -> f64 {
        match self {
            Method::Hardcoded => 2.0 * t_max,
            _ => t_max,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownMethod(pub String);

impl fmt::Display for UnknownMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown method {:?}", self.0)
    }
}

impl core::error::Error for UnknownMethod {}

impl FromStr for Method {
    type Err = UnknownMethod;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub safety: SafetyConfig,
    /// Simulated seconds per dialogue message.
    pub latency: f64,
    /// Overrides the scenario horizon before [`Method::horizon`] is applied.
    pub t_max: Option<f64>,
    /// Imposes this leader on the negotiated methods from t = 0.
    pub forced_leader: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            safety: SafetyConfig::DEFAULT,
            latency: DEFAULT_LATENCY,
            t_max: None,
            forced_leader: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentTick {
    pub position: Vec2,
    pub heading: f64,
    /// Applied speed and turn rate for the step starting at this tick.
    pub v: f64,
    pub omega: f64,
    /// Strategy speed target before the safety filter.
    pub v_cap: f64,
    pub role: Role,
    pub smg_active: bool,
    pub min_h: f64,
    pub at_goal: bool,
    pub held: bool,
    pub fault: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub step: usize,
    pub t: f64,
    pub agents: [AgentTick; 2],
    pub dialogue_active: bool,
    pub collision: bool,
    /// Final state only; no input was applied.
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationSummary {
    pub consensus: Consensus,
    pub correct: Option<bool>,
    pub messages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub spec: ScenarioSpec,
    pub method: Method,
    pub ticks: Vec<TickRecord>,
    pub timed_out: bool,
    pub negotiation: Option<NegotiationSummary>,
    pub dialogue: Option<DialogueState>,
    /// Backend failures as `(sim time, error)`.
    pub backend_errors: Vec<(f64, String)>,
}

impl RunOutcome {
    pub fn record(&self) -> RunRecord {
        evaluate(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Controllers {
    Plain,
    GameChat([GameChatController; 2]),
    SmgCbf([SmgCbfController; 2]),
    Hardcoded([HardcodedController; 2]),
}

/// One run in progress. Cloning it forks the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Simulation {
    pub spec: ScenarioSpec,
    pub method: Method,
    pub options: RunOptions,
    pub world: WorldState,
    controllers: Controllers,
    pub dialogue: Option<DialogueState>,
    pub ground_truth: Option<Consensus>,
    pub ticks: Vec<TickRecord>,
    pub max_steps: usize,
    pub finished: bool,
    pub timed_out: bool,
    pub backend_errors: Vec<(f64, String)>,
}

impl Simulation {
    pub fn new(spec: &ScenarioSpec, method: Method, options: RunOptions) -> Self {
        let world = spec.initial_world();
        let t_max = method.horizon(options.t_max.unwrap_or(spec.t_max));
        let max_steps = libm::round(t_max / spec.dt) as usize;
        let truth = [spec.priority(0), spec.priority(1)];
        let mut ground_truth = None;
        let controllers = match method {
            Method::MpcCbf => Controllers::Plain,
            Method::SmgCbf => Controllers::SmgCbf([
                SmgCbfController::new(0, options.safety.zeta),
                SmgCbfController::new(1, options.safety.zeta),
            ]),
            Method::Hardcoded => {
                Controllers::Hardcoded([HardcodedController::new(0, &world), HardcodedController::new(1, &world)])
            }
            _ => {
                let mut c = [GameChatController::new(0), GameChatController::new(1)];
                let leader = match (options.forced_leader, method) {
                    (Some(l), _) => Some(l),
                    (None, Method::GameChatGroundTruth) => {
                        let gt = Consensus::ground_truth(0.0, truth);
                        ground_truth = Some(gt);
                        gt.higher_priority_agent
                    }
                    _ => None,
                };
                if let Some(l) = leader {
                    c.iter_mut().for_each(|c| c.apply_consensus(l));
                }
                Controllers::GameChat(c)
            }
        };
        let dialogue = (method.uses_dialogue() && options.forced_leader.is_none())
            .then(|| DialogueState::new(0.0, options.latency, Some(truth)));
        Self {
            spec: spec.clone(),
            method,
            options,
            world,
            controllers,
            dialogue,
            ground_truth,
            ticks: Vec::new(),
            max_steps,
            finished: false,
            timed_out: false,
            backend_errors: Vec::new(),
        }
    }

    fn at_goal(&self) -> [bool; 2] {
        core::array::from_fn(|i| {
            let a = &self.world.agents[i];
            goal_reached(&a.state, &a.params)
        })
    }

    fn agent_tick(&self, i: usize, d: &Decision, input: ControlInput, min_h: f64, fault: bool) -> AgentTick {
        let a = &self.world.agents[i];
        AgentTick {
            position: a.state.position,
            heading: a.state.heading,
            v: input.linear_velocity,
            omega: input.angular_velocity,
            v_cap: d.v_cap,
            role: d.role,
            smg_active: d.smg_active,
            min_h,
            at_goal: goal_reached(&a.state, &a.params),
            held: d.held,
            fault,
        }
    }

    fn decisions(&mut self) -> [Decision; 2] {
        let t = self.world.time();
        let consensus_leader = self
            .dialogue
            .as_ref()
            .filter(|d| d.consensus.reached)
            .and_then(|d| d.consensus.higher_priority_agent);
        let ttq_enabled = match self.method {
            Method::GameChatPreSmg => consensus_leader.is_some() || t + 1e-9 >= PRE_SMG_WINDOW,
            _ => true,
        };
        let world = &self.world;
        let cfg = self.options.safety;
        match &mut self.controllers {
            Controllers::Plain => [mpc_cbf_decision(world, 0), mpc_cbf_decision(world, 1)],
            Controllers::SmgCbf(c) => [c[0].decide(world, &cfg), c[1].decide(world, &cfg)],
            Controllers::Hardcoded(c) => [c[0].decide(world), c[1].decide(world)],
            Controllers::GameChat(c) => {
                if let Some(l) = consensus_leader {
                    c.iter_mut().for_each(|c| c.apply_consensus(l));
                }
                [c[0].decide(world, ttq_enabled), c[1].decide(world, ttq_enabled)]
            }
        }
    }

    /// Advances one tick. Returns `false` once the run is over.
    pub fn step<B: NegotiationBackend>(&mut self, backend: &mut B) -> Result<bool, SimError> {
        self.step_with(backend, None)
    }

    /// Like [`Simulation::step`], but `speed_override = Some((agent, v))`
    /// replaces that agent's filtered speed for this tick (turn rate kept).
    pub fn step_with<B: NegotiationBackend>(
        &mut self,
        backend: &mut B,
        speed_override: Option<(usize, f64)>,
    ) -> Result<bool, SimError> {
        if self.finished {
            return Ok(false);
        }
        let at_goal = self.at_goal();
        if (at_goal[0] && at_goal[1]) || self.world.step >= self.max_steps {
            let d = Decision::parked(Role::Unassigned);
            let agents = core::array::from_fn(|i| {
                let mut a = self.agent_tick(i, &d, ControlInput::STOP, f64::INFINITY, false);
                a.role = self.ticks.last().map_or(Role::Unassigned, |t| t.agents[i].role);
                a.min_h = constraints_for(&self.world, i, &self.options.safety)
                    .iter()
                    .map(|c| c.h_value)
                    .fold(f64::INFINITY, f64::min);
                a
            });
            self.ticks.push(TickRecord {
                step: self.world.step,
                t: self.world.time(),
                agents,
                dialogue_active: false,
                collision: detect_collision(&self.world),
                terminal: true,
            });
            self.finished = true;
            self.timed_out = !(at_goal[0] && at_goal[1]);
            return Ok(false);
        }

        let t = self.world.time();
        let mut dialogue_active = false;
        if let Some(d) = self.dialogue.as_mut() {
            let tasks = [self.spec.task(0), self.spec.task(1)];
            for ev in d.advance(t, tasks, backend) {
                if let Some(e) = ev.error {
                    log::warn!("{} t={:.1}: {}", self.spec.id(), ev.message.sim_time, e);
                    self.backend_errors.push((ev.message.sim_time, e.0));
                }
            }
            dialogue_active = d.is_active();
        }

        let decisions = self.decisions();
        let cfg = self.options.safety;
        let mut inputs = [ControlInput::STOP; 2];
        let mut agents = [AgentTick {
            position: Vec2::ZERO,
            heading: 0.0,
            v: 0.0,
            omega: 0.0,
            v_cap: 0.0,
            role: Role::Unassigned,
            smg_active: false,
            min_h: 0.0,
            at_goal: false,
            held: false,
            fault: false,
        }; 2];
        for i in 0..2 {
            let d = &decisions[i];
            let params = &self.world.agents[i].params;
            let nominal = clamp_input(d.nominal, params, d.v_cap);
            let mut constraints = constraints_for(&self.world, i, &cfg);
            if let Some(leader) = d.yield_to {
                let lead = &self.world.agents[leader];
                constraints[0] = with_neighbour_motion(
                    constraints[0],
                    &self.world.agents[i].state,
                    &lead.state,
                    self.ticks.last().map_or(0.0, |t| t.agents[leader].v),
                    lead.params.v_max,
                );
            }
            let out = filter_control(nominal, &constraints, d.v_cap);
            let mut input = out.input;
            if let Some((who, v)) = speed_override {
                if who == i {
                    input.linear_velocity = v;
                }
            }
            if out.fault {
                log::warn!(
                    "{} t={t:.1}: agent {i} barrier negative ({:.4})",
                    self.spec.id(),
                    out.min_h
                );
            }
            inputs[i] = input;
            agents[i] = self.agent_tick(i, d, input, out.min_h, out.fault);
        }
        self.ticks.push(TickRecord {
            step: self.world.step,
            t,
            agents,
            dialogue_active,
            collision: detect_collision(&self.world),
            terminal: false,
        });
        for (agent, input) in self.world.agents.iter_mut().zip(inputs) {
            agent.state = step_dynamics(agent.state, input, self.world.dt)?;
        }
        self.world.step += 1;
        Ok(true)
    }

    pub fn run<B: NegotiationBackend>(mut self, backend: &mut B) -> Result<RunOutcome, SimError> {
        while self.step(backend)? {}
        Ok(self.into_outcome())
    }

    pub fn into_outcome(self) -> RunOutcome {
        let negotiation = match (&self.dialogue, self.ground_truth) {
            (Some(d), _) => Some(NegotiationSummary {
                consensus: d.consensus,
                correct: d.outcome_correct(),
                messages: d.history.len(),
            }),
            (None, Some(gt)) => Some(NegotiationSummary {
                consensus: gt,
                correct: gt.correct,
                messages: 0,
            }),
            _ => None,
        };
        RunOutcome {
            spec: self.spec,
            method: self.method,
            ticks: self.ticks,
            timed_out: self.timed_out,
            negotiation,
            dialogue: self.dialogue,
            backend_errors: self.backend_errors,
        }
    }
}

/// Runs a scenario to completion with the rule-based negotiation backend.
pub fn run_one(spec: &ScenarioSpec, method: Method, options: RunOptions) -> Result<RunOutcome, SimError> {
    Simulation::new(spec, method, options).run(&mut RuleBackend::new())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_variant, ScenarioKind};

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>(), Ok(m));
        }
        assert!("gamechat".parse::<Method>().is_err());
    }

    #[test]
    fn time_is_step_times_dt() {
        let spec = build_variant(ScenarioKind::Doorway, 0, 0).unwrap();
        let out = run_one(&spec, Method::GameChatNoLlm, RunOptions::default()).unwrap();
        for (k, t) in out.ticks.iter().enumerate() {
            assert_eq!(t.step, k);
            assert_eq!(t.t, k as f64 * 0.2);
        }
        assert!(out.ticks.last().unwrap().terminal);
    }

    #[test]
    fn ground_truth_roles_from_first_tick() {
        let spec = build_variant(ScenarioKind::Intersection, 12, 0).unwrap();
        let out = run_one(&spec, Method::GameChatGroundTruth, RunOptions::default()).unwrap();
        let hi = spec.higher_priority_agent();
        assert_eq!(out.ticks[0].agents[hi].role, Role::Leader);
        assert_eq!(out.ticks[0].agents[1 - hi].role, Role::Follower);
    }

    #[test]
    fn hardcoded_gets_a_longer_horizon() {
        let spec = build_variant(ScenarioKind::Doorway, 0, 0).unwrap();
        assert_eq!(
            Simulation::new(&spec, Method::Hardcoded, RunOptions::default()).max_steps,
            150
        );
        assert_eq!(
            Simulation::new(&spec, Method::MpcCbf, RunOptions::default()).max_steps,
            75
        );
    }

    #[test]
    fn runs_are_deterministic() {
        let spec = build_variant(ScenarioKind::Doorway, 4, 9).unwrap();
        for m in Method::ALL {
            let a = run_one(&spec, m, RunOptions::default()).unwrap();
            let b = run_one(&spec, m, RunOptions::default()).unwrap();
            assert_eq!(a, b);
        }
    }
}
