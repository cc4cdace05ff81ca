//! Doorway and intersection scenario suites.
//!
//! Each suite has 18 variants: the 6 ordered pairs of distinct priority types
//! times 3 start layouts (symmetric, agent 0 set back, agent 1 set back).

use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::negotiation::TaskCatalog;
use crate::sim::{
    Agent, AgentParams, AgentState, Obstacle, PriorityType, WorldState, DEFAULT_DT, DEFAULT_OMEGA_MAX, DEFAULT_V_MAX,
};

pub const GAP_WIDTH: f64 = 0.4;
pub const WALL_EXTENT: f64 = 1.0;
pub const WALL_RADIUS: f64 = 0.1;
/// Distance the set-back agent starts farther from its goal.
pub const ASYMMETRY_OFFSET: f64 = 0.25;
pub const T_MAX: f64 = 15.0;
pub const VARIANTS_PER_SUITE: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Doorway,
    Intersection,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 2] = [ScenarioKind::Doorway, ScenarioKind::Intersection];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Doorway => "doorway",
            ScenarioKind::Intersection => "intersection",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownScenario(pub String);

impl fmt::Display for UnknownScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown scenario {:?} (expected doorway or intersection)", self.0)
    }
}

impl core::error::Error for UnknownScenario {}

impl core::str::FromStr for ScenarioKind {
    type Err = UnknownScenario;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownScenario(String::from(s)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Asymmetry {
    Symmetric,
    Agent0Back,
    Agent1Back,
}

impl Asymmetry {
    pub const ALL: [Asymmetry; 3] = [Asymmetry::Symmetric, Asymmetry::Agent0Back, Asymmetry::Agent1Back];

    fn offset_for(self, agent: usize) -> f64 {
        match (self, agent) {
            (Asymmetry::Agent0Back, 0) | (Asymmetry::Agent1Back, 1) => ASYMMETRY_OFFSET,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioError {
    SamePriority(PriorityType),
    VariantOutOfRange(usize),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::SamePriority(p) => {
                write!(f, "both agents have priority type {p}; types must differ")
            }
            ScenarioError::VariantOutOfRange(i) => {
                write!(f, "variant {i} out of range 0..{VARIANTS_PER_SUITE}")
            }
        }
    }
}

impl core::error::Error for ScenarioError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    /// Index within the 18-variant suite.
    pub variant: usize,
    pub agent_starts: [AgentState; 2],
    pub agent_goals: [Vec2; 2],
    pub priority_pair: (PriorityType, PriorityType),
    pub task_strings: (String, String),
    pub asymmetry: Asymmetry,
    pub obstacles: Vec<Obstacle>,
    pub v_max: f64,
    pub omega_max: f64,
    pub dt: f64,
    pub t_max: f64,
}

impl ScenarioSpec {
    pub fn id(&self) -> String {
        alloc::format!("{}-v{:02}", self.kind, self.variant)
    }

    pub fn priority(&self, agent: usize) -> PriorityType {
        if agent == 0 {
            self.priority_pair.0
        } else {
            self.priority_pair.1
        }
    }

    pub fn task(&self, agent: usize) -> &str {
        if agent == 0 {
            &self.task_strings.0
        } else {
            &self.task_strings.1
        }
    }

    /// Agent with the higher priority type.
    pub fn higher_priority_agent(&self) -> usize {
        if self.priority_pair.0 > self.priority_pair.1 {
            0
        } else {
            1
        }
    }

    pub fn agent_params(&self, agent: usize) -> AgentParams {
        let mut p = AgentParams::new(
            self.priority(agent),
            String::from(self.task(agent)),
            self.agent_goals[agent],
        );
        p.v_max = self.v_max;
        p.omega_max = self.omega_max;
        p
    }

    pub fn initial_world(&self) -> WorldState {
        WorldState {
            step: 0,
            dt: self.dt,
            agents: [
                Agent {
                    state: self.agent_starts[0],
                    params: self.agent_params(0),
                },
                Agent {
                    state: self.agent_starts[1],
                    params: self.agent_params(1),
                },
            ],
            obstacles: self.obstacles.clone(),
        }
    }

    /// Crossing point of the two start→goal lines, if they cross ahead of both
    /// starts.
    pub fn collision_point(&self) -> Option<Vec2> {
        crate::smg::ray_intersection(&self.agent_starts[0], &self.agent_starts[1])
    }
}

fn check_pair(pair: (PriorityType, PriorityType)) -> Result<(), ScenarioError> {
    if pair.0 == pair.1 {
        Err(ScenarioError::SamePriority(pair.0))
    } else {
        Ok(())
    }
}

fn draw_tasks(pair: (PriorityType, PriorityType), rng_seed: u64) -> (String, String) {
    let catalog = TaskCatalog::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut pick = |ty: PriorityType| {
        let options = catalog.tasks(ty);
        String::from(options[rng.random_range(0..options.len())])
    };
    let a = pick(pair.0);
    let b = pick(pair.1);
    (a, b)
}

fn facing(start: Vec2, goal: Vec2) -> AgentState {
    AgentState::new(start, (goal - start).angle())
}

/// Column of wall discs on the plane `x = 0`, leaving the gap open around the
/// origin.
fn doorway_walls() -> Vec<Obstacle> {
    let mut walls = Vec::new();
    let first = GAP_WIDTH / 2.0 + WALL_RADIUS;
    let count = libm::round(WALL_EXTENT / (2.0 * WALL_RADIUS)) as usize;
    for i in 0..count {
        let y = first + 2.0 * WALL_RADIUS * i as f64;
        for sign in [1.0, -1.0] {
            walls.push(Obstacle {
                center: Vec2::new(0.0, sign * y),
                radius: WALL_RADIUS,
            });
        }
    }
    walls
}

/// Four L-shaped corner walls bounding a horizontal and a vertical lane, both
/// `GAP_WIDTH` wide and crossing at the origin.
fn intersection_walls() -> Vec<Obstacle> {
    let mut walls = Vec::new();
    let near = GAP_WIDTH / 2.0 + WALL_RADIUS;
    let count = libm::round(WALL_EXTENT / (2.0 * WALL_RADIUS)) as usize;
    for sx in [1.0, -1.0] {
        for sy in [1.0, -1.0] {
            for i in 0..count {
                let along = near + 2.0 * WALL_RADIUS * i as f64;
                walls.push(Obstacle {
                    center: Vec2::new(sx * along, sy * near),
                    radius: WALL_RADIUS,
                });
                if i > 0 {
                    walls.push(Obstacle {
                        center: Vec2::new(sx * near, sy * along),
                        radius: WALL_RADIUS,
                    });
                }
            }
        }
    }
    walls
}

/// Doorway of width 0.4 m in the plane `x = 0`, centred on the origin.
///
/// Agents start 2 m left of the doorway, 0.5 m north (agent 0) and south
/// (agent 1) of the gap, and cross diagonally through the gap centre to goals
/// 1 m past the doorway plane. A set-back agent starts 0.25 m farther left.
pub fn build_doorway(
    priority_pair: (PriorityType, PriorityType),
    asymmetry: Asymmetry,
    rng_seed: u64,
) -> Result<ScenarioSpec, ScenarioError> {
    check_pair(priority_pair)?;
    let starts = [Vec2::new(-2.0, 0.5), Vec2::new(-2.0, -0.5)];
    let goals = [Vec2::new(1.0, -0.25), Vec2::new(1.0, 0.25)];
    let mut agent_starts = [facing(starts[0], goals[0]), facing(starts[1], goals[1])];
    for (i, s) in agent_starts.iter_mut().enumerate() {
        let offset = asymmetry.offset_for(i);
        if offset > 0.0 {
            *s = facing(starts[i] - Vec2::new(offset, 0.0), goals[i]);
        }
    }
    Ok(ScenarioSpec {
        kind: ScenarioKind::Doorway,
        variant: 0,
        agent_starts,
        agent_goals: goals,
        priority_pair,
        task_strings: draw_tasks(priority_pair, rng_seed),
        asymmetry,
        obstacles: doorway_walls(),
        v_max: DEFAULT_V_MAX,
        omega_max: DEFAULT_OMEGA_MAX,
        dt: DEFAULT_DT,
        t_max: T_MAX,
    })
}

/// Plus-shaped intersection of 0.4 m lanes centred on the origin.
///
/// Agent 0 drives east from (-2, 0) to (1, 0); agent 1 drives north from
/// (0, -2) to (0, 1).
pub fn build_intersection(
    priority_pair: (PriorityType, PriorityType),
    asymmetry: Asymmetry,
    rng_seed: u64,
) -> Result<ScenarioSpec, ScenarioError> {
    check_pair(priority_pair)?;
    let d0 = 2.0 + asymmetry.offset_for(0);
    let d1 = 2.0 + asymmetry.offset_for(1);
    Ok(ScenarioSpec {
        kind: ScenarioKind::Intersection,
        variant: 0,
        agent_starts: [
            AgentState::new(Vec2::new(-d0, 0.0), 0.0),
            AgentState::new(Vec2::new(0.0, -d1), FRAC_PI_2),
        ],
        agent_goals: [Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)],
        priority_pair,
        task_strings: draw_tasks(priority_pair, rng_seed),
        asymmetry,
        obstacles: intersection_walls(),
        v_max: DEFAULT_V_MAX,
        omega_max: DEFAULT_OMEGA_MAX,
        dt: DEFAULT_DT,
        t_max: T_MAX,
    })
}

/// The 6 ordered pairs of distinct priority types.
pub fn ordered_priority_pairs() -> [(PriorityType, PriorityType); 6] {
    use PriorityType::*;
    [
        (Hospital, Airport),
        (Hospital, Grocery),
        (Airport, Hospital),
        (Airport, Grocery),
        (Grocery, Hospital),
        (Grocery, Airport),
    ]
}

fn variant_seed(seed: u64, variant: usize) -> u64 {
    seed ^ (variant as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Variant `index` is pair `index / 3` with layout `index % 3`.
pub fn build_variant(kind: ScenarioKind, index: usize, seed: u64) -> Result<ScenarioSpec, ScenarioError> {
    if index >= VARIANTS_PER_SUITE {
        return Err(ScenarioError::VariantOutOfRange(index));
    }
    let pair = ordered_priority_pairs()[index / 3];
    let asym = Asymmetry::ALL[index % 3];
    let rng_seed = variant_seed(seed, index);
    let mut spec = match kind {
        ScenarioKind::Doorway => build_doorway(pair, asym, rng_seed)?,
        ScenarioKind::Intersection => build_intersection(pair, asym, rng_seed)?,
    };
    spec.variant = index;
    Ok(spec)
}

pub fn enumerate_suite(kind: ScenarioKind, seed: u64) -> Vec<ScenarioSpec> {
    (0..VARIANTS_PER_SUITE)
        .map(|i| build_variant(kind, i, seed).expect("suite pairs are distinct"))
        .collect()
}
