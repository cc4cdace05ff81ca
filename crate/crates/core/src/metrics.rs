//! Per-run metrics and suite aggregation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::engine::{Method, RunOutcome, TickRecord};
use crate::geom::{distance_to_line, wrap_angle, Vec2};
use crate::sim::WorldState;
use crate::strategy::RankScale;

/// Below this speed an agent counts as stopped (m/s).
pub const DEADLOCK_SPEED: f64 = 0.01;
/// Stopped for at least this long short of the goal is a deadlock (s).
pub const DEADLOCK_WINDOW: f64 = 2.0;

const TIME_EPS: f64 = 1e-9;

/// Strict: touching discs do not collide.
pub fn detect_collision(world: &WorldState) -> bool {
    let [a, b] = &world.agents;
    a.state.position.distance(b.state.position) < a.params.radius + b.params.radius
}

/// Per-agent deadlock flags.
///
/// An agent deadlocks when it is short of its goal and below
/// [`DEADLOCK_SPEED`] for a contiguous [`DEADLOCK_WINDOW`], or when the run
/// times out with it short of the goal and below that speed. Ticks where a
/// controller deliberately holds the agent do not count.
pub fn detect_deadlock(ticks: &[TickRecord], dt: f64, timed_out: bool) -> [bool; 2] {
    let mut out = [false; 2];
    let needed = libm::ceil(DEADLOCK_WINDOW / dt - TIME_EPS) as usize;
    for (i, flag) in out.iter_mut().enumerate() {
        let mut run = 0usize;
        let mut last_stalled = false;
        for t in ticks.iter().filter(|t| !t.terminal) {
            let a = &t.agents[i];
            let stalled = !a.at_goal && !a.held && a.v < DEADLOCK_SPEED;
            run = if stalled { run + 1 } else { 0 };
            if run >= needed {
                *flag = true;
            }
            last_stalled = stalled;
        }
        let short_of_goal = ticks.last().is_some_and(|t| !t.agents[i].at_goal);
        if timed_out && short_of_goal && last_stalled {
            *flag = true;
        }
    }
    out
}

/// `Σ pᵢ/τᵢ`.
pub fn social_welfare(priorities: [f64; 2], ttg: [f64; 2]) -> f64 {
    priorities[0] / ttg[0] + priorities[1] / ttg[1]
}

/// Mean perpendicular distance of `positions` from the line through `start`
/// and `goal`. Zero for an empty trace.
pub fn path_deviation<I: IntoIterator<Item = Vec2>>(positions: I, start: Vec2, goal: Vec2) -> f64 {
    let (sum, n) = positions
        .into_iter()
        .fold((0.0, 0usize), |(s, n), p| (s + distance_to_line(p, start, goal), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// First tick time at which agent `i` has progressed `distance` along the
/// unit direction `axis` from `start`.
pub fn first_progress_time(ticks: &[TickRecord], i: usize, start: Vec2, axis: Vec2, distance: f64) -> Option<f64> {
    ticks
        .iter()
        .find(|t| (t.agents[i].position - start).dot(axis) >= distance - TIME_EPS)
        .map(|t| t.t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario_id: String,
    pub method: Method,
    pub collisions: usize,
    pub deadlocks: usize,
    /// Higher-priority agent crossed `Q` first; `None` if nobody crossed.
    pub correct_priority: Option<bool>,
    pub ttg: [Option<f64>; 2],
    pub makespan: Option<f64>,
    pub hi_pri_ttg: Option<f64>,
    /// Slowest applied speed of the second agent through `Q`, before it got
    /// there.
    pub min_follower_v: Option<f64>,
    /// Slowest strategy speed target of that agent over the same ticks.
    pub min_follower_cap: Option<f64>,
    pub path_dev: [f64; 2],
    pub path_dev_avg: f64,
    pub welfare: Option<f64>,
    pub consensus_time: Option<f64>,
    pub consensus_correct: Option<bool>,
    pub messages: usize,
    /// Agent that crossed `Q` first.
    pub first_through: Option<usize>,
    /// Times each agent reached `Q` and cleared it by one body length.
    pub q_reached: [Option<f64>; 2],
    pub q_cleared: [Option<f64>; 2],
    /// Second agent reaching `Q` minus first agent clearing it.
    pub arrival_gap: Option<f64>,
    /// Largest heading error of the first-through agent w.r.t. its start→goal
    /// line, up to its goal.
    pub leader_heading_dev: Option<f64>,
    pub min_h: f64,
    pub faults: usize,
    pub timed_out: bool,
}

/// Computes every metric for a finished run.
pub fn evaluate(outcome: &RunOutcome) -> RunRecord {
    let spec = &outcome.spec;
    let ticks = &outcome.ticks;
    let dt = spec.dt;

    let collisions = ticks.iter().filter(|t| t.collision).count();
    let dl = detect_deadlock(ticks, dt, outcome.timed_out);
    let deadlocks = dl.iter().filter(|d| **d).count();

    let ttg: [Option<f64>; 2] = core::array::from_fn(|i| ticks.iter().find(|t| t.agents[i].at_goal).map(|t| t.t));
    let makespan = match ttg {
        [Some(a), Some(b)] => Some(a.max(b)),
        _ => None,
    };
    let hi = spec.higher_priority_agent();
    let hi_pri_ttg = ttg[hi];
    let ranks = RankScale::DEFAULT;
    let welfare = match ttg {
        [Some(a), Some(b)] => Some(social_welfare(
            [ranks.rank(spec.priority(0)).0, ranks.rank(spec.priority(1)).0],
            [a, b],
        )),
        _ => None,
    };

    let starts = [spec.agent_starts[0].position, spec.agent_starts[1].position];
    let axes: [Vec2; 2] = core::array::from_fn(|i| {
        let d = spec.agent_goals[i] - starts[i];
        d * (1.0 / d.norm())
    });
    let (q_reached, q_cleared) = match spec.collision_point() {
        Some(q) => {
            let reach: [Option<f64>; 2] =
                core::array::from_fn(|i| first_progress_time(ticks, i, starts[i], axes[i], (q - starts[i]).norm()));
            let clear: [Option<f64>; 2] = core::array::from_fn(|i| {
                let l = spec.agent_params(i).body_length;
                first_progress_time(ticks, i, starts[i], axes[i], (q - starts[i]).norm() + l)
            });
            (reach, clear)
        }
        None => ([None; 2], [None; 2]),
    };
    let first_through = match q_reached {
        [Some(a), Some(b)] if a < b => Some(0),
        [Some(a), Some(b)] if b < a => Some(1),
        [Some(_), None] => Some(0),
        [None, Some(_)] => Some(1),
        _ => None,
    };
    let correct_priority = first_through.map(|f| f == hi);

    let (min_follower_v, min_follower_cap, arrival_gap) = match first_through {
        Some(lead) => {
            let f = 1 - lead;
            let before: Vec<&TickRecord> = ticks
                .iter()
                .filter(|t| !t.terminal && q_reached[f].is_none_or(|tq| t.t < tq - TIME_EPS))
                .collect();
            let min_v = before.iter().map(|t| t.agents[f].v).reduce(f64::min);
            let min_cap = before.iter().map(|t| t.agents[f].v_cap).reduce(f64::min);
            let gap = match (q_reached[f], q_cleared[lead]) {
                (Some(a), Some(c)) => Some(a - c),
                _ => None,
            };
            (min_v, min_cap, gap)
        }
        None => (None, None, None),
    };

    let leader_heading_dev = first_through.map(|lead| {
        let line = axes[lead].angle();
        ticks
            .iter()
            .take_while(|t| !t.agents[lead].at_goal)
            .map(|t| libm::fabs(wrap_angle(t.agents[lead].heading - line)))
            .fold(0.0, f64::max)
    });

    let path_dev: [f64; 2] = core::array::from_fn(|i| {
        let upto = ticks
            .iter()
            .position(|t| t.agents[i].at_goal)
            .map_or(ticks.len(), |k| k + 1);
        path_deviation(
            ticks[..upto].iter().map(|t| t.agents[i].position),
            starts[i],
            spec.agent_goals[i],
        )
    });

    let min_h = ticks
        .iter()
        .flat_map(|t| t.agents.iter().map(|a| a.min_h))
        .fold(f64::INFINITY, f64::min);
    let faults = ticks.iter().flat_map(|t| t.agents.iter()).filter(|a| a.fault).count();

    let (consensus_time, consensus_correct, messages) = match &outcome.negotiation {
        Some(n) => (
            n.consensus.reached_at.filter(|_| n.consensus.reached),
            n.correct,
            n.messages,
        ),
        None => (None, None, 0),
    };

    RunRecord {
        scenario_id: spec.id(),
        method: outcome.method,
        collisions,
        deadlocks,
        correct_priority,
        ttg,
        makespan,
        hi_pri_ttg,
        min_follower_v,
        min_follower_cap,
        path_dev,
        path_dev_avg: (path_dev[0] + path_dev[1]) / 2.0,
        welfare,
        consensus_time,
        consensus_correct,
        messages,
        first_through,
        q_reached,
        q_cleared,
        arrival_gap,
        leader_heading_dev,
        min_h,
        faults,
        timed_out: outcome.timed_out,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of<I: IntoIterator<Item = f64>>(values: I) -> Option<MeanStd> {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            libm::sqrt(v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64)
        } else {
            0.0
        };
        Some(MeanStd { mean, std, n })
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

/// One method's aggregate over a suite. Timing, speed and path cells use only
/// runs without a deadlock; they are `None` when every run deadlocked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub runs: usize,
    pub collisions: usize,
    pub deadlocks: usize,
    pub cp_percent: Option<f64>,
    pub hi_pri_ttg: Option<MeanStd>,
    pub makespan: Option<MeanStd>,
    pub min_v: Option<MeanStd>,
    pub path_dev: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub label: String,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricsError {
    NoRecords,
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::NoRecords => f.write_str("no run records to aggregate"),
        }
    }
}

impl core::error::Error for MetricsError {}

pub fn summarize(method: Method, records: &[&RunRecord]) -> SummaryRow {
    let ok: Vec<&RunRecord> = records.iter().copied().filter(|r| r.deadlocks == 0).collect();
    let cp_percent = if ok.is_empty() {
        None
    } else {
        let hits = ok.iter().filter(|r| r.correct_priority == Some(true)).count();
        Some(100.0 * hits as f64 / ok.len() as f64)
    };
    SummaryRow {
        method,
        runs: records.len(),
        collisions: records.iter().map(|r| r.collisions).sum(),
        deadlocks: records.iter().map(|r| r.deadlocks).sum(),
        cp_percent,
        hi_pri_ttg: MeanStd::of(ok.iter().filter_map(|r| r.hi_pri_ttg)),
        makespan: MeanStd::of(ok.iter().filter_map(|r| r.makespan)),
        min_v: MeanStd::of(ok.iter().filter_map(|r| r.min_follower_v)),
        path_dev: MeanStd::of(ok.iter().map(|r| r.path_dev_avg)),
    }
}

/// Groups records by method (first-appearance order).
pub fn aggregate_suite(label: &str, records: &[RunRecord]) -> Result<SummaryTable, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::NoRecords);
    }
    let mut methods: Vec<Method> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    let rows = methods
        .into_iter()
        .map(|m| {
            let group: Vec<&RunRecord> = records.iter().filter(|r| r.method == m).collect();
            summarize(m, &group)
        })
        .collect();
    Ok(SummaryTable {
        label: String::from(label),
        rows,
    })
}

fn cell(v: Option<MeanStd>) -> String {
    v.map_or_else(|| String::from("N/A"), |m| format!("{m}"))
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let header = [
            "Method",
            "# Coll.",
            "# DLs",
            "% CP",
            "Hi Pri. TTG",
            "Makespan",
            "Min v",
            "Δ Path",
        ];
        let mut lines: Vec<[String; 8]> = Vec::new();
        lines.push(header.map(String::from));
        for r in &self.rows {
            lines.push([
                String::from(r.method.label()),
                format!("{}", r.collisions),
                format!("{}", r.deadlocks),
                r.cp_percent.map_or_else(|| String::from("N/A"), |p| format!("{p:.1}")),
                cell(r.hi_pri_ttg),
                cell(r.makespan),
                cell(r.min_v),
                cell(r.path_dev),
            ]);
        }
        let widths: [usize; 8] =
            core::array::from_fn(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0));
        writeln!(f, "{}", self.label)?;
        for l in &lines {
            let mut row = String::new();
            for (c, text) in l.iter().enumerate() {
                if c > 0 {
                    row.push_str("  ");
                }
                let pad = widths[c] - text.chars().count();
                if c == 0 {
                    row.push_str(text);
                    row.extend(core::iter::repeat_n(' ', pad));
                } else {
                    row.extend(core::iter::repeat_n(' ', pad));
                    row.push_str(text);
                }
            }
            writeln!(f, "{}", row.trim_end())?;
        }
        Ok(())
    }
}
