//! On-disk formats: trajectory CSV, dialogue and record JSONL, suite summary.

use std::io::{self, Write};

use gamechat_core::metrics::{SummaryRow, SummaryTable};
use gamechat_core::negotiation::{Consensus, Message, Verdict};
use gamechat_core::{RunOutcome, RunRecord, TickRecord};
use serde::{Deserialize, Serialize};

/// One agent at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub run_id: String,
    pub t: f64,
    pub agent_id: usize,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub role: String,
    pub smg_active: bool,
    pub min_h: f64,
    pub dialogue_active: bool,
}

pub const TRAJECTORY_COLUMNS: [&str; 12] = [
    "run_id",
    "t",
    "agent_id",
    "x",
    "y",
    "theta",
    "v",
    "omega",
    "role",
    "smg_active",
    "min_h",
    "dialogue_active",
];

pub fn trajectory_rows<'a>(run_id: &'a str, ticks: &'a [TickRecord]) -> impl Iterator<Item = TrajectoryRow> + 'a {
    ticks.iter().flat_map(move |tick| {
        tick.agents.iter().enumerate().map(move |(i, a)| TrajectoryRow {
            run_id: run_id.to_owned(),
            t: tick.t,
            agent_id: i,
            x: a.position.x,
            y: a.position.y,
            theta: a.heading,
            v: a.v,
            omega: a.omega,
            role: a.role.name().to_owned(),
            smg_active: a.smg_active,
            min_h: a.min_h,
            dialogue_active: tick.dialogue_active,
        })
    })
}

pub fn write_trajectory<W: Write>(w: W, run_id: &str, ticks: &[TickRecord]) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for row in trajectory_rows(run_id, ticks) {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_trajectory<R: io::Read>(r: R) -> Result<Vec<TrajectoryRow>, csv::Error> {
    csv::Reader::from_reader(r).deserialize().collect()
}

/// A line of the dialogue transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DialogueEntry {
    Message {
        sender: usize,
        sim_time: f64,
        text: String,
        verdict: Verdict,
    },
    Consensus {
        reached: bool,
        higher_priority_agent: Option<usize>,
        reached_at: Option<f64>,
        correct: Option<bool>,
        messages: usize,
        backend_failures: usize,
    },
}

impl From<&Message> for DialogueEntry {
    fn from(m: &Message) -> Self {
        DialogueEntry::Message {
            sender: m.sender,
            sim_time: m.sim_time,
            text: m.text.clone(),
            verdict: m.verdict,
        }
    }
}

fn consensus_entry(c: &Consensus, correct: Option<bool>, messages: usize, backend_failures: usize) -> DialogueEntry {
    DialogueEntry::Consensus {
        reached: c.reached,
        higher_priority_agent: c.higher_priority_agent,
        reached_at: c.reached_at,
        correct,
        messages,
        backend_failures,
    }
}

/// Transcript of a run: every message, then the outcome. Empty for methods
/// without a negotiation.
pub fn dialogue_entries(outcome: &RunOutcome) -> Vec<DialogueEntry> {
    let mut out = Vec::new();
    if let Some(d) = &outcome.dialogue {
        out.extend(d.history.iter().map(DialogueEntry::from));
        out.push(consensus_entry(
            &d.consensus,
            d.outcome_correct(),
            d.history.len(),
            d.backend_failures,
        ));
    } else if let Some(n) = &outcome.negotiation {
        out.push(consensus_entry(&n.consensus, n.correct, n.messages, 0));
    }
    out
}

pub fn write_json_lines<W: Write, T: Serialize>(mut w: W, items: impl IntoIterator<Item = T>) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_dialogue<W: Write>(w: W, outcome: &RunOutcome) -> io::Result<()> {
    write_json_lines(w, dialogue_entries(outcome))
}

pub fn write_records<W: Write>(w: W, records: &[RunRecord]) -> io::Result<()> {
    write_json_lines(w, records)
}

/// Summary row tagged with its suite label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryLine {
    pub suite: String,
    #[serde(flatten)]
    pub row: SummaryRow,
}

pub fn write_summary_json<W: Write>(w: W, table: &SummaryTable) -> io::Result<()> {
    write_json_lines(
        w,
        table.rows.iter().map(|row| SummaryLine {
            suite: table.label.clone(),
            row: row.clone(),
        }),
    )
}
