//! Priority negotiation between the two agents.
//!
//! Agents take turns sending one message per `latency` seconds of simulation
//! time until both hold complementary verdicts and the latest message is the
//! agreement token `"1"`, or each has used its message budget.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::sim::PriorityType;

/// Messages each agent may send before the dialogue is abandoned.
pub const MESSAGE_BUDGET: usize = 4;
/// Simulated time to produce one message (seconds).
pub const DEFAULT_LATENCY: f64 = 1.0;
pub const AGREEMENT_TOKEN: &str = "1";

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NegotiationError {
    EmptyTask,
}

impl fmt::Display for NegotiationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NegotiationError::EmptyTask => f.write_str("task string is empty"),
        }
    }
}

impl core::error::Error for NegotiationError {}

/// The task strings each priority type may be given.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskCatalog {
    entries: [(PriorityType, [&'static str; 5]); 3],
}

impl TaskCatalog {
    pub fn standard() -> Self {
        Self {
            entries: [
                (
                    PriorityType::Hospital,
                    [
                        "the hospital",
                        "the emergency room",
                        "the operating room",
                        "the ER",
                        "get surgery",
                    ],
                ),
                (
                    PriorityType::Airport,
                    [
                        "the airport",
                        "catch a flight",
                        "board a plane",
                        "reach the airport",
                        "go to the airport",
                    ],
                ),
                (
                    PriorityType::Grocery,
                    [
                        "the grocery store",
                        "the supermarket",
                        "the store",
                        "go grocery shopping",
                        "buy groceries",
                    ],
                ),
            ],
        }
    }

    pub fn tasks(&self, ty: PriorityType) -> &[&'static str] {
        self.entries
            .iter()
            .find(|(t, _)| *t == ty)
            .map(|(_, list)| &list[..])
            .unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (PriorityType, &'static str)> + '_ {
        self.entries
            .iter()
            .flat_map(|(ty, list)| list.iter().map(move |s| (*ty, *s)))
    }

    /// Type of the longest catalog string contained in `text`
    /// (case-insensitive).
    pub fn classify(&self, text: &str) -> Option<PriorityType> {
        let hay = text.to_lowercase();
        self.iter()
            .filter(|(_, s)| contains_phrase(&hay, &s.to_lowercase()))
            .max_by_key(|(_, s)| s.len())
            .map(|(ty, _)| ty)
    }
}

/// Substring match that only accepts hits on word boundaries.
fn contains_phrase(hay: &str, needle: &str) -> bool {
    let bytes = hay.as_bytes();
    let mut from = 0;
    while let Some(pos) = hay[from..].find(needle) {
        let start = from + pos;
        let end = start + needle.len();
        let left_ok = start == 0 || !bytes[start - 1].is_ascii_alphanumeric();
        let right_ok = end == bytes.len() || !bytes[end].is_ascii_alphanumeric();
        if left_ok && right_ok {
            return true;
        }
        from = start + 1;
    }
    false
}

/// Loose keywords used to recognise a task type in free text.
fn type_keywords(ty: PriorityType) -> &'static [&'static str] {
    match ty {
        PriorityType::Hospital => &["hospital", "emergency", "operating room", "er", "surgery", "medical"],
        PriorityType::Airport => &["airport", "flight", "plane"],
        PriorityType::Grocery => &["grocery", "groceries", "supermarket", "store", "shopping"],
    }
}

/// Every task type mentioned in `text`, by keyword.
pub fn mentioned_types(text: &str) -> Vec<PriorityType> {
    let hay = text.to_lowercase();
    PriorityType::ALL
        .iter()
        .copied()
        .filter(|ty| type_keywords(*ty).iter().any(|k| contains_phrase(&hay, k)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub text: &'static str,
}

impl PromptTemplate {
    pub const PLACEHOLDER: &'static str = "TASK";

    pub const STANDARD: PromptTemplate = PromptTemplate {
        text: "You are taking someone to TASK. There is another agent taking someone to a location. \
You will have a conversation until you determine whether you have more or less priority as them \
depending on the tasks you and they are performing. Do not include pleasantries and be concise. \
Once you have reached a consensus with the other agent, output the number 1 and nothing else. \
Remembering your task correctly is paramount!",
    };

    pub fn render(&self, task: &str) -> Result<String, NegotiationError> {
        if task.trim().is_empty() {
            return Err(NegotiationError::EmptyTask);
        }
        Ok(self.text.replacen(Self::PLACEHOLDER, task, 1))
    }
}

pub fn render_prompt(task: &str) -> Result<String, NegotiationError> {
    PromptTemplate::STANDARD.render(task)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Verdict {
    SelfHigher,
    OtherHigher,
    #[default]
    Undecided,
}

impl Verdict {
    fn from_types(own: PriorityType, other: PriorityType) -> Verdict {
        match own.cmp(&other) {
            core::cmp::Ordering::Greater => Verdict::SelfHigher,
            core::cmp::Ordering::Less => Verdict::OtherHigher,
            core::cmp::Ordering::Equal => Verdict::Undecided,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub sender: usize,
    pub sim_time: f64,
    pub text: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Consensus {
    pub reached: bool,
    pub higher_priority_agent: Option<usize>,
    pub reached_at: Option<f64>,
    /// `None` when correctness cannot be judged.
    pub correct: Option<bool>,
}

impl Consensus {
    /// Consensus taken directly from the true priority types.
    pub fn ground_truth(at: f64, types: [PriorityType; 2]) -> Self {
        let leader = if types[0] > types[1] { 0 } else { 1 };
        Self {
            reached: true,
            higher_priority_agent: Some(leader),
            reached_at: Some(at),
            correct: Some(true),
        }
    }
}

/// One turn handed to a backend.
#[derive(Debug, Clone, Copy)]
pub struct TurnRequest<'a> {
    pub agent: usize,
    pub task: &'a str,
    pub history: &'a [Message],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub text: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendError(pub String);

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "negotiation backend failed: {}", self.0)
    }
}

impl core::error::Error for BackendError {}

/// Produces one agent's next message.
pub trait NegotiationBackend {
    fn next_message(&mut self, turn: &TurnRequest<'_>) -> Result<Reply, BackendError>;
}

impl<B: NegotiationBackend + ?Sized> NegotiationBackend for &mut B {
    fn next_message(&mut self, turn: &TurnRequest<'_>) -> Result<Reply, BackendError> {
        (**self).next_message(turn)
    }
}

/// Deterministic, honest three-message script: the first speaker states its
/// task, the second states its own and proposes the order, the first agrees.
#[derive(Debug, Clone)]
pub struct RuleBackend {
    catalog: TaskCatalog,
}

impl RuleBackend {
    pub fn new() -> Self {
        Self {
            catalog: TaskCatalog::standard(),
        }
    }
}

impl Default for RuleBackend {
    fn default() -> Self {
        Self::new()
    }
}

/// The task sentence that opens every scripted message.
fn stated_task(text: &str) -> &str {
    text.split('.').next().unwrap_or("")
}

impl NegotiationBackend for RuleBackend {
    fn next_message(&mut self, turn: &TurnRequest<'_>) -> Result<Reply, BackendError> {
        let catalog = &self.catalog;
        let own = catalog
            .classify(turn.task)
            .ok_or_else(|| BackendError(format!("unknown task {:?}", turn.task)))?;
        let heard = turn
            .history
            .iter()
            .rev()
            .filter(|m| m.sender != turn.agent)
            .find_map(|m| catalog.classify(stated_task(&m.text)));
        let Some(other) = heard else {
            return Ok(Reply {
                text: format!("I am taking someone to {}.", turn.task),
                verdict: Verdict::Undecided,
            });
        };
        let verdict = Verdict::from_types(own, other);
        let spoke_before = turn.history.iter().any(|m| m.sender == turn.agent);
        if spoke_before {
            return Ok(Reply {
                text: String::from(AGREEMENT_TOKEN),
                verdict,
            });
        }
        let proposal = match verdict {
            Verdict::SelfHigher => format!("A {own} trip outranks a {other} trip, so I go first."),
            Verdict::OtherHigher => {
                format!("A {other} trip outranks a {own} trip, so you go first.")
            }
            Verdict::Undecided => String::from("Our tasks have equal priority."),
        };
        Ok(Reply {
            text: format!("I am taking someone to {}. {proposal}", turn.task),
            verdict,
        })
    }
}

/// Structured verdict for a free-text reply. Only a reply whose last line is
/// the agreement token carries a verdict; the agreed order is read from the
/// task types mentioned in the reply and the message it answers, falling back
/// to anything the other agent said earlier.
pub fn parse_reply_verdict(own_task: &str, reply: &str, history: &[Message], sender: usize) -> Verdict {
    let last_line = reply.lines().rev().map(str::trim).find(|l| !l.is_empty());
    if last_line != Some(AGREEMENT_TOKEN) {
        return Verdict::Undecided;
    }
    let own = TaskCatalog::standard()
        .classify(own_task)
        .or_else(|| single(&mentioned_types(own_task)));
    let Some(own) = own else {
        return Verdict::Undecided;
    };
    let others_in =
        |text: &str| -> Vec<PriorityType> { mentioned_types(text).into_iter().filter(|t| *t != own).collect() };

    let mut recent = String::from(reply);
    if let Some(prev) = history.last() {
        recent.push('\n');
        recent.push_str(&prev.text);
    }
    let other = single(&others_in(&recent)).or_else(|| {
        history
            .iter()
            .rev()
            .filter(|m| m.sender != sender)
            .find_map(|m| single(&others_in(&m.text)))
    });
    match other {
        Some(other) => Verdict::from_types(own, other),
        None => Verdict::Undecided,
    }
}

fn single(types: &[PriorityType]) -> Option<PriorityType> {
    match types {
        [t] => Some(*t),
        _ => None,
    }
}

/// Consensus implied by the dialogue so far: complementary verdicts and a
/// closing agreement token.
pub fn detect_consensus(dialogue: &DialogueState) -> Consensus {
    let Some(last) = dialogue.history.last() else {
        return Consensus::default();
    };
    if last.text.trim() != AGREEMENT_TOKEN {
        return Consensus::default();
    }
    let leader = match dialogue.verdicts {
        [Verdict::SelfHigher, Verdict::OtherHigher] => 0,
        [Verdict::OtherHigher, Verdict::SelfHigher] => 1,
        _ => return Consensus::default(),
    };
    let correct = dialogue.truth.map(|t| leader == if t[0] > t[1] { 0 } else { 1 });
    Consensus {
        reached: true,
        higher_priority_agent: Some(leader),
        reached_at: Some(last.sim_time),
        correct,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub history: Vec<Message>,
    /// Agent whose message is due next.
    pub turn: usize,
    pub verdicts: [Verdict; 2],
    pub consensus: Consensus,
    pub next_event_time: f64,
    pub start_time: f64,
    pub latency: f64,
    /// True priority types, used only to grade the outcome.
    pub truth: Option<[PriorityType; 2]>,
    pub backend_failures: usize,
}

/// What happened at one dialogue event.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogueEvent {
    pub message: Message,
    pub error: Option<BackendError>,
}

impl DialogueState {
    /// Dialogue opened at `start_time`; agent 0 speaks first, one message per
    /// `latency` seconds.
    pub fn new(start_time: f64, latency: f64, truth: Option<[PriorityType; 2]>) -> Self {
        Self {
            history: Vec::new(),
            turn: 0,
            verdicts: [Verdict::Undecided; 2],
            consensus: Consensus::default(),
            next_event_time: start_time + latency,
            start_time,
            latency,
            truth,
            backend_failures: 0,
        }
    }

    pub fn sent_by(&self, agent: usize) -> usize {
        self.history.iter().filter(|m| m.sender == agent).count()
    }

    pub fn budget_exhausted(&self) -> bool {
        self.sent_by(0) >= MESSAGE_BUDGET && self.sent_by(1) >= MESSAGE_BUDGET
    }

    pub fn is_active(&self) -> bool {
        !self.consensus.reached && !self.budget_exhausted()
    }

    /// Runs every message event due at or before `now`.
    pub fn advance<B: NegotiationBackend>(
        &mut self,
        now: f64,
        tasks: [&str; 2],
        backend: &mut B,
    ) -> Vec<DialogueEvent> {
        let mut events = Vec::new();
        while self.is_active() && now + TIME_EPS >= self.next_event_time {
            events.push(self.send_one(tasks, backend));
        }
        events
    }

    fn send_one<B: NegotiationBackend>(&mut self, tasks: [&str; 2], backend: &mut B) -> DialogueEvent {
        let agent = self.turn;
        let sim_time = self.next_event_time;
        let request = TurnRequest {
            agent,
            task: tasks[agent],
            history: &self.history,
        };
        let (reply, error) = match backend.next_message(&request) {
            Ok(r) => (r, None),
            Err(e) => {
                self.backend_failures += 1;
                (
                    Reply {
                        text: String::new(),
                        verdict: Verdict::Undecided,
                    },
                    Some(e),
                )
            }
        };
        if reply.verdict != Verdict::Undecided {
            self.verdicts[agent] = reply.verdict;
        }
        let message = Message {
            sender: agent,
            sim_time,
            text: reply.text,
            verdict: reply.verdict,
        };
        self.history.push(message.clone());
        self.turn = 1 - agent;
        self.next_event_time = self.start_time + (self.history.len() + 1) as f64 * self.latency;
        self.consensus = detect_consensus(self);
        if self.budget_exhausted() && !self.consensus.reached && self.backend_failures > 0 {
            self.consensus.correct = None;
        }
        DialogueEvent { message, error }
    }

    /// Grade of the final outcome: `Some(false)` for an honest failure to
    /// agree, `None` when a backend error made it ungradable.
    pub fn outcome_correct(&self) -> Option<bool> {
        if self.consensus.reached {
            self.consensus.correct
        } else if self.backend_failures > 0 || self.truth.is_none() {
            None
        } else {
            Some(false)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ordered_priority_pairs;
    use alloc::string::ToString;
    use alloc::vec;
    use PriorityType::*;

    fn tasks(a: PriorityType, b: PriorityType) -> [&'static str; 2] {
        let c = TaskCatalog::standard();
        [c.tasks(a)[0], c.tasks(b)[1]]
    }

    #[test]
    fn catalog_has_fifteen_strings() {
        let c = TaskCatalog::standard();
        assert_eq!(c.iter().count(), 15);
        for ty in PriorityType::ALL {
            assert_eq!(c.tasks(ty).len(), 5);
            for s in c.tasks(ty) {
                assert_eq!(c.classify(s), Some(ty), "{s}");
            }
        }
        assert_eq!(c.classify("Taking someone to THE GROCERY STORE now"), Some(Grocery));
        assert_eq!(c.classify("reach the airport"), Some(Airport));
        assert_eq!(c.classify("the errand"), None);
    }

    #[test]
    fn prompt_rendering() {
        let p = render_prompt("the emergency room").unwrap();
        assert!(p.contains("taking someone to the emergency room"));
        assert!(!p.contains("TASK"));
        assert!(render_prompt("buy groceries").unwrap().contains("buy groceries"));
        assert_eq!(render_prompt(""), Err(NegotiationError::EmptyTask));
        assert_eq!(render_prompt("  "), Err(NegotiationError::EmptyTask));
    }

    #[test]
    fn rule_backend_second_turn_verdicts() {
        let mut b = RuleBackend::new();
        let history = vec![Message {
            sender: 0,
            sim_time: 1.0,
            text: "I am taking someone to buy groceries.".to_string(),
            verdict: Verdict::Undecided,
        }];
        let r = b
            .next_message(&TurnRequest {
                agent: 1,
                task: "get surgery",
                history: &history,
            })
            .unwrap();
        assert_eq!(r.verdict, Verdict::SelfHigher);

        let history = vec![Message {
            sender: 0,
            sim_time: 1.0,
            text: "I am taking someone to the ER.".to_string(),
            verdict: Verdict::Undecided,
        }];
        let r = b
            .next_message(&TurnRequest {
                agent: 1,
                task: "the supermarket",
                history: &history,
            })
            .unwrap();
        assert_eq!(r.verdict, Verdict::OtherHigher);
    }

    #[test]
    fn rule_dialogue_reaches_correct_consensus_in_three_messages() {
        for (a, b) in ordered_priority_pairs() {
            let mut d = DialogueState::new(0.0, 1.0, Some([a, b]));
            let mut backend = RuleBackend::new();
            let mut t = 0.0;
            while d.is_active() && t < 20.0 {
                t += 0.2;
                d.advance(t, tasks(a, b), &mut backend);
            }
            assert!(d.consensus.reached, "{a:?} vs {b:?}");
            assert_eq!(d.history.len(), 3);
            assert_eq!(d.consensus.correct, Some(true));
            assert!((d.consensus.reached_at.unwrap() - 3.0).abs() < 1e-9);
            let leader = if a > b { 0 } else { 1 };
            assert_eq!(d.consensus.higher_priority_agent, Some(leader));
        }
    }

    #[test]
    fn events_follow_latency_schedule() {
        let mut d = DialogueState::new(0.4, 1.0, Some([Hospital, Grocery]));
        let mut backend = RuleBackend::new();
        assert!(d.advance(1.2, tasks(Hospital, Grocery), &mut backend).is_empty());
        let ev = d.advance(1.4, tasks(Hospital, Grocery), &mut backend);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].message.sender, 0);
        assert!((d.next_event_time - 2.4).abs() < 1e-12);
        // catching up processes every due event
        let ev = d.advance(10.0, tasks(Hospital, Grocery), &mut backend);
        assert_eq!(ev.len(), 2);
        assert_eq!(ev[0].message.sender, 1);
        assert!(!d.is_active());
    }

    struct Stubborn;
    impl NegotiationBackend for Stubborn {
        fn next_message(&mut self, _: &TurnRequest<'_>) -> Result<Reply, BackendError> {
            Ok(Reply {
                text: "My task matters more.".to_string(),
                verdict: Verdict::SelfHigher,
            })
        }
    }

    struct Offline;
    impl NegotiationBackend for Offline {
        fn next_message(&mut self, _: &TurnRequest<'_>) -> Result<Reply, BackendError> {
            Err(BackendError("connection refused".to_string()))
        }
    }

    #[test]
    fn contradictory_claims_exhaust_budget() {
        let mut d = DialogueState::new(0.0, 1.0, Some([Airport, Grocery]));
        d.advance(100.0, tasks(Airport, Grocery), &mut Stubborn);
        assert!(!d.consensus.reached);
        assert_eq!(d.sent_by(0), 4);
        assert_eq!(d.sent_by(1), 4);
        assert!(!d.is_active());
        assert_eq!(d.outcome_correct(), Some(false));
    }

    #[test]
    fn backend_failure_counts_toward_budget() {
        let mut d = DialogueState::new(0.0, 1.0, Some([Airport, Grocery]));
        let ev = d.advance(100.0, tasks(Airport, Grocery), &mut Offline);
        assert_eq!(ev.len(), 8);
        assert!(ev.iter().all(|e| e.error.is_some() && e.message.text.is_empty()));
        assert!(!d.consensus.reached);
        assert_eq!(d.outcome_correct(), None);
    }

    #[test]
    fn consensus_detection() {
        let msg = |sender, text: &str, verdict| Message {
            sender,
            sim_time: 1.0,
            text: text.to_string(),
            verdict,
        };
        let mut d = DialogueState::new(0.0, 1.0, Some([Grocery, Hospital]));
        d.history = vec![msg(0, "groceries", Verdict::Undecided)];
        d.verdicts = [Verdict::OtherHigher, Verdict::SelfHigher];
        assert!(!detect_consensus(&d).reached);
        d.history.push(msg(1, " 1 ", Verdict::SelfHigher));
        let c = detect_consensus(&d);
        assert!(c.reached);
        assert_eq!(c.higher_priority_agent, Some(1));
        assert_eq!(c.correct, Some(true));
        d.verdicts = [Verdict::SelfHigher, Verdict::SelfHigher];
        assert!(!detect_consensus(&d).reached);
    }

    #[test]
    fn reply_parsing() {
        let history = vec![Message {
            sender: 1,
            sim_time: 1.0,
            text: "I'm heading to the supermarket. Your hospital trip goes first.".to_string(),
            verdict: Verdict::Undecided,
        }];
        assert_eq!(
            parse_reply_verdict("the emergency room", "Agreed.\n1", &history, 0),
            Verdict::SelfHigher
        );
        assert_eq!(
            parse_reply_verdict("the emergency room", "Agreed, I go first.", &history, 0),
            Verdict::Undecided
        );
        // two candidate types for the other agent: ambiguous
        assert_eq!(
            parse_reply_verdict("catch a flight", "1", &history, 0),
            Verdict::Undecided
        );
        let history = vec![Message {
            sender: 0,
            sim_time: 1.0,
            text: "I must catch a flight.".to_string(),
            verdict: Verdict::Undecided,
        }];
        assert_eq!(
            parse_reply_verdict("buy groceries", "1", &history, 1),
            Verdict::OtherHigher
        );
        assert_eq!(parse_reply_verdict("buy groceries", "1", &[], 1), Verdict::Undecided);
    }

    #[test]
    fn ground_truth_consensus() {
        let c = Consensus::ground_truth(0.0, [Grocery, Airport]);
        assert!(c.reached);
        assert_eq!(c.higher_priority_agent, Some(1));
        assert_eq!(c.reached_at, Some(0.0));
    }
}
