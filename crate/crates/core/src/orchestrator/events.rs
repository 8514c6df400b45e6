//! Append-only event records and their newline-delimited JSON encoding.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AffinityLedger, Affinity, AgentId, BdiState, ExperimentConfig, Proposal, ProposalId, ResourceVector};
use crate::exchange::{Holdings, RoundOutcome};
use crate::ledger::PairLedger;
use crate::negotiation::{AgentAction, CloseReason};

pub const SCHEMA_VERSION: u32 = 1;

/// One line of the event log. Field order on the wire is the declaration
/// order: `schema_version, run_id, repetition, round, seq, kind, payload`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub repetition: u32,
    pub round: u32,
    pub seq: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventBody {
    RunStart(RunStart),
    RoundStart(RoundStart),
    Injection(Injection),
    Turn(Turn),
    ProposalStatus(ProposalStatusChange),
    NegotiationClosed(NegotiationClosed),
    AllocationSubmitted(AllocationSubmitted),
    ExchangeResolved(RoundOutcome),
    AffinityUpdate(AffinityUpdate),
    BdiUpdate(BdiUpdate),
    RoundEnd(RoundEnd),
    RunEnd(RunEnd),
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::RunStart(_) => "run_start",
            EventBody::RoundStart(_) => "round_start",
            EventBody::Injection(_) => "injection",
            EventBody::Turn(_) => "turn",
            EventBody::ProposalStatus(_) => "proposal_status",
            EventBody::NegotiationClosed(_) => "negotiation_closed",
            EventBody::AllocationSubmitted(_) => "allocation_submitted",
            EventBody::ExchangeResolved(_) => "exchange_resolved",
            EventBody::AffinityUpdate(_) => "affinity_update",
            EventBody::BdiUpdate(_) => "bdi_update",
            EventBody::RoundEnd(_) => "round_end",
            EventBody::RunEnd(_) => "run_end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub agent: AgentId,
    pub policy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStart {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub roster: Vec<RosterEntry>,
    pub holdings: Holdings,
    pub affinity: AffinityLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStart {
    pub total_rounds: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub amounts: BTreeMap<AgentId, ResourceVector>,
    pub holdings_after: Holdings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub actor: AgentId,
    pub discussion_round: u32,
    pub utterance: String,
    pub actions: Vec<AgentAction>,
    /// Whether the agent chose to speak (false means it declined up front).
    pub continued: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
    pub created: Vec<ProposalId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalStatusChange {
    pub proposal: Proposal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationClosed {
    pub reason: CloseReason,
    pub discussion_rounds: u32,
    pub proposals: Vec<Proposal>,
    pub promises: PairLedger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationSubmitted {
    pub actor: AgentId,
    /// Hidden from other agents; revealed through `exchange_resolved`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outgoing: Option<BTreeMap<AgentId, ResourceVector>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
    pub clamped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityUpdate {
    pub owner: AgentId,
    pub scores: BTreeMap<AgentId, Affinity>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdiUpdate {
    pub owner: AgentId,
    pub bdi: BdiState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundEnd {
    pub holdings: Holdings,
    pub values: BTreeMap<AgentId, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affinity: Option<AffinityLedger>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEnd {
    pub status: RunStatus,
    pub holdings: Holdings,
    pub values: BTreeMap<AgentId, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EventRecord {
    /// The agent whose private data this event carries, if any.
    pub fn owner(&self) -> Option<&AgentId> {
        match &self.body {
            EventBody::Turn(t) => Some(&t.actor),
            EventBody::AllocationSubmitted(a) => Some(&a.actor),
            EventBody::AffinityUpdate(a) => Some(&a.owner),
            EventBody::BdiUpdate(b) => Some(&b.owner),
            _ => None,
        }
    }

    /// What agents other than the owner may see: `None` hides the event.
    pub fn public_view(&self) -> Option<EventRecord> {
        let mut out = self.clone();
        match &mut out.body {
            EventBody::Turn(t) => {
                for a in &mut t.actions {
                    a.rationale.clear();
                }
                t.fallback = None;
            }
            EventBody::AllocationSubmitted(a) => {
                a.outgoing = None;
                a.rationale = None;
                a.fallback = None;
                a.clamped = false;
            }
            EventBody::AffinityUpdate(_) | EventBody::BdiUpdate(_) => return None,
            EventBody::RoundEnd(r) => r.affinity = None,
            _ => {}
        }
        Some(out)
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt log: {detail} (last valid seq {last_valid_seq:?})")]
    CorruptLog { last_valid_seq: Option<u64>, detail: String },
    #[error("schema mismatch at seq {seq:?}: {detail}")]
    SchemaMismatch { seq: Option<u64>, detail: String },
}

pub fn encode_line(event: &EventRecord) -> String {
    serde_json::to_string(event).expect("event records always serialize")
}

pub fn encode_log(events: &[EventRecord]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&encode_line(e));
        out.push('\n');
    }
    out
}

pub fn write_log(path: &Path, events: &[EventRecord]) -> Result<(), LogError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = fs::File::create(path)?;
    f.write_all(encode_log(events).as_bytes())?;
    Ok(())
}

/// Parses NDJSON text. A line that fails to parse is reported as corruption
/// with the last sequence number that did parse.
pub fn decode_log(text: &str) -> Result<Vec<EventRecord>, LogError> {
    let mut events: Vec<EventRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| LogError::CorruptLog {
            last_valid_seq: events.last().map(|e| e.seq),
            detail: format!("line {}: {e}", i + 1),
        })?;
        let version = value.get("schema_version").and_then(|v| v.as_u64());
        if version != Some(SCHEMA_VERSION as u64) {
            return Err(LogError::SchemaMismatch {
                seq: value.get("seq").and_then(|v| v.as_u64()),
                detail: format!("line {}: schema_version {version:?}, expected {SCHEMA_VERSION}", i + 1),
            });
        }
        let event: EventRecord = serde_json::from_value(value).map_err(|e| LogError::SchemaMismatch {
            seq: None,
            detail: format!("line {}: {e}", i + 1),
        })?;
        events.push(event);
    }
    Ok(events)
}

pub fn read_log(path: &Path) -> Result<Vec<EventRecord>, LogError> {
    let file = fs::File::open(path)?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    decode_log(&text)
}

const PER_ROUND_SINGLETONS: [&str; 5] = ["round_start", "injection", "negotiation_closed", "exchange_resolved", "round_end"];

/// Structural checks: framing, gap-free `seq` from 0, non-decreasing `round`, and
/// exactly one of each per-round marker event.
pub fn validate_events(events: &[EventRecord]) -> Result<(), LogError> {
    let first = events.first().ok_or(LogError::CorruptLog { last_valid_seq: None, detail: "empty log".into() })?;
    if !matches!(first.body, EventBody::RunStart(_)) || first.seq != 0 {
        return Err(LogError::SchemaMismatch { seq: Some(first.seq), detail: "log must begin with run_start at seq 0".into() });
    }
    for pair in events.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if b.seq != a.seq + 1 {
            return Err(LogError::SchemaMismatch {
                seq: Some(b.seq),
                detail: format!("seq {} follows {}; seq must count up by one", b.seq, a.seq),
            });
        }
        if b.round < a.round {
            return Err(LogError::SchemaMismatch {
                seq: Some(b.seq),
                detail: format!("round {} follows round {}", b.round, a.round),
            });
        }
        if b.run_id != a.run_id || b.repetition != a.repetition {
            return Err(LogError::SchemaMismatch { seq: Some(b.seq), detail: "mixed runs in one log".into() });
        }
    }
    let last = events.last().expect("non-empty");
    if !matches!(last.body, EventBody::RunEnd(_)) {
        return Err(LogError::CorruptLog {
            last_valid_seq: Some(last.seq),
            detail: "log does not end with run_end (truncated?)".into(),
        });
    }
    let mut counts: BTreeMap<(u32, &'static str), usize> = BTreeMap::new();
    let mut rounds = std::collections::BTreeSet::new();
    for e in events {
        let kind = e.body.kind();
        if PER_ROUND_SINGLETONS.contains(&kind) {
            *counts.entry((e.round, kind)).or_default() += 1;
            rounds.insert(e.round);
        }
    }
    let failed = matches!(&last.body, EventBody::RunEnd(end) if end.status == RunStatus::Failed);
    for round in rounds {
        for kind in PER_ROUND_SINGLETONS {
            let n = counts.get(&(round, kind)).copied().unwrap_or(0);
            let last_round_of_failed_run = failed && round == last.round;
            if n > 1 || (n == 0 && !last_round_of_failed_run) {
                return Err(LogError::SchemaMismatch {
                    seq: None,
                    detail: format!("round {round} has {n} `{kind}` events, expected exactly 1"),
                });
            }
        }
    }
    Ok(())
}
