//! What the participant is shown. Built only from public data plus the
//! human's own private data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, ResourceVector};
use crate::orchestrator::events::EventBody;
use crate::orchestrator::{Game, Pending, RunStatus};
use crate::policies::{ActionDto, AFFINITY_RUBRIC};
use crate::scoring::{compensation, format_compensation, holding_value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionPhase {
    AwaitingTurn,
    AwaitingAllocation,
    AwaitingAffinity,
    BetweenRounds,
    Finished,
}

pub(super) fn phase(p: &Pending) -> SessionPhase {
    match p {
        Pending::Turn(_) => SessionPhase::AwaitingTurn,
        Pending::Allocations(_) => SessionPhase::AwaitingAllocation,
        Pending::Bdi(_) => SessionPhase::BetweenRounds,
        Pending::Affinity(_) => SessionPhase::AwaitingAffinity,
        Pending::Finished(_) => SessionPhase::Finished,
    }
}

type LabelMap = BTreeMap<String, u64>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentCard {
    pub agent_id: AgentId,
    pub display_name: String,
    pub specialization: String,
    pub is_you: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueView {
    pub singles: u64,
    pub pairs: u64,
    pub triples: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub speaker: AgentId,
    pub discussion_round: u32,
    pub text: String,
    pub actions: Vec<ActionDto>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalRow {
    pub proposal_id: String,
    pub proposer: AgentId,
    pub counterpart: AgentId,
    pub give: LabelMap,
    pub receive: LabelMap,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Promises {
    pub owed_by_you: BTreeMap<AgentId, LabelMap>,
    pub owed_to_you: BTreeMap<AgentId, LabelMap>,
}

/// The human's side of one resolved exchange.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecap {
    pub round: u32,
    pub promised_by_you: BTreeMap<AgentId, LabelMap>,
    pub promised_to_you: BTreeMap<AgentId, LabelMap>,
    pub sent: BTreeMap<AgentId, LabelMap>,
    pub received: BTreeMap<AgentId, LabelMap>,
    pub value_after: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateView {
    pub session_id: String,
    pub human_agent_id: AgentId,
    pub phase: SessionPhase,
    /// Whose negotiation turn it is, during `AwaitingTurn`.
    pub turn_owner: Option<AgentId>,
    pub your_turn: bool,
    pub round: u32,
    pub total_rounds: u32,
    pub discussion_round: Option<u32>,
    pub max_discussion_rounds: u32,
    pub resource_labels: Vec<String>,
    pub agents: Vec<AgentCard>,
    pub holdings: LabelMap,
    pub value: ValueView,
    pub transcript: Vec<TranscriptEntry>,
    pub proposals: Vec<ProposalRow>,
    pub promises: Promises,
    /// Your own current scores for the others.
    pub your_affinity: BTreeMap<AgentId, u8>,
    pub history: Vec<RoundRecap>,
    pub affinity_rubric: String,
    pub deadline_unix_ms: Option<u64>,
    pub status: Option<RunStatus>,
    pub error: Option<String>,
}

fn label_map(v: &ResourceVector, labels: &[String]) -> LabelMap {
    v.to_label_map(labels)
}

fn value_view(v: &ResourceVector, game: &Game) -> ValueView {
    let b = holding_value(v, &game.config().value_coefficients).expect("validated config");
    ValueView { singles: b.singles(), pairs: b.pairs(), triples: b.triples(), total: b.total_points }
}

fn rows_for(
    ledger: &crate::ledger::PairLedger,
    me: &AgentId,
    labels: &[String],
) -> (BTreeMap<AgentId, LabelMap>, BTreeMap<AgentId, LabelMap>) {
    let mut out = BTreeMap::new();
    let mut inc = BTreeMap::new();
    for (from, to, units) in ledger.entries() {
        if from == me {
            out.insert(to.clone(), label_map(units, labels));
        } else if to == me {
            inc.insert(from.clone(), label_map(units, labels));
        }
    }
    (out, inc)
}

pub(super) fn build(session_id: &str, me: &AgentId, game: &Game, deadline_unix_ms: Option<u64>) -> StateView {
    let cfg = game.config();
    let labels = &cfg.resource_labels;
    let pending = game.pending();
    let turn_owner = match &pending {
        Pending::Turn(a) => Some(a.clone()),
        _ => None,
    };
    let neg = game.negotiation();
    let transcript = neg
        .map(|n| {
            n.transcript
                .iter()
                .map(|u| TranscriptEntry {
                    speaker: u.speaker.clone(),
                    discussion_round: u.discussion_round,
                    text: u.text.clone(),
                    actions: u
                        .actions
                        .iter()
                        .map(|a| {
                            let mut dto = ActionDto::from_action(a, labels);
                            if &u.speaker != me {
                                dto.rationale = None;
                            }
                            dto
                        })
                        .collect(),
                })
                .collect()
        })
        .unwrap_or_default();
    let proposals = neg
        .map(|n| {
            n.proposals
                .iter()
                .map(|p| ProposalRow {
                    proposal_id: p.proposal_id.to_string(),
                    proposer: p.proposer.clone(),
                    counterpart: p.counterpart.clone(),
                    give: label_map(&p.give, labels),
                    receive: label_map(&p.receive, labels),
                    status: format!("{:?}", p.status).to_lowercase(),
                })
                .collect()
        })
        .unwrap_or_default();
    let (owed_by_you, owed_to_you) = rows_for(game.promises(), me, labels);

    let mut history = Vec::new();
    for e in game.events() {
        if let EventBody::ExchangeResolved(o) = &e.body {
            let (promised_by_you, promised_to_you) = rows_for(&o.promised, me, labels);
            let (sent, received) = rows_for(&o.delivered, me, labels);
            history.push(RoundRecap {
                round: o.round,
                promised_by_you,
                promised_to_you,
                sent,
                received,
                value_after: o.holding_values_after.get(me).copied().unwrap_or(0),
            });
        }
    }
    let (status, error) = game
        .events()
        .last()
        .and_then(|e| match &e.body {
            EventBody::RunEnd(end) => Some((Some(end.status), end.error.clone())),
            _ => None,
        })
        .unwrap_or((None, None));
    let holdings = game.holdings().get(me).cloned().unwrap_or_else(|| ResourceVector::zeros(labels.len()));

    StateView {
        session_id: session_id.to_string(),
        human_agent_id: me.clone(),
        phase: phase(&pending),
        your_turn: turn_owner.as_ref() == Some(me),
        turn_owner,
        round: game.round(),
        total_rounds: cfg.rounds,
        discussion_round: neg.filter(|n| !n.is_closed()).map(|n| n.discussion_round),
        max_discussion_rounds: cfg.max_discussion_rounds,
        resource_labels: labels.clone(),
        agents: cfg
            .agents
            .iter()
            .map(|a| AgentCard {
                agent_id: a.agent_id.clone(),
                display_name: a.display_name.clone(),
                specialization: labels[a.specialization].clone(),
                is_you: &a.agent_id == me,
            })
            .collect(),
        holdings: label_map(&holdings, labels),
        value: value_view(&holdings, game),
        transcript,
        proposals,
        promises: Promises { owed_by_you, owed_to_you },
        your_affinity: game.affinity().row(me).into_iter().map(|(a, s)| (a, s.get())).collect(),
        history,
        affinity_rubric: AFFINITY_RUBRIC.to_string(),
        deadline_unix_ms,
        status,
        error,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub session_id: String,
    pub human_agent_id: AgentId,
    pub status: RunStatus,
    pub holdings: LabelMap,
    pub total_value: u64,
    pub value: ValueView,
    pub compensation: f64,
    pub compensation_display: String,
    /// Holding value after each round.
    pub value_series: Vec<u64>,
    /// Units you delivered in each round.
    pub sent_series: Vec<u64>,
    /// Units delivered to you in each round.
    pub received_series: Vec<u64>,
    /// Your scores for the others after each round.
    pub affinity_given_series: Vec<BTreeMap<AgentId, u8>>,
}

pub(super) fn result(session_id: &str, me: &AgentId, game: &Game) -> SessionResult {
    let labels = &game.config().resource_labels;
    let n = labels.len();
    let snap = game.snapshot();
    let holdings = snap.holdings.get(me).cloned().unwrap_or_else(|| ResourceVector::zeros(n));
    let value = value_view(&holdings, game);
    let mut sent_series = Vec::new();
    let mut received_series = Vec::new();
    let mut affinity_given_series = Vec::new();
    for e in game.events() {
        match &e.body {
            EventBody::ExchangeResolved(o) => {
                sent_series.push(o.delivered.total_outgoing(me, n).total());
                received_series.push(o.delivered.total_incoming(me, n).total());
            }
            EventBody::RoundEnd(r) => {
                if let Some(a) = &r.affinity {
                    affinity_given_series.push(a.row(me).into_iter().map(|(t, s)| (t, s.get())).collect());
                }
            }
            _ => {}
        }
    }
    let comp = compensation(value.total as f64);
    SessionResult {
        session_id: session_id.to_string(),
        human_agent_id: me.clone(),
        status: snap.status.unwrap_or(RunStatus::Failed),
        holdings: label_map(&holdings, labels),
        total_value: value.total,
        value,
        compensation: comp,
        compensation_display: format_compensation(comp),
        value_series: snap.value_trajectory.get(me).cloned().unwrap_or_default(),
        sent_series,
        received_series,
        affinity_given_series,
    }
}
