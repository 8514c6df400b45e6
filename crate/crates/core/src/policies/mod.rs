//! Agent decision interface and its implementations.
//!
//! Every decision the engine needs from an agent goes through
//! [`Policy::decide`]: whether to speak, what to say and do on a negotiation
//! turn, what to actually send in the exchange phase, and the end-of-round
//! BDI and affinity updates.

mod human;
mod llm;
mod parse;
mod prompt;
mod scripted;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Affinity, AgentId, AgentProfile, BdiState, ResourceType, ResourceVector, ValueCoefficients};
use crate::exchange::{AllocationDecision, RoundOutcome};
use crate::ledger::PairLedger;
use crate::llm::LlmError;
use crate::negotiation::{AgentAction, NegotiationState};
use crate::orchestrator::events::{EventBody, EventRecord};

pub use human::HumanBridge;
pub use llm::LlmPolicy;
pub use parse::{parse_llm_decision, validate_actions, ActionDto, WireActions};
pub use prompt::{render_prompt, persona_preamble, PromptError, PromptSet, AFFINITY_RUBRIC};
pub use scripted::{scripted_policy, ScriptedKind, ScriptedPolicy, SCRIPTED_POLICY_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    ContinueOrPass,
    TurnReply,
    Allocation,
    BdiUpdate,
    AffinityUpdate,
}

impl DecisionKind {
    pub fn tag(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyDecision {
    ContinueOrPass(bool),
    TurnReply { utterance: String, actions: Vec<AgentAction> },
    Allocation(AllocationDecision),
    BdiUpdate(BdiState),
    AffinityUpdate(BTreeMap<AgentId, Affinity>),
}

impl PolicyDecision {
    pub fn kind(&self) -> DecisionKind {
        match self {
            PolicyDecision::ContinueOrPass(_) => DecisionKind::ContinueOrPass,
            PolicyDecision::TurnReply { .. } => DecisionKind::TurnReply,
            PolicyDecision::Allocation(_) => DecisionKind::Allocation,
            PolicyDecision::BdiUpdate(_) => DecisionKind::BdiUpdate,
            PolicyDecision::AffinityUpdate(_) => DecisionKind::AffinityUpdate,
        }
    }

    pub fn pass() -> Self {
        PolicyDecision::TurnReply { utterance: String::new(), actions: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("policy timed out")]
    PolicyTimeout,
    #[error("malformed decision: {0}")]
    MalformedDecision(String),
    #[error("waiting for the human participant")]
    AwaitingHuman,
    #[error("policy cannot produce a {0:?} decision here")]
    WrongKind(DecisionKind),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Public facts about another agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerInfo {
    pub agent_id: AgentId,
    pub display_name: String,
    pub specialization: ResourceType,
}

/// Everything a policy may look at when deciding.
#[derive(Debug, Clone)]
pub struct PolicyContext {
    pub self_profile: AgentProfile,
    pub peers: Vec<PeerInfo>,
    pub resource_labels: Vec<String>,
    pub coefficients: ValueCoefficients,
    pub round: u32,
    pub total_rounds: u32,
    pub injection_per_round: u64,
    pub max_discussion_rounds: u32,
    pub holdings: ResourceVector,
    /// Events this agent has seen, with other agents' private data removed.
    pub memory: Vec<Arc<EventRecord>>,
    pub bdi: BdiState,
    pub affinity_out: BTreeMap<AgentId, Affinity>,
    pub negotiation: Option<NegotiationState>,
    /// Accepted-deal promises in which this agent is debtor or creditor.
    pub promises_due: PairLedger,
    /// Outcome of the current round's exchange, once revealed.
    pub latest_outcome: Option<RoundOutcome>,
    /// Deterministic per-decision seed.
    pub seed: u64,
    /// Engine feedback on a rejected previous attempt.
    pub feedback: Option<String>,
}

impl PolicyContext {
    pub fn me(&self) -> &AgentId {
        &self.self_profile.agent_id
    }

    pub fn n(&self) -> usize {
        self.resource_labels.len()
    }

    pub fn peer(&self, id: &AgentId) -> Option<&PeerInfo> {
        self.peers.iter().find(|p| &p.agent_id == id)
    }

    /// Revealed exchange outcomes in round order.
    pub fn outcomes(&self) -> impl Iterator<Item = &RoundOutcome> {
        self.memory.iter().filter_map(|e| match &e.body {
            EventBody::ExchangeResolved(o) => Some(o),
            _ => None,
        })
    }

    pub fn outcome_of(&self, round: u32) -> Option<&RoundOutcome> {
        self.outcomes().find(|o| o.round == round)
    }

    /// What this agent still owes each creditor this round.
    pub fn owed_by_me(&self) -> BTreeMap<AgentId, ResourceVector> {
        self.promises_due.outgoing(self.me())
    }
}

pub trait Policy: Send + Sync {
    fn name(&self) -> String;

    /// Human and LLM policies may be re-prompted and clamped; scripted
    /// policies must produce engine-valid decisions on their own.
    fn interactive(&self) -> bool {
        false
    }

    fn decide(&self, kind: DecisionKind, ctx: &PolicyContext) -> Result<PolicyDecision, PolicyError>;
}

/// The decision used when a policy fails for good; always engine-legal.
pub fn fallback_decision(kind: DecisionKind, ctx: &PolicyContext) -> PolicyDecision {
    match kind {
        DecisionKind::ContinueOrPass => PolicyDecision::ContinueOrPass(false),
        DecisionKind::TurnReply => PolicyDecision::pass(),
        DecisionKind::Allocation => PolicyDecision::Allocation(AllocationDecision::nothing(ctx.me())),
        DecisionKind::BdiUpdate => PolicyDecision::BdiUpdate(ctx.bdi.clone()),
        DecisionKind::AffinityUpdate => PolicyDecision::AffinityUpdate(ctx.affinity_out.clone()),
    }
}
