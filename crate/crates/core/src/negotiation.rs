//! Negotiation-phase state machine.
//!
//! Agents act in a fixed order. A turn carries an utterance and a list of
//! actions; an empty list (or only `Pass`) is a pass. The phase closes when
//! every agent has passed within one consecutive cycle, or when the
//! discussion-round cap is reached, at which point pending proposals expire.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgentId, Proposal, ProposalId, ProposalStatus, ResourceVector};
use crate::ledger::PairLedger;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NegotiationError {
    #[error("turn order is empty")]
    EmptyTurnOrder,
    #[error("round must be ≥ 1 (got {0})")]
    InvalidRound(u32),
    #[error("duplicate agent {0} in turn order")]
    DuplicateAgent(AgentId),
    #[error("it is {expected}'s turn, not {actor}'s")]
    NotYourTurn { expected: AgentId, actor: AgentId },
    #[error("negotiation phase is closed")]
    PhaseClosed,
    #[error("negotiation phase is still open")]
    PhaseStillOpen,
    #[error("unknown proposal {0}")]
    UnknownProposal(ProposalId),
    #[error("proposal {proposal} is addressed to {addressee}, not {actor}")]
    NotAddressee { proposal: ProposalId, addressee: AgentId, actor: AgentId },
    #[error("proposal {proposal} is already {status:?}")]
    ProposalNotPending { proposal: ProposalId, status: ProposalStatus },
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("an agent cannot propose a trade to itself")]
    SelfProposal,
    #[error("proposal must move at least one unit")]
    EmptyProposal,
    #[error("resource vector has {found} entries, expected {expected}")]
    Arity { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    Propose { counterpart: AgentId, give: ResourceVector, receive: ResourceVector },
    Accept { proposal_id: ProposalId },
    Reject { proposal_id: ProposalId },
    Pass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentAction {
    #[serde(flatten)]
    pub kind: ActionKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub rationale: String,
}

impl AgentAction {
    pub fn new(kind: ActionKind) -> Self {
        Self { kind, rationale: String::new() }
    }

    pub fn propose(counterpart: &AgentId, give: ResourceVector, receive: ResourceVector) -> Self {
        Self::new(ActionKind::Propose { counterpart: counterpart.clone(), give, receive })
    }

    pub fn accept(id: &ProposalId) -> Self {
        Self::new(ActionKind::Accept { proposal_id: id.clone() })
    }

    pub fn reject(id: &ProposalId) -> Self {
        Self::new(ActionKind::Reject { proposal_id: id.clone() })
    }

    pub fn is_pass(&self) -> bool {
        matches!(self.kind, ActionKind::Pass)
    }
}

/// True when a turn's action list amounts to a pass.
pub fn is_pass_turn(actions: &[AgentAction]) -> bool {
    actions.iter().all(AgentAction::is_pass)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: AgentId,
    pub text: String,
    pub actions: Vec<AgentAction>,
    pub ordinal: u64,
    pub discussion_round: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloseReason {
    AllPassed,
    RoundsExhausted,
}

/// Everything a single applied turn changed, for event emission.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TurnEffects {
    pub created: Vec<ProposalId>,
    pub status_changes: Vec<(ProposalId, ProposalStatus)>,
    pub expired: Vec<ProposalId>,
    pub closed: Option<CloseReason>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegotiationState {
    pub round: u32,
    pub discussion_round: u32,
    pub max_discussion_rounds: u32,
    pub num_resource_types: usize,
    pub turn_order: Vec<AgentId>,
    pub current_turn_index: usize,
    pub proposals: Vec<Proposal>,
    pub transcript: Vec<Utterance>,
    pub passed_this_cycle: BTreeSet<AgentId>,
    pub phase_status: PhaseStatus,
    pub close_reason: Option<CloseReason>,
}

impl NegotiationState {
    pub fn open_phase(
        round: u32,
        agents: &[AgentId],
        max_discussion_rounds: u32,
        num_resource_types: usize,
    ) -> Result<Self, NegotiationError> {
        if round < 1 {
            return Err(NegotiationError::InvalidRound(round));
        }
        if agents.is_empty() {
            return Err(NegotiationError::EmptyTurnOrder);
        }
        let mut seen = BTreeSet::new();
        for a in agents {
            if !seen.insert(a) {
                return Err(NegotiationError::DuplicateAgent(a.clone()));
            }
        }
        Ok(Self {
            round,
            discussion_round: 1,
            max_discussion_rounds: max_discussion_rounds.max(1),
            num_resource_types,
            turn_order: agents.to_vec(),
            current_turn_index: 0,
            proposals: Vec::new(),
            transcript: Vec::new(),
            passed_this_cycle: BTreeSet::new(),
            phase_status: PhaseStatus::Open,
            close_reason: None,
        })
    }

    pub fn is_closed(&self) -> bool {
        self.phase_status == PhaseStatus::Closed
    }

    /// Agent expected to act next, if the phase is open.
    pub fn current_actor(&self) -> Option<&AgentId> {
        match self.phase_status {
            PhaseStatus::Open => self.turn_order.get(self.current_turn_index),
            PhaseStatus::Closed => None,
        }
    }

    pub fn proposal(&self, id: &ProposalId) -> Option<&Proposal> {
        self.proposals.iter().find(|p| &p.proposal_id == id)
    }

    /// Pending proposals `agent` may answer.
    pub fn pending_for<'a>(&'a self, agent: &'a AgentId) -> impl Iterator<Item = &'a Proposal> + 'a {
        self.proposals
            .iter()
            .filter(move |p| p.status == ProposalStatus::Pending && &p.counterpart == agent)
    }

    /// Applies one turn atomically: on error the state is left unchanged.
    pub fn apply_turn(
        &mut self,
        actor: &AgentId,
        actions: &[AgentAction],
        utterance: &str,
    ) -> Result<TurnEffects, NegotiationError> {
        if self.is_closed() {
            return Err(NegotiationError::PhaseClosed);
        }
        let expected = &self.turn_order[self.current_turn_index];
        if expected != actor {
            return Err(NegotiationError::NotYourTurn { expected: expected.clone(), actor: actor.clone() });
        }
        let mut next = self.clone();
        let effects = next.apply_unchecked(actor, actions, utterance)?;
        *self = next;
        Ok(effects)
    }

    fn apply_unchecked(
        &mut self,
        actor: &AgentId,
        actions: &[AgentAction],
        utterance: &str,
    ) -> Result<TurnEffects, NegotiationError> {
        let mut effects = TurnEffects::default();
        for action in actions {
            match &action.kind {
                ActionKind::Pass => {}
                ActionKind::Propose { counterpart, give, receive } => {
                    if counterpart == actor {
                        return Err(NegotiationError::SelfProposal);
                    }
                    if !self.turn_order.contains(counterpart) {
                        return Err(NegotiationError::UnknownAgent(counterpart.clone()));
                    }
                    for v in [give, receive] {
                        if v.len() != self.num_resource_types {
                            return Err(NegotiationError::Arity { expected: self.num_resource_types, found: v.len() });
                        }
                    }
                    if give.is_zero() && receive.is_zero() {
                        return Err(NegotiationError::EmptyProposal);
                    }
                    let id = ProposalId::new(self.round, self.proposals.len());
                    self.proposals.push(Proposal {
                        proposal_id: id.clone(),
                        proposer: actor.clone(),
                        counterpart: counterpart.clone(),
                        give: give.clone(),
                        receive: receive.clone(),
                        status: ProposalStatus::Pending,
                        created_in_discussion_round: self.discussion_round,
                    });
                    effects.created.push(id);
                }
                ActionKind::Accept { proposal_id } | ActionKind::Reject { proposal_id } => {
                    let to = if matches!(action.kind, ActionKind::Accept { .. }) {
                        ProposalStatus::Accepted
                    } else {
                        ProposalStatus::Rejected
                    };
                    let p = self
                        .proposals
                        .iter_mut()
                        .find(|p| &p.proposal_id == proposal_id)
                        .ok_or_else(|| NegotiationError::UnknownProposal(proposal_id.clone()))?;
                    if &p.counterpart != actor {
                        return Err(NegotiationError::NotAddressee {
                            proposal: proposal_id.clone(),
                            addressee: p.counterpart.clone(),
                            actor: actor.clone(),
                        });
                    }
                    p.transition(to).map_err(|status| NegotiationError::ProposalNotPending {
                        proposal: proposal_id.clone(),
                        status,
                    })?;
                    effects.status_changes.push((proposal_id.clone(), to));
                }
            }
        }

        self.transcript.push(Utterance {
            speaker: actor.clone(),
            text: utterance.to_string(),
            actions: actions.to_vec(),
            ordinal: self.transcript.len() as u64,
            discussion_round: self.discussion_round,
        });

        if is_pass_turn(actions) {
            self.passed_this_cycle.insert(actor.clone());
        } else {
            self.passed_this_cycle.remove(actor);
        }

        if self.passed_this_cycle.len() == self.turn_order.len() {
            self.close(CloseReason::AllPassed, &mut effects);
            return Ok(effects);
        }

        self.current_turn_index += 1;
        if self.current_turn_index == self.turn_order.len() {
            self.current_turn_index = 0;
            if self.discussion_round >= self.max_discussion_rounds {
                self.close(CloseReason::RoundsExhausted, &mut effects);
            } else {
                self.discussion_round += 1;
            }
        }
        Ok(effects)
    }

    fn close(&mut self, reason: CloseReason, effects: &mut TurnEffects) {
        self.phase_status = PhaseStatus::Closed;
        self.close_reason = Some(reason);
        for p in &mut self.proposals {
            if p.status == ProposalStatus::Pending {
                p.status = ProposalStatus::Expired;
                effects.expired.push(p.proposal_id.clone());
            }
        }
        effects.closed = Some(reason);
    }

    /// Merged promises from every accepted proposal: `debtor → creditor → units`.
    pub fn accepted_deals(&self) -> Result<PairLedger, NegotiationError> {
        if !self.is_closed() {
            return Err(NegotiationError::PhaseStillOpen);
        }
        Ok(promises_from(&self.proposals))
    }
}

/// Both legs of every accepted proposal, summed per ordered pair.
pub fn promises_from(proposals: &[Proposal]) -> PairLedger {
    let mut ledger = PairLedger::new();
    for p in proposals.iter().filter(|p| p.status == ProposalStatus::Accepted) {
        ledger.add(&p.proposer, &p.counterpart, &p.give);
        ledger.add(&p.counterpart, &p.proposer, &p.receive);
    }
    ledger
}

/// Convenience for building vectors in tests and fixtures.
pub fn units(v: &[u64]) -> ResourceVector {
    ResourceVector::from_units(v.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agents() -> Vec<AgentId> {
        vec!["a".into(), "b".into(), "c".into()]
    }

    fn open() -> NegotiationState {
        NegotiationState::open_phase(1, &agents(), 3, 3).unwrap()
    }

    #[test]
    fn open_phase_constructor() {
        let s = open();
        assert_eq!(s.current_actor(), Some(&AgentId::from("a")));
        assert_eq!(s.discussion_round, 1);
        assert!(s.transcript.is_empty() && s.proposals.is_empty());
        assert_eq!(NegotiationState::open_phase(1, &[], 3, 3), Err(NegotiationError::EmptyTurnOrder));
        assert_eq!(NegotiationState::open_phase(0, &agents(), 3, 3), Err(NegotiationError::InvalidRound(0)));
    }

    #[test]
    fn three_passes_close_the_phase() {
        let mut s = open();
        for id in agents() {
            assert!(!s.is_closed());
            s.apply_turn(&id, &[], "").unwrap();
        }
        assert!(s.is_closed());
        assert_eq!(s.close_reason, Some(CloseReason::AllPassed));
        assert_eq!(s.apply_turn(&"a".into(), &[], ""), Err(NegotiationError::PhaseClosed));
    }

    #[test]
    fn exhausted_rounds_expire_pending() {
        let mut s = open();
        let ids = agents();
        for cycle in 0..3 {
            for (i, id) in ids.iter().enumerate() {
                let to = &ids[(i + 1) % 3];
                let action = AgentAction::propose(to, units(&[1, 0, 0]), units(&[0, 1, 0]));
                let fx = s.apply_turn(id, &[action], &format!("cycle {cycle}")).unwrap();
                if cycle == 2 && i == 2 {
                    assert_eq!(fx.closed, Some(CloseReason::RoundsExhausted));
                    assert_eq!(fx.expired.len(), 9);
                }
            }
        }
        assert!(s.is_closed());
        assert!(s.proposals.iter().all(|p| p.status == ProposalStatus::Expired));
        assert_eq!(s.discussion_round, 3);
    }

    #[test]
    fn accept_flips_status_once() {
        let mut s = open();
        let (a, b, c) = (AgentId::from("a"), AgentId::from("b"), AgentId::from("c"));
        s.apply_turn(&a, &[AgentAction::propose(&b, units(&[2, 0, 0]), units(&[0, 1, 0]))], "offer").unwrap();
        let id = s.proposals[0].proposal_id.clone();
        let fx = s.apply_turn(&b, &[AgentAction::accept(&id)], "deal").unwrap();
        assert_eq!(fx.status_changes, vec![(id.clone(), ProposalStatus::Accepted)]);
        s.apply_turn(&c, &[], "").unwrap();
        s.apply_turn(&a, &[], "").unwrap();
        let err = s.apply_turn(&b, &[AgentAction::accept(&id)], "again").unwrap_err();
        assert!(matches!(err, NegotiationError::ProposalNotPending { .. }));
    }

    #[test]
    fn turn_errors_leave_state_untouched() {
        let mut s = open();
        let (a, b) = (AgentId::from("a"), AgentId::from("b"));
        assert!(matches!(s.apply_turn(&b, &[], ""), Err(NegotiationError::NotYourTurn { .. })));
        s.apply_turn(&a, &[AgentAction::propose(&b, units(&[1, 0, 0]), units(&[0, 0, 0]))], "").unwrap();
        let id = s.proposals[0].proposal_id.clone();
        let before = s.clone();
        // b proposes (valid) then accepts an unknown id: the whole turn is rejected.
        let bad = [
            AgentAction::propose(&a, units(&[0, 1, 0]), units(&[0, 0, 0])),
            AgentAction::accept(&ProposalId("nope".into())),
        ];
        assert!(matches!(s.apply_turn(&b, &bad, ""), Err(NegotiationError::UnknownProposal(_))));
        assert_eq!(s, before);
        // c cannot answer a proposal addressed to b.
        s.apply_turn(&b, &[], "").unwrap();
        let err = s.apply_turn(&"c".into(), &[AgentAction::reject(&id)], "").unwrap_err();
        assert!(matches!(err, NegotiationError::NotAddressee { .. }));
    }

    #[test]
    fn proposal_validation() {
        let mut s = open();
        let a = AgentId::from("a");
        let zero = units(&[0, 0, 0]);
        assert_eq!(
            s.apply_turn(&a, &[AgentAction::propose(&a, units(&[1, 0, 0]), zero.clone())], ""),
            Err(NegotiationError::SelfProposal)
        );
        assert_eq!(
            s.apply_turn(&a, &[AgentAction::propose(&"b".into(), zero.clone(), zero.clone())], ""),
            Err(NegotiationError::EmptyProposal)
        );
        assert_eq!(
            s.apply_turn(&a, &[AgentAction::propose(&"z".into(), units(&[1, 0, 0]), zero)], ""),
            Err(NegotiationError::UnknownAgent("z".into()))
        );
    }

    #[test]
    fn a_non_pass_resets_the_pass_window() {
        let mut s = open();
        let ids = agents();
        s.apply_turn(&ids[0], &[], "").unwrap();
        s.apply_turn(&ids[1], &[], "").unwrap();
        s.apply_turn(&ids[2], &[AgentAction::propose(&ids[0], units(&[0, 0, 1]), units(&[1, 0, 0]))], "").unwrap();
        assert!(!s.is_closed());
        s.apply_turn(&ids[0], &[], "").unwrap();
        s.apply_turn(&ids[1], &[], "").unwrap();
        assert!(!s.is_closed());
        // Third consecutive pass, spanning the cycle boundary.
        s.apply_turn(&ids[2], &[], "").unwrap();
        assert!(s.is_closed());
        assert_eq!(s.close_reason, Some(CloseReason::AllPassed));
    }

    #[test]
    fn accepted_deals_merge_per_pair() {
        let mut s = open();
        let (a, b, c) = (AgentId::from("a"), AgentId::from("b"), AgentId::from("c"));
        assert_eq!(s.accepted_deals(), Err(NegotiationError::PhaseStillOpen));
        s.apply_turn(
            &a,
            &[
                AgentAction::propose(&b, units(&[2, 0, 0]), units(&[0, 0, 0])),
                AgentAction::propose(&b, units(&[3, 0, 0]), units(&[0, 1, 0])),
            ],
            "",
        )
        .unwrap();
        let ids: Vec<_> = s.proposals.iter().map(|p| p.proposal_id.clone()).collect();
        s.apply_turn(&b, &[AgentAction::accept(&ids[0]), AgentAction::accept(&ids[1])], "").unwrap();
        s.apply_turn(&c, &[], "").unwrap();
        s.apply_turn(&a, &[], "").unwrap();
        // c, a, b make three consecutive passes.
        s.apply_turn(&b, &[], "").unwrap();
        let deals = s.accepted_deals().unwrap();
        assert_eq!(deals.get(&a, &b).unwrap().units(), &[5, 0, 0]);
        assert_eq!(deals.get(&b, &a).unwrap().units(), &[0, 1, 0]);
        assert_eq!(deals.entries().count(), 2);
    }

    #[test]
    fn no_accepted_proposals_means_empty_ledger() {
        let mut s = open();
        for id in agents() {
            s.apply_turn(&id, &[], "").unwrap();
        }
        assert!(s.accepted_deals().unwrap().is_empty());
    }
}
