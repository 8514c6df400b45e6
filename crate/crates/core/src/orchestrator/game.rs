//! One repetition as a resumable state machine.
//!
//! The game never calls a policy itself. It says what it needs next
//! ([`Game::pending`]), builds the context for that decision, and accepts
//! submissions. A runner drives it to completion in one go; the session
//! service drives it a step at a time and can stop while a person thinks.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::derive_seed;
use super::events::*;
use crate::domain::{Affinity, AffinityLedger, AgentId, BdiState, ExperimentConfig};
use crate::exchange::{inject_resources, resolve_exchange, AllocationDecision, ExchangeError, Holdings, RoundOutcome};
use crate::ledger::PairLedger;
use crate::negotiation::{AgentAction, NegotiationError, NegotiationState, TurnEffects};
use crate::policies::{DecisionKind, PeerInfo, PolicyContext};
use crate::scoring::points;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("the run has finished")]
    Finished,
    #[error("{agent} cannot submit {what} now")]
    OutOfTurn { agent: AgentId, what: &'static str },
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error(transparent)]
    Negotiation(#[from] NegotiationError),
    #[error(transparent)]
    Exchange(#[from] ExchangeError),
    #[error("invalid affinity update: {0}")]
    Affinity(String),
}

/// What the game is waiting for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", content = "agents", rename_all = "snake_case")]
pub enum Pending {
    Turn(AgentId),
    Allocations(Vec<AgentId>),
    Bdi(Vec<AgentId>),
    Affinity(Vec<AgentId>),
    Finished(RunStatus),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Phase {
    Negotiation,
    Exchange,
    Bdi,
    Affinity,
    Finished(RunStatus),
}

/// State that replay must be able to rebuild from the log alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSnapshot {
    pub round: u32,
    pub status: Option<RunStatus>,
    pub holdings: Holdings,
    pub values: BTreeMap<AgentId, u64>,
    pub affinity: AffinityLedger,
    pub bdi: BTreeMap<AgentId, BdiState>,
    /// Per-round value of every agent, index 0 = after round 1.
    pub value_trajectory: BTreeMap<AgentId, Vec<u64>>,
}

pub struct Game {
    config: ExperimentConfig,
    run_id: String,
    repetition: u32,
    seed: u64,
    agents: Vec<AgentId>,
    phase: Phase,
    round: u32,
    holdings: Holdings,
    affinity: AffinityLedger,
    bdi: BTreeMap<AgentId, BdiState>,
    negotiation: Option<NegotiationState>,
    promises: PairLedger,
    allocations: BTreeMap<AgentId, AllocationDecision>,
    submitted: BTreeSet<AgentId>,
    latest_outcome: Option<RoundOutcome>,
    value_trajectory: BTreeMap<AgentId, Vec<u64>>,
    events: Vec<EventRecord>,
    memory: BTreeMap<AgentId, Vec<Arc<EventRecord>>>,
}

impl Game {
    /// Emits `run_start` and opens round 1.
    ///
    /// `roster` names the policy bound to each agent, in config order.
    pub fn new(config: ExperimentConfig, run_id: &str, repetition: u32, seed: u64, roster: &[String]) -> Self {
        let agents = config.agent_ids();
        let holdings: Holdings =
            config.agents.iter().map(|p| (p.agent_id.clone(), p.initial_holdings.clone())).collect();
        let affinity = AffinityLedger::uniform(&agents, Affinity::NEUTRAL);
        let mut game = Self {
            run_id: run_id.to_string(),
            repetition,
            seed,
            phase: Phase::Negotiation,
            round: 0,
            bdi: agents.iter().map(|a| (a.clone(), BdiState::default())).collect(),
            memory: agents.iter().map(|a| (a.clone(), Vec::new())).collect(),
            value_trajectory: agents.iter().map(|a| (a.clone(), Vec::new())).collect(),
            negotiation: None,
            promises: PairLedger::new(),
            allocations: BTreeMap::new(),
            submitted: BTreeSet::new(),
            latest_outcome: None,
            events: Vec::new(),
            holdings,
            affinity,
            agents,
            config,
        };
        let roster = game
            .agents
            .iter()
            .zip(roster.iter().map(String::as_str).chain(std::iter::repeat("unbound")))
            .map(|(agent, policy)| RosterEntry { agent: agent.clone(), policy: policy.to_string() })
            .collect();
        game.emit(EventBody::RunStart(RunStart {
            config: game.config.clone(),
            seed,
            roster,
            holdings: game.holdings.clone(),
            affinity: game.affinity.clone(),
        }));
        game.start_round(1);
        game
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn repetition(&self) -> u32 {
        self.repetition
    }

    pub fn agents(&self) -> &[AgentId] {
        &self.agents
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn events(&self) -> &[EventRecord] {
        &self.events
    }

    pub fn into_events(self) -> Vec<EventRecord> {
        self.events
    }

    pub fn holdings(&self) -> &Holdings {
        &self.holdings
    }

    pub fn affinity(&self) -> &AffinityLedger {
        &self.affinity
    }

    pub fn negotiation(&self) -> Option<&NegotiationState> {
        self.negotiation.as_ref()
    }

    pub fn promises(&self) -> &PairLedger {
        &self.promises
    }

    pub fn latest_outcome(&self) -> Option<&RoundOutcome> {
        self.latest_outcome.as_ref()
    }

    /// Events visible to `agent`: its own in full, everyone else's redacted.
    pub fn memory_of(&self, agent: &AgentId) -> &[Arc<EventRecord>] {
        self.memory.get(agent).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.phase, Phase::Finished(_))
    }

    pub fn has_submitted_allocation(&self, agent: &AgentId) -> bool {
        self.phase == Phase::Exchange && self.allocations.contains_key(agent)
    }

    pub fn snapshot(&self) -> GameSnapshot {
        GameSnapshot {
            round: self.round,
            status: match self.phase {
                Phase::Finished(s) => Some(s),
                _ => None,
            },
            values: self.values(),
            holdings: self.holdings.clone(),
            affinity: self.affinity.clone(),
            bdi: self.bdi.clone(),
            value_trajectory: self.value_trajectory.clone(),
        }
    }

    fn values(&self) -> BTreeMap<AgentId, u64> {
        self.holdings.iter().map(|(a, h)| (a.clone(), points(h, &self.config.value_coefficients))).collect()
    }

    pub fn pending(&self) -> Pending {
        let waiting = |done: &dyn Fn(&AgentId) -> bool| self.agents.iter().filter(|a| !done(a)).cloned().collect();
        match &self.phase {
            Phase::Negotiation => {
                let neg = self.negotiation.as_ref().expect("negotiation open");
                Pending::Turn(neg.current_actor().expect("open phase has an actor").clone())
            }
            Phase::Exchange => Pending::Allocations(waiting(&|a| self.allocations.contains_key(a))),
            Phase::Bdi => Pending::Bdi(waiting(&|a| self.submitted.contains(a))),
            Phase::Affinity => Pending::Affinity(waiting(&|a| self.submitted.contains(a))),
            Phase::Finished(s) => Pending::Finished(*s),
        }
    }

    fn agent_index(&self, agent: &AgentId) -> Result<usize, GameError> {
        self.agents.iter().position(|a| a == agent).ok_or_else(|| GameError::UnknownAgent(agent.clone()))
    }

    /// Everything `agent` may see when making a `kind` decision now.
    pub fn context_for(&self, agent: &AgentId, kind: DecisionKind) -> Result<PolicyContext, GameError> {
        let idx = self.agent_index(agent)?;
        let profile = self.config.agents[idx].clone();
        let call = match (&self.negotiation, kind) {
            (Some(neg), DecisionKind::ContinueOrPass | DecisionKind::TurnReply) => {
                neg.transcript.iter().filter(|u| &u.speaker == agent).count() as u64
            }
            _ => 0,
        };
        let seed = derive_seed(
            self.seed,
            &[self.repetition as u64, idx as u64, self.round as u64, kind.tag(), call],
        );
        let in_updates = matches!(self.phase, Phase::Bdi | Phase::Affinity);
        Ok(PolicyContext {
            peers: self
                .config
                .agents
                .iter()
                .filter(|p| &p.agent_id != agent)
                .map(|p| PeerInfo {
                    agent_id: p.agent_id.clone(),
                    display_name: p.display_name.clone(),
                    specialization: p.specialization,
                })
                .collect(),
            self_profile: profile,
            resource_labels: self.config.resource_labels.clone(),
            coefficients: self.config.value_coefficients.clone(),
            round: self.round,
            total_rounds: self.config.rounds,
            injection_per_round: self.config.injection_per_round,
            max_discussion_rounds: self.config.max_discussion_rounds,
            holdings: self.holdings[agent].clone(),
            memory: self.memory_of(agent).to_vec(),
            bdi: self.bdi[agent].clone(),
            affinity_out: self.affinity.row(agent),
            negotiation: self.negotiation.clone(),
            promises_due: self.promises.involving(agent),
            latest_outcome: if in_updates { self.latest_outcome.clone() } else { None },
            seed,
            feedback: None,
        })
    }

    fn emit(&mut self, body: EventBody) {
        let record = EventRecord {
            schema_version: SCHEMA_VERSION,
            run_id: self.run_id.clone(),
            repetition: self.repetition,
            round: self.round,
            seq: self.events.len() as u64,
            body,
        };
        let full = Arc::new(record.clone());
        let public = record.public_view().map(Arc::new);
        let owner = record.owner().cloned();
        for (agent, mem) in self.memory.iter_mut() {
            if owner.as_ref() == Some(agent) {
                mem.push(full.clone());
            } else if let Some(p) = &public {
                mem.push(p.clone());
            }
        }
        self.events.push(record);
    }

    fn start_round(&mut self, round: u32) {
        self.round = round;
        self.emit(EventBody::RoundStart(RoundStart { total_rounds: self.config.rounds }));
        let n = self.config.num_resource_types();
        let s = self.config.injection_per_round;
        self.holdings = inject_resources(&self.holdings, &self.config.agents, s);
        let amounts = self
            .config
            .agents
            .iter()
            .map(|p| (p.agent_id.clone(), crate::domain::ResourceVector::single(n, p.specialization, s)))
            .collect();
        self.emit(EventBody::Injection(Injection { amounts, holdings_after: self.holdings.clone() }));
        self.negotiation = Some(
            NegotiationState::open_phase(round, &self.agents, self.config.max_discussion_rounds, n)
                .expect("validated config yields a valid turn order"),
        );
        self.promises = PairLedger::new();
        self.allocations.clear();
        self.submitted.clear();
        self.latest_outcome = None;
        self.phase = Phase::Negotiation;
    }

    fn expect_phase(&self, phase: Phase, agent: &AgentId, what: &'static str) -> Result<(), GameError> {
        if self.is_finished() {
            return Err(GameError::Finished);
        }
        self.agent_index(agent)?;
        if self.phase != phase {
            return Err(GameError::OutOfTurn { agent: agent.clone(), what });
        }
        Ok(())
    }

    /// Records one negotiation turn. `continued = false` means the agent
    /// declined to speak; its action list must then be empty.
    pub fn submit_turn(
        &mut self,
        agent: &AgentId,
        continued: bool,
        utterance: &str,
        actions: Vec<AgentAction>,
        fallback: Option<String>,
    ) -> Result<TurnEffects, GameError> {
        self.expect_phase(Phase::Negotiation, agent, "a turn")?;
        let actions = if continued { actions } else { Vec::new() };
        let neg = self.negotiation.as_mut().expect("negotiation open");
        let discussion_round = neg.discussion_round;
        let effects = neg.apply_turn(agent, &actions, utterance)?;
        self.emit(EventBody::Turn(Turn {
            actor: agent.clone(),
            discussion_round,
            utterance: utterance.to_string(),
            actions,
            continued,
            fallback,
            created: effects.created.clone(),
        }));
        let changed: Vec<_> = effects
            .status_changes
            .iter()
            .map(|(id, _)| id)
            .chain(effects.expired.iter())
            .cloned()
            .collect();
        for id in changed {
            let proposal = self.negotiation.as_ref().and_then(|n| n.proposal(&id)).expect("known proposal").clone();
            self.emit(EventBody::ProposalStatus(ProposalStatusChange { proposal }));
        }
        if let Some(reason) = effects.closed {
            let neg = self.negotiation.as_ref().expect("negotiation open");
            self.promises = neg.accepted_deals()?;
            let closed = NegotiationClosed {
                reason,
                discussion_rounds: neg.discussion_round,
                proposals: neg.proposals.clone(),
                promises: self.promises.clone(),
            };
            self.emit(EventBody::NegotiationClosed(closed));
            self.phase = Phase::Exchange;
        }
        Ok(effects)
    }

    /// Records one agent's exchange decision; the last one triggers resolution.
    pub fn submit_allocation(
        &mut self,
        decision: AllocationDecision,
        clamped: bool,
        fallback: Option<String>,
    ) -> Result<Option<&RoundOutcome>, GameError> {
        let agent = decision.actor.clone();
        self.expect_phase(Phase::Exchange, &agent, "an allocation")?;
        if self.allocations.contains_key(&agent) {
            return Err(ExchangeError::DuplicateDecision(agent).into());
        }
        let everyone: BTreeSet<AgentId> = self.agents.iter().cloned().collect();
        decision.validate(&self.holdings[&agent], &everyone)?;
        self.emit(EventBody::AllocationSubmitted(AllocationSubmitted {
            actor: agent.clone(),
            outgoing: Some(decision.outgoing.clone()),
            rationale: (!decision.rationale.is_empty()).then(|| decision.rationale.clone()),
            clamped,
            fallback,
        }));
        self.allocations.insert(agent, decision);
        if self.allocations.len() < self.agents.len() {
            return Ok(None);
        }
        let decisions: Vec<_> = self.agents.iter().map(|a| self.allocations[a].clone()).collect();
        let outcome =
            resolve_exchange(self.round, &self.holdings, &decisions, &self.promises, &self.config.value_coefficients)?;
        self.holdings = outcome.holdings_after.clone();
        self.emit(EventBody::ExchangeResolved(outcome.clone()));
        self.latest_outcome = Some(outcome);
        self.phase = Phase::Bdi;
        self.submitted.clear();
        Ok(self.latest_outcome.as_ref())
    }

    pub fn submit_bdi(&mut self, agent: &AgentId, bdi: BdiState, fallback: Option<String>) -> Result<(), GameError> {
        self.expect_phase(Phase::Bdi, agent, "a BDI update")?;
        if !self.submitted.insert(agent.clone()) {
            return Err(GameError::OutOfTurn { agent: agent.clone(), what: "a second BDI update" });
        }
        self.bdi.insert(agent.clone(), bdi.clone());
        self.emit(EventBody::BdiUpdate(BdiUpdate { owner: agent.clone(), bdi, fallback }));
        if self.submitted.len() == self.agents.len() {
            self.submitted.clear();
            self.phase = Phase::Affinity;
        }
        Ok(())
    }

    pub fn submit_affinity(
        &mut self,
        agent: &AgentId,
        scores: BTreeMap<AgentId, Affinity>,
        fallback: Option<String>,
    ) -> Result<(), GameError> {
        self.expect_phase(Phase::Affinity, agent, "an affinity update")?;
        if self.submitted.contains(agent) {
            return Err(GameError::OutOfTurn { agent: agent.clone(), what: "a second affinity update" });
        }
        let mut next = self.affinity.clone();
        for (target, score) in &scores {
            if !self.agents.contains(target) {
                return Err(GameError::Affinity(format!("unknown agent {target}")));
            }
            next.set(agent, target, *score).map_err(GameError::Affinity)?;
        }
        self.affinity = next;
        self.submitted.insert(agent.clone());
        self.emit(EventBody::AffinityUpdate(AffinityUpdate { owner: agent.clone(), scores, fallback }));
        if self.submitted.len() == self.agents.len() {
            self.end_round();
        }
        Ok(())
    }

    fn end_round(&mut self) {
        let values = self.values();
        for (a, v) in &values {
            self.value_trajectory.get_mut(a).expect("known agent").push(*v);
        }
        self.emit(EventBody::RoundEnd(RoundEnd {
            holdings: self.holdings.clone(),
            values: values.clone(),
            affinity: Some(self.affinity.clone()),
        }));
        if self.round >= self.config.rounds {
            self.finish(RunStatus::Completed, None);
        } else {
            self.start_round(self.round + 1);
        }
    }

    fn finish(&mut self, status: RunStatus, error: Option<String>) {
        self.negotiation = None;
        let values = self.values();
        self.emit(EventBody::RunEnd(RunEnd { status, holdings: self.holdings.clone(), values, error }));
        self.phase = Phase::Finished(status);
    }

    /// Aborts the run, keeping the partial log. No-op once finished.
    pub fn fail(&mut self, error: &str) {
        if !self.is_finished() {
            self.finish(RunStatus::Failed, Some(error.to_string()));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::negotiation::units;

    fn game() -> Game {
        let mut cfg = ExperimentConfig::standard();
        cfg.rounds = 1;
        Game::new(cfg, "test", 0, 1, &[])
    }

    fn a(s: &str) -> AgentId {
        AgentId::new(s)
    }

    #[test]
    fn full_round_by_hand() {
        let mut g = game();
        assert_eq!(g.pending(), Pending::Turn(a("alice")));
        g.submit_turn(&a("alice"), true, "offer", vec![AgentAction::propose(&a("bob"), units(&[3, 0, 0]), units(&[0, 3, 0]))], None)
            .unwrap();
        g.submit_turn(&a("bob"), true, "ok", vec![AgentAction::accept(&crate::domain::ProposalId("r1p0".into()))], None).unwrap();
        g.submit_turn(&a("carol"), false, "", vec![], None).unwrap();
        // Carol's pass plus these two make three in a row.
        for who in ["alice", "bob"] {
            g.submit_turn(&a(who), false, "", vec![], None).unwrap();
        }
        assert_eq!(g.pending(), Pending::Allocations(vec![a("alice"), a("bob"), a("carol")]));
        assert_eq!(g.promises().amount(&a("alice"), &a("bob"), 3), units(&[3, 0, 0]));

        let mut send = AllocationDecision::nothing(&a("alice"));
        send.outgoing.insert(a("bob"), units(&[3, 0, 0]));
        assert!(g.submit_allocation(send, false, None).unwrap().is_none());
        g.submit_allocation(AllocationDecision::nothing(&a("bob")), false, None).unwrap();
        let outcome = g.submit_allocation(AllocationDecision::nothing(&a("carol")), false, None).unwrap().unwrap();
        assert_eq!(outcome.breaches.len(), 2);
        assert_eq!(g.holdings()[&a("bob")], units(&[8, 20, 5]));

        for who in ["alice", "bob", "carol"] {
            g.submit_bdi(&a(who), BdiState::default(), None).unwrap();
        }
        for who in ["alice", "bob", "carol"] {
            let row = g.affinity().row(&a(who));
            g.submit_affinity(&a(who), row, None).unwrap();
        }
        assert_eq!(g.pending(), Pending::Finished(RunStatus::Completed));
        validate_events(g.events()).unwrap();
    }

    #[test]
    fn out_of_turn_and_overcommit_are_rejected_without_side_effects() {
        let mut g = game();
        let before = g.events().len();
        assert!(matches!(g.submit_turn(&a("bob"), false, "", vec![], None), Err(GameError::Negotiation(_))));
        assert!(matches!(
            g.submit_allocation(AllocationDecision::nothing(&a("bob")), false, None),
            Err(GameError::OutOfTurn { .. })
        ));
        assert_eq!(g.events().len(), before);
        for _ in 0..3 {
            for who in ["alice", "bob", "carol"] {
                if g.pending() == Pending::Turn(a(who)) {
                    g.submit_turn(&a(who), false, "", vec![], None).unwrap();
                }
            }
        }
        let mut greedy = AllocationDecision::nothing(&a("alice"));
        greedy.outgoing.insert(a("bob"), units(&[100, 0, 0]));
        assert!(matches!(g.submit_allocation(greedy, false, None), Err(GameError::Exchange(ExchangeError::OverCommit { .. }))));
    }

    #[test]
    fn private_events_stay_private() {
        let mut g = game();
        for who in ["alice", "bob", "carol"] {
            g.submit_turn(&a(who), false, "", vec![], None).unwrap();
        }
        let mut d = AllocationDecision::nothing(&a("alice"));
        d.rationale = "secret".into();
        g.submit_allocation(d, false, None).unwrap();
        let leaked = |who: &str| {
            g.memory_of(&a(who)).iter().any(|e| serde_json::to_string(e.as_ref()).unwrap().contains("secret"))
        };
        assert!(leaked("alice"));
        assert!(!leaked("bob"));
        assert!(!leaked("carol"));
    }

    #[test]
    fn failed_run_ends_with_failed_status() {
        let mut g = game();
        g.fail("boom");
        assert_eq!(g.pending(), Pending::Finished(RunStatus::Failed));
        assert!(matches!(g.submit_turn(&a("alice"), false, "", vec![], None), Err(GameError::Finished)));
        validate_events(g.events()).unwrap();
    }
}
