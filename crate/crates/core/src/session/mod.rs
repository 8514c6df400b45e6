//! Games with one human seat, played through an HTTP API.
//!
//! A [`Session`] owns a [`Game`] and drives the co-players until the human
//! has to act. Mutations are serialized by a per-session mutex; reads return
//! the last published [`StateView`] without touching the game.

mod http;
mod view;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    normalize_labeled, validate_config, Affinity, AgentId, BdiState, Controller, ExperimentConfig, InitialAllocation,
};
use crate::exchange::{AllocationDecision, ExchangeError};
use crate::llm::ChatBackend;
use crate::orchestrator::events::{write_log, EventRecord};
use crate::orchestrator::runner::build_roster_with;
use crate::orchestrator::{drive, repetition_seed, Game, Pending, Roster, StepOutcome};
use crate::policies::{
    fallback_decision, validate_actions, ActionDto, DecisionKind, HumanBridge, Policy, PolicyContext, PolicyDecision,
    PolicyError, PromptSet,
};
use crate::scoring::points;

pub use http::{router, serve};
pub use view::{SessionPhase, SessionResult, StateView};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("no session {0}")]
    UnknownSession(String),
    #[error("invalid preset: {0}")]
    InvalidPreset(String),
    #[error("session is in phase {actual:?}, not {expected:?}")]
    WrongPhase { expected: SessionPhase, actual: SessionPhase },
    #[error("it is {owner}'s turn")]
    NotYourTurn { owner: AgentId },
    #[error("{message}")]
    OverCommit { message: String, holdings: BTreeMap<String, u64> },
    #[error("invalid affinity score: {0}")]
    InvalidScore(String),
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("session has not finished")]
    SessionNotFinished,
    #[error("engine error: {0}")]
    Engine(String),
}

impl SessionError {
    /// Stable machine-readable code for API clients.
    pub fn code(&self) -> &'static str {
        match self {
            SessionError::UnknownSession(_) => "UnknownSession",
            SessionError::InvalidPreset(_) => "InvalidPreset",
            SessionError::WrongPhase { .. } => "WrongPhase",
            SessionError::NotYourTurn { .. } => "NotYourTurn",
            SessionError::OverCommit { .. } => "OverCommit",
            SessionError::InvalidScore(_) => "InvalidScore",
            SessionError::InvalidAction(_) => "InvalidAction",
            SessionError::SessionNotFinished => "SessionNotFinished",
            SessionError::Engine(_) => "EngineError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Specialized-only start, two honest co-players, ten rounds.
    #[default]
    HumanStudy,
    /// Co-players that withhold every promise in one round; twenty rounds.
    TrustViolation,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionOptions {
    #[serde(default)]
    pub preset: Preset,
    pub rounds: Option<u32>,
    /// Round in which trust-violation co-players withhold (default 10).
    pub violation_round: Option<u32>,
    /// Controllers for the non-human seats, in agent order.
    pub co_players: Option<Vec<Controller>>,
    /// Controllers for every seat; overrides `co_players` and `human_seat`.
    pub controllers: Option<Vec<Controller>>,
    /// Agent id of the human seat (default: the last agent).
    pub human_seat: Option<String>,
    pub seed: Option<u64>,
    /// Replaces the human's starting holdings, keyed by resource label.
    pub initial_holdings: Option<BTreeMap<String, i64>>,
    /// Seconds the human has per step before a pass / empty allocation /
    /// unchanged affinity is submitted for them.
    pub turn_timeout_secs: Option<u64>,
}

/// Builds the game configuration for a session; the result has exactly one
/// human seat and passes validation.
pub fn preset_config(opts: &SessionOptions) -> Result<(ExperimentConfig, AgentId), SessionError> {
    let bad = |m: String| SessionError::InvalidPreset(m);
    let mut cfg = ExperimentConfig::standard();
    cfg.initial_allocation = InitialAllocation::SpecializedOnly;
    cfg.repetitions = 1;
    let default_co = match opts.preset {
        Preset::HumanStudy => {
            cfg.rounds = 10;
            Controller::Scripted("honest-reciprocator".into())
        }
        Preset::TrustViolation => {
            cfg.rounds = 20;
            Controller::Scripted(format!("trust-violator:{}", opts.violation_round.unwrap_or(10)))
        }
    };
    if let Some(t) = opts.rounds {
        cfg.rounds = t;
    }
    if let Some(k) = opts.violation_round {
        if opts.preset != Preset::TrustViolation {
            return Err(bad("violation_round only applies to the trust-violation preset".into()));
        }
        if k == 0 || k > cfg.rounds {
            return Err(bad(format!("violation round {k} is outside 1..={}", cfg.rounds)));
        }
    }
    let ids = cfg.agent_ids();
    let controllers = match (&opts.controllers, &opts.co_players) {
        (Some(all), _) => {
            if all.len() != ids.len() {
                return Err(bad(format!("{} controllers for {} seats", all.len(), ids.len())));
            }
            all.clone()
        }
        (None, co) => {
            let seat = match &opts.human_seat {
                Some(s) => ids.iter().position(|a| a.as_str() == s).ok_or_else(|| bad(format!("no seat {s}")))?,
                None => ids.len() - 1,
            };
            let co = co.clone().unwrap_or_else(|| vec![default_co.clone(); ids.len() - 1]);
            if co.len() != ids.len() - 1 {
                return Err(bad(format!("{} co-players for {} seats", co.len(), ids.len() - 1)));
            }
            let mut co = co.into_iter();
            (0..ids.len()).map(|i| if i == seat { Controller::Human } else { co.next().expect("counted") }).collect()
        }
    };
    let humans: Vec<usize> = (0..controllers.len()).filter(|&i| controllers[i] == Controller::Human).collect();
    if humans.len() != 1 {
        return Err(bad(format!("a session needs exactly one human seat, got {}", humans.len())));
    }
    cfg.set_controllers(&controllers);
    cfg.apply_initial_allocation();
    let human = ids[humans[0]].clone();
    if let Some(h) = &opts.initial_holdings {
        let v = normalize_labeled(h, &cfg.resource_labels).map_err(|e| bad(format!("initial_holdings: {e}")))?;
        cfg.agents[humans[0]].initial_holdings = v;
    }
    let report = validate_config(&cfg);
    if !report.is_ok() {
        return Err(bad(report.to_string()));
    }
    Ok((cfg, human))
}

/// The human seat: answers come from the API; BDI is not collected from
/// participants and is filled in from the holdings.
struct HumanSeat {
    bridge: HumanBridge,
}

impl Policy for HumanSeat {
    fn name(&self) -> String {
        "human".into()
    }

    fn interactive(&self) -> bool {
        true
    }

    fn decide(&self, kind: DecisionKind, ctx: &PolicyContext) -> Result<PolicyDecision, PolicyError> {
        if kind == DecisionKind::BdiUpdate {
            return Ok(PolicyDecision::BdiUpdate(human_bdi(ctx)));
        }
        self.bridge.decide(kind, ctx)
    }
}

fn human_bdi(ctx: &PolicyContext) -> BdiState {
    let holdings = ctx
        .latest_outcome
        .as_ref()
        .and_then(|o| o.holdings_after.get(ctx.me()).cloned())
        .unwrap_or_else(|| ctx.holdings.clone());
    BdiState {
        beliefs: format!(
            "Holding {} worth {} points.",
            holdings.display_with(&ctx.resource_labels),
            points(&holdings, &ctx.coefficients)
        ),
        desires: "Not collected from human participants.".into(),
        intentions: "Not collected from human participants.".into(),
        updated_at_round: ctx.round,
    }
}

struct Inner {
    game: Game,
    roster: Roster,
    seat: Arc<HumanSeat>,
    timeout: Option<Duration>,
    deadline: Option<(Instant, u64)>,
}

pub struct Session {
    id: String,
    human: AgentId,
    inner: Mutex<Inner>,
    view: RwLock<Arc<StateView>>,
    journal: Option<PathBuf>,
}

fn unix_ms(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl Session {
    #[allow(clippy::too_many_arguments)]
    fn new(
        id: String,
        config: ExperimentConfig,
        human: AgentId,
        seed: u64,
        timeout: Option<Duration>,
        backend: Option<Arc<dyn ChatBackend>>,
        prompts: Arc<PromptSet>,
        journal: Option<PathBuf>,
    ) -> Result<Self, SessionError> {
        let seat = Arc::new(HumanSeat { bridge: HumanBridge::new() });
        let roster = build_roster_with(&config, backend, prompts, Some(seat.clone() as Arc<dyn Policy>))
            .map_err(SessionError::InvalidPreset)?;
        let names: Vec<String> = config.agent_ids().iter().map(|a| roster[a].name()).collect();
        let game = Game::new(config, &id, 0, repetition_seed(seed, 0), &names);
        let view = view::build(&id, &human, &game, None);
        let session = Self {
            id,
            human,
            inner: Mutex::new(Inner { game, roster, seat, timeout, deadline: None }),
            view: RwLock::new(Arc::new(view)),
            journal,
        };
        {
            let mut inner = session.lock();
            session.advance(&mut inner);
        }
        Ok(session)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn human(&self) -> &AgentId {
        &self.human
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Last published view; never blocks on a running co-player step.
    pub fn state(&self) -> Arc<StateView> {
        self.view.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn publish(&self, inner: &Inner) -> Arc<StateView> {
        let view = Arc::new(view::build(&self.id, &self.human, &inner.game, inner.deadline.map(|d| d.1)));
        *self.view.write().unwrap_or_else(|p| p.into_inner()) = view.clone();
        view
    }

    /// Runs co-players until the human is needed again, then republishes.
    fn advance(&self, inner: &mut Inner) -> Arc<StateView> {
        inner.deadline = None;
        self.publish(inner);
        let outcome = drive(&mut inner.game, &inner.roster);
        inner.seat.bridge.clear();
        if let (StepOutcome::AwaitingHuman { .. }, Some(t)) = (&outcome, inner.timeout) {
            inner.deadline = Some((Instant::now() + t, unix_ms(SystemTime::now() + t)));
        }
        if let Some(path) = &self.journal {
            if let Err(e) = write_log(path, inner.game.events()) {
                tracing::warn!(session = %self.id, error = %e, "cannot write session journal");
            }
        }
        self.publish(inner)
    }

    pub fn submit_turn(&self, utterance: &str, actions: &[ActionDto]) -> Result<Arc<StateView>, SessionError> {
        let mut inner = self.lock();
        match inner.game.pending() {
            Pending::Turn(a) if a == self.human => {}
            Pending::Turn(owner) => return Err(SessionError::NotYourTurn { owner }),
            other => return Err(SessionError::WrongPhase { expected: SessionPhase::AwaitingTurn, actual: view::phase(&other) }),
        }
        let labels = inner.game.config().resource_labels.clone();
        let actions = actions
            .iter()
            .map(|a| a.to_action(&labels))
            .collect::<Result<Vec<_>, _>>()
            .map_err(SessionError::InvalidAction)?;
        let ctx = inner
            .game
            .context_for(&self.human, DecisionKind::TurnReply)
            .map_err(|e| SessionError::Engine(e.to_string()))?;
        validate_actions(&actions, &ctx).map_err(SessionError::InvalidAction)?;
        let mut trial = inner.game.negotiation().expect("turn pending").clone();
        trial.apply_turn(&self.human, &actions, utterance).map_err(|e| SessionError::InvalidAction(e.to_string()))?;

        let skip = actions.iter().all(|a| a.is_pass()) && utterance.trim().is_empty();
        let decision = if skip {
            PolicyDecision::ContinueOrPass(false)
        } else {
            PolicyDecision::TurnReply { utterance: utterance.to_string(), actions }
        };
        inner.seat.bridge.submit(decision);
        Ok(self.advance(&mut inner))
    }

    pub fn submit_allocation(
        &self,
        outgoing: &BTreeMap<String, BTreeMap<String, i64>>,
        rationale: Option<String>,
    ) -> Result<Arc<StateView>, SessionError> {
        let mut inner = self.lock();
        match inner.game.pending() {
            Pending::Allocations(waiting) if waiting.contains(&self.human) => {}
            other => {
                return Err(SessionError::WrongPhase { expected: SessionPhase::AwaitingAllocation, actual: view::phase(&other) })
            }
        }
        let cfg = inner.game.config();
        let mut decision = AllocationDecision::nothing(&self.human);
        decision.rationale = rationale.unwrap_or_default();
        for (to, units) in outgoing {
            let v = normalize_labeled(units, &cfg.resource_labels)
                .map_err(|e| SessionError::InvalidAction(format!("allocation to {to}: {e}")))?;
            if !v.is_zero() {
                decision.outgoing.insert(AgentId::new(to.as_str()), v);
            }
        }
        let holdings = inner.game.holdings()[&self.human].clone();
        let everyone = inner.game.agents().iter().cloned().collect();
        match decision.validate(&holdings, &everyone) {
            Ok(()) => {}
            Err(e @ ExchangeError::OverCommit { .. }) => {
                return Err(SessionError::OverCommit {
                    message: e.to_string(),
                    holdings: holdings.to_label_map(&cfg.resource_labels),
                })
            }
            Err(e) => return Err(SessionError::InvalidAction(e.to_string())),
        }
        inner.seat.bridge.submit(PolicyDecision::Allocation(decision));
        Ok(self.advance(&mut inner))
    }

    pub fn submit_affinity(&self, scores: &BTreeMap<String, i64>) -> Result<Arc<StateView>, SessionError> {
        let mut inner = self.lock();
        match inner.game.pending() {
            Pending::Affinity(waiting) if waiting.contains(&self.human) => {}
            other => {
                return Err(SessionError::WrongPhase { expected: SessionPhase::AwaitingAffinity, actual: view::phase(&other) })
            }
        }
        let mut parsed = BTreeMap::new();
        for (target, &score) in scores {
            let id = AgentId::new(target.as_str());
            if id == self.human || !inner.game.agents().contains(&id) {
                return Err(SessionError::InvalidScore(format!("cannot rate {target}")));
            }
            let s = u8::try_from(score)
                .ok()
                .and_then(|s| Affinity::new(s).ok())
                .ok_or_else(|| SessionError::InvalidScore(format!("{target}: {score} is outside 1..=5")))?;
            parsed.insert(id, s);
        }
        inner.seat.bridge.submit(PolicyDecision::AffinityUpdate(parsed));
        Ok(self.advance(&mut inner))
    }

    /// Submits the timeout fallback if the human's deadline has passed.
    pub fn expire_if_due(&self, now: Instant) -> bool {
        let mut inner = self.lock();
        match inner.deadline {
            Some((due, _)) if due <= now => {}
            _ => return false,
        }
        let why = Some("human response timed out".to_string());
        let human = self.human.clone();
        let result = match inner.game.pending() {
            Pending::Turn(a) if a == human => inner.game.submit_turn(&human, false, "", Vec::new(), why).map(|_| ()),
            Pending::Allocations(w) if w.contains(&human) => {
                inner.game.submit_allocation(AllocationDecision::nothing(&human), false, why).map(|_| ())
            }
            Pending::Affinity(w) if w.contains(&human) => {
                let ctx = inner.game.context_for(&human, DecisionKind::AffinityUpdate);
                match ctx.map(|c| fallback_decision(DecisionKind::AffinityUpdate, &c)) {
                    Ok(PolicyDecision::AffinityUpdate(scores)) => inner.game.submit_affinity(&human, scores, why),
                    Ok(_) => unreachable!("affinity fallback"),
                    Err(e) => Err(e),
                }
            }
            _ => Ok(()),
        };
        if let Err(e) = result {
            inner.game.fail(&format!("timeout fallback failed: {e}"));
        }
        self.advance(&mut inner);
        true
    }

    pub fn result(&self) -> Result<SessionResult, SessionError> {
        let inner = self.lock();
        if !inner.game.is_finished() {
            return Err(SessionError::SessionNotFinished);
        }
        Ok(view::result(&self.id, &self.human, &inner.game))
    }

    /// The full, unredacted event log (for journaling and analysis).
    pub fn events(&self) -> Vec<EventRecord> {
        self.lock().game.events().to_vec()
    }
}

/// All live sessions.
pub struct SessionManager {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    backend: Option<Arc<dyn ChatBackend>>,
    prompts: Arc<PromptSet>,
    journal_dir: Option<PathBuf>,
}

impl Default for SessionManager {
    fn default() -> Self {
        Self::new()
    }
}

impl SessionManager {
    pub fn new() -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            backend: None,
            prompts: Arc::new(PromptSet::builtin()),
            journal_dir: None,
        }
    }

    /// Enables LLM co-players.
    pub fn with_backend(mut self, backend: Arc<dyn ChatBackend>, prompts: Arc<PromptSet>) -> Self {
        self.backend = Some(backend);
        self.prompts = prompts;
        self
    }

    /// Writes each session's event log to `<dir>/<session_id>.ndjson`.
    pub fn with_journal_dir(mut self, dir: PathBuf) -> Self {
        self.journal_dir = Some(dir);
        self
    }

    pub fn create_session(&self, opts: &SessionOptions) -> Result<Arc<Session>, SessionError> {
        let (config, human) = preset_config(opts)?;
        let seed = opts.seed.unwrap_or_else(rand::random);
        let id = format!("s-{:016x}", rand::random::<u64>());
        let journal = self.journal_dir.as_ref().map(|d| d.join(format!("{id}.ndjson")));
        let timeout = opts.turn_timeout_secs.map(Duration::from_secs);
        let session =
            Arc::new(Session::new(id.clone(), config, human, seed, timeout, self.backend.clone(), self.prompts.clone(), journal)?);
        self.sessions.write().unwrap_or_else(|p| p.into_inner()).insert(id, session.clone());
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, SessionError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::UnknownSession(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies timeout fallbacks; returns how many sessions moved.
    pub fn sweep(&self, now: Instant) -> usize {
        let all: Vec<_> = self.sessions.read().unwrap_or_else(|p| p.into_inner()).values().cloned().collect();
        all.iter().filter(|s| s.expire_if_due(now)).count()
    }
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session").field("id", &self.id).field("human", &self.human).finish()
    }
}
