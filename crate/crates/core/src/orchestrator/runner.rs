//! Driving games with policies, and batch experiments on top of that.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::events::{write_log, EventRecord, LogError, RunStatus};
use super::game::{Game, GameError, Pending};
use super::repetition_seed;
use crate::domain::{validate_config, AgentId, Controller, ExperimentConfig};
use crate::exchange::{clamp_allocation, ExchangeError};
use crate::llm::{ChatBackend, UsageTotals};
use crate::policies::{
    fallback_decision, scripted_policy, DecisionKind, LlmPolicy, Policy, PolicyContext, PolicyDecision, PolicyError,
    PromptSet,
};

/// Policy bound to each agent.
pub type Roster = BTreeMap<AgentId, Arc<dyn Policy>>;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("policy failure: {0}")]
    PolicyFailure(String),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Where [`drive`] stopped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepOutcome {
    Finished(RunStatus),
    AwaitingHuman { agent: AgentId, kind: DecisionKind },
}

enum Answer {
    Decision(PolicyDecision, Option<String>),
    Await,
    Abort(String),
}

fn ask(policy: &dyn Policy, kind: DecisionKind, ctx: &PolicyContext) -> Answer {
    match policy.decide(kind, ctx) {
        Ok(d) if d.kind() == kind => Answer::Decision(d, None),
        Ok(d) => Answer::Decision(
            fallback_decision(kind, ctx),
            Some(format!("expected a {kind:?} decision, got {:?}", d.kind())),
        ),
        Err(PolicyError::MalformedDecision(why)) => {
            Answer::Decision(fallback_decision(kind, ctx), Some(format!("malformed decision: {why}")))
        }
        Err(PolicyError::PolicyTimeout) => Answer::Decision(fallback_decision(kind, ctx), Some("policy timed out".into())),
        Err(PolicyError::AwaitingHuman) => Answer::Await,
        Err(e) => Answer::Abort(format!("{} ({}) failed on {kind:?}: {e}", ctx.me(), policy.name())),
    }
}

fn policy_for<'a>(roster: &'a Roster, agent: &AgentId) -> &'a dyn Policy {
    roster.get(agent).map(|p| p.as_ref()).expect("roster covers every agent")
}

/// Advances `game` until it finishes or a human seat has to answer.
///
/// Invalid output from an interactive policy gets one re-prompt with the
/// engine's complaint, then a safe fallback. A scripted policy producing
/// invalid output, or any transport failure, aborts the run with a failed
/// `run_end` event.
pub fn drive(game: &mut Game, roster: &Roster) -> StepOutcome {
    loop {
        let step = match game.pending() {
            Pending::Finished(status) => return StepOutcome::Finished(status),
            Pending::Turn(agent) => drive_turn(game, roster, &agent),
            Pending::Allocations(agents) => fan_out(game, roster, &agents, DecisionKind::Allocation),
            Pending::Bdi(agents) => fan_out(game, roster, &agents, DecisionKind::BdiUpdate),
            Pending::Affinity(agents) => fan_out(game, roster, &agents, DecisionKind::AffinityUpdate),
        };
        match step {
            Ok(None) => {}
            Ok(Some(outcome)) => return outcome,
            Err(reason) => {
                tracing::error!(%reason, "aborting run");
                game.fail(&reason);
            }
        }
    }
}

type Step = Result<Option<StepOutcome>, String>;

fn awaiting(agent: &AgentId, kind: DecisionKind) -> Step {
    Ok(Some(StepOutcome::AwaitingHuman { agent: agent.clone(), kind }))
}

fn context(game: &Game, agent: &AgentId, kind: DecisionKind) -> Result<PolicyContext, String> {
    game.context_for(agent, kind).map_err(|e| e.to_string())
}

fn drive_turn(game: &mut Game, roster: &Roster, agent: &AgentId) -> Step {
    let policy = policy_for(roster, agent);
    let ctx = context(game, agent, DecisionKind::ContinueOrPass)?;
    let (speak, fallback) = match ask(policy, DecisionKind::ContinueOrPass, &ctx) {
        Answer::Await => return awaiting(agent, DecisionKind::TurnReply),
        Answer::Abort(why) => return Err(why),
        Answer::Decision(PolicyDecision::ContinueOrPass(b), fb) => (b, fb),
        Answer::Decision(..) => unreachable!("ask returns the requested kind"),
    };
    if !speak {
        game.submit_turn(agent, false, "", Vec::new(), fallback).map_err(|e| e.to_string())?;
        return Ok(None);
    }

    let mut ctx = context(game, agent, DecisionKind::TurnReply)?;
    let attempts = if policy.interactive() { 2 } else { 1 };
    let mut complaint = String::new();
    for _ in 0..attempts {
        let (utterance, actions, fallback) = match ask(policy, DecisionKind::TurnReply, &ctx) {
            Answer::Await => return awaiting(agent, DecisionKind::TurnReply),
            Answer::Abort(why) => return Err(why),
            Answer::Decision(PolicyDecision::TurnReply { utterance, actions }, fb) => (utterance, actions, fb),
            Answer::Decision(..) => unreachable!("ask returns the requested kind"),
        };
        match game.submit_turn(agent, true, &utterance, actions, fallback) {
            Ok(_) => return Ok(None),
            Err(GameError::Negotiation(e)) => {
                complaint = e.to_string();
                ctx.feedback = Some(complaint.clone());
            }
            Err(e) => return Err(e.to_string()),
        }
    }
    if !policy.interactive() {
        return Err(format!("{agent} ({}) produced an invalid turn: {complaint}", policy.name()));
    }
    game.submit_turn(agent, true, "", Vec::new(), Some(format!("invalid turn: {complaint}")))
        .map_err(|e| e.to_string())?;
    Ok(None)
}

/// Asks every listed agent at once, then submits in roster order so the log
/// does not depend on thread timing.
fn fan_out(game: &mut Game, roster: &Roster, agents: &[AgentId], kind: DecisionKind) -> Step {
    let contexts = agents
        .iter()
        .map(|a| context(game, a, kind).map(|c| (a.clone(), c)))
        .collect::<Result<Vec<_>, _>>()?;
    let parallel = contexts.len() > 1 && agents.iter().any(|a| policy_for(roster, a).interactive());
    let answers: Vec<Answer> = if parallel {
        thread::scope(|s| {
            let handles: Vec<_> = contexts
                .iter()
                .map(|(a, ctx)| {
                    let policy = policy_for(roster, a);
                    s.spawn(move || ask(policy, kind, ctx))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("policy thread panicked")).collect()
        })
    } else {
        contexts.iter().map(|(a, ctx)| ask(policy_for(roster, a), kind, ctx)).collect()
    };

    let mut first_waiting = None;
    for ((agent, ctx), answer) in contexts.into_iter().zip(answers) {
        match answer {
            Answer::Await => {
                first_waiting.get_or_insert(agent);
            }
            Answer::Abort(why) => return Err(why),
            Answer::Decision(decision, fallback) => submit(game, roster, &agent, ctx, decision, fallback)?,
        }
    }
    match first_waiting {
        Some(agent) => awaiting(&agent, kind),
        None => Ok(None),
    }
}

fn submit(
    game: &mut Game,
    roster: &Roster,
    agent: &AgentId,
    mut ctx: PolicyContext,
    decision: PolicyDecision,
    fallback: Option<String>,
) -> Result<(), String> {
    let policy = policy_for(roster, agent);
    match decision {
        PolicyDecision::Allocation(mut d) => {
            d.actor = agent.clone();
            let mut fallback = fallback;
            match game.submit_allocation(d.clone(), false, fallback.clone()) {
                Ok(_) => return Ok(()),
                Err(GameError::Exchange(ExchangeError::OverCommit { .. })) if policy.interactive() => {}
                Err(e) if policy.interactive() => {
                    let fb = Some(format!("invalid allocation: {e}"));
                    let nothing = fallback_decision(DecisionKind::Allocation, &ctx);
                    let PolicyDecision::Allocation(n) = nothing else { unreachable!() };
                    return game.submit_allocation(n, false, fb).map(|_| ()).map_err(|e| e.to_string());
                }
                Err(e) => return Err(format!("{agent} ({}) produced an invalid allocation: {e}", policy.name())),
            }
            // Over-committed: one corrective re-prompt, then proportional clamping.
            let complaint = format!(
                "your allocation sends more than you hold; you hold {}",
                ctx.holdings.display_with(&ctx.resource_labels)
            );
            ctx.feedback = Some(complaint);
            let mut candidate = d;
            match ask(policy, DecisionKind::Allocation, &ctx) {
                Answer::Decision(PolicyDecision::Allocation(mut retry), fb) => {
                    retry.actor = agent.clone();
                    fallback = fb.or(fallback);
                    candidate = retry;
                }
                Answer::Abort(why) => return Err(why),
                _ => {}
            }
            let fits = candidate.total_outgoing(ctx.n()).fits_within(&ctx.holdings);
            let (final_decision, clamped) =
                if fits { (candidate, false) } else { (clamp_allocation(&candidate, &ctx.holdings), true) };
            game.submit_allocation(final_decision, clamped, fallback).map(|_| ()).map_err(|e| e.to_string())
        }
        PolicyDecision::BdiUpdate(mut bdi) => {
            bdi.updated_at_round = ctx.round;
            game.submit_bdi(agent, bdi, fallback).map_err(|e| e.to_string())
        }
        PolicyDecision::AffinityUpdate(scores) => game.submit_affinity(agent, scores, fallback).map_err(|e| e.to_string()),
        other => Err(format!("unexpected {:?} decision during fan-out", other.kind())),
    }
}

/// Plays one repetition to the end.
pub fn run_repetition(config: &ExperimentConfig, run_id: &str, repetition: u32, master_seed: u64, roster: &Roster) -> Game {
    let names: Vec<String> = config.agent_ids().iter().map(|a| policy_for(roster, a).name()).collect();
    let mut game = Game::new(config.clone(), run_id, repetition, repetition_seed(master_seed, repetition), &names);
    drive(&mut game, roster);
    game
}

/// Builds the policies named by each agent's `controller`.
///
/// `backend` is required only when some agent is LLM-controlled. Human seats
/// exist only in interactive sessions.
pub fn build_roster(
    config: &ExperimentConfig,
    backend: Option<Arc<dyn ChatBackend>>,
    prompts: Arc<PromptSet>,
) -> Result<Roster, String> {
    build_roster_with(config, backend, prompts, None)
}

/// Like [`build_roster`], seating `human` wherever the controller is human.
pub fn build_roster_with(
    config: &ExperimentConfig,
    backend: Option<Arc<dyn ChatBackend>>,
    prompts: Arc<PromptSet>,
    human: Option<Arc<dyn Policy>>,
) -> Result<Roster, String> {
    let mut roster = Roster::new();
    for agent in &config.agents {
        let policy: Arc<dyn Policy> = match &agent.controller {
            Controller::Scripted(name) => Arc::new(scripted_policy(name)?),
            Controller::Llm => {
                let backend = backend.clone().ok_or_else(|| format!("{} needs an LLM backend", agent.agent_id))?;
                Arc::new(LlmPolicy::new(backend, prompts.clone(), &config.llm.model_name))
            }
            Controller::Human => match &human {
                Some(h) => h.clone(),
                None => return Err(format!("{} is a human seat; use the session service for those", agent.agent_id)),
            },
        };
        roster.insert(agent.agent_id.clone(), policy);
    }
    Ok(roster)
}

/// Record of one experiment invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    /// The configuration text exactly as it was loaded.
    pub config_snapshot: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub roster: BTreeMap<AgentId, String>,
    pub started_at_unix: u64,
    pub finished_at_unix: u64,
    pub statuses: Vec<RunStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<UsageTotals>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, RunError> {
        fs::create_dir_all(out_dir)?;
        let path = out_dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self).expect("manifest serializes") + "\n")?;
        Ok(path)
    }
}

/// Stable id for a (config text, seed) pair.
pub fn run_id_for(config_snapshot: &str, seed: u64) -> String {
    let digest = Sha256::new().chain_update(config_snapshot.as_bytes()).chain_update(seed.to_le_bytes()).finalize();
    hex::encode(&digest[..8])
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn log_file_name(repetition: u32) -> String {
    format!("events/rep-{repetition:03}.ndjson")
}

/// Runs every repetition and, with `out_dir`, writes one log per repetition
/// plus `manifest.json`.
///
/// Repetitions share nothing but the roster, whose policies hold no game
/// state. They run in parallel when any policy is interactive.
pub fn run_experiment(
    config: &ExperimentConfig,
    config_snapshot: &str,
    seed: u64,
    roster: &Roster,
    out_dir: Option<&Path>,
) -> Result<(RunManifest, Vec<Vec<EventRecord>>), RunError> {
    let report = validate_config(config);
    if !report.is_ok() {
        return Err(RunError::Config(report.violations.join("; ")));
    }
    for id in config.agent_ids() {
        if !roster.contains_key(&id) {
            return Err(RunError::Config(format!("roster has no policy for {id}")));
        }
    }
    let started = unix_now();
    let run_id = run_id_for(config_snapshot, seed);
    let reps: Vec<u32> = (0..config.repetitions).collect();
    let parallel = roster.values().any(|p| p.interactive()) && reps.len() > 1;
    let logs: Vec<Vec<EventRecord>> = if parallel {
        thread::scope(|s| {
            let handles: Vec<_> = reps
                .iter()
                .map(|&r| {
                    let run_id = &run_id;
                    s.spawn(move || run_repetition(config, run_id, r, seed, roster).into_events())
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("repetition thread panicked")).collect()
        })
    } else {
        reps.iter().map(|&r| run_repetition(config, &run_id, r, seed, roster).into_events()).collect()
    };

    let statuses = logs
        .iter()
        .map(|log| match log.last().map(|e| &e.body) {
            Some(super::events::EventBody::RunEnd(end)) => end.status,
            _ => RunStatus::Failed,
        })
        .collect();
    let mut manifest = RunManifest {
        run_id,
        config_snapshot: config_snapshot.to_string(),
        config: config.clone(),
        seed,
        roster: config.agent_ids().into_iter().map(|a| (a.clone(), policy_for(roster, &a).name())).collect(),
        started_at_unix: started,
        finished_at_unix: unix_now(),
        statuses,
        usage: None,
        artifacts: Vec::new(),
    };
    if let Some(dir) = out_dir {
        for (rep, log) in logs.iter().enumerate() {
            let rel = log_file_name(rep as u32);
            let path = dir.join(&rel);
            fs::create_dir_all(path.parent().expect("has parent"))?;
            write_log(&path, log)?;
            manifest.artifacts.push(rel);
        }
        manifest.write(dir)?;
    }
    Ok((manifest, logs))
}
