//! Invariant checkers shared by the integration tests and the acceptance run.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use sociex::domain::{ProposalId, ProposalStatus};
use sociex::exchange::Holdings;
use sociex::negotiation::{ActionKind, AgentAction, CloseReason, NegotiationState};
use sociex::orchestrator::{EventBody, EventRecord, RunStatus};
use sociex::{AgentId, ExperimentConfig, ResourceVector};

pub const AGENTS: [&str; 3] = ["alice", "bob", "carol"];

fn per_type(h: &Holdings, n: usize) -> Vec<u64> {
    let mut t = vec![0; n];
    for v in h.values() {
        for (i, u) in v.units().iter().enumerate() {
            t[i] += u;
        }
    }
    t
}

/// Walks one log, checking every exchange conserves per-type totals and
/// every injection adds exactly S units of each agent's specialization.
pub fn check_conservation(cfg: &ExperimentConfig, log: &[EventRecord]) -> Result<(), String> {
    let n = cfg.num_resource_types();
    let s = cfg.injection_per_round;
    let mut expected_injection = vec![0u64; n];
    for a in &cfg.agents {
        expected_injection[a.specialization] += s;
    }
    let EventBody::RunStart(start) = &log[0].body else { return Err("no run_start".into()) };
    let mut totals = per_type(&start.holdings, n);
    let mut injections = 0;
    for e in log {
        match &e.body {
            EventBody::Injection(inj) => {
                for a in &cfg.agents {
                    let got = &inj.amounts[&a.agent_id];
                    if got.total() != s || got.get(a.specialization) != s {
                        return Err(format!("round {}: {} injected {:?}", e.round, a.agent_id, got));
                    }
                }
                let after = per_type(&inj.holdings_after, n);
                let want: Vec<u64> = totals.iter().zip(&expected_injection).map(|(t, x)| t + x).collect();
                if after != want {
                    return Err(format!("round {}: injection totals {after:?}, want {want:?}", e.round));
                }
                totals = after;
                injections += 1;
            }
            EventBody::ExchangeResolved(o) => {
                let before = per_type(&o.holdings_before, n);
                let after = per_type(&o.holdings_after, n);
                if before != totals || after != totals {
                    return Err(format!("round {}: exchange moved totals {before:?} -> {after:?} (had {totals:?})", e.round));
                }
            }
            EventBody::RunEnd(end) => {
                if end.status != RunStatus::Completed {
                    return Err(format!("run failed: {:?}", end.error));
                }
                if per_type(&end.holdings, n) != totals {
                    return Err("final holdings disagree with running totals".into());
                }
            }
            _ => {}
        }
    }
    if injections != cfg.rounds {
        return Err(format!("{injections} injections for {} rounds", cfg.rounds));
    }
    Ok(())
}

fn random_vector(rng: &mut ChaCha8Rng) -> ResourceVector {
    ResourceVector::from_units((0..3).map(|_| if rng.random_bool(0.5) { rng.random_range(0..6) } else { 0 }).collect())
}

/// Mostly plausible actions with some invalid ones mixed in: unknown ids,
/// self-trades, empty trades.
pub fn random_action(rng: &mut ChaCha8Rng, state: &NegotiationState) -> AgentAction {
    let known: Vec<ProposalId> = state.proposals.iter().map(|p| p.proposal_id.clone()).collect();
    let pick_id = |rng: &mut ChaCha8Rng| {
        if known.is_empty() || rng.random_bool(0.1) {
            ProposalId::new(state.round, rng.random_range(0..20))
        } else {
            known[rng.random_range(0..known.len())].clone()
        }
    };
    match rng.random_range(0..10) {
        0..=3 => {
            let to = AgentId::new(AGENTS[rng.random_range(0..3)]);
            AgentAction::propose(&to, random_vector(rng), random_vector(rng))
        }
        4..=5 => AgentAction::accept(&pick_id(rng)),
        6 => AgentAction::reject(&pick_id(rng)),
        _ => AgentAction::new(ActionKind::Pass),
    }
}

/// Drives one phase with random turns to close. Returns the close reason and
/// how many submitted turns were refused.
pub fn fuzz_phase(rng: &mut ChaCha8Rng, round: u32) -> Result<(CloseReason, usize), String> {
    let ids: Vec<AgentId> = AGENTS.iter().map(|a| AgentId::new(*a)).collect();
    let mut state = NegotiationState::open_phase(round, &ids, 3, 3).map_err(|e| e.to_string())?;
    let mut applied = 0;
    let mut refused = 0;
    while !state.is_closed() {
        if applied >= 9 {
            return Err(format!("still open after {applied} turns"));
        }
        let actor = state.current_actor().ok_or("open phase without an actor")?.clone();
        let n = rng.random_range(0..4);
        let actions: Vec<AgentAction> = (0..n).map(|_| random_action(rng, &state)).collect();
        let before = state.clone();
        if state.apply_turn(&actor, &actions, "").is_err() {
            // A refused turn must leave no trace; the agent then passes.
            if state != before {
                return Err("refused turn changed the state".into());
            }
            refused += 1;
            state.apply_turn(&actor, &[], "").map_err(|e| e.to_string())?;
        }
        applied += 1;
    }
    if state.proposals.iter().any(|p| p.status == ProposalStatus::Pending) {
        return Err("pending proposal survived close".into());
    }
    let promised = state.accepted_deals().map_err(|e| e.to_string())?;
    let accepted = state.proposals.iter().filter(|p| p.status == ProposalStatus::Accepted).count();
    if promised.is_empty() != (accepted == 0) {
        return Err("promises disagree with accepted proposals".into());
    }
    state.close_reason.ok_or_else(|| "closed without a reason".into()).map(|r| (r, refused))
}
