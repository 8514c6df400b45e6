//! Rebuilding a run's state from its event log alone.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::events::{read_log, validate_events, EventBody, EventRecord, LogError};
use super::game::GameSnapshot;
use crate::domain::{AgentId, BdiState, ValueCoefficients};
use crate::exchange::Holdings;
use crate::scoring::points;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("event {seq}: {detail}")]
    SnapshotMismatch { seq: u64, detail: String },
}

fn mismatch(seq: u64, detail: impl Into<String>) -> ReplayError {
    ReplayError::SnapshotMismatch { seq, detail: detail.into() }
}

fn values_of(holdings: &Holdings, coefficients: &ValueCoefficients) -> BTreeMap<AgentId, u64> {
    holdings.iter().map(|(a, h)| (a.clone(), points(h, coefficients))).collect()
}

pub fn replay(path: &Path) -> Result<GameSnapshot, ReplayError> {
    replay_events(&read_log(path)?)
}

/// Re-derives holdings, values, affinity and BDI from the events, checking
/// every logged snapshot along the way.
pub fn replay_events(events: &[EventRecord]) -> Result<GameSnapshot, ReplayError> {
    validate_events(events)?;
    let EventBody::RunStart(start) = &events[0].body else { unreachable!("validated") };
    let coefficients = start.config.value_coefficients.clone();
    let mut snap = GameSnapshot {
        round: 0,
        status: None,
        holdings: start.holdings.clone(),
        values: values_of(&start.holdings, &coefficients),
        affinity: start.affinity.clone(),
        bdi: start.config.agent_ids().into_iter().map(|a| (a, BdiState::default())).collect(),
        value_trajectory: start.config.agent_ids().into_iter().map(|a| (a, Vec::new())).collect(),
    };
    let mut promises = None;
    let mut allocations = BTreeMap::new();

    for e in &events[1..] {
        snap.round = e.round;
        match &e.body {
            EventBody::RunStart(_) => return Err(mismatch(e.seq, "second run_start")),
            EventBody::RoundStart(_) | EventBody::Turn(_) | EventBody::ProposalStatus(_) => {}
            EventBody::Injection(inj) => {
                for (agent, amount) in &inj.amounts {
                    let h = snap.holdings.get_mut(agent).ok_or_else(|| mismatch(e.seq, format!("unknown agent {agent}")))?;
                    h.add_assign(amount);
                }
                if snap.holdings != inj.holdings_after {
                    return Err(mismatch(e.seq, "holdings after injection differ"));
                }
                allocations.clear();
            }
            EventBody::NegotiationClosed(c) => promises = Some(c.promises.clone()),
            EventBody::AllocationSubmitted(a) => {
                if let Some(out) = &a.outgoing {
                    allocations.insert(a.actor.clone(), out.clone());
                }
            }
            EventBody::ExchangeResolved(o) => {
                if o.holdings_before != snap.holdings {
                    return Err(mismatch(e.seq, "pre-exchange holdings differ"));
                }
                if promises.as_ref() != Some(&o.promised) {
                    return Err(mismatch(e.seq, "promises differ from the closed negotiation"));
                }
                let mut next = snap.holdings.clone();
                for (from, to, units) in o.delivered.entries() {
                    if let Some(sent) = allocations.get(from) {
                        if sent.get(to) != Some(units) {
                            return Err(mismatch(e.seq, format!("{from} → {to} delivery differs from its allocation")));
                        }
                    }
                    let giver = next.get_mut(from).ok_or_else(|| mismatch(e.seq, format!("unknown agent {from}")))?;
                    *giver = giver
                        .checked_sub(units)
                        .ok_or_else(|| mismatch(e.seq, format!("{from} sends more than it holds")))?;
                    next.get_mut(to).ok_or_else(|| mismatch(e.seq, format!("unknown agent {to}")))?.add_assign(units);
                }
                if next != o.holdings_after {
                    return Err(mismatch(e.seq, "post-exchange holdings differ"));
                }
                if values_of(&next, &coefficients) != o.holding_values_after {
                    return Err(mismatch(e.seq, "post-exchange values differ"));
                }
                snap.holdings = next;
            }
            EventBody::BdiUpdate(b) => {
                snap.bdi.insert(b.owner.clone(), b.bdi.clone());
            }
            EventBody::AffinityUpdate(a) => {
                for (target, score) in &a.scores {
                    snap.affinity.set(&a.owner, target, *score).map_err(|d| mismatch(e.seq, d))?;
                }
            }
            EventBody::RoundEnd(r) => {
                let values = values_of(&snap.holdings, &coefficients);
                if r.holdings != snap.holdings || r.values != values {
                    return Err(mismatch(e.seq, "round-end holdings or values differ"));
                }
                if r.affinity.as_ref().is_some_and(|a| a != &snap.affinity) {
                    return Err(mismatch(e.seq, "round-end affinity differs"));
                }
                for (a, v) in values {
                    snap.value_trajectory.entry(a).or_default().push(v);
                }
                promises = None;
            }
            EventBody::RunEnd(end) => {
                if end.holdings != snap.holdings || end.values != values_of(&snap.holdings, &coefficients) {
                    return Err(mismatch(e.seq, "final holdings or values differ"));
                }
                snap.status = Some(end.status);
            }
        }
    }
    snap.values = values_of(&snap.holdings, &coefficients);
    Ok(snap)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::domain::ExperimentConfig;
    use crate::orchestrator::runner::{run_repetition, Roster};
    use crate::policies::{scripted_policy, Policy};

    fn game_events() -> (crate::orchestrator::Game, Vec<EventRecord>) {
        let cfg = ExperimentConfig::standard();
        let roster: Roster = cfg
            .agent_ids()
            .into_iter()
            .zip(["tit-for-tat", "proself-defector", "random-trader"])
            .map(|(a, n)| (a, Arc::new(scripted_policy(n).unwrap()) as Arc<dyn Policy>))
            .collect();
        let g = run_repetition(&cfg, "r", 0, 9, &roster);
        let ev = g.events().to_vec();
        (g, ev)
    }

    #[test]
    fn replay_matches_live_snapshot() {
        let (g, ev) = game_events();
        assert_eq!(replay_events(&ev).unwrap(), g.snapshot());
    }

    #[test]
    fn tampered_holdings_are_caught() {
        let (_, mut ev) = game_events();
        let idx = ev.iter().position(|e| matches!(e.body, EventBody::RoundEnd(_))).unwrap();
        if let EventBody::RoundEnd(r) = &mut ev[idx].body {
            let h = r.holdings.values_mut().next().unwrap();
            h.set(0, h.get(0) + 1);
        }
        assert!(matches!(replay_events(&ev), Err(ReplayError::SnapshotMismatch { .. })));
    }

    #[test]
    fn truncation_and_shuffling() {
        let (_, ev) = game_events();
        assert!(matches!(replay_events(&ev[..ev.len() - 5]), Err(ReplayError::Log(LogError::CorruptLog { .. }))));
        let mut shuffled = ev.clone();
        shuffled.swap(3, 4);
        assert!(matches!(replay_events(&shuffled), Err(ReplayError::Log(LogError::SchemaMismatch { .. }))));
    }
}
