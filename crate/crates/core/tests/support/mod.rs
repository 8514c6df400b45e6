//! Shared fixtures: hand-built logs, scripted rosters and a brute-force
//! scoring oracle.
#![allow(dead_code)]

pub mod invariants;
pub mod mock_llm;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use sociex::domain::{Affinity, AffinityLedger};
use sociex::exchange::RoundOutcome;
use sociex::ledger::PairLedger;
use sociex::orchestrator::events::RunStart;
use sociex::orchestrator::runner::{build_roster, Roster};
use sociex::orchestrator::{EventBody, EventRecord, SCHEMA_VERSION};
use sociex::policies::PromptSet;
use sociex::scoring::BreachRecord;
use sociex::{AgentId, ExperimentConfig, ResourceVector};

pub fn id(s: &str) -> AgentId {
    AgentId::new(s)
}

pub fn v(u: &[u64]) -> ResourceVector {
    ResourceVector::from_units(u.to_vec())
}

pub struct LogBuilder {
    pub events: Vec<EventRecord>,
    pub round: u32,
}

impl LogBuilder {
    pub fn new(config: ExperimentConfig, repetition: u32) -> Self {
        let ids = config.agent_ids();
        let holdings = config.agents.iter().map(|a| (a.agent_id.clone(), a.initial_holdings.clone())).collect();
        let mut b = Self { events: Vec::new(), round: 0 };
        b.push_rep(
            repetition,
            EventBody::RunStart(RunStart {
                config,
                seed: 0,
                roster: Vec::new(),
                holdings,
                affinity: AffinityLedger::uniform(&ids, Affinity::NEUTRAL),
            }),
        );
        b
    }

    pub fn push_rep(&mut self, repetition: u32, body: EventBody) {
        let seq = self.events.len() as u64;
        self.events.push(EventRecord {
            schema_version: SCHEMA_VERSION,
            run_id: "fixture".into(),
            repetition,
            round: self.round,
            seq,
            body,
        });
    }

    pub fn push(&mut self, body: EventBody) {
        let rep = self.events[0].repetition;
        self.push_rep(rep, body);
    }

    pub fn outcome(&mut self, round: u32, deliveries: &[(&str, &str, &[u64])], breaches: Vec<BreachRecord>) {
        self.round = round;
        let mut delivered = PairLedger::new();
        for (from, to, u) in deliveries {
            delivered.add(&id(from), &id(to), &v(u));
        }
        self.push(EventBody::ExchangeResolved(RoundOutcome {
            round,
            promised: PairLedger::new(),
            delivered,
            breaches,
            holdings_before: BTreeMap::new(),
            holdings_after: BTreeMap::new(),
            holding_values_after: BTreeMap::new(),
        }));
    }
}


/// Best score over every way of splitting a holding into sets of distinct
/// types, where a set of `k` types scores `r[k-1]`. Exhaustive; the memo is
/// kept across calls so sweeping a grid stays cheap.
pub struct Packer {
    r: Vec<u64>,
    memo: HashMap<Vec<u64>, u64>,
}

impl Packer {
    pub fn new(r: &[u64]) -> Self {
        Self { r: r.to_vec(), memo: HashMap::new() }
    }

    pub fn points(&mut self, holding: &[u64]) -> u64 {
        let mut h = holding.to_vec();
        self.go(&mut h)
    }

    fn go(&mut self, h: &mut Vec<u64>) -> u64 {
        if h.iter().all(|&x| x == 0) {
            return 0;
        }
        if let Some(&v) = self.memo.get(h.as_slice()) {
            return v;
        }
        let n = h.len();
        let mut best = 0;
        for mask in 1u32..(1 << n) {
            let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            if members.iter().any(|&i| h[i] == 0) {
                continue;
            }
            for &i in &members {
                h[i] -= 1;
            }
            best = best.max(self.r[members.len() - 1] + self.go(h));
            for &i in &members {
                h[i] += 1;
            }
        }
        self.memo.insert(h.clone(), best);
        best
    }
}

pub fn brute_force_points(holding: &[u64], r: &[u64]) -> u64 {
    Packer::new(r).points(holding)
}

pub fn roster_for(config: &ExperimentConfig) -> Roster {
    build_roster(config, None, Arc::new(PromptSet::builtin())).expect("scripted roster")
}

/// Standard society with the given scripted policies, one repetition.
pub fn scripted_config(policies: &[&str], rounds: u32) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::standard();
    cfg.rounds = rounds;
    cfg.repetitions = 1;
    for (agent, p) in cfg.agents.iter_mut().zip(policies) {
        agent.controller = format!("scripted:{p}").parse().unwrap();
    }
    cfg
}

pub fn workspace_file(rel: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

/// Checks the trust-violation shape on one log: the violator breaks every
/// promise in full at `violation_round` and never otherwise, both victims
/// send it nothing the round after, and someone resumes by `recover_by`.
pub fn check_trust_violation(
    log: &[EventRecord],
    violator: &str,
    violation_round: u32,
    recover_by: u32,
) -> Result<(), String> {
    let violator = id(violator);
    let mut full_breaches = 0;
    let mut to_violator: BTreeMap<u32, u64> = BTreeMap::new();
    let mut victims = Vec::new();
    for e in log {
        let EventBody::ExchangeResolved(o) = &e.body else { continue };
        for b in o.breaches.iter().filter(|b| b.debtor == violator) {
            if b.round != violation_round && b.signed_breach > 0 {
                return Err(format!("violator short by {} in round {}", b.signed_breach, b.round));
            }
            if b.round == violation_round {
                if b.delivered.total() != 0 || b.signed_breach != b.promised.total() as i64 {
                    return Err(format!("partial breach in round {}: {:?}", b.round, b));
                }
                full_breaches += 1;
                if !victims.contains(&b.creditor) {
                    victims.push(b.creditor.clone());
                }
            }
        }
        for (from, to, units) in o.delivered.entries() {
            if *to == violator && *from != violator {
                *to_violator.entry(o.round).or_default() += units.total();
            }
        }
    }
    if full_breaches == 0 {
        return Err(format!("no breach by the violator in round {violation_round}"));
    }
    let after = to_violator.get(&(violation_round + 1)).copied().unwrap_or(0);
    if after != 0 {
        return Err(format!("victims still sent {after} units in round {}", violation_round + 1));
    }
    let resumed = (violation_round + 2..=recover_by).any(|r| to_violator.get(&r).copied().unwrap_or(0) > 0);
    if !resumed {
        return Err(format!("no delivery to the violator by round {recover_by}: {to_violator:?}"));
    }
    Ok(())
}
