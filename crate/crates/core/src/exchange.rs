//! Exchange-phase resolution.
//!
//! Every agent submits one allocation; all transfers are applied at once
//! against pre-exchange holdings, so nothing received this round can be
//! passed on in the same round. Promises are not enforced: the difference
//! between promised and delivered units becomes a breach record.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgentId, AgentProfile, ResourceVector, ValueCoefficients};
use crate::ledger::PairLedger;
use crate::scoring::{points, BreachRecord};

pub type Holdings = BTreeMap<AgentId, ResourceVector>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExchangeError {
    #[error("no allocation decision from {0}")]
    MissingDecision(AgentId),
    #[error("more than one allocation decision from {0}")]
    DuplicateDecision(AgentId),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("{0} cannot send resources to itself")]
    SelfTransfer(AgentId),
    #[error("{actor} allocates {requested} units of resource {resource} but holds {available}")]
    OverCommit { actor: AgentId, resource: usize, requested: u64, available: u64 },
    #[error("resource vector has {found} entries, expected {expected}")]
    Arity { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationDecision {
    pub actor: AgentId,
    pub outgoing: BTreeMap<AgentId, ResourceVector>,
    #[serde(default)]
    pub rationale: String,
}

impl AllocationDecision {
    /// Sends nothing to anyone. Always legal.
    pub fn nothing(actor: &AgentId) -> Self {
        Self { actor: actor.clone(), outgoing: BTreeMap::new(), rationale: String::new() }
    }

    pub fn total_outgoing(&self, n: usize) -> ResourceVector {
        let mut total = ResourceVector::zeros(n);
        for v in self.outgoing.values() {
            total.add_assign(v);
        }
        total
    }

    /// Checks arity, recipients and the inventory bound.
    pub fn validate(&self, holdings: &ResourceVector, agents: &BTreeSet<AgentId>) -> Result<(), ExchangeError> {
        let n = holdings.len();
        for (to, v) in &self.outgoing {
            if to == &self.actor {
                return Err(ExchangeError::SelfTransfer(to.clone()));
            }
            if !agents.contains(to) {
                return Err(ExchangeError::UnknownAgent(to.clone()));
            }
            if v.len() != n {
                return Err(ExchangeError::Arity { expected: n, found: v.len() });
            }
        }
        let total = self.total_outgoing(n);
        for r in 0..n {
            if total.get(r) > holdings.get(r) {
                return Err(ExchangeError::OverCommit {
                    actor: self.actor.clone(),
                    resource: r,
                    requested: total.get(r),
                    available: holdings.get(r),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: u32,
    pub promised: PairLedger,
    pub delivered: PairLedger,
    pub breaches: Vec<BreachRecord>,
    pub holdings_before: Holdings,
    pub holdings_after: Holdings,
    pub holding_values_after: BTreeMap<AgentId, u64>,
}

/// Adds `injection` units of each agent's specialization.
pub fn inject_resources(holdings: &Holdings, profiles: &[AgentProfile], injection: u64) -> Holdings {
    let mut out = holdings.clone();
    for profile in profiles {
        if let Some(h) = out.get_mut(&profile.agent_id) {
            let current = h.get(profile.specialization);
            h.set(profile.specialization, current + injection);
        }
    }
    out
}

/// Applies all allocations simultaneously and compares them with promises.
pub fn resolve_exchange(
    round: u32,
    holdings: &Holdings,
    decisions: &[AllocationDecision],
    promises: &PairLedger,
    coefficients: &ValueCoefficients,
) -> Result<RoundOutcome, ExchangeError> {
    let agents: BTreeSet<AgentId> = holdings.keys().cloned().collect();
    let n = holdings.values().next().map(|h| h.len()).unwrap_or(0);
    let mut by_actor: BTreeMap<&AgentId, &AllocationDecision> = BTreeMap::new();
    for d in decisions {
        if !agents.contains(&d.actor) {
            return Err(ExchangeError::UnknownAgent(d.actor.clone()));
        }
        if by_actor.insert(&d.actor, d).is_some() {
            return Err(ExchangeError::DuplicateDecision(d.actor.clone()));
        }
    }
    for agent in &agents {
        let d = by_actor.get(agent).ok_or_else(|| ExchangeError::MissingDecision(agent.clone()))?;
        d.validate(&holdings[agent], &agents)?;
    }

    let mut delivered = PairLedger::new();
    for d in by_actor.values() {
        for (to, v) in &d.outgoing {
            delivered.add(&d.actor, to, v);
        }
    }

    let mut after = holdings.clone();
    for (from, to, v) in delivered.entries() {
        let sender = after.get_mut(from).expect("validated sender");
        *sender = sender.checked_sub(v).expect("inventory bound validated");
        after.get_mut(to).expect("validated recipient").add_assign(v);
    }

    let mut pairs: BTreeSet<(AgentId, AgentId)> = BTreeSet::new();
    for (from, to, _) in promises.entries().chain(delivered.entries()) {
        pairs.insert((from.clone(), to.clone()));
    }
    let breaches = pairs
        .into_iter()
        .map(|(debtor, creditor)| {
            let p = promises.amount(&debtor, &creditor, n);
            let d = delivered.amount(&debtor, &creditor, n);
            BreachRecord::new(round, debtor, creditor, p, d)
        })
        .collect();

    let holding_values_after = after.iter().map(|(id, h)| (id.clone(), points(h, coefficients))).collect();

    Ok(RoundOutcome {
        round,
        promised: promises.clone(),
        delivered,
        breaches,
        holdings_before: holdings.clone(),
        holdings_after: after,
        holding_values_after,
    })
}

/// Scales an over-committed allocation down to what the actor holds.
///
/// Per resource type with total request `T` above the available `H`, each
/// recipient's amount becomes `floor(q·H/T)` and the remaining slack goes to
/// the largest fractional remainders, ties broken by recipient order.
pub fn clamp_allocation(decision: &AllocationDecision, holdings: &ResourceVector) -> AllocationDecision {
    let n = holdings.len();
    let total = decision.total_outgoing(n);
    let mut outgoing = decision.outgoing.clone();
    for r in 0..n {
        let requested = total.get(r);
        let available = holdings.get(r);
        if requested <= available {
            continue;
        }
        let mut shares: Vec<(AgentId, u64, u128)> = decision
            .outgoing
            .iter()
            .map(|(to, v)| {
                let scaled = v.get(r) as u128 * available as u128;
                let floor = (scaled / requested as u128) as u64;
                let remainder = scaled % requested as u128;
                (to.clone(), floor, remainder)
            })
            .collect();
        let mut slack = available - shares.iter().map(|s| s.1).sum::<u64>();
        let mut order: Vec<usize> = (0..shares.len()).collect();
        order.sort_by(|&i, &j| shares[j].2.cmp(&shares[i].2).then(i.cmp(&j)));
        for i in order {
            if slack == 0 {
                break;
            }
            if shares[i].2 > 0 {
                shares[i].1 += 1;
                slack -= 1;
            }
        }
        for (to, amount, _) in shares {
            outgoing.get_mut(&to).expect("same keys").set(r, amount);
        }
    }
    outgoing.retain(|_, v| !v.is_zero());
    AllocationDecision { actor: decision.actor.clone(), outgoing, rationale: decision.rationale.clone() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Controller, Svo};
    use crate::negotiation::units;

    fn ids() -> (AgentId, AgentId, AgentId) {
        ("a".into(), "b".into(), "c".into())
    }

    fn holdings() -> Holdings {
        let (a, b, c) = ids();
        BTreeMap::from([(a, units(&[20, 5, 5])), (b, units(&[5, 20, 5])), (c, units(&[5, 5, 20]))])
    }

    fn give(actor: &AgentId, to: &AgentId, v: ResourceVector) -> AllocationDecision {
        AllocationDecision { actor: actor.clone(), outgoing: BTreeMap::from([(to.clone(), v)]), rationale: String::new() }
    }

    fn r() -> ValueCoefficients {
        ValueCoefficients::standard()
    }

    fn profile(id: &str, spec: usize) -> AgentProfile {
        AgentProfile {
            agent_id: id.into(),
            display_name: id.into(),
            specialization: spec,
            svo: Svo::Prosocial,
            rei_rational: 3,
            rei_experiential: 3,
            initial_holdings: units(&[5, 5, 5]),
            controller: Controller::Llm,
        }
    }

    #[test]
    fn injection_adds_to_specialization() {
        let (a, b, _) = ids();
        let h = BTreeMap::from([(a.clone(), units(&[5, 5, 5])), (b.clone(), units(&[5, 5, 5]))]);
        let out = inject_resources(&h, &[profile("a", 0), profile("b", 0)], 15);
        assert_eq!(out[&a].units(), &[20, 5, 5]);
        assert_eq!(out[&b].units(), &[20, 5, 5]);
        assert_eq!(inject_resources(&h, &[profile("a", 0)], 0), h);
    }

    #[test]
    fn honored_deal_has_zero_breach() {
        let (a, b, c) = ids();
        let mut promises = PairLedger::new();
        promises.add(&a, &b, &units(&[5, 0, 0]));
        let decisions = vec![give(&a, &b, units(&[5, 0, 0])), AllocationDecision::nothing(&b), AllocationDecision::nothing(&c)];
        let out = resolve_exchange(1, &holdings(), &decisions, &promises, &r()).unwrap();
        assert_eq!(out.breaches.len(), 1);
        assert_eq!(out.breaches[0].signed_breach, 0);
        assert_eq!(out.holdings_after[&b].units(), &[10, 20, 5]);
        assert_eq!(out.holdings_after[&a].units(), &[15, 5, 5]);
    }

    #[test]
    fn withheld_promise_is_full_breach() {
        let (a, b, c) = ids();
        let mut promises = PairLedger::new();
        promises.add(&a, &b, &units(&[5, 0, 0]));
        let decisions: Vec<_> = [&a, &b, &c].iter().map(|x| AllocationDecision::nothing(x)).collect();
        let out = resolve_exchange(1, &holdings(), &decisions, &promises, &r()).unwrap();
        assert_eq!(out.breaches[0].signed_breach, 5);
        assert_eq!(out.holdings_after, holdings());
    }

    #[test]
    fn unprompted_gift_is_negative_breach() {
        let (a, b, c) = ids();
        let decisions = vec![give(&a, &b, units(&[2, 0, 0])), AllocationDecision::nothing(&b), AllocationDecision::nothing(&c)];
        let out = resolve_exchange(1, &holdings(), &decisions, &PairLedger::new(), &r()).unwrap();
        assert_eq!(out.delivered.get(&a, &b).unwrap().units(), &[2, 0, 0]);
        assert_eq!(out.breaches[0].signed_breach, -2);
    }

    #[test]
    fn overcommit_and_missing_decisions_rejected() {
        let (a, b, c) = ids();
        let decisions = vec![give(&a, &b, units(&[21, 0, 0])), AllocationDecision::nothing(&b), AllocationDecision::nothing(&c)];
        let err = resolve_exchange(1, &holdings(), &decisions, &PairLedger::new(), &r()).unwrap_err();
        assert!(matches!(err, ExchangeError::OverCommit { resource: 0, requested: 21, available: 20, .. }));
        let err = resolve_exchange(1, &holdings(), &decisions[1..], &PairLedger::new(), &r()).unwrap_err();
        assert_eq!(err, ExchangeError::MissingDecision(a));
    }

    #[test]
    fn no_relay_within_a_round() {
        let (a, b, c) = ids();
        // b tries to forward the 5 A it receives from a on top of its own 5 A.
        let decisions = vec![
            give(&a, &b, units(&[5, 0, 0])),
            give(&b, &c, units(&[10, 0, 0])),
            AllocationDecision::nothing(&c),
        ];
        assert!(matches!(
            resolve_exchange(1, &holdings(), &decisions, &PairLedger::new(), &r()),
            Err(ExchangeError::OverCommit { .. })
        ));
    }

    #[test]
    fn clamp_uses_largest_remainder() {
        let (a, b, c) = ids();
        let d = AllocationDecision {
            actor: a.clone(),
            outgoing: BTreeMap::from([(b.clone(), units(&[3, 0, 0])), (c.clone(), units(&[3, 1, 0]))]),
            rationale: String::new(),
        };
        let clamped = clamp_allocation(&d, &units(&[5, 4, 0]));
        let total = clamped.total_outgoing(3);
        assert_eq!(total.units(), &[5, 1, 0]);
        // 3·5/6 = 2.5 each; the tie goes to the first recipient.
        assert_eq!(clamped.outgoing[&b].units(), &[3, 0, 0]);
        assert_eq!(clamped.outgoing[&c].units(), &[2, 1, 0]);
        let holdings = units(&[5, 4, 0]);
        assert!(total.fits_within(&holdings));
    }

    #[test]
    fn clamp_of_a_valid_allocation_is_identity() {
        let (a, b, _) = ids();
        let d = give(&a, &b, units(&[1, 2, 3]));
        assert_eq!(clamp_allocation(&d, &units(&[9, 9, 9])), d);
    }
}
