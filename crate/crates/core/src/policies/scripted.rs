//! Deterministic rule-based agents.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DecisionKind, Policy, PolicyContext, PolicyDecision, PolicyError};
use crate::domain::{Affinity, AgentId, BdiState, ProposalStatus, ResourceVector};
use crate::exchange::{clamp_allocation, AllocationDecision};
use crate::negotiation::{AgentAction, ActionKind};
use crate::scoring::points;

pub const DEFAULT_TRADE_SIZE: u64 = 5;
pub const DEFAULT_VIOLATION_ROUND: u32 = 10;

pub const SCRIPTED_POLICY_NAMES: &[&str] = &[
    "pass-bot",
    "honest-reciprocator",
    "proself-defector",
    "tit-for-tat",
    "trust-violator",
    "random-trader",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptedKind {
    /// Never speaks, never sends anything.
    PassBot,
    /// Trades its specialization one-for-one and delivers exactly what it promised.
    HonestReciprocator,
    /// Negotiates like the reciprocator but delivers half of each promise, rounded down.
    ProselfDefector,
    /// Delivers in full, except toward a partner who under-delivered last
    /// round: that partner gets at most as many units as it sent.
    TitForTat,
    /// Honest in every round but `round`, where it withholds everything.
    TrustViolator { round: u32 },
    /// Seeded random proposals, answers and deliveries.
    RandomTrader,
}

#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    pub kind: ScriptedKind,
    pub trade_size: u64,
}

/// Builds a scripted policy from its roster name, e.g. `trust-violator:10`.
pub fn scripted_policy(name: &str) -> Result<ScriptedPolicy, String> {
    let (base, arg) = match name.split_once(':') {
        Some((b, a)) => (b, Some(a)),
        None => (name, None),
    };
    let kind = match (base, arg) {
        ("pass-bot", None) => ScriptedKind::PassBot,
        ("honest-reciprocator", None) => ScriptedKind::HonestReciprocator,
        ("proself-defector", None) => ScriptedKind::ProselfDefector,
        ("tit-for-tat", None) => ScriptedKind::TitForTat,
        ("trust-violator", None) => ScriptedKind::TrustViolator { round: DEFAULT_VIOLATION_ROUND },
        ("trust-violator", Some(k)) => ScriptedKind::TrustViolator {
            round: k.parse().map_err(|_| format!("invalid violation round `{k}`"))?,
        },
        ("random-trader", None) => ScriptedKind::RandomTrader,
        _ => {
            return Err(format!(
                "unknown scripted policy `{name}` (known: {})",
                SCRIPTED_POLICY_NAMES.join(", ")
            ))
        }
    };
    Ok(ScriptedPolicy { kind, trade_size: DEFAULT_TRADE_SIZE })
}

impl Policy for ScriptedPolicy {
    fn name(&self) -> String {
        match self.kind {
            ScriptedKind::PassBot => "pass-bot".into(),
            ScriptedKind::HonestReciprocator => "honest-reciprocator".into(),
            ScriptedKind::ProselfDefector => "proself-defector".into(),
            ScriptedKind::TitForTat => "tit-for-tat".into(),
            ScriptedKind::TrustViolator { round } => format!("trust-violator:{round}"),
            ScriptedKind::RandomTrader => "random-trader".into(),
        }
    }

    fn decide(&self, kind: DecisionKind, ctx: &PolicyContext) -> Result<PolicyDecision, PolicyError> {
        if self.kind == ScriptedKind::RandomTrader {
            return Ok(random_decision(kind, ctx));
        }
        Ok(match kind {
            DecisionKind::ContinueOrPass => PolicyDecision::ContinueOrPass(!self.turn(ctx)?.0.is_empty()),
            DecisionKind::TurnReply => {
                let (actions, utterance) = self.turn(ctx)?;
                PolicyDecision::TurnReply { utterance, actions }
            }
            DecisionKind::Allocation => PolicyDecision::Allocation(self.allocation(ctx)),
            DecisionKind::BdiUpdate => PolicyDecision::BdiUpdate(scripted_bdi(ctx, &self.name())),
            DecisionKind::AffinityUpdate => PolicyDecision::AffinityUpdate(reciprocity_affinity(ctx)),
        })
    }
}

impl ScriptedPolicy {
    fn turn(&self, ctx: &PolicyContext) -> Result<(Vec<AgentAction>, String), PolicyError> {
        if self.kind == ScriptedKind::PassBot {
            return Ok((Vec::new(), String::new()));
        }
        let neg = ctx.negotiation.as_ref().ok_or(PolicyError::WrongKind(DecisionKind::TurnReply))?;
        let me = ctx.me();
        let n = ctx.n();

        // What I already owe through accepted deals or still-open offers of mine.
        let mut committed = ResourceVector::zeros(n);
        for p in &neg.proposals {
            let open_or_accepted = matches!(p.status, ProposalStatus::Accepted | ProposalStatus::Pending);
            if &p.proposer == me && open_or_accepted {
                committed.add_assign(&p.give);
            } else if &p.counterpart == me && p.status == ProposalStatus::Accepted {
                committed.add_assign(&p.receive);
            }
        }

        let mut actions = Vec::new();
        let mut said = Vec::new();
        for p in neg.pending_for(me) {
            let needed = committed.plus(&p.receive);
            if needed.fits_within(&ctx.holdings) {
                committed = needed;
                actions.push(AgentAction::accept(&p.proposal_id));
                said.push(format!("I accept {}.", p.proposal_id));
            } else {
                actions.push(AgentAction::reject(&p.proposal_id));
                said.push(format!("I cannot cover {}, rejecting.", p.proposal_id));
            }
        }

        let mine = ctx.self_profile.specialization;
        for peer in &ctx.peers {
            if peer.specialization == mine {
                continue;
            }
            let already = neg.proposals.iter().any(|p| {
                (&p.proposer == me && p.counterpart == peer.agent_id)
                    || (p.proposer == peer.agent_id && &p.counterpart == me)
            });
            if already {
                continue;
            }
            let spare = ctx.holdings.get(mine).saturating_sub(committed.get(mine));
            let q = self.trade_size.min(spare);
            if q == 0 {
                continue;
            }
            let give = ResourceVector::single(n, mine, q);
            let receive = ResourceVector::single(n, peer.specialization, q);
            committed.add_assign(&give);
            said.push(format!(
                "{}: {q} {} for {q} {}?",
                peer.display_name, ctx.resource_labels[mine], ctx.resource_labels[peer.specialization]
            ));
            actions.push(AgentAction::propose(&peer.agent_id, give, receive));
        }
        Ok((actions, said.join(" ")))
    }

    fn allocation(&self, ctx: &PolicyContext) -> AllocationDecision {
        let me = ctx.me();
        let owed = ctx.owed_by_me();
        let mut outgoing: BTreeMap<AgentId, ResourceVector> = BTreeMap::new();
        for (creditor, promised) in owed {
            let send = match self.kind {
                ScriptedKind::PassBot => continue,
                ScriptedKind::HonestReciprocator => promised,
                ScriptedKind::ProselfDefector => promised.map(|q| q / 2),
                ScriptedKind::TrustViolator { round } if round == ctx.round => continue,
                ScriptedKind::TrustViolator { .. } => promised,
                ScriptedKind::TitForTat => tit_for_tat_amount(ctx, &creditor, &promised),
                ScriptedKind::RandomTrader => unreachable!("handled separately"),
            };
            if !send.is_zero() {
                outgoing.insert(creditor, send);
            }
        }
        let decision = AllocationDecision {
            actor: me.clone(),
            outgoing,
            rationale: format!("{} allocation rule", self.name()),
        };
        clamp_allocation(&decision, &ctx.holdings)
    }
}

/// Full promise, unless `partner` under-delivered to me last round; then at
/// most as many units as it actually sent, taken from the promise in type order.
fn tit_for_tat_amount(ctx: &PolicyContext, partner: &AgentId, promised: &ResourceVector) -> ResourceVector {
    let Some(last) = ctx.round.checked_sub(1).and_then(|r| ctx.outcome_of(r)) else {
        return promised.clone();
    };
    let breach = last
        .breaches
        .iter()
        .find(|b| &b.debtor == partner && &b.creditor == ctx.me());
    match breach {
        Some(b) if b.signed_breach > 0 => {
            let mut budget = b.delivered.total();
            let mut out = ResourceVector::zeros(ctx.n());
            for t in 0..ctx.n() {
                let take = promised.get(t).min(budget);
                budget -= take;
                out.set(t, take);
            }
            out
        }
        _ => promised.clone(),
    }
}

/// Shared scripted affinity rule: −1 toward a partner that under-delivered this
/// round, +1 toward one that sent something without under-delivering.
fn reciprocity_affinity(ctx: &PolicyContext) -> BTreeMap<AgentId, Affinity> {
    let mut scores = ctx.affinity_out.clone();
    let Some(outcome) = ctx.latest_outcome.as_ref() else {
        return scores;
    };
    for peer in &ctx.peers {
        let current = scores.get(&peer.agent_id).copied().unwrap_or(Affinity::NEUTRAL);
        let breach = outcome
            .breaches
            .iter()
            .find(|b| b.debtor == peer.agent_id && &b.creditor == ctx.me());
        let delta = match breach {
            Some(b) if b.signed_breach > 0 => -1,
            Some(b) if !b.delivered.is_zero() => 1,
            _ => 0,
        };
        scores.insert(peer.agent_id.clone(), Affinity::clamped(current.get() as i64 + delta));
    }
    scores
}

fn scripted_bdi(ctx: &PolicyContext, policy: &str) -> BdiState {
    let holdings = ctx
        .latest_outcome
        .as_ref()
        .and_then(|o| o.holdings_after.get(ctx.me()).cloned())
        .unwrap_or_else(|| ctx.holdings.clone());
    let value = points(&holdings, &ctx.coefficients);
    BdiState {
        beliefs: format!("Holding {} worth {value} points after round {}.", holdings.display_with(&ctx.resource_labels), ctx.round),
        desires: "Maximize total value by building complete sets.".to_string(),
        intentions: format!("Keep following the {policy} rule next round."),
        updated_at_round: ctx.round,
    }
}

fn random_decision(kind: DecisionKind, ctx: &PolicyContext) -> PolicyDecision {
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let me = ctx.me();
    let n = ctx.n();
    match kind {
        DecisionKind::ContinueOrPass => PolicyDecision::ContinueOrPass(rng.random_bool(0.8)),
        DecisionKind::TurnReply => {
            let Some(neg) = ctx.negotiation.as_ref() else {
                return PolicyDecision::pass();
            };
            let mut actions = Vec::new();
            if rng.random_bool(0.2) {
                return PolicyDecision::pass();
            }
            for p in neg.pending_for(me) {
                let roll: f64 = rng.random();
                if roll < 0.5 {
                    actions.push(AgentAction::accept(&p.proposal_id));
                } else if roll < 0.8 {
                    actions.push(AgentAction::reject(&p.proposal_id));
                }
            }
            let proposals = rng.random_range(0..=2);
            for _ in 0..proposals {
                let peer = &ctx.peers[rng.random_range(0..ctx.peers.len())];
                let mut give = ResourceVector::zeros(n);
                let mut receive = ResourceVector::zeros(n);
                let gt = rng.random_range(0..n);
                let rt = rng.random_range(0..n);
                give.set(gt, rng.random_range(0..=ctx.holdings.get(gt).min(6)));
                receive.set(rt, rng.random_range(0..=6));
                if give.is_zero() && receive.is_zero() {
                    receive.set(rt, 1);
                }
                actions.push(AgentAction::new(ActionKind::Propose { counterpart: peer.agent_id.clone(), give, receive }));
            }
            PolicyDecision::TurnReply { utterance: format!("{} random turn", actions.len()), actions }
        }
        DecisionKind::Allocation => {
            let mut outgoing: BTreeMap<AgentId, ResourceVector> = BTreeMap::new();
            for (creditor, promised) in ctx.owed_by_me() {
                let send = ResourceVector::from_units(promised.units().iter().map(|&q| rng.random_range(0..=q + 1)).collect());
                outgoing.insert(creditor, send);
            }
            if rng.random_bool(0.1) {
                let peer = &ctx.peers[rng.random_range(0..ctx.peers.len())];
                let t = rng.random_range(0..n);
                let gift = ResourceVector::single(n, t, 1);
                outgoing
                    .entry(peer.agent_id.clone())
                    .and_modify(|v| v.add_assign(&gift))
                    .or_insert(gift);
            }
            outgoing.retain(|_, v| !v.is_zero());
            let d = AllocationDecision { actor: me.clone(), outgoing, rationale: "random".into() };
            PolicyDecision::Allocation(clamp_allocation(&d, &ctx.holdings))
        }
        DecisionKind::BdiUpdate => PolicyDecision::BdiUpdate(scripted_bdi(ctx, "random-trader")),
        DecisionKind::AffinityUpdate => {
            let scores = ctx
                .affinity_out
                .iter()
                .map(|(id, a)| (id.clone(), Affinity::clamped(a.get() as i64 + rng.random_range(-1..=1))))
                .collect();
            PolicyDecision::AffinityUpdate(scores)
        }
    }
}
