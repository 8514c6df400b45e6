//! Prompt templates and their rendering.
//!
//! Templates live as text files under `prompts/` with `{{name}}`
//! placeholders. The built-in set is compiled in; [`PromptSet::from_dir`]
//! overlays any files found in a directory so prompts can be edited without
//! rebuilding.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{DecisionKind, PolicyContext};
use crate::domain::{ProposalStatus, Svo};
use crate::negotiation::ActionKind;
use crate::orchestrator::events::EventBody;
use crate::scoring::points;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("template `{template}` uses unknown placeholder `{field}`")]
    MissingTemplateField { template: String, field: String },
    #[error("template `{template}` has an unterminated placeholder")]
    Unterminated { template: String },
    #[error("cannot read prompt directory: {0}")]
    Io(String),
}

pub const AFFINITY_RUBRIC: &str = include_str!("../../prompts/affinity_rubric.v1.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub system: String,
    pub persona: String,
    pub update_bdi: String,
    pub make_deal: String,
    pub update_affinity: String,
    pub continue_or_pass: String,
    pub reply: String,
    pub affinity_rubric: String,
}

const FILES: [&str; 8] = [
    "system.v1.txt",
    "persona.v1.txt",
    "update_bdi.v1.txt",
    "make_deal.v1.txt",
    "update_affinity.v1.txt",
    "continue.v1.txt",
    "reply.v1.txt",
    "affinity_rubric.v1.txt",
];

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    pub fn builtin() -> Self {
        Self {
            system: include_str!("../../prompts/system.v1.txt").to_string(),
            persona: include_str!("../../prompts/persona.v1.txt").to_string(),
            update_bdi: include_str!("../../prompts/update_bdi.v1.txt").to_string(),
            make_deal: include_str!("../../prompts/make_deal.v1.txt").to_string(),
            update_affinity: include_str!("../../prompts/update_affinity.v1.txt").to_string(),
            continue_or_pass: include_str!("../../prompts/continue.v1.txt").to_string(),
            reply: include_str!("../../prompts/reply.v1.txt").to_string(),
            affinity_rubric: AFFINITY_RUBRIC.to_string(),
        }
    }

    /// Built-in templates, replaced by any same-named file in `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::builtin();
        if !dir.is_dir() {
            return Err(PromptError::Io(format!("{} is not a directory", dir.display())));
        }
        for name in FILES {
            let path = dir.join(name);
            if path.exists() {
                let text = fs::read_to_string(&path).map_err(|e| PromptError::Io(e.to_string()))?;
                *set.slot_mut(name) = text;
            }
        }
        Ok(set)
    }

    fn slot_mut(&mut self, file: &str) -> &mut String {
        match file {
            "system.v1.txt" => &mut self.system,
            "persona.v1.txt" => &mut self.persona,
            "update_bdi.v1.txt" => &mut self.update_bdi,
            "make_deal.v1.txt" => &mut self.make_deal,
            "update_affinity.v1.txt" => &mut self.update_affinity,
            "continue.v1.txt" => &mut self.continue_or_pass,
            "reply.v1.txt" => &mut self.reply,
            _ => &mut self.affinity_rubric,
        }
    }

    fn for_kind(&self, kind: DecisionKind) -> (&'static str, &str) {
        match kind {
            DecisionKind::ContinueOrPass => ("continue", &self.continue_or_pass),
            DecisionKind::TurnReply => ("reply", &self.reply),
            DecisionKind::Allocation => ("make_deal", &self.make_deal),
            DecisionKind::BdiUpdate => ("update_bdi", &self.update_bdi),
            DecisionKind::AffinityUpdate => ("update_affinity", &self.update_affinity),
        }
    }
}

/// Replaces every `{{field}}`; any placeholder without a value is an error.
pub fn fill(name: &str, template: &str, fields: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| PromptError::Unterminated { template: name.to_string() })?;
        let field = after[..end].trim();
        let value = fields.get(field).ok_or_else(|| PromptError::MissingTemplateField {
            template: name.to_string(),
            field: field.to_string(),
        })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub system: String,
    pub user: String,
}

fn svo_sentence(svo: Svo) -> &'static str {
    match svo {
        Svo::Proself => "Your social value orientation is proself: you optimize for your own individual utility.",
        Svo::Prosocial => {
            "Your social value orientation is prosocial: you look for exchanges that benefit both you and your partners."
        }
    }
}

fn rational_sentence(score: u8) -> &'static str {
    match score {
        0 | 1 => "You rarely analyze trades numerically.",
        2 => "You occasionally check the numbers behind a trade.",
        3 => "You weigh the numbers behind a trade with moderate care.",
        4 => "You analyze trades carefully before committing.",
        _ => "You rigorously compute expected values before every decision.",
    }
}

fn experiential_sentence(score: u8) -> &'static str {
    match score {
        0 | 1 => "You set aside gut feeling and past impressions.",
        2 => "You give past impressions a little weight.",
        3 => "You give intuition and past experience moderate weight.",
        4 => "You rely substantially on intuition and past experience.",
        _ => "You lean heavily on what worked before and on your gut feeling.",
    }
}

/// SVO and REI persona lines for the system prompt.
pub fn persona_preamble(set: &PromptSet, ctx: &PolicyContext) -> Result<String, PromptError> {
    let p = &ctx.self_profile;
    let fields = BTreeMap::from([
        ("svo_sentence", svo_sentence(p.svo).to_string()),
        ("rei_rational", p.rei_rational.to_string()),
        ("rei_experiential", p.rei_experiential.to_string()),
        ("rational_sentence", rational_sentence(p.rei_rational).to_string()),
        ("experiential_sentence", experiential_sentence(p.rei_experiential).to_string()),
    ]);
    fill("persona", &set.persona, &fields)
}

fn value_rules(ctx: &PolicyContext) -> String {
    ctx.coefficients
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, v)| match k {
            0 => format!("a single unit of any resource is worth {v} point{}", if *v == 1 { "" } else { "s" }),
            _ => format!("a set of {} different resources is worth {v} points", k + 1),
        })
        .collect::<Vec<_>>()
        .join("; ")
        + "."
}

fn system_prompt(set: &PromptSet, ctx: &PolicyContext) -> Result<String, PromptError> {
    let labels = &ctx.resource_labels;
    let peers = ctx
        .peers
        .iter()
        .map(|p| format!("- {} ({}), specializes in {}", p.agent_id, p.display_name, labels[p.specialization]))
        .collect::<Vec<_>>()
        .join("\n");
    let fields = BTreeMap::from([
        ("agent_name", ctx.self_profile.display_name.clone()),
        ("agent_id", ctx.me().to_string()),
        ("num_agents", (ctx.peers.len() + 1).to_string()),
        ("total_rounds", ctx.total_rounds.to_string()),
        ("resource_labels", labels.join(", ")),
        ("specialization", labels[ctx.self_profile.specialization].clone()),
        ("injection", ctx.injection_per_round.to_string()),
        ("value_rules", value_rules(ctx)),
        ("max_discussion_rounds", ctx.max_discussion_rounds.to_string()),
        ("peers", peers),
        ("persona", persona_preamble(set, ctx)?),
    ]);
    fill("system", &set.system, &fields)
}

fn or_none(s: String) -> String {
    if s.trim().is_empty() {
        "none".to_string()
    } else {
        s
    }
}

fn render_transcript(ctx: &PolicyContext) -> String {
    let labels = &ctx.resource_labels;
    let Some(neg) = &ctx.negotiation else { return "none".into() };
    let lines = neg.transcript.iter().map(|u| {
        let actions = u
            .actions
            .iter()
            .filter_map(|a| match &a.kind {
                ActionKind::Propose { counterpart, give, receive } => Some(format!(
                    "PROPOSE to {counterpart}: give {} / receive {}",
                    give.display_with(labels),
                    receive.display_with(labels)
                )),
                ActionKind::Accept { proposal_id } => Some(format!("ACCEPT {proposal_id}")),
                ActionKind::Reject { proposal_id } => Some(format!("REJECT {proposal_id}")),
                ActionKind::Pass => None,
            })
            .collect::<Vec<_>>();
        let actions = if actions.is_empty() { "pass".to_string() } else { actions.join("; ") };
        format!("[cycle {}] {}: {} ({actions})", u.discussion_round, u.speaker, u.text.trim())
    });
    or_none(lines.collect::<Vec<_>>().join("\n"))
}

fn render_proposals(ctx: &PolicyContext) -> String {
    let labels = &ctx.resource_labels;
    let Some(neg) = &ctx.negotiation else { return "none".into() };
    or_none(
        neg.proposals
            .iter()
            .map(|p| {
                format!(
                    "{}: {} gives {} to {} in return for {} [{:?}]",
                    p.proposal_id,
                    p.proposer,
                    p.give.display_with(labels),
                    p.counterpart,
                    p.receive.display_with(labels),
                    p.status
                )
            })
            .collect::<Vec<_>>()
            .join("\n"),
    )
}

fn pending_ids(ctx: &PolicyContext, addressed_to_me: bool) -> String {
    let Some(neg) = &ctx.negotiation else { return "none".into() };
    let me = ctx.me();
    or_none(
        neg.proposals
            .iter()
            .filter(|p| p.status == ProposalStatus::Pending)
            .filter(|p| if addressed_to_me { &p.counterpart == me } else { &p.proposer == me })
            .map(|p| p.proposal_id.to_string())
            .collect::<Vec<_>>()
            .join(", "),
    )
}

fn render_promises(ctx: &PolicyContext) -> String {
    let labels = &ctx.resource_labels;
    or_none(
        ctx.promises_due
            .entries()
            .map(|(from, to, v)| format!("{from} → {to}: {}", v.display_with(labels)))
            .collect::<Vec<_>>()
            .join("\n"),
    )
}

fn promises_json(ctx: &PolicyContext) -> String {
    let labels = &ctx.resource_labels;
    let me = ctx.me();
    let mut owed_by_you = serde_json::Map::new();
    let mut owed_to_you = serde_json::Map::new();
    for (from, to, v) in ctx.promises_due.entries() {
        let json = serde_json::to_value(v.to_label_map(labels)).expect("map serializes");
        if from == me {
            owed_by_you.insert(to.to_string(), json);
        } else if to == me {
            owed_to_you.insert(from.to_string(), json);
        }
    }
    serde_json::json!({"owed_by_you": owed_by_you, "owed_to_you": owed_to_you}).to_string()
}

fn render_outcome_lines(ctx: &PolicyContext, outcome: &crate::exchange::RoundOutcome) -> Vec<String> {
    let labels = &ctx.resource_labels;
    outcome
        .breaches
        .iter()
        .map(|b| {
            format!(
                "{} → {}: promised {}, delivered {} ({})",
                b.debtor,
                b.creditor,
                b.promised.display_with(labels),
                b.delivered.display_with(labels),
                b.class().as_str().replace('_', " ")
            )
        })
        .collect()
}

fn render_executed(ctx: &PolicyContext) -> String {
    match &ctx.latest_outcome {
        Some(o) => or_none(render_outcome_lines(ctx, o).join("\n")),
        None => "not yet executed".to_string(),
    }
}

fn render_history(ctx: &PolicyContext) -> String {
    let mut lines = Vec::new();
    for o in ctx.outcomes().filter(|o| o.round < ctx.round) {
        let trades = render_outcome_lines(ctx, o);
        let trades = if trades.is_empty() { "no trades".to_string() } else { trades.join("; ") };
        lines.push(format!("Round {}: {trades}", o.round));
    }
    // Own past rationale is visible to oneself only.
    for e in &ctx.memory {
        if let EventBody::BdiUpdate(b) = &e.body {
            if &b.owner == ctx.me() && e.round < ctx.round {
                lines.push(format!("Your intentions after round {}: {}", e.round, b.bdi.intentions.trim()));
            }
        }
    }
    or_none(lines.join("\n"))
}

fn render_bdi(ctx: &PolicyContext) -> String {
    if ctx.bdi.beliefs.is_empty() && ctx.bdi.desires.is_empty() && ctx.bdi.intentions.is_empty() {
        "none yet".to_string()
    } else {
        format!(
            "Beliefs: {}\nDesires: {}\nIntentions: {}",
            ctx.bdi.beliefs.trim(),
            ctx.bdi.desires.trim(),
            ctx.bdi.intentions.trim()
        )
    }
}

fn render_affinity(ctx: &PolicyContext) -> String {
    or_none(
        ctx.affinity_out
            .iter()
            .map(|(id, a)| format!("{id}={}", a.get()))
            .collect::<Vec<_>>()
            .join(", "),
    )
}

/// Instantiates the system prompt and the template for `kind`.
///
/// Output depends only on `set`, `kind` and `ctx`, byte for byte.
pub fn render_prompt(set: &PromptSet, kind: DecisionKind, ctx: &PolicyContext) -> Result<RenderedPrompt, PromptError> {
    let (name, template) = set.for_kind(kind);
    let discussion_round = ctx.negotiation.as_ref().map(|n| n.discussion_round).unwrap_or(0);
    let feedback = match &ctx.feedback {
        Some(f) => format!("\nNote: your previous answer was rejected: {f}\n"),
        None => String::new(),
    };
    let fields = BTreeMap::from([
        ("round", ctx.round.to_string()),
        ("total_rounds", ctx.total_rounds.to_string()),
        ("discussion_round", discussion_round.to_string()),
        ("max_discussion_rounds", ctx.max_discussion_rounds.to_string()),
        ("holdings", ctx.holdings.display_with(&ctx.resource_labels)),
        ("value", points(&ctx.holdings, &ctx.coefficients).to_string()),
        ("affinity", render_affinity(ctx)),
        ("affinity_rubric", set.affinity_rubric.trim_end().to_string()),
        ("bdi", render_bdi(ctx)),
        ("transcript", render_transcript(ctx)),
        ("proposals", render_proposals(ctx)),
        ("pending_for_me", pending_ids(ctx, true)),
        ("my_pending", pending_ids(ctx, false)),
        ("promised_trades", render_promises(ctx)),
        ("promises_json", promises_json(ctx)),
        ("executed_trades", render_executed(ctx)),
        ("history", render_history(ctx)),
        ("feedback", feedback),
    ]);
    Ok(RenderedPrompt { system: system_prompt(set, ctx)?, user: fill(name, template, &fields)? })
}
