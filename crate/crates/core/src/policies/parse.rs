//! Turning free-form model output into typed decisions.
//!
//! A reply is prose followed by a fenced block tagged `decision` holding one
//! JSON object. A `json` fence or a bare trailing object is accepted too.
//! The prose becomes the public utterance (or the private rationale).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DecisionKind, PolicyContext, PolicyDecision, PolicyError};
use crate::domain::{normalize_labeled, Affinity, AgentId, BdiState, ProposalId, ProposalStatus, ResourceVector};
use crate::exchange::AllocationDecision;
use crate::negotiation::{ActionKind, AgentAction};

/// One negotiation action as it appears on the wire, for models and for the
/// HTTP API alike.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ActionDto {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub give: Option<BTreeMap<String, i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receive: Option<BTreeMap<String, i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WireActions {
    #[serde(default)]
    pub actions: Vec<ActionDto>,
}

impl ActionDto {
    pub fn from_action(action: &AgentAction, labels: &[String]) -> Self {
        let rationale = (!action.rationale.is_empty()).then(|| action.rationale.clone());
        let as_map = |v: &ResourceVector| v.to_label_map(labels).into_iter().map(|(k, q)| (k, q as i64)).collect();
        match &action.kind {
            ActionKind::Propose { counterpart, give, receive } => ActionDto {
                kind: "PROPOSE".into(),
                to: Some(counterpart.to_string()),
                give: Some(as_map(give)),
                receive: Some(as_map(receive)),
                rationale,
                ..Default::default()
            },
            ActionKind::Accept { proposal_id } => ActionDto {
                kind: "ACCEPT".into(),
                proposal_id: Some(proposal_id.to_string()),
                rationale,
                ..Default::default()
            },
            ActionKind::Reject { proposal_id } => ActionDto {
                kind: "REJECT".into(),
                proposal_id: Some(proposal_id.to_string()),
                rationale,
                ..Default::default()
            },
            ActionKind::Pass => ActionDto { kind: "PASS".into(), rationale, ..Default::default() },
        }
    }

    /// Structural conversion only; legality is checked by [`validate_actions`].
    pub fn to_action(&self, labels: &[String]) -> Result<AgentAction, String> {
        let kind = match self.kind.trim().to_ascii_uppercase().as_str() {
            "PROPOSE" => {
                let to = self.to.as_deref().ok_or("PROPOSE needs a \"to\" agent")?;
                let give = normalize_labeled(self.give.as_ref().unwrap_or(&BTreeMap::new()), labels)
                    .map_err(|e| format!("PROPOSE give: {e}"))?;
                let receive = normalize_labeled(self.receive.as_ref().unwrap_or(&BTreeMap::new()), labels)
                    .map_err(|e| format!("PROPOSE receive: {e}"))?;
                ActionKind::Propose { counterpart: AgentId::new(to.trim()), give, receive }
            }
            k @ ("ACCEPT" | "REJECT") => {
                let id = self.proposal_id.as_deref().ok_or_else(|| format!("{k} needs a \"proposal_id\""))?;
                let id = ProposalId(id.trim().to_string());
                if k == "ACCEPT" {
                    ActionKind::Accept { proposal_id: id }
                } else {
                    ActionKind::Reject { proposal_id: id }
                }
            }
            "PASS" => ActionKind::Pass,
            other => return Err(format!("unknown action type {other:?}")),
        };
        Ok(AgentAction { kind, rationale: self.rationale.clone().unwrap_or_default() })
    }
}

/// Checks a turn's actions against the visible negotiation state.
pub fn validate_actions(actions: &[AgentAction], ctx: &PolicyContext) -> Result<(), String> {
    let me = ctx.me();
    let mut answered = BTreeSet::new();
    for a in actions {
        match &a.kind {
            ActionKind::Pass => {}
            ActionKind::Propose { counterpart, give, receive } => {
                if counterpart == me {
                    return Err("you cannot propose a trade to yourself".into());
                }
                if ctx.peer(counterpart).is_none() {
                    return Err(format!("unknown agent {counterpart:?}"));
                }
                if give.is_zero() && receive.is_zero() {
                    return Err("a proposal must move at least one unit".into());
                }
                if !give.fits_within(&ctx.holdings) {
                    return Err(format!(
                        "you offer {} but hold only {}",
                        give.display_with(&ctx.resource_labels),
                        ctx.holdings.display_with(&ctx.resource_labels)
                    ));
                }
            }
            ActionKind::Accept { proposal_id } | ActionKind::Reject { proposal_id } => {
                let neg = ctx.negotiation.as_ref().ok_or("no negotiation is open")?;
                let p = neg.proposal(proposal_id).ok_or_else(|| format!("no proposal {proposal_id}"))?;
                if &p.counterpart != me {
                    return Err(format!("proposal {proposal_id} is not addressed to you"));
                }
                if p.status != ProposalStatus::Pending {
                    return Err(format!("proposal {proposal_id} is no longer pending"));
                }
                if !answered.insert(proposal_id.clone()) {
                    return Err(format!("proposal {proposal_id} answered twice"));
                }
            }
        }
    }
    Ok(())
}

struct Extracted<'a> {
    prose: &'a str,
    json: &'a str,
}

fn fenced<'a>(text: &'a str, tag: &str) -> Option<Extracted<'a>> {
    let open = format!("```{tag}");
    let start = text.rfind(&open)?;
    let body_start = start + open.len();
    let body = &text[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(Extracted { prose: &text[..start], json: &body[..end] })
}

fn bare_object(text: &str) -> Option<Extracted<'_>> {
    let end = text.rfind('}')?;
    // Walk candidate openings from the left so the outermost object wins.
    for (start, _) in text[..end].match_indices('{') {
        let candidate = &text[start..=end];
        if serde_json::from_str::<Value>(candidate).map(|v| v.is_object()).unwrap_or(false) {
            return Some(Extracted { prose: &text[..start], json: candidate });
        }
    }
    None
}

fn extract(text: &str) -> Result<(String, Value), String> {
    let found = fenced(text, "decision").or_else(|| fenced(text, "json")).or_else(|| bare_object(text));
    let found = found.ok_or("no ```decision block found")?;
    let value: Value =
        serde_json::from_str(found.json.trim()).map_err(|e| format!("decision block is not valid JSON: {e}"))?;
    if !value.is_object() {
        return Err("decision block must be a JSON object".into());
    }
    Ok((found.prose.trim().to_string(), value))
}

fn yes_no(text: &str) -> Option<bool> {
    text.split(|c: char| !c.is_ascii_alphabetic())
        .filter(|w| !w.is_empty())
        .find_map(|w| match w.to_ascii_lowercase().as_str() {
            "yes" => Some(true),
            "no" => Some(false),
            _ => None,
        })
}

fn parse_continue(text: &str) -> Result<PolicyDecision, String> {
    if let Ok((_, v)) = extract(text) {
        if let Some(b) = v.get("continue").and_then(Value::as_bool) {
            return Ok(PolicyDecision::ContinueOrPass(b));
        }
    }
    yes_no(text).map(PolicyDecision::ContinueOrPass).ok_or_else(|| "answer with yes or no".to_string())
}

fn parse_reply(text: &str, ctx: &PolicyContext) -> Result<PolicyDecision, String> {
    let (prose, value) = extract(text)?;
    let wire: WireActions = serde_json::from_value(value).map_err(|e| format!("bad \"actions\" list: {e}"))?;
    let actions = wire
        .actions
        .iter()
        .map(|a| a.to_action(&ctx.resource_labels))
        .collect::<Result<Vec<_>, _>>()?;
    validate_actions(&actions, ctx)?;
    Ok(PolicyDecision::TurnReply { utterance: prose, actions })
}

#[derive(Deserialize)]
struct WireAllocation {
    allocations: BTreeMap<String, BTreeMap<String, i64>>,
}

fn parse_allocation(text: &str, ctx: &PolicyContext) -> Result<PolicyDecision, String> {
    let (prose, value) = extract(text)?;
    let wire: WireAllocation = serde_json::from_value(value).map_err(|e| format!("bad \"allocations\": {e}"))?;
    let mut outgoing = BTreeMap::new();
    for (to, amounts) in wire.allocations {
        let to = AgentId::new(to.trim());
        if &to == ctx.me() {
            return Err("you cannot send resources to yourself".into());
        }
        if ctx.peer(&to).is_none() {
            return Err(format!("unknown agent {to:?}"));
        }
        let v = normalize_labeled(&amounts, &ctx.resource_labels).map_err(|e| format!("allocation to {to}: {e}"))?;
        if !v.is_zero() {
            outgoing.insert(to, v);
        }
    }
    Ok(PolicyDecision::Allocation(AllocationDecision { actor: ctx.me().clone(), outgoing, rationale: prose }))
}

fn text_field(v: &Value, key: &str) -> Result<String, String> {
    match v.get(key) {
        Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.trim().to_string()),
        Some(Value::Array(items)) if !items.is_empty() => {
            Ok(items.iter().map(|i| i.as_str().map(str::to_string).unwrap_or_else(|| i.to_string())).collect::<Vec<_>>().join("\n"))
        }
        Some(Value::Object(_)) => Ok(v[key].to_string()),
        _ => Err(format!("\"{key}\" must be a non-empty string")),
    }
}

fn parse_bdi(text: &str, ctx: &PolicyContext) -> Result<PolicyDecision, String> {
    let (_, v) = extract(text)?;
    Ok(PolicyDecision::BdiUpdate(BdiState {
        beliefs: text_field(&v, "beliefs")?,
        desires: text_field(&v, "desires")?,
        intentions: text_field(&v, "intentions")?,
        updated_at_round: ctx.round,
    }))
}

fn parse_affinity(text: &str, ctx: &PolicyContext) -> Result<PolicyDecision, String> {
    let (_, v) = extract(text)?;
    let scores = v.get("affinity").and_then(Value::as_object).ok_or("missing \"affinity\" object")?;
    let mut out = ctx.affinity_out.clone();
    for (id, score) in scores {
        let id = AgentId::new(id.trim());
        if !out.contains_key(&id) {
            return Err(format!("unknown agent {id:?} in affinity"));
        }
        let n = score
            .as_u64()
            .or_else(|| score.as_f64().filter(|f| f.fract() == 0.0 && *f >= 0.0).map(|f| f as u64))
            .ok_or_else(|| format!("affinity for {id} must be an integer"))?;
        let a = u8::try_from(n).map_err(|_| format!("affinity for {id} out of range"))?;
        out.insert(id, Affinity::new(a)?);
    }
    Ok(PolicyDecision::AffinityUpdate(out))
}

/// Parses a raw model reply for the given decision kind.
pub fn parse_llm_decision(kind: DecisionKind, text: &str, ctx: &PolicyContext) -> Result<PolicyDecision, PolicyError> {
    let parsed = match kind {
        DecisionKind::ContinueOrPass => parse_continue(text),
        DecisionKind::TurnReply => parse_reply(text, ctx),
        DecisionKind::Allocation => parse_allocation(text, ctx),
        DecisionKind::BdiUpdate => parse_bdi(text, ctx),
        DecisionKind::AffinityUpdate => parse_affinity(text, ctx),
    };
    parsed.map_err(PolicyError::MalformedDecision)
}
