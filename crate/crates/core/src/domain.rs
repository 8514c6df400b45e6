//! Shared domain types: resources, agents, affinity, BDI state, proposals and
//! the experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::LlmSettings;

/// Identifier of an agent in the society.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Dense resource-type index in `0..N`.
pub type ResourceType = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResourceError {
    #[error("negative quantity {quantity} for resource type {resource}")]
    NegativeQuantity { resource: String, quantity: i64 },
    #[error("unknown resource type {0}")]
    UnknownResourceType(String),
    #[error("resource vector has {found} entries, expected {expected}")]
    Arity { expected: usize, found: usize },
}

/// Per-type unit counts. Always holds exactly N entries.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceVector(Vec<u64>);

impl ResourceVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn from_units(units: Vec<u64>) -> Self {
        Self(units)
    }

    /// `n` entries, all zero except `resource` which holds `amount`.
    pub fn single(n: usize, resource: ResourceType, amount: u64) -> Self {
        let mut v = Self::zeros(n);
        v.0[resource] = amount;
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, resource: ResourceType) -> u64 {
        self.0.get(resource).copied().unwrap_or(0)
    }

    pub fn set(&mut self, resource: ResourceType, amount: u64) {
        self.0[resource] = amount;
    }

    pub fn units(&self) -> &[u64] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&q| q == 0)
    }

    pub fn add_assign(&mut self, other: &ResourceVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += *b;
        }
    }

    pub fn plus(&self, other: &ResourceVector) -> ResourceVector {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    /// Component-wise subtraction; `None` if any component would go negative.
    pub fn checked_sub(&self, other: &ResourceVector) -> Option<ResourceVector> {
        let units = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()?;
        Some(ResourceVector(units))
    }

    pub fn saturating_sub(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector(self.0.iter().zip(&other.0).map(|(a, b)| a.saturating_sub(*b)).collect())
    }

    /// True when every component of `self` is ≤ the matching one in `other`.
    pub fn fits_within(&self, other: &ResourceVector) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn min(&self, other: &ResourceVector) -> ResourceVector {
        ResourceVector(self.0.iter().zip(&other.0).map(|(a, b)| *a.min(b)).collect())
    }

    pub fn map(&self, f: impl Fn(u64) -> u64) -> ResourceVector {
        ResourceVector(self.0.iter().map(|&q| f(q)).collect())
    }

    /// Renders as `A:5 B:0 C:2` using the given labels.
    pub fn display_with(&self, labels: &[String]) -> String {
        self.0
            .iter()
            .enumerate()
            .map(|(i, q)| format!("{}:{}", label_of(labels, i), q))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Label-keyed map with only the non-zero entries.
    pub fn to_label_map(&self, labels: &[String]) -> BTreeMap<String, u64> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, q)| **q > 0)
            .map(|(i, q)| (label_of(labels, i), *q))
            .collect()
    }
}

fn label_of(labels: &[String], i: usize) -> String {
    labels.get(i).cloned().unwrap_or_else(|| i.to_string())
}

/// Builds a full-arity vector from a sparse `type → count` map.
///
/// Counts are signed so negative input is reported rather than wrapped.
pub fn normalize_resource_vector(
    raw: &BTreeMap<ResourceType, i64>,
    n: usize,
) -> Result<ResourceVector, ResourceError> {
    let mut out = ResourceVector::zeros(n);
    for (&resource, &quantity) in raw {
        if resource >= n {
            return Err(ResourceError::UnknownResourceType(resource.to_string()));
        }
        if quantity < 0 {
            return Err(ResourceError::NegativeQuantity { resource: resource.to_string(), quantity });
        }
        out.0[resource] = quantity as u64;
    }
    Ok(out)
}

/// Same as [`normalize_resource_vector`] but keyed by display label.
pub fn normalize_labeled(
    raw: &BTreeMap<String, i64>,
    labels: &[String],
) -> Result<ResourceVector, ResourceError> {
    let mut by_index = BTreeMap::new();
    for (label, &quantity) in raw {
        let idx = labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| ResourceError::UnknownResourceType(label.clone()))?;
        if quantity < 0 {
            return Err(ResourceError::NegativeQuantity { resource: label.clone(), quantity });
        }
        *by_index.entry(idx).or_insert(0) += quantity;
    }
    normalize_resource_vector(&by_index, labels.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Svo {
    Proself,
    Prosocial,
}

impl FromStr for Svo {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "proself" => Ok(Svo::Proself),
            "prosocial" => Ok(Svo::Prosocial),
            other => Err(format!("unknown SVO category `{other}`")),
        }
    }
}

/// Who decides for an agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Controller {
    Scripted(String),
    Llm,
    Human,
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Controller::Scripted(name) => write!(f, "scripted:{name}"),
            Controller::Llm => f.write_str("llm"),
            Controller::Human => f.write_str("human"),
        }
    }
}

impl FromStr for Controller {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llm" => Ok(Controller::Llm),
            "human" => Ok(Controller::Human),
            other => match other.strip_prefix("scripted:") {
                Some(name) if !name.is_empty() => Ok(Controller::Scripted(name.to_string())),
                _ => Err(format!("unknown controller `{other}` (expected llm, human or scripted:<policy>)")),
            },
        }
    }
}

impl Serialize for Controller {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Controller {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub agent_id: AgentId,
    pub display_name: String,
    pub specialization: ResourceType,
    pub svo: Svo,
    pub rei_rational: u8,
    pub rei_experiential: u8,
    pub initial_holdings: ResourceVector,
    pub controller: Controller,
}

/// An affinity score, always within `1..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Affinity(u8);

impl Affinity {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 5;
    pub const NEUTRAL: Affinity = Affinity(3);

    pub fn new(score: u8) -> Result<Self, String> {
        if (Self::MIN..=Self::MAX).contains(&score) {
            Ok(Self(score))
        } else {
            Err(format!("affinity score {score} outside 1..=5"))
        }
    }

    /// Clamps any integer into the valid range.
    pub fn clamped(score: i64) -> Self {
        Self(score.clamp(Self::MIN as i64, Self::MAX as i64) as u8)
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Affinity {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Affinity::new(v)
    }
}

impl From<Affinity> for u8 {
    fn from(a: Affinity) -> u8 {
        a.0
    }
}

/// Directed affinity scores: owner → target → score. No self-directed entries.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AffinityLedger(BTreeMap<AgentId, BTreeMap<AgentId, Affinity>>);

impl AffinityLedger {
    /// Every ordered pair of distinct agents at `initial`.
    pub fn uniform(agents: &[AgentId], initial: Affinity) -> Self {
        let mut rows = BTreeMap::new();
        for owner in agents {
            let row = agents
                .iter()
                .filter(|t| *t != owner)
                .map(|t| (t.clone(), initial))
                .collect();
            rows.insert(owner.clone(), row);
        }
        Self(rows)
    }

    pub fn get(&self, owner: &AgentId, target: &AgentId) -> Option<Affinity> {
        self.0.get(owner).and_then(|row| row.get(target)).copied()
    }

    pub fn set(&mut self, owner: &AgentId, target: &AgentId, score: Affinity) -> Result<(), String> {
        if owner == target {
            return Err(format!("agent {owner} cannot rate itself"));
        }
        self.0.entry(owner.clone()).or_default().insert(target.clone(), score);
        Ok(())
    }

    pub fn row(&self, owner: &AgentId) -> BTreeMap<AgentId, Affinity> {
        self.0.get(owner).cloned().unwrap_or_default()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&AgentId, &BTreeMap<AgentId, Affinity>)> {
        self.0.iter()
    }

    /// Mean score others hold toward `target`.
    pub fn mean_received(&self, target: &AgentId) -> Option<f64> {
        let scores: Vec<f64> = self
            .0
            .iter()
            .filter(|(owner, _)| *owner != target)
            .filter_map(|(_, row)| row.get(target))
            .map(|a| a.get() as f64)
            .collect();
        if scores.is_empty() {
            None
        } else {
            Some(scores.iter().sum::<f64>() / scores.len() as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BdiState {
    pub beliefs: String,
    pub desires: String,
    pub intentions: String,
    pub updated_at_round: u32,
}

impl BdiState {
    pub fn is_complete(&self) -> bool {
        !self.beliefs.trim().is_empty() && !self.desires.trim().is_empty() && !self.intentions.trim().is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialAllocation {
    /// `initial_units` of every resource type.
    UniformAll,
    /// `initial_units` of the agent's own specialization only.
    SpecializedOnly,
}

/// Per-combination-size point values: `coefficients[k-1]` is the worth of a
/// set of `k` distinct resource types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueCoefficients(pub Vec<u64>);

impl ValueCoefficients {
    pub fn standard() -> Self {
        Self(vec![1, 4, 9])
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    /// Names of the first violated ordering constraints, e.g. `"r2 > r1"`.
    pub fn ordering_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(&first) = self.0.first() {
            if first == 0 {
                out.push("r1 > 0".to_string());
            }
        }
        for k in 1..self.0.len() {
            if self.0[k] <= self.0[k - 1] {
                out.push(format!("r{} > r{}", k + 1, k));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Display labels of the resource types; N is its length.
    pub resource_labels: Vec<String>,
    pub agents: Vec<AgentProfile>,
    pub rounds: u32,
    pub injection_per_round: u64,
    pub value_coefficients: ValueCoefficients,
    pub max_discussion_rounds: u32,
    pub initial_allocation: InitialAllocation,
    pub initial_units: u64,
    pub rng_seed: u64,
    pub repetitions: u32,
    pub llm: LlmSettings,
}

impl ExperimentConfig {
    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn num_resource_types(&self) -> usize {
        self.resource_labels.len()
    }

    pub fn agent_ids(&self) -> Vec<AgentId> {
        self.agents.iter().map(|a| a.agent_id.clone()).collect()
    }

    pub fn profile(&self, id: &AgentId) -> Option<&AgentProfile> {
        self.agents.iter().find(|a| &a.agent_id == id)
    }

    pub fn resource_index(&self, label: &str) -> Option<ResourceType> {
        self.resource_labels.iter().position(|l| l == label)
    }

    /// M = N = 3, ten rounds, S = 15, r = (1, 4, 9), three discussion cycles,
    /// five units of every type, five repetitions. All agents are scripted
    /// honest reciprocators unless the roster is overridden.
    pub fn standard() -> Self {
        let labels: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let names = [("alice", "Alice"), ("bob", "Bob"), ("carol", "Carol")];
        let agents = names
            .iter()
            .enumerate()
            .map(|(i, (id, name))| AgentProfile {
                agent_id: AgentId::new(*id),
                display_name: name.to_string(),
                specialization: i,
                svo: Svo::Prosocial,
                rei_rational: 3,
                rei_experiential: 3,
                initial_holdings: ResourceVector::zeros(labels.len()),
                controller: Controller::Scripted("honest-reciprocator".into()),
            })
            .collect();
        let mut cfg = Self {
            resource_labels: labels,
            agents,
            rounds: 10,
            injection_per_round: 15,
            value_coefficients: ValueCoefficients::standard(),
            max_discussion_rounds: 3,
            initial_allocation: InitialAllocation::UniformAll,
            initial_units: 5,
            rng_seed: 0,
            repetitions: 5,
            llm: LlmSettings::default(),
        };
        cfg.apply_initial_allocation();
        cfg
    }

    /// Recomputes every agent's initial holdings from the allocation mode.
    pub fn apply_initial_allocation(&mut self) {
        let n = self.num_resource_types();
        for agent in &mut self.agents {
            agent.initial_holdings = initial_holdings_for(self.initial_allocation, self.initial_units, n, agent.specialization);
        }
    }

    pub fn set_controllers(&mut self, controllers: &[Controller]) {
        for (agent, c) in self.agents.iter_mut().zip(controllers) {
            agent.controller = c.clone();
        }
    }
}

pub fn initial_holdings_for(
    mode: InitialAllocation,
    units: u64,
    n: usize,
    specialization: ResourceType,
) -> ResourceVector {
    match mode {
        InitialAllocation::UniformAll => ResourceVector::from_units(vec![units; n]),
        InitialAllocation::SpecializedOnly => ResourceVector::single(n, specialization, units),
    }
}

/// Result of [`validate_config`]: empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            f.write_str("ok")
        } else {
            f.write_str(&self.violations.join("; "))
        }
    }
}

pub fn validate_config(cfg: &ExperimentConfig) -> ValidationReport {
    let mut v = Vec::new();
    let n = cfg.num_resource_types();
    if cfg.num_agents() < 2 {
        v.push("M ≥ 2 fails".to_string());
    }
    if n < 2 {
        v.push("N ≥ 2 fails".to_string());
    }
    if cfg.rounds < 1 {
        v.push("T ≥ 1 fails".to_string());
    }
    if cfg.max_discussion_rounds < 1 {
        v.push("max_discussion_rounds ≥ 1 fails".to_string());
    }
    if cfg.repetitions < 1 {
        v.push("repetitions ≥ 1 fails".to_string());
    }
    if cfg.value_coefficients.0.len() != n {
        v.push(format!(
            "value coefficient count {} ≠ N = {n}",
            cfg.value_coefficients.0.len()
        ));
    }
    for violation in cfg.value_coefficients.ordering_violations() {
        v.push(format!("{violation} fails"));
    }
    let mut seen = std::collections::BTreeSet::new();
    for agent in &cfg.agents {
        if !seen.insert(agent.agent_id.clone()) {
            v.push(format!("duplicate agent id {}", agent.agent_id));
        }
        if agent.agent_id.as_str().is_empty() {
            v.push("empty agent id".to_string());
        }
        if agent.specialization >= n {
            v.push(format!("agent {} specialization {} is not a valid resource type", agent.agent_id, agent.specialization));
        }
        if !(1..=5).contains(&agent.rei_rational) {
            v.push(format!("agent {} rei_rational {} outside 1..=5", agent.agent_id, agent.rei_rational));
        }
        if !(1..=5).contains(&agent.rei_experiential) {
            v.push(format!("agent {} rei_experiential {} outside 1..=5", agent.agent_id, agent.rei_experiential));
        }
        if agent.initial_holdings.len() != n {
            v.push(format!("agent {} initial holdings have {} entries, expected {n}", agent.agent_id, agent.initial_holdings.len()));
        }
    }
    let mut labels = std::collections::BTreeSet::new();
    for l in &cfg.resource_labels {
        if !labels.insert(l) {
            v.push(format!("duplicate resource label {l}"));
        }
    }
    if let Err(e) = cfg.llm.validate() {
        v.push(e);
    }
    ValidationReport { violations: v }
}

/// Proposal identifier, unique within a run (`r{round}p{index}`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProposalId(pub String);

impl ProposalId {
    pub fn new(round: u32, index: usize) -> Self {
        Self(format!("r{round}p{index}"))
    }
}

impl fmt::Display for ProposalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStatus {
    Pending,
    Accepted,
    Rejected,
    Expired,
}

impl ProposalStatus {
    pub fn is_terminal(self) -> bool {
        self != ProposalStatus::Pending
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub proposal_id: ProposalId,
    pub proposer: AgentId,
    pub counterpart: AgentId,
    /// Units flowing proposer → counterpart.
    pub give: ResourceVector,
    /// Units flowing counterpart → proposer.
    pub receive: ResourceVector,
    pub status: ProposalStatus,
    pub created_in_discussion_round: u32,
}

impl Proposal {
    /// Moves a pending proposal to a terminal status.
    pub fn transition(&mut self, to: ProposalStatus) -> Result<(), ProposalStatus> {
        if self.status != ProposalStatus::Pending || to == ProposalStatus::Pending {
            return Err(self.status);
        }
        self.status = to;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_validates() {
        let cfg = ExperimentConfig::standard();
        let report = validate_config(&cfg);
        assert!(report.is_ok(), "{report}");
        assert_eq!(cfg.num_agents(), 3);
        assert_eq!(cfg.num_resource_types(), 3);
        assert_eq!(cfg.agents[0].initial_holdings.units(), &[5, 5, 5]);
    }

    #[test]
    fn coefficient_order_violation_reported() {
        let mut cfg = ExperimentConfig::standard();
        cfg.value_coefficients = ValueCoefficients(vec![4, 4, 9]);
        let report = validate_config(&cfg);
        assert!(report.contains("r2 > r1 fails"), "{report}");
    }

    #[test]
    fn single_agent_society_rejected() {
        let mut cfg = ExperimentConfig::standard();
        cfg.agents.truncate(1);
        assert!(validate_config(&cfg).contains("M ≥ 2 fails"));
    }

    #[test]
    fn rei_bounds_checked() {
        let mut cfg = ExperimentConfig::standard();
        cfg.agents[1].rei_rational = 6;
        cfg.agents[2].rei_experiential = 0;
        let report = validate_config(&cfg);
        assert_eq!(report.violations.len(), 2, "{report}");
    }

    #[test]
    fn normalize_zero_fills() {
        let raw = BTreeMap::from([(0, 5)]);
        assert_eq!(normalize_resource_vector(&raw, 3).unwrap().units(), &[5, 0, 0]);
        let full = BTreeMap::from([(0, 5), (1, 5), (2, 5)]);
        assert_eq!(normalize_resource_vector(&full, 3).unwrap().units(), &[5, 5, 5]);
    }

    #[test]
    fn normalize_rejects_negative_and_unknown() {
        let neg = BTreeMap::from([(0, -1)]);
        assert!(matches!(
            normalize_resource_vector(&neg, 3),
            Err(ResourceError::NegativeQuantity { .. })
        ));
        let unknown = BTreeMap::from([(3, 1)]);
        assert!(matches!(
            normalize_resource_vector(&unknown, 3),
            Err(ResourceError::UnknownResourceType(_))
        ));
        let labels: Vec<String> = vec!["A".into(), "B".into()];
        let bad = BTreeMap::from([("Z".to_string(), 1)]);
        assert!(normalize_labeled(&bad, &labels).is_err());
    }

    #[test]
    fn specialized_only_allocation() {
        let mut cfg = ExperimentConfig::standard();
        cfg.initial_allocation = InitialAllocation::SpecializedOnly;
        cfg.apply_initial_allocation();
        assert_eq!(cfg.agents[1].initial_holdings.units(), &[0, 5, 0]);
    }

    #[test]
    fn affinity_bounds() {
        assert!(Affinity::new(0).is_err());
        assert!(Affinity::new(6).is_err());
        assert_eq!(Affinity::clamped(9).get(), 5);
        assert_eq!(Affinity::clamped(-3).get(), 1);
        let ids = vec![AgentId::from("a"), AgentId::from("b")];
        let mut ledger = AffinityLedger::uniform(&ids, Affinity::NEUTRAL);
        assert!(ledger.set(&ids[0], &ids[0], Affinity::NEUTRAL).is_err());
        assert_eq!(ledger.get(&ids[0], &ids[0]), None);
        assert_eq!(ledger.mean_received(&ids[1]), Some(3.0));
    }

    #[test]
    fn proposal_status_is_monotone() {
        let mut p = Proposal {
            proposal_id: ProposalId::new(1, 0),
            proposer: "a".into(),
            counterpart: "b".into(),
            give: ResourceVector::single(3, 0, 1),
            receive: ResourceVector::zeros(3),
            status: ProposalStatus::Pending,
            created_in_discussion_round: 1,
        };
        p.transition(ProposalStatus::Accepted).unwrap();
        assert_eq!(p.transition(ProposalStatus::Rejected), Err(ProposalStatus::Accepted));
        assert_eq!(p.status, ProposalStatus::Accepted);
    }

    #[test]
    fn controller_round_trips_through_text() {
        for text in ["llm", "human", "scripted:pass-bot"] {
            assert_eq!(text.parse::<Controller>().unwrap().to_string(), text);
        }
        assert!("scripted:".parse::<Controller>().is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalization_is_idempotent(entries in proptest::collection::btree_map(0usize..4, 0i64..50, 0..4)) {
                let once = normalize_resource_vector(&entries, 4).unwrap();
                let as_map: BTreeMap<ResourceType, i64> =
                    once.units().iter().enumerate().map(|(i, q)| (i, *q as i64)).collect();
                let twice = normalize_resource_vector(&as_map, 4).unwrap();
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn affinity_stays_in_range(deltas in proptest::collection::vec(-3i64..=3, 0..40)) {
                let mut score = Affinity::NEUTRAL;
                for d in deltas {
                    score = Affinity::clamped(score.get() as i64 + d);
                    prop_assert!((1..=5).contains(&score.get()));
                }
            }
        }
    }
}
