use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, ResourceVector};

/// Directed per-pair resource amounts: `from → to → units`.
///
/// Used both for promises (who owes whom) and for deliveries. Zero vectors
/// are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairLedger(BTreeMap<AgentId, BTreeMap<AgentId, ResourceVector>>);

impl PairLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `units` to the `from → to` entry.
    pub fn add(&mut self, from: &AgentId, to: &AgentId, units: &ResourceVector) {
        if units.is_zero() {
            return;
        }
        let row = self.0.entry(from.clone()).or_default();
        match row.get_mut(to) {
            Some(existing) => existing.add_assign(units),
            None => {
                row.insert(to.clone(), units.clone());
            }
        }
    }

    pub fn get(&self, from: &AgentId, to: &AgentId) -> Option<&ResourceVector> {
        self.0.get(from).and_then(|row| row.get(to))
    }

    /// Amount owed or sent `from → to`, zero-filled to arity `n`.
    pub fn amount(&self, from: &AgentId, to: &AgentId, n: usize) -> ResourceVector {
        self.get(from, to).cloned().unwrap_or_else(|| ResourceVector::zeros(n))
    }

    pub fn outgoing(&self, from: &AgentId) -> BTreeMap<AgentId, ResourceVector> {
        self.0.get(from).cloned().unwrap_or_default()
    }

    pub fn total_outgoing(&self, from: &AgentId, n: usize) -> ResourceVector {
        let mut total = ResourceVector::zeros(n);
        if let Some(row) = self.0.get(from) {
            for v in row.values() {
                total.add_assign(v);
            }
        }
        total
    }

    pub fn total_incoming(&self, to: &AgentId, n: usize) -> ResourceVector {
        let mut total = ResourceVector::zeros(n);
        for row in self.0.values() {
            if let Some(v) = row.get(to) {
                total.add_assign(v);
            }
        }
        total
    }

    /// All `(from, to, units)` entries in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&AgentId, &AgentId, &ResourceVector)> {
        self.0
            .iter()
            .flat_map(|(from, row)| row.iter().map(move |(to, v)| (from, to, v)))
    }

    pub fn is_empty(&self) -> bool {
        self.0.values().all(|row| row.is_empty())
    }

    /// Only the entries where `agent` is sender or recipient.
    pub fn involving(&self, agent: &AgentId) -> PairLedger {
        let mut out = PairLedger::new();
        for (from, to, v) in self.entries() {
            if from == agent || to == agent {
                out.add(from, to, v);
            }
        }
        out
    }
}
