//! Resource value system, breach arithmetic and participant compensation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgentId, ResourceVector, ValueCoefficients};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoringError {
    #[error("value coefficients must be strictly increasing and positive ({0})")]
    CoefficientOrderViolation(String),
    #[error("holdings have {holdings} resource types but {coefficients} coefficients were given")]
    ArityMismatch { holdings: usize, coefficients: usize },
}

/// How a holding decomposes into sets of distinct resource types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueBreakdown {
    /// `combos[k-1]` = number of sets containing `k` distinct types.
    pub combos: Vec<u64>,
    pub total_points: u64,
}

impl ValueBreakdown {
    fn combo(&self, size: usize) -> u64 {
        self.combos.get(size - 1).copied().unwrap_or(0)
    }

    pub fn singles(&self) -> u64 {
        self.combo(1)
    }

    pub fn pairs(&self) -> u64 {
        self.combo(2)
    }

    pub fn triples(&self) -> u64 {
        self.combo(3)
    }
}

/// Points for a holding under the combination value system.
///
/// Quantities are sorted descending as `d1 ≥ d2 ≥ … ≥ dN` (with `d(N+1) = 0`);
/// the holding then packs into `d_k − d(k+1)` sets of `k` distinct types. For
/// three types this is `r3·min + r2·(mid − min) + r1·(max − mid)`.
pub fn holding_value(
    holdings: &ResourceVector,
    coefficients: &ValueCoefficients,
) -> Result<ValueBreakdown, ScoringError> {
    let r = coefficients.as_slice();
    if r.len() != holdings.len() {
        return Err(ScoringError::ArityMismatch { holdings: holdings.len(), coefficients: r.len() });
    }
    let violations = coefficients.ordering_violations();
    if !violations.is_empty() {
        return Err(ScoringError::CoefficientOrderViolation(violations.join(", ")));
    }
    let mut sorted: Vec<u64> = holdings.units().to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let n = sorted.len();
    let mut combos = vec![0u64; n];
    let mut total = 0u64;
    for k in 0..n {
        let next = sorted.get(k + 1).copied().unwrap_or(0);
        let layer = sorted[k] - next;
        combos[k] = layer;
        total += layer * r[k];
    }
    Ok(ValueBreakdown { combos, total_points: total })
}

/// Convenience for callers holding already-validated coefficients.
pub fn points(holdings: &ResourceVector, coefficients: &ValueCoefficients) -> u64 {
    holding_value(holdings, coefficients).map(|b| b.total_points).unwrap_or(0)
}

/// Signed promised-minus-delivered unit count, summed over resource types.
/// Positive is under-delivery, negative over-delivery.
pub fn compute_breach(promised: &ResourceVector, delivered: &ResourceVector) -> i64 {
    promised
        .units()
        .iter()
        .zip(delivered.units())
        .map(|(p, d)| *p as i64 - *d as i64)
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeliveryClass {
    UnderDelivered,
    Exact,
    OverDelivered,
}

impl DeliveryClass {
    pub fn of(signed_breach: i64) -> Self {
        match signed_breach.signum() {
            1 => DeliveryClass::UnderDelivered,
            -1 => DeliveryClass::OverDelivered,
            _ => DeliveryClass::Exact,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeliveryClass::UnderDelivered => "under_delivered",
            DeliveryClass::Exact => "exact",
            DeliveryClass::OverDelivered => "over_delivered",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreachRecord {
    pub round: u32,
    pub debtor: AgentId,
    pub creditor: AgentId,
    pub promised: ResourceVector,
    pub delivered: ResourceVector,
    pub signed_breach: i64,
}

impl BreachRecord {
    pub fn new(round: u32, debtor: AgentId, creditor: AgentId, promised: ResourceVector, delivered: ResourceVector) -> Self {
        let signed_breach = compute_breach(&promised, &delivered);
        Self { round, debtor, creditor, promised, delivered, signed_breach }
    }

    pub fn class(&self) -> DeliveryClass {
        DeliveryClass::of(self.signed_breach)
    }
}

/// Human-study payout: a base of 10 plus one sixth of the final value.
pub fn compensation(total_value: f64) -> f64 {
    10.0 + total_value / 6.0
}

/// Cents-rounded rendering; the stored amount stays full precision.
pub fn format_compensation(amount: f64) -> String {
    format!("{amount:.2}")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rv(units: &[u64]) -> ResourceVector {
        ResourceVector::from_units(units.to_vec())
    }

    #[test]
    fn worked_example_is_115() {
        let b = holding_value(&rv(&[10, 15, 20]), &ValueCoefficients::standard()).unwrap();
        assert_eq!((b.triples(), b.pairs(), b.singles()), (10, 5, 5));
        assert_eq!(b.total_points, 115);
    }

    #[test]
    fn small_holdings() {
        let r = ValueCoefficients::standard();
        assert_eq!(points(&rv(&[0, 0, 0]), &r), 0);
        assert_eq!(points(&rv(&[5, 5, 5]), &r), 45);
        assert_eq!(points(&rv(&[1, 1, 2]), &r), 10);
    }

    #[test]
    fn coefficient_order_enforced() {
        let err = holding_value(&rv(&[1, 1, 1]), &ValueCoefficients(vec![4, 4, 9])).unwrap_err();
        assert!(matches!(err, ScoringError::CoefficientOrderViolation(_)));
        assert!(holding_value(&rv(&[1, 1]), &ValueCoefficients::standard()).is_err());
    }

    #[test]
    fn breakdown_total_matches_coefficients() {
        let r = ValueCoefficients(vec![1, 4, 9, 16]);
        let b = holding_value(&rv(&[3, 7, 1, 4]), &r).unwrap();
        let recomputed: u64 = b.combos.iter().zip(r.as_slice()).map(|(c, v)| c * v).sum();
        assert_eq!(b.total_points, recomputed);
        assert_eq!(b.combos, vec![3, 1, 2, 1]);
    }

    #[test]
    fn breach_sign_convention() {
        assert_eq!(compute_breach(&rv(&[5, 0, 0]), &rv(&[5, 0, 0])), 0);
        assert_eq!(compute_breach(&rv(&[5, 0, 0]), &rv(&[2, 0, 0])), 3);
        assert_eq!(compute_breach(&rv(&[3, 2, 0]), &rv(&[3, 4, 0])), -2);
        assert_eq!(DeliveryClass::of(-2), DeliveryClass::OverDelivered);
    }

    #[test]
    fn compensation_formula() {
        assert_eq!(compensation(300.0), 60.0);
        assert_eq!(compensation(0.0), 10.0);
        assert!((compensation(115.0) - 29.166_666_666_666_668).abs() < 1e-9);
        assert_eq!(format_compensation(compensation(115.0)), "29.17");
    }
}
