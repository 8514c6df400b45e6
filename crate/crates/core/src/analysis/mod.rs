//! Statistics over event logs.
//!
//! Every function here is a pure function of the logs it is given. Tables
//! for plotting are produced by [`tables`].

mod table;

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgentId, ExperimentConfig, ProposalStatus, Svo};
use crate::exchange::RoundOutcome;
use crate::orchestrator::events::{EventBody, EventRecord, RunStart};
use crate::scoring::{points, DeliveryClass};

pub use table::{analyze, summary_report, tables, AnalysisOptions, MetricTable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid phase segmentation: {0}")]
    InvalidSegmentation(String),
    #[error("log does not start with run_start")]
    MissingRunStart,
    #[error("{0}")]
    Io(String),
}

fn run_start(log: &[EventRecord]) -> Result<&RunStart, AnalysisError> {
    match log.first().map(|e| &e.body) {
        Some(EventBody::RunStart(s)) => Ok(s),
        _ => Err(AnalysisError::MissingRunStart),
    }
}

fn outcomes(log: &[EventRecord]) -> impl Iterator<Item = (&EventRecord, &RoundOutcome)> {
    log.iter().filter_map(|e| match &e.body {
        EventBody::ExchangeResolved(o) => Some((e, o)),
        _ => None,
    })
}

/// What counts as an agent's "exchange value" in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeValueMode {
    /// Units the agent delivered to others.
    #[default]
    DeliveredOut,
    /// Units delivered plus units received.
    DeliveredPlusReceived,
    /// Points of the delivered bundle under the run's value coefficients.
    DeliveredOutValue,
}

impl ExchangeValueMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExchangeValueMode::DeliveredOut => "delivered_out",
            ExchangeValueMode::DeliveredPlusReceived => "delivered_plus_received",
            ExchangeValueMode::DeliveredOutValue => "delivered_out_value",
        }
    }
}

impl std::str::FromStr for ExchangeValueMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "delivered_out" => Ok(Self::DeliveredOut),
            "delivered_plus_received" => Ok(Self::DeliveredPlusReceived),
            "delivered_out_value" => Ok(Self::DeliveredOutValue),
            other => Err(format!("unknown exchange value mode `{other}`")),
        }
    }
}

/// Per-agent series; element `i` belongs to the `i`-th resolved round.
pub type Series<T> = BTreeMap<AgentId, Vec<T>>;

fn exchange_value(outcome: &RoundOutcome, agent: &AgentId, n: usize, config: &ExperimentConfig, mode: ExchangeValueMode) -> u64 {
    let out = outcome.delivered.total_outgoing(agent, n);
    match mode {
        ExchangeValueMode::DeliveredOut => out.total(),
        ExchangeValueMode::DeliveredPlusReceived => out.total() + outcome.delivered.total_incoming(agent, n).total(),
        ExchangeValueMode::DeliveredOutValue => points(&out, &config.value_coefficients),
    }
}

pub fn exchange_value_series(log: &[EventRecord], mode: ExchangeValueMode) -> Result<Series<u64>, AnalysisError> {
    let start = run_start(log)?;
    let n = start.config.num_resource_types();
    let mut series: Series<u64> = start.config.agent_ids().into_iter().map(|a| (a, Vec::new())).collect();
    for (_, o) in outcomes(log) {
        for (agent, values) in series.iter_mut() {
            values.push(exchange_value(o, agent, n, &start.config, mode));
        }
    }
    Ok(series)
}

/// Mean score each agent receives from the others; element 0 is the
/// initial state, element `r` the state after round `r`'s updates.
pub fn affinity_received_series(log: &[EventRecord]) -> Result<Series<f64>, AnalysisError> {
    let start = run_start(log)?;
    let mut ledger = start.affinity.clone();
    let agents = start.config.agent_ids();
    let mut series: Series<f64> = agents.iter().map(|a| (a.clone(), Vec::new())).collect();
    let record = |ledger: &crate::domain::AffinityLedger, series: &mut Series<f64>| {
        for a in &agents {
            series.get_mut(a).expect("known").push(ledger.mean_received(a).unwrap_or(f64::NAN));
        }
    };
    record(&ledger, &mut series);
    for e in &log[1..] {
        match &e.body {
            EventBody::AffinityUpdate(u) => {
                for (target, score) in &u.scores {
                    let _ = ledger.set(&u.owner, target, *score);
                }
            }
            EventBody::RoundEnd(_) => record(&ledger, &mut series),
            _ => {}
        }
    }
    Ok(series)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseSegmentation {
    pub initial: RangeInclusive<u32>,
    pub thriving: RangeInclusive<u32>,
    pub endgame: RangeInclusive<u32>,
}

impl PhaseSegmentation {
    /// 1–2 / 3–8 / 9–10 for ten rounds, scaled proportionally otherwise.
    pub fn default_for(rounds: u32) -> Self {
        let edge = ((rounds as f64) * 0.2).round().max(1.0) as u32;
        let initial_end = edge.min(rounds);
        let endgame_start = (rounds + 1).saturating_sub(edge).max(initial_end + 1);
        Self { initial: 1..=initial_end, thriving: initial_end + 1..=endgame_start - 1, endgame: endgame_start..=rounds }
    }

    /// Checks that the three ranges tile `1..=rounds` in order.
    pub fn validate(&self, rounds: u32) -> Result<(), AnalysisError> {
        let err = |m: String| Err(AnalysisError::InvalidSegmentation(m));
        if *self.initial.start() != 1 {
            return err(format!("initial phase starts at {}, not 1", self.initial.start()));
        }
        let ranges = [("initial", &self.initial), ("thriving", &self.thriving), ("endgame", &self.endgame)];
        for w in ranges.windows(2) {
            if *w[1].1.start() != w[0].1.end() + 1 {
                return err(format!("gap or overlap between {} and {}", w[0].0, w[1].0));
            }
        }
        for (name, r) in ranges {
            if r.is_empty() {
                return err(format!("{name} phase is empty"));
            }
        }
        if *self.endgame.end() != rounds {
            return err(format!("endgame ends at {}, run has {rounds} rounds", self.endgame.end()));
        }
        Ok(())
    }

    pub fn phases(&self) -> [(&'static str, &RangeInclusive<u32>); 3] {
        [("initial", &self.initial), ("thriving", &self.thriving), ("endgame", &self.endgame)]
    }
}

/// Median with the lower middle element on even counts.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Some(v[(v.len() - 1) / 2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMedian {
    pub phase: String,
    pub rounds: RangeInclusive<u32>,
    pub samples: usize,
    pub median: Option<f64>,
}

/// Pools every agent-round exchange value inside each phase across `logs`.
pub fn phase_medians(
    logs: &[&[EventRecord]],
    seg: &PhaseSegmentation,
    mode: ExchangeValueMode,
) -> Result<Vec<PhaseMedian>, AnalysisError> {
    let mut pooled: [Vec<f64>; 3] = Default::default();
    for log in logs {
        let start = run_start(log)?;
        seg.validate(start.config.rounds)?;
        let n = start.config.num_resource_types();
        for (_, o) in outcomes(log) {
            for (i, (_, range)) in seg.phases().iter().enumerate() {
                if range.contains(&o.round) {
                    for agent in start.config.agent_ids() {
                        pooled[i].push(exchange_value(o, &agent, n, &start.config, mode) as f64);
                    }
                }
            }
        }
    }
    Ok(seg
        .phases()
        .iter()
        .zip(pooled.iter())
        .map(|((name, range), values)| PhaseMedian {
            phase: name.to_string(),
            rounds: (*range).clone(),
            samples: values.len(),
            median: lower_median(values),
        })
        .collect())
}

pub const QUARTILE_LABELS: [&str; 4] = ["scarce", "low", "high", "abundant"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbundanceSample {
    pub run_id: String,
    pub repetition: u32,
    pub round: u32,
    /// Seq of the `negotiation_closed` event holding the final status.
    pub seq: u64,
    pub proposal_id: String,
    pub recipient: AgentId,
    pub ratio: f64,
    pub status: ProposalStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileStat {
    pub bucket: String,
    pub min_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub expired: usize,
    /// Percent; `None` when the denominator is empty.
    pub acceptance_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbundanceAcceptance {
    pub include_expired: bool,
    pub quartiles: Vec<QuartileStat>,
    pub samples: Vec<(AbundanceSample, usize)>,
}

/// Ratio of the recipient's holding of what is offered to its mean holding,
/// averaged over the give leg weighted by offered quantity.
pub fn offer_abundance_ratio(holding: &[u64], give: &[u64]) -> Option<f64> {
    let mean = holding.iter().sum::<u64>() as f64 / holding.len() as f64;
    let offered: u64 = give.iter().sum();
    if mean == 0.0 || offered == 0 {
        return None;
    }
    let weighted: f64 = give.iter().zip(holding).map(|(&q, &h)| q as f64 * (h as f64 / mean)).sum();
    Some(weighted / offered as f64)
}

/// Rank-based quartile of each value; equal values share the bucket of the
/// lowest rank among them.
pub fn quartile_buckets(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let n = values.len();
    let mut out = vec![0; n];
    let mut first_rank = 0;
    for (rank, &i) in order.iter().enumerate() {
        if rank > 0 && values[order[rank - 1]] != values[i] {
            first_rank = rank;
        }
        out[i] = (first_rank * 4 / n).min(3);
    }
    out
}

pub fn abundance_acceptance(logs: &[&[EventRecord]], include_expired: bool) -> Result<AbundanceAcceptance, AnalysisError> {
    let mut samples = Vec::new();
    for log in logs {
        run_start(log)?;
        let mut holdings = None;
        for e in log.iter() {
            match &e.body {
                EventBody::Injection(i) => holdings = Some(i.holdings_after.clone()),
                EventBody::NegotiationClosed(c) => {
                    let h = holdings.as_ref().ok_or(AnalysisError::MissingRunStart)?;
                    for p in &c.proposals {
                        let Some(recipient_holding) = h.get(&p.counterpart) else { continue };
                        if let Some(ratio) = offer_abundance_ratio(recipient_holding.units(), p.give.units()) {
                            samples.push(AbundanceSample {
                                run_id: e.run_id.clone(),
                                repetition: e.repetition,
                                round: e.round,
                                seq: e.seq,
                                proposal_id: p.proposal_id.to_string(),
                                recipient: p.counterpart.clone(),
                                ratio,
                                status: p.status,
                            });
                        }
                    }
                }
                _ => {}
            }
        }
    }
    let ratios: Vec<f64> = samples.iter().map(|s| s.ratio).collect();
    let mut distinct = ratios.clone();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(AnalysisError::InsufficientData(format!(
            "{} distinct abundance ratios, need at least 4",
            distinct.len()
        )));
    }
    let buckets = quartile_buckets(&ratios);
    let mut quartiles: Vec<QuartileStat> = QUARTILE_LABELS
        .iter()
        .map(|l| QuartileStat {
            bucket: l.to_string(),
            min_ratio: None,
            max_ratio: None,
            accepted: 0,
            rejected: 0,
            expired: 0,
            acceptance_rate: None,
        })
        .collect();
    for (s, &b) in samples.iter().zip(&buckets) {
        let q = &mut quartiles[b];
        q.min_ratio = Some(q.min_ratio.map_or(s.ratio, |m| m.min(s.ratio)));
        q.max_ratio = Some(q.max_ratio.map_or(s.ratio, |m| m.max(s.ratio)));
        match s.status {
            ProposalStatus::Accepted => q.accepted += 1,
            ProposalStatus::Rejected => q.rejected += 1,
            ProposalStatus::Expired => q.expired += 1,
            ProposalStatus::Pending => {}
        }
    }
    for q in &mut quartiles {
        let denom = q.accepted + q.rejected + if include_expired { q.expired } else { 0 };
        q.acceptance_rate = (denom > 0).then(|| q.accepted as f64 * 100.0 / denom as f64);
    }
    Ok(AbundanceAcceptance { include_expired, quartiles, samples: samples.into_iter().zip(buckets).collect() })
}

/// Breach-size buckets as half-open `(lo, hi]` ranges.
pub const DEFAULT_BREACH_BUCKETS: [(i64, i64); 3] = [(0, 5), (5, 10), (10, 15)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreachSample {
    pub run_id: String,
    pub repetition: u32,
    pub round: u32,
    pub seq: u64,
    pub debtor: AgentId,
    pub creditor: AgentId,
    pub breach: i64,
    pub before: u64,
    pub after: u64,
    pub change_pct: f64,
    pub bucket: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreachBucket {
    pub lo: i64,
    pub hi: i64,
    pub samples: usize,
    pub mean_change_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreachResponse {
    pub window: u32,
    pub buckets: Vec<BreachBucket>,
    /// Breaches larger than the last bucket.
    pub unbucketed: usize,
    /// Breaches whose creditor had sent the debtor nothing that round.
    pub excluded_zero_baseline: usize,
    /// Breaches too close to the end of the run to observe the response.
    pub excluded_no_followup: usize,
    pub samples: Vec<BreachSample>,
}

/// How creditors change what they send a debtor after being shorted.
///
/// For an under-delivery by `d` to `c` in round `r`, the response is the
/// percent change in units `c` delivered to `d` from round `r` to `r + window`.
pub fn breach_response(
    logs: &[&[EventRecord]],
    buckets: &[(i64, i64)],
    window: u32,
) -> Result<BreachResponse, AnalysisError> {
    let window = window.max(1);
    let mut out = BreachResponse {
        window,
        buckets: buckets.iter().map(|&(lo, hi)| BreachBucket { lo, hi, samples: 0, mean_change_pct: None }).collect(),
        unbucketed: 0,
        excluded_zero_baseline: 0,
        excluded_no_followup: 0,
        samples: Vec::new(),
    };
    let mut sums = vec![0.0; buckets.len()];
    for log in logs {
        let start = run_start(log)?;
        let n = start.config.num_resource_types();
        let by_round: BTreeMap<u32, (&EventRecord, &RoundOutcome)> = outcomes(log).map(|(e, o)| (o.round, (e, o))).collect();
        for (&round, &(e, o)) in &by_round {
            for b in o.breaches.iter().filter(|b| b.signed_breach > 0) {
                let sent = |o: &RoundOutcome| o.delivered.amount(&b.creditor, &b.debtor, n).total();
                let before = sent(o);
                let Some((_, later)) = by_round.get(&(round + window)) else {
                    out.excluded_no_followup += 1;
                    continue;
                };
                if before == 0 {
                    out.excluded_zero_baseline += 1;
                    continue;
                }
                let after = sent(later);
                let change_pct = (after as f64 - before as f64) / before as f64 * 100.0;
                let bucket = buckets.iter().position(|&(lo, hi)| b.signed_breach > lo && b.signed_breach <= hi);
                match bucket {
                    Some(i) => {
                        out.buckets[i].samples += 1;
                        sums[i] += change_pct;
                    }
                    None => out.unbucketed += 1,
                }
                out.samples.push(BreachSample {
                    run_id: e.run_id.clone(),
                    repetition: e.repetition,
                    round,
                    seq: e.seq,
                    debtor: b.debtor.clone(),
                    creditor: b.creditor.clone(),
                    breach: b.signed_breach,
                    before,
                    after,
                    change_pct,
                    bucket,
                });
            }
        }
    }
    if out.samples.is_empty() {
        return Err(AnalysisError::InsufficientData("no breach with an observable response".into()));
    }
    for (bucket, sum) in out.buckets.iter_mut().zip(sums) {
        bucket.mean_change_pct = (bucket.samples > 0).then(|| sum / bucket.samples as f64);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 when `n = 1`.
    pub sd: f64,
    pub single_sample: bool,
    pub repetitions: usize,
    /// Standard error of the mean across repetition means.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreachPoint {
    pub group: String,
    pub run_id: String,
    pub repetition: u32,
    pub round: u32,
    pub debtor: AgentId,
    pub creditor: AgentId,
    pub signed_breach: i64,
    pub class: DeliveryClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvoOutcomeStats {
    pub groups: Vec<GroupStats>,
    pub scatter: Vec<BreachPoint>,
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn final_values(log: &[EventRecord]) -> Option<&BTreeMap<AgentId, u64>> {
    log.iter().rev().find_map(|e| match &e.body {
        EventBody::RunEnd(end) => Some(&end.values),
        _ => None,
    })
}

/// Final holding values pooled per group, plus every delivery record.
///
/// `groups` pairs a label with the logs of that condition (one log per
/// repetition). Agents are pooled within a group.
pub fn svo_outcome_stats(groups: &[(String, Vec<&[EventRecord]>)]) -> Result<SvoOutcomeStats, AnalysisError> {
    let mut out = SvoOutcomeStats { groups: Vec::new(), scatter: Vec::new() };
    for (label, logs) in groups {
        let mut pooled = Vec::new();
        let mut rep_means = Vec::new();
        for log in logs {
            run_start(log)?;
            let Some(values) = final_values(log) else { continue };
            let v: Vec<f64> = values.values().map(|&x| x as f64).collect();
            if !v.is_empty() {
                rep_means.push(mean_sd(&v).0);
            }
            pooled.extend(v);
            for (e, o) in outcomes(log) {
                for b in &o.breaches {
                    out.scatter.push(BreachPoint {
                        group: label.clone(),
                        run_id: e.run_id.clone(),
                        repetition: e.repetition,
                        round: o.round,
                        debtor: b.debtor.clone(),
                        creditor: b.creditor.clone(),
                        signed_breach: b.signed_breach,
                        class: b.class(),
                    });
                }
            }
        }
        if pooled.is_empty() {
            return Err(AnalysisError::InsufficientData(format!("group {label} has no finished runs")));
        }
        let (mean, sd) = mean_sd(&pooled);
        let se = if rep_means.len() < 2 { 0.0 } else { mean_sd(&rep_means).1 / (rep_means.len() as f64).sqrt() };
        out.groups.push(GroupStats {
            group: label.clone(),
            n: pooled.len(),
            mean,
            sd,
            single_sample: pooled.len() == 1,
            repetitions: rep_means.len(),
            se,
        });
    }
    Ok(out)
}

/// Splits agents of mixed-SVO runs by orientation: one group per SVO, each
/// pooling that orientation's agents across all logs.
pub fn svo_outcome_stats_by_profile(logs: &[&[EventRecord]]) -> Result<SvoOutcomeStats, AnalysisError> {
    let mut out = SvoOutcomeStats { groups: Vec::new(), scatter: Vec::new() };
    for svo in [Svo::Proself, Svo::Prosocial] {
        let label = match svo {
            Svo::Proself => "proself",
            Svo::Prosocial => "prosocial",
        };
        let mut pooled = Vec::new();
        let mut rep_means = Vec::new();
        for log in logs {
            let start = run_start(log)?;
            let members: Vec<AgentId> =
                start.config.agents.iter().filter(|a| a.svo == svo).map(|a| a.agent_id.clone()).collect();
            if members.is_empty() {
                continue;
            }
            if let Some(values) = final_values(log) {
                let v: Vec<f64> = members.iter().filter_map(|m| values.get(m)).map(|&x| x as f64).collect();
                if !v.is_empty() {
                    rep_means.push(mean_sd(&v).0);
                    pooled.extend(v);
                }
            }
            for (e, o) in outcomes(log) {
                for b in o.breaches.iter().filter(|b| members.contains(&b.debtor)) {
                    out.scatter.push(BreachPoint {
                        group: label.into(),
                        run_id: e.run_id.clone(),
                        repetition: e.repetition,
                        round: o.round,
                        debtor: b.debtor.clone(),
                        creditor: b.creditor.clone(),
                        signed_breach: b.signed_breach,
                        class: b.class(),
                    });
                }
            }
        }
        if pooled.is_empty() {
            continue;
        }
        let (mean, sd) = mean_sd(&pooled);
        let se = if rep_means.len() < 2 { 0.0 } else { mean_sd(&rep_means).1 / (rep_means.len() as f64).sqrt() };
        out.groups.push(GroupStats {
            group: label.into(),
            n: pooled.len(),
            mean,
            sd,
            single_sample: pooled.len() == 1,
            repetitions: rep_means.len(),
            se,
        });
    }
    if out.groups.is_empty() {
        return Err(AnalysisError::InsufficientData("no finished runs".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_median_rule() {
        assert_eq!(lower_median(&[3.0, 4.0]), Some(3.0));
        assert_eq!(lower_median(&[7.0, 6.0]), Some(6.0));
        assert_eq!(lower_median(&[6.0, 6.0, 1.0]), Some(6.0));
        assert_eq!(lower_median(&[]), None);
    }

    #[test]
    fn default_segmentation_for_ten_rounds() {
        let s = PhaseSegmentation::default_for(10);
        assert_eq!((s.initial.clone(), s.thriving.clone(), s.endgame.clone()), (1..=2, 3..=8, 9..=10));
        s.validate(10).unwrap();
        assert!(s.validate(11).is_err());
        for t in 3..40 {
            PhaseSegmentation::default_for(t).validate(t).unwrap();
        }
    }

    #[test]
    fn overlapping_segmentation_is_rejected() {
        let s = PhaseSegmentation { initial: 1..=3, thriving: 3..=8, endgame: 9..=10 };
        assert!(matches!(s.validate(10), Err(AnalysisError::InvalidSegmentation(_))));
    }

    #[test]
    fn quartiles_partition_evenly_and_share_ties() {
        let b = quartile_buckets(&[2.0, 0.2, 1.4, 0.8]);
        assert_eq!(b, vec![3, 0, 2, 1]);
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let b = quartile_buckets(&v);
        let mut counts = [0; 4];
        for x in b {
            counts[x] += 1;
        }
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        assert_eq!(quartile_buckets(&[1.0, 1.0, 1.0, 5.0]), vec![0, 0, 0, 3]);
    }

    #[test]
    fn abundance_ratio_weights_by_quantity() {
        // Holding (2, 4, 6), mean 4: offering A gives 0.5, C gives 1.5.
        assert_eq!(offer_abundance_ratio(&[2, 4, 6], &[1, 0, 0]), Some(0.5));
        assert_eq!(offer_abundance_ratio(&[2, 4, 6], &[1, 0, 1]), Some(1.0));
        assert_eq!(offer_abundance_ratio(&[2, 4, 6], &[3, 0, 1]), Some(0.75));
        assert_eq!(offer_abundance_ratio(&[0, 0, 0], &[1, 0, 0]), None);
        assert_eq!(offer_abundance_ratio(&[1, 1, 1], &[0, 0, 0]), None);
    }

    #[test]
    fn mean_sd_degenerate_cases() {
        assert_eq!(mean_sd(&[300.0, 300.0]), (300.0, 0.0));
        assert_eq!(mean_sd(&[115.0]), (115.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }
}
