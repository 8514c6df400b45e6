//! Flat tables for plotting, with CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::*;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl MetricTable {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "{}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    pub fn write_csv(&self, dir: &Path) -> std::io::Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        fs::write(&path, self.to_csv())?;
        Ok(path)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.4}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub mode: ExchangeValueMode,
    /// Defaults to the proportional segmentation for the first log's length.
    pub segmentation: Option<PhaseSegmentation>,
    pub include_expired: bool,
    pub breach_window: u32,
    pub breach_buckets: Vec<(i64, i64)>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            mode: ExchangeValueMode::default(),
            segmentation: None,
            include_expired: true,
            breach_window: 1,
            breach_buckets: DEFAULT_BREACH_BUCKETS.to_vec(),
        }
    }
}

/// All tables, plus one note per metric that could not be computed.
pub fn tables(logs: &[&[EventRecord]], opts: &AnalysisOptions) -> Result<(Vec<MetricTable>, Vec<String>), AnalysisError> {
    let mut out = Vec::new();
    let mut notes = Vec::new();
    let first = run_start(logs.first().ok_or_else(|| AnalysisError::InsufficientData("no logs".into()))?)?;

    let mut ev = MetricTable::new("exchange_value", &["run_id", "repetition", "round", "seq", "agent", "mode", "value"]);
    let mut aff = MetricTable::new("affinity_received", &["run_id", "repetition", "round", "agent", "mean_received"]);
    for log in logs {
        let series = exchange_value_series(log, opts.mode)?;
        let resolved: Vec<_> = outcomes(log).collect();
        for (agent, values) in &series {
            for ((e, o), v) in resolved.iter().zip(values) {
                ev.push(vec![
                    e.run_id.clone(),
                    e.repetition.to_string(),
                    o.round.to_string(),
                    e.seq.to_string(),
                    agent.to_string(),
                    opts.mode.as_str().into(),
                    v.to_string(),
                ]);
            }
        }
        let head = &log[0];
        for (agent, values) in affinity_received_series(log)? {
            for (round, v) in values.into_iter().enumerate() {
                aff.push(vec![
                    head.run_id.clone(),
                    head.repetition.to_string(),
                    round.to_string(),
                    agent.to_string(),
                    fmt_f(v),
                ]);
            }
        }
    }
    out.push(ev);
    out.push(aff);

    let seg = opts.segmentation.clone().unwrap_or_else(|| PhaseSegmentation::default_for(first.config.rounds));
    let mut pm = MetricTable::new("phase_medians", &["phase", "first_round", "last_round", "mode", "samples", "median"]);
    match phase_medians(logs, &seg, opts.mode) {
        Ok(rows) => {
            for r in rows {
                pm.push(vec![
                    r.phase,
                    r.rounds.start().to_string(),
                    r.rounds.end().to_string(),
                    opts.mode.as_str().into(),
                    r.samples.to_string(),
                    opt(r.median),
                ]);
            }
        }
        Err(e) => notes.push(format!("phase_medians: {e}")),
    }
    out.push(pm);

    let mut aq = MetricTable::new(
        "abundance_acceptance",
        &["quartile", "min_ratio", "max_ratio", "accepted", "rejected", "expired", "include_expired", "acceptance_rate_pct"],
    );
    let mut asamp = MetricTable::new(
        "abundance_samples",
        &["run_id", "repetition", "round", "seq", "proposal_id", "recipient", "ratio", "status", "quartile"],
    );
    match abundance_acceptance(logs, opts.include_expired) {
        Ok(a) => {
            for q in &a.quartiles {
                aq.push(vec![
                    q.bucket.clone(),
                    opt(q.min_ratio),
                    opt(q.max_ratio),
                    q.accepted.to_string(),
                    q.rejected.to_string(),
                    q.expired.to_string(),
                    a.include_expired.to_string(),
                    opt(q.acceptance_rate),
                ]);
            }
            for (s, b) in &a.samples {
                asamp.push(vec![
                    s.run_id.clone(),
                    s.repetition.to_string(),
                    s.round.to_string(),
                    s.seq.to_string(),
                    s.proposal_id.clone(),
                    s.recipient.to_string(),
                    fmt_f(s.ratio),
                    format!("{:?}", s.status).to_lowercase(),
                    QUARTILE_LABELS[*b].into(),
                ]);
            }
        }
        Err(e) => notes.push(format!("abundance_acceptance: {e}")),
    }
    out.push(aq);
    out.push(asamp);

    let mut br = MetricTable::new("breach_response", &["bucket_lo", "bucket_hi", "window", "samples", "mean_change_pct"]);
    let mut bs = MetricTable::new(
        "breach_samples",
        &["run_id", "repetition", "round", "seq", "debtor", "creditor", "breach", "before", "after", "change_pct"],
    );
    match breach_response(logs, &opts.breach_buckets, opts.breach_window) {
        Ok(r) => {
            for b in &r.buckets {
                br.push(vec![
                    b.lo.to_string(),
                    b.hi.to_string(),
                    r.window.to_string(),
                    b.samples.to_string(),
                    opt(b.mean_change_pct),
                ]);
            }
            for s in &r.samples {
                bs.push(vec![
                    s.run_id.clone(),
                    s.repetition.to_string(),
                    s.round.to_string(),
                    s.seq.to_string(),
                    s.debtor.to_string(),
                    s.creditor.to_string(),
                    s.breach.to_string(),
                    s.before.to_string(),
                    s.after.to_string(),
                    fmt_f(s.change_pct),
                ]);
            }
            if r.excluded_zero_baseline + r.excluded_no_followup + r.unbucketed > 0 {
                notes.push(format!(
                    "breach_response: {} zero-baseline, {} without follow-up round, {} above the last bucket",
                    r.excluded_zero_baseline, r.excluded_no_followup, r.unbucketed
                ));
            }
        }
        Err(e) => notes.push(format!("breach_response: {e}")),
    }
    out.push(br);
    out.push(bs);

    let mut sv = MetricTable::new("svo_outcomes", &["group", "n", "mean", "sd", "single_sample", "repetitions", "se"]);
    let mut sc = MetricTable::new(
        "breach_scatter",
        &["group", "run_id", "repetition", "round", "debtor", "creditor", "signed_breach", "class"],
    );
    match svo_outcome_stats_by_profile(logs) {
        Ok(s) => {
            for g in &s.groups {
                sv.push(vec![
                    g.group.clone(),
                    g.n.to_string(),
                    fmt_f(g.mean),
                    fmt_f(g.sd),
                    g.single_sample.to_string(),
                    g.repetitions.to_string(),
                    fmt_f(g.se),
                ]);
            }
            for p in &s.scatter {
                sc.push(vec![
                    p.group.clone(),
                    p.run_id.clone(),
                    p.repetition.to_string(),
                    p.round.to_string(),
                    p.debtor.to_string(),
                    p.creditor.to_string(),
                    p.signed_breach.to_string(),
                    p.class.as_str().into(),
                ]);
            }
        }
        Err(e) => notes.push(format!("svo_outcomes: {e}")),
    }
    out.push(sv);
    out.push(sc);
    Ok((out, notes))
}

pub fn summary_report(tables: &[MetricTable], notes: &[String]) -> String {
    let mut s = String::new();
    for t in tables {
        let _ = writeln!(s, "{} ({} rows)", t.name, t.rows.len());
        if t.rows.len() <= 8 {
            let _ = writeln!(s, "  {}", t.columns.join("\t"));
            for r in &t.rows {
                let _ = writeln!(s, "  {}", r.join("\t"));
            }
        }
    }
    for n in notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}

/// Writes every table as `<out_dir>/<name>.csv` plus `summary.txt`.
pub fn analyze(logs: &[&[EventRecord]], opts: &AnalysisOptions, out_dir: &Path) -> Result<String, AnalysisError> {
    let (tables, notes) = tables(logs, opts)?;
    fs::create_dir_all(out_dir).map_err(|e| AnalysisError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    for t in &tables {
        t.write_csv(out_dir).map_err(|e| AnalysisError::Io(format!("cannot write {}: {e}", t.name)))?;
    }
    let report = summary_report(&tables, &notes);
    let _ = fs::write(out_dir.join("summary.txt"), &report);
    Ok(report)
}
