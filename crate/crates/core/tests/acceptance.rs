//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fail.

mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use sociex::analysis::*;
use sociex::domain::{Controller, Proposal, ProposalId, ProposalStatus, ValueCoefficients};
use sociex::ledger::PairLedger;
use sociex::llm::{CassetteMode, LlmClient};
use sociex::negotiation::CloseReason;
use sociex::orchestrator::events::{encode_log, read_log, validate_events, Injection, NegotiationClosed};
use sociex::orchestrator::runner::{build_roster, run_experiment, run_repetition};
use sociex::orchestrator::{load_config_file, replay, EventBody, EventRecord, RunStatus};
use sociex::policies::{PromptSet, SCRIPTED_POLICY_NAMES};
use sociex::scoring::{compensation, holding_value, BreachRecord};
use sociex::session::{SessionManager, SessionOptions, SessionPhase};
use sociex::{ExperimentConfig, ResourceVector};
use support::invariants::{check_conservation, fuzz_phase};
use support::mock_llm::{draws_malformed, text_reply, universal_reply, MockLlm, MALFORMED};
use support::{check_trust_violation, id, roster_for, scripted_config, v, workspace_file, LogBuilder, Packer};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

fn scoring_exactness() -> Check {
    let h = ResourceVector::from_units(vec![10, 15, 20]);
    let coeffs = ValueCoefficients::standard();
    let started = Instant::now();
    let got = holding_value(&h, &coeffs).map_err(|e| e.to_string())?.total_points;
    let took = started.elapsed();
    ensure(got == 115, format!("got {got}"))?;
    ensure(took < Duration::from_millis(1), format!("took {took:?}"))?;
    Ok(format!("115 in {took:?}"))
}

fn scoring_oracle() -> Check {
    let coeffs = ValueCoefficients::standard();
    let started = Instant::now();
    let mut packer = Packer::new(&[1, 4, 9]);
    let mut cases = 0;
    for a in 0..=12 {
        for b in 0..=12 {
            for c in 0..=12 {
                let got = holding_value(&ResourceVector::from_units(vec![a, b, c]), &coeffs)
                    .map_err(|e| e.to_string())?
                    .total_points;
                let want = packer.points(&[a, b, c]);
                ensure(got == want, format!("({a},{b},{c}): closed form {got}, exhaustive {want}"))?;
                cases += 1;
            }
        }
    }
    let took = started.elapsed();
    ensure(cases == 2197, format!("{cases} cases"))?;
    ensure(took < Duration::from_secs(2), format!("took {took:?}"))?;
    Ok(format!("{cases} cases in {took:?}"))
}

fn negotiation_termination() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let mut reasons = [0usize; 2];
    for case in 0..10_000u32 {
        let (reason, _) = fuzz_phase(&mut rng, 1 + case % 10).map_err(|e| format!("case {case}: {e}"))?;
        reasons[matches!(reason, CloseReason::RoundsExhausted) as usize] += 1;
    }
    Ok(format!("10000 phases closed ({} all-passed, {} exhausted)", reasons[0], reasons[1]))
}

fn conservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let names: Vec<String> = SCRIPTED_POLICY_NAMES
        .iter()
        .map(|n| if *n == "trust-violator" { format!("trust-violator:{}", rng.random_range(1..=10)) } else { n.to_string() })
        .collect();
    let mut exchanges = 0usize;
    for run in 0..1000 {
        let picks: Vec<&str> = (0..3).map(|_| names[rng.random_range(0..names.len())].as_str()).collect();
        let cfg = scripted_config(&picks, 10);
        let seed = rng.random();
        let log = run_repetition(&cfg, "acc", 0, seed, &roster_for(&cfg)).into_events();
        let fail = |e: String| format!("run {run} {picks:?} seed {seed}: {e}");
        validate_events(&log).map_err(|e| fail(e.to_string()))?;
        check_conservation(&cfg, &log).map_err(fail)?;
        exchanges += log.iter().filter(|e| matches!(e.body, EventBody::ExchangeResolved(_))).count();
    }
    Ok(format!("1000 runs, {exchanges} exchange resolutions"))
}

fn deterministic_replay() -> Check {
    let cfg = scripted_config(&["tit-for-tat", "random-trader", "trust-violator:5"], 10);
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (ma, _) = run_experiment(&cfg, "acc", 2024, &roster_for(&cfg), Some(a.path())).map_err(|e| e.to_string())?;
    let (mb, _) = run_experiment(&cfg, "acc", 2024, &roster_for(&cfg), Some(b.path())).map_err(|e| e.to_string())?;
    ensure(ma.artifacts == mb.artifacts, "artifact lists differ")?;
    let log_rel = ma.artifacts.iter().find(|p| p.ends_with(".ndjson")).ok_or("no log written")?;
    for rel in &ma.artifacts {
        let x = std::fs::read(a.path().join(rel)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(rel)).map_err(|e| e.to_string())?;
        ensure(x == y, format!("{rel} differs"))?;
    }
    let sa = replay(&a.path().join(log_rel)).map_err(|e| e.to_string())?;
    let sb = replay(&b.path().join(log_rel)).map_err(|e| e.to_string())?;
    ensure(sa == sb, "replayed snapshots differ")?;
    let log = read_log(&a.path().join(log_rel)).map_err(|e| e.to_string())?;
    let EventBody::RunEnd(end) = &log.last().ok_or("empty log")?.body else { return Err("no run_end".into()) };
    ensure(sa.holdings == end.holdings && sa.values == end.values, "replay disagrees with run_end")?;
    Ok(format!("{} files byte-identical, replay matches run_end", ma.artifacts.len()))
}

fn trust_violation() -> Check {
    let loaded = load_config_file(&workspace_file("configs/trust-violation.toml")).map_err(|e| e.to_string())?;
    let cfg = loaded.config;
    ensure(cfg.rounds == 20, format!("preset has {} rounds", cfg.rounds))?;
    let (_, logs) = run_experiment(&cfg, &loaded.snapshot, 1, &roster_for(&cfg), None).map_err(|e| e.to_string())?;
    check_trust_violation(&logs[0], "carol", 10, 14)?;
    Ok("full breach at round 10, zero inflow at 11, resumed by 14".into())
}

fn metrics_fidelity() -> Check {
    // Phase medians: delivered-out values {3, 4}, {6, 6}, {6, 7}.
    let mut two = ExperimentConfig::standard();
    two.agents.truncate(2);
    two.rounds = 3;
    let mut log = LogBuilder::new(two.clone(), 0);
    log.outcome(1, &[("alice", "bob", &[3, 0, 0]), ("bob", "alice", &[0, 2, 2])], vec![]);
    log.outcome(2, &[("alice", "bob", &[6, 0, 0]), ("bob", "alice", &[0, 6, 0])], vec![]);
    log.outcome(3, &[("alice", "bob", &[1, 5, 0]), ("bob", "alice", &[0, 0, 7])], vec![]);
    let seg = PhaseSegmentation { initial: 1..=1, thriving: 2..=2, endgame: 3..=3 };
    let medians: Vec<f64> = phase_medians(&[&log.events], &seg, ExchangeValueMode::DeliveredOut)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|m| m.median.unwrap_or(f64::NAN))
        .collect();
    ensure(medians.iter().zip([3.0, 6.0, 6.0]).all(|(g, w)| close(*g, w)), format!("medians {medians:?}"))?;

    // Quartiles: recipient means are 5, ratios 0.2, 0.8, 1.4 and 2.0.
    let cfg = ExperimentConfig::standard();
    let mut log = LogBuilder::new(cfg, 0);
    log.round = 1;
    let holdings_after =
        [(id("alice"), v(&[5, 5, 5])), (id("bob"), v(&[1, 4, 10])), (id("carol"), v(&[7, 4, 4]))].into_iter().collect();
    log.push(EventBody::Injection(Injection { amounts: BTreeMap::new(), holdings_after }));
    let prop = |n: usize, to: &str, give: &[u64], status| Proposal {
        proposal_id: ProposalId::new(1, n),
        proposer: id("alice"),
        counterpart: id(to),
        give: v(give),
        receive: v(&[0, 0, 0]),
        status,
        created_in_discussion_round: 1,
    };
    log.push(EventBody::NegotiationClosed(NegotiationClosed {
        reason: CloseReason::AllPassed,
        discussion_rounds: 1,
        proposals: vec![
            prop(1, "bob", &[1, 0, 0], ProposalStatus::Accepted),
            prop(2, "bob", &[0, 2, 0], ProposalStatus::Accepted),
            prop(3, "carol", &[3, 0, 0], ProposalStatus::Rejected),
            prop(4, "bob", &[0, 0, 1], ProposalStatus::Rejected),
        ],
        promises: PairLedger::new(),
    }));
    let rates: Vec<f64> = abundance_acceptance(&[&log.events], true)
        .map_err(|e| e.to_string())?
        .quartiles
        .iter()
        .map(|q| q.acceptance_rate.unwrap_or(f64::NAN))
        .collect();
    ensure(rates.iter().zip([100.0, 100.0, 0.0, 0.0]).all(|(g, w)| close(*g, w)), format!("rates {rates:?}"))?;

    // Breach response: bob shorts alice by 3; alice's outflow goes 6 -> 4.
    let mut log = LogBuilder::new(two, 0);
    let breach = BreachRecord::new(1, id("bob"), id("alice"), v(&[0, 5, 0]), v(&[0, 2, 0]));
    log.outcome(1, &[("alice", "bob", &[6, 0, 0]), ("bob", "alice", &[0, 2, 0])], vec![breach]);
    log.outcome(2, &[("alice", "bob", &[4, 0, 0])], vec![]);
    let r = breach_response(&[&log.events], &DEFAULT_BREACH_BUCKETS, 1).map_err(|e| e.to_string())?;
    let got = r.buckets[0].mean_change_pct.unwrap_or(f64::NAN);
    ensure(close(got, -100.0 / 3.0), format!("bucket 0-5 change {got}"))?;
    Ok(format!("medians {medians:?}, rates {rates:?}, breach {got:.4}%"))
}

fn mock_llm_end_to_end() -> Check {
    std::env::set_var("SOCIEX_ACCEPTANCE_KEY", "sk-acceptance");
    let mock = MockLlm::start(|body, _| {
        if draws_malformed(body, 10) {
            (200, text_reply(MALFORMED))
        } else {
            (200, universal_reply())
        }
    });
    let mut cfg = ExperimentConfig::standard();
    cfg.repetitions = 1;
    cfg.llm = mock.settings("SOCIEX_ACCEPTANCE_KEY");
    for a in &mut cfg.agents {
        a.controller = Controller::Llm;
    }
    ensure(cfg.agents.len() == 3 && cfg.rounds == 10, "not the standard society")?;
    let started = Instant::now();
    let client = LlmClient::new(cfg.llm.clone(), CassetteMode::Live).map_err(|e| e.to_string())?;
    let roster = build_roster(&cfg, Some(Arc::new(client)), Arc::new(PromptSet::builtin())).map_err(|e| e.to_string())?;
    let (_, logs) = run_experiment(&cfg, "mock", 11, &roster, None).map_err(|e| e.to_string())?;
    let took = started.elapsed();
    let log = &logs[0];
    validate_events(log).map_err(|e| e.to_string())?;
    let EventBody::RunEnd(end) = &log.last().ok_or("empty log")?.body else { return Err("no run_end".into()) };
    ensure(end.status == RunStatus::Completed, format!("run ended {:?}: {:?}", end.status, end.error))?;
    let malformed = mock.stats.malformed.load(std::sync::atomic::Ordering::SeqCst);
    let retries = mock.stats.retries.load(std::sync::atomic::Ordering::SeqCst);
    let requests = mock.stats.requests.load(std::sync::atomic::Ordering::SeqCst);
    ensure(malformed > 0 && retries > 0, format!("malformed {malformed}, retries {retries}"))?;
    ensure(took < Duration::from_secs(30), format!("took {took:?}"))?;
    Ok(format!("{requests} requests, {malformed} malformed, {retries} retried, {took:?}"))
}

fn play_passively(s: &sociex::session::Session) -> Result<(), String> {
    for _ in 0..1000 {
        let r = match s.state().phase {
            SessionPhase::AwaitingTurn => s.submit_turn("", &[]),
            SessionPhase::AwaitingAllocation => s.submit_allocation(&BTreeMap::new(), None),
            SessionPhase::AwaitingAffinity => s.submit_affinity(&BTreeMap::new()),
            SessionPhase::Finished => return Ok(()),
            SessionPhase::BetweenRounds => return Err("session stuck between rounds".into()),
        };
        r.map_err(|e| e.to_string())?;
    }
    Err("session did not finish".into())
}

fn compensation_check() -> Check {
    let want = [(0u64, 10.0), (115, 29.166_666_666_666_668), (300, 60.0)];
    for (value, amount) in want {
        let got = compensation(value as f64);
        ensure(close(got, amount), format!("V={value}: {got}"))?;
    }
    // Through the session result: one round, the human gets 15 of its own
    // type, so these starting holdings end at 115 and 300 points.
    let manager = SessionManager::new();
    let scripted = Controller::Scripted("pass-bot".into());
    for (start, value) in [([("A", 10), ("B", 20), ("C", 0)], 115u64), ([("A", 33), ("B", 33), ("C", 21)], 300)] {
        let opts = SessionOptions {
            rounds: Some(1),
            seed: Some(1),
            co_players: Some(vec![scripted.clone(), scripted.clone()]),
            initial_holdings: Some(start.iter().map(|(k, q)| (k.to_string(), *q)).collect()),
            ..Default::default()
        };
        let s = manager.create_session(&opts).map_err(|e| e.to_string())?;
        play_passively(&s)?;
        let r = s.result().map_err(|e| e.to_string())?;
        ensure(r.total_value == value, format!("session ended at {} points, expected {value}", r.total_value))?;
        let amount = want.iter().find(|w| w.0 == value).map(|w| w.1).unwrap_or(f64::NAN);
        ensure(close(r.compensation, amount), format!("V={value}: session reports {}", r.compensation))?;
    }
    Ok("V 0/115/300 -> 10/29.1667/60".into())
}

/// Lower median, computed without the library.
fn median(mut xs: Vec<u64>) -> Option<f64> {
    xs.sort_unstable();
    xs.get(xs.len().checked_sub(1)? / 2).map(|&x| x as f64)
}

fn analysis_pipeline() -> Check {
    let mut cfg = scripted_config(&["honest-reciprocator", "random-trader", "proself-defector"], 10);
    cfg.repetitions = 5;
    let (_, logs) = run_experiment(&cfg, "pipeline", 77, &roster_for(&cfg), None).map_err(|e| e.to_string())?;
    let text: String = logs.iter().map(|l| encode_log(l)).collect();
    ensure(text.lines().count() == logs.iter().map(Vec::len).sum::<usize>(), "log lines")?;
    let refs: Vec<&[EventRecord]> = logs.iter().map(Vec::as_slice).collect();

    // Phase medians against a direct count of delivered units.
    let seg = PhaseSegmentation::default_for(10);
    let got = phase_medians(&refs, &seg, ExchangeValueMode::DeliveredOut).map_err(|e| e.to_string())?;
    let agents = cfg.agent_ids();
    for (m, (_, range)) in got.iter().zip(seg.phases()) {
        let mut samples = Vec::new();
        for log in &logs {
            for e in log {
                if let EventBody::ExchangeResolved(o) = &e.body {
                    if range.contains(&o.round) {
                        samples.extend(agents.iter().map(|a| o.delivered.total_outgoing(a, 3).total()));
                    }
                }
            }
        }
        ensure(m.samples == samples.len() && m.median == median(samples), format!("{} median mismatch", m.phase))?;
    }

    // Quartile acceptance covers every rated proposal once.
    let acc = abundance_acceptance(&refs, true).map_err(|e| e.to_string())?;
    let counted: usize = acc.quartiles.iter().map(|q| q.accepted + q.rejected + q.expired).sum();
    ensure(acc.quartiles.len() == 4 && counted == acc.samples.len(), "quartile counts")?;
    let closed: BTreeSet<(u32, String)> = logs
        .iter()
        .flat_map(|l| l.iter())
        .filter_map(|e| match &e.body {
            EventBody::NegotiationClosed(c) => Some(c.proposals.iter().map(move |p| (e.repetition, p.proposal_id.to_string()))),
            _ => None,
        })
        .flatten()
        .collect();
    ensure(acc.samples.len() <= closed.len() && !acc.samples.is_empty(), "no proposals rated")?;

    // SVO statistics against the final values.
    let finals: Vec<f64> = logs
        .iter()
        .filter_map(|l| match &l.last()?.body {
            EventBody::RunEnd(end) => Some(end.values.values().map(|&x| x as f64).collect::<Vec<_>>()),
            _ => None,
        })
        .flatten()
        .collect();
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    let sd = (finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (finals.len() as f64 - 1.0)).sqrt();
    let svo = svo_outcome_stats(&[("all".into(), refs.clone())]).map_err(|e| e.to_string())?;
    let g = &svo.groups[0];
    ensure(g.n == 15 && close(g.mean, mean) && close(g.sd, sd), format!("svo {g:?} vs mean {mean} sd {sd}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    analyze(&refs, &AnalysisOptions::default(), dir.path()).map_err(|e| e.to_string())?;
    let csvs = std::fs::read_dir(dir.path()).map_err(|e| e.to_string())?.count();
    ensure(csvs > 0, "no tables written")?;
    let medians: Vec<_> = got.iter().map(|m| m.median.unwrap_or(f64::NAN)).collect();
    Ok(format!("medians {medians:?}, {} rated offers, value {mean:.1} ± {sd:.1}, {csvs} files", acc.samples.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("scoring exactness", scoring_exactness),
        ("scoring oracle", scoring_oracle),
        ("negotiation termination", negotiation_termination),
        ("conservation", conservation),
        ("deterministic replay", deterministic_replay),
        ("trust-violation fixture", trust_violation),
        ("metrics fidelity", metrics_fidelity),
        ("mock-llm end-to-end", mock_llm_end_to_end),
        ("compensation", compensation_check),
        ("analysis pipeline", analysis_pipeline),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
