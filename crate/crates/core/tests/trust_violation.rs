mod support;

use sociex::orchestrator::config_file::load_config_file;
use sociex::orchestrator::events::validate_events;
use sociex::orchestrator::runner::run_experiment;
use sociex::orchestrator::EventBody;
use support::{check_trust_violation, roster_for, workspace_file};

#[test]
fn shipped_preset_breaks_once_and_recovers() {
    let loaded = load_config_file(&workspace_file("configs/trust-violation.toml")).unwrap();
    let cfg = loaded.config;
    assert_eq!(cfg.rounds, 20);
    for seed in [0, 1, 7, 12345] {
        let (_, logs) = run_experiment(&cfg, &loaded.snapshot, seed, &roster_for(&cfg), None).unwrap();
        validate_events(&logs[0]).unwrap();
        check_trust_violation(&logs[0], "carol", 10, 14).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    }
}

#[test]
fn violation_round_is_configurable() {
    let cfg = support::scripted_config(&["tit-for-tat", "tit-for-tat", "trust-violator:4"], 9);
    let (_, logs) = run_experiment(&cfg, "k4", 3, &roster_for(&cfg), None).unwrap();
    check_trust_violation(&logs[0], "carol", 4, 8).unwrap();
    // Not the default round.
    assert!(check_trust_violation(&logs[0], "carol", 5, 8).is_err());
}

#[test]
fn honest_society_has_no_breaches() {
    let cfg = support::scripted_config(&["tit-for-tat", "tit-for-tat", "tit-for-tat"], 12);
    let (_, logs) = run_experiment(&cfg, "honest", 3, &roster_for(&cfg), None).unwrap();
    let breaches = logs[0]
        .iter()
        .filter_map(|e| match &e.body {
            EventBody::ExchangeResolved(o) => Some(o.breaches.iter().filter(|b| b.signed_breach > 0).count()),
            _ => None,
        })
        .sum::<usize>();
    assert_eq!(breaches, 0);
}
