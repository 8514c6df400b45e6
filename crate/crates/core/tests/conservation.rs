mod support;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use sociex::orchestrator::events::validate_events;
use sociex::orchestrator::runner::run_repetition;
use sociex::policies::SCRIPTED_POLICY_NAMES;
use support::invariants::check_conservation;
use support::{roster_for, scripted_config};

#[test]
fn thousand_random_scripted_runs_conserve_resources() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let names: Vec<String> = SCRIPTED_POLICY_NAMES
        .iter()
        .map(|n| if *n == "trust-violator" { format!("trust-violator:{}", 1 + rng.random_range(0..10)) } else { n.to_string() })
        .collect();
    for run in 0..1000 {
        let picks: Vec<&str> = (0..3).map(|_| names[rng.random_range(0..names.len())].as_str()).collect();
        let mut cfg = scripted_config(&picks, 10);
        if rng.random_bool(0.5) {
            cfg.initial_allocation = sociex::domain::InitialAllocation::SpecializedOnly;
            cfg.apply_initial_allocation();
        }
        let roster = roster_for(&cfg);
        let seed = rng.random();
        let log = run_repetition(&cfg, "cons", 0, seed, &roster).into_events();
        validate_events(&log).unwrap_or_else(|e| panic!("run {run} ({picks:?}, seed {seed}): {e}"));
        check_conservation(&cfg, &log).unwrap_or_else(|e| panic!("run {run} ({picks:?}, seed {seed}): {e}"));
    }
}
