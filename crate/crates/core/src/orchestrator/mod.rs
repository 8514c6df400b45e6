//! Round loop, event log, replay and experiment runner.

pub mod config_file;
pub mod events;
pub mod game;
pub mod replay;
pub mod runner;

pub use config_file::{load_config_file, ConfigFileError, LoadedConfig};
pub use events::{EventBody, EventRecord, LogError, RunStatus, SCHEMA_VERSION};
pub use game::{Game, GameError, GameSnapshot, Pending};
pub use replay::{replay, replay_events, ReplayError};
pub use runner::{drive, run_experiment, run_repetition, Roster, RunError, RunManifest, StepOutcome};

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `master` with splitmix64 steps.
///
/// Each policy call gets its own seed from (repetition, agent, round, kind,
/// call index), so an extra call by one agent never shifts another's stream.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(master), |acc, &p| splitmix64(acc ^ p))
}

pub fn repetition_seed(master: u64, repetition: u32) -> u64 {
    derive_seed(master, &[0x5245_5045_4154, repetition as u64])
}
