//! C ABI for the simulator.
//!
//! Every fallible call returns a [`SociexStatus`] and writes results through
//! out-pointers. On failure, [`sociex_last_error_message`] describes what went
//! wrong on the calling thread. Strings handed out by this library must be
//! released with [`sociex_string_free`]; handles with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use sociex::domain::{validate_config, Controller, ValueCoefficients};
use sociex::negotiation::{AgentAction, NegotiationState};
use sociex::orchestrator::config_file::parse_config;
use sociex::orchestrator::events::{encode_log, EventBody, EventRecord};
use sociex::orchestrator::runner::{build_roster, run_experiment, RunError};
use sociex::policies::PromptSet;
use sociex::scoring::{compensation, holding_value};
use sociex::{AgentId, ExperimentConfig, ResourceVector};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SociexStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Config = 4,
    Negotiation = 5,
    Run = 6,
    Io = 7,
    Panic = 8,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<String>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg.into()));
}

struct Failure(SociexStatus, String);

type FfiResult<T> = Result<T, Failure>;

fn fail<T>(status: SociexStatus, msg: impl Into<String>) -> FfiResult<T> {
    Err(Failure(status, msg.into()))
}

/// Runs `f`, records its error (or panic) for the thread and maps it to a status.
fn guard(f: impl FnOnce() -> FfiResult<()>) -> SociexStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SociexStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            SociexStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return fail(SociexStatus::NullPointer, format!("{name} is null"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(SociexStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> FfiResult<Option<&'a str>> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn write_out<T>(out: *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return fail(SociexStatus::NullPointer, "output pointer is null");
    }
    out.write(value);
    Ok(())
}

fn to_c_string(s: String) -> FfiResult<*mut c_char> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(SociexStatus::InvalidArgument, "string contains an interior NUL byte".into()))
}

/// Message for the most recent failure on this thread, or null. Free with
/// [`sociex_string_free`].
#[no_mangle]
pub extern "C" fn sociex_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| match e.borrow().as_deref() {
        Some(m) => CString::new(m.replace('\0', " ")).map(CString::into_raw).unwrap_or(ptr::null_mut()),
        None => ptr::null_mut(),
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sociex_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string. Do not free.
#[no_mangle]
pub extern "C" fn sociex_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Points for a holding of `n` resource types under coefficients `coeffs`.
///
/// # Safety
/// `units` and `coeffs` must each point to `n` readable values.
#[no_mangle]
pub unsafe extern "C" fn sociex_holding_value(
    units: *const u64,
    coeffs: *const u64,
    n: usize,
    out_points: *mut u64,
) -> SociexStatus {
    guard(|| {
        if units.is_null() || coeffs.is_null() {
            return fail(SociexStatus::NullPointer, "units or coeffs is null");
        }
        let holding = ResourceVector::from_units(std::slice::from_raw_parts(units, n).to_vec());
        let r = ValueCoefficients(std::slice::from_raw_parts(coeffs, n).to_vec());
        let b = holding_value(&holding, &r).map_err(|e| Failure(SociexStatus::InvalidArgument, e.to_string()))?;
        write_out(out_points, b.total_points)
    })
}

/// Participant payout for a final holding value.
#[no_mangle]
pub extern "C" fn sociex_compensation(total_value: f64) -> f64 {
    compensation(total_value)
}

/// A configured experiment and, once run, its event logs.
pub struct SociexExperiment {
    config: ExperimentConfig,
    snapshot: String,
    logs: Vec<Vec<EventRecord>>,
}

/// Creates an experiment from TOML text, or the standard setup when
/// `config_toml` is null.
///
/// # Safety
/// `config_toml` must be null or a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sociex_experiment_new(
    config_toml: *const c_char,
    out: *mut *mut SociexExperiment,
) -> SociexStatus {
    guard(|| {
        let (config, snapshot) = match opt_str_arg(config_toml, "config_toml")? {
            Some(text) => {
                let cfg = parse_config(text).map_err(|e| Failure(SociexStatus::Config, e.to_string()))?;
                (cfg, text.to_string())
            }
            None => (ExperimentConfig::standard(), String::new()),
        };
        write_out(out, Box::into_raw(Box::new(SociexExperiment { config, snapshot, logs: Vec::new() })))
    })
}

unsafe fn experiment<'a>(h: *mut SociexExperiment) -> FfiResult<&'a mut SociexExperiment> {
    h.as_mut().ok_or(Failure(SociexStatus::NullPointer, "experiment handle is null".into()))
}

/// Replaces every agent's controller, in agent order, from a comma-separated
/// list such as `"scripted:tit-for-tat,scripted:greedy,scripted:pass-bot"`.
///
/// # Safety
/// `h` must be a live experiment handle; `roster` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sociex_experiment_set_roster(h: *mut SociexExperiment, roster: *const c_char) -> SociexStatus {
    guard(|| {
        let exp = experiment(h)?;
        let text = str_arg(roster, "roster")?;
        let controllers = text
            .split(',')
            .map(|c| c.trim().parse::<Controller>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure(SociexStatus::InvalidArgument, e))?;
        if controllers.len() != exp.config.agents.len() {
            return fail(
                SociexStatus::InvalidArgument,
                format!("roster names {} controllers for {} agents", controllers.len(), exp.config.agents.len()),
            );
        }
        for (agent, c) in exp.config.agents.iter_mut().zip(controllers) {
            agent.controller = c;
        }
        Ok(())
    })
}

/// Sets the number of rounds per repetition.
///
/// # Safety
/// `h` must be a live experiment handle.
#[no_mangle]
pub unsafe extern "C" fn sociex_experiment_set_rounds(h: *mut SociexExperiment, rounds: u32) -> SociexStatus {
    guard(|| {
        experiment(h)?.config.rounds = rounds;
        Ok(())
    })
}

/// Runs every repetition with `seed`. Only scripted controllers are
/// available through this interface. With a non-null `out_dir`, logs and the
/// manifest are written there as well.
///
/// # Safety
/// `h` must be a live experiment handle; `out_dir` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sociex_experiment_run(h: *mut SociexExperiment, seed: u64, out_dir: *const c_char) -> SociexStatus {
    guard(|| {
        let exp = experiment(h)?;
        let dir = opt_str_arg(out_dir, "out_dir")?;
        let report = validate_config(&exp.config);
        if !report.is_ok() {
            return fail(SociexStatus::Config, report.violations.join("; "));
        }
        let roster = build_roster(&exp.config, None, Arc::new(PromptSet::builtin()))
            .map_err(|e| Failure(SociexStatus::Config, e))?;
        // Defaults have no source text; the serialized config keeps run ids stable.
        let snapshot = if exp.snapshot.is_empty() {
            serde_json::to_string(&exp.config).expect("config serializes")
        } else {
            exp.snapshot.clone()
        };
        let (_, logs) = run_experiment(&exp.config, &snapshot, seed, &roster, dir.map(Path::new)).map_err(|e| {
            let status = match e {
                RunError::Io(_) | RunError::Log(_) => SociexStatus::Io,
                RunError::Config(_) => SociexStatus::Config,
                RunError::PolicyFailure(_) => SociexStatus::Run,
            };
            Failure(status, e.to_string())
        })?;
        exp.logs = logs;
        Ok(())
    })
}

/// Number of logs held after the last successful run (0 before any run).
///
/// # Safety
/// `h` must be null or a live experiment handle.
#[no_mangle]
pub unsafe extern "C" fn sociex_experiment_log_count(h: *const SociexExperiment) -> usize {
    h.as_ref().map(|e| e.logs.len()).unwrap_or(0)
}

unsafe fn log_of<'a>(h: *mut SociexExperiment, repetition: u32) -> FfiResult<&'a [EventRecord]> {
    let exp = experiment(h)?;
    match exp.logs.get(repetition as usize) {
        Some(log) => Ok(log),
        None => fail(SociexStatus::InvalidArgument, format!("no log for repetition {repetition}")),
    }
}

/// The NDJSON event log of one repetition. Free with [`sociex_string_free`].
///
/// # Safety
/// `h` must be a live experiment handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sociex_experiment_log(
    h: *mut SociexExperiment,
    repetition: u32,
    out: *mut *mut c_char,
) -> SociexStatus {
    guard(|| {
        let text = encode_log(log_of(h, repetition)?);
        write_out(out, to_c_string(text)?)
    })
}

/// Final holding value of `agent_id` in one repetition.
///
/// # Safety
/// `h` must be a live experiment handle; `agent_id` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sociex_experiment_final_value(
    h: *mut SociexExperiment,
    repetition: u32,
    agent_id: *const c_char,
    out: *mut u64,
) -> SociexStatus {
    guard(|| {
        let agent = AgentId::new(str_arg(agent_id, "agent_id")?);
        let log = log_of(h, repetition)?;
        let Some(EventBody::RunEnd(end)) = log.last().map(|e| &e.body) else {
            return fail(SociexStatus::Run, "log has no run end");
        };
        match end.values.get(&agent) {
            Some(v) => write_out(out, *v),
            None => fail(SociexStatus::InvalidArgument, format!("unknown agent {agent}")),
        }
    })
}

/// # Safety
/// `h` must be null or a handle from [`sociex_experiment_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sociex_experiment_free(h: *mut SociexExperiment) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// One negotiation phase, driven turn by turn from the caller.
pub struct SociexNegotiation {
    state: NegotiationState,
}

/// Opens a phase for a comma-separated turn order such as `"alice,bob,carol"`.
///
/// # Safety
/// `agents` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sociex_negotiation_new(
    agents: *const c_char,
    round: u32,
    max_discussion_rounds: u32,
    num_resource_types: usize,
    out: *mut *mut SociexNegotiation,
) -> SociexStatus {
    guard(|| {
        let ids: Vec<AgentId> =
            str_arg(agents, "agents")?.split(',').map(str::trim).filter(|s| !s.is_empty()).map(AgentId::new).collect();
        let state = NegotiationState::open_phase(round, &ids, max_discussion_rounds, num_resource_types)
            .map_err(|e| Failure(SociexStatus::Negotiation, e.to_string()))?;
        write_out(out, Box::into_raw(Box::new(SociexNegotiation { state })))
    })
}

unsafe fn negotiation<'a>(h: *mut SociexNegotiation) -> FfiResult<&'a mut SociexNegotiation> {
    h.as_mut().ok_or(Failure(SociexStatus::NullPointer, "negotiation handle is null".into()))
}

/// Applies one turn. `actions_json` is a JSON array of actions, e.g.
/// `[{"type":"PROPOSE","counterpart":"bob","give":[1,0,0],"receive":[0,1,0]}]`;
/// `[]` is a pass. A rejected turn leaves the phase unchanged.
///
/// # Safety
/// `h` must be a live negotiation handle; `actor` and `actions_json`
/// NUL-terminated; `utterance` null or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sociex_negotiation_apply_turn(
    h: *mut SociexNegotiation,
    actor: *const c_char,
    actions_json: *const c_char,
    utterance: *const c_char,
) -> SociexStatus {
    guard(|| {
        let neg = negotiation(h)?;
        let actor = AgentId::new(str_arg(actor, "actor")?);
        let actions: Vec<AgentAction> = serde_json::from_str(str_arg(actions_json, "actions_json")?)
            .map_err(|e| Failure(SociexStatus::InvalidArgument, format!("actions_json: {e}")))?;
        let text = opt_str_arg(utterance, "utterance")?.unwrap_or("");
        neg.state.apply_turn(&actor, &actions, text).map_err(|e| Failure(SociexStatus::Negotiation, e.to_string()))?;
        Ok(())
    })
}

/// # Safety
/// `h` must be a live negotiation handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sociex_negotiation_is_closed(h: *mut SociexNegotiation, out: *mut bool) -> SociexStatus {
    guard(|| {
        let closed = negotiation(h)?.state.is_closed();
        write_out(out, closed)
    })
}

/// Full phase state as JSON. Free with [`sociex_string_free`].
///
/// # Safety
/// `h` must be a live negotiation handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sociex_negotiation_state_json(h: *mut SociexNegotiation, out: *mut *mut c_char) -> SociexStatus {
    guard(|| {
        let json = serde_json::to_string(&negotiation(h)?.state).expect("state serializes");
        write_out(out, to_c_string(json)?)
    })
}

/// # Safety
/// `h` must be null or a handle from [`sociex_negotiation_new`], not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sociex_negotiation_free(h: *mut SociexNegotiation) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}
