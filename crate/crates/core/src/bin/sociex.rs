use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use sociex::analysis::{analyze, AnalysisOptions, ExchangeValueMode, PhaseSegmentation};
use sociex::domain::{validate_config, Controller, ExperimentConfig};
use sociex::llm::{CassetteMode, ChatBackend, LlmClient};
use sociex::orchestrator::config_file::{load_config_file, LoadedConfig};
use sociex::orchestrator::events::{read_log, validate_events, EventRecord};
use sociex::orchestrator::runner::{build_roster, run_experiment};
use sociex::orchestrator::{replay, RunStatus};
use sociex::policies::PromptSet;
use sociex::session::{serve, SessionManager};

#[derive(Parser)]
#[command(name = "sociex", version, about = "Multi-agent social-exchange simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its event logs and manifest.
    Run(RunArgs),
    /// Rebuild the final state from a log and print it as JSON.
    Replay { log: PathBuf },
    /// Check logs for schema and sequencing errors.
    ValidateLog {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Compute metric tables from logs or run directories.
    Analyze(AnalyzeArgs),
    /// Host human-in-the-loop sessions over HTTP.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct LlmArgs {
    /// Record every model exchange into this directory.
    #[arg(long, value_name = "DIR", conflicts_with = "replay_cassette")]
    record_cassette: Option<PathBuf>,
    /// Answer model calls from recorded exchanges only.
    #[arg(long, value_name = "DIR")]
    replay_cassette: Option<PathBuf>,
    /// Directory with prompt templates overriding the built-in ones.
    #[arg(long, value_name = "DIR")]
    prompts_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment file; defaults apply for anything it leaves out.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Comma-separated controllers in agent order, e.g.
    /// `scripted:tit-for-tat,scripted:tit-for-tat,scripted:trust-violator:10`.
    #[arg(long)]
    roster: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<u32>,
    #[arg(long)]
    repetitions: Option<u32>,
    /// Output directory (default `runs/<run_id>`).
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[command(flatten)]
    llm: LlmArgs,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Log files, or run directories containing `events/*.ndjson`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, short, default_value = "analysis")]
    out: PathBuf,
    /// delivered_out, delivered_plus_received or delivered_out_value.
    #[arg(long, default_value = "delivered_out")]
    mode: ExchangeValueMode,
    /// Phase boundaries as `a-b,c-d,e-f`.
    #[arg(long)]
    phases: Option<String>,
    /// Leave expired offers out of the acceptance-rate denominator.
    #[arg(long)]
    exclude_expired: bool,
    /// Rounds between a breach and the measured response.
    #[arg(long, default_value_t = 1)]
    window: u32,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Write each session's event log here.
    #[arg(long)]
    journal_dir: Option<PathBuf>,
    /// TOML file whose `[llm]` table configures LLM co-players.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    llm: LlmArgs,
}

fn prompts(args: &LlmArgs) -> Result<Arc<PromptSet>, String> {
    match &args.prompts_dir {
        Some(dir) => PromptSet::from_dir(dir).map(Arc::new).map_err(|e| e.to_string()),
        None => Ok(Arc::new(PromptSet::builtin())),
    }
}

fn llm_client(config: &ExperimentConfig, args: &LlmArgs) -> Result<Arc<LlmClient>, String> {
    let mode = match (&args.record_cassette, &args.replay_cassette) {
        (Some(d), _) => CassetteMode::Record(d.clone()),
        (_, Some(d)) => CassetteMode::Replay(d.clone()),
        _ => CassetteMode::Live,
    };
    LlmClient::new(config.llm.clone(), mode).map(Arc::new).map_err(|e| e.to_string())
}

fn load(config: Option<&Path>) -> Result<LoadedConfig, String> {
    match config {
        Some(p) => load_config_file(p).map_err(|e| e.to_string()),
        None => Ok(LoadedConfig { config: ExperimentConfig::standard(), snapshot: String::new(), path: None }),
    }
}

fn cmd_run(args: RunArgs) -> Result<ExitCode, String> {
    let LoadedConfig { mut config, mut snapshot, .. } = load(args.config.as_deref())?;
    if let Some(t) = args.rounds {
        config.rounds = t;
    }
    if let Some(r) = args.repetitions {
        config.repetitions = r;
    }
    if let Some(roster) = &args.roster {
        let controllers = roster
            .split(',')
            .map(|c| c.trim().parse::<Controller>())
            .collect::<Result<Vec<_>, _>>()?;
        if controllers.len() != config.agents.len() {
            return Err(format!("--roster names {} controllers for {} agents", controllers.len(), config.agents.len()));
        }
        config.set_controllers(&controllers);
    }
    let seed = args.seed.unwrap_or(config.rng_seed);
    config.rng_seed = seed;
    let report = validate_config(&config);
    if !report.is_ok() {
        return Err(format!("invalid configuration:\n{report}"));
    }
    // The snapshot records what actually ran, command-line overrides included.
    let overrides: Vec<String> = [
        args.rounds.map(|r| format!("rounds={r}")),
        args.repetitions.map(|r| format!("repetitions={r}")),
        args.roster.as_ref().map(|r| format!("roster={r}")),
        args.seed.map(|s| format!("seed={s}")),
    ]
    .into_iter()
    .flatten()
    .collect();
    if !overrides.is_empty() {
        snapshot.push_str(&format!("\n# command-line overrides: {}\n", overrides.join(" ")));
    }

    let needs_llm = config.agents.iter().any(|a| a.controller == Controller::Llm);
    let client = if needs_llm { Some(llm_client(&config, &args.llm)?) } else { None };
    let backend = client.clone().map(|c| c as Arc<dyn ChatBackend>);
    let roster = build_roster(&config, backend, prompts(&args.llm)?)?;

    let run_id = sociex::orchestrator::runner::run_id_for(&snapshot, seed);
    let out = args.out.unwrap_or_else(|| PathBuf::from("runs").join(&run_id));
    let (mut manifest, logs) = run_experiment(&config, &snapshot, seed, &roster, Some(&out)).map_err(|e| e.to_string())?;
    if let Some(c) = &client {
        manifest.usage = Some(c.usage());
        manifest.write(&out).map_err(|e| e.to_string())?;
    }

    println!("run {} -> {}", manifest.run_id, out.display());
    for (rep, log) in logs.iter().enumerate() {
        let snap = sociex::orchestrator::replay_events(log).map_err(|e| e.to_string())?;
        let values: Vec<String> = snap.values.iter().map(|(a, v)| format!("{a}={v}")).collect();
        println!("  rep {rep}: {:?} {}", snap.status.unwrap_or(RunStatus::Failed), values.join(" "));
    }
    if let Some(u) = &manifest.usage {
        println!("  llm: {} requests, {} in / {} out tokens, ~${:.2}", u.requests, u.input_tokens, u.output_tokens, u.estimated_cost_usd);
    }
    let ok = manifest.statuses.iter().all(|s| *s == RunStatus::Completed);
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_replay(log: &Path) -> Result<ExitCode, String> {
    let snap = replay(log).map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&snap).map_err(|e| e.to_string())?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(logs: &[PathBuf]) -> Result<ExitCode, String> {
    let mut ok = true;
    for path in logs {
        match read_log(path).and_then(|events| validate_events(&events).map(|_| events.len())) {
            Ok(n) => println!("ok     {} ({n} events)", path.display()),
            Err(e) => {
                ok = false;
                println!("error  {}: {e}", path.display());
            }
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn collect_logs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, String> {
    let mut files = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let dir = if input.join("events").is_dir() { input.join("events") } else { input.clone() };
            let mut found: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(|e| format!("{}: {e}", dir.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(input.clone());
        }
    }
    if files.is_empty() {
        return Err("no .ndjson logs found".into());
    }
    Ok(files)
}

fn parse_phases(text: &str) -> Result<PhaseSegmentation, String> {
    let ranges = text
        .split(',')
        .map(|part| {
            let (a, b) = part.split_once('-').unwrap_or((part, part));
            let a: u32 = a.trim().parse().map_err(|_| format!("bad phase range `{part}`"))?;
            let b: u32 = b.trim().parse().map_err(|_| format!("bad phase range `{part}`"))?;
            Ok(a..=b)
        })
        .collect::<Result<Vec<_>, String>>()?;
    let [initial, thriving, endgame]: [_; 3] =
        ranges.try_into().map_err(|_| "--phases needs exactly three ranges".to_string())?;
    Ok(PhaseSegmentation { initial, thriving, endgame })
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<ExitCode, String> {
    let files = collect_logs(&args.inputs)?;
    let logs: Vec<Vec<EventRecord>> =
        files.iter().map(|p| read_log(p).map_err(|e| format!("{}: {e}", p.display()))).collect::<Result<_, _>>()?;
    let views: Vec<&[EventRecord]> = logs.iter().map(|l| l.as_slice()).collect();
    let opts = AnalysisOptions {
        mode: args.mode,
        segmentation: args.phases.as_deref().map(parse_phases).transpose()?,
        include_expired: !args.exclude_expired,
        breach_window: args.window,
        ..Default::default()
    };
    let report = analyze(&views, &opts, &args.out).map_err(|e| e.to_string())?;
    print!("{report}");
    println!("tables written to {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_serve(args: ServeArgs) -> Result<ExitCode, String> {
    let config = load(args.config.as_deref())?.config;
    let mut manager = SessionManager::new();
    let wants_llm = args.config.is_some() || args.llm.record_cassette.is_some() || args.llm.replay_cassette.is_some();
    if wants_llm {
        let client = llm_client(&config, &args.llm)?;
        manager = manager.with_backend(client as Arc<dyn ChatBackend>, prompts(&args.llm)?);
    }
    if let Some(dir) = args.journal_dir {
        fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
        manager = manager.with_journal_dir(dir);
    }
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime
        .block_on(serve(Arc::new(manager), args.addr, Duration::from_secs(1)))
        .map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Replay { log } => cmd_replay(&log),
        Command::ValidateLog { logs } => cmd_validate(&logs),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Serve(a) => cmd_serve(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })
}
