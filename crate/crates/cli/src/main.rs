//! `fitolab`: run bundled or custom scenarios and the individual labs.
//!
//! Exit codes: 0 when every verdict is as expected, 1 when a verdict failed
//! or a lab could not run, 2 for usage errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use fitolab_core::consensus::ConsensusProtocol;
use fitolab_core::kernel::{SubstrateKind, Trace};
use fitolab_core::ordering::{
    build_pomset, linear_extensions, lww_resolve, timestamp_map, Timestamp, EXTENSION_BOUND,
};
use fitolab_core::scenario::{
    catalog, dispatch, find_in_catalog, load_scenario, LabKind, Report, ScenarioConfig,
    ScenarioError, Status, Verdict,
};

#[derive(Parser)]
#[command(
    name = "fitolab",
    version,
    about = "Unilateral messages versus bilateral transactions"
)]
struct Cli {
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Writes the trace as JSON Lines.
    #[arg(long, global = true)]
    trace_out: Option<PathBuf>,
    /// Writes the report in the selected format.
    #[arg(long, global = true)]
    report_out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum Substrate {
    Fito,
    Bilateral,
}

impl From<Substrate> for SubstrateKind {
    fn from(s: Substrate) -> Self {
        match s {
            Substrate::Fito => SubstrateKind::Fito,
            Substrate::Bilateral => SubstrateKind::Bilateral,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Runs a scenario file, or a bundled scenario by id.
    Run { scenario: String },
    /// Checks a consensus protocol against every (or random) schedule.
    Consensus(ConsensusArgs),
    /// Acknowledgement chain on FITO, or one bilateral coordination.
    TwoGenerals(TwoGeneralsArgs),
    /// Partitioned replicas under one of the three modes.
    Cap(CapArgs),
    /// Offset estimation from two-way and one-way measurements.
    Clocks(ClocksArgs),
    /// Partial-order views of a recorded trace.
    #[command(subcommand)]
    Ordering(OrderingCommand),
    /// Lists the bundled scenarios, or runs them all.
    Catalog {
        #[arg(long)]
        run: bool,
    },
}

#[derive(Args)]
struct ConsensusArgs {
    /// rw, rw-adopt, cas, swap or bilateral.
    #[arg(long)]
    protocol: String,
    /// Comma-separated inputs, one per process.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    inputs: Vec<i64>,
    #[arg(long, default_value = "exhaustive")]
    mode: String,
    #[arg(long, default_value_t = 8)]
    depth: usize,
    /// Random walks in random mode.
    #[arg(long)]
    seeds: Option<u64>,
    /// Defaults to the protocol's natural substrate.
    #[arg(long, value_enum)]
    substrate: Option<Substrate>,
    /// Also hunts for a bivalent schedule of this many steps.
    #[arg(long)]
    hunt: Option<usize>,
}

#[derive(Args)]
struct TwoGeneralsArgs {
    #[arg(long, default_value_t = 0)]
    rounds: usize,
    /// One bit per round, 1 = delivered.
    #[arg(long, default_value = "")]
    mask: String,
    #[arg(long)]
    bilateral: bool,
    #[arg(long, default_value = "completed", requires = "bilateral")]
    decide: String,
}

#[derive(Args)]
struct CapArgs {
    /// fito-ap, fito-cp or bilateral.
    #[arg(long)]
    mode: String,
    /// Workload JSON; defaults to conflicting writes under a partition.
    #[arg(long)]
    workload: Option<PathBuf>,
}

#[derive(Args)]
struct ClocksArgs {
    #[arg(long)]
    d0: f64,
    #[arg(long, allow_negative_numbers = true)]
    theta: f64,
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, value_enum, default_value_t = Substrate::Bilateral)]
    substrate: Substrate,
}

#[derive(Subcommand)]
enum OrderingCommand {
    /// Prints the pomset of a trace as {events, reduced_edges}.
    Pomset {
        #[arg(long)]
        trace: PathBuf,
    },
    /// Resolves timestamped writes by last-writer-wins.
    Lww {
        #[arg(long)]
        trace: PathBuf,
        /// JSON list of {process, seq, time}.
        #[arg(long)]
        timestamps: PathBuf,
    },
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Usage(anyhow::Error),
    Lab(anyhow::Error),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Lab(_) => Failure::Lab(e.into()),
            _ => Failure::Usage(e.into()),
        }
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

fn io(e: anyhow::Error) -> Failure {
    Failure::Lab(e)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Lab(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn execute(cli: &Cli) -> Result<u8, Failure> {
    let config = match &cli.command {
        Command::Run { scenario } => resolve_scenario(scenario)?,
        Command::Consensus(a) => consensus_config(a)?,
        Command::TwoGenerals(a) => two_generals_config(a)?,
        Command::Cap(a) => cap_config(a)?,
        Command::Clocks(a) => clocks_config(a),
        Command::Ordering(o) => return ordering(cli, o),
        Command::Catalog { run } => return catalog_command(cli, *run),
    };
    run_scenario(cli, config)
}

fn resolve_scenario(arg: &str) -> Result<ScenarioConfig, Failure> {
    let path = Path::new(arg);
    if path.exists() {
        return Ok(load_scenario(path)?);
    }
    find_in_catalog(arg).ok_or_else(|| {
        usage(anyhow::anyhow!(
            "no scenario file or bundled scenario named {arg:?}"
        ))
    })
}

fn adhoc(
    id: String,
    substrate: SubstrateKind,
    n_procs: usize,
    lab: LabKind,
    lab_params: Json,
) -> Result<ScenarioConfig, Failure> {
    let config = ScenarioConfig {
        scenario_id: id,
        exercises: None,
        substrate,
        n_procs,
        cells: Vec::new(),
        schedule: None,
        lab,
        lab_params,
        seed: None,
    };
    config.validate()?;
    Ok(config)
}

fn consensus_config(a: &ConsensusArgs) -> Result<ScenarioConfig, Failure> {
    let natural = ConsensusProtocol::by_name(&a.protocol, a.inputs.len())
        .map_err(|e| usage(anyhow::anyhow!("--protocol: {e}")))?
        .natural_substrate();
    let substrate = a.substrate.map(SubstrateKind::from).unwrap_or(natural);
    let mut params = json!({
        "protocol": a.protocol,
        "inputs": a.inputs,
        "mode": a.mode,
        "depth": a.depth,
        "seeds": a.seeds,
    });
    if let Some(steps) = a.hunt {
        let expect = if a.protocol == "rw-adopt" {
            "sustained"
        } else {
            "exhausted"
        };
        params["hunt"] = json!({ "steps": steps, "expect": expect });
    }
    adhoc(
        format!("consensus-{}", a.protocol),
        substrate,
        a.inputs.len(),
        LabKind::Consensus,
        params,
    )
}

fn two_generals_config(a: &TwoGeneralsArgs) -> Result<ScenarioConfig, Failure> {
    if a.bilateral {
        let decide = match a.decide.as_str() {
            "completed" => "completed",
            "not-occurred" | "not_occurred" => "not_occurred",
            other => {
                return Err(usage(anyhow::anyhow!(
                    "--decide expects completed|not-occurred, got {other:?}"
                )))
            }
        };
        let params = json!({ "decide": decide });
        adhoc(
            "two-generals-bilateral".into(),
            SubstrateKind::Bilateral,
            2,
            LabKind::TwoGenerals,
            params,
        )
    } else {
        let params = json!({ "rounds": a.rounds, "mask": a.mask });
        adhoc(
            "two-generals".into(),
            SubstrateKind::Fito,
            2,
            LabKind::TwoGenerals,
            params,
        )
    }
}

fn cap_config(a: &CapArgs) -> Result<ScenarioConfig, Failure> {
    let mode: fitolab_core::cap::CapMode = a
        .mode
        .parse()
        .map_err(|e: String| usage(anyhow::anyhow!(e)))?;
    let workload = match &a.workload {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(usage)?;
            let w: fitolab_core::cap::Workload = serde_json::from_str(&text)
                .with_context(|| format!("parsing workload {}", path.display()))
                .map_err(usage)?;
            Some(w)
        }
        None => None,
    };
    let default = fitolab_core::cap::conflicting_writes();
    let (end, _) = fitolab_core::cap::run_cap_config(mode, workload.as_ref().unwrap_or(&default))
        .map_err(usage)?;
    let n_procs = end.n_procs();
    let params = json!({ "mode": mode, "workload": workload });
    adhoc(
        format!("cap-{}", a.mode),
        mode.substrate(),
        n_procs,
        LabKind::Cap,
        params,
    )
}

fn clocks_config(a: &ClocksArgs) -> ScenarioConfig {
    ScenarioConfig {
        scenario_id: "clocks".into(),
        exercises: None,
        substrate: a.substrate.into(),
        n_procs: 2,
        cells: Vec::new(),
        schedule: None,
        lab: LabKind::Clocks,
        lab_params: json!({ "d0": a.d0, "theta": a.theta, "jitter": a.jitter, "trials": a.trials }),
        seed: None,
    }
}

fn run_scenario(cli: &Cli, mut config: ScenarioConfig) -> Result<u8, Failure> {
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    config.validate()?;
    let (trace, report) = match dispatch(&config) {
        Ok(out) => out,
        Err(e @ ScenarioError::Lab(_)) => {
            let report = failed_report(&config, &e);
            emit_report(cli, &report).map_err(io)?;
            return Err(Failure::Lab(e.into()));
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(path) = &cli.trace_out {
        write(path, &trace.to_jsonl()).map_err(io)?;
    }
    emit_report(cli, &report).map_err(io)?;
    Ok(report.exit_code() as u8)
}

/// Report kept when the lab aborts: one failing verdict naming the error.
fn failed_report(config: &ScenarioConfig, e: &ScenarioError) -> Report {
    Report {
        scenario_id: config.scenario_id.clone(),
        seed: config.seed(),
        lab: config.lab,
        substrate: config.substrate,
        exercises: config.exercises.clone(),
        verdicts: vec![Verdict {
            name: "lab-completed".into(),
            status: Status::Fail,
            detail: e.to_string(),
        }],
        metrics: Default::default(),
        witness: None,
        notes: Vec::new(),
    }
}

fn render(format: Format, report: &Report) -> String {
    match format {
        Format::Json => report.to_json(),
        Format::Text => report.to_text(),
    }
}

fn emit_report(cli: &Cli, report: &Report) -> Result<()> {
    let out = render(cli.format, report);
    print!("{out}");
    if let Some(path) = &cli.report_out {
        write(path, &out)?;
    }
    Ok(())
}

fn write(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn read_trace(path: &Path) -> Result<Trace, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    Trace::from_jsonl(&text)
        .with_context(|| format!("parsing trace {}", path.display()))
        .map_err(usage)
}

fn ordering(cli: &Cli, command: &OrderingCommand) -> Result<u8, Failure> {
    let value = match command {
        OrderingCommand::Pomset { trace } => {
            let t = read_trace(trace)?;
            let p = build_pomset(&t).map_err(usage)?;
            let mut v = serde_json::to_value(p.to_record()).expect("pomset record serializes");
            v["concurrent_pairs"] = json!(p.concurrent_pairs());
            if p.len() <= EXTENSION_BOUND {
                v["linear_extensions"] = json!(linear_extensions(&p).map_err(usage)?.to_string());
            }
            v
        }
        OrderingCommand::Lww { trace, timestamps } => {
            let t = read_trace(trace)?;
            let text = fs::read_to_string(timestamps)
                .with_context(|| format!("reading {}", timestamps.display()))
                .map_err(usage)?;
            let ts: Vec<Timestamp> = serde_json::from_str(&text)
                .with_context(|| format!("parsing timestamps {}", timestamps.display()))
                .map_err(usage)?;
            serde_json::to_value(lww_resolve(&t, &timestamp_map(&ts)).map_err(usage)?)
                .expect("resolution serializes")
        }
    };
    let out = match cli.format {
        Format::Json => serde_json::to_string_pretty(&value).expect("json") + "\n",
        Format::Text => text_lines(&value),
    };
    print!("{out}");
    if let Some(path) = &cli.report_out {
        write(path, &out).map_err(io)?;
    }
    Ok(0)
}

fn text_lines(v: &Json) -> String {
    match v.as_object() {
        Some(map) => map.iter().map(|(k, v)| format!("{k} = {v}\n")).collect(),
        None => format!("{v}\n"),
    }
}

fn catalog_command(cli: &Cli, run: bool) -> Result<u8, Failure> {
    let scenarios = catalog();
    if !run {
        let out = match cli.format {
            Format::Json => serde_json::to_string_pretty(&scenarios).expect("json") + "\n",
            Format::Text => scenarios
                .iter()
                .map(|s| {
                    format!(
                        "{:<44} {:<13} {:<9} {}\n",
                        s.scenario_id,
                        serde_json::to_value(s.lab)
                            .expect("lab")
                            .as_str()
                            .unwrap_or_default(),
                        s.substrate,
                        s.exercises.as_deref().unwrap_or("")
                    )
                })
                .collect(),
        };
        print!("{out}");
        return Ok(0);
    }
    let mut code = 0;
    let mut reports = Vec::new();
    for mut s in scenarios {
        if let Some(seed) = cli.seed {
            s.seed = Some(seed);
        }
        let (_, report) = dispatch(&s)?;
        code = code.max(report.exit_code() as u8);
        if cli.format == Format::Text {
            let status = if report.all_as_expected() {
                "ok"
            } else {
                "UNEXPECTED"
            };
            println!("{:<44} {status}", report.scenario_id);
        }
        reports.push(report);
    }
    if cli.format == Format::Json {
        println!("{}", serde_json::to_string_pretty(&reports).expect("json"));
    }
    Ok(code)
}
