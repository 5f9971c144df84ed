//! `relaynet` command line: closed-form tables, single scenarios and figure
//! grids, all written as tidy CSV.
//!
//! Exit codes: 0 success, 2 invalid input, 3 I/O failure, 4 unknown figure.

pub mod figures;
pub mod output;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use relaynet_core::analysis;
use relaynet_core::model::{validate, Channel, CollisionParams, ScenarioConfig};
use relaynet_core::sim::{self, SimError};
use thiserror::Error;

use figures::{FigureId, RunSettings};
use output::Row;

/// Environment variable fixing the worker-thread count.
pub const THREADS_ENV: &str = "RELAYNET_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("unknown figure id `{0}` (expected one of: {list})", list = figure_list())]
    UnknownFigure(String),
}

fn figure_list() -> String {
    FigureId::ALL.iter().map(|f| f.name()).collect::<Vec<_>>().join(", ")
}

impl CliError {
    pub fn io(path: &Path, source: csv::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Io { .. } => 3,
            CliError::UnknownFigure(_) => 4,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "relaynet", version, about = "Two-relay cooperative random access: analysis and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print closed-form relay rates, thresholds and throughput bounds of a
    /// collision-channel scenario.
    Analyze {
        scenario: PathBuf,
        /// Also write the values as tidy CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Simulate a scenario and write its metrics as tidy CSV.
    Simulate {
        scenario: PathBuf,
        /// Slots per replication (warmup becomes a tenth of it).
        #[arg(long)]
        slots: Option<u64>,
        #[arg(long)]
        reps: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a figure grid and write its CSV files into a directory.
    Figure {
        /// One of StabilityRegion, SimpleBounds, ClusterBounds,
        /// ThroughputCompare, DelayCompareCollision, MprAggregate,
        /// MprPerUser, MprQueue, MprDelay.
        id: String,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Use the full user grids and a 10^6-slot, 10-replication horizon.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        slots: Option<u64>,
        #[arg(long)]
        reps: Option<u32>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Desk-scale figure horizon.
pub const FIGURE_SLOTS: u64 = 100_000;
pub const FIGURE_REPS: u32 = 5;

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e.into()))?;
    ScenarioConfig::from_json(&text).map_err(|e| CliError::Invalid(format!("{}: {}", path.display(), e)))
}

pub fn write_csv_file(path: &Path, rows: &[Row]) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| CliError::io(path, e.into()))?;
    output::write_rows(std::io::BufWriter::new(file), rows).map_err(|e| CliError::io(path, e))
}

fn check(config: &ScenarioConfig) -> Result<(), CliError> {
    validate(config).map_err(|errs| {
        let lines: Vec<String> = errs.0.iter().map(|v| format!("  {}", v)).collect();
        CliError::Invalid(format!("invalid scenario:\n{}", lines.join("\n")))
    })
}

/// Closed-form quantities of a collision scenario as `(metric, value)` pairs.
pub fn analysis_values(p: &CollisionParams) -> Vec<(String, f64)> {
    let mut out = Vec::new();
    let mut put = |k: String, v: f64| out.push((k, v));
    let names = output::RELAY_NAMES;
    for j in 0..2 {
        put(format!("arrival_sum_{}", names[j]), analysis::relay_arrival_sum(p, j));
    }
    for (mode, d) in [("s1", 0), ("s2", 1)] {
        let r = analysis::dominant_rates(p, d).expect("relay index in range");
        let relay = names[1 - d];
        put(format!("{}_lambda0_{}", mode, relay), r.lambda_0);
        put(format!("{}_lambda1_{}", mode, relay), r.lambda_1);
        put(format!("{}_p_empty_{}", mode, relay), r.p_empty);
        put(format!("{}_lambda_{}", mode, relay), r.lambda);
        put(format!("{}_mu_{}", mode, relay), r.mu);
        put(format!("{}_stable_{}", mode, relay), if r.stable { 1.0 } else { 0.0 });
    }
    let idle = analysis::service_rates(p, 0.0, 0.0);
    let busy = analysis::service_rates(p, 1.0, 1.0);
    for j in 0..2 {
        put(format!("mu_{}_peer_idle", names[j]), idle[j]);
        put(format!("mu_{}_peer_busy", names[j]), busy[j]);
    }
    for j in 0..2 {
        put(format!("q_min_{}", names[j]), analysis::q_min(p, j).expect("relay index in range"));
    }
    for i in 0..p.n_users {
        let b = if p.is_clustered() {
            analysis::clustered_throughput_bounds(p, i)
        } else {
            analysis::throughput_bounds(p, i)
        }
        .expect("user index in range");
        put(format!("upper_bound_user_{}", i), b.per_user_upper);
        put(format!("lower_bound_user_{}", i), b.per_user_lower);
        put(format!("no_relay_user_{}", i), analysis::no_relay_throughput(p, i).expect("user index in range"));
    }
    out
}

fn cmd_analyze(scenario: &Path, csv_path: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let config = load_scenario(scenario)?;
    check(&config)?;
    let Channel::Collision(p) = &config.channel else {
        return Err(CliError::Invalid(
            "closed-form analysis covers the collision channel only".to_string(),
        ));
    };
    let values = analysis_values(p);
    let out = |e: std::io::Error| CliError::io(Path::new("<stdout>"), e.into());
    writeln!(
        stdout,
        "collision channel, {} users, strategy {}",
        p.n_users, config.strategy
    )
    .map_err(out)?;
    let width = values.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in &values {
        writeln!(stdout, "{:width$}  {:.9}", k, v, width = width).map_err(out)?;
    }
    if let Some(path) = csv_path {
        let rows: Vec<Row> = values
            .into_iter()
            .map(|(k, v)| Row::exact("collision", config.strategy.name(), p.n_users, k, v))
            .collect();
        write_csv_file(path, &rows)?;
    }
    Ok(())
}

fn cmd_simulate(
    scenario: &Path,
    slots: Option<u64>,
    reps: Option<u32>,
    seed: Option<u64>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let mut config = load_scenario(scenario)?;
    if let Some(slots) = slots {
        config.horizon_slots = slots;
        config.warmup_slots = slots / 10;
    }
    if let Some(reps) = reps {
        config.replications = reps;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    check(&config)?;
    let report = sim::run(&config)?;
    let rows = output::report_rows(&report);
    match out {
        Some(path) => write_csv_file(path, &rows),
        None => output::write_rows(stdout, &rows).map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn cmd_figure(
    id: &str,
    dir: &Path,
    full: bool,
    slots: Option<u64>,
    reps: Option<u32>,
    seed: u64,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let figure: FigureId = id.parse()?;
    let settings = RunSettings {
        slots: slots.unwrap_or(if full { 1_000_000 } else { FIGURE_SLOTS }),
        reps: reps.unwrap_or(if full { 10 } else { FIGURE_REPS }),
        seed,
        full,
    };
    if settings.slots == 0 || settings.reps == 0 {
        return Err(CliError::Invalid("--slots and --reps must be positive".to_string()));
    }
    for path in figures::write_figure(figure, dir, &settings)? {
        writeln!(stdout, "{}", path.display()).map_err(|e| CliError::io(Path::new("<stdout>"), e.into()))?;
    }
    Ok(())
}

/// Applies the worker-count override once per process.
pub fn init_threads() {
    let Ok(value) = std::env::var(THREADS_ENV) else { return };
    match value.parse::<usize>() {
        Ok(n) if n > 0 => {
            // Fails only if the pool already exists, which keeps the first setting.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
        _ => eprintln!("warning: ignoring {}={:?} (expected a positive integer)", THREADS_ENV, value),
    }
}

/// Executes a parsed command.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze { scenario, csv } => cmd_analyze(&scenario, csv.as_deref(), stdout),
        Command::Simulate {
            scenario,
            slots,
            reps,
            seed,
            out,
        } => cmd_simulate(&scenario, slots, reps, seed, out.as_deref(), stdout),
        Command::Figure {
            id,
            out,
            full,
            slots,
            reps,
            seed,
        } => cmd_figure(&id, &out, full, slots, reps, seed, stdout),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_threads();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e);
            e.exit_code()
        }
    }
}
