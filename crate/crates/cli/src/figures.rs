//! Figure jobs: fixed parameter grids written as tidy CSV.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use relaynet_core::analysis::{self, stability_region};
use relaynet_core::model::{reference_topology, Channel, CollisionParams, ScenarioConfig, Strategy};
use relaynet_core::sim::{sweep, MetricsReport};

use crate::output::{report_rows, Row};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureId {
    StabilityRegion,
    SimpleBounds,
    ClusterBounds,
    ThroughputCompare,
    DelayCompareCollision,
    MprAggregate,
    MprPerUser,
    MprQueue,
    MprDelay,
}

impl FigureId {
    pub const ALL: [FigureId; 9] = [
        FigureId::StabilityRegion,
        FigureId::SimpleBounds,
        FigureId::ClusterBounds,
        FigureId::ThroughputCompare,
        FigureId::DelayCompareCollision,
        FigureId::MprAggregate,
        FigureId::MprPerUser,
        FigureId::MprQueue,
        FigureId::MprDelay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FigureId::StabilityRegion => "StabilityRegion",
            FigureId::SimpleBounds => "SimpleBounds",
            FigureId::ClusterBounds => "ClusterBounds",
            FigureId::ThroughputCompare => "ThroughputCompare",
            FigureId::DelayCompareCollision => "DelayCompareCollision",
            FigureId::MprAggregate => "MprAggregate",
            FigureId::MprPerUser => "MprPerUser",
            FigureId::MprQueue => "MprQueue",
            FigureId::MprDelay => "MprDelay",
        }
    }

    /// Snake-case stem of the output file.
    pub fn file_stem(self) -> String {
        let mut out = String::new();
        for (k, c) in self.name().chars().enumerate() {
            if c.is_ascii_uppercase() {
                if k > 0 {
                    out.push('_');
                }
                out.push(c.to_ascii_lowercase());
            } else {
                out.push(c);
            }
        }
        out
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Accepts the CamelCase name or its snake-case file stem, any case.
impl FromStr for FigureId {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| *c != '_' && *c != '-').collect::<String>().to_ascii_lowercase();
        FigureId::ALL
            .into_iter()
            .find(|f| f.name().to_ascii_lowercase() == key)
            .ok_or_else(|| CliError::UnknownFigure(s.to_string()))
    }
}

/// Horizon and seed shared by every point of a figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub slots: u64,
    pub reps: u32,
    pub seed: u64,
    /// Full-size grids instead of the desk-scale ones.
    pub full: bool,
}

/// Users on the collision-channel figures.
pub const COLLISION_USERS: std::ops::RangeInclusive<usize> = 2..=14;

pub const MPR_GAMMAS: [f64; 3] = [0.2, 1.2, 2.5];

pub const COLLISION_STRATEGIES: [Strategy; 4] = [
    Strategy::NoRelay,
    Strategy::OneRelay,
    Strategy::TwoRelaySimple,
    Strategy::TwoRelayClustered,
];

pub const MPR_STRATEGIES: [Strategy; 5] = [
    Strategy::NoRelay,
    Strategy::OneRelay,
    Strategy::TwoRelaySimple,
    Strategy::TwoRelayClustered,
    Strategy::TwoRelaySmallerQueue,
];

/// User counts of the MPR figures: steps of 4 from 2, up to 50 on the full
/// grid, 42 (30 for delay) at desk scale.
pub fn mpr_users(figure: FigureId, full: bool) -> Vec<usize> {
    let max = match (full, figure) {
        (true, _) => 50,
        (false, FigureId::MprDelay) => 30,
        (false, _) => 42,
    };
    (2..=max).step_by(4).collect()
}

/// User counts a strategy can run on the collision grid (clustering needs an
/// even split).
fn collision_users(strategy: Strategy) -> Vec<usize> {
    COLLISION_USERS
        .filter(|n| strategy != Strategy::TwoRelayClustered || n % 2 == 0)
        .collect()
}

pub fn collision_base(strategy: Strategy, n_users: usize, settings: &RunSettings) -> ScenarioConfig {
    let clustered = strategy == Strategy::TwoRelayClustered;
    let p = CollisionParams::reference(n_users, clustered).expect("reference parameters");
    ScenarioConfig::new(Channel::Collision(p), strategy, settings.seed).with_horizon(settings.slots, settings.reps)
}

pub fn mpr_base(strategy: Strategy, n_users: usize, settings: &RunSettings) -> ScenarioConfig {
    let clustered = strategy == Strategy::TwoRelayClustered;
    let p = reference_topology(n_users, clustered).expect("reference topology");
    ScenarioConfig::new(Channel::Mpr(p), strategy, settings.seed).with_horizon(settings.slots, settings.reps)
}

fn collision_reports(strategies: &[Strategy], settings: &RunSettings) -> Result<Vec<MetricsReport>, CliError> {
    let mut out = Vec::new();
    for &s in strategies {
        let ns = collision_users(s);
        out.extend(sweep(&collision_base(s, ns[0], settings), &ns, None)?);
    }
    Ok(out)
}

fn mpr_reports(figure: FigureId, settings: &RunSettings) -> Result<Vec<MetricsReport>, CliError> {
    let ns = mpr_users(figure, settings.full);
    let mut out = Vec::new();
    for s in MPR_STRATEGIES {
        out.extend(sweep(&mpr_base(s, ns[0], settings), &ns, Some(&MPR_GAMMAS))?);
    }
    Ok(out)
}

fn keep(reports: &[MetricsReport], metrics: &[&str]) -> Vec<Row> {
    reports
        .iter()
        .flat_map(report_rows)
        .filter(|r| metrics.contains(&r.metric.as_str()))
        .collect()
}

fn bound_rows(strategy: Strategy) -> Vec<Row> {
    let clustered = strategy == Strategy::TwoRelayClustered;
    let mut rows = Vec::new();
    for n in collision_users(strategy) {
        let p = CollisionParams::reference(n, clustered).expect("reference parameters");
        let b = if clustered {
            analysis::clustered_throughput_bounds(&p, 0)
        } else {
            analysis::throughput_bounds(&p, 0)
        }
        .expect("user 0 exists");
        rows.push(Row::exact("collision", strategy.name(), n, "upper_bound", b.per_user_upper));
        rows.push(Row::exact("collision", strategy.name(), n, "lower_bound", b.per_user_lower));
    }
    rows
}

fn write_region(dir: &Path, n_users: usize) -> Result<PathBuf, CliError> {
    let p = CollisionParams::reference(n_users, false).expect("reference parameters");
    let region = stability_region(&p, 101);
    let path = dir.join(format!("stability_region_n{}.csv", n_users));
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e))?;
    w.write_record(["lambda_r1", "lambda_r2", "region_id"]).map_err(|e| CliError::io(&path, e))?;
    for (a, b, id) in region.rows() {
        w.write_record([a.to_string(), b.to_string(), id.to_string()])
            .map_err(|e| CliError::io(&path, e))?;
    }
    w.flush().map_err(|e| CliError::io(&path, e.into()))?;
    Ok(path)
}

/// User counts of the stability-region figure.
pub const REGION_USERS: [usize; 3] = [2, 4, 8];

/// Tidy rows of a simulated figure.
pub fn figure_rows(figure: FigureId, settings: &RunSettings) -> Result<Vec<Row>, CliError> {
    let rows = match figure {
        FigureId::StabilityRegion => Vec::new(),
        FigureId::SimpleBounds | FigureId::ClusterBounds => {
            let s = if figure == FigureId::SimpleBounds {
                Strategy::TwoRelaySimple
            } else {
                Strategy::TwoRelayClustered
            };
            let mut rows = keep(&collision_reports(&[s], settings)?, &["throughput_per_user"]);
            rows.extend(bound_rows(s));
            rows
        }
        FigureId::ThroughputCompare => keep(
            &collision_reports(&COLLISION_STRATEGIES, settings)?,
            &["aggregate_throughput", "throughput_per_user"],
        ),
        FigureId::DelayCompareCollision => keep(
            &collision_reports(&COLLISION_STRATEGIES, settings)?,
            &["mean_delay", "delay_samples"],
        ),
        FigureId::MprAggregate => keep(&mpr_reports(figure, settings)?, &["aggregate_throughput"]),
        FigureId::MprPerUser => keep(&mpr_reports(figure, settings)?, &["throughput_per_user"]),
        FigureId::MprQueue => keep(&mpr_reports(figure, settings)?, &["mean_queue_r1", "mean_queue_r2"]),
        FigureId::MprDelay => keep(&mpr_reports(figure, settings)?, &["mean_delay", "delay_samples"]),
    };
    Ok(rows)
}

/// Runs a figure job and writes its CSV files into `dir`.
pub fn write_figure(figure: FigureId, dir: &Path, settings: &RunSettings) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e.into()))?;
    if figure == FigureId::StabilityRegion {
        return REGION_USERS.iter().map(|&n| write_region(dir, n)).collect();
    }
    let rows = figure_rows(figure, settings)?;
    let path = dir.join(format!("{}.csv", figure.file_stem()));
    crate::write_csv_file(&path, &rows)?;
    Ok(vec![path])
}
