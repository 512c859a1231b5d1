//! Experiment orchestration: TOML configs, seeded ensembles, CSV/JSON output
//! and plot manifests.
//!
//! A config is a flat TOML table. The keys `kind`, `seed`, `ensemble`,
//! `out_dir` and `member` are shared; everything else belongs to the kind
//! and unknown keys are rejected. Member `i` of an ensemble uses
//! `member_seed(seed, i)`; setting `member = i` reruns that member alone.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{self, CircuitConfig, CircuitError, InitialState, Perturbation, RecordSchedule, TrajectoryRecord};
use crate::f2::ColumnSet;
use crate::glassy::{self, KmcError, QuenchConfig, QuenchTrace};
use crate::kw::{self, Capacity, KwError};
use crate::plaquette::{self, build_parity_checks, DisorderGrid, InitialCondition, ParityCheckSystem, PlaquetteError};
use crate::replica::{self, ReplicaError};
use crate::seed::member_seed;
use crate::stats;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "MIPT_WORKERS";

/// Column names of trajectory CSVs.
pub const TRAJECTORY_HEADER: [&str; 7] = ["t", "S_half", "S_quarter", "N_X", "N_Z", "PE_Z", "PE_X"];
/// Column names of quench CSVs.
pub const QUENCH_HEADER: [&str; 2] = ["t", "epsilon"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl ExperimentError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Capacity(_) => 3,
            Self::Invariant(_) => 4,
            Self::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for ExperimentError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<serde_json::Error> for ExperimentError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<CircuitError> for ExperimentError {
    fn from(e: CircuitError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<PlaquetteError> for ExperimentError {
    fn from(e: PlaquetteError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<ReplicaError> for ExperimentError {
    fn from(e: ReplicaError) -> Self {
        Self::Config(e.to_string())
    }
}

impl From<KwError> for ExperimentError {
    fn from(e: KwError) -> Self {
        match e {
            KwError::DualCapacity { .. } | KwError::BruteCapacity { .. } | KwError::Capacity { .. } => Self::Capacity(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

impl From<KmcError> for ExperimentError {
    fn from(e: KmcError) -> Self {
        match e {
            KmcError::EnergyDrift { .. } => Self::Invariant(e.to_string()),
            _ => Self::Config(e.to_string()),
        }
    }
}

/// Size the global worker pool from [`WORKERS_ENV`], if set.
pub fn configure_workers_from_env() -> Result<(), ExperimentError> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .map_err(|_| ExperimentError::Config(format!("{WORKERS_ENV}={value:?} is not a worker count")))?;
    // A pool that already exists keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// How the lowest rows of a classical system are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BottomBoundary {
    /// Row 1 pinned to zero.
    #[default]
    FixedZero,
    /// Rows 1 and 2 pinned to zero.
    TwoRows,
    /// Nothing pinned.
    Free,
}

impl BottomBoundary {
    pub fn initial_condition(self, l: usize) -> InitialCondition {
        match self {
            Self::FixedZero => InitialCondition::FixedZero,
            Self::TwoRows => InitialCondition::fixed_two_rows(l),
            Self::Free => InitialCondition::Free,
        }
    }
}

/// `"half"` or `"cells:a..b"` (half-open).
pub fn parse_region(text: &str, sys: &ParityCheckSystem) -> Result<ColumnSet, ExperimentError> {
    if text == "half" {
        return Ok(sys.half_region());
    }
    let bad = || ExperimentError::Config(format!("region {text:?}: expected \"half\" or \"cells:a..b\""));
    let range = text.strip_prefix("cells:").ok_or_else(bad)?;
    let (a, b) = range.split_once("..").ok_or_else(bad)?;
    let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    if a > b || b > sys.width() {
        return Err(bad());
    }
    Ok(sys.boundary_region(a..b))
}

/// Random classical system from `(L, T, p, seed)`.
pub fn random_system(l: usize, t: usize, p: f64, boundary: BottomBoundary, seed: u64) -> Result<ParityCheckSystem, ExperimentError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ExperimentError::Config(format!("p = {p} is outside [0, 1]")));
    }
    if l < 3 || t < 3 {
        return Err(ExperimentError::Config(format!("need L ≥ 3 and T ≥ 3, got L = {l}, T = {t}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = DisorderGrid::random(l, t, p, &mut rng);
    Ok(build_parity_checks(&grid, &boundary.initial_condition(l))?)
}

fn default_init() -> InitialState {
    InitialState::UniformX
}

fn default_region() -> String {
    "half".into()
}

fn default_q_max() -> usize {
    kw::DEFAULT_Q_MAX
}

fn default_n_max() -> usize {
    kw::DEFAULT_N_MAX
}

fn default_samples() -> usize {
    50
}

fn default_t_min() -> f64 {
    0.01
}

fn default_rel_tol() -> f64 {
    0.1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RenyiMethod {
    Replica,
    Groups,
    #[default]
    Both,
}

/// Kind-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Params {
    #[serde(rename_all = "snake_case")]
    CircuitTrajectory {
        #[serde(rename = "L")]
        l: usize,
        t_max: usize,
        p: f64,
        #[serde(default = "default_init")]
        init: InitialState,
        #[serde(default)]
        perturb: Perturbation,
        /// Log-spaced recording; every step when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        per_decade: Option<usize>,
        /// Lower end of the log-slope fit window; `L` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fit_t_lo: Option<usize>,
    },
    MiptSweep {
        #[serde(rename = "Ls")]
        ls: Vec<usize>,
        ps: Vec<f64>,
        /// Height as a multiple of `L`.
        #[serde(default = "two")]
        height_factor: usize,
        #[serde(default)]
        boundary: BottomBoundary,
    },
    RenyiClassical {
        #[serde(rename = "L")]
        l: usize,
        #[serde(rename = "T")]
        t: usize,
        p: f64,
        #[serde(default)]
        boundary: BottomBoundary,
        #[serde(default = "default_region")]
        region: String,
        #[serde(default)]
        method: RenyiMethod,
        /// Disorder grid file; replaces `(L, T, p)` sampling when present.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        grid_file: Option<String>,
    },
    KwCheck {
        #[serde(rename = "L")]
        l: usize,
        #[serde(rename = "T")]
        t: usize,
        p: f64,
        beta: f64,
        #[serde(default)]
        boundary: BottomBoundary,
        #[serde(default = "default_q_max")]
        q_max: usize,
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
    FiniteBetaSweep {
        #[serde(rename = "L")]
        l: usize,
        #[serde(rename = "T")]
        t: usize,
        p: f64,
        betas: Vec<f64>,
        #[serde(default)]
        boundary: BottomBoundary,
        #[serde(default = "default_region")]
        region: String,
        #[serde(default = "default_q_max")]
        q_max: usize,
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
    McmcQuench {
        #[serde(rename = "L")]
        l: usize,
        p: f64,
        beta: f64,
        t_max: f64,
        #[serde(default = "default_t_min")]
        t_min: f64,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_rel_tol")]
        rel_tol: f64,
    },
    Collapse {
        #[serde(rename = "L")]
        l: usize,
        p: f64,
        betas: Vec<f64>,
        t_max: f64,
        #[serde(default = "default_t_min")]
        t_min: f64,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_rel_tol")]
        rel_tol: f64,
    },
    SupportStats {
        #[serde(rename = "L")]
        l: usize,
        #[serde(rename = "T")]
        t: usize,
        p: f64,
        #[serde(default)]
        boundary: BottomBoundary,
    },
}

fn two() -> usize {
    2
}

/// Keys shared by every kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Common {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub ensemble: usize,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    /// Run only this ensemble index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member: Option<usize>,
}

fn one() -> usize {
    1
}

fn default_out_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub common: Common,
    pub params: Params,
}

const COMMON_KEYS: [&str; 4] = ["seed", "ensemble", "out_dir", "member"];

impl ExperimentConfig {
    /// Parse a TOML table, rejecting unknown keys.
    pub fn from_table(mut table: toml::Table) -> Result<Self, ExperimentError> {
        let mut common = toml::Table::new();
        for key in COMMON_KEYS {
            if let Some(v) = table.remove(key) {
                common.insert(key.into(), v);
            }
        }
        let common: Common = common.try_into().map_err(|e| ExperimentError::Config(e.to_string()))?;
        let kind = table
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| ExperimentError::Config("missing string key `kind`".into()))?
            .to_string();
        check_known_keys(&kind, &table)?;
        let params: Params = table.try_into().map_err(|e| ExperimentError::Config(format!("kind {kind}: {e}")))?;
        if common.ensemble == 0 {
            return Err(ExperimentError::Config("ensemble must be at least 1".into()));
        }
        if let Some(m) = common.member {
            if m >= common.ensemble {
                return Err(ExperimentError::Config(format!("member {m} is outside ensemble of {}", common.ensemble)));
            }
        }
        Ok(Self { common, params })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ExperimentError::Config(e.to_string()))?;
        Self::from_table(table)
    }

    /// Parse `text`, then apply `key=value` overrides.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ExperimentError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ExperimentError::Config(e.to_string()))?;
        for o in overrides {
            let (key, value) = parse_override(o)?;
            table.insert(key, value);
        }
        Self::from_table(table)
    }

    pub fn to_table(&self) -> toml::Table {
        let mut table = toml::Table::try_from(&self.params).expect("params serialize to a table");
        let common = toml::Table::try_from(&self.common).expect("common keys serialize to a table");
        table.extend(common);
        table
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(&self.to_table()).expect("tables serialize")
    }

    pub fn kind(&self) -> &'static str {
        match self.params {
            Params::CircuitTrajectory { .. } => "circuit-trajectory",
            Params::MiptSweep { .. } => "mipt-sweep",
            Params::RenyiClassical { .. } => "renyi-classical",
            Params::KwCheck { .. } => "kw-check",
            Params::FiniteBetaSweep { .. } => "finite-beta-sweep",
            Params::McmcQuench { .. } => "mcmc-quench",
            Params::Collapse { .. } => "collapse",
            Params::SupportStats { .. } => "support-stats",
        }
    }

    /// `(index, seed)` of the members to run.
    pub fn members(&self) -> Vec<(usize, u64)> {
        let seeds = |i: usize| (i, member_seed(self.common.seed, i as u64));
        match self.common.member {
            Some(m) => vec![seeds(m)],
            None => (0..self.common.ensemble).map(seeds).collect(),
        }
    }
}

/// Internally tagged enums ignore unknown keys, so check them here.
fn check_known_keys(kind: &str, table: &toml::Table) -> Result<(), ExperimentError> {
    let allowed: &[&str] = match kind {
        "circuit-trajectory" => &["L", "t_max", "p", "init", "perturb", "per_decade", "fit_t_lo"],
        "mipt-sweep" => &["Ls", "ps", "height_factor", "boundary"],
        "renyi-classical" => &["L", "T", "p", "boundary", "region", "method", "grid_file"],
        "kw-check" => &["L", "T", "p", "beta", "boundary", "q_max", "n_max"],
        "finite-beta-sweep" => &["L", "T", "p", "betas", "boundary", "region", "q_max", "n_max"],
        "mcmc-quench" => &["L", "p", "beta", "t_max", "t_min", "samples", "rel_tol"],
        "collapse" => &["L", "p", "betas", "t_max", "t_min", "samples", "rel_tol"],
        "support-stats" => &["L", "T", "p", "boundary"],
        other => return Err(ExperimentError::Config(format!("unknown kind {other:?}"))),
    };
    for key in table.keys().filter(|k| k.as_str() != "kind") {
        if !allowed.contains(&key.as_str()) && !COMMON_KEYS.contains(&key.as_str()) {
            return Err(ExperimentError::Config(format!(
                "unknown key `{key}` for kind {kind}; expected one of {}",
                allowed.join(", ")
            )));
        }
    }
    Ok(())
}

/// `key=value`, where `value` is read as a TOML value and falls back to a
/// bare string.
pub fn parse_override(text: &str) -> Result<(String, toml::Value), ExperimentError> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| ExperimentError::Config(format!("override {text:?} is not key=value")))?;
    let key = key.trim().to_string();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key, value))
}

/// One line of a plot manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub file: String,
    pub x: String,
    pub y: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    Log,
}

/// What an external plotter needs to draw the figures of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PlotManifest {
    pub plots: Vec<PlotSpec>,
}

impl PlotManifest {
    fn plot(&mut self, file: &str, x: &str, y: &str, scales: (Scale, Scale), series: Option<&str>, reference: Option<&str>) {
        self.plots.push(PlotSpec {
            file: file.into(),
            x: x.into(),
            y: y.into(),
            x_scale: scales.0,
            y_scale: scales.1,
            series: series.map(Into::into),
            reference: reference.map(Into::into),
        });
    }

    /// Write `manifest.json` into `dir`; every referenced file must exist.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, ExperimentError> {
        for p in &self.plots {
            if !dir.join(&p.file).is_file() {
                return Err(ExperimentError::Invariant(format!("manifest references missing file {}", p.file)));
            }
        }
        let path = dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

/// Per-member scalar results of one run, keyed by observable name.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct RunSummary {
    pub kind: String,
    pub observables: BTreeMap<String, Vec<f64>>,
    pub files: Vec<String>,
}

impl RunSummary {
    fn push(&mut self, name: &str, value: f64) {
        self.observables.entry(name.into()).or_default().push(value);
    }

    pub fn mean(&self, name: &str) -> Option<stats::MeanStderr> {
        self.observables.get(name).and_then(|v| stats::mean_stderr(v))
    }
}

pub fn write_trajectory_csv(path: &Path, rec: &TrajectoryRecord) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRAJECTORY_HEADER)?;
    for i in 0..rec.len() {
        w.write_record(
            [rec.t[i], rec.s_half[i], rec.s_quarter[i], rec.n_x[i], rec.n_z[i], rec.pe_z[i], rec.pe_x[i]].map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Column-wise ensemble mean of trajectories recorded at the same steps.
pub fn write_mean_trajectory_csv(path: &Path, recs: &[TrajectoryRecord]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRAJECTORY_HEADER)?;
    let n = recs.len() as f64;
    for i in 0..recs.first().map_or(0, TrajectoryRecord::len) {
        let mean = |f: fn(&TrajectoryRecord) -> &Vec<usize>| recs.iter().map(|r| f(r)[i] as f64).sum::<f64>() / n;
        let row = [
            recs[0].t[i] as f64,
            mean(|r| &r.s_half),
            mean(|r| &r.s_quarter),
            mean(|r| &r.n_x),
            mean(|r| &r.n_z),
            mean(|r| &r.pe_z),
            mean(|r| &r.pe_x),
        ];
        w.write_record(row.map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_quench_csv(path: &Path, trace: &QuenchTrace) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(QUENCH_HEADER)?;
    for (t, e) in trace.times.iter().zip(&trace.epsilon) {
        w.write_record([t.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Read `(t, epsilon)` rows written by [`write_quench_csv`].
pub fn read_quench_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>), ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != QUENCH_HEADER {
        return Err(ExperimentError::Config(format!("{}: expected header t,epsilon", path.display())));
    }
    let mut ts = Vec::new();
    let mut es = Vec::new();
    for row in r.records() {
        let row = row?;
        let parse = |i: usize| {
            row[i]
                .parse::<f64>()
                .map_err(|_| ExperimentError::Config(format!("{}: bad number {:?}", path.display(), &row[i])))
        };
        ts.push(parse(0)?);
        es.push(parse(1)?);
    }
    Ok((ts, es))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ExperimentError> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Output of one `renyi-classical` member.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenyiReport {
    pub k2: Option<usize>,
    pub k4: Option<usize>,
    #[serde(rename = "S2")]
    pub s2: usize,
    pub methods_agree: Option<bool>,
}

pub fn renyi_report(sys: &ParityCheckSystem, region: &ColumnSet, method: RenyiMethod) -> Result<RenyiReport, ExperimentError> {
    let by_replica = matches!(method, RenyiMethod::Replica | RenyiMethod::Both)
        .then(|| replica::renyi2_via_replicas(sys, region))
        .transpose()?;
    let by_groups = matches!(method, RenyiMethod::Groups | RenyiMethod::Both)
        .then(|| replica::renyi2_via_groups(sys, region))
        .transpose()?;
    let s2 = by_replica.map(|r| r.s2).or(by_groups.map(|g| g.s2)).expect("at least one method");
    Ok(RenyiReport {
        k2: by_replica.map(|r| r.k2),
        k4: by_replica.map(|r| r.k4),
        s2,
        methods_agree: by_replica.zip(by_groups).map(|(r, g)| r.s2 == g.s2),
    })
}

/// Run one experiment into `dir` (created if needed).
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<RunSummary, ExperimentError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string())?;
    let mut summary = RunSummary {
        kind: cfg.kind().into(),
        ..Default::default()
    };
    let mut manifest = PlotManifest::default();
    let members = cfg.members();
    match &cfg.params {
        &Params::CircuitTrajectory {
            l,
            t_max,
            p,
            init,
            perturb,
            per_decade,
            fit_t_lo,
        } => {
            let base = CircuitConfig {
                l,
                t_max,
                p,
                initial_state: init,
                perturbation: perturb,
                seed: 0,
                schedule: per_decade.map_or(RecordSchedule::EveryStep, |per_decade| RecordSchedule::LogSpaced { per_decade }),
            };
            base.validate()?;
            let recs: Vec<TrajectoryRecord> = members
                .par_iter()
                .map(|&(_, seed)| circuit::run(&CircuitConfig { seed, ..base.clone() }).map(|(r, _)| r))
                .collect::<Result<_, _>>()?;
            let member_dir = dir.join("members");
            fs::create_dir_all(&member_dir)?;
            let lo = fit_t_lo.unwrap_or(l);
            for (&(i, _), rec) in members.iter().zip(&recs) {
                let name = format!("members/trajectory_{i:04}.csv");
                write_trajectory_csv(&dir.join(&name), rec)?;
                summary.files.push(name);
                let last = rec.len().saturating_sub(1);
                if !rec.is_empty() {
                    summary.push("S_half_final", rec.s_half[last] as f64);
                    summary.push("S_quarter_final", rec.s_quarter[last] as f64);
                    summary.push("N_Z_final", rec.n_z[last] as f64);
                }
                if let Some(fit) = rec.log_slope(lo, t_max) {
                    summary.push("log_slope", fit.slope);
                }
                if let Some(fit) = rec.n_z_log_slope(lo, t_max) {
                    summary.push("N_Z_log_slope", fit.slope);
                }
                summary.push("bound_violations", rec.bound_violations() as f64);
            }
            write_mean_trajectory_csv(&dir.join("mean.csv"), &recs)?;
            summary.files.push("mean.csv".into());
            manifest.plot("mean.csv", "t", "S_half", (Scale::Log, Scale::Linear), None, Some("reference slope 3.7 per decade"));
            manifest.plot("mean.csv", "t", "N_Z", (Scale::Log, Scale::Linear), None, None);
            let violations: usize = recs.iter().map(TrajectoryRecord::bound_violations).sum();
            if violations > 0 {
                write_summary(dir, &summary)?;
                return Err(ExperimentError::Invariant(format!(
                    "{violations} recorded steps exceed the participation-entropy bound"
                )));
            }
        }
        Params::MiptSweep {
            ls,
            ps,
            height_factor,
            boundary,
        } => {
            let mut rows = Vec::new();
            let mut gamma_rows = Vec::new();
            for &p in ps {
                let mut samples = Vec::new();
                for &l in ls {
                    let results: Vec<(f64, f64)> = members
                        .par_iter()
                        .map(|&(_, seed)| {
                            let sys = random_system(l, height_factor * l, p, *boundary, seed)?;
                            let s2 = replica::renyi2_via_groups(&sys, &sys.half_region())?.s2 as f64;
                            let report = plaquette::boundary_quotient_generators(&sys, &plaquette::symmetry_basis(&sys));
                            Ok((s2, plaquette::support_statistics(&report).extensive_fraction))
                        })
                        .collect::<Result<_, ExperimentError>>()?;
                    let (s2s, fracs): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
                    let s = stats::mean_stderr(&s2s).expect("nonempty ensemble");
                    let f = stats::mean_stderr(&fracs).expect("nonempty ensemble");
                    rows.push(vec![l.to_string(), p.to_string(), s.mean.to_string(), s.stderr.to_string(), f.mean.to_string(), f.stderr.to_string()]);
                    summary.push(&format!("S2_L{l}_p{p}"), s.mean);
                    summary.push(&format!("extensive_L{l}_p{p}"), f.mean);
                    samples.push((l, s2s));
                }
                if let Ok(g) = replica::gamma_estimate(&samples, 0.5) {
                    gamma_rows.push(vec![p.to_string(), g.gamma.to_string(), g.stderr.to_string(), g.beta_c.map_or(String::new(), |b| b.to_string())]);
                    summary.push(&format!("gamma_p{p}"), g.gamma);
                }
            }
            write_rows(&dir.join("mipt.csv"), &["L", "p", "S2_mean", "S2_stderr", "extensive_mean", "extensive_stderr"], &rows)?;
            write_rows(&dir.join("gamma.csv"), &["p", "gamma", "gamma_stderr", "beta_c"], &gamma_rows)?;
            summary.files.extend(["mipt.csv".into(), "gamma.csv".into()]);
            manifest.plot("mipt.csv", "L", "S2_mean", (Scale::Linear, Scale::Linear), Some("p"), None);
            manifest.plot("mipt.csv", "p", "extensive_mean", (Scale::Linear, Scale::Linear), Some("L"), Some("transition near p = 0.25"));
            manifest.plot("gamma.csv", "p", "gamma", (Scale::Linear, Scale::Linear), None, None);
        }
        Params::RenyiClassical {
            l,
            t,
            p,
            boundary,
            region,
            method,
            grid_file,
        } => {
            let fixed_grid = grid_file
                .as_ref()
                .map(|f| -> Result<DisorderGrid, ExperimentError> {
                    let text = fs::read_to_string(f)?;
                    text.parse::<DisorderGrid>().map_err(|e| ExperimentError::Config(format!("{f}: {e}")))
                })
                .transpose()?;
            let reports: Vec<RenyiReport> = members
                .par_iter()
                .map(|&(_, seed)| {
                    let sys = match &fixed_grid {
                        Some(g) => build_parity_checks(g, &boundary.initial_condition(g.width()))?,
                        None => random_system(*l, *t, *p, *boundary, seed)?,
                    };
                    renyi_report(&sys, &parse_region(region, &sys)?, *method)
                })
                .collect::<Result<_, _>>()?;
            for r in &reports {
                summary.push("S2", r.s2 as f64);
            }
            write_json(&dir.join("renyi.json"), &reports)?;
            summary.files.push("renyi.json".into());
            if reports.iter().any(|r| r.methods_agree == Some(false)) {
                write_summary(dir, &summary)?;
                return Err(ExperimentError::Invariant("replica and group entropies disagree".into()));
            }
        }
        &Params::KwCheck {
            l,
            t,
            p,
            beta,
            boundary,
            q_max,
            n_max,
        } => {
            let checks: Vec<kw::KwCheck> = members
                .par_iter()
                .map(|&(_, seed)| {
                    let sys = random_system(l, t, p, boundary, seed)?;
                    Ok(kw::kw_identity_check(&sys, beta, Capacity { q_max, n_max })?)
                })
                .collect::<Result<_, ExperimentError>>()?;
            for c in &checks {
                summary.push("residual", c.residual);
                summary.push("Q", c.q as f64);
            }
            write_json(&dir.join("kw.json"), &checks)?;
            summary.files.push("kw.json".into());
        }
        Params::FiniteBetaSweep {
            l,
            t,
            p,
            betas,
            boundary,
            region,
            q_max,
            n_max,
        } => {
            let cap = Capacity {
                q_max: *q_max,
                n_max: *n_max,
            };
            let per_member: Vec<Vec<f64>> = members
                .par_iter()
                .map(|&(_, seed)| {
                    let sys = random_system(*l, *t, *p, *boundary, seed)?;
                    let region = parse_region(region, &sys)?;
                    betas
                        .iter()
                        .map(|&b| Ok(kw::finite_beta_renyi2(&sys, &region, b, cap)?.s2_nats))
                        .collect::<Result<Vec<f64>, ExperimentError>>()
                })
                .collect::<Result<_, _>>()?;
            let mut rows = Vec::new();
            for (k, &b) in betas.iter().enumerate() {
                let values: Vec<f64> = per_member.iter().map(|v| v[k]).collect();
                let m = stats::mean_stderr(&values).expect("nonempty ensemble");
                rows.push(vec![b.to_string(), m.mean.to_string(), m.stderr.to_string()]);
                for v in values {
                    summary.push(&format!("S2_beta{b}"), v);
                }
            }
            write_rows(&dir.join("finite_beta.csv"), &["beta", "S2_mean", "S2_stderr"], &rows)?;
            summary.files.push("finite_beta.csv".into());
            manifest.plot("finite_beta.csv", "beta", "S2_mean", (Scale::Linear, Scale::Linear), None, None);
        }
        &Params::McmcQuench {
            l,
            p,
            beta,
            t_max,
            t_min,
            samples,
            rel_tol,
        } => {
            let traces: Vec<QuenchTrace> = members
                .par_iter()
                .map(|&(_, seed)| {
                    glassy::run_quench(&QuenchConfig {
                        l,
                        p,
                        beta,
                        t_max,
                        seed,
                        samples,
                        t_min,
                    })
                })
                .collect::<Result<_, _>>()?;
            let member_dir = dir.join("members");
            fs::create_dir_all(&member_dir)?;
            for (&(i, _), tr) in members.iter().zip(&traces) {
                let name = format!("members/quench_{i:04}.csv");
                write_quench_csv(&dir.join(&name), tr)?;
                summary.files.push(name);
                summary.push("epsilon_final", *tr.epsilon.last().unwrap_or(&0.0));
                summary.push("plateaus", glassy::detect_plateaus(tr, rel_tol).len() as f64);
            }
            let mut mean = traces[0].clone();
            for (k, e) in mean.epsilon.iter_mut().enumerate() {
                *e = traces.iter().map(|t| t.epsilon[k]).sum::<f64>() / traces.len() as f64;
            }
            write_quench_csv(&dir.join("mean.csv"), &mean)?;
            summary.files.push("mean.csv".into());
            manifest.plot("mean.csv", "t", "epsilon", (Scale::Log, Scale::Linear), None, None);
        }
        Params::Collapse {
            l,
            p,
            betas,
            t_max,
            t_min,
            samples,
            rel_tol,
        } => {
            let traces: Vec<QuenchTrace> = betas
                .par_iter()
                .enumerate()
                .map(|(k, &beta)| {
                    glassy::run_quench(&QuenchConfig {
                        l: *l,
                        p: *p,
                        beta,
                        t_max: *t_max,
                        seed: member_seed(cfg.common.seed, k as u64),
                        samples: *samples,
                        t_min: *t_min,
                    })
                })
                .collect::<Result<_, _>>()?;
            let report = write_collapse(dir, &traces, *rel_tol)?;
            summary.push("score", report.score);
            summary.push("raw_score", report.raw_score);
            summary.push("ratio", report.raw_score / report.score);
            summary.files.extend(["rescaled.csv".into(), "collapse.json".into()]);
            manifest.plot("rescaled.csv", "u", "epsilon", (Scale::Log, Scale::Linear), Some("beta"), Some("curves collapse against t^(1/beta)"));
        }
        &Params::SupportStats { l, t, p, boundary } => {
            let all: Vec<plaquette::SupportStatistics> = members
                .par_iter()
                .map(|&(_, seed)| {
                    let sys = random_system(l, t, p, boundary, seed)?;
                    let report = plaquette::boundary_quotient_generators(&sys, &plaquette::symmetry_basis(&sys));
                    Ok(plaquette::support_statistics(&report))
                })
                .collect::<Result<_, ExperimentError>>()?;
            let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
            for s in &all {
                summary.push("extensive_fraction", s.extensive_fraction);
                summary.push("dimension", s.generators as f64);
                for (&k, &v) in &s.histogram {
                    *histogram.entry(k).or_insert(0) += v;
                }
            }
            let rows: Vec<Vec<String>> = histogram.iter().map(|(k, v)| vec![k.to_string(), v.to_string()]).collect();
            write_rows(&dir.join("support.csv"), &["support", "count"], &rows)?;
            summary.files.push("support.csv".into());
            manifest.plot("support.csv", "support", "count", (Scale::Linear, Scale::Log), None, None);
        }
    }
    write_summary(dir, &summary)?;
    manifest.write(dir)?;
    Ok(summary)
}

#[derive(Serialize)]
struct SummaryEntry {
    mean: f64,
    stderr: f64,
    n: usize,
}

fn write_summary(dir: &Path, summary: &RunSummary) -> Result<(), ExperimentError> {
    let stats: BTreeMap<&str, SummaryEntry> = summary
        .observables
        .iter()
        .filter_map(|(k, v)| {
            stats::mean_stderr(v).map(|m| {
                (
                    k.as_str(),
                    SummaryEntry {
                        mean: m.mean,
                        stderr: m.stderr,
                        n: m.n,
                    },
                )
            })
        })
        .collect();
    write_json(
        &dir.join("summary.json"),
        &serde_json::json!({ "kind": summary.kind, "observables": stats, "per_member": summary.observables }),
    )
}

/// Score JSON of a collapse run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseSummary {
    pub score: f64,
    pub raw_score: f64,
    pub plateaus: Vec<Vec<glassy::Plateau>>,
}

/// Write `rescaled.csv` and `collapse.json` for traces at several `β`.
pub fn write_collapse(dir: &Path, traces: &[QuenchTrace], rel_tol: f64) -> Result<CollapseSummary, ExperimentError> {
    let report = glassy::collapse_transform(traces)?;
    let mut rows = Vec::new();
    for (curve, tr) in report.curves.iter().zip(traces) {
        for k in 0..curve.u.len() {
            rows.push(vec![curve.beta.to_string(), tr.times[k].to_string(), curve.u[k].to_string(), curve.epsilon[k].to_string()]);
        }
    }
    write_rows(&dir.join("rescaled.csv"), &["beta", "t", "u", "epsilon"], &rows)?;
    let summary = CollapseSummary {
        score: report.score,
        raw_score: report.raw_score,
        plateaus: traces.iter().map(|t| glassy::detect_plateaus(t, rel_tol)).collect(),
    };
    write_json(&dir.join("collapse.json"), &summary)?;
    Ok(summary)
}

/// Cartesian grid of overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub axes: Vec<(String, Vec<toml::Value>)>,
}

impl SweepGrid {
    /// Parse `key=v1,v2,...` axes.
    pub fn parse(axes: &[String]) -> Result<Self, ExperimentError> {
        let mut out = Vec::new();
        for a in axes {
            let (key, values) = a
                .split_once('=')
                .ok_or_else(|| ExperimentError::Config(format!("grid axis {a:?} is not key=v1,v2,...")))?;
            let values: Vec<toml::Value> = values
                .split(',')
                .map(|v| parse_override(&format!("{key}={v}")).map(|(_, v)| v))
                .collect::<Result<_, _>>()?;
            out.push((key.trim().to_string(), values));
        }
        if out.iter().any(|(_, v)| v.is_empty()) || out.is_empty() {
            return Err(ExperimentError::Config("sweep grid is empty".into()));
        }
        Ok(Self { axes: out })
    }

    pub fn points(&self) -> Vec<Vec<(String, toml::Value)>> {
        let mut points = vec![Vec::new()];
        for (key, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push((key.clone(), v.clone()));
                        p
                    })
                })
                .collect();
        }
        points
    }
}

fn value_text(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Run `base` at every grid point into `dir/point_NNNN` and write
/// `dir/sweep.csv` with the mean and standard error of every observable.
pub fn sweep(base: &ExperimentConfig, grid: &SweepGrid, dir: &Path) -> Result<Vec<RunSummary>, ExperimentError> {
    fs::create_dir_all(dir)?;
    let mut runs = Vec::new();
    for (k, point) in grid.points().iter().enumerate() {
        let mut table = base.to_table();
        for (key, value) in point {
            table.insert(key.clone(), value.clone());
        }
        let cfg = ExperimentConfig::from_table(table)?;
        runs.push((point.clone(), run_experiment(&cfg, &dir.join(format!("point_{k:04}")))?));
    }
    let observables: Vec<String> = runs
        .iter()
        .flat_map(|(_, s)| s.observables.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut header: Vec<String> = grid.axes.iter().map(|(k, _)| k.clone()).collect();
    for o in &observables {
        header.push(format!("{o}_mean"));
        header.push(format!("{o}_stderr"));
    }
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|(point, s)| {
            let mut row: Vec<String> = point.iter().map(|(_, v)| value_text(v)).collect();
            for o in &observables {
                match s.mean(o) {
                    Some(m) => row.extend([m.mean.to_string(), m.stderr.to_string()]),
                    None => row.extend([String::new(), String::new()]),
                }
            }
            row
        })
        .collect();
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(&dir.join("sweep.csv"), &header_refs, &rows)?;
    Ok(runs.into_iter().map(|(_, s)| s).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn circuit_cfg() -> &'static str {
        "kind = \"circuit-trajectory\"\nseed = 5\nensemble = 3\nL = 6\nt_max = 12\np = 0.2\ninit = \"staggered\"\n"
    }

    #[test]
    fn config_round_trip() {
        let cfg = ExperimentConfig::from_toml_str(circuit_cfg()).unwrap();
        assert_eq!(cfg.kind(), "circuit-trajectory");
        assert_eq!(cfg.common.ensemble, 3);
        let echoed = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(echoed, cfg);
    }

    #[test]
    fn every_kind_round_trips() {
        let texts = [
            "kind = \"mipt-sweep\"\nLs = [6, 8]\nps = [0.1]\n",
            "kind = \"renyi-classical\"\nL = 4\nT = 4\np = 0.3\nmethod = \"groups\"\n",
            "kind = \"kw-check\"\nL = 3\nT = 4\np = 0.3\nbeta = 1.0\n",
            "kind = \"finite-beta-sweep\"\nL = 4\nT = 4\np = 0.1\nbetas = [0.5, 2.0]\n",
            "kind = \"mcmc-quench\"\nL = 8\np = 0.0\nbeta = 2.0\nt_max = 10.0\n",
            "kind = \"collapse\"\nL = 8\np = 0.0\nbetas = [2.0, 3.0]\nt_max = 10.0\nmember = 0\n",
            "kind = \"support-stats\"\nL = 6\nT = 8\np = 0.2\nboundary = \"free\"\n",
        ];
        for text in texts {
            let cfg = ExperimentConfig::from_toml_str(text).unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg, "{text}");
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = ExperimentConfig::from_toml_str(&format!("{}tmax = 3\n", circuit_cfg())).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("tmax"), "{err}");
        let err = ExperimentConfig::from_toml_str("kind = \"nope\"\n").unwrap_err();
        assert!(err.to_string().contains("nope"));
        let err = ExperimentConfig::from_toml_str("kind = \"kw-check\"\nL = 3\nT = 4\np = 0.3\n").unwrap_err();
        assert!(err.to_string().contains("beta"), "{err}");
    }

    #[test]
    fn overrides_apply() {
        let cfg = ExperimentConfig::from_toml_with_overrides(circuit_cfg(), &["p=0.4".into(), "init=x".into(), "ensemble=2".into()]).unwrap();
        match cfg.params {
            Params::CircuitTrajectory { p, init, .. } => {
                assert_eq!(p, 0.4);
                assert_eq!(init, InitialState::UniformX);
            }
            _ => panic!("wrong kind"),
        }
        assert_eq!(cfg.common.ensemble, 2);
        assert!(ExperimentConfig::from_toml_with_overrides(circuit_cfg(), &["bogus=1".into()]).is_err());
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn circuit_run_and_member_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str(circuit_cfg()).unwrap();
        let full = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(full.observables["S_half_final"].len(), 3);
        for f in ["config.toml", "mean.csv", "summary.json", "manifest.json", "members/trajectory_0002.csv"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        let single = ExperimentConfig::from_toml_with_overrides(circuit_cfg(), &["member=2".into()]).unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let one = run_experiment(&single, dir2.path()).unwrap();
        assert_eq!(one.observables["S_half_final"], vec![full.observables["S_half_final"][2]]);
        let a = fs::read_to_string(dir.path().join("members/trajectory_0002.csv")).unwrap();
        let b = fs::read_to_string(dir2.path().join("members/trajectory_0002.csv")).unwrap();
        assert_eq!(a, b);
        let echo = fs::read_to_string(dir.path().join("config.toml")).unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&echo).unwrap(), cfg);
    }

    #[test]
    fn renyi_methods_agree() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str("kind = \"renyi-classical\"\nensemble = 4\nL = 5\nT = 6\np = 0.2\n").unwrap();
        run_experiment(&cfg, dir.path()).unwrap();
        let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("renyi.json")).unwrap()).unwrap();
        assert_eq!(json.as_array().unwrap().len(), 4);
        assert!(json.as_array().unwrap().iter().all(|r| r["methods_agree"] == true));
    }

    #[test]
    fn capacity_error_code() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml_str("kind = \"kw-check\"\nL = 6\nT = 6\np = 0.2\nbeta = 1.0\n").unwrap();
        let err = run_experiment(&cfg, dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 3, "{err}");
    }

    #[test]
    fn single_point_sweep_matches_run() {
        let base = ExperimentConfig::from_toml_str("kind = \"support-stats\"\nensemble = 3\nseed = 4\nL = 6\nT = 8\np = 0.2\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let grid = SweepGrid::parse(&["p=0.2".into()]).unwrap();
        let swept = sweep(&base, &grid, dir.path()).unwrap();
        let direct = run_experiment(&base, &dir.path().join("direct")).unwrap();
        assert_eq!(swept[0].observables, direct.observables);
        let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert!(text.starts_with("p,dimension_mean,dimension_stderr,extensive_fraction_mean,extensive_fraction_stderr\n"), "{text}");
    }

    #[test]
    fn sweep_grid_is_cartesian() {
        let grid = SweepGrid::parse(&["p=0.1,0.2".into(), "L=4,5,6".into()]).unwrap();
        assert_eq!(grid.points().len(), 6);
        assert!(SweepGrid::parse(&[]).is_err());
    }

    #[test]
    fn manifest_requires_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = PlotManifest::default();
        m.plot("missing.csv", "t", "y", (Scale::Log, Scale::Linear), None, None);
        assert_eq!(m.write(dir.path()).unwrap_err().exit_code(), 4);
    }

    #[test]
    fn quench_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let tr = glassy::run_quench(&QuenchConfig::new(6, 0.0, 1.0, 5.0, 1)).unwrap();
        let path = dir.path().join("q.csv");
        write_quench_csv(&path, &tr).unwrap();
        let (t, e) = read_quench_csv(&path).unwrap();
        assert_eq!(t, tr.times);
        assert_eq!(e, tr.epsilon);
    }

    #[test]
    fn region_specs() {
        let sys = random_system(6, 5, 0.2, BottomBoundary::FixedZero, 1).unwrap();
        assert_eq!(parse_region("half", &sys).unwrap(), sys.half_region());
        assert_eq!(parse_region("cells:1..3", &sys).unwrap(), sys.boundary_region(1..3));
        assert!(parse_region("cells:4..9", &sys).is_err());
        assert!(parse_region("left", &sys).is_err());
    }
}
