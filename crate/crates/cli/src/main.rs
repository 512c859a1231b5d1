use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plaquette_mipt::circuit::{self, CircuitConfig, InitialState, Perturbation, RecordSchedule, TrajectoryRecord};
use plaquette_mipt::experiment::{
    self, configure_workers_from_env, parse_region, random_system, renyi_report, BottomBoundary, ExperimentConfig, ExperimentError,
    RenyiMethod, SweepGrid,
};
use plaquette_mipt::glassy::{self, QuenchConfig, QuenchTrace};
use plaquette_mipt::kw::{self, Capacity};
use plaquette_mipt::plaquette::{self, build_parity_checks, DisorderGrid, ParityCheckSystem};
use plaquette_mipt::seed::member_seed;
use serde_json::json;

#[derive(Parser)]
#[command(name = "plaquette-mipt", version, about = "Measurement-induced transitions in a plaquette Clifford circuit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SystemArgs {
    /// Disorder grid file ("L T" header, then T rows of 1/5); overrides L, T, p.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[arg(long = "L", default_value_t = 8)]
    l: usize,
    #[arg(long = "T", default_value_t = 8)]
    t: usize,
    #[arg(long, default_value_t = 0.1)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// fixed-zero, two-rows or free.
    #[arg(long, default_value = "fixed-zero", value_parser = parse_boundary)]
    boundary: BottomBoundary,
}

impl SystemArgs {
    fn build(&self) -> Result<ParityCheckSystem, ExperimentError> {
        match &self.grid {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                let grid: DisorderGrid = text
                    .parse()
                    .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
                Ok(build_parity_checks(&grid, &self.boundary.initial_condition(grid.width()))?)
            }
            None => random_system(self.l, self.t, self.p, self.boundary, self.seed),
        }
    }
}

fn parse_boundary(s: &str) -> Result<BottomBoundary, String> {
    match s {
        "fixed-zero" => Ok(BottomBoundary::FixedZero),
        "two-rows" => Ok(BottomBoundary::TwoRows),
        "free" => Ok(BottomBoundary::Free),
        _ => Err(format!("unknown boundary {s:?}; expected fixed-zero, two-rows or free")),
    }
}

fn parse_method(s: &str) -> Result<RenyiMethod, String> {
    match s {
        "replica" => Ok(RenyiMethod::Replica),
        "groups" => Ok(RenyiMethod::Groups),
        "both" => Ok(RenyiMethod::Both),
        _ => Err(format!("unknown method {s:?}; expected replica, groups or both")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run circuit trajectories and write t,S_half,S_quarter,N_X,N_Z,PE_Z,PE_X.
    Circuit {
        #[arg(long = "L")]
        l: usize,
        #[arg(long)]
        t_max: usize,
        #[arg(long)]
        p: f64,
        /// x, z, staggered or random:pX.
        #[arg(long, default_value = "x", value_parser = |s: &str| s.parse::<InitialState>().map_err(|e| e.to_string()))]
        init: InitialState,
        /// none, flip:P or cz:F.
        #[arg(long, default_value = "none", value_parser = |s: &str| s.parse::<Perturbation>().map_err(|e| e.to_string()))]
        perturb: Perturbation,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        trajectories: usize,
        /// Record about this many log-spaced steps per decade instead of every step.
        #[arg(long)]
        per_decade: Option<usize>,
        /// Ensemble mean CSV; members go next to it when there are several.
        #[arg(long)]
        out: PathBuf,
    },
    /// Zero-temperature Rényi-2 entropy of a classical system.
    Renyi {
        #[command(flatten)]
        system: SystemArgs,
        /// "half" or "cells:a..b".
        #[arg(long, default_value = "half")]
        region: String,
        #[arg(long, default_value = "both", value_parser = parse_method)]
        method: RenyiMethod,
    },
    /// Compare the direct and dual partition functions.
    KwCheck {
        #[command(flatten)]
        system: SystemArgs,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = kw::DEFAULT_Q_MAX)]
        q_max: usize,
        #[arg(long, default_value_t = kw::DEFAULT_N_MAX)]
        n_max: usize,
    },
    /// Finite-temperature Rényi-2 entropy in nats.
    RenyiFiniteBeta {
        #[command(flatten)]
        system: SystemArgs,
        /// Repeat for several temperatures.
        #[arg(long, required = true)]
        beta: Vec<f64>,
        #[arg(long, default_value = "half")]
        region: String,
        #[arg(long, default_value_t = kw::DEFAULT_Q_MAX)]
        q_max: usize,
        #[arg(long, default_value_t = kw::DEFAULT_N_MAX)]
        n_max: usize,
    },
    /// Kinetic Monte Carlo quench; writes t,epsilon.
    Mcmc {
        #[arg(long = "L")]
        l: usize,
        #[arg(long, default_value_t = 0.0)]
        p: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long)]
        t_max: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 0.01)]
        t_min: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rescale quench traces by t^(1/beta) and score the collapse.
    Collapse {
        /// Trace CSVs written by `mcmc`.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// One temperature per trace, in the same order.
        #[arg(long, required = true)]
        beta: Vec<f64>,
        #[arg(long, default_value_t = 0.1)]
        rel_tol: f64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Support histogram of boundary symmetry generators.
    SupportStats {
        #[command(flatten)]
        system: SystemArgs,
    },
    /// Run an experiment config into an artifact directory.
    Run {
        config: PathBuf,
        /// key=value override; repeatable.
        #[arg(long = "set")]
        set: Vec<String>,
        /// Replaces out_dir from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a config over a cartesian grid and write sweep.csv.
    Sweep {
        config: PathBuf,
        /// key=v1,v2,...; repeatable.
        #[arg(long = "grid", required = true)]
        grid: Vec<String>,
        #[arg(long = "set")]
        set: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_json(value: &impl serde::Serialize) -> Result<(), ExperimentError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn member_path(out: &Path, index: usize) -> PathBuf {
    let stem = out.file_stem().map_or("trajectory".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}_{index:04}.csv"))
}

fn load_config(path: &Path, set: &[String], out: Option<&PathBuf>) -> Result<ExperimentConfig, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_toml_with_overrides(&text, set)?;
    if let Some(out) = out {
        cfg.common.out_dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<(), ExperimentError> {
    match command {
        Command::Circuit {
            l,
            t_max,
            p,
            init,
            perturb,
            seed,
            trajectories,
            per_decade,
            out,
        } => {
            if trajectories == 0 {
                return Err(ExperimentError::Config("--trajectories must be at least 1".into()));
            }
            let cfg = CircuitConfig {
                l,
                t_max,
                p,
                initial_state: init,
                perturbation: perturb,
                seed,
                schedule: per_decade.map_or(RecordSchedule::EveryStep, |per_decade| RecordSchedule::LogSpaced { per_decade }),
            };
            let recs = circuit::run_ensemble(&cfg, trajectories)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            if trajectories == 1 {
                experiment::write_trajectory_csv(&out, &recs[0])?;
            } else {
                experiment::write_mean_trajectory_csv(&out, &recs)?;
                for (i, rec) in recs.iter().enumerate() {
                    experiment::write_trajectory_csv(&member_path(&out, i), rec)?;
                }
            }
            let slopes: Vec<f64> = recs.iter().filter_map(|r| r.log_slope(l, t_max)).map(|f| f.slope).collect();
            let violations: usize = recs.iter().map(TrajectoryRecord::bound_violations).sum();
            print_json(&json!({ "log_slope": slopes, "bound_violations": violations }))?;
            if violations > 0 {
                return Err(ExperimentError::Invariant(format!("{violations} steps exceed the participation-entropy bound")));
            }
        }
        Command::Renyi { system, region, method } => {
            let sys = system.build()?;
            let report = renyi_report(&sys, &parse_region(&region, &sys)?, method)?;
            print_json(&report)?;
            if report.methods_agree == Some(false) {
                return Err(ExperimentError::Invariant("replica and group entropies disagree".into()));
            }
        }
        Command::KwCheck {
            system,
            beta,
            q_max,
            n_max,
        } => {
            let sys = system.build()?;
            print_json(&kw::kw_identity_check(&sys, beta, Capacity { q_max, n_max })?)?;
        }
        Command::RenyiFiniteBeta {
            system,
            beta,
            region,
            q_max,
            n_max,
        } => {
            let sys = system.build()?;
            let region = parse_region(&region, &sys)?;
            let rows = beta
                .iter()
                .map(|&b| {
                    let r = kw::finite_beta_renyi2(&sys, &region, b, Capacity { q_max, n_max })?;
                    Ok(json!({ "beta": r.beta, "S2_nats": r.s2_nats }))
                })
                .collect::<Result<Vec<_>, ExperimentError>>()?;
            print_json(&rows)?;
        }
        Command::Mcmc {
            l,
            p,
            beta,
            t_max,
            seed,
            samples,
            t_min,
            out,
        } => {
            let trace = glassy::run_quench(&QuenchConfig {
                l,
                p,
                beta,
                t_max,
                seed,
                samples,
                t_min,
            })?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            experiment::write_quench_csv(&out, &trace)?;
            print_json(&json!({ "events": trace.events, "completed": trace.completed }))?;
        }
        Command::Collapse {
            traces,
            beta,
            rel_tol,
            out_dir,
        } => {
            if traces.len() != beta.len() {
                return Err(ExperimentError::Config(format!("{} traces but {} --beta values", traces.len(), beta.len())));
            }
            let loaded = traces
                .iter()
                .zip(&beta)
                .enumerate()
                .map(|(k, (path, &b))| {
                    let (times, epsilon) = experiment::read_quench_csv(path)?;
                    Ok(QuenchTrace {
                        l: 0,
                        p: 0.0,
                        beta: b,
                        seed: member_seed(0, k as u64),
                        times,
                        epsilon,
                        events: 0,
                        completed: false,
                    })
                })
                .collect::<Result<Vec<_>, ExperimentError>>()?;
            fs::create_dir_all(&out_dir)?;
            print_json(&experiment::write_collapse(&out_dir, &loaded, rel_tol)?)?;
        }
        Command::SupportStats { system } => {
            let sys = system.build()?;
            let report = plaquette::boundary_quotient_generators(&sys, &plaquette::symmetry_basis(&sys));
            let stats = plaquette::support_statistics(&report);
            print_json(&json!({
                "generators": stats.generators,
                "extensive_fraction": stats.extensive_fraction,
                "histogram": stats.histogram,
            }))?;
        }
        Command::Run { config, set, out } => {
            let cfg = load_config(&config, &set, out.as_ref())?;
            let summary = experiment::run_experiment(&cfg, Path::new(&cfg.common.out_dir))?;
            eprintln!("wrote {}", cfg.common.out_dir);
            print_json(&summary)?;
        }
        Command::Sweep { config, grid, set, out } => {
            let cfg = load_config(&config, &set, out.as_ref())?;
            let grid = SweepGrid::parse(&grid)?;
            let runs = experiment::sweep(&cfg, &grid, Path::new(&cfg.common.out_dir))?;
            eprintln!("wrote {} grid points to {}", runs.len(), cfg.common.out_dir);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_workers_from_env().and_then(|()| execute(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
