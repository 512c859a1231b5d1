//! The hybrid measurement circuit on `L` two-qubit cells.
//!
//! One step is:
//! 1. each cell independently with probability `p`: measure `X` on `a`, then
//!    `Z` on `b`;
//! 2. CNOTs with control `b_j` and targets `a_{j−1}, a_j, a_{j+1}` (periodic);
//! 3. swap `a` and `b` in every cell.
//!
//! Observables are recorded after the swap; `t` counts completed steps.
//! Perturbations replace stage 2 by an explicit gate sequence applied in the
//! order `j = 0..L`, targets `j − 1, j, j + 1`.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plaquette::{DisorderGrid, InitialCondition};
use crate::seed::member_seed;
use crate::stabilizer::{PauliAxis, SectorState, SiteAddress, Tableau};
use crate::stats::{self, LinearFit};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("L = {0} is too small; need at least 2 cells")]
    TooFewCells(usize),
    #[error("{name} = {value} is outside [0, 1]")]
    Probability { name: &'static str, value: f64 },
    #[error("cannot parse {what} from {input:?}")]
    Parse { what: &'static str, input: String },
    #[error("the classical mapping needs an unperturbed circuit")]
    PerturbedExport,
}

/// Initial product state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitialState {
    /// Every qubit an `X` eigenstate.
    UniformX,
    /// Every qubit a `Z` eigenstate.
    UniformZ,
    /// `a` qubits `Z` eigenstates, `b` qubits `X` eigenstates.
    Staggered,
    /// Each qubit independently an `X` eigenstate with probability `p_x`.
    Random { p_x: f64 },
}

impl InitialState {
    /// Realize the per-qubit bases in interleaved qubit order.
    pub fn bases(&self, cells: usize, rng: &mut impl Rng) -> Vec<PauliAxis> {
        (0..2 * cells)
            .map(|q| match *self {
                Self::UniformX => PauliAxis::X,
                Self::UniformZ => PauliAxis::Z,
                Self::Staggered => {
                    if q % 2 == 0 {
                        PauliAxis::Z
                    } else {
                        PauliAxis::X
                    }
                }
                Self::Random { p_x } => {
                    if rng.random_bool(p_x) {
                        PauliAxis::X
                    } else {
                        PauliAxis::Z
                    }
                }
            })
            .collect()
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UniformX => f.write_str("x"),
            Self::UniformZ => f.write_str("z"),
            Self::Staggered => f.write_str("staggered"),
            Self::Random { p_x } => write!(f, "random:{p_x}"),
        }
    }
}

impl FromStr for InitialState {
    type Err = CircuitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || CircuitError::Parse {
            what: "initial state",
            input: s.to_string(),
        };
        match s {
            "x" => Ok(Self::UniformX),
            "z" => Ok(Self::UniformZ),
            "staggered" => Ok(Self::Staggered),
            _ => {
                let p = s.strip_prefix("random:").ok_or_else(err)?;
                Ok(Self::Random {
                    p_x: p.parse().map_err(|_| err())?,
                })
            }
        }
    }
}

impl TryFrom<String> for InitialState {
    type Error = CircuitError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<InitialState> for String {
    fn from(s: InitialState) -> Self {
        s.to_string()
    }
}

/// Modification of the CNOT stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(try_from = "String", into = "String")]
pub enum Perturbation {
    #[default]
    None,
    /// Each CNOT independently, every step, has control and target exchanged
    /// with probability `p_cn`.
    FlippedCnot { p_cn: f64 },
    /// Each CNOT independently, every step, is replaced by a CZ on the same
    /// pair with probability `fraction`.
    CzSubstitution { fraction: f64 },
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => f.write_str("none"),
            Self::FlippedCnot { p_cn } => write!(f, "flip:{p_cn}"),
            Self::CzSubstitution { fraction } => write!(f, "cz:{fraction}"),
        }
    }
}

impl FromStr for Perturbation {
    type Err = CircuitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || CircuitError::Parse {
            what: "perturbation",
            input: s.to_string(),
        };
        if s == "none" {
            return Ok(Self::None);
        }
        let (kind, value) = s.split_once(':').ok_or_else(err)?;
        let value: f64 = value.parse().map_err(|_| err())?;
        match kind {
            "flip" => Ok(Self::FlippedCnot { p_cn: value }),
            "cz" => Ok(Self::CzSubstitution { fraction: value }),
            _ => Err(err()),
        }
    }
}

impl TryFrom<String> for Perturbation {
    type Error = CircuitError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Perturbation> for String {
    fn from(p: Perturbation) -> Self {
        p.to_string()
    }
}

/// Which steps are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RecordSchedule {
    /// Every step `1..=t_max`.
    #[default]
    EveryStep,
    /// Roughly `per_decade` log-spaced steps per decade, always including
    /// `1` and `t_max`.
    LogSpaced { per_decade: usize },
}

impl RecordSchedule {
    pub fn steps(&self, t_max: usize) -> Vec<usize> {
        match *self {
            Self::EveryStep => (1..=t_max).collect(),
            Self::LogSpaced { per_decade } => {
                let mut set: BTreeSet<usize> = stats::log_spaced(1.0, t_max as f64, per_decade)
                    .into_iter()
                    .map(|t| (t.round() as usize).clamp(1, t_max))
                    .collect();
                set.insert(t_max);
                set.into_iter().filter(|&t| t >= 1).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitConfig {
    pub l: usize,
    pub t_max: usize,
    pub p: f64,
    pub initial_state: InitialState,
    #[serde(default)]
    pub perturbation: Perturbation,
    pub seed: u64,
    #[serde(default)]
    pub schedule: RecordSchedule,
}

impl CircuitConfig {
    pub fn new(l: usize, t_max: usize, p: f64, initial_state: InitialState, seed: u64) -> Self {
        Self {
            l,
            t_max,
            p,
            initial_state,
            perturbation: Perturbation::None,
            seed,
            schedule: RecordSchedule::EveryStep,
        }
    }

    pub fn validate(&self) -> Result<(), CircuitError> {
        if self.l < 2 {
            return Err(CircuitError::TooFewCells(self.l));
        }
        let check = |name, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(CircuitError::Probability { name, value })
            }
        };
        check("p", self.p)?;
        if let InitialState::Random { p_x } = self.initial_state {
            check("p_x", p_x)?;
        }
        match self.perturbation {
            Perturbation::None => Ok(()),
            Perturbation::FlippedCnot { p_cn } => check("p_cn", p_cn),
            Perturbation::CzSubstitution { fraction } => check("fraction", fraction),
        }
    }
}

/// Observables at the recorded steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TrajectoryRecord {
    pub t: Vec<usize>,
    pub s_half: Vec<usize>,
    pub s_quarter: Vec<usize>,
    pub n_x: Vec<usize>,
    pub n_z: Vec<usize>,
    pub pe_z: Vec<usize>,
    pub pe_x: Vec<usize>,
    pub seed: u64,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Recorded steps where `S_half` or `S_quarter` exceeds `min(N_X, N_Z)`.
    pub fn bound_violations(&self) -> usize {
        (0..self.len())
            .filter(|&i| {
                let cap = self.n_x[i].min(self.n_z[i]);
                self.s_half[i] > cap || self.s_quarter[i] > cap
            })
            .count()
    }

    /// Least-squares fit of `S_half` against `log10 t` over `t ∈ [t_lo, t_hi]`.
    pub fn log_slope(&self, t_lo: usize, t_hi: usize) -> Option<LinearFit> {
        self.fit_series(&self.s_half, t_lo, t_hi)
    }

    /// Same fit for `N_Z`.
    pub fn n_z_log_slope(&self, t_lo: usize, t_hi: usize) -> Option<LinearFit> {
        self.fit_series(&self.n_z, t_lo, t_hi)
    }

    fn fit_series(&self, series: &[usize], t_lo: usize, t_hi: usize) -> Option<LinearFit> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .t
            .iter()
            .zip(series)
            .filter(|(&t, _)| t >= t_lo && t <= t_hi)
            .map(|(&t, &s)| ((t as f64).log10(), s as f64))
            .unzip();
        stats::linear_fit(&xs, &ys)
    }
}

/// Which cells fired at which step, plus the realized initial bases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementMask {
    pub l: usize,
    pub t_max: usize,
    /// `(cell, step)` with `step` counted from 0.
    pub fired: BTreeSet<(usize, usize)>,
    /// Initial product-state bases in interleaved qubit order.
    pub initial_bases: Vec<PauliAxis>,
}

enum Engine {
    Sector(SectorState),
    General(Tableau),
}

impl Engine {
    fn measure_cell(&mut self, x: usize) {
        match self {
            Engine::Sector(s) => {
                s.measure(PauliAxis::X, SiteAddress::a(x)).expect("cell in range");
                s.measure(PauliAxis::Z, SiteAddress::b(x)).expect("cell in range");
            }
            Engine::General(t) => {
                t.measure(PauliAxis::X, SiteAddress::a(x)).expect("cell in range");
                t.measure(PauliAxis::Z, SiteAddress::b(x)).expect("cell in range");
            }
        }
    }

    fn swap(&mut self, l: usize) {
        match self {
            Engine::Sector(s) => s.swap_sublattices(),
            Engine::General(t) => {
                for x in 0..l {
                    t.apply_swap(SiteAddress::a(x), SiteAddress::b(x)).expect("distinct qubits");
                }
            }
        }
    }

    fn observe(&self, l: usize, rec: &mut TrajectoryRecord, t: usize) {
        let (s_half, s_quarter, n_x, n_z, pe_z, pe_x) = match self {
            Engine::Sector(s) => {
                let c = s.sector_counts();
                (
                    s.prefix_entropy(l / 2),
                    s.prefix_entropy(l / 4),
                    c.n_x,
                    c.n_z,
                    s.participation_entropy(PauliAxis::Z),
                    s.participation_entropy(PauliAxis::X),
                )
            }
            Engine::General(tab) => {
                let n = tab.n_qubits();
                let pe_z = tab.participation_entropy(PauliAxis::Z);
                let pe_x = tab.participation_entropy(PauliAxis::X);
                let half: Vec<usize> = (0..2 * (l / 2)).collect();
                let quarter: Vec<usize> = (0..2 * (l / 4)).collect();
                (
                    tab.entanglement_entropy(&half).expect("in range"),
                    tab.entanglement_entropy(&quarter).expect("in range"),
                    n - pe_x,
                    n - pe_z,
                    pe_z,
                    pe_x,
                )
            }
        };
        rec.t.push(t);
        rec.s_half.push(s_half);
        rec.s_quarter.push(s_quarter);
        rec.n_x.push(n_x);
        rec.n_z.push(n_z);
        rec.pe_z.push(pe_z);
        rec.pe_x.push(pe_x);
    }
}

/// Gates of the CNOT stage in application order: `(control b_j, target a_{j+d})`.
fn cnot_pairs(l: usize) -> impl Iterator<Item = (SiteAddress, SiteAddress)> {
    (0..l).flat_map(move |j| [l - 1, 0, 1].map(|d| (SiteAddress::b(j), SiteAddress::a((j + d) % l))))
}

/// Run one trajectory; deterministic in `cfg.seed`.
pub fn run(cfg: &CircuitConfig) -> Result<(TrajectoryRecord, MeasurementMask), CircuitError> {
    run_with_hook(cfg, |_, _| {})
}

/// Like [`run`], additionally calling `hook(step, engine)` after every step.
fn run_with_hook(cfg: &CircuitConfig, mut hook: impl FnMut(usize, &Engine)) -> Result<(TrajectoryRecord, MeasurementMask), CircuitError> {
    cfg.validate()?;
    let l = cfg.l;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let bases = cfg.initial_state.bases(l, &mut rng);
    let mut engine = match cfg.perturbation {
        Perturbation::CzSubstitution { .. } => Engine::General(Tableau::product_state(&bases)),
        _ => Engine::Sector(SectorState::product_state(&bases).expect("even qubit count")),
    };
    let record_at: BTreeSet<usize> = cfg.schedule.steps(cfg.t_max).into_iter().collect();
    let mut rec = TrajectoryRecord {
        seed: cfg.seed,
        ..Default::default()
    };
    let mut fired = BTreeSet::new();
    for step in 0..cfg.t_max {
        for x in 0..l {
            if rng.random_bool(cfg.p) {
                fired.insert((x, step));
                engine.measure_cell(x);
            }
        }
        match (&mut engine, cfg.perturbation) {
            (Engine::Sector(s), Perturbation::None) => s.apply_cnot_layer(),
            (Engine::Sector(s), Perturbation::FlippedCnot { p_cn }) => {
                for (c, t) in cnot_pairs(l) {
                    let (c, t) = if rng.random_bool(p_cn) { (t, c) } else { (c, t) };
                    s.apply_cnot(c, t).expect("distinct qubits");
                }
            }
            (Engine::General(tab), Perturbation::CzSubstitution { fraction }) => {
                for (c, t) in cnot_pairs(l) {
                    if rng.random_bool(fraction) {
                        tab.apply_cz(c, t).expect("distinct qubits");
                    } else {
                        tab.apply_cnot(c, t).expect("distinct qubits");
                    }
                }
            }
            _ => unreachable!("engine chosen from the perturbation"),
        }
        engine.swap(l);
        if record_at.contains(&(step + 1)) {
            engine.observe(l, &mut rec, step + 1);
        }
        hook(step + 1, &engine);
    }
    Ok((
        rec,
        MeasurementMask {
            l,
            t_max: cfg.t_max,
            fired,
            initial_bases: bases,
        },
    ))
}

/// Final stabilizer state of a trajectory as a general tableau.
pub fn final_tableau(cfg: &CircuitConfig) -> Result<Tableau, CircuitError> {
    let mut last = None;
    let t_max = cfg.t_max;
    run_with_hook(cfg, |step, engine| {
        if step == t_max {
            last = Some(match engine {
                Engine::Sector(s) => s.to_tableau(),
                Engine::General(t) => t.clone(),
            });
        }
    })?;
    Ok(last.unwrap_or_else(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Tableau::product_state(&cfg.initial_state.bases(cfg.l, &mut rng))
    }))
}

/// Run `members` trajectories in parallel; member `i` uses
/// `member_seed(cfg.seed, i)`. Results are in index order.
pub fn run_ensemble(cfg: &CircuitConfig, members: usize) -> Result<Vec<TrajectoryRecord>, CircuitError> {
    cfg.validate()?;
    (0..members)
        .into_par_iter()
        .map(|i| {
            let member = CircuitConfig {
                seed: member_seed(cfg.seed, i as u64),
                ..cfg.clone()
            };
            run(&member).map(|(rec, _)| rec)
        })
        .collect()
}

/// The classical disorder realization of a measurement pattern: a
/// measurement in cell `x` at step `s` becomes `q = 1` at `(x, s + 2)`, so
/// the grid has `T = t_max + 2` rows and the final state lives on rows
/// `T − 1` (`a`) and `T` (`b`).
pub fn export_disorder(mask: &MeasurementMask) -> DisorderGrid {
    let mut grid = DisorderGrid::uniform(mask.l, mask.t_max + 2, 5).expect("valid q");
    for &(x, step) in &mask.fired {
        grid.set_measured(x, step + 2, true);
    }
    grid
}

/// Pinned bottom sites for a product initial state: a `Z` eigenstate on `a_x`
/// pins `(x, 1)`, on `b_x` pins `(x, 2)`.
pub fn export_initial_condition(mask: &MeasurementMask) -> InitialCondition {
    let pinned: BTreeSet<(usize, usize)> = mask
        .initial_bases
        .iter()
        .enumerate()
        .filter(|(_, &axis)| axis == PauliAxis::Z)
        .map(|(q, _)| (q / 2, 1 + q % 2))
        .collect();
    if pinned.is_empty() {
        InitialCondition::Free
    } else if pinned.len() == mask.l && pinned.iter().all(|&(_, t)| t == 1) {
        InitialCondition::FixedZero
    } else {
        InitialCondition::Pinned(pinned)
    }
}

/// Export both the grid and the initial condition, refusing perturbed runs.
pub fn export_classical(cfg: &CircuitConfig, mask: &MeasurementMask) -> Result<(DisorderGrid, InitialCondition), CircuitError> {
    if cfg.perturbation != Perturbation::None {
        return Err(CircuitError::PerturbedExport);
    }
    Ok((export_disorder(mask), export_initial_condition(mask)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plaquette::automaton_evolve;
    use crate::f2::BitVector;

    fn cfg(l: usize, t_max: usize, p: f64, init: InitialState, seed: u64) -> CircuitConfig {
        CircuitConfig::new(l, t_max, p, init, seed)
    }

    #[test]
    fn parse_round_trips() {
        for s in ["x", "z", "staggered", "random:0.3"] {
            assert_eq!(s.parse::<InitialState>().unwrap().to_string(), s);
        }
        for s in ["none", "flip:0.2", "cz:0.1"] {
            assert_eq!(s.parse::<Perturbation>().unwrap().to_string(), s);
        }
        assert!("random".parse::<InitialState>().is_err());
        assert!("cz".parse::<Perturbation>().is_err());
    }

    #[test]
    fn validation() {
        assert!(cfg(1, 5, 0.1, InitialState::UniformX, 0).validate().is_err());
        assert!(cfg(4, 5, 1.5, InitialState::UniformX, 0).validate().is_err());
        assert!(cfg(4, 5, 0.5, InitialState::Random { p_x: -0.1 }, 0).validate().is_err());
        let mut c = cfg(4, 5, 0.5, InitialState::UniformX, 0);
        c.perturbation = Perturbation::CzSubstitution { fraction: 2.0 };
        assert!(c.validate().is_err());
    }

    #[test]
    fn no_measurements_no_entanglement_from_uniform_x() {
        let (rec, mask) = run(&cfg(12, 40, 0.0, InitialState::UniformX, 1)).unwrap();
        assert!(rec.s_half.iter().all(|&s| s == 0));
        assert!(mask.fired.is_empty());
        assert!(export_disorder(&mask).measured_sites().next().is_none());
    }

    #[test]
    fn full_measurement_gives_product_state() {
        let (rec, mask) = run(&cfg(6, 10, 1.0, InitialState::Staggered, 2)).unwrap();
        assert!(rec.s_half.iter().all(|&s| s == 0));
        let grid = export_disorder(&mask);
        for t in 2..grid.height() {
            for x in 0..6 {
                assert!(grid.is_measured(x, t));
            }
        }
    }

    #[test]
    fn record_shape_and_determinism() {
        let c = cfg(10, 30, 0.2, InitialState::Random { p_x: 0.4 }, 77);
        let (a, ma) = run(&c).unwrap();
        let (b, mb) = run(&c).unwrap();
        assert_eq!(a, b);
        assert_eq!(ma, mb);
        assert_eq!(a.len(), 30);
        assert_eq!(a.t, (1..=30).collect::<Vec<_>>());
        for i in 0..a.len() {
            assert_eq!(a.n_x[i] + a.n_z[i], 20);
            assert_eq!(a.pe_z[i], a.n_x[i]);
            assert_eq!(a.pe_x[i], a.n_z[i]);
        }
        assert_eq!(a.bound_violations(), 0);
    }

    #[test]
    fn log_schedule_includes_endpoints() {
        let steps = RecordSchedule::LogSpaced { per_decade: 10 }.steps(1000);
        assert_eq!(steps.first(), Some(&1));
        assert_eq!(steps.last(), Some(&1000));
        assert!(steps.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_measurement_export() {
        let mask = MeasurementMask {
            l: 6,
            t_max: 5,
            fired: BTreeSet::from([(2, 1)]),
            initial_bases: vec![PauliAxis::X; 12],
        };
        let grid = export_disorder(&mask);
        assert_eq!(grid.height(), 7);
        assert_eq!(grid.measured_sites().collect::<Vec<_>>(), vec![(2, 3)]);
        assert_eq!(export_initial_condition(&mask), InitialCondition::Free);
    }

    #[test]
    fn initial_condition_export() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mask = |init: InitialState, rng: &mut ChaCha8Rng| MeasurementMask {
            l: 4,
            t_max: 3,
            fired: BTreeSet::new(),
            initial_bases: init.bases(4, rng),
        };
        assert_eq!(export_initial_condition(&mask(InitialState::Staggered, &mut rng)), InitialCondition::FixedZero);
        assert_eq!(export_initial_condition(&mask(InitialState::UniformZ, &mut rng)), InitialCondition::fixed_two_rows(4));
    }

    #[test]
    fn z_string_on_two_cells_follows_automaton() {
        // L = 2: the two wrap-around CNOTs from b_j hit the same a qubit and cancel.
        let l = 2;
        let mut s = SectorState::product_state(&[PauliAxis::Z, PauliAxis::X, PauliAxis::X, PauliAxis::X]).unwrap();
        s.apply_cnot_layer();
        s.swap_sublattices();
        let g = &s.z_generators()[0];
        // Z strings evolve with (b, a) as (older, newer): start (0, e_0).
        let older = BitVector::zeros(l);
        let newer = BitVector::from_indices(l, [0]);
        let mut next = crate::stabilizer::neighborhood_sum(&newer);
        next.xor_assign(&older);
        assert_eq!((g.b.clone(), g.a.clone()), (newer, next));
        // Compare with the automaton on a wider ring where the stencil is distinct.
        let grid = DisorderGrid::uniform(5, 3, 5).unwrap();
        let run = automaton_evolve(&BitVector::zeros(5), &BitVector::from_indices(5, [0]), &grid).unwrap();
        assert_eq!(run.newer, BitVector::from_indices(5, [4, 0, 1]));
    }

    #[test]
    fn perturbed_runs_behave() {
        let mut c = cfg(8, 30, 0.1, InitialState::Staggered, 5);
        c.perturbation = Perturbation::FlippedCnot { p_cn: 0.2 };
        let (rec, _) = run(&c).unwrap();
        for i in 0..rec.len() {
            assert_eq!(rec.n_x[i] + rec.n_z[i], 16);
        }
        assert_eq!(rec.bound_violations(), 0);
        c.perturbation = Perturbation::CzSubstitution { fraction: 0.3 };
        let (rec, mask) = run(&c).unwrap();
        assert!(rec.n_x.iter().zip(&rec.n_z).any(|(x, z)| x + z < 16));
        assert_eq!(export_classical(&c, &mask), Err(CircuitError::PerturbedExport));
        // Stabilizer tableau stays valid under CZ substitutions.
        assert!(final_tableau(&c).unwrap().is_valid());
    }

    #[test]
    fn flipped_cnot_sector_engine_matches_tableau() {
        let mut c = cfg(5, 12, 0.2, InitialState::Random { p_x: 0.5 }, 9);
        c.perturbation = Perturbation::FlippedCnot { p_cn: 0.3 };
        // Replay the same random choices on a general tableau.
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let bases = c.initial_state.bases(5, &mut rng);
        let mut t = Tableau::product_state(&bases);
        for _ in 0..c.t_max {
            for x in 0..5 {
                if rng.random_bool(c.p) {
                    t.measure(PauliAxis::X, SiteAddress::a(x)).unwrap();
                    t.measure(PauliAxis::Z, SiteAddress::b(x)).unwrap();
                }
            }
            for (ctl, tgt) in cnot_pairs(5) {
                let (ctl, tgt) = if rng.random_bool(0.3) { (tgt, ctl) } else { (ctl, tgt) };
                t.apply_cnot(ctl, tgt).unwrap();
            }
            for x in 0..5 {
                t.apply_swap(SiteAddress::a(x), SiteAddress::b(x)).unwrap();
            }
        }
        assert!(final_tableau(&c).unwrap().same_group(&t));
    }
}
