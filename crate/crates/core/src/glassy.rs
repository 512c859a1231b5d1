//! Rejection-free Glauber dynamics of the random plaquette model on an
//! `L × L` torus.
//!
//! Site `i` carries a check `hᵢ`: the product of `sᵢ` and its four
//! neighbors, or just `sᵢ` on one-body sites (probability `p`). The energy is
//! `E = Σᵢ (1 − hᵢ)`, so each violated check costs 2. Flip rates are
//! `1 / (1 + e^{βΔE})`; events are drawn from a Fenwick tree of rates and the
//! clock advances by exponential waiting times.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

/// Events between full rebuilds of the rate tree and energy audits.
pub const REBUILD_INTERVAL: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KmcError {
    #[error("torus side L = {0} is too small; need L ≥ 3")]
    TooSmall(usize),
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: &'static str, got: usize, expected: usize },
    #[error("probability p = {0} is outside [0, 1]")]
    Probability(f64),
    #[error("β = {0} must be ≥ 0")]
    BadBeta(f64),
    #[error("incremental energy {incremental} disagrees with recount {recount}")]
    EnergyDrift { incremental: u64, recount: u64 },
    #[error("need at least two traces")]
    TooFewTraces,
    #[error("traces differ in (L, p)")]
    MixedTraces,
    #[error("rescaled time windows do not overlap")]
    NoOverlap,
    #[error("stationary check needs N ≤ 16 sites, got {0}")]
    TooLarge(usize),
}

/// Which sites carry a one-body term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disorder {
    pub l: usize,
    pub one_body: Vec<bool>,
}

impl Disorder {
    pub fn uniform(l: usize, one_body: bool) -> Self {
        Self {
            l,
            one_body: vec![one_body; l * l],
        }
    }

    pub fn random(l: usize, p: f64, rng: &mut impl Rng) -> Self {
        Self {
            l,
            one_body: (0..l * l).map(|_| rng.random_bool(p)).collect(),
        }
    }
}

/// Up to five entries, stored inline.
#[derive(Debug, Clone, Copy, Default)]
struct Small {
    items: [u32; 5],
    len: u8,
}

impl Small {
    fn push(&mut self, v: u32) {
        self.items[self.len as usize] = v;
        self.len += 1;
    }

    fn as_slice(&self) -> &[u32] {
        &self.items[..self.len as usize]
    }
}

/// Cumulative sums over `f64` weights.
#[derive(Debug, Clone)]
pub struct Fenwick {
    tree: Vec<f64>,
}

impl Fenwick {
    pub fn build(weights: &[f64]) -> Self {
        let n = weights.len();
        let mut tree = vec![0.0; n + 1];
        tree[1..].copy_from_slice(weights);
        for i in 1..=n {
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i];
            }
        }
        Self { tree }
    }

    pub fn len(&self) -> usize {
        self.tree.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add(&mut self, index: usize, delta: f64) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    /// Sum of the first `count` weights.
    pub fn prefix(&self, count: usize) -> f64 {
        let mut i = count;
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i &= i - 1;
        }
        s
    }

    pub fn total(&self) -> f64 {
        self.prefix(self.len())
    }

    /// Smallest `i` with `prefix(i + 1) ≥ u`, clamped to the last index.
    pub fn search(&self, mut u: f64) -> usize {
        let n = self.len();
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] < u {
                pos = next;
                u -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }
}

/// Result of one event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    Flipped { site: usize, wait: f64 },
    /// Every rate is zero.
    Completed,
}

/// Full dynamical state of one quench.
#[derive(Debug, Clone)]
pub struct KmcState {
    l: usize,
    beta: f64,
    disorder: Disorder,
    /// `true` means `s = −1`.
    down: Vec<bool>,
    violated: Vec<bool>,
    /// Violated checks containing each site.
    n_violated: Vec<u8>,
    checks_of: Vec<Small>,
    members: Vec<Small>,
    rates: Vec<f64>,
    fenwick: Fenwick,
    /// Indexed by `(ΔE + 10) / 2`.
    rate_table: [f64; 11],
    active: usize,
    clock: f64,
    energy: u64,
    events: u64,
}

fn glauber(beta: f64, delta_e: i32) -> f64 {
    let x = beta * delta_e as f64;
    if x.is_nan() {
        // β = ∞ with ΔE = 0.
        0.5
    } else {
        1.0 / (1.0 + x.exp())
    }
}

impl KmcState {
    pub fn new(disorder: Disorder, down: Vec<bool>, beta: f64) -> Result<Self, KmcError> {
        let l = disorder.l;
        if l < 3 {
            return Err(KmcError::TooSmall(l));
        }
        if !(beta >= 0.0) {
            return Err(KmcError::BadBeta(beta));
        }
        let n = l * l;
        for (what, got) in [("disorder", disorder.one_body.len()), ("spins", down.len())] {
            if got != n {
                return Err(KmcError::LengthMismatch { what, got, expected: n });
            }
        }
        let mut members = vec![Small::default(); n];
        let mut checks_of = vec![Small::default(); n];
        for i in 0..n {
            let (x, y) = (i % l, i / l);
            members[i].push(i as u32);
            if !disorder.one_body[i] {
                for (nx, ny) in [((x + 1) % l, y), ((x + l - 1) % l, y), (x, (y + 1) % l), (x, (y + l - 1) % l)] {
                    members[i].push((nx + l * ny) as u32);
                }
            }
            for &m in members[i].as_slice() {
                checks_of[m as usize].push(i as u32);
            }
        }
        let mut rate_table = [0.0; 11];
        for (k, r) in rate_table.iter_mut().enumerate() {
            *r = glauber(beta, 2 * k as i32 - 10);
        }
        let mut state = Self {
            l,
            beta,
            disorder,
            down,
            violated: vec![false; n],
            n_violated: vec![0; n],
            checks_of,
            members,
            rates: vec![0.0; n],
            fenwick: Fenwick::build(&[]),
            rate_table,
            active: 0,
            clock: 0.0,
            energy: 0,
            events: 0,
        };
        for c in 0..n {
            state.violated[c] = state.check_is_violated(c);
            if state.violated[c] {
                state.energy += 2;
                for k in 0..state.members[c].len as usize {
                    let m = state.members[c].items[k] as usize;
                    state.n_violated[m] += 1;
                }
            }
        }
        state.rebuild();
        Ok(state)
    }

    /// Disorder and i.i.d. spins from one generator.
    pub fn random(l: usize, p: f64, beta: f64, rng: &mut impl Rng) -> Result<Self, KmcError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(KmcError::Probability(p));
        }
        if l < 3 {
            return Err(KmcError::TooSmall(l));
        }
        let disorder = Disorder::random(l, p, rng);
        let down = (0..l * l).map(|_| rng.random_bool(0.5)).collect();
        Self::new(disorder, down, beta)
    }

    fn check_is_violated(&self, c: usize) -> bool {
        self.members[c].as_slice().iter().filter(|&&m| self.down[m as usize]).count() % 2 == 1
    }

    fn delta_e(&self, site: usize) -> i32 {
        let deg = self.checks_of[site].len as i32;
        2 * (deg - 2 * self.n_violated[site] as i32)
    }

    fn rate_for(&self, site: usize) -> f64 {
        self.rate_table[((self.delta_e(site) + 10) / 2) as usize]
    }

    fn rebuild(&mut self) {
        for i in 0..self.rates.len() {
            self.rates[i] = self.rate_for(i);
        }
        self.active = self.rates.iter().filter(|&&r| r > 0.0).count();
        self.fenwick = Fenwick::build(&self.rates);
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n_sites(&self) -> usize {
        self.l * self.l
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn disorder(&self) -> &Disorder {
        &self.disorder
    }

    /// `true` means `s = −1`.
    pub fn spins_down(&self) -> &[bool] {
        &self.down
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn energy(&self) -> u64 {
        self.energy
    }

    pub fn energy_density(&self) -> f64 {
        self.energy as f64 / self.n_sites() as f64
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn fenwick(&self) -> &Fenwick {
        &self.fenwick
    }

    /// Energy from scratch.
    pub fn recount_energy(&self) -> u64 {
        2 * (0..self.n_sites()).filter(|&c| self.check_is_violated(c)).count() as u64
    }

    /// Energy change from flipping `site`, from the checks containing it.
    pub fn local_energy_delta(&self, site: usize) -> i32 {
        self.checks_of[site]
            .as_slice()
            .iter()
            .map(|&c| if self.check_is_violated(c as usize) { -2 } else { 2 })
            .sum()
    }

    /// Largest difference between stored rates and rates from scratch.
    pub fn rate_error(&self) -> f64 {
        (0..self.n_sites())
            .map(|i| (self.rates[i] - glauber(self.beta, self.local_energy_delta(i))).abs())
            .fold(0.0, f64::max)
    }

    /// Flip `site` and update checks, energy and affected rates.
    pub fn flip(&mut self, site: usize) {
        self.down[site] = !self.down[site];
        let checks = self.checks_of[site];
        for &c in checks.as_slice() {
            let c = c as usize;
            self.violated[c] = !self.violated[c];
            let now = self.violated[c];
            if now {
                self.energy += 2;
            } else {
                self.energy -= 2;
            }
            for k in 0..self.members[c].len as usize {
                let m = self.members[c].items[k] as usize;
                if now {
                    self.n_violated[m] += 1;
                } else {
                    self.n_violated[m] -= 1;
                }
            }
        }
        for &c in checks.as_slice() {
            for k in 0..self.members[c as usize].len as usize {
                let m = self.members[c as usize].items[k] as usize;
                let new = self.rate_for(m);
                let old = self.rates[m];
                if new != old {
                    self.active = self.active + usize::from(new > 0.0) - usize::from(old > 0.0);
                    self.rates[m] = new;
                    self.fenwick.add(m, new - old);
                }
            }
        }
    }

    /// One rejection-free event.
    pub fn step(&mut self, rng: &mut impl Rng) -> StepOutcome {
        if self.active == 0 {
            return StepOutcome::Completed;
        }
        let mut lambda = self.fenwick.total();
        let mut site = self.fenwick.search((1.0 - rng.random::<f64>()) * lambda);
        if self.rates[site] == 0.0 {
            // Accumulated rounding pointed at a frozen site.
            self.rebuild();
            lambda = self.fenwick.total();
            site = self.fenwick.search((1.0 - rng.random::<f64>()) * lambda);
        }
        let wait = -(1.0 - rng.random::<f64>()).ln() / lambda;
        self.clock += wait;
        self.flip(site);
        self.events += 1;
        if self.events % REBUILD_INTERVAL == 0 {
            self.rebuild();
        }
        StepOutcome::Flipped { site, wait }
    }

    /// Fails if incremental and recounted energies differ.
    pub fn audit(&self) -> Result<(), KmcError> {
        let recount = self.recount_energy();
        if recount == self.energy {
            Ok(())
        } else {
            Err(KmcError::EnergyDrift {
                incremental: self.energy,
                recount,
            })
        }
    }
}

/// Parameters of one quench from infinite temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchConfig {
    pub l: usize,
    pub p: f64,
    pub beta: f64,
    pub t_max: f64,
    pub seed: u64,
    /// Number of log-spaced sample times in `[t_min, t_max]`.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
}

fn default_samples() -> usize {
    50
}

fn default_t_min() -> f64 {
    0.01
}

impl QuenchConfig {
    pub fn new(l: usize, p: f64, beta: f64, t_max: f64, seed: u64) -> Self {
        Self {
            l,
            p,
            beta,
            t_max,
            seed,
            samples: default_samples(),
            t_min: default_t_min(),
        }
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let n = self.samples.max(2);
        let (lo, hi) = (self.t_min.ln(), self.t_max.ln());
        (0..n).map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp()).collect()
    }
}

/// Energy density on a log-time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchTrace {
    pub l: usize,
    pub p: f64,
    pub beta: f64,
    pub seed: u64,
    pub times: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub events: u64,
    /// Dynamics stopped before `t_max` because all rates vanished.
    pub completed: bool,
}

/// Run one quench; each sample holds the energy density in force at its time.
pub fn run_quench(cfg: &QuenchConfig) -> Result<QuenchTrace, KmcError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = KmcState::random(cfg.l, cfg.p, cfg.beta, &mut rng)?;
    let times = cfg.sample_times();
    let mut epsilon = Vec::with_capacity(times.len());
    let mut completed = false;
    while epsilon.len() < times.len() {
        let before = state.energy_density();
        match state.step(&mut rng) {
            StepOutcome::Completed => {
                completed = true;
                epsilon.resize(times.len(), before);
            }
            StepOutcome::Flipped { .. } => {
                // Samples passed by this jump saw the state before it.
                while epsilon.len() < times.len() && times[epsilon.len()] < state.clock() {
                    epsilon.push(before);
                }
                if state.events() % REBUILD_INTERVAL == 0 {
                    state.audit()?;
                }
            }
        }
    }
    state.audit()?;
    Ok(QuenchTrace {
        l: cfg.l,
        p: cfg.p,
        beta: cfg.beta,
        seed: cfg.seed,
        times,
        epsilon,
        events: state.events(),
        completed,
    })
}

/// A trace on the rescaled abscissa `u = t^{exponent}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RescaledCurve {
    pub beta: f64,
    pub u: Vec<f64>,
    pub epsilon: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseReport {
    pub curves: Vec<RescaledCurve>,
    /// Score against `t^{1/β}`.
    pub score: f64,
    /// Score against raw `t`.
    pub raw_score: f64,
}

const COLLAPSE_GRID: usize = 200;

/// Linear interpolation of `ys` over increasing `xs`.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v < x);
    if k == 0 {
        return ys[0];
    }
    if k == xs.len() {
        return ys[xs.len() - 1];
    }
    let w = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + w * (ys[k] - ys[k - 1])
}

/// Mean pairwise RMS distance between traces after `t → t^{exponents[i]}`,
/// interpolated linearly in `ln u` on the common window.
pub fn collapse_score(traces: &[QuenchTrace], exponents: &[f64]) -> Result<f64, KmcError> {
    if traces.len() < 2 || exponents.len() != traces.len() {
        return Err(KmcError::TooFewTraces);
    }
    let logs: Vec<Vec<f64>> = traces
        .iter()
        .zip(exponents)
        .map(|(tr, e)| tr.times.iter().map(|t| e * t.ln()).collect())
        .collect();
    let lo = logs.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
    let hi = logs.iter().map(|v| v[v.len() - 1]).fold(f64::INFINITY, f64::min);
    if !(hi > lo) {
        return Err(KmcError::NoOverlap);
    }
    let grid: Vec<f64> = (0..COLLAPSE_GRID)
        .map(|k| lo + (hi - lo) * k as f64 / (COLLAPSE_GRID - 1) as f64)
        .collect();
    let resampled: Vec<Vec<f64>> = logs
        .iter()
        .zip(traces)
        .map(|(x, tr)| grid.iter().map(|&g| interpolate(x, &tr.epsilon, g)).collect())
        .collect();
    let mut total = 0.0;
    let mut pairs = 0;
    for i in 0..resampled.len() {
        for j in i + 1..resampled.len() {
            let ms = resampled[i]
                .iter()
                .zip(&resampled[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / grid.len() as f64;
            total += ms.sqrt();
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Rescale traces to `t^{1/β}` and score the collapse against raw time.
pub fn collapse_transform(traces: &[QuenchTrace]) -> Result<CollapseReport, KmcError> {
    if traces.len() < 2 {
        return Err(KmcError::TooFewTraces);
    }
    if traces.iter().any(|t| t.l != traces[0].l || t.p != traces[0].p) {
        return Err(KmcError::MixedTraces);
    }
    let exponents: Vec<f64> = traces.iter().map(|t| 1.0 / t.beta).collect();
    let score = collapse_score(traces, &exponents)?;
    let raw_score = collapse_score(traces, &vec![1.0; traces.len()])?;
    let curves = traces
        .iter()
        .zip(&exponents)
        .map(|(tr, e)| RescaledCurve {
            beta: tr.beta,
            u: tr.times.iter().map(|t| t.powf(*e)).collect(),
            epsilon: tr.epsilon.clone(),
        })
        .collect();
    Ok(CollapseReport {
        curves,
        score,
        raw_score,
    })
}

/// An interval where the energy density moves by less than the threshold
/// over every one-decade window inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Plateau {
    pub t_start: f64,
    pub t_end: f64,
    pub level: f64,
}

/// Plateaus of a trace. A window `[tᵢ, tⱼ]` with `tⱼ ≥ 10·tᵢ` is flat when
/// every sample inside stays within `rel_tol · ε(tᵢ)` of `ε(tᵢ)`; overlapping
/// flat windows at a common level merge.
pub fn detect_plateaus(trace: &QuenchTrace, rel_tol: f64) -> Vec<Plateau> {
    let (t, e) = (&trace.times, &trace.epsilon);
    let mut windows: Vec<(usize, usize)> = Vec::new();
    for i in 0..t.len() {
        let Some(j) = (i..t.len()).find(|&j| t[j] >= 10.0 * t[i] * (1.0 - 1e-12)) else {
            break;
        };
        if (i..=j).all(|k| (e[k] - e[i]).abs() <= rel_tol * e[i]) {
            match windows.last_mut() {
                Some(last) if i <= last.1 => last.1 = j,
                _ => windows.push((i, j)),
            }
        }
    }
    let mut plateaus: Vec<Plateau> = Vec::new();
    for (i, j) in windows {
        let level = e[i..=j].iter().sum::<f64>() / (j - i + 1) as f64;
        match plateaus.last_mut() {
            // Same level again: the dip in between was noise.
            Some(last) if (last.level - level).abs() <= rel_tol * last.level.max(level) => last.t_end = t[j],
            _ => plateaus.push(Plateau {
                t_start: t[i],
                t_end: t[j],
                level,
            }),
        }
    }
    plateaus
}

/// Empirical versus exact occupation of a tiny system.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryReport {
    pub tv_distance: f64,
    /// Time-weighted occupation per spin configuration (bit `i` = site `i` down).
    pub empirical: Vec<f64>,
    pub exact: Vec<f64>,
    pub events: u64,
}

fn config_index(down: &[bool]) -> usize {
    down.iter().enumerate().filter(|(_, &d)| d).map(|(i, _)| 1 << i).sum()
}

/// Run `events` events from `initial` and compare the time-weighted
/// occupation with `e^{−βE}/Z`.
pub fn stationary_check(
    disorder: &Disorder,
    initial: &[bool],
    beta: f64,
    events: u64,
    seed: u64,
) -> Result<StationaryReport, KmcError> {
    let n = disorder.l * disorder.l;
    if n > 16 {
        return Err(KmcError::TooLarge(n));
    }
    let mut state = KmcState::new(disorder.clone(), initial.to_vec(), beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut occupation = vec![0.0; 1 << n];
    let mut index = config_index(state.spins_down());
    let mut done = 0;
    while done < events {
        match state.step(&mut rng) {
            StepOutcome::Completed => {
                occupation[index] += 1.0;
                break;
            }
            StepOutcome::Flipped { site, wait } => {
                occupation[index] += wait;
                index ^= 1 << site;
                done += 1;
            }
        }
    }
    state.audit()?;
    let total: f64 = occupation.iter().sum();
    occupation.iter_mut().for_each(|w| *w /= total);
    let mut exact: Vec<f64> = (0..1usize << n)
        .map(|cfg| {
            let down: Vec<bool> = (0..n).map(|i| cfg >> i & 1 == 1).collect();
            let s = KmcState::new(disorder.clone(), down, 0.0).expect("validated");
            -beta * s.energy() as f64
        })
        .collect();
    let max = exact.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    exact.iter_mut().for_each(|w| *w = (*w - max).exp());
    let z: f64 = exact.iter().sum();
    exact.iter_mut().for_each(|w| *w /= z);
    let tv_distance = 0.5 * occupation.iter().zip(&exact).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(StationaryReport {
        tv_distance,
        empirical: occupation,
        exact,
        events: done,
    })
}

/// Per-event wall time in seconds for a side-`l` system at `β`.
pub fn time_per_event(l: usize, beta: f64, events: u64, seed: u64) -> Result<f64, KmcError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = KmcState::random(l, 0.0, beta, &mut rng)?;
    let start = std::time::Instant::now();
    for _ in 0..events {
        if state.step(&mut rng) == StepOutcome::Completed {
            break;
        }
    }
    Ok(start.elapsed().as_secs_f64() / state.events().max(1) as f64)
}

/// Histogram of `ΔE` over all sites.
pub fn delta_histogram(state: &KmcState) -> BTreeMap<i32, usize> {
    let mut h = BTreeMap::new();
    for i in 0..state.n_sites() {
        *h.entry(state.local_energy_delta(i)).or_insert(0) += 1;
    }
    h
}

/// Mean of trace values over times in `[t_lo, t_hi]`.
pub fn window_mean(trace: &QuenchTrace, t_lo: f64, t_hi: f64) -> Option<f64> {
    let v: Vec<f64> = trace
        .times
        .iter()
        .zip(&trace.epsilon)
        .filter(|(t, _)| (t_lo..=t_hi).contains(*t))
        .map(|(_, e)| *e)
        .collect();
    stats::mean_stderr(&v).map(|m| m.mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn all_up(l: usize, one_body: bool, beta: f64) -> KmcState {
        KmcState::new(Disorder::uniform(l, one_body), vec![false; l * l], beta).unwrap()
    }

    #[test]
    fn five_body_flip_costs_ten() {
        let s = all_up(3, false, 1.0);
        for i in 0..9 {
            assert_eq!(s.local_energy_delta(i), 10);
        }
        let s = all_up(3, true, 1.0);
        assert_eq!(s.local_energy_delta(4), 2);
    }

    #[test]
    fn flip_is_an_involution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = KmcState::random(5, 0.3, 1.0, &mut rng).unwrap();
        for site in [0, 7, 24, 12] {
            let d = s.local_energy_delta(site);
            let e0 = s.energy() as i64;
            s.flip(site);
            assert_eq!(s.energy() as i64 - e0, d as i64);
            assert_eq!(s.local_energy_delta(site), -d);
            s.flip(site);
            assert_eq!(s.energy() as i64, e0);
        }
    }

    #[test]
    fn small_torus_rejected() {
        assert_eq!(
            KmcState::new(Disorder::uniform(2, false), vec![false; 4], 1.0).unwrap_err(),
            KmcError::TooSmall(2)
        );
        assert!(KmcState::new(Disorder::uniform(3, false), vec![false; 8], 1.0).is_err());
    }

    #[test]
    fn fenwick_selection_frequencies() {
        let f = Fenwick::build(&[0.75, 0.25]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws = 100_000;
        let first = (0..draws).filter(|_| f.search((1.0 - rng.random::<f64>()) * f.total()) == 0).count();
        let expected = 0.75 * draws as f64;
        let chi2 = (first as f64 - expected).powi(2) / expected
            + ((draws - first) as f64 - 0.25 * draws as f64).powi(2) / (0.25 * draws as f64);
        // 99.9% quantile of χ² with one degree of freedom.
        assert!(chi2 < 10.83, "χ² = {chi2}");
    }

    #[test]
    fn fenwick_search_skips_zero_weights() {
        let f = Fenwick::build(&[0.0, 1.0, 0.0, 0.0, 2.0, 0.0]);
        assert_eq!(f.search(1e-12), 1);
        assert_eq!(f.search(1.0), 1);
        assert_eq!(f.search(1.0 + 1e-12), 4);
        assert_eq!(f.search(3.0), 4);
    }

    #[test]
    fn waiting_time_mean_matches_rate() {
        // At β = 0 every rate is ½ and λ stays N/2.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = KmcState::random(4, 0.2, 0.0, &mut rng).unwrap();
        let steps = 200_000;
        let mut sum = 0.0;
        for _ in 0..steps {
            if let StepOutcome::Flipped { wait, .. } = s.step(&mut rng) {
                sum += wait;
            }
        }
        let mean = sum / steps as f64;
        assert!((mean * 8.0 - 1.0).abs() < 0.01, "mean wait {mean}");
    }

    #[test]
    fn bookkeeping_after_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = KmcState::random(8, 0.3, 1.5, &mut rng).unwrap();
        for _ in 0..5000 {
            s.step(&mut rng);
            assert!(s.rate_error() == 0.0);
        }
        assert_eq!(s.energy(), s.recount_energy());
        for i in 0..=s.n_sites() {
            let direct: f64 = s.rates()[..i].iter().sum();
            assert!((s.fenwick().prefix(i) - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_temperature_ground_state_completes() {
        let mut s = all_up(4, false, f64::INFINITY);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(s.step(&mut rng), StepOutcome::Completed);
        let r = stationary_check(&Disorder::uniform(3, false), &[false; 9], f64::INFINITY, 1000, 6).unwrap();
        assert_eq!(r.empirical[0], 1.0);
        assert_eq!(r.events, 0);
    }

    #[test]
    fn stationary_distribution_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let disorder = Disorder::random(3, 0.3, &mut rng);
        for beta in [0.0, 1.0] {
            let r = stationary_check(&disorder, &[false; 9], beta, 2_000_000, 8).unwrap();
            assert!(r.tv_distance < 0.02, "β={beta}: {}", r.tv_distance);
        }
    }

    #[test]
    fn quench_trace_shape() {
        let cfg = QuenchConfig::new(16, 0.0, 2.0, 100.0, 9);
        let tr = run_quench(&cfg).unwrap();
        assert_eq!(tr.times.len(), 50);
        assert_eq!(tr.epsilon.len(), 50);
        assert!(tr.times.windows(2).all(|w| w[0] < w[1]));
        assert!(tr.epsilon.iter().all(|&e| e >= 0.0));
        assert!(tr.epsilon[49] < tr.epsilon[0]);
        assert_eq!(run_quench(&cfg).unwrap(), tr);
    }

    #[test]
    fn one_body_model_relaxes_to_zero() {
        let cfg = QuenchConfig::new(16, 1.0, 4.0, 1000.0, 10);
        let tr = run_quench(&cfg).unwrap();
        assert_eq!(*tr.epsilon.last().unwrap(), 0.0);
    }

    fn synthetic(beta: f64, f: impl Fn(f64) -> f64) -> QuenchTrace {
        let times: Vec<f64> = (0..60).map(|k| 10f64.powf(-1.0 + 0.1 * k as f64)).collect();
        QuenchTrace {
            l: 8,
            p: 0.0,
            beta,
            seed: 0,
            epsilon: times.iter().map(|&t| f(t.powf(1.0 / beta))).collect(),
            times,
            events: 0,
            completed: false,
        }
    }

    #[test]
    fn collapse_of_scaling_traces() {
        let f = |u: f64| 1.0 / (1.0 + u);
        let traces = [synthetic(2.0, f), synthetic(3.0, f)];
        let r = collapse_transform(&traces).unwrap();
        assert!(r.score < 1e-3 * r.raw_score, "{} vs {}", r.score, r.raw_score);
        let swapped = collapse_score(&traces, &[1.0 / 3.0, 0.5]).unwrap();
        assert!(swapped > r.score);
        let same = collapse_transform(&[traces[0].clone(), traces[0].clone()]).unwrap();
        assert_eq!(same.score, 0.0);
        assert_eq!(collapse_transform(&traces[..1]).unwrap_err(), KmcError::TooFewTraces);
        let mut far = traces[1].clone();
        far.times.iter_mut().for_each(|t| *t *= 1e12);
        assert_eq!(collapse_score(&[traces[0].clone(), far], &[1.0, 1.0]).unwrap_err(), KmcError::NoOverlap);
    }

    #[test]
    fn plateau_detector_on_steps() {
        // Two flat stretches joined by a drop.
        let tr = synthetic(1.0, |t| if t < 100.0 { 0.5 } else if t < 1e3 { 0.5 - 0.3 * (t / 100.0).log10() } else { 0.2 });
        let p = detect_plateaus(&tr, 0.02);
        assert_eq!(p.len(), 2, "{p:?}");
        assert!((p[0].level - 0.5).abs() < 1e-9);
        assert!((p[1].level - 0.2).abs() < 1e-9);
        let ramp = synthetic(1.0, |t| 1.0 - 0.1 * t.log10());
        assert!(detect_plateaus(&ramp, 0.02).is_empty());
    }

    proptest! {
        #[test]
        fn incremental_energy_exact(seed in any::<u64>(), l in 3usize..7, p in 0.0f64..1.0, beta in 0.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = KmcState::random(l, p, beta, &mut rng).unwrap();
            for _ in 0..300 {
                s.step(&mut rng);
            }
            prop_assert_eq!(s.energy(), s.recount_energy());
            prop_assert_eq!(s.rate_error(), 0.0);
        }
    }
}
