//! Kramers-Wannier duality for parity-check models and exact partition
//! functions at small sizes.
//!
//! Energy convention: `E(s) = Σᵢ (1 − hᵢ)` with `hᵢ = ±1`, i.e. twice the
//! number of violated checks. With it
//!
//! ```text
//! Z_H(β) = Σ_s e^{−βE(s)} = e^{−βM} · 2^N · cosh^M β · Z_R(tanh β),
//! Z_R(α) = Σ_q α^{|Rᵀq|},
//! ```
//!
//! where the rows of `R` span the left kernel of `H`. Ground states have
//! `E = 0`, so `Z_H → |ker H|` as `β → ∞`.
//!
//! Both sides are evaluated by Gray-code enumeration into an exact integer
//! histogram of weights, followed by one log-sum-exp. The histogram is exact,
//! so results do not depend on the number of worker threads.

use std::collections::BTreeMap;
use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::f2::{BitMatrix, ColumnSet};
use crate::plaquette::ParityCheckSystem;
use crate::replica::{build_h2, build_h4, ReplicaError, ReplicaSystem};

pub const DEFAULT_Q_MAX: usize = 24;
pub const DEFAULT_N_MAX: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KwError {
    #[error("dual enumeration needs 2^{q} terms; limit is Q ≤ {limit}")]
    DualCapacity { q: usize, limit: usize },
    #[error("brute-force enumeration needs 2^{n} terms; limit is N ≤ {limit}")]
    BruteCapacity { n: usize, limit: usize },
    #[error("neither route fits: smallest enumeration is 2^{smallest} (limits Q ≤ {q_max}, N ≤ {n_max})")]
    Capacity { smallest: usize, q_max: usize, n_max: usize },
    #[error("inverse temperature must be {0}, got {1}")]
    BadBeta(&'static str, f64),
    #[error("α must lie in [0, 1], got {0}")]
    BadAlpha(f64),
    #[error(transparent)]
    Replica(#[from] ReplicaError),
}

/// Enumeration limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Capacity {
    pub q_max: usize,
    pub n_max: usize,
}

impl Default for Capacity {
    fn default() -> Self {
        Self {
            q_max: DEFAULT_Q_MAX,
            n_max: DEFAULT_N_MAX,
        }
    }
}

/// Anything that owns a parity-check matrix.
pub trait CheckMatrix {
    fn check_matrix(&self) -> &BitMatrix;
}

impl CheckMatrix for BitMatrix {
    fn check_matrix(&self) -> &BitMatrix {
        self
    }
}

impl CheckMatrix for ParityCheckSystem {
    fn check_matrix(&self) -> &BitMatrix {
        self.matrix()
    }
}

impl CheckMatrix for ReplicaSystem {
    fn check_matrix(&self) -> &BitMatrix {
        &self.matrix
    }
}

/// Independent redundancies `R` with `R·H = 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RedundancyBasis {
    /// `Q × M`.
    pub r: BitMatrix,
    /// Spin count of the parent system.
    pub n: usize,
    /// Check count of the parent system.
    pub m: usize,
}

impl RedundancyBasis {
    pub fn q(&self) -> usize {
        self.r.rows()
    }
}

pub fn redundancy_basis(sys: &impl CheckMatrix) -> RedundancyBasis {
    let h = sys.check_matrix();
    RedundancyBasis {
        r: h.left_kernel_basis(),
        n: h.cols(),
        m: h.rows(),
    }
}

/// The dual model at one temperature.
#[derive(Debug, Clone)]
pub struct DualModel {
    /// `Rᵀ`: one row per dual check (original check), one column per dual spin.
    pub checks: BitMatrix,
    pub beta: f64,
    /// `α = tanh β`.
    pub alpha: f64,
    /// `β′` with `e^{−2β′} = tanh β`.
    pub beta_dual: f64,
}

impl DualModel {
    pub fn new(basis: &RedundancyBasis, beta: f64) -> Result<Self, KwError> {
        if !(beta > 0.0) {
            return Err(KwError::BadBeta("> 0", beta));
        }
        Ok(Self {
            checks: basis.r.transpose(),
            beta,
            alpha: beta.tanh(),
            beta_dual: dual_beta(beta),
        })
    }
}

/// `β′` with `e^{−2β′} = tanh β`; the map is an involution on `β > 0`.
pub fn dual_beta(beta: f64) -> f64 {
    // −½ ln tanh β = −½ ln((1 − e^{−2β}) / (1 + e^{−2β}))
    let u = (-2.0 * beta).exp();
    0.5 * (u.ln_1p() - (-u).ln_1p())
}

/// Point where `β = β′`.
pub fn self_dual_beta() -> f64 {
    0.5 * (1.0 + 2f64.sqrt()).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeakMeasurementParams {
    pub beta: f64,
    /// Strength of the forced `e^{γX}` measurement, `e^{−2γ} = tanh β`.
    pub gamma: f64,
    pub beta_dual: f64,
}

pub fn weak_measurement_params(beta: f64) -> Result<WeakMeasurementParams, KwError> {
    if !(beta > 0.0) {
        return Err(KwError::BadBeta("> 0", beta));
    }
    let gamma = dual_beta(beta);
    Ok(WeakMeasurementParams {
        beta,
        gamma,
        beta_dual: gamma,
    })
}

/// `hist[w]` = number of subsets of `vectors` whose XOR has weight `w`.
fn xor_weight_histogram(vectors: &[&[u64]], width: usize) -> Vec<u64> {
    let n = vectors.len();
    let words = width.div_ceil(64);
    let split = n.min(6);
    let low = n - split;
    let blocks: Vec<Vec<u64>> = (0u64..1 << split)
        .into_par_iter()
        .map(|hi| {
            let mut acc = vec![0u64; words];
            for (j, v) in vectors[low..].iter().enumerate() {
                if hi >> j & 1 == 1 {
                    acc.iter_mut().zip(v.iter()).for_each(|(a, b)| *a ^= b);
                }
            }
            let mut hist = vec![0u64; width + 1];
            let weight = |acc: &[u64]| acc.iter().map(|w| w.count_ones() as usize).sum::<usize>();
            hist[weight(&acc)] += 1;
            for step in 1u64..1 << low {
                let flip = step.trailing_zeros() as usize;
                acc.iter_mut().zip(vectors[flip].iter()).for_each(|(a, b)| *a ^= b);
                hist[weight(&acc)] += 1;
            }
            hist
        })
        .collect();
    let mut total = vec![0u64; width + 1];
    for h in blocks {
        total.iter_mut().zip(h).for_each(|(t, c)| *t += c);
    }
    total
}

/// `ln Σ_w hist[w] · e^{w·x}`; `x = −∞` keeps only `w = 0`.
fn log_sum_weights(hist: &[u64], x: f64) -> f64 {
    let terms: Vec<f64> = hist
        .iter()
        .enumerate()
        .filter(|&(w, &c)| c > 0 && (w == 0 || x > f64::NEG_INFINITY))
        .map(|(w, &c)| (c as f64).ln() + if w == 0 { 0.0 } else { w as f64 * x })
        .collect();
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn row_slices(m: &BitMatrix) -> Vec<&[u64]> {
    (0..m.rows()).map(|r| m.row_words(r)).collect()
}

/// `ln Z_R(α)` by enumerating all `2^Q` dual configurations.
pub fn dual_partition_log(basis: &RedundancyBasis, alpha: f64, q_max: usize) -> Result<f64, KwError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(KwError::BadAlpha(alpha));
    }
    if basis.q() > q_max {
        return Err(KwError::DualCapacity { q: basis.q(), limit: q_max });
    }
    let hist = xor_weight_histogram(&row_slices(&basis.r), basis.m);
    Ok(log_sum_weights(&hist, alpha.ln()))
}

/// Histogram of the number of violated checks over all `2^N` spin states.
pub fn violation_histogram(sys: &impl CheckMatrix, n_max: usize) -> Result<Vec<u64>, KwError> {
    let h = sys.check_matrix();
    if h.cols() > n_max {
        return Err(KwError::BruteCapacity { n: h.cols(), limit: n_max });
    }
    let columns = h.transpose();
    Ok(xor_weight_histogram(&row_slices(&columns), h.rows()))
}

fn check_beta(beta: f64) -> Result<(), KwError> {
    if beta >= 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(KwError::BadBeta("finite and ≥ 0", beta))
    }
}

/// `ln Σ_s e^{−βE(s)}` by direct enumeration.
pub fn partition_log_bruteforce(sys: &impl CheckMatrix, beta: f64, n_max: usize) -> Result<f64, KwError> {
    check_beta(beta)?;
    let hist = violation_histogram(sys, n_max)?;
    Ok(log_sum_weights(&hist, -2.0 * beta))
}

/// `ln Z_H` from the dual side, prefactors included.
pub fn partition_log_dual(sys: &impl CheckMatrix, beta: f64, q_max: usize) -> Result<f64, KwError> {
    check_beta(beta)?;
    let basis = redundancy_basis(sys);
    let log_zr = dual_partition_log(&basis, beta.tanh(), q_max)?;
    // M (ln cosh β − β) = M (ln(1 + e^{−2β}) − ln 2)
    let shift = (-2.0 * beta).exp().ln_1p() - LN_2;
    Ok(basis.n as f64 * LN_2 + basis.m as f64 * shift + log_zr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KwCheck {
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "logZ_dual")]
    pub log_z_dual: f64,
    #[serde(rename = "logZ_brute")]
    pub log_z_brute: f64,
    pub residual: f64,
}

/// Both sides of the duality and their absolute difference.
pub fn kw_identity_check(sys: &impl CheckMatrix, beta: f64, cap: Capacity) -> Result<KwCheck, KwError> {
    let log_z_brute = partition_log_bruteforce(sys, beta, cap.n_max)?;
    let log_z_dual = partition_log_dual(sys, beta, cap.q_max)?;
    Ok(KwCheck {
        q: redundancy_basis(sys).q(),
        log_z_dual,
        log_z_brute,
        residual: (log_z_brute - log_z_dual).abs(),
    })
}

/// Which enumeration produced a partition function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Route {
    Dual,
    Brute,
}

/// `ln Z_H` by the cheaper feasible route.
pub fn partition_log(sys: &impl CheckMatrix, beta: f64, cap: Capacity) -> Result<(f64, Route), KwError> {
    let h = sys.check_matrix();
    let n = h.cols();
    let q = h.rows() - h.rank();
    let dual_ok = q <= cap.q_max;
    let brute_ok = n <= cap.n_max;
    match (dual_ok, brute_ok) {
        (true, true) if n < q => Ok((partition_log_bruteforce(sys, beta, cap.n_max)?, Route::Brute)),
        (true, _) => Ok((partition_log_dual(sys, beta, cap.q_max)?, Route::Dual)),
        (false, true) => Ok((partition_log_bruteforce(sys, beta, cap.n_max)?, Route::Brute)),
        (false, false) => Err(KwError::Capacity {
            smallest: q.min(n),
            q_max: cap.q_max,
            n_max: cap.n_max,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteBetaEntropy {
    pub beta: f64,
    #[serde(rename = "S2_nats")]
    pub s2_nats: f64,
    pub log_z2: f64,
    pub log_z4: f64,
    pub route_z2: Route,
    pub route_z4: Route,
}

/// `S⁽²⁾ = 2 ln Z⁽²⁾ − ln Z⁽⁴⁾` at inverse temperature `β`, in nats.
pub fn finite_beta_renyi2(
    sys: &ParityCheckSystem,
    region: &ColumnSet,
    beta: f64,
    cap: Capacity,
) -> Result<FiniteBetaEntropy, KwError> {
    let h2 = build_h2(sys);
    let h4 = build_h4(sys, region)?;
    let (log_z2, route_z2) = partition_log(&h2, beta, cap)?;
    let (log_z4, route_z4) = partition_log(&h4, beta, cap)?;
    Ok(FiniteBetaEntropy {
        beta,
        s2_nats: 2.0 * log_z2 - log_z4,
        log_z2,
        log_z4,
        route_z2,
        route_z4,
    })
}

/// Support sizes of the dual checks (rows of `Rᵀ`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualCheckWeights {
    /// `supports[i]` = number of redundancies containing check `i`.
    pub supports: Vec<usize>,
    /// support size → number of dual checks.
    pub histogram: BTreeMap<usize, usize>,
    /// Fraction of dual checks touching no dual spin.
    pub idle_fraction: f64,
}

/// Weights of the dual checks for the reduced-echelon redundancy basis.
pub fn dual_check_weight_histogram(basis: &RedundancyBasis) -> DualCheckWeights {
    if basis.q() == 0 {
        return DualCheckWeights {
            supports: vec![0; basis.m],
            histogram: BTreeMap::new(),
            idle_fraction: if basis.m == 0 { 0.0 } else { 1.0 },
        };
    }
    let rt = basis.r.row_reduce().reduced.transpose();
    let supports: Vec<usize> = rt.iter_rows().map(|r| r.count_ones()).collect();
    let mut histogram = BTreeMap::new();
    for &s in &supports {
        *histogram.entry(s).or_insert(0) += 1;
    }
    let idle = supports.iter().filter(|&&s| s == 0).count();
    DualCheckWeights {
        idle_fraction: idle as f64 / supports.len().max(1) as f64,
        supports,
        histogram,
    }
}
