//! Rényi-2 entropy of the boundary state from classical data.
//!
//! Two routes:
//!
//! * replicas: glue two and four copies of `H` along the boundary and count
//!   ground states, `S = 2·k⁽²⁾ − k⁽⁴⁾`;
//! * groups: single-copy projected ranks,
//!   `S = dim G/G_B − dim G_{]A[}/G_B − dim G_{]Ā[}/G_B`,
//!   where `G_{]A[}` are the symmetries whose boundary footprint lies in `A`.
//!
//! Gluing identifies columns: each glued boundary site becomes one shared
//! column of the replica matrix.

use serde::Serialize;
use thiserror::Error;

use crate::f2::{BitMatrix, BitVector, ColumnSet};
use crate::plaquette::{symmetry_basis, ParityCheckSystem};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplicaError {
    #[error("column {0} of region A is not a boundary column")]
    RegionOutsideBoundary(usize),
    #[error("need at least 3 distinct sizes, got {0}")]
    TooFewSizes(usize),
}

/// Where one boundary site ended up in the replica matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GlueRecord {
    /// Column in the single-copy system.
    pub column: usize,
    /// Replica column used by each copy.
    pub merged_into: Vec<usize>,
}

/// Two or four glued copies of one parity-check system.
#[derive(Debug, Clone)]
pub struct ReplicaSystem {
    pub matrix: BitMatrix,
    pub copies: usize,
    /// Replica column of each single-copy column, per copy.
    pub column_maps: Vec<Vec<usize>>,
    pub gluing: Vec<GlueRecord>,
    pub region: ColumnSet,
}

impl ReplicaSystem {
    /// `log2` of the ground-state count.
    pub fn nullity(&self) -> usize {
        self.matrix.nullity()
    }
}

fn boundary_mask(sys: &ParityCheckSystem) -> Vec<bool> {
    let mut mask = vec![false; sys.n_columns()];
    for &c in sys.boundary_columns().indices() {
        mask[c] = true;
    }
    mask
}

fn check_region(sys: &ParityCheckSystem, region: &ColumnSet) -> Result<Vec<bool>, ReplicaError> {
    let boundary = boundary_mask(sys);
    let mut in_a = vec![false; sys.n_columns()];
    for &c in region.indices() {
        if c >= sys.n_columns() || !boundary[c] {
            return Err(ReplicaError::RegionOutsideBoundary(c));
        }
        in_a[c] = true;
    }
    Ok(in_a)
}

/// Assemble `copies` copies of `H`; `shared(copy, column)` names the glue
/// class of a boundary column, and copies naming the same class share it.
fn assemble(
    sys: &ParityCheckSystem,
    copies: usize,
    region: ColumnSet,
    shared: impl Fn(usize, usize) -> usize,
) -> ReplicaSystem {
    let n = sys.n_columns();
    let boundary = boundary_mask(sys);
    let mut next = 0usize;
    let mut class_column: std::collections::HashMap<(usize, usize), usize> = std::collections::HashMap::new();
    let mut column_maps = vec![vec![0usize; n]; copies];
    for (copy, map) in column_maps.iter_mut().enumerate() {
        for (c, slot) in map.iter_mut().enumerate() {
            *slot = if boundary[c] {
                *class_column.entry((c, shared(copy, c))).or_insert_with(|| {
                    next += 1;
                    next - 1
                })
            } else {
                next += 1;
                next - 1
            };
        }
    }
    let h = sys.matrix();
    let mut matrix = BitMatrix::zeros(0, next);
    for map in &column_maps {
        for r in 0..h.rows() {
            let row = BitVector::from_indices(next, h.row(r).iter_ones().map(|c| map[c]));
            matrix.push_row(&row);
        }
    }
    let gluing = sys
        .boundary_columns()
        .indices()
        .iter()
        .map(|&c| GlueRecord {
            column: c,
            merged_into: column_maps.iter().map(|m| m[c]).collect(),
        })
        .collect();
    ReplicaSystem {
        matrix,
        copies,
        column_maps,
        gluing,
        region,
    }
}

/// Two copies sharing every boundary site.
pub fn build_h2(sys: &ParityCheckSystem) -> ReplicaSystem {
    assemble(sys, 2, ColumnSet::empty(), |_, _| 0)
}

/// Four copies (0..4): sites in `A` glued 0↔3 and 1↔2, sites in `Ā` glued
/// 0↔2 and 1↔3.
pub fn build_h4(sys: &ParityCheckSystem, region: &ColumnSet) -> Result<ReplicaSystem, ReplicaError> {
    let in_a = check_region(sys, region)?;
    Ok(assemble(sys, 4, region.clone(), move |copy, c| {
        if in_a[c] {
            // Classes {0,3} and {1,2}.
            usize::from(copy == 1 || copy == 2)
        } else {
            // Classes {0,2} and {1,3}.
            copy % 2
        }
    }))
}

/// Ground-state counts of both replica systems and the entropy in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReplicaEntropy {
    pub k2: usize,
    pub k4: usize,
    pub s2: usize,
}

pub fn renyi2_via_replicas(sys: &ParityCheckSystem, region: &ColumnSet) -> Result<ReplicaEntropy, ReplicaError> {
    let k2 = build_h2(sys).nullity();
    let k4 = build_h4(sys, region)?.nullity();
    Ok(ReplicaEntropy {
        k2,
        k4,
        s2: 2 * k2 - k4,
    })
}

/// Dimensions entering the single-copy formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GroupEntropy {
    /// `dim G/G_B`.
    pub boundary: usize,
    /// `dim G_{]A[}/G_B`.
    pub inside_a: usize,
    /// `dim G_{]Ā[}/G_B`.
    pub inside_complement: usize,
    pub s2: usize,
}

pub fn renyi2_via_groups(sys: &ParityCheckSystem, region: &ColumnSet) -> Result<GroupEntropy, ReplicaError> {
    check_region(sys, region)?;
    let basis = symmetry_basis(sys).generators;
    let boundary = sys.boundary_columns();
    let complement = boundary.difference(region);
    let k = basis.rows();
    let dim_bulk = basis.subgroup_vanishing_on(boundary).expect("in range").rows();
    // Footprint inside A means vanishing on Ā, and vice versa.
    let dim_in_a = basis.subgroup_vanishing_on(&complement).expect("in range").rows();
    let dim_in_abar = basis.subgroup_vanishing_on(region).expect("in range").rows();
    let boundary_dim = k - dim_bulk;
    let inside_a = dim_in_a - dim_bulk;
    let inside_complement = dim_in_abar - dim_bulk;
    Ok(GroupEntropy {
        boundary: boundary_dim,
        inside_a,
        inside_complement,
        s2: boundary_dim - inside_a - inside_complement,
    })
}

/// Volume-law coefficient from ensemble means at several sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaEstimate {
    /// Slope of mean `S⁽²⁾` (bits) against `L`.
    pub gamma: f64,
    pub stderr: f64,
    /// `β_c ≈ γ ln 2 / min(α, 1 − α)` for region fraction `α`, when `γ > 0`.
    pub beta_c: Option<f64>,
}

/// `samples[i] = (L, entropies of the ensemble at L)`.
pub fn gamma_estimate(samples: &[(usize, Vec<f64>)], alpha: f64) -> Result<GammaEstimate, ReplicaError> {
    let mut sizes: Vec<usize> = samples.iter().map(|(l, _)| *l).collect();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.len() < 3 {
        return Err(ReplicaError::TooFewSizes(sizes.len()));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = samples
        .iter()
        .filter_map(|(l, v)| stats::mean_stderr(v).map(|m| (*l as f64, m.mean)))
        .unzip();
    let fit = stats::linear_fit(&xs, &ys).ok_or(ReplicaError::TooFewSizes(sizes.len()))?;
    let gamma = fit.slope;
    let m = alpha.min(1.0 - alpha);
    Ok(GammaEstimate {
        gamma,
        stderr: fit.slope_stderr,
        beta_c: (gamma > 0.0 && m > 0.0).then(|| gamma * std::f64::consts::LN_2 / m),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plaquette::{build_parity_checks, DisorderGrid, InitialCondition};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn brute_nullity(m: &BitMatrix) -> usize {
        let n = m.cols();
        assert!(n <= 22, "too many columns for enumeration");
        let count = (0u64..1 << n)
            .filter(|&bits| m.mul_vec(&BitVector::from_indices(n, (0..n).filter(|i| bits >> i & 1 == 1))).is_zero())
            .count();
        count.trailing_zeros() as usize
    }

    fn random_system(rng: &mut ChaCha8Rng, max_l: usize, max_t: usize, p: f64) -> ParityCheckSystem {
        let l = rng.random_range(3..=max_l);
        let t = rng.random_range(3..=max_t);
        let grid = DisorderGrid::random(l, t, p, rng);
        let ic = match rng.random_range(0..3) {
            0 => InitialCondition::Free,
            1 => InitialCondition::FixedZero,
            _ => InitialCondition::fixed_two_rows(l),
        };
        build_parity_checks(&grid, &ic).unwrap()
    }

    #[test]
    fn h2_structure_and_group_identity() {
        let sys = build_parity_checks(&DisorderGrid::uniform(3, 3, 1).unwrap(), &InitialCondition::Free).unwrap();
        let h2 = build_h2(&sys);
        let bulk = sys.n_columns() - sys.boundary_columns().len();
        assert_eq!(h2.matrix.cols(), 2 * bulk + sys.boundary_columns().len());
        assert_eq!(h2.matrix.rows(), 2 * sys.n_checks());
        // k2 = log(|G| |G_B|).
        let g = symmetry_basis(&sys);
        let gb = crate::plaquette::bulk_subgroup(&sys, &g);
        assert_eq!(h2.nullity(), g.dimension() + gb.dimension());
    }

    #[test]
    fn boundary_columns_touched_by_both_copies() {
        let sys = build_parity_checks(&DisorderGrid::uniform(4, 4, 5).unwrap(), &InitialCondition::Free).unwrap();
        let h2 = build_h2(&sys);
        let half = h2.matrix.rows() / 2;
        for rec in &h2.gluing {
            assert_eq!(rec.merged_into[0], rec.merged_into[1]);
            let c = rec.merged_into[0];
            assert!((0..half).any(|r| h2.matrix.get(r, c)));
            assert!((half..2 * half).any(|r| h2.matrix.get(r, c)));
        }
    }

    #[test]
    fn replica_nullities_match_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut checked = 0;
        while checked < 30 {
            let p = rng.random_range(0.0..0.6);
            let sys = random_system(&mut rng, 4, 4, p);
            let a = sys.half_region();
            let h2 = build_h2(&sys);
            let h4 = build_h4(&sys, &a).unwrap();
            if h4.matrix.cols() > 20 {
                continue;
            }
            assert_eq!(h2.nullity(), brute_nullity(&h2.matrix));
            assert_eq!(h4.nullity(), brute_nullity(&h4.matrix));
            checked += 1;
        }
        // L = 4, T = 4, p = 0 with two fixed rows: small enough to enumerate.
        let sys = build_parity_checks(&DisorderGrid::uniform(4, 4, 5).unwrap(), &InitialCondition::fixed_two_rows(4)).unwrap();
        let h2 = build_h2(&sys);
        assert_eq!(h2.nullity(), brute_nullity(&h2.matrix));
    }

    #[test]
    fn trivial_regions_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let sys = random_system(&mut rng, 6, 6, 0.2);
            let empty = ColumnSet::empty();
            let full = sys.boundary_columns().clone();
            let e = renyi2_via_replicas(&sys, &empty).unwrap();
            assert_eq!(e.s2, 0);
            assert_eq!(e.k4, 2 * e.k2);
            assert_eq!(renyi2_via_replicas(&sys, &full).unwrap().s2, 0);
            assert_eq!(renyi2_via_groups(&sys, &empty).unwrap().s2, 0);
        }
    }

    #[test]
    fn fully_measured_is_area_law() {
        let sys = build_parity_checks(&DisorderGrid::uniform(5, 6, 1).unwrap(), &InitialCondition::FixedZero).unwrap();
        assert_eq!(renyi2_via_replicas(&sys, &sys.half_region()).unwrap().s2, 0);
    }

    #[test]
    fn single_spanning_generator_contributes_one() {
        // Only s(0, 2) is free; the check row then sets row 3 to N(e_0),
        // which covers every cell: one footprint straddling A and Ā.
        let grid = DisorderGrid::uniform(3, 3, 5).unwrap();
        let pinned: BTreeSet<_> = (0..3).map(|x| (x, 1)).chain([(1, 2), (2, 2)]).collect();
        let sys = build_parity_checks(&grid, &InitialCondition::Pinned(pinned)).unwrap();
        let a = sys.boundary_region([0]);
        let g = renyi2_via_groups(&sys, &a).unwrap();
        assert_eq!((g.boundary, g.inside_a, g.inside_complement, g.s2), (1, 0, 0, 1));
        assert_eq!(renyi2_via_replicas(&sys, &a).unwrap().s2, 1);
    }

    #[test]
    fn localized_generators_give_zero() {
        // Everything measured: footprints are single top-row sites.
        let sys = build_parity_checks(&DisorderGrid::uniform(4, 4, 1).unwrap(), &InitialCondition::Free).unwrap();
        let g = renyi2_via_groups(&sys, &sys.half_region()).unwrap();
        assert_eq!(g.s2, 0);
        assert_eq!(g.boundary, g.inside_a + g.inside_complement);
    }

    #[test]
    fn hand_counted_fixture() {
        // Row 1 pinned, q = 5 on row 2: footprints (s2, N s2). For A = cell 0
        // the projected ranks are 2 (A), 3 (Ā) and 3 (boundary), so S = 2.
        let sys = build_parity_checks(&DisorderGrid::uniform(3, 3, 5).unwrap(), &InitialCondition::FixedZero).unwrap();
        let a = sys.boundary_region([0]);
        assert_eq!(renyi2_via_groups(&sys, &a).unwrap().s2, 2);
        assert_eq!(renyi2_via_replicas(&sys, &a).unwrap().s2, 2);
    }

    #[test]
    fn region_outside_boundary_rejected() {
        let sys = build_parity_checks(&DisorderGrid::uniform(3, 4, 5).unwrap(), &InitialCondition::Free).unwrap();
        let bad = ColumnSet::new(vec![0]).unwrap();
        assert_eq!(build_h4(&sys, &bad).unwrap_err(), ReplicaError::RegionOutsideBoundary(0));
    }

    #[test]
    fn gamma_from_synthetic_ensembles() {
        let flat: Vec<(usize, Vec<f64>)> = [8, 12, 16].iter().map(|&l| (l, vec![3.0, 3.0])).collect();
        let g = gamma_estimate(&flat, 0.5).unwrap();
        assert!(g.gamma.abs() < 1e-12);
        assert_eq!(g.beta_c, None);
        let linear: Vec<(usize, Vec<f64>)> = [8, 12, 16].iter().map(|&l| (l, vec![0.25 * l as f64])).collect();
        let g = gamma_estimate(&linear, 0.5).unwrap();
        assert!((g.gamma - 0.25).abs() < 1e-12);
        assert!((g.beta_c.unwrap() - 0.5 * std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(gamma_estimate(&flat[..2], 0.5).unwrap_err(), ReplicaError::TooFewSizes(2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn replicas_equal_groups_and_complement(seed in any::<u64>(), p in prop_oneof![Just(0.0), Just(0.1), Just(0.3), Just(0.5), Just(1.0)]) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sys = random_system(&mut rng, 8, 8, p);
            let l = sys.width();
            let cut = rng.random_range(0..=l);
            let a = sys.boundary_region(0..cut);
            let abar = sys.boundary_region(cut..l);
            let r = renyi2_via_replicas(&sys, &a).unwrap();
            let g = renyi2_via_groups(&sys, &a).unwrap();
            prop_assert_eq!(r.s2, g.s2);
            prop_assert_eq!(r.s2, renyi2_via_replicas(&sys, &abar).unwrap().s2);
        }
    }
}
