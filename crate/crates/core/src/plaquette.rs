//! Classical plaquette model: parity checks for one disorder realization,
//! symmetry groups, boundary statistics and the cellular automaton.
//!
//! Sites are `(x, t)` with `0 ≤ x < L` periodic and `1 ≤ t ≤ T`. Checks are
//! centered on the interior rows `2 ≤ t ≤ T − 1`:
//!
//! * `q = 5`: `s(x,t−1) + s(x,t+1) + s(x−1,t) + s(x,t) + s(x+1,t) = 0`
//! * `q = 1`: `s(x,t) = 0`
//!
//! Rows `T − 1` and `T` form the boundary that carries the circuit's output
//! state. Before column removal the column of `(x, t)` is `x + L·(t − 1)`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::f2::{BitMatrix, BitVector, ColumnSet, F2Error};
use crate::stabilizer::neighborhood_sum;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlaquetteError {
    #[error("width L = {0} is too small; the five-site stencil needs L ≥ 3")]
    WidthTooSmall(usize),
    #[error("height T = {0} is too small; need T ≥ 3")]
    HeightTooSmall(usize),
    #[error("invalid disorder value {0}; expected 1 or 5")]
    BadDisorderValue(u8),
    #[error("grid parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("site ({x}, {t}) outside a {l}×{height} grid")]
    SiteOutOfRange { x: usize, t: usize, l: usize, height: usize },
    #[error("row vectors have length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    F2(#[from] F2Error),
}

/// Per-site disorder `q(x, t) ∈ {1, 5}`. Only interior rows carry checks.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DisorderGrid {
    l: usize,
    t: usize,
    /// Row-major by `t`, `true` where `q = 1`.
    measured: Vec<bool>,
}

impl DisorderGrid {
    /// Grid with every entry equal to `q`.
    pub fn uniform(l: usize, t: usize, q: u8) -> Result<Self, PlaquetteError> {
        let measured = match q {
            1 => true,
            5 => false,
            other => return Err(PlaquetteError::BadDisorderValue(other)),
        };
        Ok(Self {
            l,
            t,
            measured: vec![measured; l * t],
        })
    }

    /// Interior sites get `q = 1` independently with probability `p`.
    pub fn random(l: usize, t: usize, p: f64, rng: &mut impl Rng) -> Self {
        let mut g = Self {
            l,
            t,
            measured: vec![false; l * t],
        };
        for row in 2..t {
            for x in 0..l {
                if rng.random_bool(p) {
                    g.set_measured(x, row, true);
                }
            }
        }
        g
    }

    pub fn width(&self) -> usize {
        self.l
    }

    pub fn height(&self) -> usize {
        self.t
    }

    fn index(&self, x: usize, t: usize) -> usize {
        assert!(x < self.l && (1..=self.t).contains(&t), "site ({x},{t}) out of range");
        (t - 1) * self.l + x
    }

    pub fn q(&self, x: usize, t: usize) -> u8 {
        if self.is_measured(x, t) {
            1
        } else {
            5
        }
    }

    pub fn is_measured(&self, x: usize, t: usize) -> bool {
        self.measured[self.index(x, t)]
    }

    pub fn set_measured(&mut self, x: usize, t: usize, value: bool) {
        let i = self.index(x, t);
        self.measured[i] = value;
    }

    /// Interior sites with `q = 1`.
    pub fn measured_sites(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (2..self.t).flat_map(move |t| (0..self.l).filter(move |&x| self.is_measured(x, t)).map(move |x| (x, t)))
    }

    /// Text format: `"L T"` then `T` lines of `L` characters `1`/`5`.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.l, self.t);
        for t in 1..=self.t {
            for x in 0..self.l {
                s.push(if self.is_measured(x, t) { '1' } else { '5' });
            }
            s.push('\n');
        }
        s
    }
}

impl FromStr for DisorderGrid {
    type Err = PlaquetteError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let parse_err = |line: usize, message: String| PlaquetteError::Parse { line, message };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e: std::num::ParseIntError| parse_err(1, e.to_string()))?;
        let [l, t] = dims[..] else {
            return Err(parse_err(1, "expected \"L T\"".into()));
        };
        let mut g = Self {
            l,
            t,
            measured: vec![false; l * t],
        };
        for row in 1..=t {
            let line = lines.next().ok_or_else(|| parse_err(row + 1, "missing row".into()))?.trim();
            if line.chars().count() != l {
                return Err(parse_err(row + 1, format!("expected {l} entries")));
            }
            for (x, c) in line.chars().enumerate() {
                match c {
                    '1' => g.set_measured(x, row, true),
                    '5' => {}
                    other => return Err(parse_err(row + 1, format!("unexpected character {other:?}"))),
                }
            }
        }
        Ok(g)
    }
}

impl fmt::Debug for DisorderGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DisorderGrid\n{}", self.to_text())
    }
}

/// Which bottom sites are pinned to zero (their columns are removed).
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum InitialCondition {
    /// Every site is a free variable.
    #[default]
    Free,
    /// Row 1 pinned to zero.
    FixedZero,
    /// An explicit set of pinned `(x, t)` sites.
    Pinned(BTreeSet<(usize, usize)>),
}

impl InitialCondition {
    /// Rows 1 and 2 pinned.
    pub fn fixed_two_rows(l: usize) -> Self {
        Self::Pinned((0..l).flat_map(|x| [(x, 1), (x, 2)]).collect())
    }

    fn pinned(&self, l: usize) -> BTreeSet<(usize, usize)> {
        match self {
            Self::Free => BTreeSet::new(),
            Self::FixedZero => (0..l).map(|x| (x, 1)).collect(),
            Self::Pinned(set) => set.clone(),
        }
    }
}

/// The parity-check matrix of one realization plus its indexing.
#[derive(Clone, Debug)]
pub struct ParityCheckSystem {
    l: usize,
    t: usize,
    h: BitMatrix,
    column_of: Vec<Option<usize>>,
    site_of: Vec<(usize, usize)>,
    checks: Vec<(usize, usize)>,
    boundary: ColumnSet,
    pinned: BTreeSet<(usize, usize)>,
}

/// Build one check row per interior site; pinned columns are dropped.
pub fn build_parity_checks(grid: &DisorderGrid, initial: &InitialCondition) -> Result<ParityCheckSystem, PlaquetteError> {
    let (l, t) = (grid.width(), grid.height());
    if l < 3 {
        return Err(PlaquetteError::WidthTooSmall(l));
    }
    if t < 3 {
        return Err(PlaquetteError::HeightTooSmall(t));
    }
    let pinned = initial.pinned(l);
    for &(x, row) in &pinned {
        if x >= l || !(1..=t).contains(&row) {
            return Err(PlaquetteError::SiteOutOfRange { x, t: row, l, height: t });
        }
    }
    let mut column_of = vec![None; l * t];
    let mut site_of = Vec::new();
    for row in 1..=t {
        for x in 0..l {
            if !pinned.contains(&(x, row)) {
                column_of[x + l * (row - 1)] = Some(site_of.len());
                site_of.push((x, row));
            }
        }
    }
    let n = site_of.len();
    let col = |x: usize, row: usize| column_of[x + l * (row - 1)];
    let mut h = BitMatrix::zeros(0, n);
    let mut checks = Vec::new();
    for row in 2..t {
        for x in 0..l {
            let mut v = BitVector::zeros(n);
            let stencil: &[(usize, usize)] = if grid.is_measured(x, row) {
                &[(x, row)]
            } else {
                &[(x, row - 1), (x, row + 1), ((x + l - 1) % l, row), (x, row), ((x + 1) % l, row)]
            };
            for &(sx, st) in stencil {
                if let Some(c) = col(sx, st) {
                    v.set(c, true);
                }
            }
            h.push_row(&v);
            checks.push((x, row));
        }
    }
    let boundary = ColumnSet::new(
        (0..l)
            .flat_map(|x| [(x, t - 1), (x, t)])
            .filter_map(|(x, row)| col(x, row))
            .collect(),
    )?;
    Ok(ParityCheckSystem {
        l,
        t,
        h,
        column_of,
        site_of,
        checks,
        boundary,
        pinned,
    })
}

impl ParityCheckSystem {
    pub fn width(&self) -> usize {
        self.l
    }

    pub fn height(&self) -> usize {
        self.t
    }

    pub fn matrix(&self) -> &BitMatrix {
        &self.h
    }

    pub fn n_columns(&self) -> usize {
        self.h.cols()
    }

    pub fn n_checks(&self) -> usize {
        self.h.rows()
    }

    /// Column of site `(x, t)`, or `None` if pinned.
    pub fn column(&self, x: usize, t: usize) -> Option<usize> {
        self.column_of[x + self.l * (t - 1)]
    }

    pub fn site(&self, column: usize) -> (usize, usize) {
        self.site_of[column]
    }

    /// Center site of each check row.
    pub fn check_sites(&self) -> &[(usize, usize)] {
        &self.checks
    }

    /// Boundary columns in cell-major order: `(x, T−1), (x, T)` for each `x`.
    pub fn boundary_columns(&self) -> &ColumnSet {
        &self.boundary
    }

    pub fn pinned_sites(&self) -> &BTreeSet<(usize, usize)> {
        &self.pinned
    }

    /// Boundary columns of the cells `x ∈ cells`, cell-major.
    pub fn boundary_region(&self, cells: impl IntoIterator<Item = usize>) -> ColumnSet {
        let cols = cells
            .into_iter()
            .flat_map(|x| [(x, self.t - 1), (x, self.t)])
            .filter_map(|(x, row)| self.column(x, row))
            .collect();
        ColumnSet::new(cols).expect("cells listed more than once")
    }

    /// Boundary columns of the cells `[0, L/2)`.
    pub fn half_region(&self) -> ColumnSet {
        self.boundary_region(0..self.l / 2)
    }

    /// Number of violated checks of a configuration.
    pub fn violated(&self, s: &BitVector) -> usize {
        self.h.mul_vec(s).count_ones()
    }

    /// Same checks with one extra row appended.
    pub fn with_extra_check(&self, row: &BitVector) -> ParityCheckSystem {
        let mut out = self.clone();
        out.h.push_row(row);
        out.checks.push((usize::MAX, usize::MAX));
        out
    }
}

/// Independent generators of `ker H`, one per row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymmetryBasis {
    pub generators: BitMatrix,
}

impl SymmetryBasis {
    /// `k = log2 |G|`.
    pub fn dimension(&self) -> usize {
        self.generators.rows()
    }
}

pub fn symmetry_basis(sys: &ParityCheckSystem) -> SymmetryBasis {
    SymmetryBasis {
        generators: sys.matrix().kernel_basis(),
    }
}

/// Generators of `G_B`: symmetries that vanish on the boundary.
pub fn bulk_subgroup(sys: &ParityCheckSystem, basis: &SymmetryBasis) -> SymmetryBasis {
    SymmetryBasis {
        generators: basis
            .generators
            .subgroup_vanishing_on(sys.boundary_columns())
            .expect("boundary columns lie inside the system"),
    }
}

/// One boundary generator after gauge reduction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BoundaryGenerator {
    /// Number of boundary sites flipped.
    pub weight: usize,
    /// Cells from the first to the last occupied one, inclusive.
    pub extent: usize,
    /// Boundary sites in the shortest window around the cylinder that
    /// contains the footprint; sites run `(0,T−1), (0,T), (1,T−1), …`.
    pub support: usize,
}

/// Length of the shortest cyclic window of `ring` positions covering the
/// sorted, nonempty `positions`.
fn cyclic_span(positions: &[usize], ring: usize) -> usize {
    let wrap = positions[0] + ring - positions[positions.len() - 1];
    let gap = positions.windows(2).map(|w| w[1] - w[0]).fold(wrap, usize::max);
    ring - gap + 1
}

/// `G/G_B` expressed through its boundary footprints.
#[derive(Clone, Debug)]
pub struct BoundaryGroupReport {
    pub width: usize,
    /// Reduced footprints over the boundary columns, cell-major.
    pub footprints: BitMatrix,
    pub generators: Vec<BoundaryGenerator>,
}

impl BoundaryGroupReport {
    /// `dim(G/G_B)`.
    pub fn dimension(&self) -> usize {
        self.generators.len()
    }
}

/// Bring independent rows into a form where first and last nonzero
/// positions are both pairwise distinct.
pub fn clipped_gauge(rows: &BitMatrix) -> BitMatrix {
    let mut m = rows.row_space_canonical();
    let first = |m: &BitMatrix, r: usize| m.row(r).iter_ones().next().expect("nonzero row");
    let last = |m: &BitMatrix, r: usize| m.row(r).iter_ones().last().expect("nonzero row");
    loop {
        let mut by_last: BTreeMap<usize, usize> = BTreeMap::new();
        let mut clash = None;
        for r in 0..m.rows() {
            let end = last(&m, r);
            if let Some(&other) = by_last.get(&end) {
                clash = Some((other, r));
                break;
            }
            by_last.insert(end, r);
        }
        let Some((i, j)) = clash else {
            return m;
        };
        // Add the row that starts later into the one that starts earlier.
        let (dst, src) = if first(&m, i) < first(&m, j) { (i, j) } else { (j, i) };
        m.xor_rows(dst, src);
    }
}

/// Footprints of `G/G_B` on the boundary, in clipped gauge with cells
/// ordered `0..L`.
pub fn boundary_quotient_generators(sys: &ParityCheckSystem, basis: &SymmetryBasis) -> BoundaryGroupReport {
    let restricted = basis
        .generators
        .restrict_columns(sys.boundary_columns())
        .expect("boundary columns lie inside the system");
    let footprints = clipped_gauge(&restricted);
    let (l, t) = (sys.width(), sys.height());
    let sites: Vec<(usize, usize)> = sys
        .boundary_columns()
        .indices()
        .iter()
        .map(|&c| {
            let (x, row) = sys.site(c);
            (x, 2 * x + row + 1 - t)
        })
        .collect();
    let generators = footprints
        .iter_rows()
        .map(|row| {
            let (cells, ring): (Vec<usize>, Vec<usize>) = row.iter_ones().map(|i| sites[i]).unzip();
            BoundaryGenerator {
                weight: cells.len(),
                extent: cells.last().map_or(0, |&e| e - cells[0] + 1),
                support: if ring.is_empty() { 0 } else { cyclic_span(&ring, 2 * l) },
            }
        })
        .collect();
    BoundaryGroupReport {
        width: sys.width(),
        footprints,
        generators,
    }
}

/// Histogram of generator supports and the fraction that are extensive.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SupportStatistics {
    pub histogram: BTreeMap<usize, usize>,
    pub generators: usize,
    /// Fraction of generators whose support is at least `L/2` sites
    /// (zero when there are no generators).
    pub extensive_fraction: f64,
}

pub fn support_statistics(report: &BoundaryGroupReport) -> SupportStatistics {
    let mut histogram = BTreeMap::new();
    for g in &report.generators {
        *histogram.entry(g.support).or_insert(0) += 1;
    }
    let threshold = report.width.div_ceil(2);
    let extensive = report.generators.iter().filter(|g| g.support >= threshold).count();
    let n = report.generators.len();
    SupportStatistics {
        histogram,
        generators: n,
        extensive_fraction: if n == 0 { 0.0 } else { extensive as f64 / n as f64 },
    }
}

/// Result of running the automaton over a grid.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AutomatonRun {
    /// Rows `T − 1` and `T`.
    pub older: BitVector,
    pub newer: BitVector,
    /// Measured sites where the incoming pattern had to be zeroed.
    pub violations: Vec<(usize, usize)>,
    /// Sites `(x, t + 1)` where a measurement at `(x, t)` seeded a fresh
    /// generator; the evolved pattern is free there.
    pub new_generators: Vec<(usize, usize)>,
}

fn check_len(v: &BitVector, l: usize) -> Result<(), PlaquetteError> {
    if v.len() == l {
        Ok(())
    } else {
        Err(PlaquetteError::LengthMismatch { expected: l, got: v.len() })
    }
}

/// Iterate `s(t+1) = s(t−1) + s(x−1,t) + s(x,t) + s(x+1,t)` from rows `1, 2`
/// to rows `T − 1, T`. At a measured site `(x, t)` the pattern is forced to
/// zero and the memory term `s(x, t−1)` is dropped.
pub fn automaton_evolve(older: &BitVector, newer: &BitVector, grid: &DisorderGrid) -> Result<AutomatonRun, PlaquetteError> {
    let l = grid.width();
    check_len(older, l)?;
    check_len(newer, l)?;
    let mut run = AutomatonRun {
        older: older.clone(),
        newer: newer.clone(),
        violations: Vec::new(),
        new_generators: Vec::new(),
    };
    for t in 2..grid.height() {
        let mut memory = run.older.clone();
        for x in (0..l).filter(|&x| grid.is_measured(x, t)) {
            if run.newer.get(x) {
                run.violations.push((x, t));
                run.newer.set(x, false);
            }
            memory.set(x, false);
            run.new_generators.push((x, t + 1));
        }
        let mut next = neighborhood_sum(&run.newer);
        next.xor_assign(&memory);
        run.older = std::mem::replace(&mut run.newer, next);
    }
    Ok(run)
}

/// Group version of [`automaton_evolve`]: evolves the span of `(older, newer)`
/// row pairs. At each measured site the group is cut down to members that
/// vanish there and the unit pattern on the older row joins it. Returns an
/// independent generating set.
pub fn automaton_evolve_group(pairs: &[(BitVector, BitVector)], grid: &DisorderGrid) -> Result<Vec<(BitVector, BitVector)>, PlaquetteError> {
    let l = grid.width();
    for (o, n) in pairs {
        check_len(o, l)?;
        check_len(n, l)?;
    }
    let mut group: Vec<(BitVector, BitVector)> = pairs.to_vec();
    for t in 2..grid.height() {
        let mut touched = false;
        for x in (0..l).filter(|&x| grid.is_measured(x, t)) {
            if let Some(pivot) = group.iter().position(|(_, n)| n.get(x)) {
                let (po, pn) = group.remove(pivot);
                for (o, n) in group.iter_mut().filter(|(_, n)| n.get(x)) {
                    o.xor_assign(&po);
                    n.xor_assign(&pn);
                }
            }
            group.push((BitVector::from_indices(l, [x]), BitVector::zeros(l)));
            touched = true;
        }
        if touched {
            group = matrix_to_pairs(&pairs_to_matrix(&group, l).row_space_canonical(), l);
        }
        for (o, n) in group.iter_mut() {
            let mut next = neighborhood_sum(n);
            next.xor_assign(o);
            *o = std::mem::replace(n, next);
        }
    }
    Ok(group)
}

/// Inverse of [`pairs_to_matrix`].
pub fn matrix_to_pairs(m: &BitMatrix, l: usize) -> Vec<(BitVector, BitVector)> {
    m.iter_rows()
        .map(|r| {
            (
                BitVector::from_indices(l, r.iter_ones().filter(|&i| i < l)),
                BitVector::from_indices(l, r.iter_ones().filter(|&i| i >= l).map(|i| i - l)),
            )
        })
        .collect()
}

/// Stack `(older, newer)` pairs as rows of length `2L`.
pub fn pairs_to_matrix(pairs: &[(BitVector, BitVector)], l: usize) -> BitMatrix {
    let rows: Vec<BitVector> = pairs.iter().map(|(o, n)| o.concat(n)).collect();
    BitMatrix::from_rows(2 * l, &rows)
}
