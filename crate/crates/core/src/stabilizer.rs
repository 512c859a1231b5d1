//! Sign-free stabilizer simulation of `2L`-qubit chains.
//!
//! Qubits are laid out cell by cell: the `a` qubit of cell `x` has index `2x`,
//! the `b` qubit index `2x + 1`. Two representations are provided:
//!
//! * [`Tableau`]: general symplectic tableau, `n` generators over `2n` bits.
//! * [`SectorState`]: generators kept separately as pure-`X` and pure-`Z`
//!   strings. Valid as long as only CNOT, SWAP and single-qubit `X`/`Z`
//!   measurements are applied, and roughly twice as fast.
//!
//! Signs are never tracked; every quantity computed here depends only on the
//! stabilizer group up to signs.

use std::fmt;

use thiserror::Error;

use crate::f2::{BitMatrix, BitVector};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StabilizerError {
    #[error("gate acts twice on qubit {0}")]
    SameQubit(usize),
    #[error("qubit {qubit} out of range for {n} qubits")]
    QubitOutOfRange { qubit: usize, n: usize },
    #[error("invalid Pauli string {0:?}")]
    BadPauliString(String),
    #[error("generators do not commute or are not independent")]
    InvalidGenerators,
    #[error("operation needs an even qubit count, got {0}")]
    OddQubitCount(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sublattice {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum PauliAxis {
    X,
    Z,
}

/// A qubit named by its unit cell and sublattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SiteAddress {
    pub cell: usize,
    pub sublattice: Sublattice,
}

impl SiteAddress {
    pub fn a(cell: usize) -> Self {
        Self { cell, sublattice: Sublattice::A }
    }

    pub fn b(cell: usize) -> Self {
        Self { cell, sublattice: Sublattice::B }
    }

    pub fn qubit(self) -> usize {
        2 * self.cell + usize::from(self.sublattice == Sublattice::B)
    }

    pub fn from_qubit(q: usize) -> Self {
        Self {
            cell: q / 2,
            sublattice: if q % 2 == 0 { Sublattice::A } else { Sublattice::B },
        }
    }
}

/// Anything that names a single qubit.
pub trait Qubit: Copy {
    fn index(self) -> usize;
}

impl Qubit for usize {
    fn index(self) -> usize {
        self
    }
}

impl Qubit for SiteAddress {
    fn index(self) -> usize {
        self.qubit()
    }
}

/// Whether a measurement changed the stabilizer group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasurementEffect {
    /// The measured operator was already in the group.
    Deterministic,
    /// One generator was replaced by the measured operator.
    Updated,
}

/// Counts of pure-`X` and pure-`Z` generators of a sector-pure state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectorCounts {
    pub n_x: usize,
    pub n_z: usize,
}

/// Stabilizer generators of an `n`-qubit state as two `n × n` blocks.
#[derive(Clone, PartialEq, Eq)]
pub struct Tableau {
    n: usize,
    x: BitMatrix,
    z: BitMatrix,
}

impl Tableau {
    /// Product state with qubit `i` an eigenstate of `bases[i]`.
    pub fn product_state(bases: &[PauliAxis]) -> Self {
        let n = bases.len();
        let mut t = Self {
            n,
            x: BitMatrix::zeros(n, n),
            z: BitMatrix::zeros(n, n),
        };
        for (i, axis) in bases.iter().enumerate() {
            match axis {
                PauliAxis::X => t.x.set(i, i, true),
                PauliAxis::Z => t.z.set(i, i, true),
            }
        }
        t
    }

    /// Build from Pauli strings such as `["XX", "ZZ"]` (characters `IXYZ`,
    /// qubit 0 first). Generators must commute and be independent.
    pub fn from_paulis(strings: &[&str]) -> Result<Self, StabilizerError> {
        let n = strings.len();
        let mut t = Self {
            n,
            x: BitMatrix::zeros(n, n),
            z: BitMatrix::zeros(n, n),
        };
        for (r, s) in strings.iter().enumerate() {
            if s.chars().count() != n {
                return Err(StabilizerError::BadPauliString(s.to_string()));
            }
            for (q, c) in s.chars().enumerate() {
                let (xb, zb) = match c {
                    'I' => (false, false),
                    'X' => (true, false),
                    'Y' => (true, true),
                    'Z' => (false, true),
                    _ => return Err(StabilizerError::BadPauliString(s.to_string())),
                };
                t.x.set(r, q, xb);
                t.z.set(r, q, zb);
            }
        }
        if t.is_valid() {
            Ok(t)
        } else {
            Err(StabilizerError::InvalidGenerators)
        }
    }

    /// Build from the two blocks; rows must form a valid generating set.
    pub fn from_blocks(x: BitMatrix, z: BitMatrix) -> Result<Self, StabilizerError> {
        let n = x.rows();
        if x.cols() != n || z.rows() != n || z.cols() != n {
            return Err(StabilizerError::InvalidGenerators);
        }
        let t = Self { n, x, z };
        if t.is_valid() {
            Ok(t)
        } else {
            Err(StabilizerError::InvalidGenerators)
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn x_block(&self) -> &BitMatrix {
        &self.x
    }

    pub fn z_block(&self) -> &BitMatrix {
        &self.z
    }

    /// Generators as an `n × 2n` matrix, `X` block first.
    pub fn generators(&self) -> BitMatrix {
        let rows: Vec<BitVector> = (0..self.n).map(|r| self.x.row(r).concat(&self.z.row(r))).collect();
        BitMatrix::from_rows(2 * self.n, &rows)
    }

    fn symplectic(&self, i: usize, j: usize) -> bool {
        let xi = self.x.row(i);
        let zi = self.z.row(i);
        xi.dot(&self.z.row(j)) ^ zi.dot(&self.x.row(j))
    }

    /// Full rank and pairwise commuting.
    pub fn is_valid(&self) -> bool {
        let commuting = (0..self.n).all(|i| (i + 1..self.n).all(|j| !self.symplectic(i, j)));
        commuting && self.generators().rank() == self.n
    }

    fn check(&self, q: usize) -> Result<(), StabilizerError> {
        if q < self.n {
            Ok(())
        } else {
            Err(StabilizerError::QubitOutOfRange { qubit: q, n: self.n })
        }
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<(), StabilizerError> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            Err(StabilizerError::SameQubit(a))
        } else {
            Ok(())
        }
    }

    /// `X_c → X_c X_t`, `Z_t → Z_c Z_t`.
    pub fn apply_cnot(&mut self, control: impl Qubit, target: impl Qubit) -> Result<(), StabilizerError> {
        let (c, t) = (control.index(), target.index());
        self.check_pair(c, t)?;
        for r in 0..self.n {
            if self.x.get(r, c) {
                self.x.toggle(r, t);
            }
            if self.z.get(r, t) {
                self.z.toggle(r, c);
            }
        }
        Ok(())
    }

    /// `X_1 → X_1 Z_2`, `X_2 → X_2 Z_1`.
    pub fn apply_cz(&mut self, q1: impl Qubit, q2: impl Qubit) -> Result<(), StabilizerError> {
        let (a, b) = (q1.index(), q2.index());
        self.check_pair(a, b)?;
        for r in 0..self.n {
            if self.x.get(r, a) {
                self.z.toggle(r, b);
            }
            if self.x.get(r, b) {
                self.z.toggle(r, a);
            }
        }
        Ok(())
    }

    pub fn apply_swap(&mut self, q1: impl Qubit, q2: impl Qubit) -> Result<(), StabilizerError> {
        let (a, b) = (q1.index(), q2.index());
        self.check_pair(a, b)?;
        for r in 0..self.n {
            let (xa, xb) = (self.x.get(r, a), self.x.get(r, b));
            self.x.set(r, a, xb);
            self.x.set(r, b, xa);
            let (za, zb) = (self.z.get(r, a), self.z.get(r, b));
            self.z.set(r, a, zb);
            self.z.set(r, b, za);
        }
        Ok(())
    }

    pub fn apply_hadamard(&mut self, q: impl Qubit) -> Result<(), StabilizerError> {
        let q = q.index();
        self.check(q)?;
        for r in 0..self.n {
            let (xq, zq) = (self.x.get(r, q), self.z.get(r, q));
            self.x.set(r, q, zq);
            self.z.set(r, q, xq);
        }
        Ok(())
    }

    /// Projective measurement of `X_q` or `Z_q`. The lowest-index
    /// anticommuting generator is replaced; outcomes are not tracked.
    pub fn measure(&mut self, axis: PauliAxis, q: impl Qubit) -> Result<MeasurementEffect, StabilizerError> {
        let q = q.index();
        self.check(q)?;
        // X_q anticommutes with rows carrying Z on q, and vice versa.
        let block = match axis {
            PauliAxis::X => &self.z,
            PauliAxis::Z => &self.x,
        };
        let hits: Vec<usize> = (0..self.n).filter(|&r| block.get(r, q)).collect();
        let Some((&pivot, rest)) = hits.split_first() else {
            return Ok(MeasurementEffect::Deterministic);
        };
        for &r in rest {
            self.x.xor_rows(r, pivot);
            self.z.xor_rows(r, pivot);
        }
        let mut xrow = BitVector::zeros(self.n);
        let mut zrow = BitVector::zeros(self.n);
        match axis {
            PauliAxis::X => xrow.set(q, true),
            PauliAxis::Z => zrow.set(q, true),
        }
        set_row(&mut self.x, pivot, &xrow);
        set_row(&mut self.z, pivot, &zrow);
        Ok(MeasurementEffect::Updated)
    }

    /// Entanglement entropy in bits of the qubits in `region`:
    /// `rank(G|_A) − |A|`.
    pub fn entanglement_entropy(&self, region: &[usize]) -> Result<usize, StabilizerError> {
        for &q in region {
            self.check(q)?;
        }
        let k = region.len();
        let mut m = BitMatrix::zeros(self.n, 2 * k);
        for r in 0..self.n {
            for (j, &q) in region.iter().enumerate() {
                if self.x.get(r, q) {
                    m.set(r, j, true);
                }
                if self.z.get(r, q) {
                    m.set(r, k + j, true);
                }
            }
        }
        Ok(m.rank() - k)
    }

    /// Participation entropy in bits: `log2` of the number of basis states
    /// of the given basis in the support of the state.
    pub fn participation_entropy(&self, basis: PauliAxis) -> usize {
        match basis {
            // The Z-basis support is an affine space of dimension rank(X block).
            PauliAxis::Z => self.x.rank(),
            PauliAxis::X => self.z.rank(),
        }
    }

    /// Pure-`X` and pure-`Z` subgroup dimensions, or `None` if together they
    /// do not generate the whole group.
    pub fn sector_counts(&self) -> Option<SectorCounts> {
        let n_z = self.n - self.x.rank();
        let n_x = self.n - self.z.rank();
        (n_x + n_z == self.n).then_some(SectorCounts { n_x, n_z })
    }

    /// Whether `self` and `other` stabilize the same state (up to signs).
    pub fn same_group(&self, other: &Tableau) -> bool {
        self.n == other.n && self.generators().same_row_space(&other.generators())
    }
}

fn set_row(m: &mut BitMatrix, r: usize, v: &BitVector) {
    for c in 0..m.cols() {
        m.set(r, c, v.get(c));
    }
}

impl fmt::Debug for Tableau {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Tableau({} qubits)", self.n)?;
        for r in 0..self.n {
            let s: String = (0..self.n)
                .map(|q| match (self.x.get(r, q), self.z.get(r, q)) {
                    (false, false) => 'I',
                    (true, false) => 'X',
                    (true, true) => 'Y',
                    (false, true) => 'Z',
                })
                .collect();
            writeln!(f, "  {s}")?;
        }
        Ok(())
    }
}

/// A pure-type Pauli string on `L` cells, split by sublattice.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SplitString {
    pub a: BitVector,
    pub b: BitVector,
}

impl SplitString {
    pub fn zeros(cells: usize) -> Self {
        Self {
            a: BitVector::zeros(cells),
            b: BitVector::zeros(cells),
        }
    }

    pub fn single(cells: usize, site: SiteAddress) -> Self {
        let mut s = Self::zeros(cells);
        s.set(site, true);
        s
    }

    pub fn get(&self, site: SiteAddress) -> bool {
        match site.sublattice {
            Sublattice::A => self.a.get(site.cell),
            Sublattice::B => self.b.get(site.cell),
        }
    }

    pub fn set(&mut self, site: SiteAddress, value: bool) {
        match site.sublattice {
            Sublattice::A => self.a.set(site.cell, value),
            Sublattice::B => self.b.set(site.cell, value),
        }
    }

    fn xor_assign(&mut self, other: &SplitString) {
        self.a.xor_assign(&other.a);
        self.b.xor_assign(&other.b);
    }

    /// Interleaved qubit-order vector of length `2L`.
    pub fn to_qubit_vector(&self) -> BitVector {
        let cells = self.a.len();
        BitVector::from_indices(
            2 * cells,
            self.a.iter_ones().map(|c| 2 * c).chain(self.b.iter_ones().map(|c| 2 * c + 1)),
        )
    }

    /// Restriction to the cells `[0, k)`, `a` bits then `b` bits.
    fn prefix(&self, k: usize) -> BitVector {
        self.a.truncated(k).concat(&self.b.truncated(k))
    }
}

/// `out[i] = v[i-1] + v[i] + v[i+1]` with periodic indices.
pub(crate) fn neighborhood_sum(v: &BitVector) -> BitVector {
    let mut out = v.rotated_up();
    out.xor_assign(&v.rotated_down());
    out.xor_assign(v);
    out
}

/// Sector-pure stabilizer state of `L` cells: independent pure-`X`
/// generators and independent pure-`Z` generators, `N_X + N_Z = 2L`.
#[derive(Clone, Debug)]
pub struct SectorState {
    cells: usize,
    x_gens: Vec<SplitString>,
    z_gens: Vec<SplitString>,
}

impl SectorState {
    /// Product state; `bases[q]` is the axis of qubit `q` in interleaved order.
    pub fn product_state(bases: &[PauliAxis]) -> Result<Self, StabilizerError> {
        if bases.len() % 2 != 0 {
            return Err(StabilizerError::OddQubitCount(bases.len()));
        }
        let cells = bases.len() / 2;
        let mut s = Self {
            cells,
            x_gens: Vec::new(),
            z_gens: Vec::new(),
        };
        for (q, axis) in bases.iter().enumerate() {
            let g = SplitString::single(cells, SiteAddress::from_qubit(q));
            match axis {
                PauliAxis::X => s.x_gens.push(g),
                PauliAxis::Z => s.z_gens.push(g),
            }
        }
        Ok(s)
    }

    /// Split a sector-pure tableau; `None` if it is not sector pure.
    pub fn from_tableau(t: &Tableau) -> Option<Self> {
        t.sector_counts()?;
        if t.n_qubits() % 2 != 0 {
            return None;
        }
        let cells = t.n_qubits() / 2;
        let pick = |block: &BitMatrix, other: &BitMatrix| -> Vec<SplitString> {
            // Pure strings of one type: combinations with vanishing other block.
            let coeffs = other.left_kernel_basis();
            let pure = coeffs.mul(block).row_space_canonical();
            pure.iter_rows()
                .map(|row| {
                    let mut s = SplitString::zeros(cells);
                    for q in row.iter_ones() {
                        s.set(SiteAddress::from_qubit(q), true);
                    }
                    s
                })
                .collect()
        };
        Some(Self {
            cells,
            x_gens: pick(t.x_block(), t.z_block()),
            z_gens: pick(t.z_block(), t.x_block()),
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn n_qubits(&self) -> usize {
        2 * self.cells
    }

    pub fn x_generators(&self) -> &[SplitString] {
        &self.x_gens
    }

    pub fn z_generators(&self) -> &[SplitString] {
        &self.z_gens
    }

    pub fn sector_counts(&self) -> SectorCounts {
        SectorCounts {
            n_x: self.x_gens.len(),
            n_z: self.z_gens.len(),
        }
    }

    /// `PE_Z = N_X` and `PE_X = N_Z`.
    pub fn participation_entropy(&self, basis: PauliAxis) -> usize {
        match basis {
            PauliAxis::Z => self.x_gens.len(),
            PauliAxis::X => self.z_gens.len(),
        }
    }

    pub fn to_tableau(&self) -> Tableau {
        let n = self.n_qubits();
        let mut x = BitMatrix::zeros(0, n);
        let mut z = BitMatrix::zeros(0, n);
        let zero = BitVector::zeros(n);
        for g in &self.x_gens {
            x.push_row(&g.to_qubit_vector());
            z.push_row(&zero);
        }
        for g in &self.z_gens {
            x.push_row(&zero);
            z.push_row(&g.to_qubit_vector());
        }
        Tableau { n, x, z }
    }

    fn check(&self, site: SiteAddress) -> Result<(), StabilizerError> {
        if site.cell < self.cells {
            Ok(())
        } else {
            Err(StabilizerError::QubitOutOfRange {
                qubit: site.qubit(),
                n: self.n_qubits(),
            })
        }
    }

    /// One full layer of CNOTs with control `b_j` and targets
    /// `a_{j-1}, a_j, a_{j+1}`. The gates commute, so order is irrelevant.
    pub fn apply_cnot_layer(&mut self) {
        for g in &mut self.x_gens {
            let spread = neighborhood_sum(&g.b);
            g.a.xor_assign(&spread);
        }
        for g in &mut self.z_gens {
            let spread = neighborhood_sum(&g.a);
            g.b.xor_assign(&spread);
        }
    }

    pub fn apply_cnot(&mut self, control: SiteAddress, target: SiteAddress) -> Result<(), StabilizerError> {
        self.check(control)?;
        self.check(target)?;
        if control == target {
            return Err(StabilizerError::SameQubit(control.qubit()));
        }
        for g in &mut self.x_gens {
            if g.get(control) {
                let v = g.get(target);
                g.set(target, !v);
            }
        }
        for g in &mut self.z_gens {
            if g.get(target) {
                let v = g.get(control);
                g.set(control, !v);
            }
        }
        Ok(())
    }

    /// Swap `a` and `b` in every cell.
    pub fn swap_sublattices(&mut self) {
        for g in self.x_gens.iter_mut().chain(self.z_gens.iter_mut()) {
            std::mem::swap(&mut g.a, &mut g.b);
        }
    }

    pub fn measure(&mut self, axis: PauliAxis, site: SiteAddress) -> Result<MeasurementEffect, StabilizerError> {
        self.check(site)?;
        let (hit, keep) = match axis {
            PauliAxis::X => (&mut self.z_gens, &mut self.x_gens),
            PauliAxis::Z => (&mut self.x_gens, &mut self.z_gens),
        };
        let Some(pivot) = hit.iter().position(|g| g.get(site)) else {
            return Ok(MeasurementEffect::Deterministic);
        };
        let pivot_row = hit.remove(pivot);
        for g in hit.iter_mut().skip(pivot) {
            if g.get(site) {
                g.xor_assign(&pivot_row);
            }
        }
        keep.push(SplitString::single(self.cells, site));
        Ok(MeasurementEffect::Updated)
    }

    /// Entanglement entropy in bits of the cells `[0, k)` (both sublattices).
    pub fn prefix_entropy(&self, k: usize) -> usize {
        assert!(k <= self.cells);
        let restricted_rank = |gens: &[SplitString]| {
            let rows: Vec<BitVector> = gens.iter().map(|g| g.prefix(k)).collect();
            BitMatrix::from_rows(2 * k, &rows).rank()
        };
        restricted_rank(&self.x_gens) + restricted_rank(&self.z_gens) - 2 * k
    }

    /// Entanglement entropy in bits of an arbitrary qubit region.
    pub fn entanglement_entropy(&self, region: &[usize]) -> Result<usize, StabilizerError> {
        let sites: Vec<SiteAddress> = region.iter().map(|&q| SiteAddress::from_qubit(q)).collect();
        for &s in &sites {
            self.check(s)?;
        }
        let restricted_rank = |gens: &[SplitString]| {
            let rows: Vec<BitVector> = gens
                .iter()
                .map(|g| BitVector::from_bools(&sites.iter().map(|&s| g.get(s)).collect::<Vec<_>>()))
                .collect();
            BitMatrix::from_rows(sites.len(), &rows).rank()
        };
        Ok(restricted_rank(&self.x_gens) + restricted_rank(&self.z_gens) - sites.len())
    }
}
