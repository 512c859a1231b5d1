//! Dense, bit-packed linear algebra over GF(2).
//!
//! Matrices are stored row-major with each row packed into `u64` words, so row
//! elimination is a word-wise XOR. Every classical computation in the crate
//! (parity checks, symmetry groups, redundancies, replica systems) and the
//! stabilizer tableaux are built on [`BitMatrix`].
//!
//! Pivot selection is deterministic: columns are scanned left to right and the
//! first row holding a one in the current column becomes the pivot.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

const WORD_BITS: usize = 64;

#[inline]
fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

#[inline]
fn tail_mask(bits: usize) -> u64 {
    match bits % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum F2Error {
    #[error("column {index} out of range for width {width}")]
    ColumnOutOfRange { index: usize, width: usize },
    #[error("column {0} listed more than once")]
    DuplicateColumn(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// A packed vector over GF(2). Bits beyond `len` are always zero.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVector {
    len: usize,
    words: Vec<u64>,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; words_for(len)],
        }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    /// Vector of length `len` with ones at `ones`.
    ///
    /// # Panics
    /// Panics if an index is `>= len`.
    pub fn from_indices(len: usize, ones: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::zeros(len);
        for i in ones {
            v.set(i, true);
        }
        v
    }

    pub(crate) fn from_words(len: usize, mut words: Vec<u64>) -> Self {
        words.resize(words_for(len), 0);
        if let Some(last) = words.last_mut() {
            *last &= tail_mask(len);
        }
        Self { len, words }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        (self.words[i / WORD_BITS] >> (i % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % WORD_BITS);
        if value {
            self.words[i / WORD_BITS] |= mask;
        } else {
            self.words[i / WORD_BITS] &= !mask;
        }
    }

    #[inline]
    pub fn toggle(&mut self, i: usize) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        self.words[i / WORD_BITS] ^= 1u64 << (i % WORD_BITS);
    }

    #[inline]
    pub fn xor_assign(&mut self, other: &BitVector) {
        assert_eq!(self.len, other.len, "length mismatch in xor");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= *b;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitVector) -> bool {
        assert_eq!(self.len, other.len, "length mismatch in dot product");
        self.words
            .iter()
            .zip(&other.words)
            .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones())
            & 1
            == 1
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let tz = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * WORD_BITS + tz)
                }
            })
        })
    }

    /// First `k` bits as a new vector.
    pub fn truncated(&self, k: usize) -> BitVector {
        assert!(k <= self.len);
        BitVector::from_words(k, self.words[..words_for(k)].to_vec())
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &BitVector) -> BitVector {
        let mut out = BitVector::zeros(self.len + other.len);
        out.words[..self.words.len()].copy_from_slice(&self.words);
        let offset = self.len;
        if offset % WORD_BITS == 0 {
            let start = offset / WORD_BITS;
            out.words[start..start + other.words.len()].copy_from_slice(&other.words);
        } else {
            for i in other.iter_ones() {
                out.set(offset + i, true);
            }
        }
        out
    }

    /// Cyclic shift towards higher indices: `out[i] = self[i - 1 mod len]`.
    pub fn rotated_up(&self) -> BitVector {
        if self.len == 0 {
            return self.clone();
        }
        let mut out = vec![0u64; self.words.len()];
        let mut carry = 0u64;
        for (o, &w) in out.iter_mut().zip(&self.words) {
            *o = (w << 1) | carry;
            carry = w >> (WORD_BITS - 1);
        }
        let wrap = self.get(self.len - 1);
        let mut v = BitVector::from_words(self.len, out);
        v.set(0, wrap);
        v
    }

    /// Cyclic shift towards lower indices: `out[i] = self[i + 1 mod len]`.
    pub fn rotated_down(&self) -> BitVector {
        if self.len == 0 {
            return self.clone();
        }
        let n = self.words.len();
        let mut out = vec![0u64; n];
        for w in 0..n {
            let hi = if w + 1 < n { self.words[w + 1] << (WORD_BITS - 1) } else { 0 };
            out[w] = (self.words[w] >> 1) | hi;
        }
        let wrap = self.get(0);
        let mut v = BitVector::from_words(self.len, out);
        v.set(self.len - 1, wrap);
        v
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({self})")
    }
}

impl fmt::Display for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len {
            f.write_str(if self.get(i) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitVector {
    type Err = F2Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let mut v = BitVector::zeros(s.len());
        for (i, c) in s.chars().enumerate() {
            match c {
                '0' => {}
                '1' => v.set(i, true),
                other => {
                    return Err(F2Error::Parse {
                        line: 1,
                        message: format!("unexpected character {other:?}"),
                    })
                }
            }
        }
        Ok(v)
    }
}

/// Ordered selection of distinct column indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct ColumnSet(Vec<usize>);

impl ColumnSet {
    pub fn new(indices: Vec<usize>) -> Result<Self, F2Error> {
        let mut seen = std::collections::HashSet::with_capacity(indices.len());
        for &i in &indices {
            if !seen.insert(i) {
                return Err(F2Error::DuplicateColumn(i));
            }
        }
        Ok(Self(indices))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn range(range: std::ops::Range<usize>) -> Self {
        Self(range.collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0.contains(&index)
    }

    /// Columns of `self` that are not in `other`, in the order of `self`.
    pub fn difference(&self, other: &ColumnSet) -> ColumnSet {
        let other: std::collections::HashSet<_> = other.0.iter().copied().collect();
        ColumnSet(self.0.iter().copied().filter(|i| !other.contains(i)).collect())
    }

    pub fn check_width(&self, width: usize) -> Result<(), F2Error> {
        match self.0.iter().find(|&&i| i >= width) {
            Some(&index) => Err(F2Error::ColumnOutOfRange { index, width }),
            None => Ok(()),
        }
    }
}

/// Result of [`BitMatrix::row_reduce`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowReduction {
    /// Reduced row-echelon form; rows `rank..` are zero.
    pub reduced: BitMatrix,
    pub rank: usize,
    pub pivot_cols: Vec<usize>,
}

/// Dense row-major matrix over GF(2).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        Self {
            rows,
            cols,
            stride,
            data: vec![0; rows * stride],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// Stack vectors of length `cols` as rows.
    ///
    /// # Panics
    /// Panics if a row has the wrong length.
    pub fn from_rows(cols: usize, rows: &[BitVector]) -> Self {
        let mut m = Self::zeros(0, cols);
        for r in rows {
            m.push_row(r);
        }
        m
    }

    /// Parse rows written as strings of `0`/`1`, e.g. `["110", "011"]`.
    ///
    /// # Panics
    /// Panics on malformed input; meant for fixtures.
    pub fn from_strs(rows: &[&str]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let vecs: Vec<BitVector> = rows
            .iter()
            .map(|r| r.parse().expect("malformed row literal"))
            .collect();
        Self::from_rows(cols, &vecs)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        debug_assert!(r < self.rows && c < self.cols);
        (self.data[r * self.stride + c / WORD_BITS] >> (c % WORD_BITS)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of range");
        let w = &mut self.data[r * self.stride + c / WORD_BITS];
        let mask = 1u64 << (c % WORD_BITS);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    #[inline]
    pub fn toggle(&mut self, r: usize, c: usize) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.stride + c / WORD_BITS] ^= 1u64 << (c % WORD_BITS);
    }

    #[inline]
    pub fn row_words(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    pub fn row(&self, r: usize) -> BitVector {
        BitVector::from_words(self.cols, self.row_words(r).to_vec())
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = BitVector> + '_ {
        (0..self.rows).map(|r| self.row(r))
    }

    pub fn row_is_zero(&self, r: usize) -> bool {
        self.row_words(r).iter().all(|&w| w == 0)
    }

    pub fn push_row(&mut self, row: &BitVector) {
        assert_eq!(row.len(), self.cols, "row length mismatch");
        self.data.extend_from_slice(row.words());
        self.rows += 1;
    }

    /// Remove row `r`, moving the last row into its place.
    pub fn swap_remove_row(&mut self, r: usize) {
        assert!(r < self.rows);
        let last = self.rows - 1;
        if r != last {
            self.swap_rows(r, last);
        }
        self.data.truncate(last * self.stride);
        self.rows = last;
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let s = self.stride;
        let (head, tail) = self.data.split_at_mut(hi * s);
        head[lo * s..(lo + 1) * s].swap_with_slice(&mut tail[..s]);
    }

    /// `row[dst] ^= row[src]`, touching words from `from_word` onwards.
    #[inline]
    fn xor_row_from(&mut self, dst: usize, src: usize, from_word: usize) {
        debug_assert_ne!(dst, src);
        let s = self.stride;
        let (d, sr) = if dst < src {
            let (head, tail) = self.data.split_at_mut(src * s);
            (&mut head[dst * s..(dst + 1) * s], &tail[..s])
        } else {
            let (head, tail) = self.data.split_at_mut(dst * s);
            (&mut tail[..s], &head[src * s..(src + 1) * s])
        };
        for (a, b) in d[from_word..].iter_mut().zip(&sr[from_word..]) {
            *a ^= *b;
        }
    }

    /// `row[dst] ^= row[src]`.
    pub fn xor_rows(&mut self, dst: usize, src: usize) {
        self.xor_row_from(dst, src, 0);
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for (wi, &w) in self.row_words(r).iter().enumerate() {
                let mut w = w;
                while w != 0 {
                    let c = wi * WORD_BITS + w.trailing_zeros() as usize;
                    w &= w - 1;
                    t.data[c * t.stride + r / WORD_BITS] |= 1u64 << (r % WORD_BITS);
                }
            }
        }
        t
    }

    /// Matrix-vector product `self · v`.
    pub fn mul_vec(&self, v: &BitVector) -> BitVector {
        assert_eq!(v.len(), self.cols, "dimension mismatch in mul_vec");
        let mut out = BitVector::zeros(self.rows);
        for r in 0..self.rows {
            let parity = self
                .row_words(r)
                .iter()
                .zip(v.words())
                .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones())
                & 1;
            if parity == 1 {
                out.set(r, true);
            }
        }
        out
    }

    /// Row-vector product `v · self`, i.e. the XOR of the rows selected by `v`.
    pub fn left_mul_vec(&self, v: &BitVector) -> BitVector {
        assert_eq!(v.len(), self.rows, "dimension mismatch in left_mul_vec");
        let mut acc = vec![0u64; self.stride];
        for r in v.iter_ones() {
            for (a, b) in acc.iter_mut().zip(self.row_words(r)) {
                *a ^= *b;
            }
        }
        BitVector::from_words(self.cols, acc)
    }

    /// Matrix product `self · other`.
    pub fn mul(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in mul");
        let mut out = BitMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let row = other.left_mul_vec(&self.row(r));
            out.data[r * out.stride..(r + 1) * out.stride].copy_from_slice(row.words());
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&w| w == 0)
    }

    /// Forward elimination in place; returns pivot columns. When `full` is set
    /// the result is in reduced row-echelon form.
    fn eliminate(&mut self, full: bool) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let word = c / WORD_BITS;
            let mask = 1u64 << (c % WORD_BITS);
            let Some(p) = (r..self.rows).find(|&i| self.data[i * self.stride + word] & mask != 0) else {
                continue;
            };
            self.swap_rows(r, p);
            let start = if full { 0 } else { r + 1 };
            for i in start..self.rows {
                if i != r && self.data[i * self.stride + word] & mask != 0 {
                    self.xor_row_from(i, r, word);
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    /// Reduced row-echelon form, rank and pivot columns.
    pub fn row_reduce(&self) -> RowReduction {
        let mut reduced = self.clone();
        let pivot_cols = reduced.eliminate(true);
        RowReduction {
            rank: pivot_cols.len(),
            reduced,
            pivot_cols,
        }
    }

    pub fn rank(&self) -> usize {
        self.clone().eliminate(false).len()
    }

    /// Basis of `{v : self · v = 0}`, one vector per row.
    pub fn kernel_basis(&self) -> BitMatrix {
        let RowReduction {
            reduced, pivot_cols, ..
        } = self.row_reduce();
        let mut is_pivot = vec![false; self.cols];
        for &p in &pivot_cols {
            is_pivot[p] = true;
        }
        let mut basis = BitMatrix::zeros(0, self.cols);
        for f in (0..self.cols).filter(|&c| !is_pivot[c]) {
            let mut v = BitVector::zeros(self.cols);
            v.set(f, true);
            for (i, &p) in pivot_cols.iter().enumerate() {
                if reduced.get(i, f) {
                    v.set(p, true);
                }
            }
            basis.push_row(&v);
        }
        basis
    }

    /// Basis of `{r : r · self = 0}`, one vector per row.
    pub fn left_kernel_basis(&self) -> BitMatrix {
        self.transpose().kernel_basis()
    }

    /// Dimension of the kernel (`cols - rank`).
    pub fn nullity(&self) -> usize {
        self.cols - self.rank()
    }

    /// Keep only the columns in `keep`, in the order given.
    pub fn restrict_columns(&self, keep: &ColumnSet) -> Result<BitMatrix, F2Error> {
        keep.check_width(self.cols)?;
        let mut out = BitMatrix::zeros(self.rows, keep.len());
        for r in 0..self.rows {
            let src = self.row_words(r);
            let dst = &mut out.data[r * out.stride..(r + 1) * out.stride];
            for (j, &c) in keep.indices().iter().enumerate() {
                if (src[c / WORD_BITS] >> (c % WORD_BITS)) & 1 == 1 {
                    dst[j / WORD_BITS] |= 1u64 << (j % WORD_BITS);
                }
            }
        }
        Ok(out)
    }

    /// Rank of the rows restricted to `region`. For a basis of a group `G`
    /// this is `log2 |G / G_φ(region)|`.
    pub fn projected_rank(&self, region: &ColumnSet) -> Result<usize, F2Error> {
        Ok(self.restrict_columns(region)?.rank())
    }

    /// Basis of the members of `span(self)` that vanish on every column of
    /// `region`. Rows of `self` must be independent.
    pub fn subgroup_vanishing_on(&self, region: &ColumnSet) -> Result<BitMatrix, F2Error> {
        let coefficients = self.restrict_columns(region)?.left_kernel_basis();
        Ok(coefficients.mul(self))
    }

    /// Canonical representative of the row space (RREF with zero rows dropped).
    pub fn row_space_canonical(&self) -> BitMatrix {
        let rr = self.row_reduce();
        let mut out = rr.reduced;
        out.data.truncate(rr.rank * out.stride);
        out.rows = rr.rank;
        out
    }

    /// Whether two matrices have the same row space.
    pub fn same_row_space(&self, other: &BitMatrix) -> bool {
        self.cols == other.cols && self.row_space_canonical() == other.row_space_canonical()
    }

    /// Vertical concatenation.
    pub fn stacked(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.cols, "column mismatch when stacking");
        let mut out = self.clone();
        out.data.extend_from_slice(&other.data);
        out.rows += other.rows;
        out
    }

    /// Serialize in the text format: `"rows cols"` then one `0`/`1` line per row.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rows, self.cols);
        for r in 0..self.rows {
            s.push_str(&self.row(r).to_string());
            s.push('\n');
        }
        s
    }

    pub fn parse_text(text: &str) -> Result<BitMatrix, F2Error> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(F2Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|e| F2Error::Parse {
                line: 1,
                message: e.to_string(),
            })?;
        let [rows, cols] = dims[..] else {
            return Err(F2Error::Parse {
                line: 1,
                message: "expected \"rows cols\"".into(),
            });
        };
        let mut m = BitMatrix::zeros(0, cols);
        for r in 0..rows {
            let line = lines.next().unwrap_or("");
            let v: BitVector = line.parse().map_err(|e| match e {
                F2Error::Parse { message, .. } => F2Error::Parse {
                    line: r + 2,
                    message,
                },
                other => other,
            })?;
            if v.len() != cols {
                return Err(F2Error::Parse {
                    line: r + 2,
                    message: format!("expected {cols} columns, found {}", v.len()),
                });
            }
            m.push_row(&v);
        }
        Ok(m)
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {}", self.row(r))?;
        }
        Ok(())
    }
}

impl fmt::Display for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
