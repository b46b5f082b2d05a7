//! Flow decomposition sets and their Latin-square form.
//!
//! A decomposition set splits the n² input-output flows of an n-port switch
//! into n perfect matchings that together cover every flow exactly once.
//! Writing the matching label of flow (i, j) into cell (i, j) of an n×n grid
//! yields a Latin square, and with the canonical labeling — matching k is the
//! one containing flow (0, k) — the first row is forced to the natural order.
//! That makes the two representations interchangeable, and it pins the total
//! count at (n−1)! times the number of reduced Latin squares of order n.

use crate::types::PerfectMatching;
use thiserror::Error;

/// Largest order the streaming enumeration supports.
pub const MAX_ENUMERATION_ORDER: usize = 6;
/// Largest order the closed-form count supports.
pub const MAX_COUNT_ORDER: usize = 7;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LatinError {
    #[error("order {n} outside the supported range {min}..={max}")]
    UnsupportedOrder { n: usize, min: usize, max: usize },
    #[error("expected {n} rows of {n} symbols")]
    BadShape { n: usize },
    #[error("row {row}: symbol {symbol} out of range 1..={n}")]
    SymbolOutOfRange { row: usize, symbol: usize, n: usize },
    #[error("symbol repeats in {place} {index}")]
    RepeatedSymbol { place: &'static str, index: usize },
    #[error("first row must be the natural order 1..=n")]
    FirstRowNotNatural,
    #[error("expected {n} matchings of {n} ports each, got {got}")]
    WrongMatchingCount { n: usize, got: usize },
    #[error("matching {k} has {got} ports, expected {n}")]
    MixedOrders { k: usize, got: usize, n: usize },
    #[error("flow ({i},{j}) is covered by more than one matching")]
    CoverageViolation { i: usize, j: usize },
    #[error("labeling is not canonical: matching {k} does not contain flow (0,{k})")]
    NotCanonicallyLabeled { k: usize },
}

/// A Latin square of order n with the first row fixed to the natural order.
///
/// Symbols are stored 0-based; symbol k in cell (i, j) means flow (i, j)
/// belongs to matching k. External (JSON/CLI) forms are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatinSquare {
    n: usize,
    cells: Vec<usize>, // row-major
}

impl LatinSquare {
    /// Validates 0-based rows: square shape, symbol range, Latin property,
    /// and the natural first row.
    pub fn new(rows: &[Vec<usize>]) -> Result<Self, LatinError> {
        let n = rows.len();
        if n == 0 {
            return Err(LatinError::BadShape { n });
        }
        let mut cells = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(LatinError::BadShape { n });
            }
            for &s in row {
                if s >= n {
                    return Err(LatinError::SymbolOutOfRange { row: i, symbol: s + 1, n });
                }
            }
            cells.extend_from_slice(row);
        }
        Self::from_cells(n, cells)
    }

    /// Validates 1-based rows, the external form.
    pub fn from_one_based_rows(rows: &[Vec<usize>]) -> Result<Self, LatinError> {
        let n = rows.len();
        let mut shifted = Vec::with_capacity(n);
        for (i, row) in rows.iter().enumerate() {
            let mut out = Vec::with_capacity(row.len());
            for &s in row {
                if s == 0 || s > n {
                    return Err(LatinError::SymbolOutOfRange { row: i, symbol: s, n });
                }
                out.push(s - 1);
            }
            shifted.push(out);
        }
        Self::new(&shifted)
    }

    fn from_cells(n: usize, cells: Vec<usize>) -> Result<Self, LatinError> {
        for i in 0..n {
            let mut seen = 0u32;
            for j in 0..n {
                let bit = 1u32 << cells[i * n + j];
                if seen & bit != 0 {
                    return Err(LatinError::RepeatedSymbol { place: "row", index: i });
                }
                seen |= bit;
            }
        }
        for j in 0..n {
            let mut seen = 0u32;
            for i in 0..n {
                let bit = 1u32 << cells[i * n + j];
                if seen & bit != 0 {
                    return Err(LatinError::RepeatedSymbol { place: "column", index: j });
                }
                seen |= bit;
            }
        }
        if (0..n).any(|j| cells[j] != j) {
            return Err(LatinError::FirstRowNotNatural);
        }
        Ok(Self { n, cells })
    }

    /// Enumeration fast path: the backtracker only produces valid squares.
    fn from_cells_unchecked(n: usize, cells: Vec<usize>) -> Self {
        debug_assert!(Self::from_cells(n, cells.clone()).is_ok());
        Self { n, cells }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// 0-based symbol in cell (i, j): the matching index of flow (i, j).
    pub fn symbol(&self, i: usize, j: usize) -> usize {
        self.cells[i * self.n + j]
    }

    /// Rows in the 1-based external form.
    pub fn rows_one_based(&self) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.symbol(i, j) + 1).collect())
            .collect()
    }
}

/// N perfect matchings that cover each of the N² flows exactly once, labeled
/// canonically: matching k is the one containing flow (0, k).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowDecompositionSet {
    n: usize,
    matchings: Vec<PerfectMatching>,
    label: Vec<usize>, // row-major: label[i*n+j] = matching index of flow (i, j)
}

impl FlowDecompositionSet {
    /// Validates count, sizes, exact coverage, and canonical labeling.
    pub fn new(matchings: Vec<PerfectMatching>) -> Result<Self, LatinError> {
        let n = matchings.len();
        if n == 0 {
            return Err(LatinError::WrongMatchingCount { n, got: 0 });
        }
        for (k, m) in matchings.iter().enumerate() {
            if m.n() != n {
                return Err(LatinError::MixedOrders { k, got: m.n(), n });
            }
        }
        let mut label = vec![usize::MAX; n * n];
        for (k, m) in matchings.iter().enumerate() {
            for (i, j) in m.pairs() {
                if label[i * n + j] != usize::MAX {
                    return Err(LatinError::CoverageViolation { i, j });
                }
                label[i * n + j] = k;
            }
        }
        // n matchings of n pairs with no double coverage fill all n² cells.
        debug_assert!(label.iter().all(|&k| k != usize::MAX));
        for (k, m) in matchings.iter().enumerate() {
            if m.output_of(0) != k {
                return Err(LatinError::NotCanonicallyLabeled { k });
            }
        }
        Ok(Self { n, matchings, label })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn matchings(&self) -> &[PerfectMatching] {
        &self.matchings
    }

    pub fn matching(&self, k: usize) -> &PerfectMatching {
        &self.matchings[k]
    }

    /// The index k of the matching that carries flow (i, j).
    pub fn matching_index_of(&self, i: usize, j: usize) -> usize {
        self.label[i * self.n + j]
    }

    pub fn to_latin_square(&self) -> LatinSquare {
        LatinSquare::from_cells_unchecked(self.n, self.label.clone())
    }

    pub fn from_latin_square(square: &LatinSquare) -> Self {
        let n = square.n();
        let mut perms = vec![vec![0usize; n]; n];
        for i in 0..n {
            for j in 0..n {
                perms[square.symbol(i, j)][i] = j;
            }
        }
        let matchings = perms
            .into_iter()
            .map(|p| PerfectMatching::from_permutation(p).expect("latin square columns are permutations"))
            .collect();
        let label = (0..n * n).map(|idx| square.symbol(idx / n, idx % n)).collect();
        Self { n, matchings, label }
    }
}

/// The Latin square whose cell (i, j) names the matching of flow (i, j).
pub fn decomposition_to_latin(d: &FlowDecompositionSet) -> LatinSquare {
    d.to_latin_square()
}

/// The decomposition set encoded by a Latin square with natural first row.
pub fn latin_to_decomposition(square: &LatinSquare) -> FlowDecompositionSet {
    FlowDecompositionSet::from_latin_square(square)
}

/// The cyclic decomposition: matching k connects input i to output
/// (i + k) mod n, so matching 0 is the identity and the rest are shifts.
pub fn cyclic_decomposition(n: usize) -> FlowDecompositionSet {
    assert!(n >= 2, "cyclic decomposition needs at least 2 ports");
    let matchings = (0..n)
        .map(|k| {
            PerfectMatching::from_permutation((0..n).map(|i| (i + k) % n).collect())
                .expect("cyclic shift is a permutation")
        })
        .collect();
    FlowDecompositionSet::new(matchings).expect("cyclic shifts partition all flows")
}

/// Streams every Latin square of the given order with natural first row, in
/// lexicographic row-major order.
pub fn enumerate_latin_squares(n: usize) -> Result<LatinSquareIter, LatinError> {
    if !(2..=MAX_ENUMERATION_ORDER).contains(&n) {
        return Err(LatinError::UnsupportedOrder {
            n,
            min: 2,
            max: MAX_ENUMERATION_ORDER,
        });
    }
    Ok(LatinSquareIter::new(n))
}

/// Streams every flow decomposition set of the given order, in the
/// lexicographic order of the Latin-square form.
pub fn enumerate_decompositions(
    n: usize,
) -> Result<impl Iterator<Item = FlowDecompositionSet>, LatinError> {
    Ok(enumerate_latin_squares(n)?.map(|sq| FlowDecompositionSet::from_latin_square(&sq)))
}

/// Backtracking enumerator over the free cells (everything past the fixed
/// first row), trying symbols in increasing order.
#[derive(Debug)]
pub struct LatinSquareIter {
    n: usize,
    cells: Vec<usize>,
    row_used: Vec<u32>,
    col_used: Vec<u32>,
    pos: usize,
    /// After a backtrack, resume the cell at `pos` from `cells[pos] + 1`.
    resume: bool,
    done: bool,
}

impl LatinSquareIter {
    fn new(n: usize) -> Self {
        let mut cells = vec![0usize; n * n];
        let mut row_used = vec![0u32; n];
        let mut col_used = vec![0u32; n];
        for j in 0..n {
            cells[j] = j;
            col_used[j] = 1 << j;
        }
        row_used[0] = (1u32 << n) - 1;
        Self {
            n,
            cells,
            row_used,
            col_used,
            pos: n,
            resume: false,
            done: false,
        }
    }

    fn unplace(&mut self, pos: usize) {
        let bit = 1u32 << self.cells[pos];
        self.row_used[pos / self.n] &= !bit;
        self.col_used[pos % self.n] &= !bit;
    }
}

impl Iterator for LatinSquareIter {
    type Item = LatinSquare;

    fn next(&mut self) -> Option<LatinSquare> {
        if self.done {
            return None;
        }
        let n = self.n;
        let total = n * n;
        loop {
            if self.pos == total {
                let square = LatinSquare::from_cells_unchecked(n, self.cells.clone());
                self.pos -= 1;
                self.unplace(self.pos);
                self.resume = true;
                return Some(square);
            }
            let start = if self.resume { self.cells[self.pos] + 1 } else { 0 };
            self.resume = false;
            let (r, c) = (self.pos / n, self.pos % n);
            let free = !(self.row_used[r] | self.col_used[c]);
            let mut placed = false;
            for s in start..n {
                if free & (1 << s) != 0 {
                    self.cells[self.pos] = s;
                    self.row_used[r] |= 1 << s;
                    self.col_used[c] |= 1 << s;
                    self.pos += 1;
                    placed = true;
                    break;
                }
            }
            if !placed {
                if self.pos == n {
                    self.done = true;
                    return None;
                }
                self.pos -= 1;
                self.unplace(self.pos);
                self.resume = true;
            }
        }
    }
}

/// Reduced Latin squares (natural first row AND first column) by order.
const REDUCED_COUNTS: [(usize, u64); 6] = [
    (2, 1),
    (3, 1),
    (4, 4),
    (5, 56),
    (6, 9_408),
    (7, 16_942_080),
];

/// The number of flow decomposition sets of order n: (n−1)! times the number
/// of reduced Latin squares, since only the first row is pinned here.
pub fn count_decompositions(n: usize) -> Result<u64, LatinError> {
    let reduced = REDUCED_COUNTS
        .iter()
        .find(|(order, _)| *order == n)
        .map(|(_, c)| *c)
        .ok_or(LatinError::UnsupportedOrder {
            n,
            min: 2,
            max: MAX_COUNT_ORDER,
        })?;
    let factorial: u64 = (1..n as u64).product();
    Ok(factorial * reduced)
}
