//! Shared domain types: slot arithmetic with an explicit infinity, the
//! per-flow metadata table, crossbar matchings, and cells.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use thiserror::Error;

/// Errors from constructing or validating the shared domain types.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TypesError {
    #[error("matrix is not square: row {row} has {len} entries, expected {n}")]
    NotSquare { row: usize, len: usize, n: usize },
    #[error("matrix entry ({i},{j}) is {value}, expected 0 or 1")]
    NotBinary { i: usize, j: usize, value: u8 },
    #[error("switch size must be at least 2, got {0}")]
    SwitchTooSmall(usize),
    #[error("port index {port} out of range for a {n}-port switch")]
    PortOutOfRange { port: usize, n: usize },
    #[error("flow ({i},{j}): offset and period must both be finite or both infinite")]
    HalfAbsentFlow { i: usize, j: usize },
    #[error("flow ({i},{j}): period must be at least 1 slot")]
    ZeroPeriod { i: usize, j: usize },
    #[error("flow ({i},{j}) is already subscribed")]
    DuplicateFlow { i: usize, j: usize },
    #[error("flow ({i},{j}) is not subscribed")]
    AbsentFlow { i: usize, j: usize },
    #[error("input {0} already paired in this matching")]
    RowConflict(usize),
    #[error("output {0} already paired in this matching")]
    ColumnConflict(usize),
    #[error("not a permutation: {0:?}")]
    BadPermutation(Vec<usize>),
}

/// A slot count or slot index that may be infinite.
///
/// Infinity marks absent flows (their offset and period) and matchings that
/// are never scheduled (their T-vector entry). It stays out of slot
/// arithmetic — callers match on it explicitly — and it contributes zero
/// utilization. `Finite(a) < Finite(b)` iff `a < b`, and every finite value
/// sorts below `Inf`.
///
/// Serializes as a JSON number, with `null` standing for infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slots {
    Finite(u64),
    Inf,
}

impl Slots {
    pub fn is_finite(self) -> bool {
        matches!(self, Slots::Finite(_))
    }

    pub fn finite(self) -> Option<u64> {
        match self {
            Slots::Finite(v) => Some(v),
            Slots::Inf => None,
        }
    }
}

impl From<u64> for Slots {
    fn from(v: u64) -> Self {
        Slots::Finite(v)
    }
}

impl fmt::Display for Slots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slots::Finite(v) => write!(f, "{v}"),
            Slots::Inf => write!(f, "inf"),
        }
    }
}

impl Serialize for Slots {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Slots::Finite(v) => serializer.serialize_some(v),
            Slots::Inf => serializer.serialize_none(),
        }
    }
}

impl<'de> Deserialize<'de> for Slots {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Ok(Option::<u64>::deserialize(deserializer)?.map_or(Slots::Inf, Slots::Finite))
    }
}

/// A subscribed flow together with its finite parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowParams {
    pub input: usize,
    pub output: usize,
    pub offset: u64,
    pub period: u64,
}

/// The switch metadata table: offset and period for each of the n² potential
/// time-sensitive flows. Absent flows carry infinite offset and period.
///
/// Ports are 0-based throughout the library; the scenario layer translates
/// from the 1-based external form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrafficSpec {
    n: usize,
    offset: Vec<Slots>,
    period: Vec<Slots>,
}

impl TrafficSpec {
    /// A table with no subscribed flows.
    pub fn empty(n: usize) -> Result<Self, TypesError> {
        if n < 2 {
            return Err(TypesError::SwitchTooSmall(n));
        }
        Ok(Self {
            n,
            offset: vec![Slots::Inf; n * n],
            period: vec![Slots::Inf; n * n],
        })
    }

    /// Builds a table from full offset and period matrices, enforcing that
    /// each entry pair is either both finite (a subscribed flow) or both
    /// infinite (absent).
    pub fn from_matrices(offsets: &[Vec<Slots>], periods: &[Vec<Slots>]) -> Result<Self, TypesError> {
        let n = offsets.len();
        let mut spec = Self::empty(n)?;
        for (matrix, label_rows) in [(offsets, true), (periods, false)] {
            let rows = if label_rows { offsets.len() } else { periods.len() };
            if rows != n {
                return Err(TypesError::NotSquare { row: 0, len: rows, n });
            }
            for (i, row) in matrix.iter().enumerate() {
                if row.len() != n {
                    return Err(TypesError::NotSquare { row: i, len: row.len(), n });
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                match (offsets[i][j], periods[i][j]) {
                    (Slots::Inf, Slots::Inf) => {}
                    (Slots::Finite(o), Slots::Finite(p)) => spec.add_flow(i, j, o, p)?,
                    _ => return Err(TypesError::HalfAbsentFlow { i, j }),
                }
            }
        }
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    fn check_port(&self, p: usize) -> Result<(), TypesError> {
        if p < self.n {
            Ok(())
        } else {
            Err(TypesError::PortOutOfRange { port: p, n: self.n })
        }
    }

    /// Subscribes flow (i, j). Errors if the slot pair is already taken or
    /// the period is zero.
    pub fn add_flow(&mut self, i: usize, j: usize, offset: u64, period: u64) -> Result<(), TypesError> {
        self.check_port(i)?;
        self.check_port(j)?;
        if period == 0 {
            return Err(TypesError::ZeroPeriod { i, j });
        }
        let idx = self.idx(i, j);
        if self.period[idx].is_finite() {
            return Err(TypesError::DuplicateFlow { i, j });
        }
        self.offset[idx] = Slots::Finite(offset);
        self.period[idx] = Slots::Finite(period);
        Ok(())
    }

    /// Unsubscribes flow (i, j).
    pub fn remove_flow(&mut self, i: usize, j: usize) -> Result<(), TypesError> {
        self.check_port(i)?;
        self.check_port(j)?;
        let idx = self.idx(i, j);
        if !self.period[idx].is_finite() {
            return Err(TypesError::AbsentFlow { i, j });
        }
        self.offset[idx] = Slots::Inf;
        self.period[idx] = Slots::Inf;
        Ok(())
    }

    pub fn offset(&self, i: usize, j: usize) -> Slots {
        self.offset[self.idx(i, j)]
    }

    pub fn period(&self, i: usize, j: usize) -> Slots {
        self.period[self.idx(i, j)]
    }

    pub fn has_flow(&self, i: usize, j: usize) -> bool {
        self.period[self.idx(i, j)].is_finite()
    }

    pub fn flow_count(&self) -> usize {
        self.period.iter().filter(|p| p.is_finite()).count()
    }

    /// Iterates the subscribed flows in row-major order.
    pub fn flows(&self) -> impl Iterator<Item = FlowParams> + '_ {
        (0..self.n * self.n).filter_map(move |idx| {
            match (self.offset[idx], self.period[idx]) {
                (Slots::Finite(offset), Slots::Finite(period)) => Some(FlowParams {
                    input: idx / self.n,
                    output: idx % self.n,
                    offset,
                    period,
                }),
                _ => None,
            }
        })
    }
}

/// What a cell carries: a time-sensitive payload with a hard per-period
/// deadline, or best-effort traffic that waits indefinitely.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Ts,
    Be,
}

/// One fixed-size cell. A TS cell is lost if it has not crossed the fabric by
/// the end of `deadline_slot`; BE cells have no deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub input: usize,
    pub output: usize,
    pub arrival_slot: u64,
    pub deadline_slot: Slots,
    pub kind: CellKind,
    /// Per-source sequence number: the cell index s for TS, the VOQ arrival
    /// index for BE. Used to observe FIFO order.
    pub seq: u64,
}

/// Arrival slot and last schedulable slot (inclusive) of cell `s` of flow
/// (i, j): the cell arrives at `offset + s·T` and must depart by
/// `offset + (s+1)·T − 1`, after which the next cell of the flow takes over.
pub fn cell_lifetime(spec: &TrafficSpec, i: usize, j: usize, s: u64) -> Result<(u64, u64), TypesError> {
    match (spec.offset(i, j), spec.period(i, j)) {
        (Slots::Finite(offset), Slots::Finite(period)) => {
            Ok((offset + s * period, offset + (s + 1) * period - 1))
        }
        _ => Err(TypesError::AbsentFlow { i, j }),
    }
}

fn validate_square_binary(m: &[Vec<u8>]) -> Result<usize, TypesError> {
    let n = m.len();
    for (i, row) in m.iter().enumerate() {
        if row.len() != n {
            return Err(TypesError::NotSquare { row: i, len: row.len(), n });
        }
        for (j, &v) in row.iter().enumerate() {
            if v > 1 {
                return Err(TypesError::NotBinary { i, j, value: v });
            }
        }
    }
    Ok(n)
}

/// True iff the binary square matrix has at most one 1 per row and per
/// column — the crossbar constraint.
pub fn is_matching(m: &[Vec<u8>]) -> Result<bool, TypesError> {
    let n = validate_square_binary(m)?;
    let row_ok = m.iter().all(|row| row.iter().map(|&v| v as usize).sum::<usize>() <= 1);
    let col_ok = (0..n).all(|j| m.iter().map(|row| row[j] as usize).sum::<usize>() <= 1);
    Ok(row_ok && col_ok)
}

/// True iff the binary square matrix has exactly one 1 per row and per
/// column, i.e. it is a permutation matrix.
pub fn is_perfect_matching(m: &[Vec<u8>]) -> Result<bool, TypesError> {
    let n = validate_square_binary(m)?;
    let row_ok = m.iter().all(|row| row.iter().map(|&v| v as usize).sum::<usize>() == 1);
    let col_ok = (0..n).all(|j| m.iter().map(|row| row[j] as usize).sum::<usize>() == 1);
    Ok(row_ok && col_ok)
}

/// A partial crossbar selection: each input connects to at most one output
/// and each output to at most one input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    n: usize,
    out_for_in: Vec<Option<usize>>,
    in_for_out: Vec<Option<usize>>,
}

impl Matching {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            out_for_in: vec![None; n],
            in_for_out: vec![None; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of connected pairs.
    pub fn len(&self) -> usize {
        self.out_for_in.iter().filter(|o| o.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.out_for_in.iter().all(|o| o.is_none())
    }

    /// Connects input i to output j; both must still be free.
    pub fn add_pair(&mut self, i: usize, j: usize) -> Result<(), TypesError> {
        if i >= self.n {
            return Err(TypesError::PortOutOfRange { port: i, n: self.n });
        }
        if j >= self.n {
            return Err(TypesError::PortOutOfRange { port: j, n: self.n });
        }
        if self.out_for_in[i].is_some() {
            return Err(TypesError::RowConflict(i));
        }
        if self.in_for_out[j].is_some() {
            return Err(TypesError::ColumnConflict(j));
        }
        self.out_for_in[i] = Some(j);
        self.in_for_out[j] = Some(i);
        Ok(())
    }

    pub fn output_of(&self, i: usize) -> Option<usize> {
        self.out_for_in[i]
    }

    pub fn input_of(&self, j: usize) -> Option<usize> {
        self.in_for_out[j]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.out_for_in[i] == Some(j)
    }

    /// Connected pairs in input order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_for_in
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.map(|j| (i, j)))
    }

    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        let mut m = vec![vec![0u8; self.n]; self.n];
        for (i, j) in self.pairs() {
            m[i][j] = 1;
        }
        m
    }
}

/// A full crossbar configuration: a permutation pairing every input with a
/// distinct output.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PerfectMatching {
    out_for_in: Vec<usize>,
}

impl PerfectMatching {
    /// Builds from `out_for_in`, which must be a permutation of 0..len.
    pub fn from_permutation(out_for_in: Vec<usize>) -> Result<Self, TypesError> {
        let n = out_for_in.len();
        let mut seen = vec![false; n];
        for &j in &out_for_in {
            if j >= n || seen[j] {
                return Err(TypesError::BadPermutation(out_for_in));
            }
            seen[j] = true;
        }
        Ok(Self { out_for_in })
    }

    pub fn n(&self) -> usize {
        self.out_for_in.len()
    }

    pub fn output_of(&self, i: usize) -> usize {
        self.out_for_in[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.out_for_in[i] == j
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out_for_in.iter().copied().enumerate()
    }

    pub fn to_matrix(&self) -> Vec<Vec<u8>> {
        let n = self.n();
        let mut m = vec![vec![0u8; n]; n];
        for (i, j) in self.pairs() {
            m[i][j] = 1;
        }
        m
    }

    pub fn to_matching(&self) -> Matching {
        let mut m = Matching::empty(self.n());
        for (i, j) in self.pairs() {
            m.add_pair(i, j).expect("permutation pairs cannot conflict");
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec_2x2_single(offset: u64, period: u64) -> TrafficSpec {
        let mut spec = TrafficSpec::empty(2).unwrap();
        spec.add_flow(0, 0, offset, period).unwrap();
        spec
    }

    #[test]
    fn slots_order_puts_infinity_last() {
        assert!(Slots::Finite(0) < Slots::Finite(1));
        assert!(Slots::Finite(u64::MAX) < Slots::Inf);
        assert_eq!([Slots::Inf, Slots::Finite(3)].iter().min(), Some(&Slots::Finite(3)));
    }

    #[test]
    fn slots_serde_uses_null_for_infinity() {
        assert_eq!(serde_json::to_string(&Slots::Finite(7)).unwrap(), "7");
        assert_eq!(serde_json::to_string(&Slots::Inf).unwrap(), "null");
        assert_eq!(serde_json::from_str::<Slots>("null").unwrap(), Slots::Inf);
        assert_eq!(serde_json::from_str::<Slots>("42").unwrap(), Slots::Finite(42));
    }

    #[test]
    fn lifetime_of_first_cell() {
        // Zero offset, period 2: the first cell lives exactly through slots 0..=1.
        let spec = spec_2x2_single(0, 2);
        assert_eq!(cell_lifetime(&spec, 0, 0, 0).unwrap(), (0, 1));

        // Offset 8, period 4: first cell lives through slots 8..=11.
        let spec = spec_2x2_single(8, 4);
        assert_eq!(cell_lifetime(&spec, 0, 0, 0).unwrap(), (8, 11));
    }

    #[test]
    fn lifetime_of_absent_flow_is_an_error() {
        let spec = TrafficSpec::empty(2).unwrap();
        assert_eq!(
            cell_lifetime(&spec, 1, 1, 0),
            Err(TypesError::AbsentFlow { i: 1, j: 1 })
        );
    }

    #[test]
    fn traffic_spec_rejects_bad_flows() {
        let mut spec = TrafficSpec::empty(3).unwrap();
        assert_eq!(spec.add_flow(0, 0, 1, 0), Err(TypesError::ZeroPeriod { i: 0, j: 0 }));
        spec.add_flow(0, 0, 1, 5).unwrap();
        assert_eq!(spec.add_flow(0, 0, 2, 6), Err(TypesError::DuplicateFlow { i: 0, j: 0 }));
        assert_eq!(
            spec.add_flow(3, 0, 0, 1),
            Err(TypesError::PortOutOfRange { port: 3, n: 3 })
        );
        assert_eq!(TrafficSpec::empty(1).unwrap_err(), TypesError::SwitchTooSmall(1));
    }

    #[test]
    fn from_matrices_enforces_both_or_neither() {
        let offsets = vec![
            vec![Slots::Finite(0), Slots::Inf],
            vec![Slots::Inf, Slots::Inf],
        ];
        let periods = vec![
            vec![Slots::Inf, Slots::Inf],
            vec![Slots::Inf, Slots::Inf],
        ];
        assert_eq!(
            TrafficSpec::from_matrices(&offsets, &periods),
            Err(TypesError::HalfAbsentFlow { i: 0, j: 0 })
        );
    }

    #[test]
    fn matching_predicates() {
        let identity = vec![vec![1, 0], vec![0, 1]];
        let empty = vec![vec![0, 0], vec![0, 0]];
        let row_clash = vec![vec![1, 1], vec![0, 0]];
        let col_clash = vec![vec![1, 0], vec![1, 0]];
        assert!(is_matching(&identity).unwrap());
        assert!(is_matching(&empty).unwrap());
        assert!(!is_matching(&row_clash).unwrap());
        assert!(!is_matching(&col_clash).unwrap());
        assert!(is_perfect_matching(&identity).unwrap());
        assert!(!is_perfect_matching(&empty).unwrap());

        let ragged = vec![vec![0, 0], vec![0]];
        assert_eq!(
            is_matching(&ragged),
            Err(TypesError::NotSquare { row: 1, len: 1, n: 2 })
        );
        let nonbinary = vec![vec![2, 0], vec![0, 0]];
        assert_eq!(
            is_matching(&nonbinary),
            Err(TypesError::NotBinary { i: 0, j: 0, value: 2 })
        );
    }

    #[test]
    fn matching_guards_port_reuse() {
        let mut m = Matching::empty(3);
        m.add_pair(0, 1).unwrap();
        assert_eq!(m.add_pair(0, 2), Err(TypesError::RowConflict(0)));
        assert_eq!(m.add_pair(2, 1), Err(TypesError::ColumnConflict(1)));
        m.add_pair(2, 0).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.pairs().collect::<Vec<_>>(), vec![(0, 1), (2, 0)]);
        assert!(is_matching(&m.to_matrix()).unwrap());
    }

    #[test]
    fn perfect_matching_requires_a_permutation() {
        assert!(PerfectMatching::from_permutation(vec![1, 2, 0]).is_ok());
        assert!(PerfectMatching::from_permutation(vec![0, 0, 1]).is_err());
        assert!(PerfectMatching::from_permutation(vec![0, 3, 1]).is_err());
    }

    proptest! {
        // Consecutive cells of a flow tile the slot axis: cell s+1 arrives
        // exactly one slot after cell s's last schedulable slot.
        #[test]
        fn lifetimes_tile_the_slot_axis(offset in 0u64..64, period in 1u64..32, s in 0u64..256) {
            let spec = spec_2x2_single(offset, period);
            let (arr, dead) = cell_lifetime(&spec, 0, 0, s).unwrap();
            let (arr_next, _) = cell_lifetime(&spec, 0, 0, s + 1).unwrap();
            prop_assert_eq!(dead - arr + 1, period);
            prop_assert_eq!(arr_next, dead + 1);
        }

        // Every permutation passes both matrix predicates.
        #[test]
        fn permutation_matrices_pass_predicates(n in 2usize..7, seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let pm = PerfectMatching::from_permutation(perm).unwrap();
            prop_assert!(is_perfect_matching(&pm.to_matrix()).unwrap());
            prop_assert!(is_matching(&pm.to_matrix()).unwrap());
            prop_assert!(is_matching(&pm.to_matching().to_matrix()).unwrap());
        }
    }
}
