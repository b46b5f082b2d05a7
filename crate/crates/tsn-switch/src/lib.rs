//! Slot-level model of an N×N input-queued switch that carries hard-deadline
//! time-sensitive (TS) flows next to best-effort (BE) traffic.
//!
//! Time is divided into fixed slots and the crossbar applies one matching per
//! slot. TS flow (i, j) delivers one cell every T_{i,j} slots starting at its
//! offset, and each cell must cross the fabric before the flow's next cell
//! arrives — zero buffering slack beyond one period. The library provides:
//!
//! - [`types`]: slot arithmetic, the per-flow metadata table, matchings, cells;
//! - [`latin`]: flow decomposition sets, their Latin-square form, enumeration
//!   and counting;
//! - [`edf`]: the virtual single-processor task system whose EDF service
//!   order drives M-EDF;
//! - [`admission`]: the SC1 and SC2 admission conditions, the brute-force
//!   certificate search, and the arbiter decision;
//! - [`scheduler`]: per-slot matching selection (M-TDMA, M-EDF), live-cell
//!   masking, and iSLIP with port padding for BE traffic;
//! - [`switchsim`]: the full slot loop with VOQs, crossbar transfer, delay
//!   and loss accounting, plus a closed-form M-TDMA transmission oracle;
//! - [`scenario`]: the JSON scenario/report formats used by the CLI.

pub mod admission;
pub mod edf;
pub mod latin;
pub mod scenario;
pub mod scheduler;
pub mod switchsim;
pub mod types;

pub use admission::{arbiter_admit, check_sc1, check_sc2_certificate, search_sc2, AdmissionDecision, Sc2Certificate};
pub use edf::{edf_trace, verify_no_deadline_miss, EdfTrace, TVector};
pub use latin::{
    count_decompositions, cyclic_decomposition, decomposition_to_latin, enumerate_decompositions,
    enumerate_latin_squares, latin_to_decomposition, FlowDecompositionSet, LatinSquare,
};
pub use scenario::{parse_scenario, Scenario, SimulationReport};
pub use scheduler::{islip_select, mask_by_ts_matrix, medf_matching, mtdma_matching, IslipState, SchedulerMode};
pub use switchsim::{oracle_schedule_mtdma, run_scenario, MetricsAccumulator, SwitchState, TraceRow};
pub use types::{
    cell_lifetime, is_matching, is_perfect_matching, Cell, CellKind, FlowParams, Matching,
    PerfectMatching, Slots, TrafficSpec,
};
