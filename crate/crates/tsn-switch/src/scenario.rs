//! The JSON scenario format consumed by the CLI and the report format it
//! emits. Ports are 1-based in these external forms and 0-based everywhere
//! inside the library.

use crate::latin::{LatinSquare, MAX_ENUMERATION_ORDER};
use crate::types::Slots;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::HashSet;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("n must be at least 2, got {0}")]
    SwitchTooSmall(usize),
    #[error("ts_flows[{index}]: {port} port {value} out of range 1..={n}")]
    PortOutOfRange {
        index: usize,
        port: &'static str,
        value: usize,
        n: usize,
    },
    #[error("ts_flows[{index}]: flow ({input},{output}) appears more than once")]
    DuplicateFlow { index: usize, input: usize, output: usize },
    #[error("ts_flows[{index}]: period must be at least 1 slot")]
    ZeroPeriod { index: usize },
    #[error("be_traffic must set exactly one of `explicit` or `bernoulli`")]
    AmbiguousBeTraffic,
    #[error("be_traffic.explicit[{index}]: {port} port {value} out of range 1..={n}")]
    BePortOutOfRange {
        index: usize,
        port: &'static str,
        value: usize,
        n: usize,
    },
    #[error("be_traffic.bernoulli.rate must lie in [0, 1], got {0}")]
    BadBernoulliRate(f64),
    #[error("voq_capacity must be at least 1")]
    ZeroVoqCapacity,
    #[error("islip_iterations must be at least 1")]
    ZeroIslipIterations,
    #[error("decomposition_override: {0}")]
    BadDecomposition(#[from] crate::latin::LatinError),
    #[error("tvector_override must have {n} entries, got {got}")]
    BadTvectorLength { n: usize, got: usize },
    #[error("tvector_override[{0}] must be at least 1 slot or null")]
    BadTvectorEntry(usize),
    #[error("mode FORCE_MEDF/AUTO uses the SC2 search, which supports up to {max} ports; \
             pass a decomposition_override or use FORCE_MTDMA for n = {n}")]
    TooLargeForSearch { n: usize, max: usize },
}

/// One TS flow subscription in external (1-based port) form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub input: usize,
    pub output: usize,
    pub offset: u64,
    pub period: u64,
}

/// One explicitly injected BE cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeInjection {
    pub slot: u64,
    pub input: usize,
    pub output: usize,
}

/// Independent per-VOQ-per-slot coin flips, reproducible via the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BernoulliBe {
    pub rate: f64,
    pub seed: u64,
}

/// BE workload: exactly one of `explicit` (a cell list) or `bernoulli`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct BeTraffic {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Vec<BeInjection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bernoulli: Option<BernoulliBe>,
}

/// Either a fixed slot count or `"auto"`: longest offset plus ten times the
/// least common multiple of the subscribed periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SimSlots {
    #[default]
    Auto,
    Fixed(u64),
}

impl Serialize for SimSlots {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SimSlots::Auto => serializer.serialize_str("auto"),
            SimSlots::Fixed(v) => serializer.serialize_u64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for SimSlots {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SimSlotsVisitor;
        impl Visitor<'_> for SimSlotsVisitor {
            type Value = SimSlots;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a slot count or the string \"auto\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<SimSlots, E> {
                Ok(SimSlots::Fixed(v))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<SimSlots, E> {
                if v == "auto" {
                    Ok(SimSlots::Auto)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        deserializer.deserialize_any(SimSlotsVisitor)
    }
}

/// Scheduler selection. AUTO picks M-TDMA when SC1 holds and otherwise
/// M-EDF under an SC2 certificate; the FORCE variants pin the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModeChoice {
    #[default]
    Auto,
    ForceMtdma,
    ForceMedf,
}

fn default_voq_capacity() -> usize {
    16
}

fn default_islip_iterations() -> usize {
    2
}

/// A full simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n: usize,
    #[serde(default)]
    pub ts_flows: Vec<FlowSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub be_traffic: Option<BeTraffic>,
    #[serde(default = "default_voq_capacity")]
    pub voq_capacity: usize,
    #[serde(default)]
    pub sim_slots: SimSlots,
    #[serde(default)]
    pub mode: ModeChoice,
    /// Latin-square rows (1-based symbols, natural first row) pinning the
    /// decomposition set instead of the cyclic default / search result.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition_override: Option<Vec<Vec<usize>>>,
    /// Per-matching scheduling periods (null = never scheduled) pinning the
    /// M-EDF T-vector; requires `decomposition_override`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tvector_override: Option<Vec<Slots>>,
    #[serde(default = "default_islip_iterations")]
    pub islip_iterations: usize,
    #[serde(default)]
    pub emit_trace: bool,
}

impl Scenario {
    /// Structural validation beyond what serde enforces.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n < 2 {
            return Err(ScenarioError::SwitchTooSmall(self.n));
        }
        let n = self.n;
        let mut seen: HashSet<(usize, usize)> = HashSet::new();
        for (index, f) in self.ts_flows.iter().enumerate() {
            for (port, value) in [("input", f.input), ("output", f.output)] {
                if value == 0 || value > n {
                    return Err(ScenarioError::PortOutOfRange { index, port, value, n });
                }
            }
            if f.period == 0 {
                return Err(ScenarioError::ZeroPeriod { index });
            }
            if !seen.insert((f.input, f.output)) {
                return Err(ScenarioError::DuplicateFlow {
                    index,
                    input: f.input,
                    output: f.output,
                });
            }
        }
        if let Some(be) = &self.be_traffic {
            match (&be.explicit, &be.bernoulli) {
                (Some(_), Some(_)) | (None, None) => return Err(ScenarioError::AmbiguousBeTraffic),
                (Some(injections), None) => {
                    for (index, inj) in injections.iter().enumerate() {
                        for (port, value) in [("input", inj.input), ("output", inj.output)] {
                            if value == 0 || value > n {
                                return Err(ScenarioError::BePortOutOfRange { index, port, value, n });
                            }
                        }
                    }
                }
                (None, Some(b)) => {
                    if !(0.0..=1.0).contains(&b.rate) || b.rate.is_nan() {
                        return Err(ScenarioError::BadBernoulliRate(b.rate));
                    }
                }
            }
        }
        if self.voq_capacity == 0 {
            return Err(ScenarioError::ZeroVoqCapacity);
        }
        if self.islip_iterations == 0 {
            return Err(ScenarioError::ZeroIslipIterations);
        }
        if let Some(rows) = &self.decomposition_override {
            if rows.len() != n {
                return Err(ScenarioError::BadDecomposition(
                    crate::latin::LatinError::BadShape { n },
                ));
            }
            LatinSquare::from_one_based_rows(rows)?;
        }
        if let Some(tvector) = &self.tvector_override {
            if tvector.len() != n {
                return Err(ScenarioError::BadTvectorLength { n, got: tvector.len() });
            }
            for (k, p) in tvector.iter().enumerate() {
                if *p == Slots::Finite(0) {
                    return Err(ScenarioError::BadTvectorEntry(k));
                }
            }
        }
        // Without a pinned decomposition, M-EDF needs the brute-force search,
        // which only scales to small switches. Flag that up front.
        let needs_search = self.decomposition_override.is_none()
            && matches!(self.mode, ModeChoice::Auto | ModeChoice::ForceMedf)
            && self.ts_flows.iter().any(|f| f.period < n as u64);
        if needs_search && n > MAX_ENUMERATION_ORDER {
            return Err(ScenarioError::TooLargeForSearch { n, max: MAX_ENUMERATION_ORDER });
        }
        Ok(())
    }
}

/// Parses and validates a scenario from JSON text. Parse errors carry serde's
/// line/column context; validation errors name the offending field.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text)?;
    scenario.validate()?;
    Ok(scenario)
}

/// The SC2 certificate in external form: the decomposition as Latin-square
/// rows plus the matching periods (null = never scheduled).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub latin_rows: Vec<Vec<usize>>,
    pub t_vector: Vec<Slots>,
}

/// Per-flow simulation outcome (1-based ports, scenario order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerFlowReport {
    pub input: usize,
    pub output: usize,
    pub arrivals: u64,
    pub delivered: u64,
    pub expired: u64,
    pub live_at_end: u64,
    pub max_delay: Option<u64>,
    pub mean_delay: f64,
}

/// Switch-wide BE outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeReport {
    pub arrivals: u64,
    pub delivered: u64,
    pub drops: u64,
    pub backlog_at_end: u64,
    pub mean_backlog: f64,
}

/// The JSON report `simulate` prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n: usize,
    pub mode: String,
    pub sim_slots: u64,
    pub admitted: Vec<FlowSpec>,
    pub rejected: Vec<FlowSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateReport>,
    pub per_flow: Vec<PerFlowReport>,
    pub be: BeReport,
}

/// Header of the per-slot CSV trace.
pub const TRACE_CSV_HEADER: &str = "slot,mode,step1,ts_pairs,be_pairs,be_transfers,expired";

fn fmt_pairs(pairs: impl Iterator<Item = (usize, usize)>) -> String {
    pairs
        .map(|(i, j)| format!("{}:{}", i + 1, j + 1))
        .collect::<Vec<_>>()
        .join(" ")
}

/// One CSV line for a trace row; pair lists are space-separated `input:output`
/// entries with 1-based ports, and an idle step 1 prints NONE.
pub fn trace_row_csv(row: &crate::switchsim::TraceRow) -> String {
    let step1 = match row.step1 {
        Some(k) => format!("M{}", k + 1),
        None => "NONE".to_string(),
    };
    format!(
        "{},{},{},{},{},{},{}",
        row.slot,
        row.mode,
        step1,
        fmt_pairs(row.ts_pairs.iter().copied()),
        fmt_pairs(row.be_pairs.iter().copied()),
        fmt_pairs(row.be_transfers.iter().map(|&(i, j, _)| (i, j))),
        fmt_pairs(row.expired.iter().copied()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(n: usize) -> String {
        format!(r#"{{"n": {n}, "ts_flows": []}}"#)
    }

    #[test]
    fn defaults_apply() {
        let s = parse_scenario(&minimal(4)).unwrap();
        assert_eq!(s.voq_capacity, 16);
        assert_eq!(s.islip_iterations, 2);
        assert_eq!(s.sim_slots, SimSlots::Auto);
        assert_eq!(s.mode, ModeChoice::Auto);
        assert!(s.be_traffic.is_none());
        assert!(!s.emit_trace);
    }

    #[test]
    fn sim_slots_accepts_auto_or_a_number() {
        let s = parse_scenario(r#"{"n": 2, "sim_slots": "auto"}"#).unwrap();
        assert_eq!(s.sim_slots, SimSlots::Auto);
        let s = parse_scenario(r#"{"n": 2, "sim_slots": 100}"#).unwrap();
        assert_eq!(s.sim_slots, SimSlots::Fixed(100));
        assert!(parse_scenario(r#"{"n": 2, "sim_slots": "forever"}"#).is_err());
    }

    #[test]
    fn mode_strings_are_screaming_snake() {
        let s = parse_scenario(r#"{"n": 2, "mode": "FORCE_MTDMA"}"#).unwrap();
        assert_eq!(s.mode, ModeChoice::ForceMtdma);
        let s = parse_scenario(r#"{"n": 2, "mode": "FORCE_MEDF"}"#).unwrap();
        assert_eq!(s.mode, ModeChoice::ForceMedf);
        assert!(parse_scenario(r#"{"n": 2, "mode": "MTDMA"}"#).is_err());
    }

    #[test]
    fn validation_rejects_bad_flows() {
        let text = r#"{"n": 2, "ts_flows": [{"input": 3, "output": 1, "offset": 0, "period": 2}]}"#;
        assert!(matches!(
            parse_scenario(text),
            Err(ScenarioError::PortOutOfRange { index: 0, port: "input", value: 3, n: 2 })
        ));

        let text = r#"{"n": 2, "ts_flows": [
            {"input": 1, "output": 1, "offset": 0, "period": 2},
            {"input": 1, "output": 1, "offset": 1, "period": 3}
        ]}"#;
        assert!(matches!(
            parse_scenario(text),
            Err(ScenarioError::DuplicateFlow { index: 1, input: 1, output: 1 })
        ));

        let text = r#"{"n": 2, "ts_flows": [{"input": 1, "output": 1, "offset": 0, "period": 0}]}"#;
        assert!(matches!(parse_scenario(text), Err(ScenarioError::ZeroPeriod { index: 0 })));
    }

    #[test]
    fn validation_rejects_bad_be_traffic() {
        let text = r#"{"n": 2, "be_traffic": {}}"#;
        assert!(matches!(parse_scenario(text), Err(ScenarioError::AmbiguousBeTraffic)));

        let text = r#"{"n": 2, "be_traffic": {"bernoulli": {"rate": 1.5, "seed": 1}}}"#;
        assert!(matches!(parse_scenario(text), Err(ScenarioError::BadBernoulliRate(_))));

        let text = r#"{"n": 2, "be_traffic": {"explicit": [{"slot": 0, "input": 0, "output": 1}]}}"#;
        assert!(matches!(
            parse_scenario(text),
            Err(ScenarioError::BePortOutOfRange { index: 0, port: "input", value: 0, n: 2 })
        ));
    }

    #[test]
    fn validation_rejects_bad_overrides() {
        let text = r#"{"n": 2, "decomposition_override": [[1, 2], [1, 2]]}"#;
        assert!(matches!(parse_scenario(text), Err(ScenarioError::BadDecomposition(_))));

        let text = r#"{"n": 2, "tvector_override": [2]}"#;
        assert!(matches!(
            parse_scenario(text),
            Err(ScenarioError::BadTvectorLength { n: 2, got: 1 })
        ));

        let text = r#"{"n": 2, "tvector_override": [0, null]}"#;
        assert!(matches!(parse_scenario(text), Err(ScenarioError::BadTvectorEntry(0))));

        let text = r#"{"n": 2, "tvector_override": [2, null]}"#;
        assert!(parse_scenario(text).is_ok());
    }

    #[test]
    fn unknown_fields_are_parse_errors() {
        assert!(matches!(
            parse_scenario(r#"{"n": 2, "bogus": 1}"#),
            Err(ScenarioError::Json(_))
        ));
    }

    #[test]
    fn large_switches_need_mtdma_or_a_pinned_decomposition() {
        // Period below n forces the SC2 search in AUTO: rejected for n = 8.
        let text = r#"{"n": 8, "ts_flows": [{"input": 1, "output": 1, "offset": 0, "period": 4}]}"#;
        assert!(matches!(
            parse_scenario(text),
            Err(ScenarioError::TooLargeForSearch { n: 8, max: 6 })
        ));
        // The same flows under FORCE_MTDMA are fine (losses are honest there).
        let text = r#"{"n": 8, "mode": "FORCE_MTDMA",
                       "ts_flows": [{"input": 1, "output": 1, "offset": 0, "period": 4}]}"#;
        assert!(parse_scenario(text).is_ok());
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let text = r#"{
            "n": 4,
            "ts_flows": [{"input": 1, "output": 2, "offset": 0, "period": 6}],
            "be_traffic": {"bernoulli": {"rate": 0.1, "seed": 7}},
            "sim_slots": 120,
            "mode": "FORCE_MTDMA",
            "decomposition_override": [[1,2,3,4],[4,1,2,3],[3,4,1,2],[2,3,4,1]],
            "emit_trace": true
        }"#;
        let s = parse_scenario(text).unwrap();
        let again = parse_scenario(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn trace_rows_render_compactly() {
        let row = crate::switchsim::TraceRow {
            slot: 4,
            mode: "MEDF",
            step1: None,
            ts_pairs: vec![],
            be_pairs: vec![(0, 0), (1, 1)],
            be_transfers: vec![(0, 0, 0)],
            expired: vec![],
        };
        assert_eq!(trace_row_csv(&row), "4,MEDF,NONE,,1:1 2:2,1:1,");
        let row = crate::switchsim::TraceRow {
            slot: 0,
            mode: "MTDMA",
            step1: Some(0),
            ts_pairs: vec![(1, 1)],
            be_pairs: vec![],
            be_transfers: vec![],
            expired: vec![(3, 0)],
        };
        assert_eq!(trace_row_csv(&row), "0,MTDMA,M1,2:2,,,4:1");
    }
}
