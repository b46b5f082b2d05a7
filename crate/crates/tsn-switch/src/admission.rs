//! Admission control for TS flows.
//!
//! Two sufficient conditions guarantee zero loss. SC1: every subscribed flow
//! has period at least N, which lets a plain time-division rotation of any
//! decomposition set (M-TDMA) meet every deadline. SC2: some decomposition
//! set and period vector exist under which every flow either matches its
//! matching's period exactly with zero offset or tolerates two full matching
//! periods minus one, and the matching periods keep the virtual processor's
//! utilization at most 1 (M-EDF then meets every deadline). SC2 certificates
//! are found by brute force over all decomposition sets, which is practical
//! for small switches.

use crate::edf::{utilization_of, EdfError, TVector};
use crate::latin::{enumerate_decompositions, FlowDecompositionSet, LatinError, MAX_ENUMERATION_ORDER};
use crate::types::{PerfectMatching, Slots, TrafficSpec, TypesError};
use num_rational::BigRational;
use num_traits::One;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AdmissionError {
    #[error("certificate is dimensioned for {cert_n} ports, the table has {spec_n}")]
    DimensionMismatch { cert_n: usize, spec_n: usize },
    #[error("SC2 search supports up to {max} ports, got {n}")]
    UnsupportedSize { n: usize, max: usize },
    #[error(transparent)]
    Types(#[from] TypesError),
    #[error(transparent)]
    Latin(#[from] LatinError),
    #[error(transparent)]
    Edf(#[from] EdfError),
}

/// An SC2 witness: a decomposition set plus one scheduling period per
/// matching, with utilization at most 1 by construction of [`TVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct Sc2Certificate {
    decomposition: FlowDecompositionSet,
    tvector: TVector,
}

impl Sc2Certificate {
    pub fn new(decomposition: FlowDecompositionSet, tvector: TVector) -> Result<Self, AdmissionError> {
        if decomposition.n() != tvector.len() {
            return Err(AdmissionError::DimensionMismatch {
                cert_n: tvector.len(),
                spec_n: decomposition.n(),
            });
        }
        Ok(Self { decomposition, tvector })
    }

    pub fn n(&self) -> usize {
        self.decomposition.n()
    }

    pub fn decomposition(&self) -> &FlowDecompositionSet {
        &self.decomposition
    }

    pub fn tvector(&self) -> &TVector {
        &self.tvector
    }
}

/// SC1: every subscribed flow has period at least N. An empty table passes
/// vacuously.
pub fn check_sc1(spec: &TrafficSpec) -> bool {
    let n = spec.n() as u64;
    spec.flows().all(|f| f.period >= n)
}

/// Whether one flow is compatible with a matching scheduled every
/// `matching_period` slots: either the flow is period-aligned (same period,
/// zero offset, so every service slot of the matching falls inside every cell
/// window), or its period spans two matching periods minus one, which is long
/// enough to contain a full service window at any alignment. A matching that
/// is never scheduled (infinite period) covers no flow.
fn flow_covered(period: u64, offset: u64, matching_period: Slots) -> bool {
    match matching_period {
        Slots::Finite(t_k) => (period == t_k && offset == 0) || period >= 2 * t_k - 1,
        Slots::Inf => false,
    }
}

/// SC2 against a concrete certificate: every subscribed flow must be covered
/// by its matching's scheduling period. Utilization is at most 1 by the
/// certificate's construction.
pub fn check_sc2_certificate(spec: &TrafficSpec, cert: &Sc2Certificate) -> Result<bool, AdmissionError> {
    if cert.n() != spec.n() {
        return Err(AdmissionError::DimensionMismatch {
            cert_n: cert.n(),
            spec_n: spec.n(),
        });
    }
    Ok(spec.flows().all(|f| {
        let k = cert.decomposition().matching_index_of(f.input, f.output);
        flow_covered(f.period, f.offset, cert.tvector().period(k))
    }))
}

/// The scheduling period the brute-force search assigns to one matching.
///
/// Candidates: t₁, the smallest period among the matching's zero-offset
/// flows (usable only when every flow in the matching is covered at t₁), and
/// the fallback t₂ = min ⌈T/2⌉ over the matching's flows, which covers
/// every flow unconditionally since T ≥ 2⌈T/2⌉ − 1. A matching with no
/// subscribed flows is never scheduled: infinite period.
pub fn candidate_period(spec: &TrafficSpec, matching: &PerfectMatching) -> Slots {
    let flows: Vec<(u64, u64)> = matching
        .pairs()
        .filter_map(|(i, j)| match (spec.period(i, j), spec.offset(i, j)) {
            (Slots::Finite(t), Slots::Finite(o)) => Some((t, o)),
            _ => None,
        })
        .collect();
    if flows.is_empty() {
        return Slots::Inf;
    }
    let t1 = flows.iter().filter(|&&(_, o)| o == 0).map(|&(t, _)| t).min();
    let t2 = flows.iter().map(|&(t, _)| t.div_ceil(2)).min().expect("nonempty");
    match t1 {
        Some(t1) if flows.iter().all(|&(t, o)| flow_covered(t, o, Slots::Finite(t1))) => {
            Slots::Finite(t1)
        }
        _ => Slots::Finite(t2),
    }
}

/// Brute-force SC2 search: walk every decomposition set in canonical
/// (Latin-square lexicographic) order, assign each matching its candidate
/// period, and accept the first assignment whose total utilization stays at
/// most 1. Returns `None` when no decomposition set works.
pub fn search_sc2(spec: &TrafficSpec) -> Result<Option<Sc2Certificate>, AdmissionError> {
    let n = spec.n();
    if n > MAX_ENUMERATION_ORDER {
        return Err(AdmissionError::UnsupportedSize { n, max: MAX_ENUMERATION_ORDER });
    }
    for decomposition in enumerate_decompositions(n)? {
        let periods: Vec<Slots> = decomposition
            .matchings()
            .iter()
            .map(|m| candidate_period(spec, m))
            .collect();
        if utilization_of(&periods) <= BigRational::one() {
            let cert = Sc2Certificate::new(decomposition, TVector::new(periods)?)?;
            assert!(
                check_sc2_certificate(spec, &cert)?,
                "search produced a certificate that fails its own check"
            );
            return Ok(Some(cert));
        }
    }
    Ok(None)
}

/// Outcome of one arbiter step.
#[derive(Debug, Clone, PartialEq)]
pub enum AdmissionDecision {
    /// Admitted: the extended table satisfies SC1.
    AdmitSc1,
    /// Admitted: the extended table has an SC2 certificate (attached).
    AdmitSc2(Box<Sc2Certificate>),
    /// Rejected: the table is left unchanged.
    Reject,
}

/// The arbiter step for a newly requested flow: tentatively extend the table,
/// admit if the extension satisfies SC1 or has an SC2 certificate, otherwise
/// reject and leave the table untouched. A duplicate subscription is an
/// error, not a rejection.
pub fn arbiter_admit(
    table: &mut TrafficSpec,
    input: usize,
    output: usize,
    offset: u64,
    period: u64,
) -> Result<AdmissionDecision, AdmissionError> {
    let mut extended = table.clone();
    extended.add_flow(input, output, offset, period)?;
    if check_sc1(&extended) {
        *table = extended;
        return Ok(AdmissionDecision::AdmitSc1);
    }
    match search_sc2(&extended)? {
        Some(cert) => {
            *table = extended;
            Ok(AdmissionDecision::AdmitSc2(Box::new(cert)))
        }
        None => Ok(AdmissionDecision::Reject),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latin::cyclic_decomposition;

    /// Offsets and periods of the 16-flow all-ports example that satisfies
    /// SC1 (every period ≥ 4) but admits no SC2 certificate.
    pub(crate) fn sc1_only_spec() -> TrafficSpec {
        let offsets = [
            [1, 2, 3, 1],
            [2, 0, 5, 2],
            [3, 4, 2, 4],
            [8, 2, 3, 3],
        ];
        let periods = [
            [4, 4, 5, 5],
            [5, 5, 5, 5],
            [4, 4, 4, 6],
            [4, 5, 5, 5],
        ];
        let mut spec = TrafficSpec::empty(4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                spec.add_flow(i, j, offsets[i][j], periods[i][j]).unwrap();
            }
        }
        spec
    }

    /// The fully loaded zero-offset example: periods are powers of two laid
    /// out so the cyclic decomposition yields T = (2, 4, 8, 8) at exactly
    /// utilization 1. SC1 fails (period 2 < 4).
    pub(crate) fn sc2_only_spec() -> TrafficSpec {
        let periods = [
            [2, 4, 8, 8],
            [8, 2, 4, 8],
            [8, 8, 2, 4],
            [4, 8, 8, 2],
        ];
        let mut spec = TrafficSpec::empty(4).unwrap();
        for (i, row) in periods.iter().enumerate() {
            for (j, &period) in row.iter().enumerate() {
                spec.add_flow(i, j, 0, period).unwrap();
            }
        }
        spec
    }

    /// Three same-input TS flows next to BE traffic: SC1 fails (period 3),
    /// and the cyclic decomposition certifies SC2 with T = (3, 6, 6, ∞).
    pub(crate) fn mixed_traffic_spec() -> TrafficSpec {
        let mut spec = TrafficSpec::empty(4).unwrap();
        spec.add_flow(0, 0, 0, 3).unwrap();
        spec.add_flow(0, 1, 0, 6).unwrap();
        spec.add_flow(0, 2, 0, 6).unwrap();
        spec
    }

    #[test]
    fn sc1_requires_periods_of_at_least_n() {
        assert!(check_sc1(&sc1_only_spec()));
        assert!(!check_sc1(&sc2_only_spec()));
        assert!(check_sc1(&TrafficSpec::empty(4).unwrap()));
        assert!(!check_sc1(&mixed_traffic_spec()));
    }

    #[test]
    fn certificate_check_on_known_specs() {
        let spec = sc2_only_spec();
        let good = Sc2Certificate::new(
            cyclic_decomposition(4),
            TVector::new(vec![
                Slots::Finite(2),
                Slots::Finite(4),
                Slots::Finite(8),
                Slots::Finite(8),
            ])
            .unwrap(),
        )
        .unwrap();
        assert!(check_sc2_certificate(&spec, &good).unwrap());

        // Slowing matching 1 to period 8 uncovers its period-4 flows.
        let bad = Sc2Certificate::new(
            cyclic_decomposition(4),
            TVector::new(vec![
                Slots::Finite(2),
                Slots::Finite(8),
                Slots::Finite(8),
                Slots::Finite(8),
            ])
            .unwrap(),
        )
        .unwrap();
        assert!(!check_sc2_certificate(&spec, &bad).unwrap());

        let mixed = Sc2Certificate::new(
            cyclic_decomposition(4),
            TVector::new(vec![
                Slots::Finite(3),
                Slots::Finite(6),
                Slots::Finite(6),
                Slots::Inf,
            ])
            .unwrap(),
        )
        .unwrap();
        assert!(check_sc2_certificate(&mixed_traffic_spec(), &mixed).unwrap());

        let wrong_size = Sc2Certificate::new(
            cyclic_decomposition(3),
            TVector::new(vec![Slots::Inf, Slots::Inf, Slots::Inf]).unwrap(),
        )
        .unwrap();
        assert_eq!(
            check_sc2_certificate(&spec, &wrong_size).unwrap_err(),
            AdmissionError::DimensionMismatch { cert_n: 3, spec_n: 4 }
        );
    }

    #[test]
    fn candidate_periods_for_the_cyclic_decomposition() {
        let spec = sc2_only_spec();
        let d = cyclic_decomposition(4);
        let got: Vec<Slots> = d.matchings().iter().map(|m| candidate_period(&spec, m)).collect();
        assert_eq!(
            got,
            vec![Slots::Finite(2), Slots::Finite(4), Slots::Finite(8), Slots::Finite(8)]
        );

        let mixed = mixed_traffic_spec();
        let got: Vec<Slots> = d.matchings().iter().map(|m| candidate_period(&mixed, m)).collect();
        assert_eq!(
            got,
            vec![Slots::Finite(3), Slots::Finite(6), Slots::Finite(6), Slots::Inf]
        );
    }

    #[test]
    fn candidate_period_falls_back_when_t1_is_unusable() {
        // Flows (0,0) period 5 offset 0 and (1,1) period 3 offset 1 share the
        // identity matching: t1 = 5 leaves the period-3 flow uncovered
        // (3 < 2·5−1), so the halved-period fallback t2 = min(3, 2) = 2 wins.
        let mut spec = TrafficSpec::empty(2).unwrap();
        spec.add_flow(0, 0, 0, 5).unwrap();
        spec.add_flow(1, 1, 1, 3).unwrap();
        let identity = PerfectMatching::from_permutation(vec![0, 1]).unwrap();
        assert_eq!(candidate_period(&spec, &identity), Slots::Finite(2));

        // With no zero-offset flow at all, t1 does not exist: fallback again.
        let mut spec = TrafficSpec::empty(2).unwrap();
        spec.add_flow(0, 0, 3, 9).unwrap();
        assert_eq!(candidate_period(&spec, &identity), Slots::Finite(5));
    }

    #[test]
    fn search_certifies_the_fully_loaded_spec() {
        let cert = search_sc2(&sc2_only_spec()).unwrap().expect("feasible");
        assert_eq!(
            cert.tvector().periods(),
            &[Slots::Finite(2), Slots::Finite(4), Slots::Finite(8), Slots::Finite(8)]
        );
        assert!(cert.tvector().utilization().is_integer()); // exactly 1
        assert_eq!(cert.decomposition(), &cyclic_decomposition(4));
    }

    #[test]
    fn search_detects_infeasibility() {
        assert!(search_sc2(&sc1_only_spec()).unwrap().is_none());
    }

    #[test]
    fn search_handles_the_mixed_spec() {
        let cert = search_sc2(&mixed_traffic_spec()).unwrap().expect("feasible");
        assert_eq!(
            cert.tvector().periods(),
            &[Slots::Finite(3), Slots::Finite(6), Slots::Finite(6), Slots::Inf]
        );
    }

    #[test]
    fn search_rejects_large_switches() {
        let spec = TrafficSpec::empty(7).unwrap();
        assert_eq!(
            search_sc2(&spec).unwrap_err(),
            AdmissionError::UnsupportedSize { n: 7, max: 6 }
        );
    }

    #[test]
    fn arbiter_admits_and_rejects() {
        let mut table = TrafficSpec::empty(4).unwrap();

        // Period ≥ N: SC1 admission.
        assert_eq!(
            arbiter_admit(&mut table, 0, 1, 2, 6).unwrap(),
            AdmissionDecision::AdmitSc1
        );
        assert!(table.has_flow(0, 1));

        // A short zero-offset flow breaks SC1 but is SC2-certifiable.
        match arbiter_admit(&mut table, 0, 0, 0, 2).unwrap() {
            AdmissionDecision::AdmitSc2(cert) => {
                assert!(check_sc2_certificate(&table, &cert).unwrap());
            }
            other => panic!("expected SC2 admission, got {other:?}"),
        }
        assert!(table.has_flow(0, 0));

        // A conflicting rapid flow on the same input must be rejected, and
        // the table stays as it was.
        let before = table.clone();
        assert_eq!(
            arbiter_admit(&mut table, 0, 2, 1, 2).unwrap(),
            AdmissionDecision::Reject
        );
        assert_eq!(table, before);

        // Re-subscribing an existing flow is an error.
        assert!(matches!(
            arbiter_admit(&mut table, 0, 0, 0, 4),
            Err(AdmissionError::Types(TypesError::DuplicateFlow { i: 0, j: 0 }))
        ));
    }

    #[test]
    fn single_short_flow_is_admitted_with_a_small_certificate() {
        let mut table = TrafficSpec::empty(4).unwrap();
        match arbiter_admit(&mut table, 0, 0, 0, 2).unwrap() {
            AdmissionDecision::AdmitSc2(cert) => {
                // The first enumerated decomposition already works: its
                // first matching carries (0,0) at period 2, everything else
                // is never scheduled.
                assert_eq!(cert.tvector().period(0), Slots::Finite(2));
                for k in 1..4 {
                    assert_eq!(cert.tvector().period(k), Slots::Inf);
                }
            }
            other => panic!("expected SC2 admission, got {other:?}"),
        }
    }

    /// Reference decision procedure for small switches: try every
    /// decomposition set against every period vector with entries in
    /// 1..=max_period or ∞. Exponential, but exact.
    fn exhaustive_sc2_feasible(spec: &TrafficSpec, max_period: u64) -> bool {
        let n = spec.n();
        let arity = max_period as usize + 1; // 0..max_period-1 encode finite, max encodes ∞
        for decomposition in enumerate_decompositions(n).unwrap() {
            let mut odometer = vec![0usize; n];
            loop {
                let periods: Vec<Slots> = odometer
                    .iter()
                    .map(|&c| {
                        if c == arity - 1 {
                            Slots::Inf
                        } else {
                            Slots::Finite(c as u64 + 1)
                        }
                    })
                    .collect();
                if utilization_of(&periods) <= BigRational::one() {
                    let all_covered = spec.flows().all(|f| {
                        let k = decomposition.matching_index_of(f.input, f.output);
                        flow_covered(f.period, f.offset, periods[k])
                    });
                    if all_covered {
                        return true;
                    }
                }
                // Advance the mixed-radix odometer.
                let mut digit = 0;
                loop {
                    if digit == n {
                        break;
                    }
                    odometer[digit] += 1;
                    if odometer[digit] < arity {
                        break;
                    }
                    odometer[digit] = 0;
                    digit += 1;
                }
                if digit == n {
                    break;
                }
            }
        }
        false
    }

    #[test]
    fn search_matches_the_exhaustive_oracle_on_3_port_switches() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20_240_817);
        for case in 0..200 {
            let mut spec = TrafficSpec::empty(3).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    if rng.gen_bool(0.7) {
                        let period = rng.gen_range(1u64..=8);
                        let offset = rng.gen_range(0u64..=4);
                        spec.add_flow(i, j, offset, period).unwrap();
                    }
                }
            }
            let found = search_sc2(&spec).unwrap();
            let feasible = exhaustive_sc2_feasible(&spec, 8);
            assert_eq!(
                found.is_some(),
                feasible,
                "case {case}: search and exhaustive oracle disagree on {spec:?}"
            );
            if let Some(cert) = found {
                assert!(check_sc2_certificate(&spec, &cert).unwrap(), "case {case}");
            }
        }
    }
}
