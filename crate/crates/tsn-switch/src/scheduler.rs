//! Per-slot matching selection.
//!
//! Step 1 picks a TS matching — by round-robin rotation (M-TDMA) or by the
//! virtual processor's EDF service order (M-EDF) — and is masked down to the
//! flows that actually hold a live cell. Step 2 runs iSLIP over the ports
//! step 1 left idle to serve best-effort VOQs, then pads with free
//! input-output pairs so the crossbar always carries a full configuration.

use crate::admission::Sc2Certificate;
use crate::edf::{edf_trace, EdfTrace};
use crate::latin::FlowDecompositionSet;
use crate::types::{Matching, PerfectMatching};

/// Step-1 policy, fixed for a whole run at subscription time.
#[derive(Debug, Clone)]
pub enum SchedulerMode {
    Mtdma(FlowDecompositionSet),
    Medf(Sc2Certificate),
}

impl SchedulerMode {
    pub fn label(&self) -> &'static str {
        match self {
            SchedulerMode::Mtdma(_) => "MTDMA",
            SchedulerMode::Medf(_) => "MEDF",
        }
    }
}

/// M-TDMA: slot t runs matching t mod N, rotating through the decomposition
/// set forever.
pub fn mtdma_matching(decomposition: &FlowDecompositionSet, slot: u64) -> &PerfectMatching {
    decomposition.matching((slot % decomposition.n() as u64) as usize)
}

/// Precomputed M-EDF schedule.
///
/// With all tasks released at slot 0, the EDF service order repeats every
/// hyperperiod, so one hyperperiod of trace — capped at the simulation
/// horizon when the hyperperiod is enormous — answers every slot lookup.
#[derive(Debug, Clone)]
pub struct MedfSchedule {
    certificate: Sc2Certificate,
    trace: EdfTrace,
    /// `Some(h)` when the trace covers a full hyperperiod h and lookups can
    /// wrap; `None` when it only covers the horizon.
    wrap: Option<u64>,
}

impl MedfSchedule {
    pub fn new(certificate: Sc2Certificate, horizon: u64) -> Self {
        let hyperperiod = certificate.tvector().hyperperiod();
        let (trace_len, wrap) = if hyperperiod <= horizon.max(1) as u128 {
            (hyperperiod as u64, Some(hyperperiod as u64))
        } else {
            (horizon.max(1), None)
        };
        let trace = edf_trace(certificate.tvector(), trace_len);
        Self { certificate, trace, wrap }
    }

    pub fn certificate(&self) -> &Sc2Certificate {
        &self.certificate
    }

    /// The task (= matching) index served at `slot`, or `None` on idle slots.
    pub fn task_at(&self, slot: u64) -> Option<usize> {
        match self.wrap {
            Some(h) => self.trace.task_at(slot % h),
            None => self.trace.task_at(slot),
        }
    }

    pub fn matching_at(&self, slot: u64) -> Option<&PerfectMatching> {
        self.task_at(slot)
            .map(|k| self.certificate.decomposition().matching(k))
    }
}

/// One-off M-EDF lookup. Simulations should build a [`MedfSchedule`] instead
/// of paying for a fresh trace per slot.
pub fn medf_matching(certificate: &Sc2Certificate, slot: u64) -> Option<&PerfectMatching> {
    let hyperperiod = certificate.tvector().hyperperiod();
    let index = if (slot as u128) >= hyperperiod {
        slot % hyperperiod as u64
    } else {
        slot
    };
    edf_trace(certificate.tvector(), index + 1)
        .task_at(index)
        .map(|k| certificate.decomposition().matching(k))
}

/// Entry-wise AND of the step-1 matching with the live-cell indicator
/// (row-major n×n): only flows that hold a live TS cell transmit; the other
/// ports fall through to step 2.
pub fn mask_by_ts_matrix(step1: Option<&PerfectMatching>, n: usize, ts_live: &[bool]) -> Matching {
    debug_assert_eq!(ts_live.len(), n * n);
    let mut masked = Matching::empty(n);
    if let Some(m) = step1 {
        for (i, j) in m.pairs() {
            if ts_live[i * n + j] {
                masked.add_pair(i, j).expect("subset of a permutation cannot conflict");
            }
        }
    }
    masked
}

/// Round-robin pointers carried across slots: one grant pointer per output,
/// one accept pointer per input. Fresh state points everything at port 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IslipState {
    grant_ptr: Vec<usize>,
    accept_ptr: Vec<usize>,
}

impl IslipState {
    pub fn new(n: usize) -> Self {
        Self {
            grant_ptr: vec![0; n],
            accept_ptr: vec![0; n],
        }
    }

    pub fn n(&self) -> usize {
        self.grant_ptr.len()
    }

    pub fn grant_pointer(&self, output: usize) -> usize {
        self.grant_ptr[output]
    }

    pub fn accept_pointer(&self, input: usize) -> usize {
        self.accept_ptr[input]
    }
}

/// Step 2: iterative request/grant/accept rounds over the ports step 1 left
/// free, followed by greedy padding.
///
/// Each round: every free unmatched output grants the requesting input
/// nearest its grant pointer; every free unmatched input accepts the granting
/// output nearest its accept pointer. Pointers advance one past the accepted
/// port — only for first-round accepts, which is what makes the round-robin
/// fair. Rounds repeat until no accept happens or the iteration budget runs
/// out. Padding then pairs leftover free inputs and outputs lowest-index
/// first, so step 1 plus step 2 always configure every port; padded pairs
/// with empty VOQs simply transfer nothing.
pub fn islip_select(
    n: usize,
    voq_nonempty: &[bool],
    busy_inputs: &[bool],
    busy_outputs: &[bool],
    state: &mut IslipState,
    iterations: usize,
) -> Matching {
    debug_assert_eq!(voq_nonempty.len(), n * n);
    debug_assert_eq!(busy_inputs.len(), n);
    debug_assert_eq!(busy_outputs.len(), n);
    debug_assert_eq!(state.n(), n);

    let mut matched_in: Vec<Option<usize>> = vec![None; n];
    let mut matched_out: Vec<Option<usize>> = vec![None; n];

    let has_requests = (0..n).any(|i| {
        !busy_inputs[i] && (0..n).any(|j| !busy_outputs[j] && voq_nonempty[i * n + j])
    });

    if has_requests {
        for round in 0..iterations {
            // Grant phase.
            let mut grant: Vec<Option<usize>> = vec![None; n];
            for j in 0..n {
                if busy_outputs[j] || matched_out[j].is_some() {
                    continue;
                }
                let start = state.grant_ptr[j];
                for d in 0..n {
                    let i = (start + d) % n;
                    if !busy_inputs[i] && matched_in[i].is_none() && voq_nonempty[i * n + j] {
                        grant[j] = Some(i);
                        break;
                    }
                }
            }
            // Accept phase.
            let mut any_accept = false;
            for i in 0..n {
                if busy_inputs[i] || matched_in[i].is_some() {
                    continue;
                }
                let start = state.accept_ptr[i];
                for d in 0..n {
                    let j = (start + d) % n;
                    if grant[j] == Some(i) {
                        matched_in[i] = Some(j);
                        matched_out[j] = Some(i);
                        if round == 0 {
                            state.grant_ptr[j] = (i + 1) % n;
                            state.accept_ptr[i] = (j + 1) % n;
                        }
                        any_accept = true;
                        break;
                    }
                }
            }
            if !any_accept {
                break;
            }
        }
    }

    // Padding: pair leftover free ports, lowest indices first.
    let mut free_outputs: Vec<usize> = (0..n)
        .filter(|&j| !busy_outputs[j] && matched_out[j].is_none())
        .collect();
    free_outputs.reverse(); // pop() yields lowest first
    for i in 0..n {
        if busy_inputs[i] || matched_in[i].is_some() {
            continue;
        }
        if let Some(j) = free_outputs.pop() {
            matched_in[i] = Some(j);
            matched_out[j] = Some(i);
        }
    }

    let mut selection = Matching::empty(n);
    for (i, j) in matched_in.iter().enumerate().filter_map(|(i, j)| j.map(|j| (i, j))) {
        selection.add_pair(i, j).expect("phases keep ports disjoint");
    }
    selection
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admission::Sc2Certificate;
    use crate::edf::TVector;
    use crate::latin::cyclic_decomposition;
    use crate::types::Slots;

    fn fully_loaded_cert() -> Sc2Certificate {
        Sc2Certificate::new(
            cyclic_decomposition(4),
            TVector::new(vec![
                Slots::Finite(2),
                Slots::Finite(4),
                Slots::Finite(8),
                Slots::Finite(8),
            ])
            .unwrap(),
        )
        .unwrap()
    }

    fn mixed_cert() -> Sc2Certificate {
        Sc2Certificate::new(
            cyclic_decomposition(4),
            TVector::new(vec![
                Slots::Finite(3),
                Slots::Finite(6),
                Slots::Finite(6),
                Slots::Inf,
            ])
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn mtdma_rotates_through_the_set() {
        let d = cyclic_decomposition(4);
        assert_eq!(mtdma_matching(&d, 0), d.matching(0));
        assert_eq!(mtdma_matching(&d, 5), d.matching(1));
        for t in 0..32u64 {
            assert_eq!(mtdma_matching(&d, t), mtdma_matching(&d, t + 4));
        }
    }

    #[test]
    fn medf_follows_the_edf_service_order() {
        let schedule = MedfSchedule::new(fully_loaded_cert(), 80);
        let tasks: Vec<Option<usize>> = (0..8).map(|t| schedule.task_at(t)).collect();
        assert_eq!(
            tasks,
            vec![Some(0), Some(1), Some(0), Some(2), Some(0), Some(1), Some(0), Some(3)]
        );
        // Wraps with the hyperperiod.
        for t in 0..16u64 {
            assert_eq!(schedule.task_at(t), schedule.task_at(t + 8));
        }
        // The one-off lookup agrees.
        let cert = fully_loaded_cert();
        for t in 0..16u64 {
            assert_eq!(medf_matching(&cert, t), schedule.matching_at(t));
        }
    }

    #[test]
    fn medf_idles_on_unclaimed_slots() {
        let schedule = MedfSchedule::new(mixed_cert(), 60);
        assert_eq!(schedule.task_at(4), None);
        assert_eq!(schedule.task_at(5), None);
        assert!(schedule.matching_at(4).is_none());
        assert_eq!(schedule.task_at(3), Some(0));
    }

    #[test]
    fn masking_drops_pairs_without_live_cells() {
        let d = cyclic_decomposition(4);
        let all_live = vec![true; 16];
        let masked = mask_by_ts_matrix(Some(d.matching(0)), 4, &all_live);
        assert_eq!(masked.len(), 4);

        let none_live = vec![false; 16];
        assert!(mask_by_ts_matrix(Some(d.matching(0)), 4, &none_live).is_empty());
        assert!(mask_by_ts_matrix(None, 4, &all_live).is_empty());

        // Matching 1 connects input 0 to output 1; with only that cell live,
        // exactly that pair survives.
        let mut only_01 = vec![false; 16];
        only_01[1] = true;
        let masked = mask_by_ts_matrix(Some(d.matching(1)), 4, &only_01);
        assert_eq!(masked.pairs().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn islip_serves_a_single_backlogged_input_round_robin() {
        // Four queued VOQs on input 0, all ports free: each slot serves one,
        // and the accept pointer rotates through the outputs in order.
        let n = 4;
        let mut state = IslipState::new(n);
        let mut voq = vec![false; 16];
        voq[..4].fill(true);
        let free = vec![false; 4];
        let mut served = Vec::new();
        for _ in 0..4 {
            let sel = islip_select(n, &voq, &free, &free, &mut state, 2);
            assert_eq!(sel.len(), 4, "padding must complete the configuration");
            let pair = sel.pairs().find(|&(i, _)| i == 0).unwrap();
            served.push(pair.1);
            voq[pair.1] = false;
        }
        assert_eq!(served, vec![0, 1, 2, 3]);
    }

    #[test]
    fn islip_respects_busy_ports() {
        let n = 4;
        let mut state = IslipState::new(n);
        let voq = vec![true; 16];
        let mut busy_in = vec![false; 4];
        let mut busy_out = vec![false; 4];
        busy_in[0] = true;
        busy_out[2] = true;
        let sel = islip_select(n, &voq, &busy_in, &busy_out, &mut state, 2);
        // Busy ports stay untouched; the three free inputs pair with the
        // three free outputs.
        assert_eq!(sel.len(), 3);
        for (i, j) in sel.pairs() {
            assert_ne!(i, 0);
            assert_ne!(j, 2);
        }
    }

    #[test]
    fn islip_pads_idle_fabrics_to_a_full_configuration() {
        let n = 4;
        let mut state = IslipState::new(n);
        let voq = vec![false; 16];
        let free = vec![false; 4];
        let sel = islip_select(n, &voq, &free, &free, &mut state, 2);
        assert_eq!(sel.len(), 4);
        // Lowest-index padding is the identity here.
        assert_eq!(sel.pairs().collect::<Vec<_>>(), vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        // Pointers stay untouched by pure padding.
        assert_eq!(state, IslipState::new(n));
    }

    #[test]
    fn a_second_islip_round_rescues_first_round_losers() {
        // Inputs 0 and 1 both queue for output 2 (input 0 also for output 0).
        // Round one: output 2 grants input 0, which prefers and accepts
        // output 0, leaving input 1 stranded. A second round lets output 2
        // grant input 1.
        let n = 3;
        let mut voq = vec![false; 9];
        voq[0] = true; // (0,0)
        voq[2] = true; // (0,2)
        voq[5] = true; // (1,2)
        let free = vec![false; 3];

        let two_rounds = islip_select(n, &voq, &free, &free, &mut IslipState::new(n), 2);
        assert_eq!(two_rounds.len(), 3);
        assert!(two_rounds.contains(0, 0));
        assert!(two_rounds.contains(1, 2)); // matched in round two
        assert!(two_rounds.contains(2, 1)); // padding

        // With a single round, input 1 stays unmatched and padding pairs it
        // with the lowest free output instead.
        let one_round = islip_select(n, &voq, &free, &free, &mut IslipState::new(n), 1);
        assert_eq!(one_round.len(), 3);
        assert!(one_round.contains(0, 0));
        assert!(one_round.contains(1, 1)); // padding, empty VOQ
        assert!(one_round.contains(2, 2));
    }

    #[test]
    fn islip_pointer_updates_only_in_the_first_round() {
        let n = 4;
        let mut state = IslipState::new(n);
        let mut voq = vec![false; 16];
        voq[0] = true; // (0,0)
        let free = vec![false; 4];
        islip_select(n, &voq, &free, &free, &mut state, 2);
        assert_eq!(state.grant_pointer(0), 1);
        assert_eq!(state.accept_pointer(0), 1);
        // Untouched ports keep their pointers.
        assert_eq!(state.grant_pointer(1), 0);
        assert_eq!(state.accept_pointer(3), 0);
    }
}
