//! The slot-level switch simulator.
//!
//! Per slot, in order: TS cells arrive from the metadata table; BE cells
//! arrive into their VOQs (dropped on overflow); step 1 selects the TS
//! matching and masks it by the live-cell matrix; step 2 runs iSLIP plus
//! padding over the remaining ports; the crossbar transfers one cell per
//! connected pair; finally, TS cells whose deadline just passed are counted
//! as expired and discarded. A closed-form oracle for M-TDMA transmission
//! slots provides an independent check of the whole pipeline.

use crate::admission::{arbiter_admit, check_sc1, check_sc2_certificate, search_sc2, AdmissionError, Sc2Certificate};
use crate::edf::{EdfError, TVector};
use crate::latin::{cyclic_decomposition, latin_to_decomposition, FlowDecompositionSet, LatinError, LatinSquare};
use crate::scenario::{BeReport, CertificateReport, FlowSpec, ModeChoice, PerFlowReport, Scenario, SimSlots, SimulationReport};
use crate::scheduler::{islip_select, mask_by_ts_matrix, mtdma_matching, IslipState, MedfSchedule, SchedulerMode};
use crate::types::{Cell, CellKind, FlowParams, Matching, Slots, TrafficSpec, TypesError};
use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no SC2 certificate exists for the admitted flows; M-EDF cannot run")]
    MedfInfeasible,
    #[error("the pinned decomposition/T-vector does not certify the admitted flows: {0}")]
    OverrideNotCertifying(String),
    #[error("SC1 does not hold; the closed-form M-TDMA schedule is undefined")]
    Sc1Violated,
    #[error("simulation horizon overflows a 64-bit slot counter")]
    HorizonOverflow,
    #[error(transparent)]
    Admission(#[from] AdmissionError),
    #[error(transparent)]
    Types(#[from] TypesError),
    #[error(transparent)]
    Latin(#[from] LatinError),
    #[error(transparent)]
    Edf(#[from] EdfError),
}

/// Running counters for one simulation. TS counters are per flow in row-major
/// port order; BE counters are switch-wide.
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    n: usize,
    pub ts_arrivals: Vec<u64>,
    pub ts_delivered: Vec<u64>,
    pub ts_expired: Vec<u64>,
    pub ts_delay_sum: Vec<u64>,
    pub ts_delay_max: Vec<Option<u64>>,
    /// Delivered-cell delays in slots, across all TS flows.
    pub ts_delay_histogram: BTreeMap<u64, u64>,
    pub be_arrivals: u64,
    pub be_delivered: u64,
    pub be_overflow_drops: u64,
    /// Total VOQ occupancy sampled at the end of every slot.
    pub be_backlog_samples: Vec<u64>,
}

impl MetricsAccumulator {
    fn new(n: usize) -> Self {
        Self {
            n,
            ts_arrivals: vec![0; n * n],
            ts_delivered: vec![0; n * n],
            ts_expired: vec![0; n * n],
            ts_delay_sum: vec![0; n * n],
            ts_delay_max: vec![None; n * n],
            ts_delay_histogram: BTreeMap::new(),
            be_arrivals: 0,
            be_delivered: 0,
            be_overflow_drops: 0,
            be_backlog_samples: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mean_backlog(&self) -> f64 {
        if self.be_backlog_samples.is_empty() {
            0.0
        } else {
            self.be_backlog_samples.iter().sum::<u64>() as f64 / self.be_backlog_samples.len() as f64
        }
    }
}

/// Everything that happened in one slot, for trace output and invariant
/// checks. Ports are 0-based here; the CSV layer shifts to 1-based.
#[derive(Debug, Clone, Default)]
pub struct TraceRow {
    pub slot: u64,
    pub mode: &'static str,
    /// Step-1 matching index, `None` when the scheduler idles the TS step.
    pub step1: Option<usize>,
    /// TS pairs that transferred a cell (the masked step-1 matching).
    pub ts_pairs: Vec<(usize, usize)>,
    /// The full step-2 selection, padding included.
    pub be_pairs: Vec<(usize, usize)>,
    /// Step-2 pairs that actually moved a BE cell, with its VOQ sequence
    /// number.
    pub be_transfers: Vec<(usize, usize, u64)>,
    /// TS flows whose cell expired at the end of this slot.
    pub expired: Vec<(usize, usize)>,
}

impl TraceRow {
    fn clear(&mut self) {
        self.slot = 0;
        self.mode = "";
        self.step1 = None;
        self.ts_pairs.clear();
        self.be_pairs.clear();
        self.be_transfers.clear();
        self.expired.clear();
    }
}

enum StepPolicy {
    Tdma(FlowDecompositionSet),
    Edf(MedfSchedule),
}

/// The live switch: metadata table, per-flow TS cell slots, BE VOQs, iSLIP
/// pointers, and metrics. Drive it one slot at a time with [`SwitchState::step`].
pub struct SwitchState {
    n: usize,
    slot: u64,
    flows: Vec<FlowParams>,
    policy: StepPolicy,
    /// At most one live TS cell per flow, row-major.
    ts_live: Vec<Option<Cell>>,
    voqs: Vec<VecDeque<Cell>>,
    voq_capacity: usize,
    islip: IslipState,
    islip_iterations: usize,
    be_seq_next: Vec<u64>,
    metrics: MetricsAccumulator,
    // Per-slot scratch buffers.
    scratch_live: Vec<bool>,
    scratch_voq: Vec<bool>,
    scratch_busy_in: Vec<bool>,
    scratch_busy_out: Vec<bool>,
}

impl SwitchState {
    /// `horizon_hint` sizes the precomputed M-EDF service trace; runs may
    /// step past it only if the certificate's hyperperiod fits inside it.
    pub fn new(
        spec: &TrafficSpec,
        mode: SchedulerMode,
        horizon_hint: u64,
        voq_capacity: usize,
        islip_iterations: usize,
    ) -> Self {
        let n = spec.n();
        let policy = match mode {
            SchedulerMode::Mtdma(d) => {
                assert_eq!(d.n(), n, "decomposition order must match the switch size");
                StepPolicy::Tdma(d)
            }
            SchedulerMode::Medf(cert) => {
                assert_eq!(cert.n(), n, "certificate order must match the switch size");
                StepPolicy::Edf(MedfSchedule::new(cert, horizon_hint))
            }
        };
        Self {
            n,
            slot: 0,
            flows: spec.flows().collect(),
            policy,
            ts_live: vec![None; n * n],
            voqs: (0..n * n).map(|_| VecDeque::new()).collect(),
            voq_capacity,
            islip: IslipState::new(n),
            islip_iterations,
            be_seq_next: vec![0; n * n],
            metrics: MetricsAccumulator::new(n),
            scratch_live: vec![false; n * n],
            scratch_voq: vec![false; n * n],
            scratch_busy_in: vec![false; n],
            scratch_busy_out: vec![false; n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn metrics(&self) -> &MetricsAccumulator {
        &self.metrics
    }

    pub fn mode_label(&self) -> &'static str {
        match self.policy {
            StepPolicy::Tdma(_) => "MTDMA",
            StepPolicy::Edf(_) => "MEDF",
        }
    }

    /// Live TS cells currently held, per flow (0 or 1).
    pub fn live_cell_count(&self, i: usize, j: usize) -> u64 {
        self.ts_live[i * self.n + j].is_some() as u64
    }

    /// Total BE cells currently queued.
    pub fn be_backlog(&self) -> u64 {
        self.voqs.iter().map(|q| q.len() as u64).sum()
    }

    /// Arrivals must equal deliveries plus losses plus what is still inside
    /// the switch — for every TS flow and for BE traffic as a whole.
    pub fn check_conservation(&self) -> bool {
        let m = &self.metrics;
        let ts_ok = (0..self.n * self.n).all(|idx| {
            m.ts_arrivals[idx]
                == m.ts_delivered[idx] + m.ts_expired[idx] + self.ts_live[idx].is_some() as u64
        });
        let be_ok = m.be_arrivals == m.be_delivered + m.be_overflow_drops + self.be_backlog();
        ts_ok && be_ok
    }

    /// Advances one slot. `be_arrivals` lists the (input, output) VOQs that
    /// receive one BE cell this slot; `row` is overwritten with the slot's
    /// events (reusable across calls to avoid churn).
    pub fn step(&mut self, be_arrivals: &[(usize, usize)], row: &mut TraceRow) {
        let n = self.n;
        let slot = self.slot;
        row.clear();
        row.slot = slot;
        row.mode = self.mode_label();

        // 1. TS arrivals: each flow delivers cell s at offset + s·T.
        for f in &self.flows {
            if slot >= f.offset && (slot - f.offset).is_multiple_of(f.period) {
                let idx = f.input * n + f.output;
                debug_assert!(
                    self.ts_live[idx].is_none(),
                    "previous cell must have been delivered or expired before the next arrives"
                );
                self.ts_live[idx] = Some(Cell {
                    input: f.input,
                    output: f.output,
                    arrival_slot: slot,
                    deadline_slot: Slots::Finite(slot + f.period - 1),
                    kind: CellKind::Ts,
                    seq: (slot - f.offset) / f.period,
                });
                self.metrics.ts_arrivals[idx] += 1;
            }
        }

        // 2. BE arrivals, dropped when the VOQ is full.
        for &(i, j) in be_arrivals {
            let idx = i * n + j;
            self.metrics.be_arrivals += 1;
            if self.voqs[idx].len() >= self.voq_capacity {
                self.metrics.be_overflow_drops += 1;
            } else {
                let seq = self.be_seq_next[idx];
                self.be_seq_next[idx] += 1;
                self.voqs[idx].push_back(Cell {
                    input: i,
                    output: j,
                    arrival_slot: slot,
                    deadline_slot: Slots::Inf,
                    kind: CellKind::Be,
                    seq,
                });
            }
        }

        // 3. Step 1: TS matching, masked by the live-cell matrix.
        for idx in 0..n * n {
            self.scratch_live[idx] = self.ts_live[idx].is_some();
        }
        let step1 = match &self.policy {
            StepPolicy::Tdma(d) => {
                row.step1 = Some((slot % n as u64) as usize);
                Some(mtdma_matching(d, slot))
            }
            StepPolicy::Edf(schedule) => {
                row.step1 = schedule.task_at(slot);
                schedule.matching_at(slot)
            }
        };
        let masked = mask_by_ts_matrix(step1, n, &self.scratch_live);

        // 4. Step 2: iSLIP plus padding over the ports step 1 left free.
        self.scratch_busy_in.iter_mut().for_each(|b| *b = false);
        self.scratch_busy_out.iter_mut().for_each(|b| *b = false);
        for (i, j) in masked.pairs() {
            self.scratch_busy_in[i] = true;
            self.scratch_busy_out[j] = true;
        }
        for idx in 0..n * n {
            self.scratch_voq[idx] = !self.voqs[idx].is_empty();
        }
        let be_sel: Matching = islip_select(
            n,
            &self.scratch_voq,
            &self.scratch_busy_in,
            &self.scratch_busy_out,
            &mut self.islip,
            self.islip_iterations,
        );
        debug_assert_eq!(
            masked.len() + be_sel.len(),
            n,
            "step 1 plus step 2 must configure every port"
        );

        // 5. Crossbar transfer.
        for (i, j) in masked.pairs() {
            let idx = i * n + j;
            let cell = self.ts_live[idx].take().expect("masked pairs hold a live cell");
            let delay = slot - cell.arrival_slot;
            self.metrics.ts_delivered[idx] += 1;
            self.metrics.ts_delay_sum[idx] += delay;
            let max = &mut self.metrics.ts_delay_max[idx];
            *max = Some(max.map_or(delay, |m: u64| m.max(delay)));
            *self.metrics.ts_delay_histogram.entry(delay).or_insert(0) += 1;
            row.ts_pairs.push((i, j));
        }
        for (i, j) in be_sel.pairs() {
            row.be_pairs.push((i, j));
            if let Some(cell) = self.voqs[i * n + j].pop_front() {
                self.metrics.be_delivered += 1;
                row.be_transfers.push((i, j, cell.seq));
            }
        }

        // 6. Expiry sweep: a TS cell still present at the end of its deadline
        // slot is lost.
        for idx in 0..n * n {
            if let Some(cell) = &self.ts_live[idx] {
                if cell.deadline_slot == Slots::Finite(slot) {
                    self.metrics.ts_expired[idx] += 1;
                    row.expired.push((idx / n, idx % n));
                    self.ts_live[idx] = None;
                }
            }
        }

        self.metrics.be_backlog_samples.push(self.be_backlog());
        self.slot += 1;
    }
}

fn ceil_div(a: i128, b: i128) -> i128 {
    a.div_euclid(b) + (a.rem_euclid(b) != 0) as i128
}

/// Closed-form M-TDMA transmission slots, flow by flow, for every cell whose
/// transmission lands inside the horizon.
///
/// Under SC1, cell s of a flow in matching k (arriving at a = offset + s·T)
/// is transmitted at the first rotation slot of matching k at or after a:
/// slot ⌈(a − k)/N⌉·N + k, which provably precedes the cell's deadline. The
/// map is keyed by (input, output) with transmit slots in cell order.
pub fn oracle_schedule_mtdma(
    spec: &TrafficSpec,
    decomposition: &FlowDecompositionSet,
    horizon: u64,
) -> Result<BTreeMap<(usize, usize), Vec<u64>>, SimError> {
    if decomposition.n() != spec.n() {
        return Err(AdmissionError::DimensionMismatch {
            cert_n: decomposition.n(),
            spec_n: spec.n(),
        }
        .into());
    }
    if !check_sc1(spec) {
        return Err(SimError::Sc1Violated);
    }
    let n = spec.n() as i128;
    let mut schedule = BTreeMap::new();
    for f in spec.flows() {
        let k = decomposition.matching_index_of(f.input, f.output) as i128;
        let mut slots = Vec::new();
        for s in 0u64.. {
            let arrival = f.offset as i128 + s as i128 * f.period as i128;
            if arrival >= horizon as i128 {
                break;
            }
            let transmit = ceil_div(arrival - k, n) * n + k;
            debug_assert!(
                transmit >= arrival && transmit < arrival + f.period as i128,
                "rotation slot must land inside the cell's lifetime"
            );
            if transmit >= horizon as i128 {
                break;
            }
            slots.push(transmit as u64);
        }
        schedule.insert((f.input, f.output), slots);
    }
    Ok(schedule)
}

fn certificate_for(
    table: &TrafficSpec,
    pinned: Option<&FlowDecompositionSet>,
    pinned_periods: Option<&[Slots]>,
) -> Result<Sc2Certificate, SimError> {
    match pinned {
        Some(d) => {
            let periods: Vec<Slots> = match pinned_periods {
                Some(p) => p.to_vec(),
                None => d
                    .matchings()
                    .iter()
                    .map(|m| crate::admission::candidate_period(table, m))
                    .collect(),
            };
            let tvector = TVector::new(periods)
                .map_err(|e| SimError::OverrideNotCertifying(e.to_string()))?;
            let cert = Sc2Certificate::new(d.clone(), tvector)?;
            if !check_sc2_certificate(table, &cert)? {
                return Err(SimError::OverrideNotCertifying(
                    "some admitted flow is not covered by its matching's period".into(),
                ));
            }
            Ok(cert)
        }
        None => search_sc2(table)?.ok_or(SimError::MedfInfeasible),
    }
}

/// The `sim_slots: "auto"` rule: longest offset plus ten times the least
/// common multiple of the subscribed periods (one hyperperiod of margin would
/// do; ten gives the steady state room to show).
fn auto_horizon(table: &TrafficSpec) -> Result<u64, SimError> {
    let mut lcm: u128 = 1;
    let mut max_offset: u64 = 0;
    for f in table.flows() {
        let g = lcm.gcd(&(f.period as u128));
        lcm = (lcm / g)
            .checked_mul(f.period as u128)
            .ok_or(SimError::HorizonOverflow)?;
        max_offset = max_offset.max(f.offset);
    }
    let total = lcm
        .checked_mul(10)
        .and_then(|v| v.checked_add(max_offset as u128))
        .ok_or(SimError::HorizonOverflow)?;
    u64::try_from(total).map_err(|_| SimError::HorizonOverflow)
}

/// Runs a parsed scenario end to end: subscribes its TS flows through the
/// arbiter (static subscription at slot 0), resolves the scheduler mode,
/// simulates the requested window, and reports per-flow and BE outcomes.
/// `observer`, when given, sees every slot's trace row as it happens.
pub fn run_scenario(
    scenario: &Scenario,
    mut observer: Option<&mut dyn FnMut(&TraceRow)>,
) -> Result<SimulationReport, SimError> {
    let n = scenario.n;
    let mut table = TrafficSpec::empty(n)?;
    let mut admitted: Vec<FlowSpec> = Vec::new();
    let mut rejected: Vec<FlowSpec> = Vec::new();
    for flow in &scenario.ts_flows {
        let decision = arbiter_admit(
            &mut table,
            flow.input - 1,
            flow.output - 1,
            flow.offset,
            flow.period,
        )?;
        match decision {
            crate::admission::AdmissionDecision::Reject => rejected.push(flow.clone()),
            _ => admitted.push(flow.clone()),
        }
    }

    let pinned: Option<FlowDecompositionSet> = match &scenario.decomposition_override {
        Some(rows) => Some(latin_to_decomposition(&LatinSquare::from_one_based_rows(rows)?)),
        None => None,
    };

    let mode = match scenario.mode {
        ModeChoice::Auto => {
            if check_sc1(&table) {
                SchedulerMode::Mtdma(pinned.unwrap_or_else(|| cyclic_decomposition(n)))
            } else {
                SchedulerMode::Medf(certificate_for(
                    &table,
                    pinned.as_ref(),
                    scenario.tvector_override.as_deref(),
                )?)
            }
        }
        ModeChoice::ForceMtdma => SchedulerMode::Mtdma(pinned.unwrap_or_else(|| cyclic_decomposition(n))),
        ModeChoice::ForceMedf => SchedulerMode::Medf(certificate_for(
            &table,
            pinned.as_ref(),
            scenario.tvector_override.as_deref(),
        )?),
    };

    let horizon = match scenario.sim_slots {
        SimSlots::Fixed(v) => v,
        SimSlots::Auto => auto_horizon(&table)?,
    };

    let certificate = match &mode {
        SchedulerMode::Medf(cert) => Some(CertificateReport {
            latin_rows: cert.decomposition().to_latin_square().rows_one_based(),
            t_vector: cert.tvector().periods().to_vec(),
        }),
        SchedulerMode::Mtdma(_) => None,
    };
    let mode_label = mode.label().to_string();

    let mut state = SwitchState::new(
        &table,
        mode,
        horizon,
        scenario.voq_capacity,
        scenario.islip_iterations,
    );

    // BE arrival source: a per-slot bucket list or a seeded Bernoulli drizzle.
    let mut explicit: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut bernoulli: Option<(ChaCha8Rng, f64)> = None;
    if let Some(be) = &scenario.be_traffic {
        if let Some(injections) = &be.explicit {
            explicit = vec![Vec::new(); horizon as usize];
            for inj in injections {
                // Injections at or past the horizon never happen.
                if inj.slot < horizon {
                    explicit[inj.slot as usize].push((inj.input - 1, inj.output - 1));
                }
            }
        }
        if let Some(b) = &be.bernoulli {
            bernoulli = Some((ChaCha8Rng::seed_from_u64(b.seed), b.rate));
        }
    }

    let mut row = TraceRow::default();
    let mut arrivals: Vec<(usize, usize)> = Vec::new();
    for t in 0..horizon {
        arrivals.clear();
        if !explicit.is_empty() {
            arrivals.extend_from_slice(&explicit[t as usize]);
        }
        if let Some((rng, rate)) = &mut bernoulli {
            // Row-major VOQ order per slot keeps runs reproducible.
            for i in 0..n {
                for j in 0..n {
                    if rng.gen_bool(*rate) {
                        arrivals.push((i, j));
                    }
                }
            }
        }
        state.step(&arrivals, &mut row);
        if let Some(obs) = &mut observer {
            obs(&row);
        }
    }

    assert!(state.check_conservation(), "cell conservation violated");

    let metrics = state.metrics();
    let per_flow = admitted
        .iter()
        .map(|f| {
            let idx = (f.input - 1) * n + (f.output - 1);
            let delivered = metrics.ts_delivered[idx];
            PerFlowReport {
                input: f.input,
                output: f.output,
                arrivals: metrics.ts_arrivals[idx],
                delivered,
                expired: metrics.ts_expired[idx],
                live_at_end: state.live_cell_count(f.input - 1, f.output - 1),
                max_delay: metrics.ts_delay_max[idx],
                mean_delay: if delivered == 0 {
                    0.0
                } else {
                    metrics.ts_delay_sum[idx] as f64 / delivered as f64
                },
            }
        })
        .collect();

    Ok(SimulationReport {
        n,
        mode: mode_label,
        sim_slots: horizon,
        admitted,
        rejected,
        certificate,
        per_flow,
        be: BeReport {
            arrivals: metrics.be_arrivals,
            delivered: metrics.be_delivered,
            drops: metrics.be_overflow_drops,
            backlog_at_end: state.be_backlog(),
            mean_backlog: metrics.mean_backlog(),
        },
    })
}
