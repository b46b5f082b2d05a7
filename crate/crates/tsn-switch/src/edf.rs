//! The virtual single-processor task system behind M-EDF.
//!
//! Each matching k becomes a periodic task: one unit of work every T_k slots,
//! due before the next release. Earliest-deadline-first on one processor
//! completes every request whenever total utilization Σ 1/T_k is at most 1,
//! so the per-slot service order doubles as a matching schedule with a
//! guaranteed service slot inside every period window.

use crate::types::Slots;
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EdfError {
    #[error("task {k} has period 0; periods must be at least 1 slot")]
    ZeroPeriod { k: usize },
    #[error("total utilization {utilization} exceeds 1; the task system is infeasible")]
    InfeasibleUtilization { utilization: String },
}

/// Exact total utilization Σ 1/T_k of a period list; infinite periods
/// contribute zero. Exact rational arithmetic matters here: feasible systems
/// routinely sit precisely on the utilization-1 boundary.
pub fn utilization_of(periods: &[Slots]) -> BigRational {
    periods.iter().fold(BigRational::zero(), |acc, p| match p {
        Slots::Finite(t) => acc + BigRational::new(BigInt::one(), BigInt::from(*t)),
        Slots::Inf => acc,
    })
}

/// Scheduling periods for the n matchings, one per task. Construction
/// enforces nonzero periods and total utilization at most 1, so every
/// `TVector` is feasible by type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TVector {
    periods: Vec<Slots>,
}

impl TVector {
    pub fn new(periods: Vec<Slots>) -> Result<Self, EdfError> {
        for (k, p) in periods.iter().enumerate() {
            if *p == Slots::Finite(0) {
                return Err(EdfError::ZeroPeriod { k });
            }
        }
        let utilization = utilization_of(&periods);
        if utilization > BigRational::one() {
            return Err(EdfError::InfeasibleUtilization {
                utilization: utilization.to_string(),
            });
        }
        Ok(Self { periods })
    }

    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn period(&self, k: usize) -> Slots {
        self.periods[k]
    }

    pub fn periods(&self) -> &[Slots] {
        &self.periods
    }

    pub fn utilization(&self) -> BigRational {
        utilization_of(&self.periods)
    }

    /// Least common multiple of the finite periods, or 1 when every period is
    /// infinite. The service order repeats with this period. Saturates at
    /// `u128::MAX` on overflow — callers treat anything beyond their horizon
    /// as "no repetition available".
    pub fn hyperperiod(&self) -> u128 {
        let mut acc: u128 = 1;
        for p in &self.periods {
            if let Slots::Finite(t) = p {
                let t = *t as u128;
                let g = acc.gcd(&t);
                acc = match (acc / g).checked_mul(t) {
                    Some(v) => v,
                    None => return u128::MAX,
                };
            }
        }
        acc
    }
}

/// The task index served at each slot of a window starting at slot 0;
/// `None` marks idle slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdfTrace {
    served: Vec<Option<usize>>,
}

impl EdfTrace {
    pub fn horizon(&self) -> u64 {
        self.served.len() as u64
    }

    pub fn task_at(&self, t: u64) -> Option<usize> {
        self.served[t as usize]
    }

    pub fn served(&self) -> &[Option<usize>] {
        &self.served
    }
}

/// Simulates the single-processor system under EDF for `horizon` slots.
///
/// Task k releases a request at every multiple of its period, due by the end
/// of the slot before its next release. Each slot serves the live request
/// with the earliest deadline, breaking ties toward the lowest task index; a
/// slot with no live request idles.
pub fn edf_trace(tvector: &TVector, horizon: u64) -> EdfTrace {
    let n = tvector.len();
    // Deadline of the one unserved request per task, if any. A feasible
    // system never holds more than one: the previous request is always served
    // before the next release.
    let mut pending: Vec<Option<u64>> = vec![None; n];
    let mut served = Vec::with_capacity(horizon as usize);
    for t in 0..horizon {
        for (k, p) in tvector.periods().iter().enumerate() {
            if let Slots::Finite(period) = p {
                if t % period == 0 {
                    debug_assert!(
                        pending[k].is_none(),
                        "EDF left a request unserved past its deadline at utilization <= 1"
                    );
                    pending[k] = Some(t + period - 1);
                }
            }
        }
        let choice = pending
            .iter()
            .enumerate()
            .filter_map(|(k, d)| d.map(|deadline| (deadline, k)))
            .filter(|&(deadline, _)| deadline >= t)
            .min();
        served.push(match choice {
            Some((_, k)) => {
                pending[k] = None;
                Some(k)
            }
            None => None,
        });
    }
    EdfTrace { served }
}

/// Independent replay check of a service trace: within every complete period
/// window of every finite-period task the trace must serve that task exactly
/// once, the incomplete tail window at most once, and tasks with infinite
/// periods never.
pub fn verify_no_deadline_miss(tvector: &TVector, trace: &EdfTrace) -> bool {
    let horizon = trace.horizon();
    for &slot in trace.served() {
        if let Some(k) = slot {
            if k >= tvector.len() || !tvector.period(k).is_finite() {
                return false;
            }
        }
    }
    for k in 0..tvector.len() {
        let Slots::Finite(period) = tvector.period(k) else {
            continue;
        };
        let mut window_start = 0u64;
        while window_start + period <= horizon {
            let served = (window_start..window_start + period)
                .filter(|&t| trace.task_at(t) == Some(k))
                .count();
            if served != 1 {
                return false;
            }
            window_start += period;
        }
        let tail_served = (window_start.min(horizon)..horizon)
            .filter(|&t| trace.task_at(t) == Some(k))
            .count();
        if tail_served > 1 {
            return false;
        }
    }
    true
}
