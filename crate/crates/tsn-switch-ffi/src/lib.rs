//! C ABI for the `tsn-switch` library.
//!
//! Conventions:
//! - Every fallible function returns a [`TsnStatus`]; out-parameters are only
//!   written on `TSN_STATUS_OK`.
//! - `char*` outputs are NUL-terminated, allocated by this library, and must
//!   be released with [`tsn_string_free`].
//! - [`tsn_last_error`] returns a human-readable message for the most recent
//!   failure on the calling thread.
//! - A [`TsnScenario`] is an opaque handle from [`tsn_scenario_parse`];
//!   release it with [`tsn_scenario_free`]. Handles are not thread-safe to
//!   mutate, but all functions here only read them.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fmt::Display;
use std::panic::{catch_unwind, AssertUnwindSafe};

use tsn_switch::admission::AdmissionError;
use tsn_switch::scenario::{trace_row_csv, CertificateReport, Scenario, TRACE_CSV_HEADER};
use tsn_switch::switchsim::SimError;
use tsn_switch::types::{Slots, TrafficSpec};
use tsn_switch::{check_sc1, count_decompositions, edf_trace, run_scenario, search_sc2, TVector};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsnStatus {
    /// Success; out-parameters are valid.
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    /// An input string was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Scenario JSON failed to parse or validate; see `tsn_last_error`.
    ParseError = 3,
    /// The request is well-formed but has no feasible answer (no certificate,
    /// overloaded T-vector, or an override that does not certify the flows).
    Infeasible = 4,
    /// The switch order is outside the supported range for this operation.
    UnsupportedSize = 5,
    /// The simulation failed; see `tsn_last_error`.
    SimulationError = 6,
}

/// Opaque parsed-scenario handle.
pub struct TsnScenario {
    inner: Scenario,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Display) {
    let text = message.to_string().replace('\0', " ");
    let stored = CString::new(text).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(stored));
}

fn fail(status: TsnStatus, message: impl Display) -> TsnStatus {
    set_last_error(message);
    status
}

/// Runs `body`, converting a panic into `SimulationError` so unwinding never
/// crosses the C boundary.
fn guarded(body: impl FnOnce() -> TsnStatus) -> TsnStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal panic".to_string());
            fail(TsnStatus::SimulationError, format_args!("internal panic: {message}"))
        }
    }
}

/// The full flow table of a scenario (admission control not applied).
fn table_of(scenario: &Scenario) -> Result<TrafficSpec, TsnStatus> {
    let mut table =
        TrafficSpec::empty(scenario.n).map_err(|e| fail(TsnStatus::ParseError, e))?;
    for f in &scenario.ts_flows {
        table
            .add_flow(f.input - 1, f.output - 1, f.offset, f.period)
            .map_err(|e| fail(TsnStatus::ParseError, e))?;
    }
    Ok(table)
}

fn status_of_sim_error(e: &SimError) -> TsnStatus {
    match e {
        SimError::MedfInfeasible | SimError::OverrideNotCertifying(_) | SimError::Sc1Violated => {
            TsnStatus::Infeasible
        }
        SimError::Admission(AdmissionError::UnsupportedSize { .. }) => TsnStatus::UnsupportedSize,
        _ => TsnStatus::SimulationError,
    }
}

/// Hands a Rust string to the caller as a `tsn_string_free`-able C string.
/// Interior NULs (never produced by our serializers) become spaces.
fn export_string(text: String) -> *mut c_char {
    let sanitized = if text.contains('\0') { text.replace('\0', " ") } else { text };
    CString::new(sanitized).expect("NULs stripped").into_raw()
}

/// Library version as a static NUL-terminated string. Never free it.
#[no_mangle]
pub extern "C" fn tsn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Message for the most recent failure on the calling thread, or NULL if no
/// failure has occurred. Valid until the next failing call on this thread;
/// never free it.
#[no_mangle]
pub extern "C" fn tsn_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(message) => message.as_ptr(),
        None => std::ptr::null(),
    })
}

/// Releases a string allocated by this library.
///
/// # Safety
/// `text` must be NULL or a pointer previously returned through a `char**`
/// out-parameter of this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsn_string_free(text: *mut c_char) {
    if !text.is_null() {
        drop(CString::from_raw(text));
    }
}

/// Parses and validates scenario JSON into an opaque handle.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_scenario` must be a valid
/// pointer. On `TSN_STATUS_OK` the caller owns the handle and must release it
/// with [`tsn_scenario_free`].
#[no_mangle]
pub unsafe extern "C" fn tsn_scenario_parse(
    json: *const c_char,
    out_scenario: *mut *mut TsnScenario,
) -> TsnStatus {
    if json.is_null() || out_scenario.is_null() {
        return fail(TsnStatus::NullArgument, "json and out_scenario must be non-NULL");
    }
    let text = match CStr::from_ptr(json).to_str() {
        Ok(t) => t,
        Err(e) => return fail(TsnStatus::InvalidUtf8, e),
    };
    guarded(|| match tsn_switch::parse_scenario(text) {
        Ok(inner) => {
            out_scenario.write(Box::into_raw(Box::new(TsnScenario { inner })));
            TsnStatus::Ok
        }
        Err(e) => fail(TsnStatus::ParseError, e),
    })
}

/// Releases a scenario handle.
///
/// # Safety
/// `scenario` must be NULL or a handle from [`tsn_scenario_parse`] not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn tsn_scenario_free(scenario: *mut TsnScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Checks the all-periods-at-least-N admission condition over the scenario's
/// full flow list.
///
/// # Safety
/// `scenario` must be a live handle from [`tsn_scenario_parse`]; `out_holds`
/// must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tsn_check_sc1(
    scenario: *const TsnScenario,
    out_holds: *mut bool,
) -> TsnStatus {
    if scenario.is_null() || out_holds.is_null() {
        return fail(TsnStatus::NullArgument, "scenario and out_holds must be non-NULL");
    }
    let scenario = &(*scenario).inner;
    guarded(|| {
        let table = match table_of(scenario) {
            Ok(t) => t,
            Err(status) => return status,
        };
        out_holds.write(check_sc1(&table));
        TsnStatus::Ok
    })
}

/// Searches for a decomposition/T-vector certificate over the scenario's full
/// flow list. On `TSN_STATUS_OK`, `*out_feasible` says whether one exists;
/// if it does and `out_certificate_json` is non-NULL, `*out_certificate_json`
/// receives the certificate as JSON (`latin_rows`, `t_vector` with `null`
/// meaning never scheduled). Returns `TSN_STATUS_UNSUPPORTED_SIZE` for
/// switches too large for the exhaustive search.
///
/// # Safety
/// `scenario` must be a live handle from [`tsn_scenario_parse`];
/// `out_feasible` must be valid; `out_certificate_json` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn tsn_check_sc2(
    scenario: *const TsnScenario,
    out_feasible: *mut bool,
    out_certificate_json: *mut *mut c_char,
) -> TsnStatus {
    if scenario.is_null() || out_feasible.is_null() {
        return fail(TsnStatus::NullArgument, "scenario and out_feasible must be non-NULL");
    }
    let scenario = &(*scenario).inner;
    guarded(|| {
        let table = match table_of(scenario) {
            Ok(t) => t,
            Err(status) => return status,
        };
        match search_sc2(&table) {
            Ok(Some(cert)) => {
                if !out_certificate_json.is_null() {
                    let report = CertificateReport {
                        latin_rows: cert.decomposition().to_latin_square().rows_one_based(),
                        t_vector: cert.tvector().periods().to_vec(),
                    };
                    let text =
                        serde_json::to_string(&report).expect("certificate serializes");
                    out_certificate_json.write(export_string(text));
                }
                out_feasible.write(true);
                TsnStatus::Ok
            }
            Ok(None) => {
                if !out_certificate_json.is_null() {
                    out_certificate_json.write(std::ptr::null_mut());
                }
                out_feasible.write(false);
                TsnStatus::Ok
            }
            Err(e @ AdmissionError::UnsupportedSize { .. }) => fail(TsnStatus::UnsupportedSize, e),
            Err(e) => fail(TsnStatus::SimulationError, e),
        }
    })
}

unsafe fn simulate_impl(
    scenario: *const TsnScenario,
    out_report_json: *mut *mut c_char,
    out_trace_csv: *mut *mut c_char,
) -> TsnStatus {
    if scenario.is_null() || out_report_json.is_null() {
        return fail(TsnStatus::NullArgument, "scenario and out_report_json must be non-NULL");
    }
    let scenario = &(*scenario).inner;
    guarded(|| {
        let mut trace = if out_trace_csv.is_null() {
            None
        } else {
            let mut text = String::from(TRACE_CSV_HEADER);
            text.push('\n');
            Some(text)
        };
        let report = {
            let mut observer = |row: &tsn_switch::TraceRow| {
                if let Some(text) = &mut trace {
                    text.push_str(&trace_row_csv(row));
                    text.push('\n');
                }
            };
            match run_scenario(scenario, Some(&mut observer)) {
                Ok(r) => r,
                Err(e) => return fail(status_of_sim_error(&e), e),
            }
        };
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        out_report_json.write(export_string(text));
        if let Some(text) = trace {
            out_trace_csv.write(export_string(text));
        }
        TsnStatus::Ok
    })
}

/// Runs a scenario and returns the simulation report as pretty-printed JSON.
///
/// # Safety
/// `scenario` must be a live handle from [`tsn_scenario_parse`];
/// `out_report_json` must be valid. On `TSN_STATUS_OK` the caller frees
/// `*out_report_json` with [`tsn_string_free`].
#[no_mangle]
pub unsafe extern "C" fn tsn_simulate(
    scenario: *const TsnScenario,
    out_report_json: *mut *mut c_char,
) -> TsnStatus {
    simulate_impl(scenario, out_report_json, std::ptr::null_mut())
}

/// Like [`tsn_simulate`], additionally returning the per-slot trace as CSV
/// (header line included).
///
/// # Safety
/// As [`tsn_simulate`]; `out_trace_csv` must also be valid, and on
/// `TSN_STATUS_OK` the caller frees both strings with [`tsn_string_free`].
#[no_mangle]
pub unsafe extern "C" fn tsn_simulate_with_trace(
    scenario: *const TsnScenario,
    out_report_json: *mut *mut c_char,
    out_trace_csv: *mut *mut c_char,
) -> TsnStatus {
    if out_trace_csv.is_null() {
        return fail(TsnStatus::NullArgument, "out_trace_csv must be non-NULL");
    }
    simulate_impl(scenario, out_report_json, out_trace_csv)
}

/// Number of flow decomposition sets of order `n` (supported for 2 ≤ n ≤ 7).
///
/// # Safety
/// `out_count` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tsn_count_decompositions(n: u32, out_count: *mut u64) -> TsnStatus {
    if out_count.is_null() {
        return fail(TsnStatus::NullArgument, "out_count must be non-NULL");
    }
    guarded(|| match count_decompositions(n as usize) {
        Ok(count) => {
            out_count.write(count);
            TsnStatus::Ok
        }
        Err(e) => fail(TsnStatus::UnsupportedSize, e),
    })
}

/// Computes the single-processor EDF service order for a set of periodic
/// tasks. `periods[k]` is task k's period in slots, with 0 meaning the task
/// is never scheduled. Fills `out_tasks[0..out_len]` with 0 for an idle slot
/// and k+1 when task k is served. Fails with `TSN_STATUS_INFEASIBLE` when the
/// periods overload the processor (utilization above 1).
///
/// # Safety
/// `periods` must point to `n_tasks` readable elements and `out_tasks` to
/// `out_len` writable elements (either may be NULL when its length is 0).
#[no_mangle]
pub unsafe extern "C" fn tsn_edf_trace(
    periods: *const u64,
    n_tasks: usize,
    out_tasks: *mut i32,
    out_len: usize,
) -> TsnStatus {
    if (periods.is_null() && n_tasks > 0) || (out_tasks.is_null() && out_len > 0) {
        return fail(
            TsnStatus::NullArgument,
            "periods and out_tasks must be non-NULL when their lengths are nonzero",
        );
    }
    let periods: Vec<Slots> = if n_tasks == 0 {
        Vec::new()
    } else {
        std::slice::from_raw_parts(periods, n_tasks)
            .iter()
            .map(|&p| if p == 0 { Slots::Inf } else { Slots::Finite(p) })
            .collect()
    };
    guarded(|| {
        let tvector = match TVector::new(periods.clone()) {
            Ok(tv) => tv,
            Err(e) => return fail(TsnStatus::Infeasible, e),
        };
        let trace = edf_trace(&tvector, out_len as u64);
        for (t, served) in trace.served().iter().enumerate() {
            let value = match served {
                Some(k) => (k + 1) as i32,
                None => 0,
            };
            out_tasks.add(t).write(value);
        }
        TsnStatus::Ok
    })
}
