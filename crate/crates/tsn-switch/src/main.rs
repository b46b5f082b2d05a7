//! Command-line front end: simulate scenarios, check admission conditions,
//! enumerate/count decomposition sets, and print EDF service traces.
//!
//! Exit codes: 0 on success, 1 for infeasible/rejection outcomes (SC1 fails,
//! no SC2 certificate, rejected flows, infeasible T-vector), 2 for usage or
//! parse errors.

use clap::{Parser, Subcommand};
use serde_json::json;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use tsn_switch::latin::enumerate_latin_squares;
use tsn_switch::scenario::{parse_scenario, trace_row_csv, Scenario, TRACE_CSV_HEADER};
use tsn_switch::types::{Slots, TrafficSpec};
use tsn_switch::{check_sc1, count_decompositions, edf_trace, run_scenario, search_sc2, TVector};

#[derive(Parser)]
#[command(
    name = "tsn-switch",
    version,
    about = "Slot-level simulator and admission checker for input-queued switches with hard-deadline flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and print the simulation report as JSON
    Simulate {
        /// Scenario JSON file
        file: PathBuf,
        /// Write the per-slot trace as CSV to this path
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check the all-periods-at-least-N admission condition for a scenario's TS flows
    CheckSc1 {
        /// Scenario JSON file
        file: PathBuf,
    },
    /// Search for a decomposition/T-vector certificate for a scenario's TS flows
    CheckSc2 {
        /// Scenario JSON file
        file: PathBuf,
    },
    /// Stream all flow decomposition sets of order n as Latin-square rows
    Enumerate {
        #[arg(long)]
        n: usize,
    },
    /// Print the number of flow decomposition sets of order n
    Count {
        #[arg(long)]
        n: usize,
    },
    /// Print the single-processor EDF service order for a T-vector
    EdfTrace {
        /// Comma-separated periods, e.g. 2,4,8,8 (use "inf" for never)
        #[arg(long, value_delimiter = ',')]
        tvector: Vec<String>,
        /// Number of slots to print
        #[arg(long)]
        slots: u64,
    },
}

const EXIT_INFEASIBLE: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn load_scenario(path: &PathBuf) -> Result<Scenario, ExitCode> {
    let text = fs::read_to_string(path)
        .map_err(|e| fail(EXIT_USAGE, format_args!("{}: {e}", path.display())))?;
    parse_scenario(&text).map_err(|e| fail(EXIT_USAGE, e))
}

/// The metadata table for a scenario's full flow list (admission not applied).
fn table_of(scenario: &Scenario) -> Result<TrafficSpec, ExitCode> {
    let mut table = TrafficSpec::empty(scenario.n).map_err(|e| fail(EXIT_USAGE, e))?;
    for f in &scenario.ts_flows {
        table
            .add_flow(f.input - 1, f.output - 1, f.offset, f.period)
            .map_err(|e| fail(EXIT_USAGE, e))?;
    }
    Ok(table)
}

fn cmd_simulate(file: PathBuf, trace: Option<PathBuf>) -> ExitCode {
    let scenario = match load_scenario(&file) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let mut trace_out: Option<Box<dyn Write>> = match &trace {
        Some(path) => match fs::File::create(path) {
            Ok(f) => Some(Box::new(std::io::BufWriter::new(f))),
            Err(e) => return fail(EXIT_USAGE, format_args!("{}: {e}", path.display())),
        },
        None => {
            if scenario.emit_trace {
                Some(Box::new(std::io::stderr().lock()))
            } else {
                None
            }
        }
    };
    if let Some(out) = &mut trace_out {
        if writeln!(out, "{TRACE_CSV_HEADER}").is_err() {
            return fail(EXIT_USAGE, "cannot write trace output");
        }
    }
    let mut write_failed = false;
    let mut observer = |row: &tsn_switch::TraceRow| {
        if let Some(out) = &mut trace_out {
            if writeln!(out, "{}", trace_row_csv(row)).is_err() {
                write_failed = true;
            }
        }
    };
    let report = match run_scenario(&scenario, Some(&mut observer)) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_INFEASIBLE, e),
    };
    if let Some(out) = &mut trace_out {
        write_failed |= out.flush().is_err();
    }
    if write_failed {
        return fail(EXIT_USAGE, "cannot write trace output");
    }
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if report.rejected.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INFEASIBLE)
    }
}

fn cmd_check_sc1(file: PathBuf) -> ExitCode {
    let scenario = match load_scenario(&file) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let table = match table_of(&scenario) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let holds = check_sc1(&table);
    let decision = if holds { "SC1_HOLDS" } else { "SC1_FAILS" };
    println!("{}", json!({ "n": scenario.n, "decision": decision }));
    if holds {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_INFEASIBLE)
    }
}

fn cmd_check_sc2(file: PathBuf) -> ExitCode {
    let scenario = match load_scenario(&file) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let table = match table_of(&scenario) {
        Ok(t) => t,
        Err(code) => return code,
    };
    match search_sc2(&table) {
        Ok(Some(cert)) => {
            let out = json!({
                "n": scenario.n,
                "decision": "SC2_FEASIBLE",
                "certificate": {
                    "latin_rows": cert.decomposition().to_latin_square().rows_one_based(),
                    "t_vector": cert.tvector().periods(),
                },
            });
            println!("{out}");
            ExitCode::SUCCESS
        }
        Ok(None) => {
            println!("{}", json!({ "n": scenario.n, "decision": "SC2_INFEASIBLE" }));
            ExitCode::from(EXIT_INFEASIBLE)
        }
        Err(e) => fail(EXIT_USAGE, e),
    }
}

fn cmd_enumerate(n: usize) -> ExitCode {
    let squares = match enumerate_latin_squares(n) {
        Ok(iter) => iter,
        Err(e) => return fail(EXIT_USAGE, e),
    };
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    for square in squares {
        let line = square
            .rows_one_based()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join(";");
        if writeln!(out, "{line}").is_err() {
            return fail(EXIT_USAGE, "cannot write to stdout");
        }
    }
    ExitCode::SUCCESS
}

fn cmd_count(n: usize) -> ExitCode {
    match count_decompositions(n) {
        Ok(count) => {
            println!("{count}");
            ExitCode::SUCCESS
        }
        Err(e) => fail(EXIT_USAGE, e),
    }
}

fn cmd_edf_trace(tvector: Vec<String>, slots: u64) -> ExitCode {
    let mut periods = Vec::with_capacity(tvector.len());
    for entry in &tvector {
        let trimmed = entry.trim();
        if trimmed.eq_ignore_ascii_case("inf") {
            periods.push(Slots::Inf);
        } else {
            match trimmed.parse::<u64>() {
                Ok(v) => periods.push(Slots::Finite(v)),
                Err(_) => {
                    return fail(
                        EXIT_USAGE,
                        format_args!("invalid period {trimmed:?}: expected an integer or \"inf\""),
                    )
                }
            }
        }
    }
    let tvector = match TVector::new(periods) {
        Ok(tv) => tv,
        Err(e) => return fail(EXIT_INFEASIBLE, e),
    };
    let trace = edf_trace(&tvector, slots);
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    for (t, served) in trace.served().iter().enumerate() {
        let task = served.map(|k| (k + 1).to_string()).unwrap_or_default();
        if writeln!(out, "{t},{task}").is_err() {
            return fail(EXIT_USAGE, "cannot write to stdout");
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Simulate { file, trace } => cmd_simulate(file, trace),
        Command::CheckSc1 { file } => cmd_check_sc1(file),
        Command::CheckSc2 { file } => cmd_check_sc2(file),
        Command::Enumerate { n } => cmd_enumerate(n),
        Command::Count { n } => cmd_count(n),
        Command::EdfTrace { tvector, slots } => cmd_edf_trace(tvector, slots),
    }
}
