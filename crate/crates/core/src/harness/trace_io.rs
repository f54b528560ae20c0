//! Regret traces as CSV: `t,loss,cum_loss,comparator_cum_loss,regret,avg_regret`.
//!
//! Floats are written in scientific notation with 17 significant digits, so
//! parsing a file reproduces the in-memory values bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::container::write_atomic;
use crate::error::{Error, Result};
use crate::oco::{RegretRecord, RegretTrace};

pub const TRACE_HEADER: &str = "t,loss,cum_loss,comparator_cum_loss,regret,avg_regret";

/// Tolerance of the regret-column identity, relative to `max(1, |cum_loss|)`.
pub const IDENTITY_TOL: f64 = 1e-9;

fn push_float(out: &mut String, v: f64) {
    if v.is_finite() {
        write!(out, "{v:.16e}").expect("string write");
    } else {
        write!(out, "{v}").expect("string write");
    }
}

pub fn format_trace(trace: &RegretTrace) -> String {
    let mut out = String::with_capacity(32 + trace.len() * 140);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in trace.records() {
        write!(out, "{}", r.t).expect("string write");
        for v in [r.loss, r.cum_loss, r.comparator_cum_loss, r.regret, r.avg_regret] {
            out.push(',');
            push_float(&mut out, v);
        }
        out.push('\n');
    }
    out
}

pub fn parse_trace(text: &str) -> Result<RegretTrace> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == TRACE_HEADER => {}
        other => {
            return Err(Error::invalid(format!(
                "trace header mismatch: expected `{TRACE_HEADER}`, got `{}`",
                other.unwrap_or("")
            )))
        }
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(Error::invalid(format!("trace line {lineno}: expected 6 columns, got {}", cols.len())));
        }
        let t = cols[0]
            .parse::<usize>()
            .map_err(|e| Error::invalid(format!("trace line {lineno}, column t: {e}")))?;
        let mut f = [0.0; 5];
        for (slot, s) in f.iter_mut().zip(&cols[1..]) {
            *slot = s
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("trace line {lineno}: `{s}`: {e}")))?;
        }
        records.push(RegretRecord {
            t,
            loss: f[0],
            cum_loss: f[1],
            comparator_cum_loss: f[2],
            regret: f[3],
            avg_regret: f[4],
        });
    }
    Ok(RegretTrace::from_records(records))
}

/// Check `regret = cum_loss − comparator_cum_loss` on every row.
pub fn check_regret_identity(trace: &RegretTrace) -> Result<()> {
    for r in trace.records() {
        let expect = r.cum_loss - r.comparator_cum_loss;
        if !((r.regret - expect).abs() <= IDENTITY_TOL * r.cum_loss.abs().max(1.0)) {
            return Err(Error::invalid(format!(
                "regret identity fails at t={}: {} vs {}",
                r.t, r.regret, expect
            )));
        }
    }
    Ok(())
}

/// Write the trace atomically, then re-read the file and verify the regret
/// identity from its contents.
pub fn emit_trace(trace: &RegretTrace, path: &Path) -> Result<()> {
    write_atomic(path, format_trace(trace).as_bytes())?;
    let back = parse_trace(&std::fs::read_to_string(path)?)?;
    check_regret_identity(&back)
}
