//! Report and trace emission.
//!
//! Reports are JSON with a fixed field order. JSON has no spelling for
//! infinities, so interval endpoints that escape to ±∞ (a division across
//! zero in the outer constraint) are written as the strings `"inf"` and
//! `"-inf"`; every finite endpoint stays a plain number. Wall-clock fields
//! are omitted entirely under `--no-timings`, which makes a report a pure
//! function of the problem, the configuration, and the seed.
//!
//! Traces are CSV streams of the engine's per-iteration progress, one row
//! per iteration, starting at `t = 1` (the row for `t = 0` would always read
//! `0,1` and carries no information).

use std::fs;
use std::io::{self, Write as _};
use std::path::Path;

use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use veriprob_core::{BoundsState, Interval, ProgressPoint, StopReason, VerdictStatus, VerifyStop};

/// An interval endpoint: a JSON number, except `±∞` which become strings.
#[derive(Debug, Clone, Copy)]
pub struct Endpoint(pub f64);

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntervalDto {
    pub lo: Endpoint,
    pub hi: Endpoint,
}

impl From<Interval> for IntervalDto {
    fn from(iv: Interval) -> IntervalDto {
        IntervalDto {
            lo: Endpoint(iv.lo()),
            hi: Endpoint(iv.hi()),
        }
    }
}

impl Serialize for IntervalDto {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("IntervalDto", 2)?;
        st.serialize_field("lo", &self.lo)?;
        st.serialize_field("hi", &self.hi)?;
        st.end()
    }
}

/// The configuration a run actually used, echoed back so a report is
/// self-describing.
#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub bounds: &'static str,
    pub select: &'static str,
    pub split: &'static str,
    pub batch_size: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub max_iterations: Option<u64>,
    pub max_seconds: Option<f64>,
    pub target_width: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct TermStateDto {
    pub l: f64,
    pub u: f64,
    pub iterations: u64,
}

impl From<&BoundsState> for TermStateDto {
    fn from(s: &BoundsState) -> TermStateDto {
        TermStateDto {
            l: s.l,
            u: s.u,
            iterations: s.t,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub command: &'static str,
    pub problem: String,
    pub config: ConfigEcho,
    pub status: VerdictStatus,
    pub stop_reason: VerifyStop,
    pub g: IntervalDto,
    pub terms: Vec<TermStateDto>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct BoundReport {
    pub command: &'static str,
    pub problem: String,
    /// 1-based index of the bounded term.
    pub term: usize,
    pub config: ConfigEcho,
    pub l: f64,
    pub u: f64,
    pub iterations: u64,
    pub stop_reason: &'static str,
    /// Mass of branches that could neither be pruned nor split further;
    /// present only when the branch store ran empty.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parked_mass: Option<f64>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct EnumTermDto {
    /// Exact probability of the term's event.
    pub p: f64,
    /// Joint input points enumerated for this term.
    pub points: u64,
}

#[derive(Debug, Serialize)]
pub struct EnumerateReport {
    pub command: &'static str,
    pub problem: String,
    pub epsilon: f64,
    pub status: VerdictStatus,
    /// Exact value of the outer constraint; absent when it reduces to 0/0.
    pub g: Option<Endpoint>,
    pub terms: Vec<EnumTermDto>,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

pub fn stop_reason_label(stop: &StopReason) -> &'static str {
    match stop {
        StopReason::TargetWidthReached => "target-width",
        StopReason::Exhausted { .. } => "exhausted",
        StopReason::IterationBudget => "iteration-budget",
        StopReason::TimeBudget => "time-budget",
    }
}

/// Serialize a report and write it to `out`, or to stdout when no path was
/// given. Always pretty-printed, always newline-terminated.
pub fn emit<T: Serialize>(report: &T, out: Option<&Path>) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| anyhow::anyhow!("writing report to {}: {e}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn csv_row(
    w: &mut impl io::Write,
    term: Option<usize>,
    p: &ProgressPoint,
    mask_timings: bool,
) -> io::Result<()> {
    let elapsed = if mask_timings {
        0.0
    } else {
        p.elapsed.as_secs_f64()
    };
    if let Some(term) = term {
        write!(w, "{term},")?;
    }
    writeln!(w, "{},{},{},{},{elapsed:.6}", p.t, p.l, p.u, p.branches)
}

/// Write a single-term trace: columns `t,l,u,branches,elapsed`.
pub fn write_bound_trace(
    path: &Path,
    rows: &[ProgressPoint],
    mask_timings: bool,
) -> io::Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "t,l,u,branches,elapsed")?;
    for p in rows {
        csv_row(&mut buf, None, p, mask_timings)?;
    }
    fs::write(path, buf)
}

/// Write a verification trace: columns `term,t,l,u,branches,elapsed`, rows
/// in the exact order the round-robin schedule produced them. `term` is
/// 1-based to match `p₁, …, p_v`.
pub fn write_verify_trace(
    path: &Path,
    rows: &[(usize, ProgressPoint)],
    mask_timings: bool,
) -> io::Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "term,t,l,u,branches,elapsed")?;
    for (term, p) in rows {
        csv_row(&mut buf, Some(*term), p, mask_timings)?;
    }
    fs::write(path, buf)
}
