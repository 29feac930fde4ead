//! Trajectory CSV files.
//!
//! Columns are `t,x1,y1,gap,Ex,Ey,eta_t,clamps`. `Ex`/`Ey` are empty for
//! players with more than two actions, and `eta_t` is the row player's
//! stepsize.

use std::io::{Read, Write};

use crate::analysis::{StageReport, StageTracker};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::numerics::{Context, Real};
use crate::regularizers::RegularizerConstants;

pub const CSV_HEADER: [&str; 8] = ["t", "x1", "y1", "gap", "Ex", "Ey", "eta_t", "clamps"];

/// Significant digits written when no precision is requested.
pub const DEFAULT_OUTPUT_DIGITS: usize = 30;

/// How many digits to print per value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputPrecision {
    Digits(usize),
    /// Shortest string that parses back to the identical value.
    Full,
}

impl Default for OutputPrecision {
    fn default() -> Self {
        Self::Digits(DEFAULT_OUTPUT_DIGITS)
    }
}

impl OutputPrecision {
    pub fn format(&self, v: &Real) -> String {
        match self {
            Self::Digits(n) => v.to_digits(*n),
            Self::Full => v.to_canonical(),
        }
    }
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub t: u64,
    pub x1: Real,
    pub y1: Real,
    pub gap: Real,
    pub ex: Option<Real>,
    pub ey: Option<Real>,
    pub eta: Real,
    pub clamps: u32,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

pub fn write_trajectory_csv<W: Write>(out: W, traj: &Trajectory, precision: OutputPrecision) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    let opt = |v: &Option<Real>| v.as_ref().map_or_else(String::new, |v| precision.format(v));
    for r in &traj.records {
        w.write_record([
            r.t.to_string(),
            precision.format(&r.x[0]),
            precision.format(&r.y[0]),
            precision.format(&r.gap),
            opt(&r.cum_x),
            opt(&r.cum_y),
            precision.format(&r.eta_x),
            r.clamps.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: Read>(input: R, ctx: &Context) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(csv_err)?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Csv(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows: Vec<CsvRow> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| Error::Csv(format!("row {}: bad {what}", line + 1));
        let real = |i: usize, what: &str| ctx.parse(&rec[i]).map_err(|_| bad(what));
        let opt_real = |i: usize, what: &str| {
            if rec[i].is_empty() {
                Ok(None)
            } else {
                real(i, what).map(Some)
            }
        };
        let row = CsvRow {
            t: rec[0].parse().map_err(|_| bad("t"))?,
            x1: real(1, "x1")?,
            y1: real(2, "y1")?,
            gap: real(3, "gap")?,
            ex: opt_real(4, "Ex")?,
            ey: opt_real(5, "Ey")?,
            eta: real(6, "eta_t")?,
            clamps: rec[7].parse().map_err(|_| bad("clamps"))?,
        };
        if rows.last().is_some_and(|p| p.t >= row.t) {
            return Err(bad("ordering of t"));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }
    Ok(rows)
}

/// Stage report over parsed CSV rows; `delta` and `eta` come from the caller.
pub fn stages_from_rows(rows: &[CsvRow], delta: &Real, constants: &RegularizerConstants, eta: &Real) -> StageReport {
    let mut tracker = StageTracker::with_default_floor(delta, constants, eta);
    for r in rows {
        tracker.push(r.t, &r.x1, &r.y1, &r.gap);
    }
    tracker.finish()
}
