//! Experiment rows, the result CSV, and the aggregation behind `report`.
//!
//! Floating-point fields print through `Display`, which emits the shortest
//! decimal that parses back to the same bits, so emit → parse is exact and
//! reruns can be compared byte-for-byte.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use regnn_core::error::{Error, Result};

use crate::config::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Fomaml,
    Reptile,
    JointAdapt,
    Joint,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Fomaml,
        Method::Reptile,
        Method::JointAdapt,
        Method::Joint,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Fomaml => "fomaml",
            Method::Reptile => "reptile",
            Method::JointAdapt => "joint-adapt",
            Method::Joint => "joint",
        })
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fomaml" => Ok(Method::Fomaml),
            "reptile" => Ok(Method::Reptile),
            "joint-adapt" => Ok(Method::JointAdapt),
            "joint" => Ok(Method::Joint),
            other => Err(Error::Format(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum XKind {
    Samples,
    Radius,
}

impl fmt::Display for XKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            XKind::Samples => "samples",
            XKind::Radius => "radius",
        })
    }
}

impl FromStr for XKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "samples" => Ok(XKind::Samples),
            "radius" => Ok(XKind::Radius),
            other => Err(Error::Format(format!("unknown x_kind {other:?}"))),
        }
    }
}

/// One scored (method, grid point, repetition) cell.
///
/// `relative_gain` is `(C_meta - C_joint_adapt) / C_meta`, filled only on
/// meta-method rows whose baseline ran the identical task, seed, and
/// adaptation data; it is NaN elsewhere. Equality is bitwise on the float
/// fields so NaN rows still round-trip.
#[derive(Debug, Clone, Copy)]
pub struct ResultRow {
    pub method: Method,
    pub scenario: Scenario,
    pub x_kind: XKind,
    pub x_value: f64,
    pub seed: u64,
    pub sum_rate_bits: f64,
    pub relative_gain: f64,
}

impl PartialEq for ResultRow {
    fn eq(&self, other: &Self) -> bool {
        self.method == other.method
            && self.scenario == other.scenario
            && self.x_kind == other.x_kind
            && self.x_value.to_bits() == other.x_value.to_bits()
            && self.seed == other.seed
            && self.sum_rate_bits.to_bits() == other.sum_rate_bits.to_bits()
            && self.relative_gain.to_bits() == other.relative_gain.to_bits()
    }
}

pub const CSV_HEADER: &str = "method,scenario,x_kind,x_value,seed,sum_rate_bits,relative_gain";

/// Fixed row order: method, then grid value, then seed.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(a.x_kind.cmp(&b.x_kind))
            .then(a.x_value.total_cmp(&b.x_value))
            .then(a.seed.cmp(&b.seed))
    });
}

pub fn emit_csv(rows: &[ResultRow], w: &mut impl Write) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("refusing to emit an empty result".into()));
    }
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.method, r.scenario, r.x_kind, r.x_value, r.seed, r.sum_rate_bits, r.relative_gain
        )?;
    }
    Ok(())
}

/// Emit to a file; an empty result leaves no file behind.
pub fn write_csv_file(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Config("refusing to emit an empty result".into()));
    }
    let mut buf = Vec::new();
    emit_csv(rows, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Format(format!(
                "expected result header {CSV_HEADER:?}, got {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Format(format!(
                "result line {}: expected 7 fields, got {}",
                i + 2,
                fields.len()
            )));
        }
        let bad = |what: &str, e: &dyn fmt::Display| {
            Error::Format(format!("result line {}: bad {what}: {e}", i + 2))
        };
        rows.push(ResultRow {
            method: fields[0].parse()?,
            scenario: fields[1]
                .parse()
                .map_err(|e| bad("scenario", &e))?,
            x_kind: fields[2].parse()?,
            x_value: fields[3].parse().map_err(|e| bad("x_value", &e))?,
            seed: fields[4].parse().map_err(|e| bad("seed", &e))?,
            sum_rate_bits: fields[5]
                .parse()
                .map_err(|e| bad("sum_rate_bits", &e))?,
            relative_gain: fields[6]
                .parse()
                .map_err(|e| bad("relative_gain", &e))?,
        });
    }
    Ok(rows)
}

/// Per-(method, grid point) summary over repetitions.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub method: Method,
    pub x_kind: XKind,
    pub x_value: f64,
    pub runs: usize,
    pub mean_sum_rate: f64,
    pub se_sum_rate: f64,
    /// NaN when no row in the group carries a gain.
    pub mean_relative_gain: f64,
    pub se_relative_gain: f64,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let mut out: Vec<AggregateRow> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let head = sorted[i];
        let mut rates = Vec::new();
        let mut gains = Vec::new();
        while i < sorted.len()
            && sorted[i].method == head.method
            && sorted[i].x_kind == head.x_kind
            && sorted[i].x_value.to_bits() == head.x_value.to_bits()
        {
            rates.push(sorted[i].sum_rate_bits);
            if sorted[i].relative_gain.is_finite() {
                gains.push(sorted[i].relative_gain);
            }
            i += 1;
        }
        let (mean_rate, se_rate) = mean_and_se(&rates);
        let (mean_gain, se_gain) = mean_and_se(&gains);
        out.push(AggregateRow {
            method: head.method,
            x_kind: head.x_kind,
            x_value: head.x_value,
            runs: rates.len(),
            mean_sum_rate: mean_rate,
            se_sum_rate: se_rate,
            mean_relative_gain: mean_gain,
            se_relative_gain: se_gain,
        });
    }
    out
}

pub fn write_report(aggregates: &[AggregateRow], w: &mut impl Write) -> Result<()> {
    writeln!(
        w,
        "method,x_kind,x_value,runs,mean_sum_rate_bits,se_sum_rate_bits,mean_relative_gain,se_relative_gain"
    )?;
    for a in aggregates {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            a.method,
            a.x_kind,
            a.x_value,
            a.runs,
            a.mean_sum_rate,
            a.se_sum_rate,
            a.mean_relative_gain,
            a.se_relative_gain
        )?;
    }
    Ok(())
}
