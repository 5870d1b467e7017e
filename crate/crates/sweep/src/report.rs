//! CSV and JSON emission.

use std::io::Write;

use serde::Serialize;

use crate::config::SweepConfig;
use crate::error::{Result, SweepError};
use crate::sweep::{Dataset, SweepRow};

pub const CSV_COLUMNS: [&str; 10] = [
    "distance_km",
    "N",
    "ratio",
    "I_AB",
    "chi_BE",
    "I_BB_max",
    "K_bit_per_pulse",
    "K_bps",
    "aggregate_bps",
    "binding_adversary",
];

/// Twelve significant digits, fixed notation for moderate magnitudes and
/// scientific otherwise, trailing zeros trimmed.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        trim(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim(mantissa.to_string()), exp)
    }
}

fn trim(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn out_err(e: impl std::fmt::Display) -> SweepError {
    SweepError::Output(e.to_string())
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(out_err)?;
    for r in rows {
        w.write_record([
            fmt_sig(r.distance_km),
            r.n.to_string(),
            fmt_sig(r.ratio),
            fmt_sig(r.i_ab),
            fmt_sig(r.chi_be),
            fmt_sig(r.i_bb_max),
            fmt_sig(r.k_bit_per_pulse),
            fmt_sig(r.k_bps),
            fmt_sig(r.aggregate_bps),
            r.binding_adversary.clone(),
        ])
        .map_err(out_err)?;
    }
    w.flush().map_err(out_err)
}

pub fn csv_string(rows: &[SweepRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    String::from_utf8(buf).map_err(out_err)
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub version: &'static str,
    pub command: String,
    pub config: SweepConfig,
    pub elapsed_s: f64,
}

impl Metadata {
    pub fn new(command: impl Into<String>, config: &SweepConfig, elapsed_s: f64) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config: config.clone(),
            elapsed_s,
        }
    }
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    metadata: &'a Metadata,
    rows: &'a [SweepRow],
    #[serde(skip_serializing_if = "<[SweepRow]>::is_empty")]
    ratio_family: &'a [SweepRow],
    summary: &'a crate::sweep::Summary,
}

pub fn dataset_json(data: &Dataset, meta: &Metadata) -> Result<String> {
    let doc = JsonDoc {
        metadata: meta,
        rows: &data.rows,
        ratio_family: &data.ratio_family,
        summary: &data.summary,
    };
    serde_json::to_string_pretty(&doc).map_err(out_err)
}
