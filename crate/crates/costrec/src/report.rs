//! Result emission: deterministic number formatting, CSV and summary
//! writers, and the config hash that ties outputs back to their inputs.
//!
//! Everything here is pure string building over already-computed numbers —
//! no randomness, no platform-dependent formatting — so identical inputs
//! produce byte-identical files everywhere. All text uses LF line endings
//! and `.` as the decimal separator.

use crate::audit::AuditReport;
use crate::bic::ThresholdSchedule;
use crate::error::Result;
use crate::model::{MechanismResult, ValuationProfile};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

// ---------------------------------------------------------------------------
// Number formatting
// ---------------------------------------------------------------------------

/// Format with 12 significant digits, positional where readable and
/// exponent form for extreme magnitudes, trailing zeros trimmed. The output
/// is a pure function of the bits of `x`.
pub fn fmt_sig12(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // {:.11e} rounds to 12 significant digits: "d.dddddddddddde<exp>"
    let sci = format!("{:.11e}", x);
    let (mantissa, exp_str) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp_str.parse().expect("valid exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    // rounding can carry into a 13th digit only as 1 followed by zeros, so
    // trimming leaves the exact rounded value
    let digits = if digits.is_empty() { "0" } else { digits };

    let body = if (-4..15).contains(&exp) {
        let e = exp;
        if e >= digits.len() as i32 - 1 {
            // integer: pad with zeros on the right
            let mut s = digits.to_string();
            for _ in 0..(e - (digits.len() as i32 - 1)) {
                s.push('0');
            }
            s
        } else if e >= 0 {
            let split = (e + 1) as usize;
            format!("{}.{}", &digits[..split], &digits[split..])
        } else {
            let mut s = String::from("0.");
            for _ in 0..(-e - 1) {
                s.push('0');
            }
            s.push_str(digits);
            s
        }
    } else if digits.len() == 1 {
        format!("{digits}e{exp}")
    } else {
        format!("{}.{}e{exp}", &digits[..1], &digits[1..])
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

/// Hex-encoded SHA-256 of the raw config text, quoted in every summary so a
/// result file can be matched to the exact config that produced it.
pub fn config_hash(config_text: &str) -> String {
    let digest = Sha256::digest(config_text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

/// Header: one row per candidate price floor, in evaluation order.
pub const SCHEDULE_CSV_HEADER: &str =
    "row,threshold,expected_cost,expected_revenue,expected_size,slack,selected";

pub fn schedule_csv(schedule: &ThresholdSchedule) -> String {
    let mut out = String::new();
    out.push_str(SCHEDULE_CSV_HEADER);
    out.push('\n');
    for row in &schedule.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.index,
            fmt_sig12(row.threshold),
            fmt_sig12(row.expected_cost),
            fmt_sig12(row.expected_revenue),
            fmt_sig12(row.expected_size),
            fmt_sig12(row.slack),
            row.selected
        );
    }
    out
}

/// Header: one row per support profile, exact mode only.
pub const PROFILES_CSV_HEADER: &str =
    "profile,probability,served,payment_total,service_cost,social_cost";

/// One per-profile result row. `served` and `profile` pack their lists with
/// `;` so the CSV stays single-delimiter.
pub fn profile_csv_row(
    v: &ValuationProfile,
    probability: f64,
    result: &MechanismResult,
    service_cost: f64,
    social_cost: f64,
) -> String {
    let profile = v
        .values()
        .iter()
        .map(|&x| fmt_sig12(x))
        .collect::<Vec<_>>()
        .join(";");
    let served = result
        .served
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(";");
    format!(
        "{profile},{},{served},{},{},{}",
        fmt_sig12(probability),
        fmt_sig12(result.total_payment()),
        fmt_sig12(service_cost),
        fmt_sig12(social_cost)
    )
}

/// Header for sweep matrices: the grid cell, its outcome, and the
/// plot-ready comparison columns.
pub const SWEEP_CSV_HEADER: &str = "h,n,delta,epsilon,status,threshold,expected_cost,\
     expected_revenue,mechanism_social_cost,base_social_cost,ratio,log2_h,harmonic_n,note";

/// One finished sweep cell.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub h: f64,
    pub n: usize,
    pub delta: f64,
    pub epsilon: f64,
    /// `ok` or `skipped`
    pub status: &'static str,
    pub threshold: Option<f64>,
    pub expected_cost: Option<f64>,
    pub expected_revenue: Option<f64>,
    pub mechanism_social_cost: Option<f64>,
    pub base_social_cost: Option<f64>,
    /// reason when skipped; must not contain commas or newlines
    pub note: String,
}

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let opt = |v: &Option<f64>| v.map(fmt_sig12).unwrap_or_default();
        let ratio = match (self.mechanism_social_cost, self.base_social_cost) {
            (Some(m), Some(b)) if b > 0.0 => fmt_sig12(m / b),
            _ => String::new(),
        };
        let note = self.note.replace([',', '\n'], ";");
        format!(
            "{},{},{},{},{},{},{},{},{},{},{ratio},{},{},{note}",
            fmt_sig12(self.h),
            self.n,
            fmt_sig12(self.delta),
            fmt_sig12(self.epsilon),
            self.status,
            opt(&self.threshold),
            opt(&self.expected_cost),
            opt(&self.expected_revenue),
            opt(&self.mechanism_social_cost),
            opt(&self.base_social_cost),
            fmt_sig12(self.h.log2()),
            fmt_sig12(crate::audit::harmonic(self.n as u64)),
        )
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Summary and audit writers
// ---------------------------------------------------------------------------

/// `key = value` lines in insertion order; the run summary format.
#[derive(Debug, Default)]
pub struct Summary {
    lines: Vec<(String, String)>,
}

impl Summary {
    pub fn new(config_text: &str, seed: u64) -> Self {
        let mut s = Summary::default();
        s.push_str("config_sha256", &config_hash(config_text));
        s.push_str("seed", &seed.to_string());
        s
    }

    pub fn push_str(&mut self, key: &str, value: &str) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn push_num(&mut self, key: &str, value: f64) {
        self.push_str(key, &fmt_sig12(value));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.lines {
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

/// Audit reports as a stable JSON document (reports in given order, map
/// keys sorted).
pub fn audit_json(reports: &[AuditReport]) -> String {
    let mut out = serde_json::to_string_pretty(reports).expect("reports serialize");
    out.push('\n');
    out
}

// ---------------------------------------------------------------------------
// File output
// ---------------------------------------------------------------------------

/// Write `content` to `dir/name`, creating the directory if needed. The
/// content must already use LF endings (every writer in this module does).
pub fn write_text(dir: &Path, name: &str, content: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), content.as_bytes())?;
    Ok(())
}
