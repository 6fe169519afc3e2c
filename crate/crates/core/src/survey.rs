//! Trap-survey ingestion and ion-electrode distance scaling analysis:
//! log-log fits of S_E (or ωS_E) versus d with residuals from a d⁻⁴
//! reference band.

use crate::config::TAU;
use crate::rates::power_law_fit;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("survey file error: {0}")]
    Io(String),
    #[error("missing required column {0}")]
    MissingColumn(&'static str),
    #[error("degenerate design: {0}")]
    Degenerate(String),
}

/// One published trap measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyEntry {
    pub species_label: String,
    /// Ion to nearest-electrode distance (m).
    pub d: f64,
    /// Trap frequency ω (rad/s).
    pub omega: f64,
    /// Electric-field noise spectral density (V²m⁻²Hz⁻¹).
    pub s_e: f64,
    pub source_label: String,
}

/// A row that failed validation, with its line number and reason.
#[derive(Debug, Clone, PartialEq)]
pub struct RowIssue {
    pub line: usize,
    pub message: String,
}

const COLUMNS: [&str; 5] = ["species", "d_um", "omega_mhz", "se_v2m2hz", "source"];

/// Read a survey CSV (columns: species, d_um, omega_mhz, se_v2m2hz,
/// source). Missing required columns fail hard; malformed rows are
/// reported with line numbers and skipped.
pub fn ingest(path: &Path) -> Result<(Vec<SurveyEntry>, Vec<RowIssue>), SurveyError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| SurveyError::Io(e.to_string()))?;
    let headers = rdr
        .headers()
        .map_err(|e| SurveyError::Io(e.to_string()))?
        .clone();
    let mut idx = [0usize; 5];
    for (ci, col) in COLUMNS.iter().enumerate() {
        idx[ci] = headers
            .iter()
            .position(|h| h == *col)
            .ok_or(SurveyError::MissingColumn(COLUMNS[ci]))?;
    }
    let mut entries = Vec::new();
    let mut issues = Vec::new();
    for (ri, rec) in rdr.records().enumerate() {
        let line = ri + 2; // header is line 1
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                issues.push(RowIssue {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let parse = |i: usize| -> Result<f64, String> {
            rec.get(idx[i])
                .ok_or_else(|| "short row".to_string())?
                .trim()
                .parse::<f64>()
                .map_err(|e| e.to_string())
        };
        let (d_um, omega_mhz, s_e) = match (parse(1), parse(2), parse(3)) {
            (Ok(a), Ok(b), Ok(c)) => (a, b, c),
            (a, b, c) => {
                let msg = [a.err(), b.err(), c.err()]
                    .into_iter()
                    .flatten()
                    .collect::<Vec<_>>()
                    .join("; ");
                issues.push(RowIssue { line, message: msg });
                continue;
            }
        };
        if !(d_um > 0.0) {
            issues.push(RowIssue {
                line,
                message: format!("d must be > 0 (got {d_um} um)"),
            });
            continue;
        }
        if !(s_e > 0.0) {
            issues.push(RowIssue {
                line,
                message: format!("S_E must be > 0 (got {s_e})"),
            });
            continue;
        }
        entries.push(SurveyEntry {
            species_label: rec.get(idx[0]).unwrap_or("").trim().to_string(),
            d: d_um * 1e-6,
            omega: TAU * omega_mhz * 1e6,
            s_e,
            source_label: rec.get(idx[4]).unwrap_or("").trim().to_string(),
        });
    }
    Ok((entries, issues))
}

pub fn entries_to_csv(entries: &[SurveyEntry], path: &Path) -> Result<(), SurveyError> {
    let mut out = Vec::new();
    writeln!(out, "species,d_um,omega_mhz,se_v2m2hz,source").unwrap();
    for e in entries {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.species_label,
            e.d * 1e6,
            e.omega / (TAU * 1e6),
            e.s_e,
            e.source_label
        )
        .unwrap();
    }
    std::fs::write(path, out).map_err(|e| SurveyError::Io(e.to_string()))
}

/// Which quantity is regressed against distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SurveyQuantity {
    SE,
    OmegaSE,
}

impl SurveyQuantity {
    fn value(&self, e: &SurveyEntry) -> f64 {
        match self {
            SurveyQuantity::SE => e.s_e,
            SurveyQuantity::OmegaSE => e.omega * e.s_e,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingFit {
    pub quantity: SurveyQuantity,
    pub exponent: f64,
    pub exponent_stderr: f64,
    /// log10 intercept of the d⁻⁴ reference band anchored to the entries.
    pub band_log10_anchor: f64,
    /// Per-entry residual from the d⁻⁴ band, in decades.
    pub residuals_decades: Vec<f64>,
}

/// Log-log regression of S_E (or ωS_E) against d, plus per-entry residuals
/// from a slope −4 reference band anchored to the same entries.
pub fn distance_scaling_fit(
    entries: &[SurveyEntry],
    quantity: SurveyQuantity,
) -> Result<ScalingFit, SurveyError> {
    if entries.len() < 3 {
        return Err(SurveyError::Degenerate(format!(
            "{} entries; need at least 3",
            entries.len()
        )));
    }
    let dmin = entries.iter().map(|e| e.d).fold(f64::INFINITY, f64::min);
    let dmax = entries.iter().map(|e| e.d).fold(0.0f64, f64::max);
    if dmax / dmin < 2.0 {
        return Err(SurveyError::Degenerate(format!(
            "distance span {:.2}x is below the required factor 2",
            dmax / dmin
        )));
    }
    let pts: Vec<(f64, f64, f64)> = entries
        .iter()
        .map(|e| {
            let y = quantity.value(e);
            (e.d, y, 0.0)
        })
        .collect();
    let f = power_law_fit(&pts).map_err(|e| SurveyError::Degenerate(e.to_string()))?;
    let anchor = band_anchor(entries, quantity);
    let residuals = entries
        .iter()
        .map(|e| (quantity.value(e).log10()) - (anchor - 4.0 * e.d.log10()))
        .collect();
    Ok(ScalingFit {
        quantity,
        exponent: f.exponent,
        exponent_stderr: f.exponent_stderr,
        band_log10_anchor: anchor,
        residuals_decades: residuals,
    })
}

/// log10 intercept of the d⁻⁴ band through the entries (least squares with
/// the slope fixed at −4).
fn band_anchor(entries: &[SurveyEntry], quantity: SurveyQuantity) -> f64 {
    let n = entries.len() as f64;
    entries
        .iter()
        .map(|e| quantity.value(e).log10() + 4.0 * e.d.log10())
        .sum::<f64>()
        / n
}

/// Residual (decades) of the labelled entry from the d⁻⁴ band anchored to
/// all *other* entries. Strongly negative values mean the trap sits below
/// the trend.
pub fn residual_from_others(
    entries: &[SurveyEntry],
    label: &str,
    quantity: SurveyQuantity,
) -> Result<f64, SurveyError> {
    let (target, others): (Vec<&SurveyEntry>, Vec<&SurveyEntry>) = entries
        .iter()
        .partition(|e| e.source_label == label || e.species_label == label);
    if target.is_empty() {
        return Err(SurveyError::Degenerate(format!("no entry labelled {label}")));
    }
    if others.len() < 2 {
        return Err(SurveyError::Degenerate(
            "need at least 2 other entries to anchor the band".into(),
        ));
    }
    let others_owned: Vec<SurveyEntry> = others.into_iter().cloned().collect();
    let anchor = band_anchor(&others_owned, quantity);
    let e = target[0];
    Ok(quantity.value(e).log10() - (anchor - 4.0 * e.d.log10()))
}

/// Algebraic sanity bound asserted on grouped data: for entries of one
/// trap, spread(ωS_E) ≤ spread(S_E)·spread(ω) where spread = max/min.
pub fn spread_bound_holds(entries: &[SurveyEntry]) -> bool {
    if entries.len() < 2 {
        return true;
    }
    let spread = |f: &dyn Fn(&SurveyEntry) -> f64| -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for e in entries {
            let v = f(e);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        hi / lo
    };
    let s_wse = spread(&|e| e.omega * e.s_e);
    let s_se = spread(&|e| e.s_e);
    let s_w = spread(&|e| e.omega);
    s_wse <= s_se * s_w * (1.0 + 1e-12)
}
