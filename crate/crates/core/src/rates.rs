//! Heating-rate extraction and electric-field-noise analysis: weighted
//! linear fit through the origin, S_E conversion, power-law frequency
//! scaling, and cross-technique consistency.

use crate::config::IonSpecies;
use crate::constants::{ELEMENTARY_CHARGE, HBAR};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RatesError {
    #[error("degenerate design: {0}")]
    Degenerate(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dataset file error: {0}")]
    Io(String),
}

/// How the occupation estimates in a dataset were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Recool,
    Raman,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub delay: f64,
    pub nbar: f64,
    pub stderr: f64,
}

/// (delay, n̄, σ) triples at one trap frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatingDataset {
    pub points: Vec<RatePoint>,
    /// Trap frequency ω (rad/s).
    pub trap_frequency: f64,
    pub method: Method,
}

impl HeatingDataset {
    pub fn validate(&self) -> Result<(), RatesError> {
        if self.points.is_empty() {
            return Err(RatesError::InvalidInput("empty dataset".into()));
        }
        for p in &self.points {
            if !(p.stderr > 0.0) {
                return Err(RatesError::InvalidInput(format!(
                    "point at delay {} has non-positive stderr {}",
                    p.delay, p.stderr
                )));
            }
            if p.delay < 0.0 {
                return Err(RatesError::InvalidInput(format!(
                    "negative delay {}",
                    p.delay
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self, path: &Path) -> Result<(), RatesError> {
        let text = serde_json::to_string_pretty(self).expect("serialization cannot fail");
        std::fs::write(path, text).map_err(|e| RatesError::Io(e.to_string()))
    }

    pub fn from_json(path: &Path) -> Result<Self, RatesError> {
        let text = std::fs::read_to_string(path).map_err(|e| RatesError::Io(e.to_string()))?;
        let ds: Self = serde_json::from_str(&text).map_err(|e| RatesError::Io(e.to_string()))?;
        ds.validate()?;
        Ok(ds)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RateResult {
    /// d⟨n⟩/dt (quanta/s).
    pub rate: f64,
    pub rate_stderr: f64,
    pub reduced_chi2: f64,
}

/// Weighted linear fit of n̄ versus delay constrained through the origin:
/// slope = Σwᵢtᵢnᵢ / Σwᵢtᵢ² with wᵢ = 1/σᵢ², stderr = 1/√Σwᵢtᵢ².
pub fn fit_rate(ds: &HeatingDataset) -> Result<RateResult, RatesError> {
    ds.validate()?;
    let mut stn = 0.0;
    let mut stt = 0.0;
    for p in &ds.points {
        let w = 1.0 / (p.stderr * p.stderr);
        stn += w * p.delay * p.nbar;
        stt += w * p.delay * p.delay;
    }
    if stt == 0.0 {
        return Err(RatesError::Degenerate(
            "all delays are zero; slope is unconstrained".into(),
        ));
    }
    let rate = stn / stt;
    let chi2: f64 = ds
        .points
        .iter()
        .map(|p| ((p.nbar - rate * p.delay) / p.stderr).powi(2))
        .sum();
    let dof = (ds.points.len() - 1).max(1) as f64;
    Ok(RateResult {
        rate,
        rate_stderr: 1.0 / stt.sqrt(),
        reduced_chi2: chi2 / dof,
    })
}

/// Diagnostic two-parameter fit (intercept left free). Never used for
/// headline rates; provided so the through-origin assumption can be checked.
pub fn fit_rate_free_intercept(
    ds: &HeatingDataset,
) -> Result<(RateResult, f64, f64), RatesError> {
    ds.validate()?;
    let (mut sw, mut swt, mut swn, mut swtt, mut swtn) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in &ds.points {
        let w = 1.0 / (p.stderr * p.stderr);
        sw += w;
        swt += w * p.delay;
        swn += w * p.nbar;
        swtt += w * p.delay * p.delay;
        swtn += w * p.delay * p.nbar;
    }
    let det = sw * swtt - swt * swt;
    if det <= 0.0 {
        return Err(RatesError::Degenerate(
            "delays do not span a line with free intercept".into(),
        ));
    }
    let slope = (sw * swtn - swt * swn) / det;
    let intercept = (swtt * swn - swt * swtn) / det;
    let chi2: f64 = ds
        .points
        .iter()
        .map(|p| ((p.nbar - intercept - slope * p.delay) / p.stderr).powi(2))
        .sum();
    let dof = (ds.points.len().saturating_sub(2)).max(1) as f64;
    Ok((
        RateResult {
            rate: slope,
            rate_stderr: (sw / det).sqrt(),
            reduced_chi2: chi2 / dof,
        },
        intercept,
        (swtt / det).sqrt(),
    ))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoisePoint {
    /// Trap frequency ω (rad/s).
    pub omega: f64,
    /// Electric-field noise spectral density (V²·m⁻²·Hz⁻¹).
    pub s_e: f64,
    pub s_e_stderr: f64,
}

/// Electric-field noise spectral density inferred from a heating rate:
/// S_E(ω) = (d⟨n⟩/dt)·4mħω/e², with first-order error propagation.
pub fn electric_field_noise(
    rate: f64,
    rate_stderr: f64,
    species: &IonSpecies,
    omega: f64,
) -> Result<NoisePoint, RatesError> {
    if rate < 0.0 {
        return Err(RatesError::InvalidInput(format!("negative rate {rate}")));
    }
    if !(omega > 0.0) {
        return Err(RatesError::InvalidInput(format!(
            "omega must be > 0 (got {omega})"
        )));
    }
    let factor = 4.0 * species.mass * HBAR * omega / (ELEMENTARY_CHARGE * ELEMENTARY_CHARGE);
    Ok(NoisePoint {
        omega,
        s_e: rate * factor,
        s_e_stderr: rate_stderr.abs() * factor,
    })
}

/// Inverse of [`electric_field_noise`]: heating rate from a noise density.
pub fn heating_rate_from_noise(s_e: f64, species: &IonSpecies, omega: f64) -> f64 {
    s_e * ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (4.0 * species.mass * HBAR * omega)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub exponent_stderr: f64,
    /// ln of the prefactor C in y = C·xᵖ.
    pub ln_prefactor: f64,
    pub ln_prefactor_stderr: f64,
    pub reduced_chi2: f64,
}

impl PowerLawFit {
    pub fn prefactor(&self) -> f64 {
        self.ln_prefactor.exp()
    }
}

/// Weighted power-law fit y ∝ xᵖ by least squares in log-log space with
/// first-order transformed variances σ_ln = σ/y. The transformation is
/// biased for relative errors above ~30%; see `power_law_fit_bias_probe`
/// in the tests for the Monte Carlo quantification.
pub fn power_law_fit(points: &[(f64, f64, f64)]) -> Result<PowerLawFit, RatesError> {
    if points.len() < 2 {
        return Err(RatesError::InvalidInput(format!(
            "{} points; need at least 2",
            points.len()
        )));
    }
    for &(x, y, s) in points {
        if !(x > 0.0) || !(y > 0.0) {
            return Err(RatesError::InvalidInput(format!(
                "power-law fit requires positive values (got x={x}, y={y})"
            )));
        }
        if !(s >= 0.0) {
            return Err(RatesError::InvalidInput(format!("negative stderr {s}")));
        }
    }
    let logs: Vec<(f64, f64, f64)> = points
        .iter()
        .map(|&(x, y, s)| {
            let sl = if s > 0.0 { s / y } else { 1.0 };
            (x.ln(), y.ln(), sl)
        })
        .collect();
    let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, s) in &logs {
        let w = 1.0 / (s * s);
        sw += w;
        swx += w * x;
        swy += w * y;
        swxx += w * x * x;
        swxy += w * x * y;
    }
    let det = sw * swxx - swx * swx;
    if det <= 0.0 {
        return Err(RatesError::Degenerate(
            "all abscissae identical; exponent unconstrained".into(),
        ));
    }
    let exponent = (sw * swxy - swx * swy) / det;
    let ln_prefactor = (swxx * swy - swx * swxy) / det;
    let chi2: f64 = logs
        .iter()
        .map(|&(x, y, s)| ((y - ln_prefactor - exponent * x) / s).powi(2))
        .sum();
    let dof = (points.len().saturating_sub(2)).max(1) as f64;
    Ok(PowerLawFit {
        exponent,
        exponent_stderr: (sw / det).sqrt(),
        ln_prefactor,
        ln_prefactor_stderr: (swxx / det).sqrt(),
        reduced_chi2: chi2 / dof,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Consistency {
    pub z_score: f64,
    pub pass: bool,
}

/// Two-sided z comparison of independent rate measurements:
/// z = |r_a − r_b| / √(σ_a² + σ_b²), passing at z < 2.
pub fn compare_methods(a: &RateResult, b: &RateResult) -> Consistency {
    let z = (a.rate - b.rate).abs() / (a.rate_stderr.powi(2) + b.rate_stderr.powi(2)).sqrt();
    Consistency { z_score: z, pass: z < 2.0 }
}

/// Plot-ready CSV (x, y, yerr).
pub fn xy_to_csv(rows: &[(f64, f64, f64)], header: &str, path: &Path) -> Result<(), RatesError> {
    let mut out = Vec::new();
    writeln!(out, "{header}").unwrap();
    for (x, y, e) in rows {
        writeln!(out, "{x},{y},{e}").unwrap();
    }
    std::fs::write(path, out).map_err(|e| RatesError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TAU;

    fn ds(points: &[(f64, f64, f64)]) -> HeatingDataset {
        HeatingDataset {
            points: points
                .iter()
                .map(|&(delay, nbar, stderr)| RatePoint {
                    delay,
                    nbar,
                    stderr,
                })
                .collect(),
            trap_frequency: TAU * 4.02e6,
            method: Method::Raman,
        }
    }

    #[test]
    fn exact_two_point_slope() {
        let r = fit_rate(&ds(&[(1.0, 2.0, 1.0), (2.0, 4.0, 1.0)])).unwrap();
        assert_eq!(r.rate, 2.0);
        assert!(r.reduced_chi2 < 1e-24);
    }

    #[test]
    fn single_point_closed_form() {
        // slope n/t, stderr sigma/t
        let r = fit_rate(&ds(&[(2.0, 6.0, 0.5)])).unwrap();
        assert!((r.rate - 3.0).abs() < 1e-12);
        assert!((r.rate_stderr - 0.25).abs() < 1e-12);
    }

    #[test]
    fn all_zero_delays_degenerate() {
        assert!(matches!(
            fit_rate(&ds(&[(0.0, 1.0, 0.1), (0.0, 2.0, 0.1)])),
            Err(RatesError::Degenerate(_))
        ));
    }

    #[test]
    fn slope_is_scale_equivariant() {
        let base = [(1.0, 2.1, 0.3), (2.0, 3.9, 0.4), (3.0, 6.3, 0.5)];
        let r1 = fit_rate(&ds(&base)).unwrap();
        let c = 7.25;
        let scaled: Vec<(f64, f64, f64)> =
            base.iter().map(|&(t, n, s)| (t, c * n, c * s)).collect();
        let r2 = fit_rate(&ds(&scaled)).unwrap();
        assert!((r2.rate - c * r1.rate).abs() / (c * r1.rate) < 1e-14);
        assert!((r2.rate_stderr - c * r1.rate_stderr).abs() / (c * r1.rate_stderr) < 1e-14);
    }

    #[test]
    fn free_intercept_diagnostic() {
        // data with a real offset: through-origin inflates the slope, the
        // diagnostic fit recovers both
        let r = fit_rate_free_intercept(&ds(&[
            (1.0, 3.0, 0.1),
            (2.0, 5.0, 0.1),
            (3.0, 7.0, 0.1),
        ]))
        .unwrap();
        assert!((r.0.rate - 2.0).abs() < 1e-10);
        assert!((r.1 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn s_e_formula_frozen_value() {
        // Hand evaluation of S_E = rate * 4 m hbar omega / e^2 with CODATA
        // 2018 constants: rate = 300/s, 25Mg+ (24.985288386090936 u),
        // omega = 2pi*5.25 MHz  =>  6.74697739576931e-12 V^2 m^-2 Hz^-1.
        let species = IonSpecies::mg25();
        let p = electric_field_noise(300.0, 30.0, &species, TAU * 5.25e6).unwrap();
        assert!(
            (p.s_e - 6.74697739576931e-12).abs() / 6.74697739576931e-12 < 1e-6,
            "S_E = {:.6e}",
            p.s_e
        );
        assert!((p.s_e_stderr / p.s_e - 0.1).abs() < 1e-12);
    }

    #[test]
    fn s_e_zero_rate_and_linearity() {
        let species = IonSpecies::mg25();
        let z = electric_field_noise(0.0, 0.0, &species, TAU * 5.25e6).unwrap();
        assert_eq!(z.s_e, 0.0);
        let a = electric_field_noise(300.0, 0.0, &species, TAU * 2.0e6).unwrap();
        let b = electric_field_noise(300.0, 0.0, &species, TAU * 4.0e6).unwrap();
        assert!((b.s_e / a.s_e - 2.0).abs() < 1e-12);
    }

    #[test]
    fn s_e_round_trip_is_identity() {
        let species = IonSpecies::mg25();
        for (rate, omega) in [(300.0, TAU * 5.25e6), (1470.0, TAU * 2.86e6)] {
            let p = electric_field_noise(rate, 0.0, &species, omega).unwrap();
            let back = heating_rate_from_noise(p.s_e, &species, omega);
            assert!((back - rate).abs() / rate < 1e-12);
        }
    }

    #[test]
    fn power_law_exact_two_points() {
        let f = power_law_fit(&[(1.0, 8.0, 0.1), (2.0, 1.0, 0.1)]).unwrap();
        assert!((f.exponent + 3.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_rejects_nonpositive() {
        assert!(power_law_fit(&[(1.0, 0.0, 0.1), (2.0, 1.0, 0.1)]).is_err());
        assert!(power_law_fit(&[(1.0, -3.0, 0.1), (2.0, 1.0, 0.1)]).is_err());
    }

    #[test]
    fn power_law_exact_recovery_across_exponents() {
        for p in [-4.0, -2.4, -1.0, -0.3, 0.0] {
            let c = 2.7;
            let pts: Vec<(f64, f64, f64)> = [1.0, 2.0, 5.0, 11.0]
                .iter()
                .map(|&x: &f64| (x, c * x.powf(p), 0.01 * c * x.powf(p)))
                .collect();
            let f = power_law_fit(&pts).unwrap();
            assert!((f.exponent - p).abs() < 1e-10, "p={p}: got {}", f.exponent);
            assert!((f.prefactor() - c).abs() / c < 1e-10);
        }
    }

    #[test]
    fn paper_triple_exponents() {
        // {(2.86 MHz, 1470+-150), (4.02, 690+-60), (5.25, 300+-30)}:
        // the rate exponent lands in [-2.8, -2.0] and, mapped through the
        // S_E conversion, the noise exponent in [-1.8, -1.0].
        let species = IonSpecies::mg25();
        let rates = [
            (TAU * 2.86e6, 1470.0, 150.0),
            (TAU * 4.02e6, 690.0, 60.0),
            (TAU * 5.25e6, 300.0, 30.0),
        ];
        let f = power_law_fit(&rates).unwrap();
        assert!(
            f.exponent > -2.8 && f.exponent < -2.0,
            "rate exponent {}",
            f.exponent
        );
        // frozen from an independent evaluation of the same weighted
        // log-log formulas
        assert!((f.exponent - (-2.5985102005714653)).abs() < 1e-9);

        let se_pts: Vec<(f64, f64, f64)> = rates
            .iter()
            .map(|&(w, r, s)| {
                let p = electric_field_noise(r, s, &species, w).unwrap();
                (w, p.s_e, p.s_e_stderr)
            })
            .collect();
        let g = power_law_fit(&se_pts).unwrap();
        assert!(
            g.exponent > -1.8 && g.exponent < -1.0,
            "S_E exponent {}",
            g.exponent
        );
        assert!((g.exponent - (f.exponent + 1.0)).abs() < 1e-9);
    }

    #[test]
    fn power_law_fit_bias_probe() {
        // The log transformation biases the fitted exponent when relative
        // errors are large. Quantify: at 30% relative Gaussian noise the
        // mean recovered exponent stays within ~0.1 of the truth.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(123);
        let truth = -2.0;
        let rel = 0.3;
        let mut sum = 0.0;
        let trials = 400;
        let mut kept = 0;
        for _ in 0..trials {
            let pts: Vec<(f64, f64, f64)> = [1.0, 2.0, 4.0, 8.0]
                .iter()
                .map(|&x: &f64| {
                    let y = x.powf(truth);
                    // Box-Muller from two uniforms
                    let (u1, u2): (f64, f64) = (rng.random(), rng.random());
                    let g = (-2.0 * u1.max(1e-12).ln()).sqrt()
                        * (std::f64::consts::TAU * u2).cos();
                    let yn = y * (1.0 + rel * g);
                    (x, yn.max(1e-9), rel * y)
                })
                .collect();
            if let Ok(f) = power_law_fit(&pts) {
                sum += f.exponent;
                kept += 1;
            }
        }
        let mean_exp = sum / kept as f64;
        assert!(
            (mean_exp - truth).abs() < 0.15,
            "mean exponent {mean_exp} vs {truth}"
        );
    }

    #[test]
    fn cross_technique_z_scores() {
        let a = RateResult {
            rate: 620.0,
            rate_stderr: 50.0,
            reduced_chi2: 1.0,
        };
        let b = RateResult {
            rate: 690.0,
            rate_stderr: 60.0,
            reduced_chi2: 1.0,
        };
        let c = compare_methods(&a, &b);
        assert!((c.z_score - 0.8962581595302719).abs() < 1e-12);
        assert!(c.pass);

        let d = RateResult {
            rate: 1260.0,
            rate_stderr: 130.0,
            reduced_chi2: 1.0,
        };
        let e = RateResult {
            rate: 1470.0,
            rate_stderr: 150.0,
            reduced_chi2: 1.0,
        };
        let f = compare_methods(&d, &e);
        assert!((f.z_score - 1.0579647159057446).abs() < 1e-12);
        assert!(f.pass);

        let g = compare_methods(&a, &a);
        assert_eq!(g.z_score, 0.0);
    }

    #[test]
    fn dataset_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.json");
        let d = ds(&[(1e-3, 1.0, 0.1), (2e-3, 1.7, 0.12)]);
        d.to_json(&path).unwrap();
        let back = HeatingDataset::from_json(&path).unwrap();
        assert_eq!(d, back);
    }
}
