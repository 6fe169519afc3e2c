//! Thermal-state Raman sideband physics: Rabi flopping on red/carrier/blue
//! transitions, sideband spectrum synthesis, Gaussian sideband fitting, and
//! ratio thermometry n̄ = R/(1−R).

use crate::config::{lamb_dicke, IonSpecies, RamanParams, TrapLaserConfig, TAU};
use crate::fit::{levenberg_marquardt, FitError, FitOptions};
use crate::recool::at_rest_scattering_rate;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SidebandError {
    #[error("sideband ratio R = {0} >= 1: infinite temperature, n̄ undefined")]
    InfiniteTemperature(f64),
    #[error("degenerate scan: {0}")]
    Degenerate(String),
    #[error("sideband window fit failed ({window}): {source}")]
    WindowFit {
        window: &'static str,
        source: FitError,
    },
    #[error("scan file error: {0}")]
    Io(String),
}

/// Thermal (geometric) occupation distribution with mean n̄.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalState {
    pub nbar: f64,
}

impl ThermalState {
    pub fn new(nbar: f64) -> Self {
        assert!(nbar >= 0.0, "thermal nbar must be non-negative");
        Self { nbar }
    }

    /// Occupation probability p_n = n̄ⁿ/(n̄+1)ⁿ⁺¹.
    pub fn pn(&self, n: u32) -> f64 {
        thermal_pn(self.nbar, n)
    }

    /// Smallest n_max with cumulative probability above 1 − tail.
    pub fn truncation(&self, tail: f64) -> u32 {
        if self.nbar == 0.0 {
            return 0;
        }
        let q = self.nbar / (self.nbar + 1.0);
        // 1 - F(n) = q^(n+1) <= tail
        (tail.ln() / q.ln()).ceil().max(1.0) as u32
    }
}

/// p_n = n̄ⁿ/(n̄+1)ⁿ⁺¹ for a thermal state.
pub fn thermal_pn(nbar: f64, n: u32) -> f64 {
    assert!(nbar >= 0.0);
    if nbar == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let q = nbar / (nbar + 1.0);
    q.powi(n as i32) / (nbar + 1.0)
}

/// Raman transition branch relative to the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SidebandBranch {
    Red,
    Carrier,
    Blue,
}

impl SidebandBranch {
    /// Rabi frequency for the branch starting from occupation n, to first
    /// order in the Lamb-Dicke expansion.
    pub fn rabi(&self, n: u64, rabi_base: f64, eta: f64) -> f64 {
        match self {
            SidebandBranch::Red => {
                if n == 0 {
                    0.0
                } else {
                    rabi_base * eta * (n as f64).sqrt()
                }
            }
            SidebandBranch::Carrier => rabi_base,
            SidebandBranch::Blue => rabi_base * eta * ((n + 1) as f64).sqrt(),
        }
    }

    /// Line center relative to the carrier (rad/s) for trap frequency ω.
    pub fn center(&self, omega: f64) -> f64 {
        match self {
            SidebandBranch::Red => -omega,
            SidebandBranch::Carrier => 0.0,
            SidebandBranch::Blue => omega,
        }
    }
}

/// Resonant flopping term sin²(Ωt/2) with the incoherent-scattering decay
/// envelope exp(−t/τ).
fn flop(omega_rabi: f64, t: f64, decay_tau: f64) -> f64 {
    let env = if decay_tau.is_finite() && decay_tau > 0.0 {
        (-t / decay_tau).exp()
    } else {
        1.0
    };
    (0.5 * omega_rabi * t).sin().powi(2) * env
}

/// Population transfer probability for a square probe pulse detuned by
/// `detuning` (rad/s) from the transition, with resonant Rabi
/// frequency `omega_rabi`: the generalized Rabi lineshape
/// Ω²/(Ω²+Δ²)·sin²(√(Ω²+Δ²)·t/2), damped by exp(−t/τ).
pub fn detuned_flop(omega_rabi: f64, detuning: f64, t: f64, decay_tau: f64) -> f64 {
    if omega_rabi == 0.0 {
        return 0.0;
    }
    let w2 = omega_rabi * omega_rabi;
    let g = (w2 + detuning * detuning).sqrt();
    let env = if decay_tau.is_finite() && decay_tau > 0.0 {
        (-t / decay_tau).exp()
    } else {
        1.0
    };
    (w2 / (g * g)) * (0.5 * g * t).sin().powi(2) * env
}

/// Thermally averaged resonant flip probability
/// Σ_n p_n · sin²(Ω_n·t/2) · exp(−t/τ), with Ω_n = Ω₀η√n (red), Ω₀
/// (carrier), Ω₀η√(n+1) (blue). The sum is truncated adaptively where the
/// cumulative occupation probability exceeds 1 − 10⁻⁹.
pub fn flip_probability(
    state: &ThermalState,
    sideband: SidebandBranch,
    pulse_duration: f64,
    rabi_base: f64,
    eta: f64,
    decay_tau: f64,
) -> f64 {
    assert!(pulse_duration >= 0.0, "pulse duration must be >= 0");
    let n_max = state.truncation(1e-9);
    let mut p = 0.0;
    for n in 0..=n_max {
        let w = sideband.rabi(n as u64, rabi_base, eta);
        p += state.pn(n) * flop(w, pulse_duration, decay_tau);
    }
    p.min(1.0)
}

/// Fluorescence scan across the Raman sidebands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidebandScan {
    /// Probe detunings relative to the carrier (Hz), strictly increasing.
    pub detunings: Vec<f64>,
    /// Mean detected counts per experiment at each detuning.
    pub signal: Vec<f64>,
    /// Standard error of the mean counts.
    pub stderr: Vec<f64>,
    /// Probe pulse duration (s).
    pub probe_duration: f64,
}

impl SidebandScan {
    pub fn validate(&self) -> Result<(), SidebandError> {
        if self.detunings.len() != self.signal.len() || self.signal.len() != self.stderr.len() {
            return Err(SidebandError::Degenerate("column length mismatch".into()));
        }
        if self.detunings.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SidebandError::Degenerate(
                "detunings must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn to_csv(&self, path: &Path) -> Result<(), SidebandError> {
        let mut out = Vec::new();
        writeln!(out, "detuning_hz,mean_counts,stderr").unwrap();
        for i in 0..self.detunings.len() {
            writeln!(
                out,
                "{},{},{}",
                self.detunings[i], self.signal[i], self.stderr[i]
            )
            .unwrap();
        }
        std::fs::write(path, out).map_err(|e| SidebandError::Io(e.to_string()))
    }

    pub fn from_csv(path: &Path, probe_duration: f64) -> Result<Self, SidebandError> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| SidebandError::Io(e.to_string()))?;
        let hdr = rdr.headers().map_err(|e| SidebandError::Io(e.to_string()))?;
        for col in ["detuning_hz", "mean_counts", "stderr"] {
            if !hdr.iter().any(|h| h == col) {
                return Err(SidebandError::Io(format!("missing column {col}")));
            }
        }
        let mut detunings = Vec::new();
        let mut signal = Vec::new();
        let mut stderr = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| SidebandError::Io(e.to_string()))?;
            let get = |i: usize| -> Result<f64, SidebandError> {
                rec.get(i)
                    .ok_or_else(|| SidebandError::Io("short row".into()))?
                    .parse()
                    .map_err(|e| SidebandError::Io(format!("bad number: {e}")))
            };
            detunings.push(get(0)?);
            signal.push(get(1)?);
            stderr.push(get(2)?);
        }
        let scan = Self {
            detunings,
            signal,
            stderr,
            probe_duration,
        };
        scan.validate()?;
        Ok(scan)
    }
}

/// Expected scan signal: fluorescence dips where the probe transfers the ion
/// out of the bright state. Lineshape per transition is the generalized Rabi
/// profile of a square pulse (Fourier-broadened by 1/probe_duration).
pub fn synth_scan(
    state: &ThermalState,
    species: &IonSpecies,
    cfg: &TrapLaserConfig,
    raman: &RamanParams,
    detuning_grid: &[f64],
) -> SidebandScan {
    let eta = lamb_dicke(species, cfg).expect("valid config");
    let rabi_base = raman.rabi_base(eta);
    let decay_tau = raman.decay_tau();
    let t = raman.pi_time;
    let bright = at_rest_scattering_rate(species, cfg)
        * cfg.detection_efficiency
        * raman.detect_duration;
    let shots = raman.shots_per_point.max(1) as f64;
    let n_max = state.truncation(1e-9);

    let mut signal = Vec::with_capacity(detuning_grid.len());
    let mut stderr = Vec::with_capacity(detuning_grid.len());
    for &f_hz in detuning_grid {
        let delta = TAU * f_hz;
        let mut p = 0.0;
        for n in 0..=n_max {
            let pn = state.pn(n);
            for branch in [
                SidebandBranch::Red,
                SidebandBranch::Carrier,
                SidebandBranch::Blue,
            ] {
                let w = branch.rabi(n as u64, rabi_base, eta);
                let d = delta - branch.center(cfg.motional_frequency);
                p += pn * detuned_flop(w, d, t, decay_tau);
            }
        }
        let p = p.min(1.0);
        let mean = bright * (1.0 - p);
        // per-shot variance: Poisson shot noise plus the bright/dark
        // Bernoulli mixture term
        let var = mean + p * (1.0 - p) * bright * bright;
        signal.push(mean);
        stderr.push((var / shots).sqrt());
    }
    SidebandScan {
        detunings: detuning_grid.to_vec(),
        signal,
        stderr,
        probe_duration: t,
    }
}

/// Detuning grid covering both sidebands: `points` samples in a window of
/// ±`halfwidth` (Hz) around ∓ω/2π, plus a few baseline samples between.
pub fn default_scan_grid(cfg: &TrapLaserConfig, raman: &RamanParams) -> Vec<f64> {
    let f_trap = cfg.motional_frequency / TAU;
    let hw = raman.scan_halfwidth;
    let n = raman.scan_points_per_window.max(5);
    let mut grid = Vec::new();
    for center in [-f_trap, f_trap] {
        for i in 0..n {
            grid.push(center - hw + 2.0 * hw * i as f64 / (n - 1) as f64);
        }
    }
    // baseline samples clear of carrier and sidebands
    for frac in [0.45, 0.5, 0.55, 0.6, 0.65] {
        grid.push(-f_trap * frac);
        grid.push(f_trap * frac);
    }
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup();
    grid
}

/// Result of Gaussian sideband fits plus ratio thermometry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidebandFit {
    pub red_amplitude: f64,
    pub red_amplitude_stderr: f64,
    pub blue_amplitude: f64,
    pub blue_amplitude_stderr: f64,
    /// Fitted line centers (Hz).
    pub centers: [f64; 2],
    /// Fitted Gaussian sigmas (Hz).
    pub widths: [f64; 2],
    /// Red/blue amplitude ratio.
    pub ratio: f64,
    pub ratio_stderr: f64,
    pub nbar: f64,
    pub nbar_stderr: f64,
    pub baseline: f64,
    pub reduced_chi2: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FitScanOptions {
    /// Fit one common Gaussian width across both sidebands.
    pub shared_width: bool,
    /// Sideband window half-width as a fraction of the trap frequency.
    pub window_fraction: f64,
}

impl Default for FitScanOptions {
    fn default() -> Self {
        Self {
            shared_width: false,
            window_fraction: 1.0 / 3.0,
        }
    }
}

struct Window {
    x: Vec<f64>,
    y: Vec<f64>,
    s: Vec<f64>,
}

fn gaussian_dip(x: f64, amp: f64, center: f64, width: f64) -> f64 {
    amp * (-(x - center).powi(2) / (2.0 * width * width)).exp()
}

/// Independent 3-parameter Gaussian fits (amplitude, center, width) to the
/// red and blue sideband dips, weighted by the per-point standard errors;
/// then n̄ = R/(1−R) with first-order error propagation from the amplitude
/// covariances.
pub fn fit_scan(scan: &SidebandScan, opts: &FitScanOptions) -> Result<SidebandFit, SidebandError> {
    scan.validate()?;
    let n = scan.detunings.len();
    if n < 10 {
        return Err(SidebandError::Degenerate(format!(
            "scan has only {n} points"
        )));
    }
    // Identify the sideband centers from the grid extent: windows around
    // +-f_trap, where f_trap is taken from the outermost window structure.
    let f_max = scan.detunings.last().unwrap().abs().max(scan.detunings[0].abs());
    let f_trap = f_max / (1.0 + opts.window_fraction).max(1.0) * (1.0 + opts.window_fraction);
    // Grid is expected to span both sidebands; locate them by the minimum
    // signal in each half-plane away from the carrier.
    let guess_center = |sign: f64| -> Result<f64, SidebandError> {
        let mut best = None::<(f64, f64)>;
        for (&d, &y) in scan.detunings.iter().zip(&scan.signal) {
            if d * sign > 0.35 * f_trap {
                match best {
                    Some((_, by)) if y >= by => {}
                    _ => best = Some((d, y)),
                }
            }
        }
        best.map(|(d, _)| d).ok_or_else(|| {
            SidebandError::Degenerate("scan does not cover both sideband windows".into())
        })
    };
    let red_c0 = guess_center(-1.0)?;
    let blue_c0 = guess_center(1.0)?;

    let half = opts.window_fraction * blue_c0.abs().max(red_c0.abs());
    let take = |center: f64| -> Window {
        let mut w = Window {
            x: vec![],
            y: vec![],
            s: vec![],
        };
        for i in 0..n {
            if (scan.detunings[i] - center).abs() <= half {
                w.x.push(scan.detunings[i]);
                w.y.push(scan.signal[i]);
                w.s.push(scan.stderr[i].max(1e-12));
            }
        }
        w
    };
    let red_w = take(red_c0);
    let blue_w = take(blue_c0);
    if red_w.x.len() < 5 || blue_w.x.len() < 5 {
        return Err(SidebandError::Degenerate(
            "fewer than 5 points in a sideband window".into(),
        ));
    }

    // Baseline: mean signal away from carrier and sidebands; falls back to
    // the maximum window signal when no clean baseline points exist.
    let mut base_pts = Vec::new();
    for i in 0..n {
        let d = scan.detunings[i];
        if (d - red_c0).abs() > half && (d - blue_c0).abs() > half && d.abs() > 0.3 * blue_c0.abs()
        {
            base_pts.push(scan.signal[i]);
        }
    }
    let baseline = if base_pts.is_empty() {
        red_w
            .y
            .iter()
            .chain(blue_w.y.iter())
            .cloned()
            .fold(f64::MIN, f64::max)
    } else {
        base_pts.iter().sum::<f64>() / base_pts.len() as f64
    };

    let width0 = 0.08 * blue_c0.abs().max(1.0);
    let fit_window = |w: &Window, c0: f64, name: &'static str| {
        let amp0 = (baseline - w.y.iter().cloned().fold(f64::MAX, f64::min)).max(1e-9);
        let npts = w.x.len();
        levenberg_marquardt(
            |p, r| {
                if p[2].abs() < 1e-12 {
                    return Err("width collapsed".into());
                }
                for i in 0..npts {
                    let model = baseline - gaussian_dip(w.x[i], p[0], p[1], p[2]);
                    r[i] = (w.y[i] - model) / w.s[i];
                }
                Ok(())
            },
            npts,
            &[amp0, c0, width0],
            &FitOptions::default(),
        )
        .map_err(|source| SidebandError::WindowFit {
            window: name,
            source,
        })
    };

    let (red_fit, blue_fit, chi2, dof);
    if opts.shared_width {
        // Joint 5-parameter fit: (a_r, c_r, a_b, c_b, w)
        let amp_r0 = (baseline - red_w.y.iter().cloned().fold(f64::MAX, f64::min)).max(1e-9);
        let amp_b0 = (baseline - blue_w.y.iter().cloned().fold(f64::MAX, f64::min)).max(1e-9);
        let nr = red_w.x.len();
        let nb = blue_w.x.len();
        let joint = levenberg_marquardt(
            |p, r| {
                if p[4].abs() < 1e-12 {
                    return Err("width collapsed".into());
                }
                for i in 0..nr {
                    let m = baseline - gaussian_dip(red_w.x[i], p[0], p[1], p[4]);
                    r[i] = (red_w.y[i] - m) / red_w.s[i];
                }
                for i in 0..nb {
                    let m = baseline - gaussian_dip(blue_w.x[i], p[2], p[3], p[4]);
                    r[nr + i] = (blue_w.y[i] - m) / blue_w.s[i];
                }
                Ok(())
            },
            nr + nb,
            &[amp_r0, red_c0, amp_b0, blue_c0, width0],
            &FitOptions::default(),
        )
        .map_err(|source| SidebandError::WindowFit {
            window: "joint",
            source,
        })?;
        chi2 = joint.chi2;
        dof = (nr + nb - 5).max(1) as f64;
        let w = joint.params[4].abs();
        red_fit = (joint.params[0], joint.stderr[0], joint.params[1], w);
        blue_fit = (joint.params[2], joint.stderr[2], joint.params[3], w);
    } else {
        let rf = fit_window(&red_w, red_c0, "red")?;
        let bf = fit_window(&blue_w, blue_c0, "blue")?;
        chi2 = rf.chi2 + bf.chi2;
        dof = (red_w.x.len() + blue_w.x.len() - 6).max(1) as f64;
        red_fit = (rf.params[0], rf.stderr[0], rf.params[1], rf.params[2].abs());
        blue_fit = (bf.params[0], bf.stderr[0], bf.params[1], bf.params[2].abs());
    }

    let (ar, sar, cr, wr) = red_fit;
    let (ab, sab, cb, wb) = blue_fit;
    if ab <= 0.0 {
        return Err(SidebandError::Degenerate(format!(
            "blue sideband amplitude {ab:.3e} <= 0: ratio undefined"
        )));
    }
    let ar = ar.max(0.0);
    let ratio = ar / ab;
    let ratio_stderr = ((sar / ab).powi(2) + (ar * sab / (ab * ab)).powi(2)).sqrt();
    let nbar = ratio_to_nbar(ratio)?;
    let nbar_stderr = ratio_stderr / (1.0 - ratio).powi(2);
    Ok(SidebandFit {
        red_amplitude: ar,
        red_amplitude_stderr: sar,
        blue_amplitude: ab,
        blue_amplitude_stderr: sab,
        centers: [cr, cb],
        widths: [wr, wb],
        ratio,
        ratio_stderr,
        nbar,
        nbar_stderr,
        baseline,
        reduced_chi2: chi2 / dof,
    })
}

/// n̄ = R/(1−R); errors for R ≥ 1.
pub fn ratio_to_nbar(ratio: f64) -> Result<f64, SidebandError> {
    if ratio >= 1.0 {
        return Err(SidebandError::InfiniteTemperature(ratio));
    }
    if ratio < 0.0 {
        return Err(SidebandError::Degenerate(format!("negative ratio {ratio}")));
    }
    Ok(ratio / (1.0 - ratio))
}

/// R = n̄/(n̄+1), the inverse of [`ratio_to_nbar`].
pub fn nbar_to_ratio(nbar: f64) -> f64 {
    nbar / (nbar + 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{IonSpecies, TrapLaserConfig};

    fn mg25_setup(f_mhz: f64) -> (IonSpecies, TrapLaserConfig, RamanParams) {
        let species = IonSpecies::mg25();
        let cfg = TrapLaserConfig::defaults_for(&species, TAU * f_mhz * 1e6);
        (species, cfg, RamanParams::default())
    }

    #[test]
    fn thermal_pn_zero_temperature() {
        assert_eq!(thermal_pn(0.0, 0), 1.0);
        assert_eq!(thermal_pn(0.0, 1), 0.0);
        assert_eq!(thermal_pn(0.0, 7), 0.0);
    }

    #[test]
    fn thermal_pn_closed_form_values() {
        assert!((thermal_pn(1.0, 0) - 0.5).abs() < 1e-15);
        // nbar = 0.34: p_0 = 1/1.34 = 0.746268...; cross-checked against
        // geometric-series normalization below.
        assert!((thermal_pn(0.34, 0) - 0.7462686567164178).abs() < 1e-15);
        let total: f64 = (0..2000).map(|n| thermal_pn(0.34, n)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flip_probability_edge_cases() {
        let state = ThermalState::new(0.0);
        // no n=0 -> -1 transition on the red sideband
        let p = flip_probability(&state, SidebandBranch::Red, 3e-6, 1e6, 0.2, 6e-6);
        assert_eq!(p, 0.0);
        // zero-duration pulse transfers nothing on any branch
        for b in [
            SidebandBranch::Red,
            SidebandBranch::Carrier,
            SidebandBranch::Blue,
        ] {
            let p = flip_probability(&ThermalState::new(0.7), b, 0.0, 1e6, 0.2, 6e-6);
            assert_eq!(p, 0.0);
        }
    }

    #[test]
    fn pi_pulse_ratio_near_thermal_identity() {
        // Brute-force check: at pi-pulse conditions the red/blue ratio stays
        // within 5% of nbar/(nbar+1). (For a thermal state the identity is
        // exact up to truncation: p_n = q * p_{n-1} termwise.)
        let state = ThermalState::new(0.34);
        let eta = 0.2;
        let t_pi = 3e-6;
        let rabi_base = std::f64::consts::PI / (t_pi * eta);
        let red = flip_probability(&state, SidebandBranch::Red, t_pi, rabi_base, eta, f64::INFINITY);
        let blue =
            flip_probability(&state, SidebandBranch::Blue, t_pi, rabi_base, eta, f64::INFINITY);
        let want = 0.34 / 1.34;
        assert!(
            (red / blue - want).abs() / want < 0.05,
            "ratio {} vs {}",
            red / blue,
            want
        );
    }

    #[test]
    fn truncation_is_stable() {
        // extending the cutoff by 10 changes the result by < 1e-8 relative
        let state = ThermalState::new(3.0);
        let eta = 0.2;
        let rabi = 1.5e6;
        let n_max = state.truncation(1e-9);
        let sum_to = |n_hi: u32| -> f64 {
            (0..=n_hi)
                .map(|n| {
                    state.pn(n)
                        * flop(
                            SidebandBranch::Blue.rabi(n as u64, rabi, eta),
                            3e-6,
                            6e-6,
                        )
                })
                .sum()
        };
        let a = sum_to(n_max);
        let b = sum_to(n_max + 10);
        assert!((a - b).abs() / b < 1e-8);
    }

    #[test]
    fn red_strictly_below_blue() {
        for nbar in [0.1, 0.34, 1.0, 3.0] {
            let state = ThermalState::new(nbar);
            for t_us in [0.5, 1.0, 3.0, 5.0, 10.0] {
                let t = t_us * 1e-6;
                let red = flip_probability(&state, SidebandBranch::Red, t, 1.5e6, 0.2, 6e-6);
                let blue = flip_probability(&state, SidebandBranch::Blue, t, 1.5e6, 0.2, 6e-6);
                assert!(red < blue, "nbar={nbar} t={t_us}us: {red} !< {blue}");
            }
        }
    }

    #[test]
    fn ratio_algebra() {
        assert_eq!(ratio_to_nbar(0.5).unwrap(), 1.0);
        // inversion of the ratio formula; matches the Fig. 3-scale value
        assert!((ratio_to_nbar(0.2537).unwrap() - 0.340).abs() < 1e-3);
        assert!(matches!(
            ratio_to_nbar(1.0),
            Err(SidebandError::InfiniteTemperature(_))
        ));
        assert!(matches!(
            ratio_to_nbar(1.7),
            Err(SidebandError::InfiniteTemperature(_))
        ));
    }

    #[test]
    fn synth_scan_ground_state_has_blue_only() {
        let (species, cfg, raman) = mg25_setup(5.25);
        let grid = default_scan_grid(&cfg, &raman);
        let scan = synth_scan(&ThermalState::new(0.0), &species, &cfg, &raman, &grid);
        let f_trap = cfg.motional_frequency / TAU;
        let dip_at = |center: f64| -> f64 {
            let mut best = 0.0f64;
            let baseline = scan.signal.iter().cloned().fold(f64::MIN, f64::max);
            for (&d, &y) in scan.detunings.iter().zip(&scan.signal) {
                if (d - center).abs() < 0.2 * f_trap {
                    best = best.max(baseline - y);
                }
            }
            best
        };
        let blue = dip_at(f_trap);
        let red = dip_at(-f_trap);
        assert!(blue > 0.1 * scan.signal.iter().cloned().fold(f64::MIN, f64::max));
        assert!(red < 1e-9 * blue.max(1.0), "red dip {red} blue dip {blue}");
    }

    #[test]
    fn fit_scan_recovers_nbar_at_paper_statistics() {
        // closed loop synth -> fit at the Fig. 3 operating point
        let (species, cfg, raman) = mg25_setup(5.25);
        let grid = default_scan_grid(&cfg, &raman);
        let scan = synth_scan(&ThermalState::new(0.34), &species, &cfg, &raman, &grid);
        let fit = fit_scan(&scan, &FitScanOptions::default()).unwrap();
        assert!(
            (fit.nbar - 0.34).abs() < 2.0 * fit.nbar_stderr.max(1e-3),
            "nbar = {} +- {}",
            fit.nbar,
            fit.nbar_stderr
        );
        // paper-scale precision: the 1400-shot error is of order 0.08
        assert!(fit.nbar_stderr < 0.15, "stderr = {}", fit.nbar_stderr);
    }

    #[test]
    fn fit_scan_closed_loop_multiple_nbar() {
        let (species, cfg, raman) = mg25_setup(4.02);
        let grid = default_scan_grid(&cfg, &raman);
        for nbar in [0.1, 0.34, 1.0, 3.0] {
            let scan = synth_scan(&ThermalState::new(nbar), &species, &cfg, &raman, &grid);
            let fit = fit_scan(&scan, &FitScanOptions::default()).unwrap();
            assert!(
                (fit.nbar - nbar).abs() < 2.0 * fit.nbar_stderr.max(0.01 * nbar),
                "nbar {nbar}: fitted {} +- {}",
                fit.nbar,
                fit.nbar_stderr
            );
        }
    }

    #[test]
    fn fit_scan_shared_width_option() {
        let (species, cfg, raman) = mg25_setup(5.25);
        let grid = default_scan_grid(&cfg, &raman);
        let scan = synth_scan(&ThermalState::new(0.5), &species, &cfg, &raman, &grid);
        let fit = fit_scan(
            &scan,
            &FitScanOptions {
                shared_width: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(fit.widths[0], fit.widths[1]);
        assert!((fit.nbar - 0.5).abs() < 3.0 * fit.nbar_stderr.max(0.02));
    }

    #[test]
    fn fit_scan_zero_blue_is_error_not_crash() {
        // flat scan with no dips at all: blue amplitude ~ 0
        let detunings: Vec<f64> = (0..60).map(|i| -6e6 + 2e5 * i as f64).collect();
        let n = detunings.len();
        let scan = SidebandScan {
            detunings,
            signal: vec![2.0; n],
            stderr: vec![0.05; n],
            probe_duration: 3e-6,
        };
        assert!(fit_scan(&scan, &FitScanOptions::default()).is_err());
    }

    #[test]
    fn hot_state_ratio_near_one_flagged() {
        // R -> 1 as nbar grows; the pole in R/(1-R) must surface as an error
        // or an exploding stderr, never a silent bad number.
        let (species, cfg, raman) = mg25_setup(4.02);
        let grid = default_scan_grid(&cfg, &raman);
        let scan = synth_scan(&ThermalState::new(60.0), &species, &cfg, &raman, &grid);
        match fit_scan(&scan, &FitScanOptions::default()) {
            Err(SidebandError::InfiniteTemperature(_)) => {}
            Ok(fit) => {
                assert!(
                    fit.nbar_stderr / fit.nbar.max(1.0) > 0.2,
                    "near-pole fit must carry a large error: {} +- {}",
                    fit.nbar,
                    fit.nbar_stderr
                );
            }
            Err(e) => panic!("unexpected error kind: {e}"),
        }
    }
}
