//! Stochastic Monte Carlo laboratory: heating as a continuous-time jump
//! process, pulse-sequence execution for sideband experiments, and
//! synthetic photon-count datasets with Poisson shot noise.
//!
//! Determinism: every trial draws from its own ChaCha stream derived from
//! (seed, stream id), and aggregation order is fixed, so identical seed and
//! configuration produce bit-identical datasets regardless of thread count.

use crate::config::{
    lamb_dicke, DelaySchedule, IonSpecies, RamanParams, RecoolParams, SimConfig, TrapLaserConfig,
};
use crate::recool::{at_rest_scattering_rate, RecoolModel, RecoolTrace};
use crate::sideband::{detuned_flop, SidebandBranch, SidebandScan};
use crate::stats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid pulse sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid simulation input: {0}")]
    InvalidInput(String),
}

/// Motional heating as a jump process with upward rate A·(n+1) and downward
/// rate A·n, so the ensemble mean obeys d⟨n⟩/dt = A exactly and thermal
/// distributions stay thermal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatingProcess {
    /// Target heating rate A = d⟨n⟩/dt (quanta/s).
    pub rate: f64,
    pub seed: u64,
}

impl HeatingProcess {
    pub fn new(rate: f64, seed: u64) -> Self {
        assert!(rate >= 0.0, "heating rate must be non-negative");
        Self { rate, seed }
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Advance the heating walk from occupation `n0` for time `t`, returning the
/// final occupation. Exact Gillespie simulation of the jump process.
pub fn heating_walk_step(n0: u64, rate: f64, t: f64, rng: &mut ChaCha12Rng) -> u64 {
    if rate <= 0.0 || t <= 0.0 {
        return n0;
    }
    let mut n = n0;
    let mut remaining = t;
    loop {
        let total = rate * (2 * n + 1) as f64;
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let wait = -u.ln() / total;
        if wait >= remaining {
            return n;
        }
        remaining -= wait;
        let p_up = (n + 1) as f64 / (2 * n + 1) as f64;
        if rng.random::<f64>() < p_up {
            n += 1;
        } else {
            n -= 1;
        }
    }
}

/// Jump-resolved record of one trajectory. For very long walks the jump
/// log is decimated (stride doubling) to bound memory; the final state is
/// always recorded exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    /// Jump times (s), non-decreasing.
    pub times: Vec<f64>,
    /// Occupation after each recorded jump.
    pub n_values: Vec<u64>,
    /// Photon counts per detection window (filled by sequence execution).
    pub photon_counts: Vec<u64>,
    /// Total number of jumps taken (before decimation).
    pub jumps: u64,
}

impl TrajectoryRecord {
    pub fn final_n(&self) -> u64 {
        *self.n_values.last().expect("record never empty")
    }
}

const MAX_RECORDED_JUMPS: usize = 1 << 16;

/// Simulate the heating walk from `n0` over `[0, t]`, recording the jump
/// history.
pub fn simulate_heating_walk(n0: u64, proc: &HeatingProcess, t: f64) -> TrajectoryRecord {
    assert!(t >= 0.0, "duration must be non-negative");
    let mut rng = stream_rng(proc.seed, 0);
    let mut times = vec![0.0];
    let mut n_values = vec![n0];
    let mut n = n0;
    let mut now = 0.0;
    let mut jumps = 0u64;
    let mut stride = 1u64;
    if proc.rate > 0.0 && t > 0.0 {
        loop {
            let total = proc.rate * (2 * n + 1) as f64;
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            let wait = -u.ln() / total;
            if now + wait >= t {
                break;
            }
            now += wait;
            let p_up = (n + 1) as f64 / (2 * n + 1) as f64;
            if rng.random::<f64>() < p_up {
                n += 1;
            } else {
                n -= 1;
            }
            jumps += 1;
            if jumps % stride == 0 {
                times.push(now);
                n_values.push(n);
                if times.len() >= MAX_RECORDED_JUMPS {
                    // halve the kept history and double the stride
                    let mut kt = Vec::with_capacity(times.len() / 2 + 1);
                    let mut kn = Vec::with_capacity(times.len() / 2 + 1);
                    for i in (0..times.len()).step_by(2) {
                        kt.push(times[i]);
                        kn.push(n_values[i]);
                    }
                    times = kt;
                    n_values = kn;
                    stride *= 2;
                }
            }
        }
    }
    times.push(t);
    n_values.push(n);
    TrajectoryRecord {
        times,
        n_values,
        photon_counts: Vec::new(),
        jumps,
    }
}

/// Final occupations of an ensemble of independent heating walks, one
/// ChaCha stream per trajectory.
pub fn heating_walk_ensemble(
    n0: impl Fn(&mut ChaCha12Rng) -> u64 + Sync,
    proc: &HeatingProcess,
    t: f64,
    trajectories: usize,
) -> Vec<u64> {
    (0..trajectories as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(proc.seed, i);
            let start = n0(&mut rng);
            heating_walk_step(start, proc.rate, t, &mut rng)
        })
        .collect()
}

/// Draw from a thermal (geometric) occupation distribution with mean nbar.
pub fn sample_thermal(nbar: f64, rng: &mut ChaCha12Rng) -> u64 {
    if nbar <= 0.0 {
        return 0;
    }
    let q = nbar / (nbar + 1.0);
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    (u.ln() / q.ln()).floor() as u64
}

/// One step of a pulse sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PulseStep {
    DopplerCool { duration: f64 },
    Repump { duration: f64 },
    SidebandCoolCycles { count: usize },
    Delay { duration: f64 },
    RamanProbe { detuning_hz: f64, duration: f64 },
    Detect { duration: f64 },
}

impl PulseStep {
    fn duration(&self) -> f64 {
        match self {
            PulseStep::DopplerCool { duration }
            | PulseStep::Repump { duration }
            | PulseStep::Delay { duration }
            | PulseStep::RamanProbe { duration, .. }
            | PulseStep::Detect { duration } => *duration,
            PulseStep::SidebandCoolCycles { .. } => 0.0,
        }
    }
}

/// Ordered pulse sequence; at most one detection window, and it is last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub steps: Vec<PulseStep>,
}

impl PulseSequence {
    pub fn validate(&self) -> Result<(), SimError> {
        for step in &self.steps {
            if step.duration() < 0.0 {
                return Err(SimError::InvalidSequence(format!(
                    "negative duration in {step:?}"
                )));
            }
        }
        let detects = self
            .steps
            .iter()
            .filter(|s| matches!(s, PulseStep::Detect { .. }))
            .count();
        if detects > 1 {
            return Err(SimError::InvalidSequence(format!(
                "{detects} detect steps; at most one allowed"
            )));
        }
        if detects == 1 && !matches!(self.steps.last(), Some(PulseStep::Detect { .. })) {
            return Err(SimError::InvalidSequence(
                "detect step must be last".into(),
            ));
        }
        Ok(())
    }

    /// The standard measurement sequence: Doppler cooling and state
    /// preparation, resolved sideband cooling, heat-up delay, Raman probe,
    /// fluorescence detection.
    pub fn standard(raman: &RamanParams, delay: f64, probe_detuning_hz: f64) -> Self {
        Self {
            steps: vec![
                PulseStep::DopplerCool {
                    duration: raman.doppler_cool,
                },
                PulseStep::Repump {
                    duration: raman.repump,
                },
                PulseStep::SidebandCoolCycles {
                    count: raman.cool_cycles,
                },
                PulseStep::Delay { duration: delay },
                PulseStep::RamanProbe {
                    detuning_hz: probe_detuning_hz,
                    duration: raman.pi_time,
                },
                PulseStep::Detect {
                    duration: raman.detect_duration,
                },
            ],
        }
    }
}

/// Precomputed per-shot physics for sequence execution.
struct SequenceContext {
    nbar_doppler: f64,
    eta: f64,
    rabi_base: f64,
    decay_tau: f64,
    omega: f64,
    heating_rate: f64,
    bright_rate_detected: f64,
    background_cps: f64,
    /// Per-cycle sideband-cooling flip probability, indexed by n.
    cool_flip: Vec<f64>,
}

impl SequenceContext {
    fn new(
        species: &IonSpecies,
        cfg: &TrapLaserConfig,
        raman: &RamanParams,
        heating_rate: f64,
        nbar_doppler: f64,
        background_cps: f64,
    ) -> Result<Self, SimError> {
        let eta = lamb_dicke(species, cfg).map_err(|e| SimError::InvalidInput(e.to_string()))?;
        let rabi_base = raman.rabi_base(eta);
        let decay_tau = raman.decay_tau();
        // Sideband cooling: each cycle attempts a red-sideband pi-pulse
        // timed for n = 1; with strong flopping decay, the transfer follows
        // the damped Rabi form 1/2*(1 - cos(Omega_n t) e^{-t/tau}), which
        // stays finite at 2*pi pulse areas (perfect-square occupations).
        let t_pi = raman.pi_time;
        let n_table = 4096usize;
        let mut cool_flip = vec![0.0; n_table];
        for (n, p) in cool_flip.iter_mut().enumerate().skip(1) {
            let w = rabi_base * eta * (n as f64).sqrt();
            *p = 0.5 * (1.0 - (w * t_pi).cos() * (-t_pi / decay_tau).exp());
        }
        Ok(Self {
            nbar_doppler,
            eta,
            rabi_base,
            decay_tau,
            omega: cfg.motional_frequency,
            heating_rate,
            bright_rate_detected: at_rest_scattering_rate(species, cfg)
                * cfg.detection_efficiency,
            background_cps,
            cool_flip,
        })
    }

    fn cool_flip_prob(&self, n: u64) -> f64 {
        if n == 0 {
            return 0.0;
        }
        if let Some(&p) = self.cool_flip.get(n as usize) {
            return p;
        }
        let w = self.rabi_base * self.eta * (n as f64).sqrt();
        // table covers the cold regime; recompute for rare hot outliers
        let t_pi = std::f64::consts::PI / (self.rabi_base * self.eta);
        0.5 * (1.0 - (w * t_pi).cos() * (-t_pi / self.decay_tau).exp())
    }
}

/// Outcome of one trial of a pulse sequence.
#[derive(Debug, Clone, Copy)]
struct TrialOutcome {
    counts: u64,
    final_n: u64,
    bright: bool,
}

fn run_trial(
    seq: &PulseSequence,
    ctx: &SequenceContext,
    rng: &mut ChaCha12Rng,
) -> TrialOutcome {
    let mut n: u64 = 0;
    let mut bright = true;
    let mut counts = 0u64;
    for step in &seq.steps {
        match *step {
            PulseStep::DopplerCool { duration } => {
                if duration > 0.0 {
                    n = sample_thermal(ctx.nbar_doppler, rng);
                    bright = true;
                }
            }
            PulseStep::Repump { duration } => {
                if duration > 0.0 {
                    bright = true;
                }
            }
            PulseStep::SidebandCoolCycles { count } => {
                for _ in 0..count {
                    if n > 0 && rng.random::<f64>() < ctx.cool_flip_prob(n) {
                        n -= 1;
                    }
                    // each cycle ends with repumping back to the bright state
                }
                bright = true;
            }
            PulseStep::Delay { duration } => {
                n = heating_walk_step(n, ctx.heating_rate, duration, rng);
            }
            PulseStep::RamanProbe {
                detuning_hz,
                duration,
            } => {
                if bright && duration > 0.0 {
                    let delta = crate::config::TAU * detuning_hz;
                    let mut p = [0.0f64; 3];
                    let branches = [
                        SidebandBranch::Red,
                        SidebandBranch::Carrier,
                        SidebandBranch::Blue,
                    ];
                    for (i, b) in branches.iter().enumerate() {
                        let w = b.rabi(n, ctx.rabi_base, ctx.eta);
                        let d = delta - b.center(ctx.omega);
                        p[i] = detuned_flop(w, d, duration, ctx.decay_tau);
                    }
                    let total = (p[0] + p[1] + p[2]).min(1.0);
                    if rng.random::<f64>() < total {
                        bright = false;
                        // attribute the flip to a branch by its weight
                        let pick = rng.random::<f64>() * (p[0] + p[1] + p[2]);
                        if pick < p[0] {
                            n = n.saturating_sub(1);
                        } else if pick >= p[0] + p[1] {
                            n += 1;
                        }
                    }
                }
            }
            PulseStep::Detect { duration } => {
                let mut mean = ctx.background_cps * duration;
                if bright {
                    mean += ctx.bright_rate_detected * duration;
                }
                if mean > 0.0 {
                    counts += Poisson::new(mean).expect("positive mean").sample(rng) as u64;
                }
            }
        }
    }
    TrialOutcome {
        counts,
        final_n: n,
        bright,
    }
}

/// Aggregate of repeated sequence trials.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceOutcome {
    pub trials: usize,
    pub mean_counts: f64,
    pub stderr_counts: f64,
    /// Final occupation per trial (diagnostic; drives closed-loop checks).
    pub final_n: Vec<u64>,
    pub dark_fraction: f64,
}

/// Execute `trials` independent repetitions of a pulse sequence and
/// aggregate detected counts. The `stream_base` offsets the per-trial RNG
/// streams so distinct scan points use disjoint streams.
pub fn run_sequence(
    seq: &PulseSequence,
    species: &IonSpecies,
    cfg: &TrapLaserConfig,
    raman: &RamanParams,
    proc: &HeatingProcess,
    trials: usize,
    nbar_doppler: f64,
    background_cps: f64,
    stream_base: u64,
) -> Result<SequenceOutcome, SimError> {
    seq.validate()?;
    if trials < 1 {
        return Err(SimError::InvalidInput("trials must be >= 1".into()));
    }
    let ctx = SequenceContext::new(species, cfg, raman, proc.rate, nbar_doppler, background_cps)?;
    let outcomes: Vec<TrialOutcome> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(proc.seed, stream_base + i);
            run_trial(seq, &ctx, &mut rng)
        })
        .collect();
    let counts: Vec<f64> = outcomes.iter().map(|o| o.counts as f64).collect();
    let dark = outcomes.iter().filter(|o| !o.bright).count();
    Ok(SequenceOutcome {
        trials,
        mean_counts: stats::mean(&counts),
        stderr_counts: if trials > 1 {
            stats::stderr_of_mean(&counts)
        } else {
            counts[0].max(1.0).sqrt()
        },
        final_n: outcomes.iter().map(|o| o.final_n).collect(),
        dark_fraction: dark as f64 / trials as f64,
    })
}

/// Sweep the standard sequence over a probe-detuning grid, producing a
/// Monte Carlo sideband scan at one delay. `stream_block` must be distinct
/// across scans sharing one seed (e.g. the delay index) so every shot draws
/// from its own RNG stream.
#[allow(clippy::too_many_arguments)]
pub fn synth_sideband_scan(
    species: &IonSpecies,
    cfg: &TrapLaserConfig,
    raman: &RamanParams,
    proc: &HeatingProcess,
    delay: f64,
    detuning_grid: &[f64],
    nbar_doppler: f64,
    background_cps: f64,
    stream_block: u64,
) -> Result<SidebandScan, SimError> {
    let shots = raman.shots_per_point.max(1);
    let results: Vec<Result<(f64, f64), SimError>> = detuning_grid
        .par_iter()
        .enumerate()
        .map(|(pi, &f_hz)| {
            let seq = PulseSequence::standard(raman, delay, f_hz);
            // disjoint stream block per (scan, point): 20 bits for shots,
            // 16 for points
            let stream_base = (stream_block << 36) | ((pi as u64) << 20);
            let out = run_sequence(
                &seq,
                species,
                cfg,
                raman,
                proc,
                shots,
                nbar_doppler,
                background_cps,
                stream_base,
            )?;
            Ok((out.mean_counts, out.stderr_counts))
        })
        .collect();
    let mut signal = Vec::with_capacity(detuning_grid.len());
    let mut stderr = Vec::with_capacity(detuning_grid.len());
    for r in results {
        let (m, s) = r?;
        signal.push(m);
        stderr.push(s.max(1e-9));
    }
    Ok(SidebandScan {
        detunings: detuning_grid.to_vec(),
        signal,
        stderr,
        probe_duration: raman.pi_time,
    })
}

/// Post-sideband-cooling occupation ensemble at delay 0 under the standard
/// sequence (diagnostic for closed-loop tests).
pub fn post_cooling_ensemble(
    species: &IonSpecies,
    cfg: &TrapLaserConfig,
    raman: &RamanParams,
    proc: &HeatingProcess,
    nbar_doppler: f64,
    trials: usize,
) -> Result<Vec<u64>, SimError> {
    let seq = PulseSequence {
        steps: vec![
            PulseStep::DopplerCool {
                duration: raman.doppler_cool,
            },
            PulseStep::Repump {
                duration: raman.repump,
            },
            PulseStep::SidebandCoolCycles {
                count: raman.cool_cycles,
            },
        ],
    };
    let out = run_sequence(
        &seq,
        species,
        cfg,
        raman,
        proc,
        trials,
        nbar_doppler,
        0.0,
        0x5eed_0000_0000,
    )?;
    Ok(out.final_n)
}

/// Synthesize Doppler-recooling traces for each delay: start energies are
/// drawn per repeat from the heated thermal ensemble (mean n̄₀ + A·delay),
/// propagated through the recooling forward model, and binned as Poisson
/// photon counts.
pub fn synth_recool_dataset(
    schedule: &DelaySchedule,
    model: &RecoolModel,
    proc: &HeatingProcess,
    recool: &RecoolParams,
) -> Result<Vec<RecoolTrace>, SimError> {
    schedule
        .validate()
        .map_err(|e| SimError::InvalidInput(e.to_string()))?;
    let (_species, cfg) = model.config();
    let hq = cfg.quantum_energy();
    let nbar0 = model.steady_state_energy() / hq;
    let nbins = recool.bins_per_trace.max(10);
    let repeats = schedule.repeats_per_delay;

    let mut traces = Vec::with_capacity(schedule.delays.len());
    for (di, &delay) in schedule.delays.iter().enumerate() {
        let nbar = nbar0 + proc.rate * delay;
        // Trace window: long enough for a 3x-mean start energy to recover,
        // with margin; floor keeps delay-0 traces from degenerating.
        let e_probe = (3.0 * nbar.max(1.0)) * hq;
        let t_rec = model
            .recovery_time(e_probe.min(0.999 * model.max_start_energy()), 0.02)
            .map_err(|e| SimError::InvalidInput(e.to_string()))?;
        let duration = (1.3 * t_rec).max(2e-5);
        let edges: Vec<f64> = (0..=nbins)
            .map(|i| duration * i as f64 / nbins as f64)
            .collect();
        let mids: Vec<f64> = (0..nbins).map(|i| 0.5 * (edges[i] + edges[i + 1])).collect();
        let width = duration / nbins as f64;

        let per_repeat: Vec<Vec<u64>> = (0..repeats as u64)
            .into_par_iter()
            .map(|ri| {
                let mut rng = stream_rng(proc.seed, ((di as u64 + 1) << 32) | ri);
                let n_start = sample_thermal(nbar, &mut rng);
                let e0 = (n_start as f64 * hq).min(0.999 * model.max_start_energy());
                let rates = model.curve(e0, &mids).expect("coverage checked");
                rates
                    .iter()
                    .map(|r| {
                        let mean = (r + recool.background_cps) * width;
                        if mean > 0.0 {
                            Poisson::new(mean).expect("positive mean").sample(&mut rng) as u64
                        } else {
                            0
                        }
                    })
                    .collect()
            })
            .collect();

        let mut counts = vec![0u64; nbins];
        for rep in &per_repeat {
            for (c, r) in counts.iter_mut().zip(rep) {
                *c += r;
            }
        }
        traces.push(RecoolTrace {
            delay,
            bin_edges: edges,
            counts,
            repeats,
        });
    }
    Ok(traces)
}

/// JSON sidecar written next to every synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub config: crate::config::SimConfigFile,
    pub seed: u64,
    pub heating_rate_quanta_per_s: f64,
    pub kind: String,
}

impl DatasetSidecar {
    pub fn new(cfg: &SimConfig, seed: u64, kind: &str) -> Self {
        Self {
            config: crate::config::SimConfigFile::from(cfg),
            seed,
            heating_rate_quanta_per_s: cfg.heating_rate,
            kind: kind.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{NumericsParams, SimConfig, TAU};
    use crate::stats::{ks_geometric, mean, ols_line, stderr_of_mean};

    #[test]
    fn zero_rate_walk_is_constant() {
        let proc = HeatingProcess::new(0.0, 42);
        let rec = simulate_heating_walk(7, &proc, 2.0);
        assert_eq!(rec.final_n(), 7);
        assert_eq!(rec.jumps, 0);
        assert!(rec.n_values.iter().all(|&n| n == 7));
    }

    #[test]
    fn walk_mean_growth_short_times() {
        // thermal start nbar0 = 0.34, A = 300/s, t = 5 ms, 1e4 trajectories:
        // ensemble mean must sit at 0.34 + 1.5 within 3 standard errors
        let proc = HeatingProcess::new(300.0, 11);
        let finals = heating_walk_ensemble(
            |rng| sample_thermal(0.34, rng),
            &proc,
            5e-3,
            10_000,
        );
        let xs: Vec<f64> = finals.iter().map(|&n| n as f64).collect();
        let m = mean(&xs);
        let se = stderr_of_mean(&xs);
        let want = 0.34 + 1.5;
        assert!(
            (m - want).abs() < 3.0 * se,
            "mean {m} vs {want} (se {se})"
        );
    }

    #[test]
    fn walk_mean_reaches_recool_scale() {
        // A = 620/s for 25 s: mean ~ 15500 quanta (few trajectories, so
        // compare within sampled standard errors)
        let proc = HeatingProcess::new(620.0, 5);
        let finals = heating_walk_ensemble(|_| 0, &proc, 25.0, 8);
        let xs: Vec<f64> = finals.iter().map(|&n| n as f64).collect();
        let m = mean(&xs);
        let se = stderr_of_mean(&xs);
        assert!(
            (m - 15_500.0).abs() < 4.0 * se.max(1.0),
            "mean {m} (se {se})"
        );
    }

    #[test]
    fn walk_preserves_thermality() {
        // heated thermal ensemble stays geometric (KS p > 0.01, 1e4 samples)
        let proc = HeatingProcess::new(300.0, 21);
        let finals = heating_walk_ensemble(
            |rng| sample_thermal(2.0, rng),
            &proc,
            5e-3,
            10_000,
        );
        let m = finals.iter().sum::<u64>() as f64 / finals.len() as f64;
        let ks = ks_geometric(&finals, m);
        assert!(ks.p_value > 0.01, "KS p = {} (D = {})", ks.p_value, ks.statistic);
    }

    #[test]
    fn walk_linear_mean_growth_slope() {
        for rate in [300.0, 620.0, 1470.0] {
            let proc = HeatingProcess::new(rate, 33);
            let ts = [1e-3, 2e-3, 3e-3, 4e-3, 5e-3];
            let mut means = Vec::new();
            let mut ses = Vec::new();
            for (i, &t) in ts.iter().enumerate() {
                let p = HeatingProcess::new(rate, proc.seed + i as u64 * 7919);
                let finals = heating_walk_ensemble(|_| 0, &p, t, 4000);
                let xs: Vec<f64> = finals.iter().map(|&n| n as f64).collect();
                means.push(mean(&xs));
                ses.push(stderr_of_mean(&xs));
            }
            let (slope, _icpt, slope_se) = ols_line(&ts, &means);
            assert!(
                (slope - rate).abs() < 3.0 * slope_se,
                "A = {rate}: slope {slope} +- {slope_se}"
            );
        }
    }

    #[test]
    fn sequence_validation() {
        let bad = PulseSequence {
            steps: vec![
                PulseStep::Detect { duration: 1e-5 },
                PulseStep::Delay { duration: 1e-3 },
            ],
        };
        assert!(bad.validate().is_err());
        let bad2 = PulseSequence {
            steps: vec![PulseStep::Delay { duration: -1.0 }],
        };
        assert!(bad2.validate().is_err());
        let ok = PulseSequence::standard(&RamanParams::default(), 1e-3, 0.0);
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn zero_duration_detect_gives_zero_photons() {
        let c = SimConfig::mg25_defaults(TAU * 4.02e6, 0.0);
        let seq = PulseSequence {
            steps: vec![
                PulseStep::DopplerCool { duration: 300e-6 },
                PulseStep::Detect { duration: 0.0 },
            ],
        };
        let proc = HeatingProcess::new(0.0, 3);
        let out = run_sequence(
            &seq, &c.species, &c.trap, &c.raman, &proc, 200, 5.0, 0.0, 0,
        )
        .unwrap();
        assert_eq!(out.mean_counts, 0.0);
    }

    #[test]
    fn cooling_reaches_below_one_quantum() {
        // 30 cycles at 5.25 MHz from the Doppler limit: ensemble <n> <= 1
        let c = SimConfig::mg25_defaults(TAU * 5.25e6, 0.0);
        let np = NumericsParams::default();
        let model = RecoolModel::new(&c.species, &c.trap, &c.recool, &np, None).unwrap();
        let nbar_dop = model.steady_state_energy() / c.trap.quantum_energy();
        let proc = HeatingProcess::new(0.0, 17);
        let finals =
            post_cooling_ensemble(&c.species, &c.trap, &c.raman, &proc, nbar_dop, 4000).unwrap();
        let m = finals.iter().sum::<u64>() as f64 / finals.len() as f64;
        assert!(m <= 1.0, "post-cooling <n> = {m}");
        assert!(m > 0.01, "implausibly perfect cooling: <n> = {m}");
    }

    #[test]
    fn deterministic_given_seed() {
        let c = SimConfig::mg25_defaults(TAU * 4.02e6, 690.0);
        let proc = HeatingProcess::new(690.0, 99);
        let grid = [-4.1e6, -4.0e6, -3.9e6, 3.9e6, 4.0e6, 4.1e6];
        let mut raman = c.raman.clone();
        raman.shots_per_point = 50;
        let a = synth_sideband_scan(&c.species, &c.trap, &raman, &proc, 1e-3, &grid, 5.0, 0.0, 1)
            .unwrap();
        let b = synth_sideband_scan(&c.species, &c.trap, &raman, &proc, 1e-3, &grid, 5.0, 0.0, 1)
            .unwrap();
        assert_eq!(a, b);
        let proc2 = HeatingProcess::new(690.0, 100);
        let c2 =
            synth_sideband_scan(&c.species, &c.trap, &raman, &proc2, 1e-3, &grid, 5.0, 0.0, 1)
                .unwrap();
        assert_ne!(a.signal, c2.signal);
    }

    #[test]
    fn recool_dataset_zero_delay_is_flat() {
        // delay 0 starts at the Doppler limit: reduced chi2 against a
        // constant model ~ 1
        let c = SimConfig::mg25_defaults(TAU * 4.02e6, 620.0);
        let np = NumericsParams::default();
        let model = RecoolModel::new(&c.species, &c.trap, &c.recool, &np, None).unwrap();
        let proc = HeatingProcess::new(620.0, 7);
        let schedule = DelaySchedule {
            delays: vec![0.0],
            repeats_per_delay: 200,
        };
        let traces = synth_recool_dataset(&schedule, &model, &proc, &c.recool).unwrap();
        let tr = &traces[0];
        let rates: Vec<f64> = (0..tr.counts.len())
            .map(|i| tr.counts[i] as f64)
            .collect();
        let mbar = mean(&rates);
        let chi2: f64 = rates.iter().map(|&c| (c - mbar).powi(2) / mbar.max(1.0)).sum();
        let red = chi2 / (rates.len() as f64 - 1.0);
        assert!(red < 1.6, "reduced chi2 against constant = {red}");
    }

    #[test]
    fn recool_dataset_two_seeds_agree_on_energy() {
        // different seeds give different traces but compatible fitted E0
        let c = SimConfig::mg25_defaults(TAU * 4.02e6, 620.0);
        let np = NumericsParams::default();
        let model = RecoolModel::new(&c.species, &c.trap, &c.recool, &np, None).unwrap();
        let schedule = DelaySchedule {
            delays: vec![10.0],
            repeats_per_delay: 150,
        };
        let mut fits = Vec::new();
        for seed in [1u64, 2u64] {
            let proc = HeatingProcess::new(620.0, seed);
            let traces = synth_recool_dataset(&schedule, &model, &proc, &c.recool).unwrap();
            let fit = model
                .fit(&traces[0], &crate::recool::RecoolFitOptions::default())
                .unwrap();
            fits.push(fit);
        }
        assert_ne!(fits[0].e0, fits[1].e0);
        let diff = (fits[0].e0 - fits[1].e0).abs();
        let comb = (fits[0].e0_stderr.powi(2) + fits[1].e0_stderr.powi(2)).sqrt();
        assert!(diff < 4.0 * comb, "E0 differ by {diff} vs stderr {comb}");
    }
}
