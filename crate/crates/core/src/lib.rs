//! Simulation and analysis toolkit for trapped-ion motional heating
//! measurements.
//!
//! A single trapped ion heats up through electric-field noise from the trap
//! electrodes; this crate models that heating as a jump process and
//! implements the two measurement pipelines used to quantify it:
//!
//! * **Doppler recooling** — time-resolved fluorescence while a red-detuned
//!   laser recools an ion that heated up during a dark delay
//!   ([`recool`]), fitted for the energy at the start of recooling.
//! * **Raman sideband thermometry** — red/blue sideband spectroscopy of a
//!   thermal state ([`sideband`]), with n̄ = R/(1−R) ratio thermometry.
//!
//! [`simlab`] provides the stochastic ground truth (heating walks, pulse
//! sequences, Poisson photon counting), [`rates`] turns occupation-versus-
//! delay datasets into heating rates and electric-field noise densities,
//! and [`survey`] compares traps across ion-electrode distances. The
//! [`reproduce`] module wires everything into a closed-loop validation
//! suite that recovers injected heating rates end to end.

pub mod config;
pub mod constants;
pub mod fit;
pub mod numerics;
pub mod rates;
pub mod recool;
pub mod reproduce;
pub mod sideband;
pub mod simlab;
pub mod stats;
pub mod survey;

pub use config::{
    lamb_dicke, validate_config, DelaySchedule, IonSpecies, SimConfig, TrapLaserConfig,
};
pub use rates::{compare_methods, electric_field_noise, fit_rate, power_law_fit, HeatingDataset};
pub use recool::{RecoolFit, RecoolModel, RecoolTrace};
pub use sideband::{fit_scan, flip_probability, synth_scan, SidebandScan, ThermalState};
pub use simlab::{HeatingProcess, PulseSequence, PulseStep};
