//! Virtual lab for two-photon interference with time-separated weak
//! coherent pulses.
//!
//! The crate models a pulsed polarization interferometer end to end: a
//! semiclassical intensity model and an independent quantum amplitude oracle
//! ([`optics`], [`fock`]), a click-level Monte Carlo simulator ([`sim`]), a
//! binary time-tag container ([`tags`]), delayed-coincidence analysis
//! ([`correlator`]), and fringe scanning plus Gaussian fitting ([`fringe`]).
//! The `homlab` binary exposes all of it on the command line ([`cli`]).

pub mod cli;
pub mod config;
pub mod correlator;
pub mod error;
pub mod fock;
pub mod fringe;
pub mod optics;
pub mod rng;
pub mod sim;
pub mod tags;

pub use config::RunConfig;
pub use correlator::CoincidenceSpec;
pub use error::{Error, Result};
pub use fringe::{estimate_visibility, fit_fringe, run_scan, FringeCurve, FringeFit, ScanResult};
pub use optics::{CoherenceModel, OpticalConfig, Pairing, Topology};
pub use sim::{simulate, DetectorConfig, SimPlan};
pub use tags::{TagStream, TimeTag};
