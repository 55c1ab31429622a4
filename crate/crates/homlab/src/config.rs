//! Run configuration: one TOML file describing source, interferometer,
//! analyzer, detector, scan and coincidence settings.
//!
//! Every field has a default matching the reference operating point, so an
//! empty file (or no file at all) describes a complete, runnable experiment.
//! Unknown keys are rejected to catch typos early.

use crate::correlator::CoincidenceSpec;
use crate::error::{Error, Result};
use crate::optics::{OpticalConfig, Topology};
use crate::sim::DetectorConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Laser and spectral filter settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub wavelength_nm: f64,
    pub pulse_period_ps: u64,
    pub pulse_duration_ps: f64,
    pub filter_fwhm_nm: f64,
    pub mean_photons_per_pulse: f64,
}

impl Default for SourceSection {
    fn default() -> Self {
        let o = OpticalConfig::default();
        SourceSection {
            wavelength_nm: o.wavelength_nm,
            pulse_period_ps: o.pulse_period_ps,
            pulse_duration_ps: o.pulse_duration_ps,
            filter_fwhm_nm: o.filter_fwhm_nm,
            mean_photons_per_pulse: o.mean_photons_per_pulse,
        }
    }
}

/// Layout and phase-scrambling cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterferometerSection {
    pub topology: Topology,
    /// Pulses sharing one random phase draw.
    pub dwell_block_pulses: u64,
}

impl Default for InterferometerSection {
    fn default() -> Self {
        InterferometerSection {
            topology: Topology::SetupB,
            dwell_block_pulses: 20_000,
        }
    }
}

/// Polarizer angles and the splitter sign convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzerSection {
    pub theta1_deg: f64,
    pub theta2_deg: f64,
    pub bs_sign: i8,
}

impl Default for AnalyzerSection {
    fn default() -> Self {
        let o = OpticalConfig::default();
        AnalyzerSection {
            theta1_deg: o.theta1_deg,
            theta2_deg: o.theta2_deg,
            bs_sign: o.bs_sign,
        }
    }
}

/// Displacement sweep parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub points: u32,
    pub dx_min_mm: f64,
    pub dx_max_mm: f64,
    pub pulses_per_point: u64,
    pub seed: u64,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            points: 41,
            dx_min_mm: -1.5,
            dx_max_mm: 1.5,
            pulses_per_point: 5_000_000,
            seed: 1,
        }
    }
}

/// Full experiment description as read from a config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub source: SourceSection,
    pub interferometer: InterferometerSection,
    pub analyzer: AnalyzerSection,
    pub detector: DetectorConfig,
    pub scan: ScanSection,
    /// Empty means "use the standard pairings for the topology".
    pub coincidence_specs: Vec<CoincidenceSpec>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_toml_str(&text)
    }

    /// Assemble the optical settings scattered over the sections.
    pub fn optics(&self) -> OpticalConfig {
        OpticalConfig {
            wavelength_nm: self.source.wavelength_nm,
            pulse_period_ps: self.source.pulse_period_ps,
            pulse_duration_ps: self.source.pulse_duration_ps,
            filter_fwhm_nm: self.source.filter_fwhm_nm,
            mean_photons_per_pulse: self.source.mean_photons_per_pulse,
            topology: self.interferometer.topology,
            theta1_deg: self.analyzer.theta1_deg,
            theta2_deg: self.analyzer.theta2_deg,
            bs_sign: self.analyzer.bs_sign,
        }
    }

    /// Configured pairings, or the standard set for the topology when the
    /// config names none: cross and single-detector pairs one period apart
    /// for the two-detector layout; same-output (two periods) and
    /// opposite-output (two and a half periods) pairs for the folded one.
    pub fn effective_specs(&self) -> Vec<CoincidenceSpec> {
        if !self.coincidence_specs.is_empty() {
            return self.coincidence_specs.clone();
        }
        let period = self.source.pulse_period_ps as i64;
        match self.interferometer.topology {
            Topology::SetupB => vec![
                CoincidenceSpec::cross(0, 1, period),
                CoincidenceSpec::self_channel(0, period),
            ],
            Topology::SetupC => vec![
                CoincidenceSpec::self_channel(0, 2 * period),
                CoincidenceSpec::self_channel(0, 2 * period + period / 2),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.optics().validate()?;
        self.detector.validate()?;
        if self.interferometer.dwell_block_pulses == 0 {
            return Err(Error::InvalidConfig(
                "dwell_block_pulses must be at least 1".into(),
            ));
        }
        if self.scan.points == 0 {
            return Err(Error::InvalidConfig("scan.points must be at least 1".into()));
        }
        if self.scan.pulses_per_point == 0 {
            return Err(Error::InvalidConfig(
                "scan.pulses_per_point must be at least 1".into(),
            ));
        }
        if !self.scan.dx_min_mm.is_finite()
            || !self.scan.dx_max_mm.is_finite()
            || (self.scan.points > 1 && self.scan.dx_min_mm >= self.scan.dx_max_mm)
        {
            return Err(Error::InvalidConfig(format!(
                "scan range [{}, {}] must be finite and increasing",
                self.scan.dx_min_mm, self.scan.dx_max_mm
            )));
        }
        for spec in &self.coincidence_specs {
            spec.validate()?;
        }
        Ok(())
    }

    /// The displacement grid the scan section describes.
    pub fn scan_points(&self) -> Vec<f64> {
        linspace(self.scan.dx_min_mm, self.scan.dx_max_mm, self.scan.points)
    }
}

/// `n` evenly spaced values from `lo` to `hi` inclusive; `n == 1` gives `lo`.
pub fn linspace(lo: f64, hi: f64, n: u32) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}
