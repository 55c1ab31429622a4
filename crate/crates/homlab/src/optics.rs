//! Semiclassical optics model for a pulsed polarization interferometer.
//!
//! A weak coherent pulse train (period `pulse_period_ps`) is split into two
//! arms that acquire a relative path offset `2*dx` (Michelson: the mirror
//! moves by `dx`, the light travels it twice) and a relative phase `phi`
//! that is randomized block-wise. Recombined pulses are analyzed either by
//! two polarizers ahead of two detectors (`SetupB`) or folded onto a single
//! detector with a half-period delay loop (`SetupC`). All interference
//! observables enter through the first-order overlap `gamma(dx)` of the two
//! arm wavepackets and the phase `phi`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Detection-side layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    /// Non-polarizing splitter feeding two analyzers (angles theta1, theta2)
    /// and two detectors D1 = channel 0, D2 = channel 1.
    SetupB,
    /// Both splitter outputs folded onto one detector (channel 0); one output
    /// is delayed by half a pulse period, interleaving the two signals in time.
    SetupC,
}

impl Topology {
    pub fn channel_count(self) -> u16 {
        match self {
            Topology::SetupB => 2,
            Topology::SetupC => 1,
        }
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Topology::SetupB => write!(f, "setup_b"),
            Topology::SetupC => write!(f, "setup_c"),
        }
    }
}

/// Which two-click combination a coincidence rate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// D1 click and a D2 click one pulse period later (SetupB).
    #[serde(rename = "cross_d1d2")]
    CrossD1D2,
    /// Two D1 clicks one pulse period apart (SetupB).
    SelfD1,
    /// Same-output pairs on the single detector, separation n periods (SetupC).
    SelfCPeak,
    /// Opposite-output pairs, separation an odd multiple of half a period (SetupC).
    SelfCDip,
}

impl Pairing {
    pub fn topology(self) -> Topology {
        match self {
            Pairing::CrossD1D2 | Pairing::SelfD1 => Topology::SetupB,
            Pairing::SelfCPeak | Pairing::SelfCDip => Topology::SetupC,
        }
    }
}

impl std::fmt::Display for Pairing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Pairing::CrossD1D2 => "cross_d1d2",
            Pairing::SelfD1 => "self_d1",
            Pairing::SelfCPeak => "self_c_peak",
            Pairing::SelfCDip => "self_c_dip",
        };
        write!(f, "{s}")
    }
}

/// Source, interferometer and analyzer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalConfig {
    pub wavelength_nm: f64,
    pub pulse_period_ps: u64,
    pub pulse_duration_ps: f64,
    /// Spectral filter width; sets the coherence length and fringe envelope.
    pub filter_fwhm_nm: f64,
    /// Mean photon number per pulse at the analyzer input, losses excluded.
    pub mean_photons_per_pulse: f64,
    pub topology: Topology,
    pub theta1_deg: f64,
    pub theta2_deg: f64,
    /// Sign of the interference term on detector 2. The reflected splitter
    /// output sees the analyzer in a mirrored frame, which flips the sign of
    /// its polarization interference term relative to detector 1.
    pub bs_sign: i8,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        OpticalConfig {
            wavelength_nm: 775.0,
            pulse_period_ps: 50_000,
            pulse_duration_ps: 3.5,
            filter_fwhm_nm: 1.0,
            // Tuned so a detector of efficiency 0.5 clicks on 1.5% of pulses,
            // the 300 kHz operating point at a 20 MHz repetition rate.
            mean_photons_per_pulse: 0.120_909,
            topology: Topology::SetupB,
            theta1_deg: 45.0,
            theta2_deg: 45.0,
            bs_sign: -1,
        }
    }
}

impl OpticalConfig {
    pub fn validate(&self) -> Result<()> {
        fn pos(name: &str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        }
        pos("wavelength_nm", self.wavelength_nm)?;
        pos("pulse_duration_ps", self.pulse_duration_ps)?;
        pos("filter_fwhm_nm", self.filter_fwhm_nm)?;
        // Zero is legal: a blocked source still has dark counts worth modeling.
        if !(self.mean_photons_per_pulse.is_finite() && self.mean_photons_per_pulse >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "mean_photons_per_pulse must be non-negative, got {}",
                self.mean_photons_per_pulse
            )));
        }
        if self.pulse_period_ps == 0 {
            return Err(Error::InvalidConfig("pulse_period_ps must be positive".into()));
        }
        // Slot arithmetic treats pulses as instants; keep them far shorter
        // than the period so that approximation is sound.
        if self.pulse_duration_ps > self.pulse_period_ps as f64 / 100.0 {
            return Err(Error::InvalidConfig(format!(
                "pulse_duration_ps {} exceeds pulse_period_ps/100 = {}",
                self.pulse_duration_ps,
                self.pulse_period_ps as f64 / 100.0
            )));
        }
        if self.bs_sign != 1 && self.bs_sign != -1 {
            return Err(Error::InvalidConfig(format!(
                "bs_sign must be +1 or -1, got {}",
                self.bs_sign
            )));
        }
        if !self.theta1_deg.is_finite() || !self.theta2_deg.is_finite() {
            return Err(Error::InvalidConfig("analyzer angles must be finite".into()));
        }
        if self.topology == Topology::SetupC && self.pulse_period_ps % 2 != 0 {
            return Err(Error::InvalidConfig(
                "setup_c needs an even pulse_period_ps for the half-period delay".into(),
            ));
        }
        Ok(())
    }

    pub fn repetition_rate_hz(&self) -> f64 {
        1e12 / self.pulse_period_ps as f64
    }
}

/// First-order coherence envelope of the filtered pulses.
///
/// `mode_overlap` is Gaussian in the round-trip offset `2*dx`:
/// `gamma(dx) = exp(-(2 dx)^2 / (2 l_c^2))` with `l_c = coherence_scale_mm`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoherenceModel {
    pub coherence_scale_mm: f64,
}

const SQRT_LN2: f64 = 0.832_554_611_157_697_7;

impl CoherenceModel {
    pub fn new(coherence_scale_mm: f64) -> Result<Self> {
        if !(coherence_scale_mm.is_finite() && coherence_scale_mm > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "coherence_scale_mm must be positive, got {coherence_scale_mm}"
            )));
        }
        Ok(CoherenceModel { coherence_scale_mm })
    }

    /// Calibrate against the spectral filter: the fringe envelope
    /// `gamma^2(dx)` gets FWHM (in mirror displacement) of
    /// `wavelength^2 / filter_fwhm`.
    pub fn from_optics(cfg: &OpticalConfig) -> Result<Self> {
        cfg.validate()?;
        let fwhm_mm = cfg.wavelength_nm * cfg.wavelength_nm / cfg.filter_fwhm_nm * 1e-6;
        Self::from_envelope_fwhm_mm(fwhm_mm)
    }

    /// Build from a target envelope FWHM. gamma^2(dx) = exp(-4 dx^2 / l_c^2)
    /// reaches 1/2 at dx = l_c sqrt(ln 2) / 2, so FWHM = l_c sqrt(ln 2).
    pub fn from_envelope_fwhm_mm(fwhm_mm: f64) -> Result<Self> {
        if !(fwhm_mm.is_finite() && fwhm_mm > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "envelope fwhm must be positive, got {fwhm_mm}"
            )));
        }
        Self::new(fwhm_mm / SQRT_LN2)
    }

    /// FWHM in dx of the envelope gamma^2(dx).
    pub fn envelope_fwhm_mm(&self) -> f64 {
        self.coherence_scale_mm * SQRT_LN2
    }

    /// Wavepacket overlap of the two arms at mirror displacement `dx_mm`.
    /// Total on all finite inputs; 1 at dx = 0, even, strictly decreasing
    /// in |dx|, and vanishing as |dx| grows.
    pub fn mode_overlap(&self, dx_mm: f64) -> f64 {
        let u = 2.0 * dx_mm / self.coherence_scale_mm;
        (-0.5 * u * u).exp()
    }
}

/// One detector-facing pulse slot: where and when light arrives, and how much.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotEmission {
    pub channel: u16,
    pub t_ps: u64,
    pub mean_photons: f64,
}

/// Mean photon numbers arriving in each detector slot of pulse `k`, given the
/// block phase `phi` and arm overlap `gamma`.
///
/// SetupB sends pulse k to both detectors at t_k:
///   D1: (mu/4) (1 + gamma sin(2 theta1) cos phi)
///   D2: (mu/4) (1 + bs_sign gamma sin(2 theta2) cos phi)
/// SetupC interleaves the two splitter outputs on one detector:
///   t_k:            (mu/4) (1 + gamma cos phi)
///   t_k + period/2: (mu/4) (1 - gamma cos phi)
pub fn slot_intensities(
    pulse_index: u64,
    phi: f64,
    gamma: f64,
    cfg: &OpticalConfig,
) -> Result<Vec<SlotEmission>> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidState(format!(
            "gamma must be in [0, 1], got {gamma}"
        )));
    }
    let t0 = pulse_index
        .checked_mul(cfg.pulse_period_ps)
        .ok_or_else(|| Error::InvalidConfig("pulse time overflows the ps clock".into()))?;
    let quarter = cfg.mean_photons_per_pulse / 4.0;
    let c = phi.cos();
    match cfg.topology {
        Topology::SetupB => {
            let s1 = (2.0 * cfg.theta1_deg.to_radians()).sin();
            let s2 = (2.0 * cfg.theta2_deg.to_radians()).sin();
            let w1 = quarter * (1.0 + gamma * s1 * c);
            let w2 = quarter * (1.0 + f64::from(cfg.bs_sign) * gamma * s2 * c);
            Ok(vec![
                SlotEmission { channel: 0, t_ps: t0, mean_photons: w1 },
                SlotEmission { channel: 1, t_ps: t0, mean_photons: w2 },
            ])
        }
        Topology::SetupC => {
            let half = cfg.pulse_period_ps / 2;
            let wt = quarter * (1.0 + gamma * c);
            let wr = quarter * (1.0 - gamma * c);
            Ok(vec![
                SlotEmission { channel: 0, t_ps: t0, mean_photons: wt },
                SlotEmission {
                    channel: 0,
                    t_ps: t0.checked_add(half).ok_or_else(|| {
                        Error::InvalidConfig("pulse time overflows the ps clock".into())
                    })?,
                    mean_photons: wr,
                },
            ])
        }
    }
}

/// Phase-averaged coincidence rate for `pairing`, normalized so that the
/// overlap-free (large |dx|) baseline is 1. Derived by averaging the product
/// of the two slot intensities over phi uniform on [0, 2 pi).
pub fn closed_form_rate(
    pairing: Pairing,
    gamma: f64,
    theta1_deg: f64,
    theta2_deg: f64,
    bs_sign: i8,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidState(format!(
            "gamma must be in [0, 1], got {gamma}"
        )));
    }
    if bs_sign != 1 && bs_sign != -1 {
        return Err(Error::InvalidConfig(format!(
            "bs_sign must be +1 or -1, got {bs_sign}"
        )));
    }
    let g2 = gamma * gamma;
    let s1 = (2.0 * theta1_deg.to_radians()).sin();
    let s2 = (2.0 * theta2_deg.to_radians()).sin();
    Ok(match pairing {
        Pairing::CrossD1D2 => 1.0 + f64::from(bs_sign) * 0.5 * g2 * s1 * s2,
        Pairing::SelfD1 => 1.0 + 0.5 * g2 * s1 * s1,
        Pairing::SelfCPeak => 1.0 + 0.5 * g2,
        Pairing::SelfCDip => 1.0 - 0.5 * g2,
    })
}

/// `closed_form_rate` evaluated at the overlap belonging to `dx_mm` under
/// `cfg`'s coherence calibration. Rejects pairings foreign to the topology.
pub fn coincidence_rate_closed_form(
    dx_mm: f64,
    cfg: &OpticalConfig,
    pairing: Pairing,
) -> Result<f64> {
    cfg.validate()?;
    if pairing.topology() != cfg.topology {
        return Err(Error::PairingMismatch {
            pairing: pairing.to_string(),
            topology: cfg.topology.to_string(),
        });
    }
    let gamma = CoherenceModel::from_optics(cfg)?.mode_overlap(dx_mm);
    closed_form_rate(pairing, gamma, cfg.theta1_deg, cfg.theta2_deg, cfg.bs_sign)
}

/// Mean of `f(phi)` over one period, trapezoid rule on the periodic interval
/// (endpoints coincide, so this is the n-point midpointless average).
pub fn phase_average(n_samples: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = n_samples.max(1);
    let step = std::f64::consts::TAU / n as f64;
    (0..n).map(|j| f(j as f64 * step)).sum::<f64>() / n as f64
}
