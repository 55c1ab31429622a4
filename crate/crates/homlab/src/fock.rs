//! Two-photon amplitude oracle, independent of the closed-form rate laws.
//!
//! The post-selected two-photon component of two successive weak pulses is a
//! superposition of which-arm assignments: photon in slot k from arm i and
//! photon in slot k+1 from arm j, with amplitudes c_ij. An arm-2 photon
//! carries the interferometer phase `e^{i phi}` and its wavepacket overlaps
//! the arm-1 wavepacket by `gamma`; the non-overlapping remainder goes into
//! an orthogonal residual temporal mode. Click probabilities follow by
//! projecting each photon onto its analyzer and summing |amplitude|^2 over
//! the distinguishable final modes.

use crate::error::{Error, Result};
use crate::optics::{phase_average, Pairing};
use num_complex::Complex64;

/// Post-selected two-photon state across two neighboring pulse slots.
/// `terms` holds [c_11, c_12, c_21, c_22], where the first index is the arm
/// of the slot-k photon and the second the arm of the slot-(k+1) photon.
#[derive(Debug, Clone)]
pub struct PairwiseState {
    pub terms: [Complex64; 4],
    pub phi: f64,
    pub gamma: f64,
}

impl PairwiseState {
    pub fn new(terms: [Complex64; 4], phi: f64, gamma: f64) -> Result<Self> {
        if !phi.is_finite() {
            return Err(Error::InvalidState(format!("phi must be finite, got {phi}")));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidState(format!(
                "gamma must be in [0, 1], got {gamma}"
            )));
        }
        let norm: f64 = terms.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!(
                "|c_ij|^2 must sum to 1, got {norm}"
            )));
        }
        Ok(PairwiseState { terms, phi, gamma })
    }

    /// The source's natural state: every which-arm assignment at weight 1/4.
    pub fn balanced(phi: f64, gamma: f64) -> Result<Self> {
        let h = Complex64::new(0.5, 0.0);
        Self::new([h, h, h, h], phi, gamma)
    }

    /// Only the exchange terms (one photon per arm), renormalized. This is
    /// the state a true single-photon-pair source would provide.
    pub fn interfering_only(phi: f64, gamma: f64) -> Result<Self> {
        let z = Complex64::new(0.0, 0.0);
        let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        Self::new([z, h, h, z], phi, gamma)
    }
}

/// Temporal mode a detected photon ends up in: the arm-1 wavepacket mode, or
/// the residual mode orthogonal to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalMode {
    Principal,
    Residual,
}

/// Joint click amplitudes, indexed by the final temporal mode of the slot-k
/// photon and of the slot-(k+1) photon. The four outcomes are mutually
/// orthogonal, so the click probability is the sum of their |amplitude|^2.
#[derive(Debug, Clone)]
pub struct JointAmplitudes {
    pub amps: [[Complex64; 2]; 2],
}

impl JointAmplitudes {
    pub fn probability(&self) -> f64 {
        self.amps
            .iter()
            .flatten()
            .map(|a| a.norm_sqr())
            .sum()
    }

    pub fn amplitude(&self, first: TemporalMode, second: TemporalMode) -> Complex64 {
        let i = |m: TemporalMode| match m {
            TemporalMode::Principal => 0usize,
            TemporalMode::Residual => 1,
        };
        self.amps[i(first)][i(second)]
    }
}

/// Analyzer projection for one detected photon: `cos_t` multiplies the arm-1
/// component, `sin_t` (sign included) the arm-2 component.
#[derive(Debug, Clone, Copy)]
struct Projector {
    cos_t: f64,
    sin_t: f64,
}

impl Projector {
    fn new(theta_deg: f64, port_sign: f64) -> Self {
        let t = theta_deg.to_radians();
        Projector {
            cos_t: t.cos(),
            sin_t: port_sign * t.sin(),
        }
    }

    /// Amplitude vector over [principal, residual] for a photon from `arm`.
    fn arm_factor(&self, arm: usize, phase: Complex64, gamma: f64) -> [Complex64; 2] {
        match arm {
            0 => [Complex64::new(self.cos_t, 0.0), Complex64::new(0.0, 0.0)],
            _ => {
                let rho = (1.0 - gamma * gamma).max(0.0).sqrt();
                let s = phase * self.sin_t;
                [s * gamma, s * rho]
            }
        }
    }
}

fn amplitudes_for(state: &PairwiseState, first: Projector, second: Projector) -> JointAmplitudes {
    let phase = Complex64::from_polar(1.0, state.phi);
    let mut amps = [[Complex64::new(0.0, 0.0); 2]; 2];
    for (idx, c) in state.terms.iter().enumerate() {
        if c.norm_sqr() == 0.0 {
            continue;
        }
        let (i, j) = (idx / 2, idx % 2);
        let f1 = first.arm_factor(i, phase, state.gamma);
        let f2 = second.arm_factor(j, phase, state.gamma);
        for (t1, a1) in f1.iter().enumerate() {
            for (t2, a2) in f2.iter().enumerate() {
                amps[t1][t2] += c * a1 * a2;
            }
        }
    }
    JointAmplitudes { amps }
}

/// Amplitudes for the cross pattern: detector 1 (angle theta1) clicks in slot
/// k, detector 2 (angle theta2, port sign `bs_sign`) in slot k+1.
pub fn joint_click_amplitudes(
    state: &PairwiseState,
    theta1_deg: f64,
    theta2_deg: f64,
    bs_sign: i8,
) -> Result<JointAmplitudes> {
    check_sign(bs_sign)?;
    Ok(amplitudes_for(
        state,
        Projector::new(theta1_deg, 1.0),
        Projector::new(theta2_deg, f64::from(bs_sign)),
    ))
}

fn check_sign(bs_sign: i8) -> Result<()> {
    if bs_sign == 1 || bs_sign == -1 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "bs_sign must be +1 or -1, got {bs_sign}"
        )))
    }
}

/// Probability of the two-click pattern selected by `pairing` at fixed phase.
/// Only the two-detector patterns live here; the single-detector delay-loop
/// pairings have no two-slot amplitude decomposition in this model.
pub fn coincidence_prob(
    state: &PairwiseState,
    theta1_deg: f64,
    theta2_deg: f64,
    bs_sign: i8,
    pairing: Pairing,
) -> Result<f64> {
    check_sign(bs_sign)?;
    let amps = match pairing {
        Pairing::CrossD1D2 => amplitudes_for(
            state,
            Projector::new(theta1_deg, 1.0),
            Projector::new(theta2_deg, f64::from(bs_sign)),
        ),
        Pairing::SelfD1 => amplitudes_for(
            state,
            Projector::new(theta1_deg, 1.0),
            Projector::new(theta1_deg, 1.0),
        ),
        other => {
            return Err(Error::InvalidState(format!(
                "pairing {other} is outside the amplitude oracle's domain"
            )))
        }
    };
    Ok(amps.probability())
}

fn check_samples(n: usize) -> Result<()> {
    if n >= 16 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "phase average needs at least 16 samples, got {n}"
        )))
    }
}

/// Trapezoid average of `coincidence_prob` for the balanced state over one
/// phase period.
pub fn phase_averaged_prob(
    theta1_deg: f64,
    theta2_deg: f64,
    gamma: f64,
    bs_sign: i8,
    pairing: Pairing,
    n_samples: usize,
) -> Result<f64> {
    check_samples(n_samples)?;
    // Probe the inputs once so errors surface instead of poisoning the sum.
    coincidence_prob(
        &PairwiseState::balanced(0.0, gamma)?,
        theta1_deg,
        theta2_deg,
        bs_sign,
        pairing,
    )?;
    Ok(phase_average(n_samples, |phi| {
        let state = PairwiseState::balanced(phi, gamma).expect("validated above");
        coincidence_prob(&state, theta1_deg, theta2_deg, bs_sign, pairing)
            .expect("validated above")
    }))
}

/// `phase_averaged_prob` normalized by its own gamma = 0 value, making it
/// directly comparable to the closed-form rates (baseline 1).
pub fn phase_averaged_prob_normalized(
    theta1_deg: f64,
    theta2_deg: f64,
    gamma: f64,
    bs_sign: i8,
    pairing: Pairing,
    n_samples: usize,
) -> Result<f64> {
    let raw = phase_averaged_prob(theta1_deg, theta2_deg, gamma, bs_sign, pairing, n_samples)?;
    let base = phase_averaged_prob(theta1_deg, theta2_deg, 0.0, bs_sign, pairing, n_samples)?;
    Ok(raw / base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::closed_form_rate;

    #[test]
    fn state_validation() {
        assert!(PairwiseState::balanced(0.3, 0.5).is_ok());
        assert!(PairwiseState::balanced(f64::NAN, 0.5).is_err());
        assert!(PairwiseState::balanced(0.0, 1.5).is_err());
        let h = Complex64::new(0.7, 0.0);
        assert!(PairwiseState::new([h, h, h, h], 0.0, 0.5).is_err());
    }

    #[test]
    fn exchange_terms_cancel_exactly_at_matched_analyzers() {
        // Full overlap, matched analyzers: the two one-photon-per-arm paths
        // interfere destructively and the cross click pattern vanishes.
        let state = PairwiseState::interfering_only(0.0, 1.0).unwrap();
        let p = coincidence_prob(&state, 45.0, 45.0, -1, Pairing::CrossD1D2).unwrap();
        assert!(p < 1e-30, "p {p}");
    }

    #[test]
    fn balanced_state_vanishes_only_after_averaging() {
        // With the same-arm terms present the fixed-phase pattern still
        // cancels at phi = 0, but not at generic phase.
        let state = PairwiseState::balanced(0.0, 1.0).unwrap();
        let p = coincidence_prob(&state, 45.0, 45.0, -1, Pairing::CrossD1D2).unwrap();
        assert!(p < 1e-30, "p {p}");
        let state = PairwiseState::balanced(1.0, 1.0).unwrap();
        let p = coincidence_prob(&state, 45.0, 45.0, -1, Pairing::CrossD1D2).unwrap();
        assert!(p > 1e-3, "p {p}");
    }

    #[test]
    fn balanced_state_factorizes_into_slot_intensities() {
        // The amplitude sum must reproduce the product of the two analyzer
        // transmissions. Checked at incommensurate parameters.
        let (gamma, phi) = (0.8, 1.1);
        let (t1, t2) = (30.0f64, 45.0f64);
        let state = PairwiseState::balanced(phi, gamma).unwrap();
        let p = coincidence_prob(&state, t1, t2, -1, Pairing::CrossD1D2).unwrap();
        let s1 = (2.0 * t1.to_radians()).sin();
        let s2 = (2.0 * t2.to_radians()).sin();
        let expect = (1.0 + gamma * s1 * phi.cos()) * (1.0 - gamma * s2 * phi.cos()) / 4.0;
        assert!((p - expect).abs() < 1e-12, "p {p} expect {expect}");

        let p = coincidence_prob(&state, t1, t2, -1, Pairing::SelfD1).unwrap();
        let expect = (1.0 + gamma * s1 * phi.cos()).powi(2) / 4.0;
        assert!((p - expect).abs() < 1e-12, "self p {p} expect {expect}");
    }

    #[test]
    fn single_term_state_is_projection_only() {
        // Both photons from arm 1: no interference, just analyzer projection.
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let state = PairwiseState::new([one, zero, zero, zero], 0.7, 0.4).unwrap();
        for theta in [0.0, 22.5, 45.0, 77.0] {
            let p = coincidence_prob(&state, theta, 10.0, -1, Pairing::SelfD1).unwrap();
            let expect = theta.to_radians().cos().powi(4);
            assert!((p - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn probability_is_amplitude_norm_sum() {
        let state = PairwiseState::balanced(0.9, 0.6).unwrap();
        let amps = joint_click_amplitudes(&state, 30.0, -70.0, -1).unwrap();
        let by_hand: f64 = [
            (TemporalMode::Principal, TemporalMode::Principal),
            (TemporalMode::Principal, TemporalMode::Residual),
            (TemporalMode::Residual, TemporalMode::Principal),
            (TemporalMode::Residual, TemporalMode::Residual),
        ]
        .iter()
        .map(|&(a, b)| amps.amplitude(a, b).norm_sqr())
        .sum();
        assert!((amps.probability() - by_hand).abs() < 1e-15);
        let p = coincidence_prob(&state, 30.0, -70.0, -1, Pairing::CrossD1D2).unwrap();
        assert!((p - amps.probability()).abs() < 1e-15);
    }

    #[test]
    fn phase_averaged_examples() {
        let p = phase_averaged_prob_normalized(45.0, 45.0, 1.0, -1, Pairing::CrossD1D2, 4096)
            .unwrap();
        assert!((p - 0.5).abs() < 1e-9, "dip {p}");
        let p = phase_averaged_prob_normalized(45.0, 0.0, 1.0, -1, Pairing::SelfD1, 4096).unwrap();
        assert!((p - 1.5).abs() < 1e-9, "self peak {p}");
        let p = phase_averaged_prob_normalized(45.0, 45.0, 0.0, -1, Pairing::CrossD1D2, 4096)
            .unwrap();
        assert!((p - 1.0).abs() < 1e-12, "baseline {p}");
    }

    #[test]
    fn rejects_out_of_domain_inputs() {
        let state = PairwiseState::balanced(0.0, 0.5).unwrap();
        assert!(coincidence_prob(&state, 45.0, 45.0, -1, Pairing::SelfCPeak).is_err());
        assert!(coincidence_prob(&state, 45.0, 45.0, 0, Pairing::CrossD1D2).is_err());
        assert!(phase_averaged_prob(45.0, 45.0, 0.5, -1, Pairing::CrossD1D2, 8).is_err());
    }

    #[test]
    fn matches_closed_form_on_full_grid() {
        // The central dual-route check: quantum amplitude sums against the
        // semiclassical rate laws, every analyzer pair and overlap.
        let thetas: Vec<f64> = (-6..=6).map(|k| 15.0 * k as f64).collect();
        let gammas = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mut worst = 0.0f64;
        for &t1 in &thetas {
            for &t2 in &thetas {
                for &g in &gammas {
                    for pairing in [Pairing::CrossD1D2, Pairing::SelfD1] {
                        let oracle =
                            phase_averaged_prob_normalized(t1, t2, g, -1, pairing, 4096).unwrap();
                        let closed = closed_form_rate(pairing, g, t1, t2, -1).unwrap();
                        worst = worst.max((oracle - closed).abs());
                    }
                }
            }
        }
        assert!(worst <= 1e-9, "worst deviation {worst}");
    }

    #[test]
    fn pair_source_state_doubles_contrast() {
        // Without the same-arm terms the dip deepens to 1 - gamma^2.
        for gamma in [0.0, 0.3, 0.6, 0.9, 1.0] {
            let raw = phase_average(64, |phi| {
                let state = PairwiseState::interfering_only(phi, gamma).unwrap();
                coincidence_prob(&state, 45.0, 45.0, -1, Pairing::CrossD1D2).unwrap()
            });
            let base = phase_average(64, |phi| {
                let state = PairwiseState::interfering_only(phi, 0.0).unwrap();
                coincidence_prob(&state, 45.0, 45.0, -1, Pairing::CrossD1D2).unwrap()
            });
            let dip = raw / base;
            assert!(
                (dip - (1.0 - gamma * gamma)).abs() < 1e-9,
                "gamma {gamma} dip {dip}"
            );
        }
    }
}
