//! Click-level Monte Carlo generator of detector time-tag streams.
//!
//! Per pulse slot the detector clicks with probability 1 - exp(-eta W) and
//! never yields more than one tag (non-photon-number-resolving detection).
//! Clicks receive Gaussian timing jitter, homogeneous Poisson dark counts
//! join each channel, and a per-channel dead-time filter drops any tag
//! arriving within `dead_time_ps` after the previous accepted one.
//!
//! Every random decision is drawn from a stream keyed by (seed, domain,
//! coordinates), so output is byte-identical for a fixed seed regardless of
//! thread count or evaluation order.

use crate::correlator::CoincidenceSpec;
use crate::error::{Error, Result};
use crate::optics::{slot_intensities, CoherenceModel, OpticalConfig};
use crate::rng::{domain, keyed_u64, p_to_threshold, stream_key, Stream};
use crate::tags::{TagStream, TimeTag};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Quantum efficiency, in (0, 1].
    pub efficiency: f64,
    pub dead_time_ps: u64,
    pub dark_rate_hz: f64,
    pub jitter_sigma_ps: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            efficiency: 0.5,
            dead_time_ps: 45_000,
            dark_rate_hz: 300.0,
            jitter_sigma_ps: 400.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.efficiency.is_finite() && self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "efficiency must be in (0, 1], got {}",
                self.efficiency
            )));
        }
        if !(self.dark_rate_hz.is_finite() && self.dark_rate_hz >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dark_rate_hz must be non-negative, got {}",
                self.dark_rate_hz
            )));
        }
        if !(self.jitter_sigma_ps.is_finite() && self.jitter_sigma_ps >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "jitter_sigma_ps must be non-negative, got {}",
                self.jitter_sigma_ps
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimPlan {
    pub n_pulses: u64,
    /// Pulses sharing one random interferometer phase draw.
    pub dwell_block_pulses: u64,
    pub seed: u64,
    pub dx_mm: f64,
}

impl Default for SimPlan {
    fn default() -> Self {
        SimPlan {
            n_pulses: 1_000_000,
            dwell_block_pulses: 20_000,
            seed: 1,
            dx_mm: 0.0,
        }
    }
}

impl SimPlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_pulses == 0 {
            return Err(Error::InvalidConfig("n_pulses must be at least 1".into()));
        }
        if self.dwell_block_pulses == 0 {
            return Err(Error::InvalidConfig(
                "dwell_block_pulses must be at least 1".into(),
            ));
        }
        if !self.dx_mm.is_finite() {
            return Err(Error::InvalidConfig("dx_mm must be finite".into()));
        }
        Ok(())
    }

    /// Run length on the picosecond clock. Rejects plans whose tag times
    /// could overflow the signed arithmetic used for jitter.
    pub fn duration_ps(&self, optics: &OpticalConfig) -> Result<u64> {
        let d = self
            .n_pulses
            .checked_mul(optics.pulse_period_ps)
            .filter(|&d| d <= i64::MAX as u64 - 2 * optics.pulse_period_ps)
            .ok_or_else(|| {
                Error::InvalidConfig(
                    "n_pulses * pulse_period_ps overflows the 64-bit picosecond clock".into(),
                )
            })?;
        Ok(d)
    }

    /// Correlated slots must share a phase block: every analysis delay has to
    /// fit inside one dwell block.
    pub fn validate_delays(&self, optics: &OpticalConfig, delays_ps: &[i64]) -> Result<()> {
        let block_ps = self
            .dwell_block_pulses
            .checked_mul(optics.pulse_period_ps)
            .ok_or_else(|| Error::InvalidConfig("dwell block overflows the ps clock".into()))?;
        for &d in delays_ps {
            if d.unsigned_abs() >= block_ps {
                return Err(Error::InvalidConfig(format!(
                    "coincidence delay {d} ps does not fit inside one dwell block \
                     ({block_ps} ps); the random phase must be constant across \
                     correlated slots"
                )));
            }
        }
        Ok(())
    }
}

/// Simulate the full run and return one stream per detector channel
/// (index == channel id).
pub fn simulate(
    plan: &SimPlan,
    optics: &OpticalConfig,
    det: &DetectorConfig,
) -> Result<Vec<TagStream>> {
    plan.validate()?;
    optics.validate()?;
    det.validate()?;
    let duration = plan.duration_ps(optics)?;
    let period = optics.pulse_period_ps;
    let gamma = CoherenceModel::from_optics(optics)?.mode_overlap(plan.dx_mm);
    let layout = slot_intensities(0, 0.0, gamma, optics)?;
    let n_lanes = layout.len();
    let n_channels = optics.topology.channel_count() as usize;
    let lane_keys: Vec<u64> = (0..n_lanes)
        .map(|lane| stream_key(plan.seed, domain::CLICK, lane as u64, 0))
        .collect();

    let n_blocks = plan.n_pulses.div_ceil(plan.dwell_block_pulses);
    const BLOCKS_PER_CHUNK: u64 = 64;
    let n_chunks = n_blocks.div_ceil(BLOCKS_PER_CHUNK);

    // Chunks are independent and keyed by absolute coordinates; collecting
    // them in index order keeps output identical under any schedule.
    let mut chunks: Vec<Vec<Vec<TimeTag>>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut out: Vec<Vec<TimeTag>> = vec![Vec::new(); n_channels];
            let mut thresholds = vec![0u64; n_lanes];
            let block_lo = chunk * BLOCKS_PER_CHUNK;
            let block_hi = (block_lo + BLOCKS_PER_CHUNK).min(n_blocks);
            for block in block_lo..block_hi {
                let phi = Stream::new(plan.seed, domain::PHASE, block, 0).uniform() * TAU;
                let slots =
                    slot_intensities(0, phi, gamma, optics).expect("validated configuration");
                for (lane, slot) in slots.iter().enumerate() {
                    let p = 1.0 - (-det.efficiency * slot.mean_photons).exp();
                    thresholds[lane] = p_to_threshold(p);
                }
                let pulse_lo = block * plan.dwell_block_pulses;
                let pulse_hi = (pulse_lo + plan.dwell_block_pulses).min(plan.n_pulses);
                for k in pulse_lo..pulse_hi {
                    let base = (k * period) as i64;
                    for lane in 0..n_lanes {
                        if keyed_u64(lane_keys[lane], k) < thresholds[lane] {
                            let slot = &slots[lane];
                            let jitter = Stream::new(plan.seed, domain::JITTER, k, lane as u64)
                                .gaussian()
                                * det.jitter_sigma_ps;
                            let t = base + slot.t_ps as i64 + jitter.round() as i64;
                            out[slot.channel as usize].push(TimeTag {
                                t_ps: t.max(0) as u64,
                                channel: slot.channel,
                                flags: 0,
                            });
                        }
                    }
                }
            }
            out
        })
        .collect();

    let mut streams = Vec::with_capacity(n_channels);
    for ch in 0..n_channels {
        let total: usize = chunks.iter().map(|c| c[ch].len()).sum();
        let mut clicks = Vec::with_capacity(total);
        for c in &mut chunks {
            clicks.append(&mut c[ch]);
        }
        // Jitter tails can reorder neighbors; the stream is near-sorted, so
        // the adaptive stable sort is cheap.
        clicks.sort_by_key(|t| t.t_ps);
        let darks = dark_tags(plan.seed, ch as u16, det.dark_rate_hz, duration);
        let merged = merge_by_time(clicks, darks);
        let kept = apply_dead_time(merged, det.dead_time_ps);
        streams.push(TagStream::new(kept)?);
    }
    Ok(streams)
}

fn dark_tags(seed: u64, channel: u16, rate_hz: f64, duration_ps: u64) -> Vec<TimeTag> {
    if rate_hz <= 0.0 {
        return Vec::new();
    }
    let mut s = Stream::new(seed, domain::DARK, channel as u64, 0);
    let mean_gap = 1e12 / rate_hz;
    let mut out = Vec::new();
    let mut t = 0.0f64;
    loop {
        t += s.exponential(mean_gap);
        if t >= duration_ps as f64 {
            return out;
        }
        out.push(TimeTag {
            t_ps: t as u64,
            channel,
            flags: TimeTag::FLAG_DARK,
        });
    }
}

/// Merge two streams sorted by time; ties order by flags so real clicks
/// precede simultaneous dark counts deterministically.
fn merge_by_time(a: Vec<TimeTag>, b: Vec<TimeTag>) -> Vec<TimeTag> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if (a[i].t_ps, a[i].flags) <= (b[j].t_ps, b[j].flags) {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Keep a tag only if it arrives at least `dead_ps` after the previously
/// accepted tag. A gap of exactly `dead_ps` survives.
fn apply_dead_time(tags: Vec<TimeTag>, dead_ps: u64) -> Vec<TimeTag> {
    let mut out = Vec::with_capacity(tags.len());
    let mut last: Option<u64> = None;
    for tag in tags {
        if let Some(prev) = last {
            if tag.t_ps - prev < dead_ps {
                continue;
            }
        }
        last = Some(tag.t_ps);
        out.push(tag);
    }
    out
}

/// Analytic predictions for a run: per-channel singles and per-spec
/// coincidence rates. Used to give simulation tests principled tolerances.
#[derive(Debug, Clone, Serialize)]
pub struct RatePrediction {
    pub duration_ps: u64,
    pub singles_hz: Vec<f64>,
    pub coincidences: Vec<PredictedCoincidence>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictedCoincidence {
    pub label: String,
    pub hz: f64,
}

/// Predict singles and coincidence rates for the given plan.
///
/// Singles use the exact stationary acceptance of the slot chain: a slot's
/// click is accepted when the previous slot on the channel (if closer than
/// the dead time) produced no accepted click. Coincidences multiply the
/// accepted-click probabilities of the slot pairs whose nominal separation
/// equals the spec delay, average over the shared block phase, and scale by
/// the probability that the jittered pair still falls inside the window.
/// Residual dead-time conditioning between paired slots is neglected; it is
/// far below the Poisson resolution of any run this predictor is checked
/// against.
pub fn expected_rates(
    plan: &SimPlan,
    optics: &OpticalConfig,
    det: &DetectorConfig,
    specs: &[CoincidenceSpec],
) -> Result<RatePrediction> {
    plan.validate()?;
    optics.validate()?;
    det.validate()?;
    for spec in specs {
        spec.validate()?;
    }
    let duration_ps = plan.duration_ps(optics)?;
    let period = optics.pulse_period_ps;
    let period_s = period as f64 * 1e-12;
    let gamma = CoherenceModel::from_optics(optics)?.mode_overlap(plan.dx_mm);
    let layout = slot_intensities(0, 0.0, gamma, optics)?;
    let n_channels = optics.topology.channel_count() as usize;

    // Blocking structure: lane i is suppressed by the nearest earlier slot on
    // the same channel when their gap is below the dead time. The stationary
    // model handles one-slot lookback only; reject dead times spanning more.
    let blocker = blocking_lanes(&layout, period, det.dead_time_ps)?;

    let specs_families: Vec<Vec<(usize, usize)>> = specs
        .iter()
        .map(|s| slot_pair_families(&layout, period, s))
        .collect();

    // Average the stationary acceptance products over the block phase.
    const PHASE_SAMPLES: usize = 256;
    let mut singles_click = vec![0.0f64; n_channels];
    let mut family_sums = vec![0.0f64; specs.len()];
    for step in 0..PHASE_SAMPLES {
        let phi = TAU * step as f64 / PHASE_SAMPLES as f64;
        let slots = slot_intensities(0, phi, gamma, optics)?;
        let p: Vec<f64> = slots
            .iter()
            .map(|s| 1.0 - (-det.efficiency * s.mean_photons).exp())
            .collect();
        let s = stationary_acceptance(&p, &blocker);
        for (lane, slot) in layout.iter().enumerate() {
            singles_click[slot.channel as usize] += s[lane];
        }
        for (spec_idx, families) in specs_families.iter().enumerate() {
            for &(i, j) in families {
                family_sums[spec_idx] += s[i] * s[j];
            }
        }
    }
    let norm = 1.0 / PHASE_SAMPLES as f64;
    let dead_s = det.dead_time_ps as f64 * 1e-12;
    let mut singles_hz = Vec::with_capacity(n_channels);
    let mut click_hz = Vec::with_capacity(n_channels);
    let mut dark_hz = Vec::with_capacity(n_channels);
    for ch in 0..n_channels {
        let clicks = singles_click[ch] * norm / period_s;
        // First-order cross-blocking between light clicks and dark counts.
        let dark = det.dark_rate_hz * (1.0 - clicks * dead_s);
        let clicks_eff = clicks * (1.0 - det.dark_rate_hz * dead_s);
        click_hz.push(clicks_eff);
        dark_hz.push(dark);
        singles_hz.push(clicks_eff + dark);
    }

    let mut coincidences = Vec::with_capacity(specs.len());
    for (spec_idx, spec) in specs.iter().enumerate() {
        let window_s = spec.window_ps as f64 * 1e-12;
        let capture = if det.jitter_sigma_ps > 0.0 {
            // Pair time difference spreads with sigma*sqrt(2).
            erf(spec.window_ps as f64 / (4.0 * det.jitter_sigma_ps))
        } else {
            1.0
        };
        let correlated = family_sums[spec_idx] * norm / period_s * capture;
        let (ca, cb) = (spec.channel_a as usize, spec.channel_b as usize);
        let accidental = if ca < n_channels && cb < n_channels {
            (click_hz[ca] * dark_hz[cb]
                + dark_hz[ca] * click_hz[cb]
                + dark_hz[ca] * dark_hz[cb])
                * window_s
        } else {
            0.0
        };
        coincidences.push(PredictedCoincidence {
            label: spec.curve_label(),
            hz: correlated + accidental,
        });
    }

    Ok(RatePrediction {
        duration_ps,
        singles_hz,
        coincidences,
    })
}

/// For each lane, the lane of the nearest earlier same-channel slot when that
/// gap is inside the dead time (cyclic across the pulse period).
fn blocking_lanes(
    layout: &[crate::optics::SlotEmission],
    period: u64,
    dead_ps: u64,
) -> Result<Vec<Option<usize>>> {
    let mut blocker = vec![None; layout.len()];
    for (i, slot) in layout.iter().enumerate() {
        let mut best: Option<(u64, usize)> = None;
        for (j, other) in layout.iter().enumerate() {
            if other.channel != slot.channel || i == j {
                continue;
            }
            // Gap from `other` (possibly in the previous period) up to `slot`.
            let gap = (slot.t_ps + period - other.t_ps) % period;
            if gap == 0 {
                continue;
            }
            if best.map_or(true, |(g, _)| gap < g) {
                best = Some((gap, j));
            }
            if gap < dead_ps && 2 * gap < dead_ps {
                return Err(Error::InvalidConfig(
                    "rate prediction supports dead times shorter than two slot gaps".into(),
                ));
            }
        }
        if let Some((gap, j)) = best {
            if gap < dead_ps {
                blocker[i] = Some(j);
            }
        }
        // Same-lane self blocking across periods would need dead >= period.
        if layout
            .iter()
            .filter(|o| o.channel == slot.channel)
            .count()
            == 1
            && dead_ps >= period
        {
            return Err(Error::InvalidConfig(
                "rate prediction requires the dead time to be shorter than the period".into(),
            ));
        }
    }
    Ok(blocker)
}

/// Stationary accepted-click probability per lane for fixed click
/// probabilities `p`: s_i = p_i * (1 - s_blocker(i)), solved by iteration.
fn stationary_acceptance(p: &[f64], blocker: &[Option<usize>]) -> Vec<f64> {
    let mut s = p.to_vec();
    for _ in 0..64 {
        let prev = s.clone();
        for i in 0..p.len() {
            s[i] = match blocker[i] {
                Some(j) => p[i] * (1.0 - prev[j]),
                None => p[i],
            };
        }
    }
    s
}

/// Ordered lane pairs whose nominal time separation equals the spec delay.
/// Each pair occurs once per pulse period. A slot paired with itself in the
/// same pulse (zero total separation) is excluded: that is a tag matched
/// against itself, not a coincidence.
fn slot_pair_families(
    layout: &[crate::optics::SlotEmission],
    period: u64,
    spec: &CoincidenceSpec,
) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, a) in layout.iter().enumerate() {
        if a.channel != spec.channel_a {
            continue;
        }
        for (j, b) in layout.iter().enumerate() {
            if b.channel != spec.channel_b {
                continue;
            }
            let delta_off = b.t_ps as i64 - a.t_ps as i64;
            if (spec.delay_ps - delta_off).rem_euclid(period as i64) != 0 {
                continue;
            }
            if i == j && spec.delay_ps == delta_off {
                continue;
            }
            out.push((i, j));
        }
    }
    out
}

/// Abramowitz-Stegun 7.1.26 rational approximation, |error| <= 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    sign * (1.0 - poly * (-x * x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::Topology;
    use crate::tags::merge_sorted;

    fn optics_b() -> OpticalConfig {
        OpticalConfig::default()
    }

    fn optics_c() -> OpticalConfig {
        let mut c = OpticalConfig::default();
        c.topology = Topology::SetupC;
        c
    }

    fn serialize_all(streams: &[TagStream]) -> Vec<u8> {
        let mut buf = Vec::new();
        for s in streams {
            s.write_to(&mut buf).unwrap();
        }
        buf
    }

    #[test]
    fn no_light_no_darks_means_empty_streams() {
        let mut optics = optics_b();
        optics.mean_photons_per_pulse = 0.0;
        let mut det = DetectorConfig::default();
        det.dark_rate_hz = 0.0;
        let plan = SimPlan {
            n_pulses: 10_000,
            ..SimPlan::default()
        };
        for optics in [optics.clone(), {
            let mut c = optics.clone();
            c.topology = Topology::SetupC;
            c
        }] {
            let streams = simulate(&plan, &optics, &det).unwrap();
            assert!(streams.iter().all(|s| s.is_empty()));
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let plan = SimPlan {
            n_pulses: 150_000,
            dwell_block_pulses: 2_000,
            seed: 77,
            dx_mm: 0.2,
        };
        let optics = optics_b();
        let det = DetectorConfig::default();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| simulate(&plan, &optics, &det).unwrap())
        };
        let single = serialize_all(&run(1));
        let multi = serialize_all(&run(3));
        assert_eq!(single, multi);
        assert_eq!(single, serialize_all(&run(1)));
    }

    #[test]
    fn dead_time_gap_is_never_violated() {
        let mut optics = optics_c();
        optics.mean_photons_per_pulse = 0.3;
        let mut det = DetectorConfig::default();
        det.dark_rate_hz = 100_000.0;
        let plan = SimPlan {
            n_pulses: 300_000,
            dwell_block_pulses: 2_000,
            seed: 5,
            dx_mm: 0.0,
        };
        let streams = simulate(&plan, &optics, &det).unwrap();
        let tags = &streams[0].tags;
        assert!(tags.len() > 10_000, "want a busy stream, got {}", tags.len());
        for w in tags.windows(2) {
            assert!(w[1].t_ps - w[0].t_ps >= det.dead_time_ps);
        }
    }

    #[test]
    fn rates_match_prediction_for_setup_b_baseline() {
        let optics = optics_b();
        let det = DetectorConfig::default();
        let plan = SimPlan {
            n_pulses: 2_000_000,
            dwell_block_pulses: 20_000,
            seed: 31,
            dx_mm: 30.0, // overlap fully decayed: baseline
        };
        let specs = vec![
            CoincidenceSpec::cross(0, 1, 50_000),
            CoincidenceSpec::self_channel(0, 50_000),
        ];
        plan.validate_delays(&optics, &[50_000]).unwrap();
        let pred = expected_rates(&plan, &optics, &det, &specs).unwrap();
        let streams = simulate(&plan, &optics, &det).unwrap();
        let secs = pred.duration_ps as f64 * 1e-12;

        for ch in 0..2 {
            let measured = streams[ch].len() as f64;
            let want = pred.singles_hz[ch] * secs;
            assert!(
                (measured - want).abs() < 3.0 * want.sqrt(),
                "ch{ch} singles {measured} vs {want}"
            );
        }
        let merged = merge_sorted(&streams).unwrap();
        for (spec, pred_c) in specs.iter().zip(&pred.coincidences) {
            let measured = crate::correlator::count_coincidences(&merged, spec).unwrap() as f64;
            let want = pred_c.hz * secs;
            assert!(
                (measured - want).abs() < 3.0 * want.sqrt(),
                "{} count {measured} vs {want}",
                pred_c.label
            );
        }
    }

    #[test]
    fn rates_match_prediction_for_setup_c_baseline() {
        let optics = optics_c();
        let det = DetectorConfig::default();
        let plan = SimPlan {
            n_pulses: 1_500_000,
            dwell_block_pulses: 20_000,
            seed: 8,
            dx_mm: 30.0,
        };
        let specs = vec![
            CoincidenceSpec::self_channel(0, 100_000),
            CoincidenceSpec::self_channel(0, 125_000),
        ];
        let pred = expected_rates(&plan, &optics, &det, &specs).unwrap();
        let streams = simulate(&plan, &optics, &det).unwrap();
        let secs = pred.duration_ps as f64 * 1e-12;
        let measured = streams[0].len() as f64;
        let want = pred.singles_hz[0] * secs;
        assert!(
            (measured - want).abs() < 3.0 * want.sqrt(),
            "singles {measured} vs {want}"
        );
        for (spec, pred_c) in specs.iter().zip(&pred.coincidences) {
            let got = crate::correlator::count_coincidences(&streams[0], spec).unwrap() as f64;
            let want = pred_c.hz * secs;
            assert!(
                (got - want).abs() < 3.0 * want.sqrt(),
                "{} count {got} vs {want}",
                pred_c.label
            );
        }
    }

    #[test]
    fn interleaved_dip_prediction_is_half_baseline() {
        let mut optics = optics_c();
        optics.mean_photons_per_pulse = 0.004; // keep click nonlinearity tiny
        let mut det = DetectorConfig::default();
        det.dark_rate_hz = 0.0;
        let spec = [CoincidenceSpec::self_channel(0, 125_000)];
        let at = |dx: f64| {
            let plan = SimPlan {
                dx_mm: dx,
                ..SimPlan::default()
            };
            expected_rates(&plan, &optics, &det, &spec).unwrap().coincidences[0].hz
        };
        let ratio = at(0.0) / at(30.0);
        assert!((ratio - 0.5).abs() < 5e-3, "ratio {ratio}");
        // And the peak delay on the same footing.
        let peak = [CoincidenceSpec::self_channel(0, 100_000)];
        let plan0 = SimPlan { dx_mm: 0.0, ..SimPlan::default() };
        let plan_far = SimPlan { dx_mm: 30.0, ..SimPlan::default() };
        let p0 = expected_rates(&plan0, &optics, &det, &peak).unwrap().coincidences[0].hz;
        let pf = expected_rates(&plan_far, &optics, &det, &peak).unwrap().coincidences[0].hz;
        assert!((p0 / pf - 1.5).abs() < 5e-3, "ratio {}", p0 / pf);
    }

    #[test]
    fn zero_mu_leaves_only_dark_accidentals() {
        let mut optics = optics_b();
        optics.mean_photons_per_pulse = 0.0;
        let det = DetectorConfig::default();
        let plan = SimPlan::default();
        let specs = vec![CoincidenceSpec::cross(0, 1, 50_000)];
        let pred = expected_rates(&plan, &optics, &det, &specs).unwrap();
        for ch in 0..2 {
            assert!((pred.singles_hz[ch] - det.dark_rate_hz).abs() < 1e-9);
        }
        let want = det.dark_rate_hz * det.dark_rate_hz * 2000.0e-12;
        assert!((pred.coincidences[0].hz - want).abs() < 1e-12);
    }

    #[test]
    fn default_rates_sit_at_the_operating_point() {
        // Defaults are tuned so each detector counts about 300 kHz and the
        // accidental-free cross baseline is about 4.5 kHz.
        let optics = optics_b();
        let det = DetectorConfig::default();
        let plan = SimPlan {
            dx_mm: 30.0,
            ..SimPlan::default()
        };
        let specs = vec![CoincidenceSpec::cross(0, 1, 50_000).with_window(4_000)];
        let pred = expected_rates(&plan, &optics, &det, &specs).unwrap();
        assert!(
            (pred.singles_hz[0] - 300_000.0).abs() < 3_000.0,
            "singles {}",
            pred.singles_hz[0]
        );
        assert!(
            (pred.coincidences[0].hz - 4_500.0).abs() < 90.0,
            "coincidences {}",
            pred.coincidences[0].hz
        );
    }

    #[test]
    fn singles_are_flat_across_displacement() {
        let optics = optics_b();
        let det = DetectorConfig::default();
        for (i, dx) in [-1.0, -0.5, 0.0, 0.5, 1.0].into_iter().enumerate() {
            let plan = SimPlan {
                n_pulses: 400_000,
                dwell_block_pulses: 2_000,
                seed: 1000 + i as u64,
                dx_mm: dx,
            };
            let pred = expected_rates(&plan, &optics, &det, &[]).unwrap();
            let streams = simulate(&plan, &optics, &det).unwrap();
            let secs = pred.duration_ps as f64 * 1e-12;
            for ch in 0..2 {
                let measured = streams[ch].len() as f64;
                let want = pred.singles_hz[ch] * secs;
                assert!(
                    (measured - want).abs() < 3.5 * want.sqrt(),
                    "dx {dx} ch{ch}: {measured} vs {want}"
                );
            }
        }
    }

    #[test]
    fn plan_validation_rejects_bad_inputs() {
        let optics = optics_b();
        let plan = SimPlan { n_pulses: 0, ..SimPlan::default() };
        assert!(plan.validate().is_err());
        let plan = SimPlan { dwell_block_pulses: 0, ..SimPlan::default() };
        assert!(plan.validate().is_err());
        let plan = SimPlan { n_pulses: u64::MAX / 10, ..SimPlan::default() };
        assert!(plan.duration_ps(&optics).is_err());
        let plan = SimPlan { dwell_block_pulses: 2, ..SimPlan::default() };
        assert!(plan.validate_delays(&optics, &[125_000]).is_err());
        assert!(plan.validate_delays(&optics, &[50_000]).is_ok());
    }

    #[test]
    #[ignore = "timing probe, run on demand"]
    fn throughput_probe() {
        let optics = optics_b();
        let det = DetectorConfig::default();
        let plan = SimPlan {
            n_pulses: 40_000_000,
            dwell_block_pulses: 2_000,
            seed: 3,
            dx_mm: 0.0,
        };
        let t0 = std::time::Instant::now();
        let streams = simulate(&plan, &optics, &det).unwrap();
        let dt = t0.elapsed();
        let tags: usize = streams.iter().map(|s| s.len()).sum();
        eprintln!(
            "40M pulses in {:?} ({:.1} M pulses/s), {} tags",
            dt,
            40.0 / dt.as_secs_f64(),
            tags
        );
    }

    #[test]
    fn erf_reference_values() {
        for (x, want) in [
            (0.5, 0.520_499_877_8),
            (1.25, 0.922_900_128_2),
            (2.5, 0.999_593_048_0),
            (-1.0, -0.842_700_792_9),
        ] {
            assert!((erf(x) - want).abs() < 1e-6, "erf({x}) = {}", erf(x));
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]
            #[test]
            fn output_is_sorted_deduplicated_and_gapped(
                seed in 0u64..1_000,
                mu in 0.0f64..0.6,
                dead in prop::sample::select(vec![0u64, 10_000, 45_000]),
                jitter in prop::sample::select(vec![0.0f64, 400.0]),
                setup_c in proptest::bool::ANY,
            ) {
                let mut optics = OpticalConfig::default();
                optics.mean_photons_per_pulse = mu;
                if setup_c {
                    optics.topology = Topology::SetupC;
                }
                let mut det = DetectorConfig::default();
                det.dead_time_ps = dead;
                det.jitter_sigma_ps = jitter;
                let plan = SimPlan {
                    n_pulses: 20_000,
                    dwell_block_pulses: 500,
                    seed,
                    dx_mm: 0.1,
                };
                let streams = simulate(&plan, &optics, &det).unwrap();
                let again = simulate(&plan, &optics, &det).unwrap();
                prop_assert_eq!(&streams, &again);
                for (ch, s) in streams.iter().enumerate() {
                    s.validate().unwrap();
                    for w in s.tags.windows(2) {
                        prop_assert!(w[1].t_ps - w[0].t_ps >= dead);
                        prop_assert_eq!(w[0].channel as usize, ch);
                    }
                }
            }
        }
    }
}
