//! Delayed-coincidence counting and correlation histograms over tag streams.
//!
//! Counting convention: every qualifying ordered pair counts once, with no
//! start-stop exclusivity. A pair qualifies when its time difference sits
//! within `window_ps` (full width) of the set electrical delay; the edge test
//! is `2*|delta - delay| <= window` so odd windows behave exactly.

use crate::error::{Error, Result};
use crate::tags::TagStream;
use serde::{Deserialize, Serialize};

pub const DEFAULT_WINDOW_PS: u64 = 2000;

/// One coincidence channel pairing: which channels to correlate, the
/// electrical delay, and the acceptance window (full width).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoincidenceSpec {
    pub channel_a: u16,
    pub channel_b: u16,
    pub delay_ps: i64,
    #[serde(default = "default_window")]
    pub window_ps: u64,
    /// Correlate a channel with itself, counting only strictly later partners.
    #[serde(default)]
    pub self_mode: bool,
    /// Display name for curves and reports; generated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn default_window() -> u64 {
    DEFAULT_WINDOW_PS
}

impl CoincidenceSpec {
    pub fn cross(channel_a: u16, channel_b: u16, delay_ps: i64) -> Self {
        CoincidenceSpec {
            channel_a,
            channel_b,
            delay_ps,
            window_ps: DEFAULT_WINDOW_PS,
            self_mode: false,
            label: None,
        }
    }

    pub fn self_channel(channel: u16, delay_ps: i64) -> Self {
        CoincidenceSpec {
            channel_a: channel,
            channel_b: channel,
            delay_ps,
            window_ps: DEFAULT_WINDOW_PS,
            self_mode: true,
            label: None,
        }
    }

    pub fn with_window(mut self, window_ps: u64) -> Self {
        self.window_ps = window_ps;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_ps == 0 {
            return Err(Error::InvalidConfig("window_ps must be positive".into()));
        }
        if self.self_mode {
            if self.channel_a != self.channel_b {
                return Err(Error::InvalidConfig(
                    "self_mode requires channel_a == channel_b".into(),
                ));
            }
            if self.delay_ps <= 0 {
                return Err(Error::InvalidConfig(
                    "self_mode requires a positive delay".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn curve_label(&self) -> String {
        match &self.label {
            Some(l) => l.clone(),
            None if self.self_mode => {
                format!("self_ch{}_d{}ps", self.channel_a, self.delay_ps)
            }
            None => format!(
                "cross_ch{}_ch{}_d{}ps",
                self.channel_a, self.channel_b, self.delay_ps
            ),
        }
    }
}

/// Count delayed coincidences between `a` (restricted to `spec.channel_a`)
/// and `b` (restricted to `spec.channel_b`). In self mode only `a` is read
/// and pairs require a strictly later partner. Single linear pass.
pub fn delayed_coincidences(a: &TagStream, b: &TagStream, spec: &CoincidenceSpec) -> Result<u64> {
    spec.validate()?;
    a.validate()?;
    let ta = a.channel_times(spec.channel_a);
    if spec.self_mode {
        return Ok(self_count(&ta, spec.delay_ps, spec.window_ps));
    }
    b.validate()?;
    let tb = b.channel_times(spec.channel_b);
    Ok(cross_count(&ta, &tb, spec.delay_ps, spec.window_ps))
}

/// Convenience form over one merged stream.
pub fn count_coincidences(stream: &TagStream, spec: &CoincidenceSpec) -> Result<u64> {
    delayed_coincidences(stream, stream, spec)
}

fn cross_count(a: &[u64], b: &[u64], delay: i64, window: u64) -> u64 {
    let w = window as i128;
    let d = delay as i128;
    let mut lo = 0usize;
    let mut hi = 0usize;
    let mut count = 0u64;
    for &ta in a {
        let ta = ta as i128;
        while lo < b.len() && 2 * (b[lo] as i128 - ta - d) < -w {
            lo += 1;
        }
        if hi < lo {
            hi = lo;
        }
        while hi < b.len() && 2 * (b[hi] as i128 - ta - d) <= w {
            hi += 1;
        }
        count += (hi - lo) as u64;
    }
    count
}

fn self_count(t: &[u64], delay: i64, window: u64) -> u64 {
    let w = window as i128;
    let d = delay as i128;
    let mut lo = 0usize;
    let mut hi = 0usize;
    let mut count = 0u64;
    for &ta in t {
        let tai = ta as i128;
        // Partner must be strictly later and above the window's lower edge;
        // both bounds only tighten as ta grows, so the cursors stay monotone.
        while lo < t.len() && (t[lo] <= ta || 2 * (t[lo] as i128 - tai - d) < -w) {
            lo += 1;
        }
        if hi < lo {
            hi = lo;
        }
        while hi < t.len() && 2 * (t[hi] as i128 - tai - d) <= w {
            hi += 1;
        }
        count += (hi - lo) as u64;
    }
    count
}

/// Tag count divided by duration, in Hz.
pub fn singles_rate(stream: &TagStream, duration_ps: u64) -> Result<f64> {
    if duration_ps == 0 {
        return Err(Error::InvalidConfig("duration must be positive".into()));
    }
    Ok(stream.len() as f64 / (duration_ps as f64 * 1e-12))
}

/// Pair time-difference histogram with bins centered on multiples of
/// `bin_ps`: bin k covers [k*bin - bin/2, k*bin + bin/2). Centering keeps a
/// nominal delay's jitter-broadened peak inside one bin instead of splitting
/// it across an edge, since physical separations land on the bin grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelationHistogram {
    pub bin_ps: u64,
    pub counts: Vec<u64>,
}

impl CorrelationHistogram {
    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    /// Center of bin `index` in ps.
    pub fn center_ps(&self, index: usize) -> u64 {
        index as u64 * self.bin_ps
    }

    /// Start (inclusive lower edge) of bin `index` in ps; bin 0 starts below
    /// zero by half a bin.
    pub fn start_ps(&self, index: usize) -> i64 {
        index as i64 * self.bin_ps as i64 - (self.bin_ps / 2) as i64
    }

    /// Bin index holding a given time difference, if within range.
    pub fn bin_for(&self, delta_ps: i64) -> Option<usize> {
        let half = (self.bin_ps / 2) as i128;
        let idx = (delta_ps as i128 + half).div_euclid(self.bin_ps as i128);
        if idx < 0 || idx >= self.counts.len() as i128 {
            None
        } else {
            Some(idx as usize)
        }
    }

    /// Count in the bin containing `delay_ps`; zero if out of range.
    pub fn count_at(&self, delay_ps: i64) -> u64 {
        self.bin_for(delay_ps).map_or(0, |i| self.counts[i])
    }
}

/// Histogram pair time differences between the selected channels over bins
/// centered at 0, bin_ps, 2*bin_ps, ... below `range_ps`. In self mode only
/// `a` is read and partners must be strictly later.
pub fn correlation_histogram(
    a: &TagStream,
    b: &TagStream,
    channel_a: u16,
    channel_b: u16,
    bin_ps: u64,
    range_ps: u64,
    self_mode: bool,
) -> Result<CorrelationHistogram> {
    if bin_ps == 0 || bin_ps % 2 != 0 {
        return Err(Error::InvalidConfig(
            "bin_ps must be positive and even (bins are centered on the grid)".into(),
        ));
    }
    if range_ps < bin_ps {
        return Err(Error::InvalidConfig(
            "range_ps must cover at least one bin".into(),
        ));
    }
    if self_mode && channel_a != channel_b {
        return Err(Error::InvalidConfig(
            "self_mode requires channel_a == channel_b".into(),
        ));
    }
    a.validate()?;
    let nbins = (range_ps / bin_ps) as usize;
    let mut counts = vec![0u64; nbins];
    let half = bin_ps / 2;
    // Largest difference landing in the last bin.
    let dmax = nbins as u64 * bin_ps - half - 1;
    let ta = a.channel_times(channel_a);
    if self_mode {
        for i in 0..ta.len() {
            let ti = ta[i];
            for &tj in &ta[i + 1..] {
                let delta = tj - ti;
                if delta > dmax {
                    break;
                }
                if delta == 0 {
                    continue;
                }
                counts[((delta + half) / bin_ps) as usize] += 1;
            }
        }
    } else {
        b.validate()?;
        let tb = b.channel_times(channel_b);
        let dmin = -(half as i128);
        let mut lo = 0usize;
        for &t in &ta {
            let t = t as i128;
            while lo < tb.len() && (tb[lo] as i128 - t) < dmin {
                lo += 1;
            }
            for &u in &tb[lo..] {
                let delta = u as i128 - t;
                if delta > dmax as i128 {
                    break;
                }
                counts[((delta + half as i128) / bin_ps as i128) as usize] += 1;
            }
        }
    }
    Ok(CorrelationHistogram { bin_ps, counts })
}
