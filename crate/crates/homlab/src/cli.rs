//! Command-line front end: simulate runs, analyze tag files, sweep scans,
//! fit fringes, query the amplitude oracle, and self-check the pipeline.
//!
//! Scalar results go to stdout as JSON, curves and histograms as CSV. Every
//! subcommand is deterministic in (flags, config, seed): rerunning writes
//! byte-identical artifacts. Exit codes: 0 success, 1 runtime failure, 2
//! usage error.

use crate::config::{linspace, RunConfig};
use crate::correlator::{
    correlation_histogram, count_coincidences, CoincidenceSpec, DEFAULT_WINDOW_PS,
};
use crate::error::{Error, Result};
use crate::fock::phase_averaged_prob_normalized;
use crate::fringe::{fit_fringe, run_scan, FringeCurve, FringePoint};
use crate::optics::{closed_form_rate, Pairing};
use crate::rng::{domain, Stream};
use crate::sim::{simulate, SimPlan};
use crate::tags::{merge_sorted, TagStream, TimeTag};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(
    name = "homlab",
    version,
    about = "Virtual two-photon interference lab: simulate tag streams, correlate, scan, fit"
)]
pub struct Cli {
    /// Worker threads; falls back to HOMLAB_THREADS, then all cores.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..=4096))]
    pub threads: Option<u64>,
    /// Report runtime failures as a JSON object on stderr.
    #[arg(long, global = true)]
    pub json_errors: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate one run and write all channels to a single tag file.
    Simulate {
        /// Experiment description (TOML); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Mirror displacement in mm.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        dx_mm: f64,
        /// Number of pulse slots.
        #[arg(long, default_value_t = 1_000_000)]
        pulses: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output tag file path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Count delayed coincidences in a tag file.
    Analyze {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long, default_value_t = 0)]
        ch_a: u16,
        /// Partner channel for cross pairing; defaults to 1.
        #[arg(long)]
        ch_b: Option<u16>,
        /// Electrical delay between the paired clicks.
        #[arg(long, allow_negative_numbers = true)]
        delay_ps: i64,
        #[arg(long, default_value_t = DEFAULT_WINDOW_PS)]
        window_ps: u64,
        /// Pair a channel with its own later clicks instead of another channel.
        #[arg(long = "self")]
        self_mode: bool,
    },
    /// Histogram of pair time differences, CSV on stdout.
    Histogram {
        #[arg(long)]
        tags: PathBuf,
        #[arg(long, default_value_t = 0)]
        ch_a: u16,
        /// Partner channel for cross pairing; defaults to 1.
        #[arg(long)]
        ch_b: Option<u16>,
        /// Bin width; must be even (bins are centered on multiples of it).
        #[arg(long)]
        bin_ps: u64,
        /// Largest time difference covered.
        #[arg(long)]
        range_ps: u64,
        /// Histogram a channel against its own later clicks.
        #[arg(long = "self")]
        self_mode: bool,
    },
    /// Sweep mirror displacement and write every fringe curve to CSV.
    Scan {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scan points; defaults to the config scan section.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        points: Option<u32>,
        #[arg(long, allow_negative_numbers = true)]
        dx_min: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        dx_max: Option<f64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        pulses_per_point: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the Gaussian fringe model to one labeled curve from a scan CSV.
    Fit {
        /// CSV produced by `scan`.
        #[arg(long)]
        fringe: PathBuf,
        /// Curve label to fit.
        #[arg(long)]
        label: String,
    },
    /// Phase-averaged coincidence probability from the amplitude model.
    Oracle {
        #[arg(long, default_value_t = 45.0, allow_negative_numbers = true)]
        theta1: f64,
        #[arg(long, default_value_t = 45.0, allow_negative_numbers = true)]
        theta2: f64,
        /// Wavepacket overlap between the interferometer arms, in [0, 1].
        #[arg(long)]
        gamma: f64,
        #[arg(long, value_enum)]
        pairing: PairingArg,
        #[arg(long, default_value_t = -1, allow_negative_numbers = true)]
        bs_sign: i8,
        #[arg(long, default_value_t = 4096, value_parser = clap::value_parser!(u64).range(16..))]
        samples: u64,
    },
    /// Cross-check the closed-form rates against the amplitude model and the
    /// correlator against brute-force counting; nonzero exit on any mismatch.
    Selftest {
        /// Random correlator cases to run.
        #[arg(long, default_value_t = 60, value_parser = clap::value_parser!(u64).range(1..))]
        fuzz_cases: u64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PairingArg {
    /// Click on detector 1, click on detector 2 one period later.
    Cross,
    /// Two detector-1 clicks one period apart.
    SelfD1,
}

impl From<PairingArg> for Pairing {
    fn from(value: PairingArg) -> Pairing {
        match value {
            PairingArg::Cross => Pairing::CrossD1D2,
            PairingArg::SelfD1 => Pairing::SelfD1,
        }
    }
}

/// Why a run stopped; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flag combination or environment; exit 2.
    Usage(String),
    /// Error from the pipeline itself; exit 1.
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

/// Parse argv, run, and translate failures to exit codes.
pub fn run() -> i32 {
    let cli = Cli::parse();
    let json_errors = cli.json_errors;
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Runtime(err)) => {
            if json_errors {
                let obj = serde_json::json!({ "error": err.to_string() });
                eprintln!("{obj}");
            } else {
                eprintln!("error: {err}");
            }
            1
        }
    }
}

fn dispatch(cli: Cli) -> std::result::Result<(), Failure> {
    let threads = resolve_threads(cli.threads, std::env::var("HOMLAB_THREADS").ok())?;
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Failure::Runtime(Error::InvalidState(e.to_string())))?;
            pool.install(|| execute(cli.command))
        }
        None => execute(cli.command),
    }
}

/// Explicit flag wins over the environment; absent both means rayon's
/// default. The environment value must be a positive integer.
fn resolve_threads(
    flag: Option<u64>,
    env: Option<String>,
) -> std::result::Result<Option<usize>, Failure> {
    if let Some(n) = flag {
        return Ok(Some(n as usize));
    }
    match env {
        None => Ok(None),
        Some(raw) => match raw.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Failure::Usage(format!(
                "HOMLAB_THREADS must be a positive integer, got {raw:?}"
            ))),
        },
    }
}

fn execute(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::Simulate { config, dx_mm, pulses, seed, out } => {
            let cfg = load_config(config.as_deref())?;
            let plan = SimPlan {
                n_pulses: pulses,
                dwell_block_pulses: cfg.interferometer.dwell_block_pulses,
                seed,
                dx_mm,
            };
            let streams = simulate(&plan, &cfg.optics(), &cfg.detector)?;
            merge_sorted(&streams)?.save(&out)?;
            Ok(())
        }
        Command::Analyze { tags, ch_a, ch_b, delay_ps, window_ps, self_mode } => {
            let spec = pair_spec(ch_a, ch_b, delay_ps, window_ps, self_mode)?;
            let stream = TagStream::load(&tags)?;
            let count = count_coincidences(&stream, &spec)?;
            let duration_ps = stream.tags.iter().map(|t| t.t_ps).max().unwrap_or(0);
            let rate_hz = if duration_ps > 0 {
                count as f64 * 1e12 / duration_ps as f64
            } else {
                0.0
            };
            print_json(&AnalyzeOutput { count, duration_ps, rate_hz })?;
            Ok(())
        }
        Command::Histogram { tags, ch_a, ch_b, bin_ps, range_ps, self_mode } => {
            let partner = partner_channel(ch_a, ch_b, self_mode)?;
            let stream = TagStream::load(&tags)?;
            let hist =
                correlation_histogram(&stream, &stream, ch_a, partner, bin_ps, range_ps, self_mode)?;
            let mut text = String::from("bin_start_ps,count\n");
            for (index, count) in hist.counts.iter().enumerate() {
                text.push_str(&format!("{},{count}\n", hist.start_ps(index)));
            }
            print!("{text}");
            Ok(())
        }
        Command::Scan { config, points, dx_min, dx_max, pulses_per_point, seed, out } => {
            let cfg = load_config(config.as_deref())?;
            let points = points.unwrap_or(cfg.scan.points);
            let lo = dx_min.unwrap_or(cfg.scan.dx_min_mm);
            let hi = dx_max.unwrap_or(cfg.scan.dx_max_mm);
            if points > 1 && lo >= hi {
                return Err(Failure::Usage(format!(
                    "scan range [{lo}, {hi}] must be increasing for {points} points"
                )));
            }
            let result = run_scan(
                &linspace(lo, hi, points),
                pulses_per_point.unwrap_or(cfg.scan.pulses_per_point),
                cfg.interferometer.dwell_block_pulses,
                &cfg.optics(),
                &cfg.detector,
                &cfg.effective_specs(),
                seed.unwrap_or(cfg.scan.seed),
            )?;
            std::fs::write(&out, curves_to_csv(result.all_curves())?)
                .map_err(Error::from)?;
            Ok(())
        }
        Command::Fit { fringe, label } => {
            let text = std::fs::read_to_string(&fringe).map_err(Error::from)?;
            let curves = parse_curves_csv(&text)?;
            let curve = curves.iter().find(|c| c.label == label).ok_or_else(|| {
                let known: Vec<&str> = curves.iter().map(|c| c.label.as_str()).collect();
                Error::InvalidCurve(format!(
                    "no curve labeled {label:?}; file has {}",
                    known.join(", ")
                ))
            })?;
            print_json(&fit_fringe(curve)?)?;
            Ok(())
        }
        Command::Oracle { theta1, theta2, gamma, pairing, bs_sign, samples } => {
            let pairing = Pairing::from(pairing);
            let probability_normalized = phase_averaged_prob_normalized(
                theta1,
                theta2,
                gamma,
                bs_sign,
                pairing,
                samples as usize,
            )?;
            print_json(&OracleOutput {
                theta1_deg: theta1,
                theta2_deg: theta2,
                gamma,
                pairing,
                probability_normalized,
            })?;
            Ok(())
        }
        Command::Selftest { fuzz_cases } => {
            let (grid_points, max_dev) = oracle_grid_check()?;
            println!(
                "ok amplitude oracle vs closed form: {grid_points} grid points, max deviation {max_dev:.3e}"
            );
            let (cases, matches) = correlator_fuzz_check(fuzz_cases, 0xC0FFEE)?;
            println!("ok correlator vs brute force: {cases} cases, {matches} coincidences compared");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct AnalyzeOutput {
    count: u64,
    duration_ps: u64,
    rate_hz: f64,
}

#[derive(Serialize)]
struct OracleOutput {
    theta1_deg: f64,
    theta2_deg: f64,
    gamma: f64,
    pairing: Pairing,
    probability_normalized: f64,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn partner_channel(
    ch_a: u16,
    ch_b: Option<u16>,
    self_mode: bool,
) -> std::result::Result<u16, Failure> {
    if self_mode {
        match ch_b {
            Some(b) if b != ch_a => Err(Failure::Usage(format!(
                "--self pairs channel {ch_a} with itself; --ch-b {b} contradicts that"
            ))),
            _ => Ok(ch_a),
        }
    } else {
        Ok(ch_b.unwrap_or(1))
    }
}

fn pair_spec(
    ch_a: u16,
    ch_b: Option<u16>,
    delay_ps: i64,
    window_ps: u64,
    self_mode: bool,
) -> std::result::Result<CoincidenceSpec, Failure> {
    let partner = partner_channel(ch_a, ch_b, self_mode)?;
    let spec = if self_mode {
        CoincidenceSpec::self_channel(ch_a, delay_ps)
    } else {
        CoincidenceSpec::cross(ch_a, partner, delay_ps)
    }
    .with_window(window_ps);
    spec.validate()?;
    Ok(spec)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidState(format!("serializing output: {e}")))?;
    println!("{text}");
    Ok(())
}

/// Flatten curves to the scan CSV layout: label, dx_mm, count, duration_ps.
pub fn curves_to_csv<'a>(curves: impl Iterator<Item = &'a FringeCurve>) -> Result<String> {
    let mut text = String::from("label,dx_mm,count,duration_ps\n");
    for curve in curves {
        if curve.label.contains([',', '\n', '\r']) {
            return Err(Error::InvalidConfig(format!(
                "label {:?} cannot be written as CSV",
                curve.label
            )));
        }
        for p in &curve.points {
            text.push_str(&format!(
                "{},{},{},{}\n",
                curve.label, p.dx_mm, p.count, p.duration_ps
            ));
        }
    }
    Ok(text)
}

/// Inverse of [`curves_to_csv`]; curves keep their first-seen order.
pub fn parse_curves_csv(text: &str) -> Result<Vec<FringeCurve>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "label,dx_mm,count,duration_ps")) => {}
        other => {
            return Err(Error::InvalidCurve(format!(
                "expected header label,dx_mm,count,duration_ps, got {:?}",
                other.map(|(_, l)| l).unwrap_or("")
            )))
        }
    }
    let mut curves: Vec<FringeCurve> = Vec::new();
    for (index, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (label, dx, count, duration) = match (
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
        ) {
            (Some(l), Some(d), Some(c), Some(t), None) => (l, d, c, t),
            _ => {
                return Err(Error::InvalidCurve(format!(
                    "line {}: expected 4 comma-separated fields",
                    index + 1
                )))
            }
        };
        let parse_err =
            |what: &str| Error::InvalidCurve(format!("line {}: bad {what}", index + 1));
        let point = FringePoint {
            dx_mm: dx.parse().map_err(|_| parse_err("dx_mm"))?,
            count: count.parse().map_err(|_| parse_err("count"))?,
            duration_ps: duration.parse().map_err(|_| parse_err("duration_ps"))?,
        };
        match curves.iter_mut().find(|c| c.label == label) {
            Some(curve) => curve.points.push(point),
            None => curves.push(FringeCurve {
                label: label.to_string(),
                points: vec![point],
            }),
        }
    }
    Ok(curves)
}

/// Compare the phase-averaged amplitude model against the closed-form rates
/// over the full angle/overlap grid. Returns (points checked, worst
/// deviation); any point off by more than 1e-9 is an error.
pub fn oracle_grid_check() -> Result<(usize, f64)> {
    let mut max_dev = 0.0f64;
    let mut points = 0;
    for pairing in [Pairing::CrossD1D2, Pairing::SelfD1] {
        for t1 in (-90..=90).step_by(15) {
            for t2 in (-90..=90).step_by(15) {
                for gamma in [0.0, 0.25, 0.5, 0.75, 1.0] {
                    let t1 = f64::from(t1);
                    let t2 = f64::from(t2);
                    let averaged =
                        phase_averaged_prob_normalized(t1, t2, gamma, -1, pairing, 4096)?;
                    let closed = closed_form_rate(pairing, gamma, t1, t2, -1)?;
                    let dev = (averaged - closed).abs();
                    points += 1;
                    if dev > 1e-9 {
                        return Err(Error::InvalidState(format!(
                            "oracle deviates by {dev:.3e} at theta1 {t1}, theta2 {t2}, \
                             gamma {gamma}, pairing {pairing}"
                        )));
                    }
                    max_dev = max_dev.max(dev);
                }
            }
        }
    }
    Ok((points, max_dev))
}

/// Count coincidences on random streams with both the production correlator
/// and a direct quadratic scan; any disagreement is an error. Returns
/// (cases run, total coincidences compared).
pub fn correlator_fuzz_check(cases: u64, seed: u64) -> Result<(u64, u64)> {
    let mut total = 0u64;
    for case in 0..cases {
        let mut s = Stream::new(seed, domain::TEST, case, 0);
        let self_mode = case % 2 == 0;
        let n_a = 1 + (s.next_u64() % 400) as usize;
        let n_b = 1 + (s.next_u64() % 400) as usize;
        let mean_gap = 1.0 + s.uniform() * 5_000.0;
        let times_a = random_times(&mut s, n_a, mean_gap);
        let window = 1 + s.next_u64() % 5_000;
        let (stream, spec) = if self_mode {
            let delay = 1 + (s.next_u64() % 200_000) as i64;
            let tags = times_a
                .iter()
                .map(|&t| TimeTag { t_ps: t, channel: 0, flags: 0 })
                .collect();
            (
                TagStream::new(tags)?,
                CoincidenceSpec::self_channel(0, delay).with_window(window),
            )
        } else {
            let delay = (s.next_u64() % 400_000) as i64 - 200_000;
            let times_b = random_times(&mut s, n_b, mean_gap);
            let mut tags: Vec<TimeTag> = times_a
                .iter()
                .map(|&t| TimeTag { t_ps: t, channel: 0, flags: 0 })
                .chain(times_b.iter().map(|&t| TimeTag { t_ps: t, channel: 1, flags: 0 }))
                .collect();
            tags.sort_by_key(|t| (t.t_ps, t.channel));
            (
                TagStream::new(tags)?,
                CoincidenceSpec::cross(0, 1, delay).with_window(window),
            )
        };
        let fast = count_coincidences(&stream, &spec)?;
        let slow = quadratic_count(&stream, &spec);
        if fast != slow {
            return Err(Error::InvalidState(format!(
                "correlator case {case}: fast {fast} != brute {slow} \
                 (delay {}, window {}, self {})",
                spec.delay_ps, spec.window_ps, spec.self_mode
            )));
        }
        total += fast;
    }
    Ok((cases, total))
}

fn random_times(s: &mut Stream, n: usize, mean_gap: f64) -> Vec<u64> {
    let mut t = 0u64;
    (0..n)
        .map(|_| {
            t += s.exponential(mean_gap) as u64;
            t
        })
        .collect()
}

/// Direct O(n^2) coincidence count used only to cross-check the correlator.
fn quadratic_count(stream: &TagStream, spec: &CoincidenceSpec) -> u64 {
    let a: Vec<u64> = stream.channel_times(spec.channel_a);
    let b: Vec<u64> = stream.channel_times(spec.channel_b);
    let mut n = 0;
    for &ta in &a {
        for &tb in &b {
            let delta = tb as i128 - ta as i128;
            if spec.self_mode && delta <= 0 {
                continue;
            }
            if 2 * (delta - spec.delay_ps as i128).unsigned_abs() <= u128::from(spec.window_ps) {
                n += 1;
            }
        }
    }
    n
}
