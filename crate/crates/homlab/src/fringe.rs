//! Displacement scans and Gaussian fringe fitting.
//!
//! A scan sweeps the mirror displacement, simulates a full run per point, and
//! counts coincidences for each configured pairing. The fitter recovers the
//! fringe model C(x) = B (1 + s V exp(-(x - x0)^2 / (2 w^2))) by weighted
//! least squares; the sign is estimated, so dips and peaks share one code
//! path. Reported widths are FWHM = 2 sqrt(2 ln 2) w.

use crate::correlator::{count_coincidences, CoincidenceSpec};
use crate::error::{Error, Result};
use crate::optics::OpticalConfig;
use crate::rng::{domain, stream_key};
use crate::sim::{simulate, DetectorConfig, SimPlan};
use crate::tags::merge_sorted;
use serde::{Deserialize, Serialize};

pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949; // 2 sqrt(2 ln 2)

/// One measured scan point: counts accumulated over `duration_ps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringePoint {
    pub dx_mm: f64,
    pub count: f64,
    pub duration_ps: u64,
}

/// Counts versus displacement for one coincidence pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeCurve {
    pub label: String,
    pub points: Vec<FringePoint>,
}

impl FringeCurve {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidCurve("curve has no points".into()));
        }
        for p in &self.points {
            if !p.dx_mm.is_finite() || !p.count.is_finite() || p.count < 0.0 {
                return Err(Error::InvalidCurve(format!(
                    "bad point (dx {}, count {})",
                    p.dx_mm, p.count
                )));
            }
        }
        for w in self.points.windows(2) {
            if w[1].dx_mm <= w[0].dx_mm {
                return Err(Error::InvalidCurve(format!(
                    "dx must be strictly increasing, got {} then {}",
                    w[0].dx_mm, w[1].dx_mm
                )));
            }
        }
        Ok(())
    }
}

/// Fitted fringe parameters with standard errors from the inverse curvature
/// scaled by reduced chi-square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub baseline: f64,
    pub baseline_err: f64,
    /// In [0, 1]; forced to 0 when `no_fringe` is set.
    pub visibility: f64,
    pub visibility_err: f64,
    pub center_mm: f64,
    pub center_err_mm: f64,
    pub fwhm_mm: f64,
    pub fwhm_err_mm: f64,
    /// +1 peak, -1 dip.
    pub sign: i8,
    pub chi_square: f64,
    pub dof: usize,
    /// Set when the curve's contrast is below twice its own noise scale.
    pub no_fringe: bool,
    pub iterations: usize,
}

/// Fitted visibility with its standard error; zero when no fringe was found.
pub fn estimate_visibility(fit: &FringeFit) -> (f64, f64) {
    (fit.visibility, fit.visibility_err)
}

/// Everything one scan produces: a coincidence curve per spec plus the
/// per-channel singles curves (labels `singles_ch<n>`), which diagnose the
/// absence of one-photon fringes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub coincidences: Vec<FringeCurve>,
    pub singles: Vec<FringeCurve>,
}

impl ScanResult {
    pub fn all_curves(&self) -> impl Iterator<Item = &FringeCurve> {
        self.coincidences.iter().chain(self.singles.iter())
    }

    pub fn find(&self, label: &str) -> Option<&FringeCurve> {
        self.all_curves().find(|c| c.label == label)
    }
}

/// Sweep the displacement list, simulating `pulses_per_point` pulses per
/// point with a seed derived from (seed, point index), and count every spec
/// on the merged stream of that point.
pub fn run_scan(
    dx_list: &[f64],
    pulses_per_point: u64,
    dwell_block_pulses: u64,
    optics: &OpticalConfig,
    det: &DetectorConfig,
    specs: &[CoincidenceSpec],
    seed: u64,
) -> Result<ScanResult> {
    optics.validate()?;
    det.validate()?;
    if dx_list.is_empty() {
        return Err(Error::InvalidConfig("scan needs at least one point".into()));
    }
    for w in dx_list.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidConfig(
                "scan displacements must be strictly increasing".into(),
            ));
        }
    }
    let mut labels = std::collections::HashSet::new();
    for spec in specs {
        spec.validate()?;
        let label = spec.curve_label();
        if label.starts_with("singles_ch") || !labels.insert(label.clone()) {
            return Err(Error::InvalidConfig(format!(
                "coincidence label {label} is reserved or duplicated"
            )));
        }
    }
    let delays: Vec<i64> = specs.iter().map(|s| s.delay_ps).collect();
    let n_channels = optics.topology.channel_count() as usize;

    let mut coincidences: Vec<FringeCurve> = specs
        .iter()
        .map(|s| FringeCurve {
            label: s.curve_label(),
            points: Vec::with_capacity(dx_list.len()),
        })
        .collect();
    let mut singles: Vec<FringeCurve> = (0..n_channels)
        .map(|ch| FringeCurve {
            label: format!("singles_ch{ch}"),
            points: Vec::with_capacity(dx_list.len()),
        })
        .collect();

    for (index, &dx_mm) in dx_list.iter().enumerate() {
        let plan = SimPlan {
            n_pulses: pulses_per_point,
            dwell_block_pulses,
            seed: stream_key(seed, domain::SCAN_POINT, index as u64, 0),
            dx_mm,
        };
        plan.validate_delays(optics, &delays)?;
        let streams = simulate(&plan, optics, det)?;
        let duration_ps = plan.duration_ps(optics)?;
        let merged = merge_sorted(&streams)?;
        for (spec, curve) in specs.iter().zip(coincidences.iter_mut()) {
            let count = count_coincidences(&merged, spec)? as f64;
            curve.points.push(FringePoint { dx_mm, count, duration_ps });
        }
        for (ch, curve) in singles.iter_mut().enumerate() {
            curve.points.push(FringePoint {
                dx_mm,
                count: streams[ch].len() as f64,
                duration_ps,
            });
        }
    }
    Ok(ScanResult { coincidences, singles })
}

/// Fit the Gaussian fringe model to a curve with the default iteration
/// budget.
pub fn fit_fringe(curve: &FringeCurve) -> Result<FringeFit> {
    fit_fringe_with(curve, 200)
}

/// As [`fit_fringe`] with an explicit iteration cap. Exceeding the cap
/// returns [`Error::FitDidNotConverge`] carrying the last iterate.
pub fn fit_fringe_with(curve: &FringeCurve, max_iterations: usize) -> Result<FringeFit> {
    curve.validate()?;
    let n = curve.points.len();
    if n < 7 {
        return Err(Error::InvalidCurve(format!(
            "need at least 7 points to fit, got {n}"
        )));
    }
    let x: Vec<f64> = curve.points.iter().map(|p| p.dx_mm).collect();
    let y: Vec<f64> = curve.points.iter().map(|p| p.count).collect();
    // Poisson-motivated weights, fixed by the data.
    let w: Vec<f64> = y.iter().map(|&v| 1.0 / v.max(1.0)).collect();
    let span = x[n - 1] - x[0];

    // Baseline from the outer quarter of points, split across both wings.
    let per_side = (n / 8).max(1);
    let wings: Vec<f64> = y[..per_side]
        .iter()
        .chain(y[n - per_side..].iter())
        .copied()
        .collect();
    let b0 = wings.iter().sum::<f64>() / wings.len() as f64;
    if b0 <= 0.0 {
        return Err(Error::InvalidCurve(
            "wings have no counts; baseline undefined".into(),
        ));
    }

    let ext = (0..n)
        .max_by(|&i, &j| {
            (y[i] - b0)
                .abs()
                .partial_cmp(&(y[j] - b0).abs())
                .expect("finite counts")
        })
        .expect("nonempty");
    let contrast = y[ext] - b0;
    // Noise scale from the wings themselves, so noiseless curves of any
    // amplitude stay fittable while flat noisy curves short-circuit.
    let noise = (wings
        .iter()
        .map(|&v| (v - b0) * (v - b0))
        .sum::<f64>()
        / wings.len().saturating_sub(1).max(1) as f64)
        .sqrt();
    if contrast.abs() < 2.0 * noise {
        return Ok(flat_fit(&x, &y, &w, span));
    }

    // Width from where the deviation falls to half the extremal contrast.
    let half = contrast.abs() / 2.0;
    let mut hwhm = span / 6.0;
    for side in [1i64, -1] {
        let mut i = ext as i64 + side;
        while (0..n as i64).contains(&i) {
            if (y[i as usize] - b0).abs() < half {
                hwhm = (x[i as usize] - x[ext]).abs();
                break;
            }
            i += side;
        }
        if hwhm != span / 6.0 {
            break;
        }
    }
    let w0 = (hwhm / (2.0f64 * (2.0f64).ln()).sqrt()).max(span / 50.0);

    // theta = [B, A, x0, w]; A = s V is the signed amplitude.
    let mut theta = [b0, contrast / b0, x[ext], w0];
    let scales = [b0, 1.0, span, span];
    let mut chi = chi_square(&x, &y, &w, &theta);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iterations {
        iterations += 1;
        // A singular system means the amplitude or width degenerated; the
        // curve is flat as far as the model can tell.
        let Ok(delta) = gauss_newton_step(&x, &y, &w, &theta) else {
            return Ok(flat_fit(&x, &y, &w, span));
        };
        // Backtrack until chi-square improves and the shape stays legal.
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = [
                theta[0] + step * delta[0],
                theta[1] + step * delta[1],
                theta[2] + step * delta[2],
                theta[3] + step * delta[3],
            ];
            if trial[0] > 0.0 && trial[3] > 0.0 {
                let trial_chi = chi_square(&x, &y, &w, &trial);
                if trial_chi <= chi {
                    let rel = (0..4)
                        .map(|j| (step * delta[j]).abs() / scales[j])
                        .fold(0.0, f64::max);
                    theta = trial;
                    chi = trial_chi;
                    accepted = true;
                    if rel < 1e-12 {
                        converged = true;
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            // No direction of decrease at machine scale: at the optimum.
            converged = true;
        }
        if converged {
            break;
        }
    }

    let fit = finish_fit(&x, &y, &w, &theta, chi, iterations)?;
    if converged {
        Ok(fit)
    } else {
        Err(Error::FitDidNotConverge {
            iterations,
            last: Box::new(fit),
        })
    }
}

fn model(theta: &[f64; 4], x: f64) -> f64 {
    let g = (-(x - theta[2]).powi(2) / (2.0 * theta[3] * theta[3])).exp();
    theta[0] * (1.0 + theta[1] * g)
}

fn chi_square(x: &[f64], y: &[f64], w: &[f64], theta: &[f64; 4]) -> f64 {
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((&xi, &yi), &wi)| {
            let r = model(theta, xi) - yi;
            wi * r * r
        })
        .sum()
}

/// One Gauss-Newton step from the weighted normal equations.
fn gauss_newton_step(x: &[f64], y: &[f64], w: &[f64], theta: &[f64; 4]) -> Result<[f64; 4]> {
    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [0.0f64; 4];
    let [b, a, x0, wd] = *theta;
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        let u = xi - x0;
        let g = (-u * u / (2.0 * wd * wd)).exp();
        let jac = [
            1.0 + a * g,
            b * g,
            b * a * g * u / (wd * wd),
            b * a * g * u * u / (wd * wd * wd),
        ];
        let r = b * (1.0 + a * g) - yi;
        for i in 0..4 {
            atb[i] -= wi * jac[i] * r;
            for j in 0..4 {
                ata[i][j] += wi * jac[i] * jac[j];
            }
        }
    }
    solve4(ata, atb)
        .ok_or_else(|| Error::InvalidCurve("normal equations are singular".into()))
}

/// Solve a 4x4 system by Gaussian elimination with partial pivoting.
fn solve4(mut m: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| {
            m[i][col].abs().partial_cmp(&m[j][col].abs()).expect("finite")
        })?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut out = [0.0f64; 4];
    for col in (0..4).rev() {
        let mut acc = b[col];
        for k in col + 1..4 {
            acc -= m[col][k] * out[k];
        }
        out[col] = acc / m[col][col];
    }
    out.iter().all(|v| v.is_finite()).then_some(out)
}

fn finish_fit(
    x: &[f64],
    y: &[f64],
    w: &[f64],
    theta: &[f64; 4],
    chi: f64,
    iterations: usize,
) -> Result<FringeFit> {
    let n = x.len();
    let dof = n.saturating_sub(4).max(1);
    let chi_red = chi / dof as f64;

    // Covariance = inverse curvature scaled by reduced chi-square.
    let mut ata = [[0.0f64; 4]; 4];
    let [b, a, x0, wd] = *theta;
    for (&xi, &wi) in x.iter().zip(w) {
        let u = xi - x0;
        let g = (-u * u / (2.0 * wd * wd)).exp();
        let jac = [
            1.0 + a * g,
            b * g,
            b * a * g * u / (wd * wd),
            b * a * g * u * u / (wd * wd * wd),
        ];
        for i in 0..4 {
            for j in 0..4 {
                ata[i][j] += wi * jac[i] * jac[j];
            }
        }
    }
    let mut err = [0.0f64; 4];
    for i in 0..4 {
        let mut unit = [0.0f64; 4];
        unit[i] = 1.0;
        let col = solve4(ata, unit)
            .ok_or_else(|| Error::InvalidCurve("curvature matrix is singular".into()))?;
        err[i] = (col[i] * chi_red).max(0.0).sqrt();
    }

    let no_fringe = a.abs() < 2.0 * err[1];
    let _ = y;
    Ok(FringeFit {
        baseline: b,
        baseline_err: err[0],
        visibility: if no_fringe { 0.0 } else { a.abs().min(1.0) },
        visibility_err: err[1],
        center_mm: x0,
        center_err_mm: err[2],
        fwhm_mm: FWHM_PER_SIGMA * wd,
        fwhm_err_mm: FWHM_PER_SIGMA * err[3],
        sign: if a >= 0.0 { 1 } else { -1 },
        chi_square: chi,
        dof,
        no_fringe,
        iterations,
    })
}

/// Weighted flat fit for curves whose contrast is inside the noise.
fn flat_fit(x: &[f64], y: &[f64], w: &[f64], span: f64) -> FringeFit {
    let sw: f64 = w.iter().sum();
    let b = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((_, &yi), &wi)| wi * yi)
        .sum::<f64>()
        / sw;
    let chi: f64 = y.iter().zip(w).map(|(&yi, &wi)| wi * (yi - b) * (yi - b)).sum();
    let dof = y.len().saturating_sub(1).max(1);
    let baseline_err = (chi / dof as f64 / sw).sqrt();
    FringeFit {
        baseline: b,
        baseline_err,
        visibility: 0.0,
        visibility_err: if b > 0.0 { baseline_err / b } else { 0.0 },
        center_mm: (x[0] + x[x.len() - 1]) / 2.0,
        center_err_mm: span / 2.0,
        fwhm_mm: (span / 2.0).max(f64::MIN_POSITIVE),
        fwhm_err_mm: span / 2.0,
        sign: 1,
        chi_square: chi,
        dof,
        no_fringe: true,
        iterations: 0,
    }
}
