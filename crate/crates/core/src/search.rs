//! Extremization of the corrected joint probability over the four apparatus
//! angles, and the visibility read-outs built on it.

use std::cell::Cell;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measurement::{
    corrected_joint_probability, distribution_from_coefficients, estimate_pbar, sample_shots,
    OutcomeDistribution, PbarEstimate, ShotCounts,
};
use crate::protocol::{apply_protocol, ProtocolAngles};
use crate::qstate::{concurrence_exact, TwoQubitState};

/// Grid values closer than this to the extremum count as ties.
const TIE_TOLERANCE: f64 = 1e-12;

/// Grid spread below which the landscape is treated as flat.
const FLAT_TOLERANCE: f64 = 1e-12;

/// Stage-1 candidates kept per extremum in the shot pipeline.
const SHOT_CANDIDATES: usize = 3;

pub const MIN_SHOTS_STAGE1: u64 = 100;
pub const MIN_SHOTS_STAGE2: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub grid_points_theta: usize,
    pub grid_points_phi: usize,
    pub refine_tolerance: f64,
    pub max_refine_iters: usize,
    /// Evaluate the grid on the rayon pool. Results do not depend on it.
    #[serde(skip, default = "parallel_default")]
    pub parallel: bool,
}

fn parallel_default() -> bool {
    true
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            grid_points_theta: 16,
            grid_points_phi: 16,
            refine_tolerance: 1e-9,
            max_refine_iters: 200,
            parallel: true,
        }
    }
}

impl SearchConfig {
    pub fn with_grid(points: usize) -> Self {
        Self {
            grid_points_theta: points,
            grid_points_phi: points,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_points_theta < 4 || self.grid_points_phi < 4 {
            return Err(Error::InvalidConfig(format!(
                "need at least 4 grid points per axis, got theta={} phi={}",
                self.grid_points_theta, self.grid_points_phi
            )));
        }
        if !(self.refine_tolerance > 0.0 && self.refine_tolerance.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "refine tolerance must be positive, got {}",
                self.refine_tolerance
            )));
        }
        Ok(())
    }

    pub fn grid_len(&self) -> usize {
        self.grid_points_theta.pow(2) * self.grid_points_phi.pow(2)
    }

    /// Grid point `index` in lexicographic `(θ₁, θ₂, Φ₁, Φ₂)` order over
    /// `[0, π)² × [0, 2π)²`.
    pub fn grid_point(&self, index: usize) -> ProtocolAngles {
        let (nt, np) = (self.grid_points_theta, self.grid_points_phi);
        let j2 = index % np;
        let j1 = (index / np) % np;
        let i2 = (index / (np * np)) % nt;
        let i1 = index / (np * np * nt);
        let theta = |i: usize| PI * i as f64 / nt as f64;
        let phi = |j: usize| TAU * j as f64 / np as f64;
        ProtocolAngles::new(theta(i1), theta(i2), phi(j1), phi(j2))
    }

    fn grid_steps(&self) -> [f64; 4] {
        let t = PI / self.grid_points_theta as f64;
        let p = TAU / self.grid_points_phi as f64;
        [t, t, p, p]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityReport {
    pub pbar_max: f64,
    pub pbar_min: f64,
    pub angles_max: ProtocolAngles,
    pub angles_min: ProtocolAngles,
    pub visibility: f64,
    /// `P̄` evaluations (exact search) or measurement settings (shot search).
    pub evaluations: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
}

/// `(max − min)/(max + min)`, or zero when both vanish.
pub fn visibility_from_extrema(max: f64, min: f64) -> f64 {
    if max + min > 0.0 {
        (max - min) / (max + min)
    } else {
        0.0
    }
}

/// `P̄` of the state under the given apparatus setting.
pub fn exact_pbar(state: &TwoQubitState, angles: &ProtocolAngles) -> Result<f64> {
    let coeffs = apply_protocol(state, angles)?;
    Ok(corrected_joint_probability(&distribution_from_coefficients(&coeffs)?))
}

fn evaluate_grid(state: &TwoQubitState, config: &SearchConfig) -> Result<Vec<f64>> {
    let eval = |i: usize| exact_pbar(state, &config.grid_point(i));
    if config.parallel {
        (0..config.grid_len()).into_par_iter().map(eval).collect()
    } else {
        (0..config.grid_len()).map(eval).collect()
    }
}

/// Index of the first value within [`TIE_TOLERANCE`] of the largest `sign·v`.
fn extremal_index(values: &[f64], sign: f64) -> usize {
    let best = values
        .iter()
        .map(|v| sign * v)
        .fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .position(|v| sign * v >= best - TIE_TOLERANCE)
        .expect("grid is non-empty")
}

/// Golden-section maximization of `f` on `[lo, hi]`, stopping once the
/// bracket is narrower than `tol`.
fn golden_section_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    const MAX_STEPS: usize = 200;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..MAX_STEPS {
        if b - a <= tol {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

type Point = [f64; 4];

fn inf_norm(v: &Point) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn offset(x: &Point, t: f64, dir: &Point) -> Point {
    std::array::from_fn(|k| x[k] + t * dir[k])
}

/// Golden-section maximization along `x + t·dir`, `t ∈ [−1, 1]`, resolving
/// the position to `tol` radians.
fn line_max(objective: &impl Fn(Point) -> f64, x: &Point, dir: &Point, tol: f64) -> (f64, f64) {
    let reach = inf_norm(dir);
    golden_section_max(|t| objective(offset(x, t, dir)), -1.0, 1.0, tol / reach)
}

/// Powell conjugate-direction ascent from `start`. The first cycle is a
/// plain coordinate-wise golden-section sweep with brackets `±half_width`;
/// afterwards the net displacement of a cycle may replace the direction of
/// largest gain. A move is kept only if it strictly improves the objective.
/// Stops once no angle moves by more than the refine tolerance in a cycle.
fn powell_refine(
    objective: impl Fn(Point) -> f64,
    start: Point,
    start_value: f64,
    half_width: Point,
    config: &SearchConfig,
) -> (Point, f64) {
    let tol = config.refine_tolerance;
    let new_reach = half_width.iter().copied().fold(f64::INFINITY, f64::min);
    let mut dirs: [Point; 4] = std::array::from_fn(|i| {
        let mut d = [0.0; 4];
        d[i] = half_width[i];
        d
    });
    let mut x = start;
    let mut best = start_value;

    for _ in 0..config.max_refine_iters {
        let cycle_start = x;
        let cycle_value = best;
        let mut max_change = 0.0f64;
        let (mut largest_gain, mut largest_dir) = (0.0f64, 0usize);
        for (i, dir) in dirs.iter().enumerate() {
            let (t, v) = line_max(&objective, &x, dir, tol);
            if v > best {
                max_change = max_change.max(t.abs() * inf_norm(dir));
                if v - best > largest_gain {
                    largest_gain = v - best;
                    largest_dir = i;
                }
                x = offset(&x, t, dir);
                best = v;
            }
        }
        if max_change < tol {
            break;
        }

        let shift: Point = std::array::from_fn(|k| x[k] - cycle_start[k]);
        let extrapolated = objective(offset(&x, 1.0, &shift));
        if extrapolated > cycle_value {
            let curvature = cycle_value - 2.0 * best + extrapolated;
            let test = -2.0 * curvature * (best - cycle_value - largest_gain).powi(2)
                - largest_gain * (extrapolated - cycle_value).powi(2);
            if test < 0.0 {
                let scale = new_reach / inf_norm(&shift);
                let dir: Point = shift.map(|s| s * scale);
                let (t, v) = line_max(&objective, &x, &dir, tol);
                if v > best {
                    x = offset(&x, t, &dir);
                    best = v;
                }
                dirs[largest_dir] = dirs[3];
                dirs[3] = dir;
            }
        }
    }
    (x, best)
}

/// Bloch-axis settings `(θ, Φ)` for `+x, −x, +y, −y, +z, −z` in the frame
/// `(sin 2θ cos Φ, sin 2θ sin Φ, cos 2θ)`.
const AXIS_SETTINGS: [(f64, f64); 6] = [
    (FRAC_PI_4, 0.0),
    (FRAC_PI_4, PI),
    (FRAC_PI_4, FRAC_PI_2),
    (FRAC_PI_4, 3.0 * FRAC_PI_2),
    (0.0, 0.0),
    (FRAC_PI_2, 0.0),
];

fn bloch_angles(m: &nalgebra::Vector3<f64>) -> (f64, f64) {
    let m = m.normalize();
    (0.5 * m.z.clamp(-1.0, 1.0).acos(), m.y.atan2(m.x))
}

/// `P̄` is bilinear in the two Bloch directions. Reconstructs that form from
/// the 36 axis settings and jumps to its exact optimum, keeping the jump only
/// if it improves on `start_value`.
fn bilinear_polish(objective: impl Fn(Point) -> f64, start: Point, start_value: f64) -> (Point, f64) {
    let f = |a: usize, b: usize| {
        let (t1, p1) = AXIS_SETTINGS[a];
        let (t2, p2) = AXIS_SETTINGS[b];
        objective([t1, t2, p1, p2])
    };
    let form = nalgebra::Matrix3::from_fn(|i, j| {
        let (p, n) = (2 * i, 2 * i + 1);
        let (q, m) = (2 * j, 2 * j + 1);
        0.25 * (f(p, q) - f(p, m) - f(n, q) + f(n, m))
    });
    let svd = form.svd(true, true);
    let k = svd.singular_values.imax();
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return (start, start_value);
    };
    let (theta1, phi1) = bloch_angles(&u.column(k).into_owned());
    let (theta2, phi2) = bloch_angles(&v_t.row(k).transpose());
    let candidate = [theta1, theta2, phi1, phi2];
    let value = objective(candidate);
    if value > start_value {
        (candidate, value)
    } else {
        (start, start_value)
    }
}

/// Two-stage search for the extrema of `P̄`: a full grid over
/// `[0, π)² × [0, 2π)²`, then refinement of the best maximum and minimum by
/// conjugate-direction golden-section ascent and an exact bilinear polish.
///
/// A flat grid (spread below 1e-12, i.e. a product state) is reported as
/// visibility 0 at the zero setting.
pub fn find_extrema(state: &TwoQubitState, config: &SearchConfig) -> Result<VisibilityReport> {
    state.ensure_normalized()?;
    config.validate()?;

    let values = evaluate_grid(state, config)?;
    let evaluations = Cell::new(values.len() as u64);
    let imax = extremal_index(&values, 1.0);
    let imin = extremal_index(&values, -1.0);

    if values[imax] - values[imin] <= FLAT_TOLERANCE {
        let level = exact_pbar(state, &ProtocolAngles::ZERO)?;
        return Ok(VisibilityReport {
            pbar_max: level,
            pbar_min: level,
            angles_max: ProtocolAngles::ZERO,
            angles_min: ProtocolAngles::ZERO,
            visibility: 0.0,
            evaluations: evaluations.get() + 1,
            std_error: None,
        });
    }

    let steps = config.grid_steps();
    // state and angles are validated, so the pipeline cannot fail here
    let signed = |sign: f64| {
        let evaluations = &evaluations;
        move |x: [f64; 4]| {
            evaluations.set(evaluations.get() + 1);
            sign * exact_pbar(state, &ProtocolAngles::from_array(x)).unwrap_or(f64::NAN)
        }
    };
    let refine = |sign: f64, index: usize| {
        let start = config.grid_point(index).to_array();
        let (x, v) = powell_refine(signed(sign), start, sign * values[index], steps, config);
        bilinear_polish(signed(sign), x, v)
    };
    let (xmax, vmax) = refine(1.0, imax);
    let (xmin, vmin) = refine(-1.0, imin);
    let (pbar_max, pbar_min) = (vmax, -vmin);

    Ok(VisibilityReport {
        pbar_max,
        pbar_min,
        angles_max: ProtocolAngles::from_array(xmax).canonical(),
        angles_min: ProtocolAngles::from_array(xmin).canonical(),
        visibility: visibility_from_extrema(pbar_max, pbar_min),
        evaluations: evaluations.get(),
        std_error: None,
    })
}

pub fn visibility_exact(state: &TwoQubitState, config: &SearchConfig) -> Result<f64> {
    Ok(find_extrema(state, config)?.visibility)
}

/// How closely a report reaches the bounds `(1 ± C)/4` set by the exact
/// concurrence `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub concurrence: f64,
    /// `pbar_max − (1 + C)/4`
    pub max_gap: f64,
    /// `pbar_min − (1 − C)/4`
    pub min_gap: f64,
    /// `pbar_max + pbar_min − 1/2`
    pub sum_residual: f64,
    /// Both bounds reached within 1e-6 and neither exceeded by more than 1e-12.
    pub attained: bool,
}

pub fn bound_check(report: &VisibilityReport, state: &TwoQubitState) -> Result<BoundCheck> {
    let concurrence = concurrence_exact(state)?;
    let max_gap = report.pbar_max - (1.0 + concurrence) / 4.0;
    let min_gap = report.pbar_min - (1.0 - concurrence) / 4.0;
    Ok(BoundCheck {
        concurrence,
        max_gap,
        min_gap,
        sum_residual: report.pbar_max + report.pbar_min - 0.5,
        attained: (-1e-6..=1e-12).contains(&max_gap) && (-1e-12..=1e-6).contains(&min_gap),
    })
}

fn real_state(a: f64, b: f64, c: f64, d: f64) -> Result<TwoQubitState> {
    if ![a, b, c, d].iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite("real coefficient"));
    }
    TwoQubitState::real(a, b, c, d)
}

fn preset_visibility(state: &TwoQubitState, presets: [ProtocolAngles; 2]) -> Result<f64> {
    let p1 = exact_pbar(state, &presets[0])?;
    let p2 = exact_pbar(state, &presets[1])?;
    Ok(visibility_from_extrema(p1.max(p2), p1.min(p2)))
}

/// Visibility of a real-coefficient state from the two fixed settings
/// `2θ₁ = 2θ₂ = π/2` with `Φ₁ = −Φ₂ = π/2` and `Φ₁ = Φ₂ = π/2`.
pub fn preset_real_visibility(a: f64, b: f64, c: f64, d: f64) -> Result<f64> {
    let state = real_state(a, b, c, d)?;
    preset_visibility(
        &state,
        [
            ProtocolAngles::new(FRAC_PI_4, FRAC_PI_4, FRAC_PI_2, -FRAC_PI_2),
            ProtocolAngles::new(FRAC_PI_4, FRAC_PI_4, FRAC_PI_2, FRAC_PI_2),
        ],
    )
}

/// Visibility of `a|00⟩ + d|11⟩` from `2θ₁ = 2θ₂ = π/2` with `Φ₁ = Φ₂ = 0`
/// and with `Φ₁ = π, Φ₂ = 0`. Atom 2 never needs a dispersive phase.
pub fn preset_schmidt_visibility(a: f64, d: f64) -> Result<f64> {
    let state = real_state(a, 0.0, 0.0, d)?;
    preset_visibility(
        &state,
        [
            ProtocolAngles::new(FRAC_PI_4, FRAC_PI_4, 0.0, 0.0),
            ProtocolAngles::new(FRAC_PI_4, FRAC_PI_4, PI, 0.0),
        ],
    )
}

/// Result of the shot-noise pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotReport {
    /// Stage-2 extrema, visibility estimate and its standard error.
    pub report: VisibilityReport,
    pub estimate_max: PbarEstimate,
    pub estimate_min: PbarEstimate,
    pub counts_max: ShotCounts,
    pub counts_min: ShotCounts,
    pub shots_stage1_total: u64,
    pub shots_stage2_total: u64,
    pub seed: u64,
}

impl ShotReport {
    pub fn estimate(&self) -> f64 {
        self.report.visibility
    }

    pub fn std_error(&self) -> f64 {
        self.report.std_error.unwrap_or(0.0)
    }
}

/// First-order standard error of `(M − m)/(M + m)` for independent
/// estimates `M` and `m`.
pub fn visibility_std_error(max: &PbarEstimate, min: &PbarEstimate) -> f64 {
    let sum = max.value + min.value;
    if sum <= 0.0 {
        return 0.0;
    }
    let d_max = 2.0 * min.value / (sum * sum);
    let d_min = -2.0 * max.value / (sum * sum);
    ((d_max * max.std_error).powi(2) + (d_min * min.std_error).powi(2)).sqrt()
}

fn measure(state: &TwoQubitState, angles: &ProtocolAngles, shots: u64, seed: u64) -> Result<ShotCounts> {
    let dist: OutcomeDistribution = distribution_from_coefficients(&apply_protocol(state, angles)?)?;
    sample_shots(&dist, shots, seed)
}

/// Simulated experiment: measure `P̄` at every grid point with
/// `shots_stage1` shots, keep the three best maximum and minimum candidates,
/// re-measure each with `shots_stage2` shots and report the visibility of
/// the best re-measured pair.
///
/// Grid point `i` uses seed `seed + i`; stage-2 candidate `k` uses
/// `seed + grid_len + k`.
pub fn estimate_concurrence_shots(
    state: &TwoQubitState,
    config: &SearchConfig,
    shots_stage1: u64,
    shots_stage2: u64,
    seed: u64,
) -> Result<ShotReport> {
    state.ensure_normalized()?;
    config.validate()?;
    if shots_stage1 < MIN_SHOTS_STAGE1 {
        return Err(Error::InsufficientShots {
            what: "stage 1 (per grid point)",
            required: MIN_SHOTS_STAGE1,
            got: shots_stage1,
        });
    }
    if shots_stage2 < MIN_SHOTS_STAGE2 {
        return Err(Error::InsufficientShots {
            what: "stage 2 (per candidate)",
            required: MIN_SHOTS_STAGE2,
            got: shots_stage2,
        });
    }

    let n = config.grid_len();
    let stage1 = |i: usize| -> Result<f64> {
        let counts = measure(state, &config.grid_point(i), shots_stage1, seed.wrapping_add(i as u64))?;
        Ok(estimate_pbar(&counts)?.value)
    };
    let values: Vec<f64> = if config.parallel {
        (0..n).into_par_iter().map(stage1).collect::<Result<_>>()?
    } else {
        (0..n).map(stage1).collect::<Result<_>>()?
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].total_cmp(&values[i]).then(i.cmp(&j)));
    let top: Vec<usize> = order.iter().copied().take(SHOT_CANDIDATES).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let bottom: Vec<usize> = order.iter().copied().take(SHOT_CANDIDATES).collect();

    let stage2_seed = |k: usize| seed.wrapping_add((n + k) as u64);
    let remeasure = |k: usize, i: usize| -> Result<(usize, ShotCounts, PbarEstimate)> {
        let counts = measure(state, &config.grid_point(i), shots_stage2, stage2_seed(k))?;
        Ok((i, counts, estimate_pbar(&counts)?))
    };
    let maxima = top
        .iter()
        .enumerate()
        .map(|(k, &i)| remeasure(k, i))
        .collect::<Result<Vec<_>>>()?;
    let minima = bottom
        .iter()
        .enumerate()
        .map(|(k, &i)| remeasure(SHOT_CANDIDATES + k, i))
        .collect::<Result<Vec<_>>>()?;

    // first candidate wins ties
    let best_max = maxima
        .iter()
        .copied()
        .reduce(|a, b| if b.2.value > a.2.value { b } else { a })
        .expect("candidates are non-empty");
    let best_min = minima
        .iter()
        .copied()
        .reduce(|a, b| if b.2.value < a.2.value { b } else { a })
        .expect("candidates are non-empty");

    let (imax, counts_max, estimate_max) = best_max;
    let (imin, counts_min, estimate_min) = best_min;
    let candidates = (maxima.len() + minima.len()) as u64;
    Ok(ShotReport {
        report: VisibilityReport {
            pbar_max: estimate_max.value,
            pbar_min: estimate_min.value,
            angles_max: config.grid_point(imax),
            angles_min: config.grid_point(imin),
            visibility: visibility_from_extrema(estimate_max.value, estimate_min.value),
            evaluations: n as u64 + candidates,
            std_error: Some(visibility_std_error(&estimate_max, &estimate_min)),
        },
        estimate_max,
        estimate_min,
        counts_max,
        counts_min,
        shots_stage1_total: n as u64 * shots_stage1,
        shots_stage2_total: candidates * shots_stage2,
        seed,
    })
}

/// Bootstrap standard error of the stage-2 visibility: both count vectors
/// are resampled from their empirical frequencies `resamples` times.
pub fn bootstrap_std_error(
    counts_max: &ShotCounts,
    counts_min: &ShotCounts,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if resamples < 2 {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs at least 2 resamples, got {resamples}"
        )));
    }
    let resample = |counts: &ShotCounts, s: u64| -> Result<f64> {
        let [gg, ge, eg, ee] = counts.frequencies();
        let dist = OutcomeDistribution::new(gg, ge, eg, ee)?;
        Ok(estimate_pbar(&sample_shots(&dist, counts.n_total(), s)?)?.value)
    };
    let draws = (0..resamples)
        .map(|r| {
            let base = seed.wrapping_add(2 * r as u64);
            let max = resample(counts_max, base)?;
            let min = resample(counts_min, base.wrapping_add(1))?;
            Ok(visibility_from_extrema(max, min))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
    Ok(var.sqrt())
}
