//! Convergence diagnostics: anchored energies, correction norms, empirical
//! rate slopes, and summability summaries.
//!
//! The energies are quadratic functionals anchored at a known zero `x*`;
//! both are nonnegative whenever the shift parameter satisfies
//! `0 <= b <= alpha - 1` and both are nonincreasing along runs whose
//! parameters pass validation, which is what the run-level tests assert.
//! Little-o rate claims are operationalized two ways: the terminal scaled
//! residual `n * |r_n|` and the tail log-log slope, which for a
//! theorem-conforming run must not exceed `-1` by more than a small margin.

use crate::algo::{discrete_energy_vectors, AlgoParams, IterateLog};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::ode::Trajectory;
use crate::operator::{yosida, ProblemOperator};

fn check_b(b: f64, alpha: f64) -> Result<()> {
    let hi = alpha - 1.0;
    if !(0.0..=hi).contains(&b) {
        return Err(Error::BOutOfRange { b, hi });
    }
    Ok(())
}

fn check_dims(expected: usize, vs: &[&Vector]) -> Result<()> {
    for v in vs {
        if v.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: v.dim(),
            });
        }
    }
    Ok(())
}

/// Discrete anchored energy at index `n`:
/// `1/2 |b (x_n - x*) + (n - alpha)(x_n - x_{n-1})|^2
///  + b(alpha-1-b)/2 |x_n - x*|^2 + (2 alpha - 1 - b)/2 * n |x_n - x_{n-1}|^2`.
pub fn discrete_energy(
    b: f64,
    x_star: &Vector,
    n: u64,
    x_n: &Vector,
    x_prev: &Vector,
    alpha: f64,
) -> Result<f64> {
    check_b(b, alpha)?;
    check_dims(x_star.dim(), &[x_n, x_prev])?;
    Ok(discrete_energy_vectors(b, x_star, n, x_n, x_prev, alpha))
}

/// Continuous anchored energy at time `t`:
/// `1/2 |b (x - x*) + t xdot|^2 + b(alpha-1-b)/2 |x - x*|^2`.
pub fn continuous_energy(
    b: f64,
    x_star: &Vector,
    t: f64,
    x: &Vector,
    xdot: &Vector,
    alpha: f64,
) -> Result<f64> {
    check_b(b, alpha)?;
    check_dims(x_star.dim(), &[x, xdot])?;
    if t <= 0.0 {
        return Err(Error::NonpositiveTime { t });
    }
    let mut anchored = 0.0;
    let mut dist_sq = 0.0;
    for i in 0..x.dim() {
        let dx = x[i] - x_star[i];
        let a = b * dx + t * xdot[i];
        anchored += a * a;
        dist_sq += dx * dx;
    }
    Ok(0.5 * anchored + 0.5 * b * (alpha - 1.0 - b) * dist_sq)
}

/// Correction term of the discrete scheme,
/// `omega_n = (alpha - 1 - gamma)(x_n - x_{n-1}) + beta A_eta(z_n)`.
pub fn omega(
    x_n: &Vector,
    x_prev: &Vector,
    z_n: &Vector,
    params: &AlgoParams,
    op: &ProblemOperator,
) -> Result<Vector> {
    check_dims(op.dim(), &[x_n, x_prev, z_n])?;
    let reg = yosida(op, params.eta, z_n)?;
    let c = params.alpha - 1.0 - params.gamma;
    let mut out = (**x_n).clone();
    out.axpy(-c, x_prev, c);
    out.axpy(params.beta, &reg, 1.0);
    Vector::from_dvector(out)
}

/// Residual channel selector for rate fitting: the step/velocity channel or
/// the operator-value channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateChannel {
    Diff,
    Yosida,
}

/// Least-squares fit of `log r` against `log n` over a tail window.
#[derive(Debug, Clone)]
pub struct RateReport {
    pub slope: f64,
    /// Index bounds of the fitted window.
    pub window: (f64, f64),
    /// `n * r_n` at the last index with a finite positive residual.
    pub terminal_scaled_residual: f64,
    pub points: usize,
}

/// Fits the tail slope of a residual series on a log-log scale.
///
/// The window keeps the last `window_fraction` of the index range measured
/// logarithmically (0.5 keeps indices above the geometric midpoint).
/// Nonpositive or nonfinite residuals are skipped; fewer than 20 usable
/// points in the window is an error.
pub fn rate_slope_points(
    index: &[f64],
    residual: &[f64],
    window_fraction: f64,
) -> Result<RateReport> {
    if index.len() != residual.len() || index.is_empty() {
        return Err(Error::InsufficientData("empty or mismatched series".into()));
    }
    if !(0.0 < window_fraction && window_fraction <= 1.0) {
        return Err(Error::Invalid {
            what: "window fraction",
            why: format!("must lie in (0, 1], got {window_fraction}"),
        });
    }
    let usable: Vec<(f64, f64)> = index
        .iter()
        .zip(residual)
        .filter(|(n, r)| **n > 0.0 && r.is_finite() && **r > 0.0)
        .map(|(n, r)| (*n, *r))
        .collect();
    let (last_n, last_r) = *usable
        .last()
        .ok_or_else(|| Error::InsufficientData("no positive residuals".into()))?;
    let lo = usable[0].0.ln();
    let hi = last_n.ln();
    let cut = lo + (1.0 - window_fraction) * (hi - lo);
    let window: Vec<(f64, f64)> = usable.into_iter().filter(|(n, _)| n.ln() >= cut).collect();
    if window.len() < 20 {
        return Err(Error::InsufficientData(format!(
            "{} points in the tail window, need 20",
            window.len()
        )));
    }
    let m = window.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (n, r) in &window {
        let x = n.ln();
        let y = r.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = m * sxx - sx * sx;
    if denom <= 0.0 {
        return Err(Error::InsufficientData("degenerate index window".into()));
    }
    let slope = (m * sxy - sx * sy) / denom;
    Ok(RateReport {
        slope,
        window: (window[0].0, window[window.len() - 1].0),
        terminal_scaled_residual: last_n * last_r,
        points: window.len(),
    })
}

/// Tail slope of a run channel against the step index.
pub fn rate_slope(
    log: &IterateLog,
    channel: RateChannel,
    window_fraction: f64,
) -> Result<RateReport> {
    let series = match channel {
        RateChannel::Diff => &log.diff,
        RateChannel::Yosida => &log.yosida,
    };
    rate_slope_points(&log.indices(), series, window_fraction)
}

/// Tail slope of a trajectory channel against time.
pub fn trajectory_rate_slope(
    traj: &Trajectory,
    channel: RateChannel,
    window_fraction: f64,
) -> Result<RateReport> {
    let times: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let series: Vec<f64> = traj
        .samples
        .iter()
        .map(|s| match channel {
            RateChannel::Diff => s.xdot.norm(),
            RateChannel::Yosida => s.op_value.norm(),
        })
        .collect();
    rate_slope_points(&times, &series, window_fraction)
}

/// Cumulative sums `S_k = sum_{j<=k} index_j^p * value_j^2`, with nonfinite
/// values contributing zero.
pub fn weighted_partial_sums(index: &[f64], values: &[f64], index_power: i32) -> Vec<f64> {
    let mut acc = 0.0;
    index
        .iter()
        .zip(values)
        .map(|(n, v)| {
            if v.is_finite() {
                acc += n.powi(index_power) * v * v;
            }
            acc
        })
        .collect()
}

/// Final value and tail flatness of one weighted series.
#[derive(Debug, Clone, Copy)]
pub struct SeriesSum {
    pub total: f64,
    /// Relative increase of the partial sum over the final 10% of indices.
    pub flatness: f64,
}

fn series_sum(index: &[f64], sums: &[f64]) -> SeriesSum {
    let total = *sums.last().unwrap_or(&0.0);
    if total <= 0.0 {
        return SeriesSum {
            total,
            flatness: 0.0,
        };
    }
    let n_last = *index.last().unwrap();
    let cutoff = 0.9 * n_last;
    let at_cutoff = index
        .iter()
        .zip(sums)
        .take_while(|(n, _)| **n < cutoff)
        .last()
        .map(|(_, s)| *s)
        .unwrap_or(0.0);
    SeriesSum {
        total,
        flatness: (total - at_cutoff) / total,
    }
}

/// Weighted partial sums of the three series the discrete theory controls:
/// `sum n |x_n - x_{n-1}|^2`, `sum n |A_eta(z_n)|^2`, and
/// `sum n^2 |A_eta(z_n) - A_eta(z_{n+1})|^2` (the last only for `ins` logs,
/// whose records carry the consecutive regularization gap).
#[derive(Debug, Clone)]
pub struct SummabilityReport {
    pub diff: SeriesSum,
    pub yosida: SeriesSum,
    pub yosida_step: Option<SeriesSum>,
}

pub fn summability_report(log: &IterateLog) -> Result<SummabilityReport> {
    if !log.is_complete() {
        return Err(Error::InsufficientData(format!(
            "log recorded every {}-th step; summability needs stride 1",
            log.record_stride
        )));
    }
    if log.len() < 2 {
        return Err(Error::InsufficientData("fewer than 2 records".into()));
    }
    let index = log.indices();
    let diff = series_sum(&index, &weighted_partial_sums(&index, &log.diff, 1));
    let yos = series_sum(&index, &weighted_partial_sums(&index, &log.yosida, 1));
    // yosida_step[j] = |Y(n_j) - Y(n_j - 1)|, so weight by (n_j - 1)^2.
    let shifted: Vec<f64> = index.iter().map(|n| n - 1.0).collect();
    let step_sums = weighted_partial_sums(&shifted, &log.yosida_step, 2);
    let yosida_step = if log.yosida_step.iter().any(|v| v.is_finite()) {
        Some(series_sum(&index, &step_sums))
    } else {
        None
    };
    Ok(SummabilityReport {
        diff,
        yosida: yos,
        yosida_step,
    })
}
