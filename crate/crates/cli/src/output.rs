//! CSV and manifest writers. Floats use the shortest round-trip decimal
//! form so repeated runs produce byte-identical data files.

use std::fmt::Write as _;
use std::path::Path;

use comono::algo::IterateLog;
use comono::linalg::Vector;
use comono::ode::Trajectory;

use crate::CliError;

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v}")
    }
}

fn lg(v: f64) -> f64 {
    if v > 0.0 {
        v.log10()
    } else {
        f64::NAN
    }
}

/// Discrete log schema: `n, err, diff, n_diff, yosida, n_yosida,
/// energy_gamma, omega_norm`. Optionally appends an `lg_err` column for
/// figure data.
pub fn discrete_csv(log: &IterateLog, with_lg: bool) -> String {
    let mut out = String::new();
    out.push_str("n,err,diff,n_diff,yosida,n_yosida,energy_gamma,omega_norm");
    if with_lg {
        out.push_str(",lg_err");
    }
    out.push('\n');
    for i in 0..log.len() {
        let n = log.n[i] as f64;
        let cols = [
            n,
            log.err[i],
            log.diff[i],
            n * log.diff[i],
            log.yosida[i],
            n * log.yosida[i],
            log.energy_gamma[i],
            log.omega_norm[i],
        ];
        let mut row: Vec<String> = cols.iter().map(|c| fmt_f64(*c)).collect();
        row[0] = log.n[i].to_string();
        if with_lg {
            row.push(fmt_f64(lg(log.err[i])));
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

/// Extra per-sample columns for trajectory figure data.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryExtras {
    None,
    /// `lg_err, lg_xdot, lg_yosida`
    LogChannels,
    /// raw components `x_i, xdot_i, op_i`
    Components,
}

/// Continuous log schema: `t, err, xdot_norm, t_xdot, yosida, t_yosida,
/// energy_gamma` (the `yosida` column holds the norm of the operator value
/// driving the system).
pub fn trajectory_csv(traj: &Trajectory, zero: &Vector, extras: TrajectoryExtras) -> String {
    let mut out = String::new();
    out.push_str("t,err,xdot_norm,t_xdot,yosida,t_yosida,energy_gamma");
    let dim = traj.samples.first().map_or(0, |s| s.x.dim());
    match extras {
        TrajectoryExtras::None => {}
        TrajectoryExtras::LogChannels => out.push_str(",lg_err,lg_xdot,lg_yosida"),
        TrajectoryExtras::Components => {
            for prefix in ["x", "xdot", "op"] {
                for i in 0..dim {
                    let _ = write!(out, ",{prefix}_{i}");
                }
            }
        }
    }
    out.push('\n');
    for s in &traj.samples {
        let err = s.x.metric_distance(zero);
        let xdot_norm = s.xdot.norm();
        let op_norm = s.op_value.norm();
        let mut row: Vec<String> = [
            s.t,
            err,
            xdot_norm,
            s.t_xdot,
            op_norm,
            s.t_op,
            s.energy_gamma,
        ]
        .iter()
        .map(|c| fmt_f64(*c))
        .collect();
        match extras {
            TrajectoryExtras::None => {}
            TrajectoryExtras::LogChannels => {
                row.push(fmt_f64(lg(err)));
                row.push(fmt_f64(lg(xdot_norm)));
                row.push(fmt_f64(lg(op_norm)));
            }
            TrajectoryExtras::Components => {
                for v in [&s.x, &s.xdot, &s.op_value] {
                    for i in 0..dim {
                        row.push(fmt_f64(v[i]));
                    }
                }
            }
        }
        let _ = writeln!(out, "{}", row.join(","));
    }
    out
}

pub fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Numeric(format!("creating {}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| CliError::Numeric(format!("writing {}: {e}", path.display())))
}

/// Key/value manifest; keys are emitted in the order given (callers keep
/// them sorted within sections so the deterministic part diffs cleanly).
pub struct Manifest {
    lines: Vec<(String, String)>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self::new()
    }
}

impl Manifest {
    pub fn new() -> Self {
        let mut m = Manifest { lines: Vec::new() };
        m.push("library_version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn push_vector(&mut self, key: &str, v: &Vector) {
        let coords: Vec<String> = v.coords().iter().map(|c| fmt_f64(*c)).collect();
        self.push(key, coords.join(" "));
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
