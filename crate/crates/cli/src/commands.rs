//! The `run`, `check`, and `reproduce` commands.

use std::path::Path;
use std::time::Instant;

use comono::algo::{run_with, AlgoParams, IterateLog, Method, RunOptions, StoppingRule};
use comono::linalg::Vector;
use comono::ode::{
    integrate, ConstantDampingField, IntegratorConfig, NewtonInertialField, OdeState, Trajectory,
};
use comono::operator::{check_averaged, check_cocoercivity, comonotone_modulus};
use comono::problems::ProblemInstance;

use crate::config::{Experiment, RunMethod};
use crate::output::{discrete_csv, trajectory_csv, write_file, Manifest, TrajectoryExtras};
use crate::CliError;

fn numeric(e: comono::Error) -> CliError {
    CliError::Numeric(e.to_string())
}

fn run_discrete(
    method: Method,
    experiment: &Experiment,
    params: &AlgoParams,
) -> Result<IterateLog, CliError> {
    let options = RunOptions {
        record_stride: experiment.record_stride,
        anchor: experiment.anchor.clone(),
    };
    run_with(
        method,
        &experiment.problem,
        params,
        &experiment.x0,
        &experiment.stopping,
        &options,
    )
    .map_err(numeric)
}

fn run_ode(
    method: RunMethod,
    experiment: &Experiment,
    params: &AlgoParams,
) -> Result<Trajectory, CliError> {
    let z0 = OdeState::new(experiment.x0.clone(), experiment.v0.clone()).map_err(numeric)?;
    let problem = &experiment.problem;
    match method {
        RunMethod::OdeDs => {
            let field = NewtonInertialField::new(&problem.operator, *params).map_err(numeric)?;
            integrate(&field, &z0, &experiment.integrator, Some(&problem.zero)).map_err(numeric)
        }
        RunMethod::OdeAdly => {
            let field = ConstantDampingField::new(&problem.operator, params.alpha, params.gamma);
            integrate(&field, &z0, &experiment.integrator, Some(&problem.zero)).map_err(numeric)
        }
        RunMethod::Discrete(_) => unreachable!("dispatched by caller"),
    }
}

/// Runs every configured method, writing one CSV per `(problem, method)`
/// and a run manifest. Prints one summary line per method.
pub fn cmd_run(experiment: &Experiment) -> Result<(), CliError> {
    let out_dir = Path::new(&experiment.out_dir);
    let mut manifest = Manifest::new();
    manifest.push("problem", &experiment.problem.name);
    manifest.push("problem_dim", experiment.problem.operator.dim());
    manifest.push("rho", crate::output::fmt_f64(experiment.problem.rho));
    manifest.push(
        "methods",
        experiment
            .methods
            .iter()
            .map(|(m, _)| m.name())
            .collect::<Vec<_>>()
            .join(","),
    );
    manifest.push("seed", experiment.seed);
    manifest.push_vector("x0", &experiment.x0);
    manifest.push_vector("v0", &experiment.v0);
    if let Some(anchor) = &experiment.anchor {
        manifest.push_vector("anchor", anchor);
    }
    if let Some(t) = experiment.stopping.target_tol {
        manifest.push("stopping_target_tol", crate::output::fmt_f64(t));
    }
    if let Some(t) = experiment.stopping.residual_tol {
        manifest.push("stopping_residual_tol", crate::output::fmt_f64(t));
    }
    manifest.push("stopping_max_iter", experiment.stopping.max_iter);
    manifest.push("record_stride", experiment.record_stride);
    let ic = &experiment.integrator;
    manifest.push("integrator_t0", crate::output::fmt_f64(ic.t0));
    manifest.push("integrator_t_end", crate::output::fmt_f64(ic.t_end));
    manifest.push("integrator_rel_tol", crate::output::fmt_f64(ic.rel_tol));
    manifest.push("integrator_abs_tol", crate::output::fmt_f64(ic.abs_tol));
    manifest.push("integrator_samples", ic.sample_count);
    for (method, params) in &experiment.methods {
        let name = method.name();
        manifest.push(
            &format!("params_{name}_alpha"),
            crate::output::fmt_f64(params.alpha),
        );
        manifest.push(
            &format!("params_{name}_beta"),
            crate::output::fmt_f64(params.beta),
        );
        manifest.push(
            &format!("params_{name}_gamma"),
            crate::output::fmt_f64(params.gamma),
        );
        manifest.push(
            &format!("params_{name}_eta"),
            crate::output::fmt_f64(params.eta),
        );
    }

    let total = Instant::now();
    for (method, params) in &experiment.methods {
        let started = Instant::now();
        let file = format!("{}_{}.csv", experiment.problem.name, method.name());
        match method {
            RunMethod::Discrete(m) => {
                let log = run_discrete(*m, experiment, params)?;
                write_file(out_dir, &file, &discrete_csv(&log, false))?;
                println!(
                    "{}: {} steps, stop {}, final err {:e}",
                    method.name(),
                    log.steps,
                    log.stop_reason,
                    log.err.last().copied().unwrap_or(f64::NAN)
                );
            }
            RunMethod::OdeDs | RunMethod::OdeAdly => {
                let traj = run_ode(*method, experiment, params)?;
                write_file(
                    out_dir,
                    &file,
                    &trajectory_csv(&traj, &experiment.problem.zero, TrajectoryExtras::None),
                )?;
                println!(
                    "{}: {} accepted / {} rejected steps, final err {:e}",
                    method.name(),
                    traj.accepted_steps,
                    traj.rejected_steps,
                    traj.last().x.metric_distance(&experiment.problem.zero)
                );
            }
        }
        manifest.push(
            &format!("wall_ms_{}", method.name()),
            started.elapsed().as_millis(),
        );
    }
    manifest.push("wall_ms_total", total.elapsed().as_millis());
    write_file(out_dir, "run_manifest.txt", &manifest.render())?;
    Ok(())
}

/// Prints the parameter-validation table and the operator property suite;
/// `Ok(true)` means everything passed.
pub fn cmd_check(
    problem: &ProblemInstance,
    params: &AlgoParams,
    samples: usize,
    seed: u64,
) -> Result<bool, CliError> {
    println!(
        "problem {} (dim {}, rho {})",
        problem.name,
        problem.operator.dim(),
        problem.rho
    );
    match comonotone_modulus(problem.operator.map()) {
        Ok(m) => println!("comonotonicity modulus {m:.12e}"),
        Err(e) => println!("comonotonicity modulus unavailable: {e}"),
    }
    let report = params.validate(problem.rho);
    print!("{report}");
    let mut ok = report.ok;

    for (name, result) in [
        (
            "cocoercivity",
            check_cocoercivity(&problem.operator, params.eta, samples, seed),
        ),
        (
            "averagedness",
            check_averaged(&problem.operator, params.eta, samples, seed),
        ),
    ] {
        match result {
            Ok(r) if r.is_clean() => {
                println!("PASS  {name:<28} 0 violations over {} samples", r.samples)
            }
            Ok(r) => {
                ok = false;
                println!(
                    "FAIL  {name:<28} {} violations over {} samples",
                    r.violations.len(),
                    r.samples
                );
            }
            Err(e) => {
                ok = false;
                println!("FAIL  {name:<28} {e}");
            }
        }
    }
    Ok(ok)
}

struct FigureRun<'a> {
    problem: &'a ProblemInstance,
    params: AlgoParams,
    x0: Vector,
    v0: Vector,
}

fn figure_trajectory(run: &FigureRun, newton: bool) -> Result<Trajectory, CliError> {
    let z0 = OdeState::new(run.x0.clone(), run.v0.clone()).map_err(numeric)?;
    let config = IntegratorConfig::new(0.1, 100.0);
    if newton {
        let field = NewtonInertialField::new(&run.problem.operator, run.params).map_err(numeric)?;
        integrate(&field, &z0, &config, Some(&run.problem.zero)).map_err(numeric)
    } else {
        let field =
            ConstantDampingField::new(&run.problem.operator, run.params.alpha, run.params.gamma);
        integrate(&field, &z0, &config, Some(&run.problem.zero)).map_err(numeric)
    }
}

/// Emits the plot data behind the built-in figures:
///
/// * `fig1` — fixed 3x3 instance, log-scale error channels of the
///   vanishing-damping system and the constant-damping comparison system.
/// * `fig2` — rotation instance, transient components of the state,
///   velocity, and operator channel of the vanishing-damping system.
/// * `fig3` — fixed 3x3 instance, trajectory components of both systems.
/// * `fig4` — rotation instance, log-scale iteration errors of the four
///   discrete methods under the distance rule at `1e-7`.
pub fn cmd_reproduce(figure: &str, out_dir: &Path) -> Result<(), CliError> {
    match figure {
        "fig1" | "fig3" => {
            let problem = comono::problems::example1();
            let run = FigureRun {
                problem: &problem,
                params: AlgoParams::new(15.0, 10.0, 10.0, 2.0),
                x0: Vector::new(vec![1.0, -10.0, -20.0]).expect("static"),
                v0: Vector::new(vec![1.0, 1.0, 1.0]).expect("static"),
            };
            let extras = if figure == "fig1" {
                TrajectoryExtras::LogChannels
            } else {
                TrajectoryExtras::Components
            };
            for (suffix, newton) in [("ds", true), ("adly", false)] {
                let traj = figure_trajectory(&run, newton)?;
                write_file(
                    out_dir,
                    &format!("{figure}_{suffix}.csv"),
                    &trajectory_csv(&traj, &problem.zero, extras),
                )?;
            }
        }
        "fig2" => {
            let problem = comono::problems::example2();
            let run = FigureRun {
                problem: &problem,
                params: AlgoParams::new(5.0, 2.0, 2.5, 2.0),
                x0: Vector::new(vec![10.0, -10.0]).expect("static"),
                v0: Vector::new(vec![1.0, 1.0]).expect("static"),
            };
            let traj = figure_trajectory(&run, true)?;
            write_file(
                out_dir,
                "fig2_ds.csv",
                &trajectory_csv(&traj, &problem.zero, TrajectoryExtras::Components),
            )?;
        }
        "fig4" => {
            let problem = comono::problems::example2();
            let params = problem.recommended_params.expect("builtin instance");
            let x0 = Vector::new(vec![1.0, 1.0]).expect("static");
            let stop = StoppingRule::target(1e-7);
            for method in Method::ALL {
                // the anchored baselines settle like 1/n and need far more
                // than the default cap; thin the longest log so the file
                // stays plottable (the terminal record is always kept)
                let (stopping, stride) = match method {
                    Method::Hppa => (stop.with_max_iter(100_000_000), 1000),
                    Method::Ohm => (stop.with_max_iter(100_000_000), 1),
                    _ => (stop, 1),
                };
                let options = RunOptions {
                    record_stride: stride,
                    anchor: None,
                };
                let log = run_with(method, &problem, &params, &x0, &stopping, &options)
                    .map_err(numeric)?;
                write_file(
                    out_dir,
                    &format!("fig4_{method}.csv"),
                    &discrete_csv(&log, true),
                )?;
            }
        }
        other => {
            return Err(CliError::Config(format!(
                "unknown figure {other:?}; expected fig1|fig2|fig3|fig4"
            )))
        }
    }
    Ok(())
}
