//! Run-level convergence invariants of the discrete schemes on the shipped
//! instances, plus self-recorded regression baselines from the first
//! verified runs.

use comono::algo::{run, run_with, AlgoParams, Method, RunOptions, StopReason, StoppingRule};
use comono::diagnostics::{rate_slope, summability_report, weighted_partial_sums, RateChannel};
use comono::linalg::Vector;
use comono::operator::yosida;
use comono::problems::{example1, example2, ProblemInstance};

fn ones() -> Vector {
    Vector::new(vec![1.0, 1.0]).unwrap()
}

fn reference_run() -> comono::algo::IterateLog {
    let problem = example2();
    let params = problem.recommended_params.unwrap();
    run(
        Method::Ins,
        &problem,
        &params,
        &ones(),
        &StoppingRule::target(1e-7),
    )
    .unwrap()
}

#[test]
fn frozen_iteration_counts_on_the_rotation_instance() {
    // Regression baselines recorded from the first verified runs; all four
    // methods share the stopping rule |x_n - x*| <= 1e-7 from x0 = (1, 1).
    let problem = example2();
    let params = problem.recommended_params.unwrap();
    let stop = StoppingRule::target(1e-7);

    let ins = run(Method::Ins, &problem, &params, &ones(), &stop).unwrap();
    assert_eq!(ins.stop_reason, StopReason::TargetTol);
    assert_eq!(ins.steps, 221);

    let tan = run(Method::Tan, &problem, &params, &ones(), &stop).unwrap();
    assert_eq!(tan.stop_reason, StopReason::TargetTol);
    assert_eq!(tan.steps, 845);

    let opts = RunOptions {
        record_stride: 1000,
        anchor: None,
    };
    let ohm = run_with(
        Method::Ohm,
        &problem,
        &params,
        &ones(),
        &stop.with_max_iter(100_000_000),
        &opts,
    )
    .unwrap();
    assert_eq!(ohm.stop_reason, StopReason::TargetTol);
    assert_eq!(ohm.steps, 10_699);

    let hppa = run_with(
        Method::Hppa,
        &problem,
        &params,
        &ones(),
        &stop.with_max_iter(100_000_000),
        &opts,
    )
    .unwrap();
    assert_eq!(hppa.stop_reason, StopReason::TargetTol);
    assert_eq!(hppa.steps, 12_747_549);

    // the extrapolated scheme needs no more steps than any baseline
    for (name, steps) in [("tan", tan.steps), ("ohm", ohm.steps), ("hppa", hppa.steps)] {
        assert!(ins.steps <= steps, "ins {} vs {name} {steps}", ins.steps);
    }
}

#[test]
fn scaled_channels_fall_below_threshold_before_termination() {
    let log = reference_run();
    let last = log.len() - 1;
    // terminal record: diff is defined, the evaluation channels sit one
    // record earlier
    let n_term = log.n[last] as f64;
    assert!(
        n_term * log.diff[last] <= 1e-4,
        "n*diff = {}",
        n_term * log.diff[last]
    );
    let n_eval = log.n[last - 1] as f64;
    assert!(
        n_eval * log.yosida[last - 1] <= 1e-4,
        "n*yosida = {}",
        n_eval * log.yosida[last - 1]
    );
    // both scaled channels dip below the threshold strictly before the run ends
    let first_diff = log
        .n
        .iter()
        .zip(&log.diff)
        .find(|(n, d)| (**n as f64) * **d < 1e-4)
        .map(|(n, _)| *n)
        .unwrap();
    let first_yos = log
        .n
        .iter()
        .zip(&log.yosida)
        .find(|(n, y)| y.is_finite() && (**n as f64) * **y < 1e-4)
        .map(|(n, _)| *n)
        .unwrap();
    assert!(first_diff < log.steps && first_yos < log.steps);
}

#[test]
fn tail_slopes_certify_superlinear_channel_decay() {
    let log = reference_run();
    let diff = rate_slope(&log, RateChannel::Diff, 0.5).unwrap();
    let yos = rate_slope(&log, RateChannel::Yosida, 0.5).unwrap();
    assert!(diff.slope <= -0.9, "diff slope {}", diff.slope);
    assert!(yos.slope <= -0.9, "yosida slope {}", yos.slope);
    // regression baselines (first verified run): -6.751 and -6.905
    assert!(
        (diff.slope - -6.751).abs() < 0.05,
        "diff slope drifted to {}",
        diff.slope
    );
    assert!(
        (yos.slope - -6.905).abs() < 0.05,
        "yosida slope drifted to {}",
        yos.slope
    );
}

#[test]
fn partial_sums_are_nondecreasing_bounded_and_flat() {
    let log = reference_run();
    let idx = log.indices();
    for (values, power) in [(&log.diff, 1), (&log.yosida, 1)] {
        let sums = weighted_partial_sums(&idx, values, power);
        assert!(sums.windows(2).all(|w| w[1] >= w[0]));
        assert!(sums.last().unwrap().is_finite());
    }
    let report = summability_report(&log).unwrap();
    assert!(
        report.diff.flatness < 1e-12,
        "diff flatness {}",
        report.diff.flatness
    );
    assert!(
        report.yosida.flatness < 1e-12,
        "yosida flatness {}",
        report.yosida.flatness
    );
    let step = report
        .yosida_step
        .expect("ins logs carry the consecutive gap");
    assert!(step.flatness < 1e-12, "gap flatness {}", step.flatness);
}

#[test]
fn correction_term_decays_quadratically() {
    let log = reference_run();
    // last record with a defined omega (the terminal record holds NaN)
    let (n, w) = log
        .n
        .iter()
        .zip(&log.omega_norm)
        .rfind(|(_, w)| w.is_finite())
        .unwrap();
    let scaled = (*n as f64).powi(2) * w * w;
    assert!(scaled < 1e-8, "terminal n^2 |omega|^2 = {scaled:.3e}");
}

#[test]
fn anchored_energy_is_nonincreasing_past_alpha() {
    let log = reference_run();
    let alpha = 10.0;
    for i in 0..log.len() - 1 {
        if (log.n[i] as f64) > alpha {
            let (e0, e1) = (log.energy_gamma[i], log.energy_gamma[i + 1]);
            assert!(
                e1 <= e0 + 1e-12 * (1.0 + e0),
                "energy rose from {e0} to {e1} at n = {}",
                log.n[i]
            );
        }
    }
}

fn final_regularization_norm(problem: &ProblemInstance, params: &AlgoParams, x0: &Vector) -> f64 {
    let log = run(
        Method::Ins,
        problem,
        params,
        x0,
        &StoppingRule::target(1e-7),
    )
    .unwrap();
    assert_eq!(log.stop_reason, StopReason::TargetTol);
    yosida(&problem.operator, params.eta, &log.final_x)
        .unwrap()
        .norm()
}

#[test]
fn final_iterate_is_a_near_zero_on_every_shipped_instance() {
    let p1 = example1();
    let x0 = Vector::new(vec![1.0, -10.0, -20.0]).unwrap();
    let r = final_regularization_norm(&p1, &p1.recommended_params.unwrap(), &x0);
    assert!(r <= 1e-6, "example1 residual {r:.3e}");

    let p2 = example2();
    let r = final_regularization_norm(&p2, &p2.recommended_params.unwrap(), &ones());
    assert!(r <= 1e-6, "example2 residual {r:.3e}");
}

#[test]
fn distance_to_the_zero_settles() {
    let log = reference_run();
    let tail_start = log.len() - log.len() / 10;
    let tail = &log.err[tail_start..];
    let max = tail.iter().cloned().fold(f64::MIN, f64::max);
    let min = tail.iter().cloned().fold(f64::MAX, f64::min);
    assert!(max - min < 1e-6, "distance oscillates by {}", max - min);
}
