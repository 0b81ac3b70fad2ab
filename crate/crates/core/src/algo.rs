//! Discrete iterations for the inclusion problem `0 in A(x)`.
//!
//! Four methods share one driver:
//!
//! * `ins` — inertial scheme that evaluates the Yosida regularization at a
//!   velocity-extrapolated point:
//!   `y_n = x_n + (1 - alpha/n)(x_n - x_{n-1})`,
//!   `z_n = x_n + (n/gamma)(x_n - x_{n-1})`,
//!   `x_{n+1} = y_n - (beta/n) A_eta(z_n)`.
//! * `tan` — inertial baseline with an anchor sequence and a relaxed
//!   resolvent step at index `eta + 1`.
//! * `hppa` — Halpern proximal point: anchored averaging of the resolvent.
//! * `ohm` — anchored iteration on the relaxed reflection of the resolvent;
//!   the relaxation weight `2(rho + eta)/eta` keeps the reflected map
//!   nonexpansive for every admissible `(rho, eta)` and reduces to the
//!   classical `2 J - I` when `rho = 0`.
//!
//! Each step performs exactly one resolvent solve; the driver asserts nothing
//! itself but the operator's evaluation counter makes the discipline testable.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::operator::{ProblemOperator, ResolventSolver};
use crate::problems::ProblemInstance;

/// Coefficient tuple `(alpha, beta, gamma, eta)` shared by the discrete
/// schemes and the continuous dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgoParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl AlgoParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64, eta: f64) -> Self {
        AlgoParams {
            alpha,
            beta,
            gamma,
            eta,
        }
    }

    pub fn validate(&self, rho: f64) -> ValidationReport {
        validate_params(self, rho)
    }
}

/// One admissibility condition with its signed margin (positive means
/// satisfied, with that much room).
#[derive(Debug, Clone)]
pub struct ConditionCheck {
    pub name: &'static str,
    pub margin: f64,
    pub ok: bool,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub conditions: Vec<ConditionCheck>,
    pub ok: bool,
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.conditions {
            writeln!(
                f,
                "{}  {:<28} margin {:+.6e}",
                if c.ok { "PASS" } else { "FAIL" },
                c.name,
                c.margin
            )?;
        }
        Ok(())
    }
}

/// Checks the parameter conditions that the convergence theory of the `ins`
/// scheme places on `(alpha, beta, gamma, eta)` for a `rho`-comonotone
/// operator: `eta > max(-2 rho, 0)`, `alpha > gamma + 2`,
/// `gamma > beta / (2(rho + eta))`, and `beta, gamma > 0`.
pub fn validate_params(params: &AlgoParams, rho: f64) -> ValidationReport {
    let mut conditions = Vec::with_capacity(5);
    let mut push = |name: &'static str, margin: f64| {
        conditions.push(ConditionCheck {
            name,
            margin,
            ok: margin > 0.0,
        });
    };
    push("eta > max(-2*rho, 0)", params.eta - (-2.0 * rho).max(0.0));
    push("alpha > gamma + 2", params.alpha - params.gamma - 2.0);
    let gamma_margin = if rho + params.eta > 0.0 {
        params.gamma - params.beta / (2.0 * (rho + params.eta))
    } else {
        f64::NEG_INFINITY
    };
    push("gamma > beta/(2(rho+eta))", gamma_margin);
    push("beta > 0", params.beta);
    push("gamma > 0", params.gamma);
    let ok = conditions.iter().all(|c| c.ok);
    ValidationReport { conditions, ok }
}

/// State of the `ins` recursion: the pair `(x_{n-1}, x_n)` at step index `n`.
#[derive(Debug, Clone)]
pub struct IterState {
    pub n: u64,
    pub x_prev: Vector,
    pub x_cur: Vector,
}

impl IterState {
    /// Duplicated initialization `x_{n-1} = x_n = x0` at `n = 1`.
    pub fn start(x0: &Vector) -> Self {
        IterState {
            n: 1,
            x_prev: x0.clone(),
            x_cur: x0.clone(),
        }
    }
}

/// State of the `tan` recursion, which also carries the previous anchor
/// point `y_{k-1}`.
#[derive(Debug, Clone)]
pub struct TanState {
    pub k: u64,
    pub x_prev: Vector,
    pub x_cur: Vector,
    pub y_prev: Vector,
}

impl TanState {
    pub fn start(x0: &Vector) -> Self {
        TanState {
            k: 1,
            x_prev: x0.clone(),
            x_cur: x0.clone(),
            y_prev: x0.clone(),
        }
    }
}

pub(crate) struct StepBufs {
    pub a: DVector<f64>,
    pub b: DVector<f64>,
    pub scratch: DVector<f64>,
}

impl StepBufs {
    pub fn new(dim: usize) -> Self {
        StepBufs {
            a: DVector::zeros(dim),
            b: DVector::zeros(dim),
            scratch: DVector::zeros(dim),
        }
    }
}

/// Advances `(x_prev, x_cur)` at step `n`; on return `bufs.b` holds the
/// regularization value `A_eta(z_n)` and the result is its norm.
pub(crate) fn ins_kernel(
    x_prev: &DVector<f64>,
    x_cur: &DVector<f64>,
    n: u64,
    params: &AlgoParams,
    solver: &ResolventSolver,
    bufs: &mut StepBufs,
    x_next: &mut DVector<f64>,
) -> Result<f64> {
    let nf = n as f64;
    // z_n = x_n + (n/gamma)(x_n - x_{n-1})
    bufs.a.copy_from(x_cur);
    bufs.a.axpy(nf / params.gamma, x_cur, 1.0);
    bufs.a.axpy(-nf / params.gamma, x_prev, 1.0);
    solver.regularization_into(&bufs.a, &mut bufs.b, &mut bufs.scratch)?;
    // x_{n+1} = x_n + (1 - alpha/n)(x_n - x_{n-1}) - (beta/n) A_eta(z_n)
    let momentum = 1.0 - params.alpha / nf;
    x_next.copy_from(x_cur);
    x_next.axpy(momentum, x_cur, 1.0);
    x_next.axpy(-momentum, x_prev, 1.0);
    x_next.axpy(-params.beta / nf, &bufs.b, 1.0);
    Ok(bufs.b.norm())
}

/// Advances the `tan` recursion at step `k`; on return `bufs.a` holds the
/// extrapolated point `y_k` and the result is `|A_{eta+1}(y_k)|`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn tan_kernel(
    x_prev: &DVector<f64>,
    x_cur: &DVector<f64>,
    y_prev: &DVector<f64>,
    k: u64,
    params: &AlgoParams,
    solver: &ResolventSolver,
    bufs: &mut StepBufs,
    x_next: &mut DVector<f64>,
) -> Result<f64> {
    let kf = k as f64;
    let kappa = params.eta + 1.0;
    // y_k = x_k + (1 - alpha/k)(x_k - x_{k-1}) + (1 - beta/k)(y_{k-1} - x_k)
    let c1 = 1.0 - params.alpha / kf;
    let c2 = 1.0 - params.beta / kf;
    bufs.a.copy_from(x_cur);
    bufs.a.axpy(c1, x_cur, 1.0);
    bufs.a.axpy(-c1, x_prev, 1.0);
    bufs.a.axpy(c2, y_prev, 1.0);
    bufs.a.axpy(-c2, x_cur, 1.0);
    solver.solve_into(&bufs.a, &mut bufs.b, &mut bufs.scratch)?;
    // x_{k+1} = (1 - 1/(eta+1)) y_k + (1/(eta+1)) J_{eta+1}(y_k)
    x_next.copy_from(&bufs.a);
    *x_next *= 1.0 - 1.0 / kappa;
    x_next.axpy(1.0 / kappa, &bufs.b, 1.0);
    Ok(bufs.a.metric_distance(&bufs.b) / kappa)
}

/// One anchored resolvent step `w * anchor + (1 - w) J(x)`; returns the
/// regularization norm `|x - J(x)| / index`.
pub(crate) fn hppa_kernel(
    x_cur: &DVector<f64>,
    anchor: &DVector<f64>,
    weight: f64,
    solver: &ResolventSolver,
    bufs: &mut StepBufs,
    x_next: &mut DVector<f64>,
) -> Result<f64> {
    solver.solve_into(x_cur, &mut bufs.b, &mut bufs.scratch)?;
    x_next.copy_from(&bufs.b);
    *x_next *= 1.0 - weight;
    x_next.axpy(weight, anchor, 1.0);
    Ok(x_cur.metric_distance(&bufs.b) / solver.eta())
}

/// One anchored step on the relaxed reflection
/// `T = (1 - lambda) I + lambda J` with `lambda = 2(rho + eta)/eta`.
pub(crate) fn ohm_kernel(
    x_cur: &DVector<f64>,
    anchor: &DVector<f64>,
    weight: f64,
    lambda: f64,
    solver: &ResolventSolver,
    bufs: &mut StepBufs,
    x_next: &mut DVector<f64>,
) -> Result<f64> {
    solver.solve_into(x_cur, &mut bufs.b, &mut bufs.scratch)?;
    // a = T x = x + lambda (J x - x)
    bufs.a.copy_from(x_cur);
    bufs.a.axpy(lambda, &bufs.b, 1.0);
    bufs.a.axpy(-lambda, x_cur, 1.0);
    x_next.copy_from(&bufs.a);
    *x_next *= 1.0 - weight;
    x_next.axpy(weight, anchor, 1.0);
    Ok(x_cur.metric_distance(&bufs.b) / solver.eta())
}

/// One step of the `ins` recursion.
pub fn step_ins(state: &IterState, params: &AlgoParams, op: &ProblemOperator) -> Result<IterState> {
    let solver = op.resolvent_solver(params.eta)?;
    let mut bufs = StepBufs::new(op.dim());
    let mut x_next = DVector::zeros(op.dim());
    ins_kernel(
        &state.x_prev,
        &state.x_cur,
        state.n,
        params,
        &solver,
        &mut bufs,
        &mut x_next,
    )?;
    Ok(IterState {
        n: state.n + 1,
        x_prev: state.x_cur.clone(),
        x_cur: Vector::from_dvector(x_next)?,
    })
}

/// One step of the `tan` recursion (resolvent index `eta + 1`).
pub fn step_tan(state: &TanState, params: &AlgoParams, op: &ProblemOperator) -> Result<TanState> {
    let solver = op.resolvent_solver(params.eta + 1.0)?;
    let mut bufs = StepBufs::new(op.dim());
    let mut x_next = DVector::zeros(op.dim());
    tan_kernel(
        &state.x_prev,
        &state.x_cur,
        &state.y_prev,
        state.k,
        params,
        &solver,
        &mut bufs,
        &mut x_next,
    )?;
    Ok(TanState {
        k: state.k + 1,
        x_prev: state.x_cur.clone(),
        x_cur: Vector::from_dvector(x_next)?,
        y_prev: Vector::from_dvector(bufs.a)?,
    })
}

/// One Halpern proximal point step
/// `x_{n+1} = anchor/(n+1) + (1 - 1/(n+1)) J_{gamma_n}(x_n)`.
pub fn step_hppa(
    x: &Vector,
    anchor: &Vector,
    gamma_n: f64,
    n: u64,
    op: &ProblemOperator,
) -> Result<Vector> {
    let solver = op.resolvent_solver(gamma_n)?;
    let mut bufs = StepBufs::new(op.dim());
    let mut x_next = DVector::zeros(op.dim());
    hppa_kernel(
        x,
        anchor,
        1.0 / (n as f64 + 1.0),
        &solver,
        &mut bufs,
        &mut x_next,
    )?;
    Vector::from_dvector(x_next)
}

/// One anchored step on the relaxed reflected resolvent
/// `x_{n+1} = anchor/(n+1) + (1 - 1/(n+1)) ((1 - lambda) x_n + lambda J_eta(x_n))`
/// with `lambda = 2(rho + eta)/eta`.
pub fn step_ohm(
    x: &Vector,
    anchor: &Vector,
    n: u64,
    params: &AlgoParams,
    op: &ProblemOperator,
) -> Result<Vector> {
    let solver = op.resolvent_solver(params.eta)?;
    let lambda = 2.0 * (op.rho() + params.eta) / params.eta;
    let mut bufs = StepBufs::new(op.dim());
    let mut x_next = DVector::zeros(op.dim());
    ohm_kernel(
        x,
        anchor,
        1.0 / (n as f64 + 1.0),
        lambda,
        &solver,
        &mut bufs,
        &mut x_next,
    )?;
    Vector::from_dvector(x_next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Ins,
    Tan,
    Hppa,
    Ohm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ins, Method::Tan, Method::Hppa, Method::Ohm];
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Ins => "ins",
            Method::Tan => "tan",
            Method::Hppa => "hppa",
            Method::Ohm => "ohm",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ins" => Ok(Method::Ins),
            "tan" => Ok(Method::Tan),
            "hppa" => Ok(Method::Hppa),
            "ohm" => Ok(Method::Ohm),
            other => Err(Error::Invalid {
                what: "method",
                why: format!("unknown method {other:?}; expected ins|tan|hppa|ohm"),
            }),
        }
    }
}

/// Combined stopping rule; the first satisfied rule wins, evaluated after
/// each full step. Distance and residual rules are optional, the iteration
/// cap always applies.
#[derive(Debug, Clone, Copy)]
pub struct StoppingRule {
    /// Stop once `|x - x*| <= tol` (requires the problem's known zero).
    pub target_tol: Option<f64>,
    /// Stop once the step's regularization norm falls to `tol`.
    pub residual_tol: Option<f64>,
    pub max_iter: u64,
}

pub const DEFAULT_MAX_ITER: u64 = 1_000_000;

impl StoppingRule {
    pub fn target(tol: f64) -> Self {
        StoppingRule {
            target_tol: Some(tol),
            residual_tol: None,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn residual(tol: f64) -> Self {
        StoppingRule {
            target_tol: None,
            residual_tol: Some(tol),
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn max_iter(n: u64) -> Self {
        StoppingRule {
            target_tol: None,
            residual_tol: None,
            max_iter: n,
        }
    }

    pub fn with_max_iter(mut self, n: u64) -> Self {
        self.max_iter = n;
        self
    }
}

impl Default for StoppingRule {
    /// Distance rule at `1e-7`, the setting used by the shipped problems
    /// (all of which have known zeros). Use [`StoppingRule::residual`] at
    /// `1e-9` when the zero is not known.
    fn default() -> Self {
        StoppingRule::target(1e-7)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    TargetTol,
    ResidualTol,
    MaxIter,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::TargetTol => "target-tol",
            StopReason::ResidualTol => "residual-tol",
            StopReason::MaxIter => "max-iter",
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Store every `record_stride`-th step (the first step and any terminal
    /// record are always stored). Summability diagnostics need stride 1.
    pub record_stride: u64,
    /// Anchor for the Halpern-type methods; defaults to the initial point.
    pub anchor: Option<Vector>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            record_stride: 1,
            anchor: None,
        }
    }
}

/// Per-step channel log of a run.
///
/// Record `j` describes step `n[j]` (1-based, consecutive): the iterate the
/// step departs from, its distance to the previous iterate (`diff`), the
/// norm of the regularization value the step evaluates (`yosida`), the
/// anchored energy at `b = gamma` (`energy_gamma`), and for `ins` the
/// correction norm `omega_norm` and the consecutive regularization gap
/// `yosida_step`. When a tolerance rule fires, one terminal record holds the
/// final iterate with `NaN` in the evaluation-bound channels.
#[derive(Debug, Clone)]
pub struct IterateLog {
    pub method: Method,
    pub n: Vec<u64>,
    pub err: Vec<f64>,
    pub diff: Vec<f64>,
    pub yosida: Vec<f64>,
    pub energy_gamma: Vec<f64>,
    pub omega_norm: Vec<f64>,
    pub yosida_step: Vec<f64>,
    pub stop_reason: StopReason,
    /// Number of steps performed (equals the resolvent solves consumed).
    pub steps: u64,
    pub final_x: Vector,
    pub record_stride: u64,
}

impl IterateLog {
    pub fn len(&self) -> usize {
        self.n.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n.is_empty()
    }

    /// True when every step was recorded.
    pub fn is_complete(&self) -> bool {
        self.record_stride == 1
    }

    /// Index values as floats, for slope fitting.
    pub fn indices(&self) -> Vec<f64> {
        self.n.iter().map(|&n| n as f64).collect()
    }
}

struct LogBuilder {
    method: Method,
    stride: u64,
    n: Vec<u64>,
    err: Vec<f64>,
    diff: Vec<f64>,
    yosida: Vec<f64>,
    energy_gamma: Vec<f64>,
    omega_norm: Vec<f64>,
    yosida_step: Vec<f64>,
}

impl LogBuilder {
    fn new(method: Method, stride: u64, max_iter: u64) -> Self {
        let cap = ((max_iter / stride).saturating_add(2) as usize).min(1 << 20);
        LogBuilder {
            method,
            stride,
            n: Vec::with_capacity(cap),
            err: Vec::with_capacity(cap),
            diff: Vec::with_capacity(cap),
            yosida: Vec::with_capacity(cap),
            energy_gamma: Vec::with_capacity(cap),
            omega_norm: Vec::with_capacity(cap),
            yosida_step: Vec::with_capacity(cap),
        }
    }

    fn due(&self, step: u64) -> bool {
        (step - 1).is_multiple_of(self.stride)
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        n: u64,
        err: f64,
        diff: f64,
        yosida: f64,
        energy: f64,
        omega: f64,
        ystep: f64,
    ) {
        self.n.push(n);
        self.err.push(err);
        self.diff.push(diff);
        self.yosida.push(yosida);
        self.energy_gamma.push(energy);
        self.omega_norm.push(omega);
        self.yosida_step.push(ystep);
    }

    fn finish(self, stop_reason: StopReason, steps: u64, final_x: Vector) -> IterateLog {
        IterateLog {
            method: self.method,
            n: self.n,
            err: self.err,
            diff: self.diff,
            yosida: self.yosida,
            energy_gamma: self.energy_gamma,
            omega_norm: self.omega_norm,
            yosida_step: self.yosida_step,
            stop_reason,
            steps,
            final_x,
            record_stride: self.stride,
        }
    }
}

/// Runs a method on a problem instance until the stopping rule fires.
///
/// Initialization duplicates the starting point (`x_{n-1} = x_n = x0`, and
/// the `tan` anchor starts at `x0`); the Halpern methods anchor at `x0`
/// unless [`RunOptions::anchor`] overrides it. Deterministic given its
/// inputs.
pub fn run(
    method: Method,
    problem: &ProblemInstance,
    params: &AlgoParams,
    x0: &Vector,
    stopping: &StoppingRule,
) -> Result<IterateLog> {
    run_with(
        method,
        problem,
        params,
        x0,
        stopping,
        &RunOptions::default(),
    )
}

pub fn run_with(
    method: Method,
    problem: &ProblemInstance,
    params: &AlgoParams,
    x0: &Vector,
    stopping: &StoppingRule,
    options: &RunOptions,
) -> Result<IterateLog> {
    let op = &problem.operator;
    if x0.dim() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: x0.dim(),
        });
    }
    if options.record_stride == 0 {
        return Err(Error::Invalid {
            what: "record stride",
            why: "must be at least 1".into(),
        });
    }
    if stopping.max_iter == 0 {
        return Err(Error::Invalid {
            what: "stopping rule",
            why: "max_iter must be at least 1".into(),
        });
    }
    let anchor = options.anchor.as_ref().unwrap_or(x0);
    if anchor.dim() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            got: anchor.dim(),
        });
    }

    let dim = op.dim();
    let zero = &problem.zero;
    let solver = match method {
        Method::Tan => op.resolvent_solver(params.eta + 1.0)?,
        _ => op.resolvent_solver(params.eta)?,
    };
    let lambda = 2.0 * (op.rho() + params.eta) / params.eta;

    let mut log = LogBuilder::new(method, options.record_stride, stopping.max_iter);
    let mut bufs = StepBufs::new(dim);
    let mut x_prev: DVector<f64> = (**x0).clone();
    let mut x_cur: DVector<f64> = (**x0).clone();
    let mut x_next: DVector<f64> = DVector::zeros(dim);
    let mut y_prev: DVector<f64> = (**x0).clone();
    let mut reg_prev: DVector<f64> = DVector::zeros(dim);
    // The two-point methods carry a well-defined previous iterate from the
    // duplicated start; the Halpern methods do not.
    let two_point = matches!(method, Method::Ins | Method::Tan);
    let energy_at = |n: u64, cur: &DVector<f64>, prev: &DVector<f64>| -> f64 {
        discrete_energy_raw(params.gamma, zero, n, cur, prev, params.alpha)
    };

    let mut n: u64 = 1;
    let (stop_reason, steps) = loop {
        let reg_norm = match method {
            Method::Ins => ins_kernel(&x_prev, &x_cur, n, params, &solver, &mut bufs, &mut x_next)?,
            Method::Tan => tan_kernel(
                &x_prev,
                &x_cur,
                &y_prev,
                n,
                params,
                &solver,
                &mut bufs,
                &mut x_next,
            )?,
            Method::Hppa => hppa_kernel(
                &x_cur,
                anchor,
                1.0 / n as f64,
                &solver,
                &mut bufs,
                &mut x_next,
            )?,
            Method::Ohm => ohm_kernel(
                &x_cur,
                anchor,
                1.0 / n as f64,
                lambda,
                &solver,
                &mut bufs,
                &mut x_next,
            )?,
        };

        if log.due(n) {
            let defined_prev = two_point || n > 1;
            let err = x_cur.metric_distance(zero);
            let diff = if defined_prev {
                x_cur.metric_distance(&x_prev)
            } else {
                f64::NAN
            };
            let energy = if defined_prev {
                energy_at(n, &x_cur, &x_prev)
            } else {
                f64::NAN
            };
            let (omega, ystep) = if method == Method::Ins {
                // omega_n = (alpha - 1 - gamma)(x_n - x_{n-1}) + beta A_eta(z_n)
                bufs.scratch.copy_from(&bufs.b);
                bufs.scratch *= params.beta;
                let c = params.alpha - 1.0 - params.gamma;
                bufs.scratch.axpy(c, &x_cur, 1.0);
                bufs.scratch.axpy(-c, &x_prev, 1.0);
                let ystep = if n > 1 {
                    bufs.b.metric_distance(&reg_prev)
                } else {
                    f64::NAN
                };
                (bufs.scratch.norm(), ystep)
            } else {
                (f64::NAN, f64::NAN)
            };
            log.push(n, err, diff, reg_norm, energy, omega, ystep);
        }
        if method == Method::Ins {
            reg_prev.copy_from(&bufs.b);
        }

        // rule check after the full step
        let err_next = x_next.metric_distance(zero);
        let fired = match (stopping.target_tol, stopping.residual_tol) {
            (Some(tol), _) if err_next <= tol => Some(StopReason::TargetTol),
            (_, Some(tol)) if reg_norm <= tol => Some(StopReason::ResidualTol),
            _ => None,
        };
        if let Some(reason) = fired {
            let diff = x_next.metric_distance(&x_cur);
            let energy = energy_at(n + 1, &x_next, &x_cur);
            log.push(n + 1, err_next, diff, f64::NAN, energy, f64::NAN, f64::NAN);
            break (reason, n);
        }
        if n == stopping.max_iter {
            break (StopReason::MaxIter, n);
        }

        if two_point {
            std::mem::swap(&mut x_prev, &mut x_cur);
            std::mem::swap(&mut x_cur, &mut x_next);
            if method == Method::Tan {
                std::mem::swap(&mut y_prev, &mut bufs.a);
            }
        } else {
            std::mem::swap(&mut x_prev, &mut x_cur);
            std::mem::swap(&mut x_cur, &mut x_next);
        }
        n += 1;
    };

    Ok(log.finish(stop_reason, steps, Vector::from_dvector(x_next)?))
}

// Energy formula on raw storage; the public checked version lives in
// `diagnostics`.
fn discrete_energy_raw(
    b: f64,
    x_star: &Vector,
    n: u64,
    x_n: &DVector<f64>,
    x_prev: &DVector<f64>,
    alpha: f64,
) -> f64 {
    let nf = n as f64;
    let mut anchored = 0.0;
    let mut dist_sq = 0.0;
    let mut diff_sq = 0.0;
    for i in 0..x_n.len() {
        let dx = x_n[i] - x_star[i];
        let dd = x_n[i] - x_prev[i];
        let a = b * dx + (nf - alpha) * dd;
        anchored += a * a;
        dist_sq += dx * dx;
        diff_sq += dd * dd;
    }
    0.5 * anchored
        + 0.5 * b * (alpha - 1.0 - b) * dist_sq
        + 0.5 * (2.0 * alpha - 1.0 - b) * nf * diff_sq
}

pub(crate) fn discrete_energy_vectors(
    b: f64,
    x_star: &Vector,
    n: u64,
    x_n: &Vector,
    x_prev: &Vector,
    alpha: f64,
) -> f64 {
    discrete_energy_raw(b, x_star, n, x_n, x_prev, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::LinearMap;
    use crate::problems;
    use approx::assert_relative_eq;

    fn recommended_params_ex2() -> AlgoParams {
        AlgoParams::new(10.0, 4.0, 7.0, 2.0)
    }

    fn ones() -> Vector {
        Vector::new(vec![1.0, 1.0]).unwrap()
    }

    // 2x2 inverse by adjugate, independent of the LU path.
    fn resolvent_2x2(a: &LinearMap, eta: f64, x: [f64; 2]) -> [f64; 2] {
        let m = [
            [1.0 + eta * a.entry(0, 0), eta * a.entry(0, 1)],
            [eta * a.entry(1, 0), 1.0 + eta * a.entry(1, 1)],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [
            (m[1][1] * x[0] - m[0][1] * x[1]) / det,
            (-m[1][0] * x[0] + m[0][0] * x[1]) / det,
        ]
    }

    #[test]
    fn recommended_parameter_set_is_admissible() {
        let report = validate_params(&recommended_params_ex2(), -0.5);
        assert!(report.ok, "{report}");
        // margins: 10 > 9, 7 > 4/3, 2 > 1
        assert_relative_eq!(report.conditions[0].margin, 1.0);
        assert_relative_eq!(report.conditions[1].margin, 1.0);
        assert_relative_eq!(
            report.conditions[2].margin,
            7.0 - 4.0 / 3.0,
            epsilon = 1e-14
        );
    }

    #[test]
    fn validation_flags_each_failed_condition() {
        let r = validate_params(&AlgoParams::new(9.0, 4.0, 7.0, 2.0), -0.5);
        assert!(!r.ok);
        assert!(!r.conditions[1].ok, "alpha > gamma + 2 must fail");

        let r = validate_params(&AlgoParams::new(10.0, 4.0, 1.0, 2.0), -0.5);
        assert!(!r.ok);
        assert!(!r.conditions[2].ok, "gamma > beta/(2(rho+eta)) must fail");

        let r = validate_params(&AlgoParams::new(10.0, 4.0, 7.0, 0.5), -0.5);
        assert!(!r.ok);
        assert!(!r.conditions[0].ok, "eta > -2*rho must fail");
    }

    #[test]
    fn ins_step_matches_hand_computation() {
        // With duplicated start the differences vanish, so
        // x_2 = (1,1) - 4 * A_2(1,1) = (-27/13, 5/13).
        let problem = problems::example2();
        let state = IterState::start(&ones());
        let next = step_ins(&state, &recommended_params_ex2(), &problem.operator).unwrap();
        assert_eq!(next.n, 2);
        assert_relative_eq!(next.x_cur[0], -27.0 / 13.0, epsilon = 1e-12);
        assert_relative_eq!(next.x_cur[1], 5.0 / 13.0, epsilon = 1e-12);
        assert_eq!(next.x_prev, ones());
    }

    #[test]
    fn ins_step_is_stationary_for_zero_operator() {
        let op = ProblemOperator::dense_linear(LinearMap::zeros(2), 0.0);
        let mut state = IterState::start(&ones());
        for _ in 0..5 {
            state = step_ins(&state, &recommended_params_ex2(), &op).unwrap();
            assert_eq!(state.x_cur, ones());
        }
    }

    #[test]
    fn ins_momentum_coefficient_vanishes_at_n_equal_alpha() {
        // alpha = 3, n = 3: y_n = x_n regardless of x_{n-1}; with A = 0 the
        // step returns x_n unchanged.
        let op = ProblemOperator::dense_linear(LinearMap::zeros(2), 0.0);
        let params = AlgoParams::new(3.0, 1.0, 1.0, 2.0);
        let state = IterState {
            n: 3,
            x_prev: Vector::new(vec![9.0, -4.0]).unwrap(),
            x_cur: Vector::new(vec![1.0, 2.0]).unwrap(),
        };
        let next = step_ins(&state, &params, &op).unwrap();
        assert_eq!(next.x_cur.coords(), &[1.0, 2.0]);
    }

    #[test]
    fn tan_step_matches_adjugate_oracle() {
        let problem = problems::example2();
        let state = TanState::start(&ones());
        let next = step_tan(&state, &recommended_params_ex2(), &problem.operator).unwrap();
        // y_1 = (1,1); x_2 = (2/3)(1,1) + (1/3) J_3(1,1)
        let j3 = resolvent_2x2(problem.operator.map(), 3.0, [1.0, 1.0]);
        assert_relative_eq!(next.x_cur[0], 2.0 / 3.0 + j3[0] / 3.0, epsilon = 1e-12);
        assert_relative_eq!(next.x_cur[1], 2.0 / 3.0 + j3[1] / 3.0, epsilon = 1e-12);
        assert_eq!(next.y_prev, ones());
    }

    #[test]
    fn tan_reduces_to_its_anchor_recursion_for_zero_operator() {
        // J = Id, so x_{k+1} = y_k; iterate the scalar recursion by hand.
        let op = ProblemOperator::dense_linear(LinearMap::zeros(1), 0.0);
        let params = AlgoParams::new(10.0, 4.0, 7.0, 2.0);
        let x0 = Vector::new(vec![2.0]).unwrap();
        let mut state = TanState::start(&x0);
        let (mut xp, mut xc, mut yp) = (2.0f64, 2.0f64, 2.0f64);
        for k in 1..=3u64 {
            let kf = k as f64;
            let y = xc + (1.0 - 10.0 / kf) * (xc - xp) + (1.0 - 4.0 / kf) * (yp - xc);
            state = step_tan(&state, &params, &op).unwrap();
            assert_relative_eq!(state.x_cur[0], y, epsilon = 1e-12);
            xp = xc;
            xc = y;
            yp = y;
        }
    }

    #[test]
    fn tan_anchor_coefficient_vanishes_at_k_equal_beta() {
        // k = beta = 4 kills the (1 - beta/k)(y_{k-1} - x_k) term.
        let op = ProblemOperator::dense_linear(LinearMap::zeros(1), 0.0);
        let params = AlgoParams::new(10.0, 4.0, 7.0, 2.0);
        let state = TanState {
            k: 4,
            x_prev: Vector::new(vec![1.0]).unwrap(),
            x_cur: Vector::new(vec![2.0]).unwrap(),
            y_prev: Vector::new(vec![100.0]).unwrap(),
        };
        let next = step_tan(&state, &params, &op).unwrap();
        // x_5 = y_4 = 2 + (1 - 10/4)(2 - 1) = 0.5
        assert_relative_eq!(next.x_cur[0], 0.5, epsilon = 1e-13);
    }

    #[test]
    fn hppa_first_step_returns_the_anchor() {
        let problem = problems::example2();
        let anchor = Vector::new(vec![3.0, -2.0]).unwrap();
        let x1 = step_hppa(&ones(), &anchor, 2.0, 0, &problem.operator).unwrap();
        assert_eq!(x1, anchor);
    }

    #[test]
    fn hppa_step_matches_adjugate_oracle() {
        let problem = problems::example2();
        let j2 = resolvent_2x2(problem.operator.map(), 2.0, [1.0, 1.0]);
        let x2 = step_hppa(&ones(), &ones(), 2.0, 1, &problem.operator).unwrap();
        assert_relative_eq!(x2[0], 0.5 + 0.5 * j2[0], epsilon = 1e-12);
        assert_relative_eq!(x2[1], 0.5 + 0.5 * j2[1], epsilon = 1e-12);
    }

    #[test]
    fn hppa_zero_operator_closed_form() {
        let op = ProblemOperator::dense_linear(LinearMap::zeros(2), 0.0);
        let anchor = Vector::new(vec![1.0, 1.0]).unwrap();
        let mut x = Vector::new(vec![5.0, -3.0]).unwrap();
        let mut expect = [5.0, -3.0];
        for n in 0..3u64 {
            x = step_hppa(&x, &anchor, 2.0, n, &op).unwrap();
            let a = 1.0 / (n as f64 + 1.0);
            expect = [a + (1.0 - a) * expect[0], a + (1.0 - a) * expect[1]];
            assert_relative_eq!(x[0], expect[0], epsilon = 1e-13);
            assert_relative_eq!(x[1], expect[1], epsilon = 1e-13);
        }
    }

    #[test]
    fn ohm_first_step_returns_the_anchor() {
        let problem = problems::example2();
        let anchor = Vector::new(vec![0.5, 0.25]).unwrap();
        let x1 = step_ohm(
            &ones(),
            &anchor,
            0,
            &recommended_params_ex2(),
            &problem.operator,
        )
        .unwrap();
        assert_eq!(x1, anchor);
    }

    #[test]
    fn ohm_step_matches_adjugate_oracle() {
        // lambda = 2(rho + eta)/eta = 3/2 on this instance.
        let problem = problems::example2();
        let j2 = resolvent_2x2(problem.operator.map(), 2.0, [1.0, 1.0]);
        let t = [1.0 + 1.5 * (j2[0] - 1.0), 1.0 + 1.5 * (j2[1] - 1.0)];
        let x2 = step_ohm(
            &ones(),
            &ones(),
            1,
            &recommended_params_ex2(),
            &problem.operator,
        )
        .unwrap();
        assert_relative_eq!(x2[0], 0.5 + 0.5 * t[0], epsilon = 1e-12);
        assert_relative_eq!(x2[1], 0.5 + 0.5 * t[1], epsilon = 1e-12);
    }

    #[test]
    fn ohm_relaxation_reduces_to_reflection_for_monotone_operators() {
        // rho = 0 gives lambda = 2, i.e. T = 2J - I; with A = 0, T = Id.
        let op = ProblemOperator::dense_linear(LinearMap::zeros(2), 0.0);
        let params = AlgoParams::new(10.0, 4.0, 7.0, 2.0);
        let anchor = ones();
        let x = Vector::new(vec![4.0, 0.0]).unwrap();
        let x2 = step_ohm(&x, &anchor, 1, &params, &op).unwrap();
        assert_relative_eq!(x2[0], 0.5 * 1.0 + 0.5 * 4.0, epsilon = 1e-14);
        assert_relative_eq!(x2[1], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn run_respects_max_iter_exactly() {
        let problem = problems::example2();
        let log = run(
            Method::Ins,
            &problem,
            &recommended_params_ex2(),
            &ones(),
            &StoppingRule::max_iter(10),
        )
        .unwrap();
        assert_eq!(log.len(), 10);
        assert_eq!(log.steps, 10);
        assert_eq!(log.stop_reason, StopReason::MaxIter);
        assert_eq!(log.n, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn run_stops_immediately_on_residual_at_a_zero() {
        let problem = problems::example2();
        let x0 = Vector::zeros(2);
        let log = run(
            Method::Ins,
            &problem,
            &recommended_params_ex2(),
            &x0,
            &StoppingRule::residual(1e-9),
        )
        .unwrap();
        assert_eq!(log.steps, 1);
        assert_eq!(log.stop_reason, StopReason::ResidualTol);
        assert_eq!(log.final_x, x0);
    }

    #[test]
    fn run_performs_one_resolvent_solve_per_step() {
        let problem = problems::example2();
        for method in Method::ALL {
            let before = problem.operator.resolvent_evaluations();
            let log = run(
                method,
                &problem,
                &recommended_params_ex2(),
                &ones(),
                &StoppingRule::max_iter(100),
            )
            .unwrap();
            let used = problem.operator.resolvent_evaluations() - before;
            assert_eq!(
                used, log.steps,
                "{method} used {used} solves for {} steps",
                log.steps
            );
        }
    }

    #[test]
    fn run_is_deterministic() {
        let problem = problems::example2();
        let a = run(
            Method::Ins,
            &problem,
            &recommended_params_ex2(),
            &ones(),
            &StoppingRule::target(1e-7),
        )
        .unwrap();
        let b = run(
            Method::Ins,
            &problem,
            &recommended_params_ex2(),
            &ones(),
            &StoppingRule::target(1e-7),
        )
        .unwrap();
        assert_eq!(a.steps, b.steps);
        assert_eq!(a.final_x, b.final_x);
        assert_eq!(a.err, b.err);
    }

    #[test]
    fn run_with_stride_keeps_first_and_terminal_records() {
        let problem = problems::example2();
        let log = run_with(
            Method::Ins,
            &problem,
            &recommended_params_ex2(),
            &ones(),
            &StoppingRule::target(1e-7),
            &RunOptions {
                record_stride: 50,
                anchor: None,
            },
        )
        .unwrap();
        assert_eq!(log.n[0], 1);
        assert_eq!(*log.n.last().unwrap(), log.steps + 1);
        assert!(log.err.last().unwrap() <= &1e-7);
    }
}
