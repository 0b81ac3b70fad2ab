//! Experiment configuration: a flat TOML file with one table per method.
//!
//! ```toml
//! problem = "example2"           # builtin | random-spd:DIM | random-cohypo:DIM:RHO | path
//! methods = ["ins", "tan"]       # ins | tan | hppa | ohm | ode-ds | ode-adly
//! out_dir = "out"
//! seed = 42
//! x0 = [1.0, 1.0]                # default: all ones
//! v0 = [1.0, 1.0]                # ode initial velocity, default: zeros
//! anchor = [1.0, 1.0]            # halpern anchor, default: x0
//!
//! [stopping]
//! target_tol = 1e-7
//! max_iter = 1000000
//! record_stride = 1
//!
//! [integrator]
//! t0 = 0.1
//! t_end = 100.0
//! rel_tol = 1e-6
//! abs_tol = 1e-9
//! samples = 500
//!
//! [ins]
//! alpha = 10.0
//! beta = 4.0
//! gamma = 7.0
//! eta = 2.0
//! ```
//!
//! Method tables fall back to the problem's recommended parameters when
//! omitted. Environment variables `COMONO_OUT` and `COMONO_SEED` override
//! the config; command-line flags override both.

use std::collections::BTreeMap;
use std::path::Path;

use comono::algo::{AlgoParams, Method, StoppingRule};
use comono::linalg::Vector;
use comono::ode::IntegratorConfig;
use comono::problems::{self, ProblemInstance};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMethod {
    Discrete(Method),
    OdeDs,
    OdeAdly,
}

impl RunMethod {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "ins" => Ok(RunMethod::Discrete(Method::Ins)),
            "tan" => Ok(RunMethod::Discrete(Method::Tan)),
            "hppa" => Ok(RunMethod::Discrete(Method::Hppa)),
            "ohm" => Ok(RunMethod::Discrete(Method::Ohm)),
            "ode-ds" => Ok(RunMethod::OdeDs),
            "ode-adly" => Ok(RunMethod::OdeAdly),
            other => Err(CliError::Config(format!(
                "unknown method {other:?}; expected ins|tan|hppa|ohm|ode-ds|ode-adly"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            RunMethod::Discrete(Method::Ins) => "ins",
            RunMethod::Discrete(Method::Tan) => "tan",
            RunMethod::Discrete(Method::Hppa) => "hppa",
            RunMethod::Discrete(Method::Ohm) => "ohm",
            RunMethod::OdeDs => "ode-ds",
            RunMethod::OdeAdly => "ode-adly",
        }
    }
}

const METHOD_NAMES: [&str; 6] = ["ins", "tan", "hppa", "ohm", "ode-ds", "ode-adly"];

#[derive(Debug, Deserialize)]
struct RawConfig {
    problem: String,
    methods: Vec<String>,
    out_dir: Option<String>,
    seed: Option<u64>,
    x0: Option<Vec<f64>>,
    v0: Option<Vec<f64>>,
    anchor: Option<Vec<f64>>,
    stopping: Option<RawStopping>,
    integrator: Option<RawIntegrator>,
    #[serde(flatten)]
    tables: BTreeMap<String, RawParams>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStopping {
    target_tol: Option<f64>,
    residual_tol: Option<f64>,
    max_iter: Option<u64>,
    record_stride: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    t0: Option<f64>,
    t_end: Option<f64>,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    max_step: Option<f64>,
    samples: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    eta: Option<f64>,
}

/// Fully resolved experiment: problem, methods with their parameters, and
/// run settings.
pub struct Experiment {
    pub problem: ProblemInstance,
    pub methods: Vec<(RunMethod, AlgoParams)>,
    pub out_dir: String,
    pub seed: u64,
    pub x0: Vector,
    pub v0: Vector,
    pub anchor: Option<Vector>,
    pub stopping: StoppingRule,
    pub record_stride: u64,
    pub integrator: IntegratorConfig,
}

/// Resolves a problem selector: a builtin name, a generator selector, or
/// a file path.
pub fn resolve_problem(selector: &str, seed: u64) -> Result<ProblemInstance, CliError> {
    match selector {
        "example1" => return Ok(problems::example1()),
        "example2" => return Ok(problems::example2()),
        _ => {}
    }
    if let Some(rest) = selector.strip_prefix("random-spd:") {
        let dim: usize = rest
            .parse()
            .map_err(|_| CliError::Config(format!("bad dimension in {selector:?}")))?;
        if dim == 0 {
            return Err(CliError::Config(
                "random-spd dimension must be positive".into(),
            ));
        }
        return Ok(problems::random_spd(dim, seed));
    }
    if let Some(rest) = selector.strip_prefix("random-cohypo:") {
        let (dim_s, rho_s) = rest.split_once(':').ok_or_else(|| {
            CliError::Config(format!("expected random-cohypo:DIM:RHO, got {selector:?}"))
        })?;
        let dim: usize = dim_s
            .parse()
            .map_err(|_| CliError::Config(format!("bad dimension in {selector:?}")))?;
        let rho: f64 = rho_s
            .parse()
            .map_err(|_| CliError::Config(format!("bad modulus in {selector:?}")))?;
        return problems::random_cohypomonotone(dim, rho, seed)
            .map_err(|e| CliError::Config(e.to_string()));
    }
    let path = Path::new(selector);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "problem {selector:?} is neither builtin, a generator selector, nor an existing file"
        )));
    }
    problems::read_problem(path).map_err(|e| CliError::Config(e.to_string()))
}

fn vector_field(
    name: &str,
    raw: Option<Vec<f64>>,
    dim: usize,
    default: impl Fn() -> Vector,
) -> Result<Vector, CliError> {
    match raw {
        None => Ok(default()),
        Some(coords) => {
            let v = Vector::new(coords).map_err(|e| CliError::Config(format!("{name}: {e}")))?;
            if v.dim() != dim {
                return Err(CliError::Config(format!(
                    "{name} has dimension {}, problem has {dim}",
                    v.dim()
                )));
            }
            Ok(v)
        }
    }
}

fn method_params(
    method: RunMethod,
    table: Option<&RawParams>,
    problem: &ProblemInstance,
) -> Result<AlgoParams, CliError> {
    let fallback = problem.recommended_params;
    let field = |v: Option<f64>, f: fn(&AlgoParams) -> f64, name: &str| -> Result<f64, CliError> {
        v.or(fallback.as_ref().map(f)).ok_or_else(|| {
            CliError::Config(format!(
                "method {} needs {name} (no value configured and the problem has no recommended parameters)",
                method.name()
            ))
        })
    };
    let (alpha, beta, gamma, eta) = match table {
        Some(t) => (t.alpha, t.beta, t.gamma, t.eta),
        None => (None, None, None, None),
    };
    // the comparison system only uses (alpha, gamma)
    let beta = if method == RunMethod::OdeAdly {
        beta.or(Some(0.0))
    } else {
        beta
    };
    let eta = if method == RunMethod::OdeAdly {
        eta.or(Some(2.0))
    } else {
        eta
    };
    Ok(AlgoParams::new(
        field(alpha, |p| p.alpha, "alpha")?,
        field(beta, |p| p.beta, "beta")?,
        field(gamma, |p| p.gamma, "gamma")?,
        field(eta, |p| p.eta, "eta")?,
    ))
}

pub struct Overrides {
    pub out: Option<String>,
    pub seed: Option<u64>,
    pub max_iter: Option<u64>,
    pub tol: Option<f64>,
}

fn env_override(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|s| !s.is_empty())
}

/// Parses and fully resolves a config file, applying environment and flag
/// overrides (flags beat environment beats file).
pub fn load_experiment(path: &Path, overrides: &Overrides) -> Result<Experiment, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let raw: RawConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;

    for key in raw.tables.keys() {
        if !METHOD_NAMES.contains(&key.as_str()) {
            return Err(CliError::Config(format!("unknown table [{key}] in config")));
        }
    }
    if raw.methods.is_empty() {
        return Err(CliError::Config("methods list is empty".into()));
    }

    let seed = overrides
        .seed
        .or_else(|| env_override("COMONO_SEED").and_then(|s| s.parse().ok()))
        .or(raw.seed)
        .unwrap_or(0);
    let out_dir = overrides
        .out
        .clone()
        .or_else(|| env_override("COMONO_OUT"))
        .or(raw.out_dir)
        .unwrap_or_else(|| "out".to_string());

    let problem = resolve_problem(&raw.problem, seed)?;
    let dim = problem.operator.dim();

    let mut methods = Vec::new();
    for name in &raw.methods {
        let method = RunMethod::parse(name)?;
        if methods.iter().any(|(m, _)| *m == method) {
            return Err(CliError::Config(format!("method {name:?} listed twice")));
        }
        let params = method_params(method, raw.tables.get(name.as_str()), &problem)?;
        methods.push((method, params));
    }

    let x0 = vector_field("x0", raw.x0, dim, || {
        Vector::new(vec![1.0; dim]).expect("ones")
    })?;
    let v0 = vector_field("v0", raw.v0, dim, || Vector::zeros(dim))?;
    let anchor = match raw.anchor {
        None => None,
        some => Some(vector_field("anchor", some, dim, || x0.clone())?),
    };

    let s = raw.stopping.unwrap_or(RawStopping {
        target_tol: None,
        residual_tol: None,
        max_iter: None,
        record_stride: None,
    });
    let target_tol = overrides.tol.or(s.target_tol);
    let residual_tol = s.residual_tol;
    let stopping = StoppingRule {
        // distance rule by default: every resolvable problem has a zero
        target_tol: if target_tol.is_none() && residual_tol.is_none() {
            Some(1e-7)
        } else {
            target_tol
        },
        residual_tol,
        max_iter: overrides
            .max_iter
            .or(s.max_iter)
            .unwrap_or(comono::algo::DEFAULT_MAX_ITER),
    };
    if stopping.max_iter == 0 {
        return Err(CliError::Config("max_iter must be positive".into()));
    }
    if let Some(t) = stopping.target_tol {
        if !t.is_finite() || t <= 0.0 {
            return Err(CliError::Config("target_tol must be positive".into()));
        }
    }
    let record_stride = s.record_stride.unwrap_or(1);
    if record_stride == 0 {
        return Err(CliError::Config("record_stride must be positive".into()));
    }
    if stopping.max_iter / record_stride > 50_000_000 {
        return Err(CliError::Config(format!(
            "max_iter {} with record_stride {record_stride} implies up to {} stored records; \
             raise record_stride or lower max_iter",
            stopping.max_iter,
            stopping.max_iter / record_stride
        )));
    }

    let i = raw.integrator.unwrap_or(RawIntegrator {
        t0: None,
        t_end: None,
        rel_tol: None,
        abs_tol: None,
        max_step: None,
        samples: None,
    });
    let t0 = i.t0.unwrap_or(0.1);
    let t_end = i.t_end.unwrap_or(100.0);
    let mut integrator = IntegratorConfig::new(t0, t_end);
    if let Some(r) = i.rel_tol {
        integrator.rel_tol = r;
    }
    if let Some(a) = i.abs_tol {
        integrator.abs_tol = a;
    }
    if let Some(m) = i.max_step {
        integrator.max_step = m;
    }
    if let Some(n) = i.samples {
        integrator.sample_count = n;
    }
    integrator
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;

    Ok(Experiment {
        problem,
        methods,
        out_dir,
        seed,
        x0,
        v0,
        anchor,
        stopping,
        record_stride,
        integrator,
    })
}
