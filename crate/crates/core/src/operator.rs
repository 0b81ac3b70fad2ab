//! Comonotone operators exposed through their resolvent.
//!
//! An operator `A` here is a dense linear map together with a declared
//! comonotonicity modulus `rho`: `<x, Ax> >= rho * |Ax|^2` for all `x`.
//! Every algorithm in this crate touches `A` only through the resolvent
//! `J_eta = (I + eta*A)^{-1}` and the associated regularization
//! `A_eta = (I - J_eta) / eta`, so the representation is the resolvent
//! primitive itself. The interface stays open to other kinds: anything that
//! can produce a [`ResolventSolver`] for a given index works.
//!
//! Resolvent solves use an LU factorization of `I + eta*A`, factored once per
//! `(operator, eta)` pair and cached for concurrent reads. Every solve is
//! verified against the residual contract
//! `|(I + eta*A) v - x| <= 1e-10 * (1 + |x|)`; a violation is reported as
//! [`Error::SingularSystem`], which signals an index outside the admissible
//! range `eta > max(-2*rho, 0)` or a defective matrix.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{LinearMap, Vector};

/// Mixed absolute/relative tolerance for the resolvent residual contract.
pub const RESOLVENT_RESIDUAL_TOL: f64 = 1e-10;

/// Mixed tolerance used by the sampled property checks, scaled by
/// `1 + |x - y|^2` per sample.
pub const PROPERTY_CHECK_TOL: f64 = 1e-10;

/// A maximally comonotone operator represented by a dense linear map.
pub struct ProblemOperator {
    map: LinearMap,
    rho: f64,
    zero_hint: Option<Vector>,
    solvers: RwLock<HashMap<u64, Arc<ResolventSolver>>>,
    evals: Arc<AtomicU64>,
}

impl ProblemOperator {
    /// Wraps a dense linear map with its comonotonicity modulus.
    ///
    /// `rho` may be negative (cohypomonotone); every resolvent index `eta`
    /// used with the operator must satisfy `eta > max(-2*rho, 0)`.
    pub fn dense_linear(map: LinearMap, rho: f64) -> Self {
        ProblemOperator {
            map,
            rho,
            zero_hint: None,
            solvers: RwLock::new(HashMap::new()),
            evals: Arc::new(AtomicU64::new(0)),
        }
    }

    pub fn with_zero_hint(mut self, zero: Vector) -> Self {
        self.zero_hint = Some(zero);
        self
    }

    pub fn dim(&self) -> usize {
        self.map.dim()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn map(&self) -> &LinearMap {
        &self.map
    }

    pub fn zero_hint(&self) -> Option<&Vector> {
        self.zero_hint.as_ref()
    }

    /// Number of resolvent solves performed so far (shared by all cached
    /// solvers of this operator).
    pub fn resolvent_evaluations(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }

    /// Returns the cached solver for index `eta`, factoring `I + eta*A` on
    /// first use.
    pub fn resolvent_solver(&self, eta: f64) -> Result<Arc<ResolventSolver>> {
        if !eta.is_finite() || eta <= 0.0 {
            return Err(Error::Invalid {
                what: "resolvent index",
                why: format!("eta must be positive and finite, got {eta}"),
            });
        }
        let key = eta.to_bits();
        if let Some(solver) = self.solvers.read().unwrap().get(&key) {
            return Ok(Arc::clone(solver));
        }
        let solver = Arc::new(ResolventSolver::factor(
            &self.map,
            eta,
            Arc::clone(&self.evals),
        )?);
        let mut cache = self.solvers.write().unwrap();
        Ok(Arc::clone(cache.entry(key).or_insert(solver)))
    }
}

impl std::fmt::Debug for ProblemOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemOperator")
            .field("dim", &self.dim())
            .field("rho", &self.rho)
            .finish()
    }
}

/// LU-backed solver for `(I + eta*A) v = x` at a fixed index.
pub struct ResolventSolver {
    eta: f64,
    dim: usize,
    system: DMatrix<f64>,
    lu: nalgebra::LU<f64, Dyn, Dyn>,
    evals: Arc<AtomicU64>,
}

impl ResolventSolver {
    fn factor(map: &LinearMap, eta: f64, evals: Arc<AtomicU64>) -> Result<Self> {
        let dim = map.dim();
        let mut system = map.matrix() * eta;
        for i in 0..dim {
            system[(i, i)] += 1.0;
        }
        let lu = system.clone().lu();
        if !lu.is_invertible() {
            return Err(Error::SingularSystem {
                eta,
                residual: f64::INFINITY,
            });
        }
        Ok(ResolventSolver {
            eta,
            dim,
            system,
            lu,
            evals,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Solves `(I + eta*A) out = x`, verifying the residual contract.
    /// `scratch` must have the operator dimension.
    pub fn solve_into(
        &self,
        x: &DVector<f64>,
        out: &mut DVector<f64>,
        scratch: &mut DVector<f64>,
    ) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        self.evals.fetch_add(1, Ordering::Relaxed);
        out.copy_from(x);
        if !self.lu.solve_mut(out) {
            return Err(Error::SingularSystem {
                eta: self.eta,
                residual: f64::INFINITY,
            });
        }
        // residual r = (I + eta*A) out - x
        scratch.gemv(1.0, &self.system, out, 0.0);
        *scratch -= x;
        let residual = scratch.norm();
        // NaN residuals (non-finite inputs) must fail this gate too
        if residual.is_nan() || residual > RESOLVENT_RESIDUAL_TOL * (1.0 + x.norm()) {
            return Err(Error::SingularSystem {
                eta: self.eta,
                residual,
            });
        }
        Ok(())
    }

    /// Writes `A_eta(x) = (x - J_eta(x)) / eta` into `out`.
    pub fn regularization_into(
        &self,
        x: &DVector<f64>,
        out: &mut DVector<f64>,
        scratch: &mut DVector<f64>,
    ) -> Result<()> {
        self.solve_into(x, out, scratch)?;
        // out = (x - out) / eta
        out.axpy(1.0 / self.eta, x, -1.0 / self.eta);
        Ok(())
    }

    pub fn solve(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim);
        let mut scratch = DVector::zeros(self.dim);
        self.solve_into(x, &mut out, &mut scratch)?;
        Ok(out)
    }
}

/// Result of a resolvent evaluation `J_eta(x)`.
///
/// The pair `(point, (x - point)/eta)` lies on the graph of the operator; for
/// dense linear maps this is checkable exactly via [`check_graph_identity`].
#[derive(Debug, Clone)]
pub struct ResolventResult {
    pub point: Vector,
    pub eta: f64,
}

/// Evaluates the resolvent `J_eta(x) = (I + eta*A)^{-1} x`.
pub fn resolvent(op: &ProblemOperator, eta: f64, x: &Vector) -> Result<ResolventResult> {
    let solver = op.resolvent_solver(eta)?;
    let point = Vector::from_dvector(solver.solve(x)?)?;
    Ok(ResolventResult { point, eta })
}

/// Evaluates the Yosida regularization `A_eta(x) = (x - J_eta(x)) / eta`.
pub fn yosida(op: &ProblemOperator, eta: f64, x: &Vector) -> Result<Vector> {
    let solver = op.resolvent_solver(eta)?;
    let mut out = DVector::zeros(solver.dim());
    let mut scratch = DVector::zeros(solver.dim());
    solver.regularization_into(x, &mut out, &mut scratch)?;
    Vector::from_dvector(out)
}

/// Largest modulus `rho` such that the map is `rho`-comonotone:
/// the minimum of `<x, Ax> / |Ax|^2` over nonzero `x`.
///
/// Computed as the smallest eigenvalue of the symmetric generalized
/// eigenproblem `(sym(A), A^T A)` via a Cholesky reduction of the Gram
/// matrix. Requires an invertible map so the modulus is finite.
pub fn comonotone_modulus(map: &LinearMap) -> Result<f64> {
    if !map.matrix().clone().lu().is_invertible() {
        return Err(Error::SingularOperator);
    }
    let sym = map.symmetric_part();
    let gram = map.gram();
    let chol = gram.cholesky().ok_or(Error::SingularOperator)?;
    let l = chol.l();
    // M = L^{-1} sym L^{-T}, same spectrum as the generalized pair.
    let half = l
        .solve_lower_triangular(&sym)
        .ok_or(Error::SingularOperator)?;
    let reduced = l
        .solve_lower_triangular(&half.transpose())
        .ok_or(Error::SingularOperator)?;
    let symmetrized = (&reduced + reduced.transpose()) * 0.5;
    let eigen = nalgebra::SymmetricEigen::new(symmetrized);
    Ok(eigen.eigenvalues.min())
}

/// One failed sample inequality inside a [`PropertyReport`].
#[derive(Debug, Clone)]
pub struct Violation {
    pub sample: usize,
    pub check: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of a sampled operator-calculus check. `violations` is expected to
/// be empty for any admissible `(rho, eta)` pair.
#[derive(Debug, Clone)]
pub struct PropertyReport {
    pub property: &'static str,
    pub samples: usize,
    pub violations: Vec<Violation>,
}

impl PropertyReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn sample_standard_normal(rng: &mut ChaCha8Rng, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| StandardNormal.sample(rng))
}

/// Checks the `(rho + eta)`-cocoercivity of the regularization `A_eta` on
/// seeded standard-normal pairs:
/// `<x - y, A_eta x - A_eta y> >= (rho + eta) |A_eta x - A_eta y|^2`.
pub fn check_cocoercivity(
    op: &ProblemOperator,
    eta: f64,
    sample_count: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let solver = op.resolvent_solver(eta)?;
    let modulus = op.rho() + eta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = op.dim();
    let (mut ax, mut ay, mut scratch) = (
        DVector::zeros(dim),
        DVector::zeros(dim),
        DVector::zeros(dim),
    );
    let mut violations = Vec::new();
    for sample in 0..sample_count {
        let x = sample_standard_normal(&mut rng, dim);
        let y = sample_standard_normal(&mut rng, dim);
        solver.regularization_into(&x, &mut ax, &mut scratch)?;
        solver.regularization_into(&y, &mut ay, &mut scratch)?;
        let dxy = &x - &y;
        let da = &ax - &ay;
        let lhs = dxy.dot(&da);
        let rhs = modulus * da.norm_squared();
        let tol = PROPERTY_CHECK_TOL * (1.0 + dxy.norm_squared());
        if lhs < rhs - tol {
            violations.push(Violation {
                sample,
                check: "cocoercivity",
                lhs,
                rhs,
            });
        }
    }
    Ok(PropertyReport {
        property: "cocoercivity",
        samples: sample_count,
        violations,
    })
}

/// Checks that the resolvent is `theta`-averaged with
/// `theta = eta / (2 (rho + eta))`, together with nonexpansiveness of
/// `J_eta` and the `1/(rho + eta)`-Lipschitz bound on `A_eta`.
pub fn check_averaged(
    op: &ProblemOperator,
    eta: f64,
    sample_count: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let solver = op.resolvent_solver(eta)?;
    let theta = eta / (2.0 * (op.rho() + eta));
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Invalid {
            what: "averagedness parameter",
            why: format!("theta = {theta} outside (0, 1); eta must exceed -2*rho"),
        });
    }
    let lipschitz = 1.0 / (op.rho() + eta);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = op.dim();
    let (mut jx, mut jy, mut scratch) = (
        DVector::zeros(dim),
        DVector::zeros(dim),
        DVector::zeros(dim),
    );
    let mut violations = Vec::new();
    for sample in 0..sample_count {
        let x = sample_standard_normal(&mut rng, dim);
        let y = sample_standard_normal(&mut rng, dim);
        solver.solve_into(&x, &mut jx, &mut scratch)?;
        solver.solve_into(&y, &mut jy, &mut scratch)?;
        let dxy = &x - &y;
        let dj = &jx - &jy;
        let tol = PROPERTY_CHECK_TOL * (1.0 + dxy.norm_squared());

        // (1 - theta) |(I-J)x - (I-J)y|^2 <= theta (|x-y|^2 - |Jx-Jy|^2)
        let residual_gap = (&dxy - &dj).norm_squared();
        let lhs = (1.0 - theta) * residual_gap;
        let rhs = theta * (dxy.norm_squared() - dj.norm_squared());
        if lhs > rhs + tol {
            violations.push(Violation {
                sample,
                check: "averaged",
                lhs,
                rhs,
            });
        }

        let lhs = dj.norm();
        let rhs = dxy.norm();
        if lhs > rhs + tol {
            violations.push(Violation {
                sample,
                check: "nonexpansive",
                lhs,
                rhs,
            });
        }

        // |A_eta x - A_eta y| = |(I-J)x - (I-J)y| / eta
        let lhs = residual_gap.sqrt() / eta;
        let rhs = lipschitz * dxy.norm();
        if lhs > rhs + tol {
            violations.push(Violation {
                sample,
                check: "lipschitz",
                lhs,
                rhs,
            });
        }
    }
    Ok(PropertyReport {
        property: "averaged",
        samples: sample_count,
        violations,
    })
}

/// Samples the graph-identity defect on seeded standard-normal points,
/// recording a violation wherever it exceeds `1e-10 * (1 + |x|)`.
pub fn check_graph_identity_sampled(
    op: &ProblemOperator,
    eta: f64,
    sample_count: usize,
    seed: u64,
) -> Result<PropertyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    for sample in 0..sample_count {
        let x = Vector::from_dvector(sample_standard_normal(&mut rng, op.dim()))?;
        let defect = check_graph_identity(op, eta, &x)?;
        let tol = PROPERTY_CHECK_TOL * (1.0 + x.norm());
        if defect > tol {
            violations.push(Violation {
                sample,
                check: "graph-identity",
                lhs: defect,
                rhs: tol,
            });
        }
    }
    Ok(PropertyReport {
        property: "graph-identity",
        samples: sample_count,
        violations,
    })
}

/// Graph identity defect `|A_eta(x) - A(J_eta x)|`.
///
/// For a dense linear operator the regularization value at `x` equals the
/// operator applied to the resolvent point, so the defect is zero up to
/// rounding. Contract: at most `1e-10 * (1 + |x|)`.
pub fn check_graph_identity(op: &ProblemOperator, eta: f64, x: &Vector) -> Result<f64> {
    let solver = op.resolvent_solver(eta)?;
    let dim = op.dim();
    let mut jx = DVector::zeros(dim);
    let mut scratch = DVector::zeros(dim);
    solver.solve_into(x, &mut jx, &mut scratch)?;
    // scratch = A (J x)
    op.map().apply_dvec_into(&jx, &mut scratch);
    // jx = (x - jx)/eta = A_eta(x)
    jx.axpy(1.0 / eta, x, -1.0 / eta);
    Ok((jx - scratch).norm())
}
