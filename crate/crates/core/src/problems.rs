//! Shipped problem instances and seeded generators.
//!
//! Every instance carries an operator, its comonotonicity modulus, and a
//! known zero, so runs can use the distance stopping rule and the energy
//! channel. Generators are fully deterministic per seed.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::algo::AlgoParams;
use crate::error::{Error, Result};
use crate::linalg::{LinearMap, Vector};
use crate::operator::ProblemOperator;

/// A named inclusion problem with a known zero.
#[derive(Debug)]
pub struct ProblemInstance {
    pub name: String,
    pub operator: ProblemOperator,
    pub rho: f64,
    pub zero: Vector,
    pub recommended_params: Option<AlgoParams>,
}

fn instance(
    name: &str,
    map: LinearMap,
    rho: f64,
    zero: Vector,
    recommended_params: Option<AlgoParams>,
) -> ProblemInstance {
    let operator = ProblemOperator::dense_linear(map, rho).with_zero_hint(zero.clone());
    ProblemInstance {
        name: name.to_string(),
        operator,
        rho,
        zero,
        recommended_params,
    }
}

/// Fixed 3x3 positive semidefinite instance with zero at the origin.
/// Monotone, so `rho = 0`.
pub fn example1() -> ProblemInstance {
    let map = LinearMap::from_rows(&[
        vec![5.7943, -10.8168, 10.7544],
        vec![-10.8168, 65.5739, -28.2603],
        vec![10.7544, -28.2603, 35.6622],
    ])
    .expect("static entries");
    instance(
        "example1",
        map,
        0.0,
        Vector::zeros(3),
        Some(AlgoParams::new(15.0, 10.0, 10.0, 2.0)),
    )
}

/// Fixed 2x2 rotation-like instance with modulus `-1/2` and zero at the
/// origin.
pub fn example2() -> ProblemInstance {
    let map = LinearMap::from_rows(&[vec![-2.0 / 5.0, 4.0 / 5.0], vec![-4.0 / 5.0, -2.0 / 5.0]])
        .expect("static entries");
    instance(
        "example2",
        map,
        -0.5,
        Vector::zeros(2),
        Some(AlgoParams::new(10.0, 4.0, 7.0, 2.0)),
    )
}

/// Seeded dense positive semidefinite instance `A = M^T M` with standard
/// normal `M`; declared modulus 0 (monotone), zero at the origin.
pub fn random_spd(dim: usize, seed: u64) -> ProblemInstance {
    assert!(dim >= 1, "dimension must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
    let map = LinearMap::from_dmatrix(m.transpose() * &m).expect("finite product");
    instance(
        &format!("random-spd-{dim}-{seed}"),
        map,
        0.0,
        Vector::zeros(dim),
        Some(AlgoParams::new(10.0, 4.0, 7.0, 2.0)),
    )
}

/// Seeded block-diagonal instance built from scaled rotation blocks
/// `s [[-c, d], [-d, -c]]`, with every block scaled so the comonotonicity
/// modulus equals `rho_target` exactly.
///
/// `dim` must be even and `rho_target` must lie in `(-1, 0)` so the default
/// index `eta = 2` stays admissible.
pub fn random_cohypomonotone(dim: usize, rho_target: f64, seed: u64) -> Result<ProblemInstance> {
    if dim == 0 || !dim.is_multiple_of(2) {
        return Err(Error::InfeasibleTarget {
            target: rho_target,
            why: format!("dimension {dim} is not a positive even number"),
        });
    }
    if rho_target >= 0.0 {
        return Err(Error::InfeasibleTarget {
            target: rho_target,
            why: "rotation blocks only reach negative moduli".into(),
        });
    }
    if rho_target <= -1.0 {
        return Err(Error::InfeasibleTarget {
            target: rho_target,
            why: "default eta = 2 requires a modulus above -1".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for b in 0..dim / 2 {
        let c: f64 = 0.2 + rng.random_range(0.0..1.0);
        let d: f64 = 0.2 + rng.random_range(0.0..1.0);
        // block modulus is -c / (s (c^2 + d^2)); solve for s
        let s = c / (-rho_target * (c * c + d * d));
        let i = 2 * b;
        a[(i, i)] = -s * c;
        a[(i, i + 1)] = s * d;
        a[(i + 1, i)] = -s * d;
        a[(i + 1, i + 1)] = -s * c;
    }
    let map = LinearMap::from_dmatrix(a)?;
    Ok(instance(
        &format!("random-cohypo-{dim}-{seed}"),
        map,
        rho_target,
        Vector::zeros(dim),
        Some(AlgoParams::new(10.0, 4.0, 7.0, 2.0)),
    ))
}

/// Serializes an instance to the line-based problem file format:
///
/// ```text
/// # optional comments
/// name example2
/// dim 2
/// rho -0.5
/// zero 0 0
/// row -0.4 0.8
/// row -0.8 -0.4
/// ```
///
/// `row` lines are row-major; floats use the shortest round-trip decimal
/// form.
pub fn write_problem(inst: &ProblemInstance) -> String {
    let mut out = String::new();
    out.push_str(&format!("name {}\n", inst.name));
    out.push_str(&format!("dim {}\n", inst.operator.dim()));
    out.push_str(&format!("rho {}\n", inst.rho));
    let zero: Vec<String> = inst.zero.coords().iter().map(|c| c.to_string()).collect();
    out.push_str(&format!("zero {}\n", zero.join(" ")));
    if let Some(p) = &inst.recommended_params {
        out.push_str(&format!(
            "params {} {} {} {}\n",
            p.alpha, p.beta, p.gamma, p.eta
        ));
    }
    let dim = inst.operator.dim();
    for i in 0..dim {
        let row: Vec<String> = (0..dim)
            .map(|j| inst.operator.map().entry(i, j).to_string())
            .collect();
        out.push_str(&format!("row {}\n", row.join(" ")));
    }
    out
}

/// Parses the problem file format produced by [`write_problem`].
pub fn parse_problem(text: &str) -> Result<ProblemInstance> {
    let mut name = String::from("problem");
    let mut dim: Option<usize> = None;
    let mut rho: Option<f64> = None;
    let mut zero: Option<Vec<f64>> = None;
    let mut params: Option<AlgoParams> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();

    let parse_floats = |rest: &str, line_no: usize| -> Result<Vec<f64>> {
        rest.split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::ProblemFile(format!("line {line_no}: bad number {tok:?}")))
            })
            .collect()
    };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        match key {
            "name" => name = rest.trim().to_string(),
            "dim" => {
                dim = Some(rest.trim().parse::<usize>().map_err(|_| {
                    Error::ProblemFile(format!("line {line_no}: bad dimension {rest:?}"))
                })?)
            }
            "rho" => {
                rho = Some(
                    parse_floats(rest, line_no)?
                        .first()
                        .copied()
                        .ok_or_else(|| {
                            Error::ProblemFile(format!("line {line_no}: rho needs a value"))
                        })?,
                )
            }
            "zero" => zero = Some(parse_floats(rest, line_no)?),
            "params" => {
                let p = parse_floats(rest, line_no)?;
                if p.len() != 4 {
                    return Err(Error::ProblemFile(format!(
                        "line {line_no}: params needs alpha beta gamma eta"
                    )));
                }
                params = Some(AlgoParams::new(p[0], p[1], p[2], p[3]));
            }
            "row" => rows.push(parse_floats(rest, line_no)?),
            other => {
                return Err(Error::ProblemFile(format!(
                    "line {line_no}: unknown key {other:?}"
                )))
            }
        }
    }

    let dim = dim.ok_or_else(|| Error::ProblemFile("missing dim header".into()))?;
    let rho = rho.ok_or_else(|| Error::ProblemFile("missing rho".into()))?;
    if rows.len() != dim {
        return Err(Error::ProblemFile(format!(
            "expected {dim} rows, got {}",
            rows.len()
        )));
    }
    let map =
        LinearMap::from_rows(&rows).map_err(|e| Error::ProblemFile(format!("bad matrix: {e}")))?;
    let zero = match zero {
        Some(z) => Vector::new(z).map_err(|e| Error::ProblemFile(format!("bad zero: {e}")))?,
        None => Vector::zeros(dim),
    };
    if zero.dim() != dim {
        return Err(Error::ProblemFile(format!(
            "zero has dimension {}, matrix has {dim}",
            zero.dim()
        )));
    }
    Ok(instance(&name, map, rho, zero, params))
}

pub fn read_problem(path: &std::path::Path) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::ProblemFile(format!("{}: {e}", path.display())))?;
    parse_problem(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::comonotone_modulus;
    use approx::assert_relative_eq;

    #[test]
    fn example1_entries_and_zero_are_exact() {
        let p = example1();
        assert_eq!(p.operator.map().entry(0, 0), 5.7943);
        assert_eq!(p.operator.map().entry(1, 2), -28.2603);
        assert_eq!(p.zero.coords(), &[0.0, 0.0, 0.0]);
        assert_eq!(p.rho, 0.0);
    }

    #[test]
    fn example1_symmetric_part_is_positive_semidefinite() {
        let p = example1();
        let eig = nalgebra::SymmetricEigen::new(p.operator.map().symmetric_part());
        assert!(
            eig.eigenvalues.min() >= -1e-9,
            "min eigenvalue {}",
            eig.eigenvalues.min()
        );
        assert!(comonotone_modulus(p.operator.map()).unwrap() >= 0.0);
    }

    #[test]
    fn example2_modulus_matches_declared_rho() {
        let p = example2();
        assert_eq!(p.rho, -0.5);
        assert_eq!(p.zero.coords(), &[0.0, 0.0]);
        assert_relative_eq!(
            comonotone_modulus(p.operator.map()).unwrap(),
            -0.5,
            epsilon = 1e-10
        );
        let params = p.recommended_params.unwrap();
        assert_eq!(
            (params.alpha, params.beta, params.gamma, params.eta),
            (10.0, 4.0, 7.0, 2.0)
        );
    }

    #[test]
    fn declared_zeros_are_zeros() {
        for p in [
            example1(),
            example2(),
            random_spd(5, 3),
            random_cohypomonotone(4, -0.4, 3).unwrap(),
        ] {
            let az = p.operator.map().apply(&p.zero).unwrap();
            assert!(az.norm() <= 1e-12, "{}: |A zero| = {}", p.name, az.norm());
        }
    }

    #[test]
    fn spd_generator_is_deterministic_and_psd() {
        let a = random_spd(4, 11);
        let b = random_spd(4, 11);
        assert_eq!(a.operator.map(), b.operator.map());
        for seed in 0..20 {
            let p = random_spd(3, seed);
            let m = comonotone_modulus(p.operator.map()).unwrap();
            assert!(m >= 0.0, "seed {seed}: modulus {m}");
        }
        let scalar = random_spd(1, 7);
        assert!(scalar.operator.map().entry(0, 0) >= 0.0);
    }

    #[test]
    fn cohypomonotone_generator_hits_the_target_modulus() {
        for seed in 0..20 {
            let p = random_cohypomonotone(6, -0.35, seed).unwrap();
            let m = comonotone_modulus(p.operator.map()).unwrap();
            assert_relative_eq!(m, -0.35, epsilon = 1e-9);
        }
        let a = random_cohypomonotone(2, -0.5, 9).unwrap();
        let b = random_cohypomonotone(2, -0.5, 9).unwrap();
        assert_eq!(a.operator.map(), b.operator.map());
        // reproduces a member of the family of the shipped rotation example
        assert_relative_eq!(
            comonotone_modulus(a.operator.map()).unwrap(),
            comonotone_modulus(example2().operator.map()).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn cohypomonotone_generator_rejects_bad_targets() {
        assert!(matches!(
            random_cohypomonotone(3, -0.5, 0),
            Err(Error::InfeasibleTarget { .. })
        ));
        assert!(matches!(
            random_cohypomonotone(4, 0.1, 0),
            Err(Error::InfeasibleTarget { .. })
        ));
        assert!(matches!(
            random_cohypomonotone(4, -1.5, 0),
            Err(Error::InfeasibleTarget { .. })
        ));
    }

    #[test]
    fn problem_file_round_trips() {
        for p in [
            example1(),
            example2(),
            random_cohypomonotone(4, -0.3, 5).unwrap(),
        ] {
            let text = write_problem(&p);
            let q = parse_problem(&text).unwrap();
            assert_eq!(q.name, p.name);
            assert_eq!(q.operator.map(), p.operator.map());
            assert_eq!(q.rho, p.rho);
            assert_eq!(q.zero, p.zero);
            assert_eq!(q.recommended_params, p.recommended_params);
        }
    }

    #[test]
    fn problem_file_rejects_malformed_input() {
        assert!(parse_problem("rho 0.5\nrow 1").is_err()); // missing dim
        assert!(parse_problem("dim 2\nrho 0\nrow 1 2\n").is_err()); // missing row
        assert!(parse_problem("dim 1\nrho 0\nrow x\n").is_err()); // bad number
        assert!(parse_problem("dim 1\nrho 0\nfrob 1\nrow 1\n").is_err()); // unknown key
        assert!(parse_problem("dim 1\nrho 0\nzero 1 2\nrow 1\n").is_err()); // zero dim
    }
}
