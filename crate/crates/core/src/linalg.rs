//! Finite-dimensional points and dense square maps.
//!
//! Both types validate their invariants at construction: every entry must be
//! finite and dimensions must be positive (and square for [`LinearMap`]).
//! They deref to the underlying `nalgebra` storage for arithmetic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A point (or velocity) of the ambient real space.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(DVector<f64>);

impl Vector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        Self::from_dvector(DVector::from_vec(coords))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(coords.to_vec())
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(DVector::zeros(dim.max(1)))
    }

    pub fn from_dvector(v: DVector<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::Invalid {
                what: "vector",
                why: "dimension must be positive".into(),
            });
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid {
                what: "vector",
                why: "coordinates must be finite".into(),
            });
        }
        Ok(Vector(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn into_dvector(self) -> DVector<f64> {
        self.0
    }
}

impl std::ops::Deref for Vector {
    type Target = DVector<f64>;

    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// A dense square real matrix with row-major constructor semantics.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearMap(DMatrix<f64>);

impl LinearMap {
    /// Builds from row-major entries; `entries.len()` must equal `dim * dim`.
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Invalid {
                what: "linear map",
                why: "dimension must be positive".into(),
            });
        }
        if entries.len() != dim * dim {
            return Err(Error::Invalid {
                what: "linear map",
                why: format!("expected {} entries, got {}", dim * dim, entries.len()),
            });
        }
        Self::from_dmatrix(DMatrix::from_row_slice(dim, dim, &entries))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::Invalid {
                    what: "linear map",
                    why: format!("row of length {} in a {}x{} matrix", row.len(), dim, dim),
                });
            }
            entries.extend_from_slice(row);
        }
        Self::from_row_major(dim, entries)
    }

    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::Invalid {
                what: "linear map",
                why: format!(
                    "matrix must be square and nonempty, got {}x{}",
                    m.nrows(),
                    m.ncols()
                ),
            });
        }
        if m.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid {
                what: "linear map",
                why: "entries must be finite".into(),
            });
        }
        Ok(LinearMap(m))
    }

    pub fn identity(dim: usize) -> Self {
        LinearMap(DMatrix::identity(dim.max(1), dim.max(1)))
    }

    pub fn zeros(dim: usize) -> Self {
        LinearMap(DMatrix::zeros(dim.max(1), dim.max(1)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Symmetric part `(A + A^T) / 2`.
    pub fn symmetric_part(&self) -> DMatrix<f64> {
        (&self.0 + self.0.transpose()) * 0.5
    }

    /// Gram matrix `A^T A`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.0.transpose() * &self.0
    }

    /// Smallest eigenvalue of the symmetric part; nonnegative exactly when
    /// the map is monotone.
    pub fn symmetric_min_eigenvalue(&self) -> f64 {
        nalgebra::SymmetricEigen::new(self.symmetric_part())
            .eigenvalues
            .min()
    }

    pub fn apply(&self, x: &Vector) -> Result<Vector> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        Vector::from_dvector(&self.0 * &**x)
    }

    pub(crate) fn apply_dvec_into(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.gemv(1.0, &self.0, x, 0.0);
    }
}

impl std::ops::Deref for LinearMap {
    type Target = DMatrix<f64>;

    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}
