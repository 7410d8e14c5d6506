use crate::error::{Error, Result};
use crate::linalg::matrix::DenseMatrix;

/// Tolerance on `‖QᵀQ − I‖_max` accepted when validating external input.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// A `d × r` matrix with orthonormal columns, i.e. a point on the Stiefel
/// manifold. Rank zero is allowed and stands for the trivial subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    columns: DenseMatrix,
}

impl OrthonormalBasis {
    /// Wraps columns that are orthonormal by construction (QR output,
    /// eigenvectors). Not checked.
    pub(crate) fn from_orthonormal_columns(columns: DenseMatrix) -> Self {
        OrthonormalBasis { columns }
    }

    /// Validates `QᵀQ = I` within [`ORTHONORMAL_TOL`].
    pub fn try_new(columns: DenseMatrix) -> Result<Self> {
        if columns.cols() > columns.rows() {
            return Err(Error::DimensionMismatch(format!(
                "basis with {} columns in dimension {}",
                columns.cols(),
                columns.rows()
            )));
        }
        if !columns.is_finite() {
            return Err(Error::NotFinite("basis columns".into()));
        }
        let gram = columns.t_matmul(&columns)?;
        let dev = gram.sub(&DenseMatrix::identity(columns.cols()))?.max_abs();
        if dev > ORTHONORMAL_TOL {
            return Err(Error::InvalidConfig(format!(
                "columns are not orthonormal (max deviation {dev:e})"
            )));
        }
        Ok(OrthonormalBasis { columns })
    }

    /// The trivial subspace of `R^d`.
    pub fn empty(dim: usize) -> Self {
        OrthonormalBasis {
            columns: DenseMatrix::zeros(dim, 0),
        }
    }

    /// Basis made of the listed standard unit vectors.
    pub fn standard(dim: usize, axes: &[usize]) -> Result<Self> {
        let mut m = DenseMatrix::zeros(dim, axes.len());
        for (j, &axis) in axes.iter().enumerate() {
            if axis >= dim {
                return Err(Error::DimensionMismatch(format!(
                    "axis {axis} out of range for dimension {dim}"
                )));
            }
            m.set(axis, j, 1.0);
        }
        Self::try_new(m)
    }

    #[inline]
    pub fn ambient_dim(&self) -> usize {
        self.columns.rows()
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.columns.cols()
    }

    #[inline]
    pub fn columns(&self) -> &DenseMatrix {
        &self.columns
    }

    pub fn into_columns(self) -> DenseMatrix {
        self.columns
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.columns.column(j)
    }

    /// `‖QᵀQ − I‖_max`
    pub fn orthonormality_defect(&self) -> f64 {
        let gram = self
            .columns
            .t_matmul(&self.columns)
            .expect("square gram of own columns");
        gram.sub(&DenseMatrix::identity(self.rank()))
            .expect("same shape")
            .max_abs()
    }
}
