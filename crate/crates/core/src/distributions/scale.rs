use crate::linalg::{Lu, Matrix};
use crate::{Error, Result};

/// Structure of a scale matrix, which decides how `A_t = t A + (1 − t) I` is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleKind {
    Identity,
    Diagonal,
    /// Lower triangular with positive diagonal (e.g. a Cholesky factor).
    LowerTriangular,
    /// Dense with positive-definite symmetric part (includes SPD matrices).
    General,
}

/// A validated scale matrix `A_j`.
///
/// Accepted matrices keep `t A + (1 − t) I` nonsingular with positive
/// determinant for every `t ∈ [0, 1]`.
#[derive(Debug, Clone)]
pub struct Scale {
    matrix: Matrix,
    kind: ScaleKind,
    lu: Option<Lu>,
    log_det: f64,
}

impl Scale {
    pub fn new(matrix: Matrix) -> std::result::Result<Self, String> {
        if matrix.as_slice().iter().any(|v| !v.is_finite()) {
            return Err("entries must be finite".into());
        }
        let n = matrix.dim();
        let kind = if matrix.is_identity(0.0) {
            ScaleKind::Identity
        } else if matrix.is_diagonal() {
            ScaleKind::Diagonal
        } else if matrix.is_lower_triangular() {
            ScaleKind::LowerTriangular
        } else {
            ScaleKind::General
        };
        match kind {
            ScaleKind::Identity => {}
            ScaleKind::Diagonal | ScaleKind::LowerTriangular => {
                if let Some(i) = (0..n).find(|&i| !(matrix[(i, i)] > 0.0)) {
                    return Err(format!("diagonal entry {i} is not positive"));
                }
            }
            ScaleKind::General => {
                if matrix.symmetric_part().cholesky().is_none() {
                    return Err(
                        "matrix is neither lower triangular with positive diagonal nor has a positive-definite symmetric part"
                            .into(),
                    );
                }
            }
        }
        let (lu, log_det) = match kind {
            ScaleKind::General => {
                let lu = matrix.lu().ok_or("matrix is singular")?;
                let ld = lu.log_abs_det();
                (Some(lu), ld)
            }
            _ => ((None), (0..n).map(|i| matrix[(i, i)].ln()).sum()),
        };
        Ok(Scale {
            matrix,
            kind,
            lu,
            log_det,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn kind(&self) -> ScaleKind {
        self.kind
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `t A + (1 − t) I` as a dense matrix.
    pub fn interpolated(&self, t: f64) -> Matrix {
        let n = self.matrix.dim();
        let mut m = self.matrix.scale(t);
        for i in 0..n {
            m[(i, i)] += 1.0 - t;
        }
        m
    }

    /// LU factorization of `t A + (1 − t) I`, only needed for `General` scales.
    pub fn interpolated_lu(&self, t: f64) -> Option<Lu> {
        match self.kind {
            ScaleKind::General if t == 1.0 => self.lu.clone(),
            ScaleKind::General => self.interpolated(t).lu(),
            _ => None,
        }
    }

    /// Solves `(t A + (1 − t) I) y = u` and returns `log det(t A + (1 − t) I)`.
    ///
    /// `lu` must be the factorization of the interpolated matrix at this `t`
    /// when the scale is `General`; it is computed here if missing.
    pub fn interpolated_solve(
        &self,
        t: f64,
        u: &[f64],
        y: &mut [f64],
        lu: Option<&Lu>,
    ) -> Result<f64> {
        if self.kind != ScaleKind::General {
            self.interpolated_solve_only(t, u, y, None)?;
            return Ok(self.interpolated_log_det(t, None));
        }
        let owned;
        let lu = match lu {
            Some(lu) => lu,
            None => {
                owned = self.general_lu(t)?;
                &owned
            }
        };
        lu.solve_into(u, y);
        Ok(lu.log_abs_det())
    }

    /// [`interpolated_solve`](Self::interpolated_solve) without the determinant.
    pub(crate) fn interpolated_solve_only(
        &self,
        t: f64,
        u: &[f64],
        y: &mut [f64],
        lu: Option<&Lu>,
    ) -> Result<()> {
        let n = self.matrix.dim();
        match self.kind {
            ScaleKind::Identity => y.copy_from_slice(u),
            ScaleKind::Diagonal => {
                for i in 0..n {
                    y[i] = u[i] / (t * self.matrix[(i, i)] + (1.0 - t));
                }
            }
            ScaleKind::LowerTriangular => {
                for i in 0..n {
                    let row = self.matrix.row(i);
                    let mut s = u[i];
                    for k in 0..i {
                        s -= t * row[k] * y[k];
                    }
                    y[i] = s / (t * row[i] + (1.0 - t));
                }
            }
            ScaleKind::General => match lu {
                Some(lu) => lu.solve_into(u, y),
                None => self.general_lu(t)?.solve_into(u, y),
            },
        }
        Ok(())
    }

    /// `log det(t A + (1 − t) I)`.
    pub(crate) fn interpolated_log_det(&self, t: f64, lu: Option<&Lu>) -> f64 {
        let n = self.matrix.dim();
        match self.kind {
            ScaleKind::Identity => 0.0,
            ScaleKind::Diagonal | ScaleKind::LowerTriangular => (0..n)
                .map(|i| (t * self.matrix[(i, i)] + (1.0 - t)).ln())
                .sum(),
            ScaleKind::General => match lu {
                Some(lu) => lu.log_abs_det(),
                None => self.general_lu(t).map_or(f64::NAN, |lu| lu.log_abs_det()),
            },
        }
    }

    fn general_lu(&self, t: f64) -> Result<Lu> {
        if t == 1.0 {
            return Ok(self.lu.clone().expect("general scale keeps its LU"));
        }
        self.interpolated(t)
            .lu()
            .ok_or_else(|| Error::Numerical(format!("interpolated scale singular at t = {t}")))
    }
}
