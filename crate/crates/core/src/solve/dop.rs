//! Dilution of precision from the positioning design matrix.

use nalgebra::Matrix4;

use crate::error::{Error, Result};

/// Per-axis and clock dilution-of-precision components, plus the covariance
/// diagonal they came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dop {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_z: f64,
    pub sigma_t: f64,
}

impl Dop {
    /// Combined spatial DOP, √(σx² + σy² + σz²).
    pub fn spatial(&self) -> f64 {
        (self.sigma_x * self.sigma_x + self.sigma_y * self.sigma_y + self.sigma_z * self.sigma_z)
            .sqrt()
    }
}

/// Compute DOP components from design-matrix rows `[∂ρ/∂x, ∂ρ/∂y, ∂ρ/∂z, 1]`.
///
/// The covariance is `Q = (AᵀA)⁻¹`; components come from its diagonal.
pub fn compute_dop(rows: &[[f64; 4]]) -> Result<Dop> {
    if rows.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "need >= 4 design rows for DOP, got {}",
            rows.len()
        )));
    }
    let mut gram = Matrix4::<f64>::zeros();
    for row in rows {
        for i in 0..4 {
            for j in 0..4 {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    // AᵀA is positive semidefinite; Cholesky rejects the rank-deficient case
    // that a generic inverse can silently turn into garbage.
    let q = gram
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::SingularGeometry("A^T A not invertible in DOP computation".into()))?;
    let diag = [q[(0, 0)], q[(1, 1)], q[(2, 2)], q[(3, 3)]];
    if diag.iter().any(|d| !d.is_finite() || *d < 0.0 || *d > 1e12) {
        return Err(Error::SingularGeometry(
            "ill-conditioned geometry produced invalid covariance".into(),
        ));
    }
    Ok(Dop {
        sigma_x: diag[0].sqrt(),
        sigma_y: diag[1].sqrt(),
        sigma_z: diag[2].sqrt(),
        sigma_t: diag[3].sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicated_rows_are_singular() {
        let row = [0.5, 0.5, 0.7071, 1.0];
        let rows = vec![row; 6];
        assert!(matches!(
            compute_dop(&rows),
            Err(Error::SingularGeometry(_))
        ));
    }

    #[test]
    fn too_few_rows() {
        let rows = vec![[1.0, 0.0, 0.0, 1.0]; 3];
        assert!(matches!(
            compute_dop(&rows),
            Err(Error::InsufficientData(_))
        ));
    }
}
