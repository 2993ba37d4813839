//! GNSS single point positioning from pseudoranges.
//!
//! Solves `ρ_j = ‖p − s_j‖ + b` for the receiver position `p` and the common
//! clock-bias range `b` by Gauss-Newton iteration on the linearized system.

use nalgebra::{DMatrix, DVector, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::geo::{EnuPoint, WGS84_A};
use crate::solve::{compute_dop, Dop, SolverConfig};

/// Result of a GNSS least-squares solve over one satellite subset.
#[derive(Debug, Clone)]
pub struct GnssSolution {
    pub position: EnuPoint,
    /// Receiver clock bias expressed as a range, c·δt, in meters.
    pub clock_bias: f64,
    /// Post-fit pseudorange residuals, one per satellite, in meters.
    pub residuals: Vec<f64>,
    pub dop: Dop,
    pub iterations: usize,
}

/// Solve receiver position and clock bias from `(satellite ENU, pseudorange)` pairs.
pub fn solve_gnss_ls(
    observations: &[(EnuPoint, f64)],
    cfg: &SolverConfig,
) -> Result<GnssSolution> {
    if observations.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "GNSS positioning needs >= 4 pseudoranges, got {}",
            observations.len()
        )));
    }
    for (s, rho) in observations {
        if !s.is_finite() || !rho.is_finite() {
            return Err(Error::InvalidArgument("non-finite GNSS observation".into()));
        }
    }

    let mut state = initial_state(observations);
    let n = observations.len();
    let mut last_step = f64::INFINITY;

    for iteration in 0..cfg.max_iterations {
        let mut jacobian = DMatrix::<f64>::zeros(n, 4);
        let mut residual = DVector::<f64>::zeros(n);
        let p = Vector3::new(state[0], state[1], state[2]);
        for (j, (sat, rho)) in observations.iter().enumerate() {
            let delta = p - sat.to_vector();
            let range = delta.norm();
            if range < 1.0 {
                return Err(Error::SingularGeometry(
                    "iterate collapsed onto a satellite position".into(),
                ));
            }
            let unit = delta / range;
            jacobian[(j, 0)] = unit.x;
            jacobian[(j, 1)] = unit.y;
            jacobian[(j, 2)] = unit.z;
            jacobian[(j, 3)] = 1.0;
            residual[j] = rho - (range + state[3]);
        }

        let gram = jacobian.transpose() * &jacobian;
        let rhs = jacobian.transpose() * &residual;
        let step = gram
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .ok_or_else(|| Error::SingularGeometry("rank-deficient satellite geometry".into()))?;

        state += Vector4::new(step[0], step[1], step[2], step[3]);
        last_step = (step[0] * step[0] + step[1] * step[1] + step[2] * step[2]).sqrt();
        if last_step < cfg.step_tolerance {
            return finish(observations, state, iteration + 1);
        }
    }
    Err(Error::NonConvergence {
        iterations: cfg.max_iterations,
        last_step,
    })
}

/// Earth-center + mean-satellite-direction heuristic, in the local ENU frame.
fn initial_state(observations: &[(EnuPoint, f64)]) -> Vector4<f64> {
    // The ENU origin sits on the ellipsoid surface, so the geocenter is
    // roughly one earth radius straight down.
    let earth_center = Vector3::new(0.0, 0.0, -WGS84_A);
    let mut mean_dir = Vector3::zeros();
    for (sat, _) in observations {
        let d = sat.to_vector() - earth_center;
        let norm = d.norm();
        if norm > 0.0 {
            mean_dir += d / norm;
        }
    }
    let start = if mean_dir.norm() > 1e-9 {
        earth_center + mean_dir.normalize() * WGS84_A
    } else {
        Vector3::zeros()
    };
    Vector4::new(start.x, start.y, start.z, 0.0)
}

fn finish(
    observations: &[(EnuPoint, f64)],
    state: Vector4<f64>,
    iterations: usize,
) -> Result<GnssSolution> {
    let p = Vector3::new(state[0], state[1], state[2]);
    let mut rows = Vec::with_capacity(observations.len());
    let mut residuals = Vec::with_capacity(observations.len());
    for (sat, rho) in observations {
        let delta = p - sat.to_vector();
        let range = delta.norm();
        let unit = delta / range;
        rows.push([unit.x, unit.y, unit.z, 1.0]);
        residuals.push(rho - (range + state[3]));
    }
    let dop = compute_dop(&rows)?;
    Ok(GnssSolution {
        position: EnuPoint::new(state[0], state[1], state[2]),
        clock_bias: state[3],
        residuals,
        dop,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Four satellites on a tetrahedron at GNSS orbit radius.
    pub(crate) fn tetrahedron_sats(radius: f64) -> Vec<EnuPoint> {
        let dirs = [
            (1.0, 1.0, 1.0),
            (1.0, -1.0, -1.0),
            (-1.0, 1.0, -1.0),
            (-1.0, -1.0, 1.0),
        ];
        dirs.iter()
            .map(|(x, y, z)| {
                let v = Vector3::new(*x, *y, *z).normalize() * radius;
                EnuPoint::new(v.x, v.y, v.z)
            })
            .collect()
    }

    fn ranges(sats: &[EnuPoint], p: EnuPoint, bias: f64) -> Vec<(EnuPoint, f64)> {
        sats.iter()
            .map(|s| (*s, s.distance(p) + bias))
            .collect()
    }

    #[test]
    fn exact_ranges_recover_position() {
        let sats = tetrahedron_sats(20_200_000.0);
        let truth = EnuPoint::new(120.0, -40.0, 12.0);
        let sol = solve_gnss_ls(&ranges(&sats, truth, 0.0), &SolverConfig::default()).unwrap();
        assert!(sol.position.distance(truth) < 1e-6);
        assert!(sol.clock_bias.abs() < 1e-6);
        assert_eq!(sol.residuals.len(), 4);
    }

    #[test]
    fn common_bias_absorbed_by_clock() {
        let sats = tetrahedron_sats(20_200_000.0);
        let truth = EnuPoint::new(120.0, -40.0, 12.0);
        let sol = solve_gnss_ls(&ranges(&sats, truth, 300.0), &SolverConfig::default()).unwrap();
        assert!(sol.position.distance(truth) < 1e-6);
        assert!((sol.clock_bias - 300.0).abs() < 1e-6);
    }

    #[test]
    fn rank_deficient_geometry_fails() {
        let sat = EnuPoint::new(20_200_000.0, 0.0, 0.0);
        let obs = vec![(sat, 20_200_000.0); 5];
        assert!(matches!(
            solve_gnss_ls(&obs, &SolverConfig::default()),
            Err(Error::SingularGeometry(_))
        ));
    }

    #[test]
    fn too_few_satellites() {
        let sats = tetrahedron_sats(20_200_000.0);
        let obs = ranges(&sats[..3], EnuPoint::new(0.0, 0.0, 0.0), 0.0);
        assert!(matches!(
            solve_gnss_ls(&obs, &SolverConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
