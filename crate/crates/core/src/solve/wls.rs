//! Terrestrial network positioning.
//!
//! Two solvers live here. `solve_weighted_ls` minimizes the inverse-range
//! weighted objective `Σ (‖p − α_j‖ / ρ_j)²` used by geolocation APIs, which
//! pulls the estimate toward nearby anchors and admits a closed-form optimum.
//! `solve_range_ls` is plain range multilateration, `min Σ (‖p − α_j‖ − ρ_j)²`,
//! which reproduces the generating point exactly on consistent ranges.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::geo::EnuPoint;
use crate::solve::SolverConfig;

/// A planar least-squares position with its objective value at the optimum.
#[derive(Debug, Clone, Copy)]
pub struct LsSolution {
    pub position: EnuPoint,
    /// Objective value at the optimum (dimensionless for the weighted form,
    /// m² for the range form).
    pub residual: f64,
    /// Set when the anchor geometry is collinear or the solve fell back;
    /// downstream fusion inflates the uncertainty instead of failing.
    pub degenerate: bool,
}

/// Minimize `Σ (‖p − α_j‖ / ρ_j)²` over the horizontal plane at `fixed_up`.
///
/// The gradient vanishes at the inverse-range-squared weighted centroid of the
/// anchors, so the optimum is closed-form.
pub fn solve_weighted_ls(ranges: &[(EnuPoint, f64)], fixed_up: f64) -> Result<LsSolution> {
    if ranges.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "weighted LS needs >= 3 ranges, got {}",
            ranges.len()
        )));
    }
    let mut weight_sum = 0.0;
    let mut acc = Vector2::zeros();
    for (anchor, rho) in ranges {
        if !anchor.is_finite() || !rho.is_finite() || *rho <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "weighted LS requires finite anchors and positive ranges, got rho={rho}"
            )));
        }
        let w = 1.0 / (rho * rho);
        weight_sum += w;
        acc += Vector2::new(anchor.east, anchor.north) * w;
    }
    let center = acc / weight_sum;
    let position = EnuPoint::new(center.x, center.y, fixed_up);
    Ok(LsSolution {
        residual: weighted_objective(ranges, position),
        position,
        degenerate: anchors_collinear(ranges),
    })
}

/// The Eq-style weighted objective `Σ (‖p − α_j‖ / ρ_j)²` at `p`.
pub fn weighted_objective(ranges: &[(EnuPoint, f64)], p: EnuPoint) -> f64 {
    ranges
        .iter()
        .map(|(anchor, rho)| {
            let d = p.distance(*anchor);
            (d / rho) * (d / rho)
        })
        .sum()
}

/// Horizontal collinearity check on the anchor layout.
fn anchors_collinear(ranges: &[(EnuPoint, f64)]) -> bool {
    let n = ranges.len() as f64;
    let mean: Vector2<f64> = ranges
        .iter()
        .map(|(a, _)| Vector2::new(a.east, a.north))
        .sum::<Vector2<f64>>()
        / n;
    let mut cov = Matrix2::<f64>::zeros();
    let mut scale: f64 = 1.0;
    for (a, _) in ranges {
        let d = Vector2::new(a.east, a.north) - mean;
        cov += d * d.transpose();
        scale = scale.max(d.norm_squared());
    }
    cov /= n;
    // Smallest eigenvalue of the 2x2 covariance.
    let tr = cov.trace();
    let det = cov.determinant();
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let lambda_min = tr / 2.0 - disc;
    lambda_min <= 1e-9 * scale
}

/// Range multilateration: Gauss-Newton on `min Σ (‖p − α_j‖ − ρ_j)²` in the
/// horizontal plane. Initialized at the anchor centroid.
pub fn solve_range_ls(
    ranges: &[(EnuPoint, f64)],
    fixed_up: f64,
    cfg: &SolverConfig,
) -> Result<LsSolution> {
    if ranges.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "range multilateration needs >= 3 ranges, got {}",
            ranges.len()
        )));
    }
    let n = ranges.len() as f64;
    let mut p = Vector2::zeros();
    for (anchor, _) in ranges {
        p += Vector2::new(anchor.east, anchor.north);
    }
    p /= n;
    // Nudge off an exact anchor location so range gradients are defined.
    if ranges
        .iter()
        .any(|(a, _)| (p - Vector2::new(a.east, a.north)).norm() < 1e-9)
    {
        p += Vector2::new(0.1, 0.1);
    }

    let degenerate = anchors_collinear(ranges);
    let mut last_step = f64::INFINITY;
    for _ in 0..cfg.max_iterations.max(50) {
        let mut gram = Matrix2::<f64>::zeros();
        let mut rhs = Vector2::zeros();
        for (anchor, rho) in ranges {
            let d = p - Vector2::new(anchor.east, anchor.north);
            let dist_h = d.norm();
            let du = fixed_up - anchor.up;
            let dist = (dist_h * dist_h + du * du).sqrt().max(1e-9);
            let grad = d / dist;
            let r = rho - dist;
            gram += grad * grad.transpose();
            rhs += grad * r;
        }
        let step = match gram.try_inverse() {
            Some(inv) => inv * rhs,
            None => {
                return Err(Error::SingularGeometry(
                    "degenerate geometry in range multilateration".into(),
                ))
            }
        };
        p += step;
        last_step = step.norm();
        if last_step < cfg.step_tolerance {
            break;
        }
    }
    if !last_step.is_finite() {
        return Err(Error::NonConvergence {
            iterations: cfg.max_iterations,
            last_step,
        });
    }
    let position = EnuPoint::new(p.x, p.y, fixed_up);
    let residual = ranges
        .iter()
        .map(|(anchor, rho)| {
            let r = position.distance(*anchor) - rho;
            r * r
        })
        .sum();
    Ok(LsSolution {
        position,
        residual,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_equal_ranges_give_center() {
        let ranges = vec![
            (EnuPoint::new(0.0, 0.0, 0.0), 10.0),
            (EnuPoint::new(1.0, 0.0, 0.0), 10.0),
            (EnuPoint::new(0.0, 1.0, 0.0), 10.0),
            (EnuPoint::new(1.0, 1.0, 0.0), 10.0),
        ];
        let sol = solve_weighted_ls(&ranges, 0.0).unwrap();
        assert!((sol.position.east - 0.5).abs() < 1e-12);
        assert!((sol.position.north - 0.5).abs() < 1e-12);
        assert!(!sol.degenerate);
    }

    #[test]
    fn near_coincident_anchor_dominates() {
        // Target sits (almost) on the first anchor; its tiny range dominates
        // the 1/rho^2 weights.
        let target = EnuPoint::new(3.0, 7.0, 0.0);
        let anchors = [
            EnuPoint::new(3.0, 7.0, 0.0),
            EnuPoint::new(50.0, 0.0, 0.0),
            EnuPoint::new(0.0, 60.0, 0.0),
        ];
        let ranges: Vec<_> = anchors
            .iter()
            .map(|a| (*a, target.distance(*a).max(1e-3)))
            .collect();
        let sol = solve_weighted_ls(&ranges, 0.0).unwrap();
        assert!(sol.position.distance_2d(target) < 1e-2);
    }

    #[test]
    fn collinear_layout_is_flagged() {
        let ranges = vec![
            (EnuPoint::new(0.0, 0.0, 0.0), 5.0),
            (EnuPoint::new(10.0, 0.0, 0.0), 5.0),
            (EnuPoint::new(20.0, 0.0, 0.0), 5.0),
        ];
        let sol = solve_weighted_ls(&ranges, 0.0).unwrap();
        assert!(sol.degenerate);
    }

    #[test]
    fn range_ls_recovers_truth_on_consistent_ranges() {
        let truth = EnuPoint::new(12.0, -8.0, 0.0);
        let anchors = [
            EnuPoint::new(0.0, 0.0, 0.0),
            EnuPoint::new(40.0, 5.0, 0.0),
            EnuPoint::new(-10.0, 30.0, 0.0),
            EnuPoint::new(25.0, -35.0, 0.0),
        ];
        let ranges: Vec<_> = anchors.iter().map(|a| (*a, truth.distance(*a))).collect();
        let sol = solve_range_ls(&ranges, 0.0, &SolverConfig::default()).unwrap();
        assert!(sol.position.distance_2d(truth) < 1e-6);
        assert!(sol.residual < 1e-9);
    }
}
