//! Kinematic propagation and motion-constrained local polynomial smoothing.
//!
//! Subset position tracks are smoothed over a rolling window by weighted
//! polynomial regression; a ball constraint around the motion-propagated
//! prediction keeps the smoothed point consistent with the platform's own
//! movement.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::EnuPoint;
use crate::types::MotionSample;

/// Platform kinematic state at one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    pub position: EnuPoint,
    /// Body-frame velocity, per-epoch units.
    pub velocity: Vector3<f64>,
    /// Body-frame acceleration, per-epoch² units.
    pub acceleration: Vector3<f64>,
    /// Roll, pitch, yaw in radians.
    pub orientation: Vector3<f64>,
}

impl KinematicState {
    /// Build from a raw motion sample, rescaling m/s and m/s² to per-epoch
    /// units for the unit-step propagation.
    pub fn from_motion(position: EnuPoint, motion: &MotionSample, epoch_seconds: f64) -> Self {
        let v = Vector3::from(motion.velocity) * epoch_seconds;
        let a = Vector3::from(motion.acceleration) * epoch_seconds * epoch_seconds;
        KinematicState {
            position,
            velocity: v,
            acceleration: a,
            orientation: Vector3::from(motion.orientation),
        }
    }
}

/// Body-to-ENU rotation, `R = R_roll · R_pitch · R_yaw`.
///
/// Body frame is right-forward-up. With zero angles, forward maps to north.
/// Yaw is the compass heading (positive toward east), pitch rotates about the
/// right axis, roll about the forward axis.
pub fn rotation_matrix(orientation: Vector3<f64>) -> Matrix3<f64> {
    let (roll, pitch, yaw) = (orientation.x, orientation.y, orientation.z);
    let (sr, cr) = roll.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sy, cy) = yaw.sin_cos();
    // Rotation about the body up axis by -yaw (compass convention).
    let r_yaw = Matrix3::new(cy, sy, 0.0, -sy, cy, 0.0, 0.0, 0.0, 1.0);
    // Rotation about the right axis.
    let r_pitch = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
    // Rotation about the forward axis.
    let r_roll = Matrix3::new(cr, 0.0, sr, 0.0, 1.0, 0.0, -sr, 0.0, cr);
    r_roll * r_pitch * r_yaw
}

/// One unit-step state propagation:
/// `p̄ = p + R v + ½ R a`, `v̄ = v + a`.
pub fn propagate_state(state: &KinematicState) -> (EnuPoint, Vector3<f64>) {
    let rot = rotation_matrix(state.orientation);
    let shift = rot * state.velocity + rot * state.acceleration * 0.5;
    let predicted = EnuPoint::from_vector(state.position.to_vector() + shift);
    (predicted, state.velocity + state.acceleration)
}

/// Coefficients of one windowed polynomial fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFit {
    /// 3 × (order + 1): rows are east/north/up, columns are powers of the
    /// scaled time variable.
    pub coefficients: Vec<[f64; 3]>,
    pub order: usize,
    pub window: usize,
    pub kernel_decay: f64,
}

/// Outcome of smoothing one subset track at one epoch.
#[derive(Debug, Clone)]
pub struct SmoothResult {
    pub fit: Option<PolyFit>,
    /// The smoothed position `W · t` at the window end.
    pub position: EnuPoint,
    /// Weighted objective value at the returned coefficients.
    pub objective: f64,
    /// RMS of the fit residuals over the window, meters.
    pub residual_rms: f64,
    /// True when the ball constraint was active (solution projected).
    pub constrained: bool,
    /// True when the window was too short and the raw position was returned
    /// with inflated uncertainty.
    pub fallback: bool,
}

/// Smoothing parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Rolling window size `w`; the fit sees epochs `t−w ..= t`.
    pub window: usize,
    /// Kernel decay `c` in `K(Δ) = exp(−c Δ²)`.
    pub kernel_decay: f64,
    pub order: usize,
    /// Constraint tolerance ε_t in meters.
    pub epsilon_t: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            window: 15,
            kernel_decay: 0.3,
            order: 2,
            epsilon_t: 1.5,
        }
    }
}

/// Kernel weight for a sample `delta` epochs before the window end.
pub fn kernel_weight(delta: f64, decay: f64) -> f64 {
    (-decay * delta * delta).exp()
}

/// Fit the constrained local polynomial to `track` and evaluate it at the
/// window end.
///
/// `track` holds `(epoch index, position)` pairs, at most `window + 1` of
/// them, ending at the current epoch `t`. The fit minimizes
/// `Σ K(t−t′) ‖W φ(t′) − p(t′)‖²`; when `constraint` is given, the evaluated
/// endpoint is restricted to the ball of radius ε_t around the propagated
/// prediction. The unconstrained minimizer is projected onto that ball via
/// the active-constraint Lagrangian, which is exact for this objective.
///
/// Fewer than `order + 1` usable points (or a singular window) falls back to
/// the last raw position with the fallback marker set.
pub fn fit_constrained_poly(
    track: &[(i64, EnuPoint)],
    t: i64,
    constraint: Option<(EnuPoint, f64)>,
    cfg: &FilterConfig,
) -> Result<SmoothResult> {
    if let Some((_, eps)) = constraint {
        if eps < 0.0 || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "constraint tolerance must be >= 0, got {eps}"
            )));
        }
    }
    let raw = track
        .iter()
        .rev()
        .find(|(ti, _)| *ti == t)
        .map(|(_, p)| *p)
        .or_else(|| track.last().map(|(_, p)| *p))
        .ok_or_else(|| Error::InsufficientData("empty track".into()))?;

    let window_start = t - cfg.window as i64;
    let mut points: Vec<(f64, EnuPoint)> = track
        .iter()
        .filter(|(ti, _)| *ti >= window_start && *ti <= t)
        .map(|(ti, p)| ((t - ti) as f64, *p))
        .collect();
    points.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    points.dedup_by(|a, b| a.0 == b.0);

    let n_coef = cfg.order + 1;
    if points.len() < n_coef {
        return Ok(SmoothResult {
            fit: None,
            position: raw,
            objective: 0.0,
            residual_rms: 0.0,
            constrained: false,
            fallback: true,
        });
    }

    // Time centered at the window end and scaled to [−1, 0] for conditioning.
    let scale = cfg.window.max(1) as f64;
    let phi = |delta: f64| -> DVector<f64> {
        let tau = -delta / scale;
        DVector::from_iterator(n_coef, (0..n_coef).map(|p| tau.powi(p as i32)))
    };

    let mut gram = DMatrix::<f64>::zeros(n_coef, n_coef);
    let mut rhs = [
        DVector::<f64>::zeros(n_coef),
        DVector::<f64>::zeros(n_coef),
        DVector::<f64>::zeros(n_coef),
    ];
    for (delta, p) in &points {
        let w = kernel_weight(*delta, cfg.kernel_decay);
        let basis = phi(*delta);
        gram += &basis * basis.transpose() * w;
        let coords = [p.east, p.north, p.up];
        for (d, y) in coords.into_iter().enumerate() {
            rhs[d] += &basis * (w * y);
        }
    }

    let chol = match gram.clone().cholesky() {
        Some(c) => c,
        None => {
            return Ok(SmoothResult {
                fit: None,
                position: raw,
                objective: 0.0,
                residual_rms: 0.0,
                constrained: false,
                fallback: true,
            })
        }
    };
    let mut coef: Vec<DVector<f64>> = rhs.iter().map(|b| chol.solve(b)).collect();

    // The evaluation basis at the window end is e1 after centering, so the
    // evaluated point is just the constant coefficient per axis.
    let eval = |coef: &[DVector<f64>]| Vector3::new(coef[0][0], coef[1][0], coef[2][0]);
    let unconstrained = eval(&coef);

    let mut constrained_flag = false;
    if let Some((anchor, eps)) = constraint {
        let anchor_v = anchor.to_vector();
        let offset = unconstrained - anchor_v;
        let dist = offset.norm();
        if dist > eps {
            // Project the endpoint onto the ball boundary; the coefficient
            // correction per axis is G⁻¹ e1 scaled to hit the target value.
            let target = if dist > 0.0 {
                anchor_v + offset * (eps / dist)
            } else {
                anchor_v
            };
            let mut e1 = DVector::<f64>::zeros(n_coef);
            e1[0] = 1.0;
            let g_inv_e1 = chol.solve(&e1);
            let h = g_inv_e1[0];
            if h.abs() < 1e-300 {
                return Err(Error::SingularGeometry(
                    "degenerate endpoint marginal in constrained fit".into(),
                ));
            }
            for d in 0..3 {
                let delta_v = target[d] - coef[d][0];
                coef[d] += &g_inv_e1 * (delta_v / h);
            }
            constrained_flag = true;
        }
    }

    let smoothed = eval(&coef);
    let mut objective = 0.0;
    let mut residual_sq = 0.0;
    for (delta, p) in &points {
        let w = kernel_weight(*delta, cfg.kernel_decay);
        let basis = phi(*delta);
        let fitted = Vector3::new(
            coef[0].dot(&basis),
            coef[1].dot(&basis),
            coef[2].dot(&basis),
        );
        let err = (fitted - p.to_vector()).norm_squared();
        objective += w * err;
        residual_sq += err;
    }

    let coefficients: Vec<[f64; 3]> = (0..n_coef)
        .map(|i| [coef[0][i], coef[1][i], coef[2][i]])
        .collect();
    Ok(SmoothResult {
        fit: Some(PolyFit {
            coefficients,
            order: cfg.order,
            window: cfg.window,
            kernel_decay: cfg.kernel_decay,
        }),
        position: EnuPoint::new(smoothed.x, smoothed.y, smoothed.z),
        objective,
        residual_rms: (residual_sq / points.len() as f64).sqrt(),
        constrained: constrained_flag,
        fallback: false,
    })
}

/// Fill gaps in a subset track from previously verified positions.
///
/// Returns the completed track and the epochs that were filled. Epochs with
/// neither a track point nor a verified position stay open and shrink the
/// effective window.
pub fn backfill_track(
    track: &[(i64, EnuPoint)],
    verified: &std::collections::BTreeMap<i64, EnuPoint>,
    window_start: i64,
    t: i64,
) -> (Vec<(i64, EnuPoint)>, Vec<i64>) {
    let mut filled = Vec::new();
    let mut complete: Vec<(i64, EnuPoint)> = Vec::new();
    for epoch in window_start..=t {
        if let Some(p) = track
            .iter()
            .find(|(ti, _)| *ti == epoch)
            .map(|(_, p)| *p)
        {
            complete.push((epoch, p));
        } else if let Some(p) = verified.get(&epoch) {
            complete.push((epoch, *p));
            filled.push(epoch);
        }
    }
    (complete, filled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_angles_identity() {
        let r = rotation_matrix(Vector3::zeros());
        assert!((r - Matrix3::identity()).norm() < 1e-15);
    }

    #[test]
    fn rotation_is_orthonormal() {
        let r = rotation_matrix(Vector3::new(0.3, -0.8, 2.1));
        assert!((r.transpose() * r - Matrix3::identity()).norm() < 1e-12);
        assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn yaw_90_maps_forward_to_east() {
        let r = rotation_matrix(Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2));
        let forward = Vector3::new(0.0, 1.0, 0.0);
        let world = r * forward;
        assert_abs_diff_eq!(world.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(world.y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(world.z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn stationary_state_stays_put() {
        let state = KinematicState {
            position: EnuPoint::new(5.0, 6.0, 7.0),
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            orientation: Vector3::new(0.1, 0.2, 0.3),
        };
        let (p, v) = propagate_state(&state);
        assert_eq!(p, state.position);
        assert_eq!(v, Vector3::zeros());
    }

    #[test]
    fn unit_forward_velocity_moves_north_at_zero_yaw() {
        let state = KinematicState {
            position: EnuPoint::new(0.0, 0.0, 0.0),
            velocity: Vector3::new(0.0, 1.0, 0.0),
            acceleration: Vector3::zeros(),
            orientation: Vector3::zeros(),
        };
        let (p, _) = propagate_state(&state);
        assert_abs_diff_eq!(p.north, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.east, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_track_is_reproduced_exactly() {
        let cfg = FilterConfig::default();
        // p(t) quadratic in t is exactly representable at order 2.
        let track: Vec<(i64, EnuPoint)> = (0..=15)
            .map(|t| {
                let tf = t as f64;
                (
                    t,
                    EnuPoint::new(1.0 + 2.0 * tf + 0.05 * tf * tf, -3.0 + 0.5 * tf, 0.2 * tf),
                )
            })
            .collect();
        let res = fit_constrained_poly(&track, 15, None, &cfg).unwrap();
        assert!(!res.fallback);
        let expect = track.last().unwrap().1;
        assert!(res.position.distance(expect) < 1e-9);
    }

    #[test]
    fn zero_tolerance_pins_to_prediction() {
        let cfg = FilterConfig::default();
        let track: Vec<(i64, EnuPoint)> = (0..=10)
            .map(|t| (t, EnuPoint::new(t as f64, 0.0, 0.0)))
            .collect();
        let anchor = EnuPoint::new(42.0, 9.0, -1.0);
        let res = fit_constrained_poly(&track, 10, Some((anchor, 0.0)), &cfg).unwrap();
        assert!(res.constrained);
        assert!(res.position.distance(anchor) < 1e-9);
    }

    #[test]
    fn short_window_falls_back_to_raw() {
        let cfg = FilterConfig::default();
        let track = vec![(9, EnuPoint::new(1.0, 2.0, 3.0)), (10, EnuPoint::new(2.0, 2.0, 3.0))];
        let res = fit_constrained_poly(&track, 10, None, &cfg).unwrap();
        assert!(res.fallback);
        assert_eq!(res.position, EnuPoint::new(2.0, 2.0, 3.0));
    }

    #[test]
    fn backfill_fills_and_flags() {
        let track = vec![
            (5, EnuPoint::new(5.0, 0.0, 0.0)),
            (7, EnuPoint::new(7.0, 0.0, 0.0)),
        ];
        let mut verified = std::collections::BTreeMap::new();
        verified.insert(6, EnuPoint::new(6.0, 0.0, 0.0));
        let (complete, filled) = backfill_track(&track, &verified, 5, 7);
        assert_eq!(complete.len(), 3);
        assert_eq!(filled, vec![6]);
    }

    #[test]
    fn backfill_no_gaps_is_identity() {
        let track = vec![
            (5, EnuPoint::new(5.0, 0.0, 0.0)),
            (6, EnuPoint::new(6.0, 0.0, 0.0)),
        ];
        let verified = std::collections::BTreeMap::new();
        let (complete, filled) = backfill_track(&track, &verified, 5, 6);
        assert_eq!(complete, track);
        assert!(filled.is_empty());
    }
}
