//! GeoIP positioning: centroid of the intersection of range circles.

use crate::error::{Error, Result};
use crate::geo::{EnuPoint, SPEED_OF_LIGHT};
use crate::solve::wls::{solve_weighted_ls, weighted_objective};
use crate::solve::SolverConfig;

/// Default RTT-to-distance calibration factor.
pub const DEFAULT_RTT_GAMMA: f64 = 0.5;

/// Map a raw round-trip time to a one-way distance, `d = (c/2) · rtt · γ`.
///
/// γ ∈ (0, 1] absorbs store-and-forward and routing overhead and is
/// calibratable per deployment.
pub fn rtt_to_range(rtt_seconds: f64, gamma: f64) -> f64 {
    SPEED_OF_LIGHT / 2.0 * rtt_seconds * gamma
}

#[derive(Debug, Clone, Copy)]
pub struct GeoipSolution {
    pub position: EnuPoint,
    /// Weighted objective value at the returned position.
    pub residual: f64,
    /// True when the circle intersection was empty and the solve fell back to
    /// weighted least squares.
    pub fallback: bool,
    /// Grid cell size of the intersection sampler, meters.
    pub resolution: f64,
}

/// Position from `(server ENU, distance)` circles.
///
/// Samples a dense grid over the common bounding box of all circles, keeps
/// the points inside every circle, and returns their centroid. An empty
/// intersection falls back to weighted least squares with a degeneracy
/// marker.
pub fn solve_geoip(
    circles: &[(EnuPoint, f64)],
    fixed_up: f64,
    cfg: &SolverConfig,
) -> Result<GeoipSolution> {
    if circles.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "GeoIP positioning needs >= 3 RTT distances, got {}",
            circles.len()
        )));
    }
    for (c, r) in circles {
        if !c.is_finite() || !r.is_finite() || *r <= 0.0 {
            return Err(Error::InvalidArgument(
                "GeoIP circles need finite centers and positive radii".into(),
            ));
        }
    }

    // The intersection, if any, lies inside every circle's bounding square.
    let mut min_e = f64::NEG_INFINITY;
    let mut max_e = f64::INFINITY;
    let mut min_n = f64::NEG_INFINITY;
    let mut max_n = f64::INFINITY;
    for (c, r) in circles {
        min_e = min_e.max(c.east - r);
        max_e = max_e.min(c.east + r);
        min_n = min_n.max(c.north - r);
        max_n = max_n.min(c.north + r);
    }

    let grid = cfg.geoip_grid.max(8);
    let resolution = ((max_e - min_e).max(max_n - min_n) / grid as f64).max(1e-9);

    let mut count = 0usize;
    let mut sum_e = 0.0;
    let mut sum_n = 0.0;
    if max_e > min_e && max_n > min_n {
        let step_e = (max_e - min_e) / grid as f64;
        let step_n = (max_n - min_n) / grid as f64;
        for ie in 0..grid {
            let e = min_e + (ie as f64 + 0.5) * step_e;
            for in_ in 0..grid {
                let n = min_n + (in_ as f64 + 0.5) * step_n;
                if circles
                    .iter()
                    .all(|(c, r)| (e - c.east).hypot(n - c.north) <= *r)
                {
                    count += 1;
                    sum_e += e;
                    sum_n += n;
                }
            }
        }
    }

    if count == 0 {
        let ls = solve_weighted_ls(circles, fixed_up)?;
        return Ok(GeoipSolution {
            position: ls.position,
            residual: ls.residual,
            fallback: true,
            resolution,
        });
    }

    let position = EnuPoint::new(sum_e / count as f64, sum_n / count as f64, fixed_up);
    Ok(GeoipSolution {
        position,
        residual: weighted_objective(circles, position),
        fallback: false,
        resolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tight_consistent_circles_find_the_point() {
        let truth = EnuPoint::new(1_000.0, -2_000.0, 0.0);
        let servers = [
            EnuPoint::new(80_000.0, 10_000.0, 0.0),
            EnuPoint::new(-60_000.0, 50_000.0, 0.0),
            EnuPoint::new(-10_000.0, -90_000.0, 0.0),
        ];
        // Radii 1% above true distance keep the intersection small but open.
        let circles: Vec<_> = servers
            .iter()
            .map(|s| (*s, truth.distance_2d(*s) * 1.01))
            .collect();
        let sol = solve_geoip(&circles, 0.0, &SolverConfig::default()).unwrap();
        assert!(!sol.fallback);
        assert!(
            sol.position.distance_2d(truth) <= 2.0 * sol.resolution + 2_000.0,
            "off by {} m at resolution {}",
            sol.position.distance_2d(truth),
            sol.resolution
        );
    }

    #[test]
    fn disjoint_circles_fall_back() {
        let circles = vec![
            (EnuPoint::new(0.0, 0.0, 0.0), 10.0),
            (EnuPoint::new(1_000.0, 0.0, 0.0), 10.0),
            (EnuPoint::new(0.0, 1_000.0, 0.0), 10.0),
        ];
        let sol = solve_geoip(&circles, 0.0, &SolverConfig::default()).unwrap();
        assert!(sol.fallback);
    }

    #[test]
    fn too_few_circles() {
        let circles = vec![
            (EnuPoint::new(0.0, 0.0, 0.0), 10.0),
            (EnuPoint::new(5.0, 0.0, 0.0), 10.0),
        ];
        assert!(matches!(
            solve_geoip(&circles, 0.0, &SolverConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }
}
