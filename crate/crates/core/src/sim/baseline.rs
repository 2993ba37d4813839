//! Comparison baselines: the network-vs-GNSS distance check and a
//! constant-velocity Kalman innovation gate.

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::error::Result;
use crate::geo::{wgs84_to_enu, EnuPoint, GeoPoint};
use crate::motion::rotation_matrix;
use crate::solve::{solve_gnss_ls, solve_weighted_ls, PathLossModel, SolverConfig};
use crate::types::{AnchorRegistry, Epoch, Infrastructure, ValueKind};

fn gnss_fix(epoch: &Epoch, origin: GeoPoint, solver: &SolverConfig) -> Option<EnuPoint> {
    let measurements = epoch.measurements_for(Infrastructure::Gnss);
    if measurements.len() < 4 {
        return None;
    }
    let mut obs = Vec::new();
    for m in measurements {
        let anchor = epoch.gnss_anchors.iter().find(|a| a.id == m.anchor_id)?;
        let enu = wgs84_to_enu(anchor.position, origin).ok()?;
        obs.push((enu, m.value));
    }
    solve_gnss_ls(&obs, solver).ok().map(|s| s.position)
}

fn network_fix(
    epoch: &Epoch,
    registry: &AnchorRegistry,
    origin: GeoPoint,
    path_loss: &BTreeMap<Infrastructure, PathLossModel>,
) -> Option<EnuPoint> {
    let mut ranges = Vec::new();
    for infra in [
        Infrastructure::Wifi,
        Infrastructure::Cell,
        Infrastructure::Bluetooth,
    ] {
        let model = path_loss.get(&infra).copied().unwrap_or_default();
        for m in epoch.measurements_for(infra) {
            if m.value_kind != ValueKind::Rssi {
                continue;
            }
            let Some(anchor) = registry.get(infra, &m.anchor_id) else {
                continue;
            };
            let Ok(enu) = wgs84_to_enu(anchor.position, origin) else {
                continue;
            };
            ranges.push((enu, model.rssi_to_range(m.value)));
        }
    }
    if ranges.len() < 3 {
        return None;
    }
    solve_weighted_ls(&ranges, 0.0).ok().map(|s| s.position)
}

/// Distance baseline: per-epoch distance between the network-derived position
/// and the raw GNSS position. `None` when either side is unavailable.
pub fn baseline_distance_detector(
    epochs: &[Epoch],
    registry: &AnchorRegistry,
    origin: GeoPoint,
    path_loss: &BTreeMap<Infrastructure, PathLossModel>,
) -> Vec<(i64, Option<f64>)> {
    let solver = SolverConfig::default();
    epochs
        .iter()
        .map(|epoch| {
            let gnss = gnss_fix(epoch, origin, &solver);
            let network = network_fix(epoch, registry, origin, path_loss);
            let score = match (gnss, network) {
                (Some(g), Some(n)) => Some(g.distance_2d(n)),
                _ => None,
            };
            (epoch.time_ms, score)
        })
        .collect()
}

/// Kalman baseline tuning.
#[derive(Debug, Clone, Copy)]
pub struct KalmanConfig {
    /// Process noise per epoch, meters.
    pub process_sigma: f64,
    /// GNSS measurement noise, meters.
    pub measurement_sigma: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            process_sigma: 2.0,
            measurement_sigma: 5.0,
        }
    }
}

/// Kalman baseline: propagate a position estimate with onboard motion and
/// score each epoch by the GNSS innovation distance. The filter keeps
/// tracking through attacks (that naivety is the point of the baseline).
pub fn baseline_kalman_detector(
    epochs: &[Epoch],
    origin: GeoPoint,
    epoch_seconds: f64,
    cfg: &KalmanConfig,
) -> Result<Vec<(i64, Option<f64>)>> {
    let solver = SolverConfig::default();
    let mut scores = Vec::with_capacity(epochs.len());
    let mut state: Option<EnuPoint> = None;
    let mut variance = cfg.measurement_sigma * cfg.measurement_sigma;

    let mut prev_motion: Option<crate::types::MotionSample> = None;
    for epoch in epochs {
        // Predict with the previous epoch's motion sample.
        if let (Some(p), Some(motion)) = (state, prev_motion) {
            let rot = rotation_matrix(Vector3::from(motion.orientation));
            let v = Vector3::from(motion.velocity) * epoch_seconds;
            let a = Vector3::from(motion.acceleration) * epoch_seconds * epoch_seconds;
            let shift = rot * v + rot * a * 0.5;
            state = Some(EnuPoint::from_vector(p.to_vector() + shift));
        }
        variance += cfg.process_sigma * cfg.process_sigma;

        let z = gnss_fix(epoch, origin, &solver);
        let score = match (state, z) {
            (Some(pred), Some(meas)) => {
                let innovation = pred.distance(meas);
                let r = cfg.measurement_sigma * cfg.measurement_sigma;
                let gain = variance / (variance + r);
                let blended = pred.to_vector() + (meas.to_vector() - pred.to_vector()) * gain;
                state = Some(EnuPoint::from_vector(blended));
                variance *= 1.0 - gain;
                Some(innovation)
            }
            (None, Some(meas)) => {
                state = Some(meas);
                variance = cfg.measurement_sigma * cfg.measurement_sigma;
                Some(0.0)
            }
            (_, None) => None,
        };
        scores.push((epoch.time_ms, score));
        prev_motion = epoch.motion;
    }
    Ok(scores)
}

/// Threshold a baseline score trace into alarms; missing scores never alarm.
pub fn alarms_from_scores(scores: &[(i64, Option<f64>)], threshold: f64) -> Vec<(i64, bool)> {
    scores
        .iter()
        .map(|(t, s)| (*t, s.is_some_and(|v| v > threshold)))
        .collect()
}
