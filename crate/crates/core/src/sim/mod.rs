//! Synthetic scenario generation: trajectories, anchor layouts, noisy
//! measurements, and the attack classes injected on top of them.

mod attack;
mod baseline;

pub use attack::{
    inject_coordinated, inject_gradual_drift, inject_jamming, inject_uncoordinated,
};
pub use baseline::{
    alarms_from_scores, baseline_distance_detector, baseline_kalman_detector, KalmanConfig,
};

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{ecef_to_wgs84, enu_to_ecef, enu_to_wgs84, EnuPoint, GeoPoint};
use crate::io::{self, AttackLabel};
use crate::motion::rotation_matrix;
use crate::solve::PathLossModel;
use crate::types::{
    Anchor, AnchorRegistry, Epoch, Infrastructure, MotionSample, RangingMeasurement, ValueKind,
};

/// Attack classes the simulator can inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    Uncoordinated,
    Coordinated,
    Jamming,
    GradualDrift,
}

/// Which anchors of an infrastructure an attack controls.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffectedAnchors {
    All,
    Count(usize),
    Ids(Vec<String>),
}

/// One attack window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSchedule {
    pub kind: AttackKind,
    /// First attacked epoch index (inclusive).
    pub start_epoch: usize,
    /// One past the last attacked epoch index.
    pub end_epoch: usize,
    /// Affected anchors per infrastructure.
    #[serde(default)]
    pub affected: BTreeMap<Infrastructure, AffectedAnchors>,
    /// Constant spoof offset from the true trajectory, ENU meters
    /// (coordinated spoofing; also the drift direction).
    #[serde(default = "default_spoof_offset")]
    pub spoof_offset_m: [f64; 3],
    /// Terminal offset of the gradual drift ramp, meters.
    #[serde(default = "default_terminal_offset")]
    pub terminal_offset_m: f64,
    /// Minimum per-anchor offset magnitude for uncoordinated spoofing, meters.
    #[serde(default = "default_min_offset")]
    pub min_offset_m: f64,
}

fn default_spoof_offset() -> [f64; 3] {
    [150.0, 0.0, 0.0]
}
fn default_terminal_offset() -> f64 {
    150.0
}
fn default_min_offset() -> f64 {
    100.0
}

/// How many anchors of each kind to place.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorCounts {
    pub gnss_sats: usize,
    pub wifi: usize,
    pub cell: usize,
    pub bluetooth: usize,
    pub geoip: usize,
}

impl Default for AnchorCounts {
    fn default() -> Self {
        AnchorCounts {
            gnss_sats: 8,
            wifi: 8,
            cell: 5,
            bluetooth: 0,
            geoip: 5,
        }
    }
}

/// Measurement and motion noise levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub pseudorange_sigma_m: f64,
    /// Receiver clock bias random-walk step per epoch, meters.
    pub clock_walk_sigma_m: f64,
    pub rssi_shadowing_db: f64,
    pub rtt_jitter_m: f64,
    pub motion_velocity_sigma: f64,
    pub motion_accel_sigma: f64,
    pub motion_angle_sigma: f64,
    pub lbs_sigma_m: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            pseudorange_sigma_m: 2.0,
            clock_walk_sigma_m: 10.0,
            rssi_shadowing_db: 2.0,
            rtt_jitter_m: 5_000.0,
            motion_velocity_sigma: 0.1,
            motion_accel_sigma: 0.05,
            motion_angle_sigma: 0.01,
            lbs_sigma_m: 3.0,
        }
    }
}

/// Full scenario description; fixed seed means byte-identical output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub origin: GeoPoint,
    #[serde(default = "default_cadence")]
    pub cadence_ms: i64,
    #[serde(default = "default_start_time")]
    pub start_time_ms: i64,
    pub epochs: usize,
    /// ENU waypoints of the true trajectory.
    pub waypoints: Vec<[f64; 3]>,
    /// Constant platform speed along the waypoint path, m/s.
    #[serde(default = "default_speed")]
    pub speed_mps: f64,
    #[serde(default)]
    pub anchors: AnchorCounts,
    #[serde(default)]
    pub noise: NoiseConfig,
    /// Path loss per infrastructure (cell towers radiate much harder than
    /// Wi-Fi APs, so they get their own curves).
    #[serde(default = "default_path_loss")]
    pub path_loss: BTreeMap<Infrastructure, PathLossModel>,
    #[serde(default = "default_gamma")]
    pub geoip_gamma: f64,
    /// Measurements weaker than this never reach the platform.
    #[serde(default = "default_rssi_floor")]
    pub rssi_floor_dbm: f64,
    /// Emit the platform-reported position trace even without an attack.
    #[serde(default)]
    pub emit_lbs: bool,
    /// Network surveys run every this many epochs.
    #[serde(default = "default_network_period")]
    pub network_period_epochs: usize,
    #[serde(default)]
    pub attacks: Vec<AttackSchedule>,
}

fn default_cadence() -> i64 {
    1000
}
fn default_start_time() -> i64 {
    1_700_000_000_000
}
fn default_speed() -> f64 {
    1.4
}
fn default_gamma() -> f64 {
    crate::solve::DEFAULT_RTT_GAMMA
}
fn default_rssi_floor() -> f64 {
    -95.0
}
fn default_network_period() -> usize {
    1
}

pub fn default_path_loss() -> BTreeMap<Infrastructure, PathLossModel> {
    let mut m = BTreeMap::new();
    m.insert(
        Infrastructure::Wifi,
        PathLossModel {
            p0_dbm: -40.0,
            d0_m: 1.0,
            exponent: 2.7,
        },
    );
    m.insert(
        Infrastructure::Cell,
        PathLossModel {
            p0_dbm: -20.0,
            d0_m: 1.0,
            exponent: 2.0,
        },
    );
    m.insert(
        Infrastructure::Bluetooth,
        PathLossModel {
            p0_dbm: -45.0,
            d0_m: 1.0,
            exponent: 2.0,
        },
    );
    m
}

impl ScenarioConfig {
    /// A small walking scenario; callers override what they need.
    pub fn walking(name: &str, seed: u64, epochs: usize) -> Self {
        ScenarioConfig {
            name: name.to_string(),
            seed,
            origin: GeoPoint {
                lat_deg: 59.404,
                lon_deg: 17.949,
                alt_m: 30.0,
            },
            cadence_ms: 1000,
            start_time_ms: default_start_time(),
            epochs,
            waypoints: vec![[0.0, 0.0, 0.0], [150.0, 80.0, 0.0], [40.0, 220.0, 0.0]],
            speed_mps: 1.4,
            anchors: AnchorCounts::default(),
            noise: NoiseConfig::default(),
            path_loss: default_path_loss(),
            geoip_gamma: default_gamma(),
            rssi_floor_dbm: default_rssi_floor(),
            emit_lbs: false,
            network_period_epochs: 1,
            attacks: Vec::new(),
        }
    }

    pub fn path_loss_for(&self, infra: Infrastructure) -> PathLossModel {
        self.path_loss
            .get(&infra)
            .copied()
            .unwrap_or_default()
    }
}

/// Calibration and ground-truth sidecar written next to the CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub seed: u64,
    pub origin: GeoPoint,
    pub cadence_ms: i64,
    pub path_loss: BTreeMap<Infrastructure, PathLossModel>,
    pub geoip_gamma: f64,
    pub epochs: usize,
    /// Ground-truth trajectory, `[time_ms, east, north, up]` per epoch.
    pub truth: Vec<[f64; 4]>,
}

/// A generated dataset, before or after attack injection.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub config: ScenarioConfig,
    pub epochs: Vec<Epoch>,
    pub registry: AnchorRegistry,
    /// True platform position per epoch, ENU.
    pub truth: Vec<(i64, EnuPoint)>,
    /// Receiver clock bias per epoch, meters.
    pub clock_bias: Vec<f64>,
    /// Satellite positions, ENU (static over the scenario).
    pub satellites: BTreeMap<String, EnuPoint>,
    /// Platform-reported positions; empty when the platform reports nothing.
    pub lbs: Vec<(i64, GeoPoint)>,
    pub labels: Vec<AttackLabel>,
}

impl SimulatedDataset {
    pub fn epoch_time(&self, index: usize) -> i64 {
        self.config.start_time_ms + self.config.cadence_ms * index as i64
    }

    pub fn truth_enu(&self, index: usize) -> EnuPoint {
        self.truth[index].1
    }
}

/// Generate a benign scenario: trajectory, anchors, noisy measurements, and
/// motion samples. Deterministic per seed.
pub fn generate_benign(config: &ScenarioConfig) -> Result<SimulatedDataset> {
    if config.epochs == 0 || config.waypoints.is_empty() {
        return Err(Error::InvalidArgument(
            "scenario needs at least one epoch and one waypoint".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let epoch_seconds = config.cadence_ms as f64 / 1000.0;

    // --- trajectory ---------------------------------------------------
    let truth_positions = sample_trajectory(config, epoch_seconds);
    let world_velocities = velocities(&truth_positions, epoch_seconds);

    // --- anchor layout -------------------------------------------------
    let satellites = place_satellites(config.anchors.gnss_sats, &mut rng);
    let mut registry = AnchorRegistry::new();
    place_terrestrial(config, &truth_positions, &mut registry, &mut rng)?;

    // Terrestrial anchor ENU cache.
    let mut anchor_enu: BTreeMap<(Infrastructure, String), EnuPoint> = BTreeMap::new();
    for anchor in registry.iter() {
        let enu = crate::geo::wgs84_to_enu(anchor.position, config.origin)?;
        anchor_enu.insert((anchor.infrastructure, anchor.id.clone()), enu);
    }

    // --- clock bias walk ------------------------------------------------
    let walk = Normal::new(0.0, config.noise.clock_walk_sigma_m.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut clock_bias = Vec::with_capacity(config.epochs);
    let mut bias = 0.0;
    for _ in 0..config.epochs {
        bias += if config.noise.clock_walk_sigma_m > 0.0 {
            walk.sample(&mut rng)
        } else {
            0.0
        };
        clock_bias.push(bias);
    }

    // --- per-epoch measurements -----------------------------------------
    let normal01 = Normal::new(0.0, 1.0).unwrap();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut truth = Vec::with_capacity(config.epochs);
    let mut lbs = Vec::new();
    let mut prev_v_body: Option<Vector3<f64>> = None;

    for i in 0..config.epochs {
        let time_ms = config.start_time_ms + config.cadence_ms * i as i64;
        let p = truth_positions[i];
        truth.push((time_ms, p));
        let mut epoch = Epoch::new(time_ms);

        // GNSS rows, every epoch.
        for (id, sat) in &satellites {
            let noise = config.noise.pseudorange_sigma_m * normal01.sample(&mut rng);
            let pr = p.distance(*sat) + clock_bias[i] + noise;
            epoch.push_measurement(RangingMeasurement {
                time_ms,
                anchor_id: id.clone(),
                infrastructure: Infrastructure::Gnss,
                value: pr,
                value_kind: ValueKind::Pseudorange,
                sigma: config.noise.pseudorange_sigma_m,
            });
            let mut metadata = BTreeMap::new();
            metadata.insert("signal_type".to_string(), "L1CA".to_string());
            epoch.gnss_anchors.push(Anchor {
                id: id.clone(),
                infrastructure: Infrastructure::Gnss,
                position: ecef_to_wgs84(enu_to_ecef(*sat, config.origin)),
                metadata,
            });
        }

        // Network survey rows on the survey cadence.
        if i % config.network_period_epochs.max(1) == 0 {
            for ((infra, id), enu) in &anchor_enu {
                match infra {
                    Infrastructure::Geoip => {
                        let jitter = config.noise.rtt_jitter_m * normal01.sample(&mut rng);
                        let d = (p.distance_2d(*enu) + jitter).max(1.0);
                        epoch.push_measurement(RangingMeasurement {
                            time_ms,
                            anchor_id: id.clone(),
                            infrastructure: *infra,
                            value: d,
                            value_kind: ValueKind::RttDistance,
                            sigma: config.noise.rtt_jitter_m,
                        });
                    }
                    _ => {
                        let model = config.path_loss_for(*infra);
                        let shadow = config.noise.rssi_shadowing_db * normal01.sample(&mut rng);
                        let rssi = model.range_to_rssi(p.distance(*enu)) + shadow;
                        if rssi < config.rssi_floor_dbm {
                            continue;
                        }
                        epoch.push_measurement(RangingMeasurement {
                            time_ms,
                            anchor_id: id.clone(),
                            infrastructure: *infra,
                            value: rssi.min(-1.0),
                            value_kind: ValueKind::Rssi,
                            sigma: config.noise.rssi_shadowing_db,
                        });
                    }
                }
            }
        }

        // Motion sample: body-frame velocity/acceleration plus orientation.
        let v_world = world_velocities[i];
        let yaw = heading(v_world, prev_yaw(&epochs));
        let orientation = Vector3::new(0.0, 0.0, yaw);
        let rot = rotation_matrix(orientation);
        let v_body = rot.transpose() * v_world;
        let a_body = match prev_v_body {
            Some(prev) => (v_body - prev) / epoch_seconds,
            None => Vector3::zeros(),
        };
        prev_v_body = Some(v_body);
        let nv = config.noise.motion_velocity_sigma;
        let na = config.noise.motion_accel_sigma;
        let ng = config.noise.motion_angle_sigma;
        epoch.motion = Some(MotionSample {
            time_ms,
            velocity: [
                v_body.x + nv * normal01.sample(&mut rng),
                v_body.y + nv * normal01.sample(&mut rng),
                v_body.z + nv * normal01.sample(&mut rng),
            ],
            acceleration: [
                a_body.x + na * normal01.sample(&mut rng),
                a_body.y + na * normal01.sample(&mut rng),
                a_body.z + na * normal01.sample(&mut rng),
            ],
            orientation: [
                ng * normal01.sample(&mut rng),
                ng * normal01.sample(&mut rng),
                crate::types::wrap_angle(yaw + ng * normal01.sample(&mut rng)),
            ],
        });

        // Platform-reported position (benign: the true position plus noise).
        if config.emit_lbs {
            let reported = EnuPoint::new(
                p.east + config.noise.lbs_sigma_m * normal01.sample(&mut rng),
                p.north + config.noise.lbs_sigma_m * normal01.sample(&mut rng),
                p.up,
            );
            let geo = enu_to_wgs84(reported, config.origin)?;
            epoch.lbs_position = Some(geo);
            lbs.push((time_ms, geo));
        }

        epochs.push(epoch);
    }

    Ok(SimulatedDataset {
        config: config.clone(),
        epochs,
        registry,
        truth,
        clock_bias,
        satellites,
        lbs,
        labels: Vec::new(),
    })
}

fn prev_yaw(epochs: &[Epoch]) -> f64 {
    epochs
        .last()
        .and_then(|e| e.motion.as_ref())
        .map(|m| m.orientation[2])
        .unwrap_or(0.0)
}

fn heading(v_world: Vector3<f64>, fallback: f64) -> f64 {
    if v_world.norm() < 1e-9 {
        fallback
    } else {
        v_world.x.atan2(v_world.y)
    }
}

fn sample_trajectory(config: &ScenarioConfig, epoch_seconds: f64) -> Vec<EnuPoint> {
    let pts: Vec<Vector3<f64>> = config
        .waypoints
        .iter()
        .map(|w| Vector3::new(w[0], w[1], w[2]))
        .collect();
    let mut cumulative = vec![0.0];
    for pair in pts.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + (pair[1] - pair[0]).norm());
    }
    let total = *cumulative.last().unwrap();

    (0..config.epochs)
        .map(|i| {
            let s = (config.speed_mps * epoch_seconds * i as f64).min(total);
            if pts.len() == 1 || total == 0.0 {
                return EnuPoint::from_vector(pts[0]);
            }
            let seg = cumulative
                .windows(2)
                .position(|w| s <= w[1])
                .unwrap_or(pts.len() - 2);
            let seg_len = (cumulative[seg + 1] - cumulative[seg]).max(1e-12);
            let frac = (s - cumulative[seg]) / seg_len;
            EnuPoint::from_vector(pts[seg] + (pts[seg + 1] - pts[seg]) * frac)
        })
        .collect()
}

fn velocities(positions: &[EnuPoint], epoch_seconds: f64) -> Vec<Vector3<f64>> {
    (0..positions.len())
        .map(|i| {
            if i + 1 < positions.len() {
                (positions[i + 1].to_vector() - positions[i].to_vector()) / epoch_seconds
            } else if i > 0 {
                Vector3::zeros()
            } else {
                Vector3::zeros()
            }
        })
        .collect()
}

fn place_satellites(count: usize, rng: &mut ChaCha8Rng) -> BTreeMap<String, EnuPoint> {
    let mut sats = BTreeMap::new();
    for i in 0..count {
        // Stratified azimuths with jitter keep the constellation well spread.
        let az = i as f64 / count.max(1) as f64 * std::f64::consts::TAU
            + rng.random_range(-0.2..0.2);
        let el: f64 = rng.random_range(0.26..1.45); // 15°..83°
        let r = 2.2e7;
        sats.insert(
            format!("G{:02}", i + 1),
            EnuPoint::new(
                r * el.cos() * az.sin(),
                r * el.cos() * az.cos(),
                r * el.sin(),
            ),
        );
    }
    sats
}

fn place_terrestrial(
    config: &ScenarioConfig,
    trajectory: &[EnuPoint],
    registry: &mut AnchorRegistry,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let (mut min_e, mut max_e, mut min_n, mut max_n) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in trajectory {
        min_e = min_e.min(p.east);
        max_e = max_e.max(p.east);
        min_n = min_n.min(p.north);
        max_n = max_n.max(p.north);
    }
    let margin = 80.0;
    let clearance = 5.0;

    let mut add = |infra: Infrastructure, id: String, enu: EnuPoint| -> Result<()> {
        registry.insert(Anchor {
            id,
            infrastructure: infra,
            position: enu_to_wgs84(enu, config.origin)?,
            metadata: BTreeMap::new(),
        })
    };

    for i in 0..config.anchors.wifi {
        let mut enu;
        let mut tries = 0;
        loop {
            enu = EnuPoint::new(
                rng.random_range(min_e - margin..max_e + margin),
                rng.random_range(min_n - margin..max_n + margin),
                rng.random_range(0.0..15.0),
            );
            tries += 1;
            let clear = trajectory
                .iter()
                .all(|p| p.distance(enu) > clearance);
            if clear || tries > 100 {
                break;
            }
        }
        add(Infrastructure::Wifi, format!("ap{:02}", i + 1), enu)?;
    }

    let center = EnuPoint::new((min_e + max_e) / 2.0, (min_n + max_n) / 2.0, 0.0);
    for i in 0..config.anchors.cell {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let radius = rng.random_range(200.0..800.0);
        add(
            Infrastructure::Cell,
            format!("cell{:02}", i + 1),
            EnuPoint::new(
                center.east + radius * theta.cos(),
                center.north + radius * theta.sin(),
                rng.random_range(10.0..40.0),
            ),
        )?;
    }

    for i in 0..config.anchors.bluetooth {
        let idx = rng.random_range(0..trajectory.len());
        let base = trajectory[idx];
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let radius = rng.random_range(clearance..30.0);
        add(
            Infrastructure::Bluetooth,
            format!("bt{:02}", i + 1),
            EnuPoint::new(
                base.east + radius * theta.cos(),
                base.north + radius * theta.sin(),
                rng.random_range(0.0..3.0),
            ),
        )?;
    }

    for i in 0..config.anchors.geoip {
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let radius = rng.random_range(5.0e4..2.0e5);
        add(
            Infrastructure::Geoip,
            format!("ip{:02}", i + 1),
            EnuPoint::new(radius * theta.cos(), radius * theta.sin(), 0.0),
        )?;
    }
    Ok(())
}

/// Generate the scenario and inject every scheduled attack.
pub fn generate(config: &ScenarioConfig) -> Result<SimulatedDataset> {
    let mut dataset = generate_benign(config)?;
    // Attack randomness is decoupled from the benign stream so adding an
    // attack leaves the benign measurements bit-identical.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xA77A_C4ED);
    for schedule in config.attacks.clone() {
        apply_attack(&mut dataset, &schedule, &mut rng)?;
    }
    Ok(dataset)
}

pub(crate) fn apply_attack(
    dataset: &mut SimulatedDataset,
    schedule: &AttackSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    match schedule.kind {
        AttackKind::None => Ok(()),
        AttackKind::Uncoordinated => inject_uncoordinated(dataset, schedule, rng),
        AttackKind::Coordinated => inject_coordinated(dataset, schedule, rng),
        AttackKind::Jamming => inject_jamming(dataset, schedule, rng),
        AttackKind::GradualDrift => inject_gradual_drift(dataset, schedule, rng),
    }
}

/// Write the dataset directory: four CSVs always, labels/lbs only when
/// non-empty, and the calibration/truth sidecar as JSON.
pub fn write_dataset(dataset: &SimulatedDataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_anchor_db(&dir.join("anchors.csv"), &dataset.registry)?;
    io::write_gnss_log(&dir.join("gnss.csv"), &dataset.epochs, dataset.config.origin)?;
    io::write_network_log(&dir.join("network.csv"), &dataset.epochs)?;
    let motion: Vec<MotionSample> = dataset
        .epochs
        .iter()
        .filter_map(|e| e.motion)
        .collect();
    io::write_motion_log(&dir.join("motion.csv"), &motion)?;
    if !dataset.labels.is_empty() {
        io::write_labels(&dir.join("labels.csv"), &dataset.labels)?;
    }
    if !dataset.lbs.is_empty() {
        io::write_lbs_log(&dir.join("lbs.csv"), &dataset.lbs)?;
    }
    let meta = DatasetMeta {
        name: dataset.config.name.clone(),
        seed: dataset.config.seed,
        origin: dataset.config.origin,
        cadence_ms: dataset.config.cadence_ms,
        path_loss: dataset.config.path_loss.clone(),
        geoip_gamma: dataset.config.geoip_gamma,
        epochs: dataset.config.epochs,
        truth: dataset
            .truth
            .iter()
            .map(|(t, p)| [*t as f64, p.east, p.north, p.up])
            .collect(),
    };
    let meta_path = dir.join("meta.json");
    let json = serde_json::to_string_pretty(&meta)?;
    std::fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}
