//! The end-to-end detection pipeline: load a dataset directory, generate and
//! evaluate subsets per epoch, smooth subset tracks with the motion filter,
//! and run fusion detection.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{self, DetectionConfig, DetectionReport};
use crate::geo::{wgs84_to_enu, EnuPoint};
use crate::io;
use crate::motion::{
    backfill_track, fit_constrained_poly, propagate_state, FilterConfig, KinematicState,
};
use crate::sim::DatasetMeta;
use crate::subsets::{
    evaluate_subsets, generate_subsets, min_subset_size, EvaluateConfig, InfraObservations,
    SubsetConfig, SubsetEstimate,
};
use crate::types::{AnchorRegistry, Epoch, Infrastructure, MotionSample};

/// Everything the detector reads from a dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    pub registry: AnchorRegistry,
    pub epochs: Vec<Epoch>,
    pub labels: Vec<io::AttackLabel>,
}

/// Load the CSV/JSON dataset layout produced by the simulator.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join("meta.json");
    let meta: DatasetMeta = serde_json::from_str(
        &std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?,
    )?;
    let registry = io::load_anchor_db(&dir.join("anchors.csv"))?;
    let mut fragments = io::parse_gnss_log(&dir.join("gnss.csv"))?;
    fragments.extend(io::parse_network_log(&dir.join("network.csv"))?);
    let motion = io::parse_motion_log(&dir.join("motion.csv"))?;
    let lbs_path = dir.join("lbs.csv");
    let lbs = if lbs_path.exists() {
        io::parse_lbs_log(&lbs_path)?
    } else {
        Vec::new()
    };
    let labels_path = dir.join("labels.csv");
    let labels = if labels_path.exists() {
        io::parse_labels(&labels_path)?
    } else {
        Vec::new()
    };
    let epochs = io::merge_epochs(fragments, &motion, &lbs, 500);
    Ok(Dataset {
        meta,
        registry,
        epochs,
        labels,
    })
}

/// Full pipeline configuration; the CLI flags map onto these fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectorConfig {
    #[serde(default)]
    pub subset: SubsetConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub detection: DetectionConfig,
    /// Temporal alignment window for epoch merging, milliseconds.
    pub alignment_window_ms: i64,
    /// Uncertainty floor, meters.
    pub sigma_min: f64,
    /// GNSS unit range error scaling the DOP, meters.
    pub sigma_range: f64,
    /// Force unit uncertainties everywhere (the idealized analysis regime).
    pub uniform_sigma: bool,
    /// Skip the motion filter entirely.
    pub disable_smoothing: bool,
    /// Altitude handed to the planar solvers, ENU meters.
    pub fixed_up: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            subset: SubsetConfig::default(),
            filter: FilterConfig::default(),
            detection: DetectionConfig::default(),
            alignment_window_ms: 500,
            sigma_min: 1.0,
            sigma_range: 2.0,
            uniform_sigma: false,
            disable_smoothing: false,
            fixed_up: 0.0,
        }
    }
}

/// Per-(infrastructure, member set) position history for the motion filter.
#[derive(Debug, Default)]
struct Track {
    /// (epoch index, raw position, smoothed position).
    history: Vec<(i64, EnuPoint, EnuPoint)>,
}

/// Streaming detector; feed epochs in time order.
pub struct Detector {
    config: DetectorConfig,
    evaluate: EvaluateConfig,
    registry: AnchorRegistry,
    origin: crate::geo::GeoPoint,
    epoch_seconds: f64,
    tracks: BTreeMap<(Infrastructure, Vec<String>), Track>,
    /// Verified (recovered) positions per epoch index, for track backfill.
    verified: BTreeMap<i64, EnuPoint>,
    subset_cache: BTreeMap<(Infrastructure, Vec<String>), Vec<crate::subsets::SubsetSpec>>,
    prev_motion: Option<MotionSample>,
    epoch_index: i64,
}

impl Detector {
    pub fn new(meta: &DatasetMeta, registry: AnchorRegistry, config: DetectorConfig) -> Self {
        let evaluate = EvaluateConfig {
            path_loss: meta.path_loss.clone(),
            fixed_up: config.fixed_up,
            sigma_min: config.sigma_min,
            sigma_range: config.sigma_range,
            ..EvaluateConfig::default()
        };
        Detector {
            evaluate,
            registry,
            origin: meta.origin,
            epoch_seconds: meta.cadence_ms as f64 / 1000.0,
            tracks: BTreeMap::new(),
            verified: BTreeMap::new(),
            subset_cache: BTreeMap::new(),
            prev_motion: None,
            epoch_index: 0,
            config,
        }
    }

    /// Process one epoch; `None` when no infrastructure yielded an estimate.
    pub fn process_epoch(&mut self, epoch: &Epoch) -> Result<Option<DetectionReport>> {
        let index = self.epoch_index;
        self.epoch_index += 1;

        let mut estimates: Vec<SubsetEstimate> = Vec::new();
        let mut dropped = 0usize;

        for (infra, measurements) in &epoch.measurements {
            let observations = self.resolve_observations(epoch, *infra, measurements)?;
            let ids: Vec<String> = observations.by_anchor.keys().cloned().collect();
            if ids.len() < min_subset_size(*infra) {
                continue;
            }
            let specs = self.specs_for(*infra, &ids, &observations)?;
            let (mut infra_estimates, infra_dropped) =
                evaluate_subsets(*infra, &observations, &specs, &self.evaluate);
            dropped += infra_dropped.len();

            if !self.config.disable_smoothing {
                for estimate in &mut infra_estimates {
                    self.smooth_estimate(index, estimate);
                }
            }
            if self.config.uniform_sigma {
                for estimate in &mut infra_estimates {
                    estimate.uncertainty = [1.0, 1.0, 1.0];
                }
            }
            estimates.extend(infra_estimates);
        }

        let lbs_enu = match epoch.lbs_position {
            Some(geo) => Some(wgs84_to_enu(geo, self.origin)?),
            None => None,
        };

        let report = match fusion::detect_epoch(
            epoch.time_ms,
            &estimates,
            lbs_enu,
            dropped,
            &self.config.detection,
        ) {
            Ok(report) => report,
            Err(Error::NoData(_)) => {
                self.prev_motion = epoch.motion;
                return Ok(None);
            }
            Err(e) => return Err(e),
        };

        if let Some(rec) = report.recovered {
            self.verified.insert(index, rec);
        }
        self.prev_motion = epoch.motion;
        Ok(Some(report))
    }

    fn resolve_observations(
        &self,
        epoch: &Epoch,
        infra: Infrastructure,
        measurements: &[crate::types::RangingMeasurement],
    ) -> Result<InfraObservations> {
        let mut observations = InfraObservations::default();
        for m in measurements {
            let position = if infra == Infrastructure::Gnss {
                epoch
                    .gnss_anchors
                    .iter()
                    .find(|a| a.id == m.anchor_id)
                    .map(|a| a.position)
            } else {
                self.registry_position(infra, &m.anchor_id)
            };
            let Some(geo) = position else {
                continue; // unresolvable anchor: skip the measurement
            };
            let enu = wgs84_to_enu(geo, self.origin)?;
            observations
                .by_anchor
                .insert(m.anchor_id.clone(), (enu, m.value, m.value_kind));
        }
        Ok(observations)
    }

    fn registry_position(
        &self,
        infra: Infrastructure,
        id: &str,
    ) -> Option<crate::geo::GeoPoint> {
        self.registry.get(infra, id).map(|a| a.position)
    }

    fn specs_for(
        &mut self,
        infra: Infrastructure,
        ids: &[String],
        observations: &InfraObservations,
    ) -> Result<Vec<crate::subsets::SubsetSpec>> {
        let key = (infra, ids.to_vec());
        if let Some(specs) = self.subset_cache.get(&key) {
            return Ok(specs.clone());
        }
        let gnss_anchors: Option<BTreeMap<String, EnuPoint>> = (infra == Infrastructure::Gnss)
            .then(|| {
                observations
                    .by_anchor
                    .iter()
                    .map(|(id, (p, _, _))| (id.clone(), *p))
                    .collect()
            });
        let mut cfg = self.config.subset;
        // Decorrelate sampling across infrastructures but keep it stable
        // across epochs so subset tracks stay coherent.
        cfg.seed = cfg.seed.wrapping_add(infra as u64 * 0x9E37_79B9);
        let specs = generate_subsets(
            ids,
            infra,
            gnss_anchors.as_ref(),
            EnuPoint::new(0.0, 0.0, 0.0),
            &cfg,
        )?;
        self.subset_cache.insert(key, specs.clone());
        Ok(specs)
    }

    /// Replace the raw subset position with its motion-filtered value and
    /// refresh the uncertainty from the fit residual where the rules call
    /// for it.
    fn smooth_estimate(&mut self, index: i64, estimate: &mut SubsetEstimate) {
        let key = estimate.spec.key();
        let raw = estimate.position;
        let track = self.tracks.entry(key).or_default();
        track.history.push((index, raw, raw));
        let horizon = index - self.config.filter.window as i64 * 2;
        track.history.retain(|(i, _, _)| *i >= horizon);

        // Constraint point: last epoch's smoothed position propagated through
        // the platform's measured motion.
        let constraint = match (self.prev_motion, track.history.iter().rev().nth(1)) {
            (Some(motion), Some((prev_index, _, prev_smoothed))) if *prev_index == index - 1 => {
                let state =
                    KinematicState::from_motion(*prev_smoothed, &motion, self.epoch_seconds);
                let (predicted, _) = propagate_state(&state);
                Some((predicted, self.config.filter.epsilon_t))
            }
            _ => None,
        };

        let window_start = index - self.config.filter.window as i64;
        let raw_points: Vec<(i64, EnuPoint)> = track
            .history
            .iter()
            .map(|(i, raw, _)| (*i, *raw))
            .collect();
        let (window_points, _filled) =
            backfill_track(&raw_points, &self.verified, window_start, index);

        let result = match fit_constrained_poly(&window_points, index, constraint, &self.config.filter)
        {
            Ok(r) => r,
            Err(_) => return,
        };

        estimate.position = result.position;
        if let Some(last) = track.history.last_mut() {
            last.2 = result.position;
        }

        // GeoIP and other non-parametric estimates take their uncertainty
        // from the fit residual; fallback windows get inflated instead.
        let sigma = fusion::subset_uncertainty(
            &estimate.diagnostics,
            (!result.fallback).then_some(result.residual_rms),
            self.evaluate.sigma_min,
            self.evaluate.sigma_range,
        );
        let inflation = if result.fallback { 10.0 } else { 1.0 };
        let sigma: Vector3<f64> = sigma * inflation;
        estimate.uncertainty = [sigma.x, sigma.y, sigma.z];
    }
}

/// Run detection over a loaded dataset, returning per-epoch reports.
pub fn run_detection(dataset: &Dataset, config: DetectorConfig) -> Result<Vec<DetectionReport>> {
    let mut detector = Detector::new(&dataset.meta, dataset.registry.clone(), config);
    let mut reports = Vec::new();
    for epoch in &dataset.epochs {
        if let Some(report) = detector.process_epoch(epoch)? {
            reports.push(report);
        }
    }
    Ok(reports)
}

/// Serialize reports as one JSON object per line.
pub fn write_reports_jsonl(path: &Path, reports: &[DetectionReport]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for report in reports {
        let line = serde_json::to_string(report)?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

pub fn read_reports_jsonl(path: &Path) -> Result<Vec<DetectionReport>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut reports = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        reports.push(serde_json::from_str(line)?);
    }
    Ok(reports)
}

/// Per-run summary CSV: `time_ms,score,alarm,recovered_e,recovered_n,recovered_u,n_excluded`.
pub fn write_detection_csv(path: &Path, reports: &[DetectionReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    w.write_record([
        "time_ms",
        "score",
        "alarm",
        "recovered_e",
        "recovered_n",
        "recovered_u",
        "n_excluded",
    ])?;
    for r in reports {
        let (e, n, u) = match r.recovered {
            Some(p) => (
                format!("{}", p.east),
                format!("{}", p.north),
                format!("{}", p.up),
            ),
            None => (String::new(), String::new(), String::new()),
        };
        w.write_record([
            r.time_ms.to_string(),
            format!("{}", r.score),
            if r.alarm { "1" } else { "0" }.to_string(),
            e,
            n,
            u,
            r.excluded.len().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
