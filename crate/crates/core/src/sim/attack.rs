//! Attack injection: rewrite benign measurements so affected anchors tell a
//! different story.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geo::{enu_to_wgs84, wgs84_to_enu, EnuPoint};
use crate::io::AttackLabel;
use crate::sim::{AffectedAnchors, AttackSchedule, SimulatedDataset};
use crate::types::{Infrastructure, RangingMeasurement, ValueKind};

/// Resolve the affected-anchor selection to concrete ids, deterministically.
fn resolve_affected(
    dataset: &SimulatedDataset,
    schedule: &AttackSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<BTreeMap<Infrastructure, Vec<String>>> {
    let mut selection = schedule.affected.clone();
    if selection.is_empty() {
        // Default target: the whole GNSS constellation.
        selection.insert(Infrastructure::Gnss, AffectedAnchors::All);
    }

    let mut resolved = BTreeMap::new();
    for (infra, affected) in selection {
        let mut pool: Vec<String> = if infra == Infrastructure::Gnss {
            dataset.satellites.keys().cloned().collect()
        } else {
            dataset.registry.of(infra).map(|a| a.id.clone()).collect()
        };
        pool.sort();
        let ids = match affected {
            AffectedAnchors::All => pool,
            AffectedAnchors::Count(n) => {
                if n > pool.len() {
                    return Err(Error::InvalidArgument(format!(
                        "attack wants {n} affected {infra} anchors, scenario has {}",
                        pool.len()
                    )));
                }
                // Seeded selection keeps the realization reproducible.
                let mut chosen = Vec::with_capacity(n);
                let mut remaining = pool;
                for _ in 0..n {
                    let k = rng.random_range(0..remaining.len());
                    chosen.push(remaining.remove(k));
                }
                chosen.sort();
                chosen
            }
            AffectedAnchors::Ids(ids) => {
                for id in &ids {
                    if !pool.contains(id) {
                        return Err(Error::InvalidArgument(format!(
                            "affected anchor {id} does not exist in {infra}"
                        )));
                    }
                }
                let mut ids = ids;
                ids.sort();
                ids
            }
        };
        resolved.insert(infra, ids);
    }
    Ok(resolved)
}

fn check_window(dataset: &SimulatedDataset, schedule: &AttackSchedule) -> Result<()> {
    if schedule.start_epoch >= schedule.end_epoch || schedule.end_epoch > dataset.config.epochs {
        return Err(Error::InvalidArgument(format!(
            "attack window [{}, {}) outside scenario of {} epochs",
            schedule.start_epoch, schedule.end_epoch, dataset.config.epochs
        )));
    }
    Ok(())
}

fn anchor_enu(dataset: &SimulatedDataset, infra: Infrastructure, id: &str) -> Result<EnuPoint> {
    if infra == Infrastructure::Gnss {
        return dataset
            .satellites
            .get(id)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown satellite {id}")));
    }
    let anchor = dataset
        .registry
        .get(infra, id)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown anchor {infra}/{id}")))?;
    wgs84_to_enu(anchor.position, dataset.config.origin)
}

/// Replace (or insert) the measurement of `id` at epoch `index` so it is
/// consistent with the platform being at `observer`, with benign-level noise.
/// Returns false when the signal falls below the audibility floor and the
/// measurement is removed instead.
fn emit_consistent(
    dataset: &mut SimulatedDataset,
    index: usize,
    infra: Infrastructure,
    id: &str,
    observer: EnuPoint,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    let enu = anchor_enu(dataset, infra, id)?;
    let time_ms = dataset.epoch_time(index);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let cfg = &dataset.config;

    let new_measurement = match infra {
        Infrastructure::Gnss => {
            let pr = observer.distance(enu)
                + dataset.clock_bias[index]
                + cfg.noise.pseudorange_sigma_m * noise.sample(rng);
            Some(RangingMeasurement {
                time_ms,
                anchor_id: id.to_string(),
                infrastructure: infra,
                value: pr,
                value_kind: ValueKind::Pseudorange,
                sigma: cfg.noise.pseudorange_sigma_m,
            })
        }
        Infrastructure::Geoip => {
            let d = (observer.distance_2d(enu) + cfg.noise.rtt_jitter_m * noise.sample(rng))
                .max(1.0);
            Some(RangingMeasurement {
                time_ms,
                anchor_id: id.to_string(),
                infrastructure: infra,
                value: d,
                value_kind: ValueKind::RttDistance,
                sigma: cfg.noise.rtt_jitter_m,
            })
        }
        _ => {
            let model = cfg.path_loss_for(infra);
            let rssi = model.range_to_rssi(observer.distance(enu))
                + cfg.noise.rssi_shadowing_db * noise.sample(rng);
            if rssi < cfg.rssi_floor_dbm {
                None
            } else {
                Some(RangingMeasurement {
                    time_ms,
                    anchor_id: id.to_string(),
                    infrastructure: infra,
                    value: rssi.min(-1.0),
                    value_kind: ValueKind::Rssi,
                    sigma: cfg.noise.rssi_shadowing_db,
                })
            }
        }
    };

    let epoch = &mut dataset.epochs[index];
    let list = epoch.measurements.entry(infra).or_default();
    list.retain(|m| m.anchor_id != id);
    let emitted = new_measurement.is_some();
    if let Some(m) = new_measurement {
        list.push(m);
    }
    if list.is_empty() {
        epoch.measurements.remove(&infra);
    }
    Ok(emitted)
}

fn push_labels(
    dataset: &mut SimulatedDataset,
    schedule: &AttackSchedule,
    affected: &BTreeMap<Infrastructure, Vec<String>>,
) {
    for index in schedule.start_epoch..schedule.end_epoch {
        let time_ms = dataset.epoch_time(index);
        for (infra, ids) in affected {
            for id in ids {
                dataset.labels.push(AttackLabel {
                    time_ms,
                    attacked: true,
                    infrastructure: *infra,
                    anchor_id: id.clone(),
                });
            }
        }
    }
}

/// Make sure the platform reports a position at every epoch (truth plus
/// noise); spoofing attacks then override the window.
fn ensure_lbs_trace(dataset: &mut SimulatedDataset, rng: &mut ChaCha8Rng) -> Result<()> {
    let noise = Normal::new(0.0, 1.0).unwrap();
    for index in 0..dataset.config.epochs {
        if dataset.epochs[index].lbs_position.is_some() {
            continue;
        }
        let p = dataset.truth[index].1;
        let sigma = dataset.config.noise.lbs_sigma_m;
        let reported = EnuPoint::new(
            p.east + sigma * noise.sample(rng),
            p.north + sigma * noise.sample(rng),
            p.up,
        );
        set_lbs(dataset, index, reported)?;
    }
    Ok(())
}

fn set_lbs(dataset: &mut SimulatedDataset, index: usize, enu: EnuPoint) -> Result<()> {
    let time_ms = dataset.epoch_time(index);
    let geo = enu_to_wgs84(enu, dataset.config.origin)?;
    dataset.epochs[index].lbs_position = Some(geo);
    match dataset.lbs.iter_mut().find(|(t, _)| *t == time_ms) {
        Some(row) => row.1 = geo,
        None => {
            dataset.lbs.push((time_ms, geo));
            dataset.lbs.sort_by_key(|(t, _)| *t);
        }
    }
    Ok(())
}

/// Uncoordinated spoofing: each affected anchor's ranging drifts by its own
/// independent offset of at least `min_offset_m`.
pub fn inject_uncoordinated(
    dataset: &mut SimulatedDataset,
    schedule: &AttackSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    check_window(dataset, schedule)?;
    let affected = resolve_affected(dataset, schedule, rng)?;

    // One offset per anchor for the whole window.
    let mut offsets: BTreeMap<(Infrastructure, String), f64> = BTreeMap::new();
    for (infra, ids) in &affected {
        for id in ids {
            let magnitude = rng.random_range(schedule.min_offset_m..schedule.min_offset_m * 3.0);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            offsets.insert((*infra, id.clone()), sign * magnitude);
        }
    }

    let noise = Normal::new(0.0, 1.0).unwrap();
    for index in schedule.start_epoch..schedule.end_epoch {
        let truth = dataset.truth[index].1;
        for ((infra, id), offset) in &offsets {
            let enu = anchor_enu(dataset, *infra, id)?;
            let time_ms = dataset.epoch_time(index);
            let cfg = dataset.config.clone();
            let value = match infra {
                Infrastructure::Gnss => Some((
                    truth.distance(enu)
                        + dataset.clock_bias[index]
                        + offset
                        + cfg.noise.pseudorange_sigma_m * noise.sample(rng),
                    ValueKind::Pseudorange,
                    cfg.noise.pseudorange_sigma_m,
                )),
                Infrastructure::Geoip => Some((
                    (truth.distance_2d(enu) + offset + cfg.noise.rtt_jitter_m * noise.sample(rng))
                        .max(1.0),
                    ValueKind::RttDistance,
                    cfg.noise.rtt_jitter_m,
                )),
                _ => {
                    let model = cfg.path_loss_for(*infra);
                    let spoofed_range = (truth.distance(enu) + offset).max(1.0);
                    let rssi = model.range_to_rssi(spoofed_range)
                        + cfg.noise.rssi_shadowing_db * noise.sample(rng);
                    (rssi >= cfg.rssi_floor_dbm)
                        .then_some((rssi.min(-1.0), ValueKind::Rssi, cfg.noise.rssi_shadowing_db))
                }
            };
            let epoch = &mut dataset.epochs[index];
            let list = epoch.measurements.entry(*infra).or_default();
            list.retain(|m| m.anchor_id != *id);
            if let Some((value, value_kind, sigma)) = value {
                list.push(RangingMeasurement {
                    time_ms,
                    anchor_id: id.clone(),
                    infrastructure: *infra,
                    value,
                    value_kind,
                    sigma,
                });
            }
            if list.is_empty() {
                epoch.measurements.remove(infra);
            }
        }
    }
    push_labels(dataset, schedule, &affected);
    Ok(())
}

/// Coordinated spoofing: affected anchors across all selected infrastructures
/// emit values consistent with the spoof trajectory, and the platform's
/// reported position follows the spoof.
pub fn inject_coordinated(
    dataset: &mut SimulatedDataset,
    schedule: &AttackSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    check_window(dataset, schedule)?;
    let affected = resolve_affected(dataset, schedule, rng)?;
    ensure_lbs_trace(dataset, rng)?;

    let offset = EnuPoint::new(
        schedule.spoof_offset_m[0],
        schedule.spoof_offset_m[1],
        schedule.spoof_offset_m[2],
    );
    let noise = Normal::new(0.0, 1.0).unwrap();
    for index in schedule.start_epoch..schedule.end_epoch {
        let truth = dataset.truth[index].1;
        let spoof = EnuPoint::new(
            truth.east + offset.east,
            truth.north + offset.north,
            truth.up + offset.up,
        );
        for (infra, ids) in &affected {
            for id in ids {
                emit_consistent(dataset, index, *infra, id, spoof, rng)?;
            }
        }
        let sigma = dataset.config.noise.lbs_sigma_m;
        let reported = EnuPoint::new(
            spoof.east + sigma * noise.sample(rng),
            spoof.north + sigma * noise.sample(rng),
            spoof.up,
        );
        set_lbs(dataset, index, reported)?;
    }
    push_labels(dataset, schedule, &affected);
    Ok(())
}

/// Gradual drift: a coordinated spoof whose offset ramps linearly from zero
/// to `terminal_offset_m` over the window, in the direction of
/// `spoof_offset_m`.
pub fn inject_gradual_drift(
    dataset: &mut SimulatedDataset,
    schedule: &AttackSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    check_window(dataset, schedule)?;
    let affected = resolve_affected(dataset, schedule, rng)?;
    ensure_lbs_trace(dataset, rng)?;

    let dir = {
        let v = nalgebra::Vector3::new(
            schedule.spoof_offset_m[0],
            schedule.spoof_offset_m[1],
            schedule.spoof_offset_m[2],
        );
        if v.norm() < 1e-9 {
            nalgebra::Vector3::new(1.0, 0.0, 0.0)
        } else {
            v.normalize()
        }
    };
    let span = (schedule.end_epoch - schedule.start_epoch).max(1) as f64;
    let noise = Normal::new(0.0, 1.0).unwrap();

    for index in schedule.start_epoch..schedule.end_epoch {
        let progress = (index - schedule.start_epoch) as f64 / (span - 1.0).max(1.0);
        let magnitude = schedule.terminal_offset_m * progress;
        let truth = dataset.truth[index].1;
        let spoof = EnuPoint::from_vector(truth.to_vector() + dir * magnitude);
        for (infra, ids) in &affected {
            for id in ids {
                emit_consistent(dataset, index, *infra, id, spoof, rng)?;
            }
        }
        let sigma = dataset.config.noise.lbs_sigma_m;
        let reported = EnuPoint::new(
            spoof.east + sigma * noise.sample(rng),
            spoof.north + sigma * noise.sample(rng),
            spoof.up,
        );
        set_lbs(dataset, index, reported)?;
    }
    push_labels(dataset, schedule, &affected);
    Ok(())
}

/// Jamming: the affected anchors' measurements disappear during the window.
pub fn inject_jamming(
    dataset: &mut SimulatedDataset,
    schedule: &AttackSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    check_window(dataset, schedule)?;
    let affected = resolve_affected(dataset, schedule, rng)?;

    for index in schedule.start_epoch..schedule.end_epoch {
        let epoch = &mut dataset.epochs[index];
        for (infra, ids) in &affected {
            if let Some(list) = epoch.measurements.get_mut(infra) {
                list.retain(|m| !ids.contains(&m.anchor_id));
                if list.is_empty() {
                    epoch.measurements.remove(infra);
                }
            }
        }
    }
    push_labels(dataset, schedule, &affected);
    Ok(())
}
