//! Flat CSV ingestion and emission.
//!
//! Schemas (header row mandatory, UTF-8):
//!   gnss:    `time_ms,sat_id,signal_type,pseudorange_m,pr_sigma_m,sat_x_ecef_m,sat_y_ecef_m,sat_z_ecef_m`
//!   network: `time_ms,infra,anchor_id,rssi_dbm_or_rtt_m,value_kind,freq_hz`
//!   anchors: `infra,id,lat_deg,lon_deg,alt_m,metadata_json`
//!   motion:  `time_ms,vx,vy,vz,ax,ay,az,roll,pitch,yaw`
//!   labels:  `time_ms,attacked,infra,anchor_id`
//!   lbs:     `time_ms,lat_deg,lon_deg,alt_m`

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geo::{ecef_to_wgs84, wgs84_to_ecef, GeoPoint};
use crate::types::{
    wrap_angle, Anchor, AnchorRegistry, Epoch, Infrastructure, MotionSample, RangingMeasurement,
    ValueKind,
};

pub const GNSS_HEADER: &[&str] = &[
    "time_ms",
    "sat_id",
    "signal_type",
    "pseudorange_m",
    "pr_sigma_m",
    "sat_x_ecef_m",
    "sat_y_ecef_m",
    "sat_z_ecef_m",
];
pub const NETWORK_HEADER: &[&str] = &[
    "time_ms",
    "infra",
    "anchor_id",
    "rssi_dbm_or_rtt_m",
    "value_kind",
    "freq_hz",
];
pub const ANCHOR_HEADER: &[&str] = &["infra", "id", "lat_deg", "lon_deg", "alt_m", "metadata_json"];
pub const MOTION_HEADER: &[&str] = &[
    "time_ms", "vx", "vy", "vz", "ax", "ay", "az", "roll", "pitch", "yaw",
];
pub const LABEL_HEADER: &[&str] = &["time_ms", "attacked", "infra", "anchor_id"];
pub const LBS_HEADER: &[&str] = &["time_ms", "lat_deg", "lon_deg", "alt_m"];

/// One ground-truth attack label row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackLabel {
    pub time_ms: i64,
    pub attacked: bool,
    pub infrastructure: Infrastructure,
    pub anchor_id: String,
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

fn check_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, want: &[&str]) -> Result<()> {
    let got = reader.headers()?.clone();
    let got: Vec<&str> = got.iter().map(str::trim).collect();
    if got != want {
        return Err(Error::Format {
            path: path.display().to_string(),
            message: format!("header mismatch: expected {want:?}, got {got:?}"),
        });
    }
    Ok(())
}

fn row_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Row {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: u64,
    field: &str,
    name: &str,
) -> Result<T> {
    field
        .trim()
        .parse::<T>()
        .map_err(|_| row_err(path, line, format!("cannot parse {name} from {field:?}")))
}

/// Parse a GNSS measurement log into per-timestamp epoch fragments.
///
/// Each row becomes one pseudorange measurement; the broadcast satellite
/// position becomes an inline per-epoch anchor.
pub fn parse_gnss_log(path: &Path) -> Result<Vec<Epoch>> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, GNSS_HEADER)?;

    let mut epochs: BTreeMap<i64, Epoch> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let time_ms: i64 = parse_field(path, line, &record[0], "time_ms")?;
        let sat_id = record[1].trim().to_string();
        if sat_id.is_empty() {
            return Err(row_err(path, line, "empty sat_id"));
        }
        let signal_type = record[2].trim().to_string();
        let pseudorange: f64 = parse_field(path, line, &record[3], "pseudorange_m")?;
        let sigma: f64 = parse_field(path, line, &record[4], "pr_sigma_m")?;
        let x: f64 = parse_field(path, line, &record[5], "sat_x_ecef_m")?;
        let y: f64 = parse_field(path, line, &record[6], "sat_y_ecef_m")?;
        let z: f64 = parse_field(path, line, &record[7], "sat_z_ecef_m")?;

        let measurement = RangingMeasurement {
            time_ms,
            anchor_id: sat_id.clone(),
            infrastructure: Infrastructure::Gnss,
            value: pseudorange,
            value_kind: ValueKind::Pseudorange,
            sigma,
        };
        measurement
            .validate()
            .map_err(|e| row_err(path, line, e.to_string()))?;

        let mut metadata = BTreeMap::new();
        metadata.insert("signal_type".to_string(), signal_type);
        let anchor = Anchor {
            id: sat_id,
            infrastructure: Infrastructure::Gnss,
            position: ecef_to_wgs84(Vector3::new(x, y, z)),
            metadata,
        };

        let epoch = epochs.entry(time_ms).or_insert_with(|| Epoch::new(time_ms));
        epoch.push_measurement(measurement);
        if !epoch.gnss_anchors.iter().any(|a| a.id == anchor.id) {
            epoch.gnss_anchors.push(anchor);
        }
    }
    Ok(epochs.into_values().collect())
}

/// Parse a network survey log (Wi-Fi, cellular, Bluetooth RSSI and GeoIP RTT
/// distances) into per-timestamp epoch fragments.
pub fn parse_network_log(path: &Path) -> Result<Vec<Epoch>> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, NETWORK_HEADER)?;

    let mut epochs: BTreeMap<i64, Epoch> = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let time_ms: i64 = parse_field(path, line, &record[0], "time_ms")?;
        let infra = Infrastructure::parse(&record[1]).map_err(|e| row_err(path, line, e.to_string()))?;
        if infra == Infrastructure::Gnss {
            return Err(row_err(path, line, "gnss rows belong in the gnss log"));
        }
        let anchor_id = record[2].trim().to_string();
        if anchor_id.is_empty() {
            return Err(row_err(path, line, "empty anchor_id"));
        }
        let value: f64 = parse_field(path, line, &record[3], "rssi_dbm_or_rtt_m")?;
        let value_kind =
            ValueKind::parse(&record[4]).map_err(|e| row_err(path, line, e.to_string()))?;
        if value_kind == ValueKind::Pseudorange {
            return Err(row_err(path, line, "pseudoranges belong in the gnss log"));
        }
        // freq_hz is carried for completeness; ranging does not use it.
        let _freq: f64 = parse_field(path, line, &record[5], "freq_hz")?;

        let measurement = RangingMeasurement {
            time_ms,
            anchor_id,
            infrastructure: infra,
            value,
            value_kind,
            sigma: 0.0,
        };
        measurement
            .validate()
            .map_err(|e| row_err(path, line, e.to_string()))?;
        epochs
            .entry(time_ms)
            .or_insert_with(|| Epoch::new(time_ms))
            .push_measurement(measurement);
    }
    Ok(epochs.into_values().collect())
}

/// Load the anchor database; duplicate (infrastructure, id) pairs are rejected.
pub fn load_anchor_db(path: &Path) -> Result<AnchorRegistry> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, ANCHOR_HEADER)?;

    let mut registry = AnchorRegistry::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let infra = Infrastructure::parse(&record[0]).map_err(|e| row_err(path, line, e.to_string()))?;
        let id = record[1].trim().to_string();
        let lat: f64 = parse_field(path, line, &record[2], "lat_deg")?;
        let lon: f64 = parse_field(path, line, &record[3], "lon_deg")?;
        let alt: f64 = parse_field(path, line, &record[4], "alt_m")?;
        let metadata: BTreeMap<String, String> = if record[5].trim().is_empty() {
            BTreeMap::new()
        } else {
            serde_json::from_str(record[5].trim())
                .map_err(|e| row_err(path, line, format!("bad metadata_json: {e}")))?
        };
        let position =
            GeoPoint::new(lat, lon, alt).map_err(|e| row_err(path, line, e.to_string()))?;
        registry
            .insert(Anchor {
                id,
                infrastructure: infra,
                position,
                metadata,
            })
            .map_err(|e| Error::Format {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
    }
    Ok(registry)
}

/// Parse onboard motion samples.
pub fn parse_motion_log(path: &Path) -> Result<Vec<MotionSample>> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, MOTION_HEADER)?;

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let mut fields = [0.0f64; 9];
        let time_ms: i64 = parse_field(path, line, &record[0], "time_ms")?;
        for (i, name) in MOTION_HEADER[1..].iter().enumerate() {
            fields[i] = parse_field(path, line, &record[i + 1], name)?;
            if !fields[i].is_finite() {
                return Err(row_err(path, line, format!("non-finite {name}")));
            }
        }
        samples.push(MotionSample {
            time_ms,
            velocity: [fields[0], fields[1], fields[2]],
            acceleration: [fields[3], fields[4], fields[5]],
            orientation: [
                wrap_angle(fields[6]),
                wrap_angle(fields[7]),
                wrap_angle(fields[8]),
            ],
        });
    }
    samples.sort_by_key(|s| s.time_ms);
    Ok(samples)
}

/// Parse platform-reported positions.
pub fn parse_lbs_log(path: &Path) -> Result<Vec<(i64, GeoPoint)>> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, LBS_HEADER)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let time_ms: i64 = parse_field(path, line, &record[0], "time_ms")?;
        let lat: f64 = parse_field(path, line, &record[1], "lat_deg")?;
        let lon: f64 = parse_field(path, line, &record[2], "lon_deg")?;
        let alt: f64 = parse_field(path, line, &record[3], "alt_m")?;
        rows.push((
            time_ms,
            GeoPoint::new(lat, lon, alt).map_err(|e| row_err(path, line, e.to_string()))?,
        ));
    }
    rows.sort_by_key(|r| r.0);
    Ok(rows)
}

/// Parse ground-truth attack labels.
pub fn parse_labels(path: &Path) -> Result<Vec<AttackLabel>> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, LABEL_HEADER)?;
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let time_ms: i64 = parse_field(path, line, &record[0], "time_ms")?;
        let attacked: u8 = parse_field(path, line, &record[1], "attacked")?;
        let infra = Infrastructure::parse(&record[2]).map_err(|e| row_err(path, line, e.to_string()))?;
        labels.push(AttackLabel {
            time_ms,
            attacked: attacked != 0,
            infrastructure: infra,
            anchor_id: record[3].trim().to_string(),
        });
    }
    Ok(labels)
}

/// Merge per-source epoch fragments into aligned epochs.
///
/// Fragment timestamps within `window_ms` of an existing epoch are folded into
/// it; others start a new epoch. Motion samples and platform positions attach
/// to the nearest epoch within the window.
pub fn merge_epochs(
    fragments: Vec<Epoch>,
    motion: &[MotionSample],
    lbs: &[(i64, GeoPoint)],
    window_ms: i64,
) -> Vec<Epoch> {
    let mut fragments = fragments;
    fragments.sort_by_key(|e| e.time_ms);

    let mut merged: Vec<Epoch> = Vec::new();
    for fragment in fragments {
        match merged
            .last_mut()
            .filter(|e| (fragment.time_ms - e.time_ms).abs() <= window_ms)
        {
            Some(epoch) => {
                for (infra, ms) in fragment.measurements {
                    epoch.measurements.entry(infra).or_default().extend(ms);
                }
                for anchor in fragment.gnss_anchors {
                    if !epoch.gnss_anchors.iter().any(|a| a.id == anchor.id) {
                        epoch.gnss_anchors.push(anchor);
                    }
                }
                if epoch.lbs_position.is_none() {
                    epoch.lbs_position = fragment.lbs_position;
                }
                if epoch.motion.is_none() {
                    epoch.motion = fragment.motion;
                }
            }
            None => merged.push(fragment),
        }
    }

    for epoch in &mut merged {
        if epoch.motion.is_none() {
            epoch.motion = nearest_within(motion, epoch.time_ms, window_ms, |m| m.time_ms).copied();
        }
        if epoch.lbs_position.is_none() {
            epoch.lbs_position =
                nearest_within(lbs, epoch.time_ms, window_ms, |l| l.0).map(|l| l.1);
        }
    }
    merged
}

fn nearest_within<T>(items: &[T], t: i64, window_ms: i64, key: impl Fn(&T) -> i64) -> Option<&T> {
    items
        .iter()
        .map(|item| (key(item).abs_diff(t), item))
        .min_by_key(|(d, _)| *d)
        .filter(|(d, _)| *d <= window_ms as u64)
        .map(|(_, item)| item)
}

// ---------------------------------------------------------------------------
// Writers (used by the simulator and by round-trip tests)
// ---------------------------------------------------------------------------

fn open_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn fmt_f64(v: f64) -> String {
    // Shortest representation that round-trips; keeps files byte-stable.
    format!("{v}")
}

/// Write GNSS epochs (pseudorange rows with inline satellite positions).
pub fn write_gnss_log(path: &Path, epochs: &[Epoch], origin: GeoPoint) -> Result<()> {
    let _ = origin; // satellite anchors already carry geodetic positions
    let mut w = open_writer(path)?;
    w.write_record(GNSS_HEADER)?;
    for epoch in epochs {
        for m in epoch.measurements_for(Infrastructure::Gnss) {
            let anchor = epoch
                .gnss_anchors
                .iter()
                .find(|a| a.id == m.anchor_id)
                .ok_or_else(|| Error::InvalidArgument(format!(
                    "epoch {} has no inline anchor for satellite {}",
                    epoch.time_ms, m.anchor_id
                )))?;
            let ecef = wgs84_to_ecef(anchor.position);
            let signal = anchor
                .metadata
                .get("signal_type")
                .cloned()
                .unwrap_or_else(|| "L1CA".to_string());
            w.write_record([
                m.time_ms.to_string(),
                m.anchor_id.clone(),
                signal,
                fmt_f64(m.value),
                fmt_f64(m.sigma),
                fmt_f64(ecef.x),
                fmt_f64(ecef.y),
                fmt_f64(ecef.z),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Write network epochs (everything except GNSS).
pub fn write_network_log(path: &Path, epochs: &[Epoch]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(NETWORK_HEADER)?;
    for epoch in epochs {
        for (infra, ms) in &epoch.measurements {
            if *infra == Infrastructure::Gnss {
                continue;
            }
            for m in ms {
                w.write_record([
                    m.time_ms.to_string(),
                    infra.as_str().to_string(),
                    m.anchor_id.clone(),
                    fmt_f64(m.value),
                    m.value_kind.as_str().to_string(),
                    "0".to_string(),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_anchor_db(path: &Path, registry: &AnchorRegistry) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(ANCHOR_HEADER)?;
    for anchor in registry.iter() {
        let metadata = if anchor.metadata.is_empty() {
            String::new()
        } else {
            serde_json::to_string(&anchor.metadata)?
        };
        w.write_record([
            anchor.infrastructure.as_str().to_string(),
            anchor.id.clone(),
            fmt_f64(anchor.position.lat_deg),
            fmt_f64(anchor.position.lon_deg),
            fmt_f64(anchor.position.alt_m),
            metadata,
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_motion_log(path: &Path, samples: &[MotionSample]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(MOTION_HEADER)?;
    for s in samples {
        w.write_record([
            s.time_ms.to_string(),
            fmt_f64(s.velocity[0]),
            fmt_f64(s.velocity[1]),
            fmt_f64(s.velocity[2]),
            fmt_f64(s.acceleration[0]),
            fmt_f64(s.acceleration[1]),
            fmt_f64(s.acceleration[2]),
            fmt_f64(s.orientation[0]),
            fmt_f64(s.orientation[1]),
            fmt_f64(s.orientation[2]),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_lbs_log(path: &Path, rows: &[(i64, GeoPoint)]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(LBS_HEADER)?;
    for (t, p) in rows {
        w.write_record([
            t.to_string(),
            fmt_f64(p.lat_deg),
            fmt_f64(p.lon_deg),
            fmt_f64(p.alt_m),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_labels(path: &Path, labels: &[AttackLabel]) -> Result<()> {
    let mut w = open_writer(path)?;
    w.write_record(LABEL_HEADER)?;
    for l in labels {
        w.write_record([
            l.time_ms.to_string(),
            if l.attacked { "1" } else { "0" }.to_string(),
            l.infrastructure.as_str().to_string(),
            l.anchor_id.clone(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
