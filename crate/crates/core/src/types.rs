//! Domain types shared across the pipeline: anchors, measurements, epochs.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoPoint;

/// The ranging infrastructures a platform can hear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Infrastructure {
    Gnss,
    Wifi,
    Cell,
    Bluetooth,
    Geoip,
}

impl Infrastructure {
    pub const ALL: [Infrastructure; 5] = [
        Infrastructure::Gnss,
        Infrastructure::Wifi,
        Infrastructure::Cell,
        Infrastructure::Bluetooth,
        Infrastructure::Geoip,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Infrastructure::Gnss => "gnss",
            Infrastructure::Wifi => "wifi",
            Infrastructure::Cell => "cell",
            Infrastructure::Bluetooth => "bluetooth",
            Infrastructure::Geoip => "geoip",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gnss" => Ok(Infrastructure::Gnss),
            "wifi" => Ok(Infrastructure::Wifi),
            "cell" | "cellular" => Ok(Infrastructure::Cell),
            "bluetooth" | "bt" => Ok(Infrastructure::Bluetooth),
            "geoip" => Ok(Infrastructure::Geoip),
            other => Err(Error::InvalidArgument(format!(
                "unknown infrastructure {other:?}"
            ))),
        }
    }
}

impl fmt::Display for Infrastructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What a measurement value means, and therefore its unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    /// Satellite pseudorange in meters (true range plus a common clock bias).
    Pseudorange,
    /// Received signal strength in dBm (non-positive).
    Rssi,
    /// Round-trip-time already mapped to a one-way distance in meters.
    RttDistance,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Pseudorange => "pseudorange",
            ValueKind::Rssi => "rssi",
            ValueKind::RttDistance => "rtt_distance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pseudorange" => Ok(ValueKind::Pseudorange),
            "rssi" => Ok(ValueKind::Rssi),
            "rtt_distance" | "rtt" => Ok(ValueKind::RttDistance),
            other => Err(Error::InvalidArgument(format!(
                "unknown value kind {other:?}"
            ))),
        }
    }
}

/// A transmitter with a known position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub id: String,
    pub infrastructure: Infrastructure,
    pub position: GeoPoint,
    /// Free-form attributes (SSID, cell id, ...).
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// One timestamped ranging observation tied to an anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangingMeasurement {
    /// Unix milliseconds.
    pub time_ms: i64,
    pub anchor_id: String,
    pub infrastructure: Infrastructure,
    /// Meters for pseudorange and RTT distance, dBm for RSSI.
    pub value: f64,
    pub value_kind: ValueKind,
    /// Reported measurement uncertainty in the same unit as `value`;
    /// zero when the source does not report one.
    pub sigma: f64,
}

impl RangingMeasurement {
    pub fn validate(&self) -> Result<()> {
        if !self.value.is_finite() || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite measurement for anchor {}",
                self.anchor_id
            )));
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "negative sigma {} for anchor {}",
                self.sigma, self.anchor_id
            )));
        }
        match self.value_kind {
            ValueKind::Rssi if self.value > 0.0 => Err(Error::InvalidArgument(format!(
                "RSSI must be <= 0 dBm, got {} for anchor {}",
                self.value, self.anchor_id
            ))),
            ValueKind::Pseudorange if self.value <= 0.0 => Err(Error::InvalidArgument(format!(
                "pseudorange must be positive, got {} for anchor {}",
                self.value, self.anchor_id
            ))),
            ValueKind::RttDistance if self.value <= 0.0 => Err(Error::InvalidArgument(format!(
                "RTT distance must be positive, got {} for anchor {}",
                self.value, self.anchor_id
            ))),
            _ => Ok(()),
        }
    }
}

/// Platform motion at one epoch, body frame (right-forward-up).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSample {
    pub time_ms: i64,
    /// Velocity in m/s.
    pub velocity: [f64; 3],
    /// Acceleration in m/s².
    pub acceleration: [f64; 3],
    /// Roll, pitch, yaw in radians, wrapped to (−π, π].
    pub orientation: [f64; 3],
}

/// Wrap an angle to (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut w = a % two_pi;
    if w <= -std::f64::consts::PI {
        w += two_pi;
    } else if w > std::f64::consts::PI {
        w -= two_pi;
    }
    w
}

/// All observations sharing one detection instant.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub time_ms: i64,
    /// Measurements grouped by infrastructure.
    pub measurements: BTreeMap<Infrastructure, Vec<RangingMeasurement>>,
    /// Satellite anchors travel inline with the epoch; terrestrial anchors
    /// come from the registry.
    pub gnss_anchors: Vec<Anchor>,
    pub motion: Option<MotionSample>,
    /// The position the platform's own location service reports, if any.
    pub lbs_position: Option<GeoPoint>,
}

impl Epoch {
    pub fn new(time_ms: i64) -> Self {
        Epoch {
            time_ms,
            ..Default::default()
        }
    }

    pub fn measurement_count(&self) -> usize {
        self.measurements.values().map(Vec::len).sum()
    }

    pub fn measurements_for(&self, infra: Infrastructure) -> &[RangingMeasurement] {
        self.measurements
            .get(&infra)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn push_measurement(&mut self, m: RangingMeasurement) {
        self.measurements
            .entry(m.infrastructure)
            .or_default()
            .push(m);
    }
}

/// Read-only registry of terrestrial anchors, queryable by (infrastructure, id).
#[derive(Debug, Clone, Default)]
pub struct AnchorRegistry {
    anchors: BTreeMap<(Infrastructure, String), Anchor>,
}

impl AnchorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert an anchor, rejecting duplicate (infrastructure, id) pairs.
    pub fn insert(&mut self, anchor: Anchor) -> Result<()> {
        if !anchor.position.lat_deg.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "anchor {} has non-finite position",
                anchor.id
            )));
        }
        let key = (anchor.infrastructure, anchor.id.clone());
        if self.anchors.contains_key(&key) {
            return Err(Error::InvalidArgument(format!(
                "duplicate anchor ({}, {})",
                key.0, key.1
            )));
        }
        self.anchors.insert(key, anchor);
        Ok(())
    }

    pub fn get(&self, infra: Infrastructure, id: &str) -> Option<&Anchor> {
        self.anchors.get(&(infra, id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Anchor> {
        self.anchors.values()
    }

    /// Anchors of one infrastructure, in id order.
    pub fn of(&self, infra: Infrastructure) -> impl Iterator<Item = &Anchor> {
        self.anchors
            .range((infra, String::new())..)
            .take_while(move |((i, _), _)| *i == infra)
            .map(|(_, a)| a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchor(infra: Infrastructure, id: &str) -> Anchor {
        Anchor {
            id: id.to_string(),
            infrastructure: infra,
            position: GeoPoint::new(59.0, 18.0, 0.0).unwrap(),
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn registry_rejects_duplicates() {
        let mut reg = AnchorRegistry::new();
        reg.insert(anchor(Infrastructure::Wifi, "ap1")).unwrap();
        // Same id in another infrastructure is fine.
        reg.insert(anchor(Infrastructure::Cell, "ap1")).unwrap();
        assert!(reg.insert(anchor(Infrastructure::Wifi, "ap1")).is_err());
        assert_eq!(reg.len(), 2);
    }

    #[test]
    fn registry_filters_by_infrastructure() {
        let mut reg = AnchorRegistry::new();
        for id in ["a", "b", "c"] {
            reg.insert(anchor(Infrastructure::Wifi, id)).unwrap();
        }
        reg.insert(anchor(Infrastructure::Cell, "z")).unwrap();
        let wifi: Vec<_> = reg.of(Infrastructure::Wifi).map(|a| a.id.clone()).collect();
        assert_eq!(wifi, ["a", "b", "c"]);
        assert_eq!(reg.of(Infrastructure::Geoip).count(), 0);
    }

    #[test]
    fn rssi_sign_invariant() {
        let m = RangingMeasurement {
            time_ms: 0,
            anchor_id: "ap".into(),
            infrastructure: Infrastructure::Wifi,
            value: 5.0,
            value_kind: ValueKind::Rssi,
            sigma: 0.0,
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn wrap_angle_range() {
        for a in [-10.0, -std::f64::consts::PI, 0.0, 3.2, 9.0, 100.0] {
            let w = wrap_angle(a);
            assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
        }
        assert!((wrap_angle(std::f64::consts::TAU)).abs() < 1e-12);
    }
}
