//! WGS84 geodetic coordinates and the local east-north-up frame.
//!
//! All solver math in this crate runs in ENU meters relative to a declared
//! scenario origin; WGS84 appears only at the I/O boundary.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// WGS84 semi-major axis in meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;
/// First eccentricity squared, e² = f(2 − f).
pub const WGS84_E2: f64 = WGS84_F * (2.0 - WGS84_F);
/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A geodetic position on the WGS84 ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    /// Latitude in degrees, in [−90, 90].
    pub lat_deg: f64,
    /// Longitude in degrees, in [−180, 180].
    pub lon_deg: f64,
    /// Height above the ellipsoid in meters.
    pub alt_m: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64, alt_m: f64) -> Result<Self> {
        if !lat_deg.is_finite() || !lon_deg.is_finite() || !alt_m.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite geodetic coordinates ({lat_deg}, {lon_deg}, {alt_m})"
            )));
        }
        if !(-90.0..=90.0).contains(&lat_deg) {
            return Err(Error::InvalidArgument(format!(
                "latitude {lat_deg} outside [-90, 90]"
            )));
        }
        if !(-180.0..=180.0).contains(&lon_deg) {
            return Err(Error::InvalidArgument(format!(
                "longitude {lon_deg} outside [-180, 180]"
            )));
        }
        Ok(GeoPoint {
            lat_deg,
            lon_deg,
            alt_m,
        })
    }
}

/// A position in the local east-north-up frame of a scenario origin, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnuPoint {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

impl EnuPoint {
    pub const fn new(east: f64, north: f64, up: f64) -> Self {
        EnuPoint { east, north, up }
    }

    pub fn from_vector(v: Vector3<f64>) -> Self {
        EnuPoint::new(v.x, v.y, v.z)
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.east, self.north, self.up)
    }

    pub fn is_finite(self) -> bool {
        self.east.is_finite() && self.north.is_finite() && self.up.is_finite()
    }

    pub fn distance(self, other: EnuPoint) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }

    /// Horizontal (east/north) distance, used by the planar solvers.
    pub fn distance_2d(self, other: EnuPoint) -> f64 {
        let de = self.east - other.east;
        let dn = self.north - other.north;
        de.hypot(dn)
    }
}

/// Geodetic to earth-centered earth-fixed.
pub fn wgs84_to_ecef(p: GeoPoint) -> Vector3<f64> {
    let lat = p.lat_deg.to_radians();
    let lon = p.lon_deg.to_radians();
    let (sin_lat, cos_lat) = lat.sin_cos();
    let (sin_lon, cos_lon) = lon.sin_cos();
    let n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
    Vector3::new(
        (n + p.alt_m) * cos_lat * cos_lon,
        (n + p.alt_m) * cos_lat * sin_lon,
        (n * (1.0 - WGS84_E2) + p.alt_m) * sin_lat,
    )
}

/// ECEF to geodetic by fixed-point iteration on the latitude.
pub fn ecef_to_wgs84(ecef: Vector3<f64>) -> GeoPoint {
    let r2 = ecef.x * ecef.x + ecef.y * ecef.y;
    let r = r2.sqrt();
    let lon = if r2 > 1e-12 {
        ecef.y.atan2(ecef.x)
    } else {
        0.0
    };

    let mut z = ecef.z;
    let mut n;
    loop {
        let zk = z;
        let sin_lat = z / (r2 + z * z).sqrt();
        n = WGS84_A / (1.0 - WGS84_E2 * sin_lat * sin_lat).sqrt();
        z = ecef.z + n * WGS84_E2 * sin_lat;
        if (z - zk).abs() < 1e-10 {
            break;
        }
    }

    let lat = if r2 > 1e-12 {
        (z / r).atan()
    } else if ecef.z > 0.0 {
        std::f64::consts::FRAC_PI_2
    } else {
        -std::f64::consts::FRAC_PI_2
    };
    let alt = (r2 + z * z).sqrt() - n;
    GeoPoint {
        lat_deg: lat.to_degrees(),
        lon_deg: lon.to_degrees(),
        alt_m: alt,
    }
}

/// Rotation from ECEF deltas into the ENU frame at `origin`.
fn enu_rotation(origin: GeoPoint) -> Matrix3<f64> {
    let lat = origin.lat_deg.to_radians();
    let lon = origin.lon_deg.to_radians();
    let (sin_lat, cos_lat) = lat.sin_cos();
    let (sin_lon, cos_lon) = lon.sin_cos();
    Matrix3::new(
        -sin_lon,
        cos_lon,
        0.0,
        -sin_lat * cos_lon,
        -sin_lat * sin_lon,
        cos_lat,
        cos_lat * cos_lon,
        cos_lat * sin_lon,
        sin_lat,
    )
}

/// Convert a WGS84 point into the ENU frame of `origin`.
pub fn wgs84_to_enu(p: GeoPoint, origin: GeoPoint) -> Result<EnuPoint> {
    // Constructors validate ranges; re-check finiteness for points built directly.
    for v in [
        p.lat_deg,
        p.lon_deg,
        p.alt_m,
        origin.lat_deg,
        origin.lon_deg,
        origin.alt_m,
    ] {
        if !v.is_finite() {
            return Err(Error::InvalidArgument(
                "non-finite coordinate in wgs84_to_enu".into(),
            ));
        }
    }
    let d = wgs84_to_ecef(p) - wgs84_to_ecef(origin);
    Ok(EnuPoint::from_vector(enu_rotation(origin) * d))
}

/// Inverse of [`wgs84_to_enu`].
pub fn enu_to_wgs84(p: EnuPoint, origin: GeoPoint) -> Result<GeoPoint> {
    if !p.is_finite() {
        return Err(Error::InvalidArgument(
            "non-finite coordinate in enu_to_wgs84".into(),
        ));
    }
    let ecef = wgs84_to_ecef(origin) + enu_rotation(origin).transpose() * p.to_vector();
    Ok(ecef_to_wgs84(ecef))
}

/// Convert an ECEF position (e.g. a broadcast satellite location) to ENU.
pub fn ecef_to_enu(ecef: Vector3<f64>, origin: GeoPoint) -> EnuPoint {
    let d = ecef - wgs84_to_ecef(origin);
    EnuPoint::from_vector(enu_rotation(origin) * d)
}

/// Convert an ENU position back to ECEF.
pub fn enu_to_ecef(p: EnuPoint, origin: GeoPoint) -> Vector3<f64> {
    wgs84_to_ecef(origin) + enu_rotation(origin).transpose() * p.to_vector()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn origin_maps_to_zero() {
        let origin = GeoPoint::new(59.404, 17.947, 30.0).unwrap();
        let enu = wgs84_to_enu(origin, origin).unwrap();
        assert_abs_diff_eq!(enu.east, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(enu.north, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(enu.up, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn round_trip_within_10km() {
        let origin = GeoPoint::new(59.404, 17.947, 30.0).unwrap();
        for (de, dn, du) in [
            (100.0, -250.0, 5.0),
            (9_500.0, 3_000.0, -40.0),
            (-7_000.0, -6_000.0, 120.0),
            (0.0, 9_999.0, 0.0),
        ] {
            let p = EnuPoint::new(de, dn, du);
            let geo = enu_to_wgs84(p, origin).unwrap();
            let back = wgs84_to_enu(geo, origin).unwrap();
            assert!(back.distance(p) < 1e-6, "round trip error {}", back.distance(p));
        }
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(GeoPoint::new(91.0, 0.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, 200.0, 0.0).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0, 0.0).is_err());
    }

    #[test]
    fn ecef_round_trip() {
        let p = GeoPoint::new(-33.45, 18.2, 512.0).unwrap();
        let back = ecef_to_wgs84(wgs84_to_ecef(p));
        assert_abs_diff_eq!(back.lat_deg, p.lat_deg, epsilon = 1e-9);
        assert_abs_diff_eq!(back.lon_deg, p.lon_deg, epsilon = 1e-9);
        assert_abs_diff_eq!(back.alt_m, p.alt_m, epsilon = 1e-4);
    }
}
