//! Log-distance path loss: RSSI to range and back.

use serde::{Deserialize, Serialize};

/// Log-distance path loss parameters: reference power `p0_dbm` measured at
/// `d0_m`, decay exponent `exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub p0_dbm: f64,
    pub d0_m: f64,
    pub exponent: f64,
}

impl Default for PathLossModel {
    /// Outdoor defaults: −40 dBm at 1 m with exponent 2.7.
    fn default() -> Self {
        PathLossModel {
            p0_dbm: -40.0,
            d0_m: 1.0,
            exponent: 2.7,
        }
    }
}

impl PathLossModel {
    /// Invert the model: `d = d0 · 10^((P0 − rssi) / (10 n))`.
    ///
    /// Strictly decreasing in `rssi`; total on any finite input.
    pub fn rssi_to_range(&self, rssi_dbm: f64) -> f64 {
        self.d0_m * 10f64.powf((self.p0_dbm - rssi_dbm) / (10.0 * self.exponent))
    }

    /// Forward model, the expected RSSI at distance `d`.
    pub fn range_to_rssi(&self, distance_m: f64) -> f64 {
        self.p0_dbm - 10.0 * self.exponent * (distance_m / self.d0_m).max(1e-12).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_point() {
        let m = PathLossModel::default();
        assert!((m.rssi_to_range(m.p0_dbm) - m.d0_m).abs() < 1e-12);
    }

    #[test]
    fn closed_form_example() {
        // P0 = −40 dBm at 1 m, n = 2: −60 dBm is 10 m away.
        let m = PathLossModel {
            p0_dbm: -40.0,
            d0_m: 1.0,
            exponent: 2.0,
        };
        assert!((m.rssi_to_range(-60.0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn monotone_decreasing_in_rssi() {
        let m = PathLossModel::default();
        let mut prev = m.rssi_to_range(-30.0);
        let mut rssi = -31.0;
        while rssi > -100.0 {
            let d = m.rssi_to_range(rssi);
            assert!(d > prev);
            prev = d;
            rssi -= 1.0;
        }
    }

    #[test]
    fn forward_inverse_round_trip() {
        let m = PathLossModel::default();
        for d in [1.0, 3.5, 20.0, 180.0] {
            let r = m.rssi_to_range(m.range_to_rssi(d));
            assert!((r - d).abs() / d < 1e-12);
        }
    }
}
