//! Per-subset positioning: GNSS least squares, weighted least squares over
//! RSSI-derived ranges, GeoIP circle intersection, range multilateration, and
//! RSSI fingerprinting.

mod dop;
mod fingerprint;
mod geoip;
mod gnss;
mod pathloss;
mod wls;

pub use dop::{compute_dop, Dop};
pub use fingerprint::{fingerprint_position, FingerprintDb, FingerprintEntry};
pub use geoip::{rtt_to_range, solve_geoip, GeoipSolution, DEFAULT_RTT_GAMMA};
pub use gnss::{solve_gnss_ls, GnssSolution};
pub use pathloss::PathLossModel;
pub use wls::{solve_range_ls, solve_weighted_ls, LsSolution};

/// Iteration limits shared by the iterative solvers.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Gauss-Newton step tolerance in meters.
    pub step_tolerance: f64,
    /// Grid size per axis for the GeoIP intersection sampler.
    pub geoip_grid: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 20,
            step_tolerance: 1e-8,
            geoip_grid: 64,
        }
    }
}
