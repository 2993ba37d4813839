//! Extended-RAIM location integrity: fuses opportunistic ranging from GNSS
//! and terrestrial infrastructures into per-subset position estimates,
//! scores the likelihood that a reported position is manipulated, excludes
//! adversarial measurements, and recovers the true position. Ships with a
//! synthetic attack simulator and a combinatorial recoverability analysis.

pub mod error;
pub mod fusion;
pub mod geo;
pub mod io;
pub mod metrics;
pub mod motion;
pub mod pipeline;
pub mod sim;
pub mod solve;
pub mod subsets;
pub mod theory;
pub mod types;

pub use error::{Error, Result};
pub use geo::{enu_to_wgs84, wgs84_to_enu, EnuPoint, GeoPoint};
pub use types::{Anchor, AnchorRegistry, Epoch, Infrastructure, MotionSample, RangingMeasurement, ValueKind};
