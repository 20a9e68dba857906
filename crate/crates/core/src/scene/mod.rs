//! Seedable synthetic radar scenes: platform and array geometry, the ground
//! clutter patch field, point targets, and per-range-bin matched-filtered
//! returns.

mod calibrate;
mod config;
mod geometry;
mod returns;
mod scenario;
mod target;

pub use calibrate::{calibrate_rcs, measure_unit_scnr, rcs_for_target};
pub use config::{ClutterConfig, ScenarioConfig};
pub use geometry::{ArrayGeometry, Enu, SPEED_OF_LIGHT};
pub use returns::{simulate_returns, BinClutter, RangeBinData, ReturnSimulator};
pub use scenario::{build_scenario, displace_platform, ClutterPatch, Scenario, ScenarioTag};
pub use target::{sample_target, TargetTruth};
