//! Boot cost, availability and the security-patch fire drill.

pub mod cost;
pub mod scenario;
pub mod sim;

pub use cost::{
    availability, boot_duration, parse_duration, BootCostModel, CostError, Downtime, MB,
};
pub use scenario::{FleetScenario, ResponseDistribution, ScenarioError};
pub use sim::{simulate_firedrill, FiredrillResult};
