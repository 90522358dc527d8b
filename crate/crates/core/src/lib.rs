//! Detection scheduling for sensor networks under false-data injection.
//!
//! The crate models a distributed sensor network estimating a linear plant,
//! an attacker that tampers with estimates exchanged between neighbors, and
//! the machinery a receiving sensor uses to flag suspect neighbors:
//!
//! * [`model`] — plant, sensors, observability structure, consensus estimator;
//! * [`partition`] — indicator-vector geometry and neighbor-set partitioning;
//! * [`attack`] — dynamic compromised-set traces and injected signals;
//! * [`selection`] — submodular objectives, marginal gains, and the two-stage
//!   distributed attack-detection scheduler (D-ADS) with its gain-update
//!   policies;
//! * [`metrics`] — optimization rates, RMSE curves, attacked-subset occupancy.
//!
//! All numeric code is generic over the scalar type via [`Real`]; simulations
//! normally instantiate with `f64` (see the type aliases at the crate root).
//! Every stochastic operation takes an explicit RNG so that runs are
//! reproducible from a master seed (see [`rng::substream`]).

pub mod attack;
pub mod error;
pub mod metrics;
pub mod model;
pub mod partition;
pub mod rng;
pub mod scalar;
pub mod selection;

pub use error::{Error, Result};
pub use scalar::Real;

/// Sensor identifier used across modules and CSV artifacts.
pub type SensorId = u32;

// Concrete aliases for the common double-precision instantiation.
pub type SystemModel64 = model::SystemModel<f64>;
pub type SensorNode64 = model::SensorNode<f64>;
pub type NetworkGraph64 = model::NetworkGraph<f64>;
pub type EstimatorConfig64 = model::EstimatorConfig<f64>;
pub type AttackConfig64 = attack::AttackConfig<f64>;
pub type AttackTrace64 = attack::AttackTrace<f64>;
pub type ErrorMatrix64 = selection::ErrorMatrix<f64>;
pub type SelectionState64 = selection::SelectionState<f64>;
