//! Deterministic discrete-event simulator for power-line network
//! establishment.
//!
//! Protocols run on a shared [`medium::Medium`]: a slot-accurate channel with
//! per-link, per-direction, per-frequency SNR and a no-capture collision
//! model. Every run is reproducible from its scenario and seed, and every
//! transmission lands in an append-only [`trace::Trace`].
//!
//! - [`pmac`]: preamble-based establishment and maintenance.
//! - [`csma`]: CSMA/CA association baseline.
//! - [`sweep`]: frequency sweep mechanisms.
//! - [`fdplc`]: frequency-division networking in cycles.
//! - [`metrics`]: scenarios, utilization, CSV.

pub mod channel;
pub mod csma;
pub mod engine;
pub mod error;
pub mod fdplc;
pub mod frame;
pub mod ids;
pub mod medium;
pub mod metrics;
pub mod pmac;
pub mod report;
pub mod sweep;
pub mod trace;

pub use engine::{RngStream, SimTime, Simulation};
pub use error::SimError;
pub use ids::{Mac, NodeId, NwkId, Sid};
pub use report::{EstablishReport, Protocol};
