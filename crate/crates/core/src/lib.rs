//! Two-relay cooperative random access network.
//!
//! - [`model`]: node, packet, parameter and scenario types with validation.
//! - [`channel`]: per-slot reception under the collision and SINR (MPR) models.
//! - [`analysis`]: closed-form relay queue rates, stability region and
//!   throughput bounds for the collision channel.
//! - [`sim`]: the slotted Monte Carlo engine.

pub mod analysis;
pub mod channel;
pub mod model;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod sim;
pub mod stats;

pub use analysis::{
    clustered_throughput_bounds, dominant_rates, dominant_rates_s1, dominant_rates_s2, no_relay_throughput, q_min,
    stability_region, throughput_bounds, AnalysisError, DominantRates, StabilityRegion, ThroughputBounds,
};
pub use channel::{
    collision_link_success, mpr_success_closed_form, resolve_slot_collision, resolve_slot_mpr, ChannelError, Payload,
    SlotOutcome, TransmissionSet,
};
pub use model::{
    reference_topology, validate, Channel, CollisionParams, MprParams, NodeId, Packet, ScenarioConfig, Strategy,
    ValidationErrors,
};
pub use sim::{run, run_replication, stability_probe, sweep, MetricsReport, SimError, SimTrace, StabilityReport};
pub use stats::{Estimate, StabilityVerdict};
