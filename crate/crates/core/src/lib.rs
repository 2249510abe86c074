//! Tier-aware resource allocation for a two-tier OFDMA downlink.
//!
//! A single macrocell serves outdoor MUEs and is overlaid by closed-access
//! small cells serving indoor SUEs. The crate covers both tiers:
//!
//! * [`macrocell`]: the maximum-tolerable-interference allocation (reduced to
//!   a linear assignment problem) and the min-sum-power baseline whose uniform
//!   interference threshold is tuned by bisection.
//! * [`smallcell`]: joint admission control and sub-channel/power allocation,
//!   solved exactly at desk scale or through the time-sharing convex relaxation.
//! * [`distributed`]: dual decomposition of the relaxation with interference
//!   prices updated by the ellipsoid method and a primal feasibility recovery.
//! * [`harness`]: Monte-Carlo sweeps producing CSV metric tables.
//!
//! [`model`] holds the scenario description, the channel realization and the
//! SINR primitives shared by every solver.

pub mod assignment;
pub mod barrier;
pub mod distributed;
pub mod error;
pub mod harness;
pub mod macrocell;
pub mod model;
pub mod smallcell;

pub use error::{Error, Result};
pub use macrocell::MacroAllocation;
pub use model::{ChannelGains, LinkKind, Scenario, ScenarioConfig};
pub use smallcell::{AllocationMode, SmallCellAllocation};
