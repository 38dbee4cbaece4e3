//! Stochastic response-time modelling for series-parallel data computing
//! workflows.
//!
//! A workflow is a tree of data computing components (DCCs): single queues,
//! serial chains (SDCC) whose response is the sum of their stages, and
//! fork-join groups (PDCC) whose response is the maximum over branches. Each
//! server contributes a delayed-tail response distribution. This crate
//!
//! * evaluates, samples and fits the service-time families ([`dist`]),
//! * composes them numerically by convolution and CDF products ([`numeric`]),
//! * parses workflows and scenarios ([`workflow`]),
//! * allocates servers and schedules branch rates ([`allocator`]),
//! * replays allocations by Monte Carlo ([`simulator`]).

pub mod allocator;
pub mod cli;
pub mod dist;
pub mod error;
pub mod numeric;
pub mod simulator;
pub mod workflow;

pub use allocator::{AllocationPlan, Method};
pub use dist::{DistributionSpec, ServerDescriptor, ServerModel, TailShape};
pub use error::{Error, Result, Violation};
pub use numeric::{GridConfig, NumericDistribution};
pub use simulator::{ScenarioReport, SimResult};
pub use workflow::{Objective, Scenario, WorkflowNode};
