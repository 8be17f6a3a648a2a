//! Resource management engine for multimodal federated perception.
//!
//! Clients sense labeled samples with cameras and ISAC radios, then train on
//! them inside a two-round pipelined structure. The crate prices and
//! schedules the sensing, communication and computing of every client,
//! allocates workloads through a posted-price market, and drives a seeded
//! vehicular simulation around both.

pub mod baselines;
pub mod cost;
pub mod error;
pub mod market;
pub mod resource_pool;
pub mod scenario;
pub mod sensing;
pub mod sim;
pub mod solver;
pub mod zeros;

pub use cost::{Bilinear, ConsumptionTask, CostBreakdown, GenAlloc, PriceVector, ScheduleDecision};
pub use error::{Error, Result};
pub use resource_pool::{Grid, Region, ResourceConsumption, ResourceQuanta, ServiceId, SharedResourcePool};
pub use scenario::{Entity, EntityKind, ScenarioConfig, ScenarioState, StatusAttributes};
pub use solver::{constrained_schedule, m_ours, Budgets, Constraint, OutcomeKind, SolveInput, SolveOutcome, UNBOUNDED};
pub use market::{allocate_workloads, Allocation, ClientQuote, ClientRecord, MarketParams, WelfareReport};
pub use zeros::{plan_round, rounds_to_complete, PipelineMode, RoundPlan};
pub use baselines::PolicyId;
pub use sim::{run, ExperimentConfig, RunRecord};
