//! Process-mining fault diagnosis for cyber-physical systems.
//!
//! Anomalous multivariate sensor windows are discretized into state
//! transition event logs, one stochastic Petri net is mined per fault type
//! and simulated, and new anomalous windows are classified by a majority vote
//! over alignment fitness and simulation similarity.

pub mod conformance;
pub mod data;
pub mod detection;
pub mod diagnosis;
pub mod discovery;
pub mod eventlog;
pub mod metrics;
pub mod petri;
pub mod stochastic;
pub mod store;
