//! Process discovery: directly-follows graphs, the Inductive Miner with
//! infrequent-behavior filtering, and the Heuristics Miner.

mod heuristics;
mod inductive;
mod tree;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::EventLog;
use crate::petri::PetriNet;

pub use heuristics::{dependency, heuristics_miner, heuristics_miner_traces, HeuristicsParams};
pub use inductive::{inductive_miner, inductive_miner_traces};
pub use tree::{tree_to_petri, ProcessTree};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DiscoveryError {
    #[error("event log is empty")]
    EmptyLog,
    #[error("threshold must lie in [0, 1], got {0}")]
    BadThreshold(f64),
    #[error("invalid process tree: {0}")]
    InvalidTree(String),
    #[error("unknown miner `{0}` (supported: imf, hm)")]
    UnknownMiner(String),
    #[error("the ILP miner is not supported: it needs an external integer-programming solver; use `imf` or `hm`")]
    IlpUnsupported,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DirectlyFollowsGraph {
    pub activities: BTreeSet<String>,
    pub edge_freq: BTreeMap<(String, String), usize>,
    pub start_freq: BTreeMap<String, usize>,
    pub end_freq: BTreeMap<String, usize>,
}

impl DirectlyFollowsGraph {
    pub fn from_traces(traces: &[Vec<String>]) -> Result<Self, DiscoveryError> {
        if traces.is_empty() {
            return Err(DiscoveryError::EmptyLog);
        }
        let mut dfg = Self::default();
        for trace in traces {
            dfg.activities.extend(trace.iter().cloned());
            if let (Some(first), Some(last)) = (trace.first(), trace.last()) {
                *dfg.start_freq.entry(first.clone()).or_default() += 1;
                *dfg.end_freq.entry(last.clone()).or_default() += 1;
            }
            for pair in trace.windows(2) {
                *dfg.edge_freq
                    .entry((pair[0].clone(), pair[1].clone()))
                    .or_default() += 1;
            }
        }
        Ok(dfg)
    }

    pub fn edge(&self, a: &str, b: &str) -> usize {
        self.edge_freq
            .get(&(a.to_string(), b.to_string()))
            .copied()
            .unwrap_or(0)
    }
}

pub fn build_dfg(log: &EventLog) -> Result<DirectlyFollowsGraph, DiscoveryError> {
    DirectlyFollowsGraph::from_traces(&log.traces())
}

/// Discovery algorithm and its noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Miner {
    Imf { noise_threshold: f64 },
    Hm(HeuristicsParams),
}

impl Miner {
    pub fn name(&self) -> &'static str {
        match self {
            Miner::Imf { .. } => "imf",
            Miner::Hm(_) => "hm",
        }
    }

    /// Miner named `name` with the shared noise knob mapped onto its
    /// native threshold.
    pub fn from_name(
        name: &str,
        noise_threshold: f64,
        and_threshold: f64,
    ) -> Result<Self, DiscoveryError> {
        match MinerKind::from_str(name)? {
            MinerKind::Imf => Ok(Miner::Imf { noise_threshold }),
            MinerKind::Hm => Ok(Miner::Hm(HeuristicsParams {
                dependency_threshold: noise_threshold,
                and_threshold,
            })),
        }
    }

    pub fn discover(&self, traces: &[Vec<String>]) -> Result<PetriNet, DiscoveryError> {
        match *self {
            Miner::Imf { noise_threshold } => Ok(tree_to_petri(&inductive_miner_traces(
                traces,
                noise_threshold,
            )?)),
            Miner::Hm(params) => heuristics_miner_traces(traces, params),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinerKind {
    Imf,
    Hm,
}

impl FromStr for MinerKind {
    type Err = DiscoveryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "imf" | "inductive" => Ok(MinerKind::Imf),
            "hm" | "heuristics" => Ok(MinerKind::Hm),
            "ilp" => Err(DiscoveryError::IlpUnsupported),
            _ => Err(DiscoveryError::UnknownMiner(s.to_string())),
        }
    }
}

impl fmt::Display for MinerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MinerKind::Imf => "imf",
            MinerKind::Hm => "hm",
        })
    }
}

pub(crate) fn check_threshold(x: f64) -> Result<(), DiscoveryError> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(DiscoveryError::BadThreshold(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn dfg_counts() {
        let dfg = DirectlyFollowsGraph::from_traces(&[t("a b"), t("a b")]).unwrap();
        assert_eq!(dfg.edge_freq.len(), 1);
        assert_eq!(dfg.edge("a", "b"), 2);
        assert_eq!(dfg.start_freq["a"], 2);
        assert_eq!(dfg.end_freq["b"], 2);

        let single = DirectlyFollowsGraph::from_traces(&[t("a")]).unwrap();
        assert!(single.edge_freq.is_empty());
        assert_eq!(single.start_freq["a"], 1);
        assert_eq!(single.end_freq["a"], 1);

        assert_eq!(
            DirectlyFollowsGraph::from_traces(&[]),
            Err(DiscoveryError::EmptyLog)
        );
    }

    #[test]
    fn miner_names() {
        assert_eq!("IMF".parse::<MinerKind>().unwrap(), MinerKind::Imf);
        assert_eq!(
            "ilp".parse::<MinerKind>(),
            Err(DiscoveryError::IlpUnsupported)
        );
        assert!(DiscoveryError::IlpUnsupported
            .to_string()
            .contains("not supported"));
        assert!(matches!(
            "alpha".parse::<MinerKind>(),
            Err(DiscoveryError::UnknownMiner(_))
        ));
    }
}
