//! Alignment-based fitness and the signal metrics used to compare observed
//! windows with simulated ones.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap, HashMap, VecDeque};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::petri::{
    check_soundness, Marking, PetriNet, Soundness, TransitionId, DEFAULT_MARKING_BUDGET,
};

pub const DEFAULT_NODE_BUDGET: usize = 1_000_000;
pub const DEFAULT_TIME_LIMIT: Duration = Duration::from_secs(300);

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConformanceError {
    #[error("model is not sound: {0}")]
    UnsoundModel(String),
    #[error("alignment search exceeded {0} nodes")]
    SearchBudgetExceeded(usize),
    #[error("alignment search exceeded {0:?}")]
    TimeLimitExceeded(Duration),
    #[error("final marking is not reachable within the search budget")]
    NoCompletion,
    #[error("empty window")]
    EmptyWindow,
    #[error("feature dimension {observed} vs {simulated}")]
    DimensionMismatch { observed: usize, simulated: usize },
    #[error("every observed feature is constant")]
    ZeroVarianceObserved,
}

/// One step of an alignment; `None` on either side is a skip (`>>`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub log: Option<String>,
    pub model: Option<TransitionId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub moves: Vec<Move>,
    pub cost: u32,
    pub optimal: bool,
}

impl Alignment {
    /// Move list with transition names and `>>` for skips.
    pub fn to_json(&self, net: &PetriNet) -> serde_json::Value {
        let side = |s: Option<&str>| serde_json::Value::String(s.unwrap_or(">>").to_string());
        let moves: Vec<serde_json::Value> = self
            .moves
            .iter()
            .map(|m| {
                let model = m.model.map(|t| net.transition(t));
                serde_json::json!({
                    "log": side(m.log.as_deref()),
                    "model": side(model.map(|t| t.name.as_str())),
                    "label": model.and_then(|t| t.label.clone()),
                })
            })
            .collect();
        serde_json::json!({ "cost": self.cost, "optimal": self.optimal, "moves": moves })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchLimits {
    pub node_budget: usize,
    pub time_limit: Option<Duration>,
    pub marking_budget: usize,
}

impl Default for SearchLimits {
    fn default() -> Self {
        Self {
            node_budget: DEFAULT_NODE_BUDGET,
            time_limit: Some(DEFAULT_TIME_LIMIT),
            marking_budget: DEFAULT_MARKING_BUDGET,
        }
    }
}

/// A net prepared for repeated alignment: soundness is checked and the
/// shortest visible completion is found once.
#[derive(Debug, Clone)]
pub struct Aligner {
    net: PetriNet,
    labels: BTreeSet<String>,
    shortest_visible: u32,
    limits: SearchLimits,
}

impl Aligner {
    pub fn new(net: &PetriNet, limits: SearchLimits) -> Result<Self, ConformanceError> {
        match check_soundness(net, limits.marking_budget) {
            Soundness::Unsound(why) => return Err(ConformanceError::UnsoundModel(why.to_string())),
            Soundness::Sound | Soundness::Unknown { .. } => {}
        }
        let shortest_visible = shortest_visible_completion(net, limits.node_budget)?;
        Ok(Self {
            net: net.clone(),
            labels: net.visible_labels().into_iter().collect(),
            shortest_visible,
            limits,
        })
    }

    pub fn net(&self) -> &PetriNet {
        &self.net
    }

    /// Fewest visible transitions in any complete firing sequence.
    pub fn shortest_visible(&self) -> u32 {
        self.shortest_visible
    }

    pub fn worst_cost(&self, trace: &[String]) -> u32 {
        trace.len() as u32 + self.shortest_visible
    }

    pub fn align(&self, trace: &[String]) -> Result<Alignment, ConformanceError> {
        astar(&self.net, trace, &self.labels, &self.limits)
    }

    /// `1 - optimal / worst`, or 1 when both are zero.
    pub fn fitness(&self, trace: &[String]) -> Result<f64, ConformanceError> {
        let opt = self.align(trace)?.cost;
        Ok(fitness_from_costs(opt, self.worst_cost(trace)))
    }
}

pub fn fitness_from_costs(optimal: u32, worst: u32) -> f64 {
    if worst == 0 {
        1.0
    } else {
        1.0 - optimal as f64 / worst as f64
    }
}

pub fn align(trace: &[String], net: &PetriNet) -> Result<Alignment, ConformanceError> {
    Aligner::new(net, SearchLimits::default())?.align(trace)
}

pub fn worst_alignment_cost(trace: &[String], net: &PetriNet) -> Result<u32, ConformanceError> {
    Ok(Aligner::new(net, SearchLimits::default())?.worst_cost(trace))
}

pub fn fitness(trace: &[String], net: &PetriNet) -> Result<f64, ConformanceError> {
    Aligner::new(net, SearchLimits::default())?.fitness(trace)
}

/// 0-1 breadth-first search: silent firings are free, visible ones cost 1.
fn shortest_visible_completion(net: &PetriNet, budget: usize) -> Result<u32, ConformanceError> {
    let mut dist: HashMap<Marking, u32> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(net.initial_marking().clone(), 0);
    queue.push_back((net.initial_marking().clone(), 0u32));
    while let Some((m, d)) = queue.pop_front() {
        if dist.get(&m).is_some_and(|&best| best < d) {
            continue;
        }
        if &m == net.final_marking() {
            return Ok(d);
        }
        for t in net.enabled(&m) {
            let next = net.fire_unchecked(&m, t);
            let w = u32::from(net.transition(t).label.is_some());
            let nd = d + w;
            if dist.get(&next).is_none_or(|&old| nd < old) {
                if dist.len() >= budget {
                    return Err(ConformanceError::NoCompletion);
                }
                dist.insert(next.clone(), nd);
                if w == 0 {
                    queue.push_front((next, nd));
                } else {
                    queue.push_back((next, nd));
                }
            }
        }
    }
    Err(ConformanceError::NoCompletion)
}

#[derive(PartialEq, Eq)]
struct Entry {
    f: u32,
    pos: usize,
    seq: u64,
    node: usize,
}

impl Ord for Entry {
    // Lowest f first, then deeper in the trace, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        (Reverse(self.f), self.pos, Reverse(self.seq)).cmp(&(
            Reverse(other.f),
            other.pos,
            Reverse(other.seq),
        ))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Node {
    marking: Marking,
    pos: usize,
    g: u32,
    parent: Option<(usize, Move)>,
}

fn astar(
    net: &PetriNet,
    trace: &[String],
    labels: &BTreeSet<String>,
    limits: &SearchLimits,
) -> Result<Alignment, ConformanceError> {
    let start_time = Instant::now();
    let n = trace.len();
    // Events whose label the model cannot produce are log moves in any alignment.
    let mut unmatchable = vec![0u32; n + 1];
    for i in (0..n).rev() {
        unmatchable[i] = unmatchable[i + 1] + u32::from(!labels.contains(&trace[i]));
    }

    let mut nodes: Vec<Node> = vec![Node {
        marking: net.initial_marking().clone(),
        pos: 0,
        g: 0,
        parent: None,
    }];
    let mut best: HashMap<(Marking, usize), u32> = HashMap::new();
    best.insert((net.initial_marking().clone(), 0), 0);
    let mut closed: HashMap<(Marking, usize), ()> = HashMap::new();
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    open.push(Entry {
        f: unmatchable[0],
        pos: 0,
        seq,
        node: 0,
    });
    let mut expanded = 0usize;

    while let Some(Entry { node, .. }) = open.pop() {
        let (marking, pos, g) = {
            let nd = &nodes[node];
            (nd.marking.clone(), nd.pos, nd.g)
        };
        let key = (marking.clone(), pos);
        if closed.contains_key(&key) || best.get(&key).is_some_and(|&b| b < g) {
            continue;
        }
        if pos == n && &marking == net.final_marking() {
            return Ok(Alignment {
                moves: backtrack(&nodes, node),
                cost: g,
                optimal: true,
            });
        }
        closed.insert(key, ());
        expanded += 1;
        if expanded > limits.node_budget {
            return Err(ConformanceError::SearchBudgetExceeded(limits.node_budget));
        }
        if expanded % 1024 == 0 {
            if let Some(limit) = limits.time_limit {
                if start_time.elapsed() > limit {
                    return Err(ConformanceError::TimeLimitExceeded(limit));
                }
            }
        }

        let mut successors: Vec<(Marking, usize, u32, Move)> = Vec::new();
        if pos < n {
            successors.push((
                marking.clone(),
                pos + 1,
                1,
                Move {
                    log: Some(trace[pos].clone()),
                    model: None,
                },
            ));
        }
        for t in net.enabled(&marking) {
            let next = net.fire_unchecked(&marking, t);
            match &net.transition(t).label {
                None => successors.push((
                    next,
                    pos,
                    0,
                    Move {
                        log: None,
                        model: Some(t),
                    },
                )),
                Some(l) => {
                    if pos < n && *l == trace[pos] {
                        successors.push((
                            next.clone(),
                            pos + 1,
                            0,
                            Move {
                                log: Some(l.clone()),
                                model: Some(t),
                            },
                        ));
                    }
                    successors.push((
                        next,
                        pos,
                        1,
                        Move {
                            log: None,
                            model: Some(t),
                        },
                    ));
                }
            }
        }
        for (m, p, w, mv) in successors {
            let ng = g + w;
            let key = (m, p);
            if closed.contains_key(&key) || best.get(&key).is_some_and(|&b| b <= ng) {
                continue;
            }
            best.insert(key.clone(), ng);
            seq += 1;
            nodes.push(Node {
                marking: key.0,
                pos: p,
                g: ng,
                parent: Some((node, mv)),
            });
            open.push(Entry {
                f: ng + unmatchable[p],
                pos: p,
                seq,
                node: nodes.len() - 1,
            });
        }
    }
    Err(ConformanceError::NoCompletion)
}

fn backtrack(nodes: &[Node], mut i: usize) -> Vec<Move> {
    let mut moves = Vec::new();
    while let Some((parent, mv)) = &nodes[i].parent {
        moves.push(mv.clone());
        i = *parent;
    }
    moves.reverse();
    moves
}

/// `simulated` stretched or shrunk to `n` samples: sample `i` takes
/// `simulated[floor(i * m / n)]`.
pub fn resample<'a>(simulated: &'a [Vec<f64>], n: usize) -> Vec<&'a [f64]> {
    let m = simulated.len();
    (0..n).map(|i| simulated[i * m / n].as_slice()).collect()
}

fn check_pair(observed: &[Vec<f64>], simulated: &[Vec<f64>]) -> Result<usize, ConformanceError> {
    if observed.is_empty() || simulated.is_empty() {
        return Err(ConformanceError::EmptyWindow);
    }
    let d = observed[0].len();
    for s in observed.iter().chain(simulated) {
        if s.len() != d {
            return Err(ConformanceError::DimensionMismatch {
                observed: d,
                simulated: s.len(),
            });
        }
    }
    Ok(d)
}

/// Root mean squared error per feature, averaged over features.
pub fn rmse(observed: &[Vec<f64>], simulated: &[Vec<f64>]) -> Result<f64, ConformanceError> {
    let d = check_pair(observed, simulated)?;
    let sim = resample(simulated, observed.len());
    let n = observed.len() as f64;
    let total: f64 = (0..d)
        .map(|f| {
            let sse: f64 = observed
                .iter()
                .zip(&sim)
                .map(|(o, s)| (o[f] - s[f]).powi(2))
                .sum();
            (sse / n).sqrt()
        })
        .sum();
    Ok(total / d as f64)
}

/// Coefficient of determination per feature, averaged over the features
/// whose observed values vary.
pub fn r2(observed: &[Vec<f64>], simulated: &[Vec<f64>]) -> Result<f64, ConformanceError> {
    let d = check_pair(observed, simulated)?;
    let sim = resample(simulated, observed.len());
    let n = observed.len() as f64;
    let mut scores = Vec::with_capacity(d);
    for f in 0..d {
        let mean = observed.iter().map(|o| o[f]).sum::<f64>() / n;
        let sst: f64 = observed.iter().map(|o| (o[f] - mean).powi(2)).sum();
        if sst == 0.0 {
            continue;
        }
        let sse: f64 = observed
            .iter()
            .zip(&sim)
            .map(|(o, s)| (o[f] - s[f]).powi(2))
            .sum();
        scores.push(1.0 - sse / sst);
    }
    if scores.is_empty() {
        return Err(ConformanceError::ZeroVarianceObserved);
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
