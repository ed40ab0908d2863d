//! Labeled accepting Petri nets: token game, soundness, structure metrics,
//! and DOT/JSON export.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlaceId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TransitionId(pub usize);

#[derive(Debug, Error, PartialEq)]
pub enum PetriError {
    #[error("transition {0} is not enabled")]
    NotEnabled(String),
    #[error("node `{0}` has no incident arcs")]
    IsolatedNode(String),
    #[error("duplicate node name `{0}`")]
    DuplicateName(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("arc {0} -> {1} does not connect a place and a transition")]
    BadArc(String, String),
    #[error("marking has {got} entries for a net with {expected} places")]
    MarkingSize { expected: usize, got: usize },
    #[error("invalid net JSON: {0}")]
    Json(String),
}

/// Token counts indexed by place.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Marking(Vec<u32>);

impl Marking {
    pub fn empty(n_places: usize) -> Self {
        Marking(vec![0; n_places])
    }

    pub fn from_counts(counts: Vec<u32>) -> Self {
        Marking(counts)
    }

    pub fn with(n_places: usize, tokens: &[(PlaceId, u32)]) -> Self {
        let mut m = Self::empty(n_places);
        for &(p, n) in tokens {
            m.0[p.0] += n;
        }
        m
    }

    pub fn get(&self, p: PlaceId) -> u32 {
        self.0[p.0]
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| c as u64).sum()
    }

    /// Componentwise `self >= other`.
    pub fn covers(&self, other: &Marking) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub name: String,
    /// `None` marks a silent (τ) transition.
    pub label: Option<String>,
}

impl Transition {
    pub fn is_silent(&self) -> bool {
        self.label.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PetriNet {
    places: Vec<String>,
    transitions: Vec<Transition>,
    pre: Vec<Vec<PlaceId>>,
    post: Vec<Vec<PlaceId>>,
    initial: Marking,
    final_marking: Marking,
}

#[derive(Debug, Default, Clone)]
pub struct PetriNetBuilder {
    places: Vec<String>,
    transitions: Vec<Transition>,
    pre: Vec<Vec<PlaceId>>,
    post: Vec<Vec<PlaceId>>,
}

impl PetriNetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn place(&mut self, name: impl Into<String>) -> PlaceId {
        self.places.push(name.into());
        PlaceId(self.places.len() - 1)
    }

    pub fn transition(&mut self, name: impl Into<String>, label: Option<String>) -> TransitionId {
        self.transitions.push(Transition {
            name: name.into(),
            label,
        });
        self.pre.push(Vec::new());
        self.post.push(Vec::new());
        TransitionId(self.transitions.len() - 1)
    }

    pub fn visible(&mut self, name: impl Into<String>, label: impl Into<String>) -> TransitionId {
        self.transition(name, Some(label.into()))
    }

    pub fn silent(&mut self, name: impl Into<String>) -> TransitionId {
        self.transition(name, None)
    }

    /// Place to transition arc. Duplicates are ignored.
    pub fn input(&mut self, p: PlaceId, t: TransitionId) -> &mut Self {
        if !self.pre[t.0].contains(&p) {
            self.pre[t.0].push(p);
        }
        self
    }

    /// Transition to place arc. Duplicates are ignored.
    pub fn output(&mut self, t: TransitionId, p: PlaceId) -> &mut Self {
        if !self.post[t.0].contains(&p) {
            self.post[t.0].push(p);
        }
        self
    }

    pub fn n_places(&self) -> usize {
        self.places.len()
    }

    pub fn build(self, initial: Marking, final_marking: Marking) -> Result<PetriNet, PetriError> {
        let mut seen = HashSet::new();
        for name in self
            .places
            .iter()
            .chain(self.transitions.iter().map(|t| &t.name))
        {
            if !seen.insert(name.as_str()) {
                return Err(PetriError::DuplicateName(name.clone()));
            }
        }
        for m in [&initial, &final_marking] {
            if m.0.len() != self.places.len() {
                return Err(PetriError::MarkingSize {
                    expected: self.places.len(),
                    got: m.0.len(),
                });
            }
        }
        let mut pre = self.pre;
        let mut post = self.post;
        for v in pre.iter_mut().chain(post.iter_mut()) {
            v.sort_unstable();
        }
        Ok(PetriNet {
            places: self.places,
            transitions: self.transitions,
            pre,
            post,
            initial,
            final_marking,
        })
    }
}

impl PetriNet {
    pub fn places(&self) -> &[String] {
        &self.places
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn transition(&self, t: TransitionId) -> &Transition {
        &self.transitions[t.0]
    }

    pub fn transition_ids(&self) -> impl Iterator<Item = TransitionId> {
        (0..self.transitions.len()).map(TransitionId)
    }

    pub fn n_places(&self) -> usize {
        self.places.len()
    }

    pub fn n_transitions(&self) -> usize {
        self.transitions.len()
    }

    pub fn n_arcs(&self) -> usize {
        self.pre.iter().chain(&self.post).map(Vec::len).sum()
    }

    pub fn inputs(&self, t: TransitionId) -> &[PlaceId] {
        &self.pre[t.0]
    }

    pub fn outputs(&self, t: TransitionId) -> &[PlaceId] {
        &self.post[t.0]
    }

    pub fn initial_marking(&self) -> &Marking {
        &self.initial
    }

    pub fn final_marking(&self) -> &Marking {
        &self.final_marking
    }

    pub fn find_transition(&self, name: &str) -> Option<TransitionId> {
        self.transitions
            .iter()
            .position(|t| t.name == name)
            .map(TransitionId)
    }

    pub fn find_place(&self, name: &str) -> Option<PlaceId> {
        self.places.iter().position(|p| p == name).map(PlaceId)
    }

    /// Visible labels, sorted and deduplicated.
    pub fn visible_labels(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .transitions
            .iter()
            .filter_map(|t| t.label.clone())
            .collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn is_enabled(&self, m: &Marking, t: TransitionId) -> bool {
        self.pre[t.0].iter().all(|p| m.0[p.0] >= 1)
    }

    /// Transitions whose every input place holds a token, in id order.
    pub fn enabled(&self, m: &Marking) -> Vec<TransitionId> {
        self.transition_ids()
            .filter(|&t| self.is_enabled(m, t))
            .collect()
    }

    pub fn fire(&self, m: &Marking, t: TransitionId) -> Result<Marking, PetriError> {
        if !self.is_enabled(m, t) {
            return Err(PetriError::NotEnabled(self.transitions[t.0].name.clone()));
        }
        Ok(self.fire_unchecked(m, t))
    }

    pub(crate) fn fire_unchecked(&self, m: &Marking, t: TransitionId) -> Marking {
        let mut next = m.clone();
        for p in &self.pre[t.0] {
            next.0[p.0] -= 1;
        }
        for p in &self.post[t.0] {
            next.0[p.0] += 1;
        }
        next
    }

    fn place_degrees(&self) -> (Vec<usize>, Vec<usize>) {
        let mut indeg = vec![0; self.places.len()];
        let mut outdeg = vec![0; self.places.len()];
        for t in 0..self.transitions.len() {
            for p in &self.pre[t] {
                outdeg[p.0] += 1;
            }
            for p in &self.post[t] {
                indeg[p.0] += 1;
            }
        }
        (indeg, outdeg)
    }

    /// Unique source and sink place, markings on them, and every node on a
    /// source-to-sink path. Returns the (source, sink) pair.
    pub fn workflow_places(&self) -> Result<(PlaceId, PlaceId), String> {
        let (indeg, outdeg) = self.place_degrees();
        let sources: Vec<usize> = (0..self.places.len()).filter(|&p| indeg[p] == 0).collect();
        let sinks: Vec<usize> = (0..self.places.len()).filter(|&p| outdeg[p] == 0).collect();
        if sources.len() != 1 {
            return Err(format!(
                "expected one source place, found {}",
                sources.len()
            ));
        }
        if sinks.len() != 1 {
            return Err(format!("expected one sink place, found {}", sinks.len()));
        }
        let (src, snk) = (PlaceId(sources[0]), PlaceId(sinks[0]));
        if self.initial != Marking::with(self.places.len(), &[(src, 1)]) {
            return Err("initial marking is not one token on the source".into());
        }
        if self.final_marking != Marking::with(self.places.len(), &[(snk, 1)]) {
            return Err("final marking is not one token on the sink".into());
        }
        // Forward from source and backward from sink over the node graph.
        let np = self.places.len();
        let nt = self.transitions.len();
        let mut fwd_p = vec![false; np];
        let mut fwd_t = vec![false; nt];
        let mut queue = VecDeque::from([src.0]);
        fwd_p[src.0] = true;
        while let Some(p) = queue.pop_front() {
            for t in 0..nt {
                if !fwd_t[t] && self.pre[t].contains(&PlaceId(p)) {
                    fwd_t[t] = true;
                    for q in &self.post[t] {
                        if !fwd_p[q.0] {
                            fwd_p[q.0] = true;
                            queue.push_back(q.0);
                        }
                    }
                }
            }
        }
        let mut bwd_p = vec![false; np];
        let mut bwd_t = vec![false; nt];
        let mut queue = VecDeque::from([snk.0]);
        bwd_p[snk.0] = true;
        while let Some(p) = queue.pop_front() {
            for t in 0..nt {
                if !bwd_t[t] && self.post[t].contains(&PlaceId(p)) {
                    bwd_t[t] = true;
                    for q in &self.pre[t] {
                        if !bwd_p[q.0] {
                            bwd_p[q.0] = true;
                            queue.push_back(q.0);
                        }
                    }
                }
            }
        }
        if let Some(p) = (0..np).find(|&p| !(fwd_p[p] && bwd_p[p])) {
            return Err(format!(
                "place `{}` is not on a source-sink path",
                self.places[p]
            ));
        }
        if let Some(t) = (0..nt).find(|&t| !(fwd_t[t] && bwd_t[t])) {
            return Err(format!(
                "transition `{}` is not on a source-sink path",
                self.transitions[t].name
            ));
        }
        Ok((src, snk))
    }

    pub fn is_workflow_net(&self) -> bool {
        self.workflow_places().is_ok()
    }
}

/// Explicit reachability graph, bounded by a marking budget.
#[derive(Debug, Clone)]
pub struct ReachabilityGraph {
    pub markings: Vec<Marking>,
    pub edges: Vec<Vec<(TransitionId, usize)>>,
}

impl ReachabilityGraph {
    /// Breadth-first exploration; `None` once more than `budget` distinct
    /// markings are found.
    pub fn explore(net: &PetriNet, budget: usize) -> Option<Self> {
        let mut index: HashMap<Marking, usize> = HashMap::new();
        let mut markings = vec![net.initial.clone()];
        let mut edges: Vec<Vec<(TransitionId, usize)>> = vec![Vec::new()];
        index.insert(net.initial.clone(), 0);
        let mut next = 0;
        while next < markings.len() {
            let m = markings[next].clone();
            for t in net.enabled(&m) {
                let m2 = net.fire_unchecked(&m, t);
                let j = match index.get(&m2) {
                    Some(&j) => j,
                    None => {
                        if markings.len() >= budget {
                            return None;
                        }
                        markings.push(m2.clone());
                        edges.push(Vec::new());
                        index.insert(m2, markings.len() - 1);
                        markings.len() - 1
                    }
                };
                edges[next].push((t, j));
            }
            next += 1;
        }
        Some(Self { markings, edges })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnsoundReason {
    NotWorkflow(String),
    NoOptionToComplete,
    ImproperCompletion,
    DeadTransition(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Soundness {
    Sound,
    Unsound(UnsoundReason),
    /// The marking budget ran out before the state space was exhausted.
    Unknown {
        explored: usize,
    },
}

impl fmt::Display for UnsoundReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnsoundReason::NotWorkflow(why) => write!(f, "not a workflow net: {why}"),
            UnsoundReason::NoOptionToComplete => f.write_str("a reachable marking cannot complete"),
            UnsoundReason::ImproperCompletion => {
                f.write_str("tokens remain next to the final marking")
            }
            UnsoundReason::DeadTransition(t) => write!(f, "transition {t} can never fire"),
        }
    }
}

impl Soundness {
    pub fn is_sound(&self) -> bool {
        matches!(self, Soundness::Sound)
    }

    pub fn is_unsound(&self) -> bool {
        matches!(self, Soundness::Unsound(_))
    }
}

impl fmt::Display for Soundness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Soundness::Sound => f.write_str("sound"),
            Soundness::Unsound(r) => write!(f, "unsound ({r})"),
            Soundness::Unknown { explored } => {
                write!(f, "unknown (budget of {explored} markings exhausted)")
            }
        }
    }
}

pub const DEFAULT_MARKING_BUDGET: usize = 100_000;

/// Classical soundness: option to complete, proper completion, no dead
/// transitions. Exploration stops at `marking_budget` distinct markings.
pub fn check_soundness(net: &PetriNet, marking_budget: usize) -> Soundness {
    if let Err(why) = net.workflow_places() {
        return Soundness::Unsound(UnsoundReason::NotWorkflow(why));
    }
    let Some(graph) = ReachabilityGraph::explore(net, marking_budget) else {
        return Soundness::Unknown {
            explored: marking_budget,
        };
    };
    let n = graph.markings.len();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, out) in graph.edges.iter().enumerate() {
        for &(_, j) in out {
            reverse[j].push(i);
        }
    }
    let mut coreach = vec![false; n];
    let mut queue: VecDeque<usize> = graph
        .markings
        .iter()
        .enumerate()
        .filter(|(_, m)| **m == net.final_marking)
        .map(|(i, _)| i)
        .collect();
    for &i in &queue {
        coreach[i] = true;
    }
    while let Some(j) = queue.pop_front() {
        for &i in &reverse[j] {
            if !coreach[i] {
                coreach[i] = true;
                queue.push_back(i);
            }
        }
    }
    if coreach.iter().any(|c| !c) {
        return Soundness::Unsound(UnsoundReason::NoOptionToComplete);
    }
    if graph
        .markings
        .iter()
        .any(|m| *m != net.final_marking && m.covers(&net.final_marking))
    {
        return Soundness::Unsound(UnsoundReason::ImproperCompletion);
    }
    let mut fired = vec![false; net.n_transitions()];
    for out in &graph.edges {
        for &(t, _) in out {
            fired[t.0] = true;
        }
    }
    if let Some(t) = fired.iter().position(|f| !f) {
        return Soundness::Unsound(UnsoundReason::DeadTransition(
            net.transitions[t].name.clone(),
        ));
    }
    Soundness::Sound
}

/// Total degree (in + out arcs) of every place, then every transition.
pub fn node_degrees(net: &PetriNet) -> Vec<usize> {
    let (indeg, outdeg) = net.place_degrees();
    let mut d: Vec<usize> = indeg.iter().zip(&outdeg).map(|(a, b)| a + b).collect();
    d.extend((0..net.n_transitions()).map(|t| net.pre[t].len() + net.post[t].len()));
    d
}

/// `1 / (1 + (mean degree - 2))`, capped at 1 for nets sparser than a
/// one-in/one-out chain.
pub fn arc_degree_simplicity(net: &PetriNet) -> Result<f64, PetriError> {
    let degrees = node_degrees(net);
    if let Some(i) = degrees.iter().position(|&d| d == 0) {
        let name = if i < net.n_places() {
            net.places[i].clone()
        } else {
            net.transitions[i - net.n_places()].name.clone()
        };
        return Err(PetriError::IsolatedNode(name));
    }
    if degrees.is_empty() {
        return Ok(1.0);
    }
    let mean = degrees.iter().sum::<usize>() as f64 / degrees.len() as f64;
    Ok((1.0 / (1.0 + (mean - 2.0))).min(1.0))
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering: places as circles, transitions as boxes, silent
/// transitions as filled black boxes.
pub fn export_dot(net: &PetriNet) -> String {
    let mut out = String::from("digraph petri_net {\n  rankdir=LR;\n");
    for (i, name) in net.places.iter().enumerate() {
        let tokens = net.initial.0[i];
        let label = if tokens > 0 {
            format!("{} ({tokens})", dot_escape(name))
        } else {
            dot_escape(name)
        };
        let extra = if net.final_marking.0[i] > 0 {
            ", peripheries=2"
        } else {
            ""
        };
        let _ = writeln!(out, "  p{i} [shape=circle, label=\"{label}\"{extra}];");
    }
    for (i, t) in net.transitions.iter().enumerate() {
        match &t.label {
            Some(l) => {
                let _ = writeln!(out, "  t{i} [shape=box, label=\"{}\"];", dot_escape(l));
            }
            None => {
                let _ = writeln!(
                    out,
                    "  t{i} [shape=box, style=filled, fillcolor=black, label=\"\", width=0.15];"
                );
            }
        }
    }
    for t in 0..net.n_transitions() {
        for p in &net.pre[t] {
            let _ = writeln!(out, "  p{} -> t{t};", p.0);
        }
        for p in &net.post[t] {
            let _ = writeln!(out, "  t{t} -> p{};", p.0);
        }
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetJson {
    pub places: Vec<String>,
    pub transitions: Vec<TransitionJson>,
    pub arcs: Vec<(String, String)>,
    pub m0: BTreeMap<String, u32>,
    pub mf: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionJson {
    pub id: String,
    pub label: Option<String>,
}

impl PetriNet {
    pub fn to_json(&self) -> NetJson {
        let marking = |m: &Marking| {
            m.0.iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(i, &c)| (self.places[i].clone(), c))
                .collect()
        };
        let mut arcs = Vec::with_capacity(self.n_arcs());
        for t in 0..self.n_transitions() {
            for p in &self.pre[t] {
                arcs.push((self.places[p.0].clone(), self.transitions[t].name.clone()));
            }
            for p in &self.post[t] {
                arcs.push((self.transitions[t].name.clone(), self.places[p.0].clone()));
            }
        }
        NetJson {
            places: self.places.clone(),
            transitions: self
                .transitions
                .iter()
                .map(|t| TransitionJson {
                    id: t.name.clone(),
                    label: t.label.clone(),
                })
                .collect(),
            arcs,
            m0: marking(&self.initial),
            mf: marking(&self.final_marking),
        }
    }

    pub fn from_json(json: &NetJson) -> Result<Self, PetriError> {
        let mut b = PetriNetBuilder::new();
        let mut places = HashMap::new();
        let mut transitions = HashMap::new();
        for p in &json.places {
            places.insert(p.as_str(), b.place(p.clone()));
        }
        for t in &json.transitions {
            transitions.insert(t.id.as_str(), b.transition(t.id.clone(), t.label.clone()));
        }
        for (from, to) in &json.arcs {
            match (
                places.get(from.as_str()),
                transitions.get(from.as_str()),
                places.get(to.as_str()),
                transitions.get(to.as_str()),
            ) {
                (Some(&p), None, None, Some(&t)) => {
                    b.input(p, t);
                }
                (None, Some(&t), Some(&p), None) => {
                    b.output(t, p);
                }
                _ => return Err(PetriError::BadArc(from.clone(), to.clone())),
            }
        }
        let marking = |m: &BTreeMap<String, u32>| -> Result<Marking, PetriError> {
            let mut counts = vec![0; json.places.len()];
            for (name, &c) in m {
                let p = places
                    .get(name.as_str())
                    .ok_or_else(|| PetriError::UnknownNode(name.clone()))?;
                counts[p.0] = c;
            }
            Ok(Marking(counts))
        };
        let m0 = marking(&json.m0)?;
        let mf = marking(&json.mf)?;
        b.build(m0, mf)
    }
}

/// The illustrative net with `tr1`..`tr6` and two silent transitions:
/// `tr1` forks three branches (`tr2` with a silent redo, `tr3`, and
/// `tr4` then `tr5`) that `tr6` joins. A second silent transition closes the
/// `tr2` loop.
pub fn example_net() -> PetriNet {
    let mut b = PetriNetBuilder::new();
    let source = b.place("source");
    let p_tr2 = b.place("p1");
    let p_tr3 = b.place("p2");
    let p_tr4 = b.place("p3");
    let p_after2 = b.place("p4");
    let p_after3 = b.place("p5");
    let p_after4 = b.place("p6");
    let p_after5 = b.place("p7");
    let p_exit2 = b.place("p8");
    let sink = b.place("sink");
    let tr1 = b.visible("t1", "tr1");
    let tr2 = b.visible("t2", "tr2");
    let tr3 = b.visible("t3", "tr3");
    let tr4 = b.visible("t4", "tr4");
    let tr5 = b.visible("t5", "tr5");
    let tr6 = b.visible("t6", "tr6");
    let redo = b.silent("tau1");
    let exit = b.silent("tau2");
    b.input(source, tr1)
        .output(tr1, p_tr2)
        .output(tr1, p_tr3)
        .output(tr1, p_tr4);
    b.input(p_tr2, tr2).output(tr2, p_after2);
    b.input(p_after2, redo).output(redo, p_tr2);
    b.input(p_after2, exit).output(exit, p_exit2);
    b.input(p_tr3, tr3).output(tr3, p_after3);
    b.input(p_tr4, tr4).output(tr4, p_after4);
    b.input(p_after4, tr5).output(tr5, p_after5);
    b.input(p_exit2, tr6)
        .input(p_after3, tr6)
        .input(p_after5, tr6)
        .output(tr6, sink);
    let n = b.n_places();
    b.build(
        Marking::with(n, &[(source, 1)]),
        Marking::with(n, &[(sink, 1)]),
    )
    .expect("example net is well formed")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label_of(net: &PetriNet, t: TransitionId) -> String {
        net.transition(t)
            .label
            .clone()
            .unwrap_or_else(|| "τ".into())
    }

    fn by_label(net: &PetriNet, label: &str) -> TransitionId {
        net.transition_ids()
            .find(|&t| net.transition(t).label.as_deref() == Some(label))
            .unwrap()
    }

    #[test]
    fn example_initially_enables_tr1_only() {
        let net = example_net();
        let en: Vec<String> = net
            .enabled(net.initial_marking())
            .into_iter()
            .map(|t| label_of(&net, t))
            .collect();
        assert_eq!(en, vec!["tr1"]);
        assert!(net.enabled(&Marking::empty(net.n_places())).is_empty());
    }

    #[test]
    fn firing_tr1_enables_three_branches() {
        let net = example_net();
        let m = net
            .fire(net.initial_marking(), by_label(&net, "tr1"))
            .unwrap();
        let en: Vec<String> = net
            .enabled(&m)
            .into_iter()
            .map(|t| label_of(&net, t))
            .collect();
        assert_eq!(en, vec!["tr2", "tr3", "tr4"]);
        assert_eq!(
            net.fire(&m, by_label(&net, "tr6")),
            Err(PetriError::NotEnabled("t6".into()))
        );
    }

    #[test]
    fn example_trace_is_a_firing_sequence() {
        let net = example_net();
        let tau_redo = net.find_transition("tau1").unwrap();
        let tau_exit = net.find_transition("tau2").unwrap();
        let seq = [
            by_label(&net, "tr1"),
            by_label(&net, "tr2"),
            by_label(&net, "tr3"),
            by_label(&net, "tr4"),
            by_label(&net, "tr5"),
            tau_redo,
            by_label(&net, "tr2"),
            tau_exit,
            by_label(&net, "tr6"),
        ];
        let mut m = net.initial_marking().clone();
        for t in seq {
            m = net.fire(&m, t).unwrap();
        }
        assert_eq!(&m, net.final_marking());
    }

    #[test]
    fn source_free_transition_is_always_enabled() {
        let mut b = PetriNetBuilder::new();
        let p = b.place("p");
        let t = b.visible("t", "a");
        b.output(t, p);
        let net = b.build(Marking::empty(1), Marking::empty(1)).unwrap();
        assert!(net.is_enabled(&Marking::empty(1), t));
        let m = net.fire(&Marking::empty(1), t).unwrap();
        assert_eq!(m.get(p), 1);
    }

    #[test]
    fn example_is_sound() {
        assert_eq!(
            check_soundness(&example_net(), DEFAULT_MARKING_BUDGET),
            Soundness::Sound
        );
    }

    #[test]
    fn missing_option_to_complete() {
        // `c` and `e` each lead to a marking that can never reach the sink.
        let mut b = PetriNetBuilder::new();
        let i = b.place("i");
        let dead = b.place("dead");
        let q = b.place("q");
        let o = b.place("o");
        let a = b.visible("a", "a");
        let c = b.visible("c", "c");
        let e = b.visible("e", "e");
        let d = b.visible("d", "d");
        b.input(i, a).output(a, o);
        b.input(i, c).output(c, dead);
        b.input(i, e).output(e, q);
        b.input(dead, d).input(q, d).output(d, o);
        let net = b
            .build(Marking::with(4, &[(i, 1)]), Marking::with(4, &[(o, 1)]))
            .unwrap();
        assert_eq!(
            check_soundness(&net, 1000),
            Soundness::Unsound(UnsoundReason::NoOptionToComplete)
        );
    }

    #[test]
    fn choice_is_sound_but_unjoined_split_is_not() {
        // Exclusive choice between `a` and `b c`.
        let mut b = PetriNetBuilder::new();
        let i = b.place("i");
        let o = b.place("o");
        let t = b.visible("t", "a");
        b.input(i, t).output(t, o);
        let u = b.visible("u", "b");
        let mid = b.place("m");
        b.input(i, u).output(u, mid);
        let v = b.visible("v", "c");
        b.input(mid, v).output(v, o);
        let net = b
            .build(Marking::with(3, &[(i, 1)]), Marking::with(3, &[(o, 1)]))
            .unwrap();
        assert_eq!(check_soundness(&net, 100), Soundness::Sound);

        let mut b = PetriNetBuilder::new();
        let i = b.place("i");
        let x = b.place("x");
        let o = b.place("o");
        let t = b.visible("t", "a");
        b.input(i, t).output(t, x).output(t, o);
        let u = b.visible("u", "b");
        b.input(x, u).output(u, o);
        let net = b
            .build(Marking::with(3, &[(i, 1)]), Marking::with(3, &[(o, 1)]))
            .unwrap();
        assert_eq!(
            check_soundness(&net, 100),
            Soundness::Unsound(UnsoundReason::NoOptionToComplete)
        );
    }

    #[test]
    fn non_workflow_and_unbounded() {
        let mut b = PetriNetBuilder::new();
        let i = b.place("i");
        let o = b.place("o");
        let extra = b.place("extra");
        let t = b.visible("t", "a");
        b.input(i, t).output(t, o);
        b.input(extra, t);
        let net = b
            .build(Marking::with(3, &[(i, 1)]), Marking::with(3, &[(o, 1)]))
            .unwrap();
        assert!(matches!(
            check_soundness(&net, 100),
            Soundness::Unsound(UnsoundReason::NotWorkflow(_))
        ));

        // A generator loop pumps tokens into `acc` without bound.
        let mut b = PetriNetBuilder::new();
        let i = b.place("i");
        let loop_p = b.place("l");
        let acc = b.place("acc");
        let o = b.place("o");
        let start = b.visible("s", "s");
        let pump = b.visible("pump", "p");
        let end = b.visible("e", "e");
        b.input(i, start).output(start, loop_p);
        b.input(loop_p, pump).output(pump, loop_p).output(pump, acc);
        b.input(loop_p, end).input(acc, end).output(end, o);
        let net = b
            .build(Marking::with(4, &[(i, 1)]), Marking::with(4, &[(o, 1)]))
            .unwrap();
        assert_eq!(
            check_soundness(&net, 500),
            Soundness::Unknown { explored: 500 }
        );
    }

    #[test]
    fn simplicity_examples() {
        // Cycle of two places and two transitions: every node one in, one out.
        let mut b = PetriNetBuilder::new();
        let p = b.place("p");
        let q = b.place("q");
        let a = b.visible("a", "a");
        let c = b.visible("c", "c");
        b.input(p, a).output(a, q).input(q, c).output(c, p);
        let net = b
            .build(Marking::with(2, &[(p, 1)]), Marking::with(2, &[(p, 1)]))
            .unwrap();
        assert_eq!(arc_degree_simplicity(&net).unwrap(), 1.0);

        // K4-like: 2 places, 2 transitions, all 8 arcs; each degree 4 -> mean 4 -> 1/3.
        let mut b = PetriNetBuilder::new();
        let p = b.place("p");
        let q = b.place("q");
        let a = b.visible("a", "a");
        let c = b.visible("c", "c");
        for &pl in &[p, q] {
            for &t in &[a, c] {
                b.input(pl, t).output(t, pl);
            }
        }
        let net = b.build(Marking::empty(2), Marking::empty(2)).unwrap();
        assert!((arc_degree_simplicity(&net).unwrap() - 1.0 / 3.0).abs() < 1e-12);

        // Mean degree 3: two places and two transitions with 6 arcs.
        let mut b = PetriNetBuilder::new();
        let p = b.place("p");
        let q = b.place("q");
        let a = b.visible("a", "a");
        let c = b.visible("c", "c");
        b.input(p, a).output(a, q).input(q, c).output(c, p);
        b.input(p, c).output(a, p);
        let net = b.build(Marking::empty(2), Marking::empty(2)).unwrap();
        assert_eq!(arc_degree_simplicity(&net).unwrap(), 0.5);

        let mut b = PetriNetBuilder::new();
        b.place("lonely");
        let net = b.build(Marking::empty(1), Marking::empty(1)).unwrap();
        assert_eq!(
            arc_degree_simplicity(&net),
            Err(PetriError::IsolatedNode("lonely".into()))
        );
    }

    #[test]
    fn simplicity_matches_arc_recount() {
        // Six nodes: the degree sum must be twice the arc count.
        let mut b = PetriNetBuilder::new();
        let i = b.place("i");
        let m = b.place("m");
        let o = b.place("o");
        let a = b.visible("a", "a");
        let c = b.visible("c", "c");
        let d = b.visible("d", "d");
        b.input(i, a).output(a, m).input(m, c).output(c, o);
        b.input(m, d).output(d, m).input(i, d);
        let net = b
            .build(Marking::with(3, &[(i, 1)]), Marking::with(3, &[(o, 1)]))
            .unwrap();
        let arcs = 7.0;
        let mean = 2.0 * arcs / 6.0;
        let expected = (1.0f64 / (mean - 1.0)).min(1.0);
        assert!((arc_degree_simplicity(&net).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn dot_export() {
        let empty = PetriNetBuilder::new()
            .build(Marking::empty(0), Marking::empty(0))
            .unwrap();
        assert_eq!(
            export_dot(&empty),
            "digraph petri_net {\n  rankdir=LR;\n}\n"
        );
        let net = example_net();
        let dot = export_dot(&net);
        assert_eq!(dot.matches("shape=box").count(), 8);
        assert_eq!(dot.matches("fillcolor=black").count(), 2);
        assert_eq!(dot.matches("shape=circle").count(), 10);
        assert_eq!(dot, export_dot(&example_net()));
    }

    #[test]
    fn json_round_trip() {
        let net = example_net();
        let text = serde_json::to_string(&net.to_json()).unwrap();
        let back = PetriNet::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, net);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn firing_conserves_tokens(steps in prop::collection::vec(0usize..16, 0..40)) {
                let net = example_net();
                let mut m = net.initial_marking().clone();
                for s in steps {
                    let en = net.enabled(&m);
                    if en.is_empty() { break; }
                    let t = en[s % en.len()];
                    let next = net.fire(&m, t).unwrap();
                    prop_assert_eq!(
                        next.total() as i64,
                        m.total() as i64 - net.inputs(t).len() as i64 + net.outputs(t).len() as i64
                    );
                    for u in net.enabled(&next) {
                        prop_assert!(net.inputs(u).iter().all(|p| next.get(*p) >= 1));
                    }
                    m = next;
                }
            }

            #[test]
            fn simplicity_ignores_relabeling(shift in 0usize..50) {
                let net = example_net();
                let mut json = net.to_json();
                let rename = |s: &str| format!("n{}_{}", shift, s);
                json.places = json.places.iter().map(|p| rename(p)).collect();
                for t in &mut json.transitions { t.id = rename(&t.id); }
                json.arcs = json.arcs.iter().map(|(a, b)| (rename(a), rename(b))).collect();
                json.m0 = json.m0.iter().map(|(k, v)| (rename(k), *v)).collect();
                json.mf = json.mf.iter().map(|(k, v)| (rename(k), *v)).collect();
                let renamed = PetriNet::from_json(&json).unwrap();
                prop_assert_eq!(
                    arc_degree_simplicity(&renamed).unwrap(),
                    arc_degree_simplicity(&net).unwrap()
                );
            }
        }
    }
}
