//! Stochastic Petri nets with histogram firing times: enhancement from state
//! times, trace simulation, and materialization of simulated windows.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eventlog::{parse_activity, Centroids, EventLog};
use crate::petri::{Marking, PetriNet, TransitionId};

/// Width of the single bin built from a list of identical durations.
pub const DEGENERATE_WIDTH: f64 = 1e-6;
pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_MAX_EVENTS: usize = 200;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StochasticError {
    #[error("event log has no events")]
    EmptyLog,
    #[error("no durations to bin")]
    EmptyTimes,
    #[error("bin count must be positive")]
    ZeroBins,
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("no duration histogram for state {0}")]
    MissingDistribution(usize),
    #[error("transition label `{0}` is not a state transition")]
    BadLabel(String),
    #[error("trace exceeded {0} events")]
    TraceOverflow(usize),
    #[error("deadlock at marking {0:?}")]
    Deadlock(Vec<u32>),
    #[error("state {state} has no centroid (k = {k})")]
    UnknownState { state: usize, k: usize },
    #[error("{labels} labels but {durations} durations")]
    LengthMismatch { labels: usize, durations: usize },
    #[error("every duration rounds to zero samples")]
    ZeroLengthWindow,
    #[error("only {ok} of {n} simulations succeeded")]
    TooManyFailures { ok: usize, n: usize },
    #[error("malformed histogram CSV: {0}")]
    Csv(String),
}

/// Equal-width histogram of durations in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationHistogram {
    bin_edges: Vec<f64>,
    probs: Vec<f64>,
    support_count: usize,
}

impl DurationHistogram {
    pub fn from_parts(
        bin_edges: Vec<f64>,
        probs: Vec<f64>,
        support_count: usize,
    ) -> Result<Self, StochasticError> {
        let bad = |m: &str| Err(StochasticError::InvalidHistogram(m.to_string()));
        if probs.is_empty() || bin_edges.len() != probs.len() + 1 {
            return bad("need n + 1 edges for n > 0 bins");
        }
        if bin_edges.windows(2).any(|w| !(w[0] < w[1])) {
            return bad("edges must be strictly increasing");
        }
        if probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("probabilities must be non-negative and sum to 1");
        }
        Ok(Self {
            bin_edges,
            probs,
            support_count,
        })
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn support_count(&self) -> usize {
        self.support_count
    }

    pub fn n_bins(&self) -> usize {
        self.probs.len()
    }

    pub fn support(&self) -> (f64, f64) {
        (self.bin_edges[0], self.bin_edges[self.probs.len()])
    }

    /// Picks a bin by its probability, then a uniform point inside it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut bin = self.probs.len() - 1;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc && *p > 0.0 {
                bin = i;
                break;
            }
        }
        // Rounding can leave `u` above the running sum; fall back to the last
        // bin with mass.
        if self.probs[bin] == 0.0 {
            bin = self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(bin);
        }
        let (lo, hi) = (self.bin_edges[bin], self.bin_edges[bin + 1]);
        rng.random_range(lo..hi)
    }
}

/// Durations spent in each state before leaving it, keyed by state.
pub fn collect_state_times(log: &EventLog) -> Result<BTreeMap<usize, Vec<f64>>, StochasticError> {
    let mut times: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for e in log.cases.iter().flat_map(|c| &c.events) {
        times.entry(e.src).or_default().push(e.state_time_s);
    }
    if times.is_empty() {
        return Err(StochasticError::EmptyLog);
    }
    Ok(times)
}

/// Time spent in the final state of each case until its window ends, keyed
/// by that state.
pub fn collect_tail_times(log: &EventLog) -> BTreeMap<usize, Vec<f64>> {
    let mut times: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for case in &log.cases {
        if let Some(last) = case.events.last() {
            if case.tail_s > 0.0 {
                times.entry(last.dst).or_default().push(case.tail_s);
            }
        }
    }
    times
}

pub fn build_histogram(times: &[f64], bins: usize) -> Result<DurationHistogram, StochasticError> {
    if times.is_empty() {
        return Err(StochasticError::EmptyTimes);
    }
    if bins == 0 {
        return Err(StochasticError::ZeroBins);
    }
    let min = times.iter().copied().fold(f64::INFINITY, f64::min);
    let max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max - min <= 0.0 {
        return DurationHistogram::from_parts(
            vec![min, min + DEGENERATE_WIDTH],
            vec![1.0],
            times.len(),
        );
    }
    let width = (max - min) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| min + width * i as f64).collect();
    edges.push(max);
    let mut counts = vec![0usize; bins];
    for &t in times {
        let i = (((t - min) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let total = times.len() as f64;
    let probs = counts.iter().map(|&c| c as f64 / total).collect();
    DurationHistogram::from_parts(edges, probs, times.len())
}

pub fn build_histograms(
    times: &BTreeMap<usize, Vec<f64>>,
    bins: usize,
) -> Result<BTreeMap<usize, DurationHistogram>, StochasticError> {
    times
        .iter()
        .map(|(&s, t)| Ok((s, build_histogram(t, bins)?)))
        .collect()
}

/// CSV with one row per bin: `state,bin_lo,bin_hi,prob,support_count`.
pub fn write_histograms_csv<W: Write>(
    hists: &BTreeMap<usize, DurationHistogram>,
    out: W,
) -> Result<(), StochasticError> {
    let err = |e: csv::Error| StochasticError::Csv(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["state", "bin_lo", "bin_hi", "prob", "support_count"])
        .map_err(err)?;
    for (s, h) in hists {
        for i in 0..h.n_bins() {
            w.write_record([
                s.to_string(),
                h.bin_edges[i].to_string(),
                h.bin_edges[i + 1].to_string(),
                h.probs[i].to_string(),
                h.support_count.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| StochasticError::Csv(e.to_string()))
}

pub fn read_histograms_csv<R: Read>(
    input: R,
) -> Result<BTreeMap<usize, DurationHistogram>, StochasticError> {
    #[derive(Deserialize)]
    struct Row {
        state: usize,
        bin_lo: f64,
        bin_hi: f64,
        prob: f64,
        support_count: usize,
    }
    let mut parts: BTreeMap<usize, (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for row in csv::Reader::from_reader(input).deserialize::<Row>() {
        let row = row.map_err(|e| StochasticError::Csv(e.to_string()))?;
        let entry = parts
            .entry(row.state)
            .or_insert_with(|| (vec![row.bin_lo], Vec::new(), row.support_count));
        if *entry.0.last().unwrap() != row.bin_lo {
            return Err(StochasticError::Csv(format!(
                "state {}: bins are not contiguous",
                row.state
            )));
        }
        entry.0.push(row.bin_hi);
        entry.1.push(row.prob);
    }
    parts
        .into_iter()
        .map(|(s, (edges, probs, n))| Ok((s, DurationHistogram::from_parts(edges, probs, n)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FiringDistribution {
    Immediate,
    Histogram(DurationHistogram),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPetriNet {
    pub net: PetriNet,
    /// Indexed by transition id.
    pub dist: Vec<FiringDistribution>,
    /// Hold time of the state a run ends in, keyed by that state. Empty
    /// unless set with [`StochasticPetriNet::with_tail`].
    pub tail: BTreeMap<usize, DurationHistogram>,
}

impl StochasticPetriNet {
    pub fn with_tail(mut self, tail: BTreeMap<usize, DurationHistogram>) -> Self {
        self.tail = tail;
        self
    }
}

/// Attaches to each visible transition the histogram of its source state;
/// silent transitions fire immediately.
pub fn enhance(
    net: &PetriNet,
    histograms: &BTreeMap<usize, DurationHistogram>,
) -> Result<StochasticPetriNet, StochasticError> {
    let dist = net
        .transitions()
        .iter()
        .map(|t| match &t.label {
            None => Ok(FiringDistribution::Immediate),
            Some(l) => {
                let (src, _) =
                    parse_activity(l).ok_or_else(|| StochasticError::BadLabel(l.clone()))?;
                histograms
                    .get(&src)
                    .map(|h| FiringDistribution::Histogram(h.clone()))
                    .ok_or(StochasticError::MissingDistribution(src))
            }
        })
        .collect::<Result<_, _>>()?;
    Ok(StochasticPetriNet {
        net: net.clone(),
        dist,
        tail: BTreeMap::new(),
    })
}

/// How the simulator chooses among enabled transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RacePolicy {
    /// Enabled silent transitions fire first, uniformly at random; otherwise
    /// the visible transition with the smallest sampled duration wins.
    #[default]
    ImmediateSilent,
    /// One enabled transition is drawn uniformly, silent or not; a visible
    /// winner then samples its duration.
    UniformPreselection,
}

impl fmt::Display for RacePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RacePolicy::ImmediateSilent => "immediate_silent",
            RacePolicy::UniformPreselection => "uniform_preselection",
        })
    }
}

impl std::str::FromStr for RacePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "immediate_silent" => Ok(RacePolicy::ImmediateSilent),
            "uniform_preselection" => Ok(RacePolicy::UniformPreselection),
            other => Err(format!(
                "unknown race policy `{other}` (expected immediate_silent or uniform_preselection)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrace {
    /// Every fired transition, silent ones included.
    pub firings: Vec<TransitionId>,
    /// Labels and sampled durations of the visible firings.
    pub labels: Vec<String>,
    pub durations: Vec<f64>,
    /// Final state and its sampled hold time, when the net has a tail
    /// histogram for it.
    pub tail: Option<(usize, f64)>,
}

pub fn simulate_trace(
    spn: &StochasticPetriNet,
    seed: u64,
    max_events: usize,
    policy: RacePolicy,
) -> Result<SimulatedTrace, StochasticError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with(spn, &mut rng, max_events, policy)
}

fn simulate_with<R: Rng>(
    spn: &StochasticPetriNet,
    rng: &mut R,
    max_events: usize,
    policy: RacePolicy,
) -> Result<SimulatedTrace, StochasticError> {
    let net = &spn.net;
    let mut m: Marking = net.initial_marking().clone();
    let mut out = SimulatedTrace {
        firings: Vec::new(),
        labels: Vec::new(),
        durations: Vec::new(),
        tail: None,
    };
    // Silent steps between visible ones are bounded too, against silent cycles.
    let max_firings = (max_events + 1) * (net.n_transitions() + 1) * 4;
    let mut firings = 0;
    while &m != net.final_marking() {
        let enabled = net.enabled(&m);
        if enabled.is_empty() {
            return Err(StochasticError::Deadlock(m.counts().to_vec()));
        }
        firings += 1;
        if firings > max_firings {
            return Err(StochasticError::TraceOverflow(max_events));
        }
        let (t, duration) = match policy {
            RacePolicy::ImmediateSilent => {
                let silent: Vec<TransitionId> = enabled
                    .iter()
                    .copied()
                    .filter(|&t| matches!(spn.dist[t.0], FiringDistribution::Immediate))
                    .collect();
                if !silent.is_empty() {
                    (silent[rng.random_range(0..silent.len())], 0.0)
                } else {
                    let mut winner = (enabled[0], f64::INFINITY);
                    for &t in &enabled {
                        let d = sample_duration(&spn.dist[t.0], rng);
                        if d < winner.1 {
                            winner = (t, d);
                        }
                    }
                    winner
                }
            }
            RacePolicy::UniformPreselection => {
                let t = enabled[rng.random_range(0..enabled.len())];
                (t, sample_duration(&spn.dist[t.0], rng))
            }
        };
        m = net.fire(&m, t).expect("chosen among enabled transitions");
        out.firings.push(t);
        if let Some(label) = &net.transition(t).label {
            if out.labels.len() == max_events {
                return Err(StochasticError::TraceOverflow(max_events));
            }
            out.labels.push(label.clone());
            out.durations.push(duration);
        }
    }
    if let Some((_, dst)) = out.labels.last().and_then(|l| parse_activity(l)) {
        if let Some(h) = spn.tail.get(&dst) {
            out.tail = Some((dst, h.sample(rng)));
        }
    }
    Ok(out)
}

fn sample_duration<R: Rng>(dist: &FiringDistribution, rng: &mut R) -> f64 {
    match dist {
        FiringDistribution::Immediate => 0.0,
        FiringDistribution::Histogram(h) => h.sample(rng),
    }
}

/// Synthetic window built from `(state, duration)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedWindow {
    pub pairs: Vec<(usize, f64)>,
    pub samples: Vec<Vec<f64>>,
}

impl SimulatedWindow {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Holds the source state's centroid for `round(duration * rate)` samples
/// per trace element.
pub fn trace_to_window(
    labels: &[String],
    durations: &[f64],
    centroids: &Centroids,
    rate_hz: f64,
) -> Result<SimulatedWindow, StochasticError> {
    if labels.len() != durations.len() {
        return Err(StochasticError::LengthMismatch {
            labels: labels.len(),
            durations: durations.len(),
        });
    }
    let mut pairs = Vec::with_capacity(labels.len());
    let mut samples = Vec::new();
    for (l, &d) in labels.iter().zip(durations) {
        let (src, _) = parse_activity(l).ok_or_else(|| StochasticError::BadLabel(l.clone()))?;
        let point = centroids
            .points
            .get(src)
            .ok_or(StochasticError::UnknownState {
                state: src,
                k: centroids.k,
            })?;
        pairs.push((src, d));
        let n = (d * rate_hz).round().max(0.0) as usize;
        samples.extend(std::iter::repeat_n(point.clone(), n));
    }
    if samples.is_empty() {
        return Err(StochasticError::ZeroLengthWindow);
    }
    Ok(SimulatedWindow { pairs, samples })
}

/// [`trace_to_window`] followed by the final-state hold, if any.
pub fn materialize(
    trace: &SimulatedTrace,
    centroids: &Centroids,
    rate_hz: f64,
) -> Result<SimulatedWindow, StochasticError> {
    let mut w = trace_to_window(&trace.labels, &trace.durations, centroids, rate_hz)?;
    if let Some((state, d)) = trace.tail {
        let point = centroids
            .points
            .get(state)
            .ok_or(StochasticError::UnknownState {
                state,
                k: centroids.k,
            })?;
        w.pairs.push((state, d));
        let n = (d * rate_hz).round().max(0.0) as usize;
        w.samples.extend(std::iter::repeat_n(point.clone(), n));
    }
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub n: usize,
    pub seed: u64,
    pub max_events: usize,
    pub policy: RacePolicy,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            n: 300,
            seed: 0,
            max_events: DEFAULT_MAX_EVENTS,
            policy: RacePolicy::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationPool {
    pub windows: Vec<SimulatedWindow>,
    /// Index of each failed run and why it failed.
    pub failures: Vec<(usize, StochasticError)>,
    /// Runs that fired no visible transition. They have no samples to
    /// compare against, so they are left out of `windows`.
    pub empty: usize,
}

impl SimulationPool {
    /// Fails if more than half of `n` runs failed or none produced a window.
    pub fn require_majority(self, n: usize) -> Result<Self, StochasticError> {
        if self.windows.is_empty() || self.failures.len() * 2 > n {
            return Err(StochasticError::TooManyFailures {
                ok: self.windows.len(),
                n,
            });
        }
        Ok(self)
    }
}

/// [`simulate_runs`] followed by [`SimulationPool::require_majority`].
pub fn simulate_pool(
    spn: &StochasticPetriNet,
    params: &SimParams,
    centroids: &Centroids,
    rate_hz: f64,
) -> Result<SimulationPool, StochasticError> {
    simulate_runs(spn, params, centroids, rate_hz).require_majority(params.n)
}

/// `params.n` runs, run `i` on stream `i` of the seeded generator. Runs are
/// parallel; the output keeps run order.
pub fn simulate_runs(
    spn: &StochasticPetriNet,
    params: &SimParams,
    centroids: &Centroids,
    rate_hz: f64,
) -> SimulationPool {
    let results: Vec<Result<Option<SimulatedWindow>, StochasticError>> = (0..params.n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(i as u64);
            let tr = simulate_with(spn, &mut rng, params.max_events, params.policy)?;
            if tr.labels.is_empty() {
                return Ok(None);
            }
            materialize(&tr, centroids, rate_hz).map(Some)
        })
        .collect();
    let mut pool = SimulationPool {
        windows: Vec::new(),
        failures: Vec::new(),
        empty: 0,
    };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(Some(w)) => pool.windows.push(w),
            Ok(None) => pool.empty += 1,
            Err(e) => pool.failures.push((i, e)),
        }
    }
    pool
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::{tree_to_petri, ProcessTree};
    use crate::eventlog::{Case, Event};
    use crate::petri::example_net;

    fn hist(times: &[f64]) -> DurationHistogram {
        build_histogram(times, 10).unwrap()
    }

    fn centroids(k: usize) -> Centroids {
        Centroids {
            k,
            points: (0..k).map(|i| vec![i as f64, -(i as f64)]).collect(),
            seed: 0,
            inertia: 0.0,
        }
    }

    #[test]
    fn state_times_by_source() {
        let ev = |src, dst, t| Event {
            src,
            dst,
            timestep: 0,
            state_time_s: t,
        };
        let case = Case {
            id: "c".into(),
            events: vec![ev(1, 2, 0.3), ev(2, 3, 0.2)],
            tail_s: 0.4,
        };
        let mut log = EventLog {
            fault_label: "f".into(),
            k: 4,
            cases: vec![case.clone()],
        };
        let times = collect_state_times(&log).unwrap();
        assert_eq!(times[&1], vec![0.3]);
        assert_eq!(times[&2], vec![0.2]);
        log.cases.push(case);
        assert_eq!(collect_state_times(&log).unwrap()[&1], vec![0.3, 0.3]);
        log.cases.clear();
        assert_eq!(collect_state_times(&log), Err(StochasticError::EmptyLog));
    }

    #[test]
    fn histogram_examples() {
        let h = build_histogram(&[1.0, 1.0, 1.0, 9.0, 9.0], 2).unwrap();
        assert_eq!(h.probs(), &[0.6, 0.4]);
        assert_eq!(h.bin_edges(), &[1.0, 5.0, 9.0]);

        let single = build_histogram(&[5.0], 10).unwrap();
        assert_eq!(single.probs(), &[1.0]);
        let (lo, hi) = single.support();
        assert!(lo <= 5.0 && 5.0 < hi);

        assert_eq!(build_histogram(&[], 3), Err(StochasticError::EmptyTimes));
        assert_eq!(build_histogram(&[1.0], 0), Err(StochasticError::ZeroBins));
    }

    #[test]
    fn uniform_times_spread_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let times: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..10.0)).collect();
        let h = hist(&times);
        for p in h.probs() {
            assert!((p - 0.1).abs() <= 0.04, "{p}");
        }
    }

    #[test]
    fn histogram_validation() {
        assert!(DurationHistogram::from_parts(vec![0.0, 1.0], vec![1.0], 1).is_ok());
        assert!(DurationHistogram::from_parts(vec![1.0, 1.0], vec![1.0], 1).is_err());
        assert!(DurationHistogram::from_parts(vec![0.0, 1.0, 2.0], vec![0.5, 0.4], 1).is_err());
        assert!(DurationHistogram::from_parts(vec![0.0, 1.0], vec![1.0, 0.0], 1).is_err());
    }

    #[test]
    fn histogram_csv_round_trip() {
        let mut hists = BTreeMap::new();
        hists.insert(0, hist(&[0.1, 0.2, 0.2, 0.7]));
        hists.insert(3, hist(&[1.5]));
        let mut buf = Vec::new();
        write_histograms_csv(&hists, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("state,bin_lo,bin_hi,prob"));
        assert_eq!(read_histograms_csv(buf.as_slice()).unwrap(), hists);
    }

    #[test]
    fn enhance_maps_source_state() {
        let net = tree_to_petri(&ProcessTree::Sequence(vec![
            ProcessTree::activity("s1->s2"),
            ProcessTree::Exclusive(vec![ProcessTree::activity("s2->s0"), ProcessTree::Tau]),
        ]));
        let mut hists = BTreeMap::new();
        hists.insert(1, hist(&[0.5]));
        hists.insert(2, hist(&[0.1, 0.3]));
        let spn = enhance(&net, &hists).unwrap();
        for t in net.transition_ids() {
            match (&net.transition(t).label, &spn.dist[t.0]) {
                (None, FiringDistribution::Immediate) => {}
                (Some(l), FiringDistribution::Histogram(h)) => {
                    let src = parse_activity(l).unwrap().0;
                    assert_eq!(h, &hists[&src]);
                }
                other => panic!("{other:?}"),
            }
        }
        hists.remove(&2);
        assert_eq!(
            enhance(&net, &hists),
            Err(StochasticError::MissingDistribution(2))
        );
    }

    fn example_spn() -> StochasticPetriNet {
        let net = example_net();
        let h = hist(&[0.2, 0.5, 1.0]);
        let dist = net
            .transitions()
            .iter()
            .map(|t| match t.label {
                None => FiringDistribution::Immediate,
                Some(_) => FiringDistribution::Histogram(h.clone()),
            })
            .collect();
        StochasticPetriNet {
            net,
            dist,
            tail: BTreeMap::new(),
        }
    }

    fn replays(net: &PetriNet, firings: &[TransitionId]) -> bool {
        let mut m = net.initial_marking().clone();
        for &t in firings {
            match net.fire(&m, t) {
                Ok(next) => m = next,
                Err(_) => return false,
            }
        }
        &m == net.final_marking()
    }

    #[test]
    fn example_trace_is_producible() {
        let spn = example_spn();
        let target: Vec<String> = ["tr1", "tr2", "tr3", "tr4", "tr5", "tr2", "tr6"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut found = false;
        for policy in [RacePolicy::ImmediateSilent, RacePolicy::UniformPreselection] {
            for seed in 0..2000 {
                let tr = simulate_trace(&spn, seed, 200, policy).unwrap();
                assert!(replays(&spn.net, &tr.firings));
                found |= tr.labels == target;
            }
        }
        assert!(found);
    }

    #[test]
    fn sequence_always_same_trace() {
        let net = tree_to_petri(&ProcessTree::Sequence(vec![
            ProcessTree::activity("s0->s1"),
            ProcessTree::activity("s1->s0"),
        ]));
        let mut hists = BTreeMap::new();
        hists.insert(0, hist(&[0.2, 0.4]));
        hists.insert(1, hist(&[0.3]));
        let spn = enhance(&net, &hists).unwrap();
        for policy in [RacePolicy::ImmediateSilent, RacePolicy::UniformPreselection] {
            for seed in 0..20 {
                let tr = simulate_trace(&spn, seed, 200, policy).unwrap();
                assert_eq!(tr.labels, vec!["s0->s1", "s1->s0"]);
                assert_eq!(tr, simulate_trace(&spn, seed, 200, policy).unwrap());
            }
        }
    }

    #[test]
    fn overflow_and_deadlock() {
        let net = tree_to_petri(&ProcessTree::Loop(vec![
            ProcessTree::activity("s0->s1"),
            ProcessTree::Tau,
        ]));
        let mut hists = BTreeMap::new();
        hists.insert(0, hist(&[0.2]));
        let spn = enhance(&net, &hists).unwrap();
        let overflow = (0..50).any(|seed| {
            simulate_trace(&spn, seed, 1, RacePolicy::ImmediateSilent)
                == Err(StochasticError::TraceOverflow(1))
        });
        assert!(overflow);

        let mut b = crate::petri::PetriNetBuilder::new();
        let i = b.place("i");
        let o = b.place("o");
        let t = b.visible("t", "s0->s1");
        b.input(i, t);
        let n = b.n_places();
        let dead = b
            .build(Marking::with(n, &[(i, 1)]), Marking::with(n, &[(o, 1)]))
            .unwrap();
        let spn = enhance(&dead, &hists).unwrap();
        assert!(matches!(
            simulate_trace(&spn, 0, 10, RacePolicy::ImmediateSilent),
            Err(StochasticError::Deadlock(_))
        ));
    }

    #[test]
    fn window_lengths() {
        let c = centroids(3);
        let w = trace_to_window(&["s1->s2".to_string()], &[0.5], &c, 10.0).unwrap();
        assert_eq!(w.len(), 5);
        assert!(w.samples.iter().all(|s| s == &c.points[1]));

        let two =
            trace_to_window(&["s1->s2".into(), "s2->s0".into()], &[0.3, 0.2], &c, 10.0).unwrap();
        assert_eq!(two.len(), 5);
        assert_eq!(two.pairs, vec![(1, 0.3), (2, 0.2)]);

        assert_eq!(
            trace_to_window(&["s1->s2".into()], &[0.01], &c, 10.0),
            Err(StochasticError::ZeroLengthWindow)
        );
        assert_eq!(
            trace_to_window(&["s5->s2".into()], &[1.0], &c, 10.0),
            Err(StochasticError::UnknownState { state: 5, k: 3 })
        );
    }

    #[test]
    fn tail_hold_is_appended() {
        let net = tree_to_petri(&ProcessTree::Sequence(vec![
            ProcessTree::activity("s0->s1"),
            ProcessTree::activity("s1->s2"),
        ]));
        let mut hists = BTreeMap::new();
        hists.insert(0, hist(&[0.3]));
        hists.insert(1, hist(&[0.2]));
        let mut tail = BTreeMap::new();
        tail.insert(2, hist(&[0.4]));
        let spn = enhance(&net, &hists).unwrap().with_tail(tail);
        let tr = simulate_trace(&spn, 1, 10, RacePolicy::ImmediateSilent).unwrap();
        let (state, d) = tr.tail.unwrap();
        assert_eq!(state, 2);
        assert!((0.4..0.4 + DEGENERATE_WIDTH).contains(&d));
        let c = centroids(3);
        let w = materialize(&tr, &c, 10.0).unwrap();
        assert_eq!(w.len(), 3 + 2 + 4);
        let states = crate::eventlog::assign_samples(&w.samples, &c).unwrap();
        let events = crate::eventlog::events_from_states(&states, 0, 10.0);
        let labels: Vec<String> = events.iter().map(|e| e.activity()).collect();
        assert_eq!(labels, tr.labels);
    }

    #[test]
    fn empty_runs_are_counted_not_failed() {
        let net = tree_to_petri(&ProcessTree::Exclusive(vec![
            ProcessTree::Tau,
            ProcessTree::activity("s0->s1"),
        ]));
        let mut hists = BTreeMap::new();
        hists.insert(0, hist(&[0.3]));
        let spn = enhance(&net, &hists).unwrap();
        let params = SimParams {
            n: 200,
            policy: RacePolicy::UniformPreselection,
            ..SimParams::default()
        };
        let pool = simulate_pool(&spn, &params, &centroids(2), 10.0).unwrap();
        assert!(pool.failures.is_empty());
        assert!(pool.empty > 50 && pool.windows.len() > 50);
        assert_eq!(pool.empty + pool.windows.len(), 200);
    }

    #[test]
    fn tail_times_by_final_state() {
        let ev = |src, dst| Event {
            src,
            dst,
            timestep: 0,
            state_time_s: 0.1,
        };
        let log = EventLog {
            fault_label: "f".into(),
            k: 3,
            cases: vec![
                Case {
                    id: "a".into(),
                    events: vec![ev(0, 1), ev(1, 2)],
                    tail_s: 0.5,
                },
                Case {
                    id: "b".into(),
                    events: vec![ev(0, 2)],
                    tail_s: 0.7,
                },
            ],
        };
        let tails = collect_tail_times(&log);
        assert_eq!(tails.len(), 1);
        assert_eq!(tails[&2], vec![0.5, 0.7]);
    }

    #[test]
    fn pool_is_deterministic() {
        let net = tree_to_petri(&ProcessTree::Sequence(vec![
            ProcessTree::activity("s0->s1"),
            ProcessTree::Exclusive(vec![
                ProcessTree::activity("s1->s2"),
                ProcessTree::activity("s1->s0"),
            ]),
        ]));
        let mut hists = BTreeMap::new();
        hists.insert(0, hist(&[0.2, 0.5, 0.9]));
        hists.insert(1, hist(&[0.3, 0.4]));
        let spn = enhance(&net, &hists).unwrap();
        let params = SimParams {
            n: 40,
            seed: 9,
            ..SimParams::default()
        };
        let a = simulate_pool(&spn, &params, &centroids(3), 10.0).unwrap();
        let b = simulate_pool(&spn, &params, &centroids(3), 10.0).unwrap();
        assert_eq!(a.windows, b.windows);
        assert_eq!(a.windows.len(), 40);
        assert!(a.windows.iter().any(|w| w.pairs[1].0 == 1));
    }
}
