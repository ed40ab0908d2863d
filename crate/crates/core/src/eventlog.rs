//! Discretization of windows into states with k-means, and extraction of
//! state-transition event logs.

use std::collections::BTreeSet;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::TimeSeriesWindow;

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EventLogError {
    #[error("k-means needs at least {k} distinct points, got {distinct}")]
    TooFewPoints { k: usize, distinct: usize },
    #[error("k must be positive")]
    ZeroClusters,
    #[error("sample dimension {got} does not match centroid dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("window has {0} samples; at least 2 are needed")]
    WindowTooShort(usize),
    #[error("window stays in a single state")]
    NoTransitions,
    #[error("no window produced a state transition")]
    AllWindowsDegenerate,
    #[error("no windows given")]
    NoWindows,
    #[error("sampling rate must be positive")]
    BadRate,
}

/// Fitted cluster centers. State `i` is `points[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centroids {
    pub k: usize,
    pub points: Vec<Vec<f64>>,
    pub seed: u64,
    pub inertia: f64,
}

impl Centroids {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Nearest centroid; ties go to the lowest state id.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        nearest(&self.points, x)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(points: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in points.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn distinct_count(values: &[Vec<f64>]) -> usize {
    values
        .iter()
        .map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<u64>>())
        .collect::<BTreeSet<_>>()
        .len()
}

/// k-means fit together with the inertia after every Lloyd update.
#[derive(Debug, Clone)]
pub struct KMeansTrace {
    pub centroids: Centroids,
    pub inertia_history: Vec<f64>,
}

/// Lloyd's algorithm with k-means++ seeding; see [`kmeans_fit_traced`].
pub fn kmeans_fit(values: &[Vec<f64>], k: usize, seed: u64) -> Result<Centroids, EventLogError> {
    kmeans_fit_traced(values, k, seed).map(|t| t.centroids)
}

/// Best of `restarts` fits by inertia; restart `i` is seeded with
/// `seed + i`, and ties keep the earliest restart.
pub fn kmeans_fit_restarts(
    values: &[Vec<f64>],
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<Centroids, EventLogError> {
    let mut best = kmeans_fit(values, k, seed)?;
    for i in 1..restarts as u64 {
        let c = kmeans_fit(values, k, seed.wrapping_add(i))?;
        if c.inertia < best.inertia {
            best = c;
        }
    }
    Ok(best)
}

/// Runs until the assignment is a fixed point or 300 iterations pass.
pub fn kmeans_fit_traced(
    values: &[Vec<f64>],
    k: usize,
    seed: u64,
) -> Result<KMeansTrace, EventLogError> {
    if k == 0 {
        return Err(EventLogError::ZeroClusters);
    }
    let dim = values.first().map_or(0, Vec::len);
    if let Some(v) = values.iter().find(|v| v.len() != dim) {
        return Err(EventLogError::DimensionMismatch {
            expected: dim,
            got: v.len(),
        });
    }
    let distinct = distinct_count(values);
    if distinct < k {
        return Err(EventLogError::TooFewPoints { k, distinct });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(values[rng.random_range(0..values.len())].clone());
    let mut d2: Vec<f64> = values.iter().map(|v| sq_dist(v, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                pick = Some(i);
                if target < d {
                    break;
                }
                target -= d;
            }
        }
        // distinct >= k guarantees a point away from every center
        let pick = pick.expect("a point with positive distance exists");
        centers.push(values[pick].clone());
        for (d, v) in d2.iter_mut().zip(values) {
            *d = d.min(sq_dist(v, centers.last().unwrap()));
        }
    }

    let mut assign: Vec<usize> = values.iter().map(|v| nearest(&centers, v).0).collect();
    let mut history = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &a) in values.iter().zip(&assign) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(v) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        // Empty clusters take the point farthest from its own center.
        for c in 0..k {
            if counts[c] == 0 {
                let far = values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (i, nearest(&centers, v).1))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap();
                centers[c] = values[far].clone();
            }
        }
        let next: Vec<usize> = values.iter().map(|v| nearest(&centers, v).0).collect();
        history.push(
            values
                .iter()
                .zip(&next)
                .map(|(v, &a)| sq_dist(v, &centers[a]))
                .sum(),
        );
        let stable = next == assign;
        assign = next;
        if stable {
            break;
        }
    }
    let inertia = *history.last().unwrap();
    Ok(KMeansTrace {
        centroids: Centroids {
            k,
            points: centers,
            seed,
            inertia,
        },
        inertia_history: history,
    })
}

/// Nearest-centroid state of every sample.
pub fn assign_states(
    window: &TimeSeriesWindow,
    centroids: &Centroids,
) -> Result<Vec<usize>, EventLogError> {
    assign_samples(&window.samples, centroids)
}

pub fn assign_samples(
    samples: &[Vec<f64>],
    centroids: &Centroids,
) -> Result<Vec<usize>, EventLogError> {
    let expected = centroids.dim();
    samples
        .iter()
        .map(|s| {
            if s.len() != expected {
                Err(EventLogError::DimensionMismatch {
                    expected,
                    got: s.len(),
                })
            } else {
                Ok(centroids.nearest(s).0)
            }
        })
        .collect()
}

/// Activity label of a state transition, e.g. `s1->s2`.
pub fn activity_label(src: usize, dst: usize) -> String {
    format!("s{src}->s{dst}")
}

/// Inverse of [`activity_label`].
pub fn parse_activity(label: &str) -> Option<(usize, usize)> {
    let (a, b) = label.split_once("->")?;
    let src = a.strip_prefix('s')?.parse().ok()?;
    let dst = b.strip_prefix('s')?.parse().ok()?;
    Some((src, dst))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub src: usize,
    pub dst: usize,
    pub timestep: usize,
    /// Time spent in `src` before this transition.
    pub state_time_s: f64,
}

impl Event {
    pub fn activity(&self) -> String {
        activity_label(self.src, self.dst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    #[serde(rename = "case_id")]
    pub id: String,
    pub events: Vec<Event>,
    /// Time spent in the final state until the window ends.
    #[serde(default)]
    pub tail_s: f64,
}

impl Case {
    pub fn trace(&self) -> Vec<String> {
        self.events.iter().map(Event::activity).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub fault_label: String,
    pub k: usize,
    pub cases: Vec<Case>,
}

impl EventLog {
    pub fn traces(&self) -> Vec<Vec<String>> {
        self.cases.iter().map(Case::trace).collect()
    }

    pub fn event_count(&self) -> usize {
        self.cases.iter().map(|c| c.events.len()).sum()
    }

    /// One event per row: `case_id,src,dst,activity,timestep,state_time_s`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "case_id",
            "src",
            "dst",
            "activity",
            "timestep",
            "state_time_s",
        ])?;
        for case in &self.cases {
            for e in &case.events {
                w.write_record([
                    case.id.clone(),
                    e.src.to_string(),
                    e.dst.to_string(),
                    e.activity(),
                    e.timestep.to_string(),
                    e.state_time_s.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Turns a per-sample state sequence into events. `offset` is the timestep
/// of the first sample.
pub fn events_from_states(states: &[usize], offset: usize, rate_hz: f64) -> Vec<Event> {
    let mut events = Vec::new();
    let mut run_start = 0usize;
    for i in 1..states.len() {
        if states[i] != states[i - 1] {
            events.push(Event {
                src: states[i - 1],
                dst: states[i],
                timestep: offset + i,
                state_time_s: (i - run_start) as f64 / rate_hz,
            });
            run_start = i;
        }
    }
    events
}

/// Case of one window: an event per change of state. The first run is
/// timed from the window start.
pub fn extract_case(
    window: &TimeSeriesWindow,
    centroids: &Centroids,
    rate_hz: f64,
) -> Result<Case, EventLogError> {
    if !(rate_hz > 0.0) {
        return Err(EventLogError::BadRate);
    }
    if window.len() < 2 {
        return Err(EventLogError::WindowTooShort(window.len()));
    }
    let states = assign_states(window, centroids)?;
    let events = events_from_states(&states, window.start, rate_hz);
    if events.is_empty() {
        return Err(EventLogError::NoTransitions);
    }
    let last_change = events.last().map_or(0, |e| e.timestep - window.start);
    Ok(Case {
        id: window.key(),
        events,
        tail_s: (states.len() - last_change) as f64 / rate_hz,
    })
}

/// An event log plus the windows that were dropped for lack of transitions.
#[derive(Debug, Clone)]
pub struct LogBuild {
    pub log: EventLog,
    pub skipped: Vec<String>,
}

pub fn build_log(
    windows: &[TimeSeriesWindow],
    centroids: &Centroids,
    rate_hz: f64,
    fault_label: &str,
) -> Result<LogBuild, EventLogError> {
    if windows.is_empty() {
        return Err(EventLogError::NoWindows);
    }
    let mut cases = Vec::with_capacity(windows.len());
    let mut skipped = Vec::new();
    for w in windows {
        match extract_case(w, centroids, rate_hz) {
            Ok(c) => cases.push(c),
            Err(EventLogError::NoTransitions | EventLogError::WindowTooShort(_)) => {
                skipped.push(w.key())
            }
            Err(e) => return Err(e),
        }
    }
    if cases.is_empty() {
        return Err(EventLogError::AllWindowsDegenerate);
    }
    Ok(LogBuild {
        log: EventLog {
            fault_label: fault_label.to_string(),
            k: centroids.k,
            cases,
        },
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::WindowLabel;

    fn window(samples: Vec<Vec<f64>>) -> TimeSeriesWindow {
        TimeSeriesWindow {
            parent_id: "w".into(),
            start: 0,
            end: samples.len() - 1,
            samples,
            label: WindowLabel::fault("f"),
        }
    }

    fn line_centroids(points: &[f64]) -> Centroids {
        Centroids {
            k: points.len(),
            points: points.iter().map(|&x| vec![x]).collect(),
            seed: 0,
            inertia: 0.0,
        }
    }

    #[test]
    fn separable_clusters() {
        let values = vec![vec![0.0], vec![0.0], vec![10.0], vec![10.0]];
        let c = kmeans_fit(&values, 2, 7).unwrap();
        let mut pts: Vec<f64> = c.points.iter().map(|p| p[0]).collect();
        pts.sort_by(f64::total_cmp);
        assert_eq!(pts, vec![0.0, 10.0]);
        assert_eq!(c.inertia, 0.0);
    }

    #[test]
    fn one_point_per_cluster() {
        let values: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let c = kmeans_fit(&values, 6, 3).unwrap();
        assert_eq!(c.inertia, 0.0);
    }

    #[test]
    fn too_few_points() {
        let values = vec![vec![1.0], vec![1.0], vec![2.0]];
        assert_eq!(
            kmeans_fit(&values, 3, 0),
            Err(EventLogError::TooFewPoints { k: 3, distinct: 2 })
        );
    }

    #[test]
    fn k3_gives_six_transition_labels() {
        let labels: BTreeSet<String> = (0..3)
            .flat_map(|a| {
                (0..3)
                    .filter(move |&b| b != a)
                    .map(move |b| activity_label(a, b))
            })
            .collect();
        assert_eq!(labels.len(), 6);
    }

    #[test]
    fn kmeans_inertia_monotone_and_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let values: Vec<Vec<f64>> = (0..400)
            .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        let t = kmeans_fit_traced(&values, 5, 99).unwrap();
        for w in t.inertia_history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", t.inertia_history);
        }
        let c = &t.centroids;
        let assign: Vec<usize> = values.iter().map(|v| c.nearest(v).0).collect();
        for s in 0..c.k {
            let members: Vec<&Vec<f64>> = values
                .iter()
                .zip(&assign)
                .filter(|(_, &a)| a == s)
                .map(|(v, _)| v)
                .collect();
            assert!(!members.is_empty());
            for j in 0..2 {
                let m = members.iter().map(|v| v[j]).sum::<f64>() / members.len() as f64;
                assert!((m - c.points[s][j]).abs() < 1e-9);
            }
        }
        let direct: f64 = values.iter().map(|v| c.nearest(v).1).sum();
        assert!((direct - c.inertia).abs() < 1e-9);
        assert_eq!(kmeans_fit(&values, 5, 99).unwrap(), t.centroids);
    }

    #[test]
    fn assignment_ties_and_exact_matches() {
        let c = line_centroids(&[0.0, 2.0, 5.0]);
        let w = window(vec![vec![5.0], vec![1.0], vec![0.2]]);
        assert_eq!(assign_states(&w, &c).unwrap(), vec![2, 0, 0]);
        let bad = window(vec![vec![1.0, 2.0], vec![1.0, 2.0]]);
        assert!(matches!(
            assign_states(&bad, &c),
            Err(EventLogError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn case_extraction_examples() {
        let c = line_centroids(&[0.0, 1.0, 2.0, 3.0]);
        let w = window(
            [1.0, 1.0, 1.0, 2.0, 2.0, 3.0]
                .iter()
                .map(|&x| vec![x])
                .collect(),
        );
        let case = extract_case(&w, &c, 10.0).unwrap();
        assert_eq!(
            case.events,
            vec![
                Event {
                    src: 1,
                    dst: 2,
                    timestep: 3,
                    state_time_s: 0.3
                },
                Event {
                    src: 2,
                    dst: 3,
                    timestep: 5,
                    state_time_s: 0.2
                },
            ]
        );
        assert!((case.tail_s - 0.1).abs() < 1e-12);
        let flat = window(vec![vec![1.0]; 5]);
        assert_eq!(
            extract_case(&flat, &c, 10.0),
            Err(EventLogError::NoTransitions)
        );
        let two = window(vec![vec![1.0], vec![2.0]]);
        assert_eq!(
            extract_case(&two, &c, 10.0).unwrap().events,
            vec![Event {
                src: 1,
                dst: 2,
                timestep: 1,
                state_time_s: 0.1
            }]
        );
        let one = window(vec![vec![1.0]]);
        assert_eq!(
            extract_case(&one, &c, 10.0),
            Err(EventLogError::WindowTooShort(1))
        );
    }

    #[test]
    fn build_log_skips_degenerate_windows() {
        let c = line_centroids(&[0.0, 1.0]);
        let windows = vec![
            window(vec![vec![0.0], vec![1.0]]),
            window(vec![vec![0.0], vec![0.0]]),
        ];
        let b = build_log(&windows, &c, 10.0, "f").unwrap();
        assert_eq!(b.log.cases.len(), 1);
        assert_eq!(b.skipped.len(), 1);
        assert_eq!(
            build_log(&windows[1..], &c, 10.0, "f").unwrap_err(),
            EventLogError::AllWindowsDegenerate
        );
    }

    #[test]
    fn activity_round_trip() {
        assert_eq!(parse_activity(&activity_label(12, 3)), Some((12, 3)));
        assert_eq!(parse_activity("tau"), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cases_chain_and_fit_window(states in prop::collection::vec(0usize..4, 2..80)) {
                let c = line_centroids(&[0.0, 1.0, 2.0, 3.0]);
                let w = window(states.iter().map(|&s| vec![s as f64]).collect());
                match extract_case(&w, &c, 10.0) {
                    Ok(case) => {
                        for pair in case.events.windows(2) {
                            prop_assert_eq!(pair[0].dst, pair[1].src);
                            prop_assert!(pair[0].timestep < pair[1].timestep);
                        }
                        let total: f64 = case.events.iter().map(|e| e.state_time_s).sum();
                        prop_assert!((total + case.tail_s - w.len() as f64 / 10.0).abs() < 1e-9);
                        prop_assert!(case.tail_s > 0.0);
                        prop_assert!(case.events.iter().all(|e| e.src != e.dst));
                    }
                    Err(e) => prop_assert_eq!(e, EventLogError::NoTransitions),
                }
            }
        }
    }
}
