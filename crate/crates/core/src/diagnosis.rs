//! Fault dictionary construction, majority-vote fault identification and
//! the evaluation harness.

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformance::{self, Aligner, ConformanceError, SearchLimits};
use crate::data::{self, DataError, SynthSpec, TimeSeriesWindow};
use crate::detection::{compose_training_set, DetectionError, LabeledWindowPool};
use crate::discovery::{DiscoveryError, Miner};
use crate::eventlog::{self, Centroids, EventLogError};
use crate::metrics;
use crate::petri::{
    arc_degree_simplicity, check_soundness, Marking, PetriNet, Soundness, UnsoundReason,
};
use crate::stochastic::{
    self, DurationHistogram, SimParams, SimulatedWindow, StochasticError, StochasticPetriNet,
};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DiagnosisError {
    #[error("no training data")]
    EmptyTraining,
    #[error("fault {fault} has {got} training windows; at least 2 are needed")]
    TooFewWindows { fault: String, got: usize },
    #[error("fault dictionary is empty")]
    EmptyDictionary,
    #[error("window yields no state transition under any fault's centroids")]
    NoTransitionsInWindow,
    #[error("test data must cover at least 2 labels, got {0}")]
    TooFewLabels(usize),
    #[error("accuracy level {0} is outside (0, 1]")]
    BadAccuracy(f64),
    #[error("fault {fault}: {source}")]
    EventLog {
        fault: String,
        source: EventLogError,
    },
    #[error("fault {fault}: {source}")]
    Discovery {
        fault: String,
        source: DiscoveryError,
    },
    #[error("fault {fault}: {source}")]
    Stochastic {
        fault: String,
        source: StochasticError,
    },
    #[error("fault {fault}: {source}")]
    Conformance {
        fault: String,
        source: ConformanceError,
    },
    #[error("fault {fault}: {source}")]
    Detection {
        fault: String,
        source: DetectionError,
    },
}

impl DiagnosisError {
    /// Table notation for a failed experiment cell: `NS` for an unsound
    /// model, `TE` for an exhausted alignment search, `SF` for a net whose
    /// simulations mostly fail to reach the final marking.
    pub fn cell_code(&self) -> Option<&'static str> {
        match self {
            DiagnosisError::Conformance { source, .. } => match source {
                ConformanceError::UnsoundModel(_) => Some("NS"),
                ConformanceError::SearchBudgetExceeded(_)
                | ConformanceError::TimeLimitExceeded(_) => Some("TE"),
                _ => None,
            },
            DiagnosisError::Stochastic {
                source: StochasticError::TooManyFailures { .. },
                ..
            } => Some("SF"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionaryConfig {
    pub k: usize,
    pub miner: Miner,
    pub bins: usize,
    pub rate_hz: f64,
    pub kmeans_seed: u64,
    pub kmeans_restarts: usize,
    pub sim: SimParams,
    #[serde(skip)]
    pub limits: SearchLimits,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        Self {
            k: 5,
            miner: Miner::Imf {
                noise_threshold: 0.75,
            },
            bins: stochastic::DEFAULT_BINS,
            rate_hz: 10.0,
            kmeans_seed: 0,
            kmeans_restarts: 10,
            sim: SimParams::default(),
            limits: SearchLimits::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub k: usize,
    pub miner: Miner,
    pub bins: usize,
    pub rate_hz: f64,
    pub kmeans_seed: u64,
    pub kmeans_restarts: usize,
    pub sim: SimParams,
    pub cases: usize,
    pub events: usize,
    pub skipped_windows: usize,
    pub failed_simulations: usize,
}

/// Everything the online phase needs about one fault.
#[derive(Debug, Clone)]
pub struct FaultDictionaryEntry {
    pub fault_label: String,
    pub centroids: Centroids,
    pub histograms: BTreeMap<usize, DurationHistogram>,
    pub spn: StochasticPetriNet,
    pub sim_pool: Vec<SimulatedWindow>,
    pub soundness: Soundness,
    pub s_arc: f64,
    pub provenance: Provenance,
    pub limits: SearchLimits,
    aligner: OnceLock<Result<Aligner, ConformanceError>>,
}

impl FaultDictionaryEntry {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fault_label: String,
        centroids: Centroids,
        histograms: BTreeMap<usize, DurationHistogram>,
        spn: StochasticPetriNet,
        sim_pool: Vec<SimulatedWindow>,
        soundness: Soundness,
        s_arc: f64,
        provenance: Provenance,
        limits: SearchLimits,
    ) -> Self {
        Self {
            fault_label,
            centroids,
            histograms,
            spn,
            sim_pool,
            soundness,
            s_arc,
            provenance,
            limits,
            aligner: OnceLock::new(),
        }
    }

    /// Aligner for this entry's net, prepared on first use.
    pub fn aligner(&self) -> Result<&Aligner, ConformanceError> {
        self.aligner
            .get_or_init(|| match &self.soundness {
                Soundness::Unsound(why) => Err(ConformanceError::UnsoundModel(why.to_string())),
                _ => Aligner::new(&self.spn.net, self.limits),
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

fn fault_seed(base: u64, label: &str) -> u64 {
    // FNV-1a, so that a fault's seeds do not depend on the other faults.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ base
}

fn deadlock_witness(
    net: &PetriNet,
    failures: &[(usize, StochasticError)],
) -> Option<UnsoundReason> {
    failures.iter().find_map(|(_, e)| match e {
        StochasticError::Deadlock(counts) => {
            let m = Marking::from_counts(counts.clone());
            Some(if m.covers(net.final_marking()) {
                UnsoundReason::ImproperCompletion
            } else {
                UnsoundReason::NoOptionToComplete
            })
        }
        _ => None,
    })
}

pub fn build_entry(
    fault: &str,
    windows: &[TimeSeriesWindow],
    cfg: &DictionaryConfig,
) -> Result<FaultDictionaryEntry, DiagnosisError> {
    if windows.len() < 2 {
        return Err(DiagnosisError::TooFewWindows {
            fault: fault.to_string(),
            got: windows.len(),
        });
    }
    let ev = |source| DiagnosisError::EventLog {
        fault: fault.to_string(),
        source,
    };
    let st = |source| DiagnosisError::Stochastic {
        fault: fault.to_string(),
        source,
    };
    let samples: Vec<Vec<f64>> = windows
        .iter()
        .flat_map(|w| w.samples.iter().cloned())
        .collect();
    let centroids =
        eventlog::kmeans_fit_restarts(&samples, cfg.k, cfg.kmeans_seed, cfg.kmeans_restarts.max(1))
            .map_err(ev)?;
    let built = eventlog::build_log(windows, &centroids, cfg.rate_hz, fault).map_err(ev)?;
    let net =
        cfg.miner
            .discover(&built.log.traces())
            .map_err(|source| DiagnosisError::Discovery {
                fault: fault.to_string(),
                source,
            })?;
    let mut soundness = check_soundness(&net, cfg.limits.marking_budget);
    let s_arc = arc_degree_simplicity(&net).unwrap_or(0.0);
    let times = stochastic::collect_state_times(&built.log).map_err(st)?;
    let histograms = stochastic::build_histograms(&times, cfg.bins).map_err(st)?;
    let tail_hists =
        stochastic::build_histograms(&stochastic::collect_tail_times(&built.log), cfg.bins)
            .map_err(st)?;
    let spn = stochastic::enhance(&net, &histograms)
        .map_err(st)?
        .with_tail(tail_hists);
    let sim = SimParams {
        seed: fault_seed(cfg.sim.seed, fault),
        ..cfg.sim
    };
    let pool = stochastic::simulate_runs(&spn, &sim, &centroids, cfg.rate_hz);
    // A simulated run that gets stuck is a witness of unsoundness the
    // bounded state-space search may have missed.
    if let Some(reason) = deadlock_witness(&spn.net, &pool.failures) {
        soundness = Soundness::Unsound(reason);
    }
    let (sim_pool, failed) = match pool.require_majority(sim.n) {
        Ok(pool) if !soundness.is_unsound() => (pool.windows, pool.failures.len()),
        Ok(pool) => (Vec::new(), pool.failures.len()),
        // An unsound net is kept so that it can be reported; it is never aligned.
        Err(_) if soundness.is_unsound() => (Vec::new(), sim.n),
        Err(e) => return Err(st(e)),
    };
    let provenance = Provenance {
        k: cfg.k,
        miner: cfg.miner,
        bins: cfg.bins,
        rate_hz: cfg.rate_hz,
        kmeans_seed: cfg.kmeans_seed,
        kmeans_restarts: cfg.kmeans_restarts,
        sim,
        cases: built.log.cases.len(),
        events: built.log.event_count(),
        skipped_windows: built.skipped.len(),
        failed_simulations: failed,
    };
    Ok(FaultDictionaryEntry::new(
        fault.to_string(),
        centroids,
        histograms,
        spn,
        sim_pool,
        soundness,
        s_arc,
        provenance,
        cfg.limits,
    ))
}

/// One entry per fault, in label order.
pub fn build_dictionary(
    training: &BTreeMap<String, Vec<TimeSeriesWindow>>,
    cfg: &DictionaryConfig,
) -> Result<Vec<FaultDictionaryEntry>, DiagnosisError> {
    if training.is_empty() {
        return Err(DiagnosisError::EmptyTraining);
    }
    training
        .par_iter()
        .map(|(fault, windows)| build_entry(fault, windows, cfg))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultScore {
    pub fault: String,
    pub trace_len: usize,
    pub fitness: f64,
    pub best_rmse: f64,
    pub best_r2: f64,
    pub cc_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisResult {
    pub fault_label: String,
    pub fault_index: usize,
    pub scores: Vec<FaultScore>,
    /// Argmax fitness, argmin RMSE, argmax R².
    pub vote_indices: (usize, usize, usize),
}

fn argbest(xs: impl Iterator<Item = f64>, better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in xs.enumerate() {
        if best.is_none_or(|(_, b)| better(x, b)) {
            best = Some((i, x));
        }
    }
    best.map_or(0, |(i, _)| i)
}

/// Index chosen by at least two of the three votes; without agreement the
/// fitness vote decides.
pub fn majority(votes: (usize, usize, usize)) -> usize {
    let (f, r, q) = votes;
    if f == r || f == q {
        f
    } else if r == q {
        r
    } else {
        f
    }
}

/// Vote indices and winner for per-fault score lists. Ties go to the lowest
/// index.
pub fn vote(fitness: &[f64], rmse: &[f64], r2: &[f64]) -> ((usize, usize, usize), usize) {
    let votes = (
        argbest(fitness.iter().copied(), |x, b| x > b),
        argbest(rmse.iter().copied(), |x, b| x < b),
        argbest(r2.iter().copied(), |x, b| x > b),
    );
    (votes, majority(votes))
}

fn score(samples: &[Vec<f64>], entry: &FaultDictionaryEntry) -> Result<FaultScore, DiagnosisError> {
    let cf = |source| DiagnosisError::Conformance {
        fault: entry.fault_label.clone(),
        source,
    };
    let states = eventlog::assign_samples(samples, &entry.centroids).map_err(|source| {
        DiagnosisError::EventLog {
            fault: entry.fault_label.clone(),
            source,
        }
    })?;
    let trace: Vec<String> = eventlog::events_from_states(&states, 0, entry.provenance.rate_hz)
        .iter()
        .map(eventlog::Event::activity)
        .collect();
    let aligner = entry.aligner().map_err(cf)?;
    let started = Instant::now();
    let fitness = aligner.fitness(&trace).map_err(cf)?;
    let cc_time_s = started.elapsed().as_secs_f64();

    let mut best_rmse = f64::INFINITY;
    let mut best_r2 = f64::NEG_INFINITY;
    for sim in &entry.sim_pool {
        best_rmse = best_rmse.min(conformance::rmse(samples, &sim.samples).map_err(cf)?);
        best_r2 = best_r2.max(conformance::r2(samples, &sim.samples).map_err(cf)?);
    }
    Ok(FaultScore {
        fault: entry.fault_label.clone(),
        trace_len: trace.len(),
        fitness,
        best_rmse,
        best_r2,
        cc_time_s,
    })
}

/// Scores the window against every fault and takes the majority vote.
pub fn identify(
    samples: &[Vec<f64>],
    dict: &[FaultDictionaryEntry],
) -> Result<DiagnosisResult, DiagnosisError> {
    if dict.is_empty() {
        return Err(DiagnosisError::EmptyDictionary);
    }
    let scores = dict
        .iter()
        .map(|e| score(samples, e))
        .collect::<Result<Vec<_>, _>>()?;
    if scores.iter().all(|s| s.trace_len == 0) {
        return Err(DiagnosisError::NoTransitionsInWindow);
    }
    let fit: Vec<f64> = scores.iter().map(|s| s.fitness).collect();
    let rmse: Vec<f64> = scores.iter().map(|s| s.best_rmse).collect();
    let r2: Vec<f64> = scores.iter().map(|s| s.best_r2).collect();
    let (vote_indices, winner) = vote(&fit, &rmse, &r2);
    Ok(DiagnosisResult {
        fault_label: dict[winner].fault_label.clone(),
        fault_index: winner,
        scores,
        vote_indices,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultMetrics {
    pub fault: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub f1: f64,
    pub mean_cc_time_s: f64,
    /// Over this fault's test windows, scored against this fault's entry.
    pub mean_best_rmse: f64,
    pub mean_best_r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub per_fault: Vec<FaultMetrics>,
    /// `confusion[true][predicted]`; windows that could not be classified
    /// are counted under `"unclassified"`.
    pub confusion: BTreeMap<String, BTreeMap<String, usize>>,
    pub macro_f1: f64,
    pub mean_cc_time_s: f64,
    pub median_cc_time_s: f64,
    pub unclassified: usize,
}

pub const UNCLASSIFIED: &str = "unclassified";

#[derive(Debug, Clone)]
pub struct WindowOutcome {
    pub truth: String,
    pub window: String,
    pub result: Result<DiagnosisResult, DiagnosisError>,
}

/// Runs [`identify`] on every test window. Only windows that yield no
/// transition at all are tolerated as unclassified; other errors abort.
pub fn diagnose_all(
    dict: &[FaultDictionaryEntry],
    test: &BTreeMap<String, Vec<TimeSeriesWindow>>,
) -> Result<Vec<WindowOutcome>, DiagnosisError> {
    let jobs: Vec<(&String, &TimeSeriesWindow)> = test
        .iter()
        .flat_map(|(l, ws)| ws.iter().map(move |w| (l, w)))
        .collect();
    jobs.par_iter()
        .map(|(truth, w)| {
            let result = identify(&w.samples, dict);
            match result {
                Err(DiagnosisError::NoTransitionsInWindow) | Ok(_) => Ok(WindowOutcome {
                    truth: truth.to_string(),
                    window: w.key(),
                    result,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

pub fn evaluate(
    dict: &[FaultDictionaryEntry],
    test: &BTreeMap<String, Vec<TimeSeriesWindow>>,
) -> Result<EvaluationReport, DiagnosisError> {
    if test.len() < 2 {
        return Err(DiagnosisError::TooFewLabels(test.len()));
    }
    let outcomes = diagnose_all(dict, test)?;
    Ok(summarize(dict, &outcomes))
}

pub fn summarize(dict: &[FaultDictionaryEntry], outcomes: &[WindowOutcome]) -> EvaluationReport {
    let mut confusion: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut cc_times = Vec::new();
    let mut per_fault_cc: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut own_scores: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut unclassified = 0;
    for o in outcomes {
        let predicted = match &o.result {
            Ok(r) => {
                for s in &r.scores {
                    cc_times.push(s.cc_time_s);
                    per_fault_cc
                        .entry(dict_label(dict, &s.fault))
                        .or_default()
                        .push(s.cc_time_s);
                    if s.fault == o.truth {
                        let e = own_scores.entry(dict_label(dict, &s.fault)).or_default();
                        e.0.push(s.best_rmse);
                        e.1.push(s.best_r2);
                    }
                }
                r.fault_label.clone()
            }
            Err(_) => {
                unclassified += 1;
                UNCLASSIFIED.to_string()
            }
        };
        *confusion
            .entry(o.truth.clone())
            .or_default()
            .entry(predicted)
            .or_default() += 1;
    }

    let mut labels: Vec<String> = dict.iter().map(|e| e.fault_label.clone()).collect();
    for t in confusion.keys() {
        if !labels.contains(t) {
            labels.push(t.clone());
        }
    }
    let count = |truth: &str, pred: &str| {
        confusion
            .get(truth)
            .and_then(|m| m.get(pred))
            .copied()
            .unwrap_or(0)
    };
    let per_fault: Vec<FaultMetrics> = labels
        .iter()
        .map(|f| {
            let tp = count(f, f);
            let fp: usize = confusion
                .keys()
                .filter(|t| *t != f)
                .map(|t| count(t, f))
                .sum();
            let total_true: usize = confusion.get(f).map_or(0, |m| m.values().sum());
            let fn_ = total_true - tp;
            let (rmses, r2s) = own_scores.get(f.as_str()).cloned().unwrap_or_default();
            FaultMetrics {
                fault: f.clone(),
                tp,
                fp,
                fn_,
                f1: metrics::f1(tp, fp, fn_),
                mean_cc_time_s: per_fault_cc
                    .get(f.as_str())
                    .map_or(f64::NAN, |v| metrics::mean(v)),
                mean_best_rmse: metrics::mean(&rmses),
                mean_best_r2: metrics::mean(&r2s),
            }
        })
        .collect();
    // Labels that only occur in the dictionary have nothing to score.
    let scored: Vec<f64> = per_fault
        .iter()
        .filter(|m| confusion.contains_key(&m.fault))
        .map(|m| m.f1)
        .collect();
    EvaluationReport {
        macro_f1: metrics::mean(&scored),
        per_fault,
        confusion,
        mean_cc_time_s: metrics::mean(&cc_times),
        median_cc_time_s: metrics::median(&cc_times),
        unclassified,
    }
}

fn dict_label<'a>(dict: &'a [FaultDictionaryEntry], fault: &str) -> &'a str {
    dict.iter()
        .find(|e| e.fault_label == fault)
        .map(|e| e.fault_label.as_str())
        .expect("scores only name dictionary faults")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub acc: f64,
    pub f1_runs: Vec<f64>,
    pub mean_f1: f64,
    pub std_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationParams {
    /// Training windows per fault.
    pub n_train: usize,
    pub repetitions: usize,
    pub seed: u64,
}

/// Rebuilds the dictionary from training sets contaminated to each
/// detection accuracy level and evaluates it on the clean test set.
pub fn ablate_accuracy(
    pools: &BTreeMap<String, LabeledWindowPool>,
    test: &BTreeMap<String, Vec<TimeSeriesWindow>>,
    acc_levels: &[f64],
    cfg: &DictionaryConfig,
    params: &AblationParams,
) -> Result<Vec<AblationRow>, DiagnosisError> {
    if let Some(&bad) = acc_levels.iter().find(|a| !(**a > 0.0 && **a <= 1.0)) {
        return Err(DiagnosisError::BadAccuracy(bad));
    }
    let mut rows = Vec::with_capacity(acc_levels.len());
    for &acc in acc_levels {
        let mut runs = Vec::with_capacity(params.repetitions);
        for rep in 0..params.repetitions {
            let seed = params.seed.wrapping_add(rep as u64);
            let mut training = BTreeMap::new();
            for (fault, pool) in pools {
                let set = compose_training_set(pool, acc, params.n_train, fault_seed(seed, fault))
                    .map_err(|source| DiagnosisError::Detection {
                        fault: fault.clone(),
                        source,
                    })?;
                training.insert(fault.clone(), set);
            }
            let rep_cfg = DictionaryConfig {
                kmeans_seed: cfg.kmeans_seed.wrapping_add(rep as u64),
                sim: SimParams {
                    seed: cfg.sim.seed.wrapping_add(rep as u64),
                    ..cfg.sim
                },
                ..*cfg
            };
            let dict = build_dictionary(&training, &rep_cfg)?;
            runs.push(evaluate(&dict, test)?.macro_f1);
        }
        rows.push(AblationRow {
            acc,
            mean_f1: metrics::mean(&runs),
            std_f1: metrics::std_dev(&runs),
            f1_runs: runs,
        });
    }
    Ok(rows)
}

/// Per-label train/test split of labeled windows.
#[derive(Debug, Clone, Default)]
pub struct Benchmark {
    pub train: BTreeMap<String, Vec<TimeSeriesWindow>>,
    pub test: BTreeMap<String, Vec<TimeSeriesWindow>>,
    pub normal_train: Vec<TimeSeriesWindow>,
    pub normal_test: Vec<TimeSeriesWindow>,
}

impl Benchmark {
    /// Splits each label's windows separately so every fault keeps the same
    /// train fraction.
    pub fn split(
        windows: &[TimeSeriesWindow],
        train_fraction: f64,
        seed: u64,
    ) -> Result<Self, DataError> {
        let mut by_label: BTreeMap<String, Vec<TimeSeriesWindow>> = BTreeMap::new();
        let mut normal = Vec::new();
        for w in windows {
            match w.label.fault_name() {
                Some(f) => by_label.entry(f.to_string()).or_default().push(w.clone()),
                None => normal.push(w.clone()),
            }
        }
        let mut b = Benchmark::default();
        for (label, ws) in by_label {
            let (tr, te) = data::split_holdout(&ws, train_fraction, fault_seed(seed, &label))?;
            b.train.insert(label.clone(), tr);
            b.test.insert(label, te);
        }
        if !normal.is_empty() {
            (b.normal_train, b.normal_test) = data::split_holdout(&normal, train_fraction, seed)?;
        }
        Ok(b)
    }

    /// Fault training windows as positives, normal training windows as
    /// negatives.
    pub fn pools(&self) -> BTreeMap<String, LabeledWindowPool> {
        self.train
            .iter()
            .map(|(f, ws)| {
                (
                    f.clone(),
                    LabeledWindowPool {
                        positives: ws.clone(),
                        negatives: self.normal_train.clone(),
                    },
                )
            })
            .collect()
    }
}

/// Synthetic series, min-max normalized, split per label.
pub fn synthetic_benchmark(
    spec: &SynthSpec,
    train_fraction: f64,
    seed: u64,
) -> Result<Benchmark, DataError> {
    let (ts, windows) = data::synth_generate(spec)?;
    let ts = data::normalize_minmax(&ts)?;
    let windows = data::reslice(&ts, &windows)?;
    Benchmark::split(&windows, train_fraction, seed)
}
