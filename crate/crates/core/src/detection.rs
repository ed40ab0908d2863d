//! Isolation of anomalous windows, and training sets with a controlled
//! detection accuracy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{MultivariateTimeSeries, TimeSeriesWindow, WindowLabel};
use crate::metrics;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DetectionError {
    #[error("window length {window_len} exceeds series length {series_len}")]
    WindowTooLong {
        window_len: usize,
        series_len: usize,
    },
    #[error("window length must be at least 2")]
    WindowTooShort,
    #[error(
        "pool has {positives} positives and {negatives} negatives; need {need_pos} and {need_neg}"
    )]
    InsufficientPool {
        positives: usize,
        negatives: usize,
        need_pos: usize,
        need_neg: usize,
    },
    #[error("accuracy must lie in (0, 1], got {0}")]
    InvalidAccuracy(f64),
    #[error("training set size must be positive")]
    EmptyRequest,
    #[error("window {0} carries the wrong label for its side of the pool")]
    MislabeledWindow(String),
}

/// Fault-labeled positives and normal negatives.
#[derive(Debug, Clone, Default)]
pub struct LabeledWindowPool {
    pub positives: Vec<TimeSeriesWindow>,
    pub negatives: Vec<TimeSeriesWindow>,
}

impl LabeledWindowPool {
    pub fn new(
        positives: Vec<TimeSeriesWindow>,
        negatives: Vec<TimeSeriesWindow>,
    ) -> Result<Self, DetectionError> {
        if let Some(w) = positives.iter().find(|w| w.label.is_normal()) {
            return Err(DetectionError::MislabeledWindow(w.key()));
        }
        if let Some(w) = negatives.iter().find(|w| !w.label.is_normal()) {
            return Err(DetectionError::MislabeledWindow(w.key()));
        }
        Ok(Self {
            positives,
            negatives,
        })
    }
}

/// Label given to windows flagged by [`threshold_detect`].
pub const DETECTED_LABEL: &str = "anomaly";

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Baseline detector: robust z-scores (median/MAD per feature), RMS energy
/// over tumbling windows of `window_len`, adjacent flagged windows merged.
pub fn threshold_detect(
    ts: &MultivariateTimeSeries,
    window_len: usize,
    threshold: f64,
) -> Result<Vec<TimeSeriesWindow>, DetectionError> {
    if window_len < 2 {
        return Err(DetectionError::WindowTooShort);
    }
    if window_len > ts.len() {
        return Err(DetectionError::WindowTooLong {
            window_len,
            series_len: ts.len(),
        });
    }
    let p = ts.dim();
    let values = ts.values();
    let mut center = Vec::with_capacity(p);
    let mut scale = Vec::with_capacity(p);
    for j in 0..p {
        let mut col: Vec<f64> = values.iter().map(|v| v[j]).collect();
        let med = median(&mut col);
        let mut dev: Vec<f64> = col.iter().map(|x| (x - med).abs()).collect();
        center.push(med);
        scale.push(1.4826 * median(&mut dev));
    }
    let z2 = |v: &[f64]| -> f64 {
        (0..p)
            .map(|j| {
                if scale[j] > 0.0 {
                    let z = (v[j] - center[j]) / scale[j];
                    z * z
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            / p as f64
    };

    // Tumbling chunks; a trailing chunk shorter than 2 samples joins the previous one.
    let mut chunks: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    while start < values.len() {
        let end = (start + window_len).min(values.len()) - 1;
        if end == start {
            if let Some(last) = chunks.last_mut() {
                last.1 = end;
            }
        } else {
            chunks.push((start, end));
        }
        start = end + 1;
    }

    let mut flagged: Vec<(usize, usize)> = Vec::new();
    for (s, e) in chunks {
        let energy = (values[s..=e].iter().map(|v| z2(v)).sum::<f64>() / (e - s + 1) as f64).sqrt();
        if energy > threshold {
            match flagged.last_mut() {
                Some(last) if last.1 + 1 == s => last.1 = e,
                _ => flagged.push((s, e)),
            }
        }
    }
    Ok(flagged
        .into_iter()
        .map(|(s, e)| {
            ts.window(s, e, WindowLabel::fault(DETECTED_LABEL))
                .expect("chunk bounds lie inside the series")
        })
        .collect())
}

/// Builds `n` training windows at detection accuracy `acc`: `n` positives
/// are drawn, then `n - round(acc * n)` of them are replaced by negatives
/// sampled without replacement. Deterministic per `seed`.
pub fn compose_training_set(
    pool: &LabeledWindowPool,
    acc: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<TimeSeriesWindow>, DetectionError> {
    if !(acc > 0.0 && acc <= 1.0) {
        return Err(DetectionError::InvalidAccuracy(acc));
    }
    if n == 0 {
        return Err(DetectionError::EmptyRequest);
    }
    let n_pos = (acc * n as f64).round() as usize;
    let n_neg = n - n_pos;
    if pool.positives.len() < n || pool.negatives.len() < n_neg {
        return Err(DetectionError::InsufficientPool {
            positives: pool.positives.len(),
            negatives: pool.negatives.len(),
            need_pos: n,
            need_neg: n_neg,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos_idx: Vec<usize> = (0..pool.positives.len()).collect();
    pos_idx.shuffle(&mut rng);
    pos_idx.truncate(n);
    pos_idx.sort_unstable();

    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(&mut rng);
    let mut replaced = slots[..n_neg].to_vec();
    replaced.sort_unstable();

    let mut neg_idx: Vec<usize> = (0..pool.negatives.len()).collect();
    neg_idx.shuffle(&mut rng);

    let mut out: Vec<TimeSeriesWindow> =
        pos_idx.iter().map(|&i| pool.positives[i].clone()).collect();
    for (slot, &neg) in replaced.iter().zip(&neg_idx) {
        out[*slot] = pool.negatives[neg].clone();
    }
    Ok(out)
}

/// Detection accuracy of a composed set, treating every member as flagged.
pub fn composed_accuracy(set: &[TimeSeriesWindow]) -> f64 {
    let tp = set.iter().filter(|w| !w.label.is_normal()).count();
    let fp = set.len() - tp;
    metrics::accuracy(tp, 0, fp, 0)
}
