//! Multivariate time series, windows over them, and the synthetic benchmark.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fault label of the slow, low-amplitude synthetic anomaly.
pub const VELOCITY_FAULT: &str = "velocity";
/// Fault label of the step-like synthetic anomaly.
pub const WEIGHT_FAULT: &str = "weight";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("non-numeric cell at row {row}, column `{column}`: {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("file contains no data rows")]
    EmptyFile,
    #[error("series is empty")]
    EmptySeries,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("holdout input is empty")]
    EmptyInput,
    #[error("window [{start}, {end}] is not a valid range for a series of {len} samples")]
    BadWindow {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fixed-rate multivariate series. Sample `i` sits at timestep `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultivariateTimeSeries {
    pub id: String,
    pub sampling_rate_hz: f64,
    pub feature_names: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl MultivariateTimeSeries {
    pub fn new(
        id: impl Into<String>,
        sampling_rate_hz: f64,
        feature_names: Vec<String>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self, DataError> {
        if !(sampling_rate_hz > 0.0 && sampling_rate_hz.is_finite()) {
            return Err(DataError::InvalidSeries(format!(
                "sampling rate must be positive, got {sampling_rate_hz}"
            )));
        }
        if feature_names.is_empty() {
            return Err(DataError::InvalidSeries("no features".into()));
        }
        let p = feature_names.len();
        if let Some(i) = values.iter().position(|v| v.len() != p) {
            return Err(DataError::InvalidSeries(format!(
                "sample {i} has dimension {} but {p} features are declared",
                values[i].len()
            )));
        }
        Ok(Self {
            id: id.into(),
            sampling_rate_hz,
            feature_names,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.sampling_rate_hz
    }

    /// Copies the inclusive range `[start, end]` into a window.
    pub fn window(
        &self,
        start: usize,
        end: usize,
        label: WindowLabel,
    ) -> Result<TimeSeriesWindow, DataError> {
        if start >= end || end >= self.values.len() {
            return Err(DataError::BadWindow {
                start,
                end,
                len: self.values.len(),
            });
        }
        Ok(TimeSeriesWindow {
            parent_id: self.id.clone(),
            start,
            end,
            samples: self.values[start..=end].to_vec(),
            label,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowLabel {
    Normal,
    Fault(String),
}

impl WindowLabel {
    pub fn fault(label: impl Into<String>) -> Self {
        WindowLabel::Fault(label.into())
    }

    pub fn fault_name(&self) -> Option<&str> {
        match self {
            WindowLabel::Normal => None,
            WindowLabel::Fault(f) => Some(f),
        }
    }

    pub fn is_normal(&self) -> bool {
        matches!(self, WindowLabel::Normal)
    }

    /// Inverse of `Display`: `"normal"` or a fault name.
    pub fn parse(s: &str) -> Self {
        if s == "normal" {
            WindowLabel::Normal
        } else {
            WindowLabel::Fault(s.to_string())
        }
    }
}

impl fmt::Display for WindowLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowLabel::Normal => f.write_str("normal"),
            WindowLabel::Fault(name) => f.write_str(name),
        }
    }
}

/// Contiguous, inclusive slice `[start, end]` of a parent series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesWindow {
    pub parent_id: String,
    pub start: usize,
    pub end: usize,
    pub samples: Vec<Vec<f64>>,
    pub label: WindowLabel,
}

impl TimeSeriesWindow {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Stable identifier built from the parent id and the range.
    pub fn key(&self) -> String {
        format!("{}:{}-{}", self.parent_id, self.start, self.end)
    }
}

/// Re-slices windows from `ts`, e.g. after the series was normalized.
pub fn reslice(
    ts: &MultivariateTimeSeries,
    windows: &[TimeSeriesWindow],
) -> Result<Vec<TimeSeriesWindow>, DataError> {
    windows
        .iter()
        .map(|w| ts.window(w.start, w.end, w.label.clone()))
        .collect()
}

/// Reads the named columns of a headered CSV file; one sample per row.
pub fn load_csv(
    path: impl AsRef<Path>,
    feature_columns: &[&str],
    sampling_rate_hz: f64,
) -> Result<MultivariateTimeSeries, DataError> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut indices = Vec::with_capacity(feature_columns.len());
    for &name in feature_columns {
        let idx = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))?;
        indices.push(idx);
    }

    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let mut sample = Vec::with_capacity(indices.len());
        for (&idx, &name) in indices.iter().zip(feature_columns) {
            let raw = record.get(idx).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| DataError::NonNumericCell {
                row,
                column: name.to_string(),
                value: raw.to_string(),
            })?;
            sample.push(v);
        }
        values.push(sample);
    }
    if values.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    MultivariateTimeSeries::new(
        id,
        sampling_rate_hz,
        feature_columns.iter().map(|s| s.to_string()).collect(),
        values,
    )
}

/// Maps every feature to [0, 1] independently. Constant features become 0.
pub fn normalize_minmax(ts: &MultivariateTimeSeries) -> Result<MultivariateTimeSeries, DataError> {
    if ts.is_empty() {
        return Err(DataError::EmptySeries);
    }
    let p = ts.dim();
    let mut lo = vec![f64::INFINITY; p];
    let mut hi = vec![f64::NEG_INFINITY; p];
    for v in &ts.values {
        for j in 0..p {
            lo[j] = lo[j].min(v[j]);
            hi[j] = hi[j].max(v[j]);
        }
    }
    let values = ts
        .values
        .iter()
        .map(|v| {
            (0..p)
                .map(|j| {
                    let range = hi[j] - lo[j];
                    if range > 0.0 {
                        (v[j] - lo[j]) / range
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(MultivariateTimeSeries {
        id: ts.id.clone(),
        sampling_rate_hz: ts.sampling_rate_hz,
        feature_names: ts.feature_names.clone(),
        values,
    })
}

/// Parameters of the synthetic three-axis benchmark.
///
/// The normal behavior alternates two smooth motion patterns. The velocity
/// fault replays the first pattern more slowly and at reduced amplitude; the
/// weight fault is a sequence of held acceleration steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_normal: usize,
    pub n_velocity: usize,
    pub n_weight: usize,
    pub normal_len: usize,
    pub velocity_len: usize,
    pub weight_len: usize,
    pub noise_std: f64,
    pub velocity_amplitude: f64,
    pub sampling_rate_hz: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            n_normal: 100,
            n_velocity: 80,
            n_weight: 80,
            normal_len: 49,
            velocity_len: 62,
            weight_len: 130,
            noise_std: 0.1,
            velocity_amplitude: 0.5,
            sampling_rate_hz: 10.0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<(), DataError> {
        let counts = [
            ("n_normal", self.n_normal),
            ("n_velocity", self.n_velocity),
            ("n_weight", self.n_weight),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(DataError::InvalidSpec(format!("{name} must be positive")));
            }
        }
        let lens = [
            ("normal_len", self.normal_len),
            ("velocity_len", self.velocity_len),
            ("weight_len", self.weight_len),
        ];
        for (name, n) in lens {
            if n < 8 {
                return Err(DataError::InvalidSpec(format!("{name} must be at least 8")));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(DataError::InvalidSpec(
                "noise_std must be non-negative".into(),
            ));
        }
        if !(self.velocity_amplitude > 0.0 && self.velocity_amplitude.is_finite()) {
            return Err(DataError::InvalidSpec(
                "velocity_amplitude must be positive".into(),
            ));
        }
        if !(self.sampling_rate_hz > 0.0 && self.sampling_rate_hz.is_finite()) {
            return Err(DataError::InvalidSpec(
                "sampling_rate_hz must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Pattern {
    PickUp,
    Move,
    Velocity,
    Weight,
}

// Keyframes (time fraction, x, y, z) of the smooth patterns.
const PICK_UP: [(f64, [f64; 3]); 5] = [
    (0.0, [0.0, 0.0, 0.0]),
    (0.2, [0.8, 0.3, -0.2]),
    (0.45, [0.8, -0.5, 0.4]),
    (0.7, [-0.6, -0.2, 0.6]),
    (1.0, [0.0, 0.0, 0.0]),
];
const MOVE: [(f64, [f64; 3]); 5] = [
    (0.0, [0.0, 0.0, 0.0]),
    (0.25, [-0.7, 0.6, 0.1]),
    (0.5, [0.2, 0.8, -0.6]),
    (0.8, [0.5, -0.4, -0.3]),
    (1.0, [0.0, 0.0, 0.0]),
];
// Held levels (relative duration, x, y, z) of the step pattern.
const STEPS: [(f64, [f64; 3]); 6] = [
    (1.0, [0.9, 0.1, 0.0]),
    (1.2, [0.9, 0.9, 0.2]),
    (0.8, [0.1, 0.9, 0.8]),
    (1.0, [-0.5, 0.2, 0.8]),
    (1.2, [-0.5, -0.6, 0.1]),
    (0.8, [0.0, 0.0, 0.0]),
];

fn smooth_pattern(keys: &[(f64, [f64; 3])], len: usize, amp: f64) -> Vec<[f64; 3]> {
    (0..len)
        .map(|i| {
            let t = i as f64 / (len - 1) as f64;
            let seg = keys
                .windows(2)
                .find(|w| t <= w[1].0)
                .unwrap_or(&keys[keys.len() - 2..]);
            let (t0, a) = seg[0];
            let (t1, b) = seg[1];
            let u = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            // cosine easing between keyframes
            let w = 0.5 - 0.5 * (std::f64::consts::PI * u).cos();
            let mut out = [0.0; 3];
            for j in 0..3 {
                out[j] = amp * (a[j] + (b[j] - a[j]) * w);
            }
            out
        })
        .collect()
}

fn step_pattern(len: usize, amp: f64, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let weights: Vec<f64> = STEPS
        .iter()
        .map(|(d, _)| d * rng.random_range(0.8..1.2))
        .collect();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(len);
    let mut acc = 0.0;
    for (i, (w, (_, level))) in weights.iter().zip(STEPS.iter()).enumerate() {
        acc += w;
        let until = if i + 1 == STEPS.len() {
            len
        } else {
            ((acc / total) * len as f64).round() as usize
        };
        while out.len() < until.min(len) {
            out.push([amp * level[0], amp * level[1], amp * level[2]]);
        }
    }
    out
}

fn jittered_len(base: usize, rng: &mut ChaCha8Rng) -> usize {
    ((base as f64) * rng.random_range(0.85..1.15))
        .round()
        .max(8.0) as usize
}

/// Generates a labeled three-axis series; deterministic per `spec.seed`.
pub fn synth_generate(
    spec: &SynthSpec,
) -> Result<(MultivariateTimeSeries, Vec<TimeSeriesWindow>), DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise =
        Normal::new(0.0, spec.noise_std).map_err(|e| DataError::InvalidSpec(e.to_string()))?;

    let mut order = Vec::with_capacity(spec.n_normal + spec.n_velocity + spec.n_weight);
    for i in 0..spec.n_normal {
        order.push(if i % 2 == 0 {
            Pattern::PickUp
        } else {
            Pattern::Move
        });
    }
    order.extend(std::iter::repeat_n(Pattern::Velocity, spec.n_velocity));
    order.extend(std::iter::repeat_n(Pattern::Weight, spec.n_weight));
    order.shuffle(&mut rng);

    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut spans = Vec::with_capacity(order.len());
    for pattern in order {
        let amp = rng.random_range(0.9..1.1);
        let (shape, label) = match pattern {
            Pattern::PickUp => (
                smooth_pattern(&PICK_UP, jittered_len(spec.normal_len, &mut rng), amp),
                WindowLabel::Normal,
            ),
            Pattern::Move => (
                smooth_pattern(&MOVE, jittered_len(spec.normal_len, &mut rng), amp),
                WindowLabel::Normal,
            ),
            Pattern::Velocity => (
                smooth_pattern(
                    &PICK_UP,
                    jittered_len(spec.velocity_len, &mut rng),
                    amp * spec.velocity_amplitude,
                ),
                WindowLabel::fault(VELOCITY_FAULT),
            ),
            Pattern::Weight => {
                let len = jittered_len(spec.weight_len, &mut rng);
                (
                    step_pattern(len, amp, &mut rng),
                    WindowLabel::fault(WEIGHT_FAULT),
                )
            }
        };
        let start = values.len();
        for s in shape {
            values.push(s.iter().map(|&x| x + noise.sample(&mut rng)).collect());
        }
        spans.push((start, values.len() - 1, label));
    }

    let ts = MultivariateTimeSeries::new(
        format!("synth-{}", spec.seed),
        spec.sampling_rate_hz,
        vec!["x_acc".into(), "y_acc".into(), "z_acc".into()],
        values,
    )?;
    let windows = spans
        .into_iter()
        .map(|(s, e, l)| ts.window(s, e, l))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((ts, windows))
}

/// Seeded shuffle, then the first `round(train_fraction * n)` items train.
pub fn split_holdout<T: Clone>(
    items: &[T],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), DataError> {
    if items.is_empty() {
        return Err(DataError::EmptyInput);
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidSpec(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_train = (train_fraction * items.len() as f64).round() as usize;
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (tr, te) = idx.split_at(n_train);
    let mut tr = tr.to_vec();
    let mut te = te.to_vec();
    tr.sort_unstable();
    te.sort_unstable();
    Ok((
        tr.into_iter().map(|i| items[i].clone()).collect(),
        te.into_iter().map(|i| items[i].clone()).collect(),
    ))
}

/// Writes windows in long form, one row per sample: `parent, start, end,
/// label, t` and then one column per feature. `features` may be empty, in
/// which case columns are named `f0, f1, ...`.
pub fn write_windows_csv<W: Write>(
    out: W,
    windows: &[TimeSeriesWindow],
    features: &[String],
) -> Result<(), DataError> {
    let dim = windows
        .first()
        .map_or(features.len(), TimeSeriesWindow::dim);
    let names: Vec<String> = if features.is_empty() {
        (0..dim).map(|i| format!("f{i}")).collect()
    } else {
        features.to_vec()
    };
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["parent", "start", "end", "label", "t"]
        .map(String::from)
        .to_vec();
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    for win in windows {
        if win.dim() != names.len() {
            return Err(DataError::InvalidSeries(format!(
                "window {} has {} features, header has {}",
                win.key(),
                win.dim(),
                names.len()
            )));
        }
        for (i, sample) in win.samples.iter().enumerate() {
            let mut row = vec![
                win.parent_id.clone(),
                win.start.to_string(),
                win.end.to_string(),
                win.label.to_string(),
                (win.start + i).to_string(),
            ];
            row.extend(sample.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_windows_csv`]. Returns the feature names and the
/// windows in file order. An empty input yields no windows.
pub fn read_windows_csv<R: Read>(
    input: R,
) -> Result<(Vec<String>, Vec<TimeSeriesWindow>), DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        None => return Ok((Vec::new(), Vec::new())),
        Some(h) => h?,
    };
    let fixed = ["parent", "start", "end", "label", "t"];
    for (i, name) in fixed.iter().enumerate() {
        if header.get(i).map(str::trim) != Some(*name) {
            return Err(DataError::MissingColumn((*name).to_string()));
        }
    }
    let features: Vec<String> = header
        .iter()
        .skip(fixed.len())
        .map(|s| s.trim().to_string())
        .collect();
    let int = |row: usize, column: &str, raw: &str| -> Result<usize, DataError> {
        raw.trim().parse().map_err(|_| DataError::NonNumericCell {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        })
    };

    let mut windows: Vec<TimeSeriesWindow> = Vec::new();
    for (row, record) in records.enumerate() {
        let record = record?;
        let parent = record.get(0).unwrap_or("").to_string();
        let start = int(row, "start", record.get(1).unwrap_or(""))?;
        let end = int(row, "end", record.get(2).unwrap_or(""))?;
        let label = WindowLabel::parse(record.get(3).unwrap_or(""));
        let mut sample = Vec::with_capacity(features.len());
        for (j, name) in features.iter().enumerate() {
            let raw = record.get(fixed.len() + j).unwrap_or("").trim();
            sample.push(raw.parse().map_err(|_| DataError::NonNumericCell {
                row,
                column: name.clone(),
                value: raw.to_string(),
            })?);
        }
        let same = windows.last().is_some_and(|w| {
            w.parent_id == parent && w.start == start && w.end == end && w.label == label
        });
        if !same {
            windows.push(TimeSeriesWindow {
                parent_id: parent,
                start,
                end,
                samples: Vec::new(),
                label,
            });
        }
        windows
            .last_mut()
            .expect("pushed above")
            .samples
            .push(sample);
    }
    for w in &windows {
        if end_of(w) != Some(w.end) {
            return Err(DataError::BadWindow {
                start: w.start,
                end: w.end,
                len: w.len(),
            });
        }
    }
    Ok((features, windows))
}

fn end_of(w: &TimeSeriesWindow) -> Option<usize> {
    (w.start + w.len()).checked_sub(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn series(values: Vec<Vec<f64>>) -> MultivariateTimeSeries {
        let p = values[0].len();
        MultivariateTimeSeries::new("t", 10.0, (0..p).map(|i| format!("f{i}")).collect(), values)
            .unwrap()
    }

    #[test]
    fn load_csv_reads_requested_columns() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "time,x_acc,y_acc,z_acc").unwrap();
        for i in 0..10000 {
            writeln!(f, "{i},{},{},{}", i as f64 * 0.5, -1.0, 2.5).unwrap();
        }
        f.flush().unwrap();
        let ts = load_csv(f.path(), &["x_acc", "y_acc", "z_acc"], 10.0).unwrap();
        assert_eq!(ts.dim(), 3);
        assert_eq!(ts.len(), 10000);
        // 1000 s, about 16 minutes
        assert!((ts.duration_s() / 60.0 - 16.67).abs() < 0.01);
        assert_eq!(ts.values()[3], vec![1.5, -1.0, 2.5]);
    }

    #[test]
    fn load_csv_single_row_and_errors() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "a,b\n1,2").unwrap();
        f.flush().unwrap();
        assert_eq!(load_csv(f.path(), &["a"], 10.0).unwrap().len(), 1);
        match load_csv(f.path(), &["x_acc"], 10.0) {
            Err(DataError::MissingColumn(c)) => assert_eq!(c, "x_acc"),
            other => panic!("unexpected {other:?}"),
        }

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, "a,b\n1,2\n3,oops").unwrap();
        g.flush().unwrap();
        match load_csv(g.path(), &["a", "b"], 10.0) {
            Err(DataError::NonNumericCell { row, column, .. }) => {
                assert_eq!(row, 1);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }

        let mut h = tempfile::NamedTempFile::new().unwrap();
        writeln!(h, "a,b").unwrap();
        h.flush().unwrap();
        assert!(matches!(
            load_csv(h.path(), &["a"], 10.0),
            Err(DataError::EmptyFile)
        ));
    }

    #[test]
    fn minmax_examples() {
        let ts = series(vec![vec![2.0, 7.0], vec![4.0, 7.0], vec![6.0, 7.0]]);
        let n = normalize_minmax(&ts).unwrap();
        assert_eq!(n.values()[1][0], 0.5);
        assert!(n.values().iter().all(|v| v[1] == 0.0));
    }

    #[test]
    fn minmax_random_series_spans_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let values: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..3).map(|_| rng.random_range(-50.0..50.0)).collect())
            .collect();
        let n = normalize_minmax(&series(values)).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = n.values().iter().map(|v| v[j]).collect();
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(lo, 0.0);
            assert_eq!(hi, 1.0);
        }
    }

    #[test]
    fn synth_is_deterministic_and_labeled() {
        let spec = SynthSpec {
            n_normal: 20,
            n_velocity: 20,
            n_weight: 20,
            ..SynthSpec::default()
        };
        let a = synth_generate(&spec).unwrap();
        let b = synth_generate(&spec).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.1.len(), 60);
        let other = synth_generate(&SynthSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.1[0].samples, other.1[0].samples);
    }

    #[test]
    fn velocity_fault_has_lower_amplitude() {
        let spec = SynthSpec {
            velocity_amplitude: 0.5,
            ..SynthSpec::default()
        };
        let (_, windows) = synth_generate(&spec).unwrap();
        let mean_abs = |pred: &dyn Fn(&WindowLabel) -> bool| {
            let (sum, n) = windows
                .iter()
                .filter(|w| pred(&w.label))
                .flat_map(|w| w.samples.iter().flatten())
                .fold((0.0, 0usize), |(s, n), x| (s + x.abs(), n + 1));
            sum / n as f64
        };
        let fault = mean_abs(&|l| l.fault_name() == Some(VELOCITY_FAULT));
        let normal = mean_abs(&|l| l.is_normal());
        assert!(fault < normal, "{fault} vs {normal}");
    }

    #[test]
    fn synth_rejects_zero_cycles() {
        let spec = SynthSpec {
            n_weight: 0,
            ..SynthSpec::default()
        };
        assert!(matches!(
            synth_generate(&spec),
            Err(DataError::InvalidSpec(_))
        ));
    }

    #[test]
    fn holdout_sizes_and_determinism() {
        let items: Vec<usize> = (0..80).collect();
        let (tr, te) = split_holdout(&items, 0.75, 3).unwrap();
        assert_eq!((tr.len(), te.len()), (60, 20));
        let (tr48, te48) = split_holdout(&items[..48], 0.75, 3).unwrap();
        assert_eq!((tr48.len(), te48.len()), (36, 12));
        assert_eq!(split_holdout(&items, 0.75, 3).unwrap().0, tr);
        let mut all: Vec<usize> = tr.iter().chain(te.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, items);
        assert!(matches!(
            split_holdout::<usize>(&[], 0.75, 0),
            Err(DataError::EmptyInput)
        ));
    }

    #[test]
    fn windows_are_exact_slices() {
        let (ts, windows) = synth_generate(&SynthSpec::default()).unwrap();
        for w in windows.iter().take(10) {
            assert_eq!(w.len(), w.end - w.start + 1);
            assert_eq!(&w.samples[..], &ts.values()[w.start..=w.end]);
        }
        let again = reslice(&ts, &windows).unwrap();
        assert_eq!(again, windows);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn minmax_idempotent(values in prop::collection::vec(
                prop::collection::vec(-1e3f64..1e3, 2), 2..40)) {
                let once = normalize_minmax(&series(values)).unwrap();
                let twice = normalize_minmax(&once).unwrap();
                for (a, b) in once.values().iter().flatten().zip(twice.values().iter().flatten()) {
                    prop_assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn windows_csv_round_trip() {
        let (_, windows) = synth_generate(&SynthSpec {
            n_normal: 2,
            n_velocity: 1,
            n_weight: 1,
            ..SynthSpec::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_windows_csv(&mut buf, &windows, &[]).unwrap();
        let (features, back) = read_windows_csv(buf.as_slice()).unwrap();
        assert_eq!(features, vec!["f0", "f1", "f2"]);
        assert_eq!(back, windows);
    }

    #[test]
    fn windows_csv_edge_cases() {
        assert!(read_windows_csv(&b""[..]).unwrap().1.is_empty());
        let header = "parent,start,end,label,t,x\n";
        assert!(read_windows_csv(header.as_bytes()).unwrap().1.is_empty());
        let short = format!("{header}s,0,2,normal,0,1.0\ns,0,2,normal,1,1.0\n");
        assert!(matches!(
            read_windows_csv(short.as_bytes()),
            Err(DataError::BadWindow {
                start: 0,
                end: 2,
                len: 2
            })
        ));
        assert!(matches!(
            read_windows_csv(&b"parent,begin\n"[..]),
            Err(DataError::MissingColumn(c)) if c == "start"
        ));
    }
}
