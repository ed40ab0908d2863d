//! Dataset directory: windows CSVs per split plus a manifest.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use spnfault::data::{self, TimeSeriesWindow, WindowLabel};
use spnfault::diagnosis::{synthetic_benchmark, Benchmark};
use spnfault::store;

use crate::config::{CsvSource, DataSource, RunConfig};

pub const TRAIN: &str = "train.csv";
pub const TEST: &str = "test.csv";
pub const NORMAL_TRAIN: &str = "normal_train.csv";
pub const NORMAL_TEST: &str = "normal_test.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: DataSource,
    pub seed: u64,
    pub train_fraction: f64,
    pub rate_hz: f64,
    pub features: Vec<String>,
    pub labels: Vec<String>,
    pub train: BTreeMap<String, usize>,
    pub test: BTreeMap<String, usize>,
    pub normal_train: usize,
    pub normal_test: usize,
}

#[derive(Debug, Deserialize)]
struct WindowRow {
    start: usize,
    end: usize,
    label: String,
}

fn from_csv(src: &CsvSource, cfg: &RunConfig) -> Result<(Vec<String>, Benchmark)> {
    let columns: Vec<&str> = src.columns.iter().map(String::as_str).collect();
    let ts = data::load_csv(&src.series, &columns, src.rate_hz)
        .with_context(|| format!("loading {}", src.series.display()))?;
    let ts = data::normalize_minmax(&ts)?;
    let mut reader = csv::Reader::from_path(&src.windows)
        .with_context(|| format!("opening {}", src.windows.display()))?;
    let mut windows = Vec::new();
    for row in reader.deserialize::<WindowRow>() {
        let row = row.with_context(|| format!("reading {}", src.windows.display()))?;
        windows.push(ts.window(row.start, row.end, WindowLabel::parse(row.label.trim()))?);
    }
    let bench = Benchmark::split(&windows, cfg.data.train_fraction, cfg.seed)?;
    Ok((src.columns.clone(), bench))
}

pub fn generate(cfg: &RunConfig) -> Result<(Vec<String>, Benchmark)> {
    match (cfg.data.source, &cfg.data.csv) {
        (DataSource::Synth, _) => {
            let spec = cfg.data.synth.clone();
            let bench = synthetic_benchmark(&spec, cfg.data.train_fraction, cfg.seed)?;
            Ok((vec!["x_acc".into(), "y_acc".into(), "z_acc".into()], bench))
        }
        (DataSource::Csv, Some(src)) => from_csv(src, cfg),
        (DataSource::Csv, None) => bail!("data.source = \"csv\" needs a [data.csv] section"),
    }
}

fn flatten(map: &BTreeMap<String, Vec<TimeSeriesWindow>>) -> Vec<TimeSeriesWindow> {
    map.values().flatten().cloned().collect()
}

fn counts(map: &BTreeMap<String, Vec<TimeSeriesWindow>>) -> BTreeMap<String, usize> {
    map.iter().map(|(k, v)| (k.clone(), v.len())).collect()
}

pub fn write(
    dir: &Path,
    cfg: &RunConfig,
    features: &[String],
    b: &Benchmark,
) -> Result<DatasetManifest> {
    store::write_windows(&dir.join(TRAIN), &flatten(&b.train), features)?;
    store::write_windows(&dir.join(TEST), &flatten(&b.test), features)?;
    store::write_windows(&dir.join(NORMAL_TRAIN), &b.normal_train, features)?;
    store::write_windows(&dir.join(NORMAL_TEST), &b.normal_test, features)?;
    let manifest = DatasetManifest {
        source: cfg.data.source,
        seed: cfg.seed,
        train_fraction: cfg.data.train_fraction,
        rate_hz: cfg.rate_hz(),
        features: features.to_vec(),
        labels: b.train.keys().cloned().collect(),
        train: counts(&b.train),
        test: counts(&b.test),
        normal_train: b.normal_train.len(),
        normal_test: b.normal_test.len(),
    };
    store::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn group(windows: Vec<TimeSeriesWindow>) -> BTreeMap<String, Vec<TimeSeriesWindow>> {
    let mut map: BTreeMap<String, Vec<TimeSeriesWindow>> = BTreeMap::new();
    for w in windows {
        map.entry(w.label.to_string()).or_default().push(w);
    }
    map
}

pub fn load(dir: &Path) -> Result<(DatasetManifest, Benchmark)> {
    let manifest: DatasetManifest = store::read_json(&dir.join("manifest.json"))?;
    let read = |name: &str| -> Result<Vec<TimeSeriesWindow>> {
        Ok(store::read_windows(&dir.join(name))?.1)
    };
    let bench = Benchmark {
        train: group(read(TRAIN)?),
        test: group(read(TEST)?),
        normal_train: read(NORMAL_TRAIN)?,
        normal_test: read(NORMAL_TEST)?,
    };
    if counts(&bench.train) != manifest.train || counts(&bench.test) != manifest.test {
        bail!(
            "{}: window counts do not match manifest.json",
            dir.display()
        );
    }
    Ok((manifest, bench))
}
