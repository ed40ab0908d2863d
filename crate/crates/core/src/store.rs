//! On-disk fault dictionary: a `manifest.json` plus one directory per fault
//! holding its net, histograms, centroids and simulation pool.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformance::SearchLimits;
use crate::data::{self, DataError, TimeSeriesWindow, WindowLabel};
use crate::diagnosis::{FaultDictionaryEntry, Provenance};
use crate::eventlog::Centroids;
use crate::petri::{self, NetJson, PetriError, PetriNet, Soundness};
use crate::stochastic::{self, DurationHistogram, SimulatedWindow, StochasticError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: invalid manifest field `{field}`: {why}")]
    Manifest {
        path: PathBuf,
        field: String,
        why: String,
    },
    #[error("{path}: {source}")]
    Petri { path: PathBuf, source: PetriError },
    #[error("{path}: {source}")]
    Stochastic {
        path: PathBuf,
        source: StochasticError,
    },
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: DataError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryManifest {
    pub format: u32,
    pub faults: Vec<ManifestFault>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFault {
    pub label: String,
    /// Directory relative to the manifest.
    pub dir: String,
    pub soundness: Soundness,
    pub s_arc: f64,
    pub places: usize,
    pub transitions: usize,
    pub sims: usize,
    pub provenance: Provenance,
}

/// Directory name for a fault label: ASCII alphanumerics, `-` and `_` are
/// kept, anything else becomes `_`.
pub fn fault_dir_name(label: &str) -> String {
    let name: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if name.is_empty() {
        "_".into()
    } else {
        name
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, StoreError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn open(path: &Path) -> Result<BufReader<File>, StoreError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    serde_json::to_writer_pretty(create(path)?, value).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    serde_json::from_reader(open(path)?).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_windows(
    path: &Path,
    windows: &[TimeSeriesWindow],
    features: &[String],
) -> Result<(), StoreError> {
    data::write_windows_csv(create(path)?, windows, features).map_err(|source| StoreError::Data {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_windows(path: &Path) -> Result<(Vec<String>, Vec<TimeSeriesWindow>), StoreError> {
    data::read_windows_csv(open(path)?).map_err(|source| StoreError::Data {
        path: path.to_path_buf(),
        source,
    })
}

fn write_hists(path: &Path, hists: &BTreeMap<usize, DurationHistogram>) -> Result<(), StoreError> {
    stochastic::write_histograms_csv(hists, create(path)?).map_err(|source| {
        StoreError::Stochastic {
            path: path.to_path_buf(),
            source,
        }
    })
}

fn read_hists(path: &Path) -> Result<BTreeMap<usize, DurationHistogram>, StoreError> {
    stochastic::read_histograms_csv(open(path)?).map_err(|source| StoreError::Stochastic {
        path: path.to_path_buf(),
        source,
    })
}

/// A simulated window in the real-window CSV schema.
fn sim_as_window(label: &str, sim: &SimulatedWindow) -> TimeSeriesWindow {
    TimeSeriesWindow {
        parent_id: "sim".into(),
        start: 0,
        end: sim.len().saturating_sub(1),
        samples: sim.samples.clone(),
        label: WindowLabel::fault(label),
    }
}

/// Rebuilds `(state, duration)` pairs from runs of equal nearest centroids.
/// Durations are quantized to the sampling period.
fn sim_from_samples(
    samples: Vec<Vec<f64>>,
    centroids: &Centroids,
    rate_hz: f64,
) -> SimulatedWindow {
    let mut pairs: Vec<(usize, f64)> = Vec::new();
    for s in &samples {
        let (state, _) = centroids.nearest(s);
        match pairs.last_mut() {
            Some((last, d)) if *last == state => *d += 1.0 / rate_hz,
            _ => pairs.push((state, 1.0 / rate_hz)),
        }
    }
    SimulatedWindow { pairs, samples }
}

/// Writes `dict` under `dir`, which is created if missing. Existing files
/// with the same names are overwritten.
pub fn save_dictionary(
    dir: &Path,
    dict: &[FaultDictionaryEntry],
) -> Result<DictionaryManifest, StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut faults = Vec::with_capacity(dict.len());
    for e in dict {
        let name = fault_dir_name(&e.fault_label);
        let fdir = dir.join(&name);
        let sims = fdir.join("sims");
        fs::create_dir_all(&sims).map_err(io_err(&sims))?;
        write_json(&fdir.join("net.json"), &e.spn.net.to_json())?;
        let dot = fdir.join("net.dot");
        fs::write(&dot, petri::export_dot(&e.spn.net)).map_err(io_err(&dot))?;
        write_hists(&fdir.join("hist.csv"), &e.histograms)?;
        write_hists(&fdir.join("tail.csv"), &e.spn.tail)?;
        write_json(&fdir.join("centroids.json"), &e.centroids)?;
        for (i, sim) in e.sim_pool.iter().enumerate() {
            write_windows(
                &sims.join(format!("sim_{i:04}.csv")),
                &[sim_as_window(&e.fault_label, sim)],
                &[],
            )?;
        }
        faults.push(ManifestFault {
            label: e.fault_label.clone(),
            dir: name,
            soundness: e.soundness.clone(),
            s_arc: e.s_arc,
            places: e.spn.net.n_places(),
            transitions: e.spn.net.n_transitions(),
            sims: e.sim_pool.len(),
            provenance: e.provenance.clone(),
        });
    }
    let manifest = DictionaryManifest {
        format: FORMAT_VERSION,
        faults,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn check_manifest(path: &Path, m: &DictionaryManifest) -> Result<(), StoreError> {
    let bad = |field: String, why: String| StoreError::Manifest {
        path: path.to_path_buf(),
        field,
        why,
    };
    if m.format != FORMAT_VERSION {
        return Err(bad(
            "format".into(),
            format!("expected {FORMAT_VERSION}, found {}", m.format),
        ));
    }
    if m.faults.is_empty() {
        return Err(bad("faults".into(), "no faults listed".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for (i, f) in m.faults.iter().enumerate() {
        if !seen.insert(f.label.as_str()) {
            return Err(bad(
                format!("faults[{i}].label"),
                format!("duplicate label `{}`", f.label),
            ));
        }
        let dir = Path::new(&f.dir);
        if f.dir.is_empty() || dir.is_absolute() || dir.components().any(|c| c.as_os_str() == "..")
        {
            return Err(bad(
                format!("faults[{i}].dir"),
                format!("`{}` is not a plain subdirectory", f.dir),
            ));
        }
        if f.provenance.k == 0 {
            return Err(bad(
                format!("faults[{i}].provenance.k"),
                "must be positive".into(),
            ));
        }
        if !(f.provenance.rate_hz > 0.0) {
            return Err(bad(
                format!("faults[{i}].provenance.rate_hz"),
                "must be positive".into(),
            ));
        }
    }
    Ok(())
}

/// Reads a dictionary written by [`save_dictionary`]. `limits` governs later
/// alignments; they are not part of the stored artifact.
pub fn load_dictionary(
    dir: &Path,
    limits: SearchLimits,
) -> Result<Vec<FaultDictionaryEntry>, StoreError> {
    let mpath = dir.join("manifest.json");
    let manifest: DictionaryManifest = read_json(&mpath)?;
    check_manifest(&mpath, &manifest)?;
    let mut out = Vec::with_capacity(manifest.faults.len());
    for (i, f) in manifest.faults.iter().enumerate() {
        let fdir = dir.join(&f.dir);
        let npath = fdir.join("net.json");
        let json: NetJson = read_json(&npath)?;
        let net = PetriNet::from_json(&json).map_err(|source| StoreError::Petri {
            path: npath.clone(),
            source,
        })?;
        if net.n_places() != f.places || net.n_transitions() != f.transitions {
            return Err(StoreError::Manifest {
                path: mpath.clone(),
                field: format!("faults[{i}].places"),
                why: format!(
                    "net.json has {} places and {} transitions, manifest says {} and {}",
                    net.n_places(),
                    net.n_transitions(),
                    f.places,
                    f.transitions
                ),
            });
        }
        let centroids: Centroids = read_json(&fdir.join("centroids.json"))?;
        let hpath = fdir.join("hist.csv");
        let histograms = read_hists(&hpath)?;
        let tail = read_hists(&fdir.join("tail.csv"))?;
        let spn = stochastic::enhance(&net, &histograms)
            .map_err(|source| StoreError::Stochastic {
                path: hpath,
                source,
            })?
            .with_tail(tail);
        let mut sim_pool = Vec::with_capacity(f.sims);
        for j in 0..f.sims {
            let spath = fdir.join("sims").join(format!("sim_{j:04}.csv"));
            let (_, windows) = read_windows(&spath)?;
            let samples = windows.into_iter().flat_map(|w| w.samples).collect();
            sim_pool.push(sim_from_samples(samples, &centroids, f.provenance.rate_hz));
        }
        out.push(FaultDictionaryEntry::new(
            f.label.clone(),
            centroids,
            histograms,
            spn,
            sim_pool,
            f.soundness.clone(),
            f.s_arc,
            f.provenance.clone(),
            limits,
        ));
    }
    Ok(out)
}
