//! TOML run configuration. Every field has a default, so an empty file is a
//! valid config.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use spnfault::conformance::SearchLimits;
use spnfault::data::SynthSpec;
use spnfault::diagnosis::{AblationParams, DictionaryConfig};
use spnfault::discovery::Miner;
use spnfault::stochastic::{RacePolicy, SimParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub data: DataConfig,
    pub dictionary: DictionarySection,
    pub search: SearchSection,
    pub sweep: SweepSection,
    pub ablation: AblationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            seed: 1,
            data: DataConfig::default(),
            dictionary: DictionarySection::default(),
            search: SearchSection::default(),
            sweep: SweepSection::default(),
            ablation: AblationSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synth,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Per-label share of windows used for training.
    pub train_fraction: f64,
    pub synth: SynthSpec,
    pub csv: Option<CsvSource>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synth,
            train_fraction: 0.6,
            synth: SynthSpec::default(),
            csv: None,
        }
    }
}

/// A recorded series plus a list of labeled windows over it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub series: PathBuf,
    pub columns: Vec<String>,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    /// CSV with columns `start,end,label`; timesteps are row indices of
    /// `series`, inclusive on both ends.
    pub windows: PathBuf,
}

fn default_rate() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionarySection {
    pub k: usize,
    pub miner: String,
    /// IMf filter threshold, or HM dependency threshold.
    pub noise_threshold: f64,
    pub and_threshold: f64,
    pub bins: usize,
    pub n_sims: usize,
    pub max_events: usize,
    pub race_policy: RacePolicy,
    pub kmeans_restarts: usize,
}

impl Default for DictionarySection {
    fn default() -> Self {
        let d = DictionaryConfig::default();
        Self {
            k: d.k,
            miner: "imf".into(),
            noise_threshold: 0.75,
            and_threshold: 0.65,
            bins: d.bins,
            n_sims: d.sim.n,
            max_events: d.sim.max_events,
            race_policy: d.sim.policy,
            kmeans_restarts: d.kmeans_restarts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub node_budget: usize,
    /// Wall-clock limit per alignment; 0 disables it.
    pub time_limit_s: f64,
    pub marking_budget: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        let l = SearchLimits::default();
        Self {
            node_budget: l.node_budget,
            time_limit_s: l.time_limit.map_or(0.0, |d| d.as_secs_f64()),
            marking_budget: l.marking_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub ks: Vec<usize>,
    pub miners: Vec<String>,
    pub repetitions: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            ks: vec![2, 3, 4, 5, 6],
            miners: vec!["imf".into(), "hm".into()],
            repetitions: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub acc_levels: Vec<f64>,
    /// Training windows per fault at every level.
    pub n_train: usize,
    pub repetitions: usize,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self {
            acc_levels: vec![1.0, 0.75, 0.5, 0.25],
            n_train: 40,
            repetitions: 3,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dictionary;
        if d.k < 2 {
            bail!("dictionary.k must be at least 2, got {}", d.k);
        }
        if !(0.0..=1.0).contains(&d.noise_threshold) {
            bail!(
                "dictionary.noise_threshold must lie in [0, 1], got {}",
                d.noise_threshold
            );
        }
        if !(0.0..=1.0).contains(&d.and_threshold) {
            bail!(
                "dictionary.and_threshold must lie in [0, 1], got {}",
                d.and_threshold
            );
        }
        self.miner(&d.miner)?;
        for m in &self.sweep.miners {
            self.miner(m)?;
        }
        if let Some(k) = self.sweep.ks.iter().find(|&&k| k < 2) {
            bail!("sweep.ks must all be at least 2, got {k}");
        }
        if d.bins == 0 || d.n_sims == 0 || d.max_events == 0 {
            bail!("dictionary.bins, n_sims and max_events must be positive");
        }
        let tf = self.data.train_fraction;
        if !(tf > 0.0 && tf < 1.0) {
            bail!("data.train_fraction must lie in (0, 1), got {tf}");
        }
        if let Some(a) = self
            .ablation
            .acc_levels
            .iter()
            .find(|a| !(**a > 0.0 && **a <= 1.0))
        {
            bail!("ablation.acc_levels must lie in (0, 1], got {a}");
        }
        if self.data.source == DataSource::Csv && self.data.csv.is_none() {
            bail!("data.source = \"csv\" needs a [data.csv] section");
        }
        if self.search.time_limit_s < 0.0 || self.search.time_limit_s.is_nan() {
            bail!("search.time_limit_s must be non-negative");
        }
        Ok(())
    }

    /// Parses a miner name with this config's thresholds.
    pub fn miner(&self, name: &str) -> Result<Miner> {
        Miner::from_name(
            name,
            self.dictionary.noise_threshold,
            self.dictionary.and_threshold,
        )
        .with_context(|| format!("miner `{name}`"))
    }

    pub fn limits(&self) -> SearchLimits {
        SearchLimits {
            node_budget: self.search.node_budget,
            time_limit: (self.search.time_limit_s > 0.0)
                .then(|| Duration::from_secs_f64(self.search.time_limit_s)),
            marking_budget: self.search.marking_budget,
        }
    }

    pub fn dictionary_config(&self, k: usize, miner: Miner) -> DictionaryConfig {
        let d = &self.dictionary;
        DictionaryConfig {
            k,
            miner,
            bins: d.bins,
            rate_hz: self.rate_hz(),
            kmeans_seed: self.seed,
            kmeans_restarts: d.kmeans_restarts,
            sim: SimParams {
                n: d.n_sims,
                seed: self.seed,
                max_events: d.max_events,
                policy: d.race_policy,
            },
            limits: self.limits(),
        }
    }

    pub fn rate_hz(&self) -> f64 {
        match (&self.data.source, &self.data.csv) {
            (DataSource::Csv, Some(c)) => c.rate_hz,
            _ => self.data.synth.sampling_rate_hz,
        }
    }

    pub fn ablation_params(&self) -> AblationParams {
        AblationParams {
            n_train: self.ablation.n_train,
            repetitions: self.ablation.repetitions,
            seed: self.seed,
        }
    }
}
