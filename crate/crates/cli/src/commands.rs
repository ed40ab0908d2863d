use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use spnfault::diagnosis::{
    self, build_dictionary, diagnose_all, summarize, DiagnosisError, DiagnosisResult,
    EvaluationReport, FaultDictionaryEntry,
};
use spnfault::discovery::Miner;
use spnfault::metrics;
use spnfault::petri::{export_dot, NetJson, PetriNet};
use spnfault::store;

use crate::config::RunConfig;
use crate::dataset;

/// Creates `dir` (and nothing above it) if missing.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        return Ok(());
    }
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        if !parent.is_dir() {
            bail!(
                "cannot create {}: parent directory {} does not exist",
                dir.display(),
                parent.display()
            );
        }
    }
    fs::create_dir(dir).with_context(|| format!("creating {}", dir.display()))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    ensure_dir(&cfg.output_dir)?;
    Ok(cfg.output_dir.clone())
}

pub fn synth(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = out_dir(cfg)?.join("dataset");
    ensure_dir(&dir)?;
    let (features, bench) = dataset::generate(cfg)?;
    let m = dataset::write(&dir, cfg, &features, &bench)?;
    for label in &m.labels {
        println!("{label}: {} train, {} test", m.train[label], m.test[label]);
    }
    println!("normal: {} train, {} test", m.normal_train, m.normal_test);
    println!("dataset written to {}", dir.display());
    Ok(dir)
}

fn print_entry(e: &FaultDictionaryEntry) {
    let nodes = e.spn.net.n_places() + e.spn.net.n_transitions();
    println!(
        "{}: {}, S_arc {:.3}, |P|+|Tr| {}, {} simulations",
        e.fault_label,
        e.soundness,
        e.s_arc,
        nodes,
        e.sim_pool.len()
    );
    if e.soundness.is_unsound() {
        eprintln!(
            "warning: the net of `{}` is unsound; it is persisted but windows cannot be aligned against it",
            e.fault_label
        );
    }
}

pub fn build(
    cfg: &RunConfig,
    dataset_dir: Option<PathBuf>,
    dict_dir: Option<PathBuf>,
) -> Result<PathBuf> {
    let out = out_dir(cfg)?;
    let dataset_dir = dataset_dir.unwrap_or_else(|| out.join("dataset"));
    let dict_dir = dict_dir.unwrap_or_else(|| out.join("dictionary"));
    let (_, bench) = dataset::load(&dataset_dir)?;
    let miner = cfg.miner(&cfg.dictionary.miner)?;
    let dcfg = cfg.dictionary_config(cfg.dictionary.k, miner);
    let dict = build_dictionary(&bench.train, &dcfg)?;
    ensure_dir(&dict_dir)?;
    store::save_dictionary(&dict_dir, &dict)?;
    for e in &dict {
        print_entry(e);
    }
    println!("dictionary written to {}", dict_dir.display());
    Ok(dict_dir)
}

#[derive(Debug, Serialize)]
struct WindowReport<'a> {
    window: &'a str,
    truth: &'a str,
    predicted: Option<&'a str>,
    error: Option<String>,
    result: Option<&'a DiagnosisResult>,
}

fn write_report_csv(path: &Path, report: Option<&EvaluationReport>) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["fault", "tp", "fp", "fn", "f1", "mean_cc_time_s"])?;
    for m in report.map_or(&[][..], |r| &r.per_fault[..]) {
        w.write_record([
            m.fault.clone(),
            m.tp.to_string(),
            m.fp.to_string(),
            m.fn_.to_string(),
            format!("{:.6}", m.f1),
            format!("{:.6}", m.mean_cc_time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn diagnose(
    cfg: &RunConfig,
    dict_dir: Option<PathBuf>,
    windows: Option<PathBuf>,
) -> Result<PathBuf> {
    let out = out_dir(cfg)?;
    let dict_dir = dict_dir.unwrap_or_else(|| out.join("dictionary"));
    let windows = windows.unwrap_or_else(|| out.join("dataset").join(dataset::TEST));
    let dict = store::load_dictionary(&dict_dir, cfg.limits())?;
    let (_, ws) = store::read_windows(&windows)?;
    let dir = out.join("diagnosis");
    ensure_dir(&dir)?;

    let outcomes = if ws.is_empty() {
        Vec::new()
    } else {
        diagnose_all(&dict, &dataset::group(ws))?
    };
    let report = (!outcomes.is_empty()).then(|| summarize(&dict, &outcomes));
    write_report_csv(&dir.join("report.csv"), report.as_ref())?;
    let rows: Vec<WindowReport> = outcomes
        .iter()
        .map(|o| WindowReport {
            window: &o.window,
            truth: &o.truth,
            predicted: o.result.as_ref().ok().map(|r| r.fault_label.as_str()),
            error: o.result.as_ref().err().map(ToString::to_string),
            result: o.result.as_ref().ok(),
        })
        .collect();
    store::write_json(&dir.join("results.json"), &rows)?;
    match &report {
        Some(r) => println!(
            "{} windows, macro F1 {:.4}, {} unclassified",
            outcomes.len(),
            r.macro_f1,
            r.unclassified
        ),
        None => println!("no windows to diagnose"),
    }
    println!("report written to {}", dir.display());
    Ok(dir)
}

/// One repetition of a sweep cell.
struct CellRun {
    s_arc: f64,
    nodes: usize,
    eval: Result<EvaluationReport, String>,
}

fn run_cell(
    cfg: &RunConfig,
    bench: &diagnosis::Benchmark,
    k: usize,
    miner: Miner,
    rep: usize,
) -> Result<Result<CellRun, String>> {
    let mut dcfg = cfg.dictionary_config(k, miner);
    dcfg.kmeans_seed = dcfg.kmeans_seed.wrapping_add(rep as u64);
    dcfg.sim.seed = dcfg.sim.seed.wrapping_add(rep as u64);
    let coded = |e: DiagnosisError| -> Result<String> {
        match e.cell_code() {
            Some(code) => Ok(code.to_string()),
            None => Err(e.into()),
        }
    };
    let dict = match build_dictionary(&bench.train, &dcfg) {
        Ok(d) => d,
        Err(e) => return Ok(Err(coded(e)?)),
    };
    let s_arc = metrics::mean(&dict.iter().map(|e| e.s_arc).collect::<Vec<_>>());
    let nodes = dict
        .iter()
        .map(|e| e.spn.net.n_places() + e.spn.net.n_transitions())
        .max()
        .unwrap_or(0);
    let eval = match diagnosis::evaluate(&dict, &bench.test) {
        Ok(r) => Ok(r),
        Err(e) => Err(coded(e)?),
    };
    Ok(Ok(CellRun { s_arc, nodes, eval }))
}

fn mean_std(xs: &[f64]) -> [String; 2] {
    [
        format!("{:.6}", metrics::mean(xs)),
        format!("{:.6}", metrics::std_dev(xs)),
    ]
}

pub const SWEEP_HEADER: [&str; 15] = [
    "k",
    "miner",
    "nodes_max",
    "s_arc_mean",
    "s_arc_std",
    "r2_mean",
    "r2_std",
    "rmse_mean",
    "rmse_std",
    "f1_mean",
    "f1_std",
    "cc_time_mean_s",
    "cc_time_std_s",
    "cc_time_median_s",
    "note",
];

fn sweep_row(k: usize, miner: &str, runs: &[Result<CellRun, String>]) -> Vec<String> {
    let mut row = vec![k.to_string(), miner.to_string()];
    let first_code = runs.iter().find_map(|r| match r {
        Err(code) => Some(code.clone()),
        Ok(c) => c.eval.as_ref().err().cloned(),
    });
    let built: Vec<&CellRun> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    if built.is_empty() {
        let code = first_code.unwrap_or_default();
        row.extend(std::iter::repeat_n(code.clone(), SWEEP_HEADER.len() - 3));
        row.push(code);
        return row;
    }
    row.push(built.iter().map(|c| c.nodes).max().unwrap_or(0).to_string());
    row.extend(mean_std(&built.iter().map(|c| c.s_arc).collect::<Vec<_>>()));
    match &first_code {
        Some(code) => row.extend(std::iter::repeat_n(code.clone(), 9)),
        None => {
            let evals: Vec<&EvaluationReport> =
                built.iter().filter_map(|c| c.eval.as_ref().ok()).collect();
            let own = |f: fn(&diagnosis::FaultMetrics) -> f64| -> Vec<f64> {
                evals
                    .iter()
                    .map(|r| metrics::mean(&r.per_fault.iter().map(f).collect::<Vec<_>>()))
                    .collect()
            };
            row.extend(mean_std(&own(|m| m.mean_best_r2)));
            row.extend(mean_std(&own(|m| m.mean_best_rmse)));
            row.extend(mean_std(
                &evals.iter().map(|r| r.macro_f1).collect::<Vec<_>>(),
            ));
            row.extend(mean_std(
                &evals.iter().map(|r| r.mean_cc_time_s).collect::<Vec<_>>(),
            ));
            let medians: Vec<f64> = evals.iter().map(|r| r.median_cc_time_s).collect();
            row.push(format!("{:.6}", metrics::median(&medians)));
        }
    }
    row.push(first_code.unwrap_or_default());
    row
}

pub fn sweep(cfg: &RunConfig, dataset_dir: Option<PathBuf>) -> Result<PathBuf> {
    let out = out_dir(cfg)?;
    let dataset_dir = dataset_dir.unwrap_or_else(|| out.join("dataset"));
    let (_, bench) = dataset::load(&dataset_dir)?;
    let path = out.join("sweep.csv");
    let mut w =
        csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(SWEEP_HEADER)?;
    for &k in &cfg.sweep.ks {
        for name in &cfg.sweep.miners {
            let miner = cfg.miner(name)?;
            let runs = (0..cfg.sweep.repetitions.max(1))
                .map(|rep| run_cell(cfg, &bench, k, miner, rep))
                .collect::<Result<Vec<_>>>()?;
            let row = sweep_row(k, miner.name(), &runs);
            println!("{}", row.join(","));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    println!("sweep table written to {}", path.display());
    Ok(path)
}

pub fn ablate(cfg: &RunConfig, dataset_dir: Option<PathBuf>) -> Result<PathBuf> {
    let out = out_dir(cfg)?;
    let dataset_dir = dataset_dir.unwrap_or_else(|| out.join("dataset"));
    let (_, bench) = dataset::load(&dataset_dir)?;
    if bench.normal_train.is_empty() {
        bail!(
            "{}: the ablation needs normal training windows",
            dataset_dir.display()
        );
    }
    let miner = cfg.miner(&cfg.dictionary.miner)?;
    let dcfg = cfg.dictionary_config(cfg.dictionary.k, miner);
    let rows = diagnosis::ablate_accuracy(
        &bench.pools(),
        &bench.test,
        &cfg.ablation.acc_levels,
        &dcfg,
        &cfg.ablation_params(),
    )?;
    let path = out.join("ablation.csv");
    let mut w =
        csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["acc", "f1_mean", "f1_std", "f1_runs"])?;
    for r in &rows {
        let runs: Vec<String> = r.f1_runs.iter().map(|f| format!("{f:.6}")).collect();
        let rec = [
            format!("{}", r.acc),
            format!("{:.6}", r.mean_f1),
            format!("{:.6}", r.std_f1),
            runs.join(";"),
        ];
        println!("{}", rec.join(","));
        w.write_record(&rec)?;
    }
    w.flush()?;
    println!("ablation table written to {}", path.display());
    Ok(path)
}

/// DOT for one `net.json`, or for every fault of a dictionary.
pub fn export_dot_files(
    cfg: &RunConfig,
    dict_dir: Option<PathBuf>,
    net: Option<PathBuf>,
) -> Result<Vec<PathBuf>> {
    let out = out_dir(cfg)?;
    let dir = out.join("dot");
    ensure_dir(&dir)?;
    let mut nets: BTreeMap<String, PathBuf> = BTreeMap::new();
    match net {
        Some(path) => {
            let stem = path
                .file_stem()
                .map_or("net".into(), |s| s.to_string_lossy().into_owned());
            nets.insert(stem, path);
        }
        None => {
            let dict_dir = dict_dir.unwrap_or_else(|| out.join("dictionary"));
            let manifest: store::DictionaryManifest =
                store::read_json(&dict_dir.join("manifest.json"))?;
            for f in manifest.faults {
                nets.insert(f.dir.clone(), dict_dir.join(&f.dir).join("net.json"));
            }
        }
    }
    let mut written = Vec::new();
    for (name, path) in nets {
        let json: NetJson = store::read_json(&path)?;
        let net = PetriNet::from_json(&json).with_context(|| format!("{}", path.display()))?;
        let target = dir.join(format!("{name}.dot"));
        let mut f =
            fs::File::create(&target).with_context(|| format!("creating {}", target.display()))?;
        f.write_all(export_dot(&net).as_bytes())?;
        println!("{}", target.display());
        written.push(target);
    }
    Ok(written)
}
