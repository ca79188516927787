use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use colf::continual::{run_continual, RunResult};
use colf::eval::aggregate;
use colf::stream::{drift_probe, generate_stream, kl_item_dist, new_item_fraction, read_stream, ProbeConfig};
use colf::{DriftConfig, Stream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{load_experiment, ExperimentConfig, ReportOptions, StreamSource};
use crate::files::{cell_stem, csv_bytes, memory_csv, run_csv, write_atomic, write_json};
use crate::Failure;

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "colf-results";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Pending,
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellRecord {
    pub strategy: String,
    pub seed: u64,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub run_csv: String,
    pub memory_csv: String,
    pub result_json: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub name: String,
    /// False while running and when any cell failed.
    pub complete: bool,
    pub config: ExperimentConfig,
    pub cells: Vec<CellRecord>,
    /// Every file this run wrote, relative to the output directory.
    pub files: Vec<String>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).with_context(|| format!("no results manifest at {}", path.display()))?;
        let m: Manifest = serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(anyhow!("{} is not a results manifest", path.display()));
        }
        Ok(m)
    }
}

/// Files `report` writes under `report/`.
pub const REPORT_FILES: [&str; 6] = [
    "summary.txt",
    "summary.csv",
    "summary.json",
    "fig_daily_auc.csv",
    "fig_item_churn.csv",
    "fig_probe_auc.csv",
];

pub const DIAG_CHURN: &str = "diagnostics/item_churn.csv";
pub const DIAG_PROBE: &str = "diagnostics/probe_auc.csv";

fn rel(path: &str) -> String {
    path.replace('\\', "/")
}

fn load_stream(source: &StreamSource, seed: u64) -> Result<Stream> {
    match source {
        StreamSource::Generated(cfg) => {
            let cfg = DriftConfig { seed, ..cfg.clone() };
            Ok(generate_stream(&cfg)?.stream)
        }
        StreamSource::File(path) => read_stream(path).with_context(|| format!("cannot read stream {}", path.display())),
    }
}

/// Per-gap means over every base day: new-item fraction and item KL.
pub fn churn_series(stream: &Stream, max_gap: u32, smoothing: f64) -> Result<Vec<(u32, f64, f64)>> {
    let (Some(first), Some(last)) = (stream.first_day(), stream.last_day()) else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for gap in 1..=max_gap.min(last - first) {
        let mut frac = 0.0;
        let mut kl = 0.0;
        let mut n = 0.0;
        for d in first..=last - gap {
            frac += new_item_fraction(stream, d, d + gap)?;
            kl += kl_item_dist(stream, d, d + gap, smoothing)?;
            n += 1.0;
        }
        out.push((gap, frac / n, kl / n));
    }
    Ok(out)
}

pub fn probe_series(stream: &Stream, max_gap: u32, probe: &ProbeConfig, seed: u64) -> Result<Vec<(u32, f64)>> {
    let (Some(first), Some(last)) = (stream.first_day(), stream.last_day()) else {
        return Ok(Vec::new());
    };
    let tests: Vec<u32> = (first + 1..=last.min(first + max_gap)).collect();
    let probe = ProbeConfig {
        seed,
        ..probe.clone()
    };
    Ok(drift_probe(stream, first, &tests, &probe)?)
}

fn diagnostics(streams: &[(u64, Stream)], opts: &ReportOptions) -> Result<(Vec<u8>, Vec<u8>)> {
    let per_seed: Vec<(u64, Vec<(u32, f64, f64)>, Vec<(u32, f64)>)> = streams
        .par_iter()
        .map(|(seed, s)| {
            Ok((
                *seed,
                churn_series(s, opts.churn_max_gap, opts.kl_smoothing)?,
                probe_series(s, opts.probe_max_gap, &opts.probe, *seed)?,
            ))
        })
        .collect::<Result<_>>()?;
    let churn = csv_bytes(
        &["seed", "gap", "new_item_fraction", "kl"],
        per_seed.iter().flat_map(|(seed, c, _)| {
            c.iter()
                .map(move |(g, f, k)| vec![seed.to_string(), g.to_string(), f.to_string(), k.to_string()])
        }),
    )?;
    let probe = csv_bytes(
        &["seed", "gap", "auc"],
        per_seed.iter().flat_map(|(seed, _, p)| {
            p.iter()
                .map(move |(g, a)| vec![seed.to_string(), g.to_string(), a.to_string()])
        }),
    )?;
    Ok((churn, probe))
}

fn remove_previous(dir: &Path) -> Result<()> {
    let Ok(old) = Manifest::load(dir) else {
        return Ok(());
    };
    let extra = REPORT_FILES.iter().map(|f| format!("report/{f}")).chain([MANIFEST.to_string()]);
    for f in old.files.iter().cloned().chain(extra) {
        let p = dir.join(f);
        if p.starts_with(dir) && p.is_file() {
            std::fs::remove_file(&p).with_context(|| format!("cannot remove {}", p.display()))?;
        }
    }
    Ok(())
}

fn dir_has_content(dir: &Path) -> bool {
    std::fs::read_dir(dir)
        .map(|mut it| it.next().is_some())
        .unwrap_or(false)
}

pub fn cmd_run(config_path: &Path, force: bool, jobs: usize) -> Result<(), Failure> {
    let cfg = load_experiment(config_path).map_err(Failure::Config)?;
    let out = cfg.output_dir.clone();
    if dir_has_content(&out) {
        if !force {
            return Err(Failure::Refused(anyhow!(
                "{} already holds results; pass --force to overwrite",
                out.display()
            )));
        }
        remove_previous(&out).map_err(Failure::Runtime)?;
    }
    run_experiment(&cfg, jobs).map_err(Failure::Runtime)
}

fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> Result<()> {
    let out = &cfg.output_dir;
    let started = Instant::now();
    let mut cells: Vec<CellRecord> = cfg
        .strategies
        .iter()
        .flat_map(|s| {
            cfg.seeds.iter().map(move |&seed| {
                let stem = cell_stem(&s.label(), seed);
                CellRecord {
                    strategy: s.label(),
                    seed,
                    status: CellStatus::Pending,
                    error: None,
                    run_csv: rel(&format!("runs/{stem}.csv")),
                    memory_csv: rel(&format!("memory/{stem}.csv")),
                    result_json: rel(&format!("runs/{stem}.json")),
                }
            })
        })
        .collect();
    let mut manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        name: cfg.name.clone(),
        complete: false,
        config: cfg.clone(),
        cells: cells.clone(),
        files: Vec::new(),
    };
    write_json(&out.join(MANIFEST), &manifest)?;

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let outcome = pool.install(|| -> Result<Vec<(Option<RunResult>, Option<String>)>> {
        let streams: Vec<(u64, Stream)> = match &cfg.stream {
            StreamSource::File(_) => {
                let s = load_stream(&cfg.stream, 0)?;
                cfg.seeds.iter().map(|&seed| (seed, s.clone())).collect()
            }
            StreamSource::Generated(_) => cfg
                .seeds
                .par_iter()
                .map(|&seed| Ok((seed, load_stream(&cfg.stream, seed)?)))
                .collect::<Result<_>>()?,
        };
        eprintln!("streams ready ({:.1}s)", started.elapsed().as_secs_f64());
        if cfg.report.diagnostics {
            let (churn, probe) = diagnostics(&streams, &cfg.report)?;
            write_atomic(&out.join(DIAG_CHURN), &churn)?;
            write_atomic(&out.join(DIAG_PROBE), &probe)?;
            eprintln!("diagnostics written ({:.1}s)", started.elapsed().as_secs_f64());
        }
        let n_seeds = cfg.seeds.len();
        Ok((0..cells.len())
            .into_par_iter()
            .map(|i| {
                let strategy = cfg.strategies[i / n_seeds].clone().with_seed(cfg.seeds[i % n_seeds]);
                let stream = &streams[i % n_seeds].1;
                let cell = &cells[i];
                let t = Instant::now();
                let result = run_continual(stream, &strategy).map_err(anyhow::Error::from).and_then(|mut r| {
                    if !cfg.report.record_timings {
                        r.rows.iter_mut().for_each(|d| d.train_seconds = 0.0);
                    }
                    write_atomic(&out.join(&cell.run_csv), &run_csv(&r, cfg.report.record_timings)?)?;
                    write_atomic(&out.join(&cell.memory_csv), &memory_csv(&r.memory_log)?)?;
                    write_json(&out.join(&cell.result_json), &r)?;
                    Ok(r)
                });
                match result {
                    Ok(r) => {
                        eprintln!(
                            "{} seed {}: mean auc {:.4} ({:.1}s)",
                            cell.strategy,
                            cell.seed,
                            r.mean_auc(),
                            t.elapsed().as_secs_f64()
                        );
                        (Some(r), None)
                    }
                    Err(e) => {
                        eprintln!("{} seed {}: FAILED: {e:#}", cell.strategy, cell.seed);
                        (None, Some(format!("{e:#}")))
                    }
                }
            })
            .collect())
    });

    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            write_json(&out.join(MANIFEST), &manifest)?;
            return Err(e);
        }
    };
    let mut results = Vec::new();
    let mut files = Vec::new();
    if cfg.report.diagnostics {
        files.push(DIAG_CHURN.to_string());
        files.push(DIAG_PROBE.to_string());
    }
    for (cell, (result, error)) in cells.iter_mut().zip(outcome) {
        match result {
            Some(r) => {
                cell.status = CellStatus::Ok;
                files.extend([cell.run_csv.clone(), cell.memory_csv.clone(), cell.result_json.clone()]);
                results.push(r);
            }
            None => {
                cell.status = CellStatus::Failed;
                cell.error = error;
            }
        }
    }
    let failed = cells.iter().filter(|c| c.status == CellStatus::Failed).count();
    if failed == 0 {
        let table = aggregate(&results, &cfg.baseline(), cfg.report.last_k)?;
        write_atomic(&out.join("summary.csv"), table.to_csv().as_bytes())?;
        write_json(&out.join("summary.json"), &table)?;
        files.extend(["summary.csv".to_string(), "summary.json".to_string()]);
        print!("{}", table.to_text());
    }
    manifest.cells = cells;
    manifest.files = files;
    manifest.complete = failed == 0;
    write_json(&out.join(MANIFEST), &manifest)?;
    eprintln!(
        "wrote {} in {:.1}s",
        out.display(),
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        return Err(anyhow!("{failed} of {} runs failed; see {}", manifest.cells.len(), out.join(MANIFEST).display()));
    }
    Ok(())
}

pub fn results_of(dir: &Path, manifest: &Manifest) -> Result<Vec<RunResult>> {
    manifest
        .cells
        .iter()
        .filter(|c| c.status == CellStatus::Ok)
        .map(|c| {
            let p: PathBuf = dir.join(&c.result_json);
            let text = std::fs::read_to_string(&p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("malformed {}", p.display()))
        })
        .collect()
}
