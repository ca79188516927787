use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use colf::eval::{aggregate, mean_std};
use serde::Deserialize;

use crate::files::{csv_bytes, write_atomic, write_json};
use crate::run::{results_of, Manifest, DIAG_CHURN, DIAG_PROBE};
use crate::Failure;

#[derive(Deserialize)]
struct ChurnRow {
    #[allow(dead_code)]
    seed: u64,
    gap: u32,
    new_item_fraction: f64,
    kl: f64,
}

#[derive(Deserialize)]
struct ProbeRow {
    #[allow(dead_code)]
    seed: u64,
    gap: u32,
    auc: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .with_context(|| format!("malformed {}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn churn_figure(rows: &[ChurnRow]) -> Result<Vec<u8>> {
    let mut by_gap: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let e = by_gap.entry(r.gap).or_default();
        e.0.push(r.new_item_fraction);
        e.1.push(r.kl);
    }
    csv_bytes(
        &["gap", "new_item_fraction", "new_item_fraction_std", "kl", "kl_std", "n_seeds"],
        by_gap.iter().map(|(g, (f, k))| {
            let (fm, fs) = mean_std(f);
            let (km, ks) = mean_std(k);
            vec![g.to_string(), fm.to_string(), opt(fs), km.to_string(), opt(ks), f.len().to_string()]
        }),
    )
}

fn probe_figure(rows: &[ProbeRow]) -> Result<Vec<u8>> {
    let mut by_gap: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_gap.entry(r.gap).or_default().push(r.auc);
    }
    csv_bytes(
        &["gap", "auc", "auc_std", "n_seeds"],
        by_gap.iter().map(|(g, a)| {
            let (m, s) = mean_std(a);
            vec![g.to_string(), m.to_string(), opt(s), a.len().to_string()]
        }),
    )
}

pub fn cmd_report(dir: &Path) -> Result<(), Failure> {
    let is_empty = std::fs::read_dir(dir)
        .map(|mut it| it.next().is_none())
        .unwrap_or(true);
    if is_empty {
        return Err(Failure::Config(anyhow!("{} is missing or empty", dir.display())));
    }
    let manifest = Manifest::load(dir).map_err(Failure::Config)?;
    report(dir, &manifest).map_err(Failure::Runtime)
}

fn report(dir: &Path, manifest: &Manifest) -> Result<()> {
    let results = results_of(dir, manifest)?;
    if results.is_empty() {
        bail!("no completed runs in {}", dir.display());
    }
    if !manifest.complete {
        eprintln!("warning: the run did not complete; reporting the finished cells only");
    }
    let cfg = &manifest.config;
    let mut baseline = cfg.baseline();
    if !results.iter().any(|r| r.strategy == baseline) {
        baseline = results[0].strategy.clone();
        eprintln!("warning: baseline has no finished runs; using {baseline}");
    }
    let table = aggregate(&results, &baseline, cfg.report.last_k)?;
    let out = dir.join("report");
    let text = table.to_text();
    write_atomic(&out.join("summary.txt"), text.as_bytes())?;
    write_atomic(&out.join("summary.csv"), table.to_csv().as_bytes())?;
    write_json(&out.join("summary.json"), &table)?;
    write_atomic(&out.join("fig_daily_auc.csv"), table.daily_csv().as_bytes())?;

    let churn_path = dir.join(DIAG_CHURN);
    if churn_path.is_file() {
        write_atomic(&out.join("fig_item_churn.csv"), &churn_figure(&read_rows(&churn_path)?)?)?;
    }
    let probe_path = dir.join(DIAG_PROBE);
    if probe_path.is_file() {
        write_atomic(&out.join("fig_probe_auc.csv"), &probe_figure(&read_rows(&probe_path)?)?)?;
    }
    print!("{text}");
    eprintln!("report written to {}", out.display());
    Ok(())
}
