use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::continual::RunResult;
use crate::error::{ColfError, Result};

use super::metrics::{mean_std, relative_gain};

/// Across-seed statistics for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub n_seeds: usize,
    /// Mean over seeds of each run's mean daily AUC.
    pub mean_auc: f64,
    pub std_auc: Option<f64>,
    /// Same, restricted to the last `last_k` scored days.
    pub last_k_auc: f64,
    pub last_k_std: Option<f64>,
    pub pooled_auc: f64,
    pub mean_logloss: f64,
    /// Relative gain of `mean_auc` over the baseline's.
    pub gain: f64,
}

/// Across-seed statistics for one strategy on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyStat {
    pub strategy: String,
    pub day: u32,
    pub mean_auc: f64,
    pub std_auc: Option<f64>,
    pub mean_logloss: f64,
    pub mean_memory_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub baseline: String,
    pub last_k: usize,
    pub rows: Vec<SummaryRow>,
    pub daily: Vec<DailyStat>,
}

fn mean(v: &[f64]) -> f64 {
    mean_std(v).0
}

/// Groups runs by strategy (in order of first appearance) and summarizes
/// them against `baseline`.
pub fn aggregate(results: &[RunResult], baseline: &str, last_k: usize) -> Result<SummaryTable> {
    if last_k == 0 {
        return Err(ColfError::InvalidConfig("last_k must be positive".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&RunResult>> = BTreeMap::new();
    for r in results {
        if r.rows.is_empty() {
            return Err(ColfError::InvalidInput(format!(
                "run {} seed {} has no scored days",
                r.strategy, r.seed
            )));
        }
        if !groups.contains_key(r.strategy.as_str()) {
            order.push(&r.strategy);
        }
        groups.entry(&r.strategy).or_default().push(r);
    }
    let base_runs = groups
        .get(baseline)
        .ok_or_else(|| ColfError::InvalidInput(format!("baseline strategy '{baseline}' has no runs")))?;
    let base_auc = mean(&base_runs.iter().map(|r| r.mean_auc()).collect::<Vec<_>>());

    let mut rows = Vec::new();
    let mut daily = Vec::new();
    for name in order {
        let runs = &groups[name];
        let per_run: Vec<f64> = runs.iter().map(|r| r.mean_auc()).collect();
        let last: Vec<f64> = runs
            .iter()
            .map(|r| {
                let tail = &r.rows[r.rows.len().saturating_sub(last_k)..];
                mean(&tail.iter().map(|d| d.auc).collect::<Vec<_>>())
            })
            .collect();
        let losses: Vec<f64> = runs
            .iter()
            .map(|r| mean(&r.rows.iter().map(|d| d.logloss).collect::<Vec<_>>()))
            .collect();
        let (mean_auc, std_auc) = mean_std(&per_run);
        let (last_k_auc, last_k_std) = mean_std(&last);
        rows.push(SummaryRow {
            strategy: name.to_string(),
            n_seeds: runs.len(),
            mean_auc,
            std_auc,
            last_k_auc,
            last_k_std,
            pooled_auc: mean(&runs.iter().map(|r| r.pooled_auc).collect::<Vec<_>>()),
            mean_logloss: mean(&losses),
            gain: relative_gain(mean_auc, base_auc)?,
        });

        let mut by_day: BTreeMap<u32, Vec<(f64, f64, f64)>> = BTreeMap::new();
        for r in runs {
            for d in &r.rows {
                by_day
                    .entry(d.day)
                    .or_default()
                    .push((d.auc, d.logloss, d.memory_size as f64));
            }
        }
        for (day, vals) in by_day {
            let aucs: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let (m, s) = mean_std(&aucs);
            daily.push(DailyStat {
                strategy: name.to_string(),
                day,
                mean_auc: m,
                std_auc: s,
                mean_logloss: mean(&vals.iter().map(|v| v.1).collect::<Vec<_>>()),
                mean_memory_size: mean(&vals.iter().map(|v| v.2).collect::<Vec<_>>()),
            });
        }
    }
    Ok(SummaryTable {
        baseline: baseline.to_string(),
        last_k,
        rows,
        daily,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|s| format!("{s:.4}")).unwrap_or_else(|| "-".into())
}

impl SummaryTable {
    pub fn row(&self, strategy: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }

    /// Daily mean AUC curve of one strategy.
    pub fn curve(&self, strategy: &str) -> Vec<(u32, f64)> {
        self.daily
            .iter()
            .filter(|d| d.strategy == strategy)
            .map(|d| (d.day, d.mean_auc))
            .collect()
    }

    /// Column-aligned plain text.
    pub fn to_text(&self) -> String {
        let header = [
            "strategy".to_string(),
            "seeds".into(),
            "auc".into(),
            "std".into(),
            format!("auc_last{}", self.last_k),
            "std_last".into(),
            "pooled_auc".into(),
            "logloss".into(),
            format!("gain_vs_{}", self.baseline),
        ];
        let mut lines = vec![header.to_vec()];
        for r in &self.rows {
            lines.push(vec![
                r.strategy.clone(),
                r.n_seeds.to_string(),
                format!("{:.4}", r.mean_auc),
                opt(r.std_auc),
                format!("{:.4}", r.last_k_auc),
                opt(r.last_k_std),
                format!("{:.4}", r.pooled_auc),
                format!("{:.4}", r.mean_logloss),
                format!("{:+.2}%", r.gain * 100.0),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in lines {
            let cells: Vec<String> = line
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(c, (cell, &w))| {
                    if c == 0 {
                        format!("{cell:<w$}")
                    } else {
                        format!("{cell:>w$}")
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("strategy,n_seeds,mean_auc,std_auc,last_k_auc,last_k_std,pooled_auc,mean_logloss,gain\n");
        let o = |v: Option<f64>| v.map(|s| s.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.strategy,
                r.n_seeds,
                r.mean_auc,
                o(r.std_auc),
                r.last_k_auc,
                o(r.last_k_std),
                r.pooled_auc,
                r.mean_logloss,
                r.gain
            );
        }
        out
    }

    pub fn daily_csv(&self) -> String {
        let mut out = String::from("strategy,day,mean_auc,std_auc,mean_logloss,mean_memory_size\n");
        for d in &self.daily {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                d.strategy,
                d.day,
                d.mean_auc,
                d.std_auc.map(|s| s.to_string()).unwrap_or_default(),
                d.mean_logloss,
                d.mean_memory_size
            );
        }
        out
    }
}
