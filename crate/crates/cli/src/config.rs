use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use colf::stream::ProbeConfig;
use colf::{DriftConfig, StrategyConfig};
use serde::{Deserialize, Serialize};

pub const OUTPUT_ROOT_ENV: &str = "COLF_OUTPUT_ROOT";

/// Experiment file as written by the user. Strategy entries are merged over
/// `strategy_defaults` before they are interpreted.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    seeds: Option<Vec<u64>>,
    #[serde(default)]
    output_dir: Option<PathBuf>,
    #[serde(default)]
    stream_file: Option<PathBuf>,
    #[serde(default)]
    stream: Option<toml::Table>,
    #[serde(default)]
    strategy_defaults: toml::Table,
    #[serde(default)]
    strategies: Vec<toml::Table>,
    #[serde(default)]
    report: ReportOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportOptions {
    /// Strategy the gain column is measured against; defaults to
    /// `incremental` when present, else the first strategy.
    pub baseline: Option<String>,
    pub last_k: usize,
    /// Write wall-clock training seconds into the run CSVs. Off by default
    /// so results are byte-reproducible.
    pub record_timings: bool,
    /// Compute item-churn and drift-probe series for each seed's stream.
    pub diagnostics: bool,
    /// Largest day gap in the item-churn series.
    pub churn_max_gap: u32,
    /// Largest day gap in the drift-probe series (probe trains on day 1).
    pub probe_max_gap: u32,
    /// Additive pseudo-count per item in the item-distribution KL.
    pub kl_smoothing: f64,
    pub probe: ProbeConfig,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            baseline: None,
            last_k: 5,
            record_timings: false,
            diagnostics: true,
            churn_max_gap: 25,
            probe_max_gap: 14,
            kl_smoothing: 1e-3,
            probe: ProbeConfig::default(),
        }
    }
}

/// Where a run's streams come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamSource {
    /// Generated per seed; the seed field is replaced by each run seed.
    Generated(DriftConfig),
    /// Read once from a stream file and shared by every seed.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub stream: StreamSource,
    pub strategies: Vec<StrategyConfig>,
    pub report: ReportOptions,
}

impl ExperimentConfig {
    pub fn baseline(&self) -> String {
        if let Some(b) = &self.report.baseline {
            return b.clone();
        }
        let labels: Vec<String> = self.strategies.iter().map(|s| s.label()).collect();
        labels
            .iter()
            .find(|l| l.as_str() == "incremental")
            .or_else(|| labels.first())
            .cloned()
            .unwrap_or_default()
    }
}

fn merge(base: &toml::Table, over: &toml::Table) -> toml::Table {
    let mut out = base.clone();
    for (k, v) in over {
        match (out.get(k), v) {
            (Some(toml::Value::Table(a)), toml::Value::Table(b)) => {
                let merged = merge(a, b);
                out.insert(k.clone(), toml::Value::Table(merged));
            }
            _ => {
                out.insert(k.clone(), v.clone());
            }
        }
    }
    out
}

fn parse_raw(text: &str) -> Result<RawConfig> {
    toml::from_str(text).map_err(|e| anyhow!("{}", e.message().trim()).context(describe_span(text, e.span())))
}

fn describe_span(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => {
            let line = text[..r.start.min(text.len())].lines().count().max(1);
            format!("invalid config at line {line}")
        }
        None => "invalid config".to_string(),
    }
}

/// Reads the `[stream]` table as a generator config. A missing `seed` is
/// filled from `fallback_seed` when one is given.
fn drift_config(table: &toml::Table, fallback_seed: Option<u64>) -> Result<DriftConfig> {
    let mut table = table.clone();
    if !table.contains_key("seed") {
        match fallback_seed {
            Some(s) => {
                table.insert("seed".into(), toml::Value::Integer(s as i64));
            }
            None => bail!("stream.seed is missing (set `seed` in [stream] or list `seeds`)"),
        }
    }
    let cfg: DriftConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| anyhow!("[stream]: {}", e.message().trim()))?;
    cfg.validate().map_err(|e| anyhow!("[stream]: {e}"))?;
    Ok(cfg)
}

fn resolve_output(config_path: &Path, name: &str, explicit: Option<PathBuf>) -> PathBuf {
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
    match (explicit, root) {
        (Some(p), _) if p.is_absolute() => p,
        (Some(p), Some(root)) => root.join(p),
        (Some(p), None) => config_path.parent().unwrap_or(Path::new(".")).join(p),
        (None, Some(root)) => root.join(name),
        (None, None) => PathBuf::from("results").join(name),
    }
}

pub fn load_experiment(config_path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("cannot read config {}", config_path.display()))?;
    let raw = parse_raw(&text)?;
    let name = raw.name.clone().unwrap_or_else(|| {
        config_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".into())
    });

    let stream_seed = raw
        .stream
        .as_ref()
        .and_then(|t| t.get("seed"))
        .and_then(|v| v.as_integer())
        .map(|s| s as u64);
    let seeds = match (&raw.seeds, stream_seed) {
        (Some(s), _) if !s.is_empty() => s.clone(),
        (Some(_), _) => bail!("seeds must not be empty"),
        (None, Some(s)) => vec![s],
        (None, None) => bail!("no seed given: list `seeds` or set `seed` in [stream]"),
    };
    let mut unique = seeds.clone();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != seeds.len() {
        bail!("seeds must be distinct");
    }

    let stream = match (&raw.stream_file, &raw.stream) {
        (Some(_), Some(_)) => bail!("give either stream_file or [stream], not both"),
        (Some(f), None) => {
            let path = if f.is_absolute() {
                f.clone()
            } else {
                config_path.parent().unwrap_or(Path::new(".")).join(f)
            };
            StreamSource::File(path)
        }
        (None, Some(t)) => StreamSource::Generated(drift_config(t, Some(seeds[0]))?),
        (None, None) => bail!("missing [stream] section or stream_file"),
    };

    if raw.strategies.is_empty() {
        bail!("at least one [[strategies]] entry is required");
    }
    let mut strategies = Vec::new();
    for (i, table) in raw.strategies.iter().enumerate() {
        let merged = merge(&raw.strategy_defaults, table);
        let s: StrategyConfig = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| anyhow!("strategies[{i}]: {}", e.message().trim()))?;
        s.validate().map_err(|e| anyhow!("strategies[{i}]: {e}"))?;
        strategies.push(s);
    }
    let mut labels: Vec<String> = strategies.iter().map(|s| s.label()).collect();
    labels.sort();
    if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
        bail!("two strategies share the label '{}'; set `name` to tell them apart", w[0]);
    }
    if raw.report.last_k == 0 {
        bail!("report.last_k must be positive");
    }

    let output_dir = resolve_output(config_path, &name, raw.output_dir);
    let cfg = ExperimentConfig {
        name,
        seeds,
        output_dir,
        stream,
        strategies,
        report: raw.report,
    };
    let baseline = cfg.baseline();
    if !cfg.strategies.iter().any(|s| s.label() == baseline) {
        bail!("report.baseline '{baseline}' is not one of the strategies");
    }
    Ok(cfg)
}

/// The generator config of a file for `gen`: `[stream]` with a seed, or the
/// first entry of `seeds`.
pub fn load_stream_config(config_path: &Path) -> Result<DriftConfig> {
    let text = std::fs::read_to_string(config_path)
        .with_context(|| format!("cannot read config {}", config_path.display()))?;
    let raw = parse_raw(&text)?;
    let table = raw.stream.ok_or_else(|| anyhow!("missing [stream] section"))?;
    let fallback = raw.seeds.and_then(|s| s.first().copied());
    drift_config(&table, fallback)
}
