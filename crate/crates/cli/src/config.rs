//! The run configuration file.
//!
//! Precedence, lowest first: built-in defaults, the TOML file, then every
//! `--set key=value` flag in command-line order. Keys are dotted paths into
//! the file (`train.steps=50`, `cost.psi=0.01`); values are parsed as TOML
//! and fall back to plain strings.

use std::path::{Path, PathBuf};

use anyhow::bail;
use costfolio::cost_model::CostSpec;
use costfolio::market_data::{GridSpec, PricePanel};
use costfolio::ppn::PpnConfig;
use costfolio::reward::{RewardConfig, RewardVariant};
use costfolio::training::{Sampler, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::errors::UsageError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub psi: Option<f64>,
    pub psi_p: Option<f64>,
    pub psi_s: Option<f64>,
}

impl CostSection {
    pub fn spec(&self) -> anyhow::Result<CostSpec> {
        let spec = match (self.psi, self.psi_p, self.psi_s) {
            (Some(psi), None, None) => CostSpec::symmetric(psi)?,
            (None, Some(p), Some(s)) => CostSpec::new(p, s)?,
            (None, None, None) => bail!(UsageError("cost: set `psi`, or both `psi_p` and `psi_s`".into())),
            _ => bail!(UsageError("cost: give either `psi` or the pair `psi_p`/`psi_s`, not a mix".into())),
        };
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub variant: RewardVariant,
    /// `uniform` or `geometric`.
    pub sampler: String,
    pub geometric_bias: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 1e-3,
            steps: 2000,
            lambda: 1e-4,
            gamma: 1e-3,
            variant: RewardVariant::CostSensitive,
            sampler: "uniform".into(),
            geometric_bias: 5e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpnSection {
    pub correlation: bool,
    pub dropout: f64,
}

impl Default for PpnSection {
    fn default() -> Self {
        let base = PpnConfig::new(1, 1);
        Self { correlation: base.correlation, dropout: base.dropout }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub lambdas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl Default for GridSection {
    fn default() -> Self {
        let decades = vec![1e-4, 1e-3, 1e-2, 1e-1];
        Self { lambdas: decades.clone(), gammas: decades, seeds: (0..5).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Per-asset CSV files, relative to the config file.
    pub assets: Vec<String>,
    pub period_seconds: i64,
    pub window_k: usize,
    pub train_range: [usize; 2],
    pub test_range: [usize; 2],
    #[serde(default)]
    pub seed: u64,
    pub cost: CostSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub ppn: PpnSection,
    #[serde(default)]
    pub grid: GridSection,
}

/// A parsed configuration plus the directory its relative paths hang off.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub run: RunConfig,
    pub base_dir: PathBuf,
}

fn set_path(table: &mut toml::Table, key: &str, value: toml::Value) -> anyhow::Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| UsageError(format!("empty key in `--set {key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = match entry {
            toml::Value::Table(t) => t,
            _ => bail!(UsageError(format!("`--set {key}`: `{p}` is not a section"))),
        };
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses `key=value` with the value read as a TOML literal when possible.
pub fn parse_override(s: &str) -> anyhow::Result<(String, toml::Value)> {
    let (k, v) = s.split_once('=').ok_or_else(|| UsageError(format!("`--set {s}` is not key=value")))?;
    let value = match toml::from_str::<toml::Table>(&format!("v = {v}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(v.to_string()),
    };
    Ok((k.trim().to_string(), value))
}

impl LoadedConfig {
    pub fn load(path: &Path, overrides: &[String]) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        for o in overrides {
            let (k, v) = parse_override(o)?;
            set_path(&mut table, &k, v)?;
        }
        let run: RunConfig = toml::Value::Table(table).try_into().map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        run.validate()?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { run, base_dir })
    }

    pub fn asset_paths(&self) -> Vec<PathBuf> {
        self.run.assets.iter().map(|a| self.base_dir.join(a)).collect()
    }

    /// Ingests, aligns and gap-fills the configured assets.
    pub fn panel(&self) -> anyhow::Result<PricePanel> {
        let raw = PricePanel::ingest(&self.asset_paths(), GridSpec::every(self.run.period_seconds))?;
        Ok(raw.fill_missing()?)
    }
}

fn check_rate(name: &str, v: f64) -> anyhow::Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        bail!(UsageError(format!("{name} must be finite and nonnegative, got {v}")));
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.assets.is_empty() {
            bail!(UsageError("config lists no assets".into()));
        }
        if self.window_k == 0 {
            bail!(UsageError("window_k must be positive".into()));
        }
        for (name, r) in [("train_range", self.train_range), ("test_range", self.test_range)] {
            if r[0] >= r[1] {
                bail!(UsageError(format!("{name} [{}, {}] is empty", r[0], r[1])));
            }
        }
        self.cost.spec()?;
        check_rate("train.lambda", self.train.lambda)?;
        check_rate("train.gamma", self.train.gamma)?;
        for v in &self.grid.lambdas {
            check_rate("grid.lambdas entry", *v)?;
        }
        for v in &self.grid.gammas {
            check_rate("grid.gammas entry", *v)?;
        }
        if self.grid.lambdas.is_empty() || self.grid.gammas.is_empty() || self.grid.seeds.is_empty() {
            bail!(UsageError("grid needs at least one lambda, gamma and seed".into()));
        }
        self.train_config()?.validate()?;
        self.ppn_config(1).validate()?;
        Ok(())
    }

    pub fn cost_spec(&self) -> CostSpec {
        self.cost.spec().expect("validated")
    }

    /// Rate used by the training surrogate: the common rate, or the mean
    /// of purchase and sale rates when they differ.
    pub fn surrogate_psi(&self) -> f64 {
        let c = self.cost_spec();
        c.common_rate().unwrap_or(0.5 * (c.purchase + c.sale))
    }

    pub fn reward(&self) -> RewardConfig {
        RewardConfig { lambda: self.train.lambda, gamma: self.train.gamma, variant: self.train.variant }
    }

    pub fn ppn_config(&self, assets: usize) -> PpnConfig {
        let mut cfg = PpnConfig::new(assets, self.window_k);
        cfg.correlation = self.ppn.correlation;
        cfg.dropout = self.ppn.dropout;
        cfg
    }

    pub fn train_config(&self) -> anyhow::Result<TrainConfig> {
        let sampler = match self.train.sampler.as_str() {
            "uniform" => Sampler::Uniform,
            "geometric" => Sampler::Geometric { bias: self.train.geometric_bias },
            other => bail!(UsageError(format!("train.sampler must be `uniform` or `geometric`, got `{other}`"))),
        };
        Ok(TrainConfig {
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            steps: self.train.steps,
            seed: self.seed,
            range: (self.train_range[0], self.train_range[1]),
            psi: self.surrogate_psi(),
            sampler,
        })
    }

    pub fn test_range(&self) -> (usize, usize) {
        (self.test_range[0], self.test_range[1])
    }
}

/// SHA-256 over the canonical JSON of `value`, hex encoded.
pub fn hash_of<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(&bytes))
}
