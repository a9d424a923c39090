//! Output files. Every CSV starts with a `# config_hash=<hex>` line and every
//! JSON record carries the hash; wall-clock time goes only to `timing.json`
//! so the other files are byte-identical across reruns.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use costfolio::metrics::MetricBlock;
use serde::{Deserialize, Serialize};

pub const RUN_FILE: &str = "run.json";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// Crate version that produced the record.
    pub version: String,
    pub dataset_fingerprint: String,
    /// Metric block per strategy (or per grid cell for sweeps).
    pub metrics: BTreeMap<String, MetricBlock>,
    /// Files written next to this record.
    pub outputs: Vec<String>,
}

impl RunRecord {
    pub fn new(command: &str, config_hash: &str, seed: u64, dataset_fingerprint: String) -> Self {
        Self {
            command: command.into(),
            config_hash: config_hash.into(),
            seed,
            version: env!("CARGO_PKG_VERSION").into(),
            dataset_fingerprint,
            metrics: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let path = if path.is_dir() { path.join(RUN_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Serialize)]
struct Timing<'a> {
    command: &'a str,
    config_hash: &'a str,
    wall_seconds: f64,
}

/// Writes into one output directory and remembers the file names.
pub struct OutputDir {
    dir: PathBuf,
    hash: String,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(dir: &Path, hash: &str) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), hash: hash.into(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let p = self.path(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.into());
        }
        Ok(())
    }

    /// CSV with the hash header; `body` writes the rest.
    pub fn csv(&mut self, name: &str, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "# config_hash={}", self.hash)?;
        body(&mut buf)?;
        self.put(name, &buf)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    pub fn text(&mut self, name: &str, text: &str) -> anyhow::Result<()> {
        self.put(name, text.as_bytes())
    }

    /// Writes `run.json` (listing everything written so far) and `timing.json`.
    pub fn finish(mut self, mut record: RunRecord, wall_seconds: f64) -> anyhow::Result<PathBuf> {
        record.outputs = self.written.clone();
        record.outputs.push(RUN_FILE.into());
        self.json(RUN_FILE, &record)?;
        let timing = Timing { command: &record.command, config_hash: &self.hash, wall_seconds };
        let text = serde_json::to_string_pretty(&timing)? + "\n";
        fs::write(self.path(TIMING_FILE), text)?;
        Ok(self.path(RUN_FILE))
    }
}

/// `inf` for infinite ratios, shortest round-trip otherwise.
pub fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:?}")
    }
}

/// Human-readable metric table.
pub fn metric_table(metrics: &BTreeMap<String, MetricBlock>) -> String {
    let mut s = format!("{:<24} {:>12} {:>10} {:>10} {:>10} {:>8} {:>8}\n", "strategy", "apv", "sr%", "std", "cr", "mdd", "to");
    for (name, m) in metrics {
        let cr = if m.cr.infinite { "inf".to_string() } else { format!("{:.4}", m.cr.value) };
        let sr = if m.sr.infinite { "inf".to_string() } else { format!("{:.4}", m.sr_pct()) };
        s += &format!("{:<24} {:>12.6} {:>10} {:>10.6} {:>10} {:>8.4} {:>8.4}\n", name, m.apv, sr, m.std, cr, m.mdd, m.to);
    }
    s
}
