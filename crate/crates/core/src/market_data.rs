//! Loading, aligning, gap-filling and windowing OHLC histories.
//!
//! One CSV file per asset with header `timestamp,open,high,low,close`.
//! Files are aligned onto a shared timestamp grid; periods an asset has no
//! row for are marked missing until [`PricePanel::fill_missing`] replaces
//! them with flat bars.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Number of price channels per period: open, high, low, close.
pub const CHANNELS: usize = 4;
pub const CLOSE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl Bar {
    /// A bar with all four prices equal.
    pub fn flat(price: f64) -> Self {
        Self { open: price, high: price, low: price, close: price }
    }

    pub fn channels(&self) -> [f64; CHANNELS] {
        [self.open, self.high, self.low, self.close]
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let ch = self.channels();
        if ch.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(format!("prices must be positive and finite, got {ch:?}"));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!("high {} below max(open, close)", self.high));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!("low {} above min(open, close)", self.low));
        }
        Ok(())
    }
}

/// One asset's history as read from disk, sorted by timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct AssetSeries {
    pub asset_id: String,
    pub rows: Vec<(i64, Bar)>,
}

impl AssetSeries {
    /// Sorts `rows` and checks the series invariants.
    pub fn new(asset_id: impl Into<String>, mut rows: Vec<(i64, Bar)>) -> Result<Self> {
        let asset_id = asset_id.into();
        rows.sort_by_key(|(ts, _)| *ts);
        for pair in rows.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::Data(format!("{asset_id}: duplicate timestamp {}", pair[0].0)));
            }
        }
        for (ts, bar) in &rows {
            bar.validate().map_err(|m| Error::Data(format!("{asset_id} @ {ts}: {m}")))?;
        }
        Ok(Self { asset_id, rows })
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string());
        Self::from_csv_reader(&id, &path.display().to_string(), file)
    }

    /// Parses the per-asset CSV format. `source` names the input in errors.
    pub fn from_csv_reader<R: Read>(asset_id: &str, source: &str, reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let parse_err = |line: usize, message: String| Error::Parse { file: source.to_string(), line, message };

        let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        let expected = ["timestamp", "open", "high", "low", "close"];
        if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(parse_err(
                1,
                format!("expected header `{}`, got `{}`", expected.join(","), headers.iter().collect::<Vec<_>>().join(",")),
            ));
        }

        let mut rows = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let line = idx + 2;
            let record = record.map_err(|e| parse_err(line, e.to_string()))?;
            if record.len() != 5 {
                return Err(parse_err(line, format!("expected 5 fields, got {}", record.len())));
            }
            let ts: i64 = record[0].parse().map_err(|_| parse_err(line, format!("bad timestamp `{}`", &record[0])))?;
            let mut px = [0.0; 4];
            for (j, p) in px.iter_mut().enumerate() {
                *p = record[j + 1].parse().map_err(|_| parse_err(line, format!("bad price `{}`", &record[j + 1])))?;
            }
            let bar = Bar { open: px[0], high: px[1], low: px[2], close: px[3] };
            bar.validate().map_err(|m| parse_err(line, m))?;
            rows.push((ts, bar));
        }
        Self::new(asset_id, rows).map_err(|e| match e {
            Error::Data(m) => parse_err(0, m),
            other => other,
        })
    }
}

/// The shared timestamp grid: `start, start + period, ..., <= end`.
/// Unset bounds default to the earliest / latest timestamp over all inputs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub period_seconds: i64,
    pub start: Option<i64>,
    pub end: Option<i64>,
}

impl GridSpec {
    pub fn every(period_seconds: i64) -> Self {
        Self { period_seconds, start: None, end: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub rows_read: usize,
    pub rows_on_grid: usize,
}

/// Aligned OHLC history for `m` risky assets over `n` periods.
///
/// Cash is implicit: it never appears in the panel and its price relative
/// is always 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PricePanel {
    timestamps: Vec<i64>,
    period_seconds: i64,
    asset_ids: Vec<String>,
    bars: Vec<Vec<Option<Bar>>>,
    provenance: Vec<Provenance>,
}

/// A normalized `(m, k, 4)` slice of the panel, row-major over
/// (asset, time, channel).
#[derive(Clone, Debug, PartialEq)]
pub struct PriceWindow {
    pub assets: usize,
    pub len: usize,
    pub values: Vec<f64>,
}

impl PriceWindow {
    pub fn get(&self, asset: usize, time: usize, channel: usize) -> f64 {
        self.values[(asset * self.len + time) * CHANNELS + channel]
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.assets, self.len, CHANNELS]
    }
}

/// Close-to-close price ratios with the cash entry fixed at 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceRelativeVector(Vec<f64>);

impl PriceRelativeVector {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() || x[0] != 1.0 {
            return Err(Error::contract("price relative vector must start with cash entry 1"));
        }
        if x.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::contract(format!("price relatives must be positive, got {x:?}")));
        }
        Ok(Self(x))
    }

    pub fn ones(n_assets: usize) -> Self {
        Self(vec![1.0; n_assets])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for PriceRelativeVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl PricePanel {
    /// Aligns already-parsed series onto the grid. Off-grid rows and rows
    /// outside the grid bounds are dropped (counted in the provenance).
    pub fn align(series: Vec<(AssetSeries, String)>, grid: GridSpec) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::Alignment("no assets given".into()));
        }
        if grid.period_seconds <= 0 {
            return Err(Error::Config(format!("period_seconds must be positive, got {}", grid.period_seconds)));
        }
        let first = series.iter().filter_map(|(s, _)| s.rows.first().map(|r| r.0)).min();
        let last = series.iter().filter_map(|(s, _)| s.rows.last().map(|r| r.0)).max();
        let (start, end) = match (grid.start.or(first), grid.end.or(last)) {
            (Some(s), Some(e)) if e >= s => (s, e),
            _ => return Err(Error::Alignment("grid is empty".into())),
        };
        let n = ((end - start) / grid.period_seconds + 1) as usize;
        let timestamps: Vec<i64> = (0..n as i64).map(|i| start + i * grid.period_seconds).collect();

        let mut asset_ids = Vec::with_capacity(series.len());
        let mut bars = Vec::with_capacity(series.len());
        let mut provenance = Vec::with_capacity(series.len());
        let mut any_overlap = false;
        for (s, source) in series {
            let mut column = vec![None; n];
            let mut on_grid = 0;
            for (ts, bar) in &s.rows {
                let offset = ts - start;
                if offset < 0 || *ts > end || offset % grid.period_seconds != 0 {
                    continue;
                }
                column[(offset / grid.period_seconds) as usize] = Some(*bar);
                on_grid += 1;
            }
            any_overlap |= on_grid > 0;
            provenance.push(Provenance { source, rows_read: s.rows.len(), rows_on_grid: on_grid });
            asset_ids.push(s.asset_id);
            bars.push(column);
        }
        if !any_overlap {
            return Err(Error::Alignment("no timestamp of any input falls on the grid".into()));
        }
        if n < 2 {
            return Err(Error::Alignment(format!("grid has {n} period(s), need at least 2")));
        }
        Ok(Self { timestamps, period_seconds: grid.period_seconds, asset_ids, bars, provenance })
    }

    /// Reads one CSV per asset (in the given order) and aligns them.
    pub fn ingest<P: AsRef<Path>>(paths: &[P], grid: GridSpec) -> Result<Self> {
        let mut series = Vec::with_capacity(paths.len());
        for p in paths {
            let p = p.as_ref();
            series.push((AssetSeries::from_csv_path(p)?, p.display().to_string()));
        }
        Self::align(series, grid)
    }

    /// Builds a complete panel from close prices only (flat bars).
    /// `closes[i][t]` is asset `i` at period `t`.
    pub fn from_closes(closes: &[Vec<f64>]) -> Result<Self> {
        let bars = closes.iter().map(|c| c.iter().map(|&p| Bar::flat(p)).collect()).collect::<Vec<Vec<Bar>>>();
        Self::from_bars(bars)
    }

    /// Builds a complete panel on a unit grid from per-asset bar columns.
    pub fn from_bars(bars: Vec<Vec<Bar>>) -> Result<Self> {
        let n = bars.first().map(Vec::len).unwrap_or(0);
        if bars.is_empty() || n < 2 || bars.iter().any(|b| b.len() != n) {
            return Err(Error::Data("need m >= 1 assets with equal length n >= 2".into()));
        }
        for (i, col) in bars.iter().enumerate() {
            for (t, b) in col.iter().enumerate() {
                b.validate().map_err(|m| Error::Data(format!("asset {i} period {t}: {m}")))?;
            }
        }
        let m = bars.len();
        Ok(Self {
            timestamps: (0..n as i64).collect(),
            period_seconds: 1,
            asset_ids: (0..m).map(|i| format!("asset{}", i + 1)).collect(),
            provenance: (0..m).map(|i| Provenance { source: format!("memory:{i}"), rows_read: n, rows_on_grid: n }).collect(),
            bars: bars.into_iter().map(|c| c.into_iter().map(Some).collect()).collect(),
        })
    }

    /// Moves the panel onto the grid `start, start + period, ...`.
    pub fn retimed(mut self, start: i64, period_seconds: i64) -> Result<Self> {
        if period_seconds <= 0 {
            return Err(Error::Config(format!("period_seconds must be positive, got {period_seconds}")));
        }
        self.timestamps = (0..self.n_periods() as i64).map(|i| start + i * period_seconds).collect();
        self.period_seconds = period_seconds;
        Ok(self)
    }

    pub fn renamed<S: Into<String>>(mut self, ids: impl IntoIterator<Item = S>) -> Result<Self> {
        let ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        if ids.len() != self.n_risky() {
            return Err(Error::contract(format!("{} names for {} assets", ids.len(), self.n_risky())));
        }
        self.asset_ids = ids;
        Ok(self)
    }

    /// Number of risky assets `m`.
    pub fn n_risky(&self) -> usize {
        self.bars.len()
    }

    /// Portfolio dimension `m + 1`.
    pub fn n_assets(&self) -> usize {
        self.bars.len() + 1
    }

    pub fn n_periods(&self) -> usize {
        self.timestamps.len()
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn period_seconds(&self) -> i64 {
        self.period_seconds
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    pub fn bar(&self, asset: usize, t: usize) -> Option<&Bar> {
        self.bars[asset][t].as_ref()
    }

    /// Count of missing (asset, period) cells.
    pub fn missing_count(&self) -> usize {
        self.bars.iter().flatten().filter(|b| b.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_count() == 0
    }

    fn require_complete(&self) -> Result<()> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(Error::Data(format!("panel has {} missing cells; run fill_missing first", self.missing_count())))
        }
    }

    fn close(&self, asset: usize, t: usize) -> f64 {
        self.bars[asset][t].expect("complete panel").close
    }

    /// Flat fill: before the first observation every channel carries the
    /// first observed close; later gaps carry the previous close.
    pub fn fill_missing(&self) -> Result<Self> {
        let mut out = self.clone();
        for (i, column) in out.bars.iter_mut().enumerate() {
            let first = column
                .iter()
                .flatten()
                .next()
                .map(|b| b.close)
                .ok_or_else(|| Error::Data(format!("asset {} has no observations", self.asset_ids[i])))?;
            let mut carry = first;
            for cell in column.iter_mut() {
                match cell {
                    Some(b) => carry = b.close,
                    None => *cell = Some(Bar::flat(carry)),
                }
            }
        }
        Ok(out)
    }

    /// Raw slice `[t - k, t)` divided per asset by the close of period
    /// `t - 1`.
    pub fn window_at(&self, t: usize, k: usize) -> Result<PriceWindow> {
        if k == 0 || t < k || t > self.n_periods() {
            return Err(Error::Range(format!("window of length {k} ending before period {t} is out of range (n = {})", self.n_periods())));
        }
        self.require_complete()?;
        let m = self.n_risky();
        let mut values = Vec::with_capacity(m * k * CHANNELS);
        for i in 0..m {
            let scale = self.close(i, t - 1);
            for tau in t - k..t {
                let bar = self.bars[i][tau].expect("complete panel");
                values.extend(bar.channels().iter().map(|p| p / scale));
            }
        }
        Ok(PriceWindow { assets: m, len: k, values })
    }

    /// `x_t` with `x[0] = 1` and `x[i] = close_i(t) / close_i(t - 1)`.
    pub fn price_relative(&self, t: usize) -> Result<PriceRelativeVector> {
        if t == 0 || t >= self.n_periods() {
            return Err(Error::Range(format!("price relative needs 1 <= t < {}, got {t}", self.n_periods())));
        }
        self.require_complete()?;
        let mut x = Vec::with_capacity(self.n_assets());
        x.push(1.0);
        x.extend((0..self.n_risky()).map(|i| self.close(i, t) / self.close(i, t - 1)));
        Ok(PriceRelativeVector(x))
    }

    /// Every price relative; entry 0 is a placeholder of ones so that the
    /// result can be indexed by period.
    pub fn relatives(&self) -> Result<Vec<PriceRelativeVector>> {
        self.require_complete()?;
        let mut out = Vec::with_capacity(self.n_periods());
        out.push(PriceRelativeVector::ones(self.n_assets()));
        for t in 1..self.n_periods() {
            out.push(self.price_relative(t)?);
        }
        Ok(out)
    }

    /// Restricts the panel to periods `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_periods() || end - start < 2 {
            return Err(Error::Range(format!("bad period slice {start}..{end}")));
        }
        Ok(Self {
            timestamps: self.timestamps[start..end].to_vec(),
            period_seconds: self.period_seconds,
            asset_ids: self.asset_ids.clone(),
            bars: self.bars.iter().map(|c| c[start..end].to_vec()).collect(),
            provenance: self.provenance.clone(),
        })
    }

    /// SHA-256 over the aligned content, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.period_seconds.to_le_bytes());
        for ts in &self.timestamps {
            h.update(ts.to_le_bytes());
        }
        for (id, col) in self.asset_ids.iter().zip(&self.bars) {
            h.update(id.as_bytes());
            for cell in col {
                match cell {
                    Some(b) => {
                        h.update([1u8]);
                        for p in b.channels() {
                            h.update(p.to_bits().to_le_bytes());
                        }
                    }
                    None => h.update([0u8]),
                }
            }
        }
        hex::encode(h.finalize())
    }

    /// Writes one asset column in the ingest CSV format.
    pub fn write_asset_csv<W: std::io::Write>(&self, asset: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Data(e.to_string());
        w.write_record(["timestamp", "open", "high", "low", "close"]).map_err(io)?;
        for (t, cell) in self.bars[asset].iter().enumerate() {
            if let Some(b) = cell {
                w.write_record([
                    self.timestamps[t].to_string(),
                    b.open.to_string(),
                    b.high.to_string(),
                    b.low.to_string(),
                    b.close.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Data(e.to_string()))
    }

    /// Summary counts used by the `ingest` command.
    pub fn summary(&self) -> BTreeMap<&'static str, usize> {
        BTreeMap::from([("risky_assets", self.n_risky()), ("periods", self.n_periods()), ("missing_cells", self.missing_count())])
    }
}
