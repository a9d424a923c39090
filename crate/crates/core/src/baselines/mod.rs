//! The twelve comparison strategies behind the [`Strategy`] interface.
//!
//! Hyperparameters default to the values each method is usually run with;
//! override them by name through [`StrategyParams`].

mod anticor;
mod benchmarks;
mod follow_winner;
mod mean_reversion;
mod simplex;
mod weiszfeld;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub use anticor::{apply_claims, claims, Anticor};
pub use benchmarks::{Best, Crp, Ubah};
pub use follow_winner::{project_in_norm, Eg, Ons, Up};
pub use mean_reversion::{olmar_update, pamr_update, relative_price_history, Cwmr, Olmar, Pamr, Wmamr};
pub use simplex::project_simplex;
pub use weiszfeld::{l1_median, l1_objective, MedianResult};

use crate::backtest::Strategy;
use crate::error::{Error, Result};
use crate::market_data::PriceRelativeVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyKind {
    Ubah,
    Best,
    Crp,
    Up,
    Eg,
    Anticor,
    Ons,
    Cwmr,
    Pamr,
    Olmar,
    Rmr,
    Wmamr,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 12] = [
        StrategyKind::Ubah,
        StrategyKind::Best,
        StrategyKind::Crp,
        StrategyKind::Up,
        StrategyKind::Eg,
        StrategyKind::Anticor,
        StrategyKind::Ons,
        StrategyKind::Cwmr,
        StrategyKind::Pamr,
        StrategyKind::Olmar,
        StrategyKind::Rmr,
        StrategyKind::Wmamr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Ubah => "ubah",
            StrategyKind::Best => "best",
            StrategyKind::Crp => "crp",
            StrategyKind::Up => "up",
            StrategyKind::Eg => "eg",
            StrategyKind::Anticor => "anticor",
            StrategyKind::Ons => "ons",
            StrategyKind::Cwmr => "cwmr",
            StrategyKind::Pamr => "pamr",
            StrategyKind::Olmar => "olmar",
            StrategyKind::Rmr => "rmr",
            StrategyKind::Wmamr => "wmamr",
        }
    }

    /// Default hyperparameters; every accepted key appears here.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            StrategyKind::Ubah | StrategyKind::Best | StrategyKind::Crp => &[],
            StrategyKind::Up => &[("samples", 1e4), ("seed", 0.0)],
            StrategyKind::Eg => &[("eta", 0.05)],
            StrategyKind::Anticor => &[("window", 30.0)],
            StrategyKind::Ons => &[("eta", 0.0), ("beta", 1.0), ("delta", 0.125)],
            StrategyKind::Cwmr => &[("eps", 0.5), ("phi", 2.0)],
            StrategyKind::Pamr => &[("eps", 0.5)],
            StrategyKind::Olmar => &[("window", 5.0), ("eps", 10.0)],
            StrategyKind::Rmr => &[("window", 5.0), ("eps", 10.0), ("tol", 1e-6), ("max_iter", 200.0)],
            StrategyKind::Wmamr => &[("window", 5.0), ("eps", 0.5)],
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        StrategyKind::ALL.into_iter().find(|k| k.as_str() == lower).ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// Hyperparameter overrides by name. CRP additionally accepts `w0`, `w1`,
/// ... for explicit weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StrategyParams(pub BTreeMap<String, f64>);

impl StrategyParams {
    /// Parses `key=value` pairs.
    pub fn parse<S: AsRef<str>>(pairs: &[S]) -> Result<Self> {
        let mut map = BTreeMap::new();
        for p in pairs {
            let p = p.as_ref();
            let (k, v) = p.split_once('=').ok_or_else(|| Error::Config(format!("parameter `{p}` is not key=value")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Config(format!("parameter `{p}` has a non-numeric value")))?;
            map.insert(k.trim().to_string(), v);
        }
        Ok(Self(map))
    }

    fn resolve(&self, kind: StrategyKind) -> Result<BTreeMap<&'static str, f64>> {
        let defaults = kind.defaults();
        let mut out: BTreeMap<&'static str, f64> = defaults.iter().copied().collect();
        for (k, v) in &self.0 {
            if kind == StrategyKind::Crp && k.starts_with('w') && k[1..].parse::<usize>().is_ok() {
                continue;
            }
            match defaults.iter().find(|(name, _)| name == k) {
                Some((name, _)) => {
                    out.insert(name, *v);
                }
                None => return Err(Error::Config(format!("{kind} has no parameter `{k}`"))),
            }
        }
        Ok(out)
    }

    fn crp_weights(&self, n_assets: usize) -> Option<Vec<f64>> {
        let any = self.0.keys().any(|k| k.starts_with('w') && k[1..].parse::<usize>().is_ok());
        any.then(|| (0..n_assets).map(|i| self.0.get(&format!("w{i}")).copied().unwrap_or(0.0)).collect())
    }
}

fn count(name: &str, v: f64) -> Result<usize> {
    if v >= 1.0 && v.fract() == 0.0 && v <= 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{name} must be a positive integer, got {v}")))
    }
}

/// Builds a fresh strategy. `evaluation` holds the relatives of exactly the
/// periods to be decided; only `Best` looks at it.
pub fn build(
    kind: StrategyKind,
    params: &StrategyParams,
    n_assets: usize,
    evaluation: &[PriceRelativeVector],
) -> Result<Box<dyn Strategy + Send>> {
    let p = params.resolve(kind)?;
    Ok(match kind {
        StrategyKind::Ubah => Box::new(Ubah::new()),
        StrategyKind::Best => Box::new(Best::in_hindsight(evaluation)?),
        StrategyKind::Crp => match params.crp_weights(n_assets) {
            Some(w) => Box::new(Crp::with_weights(w)?),
            None => Box::new(Crp::uniform()),
        },
        StrategyKind::Up => Box::new(Up::new(count("samples", p["samples"])?, p["seed"] as u64)),
        StrategyKind::Eg => Box::new(Eg::new(p["eta"])),
        StrategyKind::Anticor => Box::new(Anticor::new(count("window", p["window"])?)),
        StrategyKind::Ons => Box::new(Ons::new(p["eta"], p["beta"], p["delta"])),
        StrategyKind::Cwmr => Box::new(Cwmr::new(p["eps"], p["phi"])),
        StrategyKind::Pamr => Box::new(Pamr::new(p["eps"])),
        StrategyKind::Olmar => Box::new(Olmar::new(count("window", p["window"])?, p["eps"])),
        StrategyKind::Rmr => Box::new(Olmar::rmr(count("window", p["window"])?, p["eps"], p["tol"], count("max_iter", p["max_iter"])?)),
        StrategyKind::Wmamr => Box::new(Wmamr::new(count("window", p["window"])?, p["eps"])),
    })
}
