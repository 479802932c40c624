//! Three-layer universe screen: capitalization/volume leaders, trend labeling,
//! and rolling-Sharpe ranking.

use std::cmp::Ordering;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{log_returns, simple_returns, PricePanel};
use crate::stats::{mean, population_std, sample_std};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub top_n: usize,
    /// Window length in bars for the slope, volatility and rolling Sharpe.
    pub lookback: usize,
    /// Slope threshold on first-value-normalized prices, per bar.
    pub tau1: f64,
    /// Threshold on the standard deviation of daily log returns.
    pub tau2: f64,
    pub risk_free: f64,
    /// Minimum trailing average daily volume for a leader to be kept.
    pub min_adv: f64,
    /// Maximum quoted spread. Panels carry no spread data, so this pass is a
    /// no-op; the field exists so configs can state the intended limit.
    pub max_spread: Option<f64>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            top_n: 10,
            lookback: 60,
            tau1: 0.0005,
            tau2: 0.02,
            risk_free: 0.0,
            min_adv: 0.0,
            max_spread: None,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_n < 1 {
            return Err(Error::invalid("selection.top_n", "must be >= 1"));
        }
        if self.lookback < 2 {
            return Err(Error::invalid("selection.lookback", "must be >= 2"));
        }
        if !(self.tau1 > 0.0) {
            return Err(Error::invalid("selection.tau1", "must be > 0"));
        }
        if !(self.tau2 > 0.0) {
            return Err(Error::invalid("selection.tau2", "must be > 0"));
        }
        if !self.risk_free.is_finite() {
            return Err(Error::invalid("selection.risk_free", "must be finite"));
        }
        if !(self.min_adv >= 0.0) {
            return Err(Error::invalid("selection.min_adv", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Up,
    Down,
    Volatile,
    Sideways,
}

impl Trend {
    /// The decision chain, evaluated in order.
    pub fn classify(slope: f64, vol: f64, tau1: f64, tau2: f64) -> Trend {
        if slope > tau1 {
            Trend::Up
        } else if slope < -tau1 {
            Trend::Down
        } else if vol > tau2 {
            Trend::Volatile
        } else {
            Trend::Sideways
        }
    }

    pub fn is_kept(self) -> bool {
        matches!(self, Trend::Up | Trend::Volatile)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Trend::Up => "up",
            Trend::Down => "down",
            Trend::Volatile => "volatile",
            Trend::Sideways => "sideways",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetLabel {
    pub symbol: String,
    pub label: Trend,
    pub slope: f64,
    pub vol: f64,
    /// `None` when the window has zero dispersion or is too short.
    pub rolling_sharpe: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub rank: usize,
    pub asset: AssetLabel,
    pub cap_rank: usize,
    pub volume_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniverseSnapshot {
    pub date: NaiveDate,
    pub members: Vec<Member>,
}

impl UniverseSnapshot {
    pub fn symbols(&self) -> Vec<&str> {
        self.members.iter().map(|m| m.asset.symbol.as_str()).collect()
    }
}

/// Ranks positions `0..n` by `key` descending, ties by symbol. Returns the
/// ordering, best first.
fn rank_desc(panel: &PricePanel, assets: &[usize], key: impl Fn(usize) -> f64) -> Vec<usize> {
    let mut order = assets.to_vec();
    order.sort_by(|&a, &b| {
        key(b)
            .partial_cmp(&key(a))
            .unwrap_or(Ordering::Equal)
            .then_with(|| panel.assets[a].cmp(&panel.assets[b]))
    });
    order
}

fn trailing_adv(panel: &PricePanel, asset: usize, idx: usize, lookback: usize) -> f64 {
    let lo = (idx + 1).saturating_sub(lookback);
    let window: Vec<f64> = panel.volumes[asset][lo..=idx]
        .iter()
        .map(|v| if v.is_nan() { 0.0 } else { *v })
        .collect();
    mean(&window)
}

fn nan_to_zero(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x
    }
}

/// Leaders by capitalization and by volume at calendar position `idx`:
/// the intersection of both top-`top_n` lists, in capitalization order.
/// Returns `(asset, cap_rank, volume_rank)` with 1-based ranks.
pub(crate) fn cap_volume_leaders(
    panel: &PricePanel,
    idx: usize,
    top_n: usize,
    lookback: usize,
) -> Vec<(usize, usize, usize)> {
    let live: Vec<usize> = (0..panel.n_assets())
        .filter(|&a| !panel.closes[a][idx].is_nan())
        .collect();
    let by_cap = rank_desc(panel, &live, |a| nan_to_zero(panel.caps[a][idx]));
    let by_vol = rank_desc(panel, &live, |a| {
        let v = nan_to_zero(panel.volumes[a][idx]);
        if v > 0.0 {
            v
        } else {
            trailing_adv(panel, a, idx, lookback)
        }
    });
    let mut vol_rank = vec![usize::MAX; panel.n_assets()];
    for (r, &a) in by_vol.iter().enumerate() {
        vol_rank[a] = r + 1;
    }
    by_cap
        .iter()
        .enumerate()
        .take(top_n)
        .filter(|(_, &a)| vol_rank[a] <= top_n)
        .map(|(r, &a)| (a, r + 1, vol_rank[a]))
        .collect()
}

/// Assets in the top `top_n` by market cap and also in the top `top_n` by
/// volume on `date`, largest cap first. Where an asset's volume on the day is
/// zero its trailing `lookback`-bar average is used instead.
pub fn rank_by_cap_and_volume(
    panel: &PricePanel,
    date: NaiveDate,
    top_n: usize,
    lookback: usize,
) -> Result<Vec<String>> {
    let idx = panel.date_index(date).ok_or(Error::NoDataAtDate(date))?;
    Ok(cap_volume_leaders(panel, idx, top_n, lookback)
        .into_iter()
        .map(|(a, _, _)| panel.assets[a].clone())
        .collect())
}

/// OLS slope of `prices / prices[0]` against the bar index.
pub fn calc_slope(prices: &[f64]) -> Result<f64> {
    let n = prices.len();
    if n < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: n,
        });
    }
    let base = prices[0];
    let x_mean = (n - 1) as f64 / 2.0;
    let y_mean = prices.iter().map(|p| p / base).sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, p) in prices.iter().enumerate() {
        let dx = i as f64 - x_mean;
        sxy += dx * (p / base - y_mean);
        sxx += dx * dx;
    }
    Ok(sxy / sxx)
}

/// Sharpe ratio of each length-`window` slice of `returns` (sample std).
/// Zero-dispersion windows yield `None`.
pub fn rolling_sharpe(returns: &[f64], window: usize, risk_free: f64) -> Result<Vec<Option<f64>>> {
    if window < 2 {
        return Err(Error::InvalidArgument(format!("window must be >= 2, got {window}")));
    }
    if returns.len() < window {
        return Err(Error::InsufficientHistory {
            needed: window,
            available: returns.len(),
        });
    }
    let excess: Vec<f64> = returns.iter().map(|r| r - risk_free).collect();
    Ok(excess
        .windows(window)
        .map(|w| {
            let sd = sample_std(w);
            (sd > 0.0).then(|| mean(w) / sd)
        })
        .collect())
}

/// Labels the trailing `cfg.lookback` prices. `rolling_sharpe` is filled
/// from the trailing `cfg.lookback` returns when the series is long enough.
pub fn label_asset(symbol: &str, prices: &[f64], cfg: &SelectionConfig) -> Result<AssetLabel> {
    if prices.len() < cfg.lookback {
        return Err(Error::InsufficientHistory {
            needed: cfg.lookback,
            available: prices.len(),
        });
    }
    let window = &prices[prices.len() - cfg.lookback..];
    let slope = calc_slope(window)?;
    let vol = population_std(&log_returns(window));
    let rolling_sharpe = if prices.len() > cfg.lookback {
        let rets = simple_returns(&prices[prices.len() - cfg.lookback - 1..]);
        rolling_sharpe(&rets, cfg.lookback, cfg.risk_free)?[0]
    } else {
        None
    };
    Ok(AssetLabel {
        symbol: symbol.to_string(),
        label: Trend::classify(slope, vol, cfg.tau1, cfg.tau2),
        slope,
        vol,
        rolling_sharpe,
    })
}

fn sharpe_desc(a: &AssetLabel, b: &AssetLabel) -> Ordering {
    let key = |x: &AssetLabel| x.rolling_sharpe.unwrap_or(f64::NEG_INFINITY);
    key(b)
        .partial_cmp(&key(a))
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.symbol.cmp(&b.symbol))
}

/// Full screen at `date`, using data up to and including that bar.
///
/// Leaders by cap and volume are filtered by trailing liquidity, labeled, cut
/// to `up`/`volatile`, and ranked by latest rolling Sharpe (undefined last).
pub fn select_universe(panel: &PricePanel, date: NaiveDate, cfg: &SelectionConfig) -> Result<UniverseSnapshot> {
    let idx = panel.date_index(date).ok_or(Error::NoDataAtDate(date))?;
    select_at(panel, idx, cfg)
}

pub(crate) fn select_at(panel: &PricePanel, idx: usize, cfg: &SelectionConfig) -> Result<UniverseSnapshot> {
    if idx < cfg.lookback {
        return Err(Error::InsufficientHistory {
            needed: cfg.lookback + 1,
            available: idx + 1,
        });
    }
    let leaders = cap_volume_leaders(panel, idx, cfg.top_n, cfg.lookback);
    let mut kept: Vec<(AssetLabel, usize, usize)> = Vec::with_capacity(leaders.len());
    for (a, cap_rank, volume_rank) in leaders {
        if trailing_adv(panel, a, idx, cfg.lookback) < cfg.min_adv {
            continue;
        }
        let prices = &panel.closes[a][idx - cfg.lookback..=idx];
        let label = label_asset(&panel.assets[a], prices, cfg)?;
        if label.label.is_kept() {
            kept.push((label, cap_rank, volume_rank));
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyUniverse);
    }
    kept.sort_by(|x, y| sharpe_desc(&x.0, &y.0));
    Ok(UniverseSnapshot {
        date: panel.calendar[idx],
        members: kept
            .into_iter()
            .take(cfg.top_n)
            .enumerate()
            .map(|(i, (asset, cap_rank, volume_rank))| Member {
                rank: i + 1,
                asset,
                cap_rank,
                volume_rank,
            })
            .collect(),
    })
}
