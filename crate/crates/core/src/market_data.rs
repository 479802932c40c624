//! Daily price/volume ingestion, cleaning and return computation.
//!
//! Panels are stored column-per-asset over a shared calendar. A missing bar is
//! marked with `NaN` in every field; [`clean_panel`] removes all markers.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::Deserialize;
use tracing::{debug, warn};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["symbol", "date", "close", "volume", "market_cap"];

/// One daily observation for one asset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub date: NaiveDate,
    pub close: f64,
    pub volume: f64,
    pub market_cap: Option<f64>,
}

/// Calendar-aligned per-asset price, volume and capitalization series.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub assets: Vec<String>,
    pub calendar: Vec<NaiveDate>,
    pub closes: Vec<Vec<f64>>,
    pub volumes: Vec<Vec<f64>>,
    pub caps: Vec<Vec<f64>>,
}

/// Simple close-to-close returns. `calendar[k]` is the date the return ends on.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    pub assets: Vec<String>,
    pub calendar: Vec<NaiveDate>,
    pub returns: Vec<Vec<f64>>,
}

/// An asset dropped at load time and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub symbol: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Csv,
}

impl PricePanel {
    /// Builds a panel from per-asset bar lists. The calendar is the union of
    /// all dates; absent bars become missing markers.
    pub fn from_bars(series: BTreeMap<String, Vec<Bar>>) -> Result<Self> {
        let mut dates: Vec<NaiveDate> = series.values().flatten().map(|b| b.date).collect();
        dates.sort_unstable();
        dates.dedup();
        if dates.is_empty() {
            return Err(Error::EmptyPanel);
        }
        let index: BTreeMap<NaiveDate, usize> = dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let n = dates.len();
        let mut panel = PricePanel {
            assets: Vec::with_capacity(series.len()),
            calendar: dates,
            closes: Vec::new(),
            volumes: Vec::new(),
            caps: Vec::new(),
        };
        for (symbol, bars) in series {
            let mut close = vec![f64::NAN; n];
            let mut volume = vec![f64::NAN; n];
            let mut cap = vec![f64::NAN; n];
            for bar in bars {
                let k = index[&bar.date];
                close[k] = bar.close;
                volume[k] = bar.volume;
                cap[k] = bar.market_cap.unwrap_or(f64::NAN);
            }
            panel.assets.push(symbol);
            panel.closes.push(close);
            panel.volumes.push(volume);
            panel.caps.push(cap);
        }
        Ok(panel)
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_dates(&self) -> usize {
        self.calendar.len()
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.calendar.binary_search(&date).ok()
    }

    pub fn asset_index(&self, symbol: &str) -> Option<usize> {
        self.assets.iter().position(|s| s == symbol)
    }

    pub fn missing_count(&self, asset: usize) -> usize {
        self.closes[asset].iter().filter(|c| c.is_nan()).count()
    }

    /// Mean volume over the whole calendar, missing bars counted as zero.
    pub fn average_daily_volume(&self, asset: usize) -> f64 {
        let v = &self.volumes[asset];
        v.iter().map(|x| if x.is_nan() { 0.0 } else { *x }).sum::<f64>() / v.len() as f64
    }

    /// Keeps only the listed asset positions, in the given order.
    pub fn select_assets(&self, keep: &[usize]) -> PricePanel {
        PricePanel {
            assets: keep.iter().map(|&i| self.assets[i].clone()).collect(),
            calendar: self.calendar.clone(),
            closes: keep.iter().map(|&i| self.closes[i].clone()).collect(),
            volumes: keep.iter().map(|&i| self.volumes[i].clone()).collect(),
            caps: keep.iter().map(|&i| self.caps[i].clone()).collect(),
        }
    }

    /// Restricts the calendar to `range` (date positions).
    pub fn slice_dates(&self, range: std::ops::Range<usize>) -> PricePanel {
        let cut = |s: &Vec<Vec<f64>>| s.iter().map(|v| v[range.clone()].to_vec()).collect();
        PricePanel {
            assets: self.assets.clone(),
            calendar: self.calendar[range.clone()].to_vec(),
            closes: cut(&self.closes),
            volumes: cut(&self.volumes),
            caps: cut(&self.caps),
        }
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    symbol: String,
    date: String,
    close: String,
    volume: String,
    market_cap: String,
}

fn parse_row(row: &CsvRow) -> std::result::Result<Bar, String> {
    let date =
        NaiveDate::parse_from_str(row.date.trim(), "%Y-%m-%d").map_err(|e| format!("bad date {:?}: {e}", row.date))?;
    let close: f64 = row
        .close
        .trim()
        .parse()
        .map_err(|_| format!("bad close {:?} on {date}", row.close))?;
    if !(close.is_finite() && close > 0.0) {
        return Err(format!("non-positive close {close} on {date}"));
    }
    let volume: f64 = row
        .volume
        .trim()
        .parse()
        .map_err(|_| format!("bad volume {:?} on {date}", row.volume))?;
    if !(volume.is_finite() && volume >= 0.0) {
        return Err(format!("negative volume {volume} on {date}"));
    }
    let cap = row.market_cap.trim();
    let market_cap = if cap.is_empty() {
        None
    } else {
        let v: f64 = cap.parse().map_err(|_| format!("bad market_cap {cap:?} on {date}"))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(format!("negative market_cap {v} on {date}"));
        }
        Some(v)
    };
    Ok(Bar {
        date,
        close,
        volume,
        market_cap,
    })
}

/// Loads a panel and reports which assets were rejected for unparseable rows.
pub fn read_panel(path: &Path, format: DataFormat) -> Result<(PricePanel, Vec<Rejection>)> {
    let DataFormat::Csv = format;
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader.headers().map_err(|e| Error::SchemaViolation {
        row: 1,
        message: e.to_string(),
    })?;
    if header.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != CSV_HEADER {
        return Err(Error::SchemaViolation {
            row: 1,
            message: format!("expected header {:?}, found {:?}", CSV_HEADER.join(","), got.join(",")),
        });
    }

    let mut series: BTreeMap<String, Vec<Bar>> = BTreeMap::new();
    let mut bad: BTreeMap<String, String> = BTreeMap::new();
    for record in reader.deserialize::<CsvRow>() {
        let row = record.map_err(|e| Error::SchemaViolation {
            row: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let symbol = row.symbol.trim().to_string();
        if symbol.is_empty() {
            return Err(Error::SchemaViolation {
                row: 0,
                message: "empty symbol".into(),
            });
        }
        if bad.contains_key(&symbol) {
            continue;
        }
        match parse_row(&row) {
            Ok(bar) => series.entry(symbol).or_default().push(bar),
            Err(reason) => {
                series.remove(&symbol);
                bad.insert(symbol, reason);
            }
        }
    }

    for (symbol, bars) in series.iter_mut() {
        bars.sort_by_key(|b| b.date);
        if let Some(w) = bars.windows(2).find(|w| w[0].date == w[1].date) {
            bad.insert(symbol.clone(), format!("duplicate date {}", w[0].date));
        }
    }
    series.retain(|s, _| !bad.contains_key(s));

    let rejections: Vec<Rejection> = bad
        .into_iter()
        .map(|(symbol, reason)| Rejection { symbol, reason })
        .collect();
    for r in &rejections {
        warn!(symbol = %r.symbol, reason = %r.reason, "asset rejected");
    }
    if series.is_empty() {
        return Err(Error::EmptyPanel);
    }
    Ok((PricePanel::from_bars(series)?, rejections))
}

/// Loads a panel from a `symbol,date,close,volume,market_cap` file.
pub fn load_panel(path: &Path, format: DataFormat) -> Result<PricePanel> {
    read_panel(path, format).map(|(panel, _)| panel)
}

/// Writes the panel in the load schema, one row per present bar, sorted by
/// symbol then date.
pub fn write_panel(panel: &PricePanel, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "{}", CSV_HEADER.join(",")).map_err(io)?;
    let mut order: Vec<usize> = (0..panel.n_assets()).collect();
    order.sort_by(|&a, &b| panel.assets[a].cmp(&panel.assets[b]));
    for a in order {
        for (k, date) in panel.calendar.iter().enumerate() {
            let close = panel.closes[a][k];
            if close.is_nan() {
                continue;
            }
            let volume = panel.volumes[a][k];
            let volume = if volume.is_nan() { 0.0 } else { volume };
            let cap = panel.caps[a][k];
            let cap = if cap.is_nan() { String::new() } else { cap.to_string() };
            writeln!(out, "{},{},{},{},{}", panel.assets[a], date, close, volume, cap).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Drops suspended or illiquid assets and fills the remaining gaps.
///
/// An asset is dropped when its fraction of missing bars exceeds
/// `max_missing_frac` or its average daily volume (missing counted as zero)
/// is below `min_adv`. Survivors get prices and caps forward-filled (a leading
/// gap takes the first observed value) and volumes zero-filled.
pub fn clean_panel(panel: &PricePanel, max_missing_frac: f64, min_adv: f64) -> Result<PricePanel> {
    if !(0.0..1.0).contains(&max_missing_frac) {
        return Err(Error::InvalidArgument(format!(
            "max_missing_frac must be in [0, 1), got {max_missing_frac}"
        )));
    }
    if !(min_adv >= 0.0) {
        return Err(Error::InvalidArgument(format!("min_adv must be >= 0, got {min_adv}")));
    }
    let n = panel.n_dates() as f64;
    let keep: Vec<usize> = (0..panel.n_assets())
        .filter(|&a| {
            let frac = panel.missing_count(a) as f64 / n;
            let adv = panel.average_daily_volume(a);
            let ok = frac <= max_missing_frac && adv >= min_adv;
            if !ok {
                debug!(symbol = %panel.assets[a], missing_frac = frac, adv, "asset dropped");
            }
            ok
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let mut out = panel.select_assets(&keep);
    for a in 0..out.n_assets() {
        let filled = fill_forward(&mut out.closes[a]);
        fill_forward(&mut out.caps[a]);
        for v in out.volumes[a].iter_mut().filter(|v| v.is_nan()) {
            *v = 0.0;
        }
        if filled > 0 {
            debug!(symbol = %out.assets[a], bars = filled, "forward-filled missing bars");
        }
    }
    Ok(out)
}

/// Forward-fills `NaN`s; a leading run takes the first observed value.
/// Returns the number of filled entries. An all-`NaN` series is left as is.
fn fill_forward(xs: &mut [f64]) -> usize {
    let Some(first) = xs.iter().position(|x| !x.is_nan()) else {
        return 0;
    };
    let mut filled = first;
    let seed = xs[first];
    xs[..first].fill(seed);
    let mut last = seed;
    for x in xs[first..].iter_mut() {
        if x.is_nan() {
            *x = last;
            filled += 1;
        } else {
            last = *x;
        }
    }
    filled
}

/// Simple close-to-close returns per asset; the first date is consumed.
pub fn to_returns(panel: &PricePanel) -> Result<ReturnPanel> {
    if panel.n_dates() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: panel.n_dates(),
        });
    }
    Ok(ReturnPanel {
        assets: panel.assets.clone(),
        calendar: panel.calendar[1..].to_vec(),
        returns: panel.closes.iter().map(|c| simple_returns(c)).collect(),
    })
}

pub fn simple_returns(closes: &[f64]) -> Vec<f64> {
    closes.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

pub fn log_returns(closes: &[f64]) -> Vec<f64> {
    closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
}
