//! Daily backtest loop: select, allocate, scale by risk exposure, pay
//! costs, mark to market.
//!
//! Timing: the trade at the close of bar `t` uses data through bar `t - 1`
//! and earns the bar `t -> t + 1` return. Costs are charged on the traded
//! notional measured against pre-cost targets, and positions are then sized
//! on post-cost equity, so for every period
//! `V[t+1] = V[t] * (1 + exposure[t] * r_portfolio[t]) - cost[t]`
//! where `exposure[t]` is the invested fraction of pre-trade equity.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use tracing::debug;

use crate::error::{Error, Result};
use crate::market_data::PricePanel;
use crate::metrics::{self, MetricsBlock, MetricsInputs};
use crate::optimizer::{self, apply_turnover_cap, AssetStats, FrontierPoint, Objective, OptimizerConfig, WeightVector};
use crate::risk::{RiskConfig, RiskController, RiskState};
use crate::selection::{self, SelectionConfig, UniverseSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SharpeBlend,
    EqualWeight,
    CapWeighted,
    MeanVariance,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::SharpeBlend,
        Strategy::EqualWeight,
        Strategy::CapWeighted,
        Strategy::MeanVariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::SharpeBlend => "sharpe_blend",
            Strategy::EqualWeight => "equal_weight",
            Strategy::CapWeighted => "cap_weighted",
            Strategy::MeanVariance => "mean_variance",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rebalance {
    #[default]
    Daily,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestConfig {
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub initial_capital: f64,
    pub rebalance: Rebalance,
    pub cost_bps_per_side: f64,
    pub strategy: Strategy,
    /// Run the main strategy through the drawdown controller.
    pub risk_control: bool,
    /// Also run benchmark strategies through the controller.
    pub benchmarks_use_risk: bool,
    /// Return window for optimizer statistics; defaults to the selection lookback.
    pub stats_window: Option<usize>,
    /// Cap each position at this multiple of trailing ADV x price. Off when unset.
    pub adv_participation: Option<f64>,
    /// Tail fraction for VaR/CVaR.
    pub tail_alpha: f64,
    #[serde(skip)]
    pub selection: SelectionConfig,
    #[serde(skip)]
    pub optimizer: OptimizerConfig,
    #[serde(skip)]
    pub risk: RiskConfig,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            start: None,
            end: None,
            initial_capital: 1_000_000.0,
            rebalance: Rebalance::Daily,
            cost_bps_per_side: 5.0,
            strategy: Strategy::SharpeBlend,
            risk_control: true,
            benchmarks_use_risk: false,
            stats_window: None,
            adv_participation: None,
            tail_alpha: 0.05,
            selection: SelectionConfig::default(),
            optimizer: OptimizerConfig::default(),
            risk: RiskConfig::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        if let (Some(s), Some(e)) = (self.start, self.end) {
            if s >= e {
                return Err(Error::invalid("backtest.start", "must be before backtest.end"));
            }
        }
        if !(self.initial_capital > 0.0) {
            return Err(Error::invalid("backtest.initial_capital", "must be > 0"));
        }
        if !(self.cost_bps_per_side >= 0.0) {
            return Err(Error::invalid("backtest.cost_bps_per_side", "must be >= 0"));
        }
        if let Some(w) = self.stats_window {
            if w < 2 {
                return Err(Error::invalid("backtest.stats_window", "must be >= 2"));
            }
        }
        if let Some(p) = self.adv_participation {
            if !(p > 0.0) {
                return Err(Error::invalid("backtest.adv_participation", "must be > 0"));
            }
        }
        if !(self.tail_alpha > 0.0 && self.tail_alpha < 0.5) {
            return Err(Error::invalid("backtest.tail_alpha", "must be in (0, 0.5)"));
        }
        self.selection.validate()?;
        self.optimizer.validate()?;
        self.risk.validate()
    }

    pub fn stats_window(&self) -> usize {
        self.stats_window.unwrap_or(self.selection.lookback)
    }

    fn uses_risk(&self, strategy: Strategy) -> bool {
        if strategy == self.strategy {
            self.risk_control
        } else {
            self.benchmarks_use_risk
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatedWeights {
    pub date: NaiveDate,
    pub weights: WeightVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub strategy: String,
    /// `dates[k]` is the close at which `equity_curve[k]` is measured.
    pub dates: Vec<NaiveDate>,
    pub equity_curve: Vec<f64>,
    /// Per period `k -> k + 1`; one shorter than the curve.
    pub period_returns: Vec<f64>,
    /// Invested fraction of pre-trade equity.
    pub exposures: Vec<f64>,
    /// Controller multiplier before cost and ADV adjustments.
    pub risk_exposures: Vec<f64>,
    pub costs_paid: Vec<f64>,
    /// Return of the invested sleeve; zero when fully in cash.
    pub portfolio_returns: Vec<f64>,
    /// Target allocation at each trade; an empty vector means all cash.
    pub weights_history: Vec<DatedWeights>,
    pub risk_trace: Option<Vec<RiskState>>,
    pub metrics: MetricsBlock,
}

impl BacktestReport {
    pub fn final_equity(&self) -> f64 {
        *self.equity_curve.last().expect("non-empty curve")
    }

    /// Target allocations on invested days, in date order.
    pub fn allocations(&self) -> Vec<WeightVector> {
        self.weights_history.iter().map(|d| d.weights.clone()).collect()
    }
}

/// Engine parameters independent of how target weights are chosen.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    pub panel: &'a PricePanel,
    /// Calendar position of the first trade.
    pub first: usize,
    /// Calendar position of the final mark.
    pub last: usize,
    pub initial_capital: f64,
    pub cost_bps_per_side: f64,
    pub risk: Option<RiskConfig>,
    pub turnover_cap: f64,
    pub adv_participation: Option<(f64, usize)>,
}

/// Raw output of [`Simulation::run`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub dates: Vec<NaiveDate>,
    pub equity: Vec<f64>,
    pub exposures: Vec<f64>,
    pub risk_exposures: Vec<f64>,
    pub costs: Vec<f64>,
    pub portfolio_returns: Vec<f64>,
    pub weights_history: Vec<DatedWeights>,
    pub risk_trace: Option<Vec<RiskState>>,
}

impl Trace {
    pub fn period_returns(&self) -> Vec<f64> {
        metrics::equity_returns(&self.equity)
    }
}

impl Simulation<'_> {
    /// Runs the loop. `allocate(t)` returns the target allocation for the
    /// trade at close `t` (using data through `t - 1`), or `None` for cash.
    pub fn run(&self, mut allocate: impl FnMut(usize) -> Result<Option<WeightVector>>) -> Result<Trace> {
        let panel = self.panel;
        if self.first == 0 || self.first >= self.last || self.last >= panel.n_dates() {
            return Err(Error::InvalidArgument(format!(
                "simulation span {}..={} invalid for {} dates",
                self.first,
                self.last,
                panel.n_dates()
            )));
        }
        let n_assets = panel.n_assets();
        let cost_rate = self.cost_bps_per_side * 1e-4;
        let mut holdings = vec![0.0; n_assets];
        let mut cash = self.initial_capital;
        let mut controller = self
            .risk
            .clone()
            .map(|cfg| RiskController::new(cfg, self.initial_capital));
        let periods = self.last - self.first;
        let mut trace = Trace {
            dates: panel.calendar[self.first..=self.last].to_vec(),
            equity: Vec::with_capacity(periods + 1),
            exposures: Vec::with_capacity(periods),
            risk_exposures: Vec::with_capacity(periods),
            costs: Vec::with_capacity(periods),
            portfolio_returns: Vec::with_capacity(periods),
            weights_history: Vec::with_capacity(periods),
            risk_trace: controller.as_ref().map(|_| Vec::with_capacity(periods)),
        };
        let mut prev_alloc = WeightVector::default();
        let mut targets = vec![0.0; n_assets];

        for t in self.first..self.last {
            let equity = cash + holdings.iter().sum::<f64>();
            trace.equity.push(equity);

            let risk_exposure = match controller.as_mut() {
                Some(c) => {
                    let e = c.observe(equity)?;
                    if let Some(rt) = trace.risk_trace.as_mut() {
                        rt.push(*c.state());
                    }
                    e
                }
                None => 1.0,
            };

            let alloc = match allocate(t)? {
                Some(target) => apply_turnover_cap(&prev_alloc, &target, self.turnover_cap),
                None => WeightVector::default(),
            };
            targets.fill(0.0);
            for (symbol, w) in alloc.iter() {
                let a = panel
                    .asset_index(symbol)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown symbol {symbol}")))?;
                targets[a] = risk_exposure * w * equity;
            }
            if let Some((participation, lookback)) = self.adv_participation {
                for (a, target) in targets.iter_mut().enumerate() {
                    if *target > 0.0 {
                        let lo = t.saturating_sub(lookback);
                        let adv = panel.volumes[a][lo..t].iter().sum::<f64>() / (t - lo) as f64;
                        let limit = participation * adv * panel.closes[a][t];
                        *target = target.min(limit);
                    }
                }
            }
            let traded: f64 = targets.iter().zip(&holdings).map(|(x, h)| (x - h).abs()).sum();
            let cost = cost_rate * traded;
            let scale = (equity - cost) / equity;
            let mut invested = 0.0;
            for (h, x) in holdings.iter_mut().zip(&targets) {
                *h = x * scale;
                invested += *h;
            }
            cash = equity - cost - invested;

            // mark to the next close
            let mut pnl = 0.0;
            for (a, h) in holdings.iter_mut().enumerate() {
                if *h != 0.0 {
                    let r = panel.closes[a][t + 1] / panel.closes[a][t] - 1.0;
                    pnl += *h * r;
                    *h *= 1.0 + r;
                }
            }
            trace.exposures.push(invested / equity);
            trace.risk_exposures.push(risk_exposure);
            trace.costs.push(cost);
            trace
                .portfolio_returns
                .push(if invested > 0.0 { pnl / invested } else { 0.0 });
            trace.weights_history.push(DatedWeights {
                date: panel.calendar[t],
                weights: alloc.clone(),
            });
            prev_alloc = alloc;
        }
        trace.equity.push(cash + holdings.iter().sum::<f64>());
        Ok(trace)
    }
}

/// Target weights for one strategy over a non-empty universe.
///
/// `caps` holds the members' market caps in universe order; it is only read
/// by the cap-weighted strategy.
pub fn strategy_weights(
    strategy: Strategy,
    universe: &UniverseSnapshot,
    stats: &AssetStats,
    cfg: &BacktestConfig,
    caps: &[f64],
) -> Result<WeightVector> {
    let symbols: Vec<String> = universe.members.iter().map(|m| m.asset.symbol.clone()).collect();
    if symbols.is_empty() {
        return Err(Error::EmptyUniverse);
    }
    if symbols.len() == 1 {
        return Ok(WeightVector::single(&symbols[0]));
    }
    let n = symbols.len() as f64;
    match strategy {
        Strategy::EqualWeight => Ok(WeightVector::new(symbols.clone(), vec![1.0 / n; symbols.len()])),
        Strategy::CapWeighted => {
            let clean: Vec<f64> = caps
                .iter()
                .map(|c| if c.is_finite() && *c > 0.0 { *c } else { 0.0 })
                .collect();
            let total: f64 = clean.iter().sum();
            if total > 0.0 {
                Ok(WeightVector::new(symbols, clean.iter().map(|c| c / total).collect()))
            } else {
                debug!("no market caps in universe; falling back to equal weight");
                Ok(WeightVector::new(symbols.clone(), vec![1.0 / n; symbols.len()]))
            }
        }
        Strategy::SharpeBlend => optimizer::blend_weights(stats, cfg.optimizer.blend_alpha).map(|b| b.weights),
        Strategy::MeanVariance => optimizer::solve_mean_variance(stats, &cfg.optimizer, Objective::Utility),
    }
}

/// Resolves the configured date range into calendar positions
/// `(first trade, final mark)`.
pub fn resolve_span(panel: &PricePanel, cfg: &BacktestConfig) -> Result<(usize, usize)> {
    let warmup = cfg.selection.lookback.max(cfg.stats_window()) + 1;
    let first = match cfg.start {
        Some(d) => panel.calendar.partition_point(|x| *x < d),
        None => warmup,
    };
    let last = match cfg.end {
        Some(d) => panel.calendar.partition_point(|x| *x <= d).saturating_sub(1),
        None => panel.n_dates().saturating_sub(1),
    };
    if first < warmup {
        return Err(Error::InsufficientHistory {
            needed: warmup + 1,
            available: first + 1,
        });
    }
    if first >= last || last >= panel.n_dates() {
        return Err(Error::InsufficientHistory {
            needed: first + 2,
            available: panel.n_dates(),
        });
    }
    Ok((first, last))
}

/// Return statistics of `members` over the `window` returns ending at bar `end`.
pub fn member_stats(
    panel: &PricePanel,
    members: &[usize],
    end: usize,
    window: usize,
    risk_free: f64,
) -> Result<AssetStats> {
    if end < window {
        return Err(Error::InsufficientHistory {
            needed: window + 1,
            available: end + 1,
        });
    }
    let series: Vec<Vec<f64>> = members
        .iter()
        .map(|&a| crate::market_data::simple_returns(&panel.closes[a][end - window..=end]))
        .collect();
    let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
    let symbols = members.iter().map(|&a| panel.assets[a].clone()).collect();
    AssetStats::from_series(symbols, &refs, risk_free)
}

/// Allocation for `strategy` at trade bar `t`, using data through `t - 1`.
/// `None` means hold cash.
pub fn allocation_at(
    panel: &PricePanel,
    t: usize,
    strategy: Strategy,
    cfg: &BacktestConfig,
) -> Result<Option<WeightVector>> {
    let signal = t - 1;
    let universe = match selection::select_at(panel, signal, &cfg.selection) {
        Ok(u) => u,
        Err(Error::EmptyUniverse) => return Ok(None),
        Err(e) => return Err(e),
    };
    let members: Vec<usize> = universe
        .members
        .iter()
        .map(|m| panel.asset_index(&m.asset.symbol).expect("member from panel"))
        .collect();
    let stats = member_stats(panel, &members, signal, cfg.stats_window(), cfg.optimizer.risk_free)?;
    if stats.degenerate.len() == stats.n() && members.len() > 1 {
        return Ok(None);
    }
    let caps: Vec<f64> = members.iter().map(|&a| panel.caps[a][signal]).collect();
    strategy_weights(strategy, &universe, &stats, cfg, &caps).map(Some)
}

/// Universe at the final bar and the utility frontier over its trailing
/// statistics, one point per configured risk aversion.
pub fn latest_frontier(panel: &PricePanel, cfg: &BacktestConfig) -> Result<(UniverseSnapshot, Vec<FrontierPoint>)> {
    let end = panel.n_dates().checked_sub(1).ok_or(Error::EmptyPanel)?;
    let universe = selection::select_at(panel, end, &cfg.selection)?;
    let members: Vec<usize> = universe
        .members
        .iter()
        .map(|m| panel.asset_index(&m.asset.symbol).expect("member from panel"))
        .collect();
    let stats = member_stats(panel, &members, end, cfg.stats_window(), cfg.optimizer.risk_free)?;
    let points = optimizer::efficient_frontier(&stats, &cfg.optimizer, &cfg.optimizer.frontier_grid())?;
    Ok((universe, points))
}

/// Cap-weighted return of every panel asset, per period of the span;
/// equal-weighted when no caps are available on a bar.
pub fn market_returns(panel: &PricePanel, first: usize, last: usize) -> Vec<f64> {
    (first..last)
        .map(|t| {
            let (mut num, mut den, mut eq, mut n) = (0.0, 0.0, 0.0, 0.0);
            for a in 0..panel.n_assets() {
                let r = panel.closes[a][t + 1] / panel.closes[a][t] - 1.0;
                if !r.is_finite() {
                    continue;
                }
                let cap = panel.caps[a][t];
                if cap.is_finite() && cap > 0.0 {
                    num += cap * r;
                    den += cap;
                }
                eq += r;
                n += 1.0;
            }
            if den > 0.0 {
                num / den
            } else if n > 0.0 {
                eq / n
            } else {
                0.0
            }
        })
        .collect()
}

/// Runs one strategy over the configured span.
pub fn run_strategy(panel: &PricePanel, cfg: &BacktestConfig, strategy: Strategy) -> Result<BacktestReport> {
    cfg.validate()?;
    let (first, last) = resolve_span(panel, cfg)?;
    let sim = Simulation {
        panel,
        first,
        last,
        initial_capital: cfg.initial_capital,
        cost_bps_per_side: cfg.cost_bps_per_side,
        risk: cfg.uses_risk(strategy).then(|| cfg.risk.clone()),
        turnover_cap: cfg.optimizer.turnover_cap,
        adv_participation: cfg.adv_participation.map(|p| (p, cfg.selection.lookback)),
    };
    let trace = sim.run(|t| allocation_at(panel, t, strategy, cfg))?;
    let market = market_returns(panel, first, last);
    finish_report(strategy.name(), trace, cfg, Some(&market))
}

/// Runs the configured strategy.
pub fn run_backtest(panel: &PricePanel, cfg: &BacktestConfig) -> Result<BacktestReport> {
    run_strategy(panel, cfg, cfg.strategy)
}

/// Runs the configured strategy followed by the remaining three.
pub fn run_comparison(panel: &PricePanel, cfg: &BacktestConfig) -> Result<Vec<BacktestReport>> {
    let mut order = vec![cfg.strategy];
    order.extend(Strategy::ALL.iter().copied().filter(|s| *s != cfg.strategy));
    order.into_iter().map(|s| run_strategy(panel, cfg, s)).collect()
}

pub(crate) fn finish_report(
    name: &str,
    trace: Trace,
    cfg: &BacktestConfig,
    benchmark: Option<&[f64]>,
) -> Result<BacktestReport> {
    let allocations: Vec<WeightVector> = trace
        .weights_history
        .iter()
        .filter(|d| !d.weights.is_empty())
        .map(|d| d.weights.clone())
        .collect();
    let inputs = MetricsInputs {
        risk_free: cfg.optimizer.risk_free,
        tail_alpha: cfg.tail_alpha,
        benchmark,
        weights_history: Some(&allocations),
        ..MetricsInputs::default()
    };
    let metrics = metrics::compute(&trace.equity, &inputs)?;
    Ok(BacktestReport {
        strategy: name.to_string(),
        period_returns: trace.period_returns(),
        dates: trace.dates,
        equity_curve: trace.equity,
        exposures: trace.exposures,
        risk_exposures: trace.risk_exposures,
        costs_paid: trace.costs,
        portfolio_returns: trace.portfolio_returns,
        weights_history: trace.weights_history,
        risk_trace: trace.risk_trace,
        metrics,
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `equity.csv`, `weights.csv`, `metrics.json` and, when the
/// controller ran, `risk.csv` under `dir`.
pub fn write_report(report: &BacktestReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let path = dir.join("equity.csv");
    let mut out = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    writeln!(out, "date,equity,exposure,cost").map_err(io_err(&path))?;
    for (k, (date, equity)) in report.dates.iter().zip(&report.equity_curve).enumerate() {
        match (report.exposures.get(k), report.costs_paid.get(k)) {
            (Some(e), Some(c)) => writeln!(out, "{date},{equity},{e},{c}"),
            _ => writeln!(out, "{date},{equity},,"),
        }
        .map_err(io_err(&path))?;
    }
    out.flush().map_err(io_err(&path))?;

    let path = dir.join("weights.csv");
    let mut out = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    writeln!(out, "date,symbol,weight").map_err(io_err(&path))?;
    for dw in &report.weights_history {
        let mut rows: Vec<(&str, f64)> = dw.weights.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        for (symbol, w) in rows {
            writeln!(out, "{},{symbol},{w}", dw.date).map_err(io_err(&path))?;
        }
    }
    out.flush().map_err(io_err(&path))?;

    let path = dir.join("metrics.json");
    let json = serde_json::to_string_pretty(&report.metrics).expect("metrics serialize");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;

    if let Some(trace) = &report.risk_trace {
        let path = dir.join("risk.csv");
        let mut out = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
        writeln!(out, "date,equity,peak,dd,exposure,cooldown").map_err(io_err(&path))?;
        for ((date, equity), s) in report.dates.iter().zip(&report.equity_curve).zip(trace) {
            writeln!(
                out,
                "{date},{equity},{},{},{},{}",
                s.peak, s.drawdown, s.exposure, s.cooldown_remaining
            )
            .map_err(io_err(&path))?;
        }
        out.flush().map_err(io_err(&path))?;
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per report, one column per metrics field.
pub fn write_comparison(reports: &[BacktestReport], path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    writeln!(out, "strategy,{}", MetricsBlock::FIELDS.join(",")).map_err(io_err(path))?;
    for r in reports {
        let cells: Vec<String> = r.metrics.values().iter().map(|v| fmt_opt(*v)).collect();
        writeln!(out, "{},{}", r.strategy, cells.join(",")).map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::{AssetLabel, Member, Trend};

    fn dates(n: usize) -> Vec<NaiveDate> {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        (0..n).map(|i| start + chrono::Days::new(i as u64)).collect()
    }

    fn one_asset(closes: Vec<f64>) -> PricePanel {
        let n = closes.len();
        PricePanel {
            assets: vec!["A".into()],
            calendar: dates(n),
            closes: vec![closes],
            volumes: vec![vec![1e6; n]],
            caps: vec![vec![1e9; n]],
        }
    }

    fn sim(panel: &PricePanel, cost_bps: f64, risk: Option<RiskConfig>) -> Simulation<'_> {
        Simulation {
            panel,
            first: 1,
            last: panel.n_dates() - 1,
            initial_capital: 100.0,
            cost_bps_per_side: cost_bps,
            risk,
            turnover_cap: 2.0,
            adv_participation: None,
        }
    }

    #[test]
    fn zero_cost_single_asset_compounds() {
        let closes = vec![10.0, 10.5, 10.2, 10.9, 11.3, 10.8];
        let p = one_asset(closes.clone());
        let trace = sim(&p, 0.0, None).run(|_| Ok(Some(WeightVector::single("A")))).unwrap();
        let expected = 100.0 * closes[5] / closes[1];
        assert!((trace.equity.last().unwrap() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn round_trip_costs_both_sides() {
        let p = one_asset(vec![10.0; 5]);
        let trace = sim(&p, 5.0, None)
            .run(|t| Ok((t == 1).then(|| WeightVector::single("A"))))
            .unwrap();
        let expected = 100.0 * (1.0 - 0.0005f64).powi(2);
        assert!((trace.equity.last().unwrap() - expected).abs() < 1e-12);
        assert_eq!(trace.exposures[1], 0.0);
        assert!(trace.costs[1] > 0.0 && trace.costs[2] == 0.0);
    }

    #[test]
    fn hard_stop_liquidates_next_trade() {
        // day 2 close drops 10%: the trade at that close goes to cash and pays cost
        let p = one_asset(vec![10.0, 10.0, 10.0, 9.0, 9.0, 9.0]);
        let trace = sim(&p, 5.0, Some(RiskConfig::default()))
            .run(|_| Ok(Some(WeightVector::single("A"))))
            .unwrap();
        assert!(trace.exposures[1] > 0.99);
        assert_eq!(trace.exposures[2], 0.0);
        assert_eq!(trace.risk_exposures[2], 0.0);
        assert!(trace.costs[2] > 0.0);
    }

    #[test]
    fn accounting_identity_holds() {
        let p = one_asset(vec![10.0, 10.3, 9.9, 10.6, 10.1, 10.4, 10.2]);
        let trace = sim(&p, 5.0, Some(RiskConfig::default()))
            .run(|t| Ok((t % 3 != 0).then(|| WeightVector::single("A"))))
            .unwrap();
        for k in 0..trace.costs.len() {
            let lhs = trace.equity[k + 1];
            let rhs = trace.equity[k] * (1.0 + trace.exposures[k] * trace.portfolio_returns[k]) - trace.costs[k];
            assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs());
        }
    }

    fn snapshot(symbols: &[&str]) -> UniverseSnapshot {
        UniverseSnapshot {
            date: dates(1)[0],
            members: symbols
                .iter()
                .enumerate()
                .map(|(i, s)| Member {
                    rank: i + 1,
                    asset: AssetLabel {
                        symbol: s.to_string(),
                        label: Trend::Up,
                        slope: 0.0,
                        vol: 0.0,
                        rolling_sharpe: None,
                    },
                    cap_rank: i + 1,
                    volume_rank: i + 1,
                })
                .collect(),
        }
    }

    fn stats(symbols: &[&str]) -> AssetStats {
        let series: Vec<Vec<f64>> = (0..symbols.len())
            .map(|i| vec![0.01 * (i + 1) as f64, -0.005, 0.002 * i as f64])
            .collect();
        let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
        AssetStats::from_series(symbols.iter().map(|s| s.to_string()).collect(), &refs, 0.0).unwrap()
    }

    #[test]
    fn strategy_weight_examples() {
        let cfg = BacktestConfig::default();
        let four = ["A", "B", "C", "D"];
        let w = strategy_weights(Strategy::EqualWeight, &snapshot(&four), &stats(&four), &cfg, &[1.0; 4]).unwrap();
        assert_eq!(w.weights, vec![0.25; 4]);
        let two = ["A", "B"];
        let w = strategy_weights(
            Strategy::CapWeighted,
            &snapshot(&two),
            &stats(&two),
            &cfg,
            &[300.0, 100.0],
        )
        .unwrap();
        assert_eq!(w.weights, vec![0.75, 0.25]);
        for s in Strategy::ALL {
            let w = strategy_weights(s, &snapshot(&["A"]), &stats(&["A"]), &cfg, &[1.0]).unwrap();
            assert_eq!(w.weights, vec![1.0]);
        }
    }

    #[test]
    fn config_validation_names_field() {
        let cfg = BacktestConfig {
            cost_bps_per_side: -1.0,
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("cost_bps_per_side"), "{err}");
    }
}
