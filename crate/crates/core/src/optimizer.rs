//! Allocation: blended inverse-volatility/Sharpe weights, a long-only
//! mean-variance solver over the bounded simplex, and the turnover cap.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, InfeasibleReason, Result};
use crate::market_data::ReturnPanel;
use crate::stats::{mean, sample_cov};

/// Budget-normalized allocation keyed by symbol.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightVector {
    pub symbols: Vec<String>,
    pub weights: Vec<f64>,
}

impl WeightVector {
    pub fn new(symbols: Vec<String>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(symbols.len(), weights.len());
        WeightVector { symbols, weights }
    }

    pub fn single(symbol: &str) -> Self {
        WeightVector::new(vec![symbol.to_string()], vec![1.0])
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn get(&self, symbol: &str) -> f64 {
        self.symbols
            .iter()
            .position(|s| s == symbol)
            .map_or(0.0, |i| self.weights[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.symbols
            .iter()
            .map(String::as_str)
            .zip(self.weights.iter().copied())
    }

    /// Sum of absolute weight changes, symbols absent on one side counting as zero.
    pub fn turnover_to(&self, next: &WeightVector) -> f64 {
        let (_, a, b) = align(self, next);
        a.iter().zip(&b).map(|(x, y)| (y - x).abs()).sum()
    }

    /// Budget, long-only and bounds check used by tests and debug assertions.
    pub fn is_admissible(&self, lower: &[f64], upper: &[f64], tol: f64) -> bool {
        (self.sum() - 1.0).abs() <= tol
            && self
                .weights
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(w, (l, u))| *w >= -tol && *w >= l - tol && *w <= u + tol)
    }
}

/// Union of both symbol sets (sorted) with each side's weights on it.
fn align(a: &WeightVector, b: &WeightVector) -> (Vec<String>, Vec<f64>, Vec<f64>) {
    let mut merged: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for (s, w) in a.iter() {
        merged.entry(s).or_default().0 += w;
    }
    for (s, w) in b.iter() {
        merged.entry(s).or_default().1 += w;
    }
    let mut symbols = Vec::with_capacity(merged.len());
    let mut wa = Vec::with_capacity(merged.len());
    let mut wb = Vec::with_capacity(merged.len());
    for (s, (x, y)) in merged {
        symbols.push(s.to_string());
        wa.push(x);
        wb.push(y);
    }
    (symbols, wa, wb)
}

/// Per-asset mean, volatility, Sharpe and covariance over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetStats {
    pub symbols: Vec<String>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub sharpe: Vec<f64>,
    /// Row-major `n x n` sample covariance.
    pub cov: Vec<f64>,
    /// Symbols with zero variance over the window; their Sharpe is `NaN`.
    pub degenerate: Vec<String>,
}

impl AssetStats {
    pub fn n(&self) -> usize {
        self.symbols.len()
    }

    pub fn cov_at(&self, i: usize, j: usize) -> f64 {
        self.cov[i * self.n() + j]
    }

    /// Builds stats from aligned return series of equal length.
    pub fn from_series(symbols: Vec<String>, series: &[&[f64]], risk_free: f64) -> Result<Self> {
        let n = symbols.len();
        if n == 0 {
            return Err(Error::NoAssets);
        }
        let len = series[0].len();
        if len < 2 || series.iter().any(|s| s.len() != len) {
            return Err(Error::InsufficientHistory {
                needed: 2,
                available: series.iter().map(|s| s.len()).min().unwrap_or(0),
            });
        }
        let mu: Vec<f64> = series.iter().map(|s| mean(s)).collect();
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let c = sample_cov(series[i], series[j]);
                cov[i * n + j] = c;
                cov[j * n + i] = c;
            }
        }
        let sigma: Vec<f64> = (0..n).map(|i| cov[i * n + i].max(0.0).sqrt()).collect();
        let mut degenerate = Vec::new();
        let sharpe = (0..n)
            .map(|i| {
                if sigma[i] > 0.0 {
                    (mu[i] - risk_free) / sigma[i]
                } else {
                    degenerate.push(symbols[i].clone());
                    f64::NAN
                }
            })
            .collect();
        Ok(AssetStats {
            symbols,
            mu,
            sigma,
            sharpe,
            cov,
            degenerate,
        })
    }

    pub fn expected_return(&self, w: &[f64]) -> f64 {
        self.mu.iter().zip(w).map(|(m, x)| m * x).sum()
    }

    pub fn variance(&self, w: &[f64]) -> f64 {
        let n = self.n();
        let mut v = 0.0;
        for i in 0..n {
            for j in 0..n {
                v += w[i] * w[j] * self.cov[i * n + j];
            }
        }
        v
    }

    /// Restricts to the named symbols, in the given order.
    pub fn subset(&self, keep: &[usize]) -> AssetStats {
        let n = self.n();
        let mut cov = Vec::with_capacity(keep.len() * keep.len());
        for &i in keep {
            for &j in keep {
                cov.push(self.cov[i * n + j]);
            }
        }
        let symbols: Vec<String> = keep.iter().map(|&i| self.symbols[i].clone()).collect();
        AssetStats {
            degenerate: self
                .degenerate
                .iter()
                .filter(|s| symbols.contains(s))
                .cloned()
                .collect(),
            mu: keep.iter().map(|&i| self.mu[i]).collect(),
            sigma: keep.iter().map(|&i| self.sigma[i]).collect(),
            sharpe: keep.iter().map(|&i| self.sharpe[i]).collect(),
            symbols,
            cov,
        }
    }
}

/// Stats over the trailing `window` returns of every asset in the panel.
///
/// Assets with zero variance are listed in [`AssetStats::degenerate`];
/// [`Error::SingularStats`] is returned only when every asset is degenerate.
pub fn estimate_stats(returns: &ReturnPanel, window: usize, risk_free: f64) -> Result<AssetStats> {
    if window < 2 {
        return Err(Error::InvalidArgument(format!("window must be >= 2, got {window}")));
    }
    let len = returns.calendar.len();
    if len < window {
        return Err(Error::InsufficientHistory {
            needed: window,
            available: len,
        });
    }
    let series: Vec<&[f64]> = returns.returns.iter().map(|r| &r[len - window..]).collect();
    let stats = AssetStats::from_series(returns.assets.clone(), &series, risk_free)?;
    if stats.degenerate.len() == stats.n() {
        return Err(Error::SingularStats);
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MaxReturn,
    MinRisk,
    MaxSharpe,
    Utility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Risk aversion in `E[R] - lambda * Var(R)`.
    pub lambda: f64,
    pub r_min: Option<f64>,
    pub risk_free: f64,
    /// Uniform per-asset weight bounds.
    pub lower: f64,
    pub upper: f64,
    /// Per-symbol `[lower, upper]` overrides.
    pub bounds: BTreeMap<String, [f64; 2]>,
    pub turnover_cap: f64,
    pub blend_alpha: f64,
    /// Frontier grid; empty means 20 log-spaced points.
    pub frontier_lambdas: Vec<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lambda: 10.0,
            r_min: None,
            risk_free: 0.0,
            lower: 0.0,
            upper: 1.0,
            bounds: BTreeMap::new(),
            turnover_cap: 2.0,
            blend_alpha: 0.5,
            frontier_lambdas: Vec::new(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::invalid("optimizer.lambda", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.blend_alpha) {
            return Err(Error::invalid("optimizer.blend_alpha", "must be in [0, 1]"));
        }
        if !(self.turnover_cap >= 0.0) {
            return Err(Error::invalid("optimizer.turnover_cap", "must be >= 0"));
        }
        if !(self.lower >= 0.0 && self.lower <= self.upper) {
            return Err(Error::invalid("optimizer.lower", "need 0 <= lower <= upper"));
        }
        for (s, [l, u]) in &self.bounds {
            if !(*l >= 0.0 && l <= u) {
                return Err(Error::invalid(
                    &format!("optimizer.bounds.{s}"),
                    "need 0 <= lower <= upper",
                ));
            }
        }
        if self.frontier_lambdas.iter().any(|l| !(*l > 0.0)) || self.frontier_lambdas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "optimizer.frontier_lambdas",
                "must be positive and strictly ascending",
            ));
        }
        Ok(())
    }

    pub fn bounds_for(&self, symbols: &[String]) -> (Vec<f64>, Vec<f64>) {
        symbols
            .iter()
            .map(|s| match self.bounds.get(s) {
                Some([l, u]) => (*l, *u),
                None => (self.lower, self.upper),
            })
            .unzip()
    }

    pub fn frontier_grid(&self) -> Vec<f64> {
        if self.frontier_lambdas.is_empty() {
            log_space(0.1, 1000.0, 20)
        } else {
            self.frontier_lambdas.clone()
        }
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut out: Vec<f64> = (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect();
    // keep the endpoints exact
    out[0] = lo;
    out[n - 1] = hi;
    out
}

/// Result of [`blend_weights`].
#[derive(Debug, Clone, PartialEq)]
pub struct Blend {
    pub weights: WeightVector,
    /// Every Sharpe was non-positive, so the Sharpe leg fell back to equal weight.
    pub sharpe_leg_equal: bool,
    /// Zero-variance assets given weight zero.
    pub excluded: Vec<String>,
}

/// `alpha * inverse-vol + (1 - alpha) * positive-Sharpe` weights, each leg
/// normalized to one.
pub fn blend_weights(stats: &AssetStats, alpha: f64) -> Result<Blend> {
    let usable: Vec<usize> = (0..stats.n())
        .filter(|&i| stats.sigma[i] > 0.0 && stats.sigma[i].is_finite())
        .collect();
    if usable.is_empty() {
        return Err(Error::NoAssets);
    }
    let inv: Vec<f64> = usable.iter().map(|&i| 1.0 / stats.sigma[i]).collect();
    let inv_sum: f64 = inv.iter().sum();
    let pos: Vec<f64> = usable.iter().map(|&i| stats.sharpe[i].max(0.0)).collect();
    let pos_sum: f64 = pos.iter().sum();
    let sharpe_leg_equal = !(pos_sum > 0.0);
    let k = usable.len() as f64;

    let mut weights = vec![0.0; stats.n()];
    for (j, &i) in usable.iter().enumerate() {
        let w_iv = inv[j] / inv_sum;
        let w_s = if sharpe_leg_equal { 1.0 / k } else { pos[j] / pos_sum };
        weights[i] = alpha * w_iv + (1.0 - alpha) * w_s;
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    if sharpe_leg_equal {
        tracing::debug!("no positive Sharpe in blend; Sharpe leg set to equal weight");
    }
    Ok(Blend {
        weights: WeightVector::new(stats.symbols.clone(), weights),
        sharpe_leg_equal,
        excluded: (0..stats.n())
            .filter(|i| !usable.contains(i))
            .map(|i| stats.symbols[i].clone())
            .collect(),
    })
}

/// Moves from `prev` toward `target` by the largest fraction whose turnover
/// stays within `t_max`. An empty `prev` (all cash) is not capped.
pub fn apply_turnover_cap(prev: &WeightVector, target: &WeightVector, t_max: f64) -> WeightVector {
    if prev.is_empty() {
        return target.clone();
    }
    let (symbols, a, b) = align(prev, target);
    let turnover: f64 = a.iter().zip(&b).map(|(x, y)| (y - x).abs()).sum();
    let theta = if turnover <= t_max { 1.0 } else { t_max / turnover };
    let mut w: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + theta * (y - x)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        for x in w.iter_mut() {
            *x /= total;
        }
    }
    WeightVector::new(symbols, w)
}

const MAX_ITER: usize = 10_000;
const STEP_TOL: f64 = 1e-10;

fn check_bounds(lower: &[f64], upper: &[f64]) -> Result<()> {
    let lo: f64 = lower.iter().sum();
    let hi: f64 = upper.iter().sum();
    if lower.iter().zip(upper).any(|(l, u)| l > u) || lo > 1.0 + 1e-12 || hi < 1.0 - 1e-12 {
        return Err(Error::Infeasible(InfeasibleReason::Bounds));
    }
    Ok(())
}

/// Euclidean projection of `v` onto `{w : sum w = 1, lower <= w <= upper}`.
/// Assumes the set is non-empty.
pub fn project_bounded_simplex(v: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    let g = |tau: f64| -> f64 {
        v.iter()
            .zip(lower.iter().zip(upper))
            .map(|(x, (l, u))| (x - tau).clamp(*l, *u))
            .sum()
    };
    let mut breaks: Vec<f64> = v
        .iter()
        .zip(lower.iter().zip(upper))
        .flat_map(|(x, (l, u))| [x - u, x - l])
        .collect();
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    // g is non-increasing and piecewise linear between consecutive breakpoints.
    let mut tau = breaks[0];
    let mut prev = (breaks[0], g(breaks[0]));
    for &b in &breaks[1..] {
        let gb = g(b);
        if gb <= 1.0 {
            let (a, ga) = prev;
            tau = if ga > gb {
                a + (ga - 1.0) * (b - a) / (ga - gb)
            } else {
                a
            };
            break;
        }
        prev = (b, gb);
        tau = b;
    }
    v.iter()
        .zip(lower.iter().zip(upper))
        .map(|(x, (l, u))| (x - tau).clamp(*l, *u))
        .collect()
}

/// Maximizes `mu . w` over the bounded simplex by greedy filling.
fn max_return_lp(mu: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..mu.len()).collect();
    order.sort_by(|&a, &b| mu[b].partial_cmp(&mu[a]).unwrap().then(a.cmp(&b)));
    let mut w = lower.to_vec();
    let mut left = 1.0 - lower.iter().sum::<f64>();
    for i in order {
        let add = (upper[i] - lower[i]).min(left);
        w[i] += add;
        left -= add;
        if left <= 0.0 {
            break;
        }
    }
    w
}

/// Minimizes `q * w'Cw - m * mu'w` over the bounded simplex with accelerated
/// projected gradient and adaptive restart.
fn solve_qp(stats: &AssetStats, q: f64, m: f64, lower: &[f64], upper: &[f64]) -> Result<Vec<f64>> {
    let n = stats.n();
    let row_bound = (0..n)
        .map(|i| (0..n).map(|j| stats.cov_at(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let lipschitz = 2.0 * q * row_bound;
    if !(lipschitz > 0.0) {
        let scaled: Vec<f64> = stats.mu.iter().map(|x| x * m).collect();
        return Ok(max_return_lp(&scaled, lower, upper));
    }
    let step = 1.0 / lipschitz;
    let grad = |w: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let cw: f64 = (0..n).map(|j| stats.cov_at(i, j) * w[j]).sum();
                2.0 * q * cw - m * stats.mu[i]
            })
            .collect()
    };

    let mut x = project_bounded_simplex(&vec![1.0 / n as f64; n], lower, upper);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut last_step = f64::INFINITY;
    for _ in 0..MAX_ITER {
        let g = grad(&y);
        let trial: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
        let next = project_bounded_simplex(&trial, lower, upper);
        last_step = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if last_step < STEP_TOL {
            return Ok(next);
        }
        // restart momentum when it points uphill
        let uphill: f64 = y
            .iter()
            .zip(&next)
            .zip(&x)
            .map(|((yi, ni), xi)| (yi - ni) * (ni - xi))
            .sum();
        if uphill > 0.0 {
            t = 1.0;
            y = next.clone();
        } else {
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            y = next.iter().zip(&x).map(|(ni, xi)| ni + beta * (ni - xi)).collect();
            t = t_next;
        }
        x = next;
    }
    Err(Error::NotConverged {
        gap: last_step,
        iterations: MAX_ITER,
    })
}

/// Solves `min q w'Cw - (m + nu) mu'w` with the smallest `nu >= 0` that makes
/// `mu'w >= r_min`, by bisection on `nu`.
fn solve_with_min_return(
    stats: &AssetStats,
    q: f64,
    m: f64,
    r_min: Option<f64>,
    lower: &[f64],
    upper: &[f64],
) -> Result<Vec<f64>> {
    let Some(r_min) = r_min else {
        return solve_qp(stats, q, m, lower, upper);
    };
    let best = max_return_lp(&stats.mu, lower, upper);
    if stats.expected_return(&best) < r_min - 1e-12 {
        return Err(Error::Infeasible(InfeasibleReason::MinReturnTooHigh));
    }
    let meets = |w: &[f64]| stats.expected_return(w) >= r_min - 1e-12;
    let w0 = solve_qp(stats, q, m, lower, upper)?;
    if meets(&w0) {
        return Ok(w0);
    }
    let scale = q * stats.sigma.iter().fold(0.0, |a: f64, s| a.max(s * s))
        / stats.mu.iter().fold(1e-300, |a: f64, x| a.max(x.abs()));
    let mut lo = 0.0;
    let mut hi = scale.max(1e-12);
    let mut w_hi = None;
    for _ in 0..80 {
        let w = solve_qp(stats, q, m + hi, lower, upper)?;
        if meets(&w) {
            w_hi = Some(w);
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    let Some(mut w_hi) = w_hi else {
        return Ok(best);
    };
    for _ in 0..100 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let w = solve_qp(stats, q, m + mid, lower, upper)?;
        if meets(&w) {
            hi = mid;
            w_hi = w;
        } else {
            lo = mid;
        }
    }
    Ok(w_hi)
}

/// Long-only optimum of the chosen objective over
/// `{sum w = 1, bounds, mu'w >= r_min (when set)}`.
pub fn solve_mean_variance(stats: &AssetStats, cfg: &OptimizerConfig, objective: Objective) -> Result<WeightVector> {
    if stats.n() == 0 {
        return Err(Error::NoAssets);
    }
    let (lower, upper) = cfg.bounds_for(&stats.symbols);
    check_bounds(&lower, &upper)?;
    let w = match objective {
        Objective::MaxReturn => {
            let w = max_return_lp(&stats.mu, &lower, &upper);
            if let Some(r) = cfg.r_min {
                if stats.expected_return(&w) < r - 1e-12 {
                    return Err(Error::Infeasible(InfeasibleReason::MinReturnTooHigh));
                }
            }
            w
        }
        Objective::MinRisk => solve_with_min_return(stats, 1.0, 0.0, cfg.r_min, &lower, &upper)?,
        Objective::Utility => solve_with_min_return(stats, cfg.lambda, 1.0, cfg.r_min, &lower, &upper)?,
        Objective::MaxSharpe => max_sharpe(stats, cfg, &lower, &upper)?,
    };
    Ok(WeightVector::new(stats.symbols.clone(), w))
}

fn portfolio_sharpe(stats: &AssetStats, w: &[f64], rf: f64) -> f64 {
    let excess = stats.expected_return(w) - rf;
    let sd = stats.variance(w).max(0.0).sqrt();
    if sd > 0.0 {
        excess / sd
    } else if excess > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}

/// Scans the utility frontier over 50 log-spaced risk aversions, then refines
/// the best bracket by golden-section search in `ln(lambda)`.
fn max_sharpe(stats: &AssetStats, cfg: &OptimizerConfig, lower: &[f64], upper: &[f64]) -> Result<Vec<f64>> {
    let max_mu = stats.mu.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let max_var = (0..stats.n()).fold(0.0f64, |a, i| a.max(stats.cov_at(i, i)));
    let base = if max_mu > 0.0 && max_var > 0.0 {
        max_mu / max_var
    } else {
        1.0
    };
    let grid = log_space(base * 1e-3, base * 1e4, 50);
    let eval = |lambda: f64| -> Result<(f64, Vec<f64>)> {
        let w = solve_with_min_return(stats, lambda, 1.0, cfg.r_min, lower, upper)?;
        Ok((portfolio_sharpe(stats, &w, cfg.risk_free), w))
    };
    let mut best_k = 0;
    let mut best = eval(grid[0])?;
    for (k, &l) in grid.iter().enumerate().skip(1) {
        let cand = eval(l)?;
        if cand.0 > best.0 {
            best = cand;
            best_k = k;
        }
    }
    let mut a = grid[best_k.saturating_sub(1)].ln();
    let mut b = grid[(best_k + 1).min(grid.len() - 1)].ln();
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = eval(c.exp())?;
    let mut fd = eval(d.exp())?;
    for _ in 0..40 {
        if fc.0 >= fd.0 {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = eval(c.exp())?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = eval(d.exp())?;
        }
    }
    for cand in [fc, fd] {
        if cand.0 > best.0 {
            best = cand;
        }
    }
    Ok(best.1)
}

#[derive(Debug)]
pub struct FrontierPoint {
    pub lambda: f64,
    pub outcome: Result<FrontierSolution>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontierSolution {
    pub expected_return: f64,
    pub variance: f64,
    pub weights: WeightVector,
}

/// Utility optimum per risk aversion, in the order given. A failing point is
/// recorded in place; the sweep continues.
pub fn efficient_frontier(stats: &AssetStats, cfg: &OptimizerConfig, lambdas: &[f64]) -> Result<Vec<FrontierPoint>> {
    if lambdas.iter().any(|l| !(*l > 0.0)) || lambdas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "lambdas must be positive and strictly ascending".into(),
        ));
    }
    Ok(lambdas
        .iter()
        .map(|&lambda| {
            let point_cfg = OptimizerConfig { lambda, ..cfg.clone() };
            let outcome = solve_mean_variance(stats, &point_cfg, Objective::Utility).map(|weights| FrontierSolution {
                expected_return: stats.expected_return(&weights.weights),
                variance: stats.variance(&weights.weights),
                weights,
            });
            FrontierPoint { lambda, outcome }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn diag_stats(mu: &[f64], var: &[f64]) -> AssetStats {
        let n = mu.len();
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            cov[i * n + i] = var[i];
        }
        let sigma: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
        AssetStats {
            symbols: (0..n).map(|i| format!("S{i}")).collect(),
            sharpe: mu.iter().zip(&sigma).map(|(m, s)| m / s).collect(),
            mu: mu.to_vec(),
            sigma,
            cov,
            degenerate: vec![],
        }
    }

    #[test]
    fn duplicate_series_are_perfectly_correlated() {
        let r = [0.01, -0.02, 0.03, 0.0];
        let s = AssetStats::from_series(vec!["A".into(), "B".into()], &[&r, &r], 0.0).unwrap();
        assert_eq!(s.mu[0], s.mu[1]);
        assert_eq!(s.sigma[0], s.sigma[1]);
        let corr = s.cov_at(0, 1) / (s.sigma[0] * s.sigma[1]);
        assert!((corr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_point_stats() {
        let s = AssetStats::from_series(vec!["A".into()], &[&[0.01, 0.03]], 0.0).unwrap();
        assert!((s.mu[0] - 0.02).abs() < 1e-15);
        assert!((s.sigma[0] - 0.0002f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_variance_asset_flagged_then_singular() {
        let s = AssetStats::from_series(
            vec!["A".into(), "B".into()],
            &[&[0.01, 0.01, 0.01], &[0.01, 0.02, 0.0]],
            0.0,
        )
        .unwrap();
        assert_eq!(s.degenerate, vec!["A"]);
        let b = blend_weights(&s, 0.5).unwrap();
        assert_eq!(b.weights.weights, vec![0.0, 1.0]);
        assert_eq!(b.excluded, vec!["A"]);

        let rp = ReturnPanel {
            assets: vec!["A".into()],
            calendar: (1..=3)
                .map(|d| chrono::NaiveDate::from_ymd_opt(2024, 1, d).unwrap())
                .collect(),
            returns: vec![vec![0.0; 3]],
        };
        assert!(matches!(estimate_stats(&rp, 3, 0.0), Err(Error::SingularStats)));
        assert!(matches!(
            estimate_stats(&rp, 4, 0.0),
            Err(Error::InsufficientHistory { .. })
        ));
    }

    #[test]
    fn blend_worked_example() {
        let mut s = diag_stats(&[0.1, 0.6], &[0.01, 0.04]);
        s.sharpe = vec![1.0, 3.0];
        let w = blend_weights(&s, 0.5).unwrap().weights.weights;
        // inverse-vol leg [2/3, 1/3], Sharpe leg [1/4, 3/4]
        let expected = [0.5 * (2.0 / 3.0) + 0.5 * 0.25, 0.5 * (1.0 / 3.0) + 0.5 * 0.75];
        assert!((w[0] - expected[0]).abs() < 1e-12 && (w[1] - expected[1]).abs() < 1e-12);
        assert!((w[0] - 0.458333333333).abs() < 1e-9);
    }

    #[test]
    fn blend_single_and_symmetric() {
        let s = diag_stats(&[0.1], &[0.04]);
        assert_eq!(blend_weights(&s, 0.5).unwrap().weights.weights, vec![1.0]);
        let s = diag_stats(&[0.1, 0.1], &[0.04, 0.04]);
        assert_eq!(blend_weights(&s, 0.5).unwrap().weights.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn blend_all_negative_sharpe_falls_back() {
        let s = diag_stats(&[-0.1, -0.2], &[0.01, 0.04]);
        let b = blend_weights(&s, 0.5).unwrap();
        assert!(b.sharpe_leg_equal);
        let w = &b.weights.weights;
        assert!((w[0] - (0.5 * 2.0 / 3.0 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn blend_no_assets() {
        let s = diag_stats(&[0.1], &[0.0]);
        assert!(matches!(blend_weights(&s, 0.5), Err(Error::NoAssets)));
    }

    #[test]
    fn min_variance_two_uncorrelated() {
        let s = diag_stats(&[0.0, 0.0], &[0.04, 0.01]);
        let w = solve_mean_variance(&s, &OptimizerConfig::default(), Objective::MinRisk).unwrap();
        assert!((w.weights[0] - 0.2).abs() < 1e-8 && (w.weights[1] - 0.8).abs() < 1e-8);
    }

    #[test]
    fn max_return_corner() {
        let s = diag_stats(&[0.1, 0.2], &[0.04, 0.01]);
        let w = solve_mean_variance(&s, &OptimizerConfig::default(), Objective::MaxReturn).unwrap();
        assert_eq!(w.weights, vec![0.0, 1.0]);
    }

    #[test]
    fn max_return_respects_upper_bound() {
        let s = diag_stats(&[0.1, 0.2, 0.3], &[0.04, 0.01, 0.02]);
        let cfg = OptimizerConfig {
            upper: 0.5,
            ..Default::default()
        };
        let w = solve_mean_variance(&s, &cfg, Objective::MaxReturn).unwrap();
        assert_eq!(w.weights, vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn huge_lambda_approaches_min_risk() {
        let s = diag_stats(&[0.05, 0.1, 0.02], &[0.04, 0.09, 0.01]);
        let min_risk = solve_mean_variance(&s, &OptimizerConfig::default(), Objective::MinRisk).unwrap();
        let cfg = OptimizerConfig {
            lambda: 1e6,
            ..Default::default()
        };
        let u = solve_mean_variance(&s, &cfg, Objective::Utility).unwrap();
        for (a, b) in min_risk.weights.iter().zip(&u.weights) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn min_return_constraint_binds() {
        let s = diag_stats(&[0.0, 0.1], &[0.01, 0.04]);
        // unconstrained min-variance is [0.8, 0.2] with return 0.02
        let cfg = OptimizerConfig {
            r_min: Some(0.05),
            ..Default::default()
        };
        let w = solve_mean_variance(&s, &cfg, Objective::MinRisk).unwrap();
        assert!((s.expected_return(&w.weights) - 0.05).abs() < 1e-8);
        assert!(s.expected_return(&w.weights) >= 0.05 - 1e-12);
        assert!((w.weights[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn infeasibility_reasons() {
        let s = diag_stats(&[0.0, 0.1], &[0.01, 0.04]);
        let cfg = OptimizerConfig {
            r_min: Some(0.2),
            ..Default::default()
        };
        assert!(matches!(
            solve_mean_variance(&s, &cfg, Objective::MinRisk),
            Err(Error::Infeasible(InfeasibleReason::MinReturnTooHigh))
        ));
        let cfg = OptimizerConfig {
            upper: 0.4,
            ..Default::default()
        };
        assert!(matches!(
            solve_mean_variance(&s, &cfg, Objective::MinRisk),
            Err(Error::Infeasible(InfeasibleReason::Bounds))
        ));
    }

    #[test]
    fn projection_is_feasible() {
        let l = [0.0, 0.1, 0.0];
        let u = [0.5, 1.0, 1.0];
        let w = project_bounded_simplex(&[3.0, -1.0, 0.2], &l, &u);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(w[0], 0.5);
        assert_eq!(w[1], 0.1);
        assert!((w[2] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn turnover_cap_examples() {
        let prev = WeightVector::new(vec!["A".into(), "B".into()], vec![0.5, 0.5]);
        let target = WeightVector::new(vec!["A".into(), "B".into()], vec![0.7, 0.3]);
        assert_eq!(apply_turnover_cap(&prev, &target, 1.0), target);
        assert_eq!(apply_turnover_cap(&prev, &target, 0.0), prev);
        let capped = apply_turnover_cap(&prev, &target, 0.2);
        assert!((capped.weights[0] - 0.6).abs() < 1e-12 && (capped.weights[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn turnover_cap_over_symbol_union() {
        let prev = WeightVector::new(vec!["A".into()], vec![1.0]);
        let target = WeightVector::new(vec!["B".into()], vec![1.0]);
        let capped = apply_turnover_cap(&prev, &target, 1.0);
        assert_eq!(capped.symbols, vec!["A", "B"]);
        assert!((capped.weights[0] - 0.5).abs() < 1e-12);
        assert!((prev.turnover_to(&capped) - 1.0).abs() < 1e-12);
        assert_eq!(apply_turnover_cap(&WeightVector::default(), &target, 0.0), target);
    }

    #[test]
    fn frontier_single_asset_and_consistency() {
        let s = diag_stats(&[0.1], &[0.04]);
        let pts = efficient_frontier(&s, &OptimizerConfig::default(), &[0.5, 1.0, 5.0]).unwrap();
        for p in pts {
            assert_eq!(p.outcome.unwrap().weights.weights, vec![1.0]);
        }
        let s = diag_stats(&[0.05, 0.1], &[0.04, 0.09]);
        let cfg = OptimizerConfig {
            lambda: 2.0,
            ..Default::default()
        };
        let pts = efficient_frontier(&s, &cfg, &[2.0]).unwrap();
        let direct = solve_mean_variance(&s, &cfg, Objective::Utility).unwrap();
        assert_eq!(pts[0].outcome.as_ref().unwrap().weights, direct);
        assert!(efficient_frontier(&s, &cfg, &[2.0, 1.0]).is_err());
    }

    #[test]
    fn frontier_marks_failed_points() {
        let s = diag_stats(&[0.05, 0.1], &[0.04, 0.09]);
        let cfg = OptimizerConfig {
            r_min: Some(1.0),
            ..Default::default()
        };
        let pts = efficient_frontier(&s, &cfg, &[1.0, 2.0]).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(pts.iter().all(|p| matches!(p.outcome, Err(Error::Infeasible(_)))));
    }

    #[test]
    fn max_sharpe_beats_frontier_points() {
        let s = diag_stats(&[0.05, 0.1, 0.03], &[0.04, 0.09, 0.01]);
        let cfg = OptimizerConfig::default();
        let w = solve_mean_variance(&s, &cfg, Objective::MaxSharpe).unwrap();
        let best = portfolio_sharpe(&s, &w.weights, 0.0);
        // tangency of a diagonal covariance: w proportional to mu / var
        let raw: Vec<f64> = (0..3).map(|i| s.mu[i] / s.cov_at(i, i)).collect();
        let tot: f64 = raw.iter().sum();
        let tangent: Vec<f64> = raw.iter().map(|x| x / tot).collect();
        let analytic = portfolio_sharpe(&s, &tangent, 0.0);
        assert!(best >= analytic - 1e-6, "{best} vs {analytic}");
        for (a, b) in w.weights.iter().zip(&tangent) {
            assert!((a - b).abs() < 1e-3);
        }
    }
}
