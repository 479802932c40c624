//! Performance and risk statistics over equity curves and return series.
//!
//! Conventions: Sharpe uses the sample (n - 1) standard deviation; skewness
//! and kurtosis use population moments about the sample mean; VaR/CVaR are
//! reported in return space, so losses are negative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::WeightVector;
use crate::stats::{mean, population_std, sample_std};

/// Every evaluation statistic for one strategy. `None` marks a metric that is
/// undefined for the input (zero variance, no downside, no benchmark...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBlock {
    pub roi: f64,
    pub annualized_return: f64,
    pub sharpe: Option<f64>,
    pub sortino: Option<f64>,
    pub mdd: f64,
    pub turnover: Option<f64>,
    pub skew: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    pub var_alpha: Option<f64>,
    pub cvar_alpha: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub win_rate: f64,
}

impl MetricsBlock {
    pub const FIELDS: [&'static str; 13] = [
        "roi",
        "annualized_return",
        "sharpe",
        "sortino",
        "mdd",
        "turnover",
        "skew",
        "excess_kurtosis",
        "var_alpha",
        "cvar_alpha",
        "alpha",
        "beta",
        "win_rate",
    ];

    /// Values in [`MetricsBlock::FIELDS`] order.
    pub fn values(&self) -> [Option<f64>; 13] {
        [
            Some(self.roi),
            Some(self.annualized_return),
            self.sharpe,
            self.sortino,
            Some(self.mdd),
            self.turnover,
            self.skew,
            self.excess_kurtosis,
            self.var_alpha,
            self.cvar_alpha,
            self.alpha,
            self.beta,
            Some(self.win_rate),
        ]
    }
}

/// Inputs beyond the equity curve that some metrics need.
#[derive(Debug, Clone, Copy)]
pub struct MetricsInputs<'a> {
    pub risk_free: f64,
    pub periods_per_year: f64,
    pub tail_alpha: f64,
    pub benchmark: Option<&'a [f64]>,
    pub weights_history: Option<&'a [WeightVector]>,
}

impl Default for MetricsInputs<'_> {
    fn default() -> Self {
        MetricsInputs {
            risk_free: 0.0,
            periods_per_year: crate::PERIODS_PER_YEAR,
            tail_alpha: 0.05,
            benchmark: None,
            weights_history: None,
        }
    }
}

pub fn equity_returns(equity: &[f64]) -> Vec<f64> {
    equity.windows(2).map(|w| w[1] / w[0] - 1.0).collect()
}

/// Computes the full block from an equity curve.
pub fn compute(equity: &[f64], inputs: &MetricsInputs) -> Result<MetricsBlock> {
    if equity.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: equity.len(),
        });
    }
    let rets = equity_returns(equity);
    let rf = inputs.risk_free;
    let ppy = inputs.periods_per_year;
    let tail = var_cvar(&rets, inputs.tail_alpha).ok();
    let ab = inputs.benchmark.and_then(|b| alpha_beta(&rets, b, rf, ppy).ok());
    let turnover = inputs
        .weights_history
        .and_then(|h| turnover_series(h).ok())
        .map(|s| mean(&s));
    Ok(MetricsBlock {
        roi: roi(equity[0], equity[equity.len() - 1])?,
        annualized_return: annualized_return(equity, ppy)?,
        sharpe: sharpe(&rets, rf, ppy).ok(),
        sortino: sortino(&rets, rf, ppy).ok(),
        mdd: max_drawdown(equity)?,
        turnover,
        skew: skewness(&rets).ok(),
        excess_kurtosis: excess_kurtosis(&rets).ok(),
        var_alpha: tail.map(|t| t.0),
        cvar_alpha: tail.map(|t| t.1),
        alpha: ab.map(|x| x.0),
        beta: ab.map(|x| x.1),
        win_rate: win_rate(&rets)?,
    })
}

pub fn roi(v_start: f64, v_end: f64) -> Result<f64> {
    if !(v_start > 0.0) {
        return Err(Error::NonPositiveStart);
    }
    Ok((v_end - v_start) / v_start)
}

/// Annualized mean excess return over sample standard deviation.
pub fn sharpe(returns: &[f64], risk_free: f64, periods_per_year: f64) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            available: returns.len(),
        });
    }
    let excess: Vec<f64> = returns.iter().map(|r| r - risk_free).collect();
    let sd = sample_std(&excess);
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(mean(&excess) / sd * periods_per_year.sqrt())
}

/// Largest peak-to-trough decline as a fraction of the peak, in one pass.
pub fn max_drawdown(equity: &[f64]) -> Result<f64> {
    if equity.is_empty() {
        return Err(Error::EmptySeries);
    }
    if equity.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NonPositiveValues);
    }
    let mut peak = equity[0];
    let mut worst = 0.0f64;
    for &v in equity {
        peak = peak.max(v);
        worst = worst.max((peak - v) / peak);
    }
    Ok(worst)
}

/// Turnover between each consecutive pair of snapshots.
pub fn turnover_series(history: &[WeightVector]) -> Result<Vec<f64>> {
    if history.len() < 2 {
        return Err(Error::InsufficientSnapshots);
    }
    Ok(history.windows(2).map(|w| w[0].turnover_to(&w[1])).collect())
}

fn central_moments(returns: &[f64]) -> Result<(f64, f64, f64)> {
    if returns.len() < 3 {
        return Err(Error::InsufficientSample {
            needed: 3,
            available: returns.len(),
        });
    }
    let sd = population_std(returns);
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let m = mean(returns);
    let n = returns.len() as f64;
    let m3 = returns.iter().map(|r| (r - m).powi(3)).sum::<f64>() / n;
    let m4 = returns.iter().map(|r| (r - m).powi(4)).sum::<f64>() / n;
    Ok((sd, m3, m4))
}

pub fn skewness(returns: &[f64]) -> Result<f64> {
    let (sd, m3, _) = central_moments(returns)?;
    Ok(m3 / sd.powi(3))
}

pub fn excess_kurtosis(returns: &[f64]) -> Result<f64> {
    let (sd, _, m4) = central_moments(returns)?;
    Ok(m4 / sd.powi(4) - 3.0)
}

/// Empirical `(VaR, CVaR)` at tail fraction `alpha`.
///
/// VaR is the order statistic at 1-based position `ceil(alpha * n)` of the
/// ascending sample; CVaR is the mean of all returns at or below it.
pub fn var_cvar(returns: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "tail alpha must be in (0, 0.5), got {alpha}"
        )));
    }
    let needed = (1.0 / alpha).ceil() as usize;
    if returns.len() < needed {
        return Err(Error::InsufficientSample {
            needed,
            available: returns.len(),
        });
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = ((alpha * sorted.len() as f64).ceil() as usize).max(1);
    let var = sorted[k - 1];
    let tail: Vec<f64> = sorted.iter().copied().take_while(|r| *r <= var).collect();
    Ok((var, mean(&tail)))
}

/// Annualized mean excess return over downside deviation, where the
/// downside deviation averages squared negative excess returns over all n.
pub fn sortino(returns: &[f64], risk_free: f64, periods_per_year: f64) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::EmptySeries);
    }
    let excess: Vec<f64> = returns.iter().map(|r| r - risk_free).collect();
    let downside: f64 = excess.iter().filter(|x| **x < 0.0).map(|x| x * x).sum();
    if !(downside > 0.0) {
        return Err(Error::NoDownside);
    }
    let dd = (downside / excess.len() as f64).sqrt();
    Ok(mean(&excess) / dd * periods_per_year.sqrt())
}

/// OLS of portfolio excess on benchmark excess. Returns `(alpha, beta)` with
/// alpha annualized by `periods_per_year`.
pub fn alpha_beta(portfolio: &[f64], benchmark: &[f64], risk_free: f64, periods_per_year: f64) -> Result<(f64, f64)> {
    if portfolio.len() != benchmark.len() {
        return Err(Error::InvalidArgument(format!(
            "series lengths differ: {} vs {}",
            portfolio.len(),
            benchmark.len()
        )));
    }
    if portfolio.len() < 3 {
        return Err(Error::InsufficientSample {
            needed: 3,
            available: portfolio.len(),
        });
    }
    let y: Vec<f64> = portfolio.iter().map(|r| r - risk_free).collect();
    let x: Vec<f64> = benchmark.iter().map(|r| r - risk_free).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateBenchmark);
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let beta = sxy / sxx;
    Ok(((my - beta * mx) * periods_per_year, beta))
}

/// Percentage of strictly positive periods.
pub fn win_rate(returns: &[f64]) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::EmptySeries);
    }
    let wins = returns.iter().filter(|r| **r > 0.0).count();
    Ok(wins as f64 / returns.len() as f64 * 100.0)
}

/// Compound annual growth rate of an equity curve.
pub fn annualized_return(equity: &[f64], periods_per_year: f64) -> Result<f64> {
    if equity.len() < 2 {
        return Err(Error::InsufficientHistory {
            needed: 2,
            available: equity.len(),
        });
    }
    if equity.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NonPositiveValues);
    }
    let growth = equity[equity.len() - 1] / equity[0];
    Ok(growth.powf(periods_per_year / (equity.len() - 1) as f64) - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn roi_examples() {
        assert!(close(roi(100.0, 125.0).unwrap(), 0.25, 1e-15));
        assert_eq!(roi(100.0, 100.0).unwrap(), 0.0);
        assert!(close(roi(100.0, 80.0).unwrap(), -0.20, 1e-15));
        assert!(matches!(roi(0.0, 1.0), Err(Error::NonPositiveStart)));
    }

    #[test]
    fn sharpe_examples() {
        assert_eq!(sharpe(&[0.01, -0.01, 0.01, -0.01], 0.0, 252.0).unwrap(), 0.0);
        assert!(matches!(sharpe(&[0.01; 5], 0.0, 252.0), Err(Error::ZeroVariance)));
        let s = sharpe(&[0.01, 0.03], 0.0, 252.0).unwrap();
        assert!(close(s, 0.02 / 0.02f64.sqrt() * 10.0 * 252f64.sqrt(), 1e-10));
        assert!(close(s, 22.45, 0.005));
    }

    #[test]
    fn mdd_examples() {
        assert!(close(max_drawdown(&[100.0, 120.0, 90.0, 110.0]).unwrap(), 0.25, 1e-15));
        assert_eq!(max_drawdown(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(max_drawdown(&[100.0, 50.0]).unwrap(), 0.5);
        assert!(matches!(max_drawdown(&[]), Err(Error::EmptySeries)));
    }

    #[test]
    fn turnover_examples() {
        let a = WeightVector::new(vec!["A".into(), "B".into()], vec![0.5, 0.5]);
        let b = WeightVector::new(vec!["A".into(), "B".into()], vec![0.7, 0.3]);
        assert_eq!(turnover_series(&[a.clone(), a.clone()]).unwrap(), vec![0.0]);
        assert!(close(turnover_series(&[a.clone(), b]).unwrap()[0], 0.4, 1e-15));
        let x = WeightVector::new(vec!["A".into(), "B".into()], vec![1.0, 0.0]);
        let y = WeightVector::new(vec!["A".into(), "B".into()], vec![0.0, 1.0]);
        assert_eq!(turnover_series(&[x, y]).unwrap(), vec![2.0]);
        assert!(matches!(turnover_series(&[a]), Err(Error::InsufficientSnapshots)));
    }

    #[test]
    fn moment_examples() {
        assert!(skewness(&[-0.02, 0.0, 0.02]).unwrap().abs() < 1e-12);
        assert!(close(
            excess_kurtosis(&[0.01, -0.01, 0.01, -0.01]).unwrap(),
            -2.0,
            1e-12
        ));
        let outlier = [0.001, -0.001, 0.002, -0.002, 0.0, 0.05];
        assert!(skewness(&outlier).unwrap() > 0.0);
        assert!(matches!(skewness(&[0.1; 4]), Err(Error::ZeroVariance)));
    }

    #[test]
    fn var_cvar_examples() {
        let mut r = vec![-0.10; 5];
        r.extend(std::iter::repeat_n(0.01, 95));
        assert_eq!(var_cvar(&r, 0.05).unwrap(), (-0.10, -0.10));
        let (v, c) = var_cvar(&[0.003; 20], 0.05).unwrap();
        assert!(v == 0.003 && close(c, 0.003, 1e-15));
        let ten: Vec<f64> = (1..=10).map(|i| -0.01 * i as f64).collect();
        let (v, c) = var_cvar(&ten, 0.10).unwrap();
        assert!(close(v, -0.10, 1e-15) && close(c, -0.10, 1e-15));
        assert!(matches!(var_cvar(&ten, 0.05), Err(Error::InsufficientSample { .. })));
    }

    #[test]
    fn sortino_examples() {
        assert!(matches!(sortino(&[0.01, 0.0], 0.0, 1.0), Err(Error::NoDownside)));
        assert_eq!(sortino(&[0.01, -0.01], 0.0, 252.0).unwrap(), 0.0);
        let s = sortino(&[0.02, -0.01], 0.0, 1.0).unwrap();
        assert!(close(s, 0.005 / (0.0001f64 / 2.0).sqrt(), 1e-12));
        assert!(close(s, std::f64::consts::FRAC_1_SQRT_2, 1e-12));
    }

    #[test]
    fn alpha_beta_examples() {
        let b = [0.01, -0.02, 0.015, 0.003, -0.007];
        let p: Vec<f64> = b.iter().map(|x| 2.0 * x).collect();
        let (a, beta) = alpha_beta(&p, &b, 0.0, 252.0).unwrap();
        assert!(a.abs() < 1e-12 && close(beta, 2.0, 1e-12));
        let p: Vec<f64> = b.iter().map(|x| x + 0.001).collect();
        let (a, beta) = alpha_beta(&p, &b, 0.0, 252.0).unwrap();
        assert!(close(a, 0.252, 1e-10) && close(beta, 1.0, 1e-12));
        assert!(matches!(
            alpha_beta(&b, &[0.01; 5], 0.0, 252.0),
            Err(Error::DegenerateBenchmark)
        ));
    }

    #[test]
    fn win_rate_examples() {
        assert_eq!(win_rate(&[0.01, -0.01, 0.02, -0.03]).unwrap(), 50.0);
        assert_eq!(win_rate(&[0.01, 0.02]).unwrap(), 100.0);
        assert_eq!(win_rate(&[0.0, 0.0]).unwrap(), 0.0);
        assert!(win_rate(&[]).is_err());
    }

    #[test]
    fn annualized_examples() {
        assert_eq!(annualized_return(&[5.0, 5.0, 5.0], 252.0).unwrap(), 0.0);
        let doubling: Vec<f64> = (0..=252).map(|i| 2f64.powf(i as f64 / 252.0)).collect();
        assert!(close(annualized_return(&doubling, 252.0).unwrap(), 1.0, 1e-12));
        let growth: Vec<f64> = (0..=252).map(|i| 1.001f64.powi(i)).collect();
        assert!(close(
            annualized_return(&growth, 252.0).unwrap(),
            1.001f64.powi(252) - 1.0,
            1e-12
        ));
        assert!(close(annualized_return(&growth, 252.0).unwrap(), 0.2865, 1e-4));
    }

    #[test]
    fn block_invariants() {
        let eq = [
            100.0, 101.0, 99.0, 98.0, 102.0, 103.0, 97.0, 100.0, 104.0, 101.0, 99.5, 103.0, 105.0, 102.0, 101.0, 106.0,
            104.0, 107.0, 103.0, 108.0, 109.0,
        ];
        let m = compute(&eq, &MetricsInputs::default()).unwrap();
        assert!((0.0..=1.0).contains(&m.mdd));
        assert!((0.0..=100.0).contains(&m.win_rate));
        assert!(m.cvar_alpha.unwrap() <= m.var_alpha.unwrap());
        assert!(m.alpha.is_none() && m.turnover.is_none());
    }
}
