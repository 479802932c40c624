//! Drawdown-tiered exposure control with a cooldown after a hard stop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tier {
    /// Drawdown magnitude at or above which this tier applies.
    pub threshold: f64,
    pub exposure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskConfig {
    /// Ordered hardest first: thresholds strictly decreasing.
    pub tiers: Vec<Tier>,
    pub base_exposure: f64,
    pub cooldown_days: u32,
}

impl Default for RiskConfig {
    /// 6% drawdown: flat and cool down one bar; 4%: 0.6; 2%: 0.8.
    fn default() -> Self {
        RiskConfig::with_middle_tier(0.6)
    }
}

impl RiskConfig {
    /// Variant capping the 4-6% band at 0.4 instead of 0.6.
    pub fn strict() -> Self {
        RiskConfig::with_middle_tier(0.4)
    }

    fn with_middle_tier(mid: f64) -> Self {
        RiskConfig {
            tiers: vec![
                Tier {
                    threshold: 0.06,
                    exposure: 0.0,
                },
                Tier {
                    threshold: 0.04,
                    exposure: mid,
                },
                Tier {
                    threshold: 0.02,
                    exposure: 0.8,
                },
            ],
            base_exposure: 1.0,
            cooldown_days: 1,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "default" => Some(RiskConfig::default()),
            "strict" => Some(RiskConfig::strict()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.base_exposure) {
            return Err(Error::invalid("risk.base_exposure", "must be in [0, 1]"));
        }
        for (i, t) in self.tiers.iter().enumerate() {
            if !unit(t.threshold) || !unit(t.exposure) {
                return Err(Error::invalid(
                    &format!("risk.tiers[{i}]"),
                    "threshold and exposure must be in [0, 1]",
                ));
            }
        }
        for (i, w) in self.tiers.windows(2).enumerate() {
            if w[0].threshold <= w[1].threshold {
                return Err(Error::invalid(
                    &format!("risk.tiers[{}]", i + 1),
                    "thresholds must be strictly decreasing",
                ));
            }
            if w[0].exposure > w[1].exposure {
                return Err(Error::invalid(
                    &format!("risk.tiers[{}]", i + 1),
                    "exposure must not fall as thresholds fall",
                ));
            }
        }
        if let Some(last) = self.tiers.last() {
            if last.exposure > self.base_exposure {
                return Err(Error::invalid("risk.base_exposure", "must be >= every tier exposure"));
            }
        }
        Ok(())
    }

    /// Exposure for a drawdown magnitude, ignoring cooldown.
    pub fn exposure_for(&self, drawdown: f64) -> f64 {
        self.tiers
            .iter()
            .find(|t| drawdown >= t.threshold)
            .map_or(self.base_exposure, |t| t.exposure)
    }

    fn is_hard_stop(&self, drawdown: f64) -> bool {
        self.tiers
            .iter()
            .find(|t| drawdown >= t.threshold)
            .is_some_and(|t| t.exposure == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskState {
    pub peak: f64,
    pub drawdown: f64,
    pub exposure: f64,
    pub cooldown_remaining: u32,
}

impl RiskState {
    pub fn new(initial_equity: f64) -> Self {
        RiskState {
            peak: initial_equity,
            drawdown: 0.0,
            exposure: 1.0,
            cooldown_remaining: 0,
        }
    }
}

/// Advances the state by one bar of closing equity.
pub fn update(state: &RiskState, equity: f64, cfg: &RiskConfig) -> Result<RiskState> {
    if !(equity > 0.0) {
        return Err(Error::NonPositiveEquity(equity));
    }
    let peak = state.peak.max(equity);
    let drawdown = (peak - equity) / peak;
    let mut next = RiskState {
        peak,
        drawdown,
        exposure: 0.0,
        cooldown_remaining: 0,
    };
    if state.cooldown_remaining > 0 {
        next.cooldown_remaining = state.cooldown_remaining - 1;
    } else if cfg.is_hard_stop(drawdown) {
        next.cooldown_remaining = cfg.cooldown_days;
    } else {
        next.exposure = cfg.exposure_for(drawdown);
    }
    Ok(next)
}

/// Signed drawdown `(V_t - max_{s<=t} V_s) / max_{s<=t} V_s`, always `<= 0`.
pub fn signed_drawdown(equity_curve: &[f64], t: usize) -> Result<f64> {
    if t >= equity_curve.len() {
        return Err(Error::IndexOutOfRange {
            index: t,
            len: equity_curve.len(),
        });
    }
    let peak = equity_curve[..=t].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((equity_curve[t] - peak) / peak)
}

/// Single-owner controller used by the backtest loop.
#[derive(Debug, Clone)]
pub struct RiskController {
    cfg: RiskConfig,
    state: RiskState,
}

impl RiskController {
    pub fn new(cfg: RiskConfig, initial_equity: f64) -> Self {
        RiskController {
            cfg,
            state: RiskState::new(initial_equity),
        }
    }

    pub fn observe(&mut self, equity: f64) -> Result<f64> {
        self.state = update(&self.state, equity, &self.cfg)?;
        Ok(self.state.exposure)
    }

    pub fn state(&self) -> &RiskState {
        &self.state
    }
}
