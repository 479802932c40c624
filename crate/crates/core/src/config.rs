//! Single TOML file driving every command. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alpha::GpConfig;
use crate::backtest::BacktestConfig;
use crate::error::{Error, Result};
use crate::market_data::{clean_panel, read_panel, DataFormat, PricePanel};
use crate::optimizer::OptimizerConfig;
use crate::risk::{RiskConfig, Tier};
use crate::selection::SelectionConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Relative paths resolve against the config file's directory.
    pub path: PathBuf,
    pub format: DataFormat,
    pub max_missing_frac: f64,
    pub min_adv: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: PathBuf::from("panel.csv"),
            format: DataFormat::Csv,
            max_missing_frac: 0.1,
            min_adv: 0.0,
        }
    }
}

/// Risk settings: a named preset, optionally overridden field by field.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskSection {
    pub preset: Option<String>,
    pub tiers: Option<Vec<Tier>>,
    pub base_exposure: Option<f64>,
    pub cooldown_days: Option<u32>,
}

impl RiskSection {
    pub fn resolve(&self) -> Result<RiskConfig> {
        let name = self.preset.as_deref().unwrap_or("default");
        let mut cfg = RiskConfig::preset(name)
            .ok_or_else(|| Error::invalid("risk.preset", format!("unknown preset {name:?}")))?;
        if let Some(t) = &self.tiers {
            cfg.tiers = t.clone();
        }
        if let Some(b) = self.base_exposure {
            cfg.base_exposure = b;
        }
        if let Some(c) = self.cooldown_days {
            cfg.cooldown_days = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlobalConfig {
    pub data: DataConfig,
    pub selection: SelectionConfig,
    pub optimizer: OptimizerConfig,
    pub risk: RiskSection,
    pub backtest: BacktestConfig,
    pub gp: GpConfig,
    pub output_dir: PathBuf,
    /// Overrides `gp.seed` when set.
    pub seed: Option<u64>,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            data: DataConfig::default(),
            selection: SelectionConfig::default(),
            optimizer: OptimizerConfig::default(),
            risk: RiskSection::default(),
            backtest: BacktestConfig::default(),
            gp: GpConfig::default(),
            output_dir: PathBuf::from("out"),
            seed: None,
        }
    }
}

impl GlobalConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: GlobalConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file, resolving the data path against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.data.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.data.max_missing_frac) {
            return Err(Error::invalid("data.max_missing_frac", "must be in [0, 1)"));
        }
        if !(self.data.min_adv >= 0.0) {
            return Err(Error::invalid("data.min_adv", "must be >= 0"));
        }
        self.selection.validate()?;
        self.optimizer.validate()?;
        self.risk.resolve()?;
        self.gp.validate()?;
        self.backtest_config()?.validate()
    }

    /// Reads the configured panel and applies the missing-data and liquidity
    /// filters.
    pub fn load_panel(&self) -> Result<PricePanel> {
        let (raw, rejected) = read_panel(&self.data.path, self.data.format)?;
        for r in &rejected {
            tracing::warn!(symbol = %r.symbol, reason = %r.reason, "asset rejected while reading");
        }
        clean_panel(&raw, self.data.max_missing_frac, self.data.min_adv)
    }

    /// Backtest settings with the shared sections attached.
    pub fn backtest_config(&self) -> Result<BacktestConfig> {
        Ok(BacktestConfig {
            selection: self.selection.clone(),
            optimizer: self.optimizer.clone(),
            risk: self.risk.resolve()?,
            ..self.backtest.clone()
        })
    }

    pub fn gp_config(&self) -> GpConfig {
        GpConfig {
            seed: self.seed.unwrap_or(self.gp.seed),
            ..self.gp.clone()
        }
    }
}
