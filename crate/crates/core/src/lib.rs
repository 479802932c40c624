//! Portfolio research engine: liquidity/capitalization/Sharpe universe
//! screening, blended inverse-volatility and Sharpe allocation, a constrained
//! mean-variance solver, drawdown-tiered exposure control, a daily backtest
//! loop, performance metrics and a genetic-programming alpha search.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod alpha;
pub mod backtest;
pub mod config;
pub mod error;
pub mod indicators;
pub mod market_data;
pub mod metrics;
pub mod optimizer;
pub mod risk;
pub mod selection;
pub mod stats;
pub mod synthetic;

pub use backtest::{run_backtest, BacktestConfig, BacktestReport, Strategy};
pub use error::{Error, ErrorClass, Result};
pub use market_data::{PricePanel, ReturnPanel};
pub use metrics::MetricsBlock;
pub use optimizer::{AssetStats, OptimizerConfig, WeightVector};
pub use risk::{RiskConfig, RiskController, RiskState};
pub use selection::{SelectionConfig, UniverseSnapshot};

/// Trading periods per year used for every annualized figure.
pub const PERIODS_PER_YEAR: f64 = 252.0;
