//! `folio`: command-line driver for universe selection, allocation,
//! backtesting and alpha search.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 data error,
//! 3 runtime error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use folio_core::alpha::{evolve, Evolution};
use folio_core::backtest::{latest_frontier, run_comparison, write_comparison, write_report};
use folio_core::config::GlobalConfig;
use folio_core::metrics::{self, MetricsBlock, MetricsInputs};
use folio_core::selection::select_universe;
use folio_core::{Error, ErrorClass};
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(
    name = "folio",
    version,
    about = "Portfolio research: screening, allocation, risk control, backtests, alpha search"
)]
struct Cli {
    /// Configuration file (TOML).
    #[arg(short, long, global = true, default_value = "folio.toml")]
    config: PathBuf,
    /// Overrides the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, env = "FOLIO_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured strategy and the three benchmarks.
    Backtest,
    /// Print the selected universe at a date as CSV.
    Select {
        /// Trading date, YYYY-MM-DD.
        date: String,
    },
    /// Write the efficient frontier for the latest universe.
    Frontier,
    /// Evolve alpha expressions and write the ranked population.
    Evolve,
    /// Print the metrics block of an equity curve CSV as JSON.
    Metrics {
        /// CSV with `equity` column (e.g. a backtest's equity.csv).
        equity_csv: PathBuf,
    },
}

/// Error tagged with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let class = error
            .chain()
            .find_map(|e| e.downcast_ref::<Error>())
            .map_or(ErrorClass::Runtime, Error::class);
        let code = match class {
            ErrorClass::Config => 1,
            ErrorClass::Data => 2,
            ErrorClass::Runtime => 3,
        };
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::new(e).into()
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Metrics { equity_csv } = &cli.command {
        return cmd_metrics(equity_csv);
    }
    let mut cfg = GlobalConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(dir) = cli.output_dir {
        cfg.output_dir = dir;
    }
    match cli.command {
        Command::Backtest => cmd_backtest(&cfg),
        Command::Select { date } => cmd_select(&cfg, &date),
        Command::Frontier => cmd_frontier(&cfg),
        Command::Evolve => cmd_evolve(&cfg),
        Command::Metrics { .. } => unreachable!(),
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(())
}

fn cmd_backtest(cfg: &GlobalConfig) -> Result<(), Failure> {
    let panel = cfg.load_panel()?;
    let bt = cfg.backtest_config()?;
    let reports = run_comparison(&panel, &bt)?;
    create_dir(&cfg.output_dir)?;
    for r in &reports {
        write_report(r, &cfg.output_dir.join(&r.strategy))?;
        let m = &r.metrics;
        println!(
            "{:<14} roi {:>8.4}  sharpe {:>7}  mdd {:.4}",
            r.strategy,
            m.roi,
            m.sharpe.map_or("-".to_string(), |s| format!("{s:.3}")),
            m.mdd
        );
    }
    write_comparison(&reports, &cfg.output_dir.join("comparison.csv"))?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cmd_select(cfg: &GlobalConfig, date: &str) -> Result<(), Failure> {
    let date = chrono::NaiveDate::parse_from_str(date, "%Y-%m-%d")
        .map_err(|e| Error::Config(format!("invalid date {date:?}: {e}")))?;
    let panel = cfg.load_panel()?;
    let members = match select_universe(&panel, date, &cfg.selection) {
        Ok(s) => s.members,
        Err(Error::EmptyUniverse) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut text = String::from("rank,symbol,label,slope,vol,rolling_sharpe\n");
    for m in &members {
        let a = &m.asset;
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.rank,
            a.symbol,
            a.label.as_str(),
            a.slope,
            a.vol,
            fmt_opt(a.rolling_sharpe)
        ));
    }
    emit(&text)
}

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<(), Failure> {
    match io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => {
            Err(anyhow::Error::new(e).context("writing to stdout").into())
        }
        _ => Ok(()),
    }
}

fn cmd_frontier(cfg: &GlobalConfig) -> Result<(), Failure> {
    let panel = cfg.load_panel()?;
    let bt = cfg.backtest_config()?;
    let (universe, points) = latest_frontier(&panel, &bt)?;
    let mut symbols: Vec<String> = universe.symbols().into_iter().map(String::from).collect();
    symbols.sort();
    let mut rows = Vec::with_capacity(points.len());
    for p in points {
        let sol = p
            .outcome
            .map_err(|e| anyhow::Error::new(e).context(format!("lambda {}", p.lambda)))?;
        let mut row = format!("{},{},{}", p.lambda, sol.expected_return, sol.variance);
        for s in &symbols {
            row.push_str(&format!(",{}", sol.weights.get(s)));
        }
        rows.push(row);
    }
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("frontier.csv");
    let mut text = format!("lambda,expected_return,variance,{}\n", symbols.join(","));
    for r in rows {
        text.push_str(&r);
        text.push('\n');
    }
    fs::write(&path, text).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_evolve(cfg: &GlobalConfig) -> Result<(), Failure> {
    let panel = cfg.load_panel()?;
    let gp = cfg.gp_config();
    let Evolution {
        ranked,
        best_per_generation,
    } = evolve(&panel, &gp)?;
    create_dir(&cfg.output_dir)?;
    let path = cfg.output_dir.join("alphas.csv");
    let mut text = String::from("rank,fitness,sharpe,turnover,mdd,expression\n");
    for (i, ind) in ranked.iter().enumerate() {
        let s = ind.score;
        text.push_str(&format!(
            "{},{},{},{},{},\"{}\"\n",
            i + 1,
            fmt_opt(s.map(|s| s.fitness)),
            fmt_opt(s.map(|s| s.sharpe)),
            fmt_opt(s.map(|s| s.turnover)),
            fmt_opt(s.map(|s| s.mdd)),
            ind.expr
        ));
    }
    fs::write(&path, text).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    println!(
        "best fitness per generation: {}",
        best_per_generation
            .iter()
            .map(|f| format!("{f:.4}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    println!("champion: {}", ranked[0].expr);
    Ok(())
}

fn cmd_metrics(path: &Path) -> Result<(), Failure> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()).into());
    }
    let schema = |row: u64, message: String| Error::SchemaViolation { row, message };
    let mut reader = csv::Reader::from_path(path).map_err(|e| schema(0, e.to_string()))?;
    let headers = reader.headers().map_err(|e| schema(1, e.to_string()))?.clone();
    let col = headers
        .iter()
        .position(|h| h == "equity")
        .ok_or_else(|| schema(1, "no `equity` column".into()))?;
    let mut equity = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i as u64 + 2;
        let rec = rec.map_err(|e| schema(row, e.to_string()))?;
        let v: f64 = rec
            .get(col)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| schema(row, "equity is not a number".into()))?;
        equity.push(v);
    }
    let block: MetricsBlock = metrics::compute(&equity, &MetricsInputs::default())?;
    let json = serde_json::to_string_pretty(&block).context("serializing metrics")?;
    emit(&(json + "\n"))
}
