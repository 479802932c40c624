use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use folio_core::market_data::{write_panel, PricePanel};
use folio_core::synthetic;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn folio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_folio"))
        .args(args)
        .env_remove("FOLIO_OUTPUT_DIR")
        .output()
        .expect("spawn folio")
}

fn config(dir: &Path, data: &Path, extra: &str) -> String {
    let text = format!(
        "output_dir = {:?}\n{extra}\n[data]\npath = {:?}\n",
        dir.join("out").display().to_string(),
        data.display().to_string()
    );
    let path = dir.join("folio.toml");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn fixture_config(dir: &Path, extra: &str) -> String {
    config(dir, &root().join("fixtures/synthetic_panel.csv"), extra)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Keeps only the named assets of `p`.
fn subset(p: &PricePanel, keep: &[&str]) -> PricePanel {
    let idx: Vec<usize> = keep.iter().map(|s| p.asset_index(s).unwrap()).collect();
    PricePanel {
        assets: keep.iter().map(|s| s.to_string()).collect(),
        calendar: p.calendar.clone(),
        closes: idx.iter().map(|&i| p.closes[i].clone()).collect(),
        volumes: idx.iter().map(|&i| p.volumes[i].clone()).collect(),
        caps: idx.iter().map(|&i| p.caps[i].clone()).collect(),
    }
}

#[test]
fn select_ranks_dominant_first_on_last_bar() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), "");
    let o = folio(&["-c", &cfg, "select", "2024-09-06"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rank,symbol,label,slope,vol,rolling_sharpe"));
    assert!(lines.next().unwrap().starts_with("1,DOM,"), "{text}");
}

#[test]
fn select_before_lookback_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), "");
    let o = folio(&["-c", &cfg, "select", "2022-01-10"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
}

#[test]
fn select_on_unknown_date_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), "");
    // a Saturday
    assert_eq!(code(&folio(&["-c", &cfg, "select", "2024-09-07"])), 2);
    assert_eq!(code(&folio(&["-c", &cfg, "select", "not-a-date"])), 1);
}

#[test]
fn empty_universe_prints_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), "[selection]\ntau1 = 1.0\ntau2 = 1.0\n");
    let o = folio(&["-c", &cfg, "select", "2024-09-06"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), "rank,symbol,label,slope,vol,rolling_sharpe\n");
}

#[test]
fn unknown_key_and_missing_config_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), "[optimizer]\nlamda = 3.0\n");
    let o = folio(&["-c", &cfg, "frontier"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));
    let missing = dir.path().join("nope.toml").display().to_string();
    assert_eq!(code(&folio(&["-c", &missing, "backtest"])), 1);
    assert_eq!(code(&folio(&["frobnicate"])), 1);
}

#[test]
fn single_asset_frontier_is_fully_invested() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one.csv");
    write_panel(&subset(&synthetic::fixture_panel(), &[synthetic::DOMINANT]), &data).unwrap();
    let cfg = config(dir.path(), &data, "");
    let o = folio(&["-c", &cfg, "frontier"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/frontier.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,expected_return,variance,DOM"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    for row in rows {
        let w: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((w - 1.0).abs() < 1e-12, "{row}");
    }
}

#[test]
fn frontier_variance_falls_as_lambda_rises() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), "");
    assert_eq!(code(&folio(&["-c", &cfg, "frontier"])), 0);
    let text = std::fs::read_to_string(dir.path().join("out/frontier.csv")).unwrap();
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let c: Vec<f64> = l.split(',').take(3).map(|x| x.parse().unwrap()).collect();
            (c[0], c[2])
        })
        .collect();
    assert!(rows.len() >= 2);
    for w in rows.windows(2) {
        assert!(w[1].0 > w[0].0);
        assert!(w[1].1 <= w[0].1 + 1e-9, "{w:?}");
    }
}

#[test]
fn evolve_is_reproducible_and_keeps_seeded_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let gp = "[gp]\npopulation = 12\ngenerations = 0\nseed_exprs = [\"(delay returns 1)\"]\n";
    let cfg = fixture_config(dir.path(), gp);
    let alphas = dir.path().join("out/alphas.csv");

    assert_eq!(code(&folio(&["-c", &cfg, "evolve"])), 0);
    let initial = std::fs::read_to_string(&alphas).unwrap();
    assert_eq!(initial.lines().count(), 13);
    let seeded = initial
        .lines()
        .find(|l| l.ends_with("\"(delay returns 1)\""))
        .expect("seeded expression kept");
    let seeded_fitness: f64 = seeded.split(',').nth(1).unwrap().parse().unwrap();

    let cfg = fixture_config(dir.path(), &gp.replace("generations = 0", "generations = 3"));
    let o = folio(&["-c", &cfg, "evolve"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(&alphas).unwrap();
    let o2 = folio(&["-c", &cfg, "evolve"]);
    assert_eq!(stdout(&o), stdout(&o2));
    assert_eq!(first, std::fs::read(&alphas).unwrap());

    let text = String::from_utf8(first).unwrap();
    let best: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(best >= seeded_fitness - 1e-12, "{best} < {seeded_fitness}");
}

#[test]
fn seed_flag_changes_population() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), "[gp]\npopulation = 10\ngenerations = 0\n");
    let alphas = dir.path().join("out/alphas.csv");
    assert_eq!(code(&folio(&["-c", &cfg, "--seed", "1", "evolve"])), 0);
    let a = std::fs::read(&alphas).unwrap();
    assert_eq!(code(&folio(&["-c", &cfg, "--seed", "2", "evolve"])), 0);
    assert_ne!(a, std::fs::read(&alphas).unwrap());
}

#[test]
fn output_dir_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), "");
    let target = dir.path().join("elsewhere");
    let o = Command::new(env!("CARGO_BIN_EXE_folio"))
        .args(["-c", &cfg, "frontier"])
        .env("FOLIO_OUTPUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(target.join("frontier.csv").exists());
    assert!(!dir.path().join("out").exists());
}

#[test]
fn metrics_reads_backtest_equity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path(), "");
    assert_eq!(code(&folio(&["-c", &cfg, "backtest"])), 0);
    let equity = dir.path().join("out/equal_weight/equity.csv").display().to_string();
    let o = folio(&["metrics", &equity]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/equal_weight/metrics.json")).unwrap())
            .unwrap();
    let roi = |v: &serde_json::Value| v["roi"].as_f64().unwrap();
    assert!((roi(&printed) - roi(&saved)).abs() < 1e-9);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "date,value\n2024-01-01,1\n").unwrap();
    assert_eq!(code(&folio(&["metrics", &bad.display().to_string()])), 2);
    assert_eq!(code(&folio(&["metrics", "/no/such/file.csv"])), 2);
}
