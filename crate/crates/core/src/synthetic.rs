//! Seeded synthetic panels for tests, benchmarks and the shipped fixture.

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::market_data::PricePanel;

/// Seed of the shipped fixture panel.
pub const FIXTURE_SEED: u64 = 20_240_101;
pub const FIXTURE_DATES: usize = 700;
/// The planted high-Sharpe, low-volatility, largest and most traded asset.
pub const DOMINANT: &str = "DOM";
/// Trades a few hundred shares a day and often nothing at all.
pub const ILLIQUID: &str = "ILLQ";
/// Has no bars over `SUSPENSION`.
pub const SUSPENDED: &str = "SUSP";
pub const SUSPENSION: std::ops::Range<usize> = 250..280;
/// Calendar positions of a market-wide sell-off in the fixture.
pub const CRASH: std::ops::Range<usize> = 420..436;

/// `n` consecutive weekdays from 2022-01-03.
pub fn business_days(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2022, 1, 3).unwrap();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d + Days::new(1);
    }
    out
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let k = 10f64.powi(decimals);
    (x * k).round() / k
}

struct AssetPlan {
    symbol: String,
    start_price: f64,
    shares: f64,
    base_volume: f64,
    beta: f64,
    /// `(drift, vol)` per regime; regimes split the calendar evenly.
    regimes: Vec<(f64, f64)>,
}

fn simulate(
    plans: &[AssetPlan],
    n_dates: usize,
    crash: Option<std::ops::Range<usize>>,
    rng: &mut ChaCha8Rng,
) -> PricePanel {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let market: Vec<f64> = (0..n_dates)
        .map(|t| {
            let shock = crash.as_ref().is_some_and(|c| c.contains(&t));
            let drift = if shock { -0.009 } else { 0.0002 };
            drift + 0.007 * std_normal.sample(rng)
        })
        .collect();
    let mut panel = PricePanel {
        assets: Vec::with_capacity(plans.len()),
        calendar: business_days(n_dates),
        closes: Vec::with_capacity(plans.len()),
        volumes: Vec::with_capacity(plans.len()),
        caps: Vec::with_capacity(plans.len()),
    };
    for plan in plans {
        let mut price = plan.start_price;
        let mut closes = Vec::with_capacity(n_dates);
        let mut volumes = Vec::with_capacity(n_dates);
        let mut caps = Vec::with_capacity(n_dates);
        for (t, m) in market.iter().enumerate() {
            if t > 0 {
                let regime = t * plan.regimes.len() / n_dates;
                let (drift, vol) = plan.regimes[regime];
                let r = drift + plan.beta * m + vol * std_normal.sample(rng);
                price *= (r.max(-0.5)).exp();
            }
            let close = round_to(price, 4);
            let volume = (plan.base_volume * (0.35 * std_normal.sample(rng)).exp()).round();
            closes.push(close);
            volumes.push(volume);
            caps.push(round_to(close * plan.shares, 0));
        }
        panel.assets.push(plan.symbol.clone());
        panel.closes.push(closes);
        panel.volumes.push(volumes);
        panel.caps.push(caps);
    }
    panel
}

/// The shipped 20-asset, 700-day fixture with planted regimes, one dominant
/// asset, one illiquid asset and one temporarily suspended asset.
pub fn fixture_panel() -> PricePanel {
    let mut rng = ChaCha8Rng::seed_from_u64(FIXTURE_SEED);
    let mut plans = vec![AssetPlan {
        symbol: DOMINANT.into(),
        start_price: 50.0,
        shares: 1e10,
        base_volume: 6e7,
        beta: 0.1,
        regimes: vec![(0.0013, 0.0035)],
    }];
    let drifts = [-0.0012, -0.0004, 0.0, 0.0004, 0.0009];
    for i in 1..=17 {
        let regimes = (0..4)
            .map(|_| (drifts[rng.gen_range(0..drifts.len())], rng.gen_range(0.010..0.030)))
            .collect();
        plans.push(AssetPlan {
            symbol: format!("S{i:02}"),
            start_price: rng.gen_range(10.0..120.0),
            shares: rng.gen_range(1e8..2e9),
            base_volume: rng.gen_range(1e6..2e7),
            beta: rng.gen_range(0.6..1.3),
            regimes,
        });
    }
    plans.push(AssetPlan {
        symbol: ILLIQUID.into(),
        start_price: 8.0,
        shares: 5e7,
        base_volume: 300.0,
        beta: 0.5,
        regimes: vec![(0.0003, 0.02)],
    });
    plans.push(AssetPlan {
        symbol: SUSPENDED.into(),
        start_price: 30.0,
        shares: 6e8,
        base_volume: 4e6,
        beta: 1.0,
        regimes: vec![(0.0002, 0.018)],
    });
    plans.sort_by(|a, b| a.symbol.cmp(&b.symbol));
    let mut panel = simulate(&plans, FIXTURE_DATES, Some(CRASH), &mut rng);

    let illq = panel.asset_index(ILLIQUID).unwrap();
    for v in panel.volumes[illq].iter_mut() {
        if rng.gen_bool(0.2) {
            *v = 0.0;
        }
    }
    let susp = panel.asset_index(SUSPENDED).unwrap();
    for t in SUSPENSION {
        panel.closes[susp][t] = f64::NAN;
        panel.volumes[susp][t] = f64::NAN;
        panel.caps[susp][t] = f64::NAN;
    }
    panel
}

/// A complete panel of `n_assets` random walks with two regimes each.
pub fn random_panel(n_assets: usize, n_dates: usize, seed: u64) -> PricePanel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plans: Vec<AssetPlan> = (0..n_assets)
        .map(|i| AssetPlan {
            symbol: format!("X{i:04}"),
            start_price: rng.gen_range(5.0..200.0),
            shares: rng.gen_range(1e7..1e10),
            base_volume: rng.gen_range(1e4..1e7),
            beta: rng.gen_range(0.3..1.4),
            regimes: (0..2)
                .map(|_| (rng.gen_range(-0.001..0.0015), rng.gen_range(0.005..0.03)))
                .collect(),
        })
        .collect();
    simulate(&plans, n_dates, None, &mut rng)
}
