use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::indicators;
use crate::market_data::PricePanel;

use super::expr::{AlphaExpr, BinaryOp, Leaf, UnaryOp};

/// Per-asset daily signal values aligned with the panel; `NaN` is missing.
pub type SignalPanel = Vec<Vec<f64>>;

const DIV_EPS: f64 = 1e-12;

/// Evaluates the tree bottom-up over every asset and bar. The first
/// `expr.warmup()` bars are always missing.
pub fn eval_alpha(expr: &AlphaExpr, panel: &PricePanel) -> Result<SignalPanel> {
    expr.validate(usize::MAX)?;
    let warmup = expr.warmup();
    if panel.n_dates() <= warmup {
        return Err(Error::InsufficientHistory {
            needed: warmup + 1,
            available: panel.n_dates(),
        });
    }
    let mut out = eval_node(expr, panel);
    for series in out.iter_mut() {
        series[..warmup].fill(f64::NAN);
    }
    Ok(out)
}

fn eval_node(expr: &AlphaExpr, panel: &PricePanel) -> SignalPanel {
    match expr {
        AlphaExpr::Leaf(Leaf::Price) => panel.closes.clone(),
        AlphaExpr::Leaf(Leaf::Volume) => panel.volumes.clone(),
        AlphaExpr::Leaf(Leaf::Returns) => panel
            .closes
            .iter()
            .map(|c| {
                std::iter::once(f64::NAN)
                    .chain(c.windows(2).map(|w| w[1] / w[0] - 1.0))
                    .collect()
            })
            .collect(),
        AlphaExpr::Leaf(Leaf::Const(k)) => vec![vec![*k; panel.n_dates()]; panel.n_assets()],
        AlphaExpr::Unary(op, x) => {
            let inner = eval_node(x, panel);
            inner.iter().map(|s| apply_unary(*op, s)).collect()
        }
        AlphaExpr::Binary(BinaryOp::Rank, a, b) => {
            let ra = cross_rank(&eval_node(a, panel));
            let rb = cross_rank(&eval_node(b, panel));
            zip_with(&ra, &rb, |x, y| x - y)
        }
        AlphaExpr::Binary(op, a, b) => {
            let va = eval_node(a, panel);
            let vb = eval_node(b, panel);
            let f: fn(f64, f64) -> f64 = match op {
                BinaryOp::Add => |x, y| x + y,
                BinaryOp::Sub => |x, y| x - y,
                BinaryOp::Mul => |x, y| x * y,
                BinaryOp::DivSafe => |x, y| if y.abs() < DIV_EPS { 0.0 } else { x / y },
                BinaryOp::Rank => unreachable!(),
            };
            zip_with(&va, &vb, f)
        }
    }
}

fn zip_with(a: &SignalPanel, b: &SignalPanel, f: impl Fn(f64, f64) -> f64) -> SignalPanel {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(p, q)| if p.is_nan() || q.is_nan() { f64::NAN } else { f(*p, *q) })
                .collect()
        })
        .collect()
}

fn apply_unary(op: UnaryOp, s: &[f64]) -> Vec<f64> {
    match op {
        UnaryOp::Neg => s.iter().map(|x| -x).collect(),
        UnaryOp::Abs => s.iter().map(|x| x.abs()).collect(),
        UnaryOp::RollingMean(w) => indicators::rolling_mean(s, w),
        UnaryOp::RollingStd(w) => indicators::rolling_std(s, w),
        UnaryOp::Delay(d) => indicators::delay(s, d),
        UnaryOp::Rsi(w) => indicators::rsi(s, w),
        UnaryOp::Macd { fast, slow, signal } => indicators::macd(s, fast, slow, signal),
    }
}

/// Percentile rank across assets per bar, in `[0, 1]` with ties averaged.
/// A bar with a single valid value ranks it 0.5.
pub fn cross_rank(values: &SignalPanel) -> SignalPanel {
    let n_assets = values.len();
    let n_dates = values.first().map_or(0, Vec::len);
    let mut out = vec![vec![f64::NAN; n_dates]; n_assets];
    let mut idx: Vec<usize> = Vec::with_capacity(n_assets);
    for t in 0..n_dates {
        idx.clear();
        idx.extend((0..n_assets).filter(|&a| !values[a][t].is_nan()));
        idx.sort_by(|&a, &b| values[a][t].partial_cmp(&values[b][t]).unwrap_or(Ordering::Equal));
        let k = idx.len();
        if k == 1 {
            out[idx[0]][t] = 0.5;
            continue;
        }
        let mut i = 0;
        while i < k {
            let mut j = i;
            while j + 1 < k && values[idx[j + 1]][t] == values[idx[i]][t] {
                j += 1;
            }
            let r = (i + j) as f64 / 2.0 / (k - 1) as f64;
            for &a in &idx[i..=j] {
                out[a][t] = r;
            }
            i = j + 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn panel() -> PricePanel {
        let cal = (1..=3).map(|d| NaiveDate::from_ymd_opt(2024, 1, d).unwrap()).collect();
        PricePanel {
            assets: vec!["A".into(), "B".into()],
            calendar: cal,
            closes: vec![vec![100.0, 110.0, 99.0], vec![50.0, 50.0, 51.0]],
            volumes: vec![vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 0.0]],
            caps: vec![vec![1.0; 3], vec![1.0; 3]],
        }
    }

    #[test]
    fn constant_leaf() {
        let s = eval_alpha(&"1".parse().unwrap(), &panel()).unwrap();
        assert!(s.iter().flatten().all(|x| *x == 1.0));
    }

    #[test]
    fn add_is_linear() {
        let p = panel();
        let s = eval_alpha(&"(add price price)".parse().unwrap(), &p).unwrap();
        for (a, row) in s.iter().enumerate() {
            for (t, v) in row.iter().enumerate() {
                assert_eq!(*v, 2.0 * p.closes[a][t]);
            }
        }
    }

    #[test]
    fn rolling_mean_with_warmup() {
        let s = eval_alpha(&"(rolling_mean price 2)".parse().unwrap(), &panel()).unwrap();
        assert!(s[0][0].is_nan());
        assert_eq!(&s[0][1..], &[105.0, 104.5]);
    }

    #[test]
    fn div_safe_zero_denominator() {
        let s = eval_alpha(&"(div_safe price volume)".parse().unwrap(), &panel()).unwrap();
        assert_eq!(s[1], vec![0.0, 0.0, 0.0]);
        assert_eq!(s[0][1], 55.0);
    }

    #[test]
    fn rank_difference() {
        let s = eval_alpha(&"(rank price volume)".parse().unwrap(), &panel()).unwrap();
        // price: A above B every bar; volume: A above B every bar
        assert!(s.iter().flatten().all(|x| *x == 0.0));
        let s = eval_alpha(&"(rank price 0.0)".parse().unwrap(), &panel()).unwrap();
        assert_eq!(s[0], vec![0.5; 3]);
        assert_eq!(s[1], vec![-0.5; 3]);
    }

    #[test]
    fn too_short_panel() {
        assert!(matches!(
            eval_alpha(&"(rolling_mean price 5)".parse().unwrap(), &panel()),
            Err(Error::InsufficientHistory { .. })
        ));
    }
}
