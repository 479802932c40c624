//! Rolling-window indicators over daily series. Outputs have the input's
//! length; positions without a full window are `NaN`, and any `NaN` inside a
//! window propagates.

use crate::stats::{mean, sample_std};

pub fn rolling_mean(xs: &[f64], window: usize) -> Vec<f64> {
    rolling(xs, window, mean)
}

/// Sample standard deviation per window; a window of one gives zero.
pub fn rolling_std(xs: &[f64], window: usize) -> Vec<f64> {
    rolling(xs, window, |w| if w.len() < 2 { 0.0 } else { sample_std(w) })
}

fn rolling(xs: &[f64], window: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let window = window.max(1);
    let mut out = vec![f64::NAN; xs.len()];
    if xs.len() < window {
        return out;
    }
    for (i, w) in xs.windows(window).enumerate() {
        if w.iter().all(|x| !x.is_nan()) {
            out[i + window - 1] = f(w);
        }
    }
    out
}

/// Shifts the series `lag` bars later.
pub fn delay(xs: &[f64], lag: usize) -> Vec<f64> {
    let mut out = vec![f64::NAN; xs.len()];
    if lag < xs.len() {
        out[lag..].copy_from_slice(&xs[..xs.len() - lag]);
    }
    out
}

fn first_valid(xs: &[f64]) -> Option<usize> {
    xs.iter().position(|x| !x.is_nan())
}

/// Exponential moving average with `alpha = 2 / (period + 1)`, seeded with
/// the simple mean of the first `period` valid values.
pub fn ema(xs: &[f64], period: usize) -> Vec<f64> {
    let period = period.max(1);
    let mut out = vec![f64::NAN; xs.len()];
    let Some(start) = first_valid(xs) else {
        return out;
    };
    if xs.len() - start < period {
        return out;
    }
    let seed_end = start + period;
    let mut value = mean(&xs[start..seed_end]);
    if value.is_nan() {
        return out;
    }
    out[seed_end - 1] = value;
    let alpha = 2.0 / (period as f64 + 1.0);
    for i in seed_end..xs.len() {
        if xs[i].is_nan() {
            break;
        }
        value += alpha * (xs[i] - value);
        out[i] = value;
    }
    out
}

/// Wilder's relative strength index in `[0, 100]`.
pub fn rsi(xs: &[f64], period: usize) -> Vec<f64> {
    let period = period.max(1);
    let mut out = vec![f64::NAN; xs.len()];
    let Some(start) = first_valid(xs) else {
        return out;
    };
    if xs.len() - start <= period {
        return out;
    }
    let value = |gain: f64, loss: f64| {
        if loss == 0.0 {
            if gain == 0.0 {
                50.0
            } else {
                100.0
            }
        } else {
            100.0 - 100.0 / (1.0 + gain / loss)
        }
    };
    let (mut gain, mut loss) = (0.0, 0.0);
    for i in start + 1..=start + period {
        let d = xs[i] - xs[i - 1];
        if d.is_nan() {
            return out;
        }
        gain += d.max(0.0);
        loss += (-d).max(0.0);
    }
    gain /= period as f64;
    loss /= period as f64;
    out[start + period] = value(gain, loss);
    let p = period as f64;
    for i in start + period + 1..xs.len() {
        let d = xs[i] - xs[i - 1];
        if d.is_nan() {
            break;
        }
        gain = (gain * (p - 1.0) + d.max(0.0)) / p;
        loss = (loss * (p - 1.0) + (-d).max(0.0)) / p;
        out[i] = value(gain, loss);
    }
    out
}

/// MACD histogram: `(ema_fast - ema_slow) - ema_signal(ema_fast - ema_slow)`.
pub fn macd(xs: &[f64], fast: usize, slow: usize, signal: usize) -> Vec<f64> {
    let f = ema(xs, fast);
    let s = ema(xs, slow);
    let line: Vec<f64> = f.iter().zip(&s).map(|(a, b)| a - b).collect();
    let sig = ema(&line, signal);
    line.iter().zip(&sig).map(|(a, b)| a - b).collect()
}
