//! Tree evolution: ramped half-and-half initialization, tournament selection,
//! subtree crossover, point mutation, single elitism and a final hill climb on
//! the champion.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backtest::Simulation;
use crate::error::{Error, Result};
use crate::market_data::PricePanel;
use crate::metrics;
use crate::optimizer::WeightVector;

use super::eval::eval_alpha;
use super::expr::{AlphaExpr, BinaryOp, Leaf, UnaryOp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitnessWeights {
    pub sharpe: f64,
    pub turnover: f64,
    pub mdd: f64,
}

impl Default for FitnessWeights {
    fn default() -> Self {
        FitnessWeights {
            sharpe: 1.0,
            turnover: 0.1,
            mdd: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub population: usize,
    pub generations: usize,
    pub max_depth: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub seed: u64,
    pub fitness_weights: FitnessWeights,
    /// Fraction of valid assets held (equal weight, highest signal first).
    pub top_quantile: f64,
    pub cost_bps_per_side: f64,
    /// First calendar position at which the scoring backtest may trade.
    pub eval_start: usize,
    /// Consecutive rejected tweaks that end the hill climb.
    pub hill_climb_patience: usize,
    /// Expressions placed in the initial population ahead of random trees.
    pub seed_exprs: Vec<String>,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population: 50,
            generations: 10,
            max_depth: 6,
            mutation_rate: 0.2,
            crossover_rate: 0.7,
            seed: 42,
            fitness_weights: FitnessWeights::default(),
            top_quantile: 0.2,
            cost_bps_per_side: 5.0,
            eval_start: 60,
            hill_climb_patience: 50,
            seed_exprs: Vec::new(),
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::invalid("gp.population", "must be at least 2"));
        }
        if self.max_depth < 2 {
            return Err(Error::invalid("gp.max_depth", "must be at least 2"));
        }
        for (name, v) in [
            ("gp.mutation_rate", self.mutation_rate),
            ("gp.crossover_rate", self.crossover_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(name, "must lie in [0, 1]"));
            }
        }
        for (i, text) in self.seed_exprs.iter().enumerate() {
            let parsed = text.parse::<AlphaExpr>().and_then(|e| e.validate(self.max_depth));
            if let Err(e) = parsed {
                return Err(Error::invalid(&format!("gp.seed_exprs[{i}]"), e.to_string()));
            }
        }
        if !(self.top_quantile > 0.0 && self.top_quantile <= 1.0) {
            return Err(Error::invalid("gp.top_quantile", "must lie in (0, 1]"));
        }
        if !(self.cost_bps_per_side >= 0.0 && self.cost_bps_per_side.is_finite()) {
            return Err(Error::invalid(
                "gp.cost_bps_per_side",
                "must be finite and non-negative",
            ));
        }
        let w = self.fitness_weights;
        if ![w.sharpe, w.turnover, w.mdd].iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("gp.fitness_weights", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaScore {
    pub sharpe: f64,
    pub turnover: f64,
    pub mdd: f64,
    pub fitness: f64,
}

impl AlphaScore {
    pub fn new(sharpe: f64, turnover: f64, mdd: f64, w: &FitnessWeights) -> Self {
        AlphaScore {
            sharpe,
            turnover,
            mdd,
            fitness: w.sharpe * sharpe - w.turnover * turnover - w.mdd * mdd,
        }
    }
}

/// Long-only equal weights over the top quantile of one cross-section.
/// Returns `None` when fewer than two assets have a signal or all signals tie.
pub fn signal_weights(panel: &PricePanel, signal: &[Vec<f64>], t: usize, top_quantile: f64) -> Option<WeightVector> {
    let mut valid: Vec<(usize, f64)> = signal
        .iter()
        .enumerate()
        .filter_map(|(a, s)| s[t].is_finite().then_some((a, s[t])))
        .collect();
    if is_flat(valid.iter().map(|x| x.1)) {
        return None;
    }
    valid.sort_by(|x, y| {
        y.1.partial_cmp(&x.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| panel.assets[x.0].cmp(&panel.assets[y.0]))
    });
    let k = ((top_quantile * valid.len() as f64).ceil() as usize).clamp(1, valid.len());
    let mut picked: Vec<&String> = valid[..k].iter().map(|(a, _)| &panel.assets[*a]).collect();
    picked.sort();
    Some(WeightVector::new(
        picked.into_iter().cloned().collect(),
        vec![1.0 / k as f64; k],
    ))
}

fn is_flat(mut xs: impl Iterator<Item = f64>) -> bool {
    let Some(first) = xs.next() else {
        return true;
    };
    let mut count = 1;
    let mut all_equal = true;
    for x in xs {
        count += 1;
        all_equal &= x == first;
    }
    count < 2 || all_equal
}

/// Backtests the signal (trade at close `t` from signals at `t - 1`, no risk
/// control) and combines Sharpe, mean turnover and drawdown.
pub fn score_alpha(expr: &AlphaExpr, panel: &PricePanel, cfg: &GpConfig) -> Result<AlphaScore> {
    let signal = eval_alpha(expr, panel)?;
    let n = panel.n_dates();
    if (0..n).all(|t| is_flat(signal.iter().map(|s| s[t]).filter(|x| x.is_finite()))) {
        return Err(Error::DegenerateSignal);
    }
    let first = cfg.eval_start.max(expr.warmup() + 1).max(1);
    if first + 1 >= n {
        return Err(Error::InsufficientHistory {
            needed: first + 2,
            available: n,
        });
    }
    let sim = Simulation {
        panel,
        first,
        last: n - 1,
        initial_capital: 1.0,
        cost_bps_per_side: cfg.cost_bps_per_side,
        risk: None,
        turnover_cap: 2.0,
        adv_participation: None,
    };
    let trace = sim.run(|t| Ok(signal_weights(panel, &signal, t - 1, cfg.top_quantile)))?;
    let returns = trace.period_returns();
    let sharpe = metrics::sharpe(&returns, 0.0, crate::PERIODS_PER_YEAR).unwrap_or(0.0);
    let history: Vec<WeightVector> = trace.weights_history.into_iter().map(|d| d.weights).collect();
    let turnover = metrics::turnover_series(&history)
        .map(|s| crate::stats::mean(&s))
        .unwrap_or(0.0);
    let mdd = metrics::max_drawdown(&trace.equity)?;
    Ok(AlphaScore::new(sharpe, turnover, mdd, &cfg.fitness_weights))
}

/// One member of an evolved population. A `None` score means evaluation
/// failed and the individual ranks last.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub expr: AlphaExpr,
    pub score: Option<AlphaScore>,
}

impl Individual {
    pub fn fitness(&self) -> f64 {
        self.score.map_or(f64::NEG_INFINITY, |s| s.fitness)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    /// Final population, fittest first (ties broken by expression text).
    pub ranked: Vec<Individual>,
    /// Best fitness of the initial population and after each generation.
    pub best_per_generation: Vec<f64>,
}

impl Evolution {
    pub fn champion(&self) -> &Individual {
        &self.ranked[0]
    }
}

pub fn evolve(panel: &PricePanel, cfg: &GpConfig) -> Result<Evolution> {
    evolve_with(panel, cfg, &[])
}

/// As [`evolve`], seeding the first initial slots with `injected` (after any
/// configured `seed_exprs`).
pub fn evolve_with(panel: &PricePanel, cfg: &GpConfig, injected: &[AlphaExpr]) -> Result<Evolution> {
    cfg.validate()?;
    for e in injected {
        e.validate(cfg.max_depth)?;
    }
    let mut seeded: Vec<AlphaExpr> = cfg.seed_exprs.iter().map(|t| t.parse()).collect::<Result<_>>()?;
    seeded.extend(injected.iter().cloned());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut scorer = Scorer {
        panel,
        cfg,
        cache: HashMap::new(),
    };

    let mut exprs: Vec<AlphaExpr> = seeded.into_iter().take(cfg.population).collect();
    let span = cfg.max_depth - 1;
    for i in exprs.len()..cfg.population {
        let depth = 2 + i % span;
        let full = i % 2 == 1;
        exprs.push(random_tree(&mut rng, depth, full));
    }
    let mut pop: Vec<Individual> = exprs.into_iter().map(|e| scorer.individual(e)).collect();
    let mut best_per_generation = vec![best(&pop).fitness()];

    for _ in 0..cfg.generations {
        let elite = best(&pop).clone();
        let mut next = vec![elite];
        while next.len() < cfg.population {
            let mut child = tournament(&mut rng, &pop).expr.clone();
            if rng.gen_bool(cfg.crossover_rate) {
                let other = tournament(&mut rng, &pop).expr.clone();
                child = crossover(&mut rng, &child, &other);
            }
            if rng.gen_bool(cfg.mutation_rate) {
                point_mutate(&mut rng, &mut child);
            }
            truncate(&mut rng, &mut child, cfg.max_depth);
            next.push(scorer.individual(child));
        }
        pop = next;
        best_per_generation.push(best(&pop).fitness());
    }

    hill_climb(&mut rng, &mut scorer, &mut pop);
    sort_ranked(&mut pop);
    Ok(Evolution {
        ranked: pop,
        best_per_generation,
    })
}

struct Scorer<'a> {
    panel: &'a PricePanel,
    cfg: &'a GpConfig,
    cache: HashMap<String, Option<AlphaScore>>,
}

impl Scorer<'_> {
    fn individual(&mut self, expr: AlphaExpr) -> Individual {
        let key = expr.to_string();
        let score = match self.cache.get(&key) {
            Some(s) => *s,
            None => {
                let s = match score_alpha(&expr, self.panel, self.cfg) {
                    Ok(s) if s.fitness.is_finite() => Some(s),
                    Ok(_) => None,
                    Err(e) => {
                        tracing::debug!(expr = %key, error = %e, "alpha scored as failure");
                        None
                    }
                };
                self.cache.insert(key, s);
                s
            }
        };
        Individual { expr, score }
    }
}

/// Highest fitness; the earliest index wins ties so elitism is stable.
fn best(pop: &[Individual]) -> &Individual {
    let mut best = &pop[0];
    for ind in &pop[1..] {
        if ind.fitness() > best.fitness() {
            best = ind;
        }
    }
    best
}

fn sort_ranked(pop: &mut [Individual]) {
    let mut keyed: Vec<(String, Individual)> = pop.iter().map(|i| (i.expr.to_string(), i.clone())).collect();
    keyed.sort_by(|(ka, a), (kb, b)| {
        b.fitness()
            .partial_cmp(&a.fitness())
            .unwrap_or(Ordering::Equal)
            .then_with(|| ka.cmp(kb))
    });
    for (slot, (_, ind)) in pop.iter_mut().zip(keyed) {
        *slot = ind;
    }
}

fn tournament<'p>(rng: &mut ChaCha8Rng, pop: &'p [Individual]) -> &'p Individual {
    let mut winner = &pop[rng.gen_range(0..pop.len())];
    for _ in 1..3 {
        let c = &pop[rng.gen_range(0..pop.len())];
        if c.fitness() > winner.fitness() {
            winner = c;
        }
    }
    winner
}

const CONSTANTS: [f64; 6] = [-1.0, -0.5, 0.5, 1.0, 2.0, 10.0];
const WINDOWS: [usize; 6] = [2, 3, 5, 10, 20, 40];
const DELAYS: [usize; 4] = [1, 2, 3, 5];
const RSI_WINDOWS: [usize; 3] = [7, 14, 21];
const MACD_PARAMS: [(usize, usize, usize); 2] = [(12, 26, 9), (5, 20, 5)];

fn random_leaf(rng: &mut ChaCha8Rng) -> AlphaExpr {
    AlphaExpr::Leaf(match rng.gen_range(0..4) {
        0 => Leaf::Price,
        1 => Leaf::Volume,
        2 => Leaf::Returns,
        _ => Leaf::Const(*CONSTANTS.choose(rng).unwrap()),
    })
}

fn random_unary(rng: &mut ChaCha8Rng) -> UnaryOp {
    match rng.gen_range(0..7) {
        0 => UnaryOp::Neg,
        1 => UnaryOp::Abs,
        2 => UnaryOp::RollingMean(*WINDOWS.choose(rng).unwrap()),
        3 => UnaryOp::RollingStd(*WINDOWS.choose(rng).unwrap()),
        4 => UnaryOp::Delay(*DELAYS.choose(rng).unwrap()),
        5 => UnaryOp::Rsi(*RSI_WINDOWS.choose(rng).unwrap()),
        _ => {
            let (fast, slow, signal) = *MACD_PARAMS.choose(rng).unwrap();
            UnaryOp::Macd { fast, slow, signal }
        }
    }
}

fn random_binary(rng: &mut ChaCha8Rng) -> BinaryOp {
    [
        BinaryOp::Add,
        BinaryOp::Sub,
        BinaryOp::Mul,
        BinaryOp::DivSafe,
        BinaryOp::Rank,
    ][rng.gen_range(0..5)]
}

/// Full trees reach `depth` on every path; grow trees may stop early.
fn random_tree(rng: &mut ChaCha8Rng, depth: usize, full: bool) -> AlphaExpr {
    if depth <= 1 || (!full && rng.gen_bool(0.3)) {
        return random_leaf(rng);
    }
    if rng.gen_bool(0.5) {
        AlphaExpr::unary(random_unary(rng), random_tree(rng, depth - 1, full))
    } else {
        AlphaExpr::binary(
            random_binary(rng),
            random_tree(rng, depth - 1, full),
            random_tree(rng, depth - 1, full),
        )
    }
}

/// Replaces a random subtree of `a` with a random subtree of `b`.
fn crossover(rng: &mut ChaCha8Rng, a: &AlphaExpr, b: &AlphaExpr) -> AlphaExpr {
    let mut child = a.clone();
    let donor = b.node(rng.gen_range(0..b.size())).unwrap().clone();
    let at = rng.gen_range(0..child.size());
    *child.node_mut(at).unwrap() = donor;
    child
}

/// Swaps one node for another of the same arity, keeping its children.
fn point_mutate(rng: &mut ChaCha8Rng, expr: &mut AlphaExpr) {
    let at = rng.gen_range(0..expr.size());
    match expr.node_mut(at).unwrap() {
        node @ AlphaExpr::Leaf(_) => *node = random_leaf(rng),
        AlphaExpr::Unary(op, _) => *op = random_unary(rng),
        AlphaExpr::Binary(op, _, _) => *op = random_binary(rng),
    }
}

/// Cuts every branch reaching below `max_depth`, putting fresh leaves in place.
fn truncate(rng: &mut ChaCha8Rng, expr: &mut AlphaExpr, max_depth: usize) {
    if max_depth <= 1 {
        if !matches!(expr, AlphaExpr::Leaf(_)) {
            *expr = random_leaf(rng);
        }
        return;
    }
    match expr {
        AlphaExpr::Leaf(_) => {}
        AlphaExpr::Unary(_, x) => truncate(rng, x, max_depth - 1),
        AlphaExpr::Binary(_, a, b) => {
            truncate(rng, a, max_depth - 1);
            truncate(rng, b, max_depth - 1);
        }
    }
}

/// A single-node change: a parameter nudge where the node has one, else a
/// same-arity operator or leaf swap.
fn tweak(rng: &mut ChaCha8Rng, expr: &AlphaExpr) -> AlphaExpr {
    let mut out = expr.clone();
    let at = rng.gen_range(0..out.size());
    let node = out.node_mut(at).unwrap();
    let nudge = |rng: &mut ChaCha8Rng, p: usize| -> usize {
        if rng.gen_bool(0.5) {
            p + 1
        } else {
            p.saturating_sub(1).max(1)
        }
    };
    match node {
        AlphaExpr::Leaf(Leaf::Const(c)) if rng.gen_bool(0.5) => {
            *c *= if rng.gen_bool(0.5) { 1.1 } else { 0.9 };
        }
        AlphaExpr::Unary(op, _) if rng.gen_bool(0.5) => match op {
            UnaryOp::RollingMean(w) | UnaryOp::RollingStd(w) | UnaryOp::Delay(w) | UnaryOp::Rsi(w) => {
                *w = nudge(rng, *w);
            }
            UnaryOp::Macd { fast, slow, .. } => {
                let f = nudge(rng, *fast);
                if f < *slow {
                    *fast = f;
                }
            }
            UnaryOp::Neg | UnaryOp::Abs => *op = random_unary(rng),
        },
        AlphaExpr::Leaf(_) => *node = random_leaf(rng),
        AlphaExpr::Unary(op, _) => *op = random_unary(rng),
        AlphaExpr::Binary(op, _, _) => *op = random_binary(rng),
    }
    out
}

/// Upper bound on proposals, in case fitness keeps creeping up.
const HILL_CLIMB_MAX_PROPOSALS: usize = 5_000;

fn hill_climb(rng: &mut ChaCha8Rng, scorer: &mut Scorer<'_>, pop: &mut [Individual]) {
    let mut at = 0;
    for (i, ind) in pop.iter().enumerate() {
        if ind.fitness() > pop[at].fitness() {
            at = i;
        }
    }
    if pop[at].score.is_none() {
        return;
    }
    let mut rejections = 0;
    let mut proposals = 0;
    while rejections < scorer.cfg.hill_climb_patience && proposals < HILL_CLIMB_MAX_PROPOSALS {
        proposals += 1;
        let candidate = tweak(rng, &pop[at].expr);
        if candidate.validate(scorer.cfg.max_depth).is_err() {
            rejections += 1;
            continue;
        }
        let scored = scorer.individual(candidate);
        if scored.fitness() > pop[at].fitness() {
            pop[at] = scored;
            rejections = 0;
        } else {
            rejections += 1;
        }
    }
}
