//! Alpha expression trees and their parenthesized prefix text form, e.g.
//! `(sub (rolling_mean price 5) (rolling_mean price 20))`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Leaf {
    Price,
    Volume,
    Returns,
    Const(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Abs,
    RollingMean(usize),
    RollingStd(usize),
    Delay(usize),
    Rsi(usize),
    Macd { fast: usize, slow: usize, signal: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    /// Division yielding zero where the denominator is below 1e-12 in magnitude.
    DivSafe,
    /// Cross-sectional percentile rank of the left operand minus that of the right.
    Rank,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaExpr {
    Leaf(Leaf),
    Unary(UnaryOp, Box<AlphaExpr>),
    Binary(BinaryOp, Box<AlphaExpr>, Box<AlphaExpr>),
}

impl UnaryOp {
    fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::RollingMean(_) => "rolling_mean",
            UnaryOp::RollingStd(_) => "rolling_std",
            UnaryOp::Delay(_) => "delay",
            UnaryOp::Rsi(_) => "rsi",
            UnaryOp::Macd { .. } => "macd",
        }
    }

    fn params(self) -> Vec<usize> {
        match self {
            UnaryOp::Neg | UnaryOp::Abs => vec![],
            UnaryOp::RollingMean(w) | UnaryOp::RollingStd(w) | UnaryOp::Delay(w) | UnaryOp::Rsi(w) => vec![w],
            UnaryOp::Macd { fast, slow, signal } => vec![fast, slow, signal],
        }
    }

    /// Bars of history consumed before the first defined output.
    pub fn warmup(self) -> usize {
        match self {
            UnaryOp::Neg | UnaryOp::Abs => 0,
            UnaryOp::RollingMean(w) | UnaryOp::RollingStd(w) => w.saturating_sub(1),
            UnaryOp::Delay(d) => d,
            UnaryOp::Rsi(w) => w,
            UnaryOp::Macd { fast, slow, signal } => fast.max(slow) + signal - 2,
        }
    }
}

impl BinaryOp {
    fn name(self) -> &'static str {
        match self {
            BinaryOp::Add => "add",
            BinaryOp::Sub => "sub",
            BinaryOp::Mul => "mul",
            BinaryOp::DivSafe => "div_safe",
            BinaryOp::Rank => "rank",
        }
    }
}

impl AlphaExpr {
    pub fn leaf(l: Leaf) -> Self {
        AlphaExpr::Leaf(l)
    }

    pub fn unary(op: UnaryOp, x: AlphaExpr) -> Self {
        AlphaExpr::Unary(op, Box::new(x))
    }

    pub fn binary(op: BinaryOp, a: AlphaExpr, b: AlphaExpr) -> Self {
        AlphaExpr::Binary(op, Box::new(a), Box::new(b))
    }

    /// A lone leaf has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            AlphaExpr::Leaf(_) => 1,
            AlphaExpr::Unary(_, x) => 1 + x.depth(),
            AlphaExpr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            AlphaExpr::Leaf(_) => 1,
            AlphaExpr::Unary(_, x) => 1 + x.size(),
            AlphaExpr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Longest warm-up along any root-to-leaf path.
    pub fn warmup(&self) -> usize {
        match self {
            AlphaExpr::Leaf(Leaf::Returns) => 1,
            AlphaExpr::Leaf(_) => 0,
            AlphaExpr::Unary(op, x) => op.warmup() + x.warmup(),
            AlphaExpr::Binary(_, a, b) => a.warmup().max(b.warmup()),
        }
    }

    /// Checks parameters (every window/delay >= 1, MACD fast < slow) and the depth bound.
    pub fn validate(&self, max_depth: usize) -> Result<()> {
        if self.depth() > max_depth {
            return Err(Error::MalformedTree(format!(
                "depth {} exceeds limit {max_depth}",
                self.depth()
            )));
        }
        self.check_params()
    }

    fn check_params(&self) -> Result<()> {
        match self {
            AlphaExpr::Leaf(Leaf::Const(c)) if !c.is_finite() => {
                Err(Error::MalformedTree(format!("non-finite constant {c}")))
            }
            AlphaExpr::Leaf(_) => Ok(()),
            AlphaExpr::Unary(op, x) => {
                if op.params().iter().any(|p| *p < 1) {
                    return Err(Error::MalformedTree(format!("{} parameter must be >= 1", op.name())));
                }
                if let UnaryOp::Macd { fast, slow, .. } = op {
                    if fast >= slow {
                        return Err(Error::MalformedTree("macd needs fast < slow".into()));
                    }
                }
                x.check_params()
            }
            AlphaExpr::Binary(_, a, b) => {
                a.check_params()?;
                b.check_params()
            }
        }
    }

    /// Node at pre-order position `index`.
    pub fn node(&self, index: usize) -> Option<&AlphaExpr> {
        let mut k = index;
        self.walk(&mut k)
    }

    fn walk(&self, k: &mut usize) -> Option<&AlphaExpr> {
        if *k == 0 {
            return Some(self);
        }
        *k -= 1;
        match self {
            AlphaExpr::Leaf(_) => None,
            AlphaExpr::Unary(_, x) => x.walk(k),
            AlphaExpr::Binary(_, a, b) => a.walk(k).or_else(|| b.walk(k)),
        }
    }

    pub fn node_mut(&mut self, index: usize) -> Option<&mut AlphaExpr> {
        let mut k = index;
        self.walk_mut(&mut k)
    }

    fn walk_mut(&mut self, k: &mut usize) -> Option<&mut AlphaExpr> {
        if *k == 0 {
            return Some(self);
        }
        *k -= 1;
        match self {
            AlphaExpr::Leaf(_) => None,
            AlphaExpr::Unary(_, x) => x.walk_mut(k),
            AlphaExpr::Binary(_, a, b) => match a.walk_mut(k) {
                Some(n) => Some(n),
                None => b.walk_mut(k),
            },
        }
    }

    /// Depth (root = 1) of the node at pre-order position `index`.
    pub fn node_depth(&self, index: usize) -> Option<usize> {
        fn go(e: &AlphaExpr, k: &mut usize, depth: usize) -> Option<usize> {
            if *k == 0 {
                return Some(depth);
            }
            *k -= 1;
            match e {
                AlphaExpr::Leaf(_) => None,
                AlphaExpr::Unary(_, x) => go(x, k, depth + 1),
                AlphaExpr::Binary(_, a, b) => go(a, k, depth + 1).or_else(|| go(b, k, depth + 1)),
            }
        }
        let mut k = index;
        go(self, &mut k, 1)
    }
}

impl fmt::Display for AlphaExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaExpr::Leaf(Leaf::Price) => f.write_str("price"),
            AlphaExpr::Leaf(Leaf::Volume) => f.write_str("volume"),
            AlphaExpr::Leaf(Leaf::Returns) => f.write_str("returns"),
            AlphaExpr::Leaf(Leaf::Const(c)) => write!(f, "{c:?}"),
            AlphaExpr::Unary(op, x) => {
                write!(f, "({} {x}", op.name())?;
                for p in op.params() {
                    write!(f, " {p}")?;
                }
                f.write_str(")")
            }
            AlphaExpr::Binary(op, a, b) => write!(f, "({} {a} {b})", op.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn tokenize(s: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut atom = String::new();
    let flush = |atom: &mut String, out: &mut Vec<Token>| {
        if !atom.is_empty() {
            out.push(Token::Atom(std::mem::take(atom)));
        }
    };
    for ch in s.chars() {
        match ch {
            '(' => {
                flush(&mut atom, &mut out);
                out.push(Token::Open);
            }
            ')' => {
                flush(&mut atom, &mut out);
                out.push(Token::Close);
            }
            c if c.is_whitespace() => flush(&mut atom, &mut out),
            c => atom.push(c),
        }
    }
    flush(&mut atom, &mut out);
    out
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn next(&mut self) -> Result<Token> {
        let t = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::MalformedTree("unexpected end of input".into()))?;
        self.pos += 1;
        Ok(t)
    }

    fn param(&mut self, op: &str) -> Result<usize> {
        match self.next()? {
            Token::Atom(a) => a
                .parse()
                .map_err(|_| Error::MalformedTree(format!("{op}: bad parameter {a:?}"))),
            t => Err(Error::MalformedTree(format!("{op}: expected parameter, found {t:?}"))),
        }
    }

    fn expr(&mut self) -> Result<AlphaExpr> {
        match self.next()? {
            Token::Atom(a) => match a.as_str() {
                "price" => Ok(AlphaExpr::leaf(Leaf::Price)),
                "volume" => Ok(AlphaExpr::leaf(Leaf::Volume)),
                "returns" => Ok(AlphaExpr::leaf(Leaf::Returns)),
                _ => a
                    .parse::<f64>()
                    .ok()
                    .filter(|c| c.is_finite())
                    .map(|c| AlphaExpr::leaf(Leaf::Const(c)))
                    .ok_or_else(|| Error::MalformedTree(format!("unknown atom {a:?}"))),
            },
            Token::Close => Err(Error::MalformedTree("unexpected ')'".into())),
            Token::Open => {
                let op = match self.next()? {
                    Token::Atom(a) => a,
                    t => return Err(Error::MalformedTree(format!("expected operator, found {t:?}"))),
                };
                let node = match op.as_str() {
                    "add" | "sub" | "mul" | "div_safe" | "rank" => {
                        let bop = match op.as_str() {
                            "add" => BinaryOp::Add,
                            "sub" => BinaryOp::Sub,
                            "mul" => BinaryOp::Mul,
                            "div_safe" => BinaryOp::DivSafe,
                            _ => BinaryOp::Rank,
                        };
                        let a = self.expr()?;
                        let b = self.expr()?;
                        AlphaExpr::binary(bop, a, b)
                    }
                    "neg" => AlphaExpr::unary(UnaryOp::Neg, self.expr()?),
                    "abs" => AlphaExpr::unary(UnaryOp::Abs, self.expr()?),
                    "rolling_mean" | "rolling_std" | "delay" | "rsi" => {
                        let x = self.expr()?;
                        let p = self.param(&op)?;
                        let uop = match op.as_str() {
                            "rolling_mean" => UnaryOp::RollingMean(p),
                            "rolling_std" => UnaryOp::RollingStd(p),
                            "delay" => UnaryOp::Delay(p),
                            _ => UnaryOp::Rsi(p),
                        };
                        AlphaExpr::unary(uop, x)
                    }
                    "macd" => {
                        let x = self.expr()?;
                        let fast = self.param(&op)?;
                        let slow = self.param(&op)?;
                        let signal = self.param(&op)?;
                        AlphaExpr::unary(UnaryOp::Macd { fast, slow, signal }, x)
                    }
                    other => return Err(Error::MalformedTree(format!("unknown operator {other:?}"))),
                };
                match self.next()? {
                    Token::Close => Ok(node),
                    t => Err(Error::MalformedTree(format!("{op}: expected ')', found {t:?}"))),
                }
            }
        }
    }
}

impl FromStr for AlphaExpr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = Parser {
            tokens: tokenize(s),
            pos: 0,
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::MalformedTree("trailing input".into()));
        }
        e.check_params()?;
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_form() {
        let s = "(sub (rolling_mean price 5) (rolling_mean price 20))";
        let e: AlphaExpr = s.parse().unwrap();
        assert_eq!(e.to_string(), s);
        assert_eq!(e.depth(), 3);
        assert_eq!(e.warmup(), 19);
    }

    #[test]
    fn constants_round_trip_exactly() {
        let e = AlphaExpr::binary(
            BinaryOp::Mul,
            AlphaExpr::leaf(Leaf::Const(0.1 + 0.2)),
            AlphaExpr::leaf(Leaf::Const(-3.0)),
        );
        let back: AlphaExpr = e.to_string().parse().unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "(add price)",
            "(foo price)",
            "(delay price 0)",
            "(macd price 26 12 9)",
            "price price",
            "(neg price",
            "nan",
        ] {
            assert!(bad.parse::<AlphaExpr>().is_err(), "{bad}");
        }
    }

    #[test]
    fn preorder_addressing() {
        let e: AlphaExpr = "(add (neg price) volume)".parse().unwrap();
        assert_eq!(e.size(), 4);
        assert_eq!(e.node(1).unwrap().to_string(), "(neg price)");
        assert_eq!(e.node(2).unwrap().to_string(), "price");
        assert_eq!(e.node(3).unwrap().to_string(), "volume");
        assert!(e.node(4).is_none());
        assert_eq!(e.node_depth(2), Some(3));
        let mut m = e.clone();
        *m.node_mut(3).unwrap() = AlphaExpr::leaf(Leaf::Returns);
        assert_eq!(m.to_string(), "(add (neg price) returns)");
    }

    #[test]
    fn depth_limit() {
        let e: AlphaExpr = "(neg (neg (neg price)))".parse().unwrap();
        assert!(e.validate(4).is_ok());
        assert!(e.validate(3).is_err());
    }
}
