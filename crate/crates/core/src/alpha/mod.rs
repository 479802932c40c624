//! Formulaic alpha search over technical-operator trees.

pub mod eval;
pub mod expr;
pub mod gp;

pub use eval::{cross_rank, eval_alpha, SignalPanel};
pub use expr::{AlphaExpr, BinaryOp, Leaf, UnaryOp};
pub use gp::{evolve, evolve_with, score_alpha, AlphaScore, Evolution, FitnessWeights, GpConfig, Individual};
