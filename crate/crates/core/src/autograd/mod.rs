//! Minimal reverse-mode automatic differentiation over `f64` tensors,
//! covering the operations the forecasting networks need.

pub mod check;
mod conv;
mod graph;
mod params;

pub use check::{gradient_check, GradCheckReport};
pub use graph::{Gradients, Graph, SoftmaxOver, Var};
pub use params::{ParamGrads, ParamId, ParamStore};
