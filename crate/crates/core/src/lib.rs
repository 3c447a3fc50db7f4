//! Simulation of stock-and-flow models with per-step loop dominance
//! analysis, causal-loop-diagram simplification and layout, and exporters.

pub mod analysis;
pub mod export;
pub mod layout;
pub mod loops;
pub mod model;
pub mod sim;
pub mod simplify;

pub use analysis::{analyze, Analysis, AnalysisError};
