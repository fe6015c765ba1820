//! Approximate, incremental aggregation over sliding windows of a
//! stratified stream.
//!
//! Each window is sampled with a stratified reservoir, the sample is biased
//! towards items whose results are already memoized, the query runs
//! incrementally over the biased sample, and the result comes back with an
//! error bound at the requested confidence.

pub mod bench;
pub mod biasing;
pub mod cli;
pub mod engine;
pub mod estimator;
pub mod incremental;
pub mod sampling;
pub mod scalar;
pub mod stream;

pub use biasing::{bias, BiasError, BiasedSample};
pub use engine::{
    cost_function, BudgetMode, Engine, EngineConfig, EngineError, QueryBudget, Runner, WindowResult,
};
pub use estimator::{t_score, EstimateError, StratumStats, WindowEstimate};
pub use incremental::{run_incremental, Aggregate, MemoStore, QueryDef};
pub use sampling::{stratified_sample, StratifiedReservoir, StratifiedSample};
pub use scalar::Scalar;
pub use stream::{GroupKey, ItemId, Stratum, StreamItem, WindowSpec, WindowState};

pub type Item64 = StreamItem<f64>;
pub type Item32 = StreamItem<f32>;
pub type Engine64 = Engine<f64>;
pub type Engine32 = Engine<f32>;
pub type WindowResult64 = WindowResult<f64>;
pub type Estimate64 = WindowEstimate<f64>;
pub type MemoStore64 = MemoStore<f64>;
