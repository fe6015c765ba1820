//! Per-window driver: evict, ingest, size the sample, sample, bias towards
//! the memo, run the query incrementally, memoize, estimate.

mod budget;
mod runner;

pub use budget::{cost_function, BudgetMode, Calibration, QueryBudget};
pub use runner::{RunError, Runner};

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::biasing::{bias, BiasError, BiasedSample};
use crate::estimator::{
    estimate_count, estimate_mean, estimate_subgroup_mean, estimate_sum, EstimateError,
    StratumStats, WindowEstimate,
};
use crate::incremental::{
    evict, run_incremental, Aggregate, IncrementalOutput, MemoStore, Moments, QueryDef, ReuseStats,
};
use crate::sampling::{stratified_sample, StratifiedSample, StratumMetrics};
use crate::scalar::Scalar;
use crate::stream::{GroupKey, Stratum, StreamError, StreamItem, WindowSpec, WindowState};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("window {window}: {source}")]
    Stream { window: u64, source: StreamError },
    #[error("window {window}: {source}")]
    Bias { window: u64, source: BiasError },
    #[error("window {window}: {source}")]
    Estimate { window: u64, source: EstimateError },
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub window: WindowSpec,
    pub query: QueryDef,
    pub budget: QueryBudget,
    pub seed: u64,
    /// Items between reallocations; `None` uses the sample size.
    pub realloc_every: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GroupEstimate<S> {
    pub key: GroupKey,
    pub estimate: WindowEstimate<S>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct StratumReuse {
    pub window_items: usize,
    pub sampled: usize,
    pub reused: usize,
    /// Memoized items of this stratum carried in from the previous window.
    pub memo_carried: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct WindowReuse {
    /// Size of the memo before this window's eviction, i.e. the previous
    /// window's biased sample.
    pub memo_carried: usize,
    /// Memo entries still inside the window after eviction.
    pub memo_live: usize,
    pub reused: usize,
    /// `reused / sample size`, zero for an empty sample.
    pub overall_fraction: f64,
    pub per_stratum: IndexMap<Stratum, StratumReuse>,
    pub incremental: ReuseStats,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PhaseTimings {
    pub evict: Duration,
    pub ingest: Duration,
    pub sample: Duration,
    pub bias: Duration,
    pub incremental: Duration,
    pub estimate: Duration,
}

#[derive(Clone, Debug, Serialize)]
pub struct WindowResult<S> {
    pub window_index: u64,
    pub start: u64,
    pub end: u64,
    pub window_items: usize,
    /// Sample size granted by the budget.
    pub budget_sample_size: usize,
    /// Items actually processed (the biased sample).
    pub sample_size: usize,
    pub estimates: Vec<GroupEstimate<S>>,
    pub reuse: WindowReuse,
    pub sampling: IndexMap<Stratum, StratumMetrics>,
    pub late_items: u64,
    #[serde(skip)]
    pub timings: PhaseTimings,
}

pub struct Engine<S> {
    config: EngineConfig,
    state: WindowState<S>,
    memo: MemoStore<S>,
    next_start: u64,
    window_index: u64,
    calibration: Option<Calibration>,
    windows_since_calibration: u64,
}

const RECALIBRATE_EVERY: u64 = 100;

impl<S: Scalar> Engine<S> {
    pub fn new(config: EngineConfig) -> Self {
        let calibration = match config.budget.mode {
            BudgetMode::MaxLatencyMs(_) => Some(Calibration::measure()),
            _ => None,
        };
        Engine {
            state: WindowState::from_spec(&config.window),
            next_start: config.window.start,
            memo: MemoStore::new(),
            window_index: 0,
            calibration,
            windows_since_calibration: 0,
            config,
        }
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn state(&self) -> &WindowState<S> {
        &self.state
    }

    pub fn memo(&self) -> &MemoStore<S> {
        &self.memo
    }

    pub fn window_index(&self) -> u64 {
        self.window_index
    }

    /// Start of the window the next call to `process_window` will cover.
    pub fn window_start(&self) -> u64 {
        self.next_start
    }

    pub fn window_end(&self) -> u64 {
        self.next_start.saturating_add(self.state.length())
    }

    /// Moves the first window. Only meaningful before any window ran.
    pub fn set_start(&mut self, start: u64) {
        if self.window_index == 0 && self.state.is_empty() {
            self.next_start = start;
            self.config.window.start = start;
            self.state = WindowState::new(start, self.state.length());
        }
    }

    /// Takes effect from the next window.
    pub fn set_budget(&mut self, budget: QueryBudget) {
        if matches!(budget.mode, BudgetMode::MaxLatencyMs(_)) && self.calibration.is_none() {
            self.calibration = Some(Calibration::measure());
        }
        self.config.budget = budget;
    }

    pub fn set_calibration(&mut self, calibration: Calibration) {
        self.calibration = Some(calibration);
    }

    /// Changes the window length from the next window on.
    pub fn set_window_length(&mut self, length: u64) {
        self.state.set_length(length.max(1));
        self.config.window.length = length.max(1);
    }

    /// Whether any held item lies at or after `from`.
    pub fn holds_items_from(&self, from: u64) -> bool {
        self.state.carryover_len() > 0 || self.state.items().any(|i| i.timestamp >= from)
    }

    /// Runs one window. `batch` carries the items that arrived since the
    /// previous call; items beyond this window's end are held for later.
    pub fn process_window(&mut self, batch: Vec<StreamItem<S>>) -> Result<WindowResult<S>, EngineError> {
        let window = self.window_index;
        let mut timings = PhaseTimings::default();

        let t = Instant::now();
        let memo_carried = self.memo.len();
        let carried_per_stratum = self.memo_counts();
        let evicted = self.state.advance_to(self.next_start);
        evict(&mut self.memo, self.next_start, evicted.iter().map(|i| i.id));
        let memo_live = self.memo.len();
        timings.evict = t.elapsed();

        let t = Instant::now();
        self.state
            .ingest(batch)
            .map_err(|source| EngineError::Stream { window, source })?;
        timings.ingest = t.elapsed();

        let t = Instant::now();
        self.maybe_recalibrate();
        let k = self.state.total();
        let budget_sample_size = cost_function(&self.config.budget, k, self.calibration.as_ref());
        let sample = stratified_sample(
            self.state.items(),
            budget_sample_size,
            self.config.realloc_every,
            window_seed(self.config.seed, window),
        );
        timings.sample = t.elapsed();

        let t = Instant::now();
        let memo_items = self.memo.items_by_stratum();
        let biased = bias(&sample.strata, &memo_items).map_err(|source| EngineError::Bias { window, source })?;
        timings.bias = t.elapsed();

        debug_assert!(self.memo.oldest_timestamp().is_none_or(|ts| ts >= self.next_start));
        let t = Instant::now();
        let output = run_incremental(&self.config.query, &biased, &mut self.memo);
        timings.incremental = t.elapsed();

        let t = Instant::now();
        let estimates = self
            .estimate(&sample, &biased, &output)
            .map_err(|source| EngineError::Estimate { window, source })?;
        timings.estimate = t.elapsed();

        let sample_size = biased.len();
        let reused = biased.total_reused();
        let per_stratum = sample
            .metrics
            .iter()
            .map(|(s, m)| {
                let r = StratumReuse {
                    window_items: m.seen as usize,
                    sampled: biased.strata.get(s).map_or(0, Vec::len),
                    reused: biased.reused.get(s).copied().unwrap_or(0),
                    memo_carried: carried_per_stratum.get(s).copied().unwrap_or(0),
                };
                (s.clone(), r)
            })
            .collect();

        let result = WindowResult {
            window_index: window,
            start: self.next_start,
            end: self.window_end(),
            window_items: k,
            budget_sample_size,
            sample_size,
            estimates,
            reuse: WindowReuse {
                memo_carried,
                memo_live,
                reused,
                overall_fraction: if sample_size == 0 {
                    0.0
                } else {
                    reused as f64 / sample_size as f64
                },
                per_stratum,
                incremental: output.stats,
            },
            sampling: sample.metrics,
            late_items: self.state.late_items(),
            timings,
        };

        self.window_index += 1;
        self.next_start = self.next_start.saturating_add(self.config.window.slide);
        Ok(result)
    }

    fn memo_counts(&self) -> BTreeMap<Stratum, usize> {
        let mut counts = BTreeMap::new();
        for (s, items) in self.memo.items_by_stratum() {
            counts.insert(s, items.len());
        }
        counts
    }

    fn maybe_recalibrate(&mut self) {
        let Some(cal) = self.calibration.as_mut() else {
            return;
        };
        if !matches!(self.config.budget.mode, BudgetMode::MaxLatencyMs(_)) {
            return;
        }
        self.windows_since_calibration += 1;
        if self.windows_since_calibration >= RECALIBRATE_EVERY {
            cal.blend(Calibration::measure());
            self.windows_since_calibration = 0;
        }
    }

    fn estimate(
        &self,
        sample: &StratifiedSample<S>,
        biased: &BiasedSample<S>,
        output: &IncrementalOutput<S>,
    ) -> Result<Vec<GroupEstimate<S>>, EstimateError> {
        if sample.metrics.is_empty() {
            return Ok(Vec::new());
        }
        let confidence = self.config.budget.confidence;
        let aggregate = self.config.query.aggregate;
        let empty = Moments::empty();
        let strata: Vec<(&Stratum, u64, u64)> = sample
            .metrics
            .iter()
            .map(|(s, m)| (s, m.seen, biased.strata.get(s).map_or(0, Vec::len) as u64))
            .collect();

        let group_stats = |g: Option<&crate::incremental::GroupOutput<S>>| {
            let moments = |s: &Stratum| g.and_then(|g| g.per_stratum.get(s)).unwrap_or(&empty);
            let sums: Vec<StratumStats<S>> = strata
                .iter()
                .map(|&(s, pop, b)| StratumStats::for_subgroup(s.clone(), pop, b, moments(s)))
                .collect();
            let counts: Vec<StratumStats<S>> = strata
                .iter()
                .map(|&(s, pop, b)| StratumStats::indicator(s.clone(), pop, b, moments(s).count))
                .collect();
            (sums, counts)
        };

        if !self.config.query.group_by {
            let (sums, counts) = group_stats(output.groups.get(&None));
            let estimate = match aggregate {
                Aggregate::Sum => estimate_sum(&sums, confidence)?,
                Aggregate::Count => estimate_count(&counts, confidence)?,
                Aggregate::Mean => estimate_mean(&sums, confidence)?,
            };
            return Ok(vec![GroupEstimate { key: None, estimate }]);
        }

        output
            .groups
            .iter()
            .map(|(key, g)| {
                let (sums, counts) = group_stats(Some(g));
                let estimate = match aggregate {
                    Aggregate::Sum => estimate_sum(&sums, confidence)?,
                    Aggregate::Count => estimate_count(&counts, confidence)?,
                    Aggregate::Mean => estimate_subgroup_mean(&sums, &counts, confidence)?,
                };
                Ok(GroupEstimate {
                    key: key.clone(),
                    estimate,
                })
            })
            .collect()
    }
}

/// Per-window RNG seed (splitmix64 over seed and window index).
pub fn window_seed(seed: u64, window: u64) -> u64 {
    let mut z = seed ^ window.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
