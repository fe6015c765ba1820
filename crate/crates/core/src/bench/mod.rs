//! Synthetic workloads and the four memoization experiments: sample size,
//! slide interval, window-size change and fluctuating arrival rates.

mod generate;
mod scenario;

pub use generate::Generator;
pub use scenario::{
    ArrivalRateGrid, SampleSizeGrid, ScenarioError, ScenarioSpec, SlideGrid, Substream, WindowDeltaGrid,
};

use std::fmt;
use std::io;
use std::str::FromStr;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{Engine, EngineConfig, EngineError, QueryBudget, WindowResult};
use crate::incremental::{Aggregate, QueryDef};
use crate::stream::WindowSpec;

pub const ALL_ROW: &str = "all";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("scenario has no [{0}] section")]
    MissingGrid(Experiment),
    #[error("unknown experiment '{0}' (expected sample_size, slide_interval, window_size or arrival_rate)")]
    UnknownExperiment(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Experiment {
    SampleSize,
    SlideInterval,
    WindowSize,
    ArrivalRate,
}

impl Experiment {
    pub const ALL: [Experiment; 4] = [
        Experiment::SampleSize,
        Experiment::SlideInterval,
        Experiment::WindowSize,
        Experiment::ArrivalRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SampleSize => "sample_size",
            Experiment::SlideInterval => "slide_interval",
            Experiment::WindowSize => "window_size",
            Experiment::ArrivalRate => "arrival_rate",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s || e.name().replace('_', "-") == s)
            .ok_or_else(|| BenchError::UnknownExperiment(s.to_string()))
    }
}

/// One CSV row: averages for one substream (or `all`) at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub experiment: String,
    pub grid_value: f64,
    pub substream: String,
    pub avg_memoized_items: f64,
    pub memo_fraction: f64,
    pub sample_size: f64,
    pub window_items: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Totals {
    memoized: u64,
    reused: u64,
    sampled: u64,
    window_items: u64,
}

impl Totals {
    fn add(&mut self, memoized: usize, reused: usize, sampled: usize, window_items: usize) {
        self.memoized += memoized as u64;
        self.reused += reused as u64;
        self.sampled += sampled as u64;
        self.window_items += window_items as u64;
    }
}

/// Per-substream accumulation over measured windows.
struct Tally {
    per: IndexMap<String, Totals>,
    all: Totals,
    windows: u64,
}

impl Tally {
    fn new(labels: impl IntoIterator<Item = String>) -> Self {
        Tally {
            per: labels.into_iter().map(|l| (l, Totals::default())).collect(),
            all: Totals::default(),
            windows: 0,
        }
    }

    /// `carried` counts the memo entering the window instead of reused
    /// items as "memoized".
    fn record(&mut self, r: &WindowResult<f64>, carried: bool) {
        self.windows += 1;
        for (s, x) in &r.reuse.per_stratum {
            let memoized = if carried { x.memo_carried } else { x.reused };
            let t = self.per.entry(s.as_str().to_string()).or_default();
            t.add(memoized, x.reused, x.sampled, x.window_items);
        }
        let memoized = if carried { r.reuse.memo_carried } else { r.reuse.reused };
        self.all.add(memoized, r.reuse.reused, r.sample_size, r.window_items);
    }

    fn rows(&self, experiment: Experiment, grid_value: f64) -> Vec<ExperimentRow> {
        let n = self.windows.max(1) as f64;
        let row = |name: &str, t: &Totals| ExperimentRow {
            experiment: experiment.name().to_string(),
            grid_value,
            substream: name.to_string(),
            avg_memoized_items: t.memoized as f64 / n,
            memo_fraction: if t.sampled == 0 {
                0.0
            } else {
                t.reused as f64 / t.sampled as f64
            },
            sample_size: t.sampled as f64 / n,
            window_items: t.window_items as f64 / n,
        };
        self.per
            .iter()
            .map(|(k, t)| row(k, t))
            .chain(std::iter::once(row(ALL_ROW, &self.all)))
            .collect()
    }
}

/// Engine and generator sharing one timeline.
struct Harness {
    engine: Engine<f64>,
    gen: Generator,
}

impl Harness {
    fn new(spec: &ScenarioSpec, subs: &[Substream], length: u64, slide: u64, fraction: f64, phase_units: u64) -> Self {
        let config = EngineConfig {
            window: WindowSpec::new(0, length, slide.min(length)).expect("positive window"),
            query: QueryDef::new(Aggregate::Sum, false),
            budget: QueryBudget::fraction(fraction),
            seed: spec.seed.wrapping_add(1),
            realloc_every: None,
        };
        Harness {
            engine: Engine::new(config),
            gen: Generator::new(subs, spec.seed, spec.time_resolution, phase_units),
        }
    }

    fn step(&mut self) -> Result<WindowResult<f64>, EngineError> {
        let batch = self.gen.until(self.engine.window_end());
        self.engine.process_window(batch)
    }
}

fn total_rate(subs: &[Substream]) -> f64 {
    subs.iter().map(|s| s.rate_in_phase(0)).sum()
}

/// Ticks spanned by `items` items at the substreams' combined rate.
fn ticks_for(items: f64, subs: &[Substream], resolution: u64) -> u64 {
    ((items / total_rate(subs)) * resolution as f64).round().max(1.0) as u64
}

fn percent_of(length: u64, pct: f64) -> u64 {
    ((length as f64 * pct / 100.0).round() as u64).max(1)
}

fn labels(subs: &[Substream]) -> Vec<String> {
    subs.iter().map(|s| s.label.clone()).collect()
}

fn steady_point(
    spec: &ScenarioSpec,
    experiment: Experiment,
    grid_value: f64,
    slide_pct: f64,
    sample_pct: f64,
) -> Result<Vec<ExperimentRow>, BenchError> {
    let length = ticks_for(spec.window_items as f64, &spec.substreams, spec.time_resolution);
    let slide = percent_of(length, slide_pct);
    let mut h = Harness::new(spec, &spec.substreams, length, slide, sample_pct / 100.0, u64::MAX);
    let mut tally = Tally::new(labels(&spec.substreams));
    // the first window is a cold start and never counts
    for _ in 0..=spec.warmup {
        h.step()?;
    }
    for _ in 0..spec.windows {
        let r = h.step()?;
        tally.record(&r, false);
    }
    Ok(tally.rows(experiment, grid_value))
}

fn delta_point(spec: &ScenarioSpec, grid: &WindowDeltaGrid, delta: i64) -> Result<Vec<ExperimentRow>, BenchError> {
    let subs = &spec.substreams;
    let length = ticks_for(spec.window_items as f64, subs, spec.time_resolution);
    let changed = ticks_for(spec.window_items as f64 + delta as f64, subs, spec.time_resolution);
    let slide = percent_of(length, grid.slide_percent);
    let mut h = Harness::new(spec, subs, length, slide, grid.sample_percent / 100.0, u64::MAX);
    let mut tally = Tally::new(labels(subs));
    for _ in 0..=spec.warmup {
        h.step()?;
    }
    // windows alternate L, L+Δ; only the L → L+Δ steps are measured
    for _ in 0..grid.transitions {
        h.step()?;
        h.engine.set_window_length(changed);
        let r = h.step()?;
        tally.record(&r, true);
        h.engine.set_window_length(length);
    }
    Ok(tally.rows(Experiment::WindowSize, delta as f64))
}

fn arrival_rows(spec: &ScenarioSpec, grid: &ArrivalRateGrid) -> Result<Vec<ExperimentRow>, BenchError> {
    let subs = &grid.substreams;
    let res = spec.time_resolution;
    let length = ticks_for(spec.window_items as f64, subs, res);
    let slide = percent_of(length, grid.slide_percent);
    let phase_units = grid
        .phase_units
        .unwrap_or_else(|| (2 * length).div_ceil(res));
    let phases = subs.iter().map(|s| s.schedule.len()).max().unwrap_or(1).max(1);
    let phase_ticks = phase_units * res;
    let mut h = Harness::new(spec, subs, length, slide, grid.sample_percent / 100.0, phase_units);
    let mut tallies: Vec<Tally> = (0..phases).map(|_| Tally::new(labels(subs))).collect();
    for _ in 0..=spec.warmup {
        h.step()?;
    }
    while h.engine.window_end() <= phase_ticks * phases as u64 {
        let r = h.step()?;
        let phase = ((r.end - 1) / phase_ticks) as usize;
        tallies[phase.min(phases - 1)].record(&r, false);
    }
    Ok(tallies
        .iter()
        .enumerate()
        .flat_map(|(p, t)| t.rows(Experiment::ArrivalRate, p as f64))
        .collect())
}

/// Runs one experiment over its grid. Grid points run in parallel; rows
/// come back in grid order.
pub fn run_experiment(which: Experiment, spec: &ScenarioSpec) -> Result<Vec<ExperimentRow>, BenchError> {
    let points: Vec<Vec<ExperimentRow>> = match which {
        Experiment::SampleSize => {
            let g = spec.sample_size.as_ref().ok_or(BenchError::MissingGrid(which))?;
            g.sample_percents
                .par_iter()
                .map(|&p| steady_point(spec, which, p, g.slide_percent, p))
                .collect::<Result<_, _>>()?
        }
        Experiment::SlideInterval => {
            let g = spec.slide_interval.as_ref().ok_or(BenchError::MissingGrid(which))?;
            g.slide_percents
                .par_iter()
                .map(|&p| steady_point(spec, which, p, p, g.sample_percent))
                .collect::<Result<_, _>>()?
        }
        Experiment::WindowSize => {
            let g = spec.window_size.as_ref().ok_or(BenchError::MissingGrid(which))?;
            g.window_deltas
                .par_iter()
                .map(|&d| delta_point(spec, g, d))
                .collect::<Result<_, _>>()?
        }
        Experiment::ArrivalRate => {
            let g = spec.arrival_rate.as_ref().ok_or(BenchError::MissingGrid(which))?;
            vec![arrival_rows(spec, g)?]
        }
    };
    Ok(points.into_iter().flatten().collect())
}

pub fn write_csv<W: io::Write>(rows: &[ExperimentRow], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Plain-text table of the `all` rows.
pub fn summary(rows: &[ExperimentRow]) -> String {
    let mut s = format!(
        "{:<15} {:>10} {:>14} {:>10} {:>12}\n",
        "experiment", "grid", "avg_memoized", "fraction", "sample_size"
    );
    for r in rows.iter().filter(|r| r.substream == ALL_ROW) {
        s.push_str(&format!(
            "{:<15} {:>10} {:>14.1} {:>10.4} {:>12.1}\n",
            r.experiment, r.grid_value, r.avg_memoized_items, r.memo_fraction, r.sample_size
        ));
    }
    s
}
