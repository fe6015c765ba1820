use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// One synthetic substream.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Substream {
    pub label: String,
    /// Mean arrivals per time unit.
    pub rate: f64,
    /// Piecewise-constant rates, one per phase; replaces `rate` while the
    /// schedule runs and holds the last value afterwards.
    #[serde(default)]
    pub schedule: Vec<f64>,
    pub value_mean: Option<f64>,
    #[serde(default = "default_sd")]
    pub value_sd: f64,
}

fn default_sd() -> f64 {
    1.0
}

impl Substream {
    pub fn rate_in_phase(&self, phase: usize) -> f64 {
        match self.schedule.last() {
            None => self.rate,
            Some(&last) => self.schedule.get(phase).copied().unwrap_or(last),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SampleSizeGrid {
    pub sample_percents: Vec<f64>,
    pub slide_percent: f64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SlideGrid {
    pub slide_percents: Vec<f64>,
    pub sample_percent: f64,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WindowDeltaGrid {
    /// Window-size changes in items between adjacent windows.
    pub window_deltas: Vec<i64>,
    pub slide_percent: f64,
    pub sample_percent: f64,
    /// Number of L → L+Δ transitions averaged per grid point.
    #[serde(default = "default_transitions")]
    pub transitions: usize,
}

fn default_transitions() -> usize {
    30
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ArrivalRateGrid {
    /// Substreams for this experiment; their schedules define the phases.
    pub substreams: Vec<Substream>,
    pub slide_percent: f64,
    pub sample_percent: f64,
    /// Phase length in time units; defaults to two window lengths.
    pub phase_units: Option<u64>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    /// Nominal window population in items.
    pub window_items: u64,
    /// Measured windows per grid point.
    #[serde(default = "default_windows")]
    pub windows: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    /// Timestamp ticks per time unit.
    #[serde(default = "default_resolution")]
    pub time_resolution: u64,
    pub substreams: Vec<Substream>,
    pub sample_size: Option<SampleSizeGrid>,
    pub slide_interval: Option<SlideGrid>,
    pub window_size: Option<WindowDeltaGrid>,
    pub arrival_rate: Option<ArrivalRateGrid>,
}

fn default_windows() -> usize {
    50
}

fn default_warmup() -> usize {
    5
}

fn default_resolution() -> u64 {
    1000
}

impl ScenarioSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.window_items == 0 {
            return bad("window_items must be positive".into());
        }
        if self.time_resolution == 0 {
            return bad("time_resolution must be positive".into());
        }
        if self.windows == 0 {
            return bad("windows must be positive".into());
        }
        check_substreams(&self.substreams)?;
        let pct = |name: &str, v: f64| {
            if v > 0.0 && v <= 100.0 {
                Ok(())
            } else {
                Err(ScenarioError::Invalid(format!("{name} must lie in (0, 100], got {v}")))
            }
        };
        if let Some(g) = &self.sample_size {
            if g.sample_percents.is_empty() {
                return bad("sample_size.sample_percents is empty".into());
            }
            g.sample_percents.iter().try_for_each(|&v| pct("sample percent", v))?;
            pct("slide percent", g.slide_percent)?;
        }
        if let Some(g) = &self.slide_interval {
            if g.slide_percents.is_empty() {
                return bad("slide_interval.slide_percents is empty".into());
            }
            g.slide_percents.iter().try_for_each(|&v| pct("slide percent", v))?;
            pct("sample percent", g.sample_percent)?;
        }
        if let Some(g) = &self.window_size {
            if g.window_deltas.is_empty() {
                return bad("window_size.window_deltas is empty".into());
            }
            if g.transitions == 0 {
                return bad("window_size.transitions must be positive".into());
            }
            if g.window_deltas.iter().any(|&d| d <= -(self.window_items as i64)) {
                return bad("window delta would make the window empty".into());
            }
            pct("slide percent", g.slide_percent)?;
            pct("sample percent", g.sample_percent)?;
        }
        if let Some(g) = &self.arrival_rate {
            check_substreams(&g.substreams)?;
            if g.substreams.iter().all(|s| s.schedule.is_empty()) {
                return bad("arrival_rate needs at least one substream schedule".into());
            }
            pct("slide percent", g.slide_percent)?;
            pct("sample percent", g.sample_percent)?;
        }
        Ok(())
    }
}

fn check_substreams(subs: &[Substream]) -> Result<(), ScenarioError> {
    if subs.is_empty() {
        return Err(ScenarioError::Invalid("no substreams".into()));
    }
    for s in subs {
        if s.label.is_empty() {
            return Err(ScenarioError::Invalid("substream label is empty".into()));
        }
        if s.rate.is_nan() || s.rate <= 0.0 || s.schedule.iter().any(|&r| r.is_nan() || r <= 0.0) {
            return Err(ScenarioError::Invalid(format!("substream {}: rates must be positive", s.label)));
        }
        if s.value_sd.is_nan() || s.value_sd < 0.0 {
            return Err(ScenarioError::Invalid(format!("substream {}: value_sd is negative", s.label)));
        }
    }
    Ok(())
}

impl std::str::FromStr for ScenarioSpec {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let spec: ScenarioSpec = toml::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}
