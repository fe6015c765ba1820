use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::sampling::StratifiedReservoir;
use crate::stream::StreamItem;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", content = "amount", rename_all = "snake_case")]
pub enum BudgetMode {
    /// Sample `ceil(fraction · k)` of the `k` window items.
    SampleFraction(f64),
    MaxItems(u64),
    /// Sample as many items as fit in this many milliseconds at the
    /// calibrated per-item cost.
    MaxLatencyMs(f64),
}

impl FromStr for BudgetMode {
    type Err = String;

    /// `fraction:0.1`, `items:300` or `latency:25` (milliseconds).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (mode, amount) = s
            .split_once(':')
            .ok_or_else(|| format!("budget '{s}' is not of the form <mode>:<amount>"))?;
        let bad = |_| format!("budget amount '{amount}' is not a number");
        let mode = match mode {
            "fraction" | "sample_fraction" => BudgetMode::SampleFraction(amount.parse().map_err(bad)?),
            "items" | "max_items" => {
                BudgetMode::MaxItems(amount.parse().map_err(|_| format!("budget amount '{amount}' is not an integer"))?)
            }
            "latency" | "latency_ms" | "max_latency_ms" => BudgetMode::MaxLatencyMs(amount.parse().map_err(bad)?),
            other => return Err(format!("unknown budget mode '{other}'")),
        };
        mode.validate()?;
        Ok(mode)
    }
}

impl fmt::Display for BudgetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BudgetMode::SampleFraction(x) => write!(f, "fraction:{x}"),
            BudgetMode::MaxItems(n) => write!(f, "items:{n}"),
            BudgetMode::MaxLatencyMs(ms) => write!(f, "latency:{ms}"),
        }
    }
}

impl BudgetMode {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            BudgetMode::SampleFraction(x) if !(x > 0.0 && x <= 1.0) => {
                Err(format!("sample fraction must lie in (0, 1], got {x}"))
            }
            BudgetMode::MaxItems(0) => Err("max items must be at least 1".into()),
            BudgetMode::MaxLatencyMs(ms) if !(ms > 0.0 && ms.is_finite()) => {
                Err(format!("latency budget must be positive, got {ms}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QueryBudget {
    pub mode: BudgetMode,
    pub confidence: f64,
}

impl QueryBudget {
    pub fn new(mode: BudgetMode, confidence: f64) -> Result<Self, String> {
        mode.validate()?;
        if !(confidence > 0.0 && confidence < 1.0) {
            return Err(format!("confidence must lie in (0, 1), got {confidence}"));
        }
        Ok(QueryBudget { mode, confidence })
    }

    pub fn fraction(fraction: f64) -> Self {
        QueryBudget {
            mode: BudgetMode::SampleFraction(fraction),
            confidence: 0.95,
        }
    }
}

/// Measured processing cost per window item, used by latency budgets.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration {
    pub ms_per_item: f64,
}

impl Calibration {
    const SMOOTHING: f64 = 0.2;

    pub fn fixed(ms_per_item: f64) -> Self {
        Calibration { ms_per_item }
    }

    /// Times a sampling pass over synthetic items.
    pub fn measure() -> Self {
        const ITEMS: u64 = 20_000;
        let items: Vec<StreamItem<f64>> = (0..ITEMS)
            .map(|i| StreamItem::new(i, i, ["a", "b", "c"][(i % 3) as usize], i as f64))
            .collect();
        let start = Instant::now();
        let mut res = StratifiedReservoir::new(2_000, None, 0);
        for item in &items {
            res.offer(item.clone());
        }
        let sample = res.into_sample();
        std::hint::black_box(sample.len());
        let ms = start.elapsed().as_secs_f64() * 1e3;
        Calibration {
            ms_per_item: (ms / ITEMS as f64).max(1e-9),
        }
    }

    /// Exponential smoothing towards a fresh measurement.
    pub fn blend(&mut self, fresh: Calibration) {
        self.ms_per_item =
            Self::SMOOTHING * fresh.ms_per_item + (1.0 - Self::SMOOTHING) * self.ms_per_item;
    }
}

/// Sample size allowed by `budget` for a window of `window_items` items,
/// clamped to `[0, window_items]`.
pub fn cost_function(budget: &QueryBudget, window_items: usize, calibration: Option<&Calibration>) -> usize {
    let k = window_items;
    let n = match budget.mode {
        BudgetMode::SampleFraction(f) => {
            let x = f * k as f64;
            // 0.07 * 100 must give 7, not 8
            if (x - x.round()).abs() <= 1e-9 * x.max(1.0) {
                x.round() as usize
            } else {
                x.ceil() as usize
            }
        }
        BudgetMode::MaxItems(m) => usize::try_from(m).unwrap_or(usize::MAX),
        BudgetMode::MaxLatencyMs(ms) => {
            let per_item = calibration.map(|c| c.ms_per_item).unwrap_or(f64::INFINITY);
            (ms / per_item).floor() as usize
        }
    };
    n.min(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_budget() {
        assert_eq!(cost_function(&QueryBudget::fraction(0.10), 10_000, None), 1_000);
        assert_eq!(cost_function(&QueryBudget::fraction(0.10), 10_001, None), 1_001);
        assert_eq!(cost_function(&QueryBudget::fraction(1.0), 7, None), 7);
        assert_eq!(cost_function(&QueryBudget::fraction(0.07), 100, None), 7);
    }

    #[test]
    fn item_budget_clamps() {
        let b = QueryBudget::new(BudgetMode::MaxItems(300), 0.95).unwrap();
        assert_eq!(cost_function(&b, 1_500, None), 300);
        assert_eq!(cost_function(&b, 100, None), 100);
    }

    #[test]
    fn empty_window_gives_zero() {
        assert_eq!(cost_function(&QueryBudget::fraction(0.5), 0, None), 0);
    }

    #[test]
    fn latency_budget_uses_calibration() {
        let b = QueryBudget::new(BudgetMode::MaxLatencyMs(10.0), 0.95).unwrap();
        let cal = Calibration::fixed(0.01);
        assert_eq!(cost_function(&b, 5_000, Some(&cal)), 1_000);
        assert_eq!(cost_function(&b, 500, Some(&cal)), 500);
        assert_eq!(cost_function(&b, 500, None), 0);
        let mut c = Calibration::fixed(1.0);
        c.blend(Calibration::fixed(2.0));
        assert!((c.ms_per_item - 1.2).abs() < 1e-12);
        assert!(Calibration::measure().ms_per_item > 0.0);
    }

    #[test]
    fn parses_budgets() {
        assert_eq!("fraction:0.1".parse(), Ok(BudgetMode::SampleFraction(0.1)));
        assert_eq!("items:300".parse(), Ok(BudgetMode::MaxItems(300)));
        assert_eq!("latency:5".parse(), Ok(BudgetMode::MaxLatencyMs(5.0)));
        assert!("fraction:0".parse::<BudgetMode>().is_err());
        assert!("fraction:1.5".parse::<BudgetMode>().is_err());
        assert!("items:0".parse::<BudgetMode>().is_err());
        assert!("speed:3".parse::<BudgetMode>().is_err());
        assert!("fraction".parse::<BudgetMode>().is_err());
        assert!(QueryBudget::new(BudgetMode::MaxItems(3), 1.0).is_err());
    }
}
