//! Stratified estimates of window aggregates with t-based error bounds.
//!
//! For strata `i = 1..n` with population `B_i`, sample size `b_i` and
//! sampled values `v_ij`:
//!
//! ```text
//! value    = Σ_i B_i / b_i · Σ_j v_ij
//! variance = Σ_i B_i (B_i − b_i) s_i² / b_i
//! dof      = Σ_i b_i − n
//! bound    = t(dof, 1 − α/2) · sqrt(variance),   α = 1 − confidence
//! ```
//!
//! `s_i²` is the unbiased within-stratum sample variance.

mod tdist;

pub use tdist::{inc_beta, ln_gamma, t_score, t_upper_tail, DomainError};

use serde::Serialize;
use thiserror::Error;

use crate::incremental::Moments;
use crate::scalar::Scalar;
use crate::stream::Stratum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimateError {
    #[error("stratum {0} has {1} items in the window but none in the sample")]
    MissingStratum(Stratum, u64),
    #[error("stratum {stratum}: sample size {sampled} exceeds population {population}")]
    Oversampled {
        stratum: Stratum,
        sampled: u64,
        population: u64,
    },
    #[error("confidence must lie in (0, 1), got {0}")]
    Confidence(f64),
    #[error("mean of an empty population")]
    EmptyPopulation,
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Sample statistics of one stratum.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StratumStats<S> {
    pub stratum: Stratum,
    /// Items of the stratum in the window (`B_i`).
    pub population: u64,
    /// Sampled items (`b_i`).
    pub sampled: u64,
    pub sum: S,
    /// Sum of squared deviations from the sample mean.
    pub m2: S,
}

impl<S: Scalar> StratumStats<S> {
    pub fn from_values(stratum: impl Into<Stratum>, population: u64, values: &[S]) -> Self {
        let m = values
            .iter()
            .fold(Moments::empty(), |acc, &v| acc.merge(&Moments::of(v)));
        Self::from_moments(stratum, population, &m)
    }

    pub fn from_moments(stratum: impl Into<Stratum>, population: u64, m: &Moments<S>) -> Self {
        StratumStats {
            stratum: stratum.into(),
            population,
            sampled: m.count,
            sum: m.sum,
            m2: m.m2,
        }
    }

    /// Statistics of the values `v · 1{item in subgroup}` when the
    /// subgroup's own sampled moments are `m` and the stratum sample holds
    /// `sampled` items overall.
    pub fn for_subgroup(
        stratum: impl Into<Stratum>,
        population: u64,
        sampled: u64,
        m: &Moments<S>,
    ) -> Self {
        let full = m.with_zeros(sampled.saturating_sub(m.count));
        Self::from_moments(stratum, population, &full)
    }

    /// Statistics of `1{item in subgroup}` given `hits` subgroup members
    /// among `sampled` items.
    pub fn indicator(stratum: impl Into<Stratum>, population: u64, sampled: u64, hits: u64) -> Self {
        let ones = Moments {
            count: hits,
            sum: S::from_u64_lossy(hits),
            m2: S::zero(),
        };
        Self::for_subgroup(stratum, population, sampled, &ones)
    }

    /// `s_i²`; zero when fewer than two items were sampled.
    pub fn sample_variance(&self) -> S {
        if self.sampled < 2 {
            S::zero()
        } else {
            (self.m2 / S::from_u64_lossy(self.sampled - 1)).max(S::zero())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindowEstimate<S> {
    pub value: S,
    /// `None` when the degrees of freedom leave the bound undefined.
    pub error_bound: Option<S>,
    pub confidence: f64,
    pub dof: i64,
    /// Strata that contributed a single sampled item (and so no variance).
    pub degenerate_strata: usize,
    pub per_stratum: Vec<StratumStats<S>>,
}

impl<S: Scalar> WindowEstimate<S> {
    pub fn interval(&self) -> Option<(S, S)> {
        self.error_bound.map(|e| (self.value - e, self.value + e))
    }

    fn scaled(mut self, divisor: S) -> Self {
        self.value = self.value / divisor;
        self.error_bound = self.error_bound.map(|e| e / divisor);
        self
    }
}

/// Estimated window sum with its error bound.
pub fn estimate_sum<S: Scalar>(
    stats: &[StratumStats<S>],
    confidence: f64,
) -> Result<WindowEstimate<S>, EstimateError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(EstimateError::Confidence(confidence));
    }
    let mut value = S::zero();
    let mut variance = S::zero();
    let mut sampled_total: i64 = 0;
    let mut strata: i64 = 0;
    let mut degenerate = 0;
    let mut fully_sampled = true;
    for st in stats.iter().filter(|s| s.population > 0) {
        if st.sampled == 0 {
            return Err(EstimateError::MissingStratum(st.stratum.clone(), st.population));
        }
        if st.sampled > st.population {
            return Err(EstimateError::Oversampled {
                stratum: st.stratum.clone(),
                sampled: st.sampled,
                population: st.population,
            });
        }
        let big_b = S::from_u64_lossy(st.population);
        let b = S::from_u64_lossy(st.sampled);
        value = value + big_b * st.sum / b;
        let unsampled = S::from_u64_lossy(st.population - st.sampled);
        variance = variance + big_b * unsampled * st.sample_variance() / b;
        sampled_total += st.sampled as i64;
        strata += 1;
        if st.sampled < st.population {
            fully_sampled = false;
            if st.sampled == 1 {
                degenerate += 1;
            }
        }
    }
    let dof = sampled_total - strata;
    let error_bound = if fully_sampled {
        Some(S::zero())
    } else if dof <= 0 {
        None
    } else {
        let alpha = 1.0 - confidence;
        let t = t_score(dof as f64, 1.0 - alpha / 2.0)?;
        Some(S::from_f64_lossy(t) * variance.sqrt())
    };
    Ok(WindowEstimate {
        value,
        error_bound,
        confidence,
        dof,
        degenerate_strata: degenerate,
        per_stratum: stats.to_vec(),
    })
}

/// Estimated count. `stats` hold indicator values (see
/// [`StratumStats::indicator`]); with every indicator equal to one the
/// result is the exact population size with a zero bound.
pub fn estimate_count<S: Scalar>(
    stats: &[StratumStats<S>],
    confidence: f64,
) -> Result<WindowEstimate<S>, EstimateError> {
    estimate_sum(stats, confidence)
}

/// Estimated population mean: the sum estimate divided by `Σ B_i`.
pub fn estimate_mean<S: Scalar>(
    stats: &[StratumStats<S>],
    confidence: f64,
) -> Result<WindowEstimate<S>, EstimateError> {
    let population: u64 = stats.iter().map(|s| s.population).sum();
    if population == 0 {
        return Err(EstimateError::EmptyPopulation);
    }
    Ok(estimate_sum(stats, confidence)?.scaled(S::from_u64_lossy(population)))
}

/// Mean over a subgroup whose size is itself estimated: the subgroup sum
/// estimate divided by the subgroup count estimate. The bound is the sum
/// bound scaled the same way.
pub fn estimate_subgroup_mean<S: Scalar>(
    sum_stats: &[StratumStats<S>],
    count_stats: &[StratumStats<S>],
    confidence: f64,
) -> Result<WindowEstimate<S>, EstimateError> {
    let count = estimate_count(count_stats, confidence)?;
    if count.value <= S::zero() {
        return Err(EstimateError::EmptyPopulation);
    }
    Ok(estimate_sum(sum_stats, confidence)?.scaled(count.value))
}
