//! Memo-biased resampling: swap fresh sample items for memoized items of
//! the same stratum without changing any per-stratum sample size.

use std::cmp::Reverse;
use std::collections::HashSet;

use indexmap::IndexMap;
use thiserror::Error;

use crate::stream::{ItemId, Stratum, StreamItem};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BiasError {
    #[error("stratum {stratum}: fresh sample exhausted at {have} of {want} items (duplicate ids in sample?)")]
    SampleExhausted {
        stratum: Stratum,
        have: usize,
        want: usize,
    },
}

#[derive(Clone, Debug, Default)]
pub struct BiasedSample<S> {
    /// Per-stratum items, memo-sourced ones first, each group newest first.
    /// Keys follow the stratified sample.
    pub strata: IndexMap<Stratum, Vec<StreamItem<S>>>,
    /// Number of memo-sourced items per stratum.
    pub reused: IndexMap<Stratum, usize>,
}

impl<S> BiasedSample<S> {
    pub fn len(&self) -> usize {
        self.strata.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_reused(&self) -> usize {
        self.reused.values().sum()
    }

    pub fn sizes(&self) -> IndexMap<Stratum, usize> {
        self.strata
            .iter()
            .map(|(k, v)| (k.clone(), v.len()))
            .collect()
    }

    pub fn items(&self) -> impl Iterator<Item = &StreamItem<S>> + '_ {
        self.strata.values().flatten()
    }
}

/// Biases each stratum of `sample` towards `memo`.
///
/// With `x` memo items and `y` sampled items in a stratum: if `x >= y` the
/// result is the first `y` memo items; otherwise all memo items followed by
/// sample items, skipping ids already taken, until `y` items are held.
/// Both inputs are walked newest first, in descending `(timestamp, id)`
/// order, so the items kept are the ones that stay in the window longest.
/// Memo strata absent from the sample are ignored.
pub fn bias<S: Clone>(
    sample: &IndexMap<Stratum, Vec<StreamItem<S>>>,
    memo: &IndexMap<Stratum, Vec<StreamItem<S>>>,
) -> Result<BiasedSample<S>, BiasError> {
    let mut out = BiasedSample {
        strata: IndexMap::with_capacity(sample.len()),
        reused: IndexMap::with_capacity(sample.len()),
    };
    for (stratum, fresh) in sample {
        let want = fresh.len();
        let mut memo_items: Vec<&StreamItem<S>> = memo
            .get(stratum)
            .map(|v| v.iter().collect())
            .unwrap_or_default();
        memo_items.sort_by_key(|i| Reverse(i.order_key()));
        let mut fresh_sorted: Vec<&StreamItem<S>> = fresh.iter().collect();
        fresh_sorted.sort_by_key(|i| Reverse(i.order_key()));

        let mut taken: HashSet<ItemId> = HashSet::with_capacity(want);
        let mut chosen = Vec::with_capacity(want);
        for item in memo_items.into_iter() {
            if chosen.len() == want {
                break;
            }
            if taken.insert(item.id) {
                chosen.push(item.clone());
            }
        }
        let reused = chosen.len();
        let mut fresh_iter = fresh_sorted.into_iter();
        while chosen.len() < want {
            match fresh_iter.next() {
                Some(item) => {
                    if taken.insert(item.id) {
                        chosen.push(item.clone());
                    }
                }
                None => {
                    return Err(BiasError::SampleExhausted {
                        stratum: stratum.clone(),
                        have: chosen.len(),
                        want,
                    })
                }
            }
        }
        out.strata.insert(stratum.clone(), chosen);
        out.reused.insert(stratum.clone(), reused);
    }
    Ok(out)
}
