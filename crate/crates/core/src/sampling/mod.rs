//! Proportional stratified reservoir sampling.
//!
//! The reservoir fills until it holds `capacity` items. From then on every
//! stratum is sampled with conventional reservoir sampling (CRS), and every
//! `realloc_every` observed items the per-stratum target sizes are
//! recomputed in proportion to the seen counts. A stratum whose target
//! shrinks loses random residents immediately; one whose target grows
//! accumulates a fill debt that is paid by the next items of that stratum
//! (adaptive reservoir sampling, ARS).
//!
//! Random draws, in order of use:
//! - CRS: one `random_range(0..seen)` draw per offered item; a value below
//!   the sub-reservoir length both accepts the item and names the slot
//!   it replaces.
//! - ARS shrink: one `random_range(0..len)` draw per evicted resident,
//!   removed with `swap_remove`.

mod allocation;

pub use allocation::{allocate, compute_allocation};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::stream::{Stratum, StreamItem};

/// Per-stratum slice of the reservoir.
#[derive(Clone, Debug)]
pub struct SubReservoir<S> {
    items: Vec<StreamItem<S>>,
    target: usize,
    seen: u64,
    fill_debt: usize,
    underfill: u64,
}

impl<S> Default for SubReservoir<S> {
    fn default() -> Self {
        SubReservoir {
            items: Vec::new(),
            target: 0,
            seen: 0,
            fill_debt: 0,
            underfill: 0,
        }
    }
}

impl<S> SubReservoir<S> {
    pub fn with_items(items: Vec<StreamItem<S>>) -> Self {
        SubReservoir {
            target: items.len(),
            seen: items.len() as u64,
            items,
            ..Default::default()
        }
    }

    pub fn items(&self) -> &[StreamItem<S>] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn fill_debt(&self) -> usize {
        self.fill_debt
    }

    pub fn underfill(&self) -> u64 {
        self.underfill
    }

    /// CRS acceptance probability `|sub| / seen` for the next item.
    pub fn replacement_probability(&self, seen_in_stratum: u64) -> f64 {
        if seen_in_stratum == 0 {
            return 0.0;
        }
        (self.items.len() as f64 / seen_in_stratum as f64).min(1.0)
    }
}

/// One conventional reservoir-sampling step: with probability
/// `|sub| / seen_in_stratum` the item replaces a uniformly chosen resident.
/// Returns whether the item was accepted.
pub fn crs_step<S, R: Rng + ?Sized>(
    sub: &mut SubReservoir<S>,
    item: StreamItem<S>,
    seen_in_stratum: u64,
    rng: &mut R,
) -> bool {
    let len = sub.items.len() as u64;
    if len == 0 {
        return false;
    }
    let j = rng.random_range(0..seen_in_stratum.max(len));
    if j < len {
        sub.items[j as usize] = item;
        true
    } else {
        false
    }
}

/// What happened to an offered item.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OfferAction {
    /// Appended during the initial fill.
    Filled,
    /// Appended to repay an ARS fill debt.
    DebtFilled,
    /// Accepted by CRS, replacing a resident.
    Replaced,
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OfferOutcome {
    pub action: OfferAction,
    /// A reallocation ran before this item was placed.
    pub reallocated: bool,
}

/// Per-stratum counters exposed after sampling.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StratumMetrics {
    pub seen: u64,
    pub target: usize,
    pub sampled: usize,
    pub underfill: u64,
}

/// Fixed-capacity sample partitioned into per-stratum sub-reservoirs.
#[derive(Clone, Debug)]
pub struct StratifiedReservoir<S> {
    capacity: usize,
    realloc_every: usize,
    strata: IndexMap<Stratum, SubReservoir<S>>,
    total_seen: u64,
    resident: usize,
    filling: bool,
    since_realloc: usize,
    reallocations: u64,
    rng: ChaCha8Rng,
}

impl<S> StratifiedReservoir<S> {
    /// `realloc_every` of `None` reallocates once per `capacity` items.
    pub fn new(capacity: usize, realloc_every: Option<usize>, seed: u64) -> Self {
        StratifiedReservoir {
            capacity,
            realloc_every: realloc_every.unwrap_or(capacity).max(1),
            strata: IndexMap::new(),
            total_seen: 0,
            resident: 0,
            filling: capacity > 0,
            since_realloc: 0,
            reallocations: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn realloc_every(&self) -> usize {
        self.realloc_every
    }

    pub fn total_seen(&self) -> u64 {
        self.total_seen
    }

    /// Items currently held across all strata.
    pub fn resident(&self) -> usize {
        self.resident
    }

    pub fn reallocations(&self) -> u64 {
        self.reallocations
    }

    pub fn is_filling(&self) -> bool {
        self.filling
    }

    pub fn strata(&self) -> &IndexMap<Stratum, SubReservoir<S>> {
        &self.strata
    }

    pub fn sub(&self, stratum: &str) -> Option<&SubReservoir<S>> {
        self.strata.get(stratum)
    }

    pub fn seen(&self) -> IndexMap<Stratum, u64> {
        self.strata
            .iter()
            .map(|(k, s)| (k.clone(), s.seen))
            .collect()
    }

    pub fn targets(&self) -> IndexMap<Stratum, usize> {
        self.strata
            .iter()
            .map(|(k, s)| (k.clone(), s.target))
            .collect()
    }

    pub fn offer(&mut self, item: StreamItem<S>) -> OfferOutcome {
        let idx = match self.strata.get_index_of(&item.stratum) {
            Some(i) => i,
            None => {
                self.strata
                    .insert_full(item.stratum.clone(), SubReservoir::default())
                    .0
            }
        };
        self.total_seen += 1;
        self.strata[idx].seen += 1;

        if self.filling {
            let sub = &mut self.strata[idx];
            sub.items.push(item);
            sub.target = sub.items.len();
            self.resident += 1;
            if self.resident >= self.capacity {
                self.filling = false;
                self.since_realloc = 0;
            }
            return OfferOutcome {
                action: OfferAction::Filled,
                reallocated: false,
            };
        }
        if self.capacity == 0 {
            return OfferOutcome {
                action: OfferAction::Rejected,
                reallocated: false,
            };
        }

        self.since_realloc += 1;
        let reallocated = self.since_realloc >= self.realloc_every;
        if reallocated {
            self.reallocate();
        }

        let sub = &mut self.strata[idx];
        let action = if sub.fill_debt > 0 {
            sub.items.push(item);
            sub.fill_debt -= 1;
            self.resident += 1;
            OfferAction::DebtFilled
        } else {
            let seen = sub.seen;
            if crs_step(sub, item, seen, &mut self.rng) {
                OfferAction::Replaced
            } else {
                OfferAction::Rejected
            }
        };
        OfferOutcome {
            action,
            reallocated,
        }
    }

    /// Recomputes every target from the seen counts and applies ARS to the
    /// strata whose size changed. Outstanding fill debt is written off as
    /// underfill first.
    pub fn reallocate(&mut self) {
        let counts: Vec<u64> = self.strata.values().map(|s| s.seen).collect();
        let sizes = allocate(&counts, self.capacity);
        for (i, new_size) in sizes.into_iter().enumerate() {
            let sub = &mut self.strata[i];
            if sub.fill_debt > 0 {
                sub.underfill += sub.fill_debt as u64;
                sub.fill_debt = 0;
            }
            let c = new_size as isize - sub.items.len() as isize;
            self.ars_at(i, c);
        }
        self.since_realloc = 0;
        self.reallocations += 1;
    }

    /// Adaptive step for one stratum: `c < 0` evicts `|c|` random residents,
    /// `c > 0` opens a debt of `c` slots to be filled by the next items of
    /// that stratum. Unknown strata are ignored.
    pub fn ars_adjust(&mut self, stratum: &str, c: isize) {
        if let Some(i) = self.strata.get_index_of(stratum) {
            self.ars_at(i, c);
        }
    }

    fn ars_at(&mut self, i: usize, c: isize) {
        let sub = &mut self.strata[i];
        if c < 0 {
            let evict = c.unsigned_abs().min(sub.items.len());
            for _ in 0..evict {
                let j = self.rng.random_range(0..sub.items.len());
                sub.items.swap_remove(j);
            }
            self.resident -= evict;
        } else if c > 0 {
            sub.fill_debt = c as usize;
        }
        sub.target = (sub.items.len() as isize + c.max(0)) as usize;
    }

    /// Ends the pass: unpaid debt becomes underfill and each stratum's
    /// items are returned in `(timestamp, id)` order.
    pub fn into_sample(self) -> StratifiedSample<S> {
        let mut strata = IndexMap::with_capacity(self.strata.len());
        let mut metrics = IndexMap::with_capacity(self.strata.len());
        for (k, mut sub) in self.strata {
            sub.underfill += sub.fill_debt as u64;
            sub.items.sort_by_key(StreamItem::order_key);
            metrics.insert(
                k.clone(),
                StratumMetrics {
                    seen: sub.seen,
                    target: sub.target,
                    sampled: sub.items.len(),
                    underfill: sub.underfill,
                },
            );
            strata.insert(k, sub.items);
        }
        StratifiedSample { strata, metrics }
    }
}

/// Finished per-window sample.
#[derive(Clone, Debug)]
pub struct StratifiedSample<S> {
    /// Sampled items per stratum in `(timestamp, id)` order. Every stratum
    /// observed in the pass has an entry, possibly empty.
    pub strata: IndexMap<Stratum, Vec<StreamItem<S>>>,
    pub metrics: IndexMap<Stratum, StratumMetrics>,
}

impl<S> StratifiedSample<S> {
    pub fn len(&self) -> usize {
        self.strata.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sizes(&self) -> IndexMap<Stratum, usize> {
        self.strata
            .iter()
            .map(|(k, v)| (k.clone(), v.len()))
            .collect()
    }
}

/// Samples `capacity` items from `items` in one pass.
pub fn stratified_sample<'a, S: Clone + 'a>(
    items: impl IntoIterator<Item = &'a StreamItem<S>>,
    capacity: usize,
    realloc_every: Option<usize>,
    seed: u64,
) -> StratifiedSample<S> {
    let mut res = StratifiedReservoir::new(capacity, realloc_every, seed);
    for item in items {
        res.offer(item.clone());
    }
    res.into_sample()
}
