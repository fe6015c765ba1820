use std::collections::{BTreeMap, HashSet};

use indexmap::IndexMap;

use super::{ItemId, Stratum, StreamError, StreamItem};

/// Time-based sliding window parameters. The window covers the half-open
/// interval `[start, start + length)` and advances by `slide`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowSpec {
    pub start: u64,
    pub length: u64,
    pub slide: u64,
}

impl WindowSpec {
    pub fn new(start: u64, length: u64, slide: u64) -> Result<Self, StreamError> {
        if slide == 0 || slide > length {
            return Err(StreamError::InvalidWindow { length, slide });
        }
        Ok(WindowSpec {
            start,
            length,
            slide,
        })
    }

    pub fn end(&self) -> u64 {
        self.start.saturating_add(self.length)
    }
}

type OrderKey = (u64, ItemId);

/// Contents of the current window plus items that arrived ahead of it.
///
/// Items are kept ordered by `(timestamp, id)`. Items at or beyond the
/// window end wait in a carryover queue and are promoted when the window
/// moves over them.
#[derive(Clone, Debug)]
pub struct WindowState<S> {
    start: u64,
    length: u64,
    items: BTreeMap<OrderKey, StreamItem<S>>,
    stratum_counts: IndexMap<Stratum, usize>,
    carryover: BTreeMap<OrderKey, StreamItem<S>>,
    held_ids: HashSet<ItemId>,
    late_items: u64,
}

impl<S: Clone> WindowState<S> {
    pub fn new(start: u64, length: u64) -> Self {
        WindowState {
            start,
            length,
            items: BTreeMap::new(),
            stratum_counts: IndexMap::new(),
            carryover: BTreeMap::new(),
            held_ids: HashSet::new(),
            late_items: 0,
        }
    }

    pub fn from_spec(spec: &WindowSpec) -> Self {
        Self::new(spec.start, spec.length)
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn length(&self) -> u64 {
        self.length
    }

    pub fn end(&self) -> u64 {
        self.start.saturating_add(self.length)
    }

    /// Number of items inside the window (`k`).
    pub fn total(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Window items in `(timestamp, id)` order.
    pub fn items(&self) -> impl Iterator<Item = &StreamItem<S>> + '_ {
        self.items.values()
    }

    /// Per-stratum counts, in first-seen order.
    pub fn stratum_counts(&self) -> &IndexMap<Stratum, usize> {
        &self.stratum_counts
    }

    pub fn strata(&self) -> impl Iterator<Item = &Stratum> + '_ {
        self.stratum_counts.keys()
    }

    pub fn carryover_len(&self) -> usize {
        self.carryover.len()
    }

    /// Items dropped because they arrived behind the window start.
    pub fn late_items(&self) -> u64 {
        self.late_items
    }

    /// Adds a batch. Items past the window end are buffered; items before
    /// the window start are dropped and counted as late. A batch containing
    /// an id that is already held (or repeated within the batch) is rejected
    /// as a whole and leaves the state untouched.
    pub fn ingest(&mut self, mut batch: Vec<StreamItem<S>>) -> Result<(), StreamError> {
        if batch.is_empty() {
            return Ok(());
        }
        batch.sort_by_key(StreamItem::order_key);
        let mut fresh = HashSet::with_capacity(batch.len());
        for item in &batch {
            if item.stratum.is_empty() {
                return Err(StreamError::InvalidItem {
                    id: item.id,
                    reason: "empty stratum",
                });
            }
            if self.held_ids.contains(&item.id) || !fresh.insert(item.id) {
                return Err(StreamError::DuplicateId(item.id));
            }
        }

        let end = self.end();
        for item in batch {
            if item.timestamp < self.start {
                self.late_items += 1;
            } else if item.timestamp < end {
                self.insert(item);
            } else {
                self.held_ids.insert(item.id);
                self.carryover.insert(item.order_key(), item);
            }
        }
        Ok(())
    }

    /// Moves the window forward by `spec.slide`, returning the evicted items
    /// in `(timestamp, id)` order.
    pub fn slide(&mut self, spec: &WindowSpec) -> Vec<StreamItem<S>> {
        self.advance_to(self.start.saturating_add(spec.slide))
    }

    /// Moves the window start to `new_start`. Calling it again with the same
    /// (or an earlier) start is a no-op.
    pub fn advance_to(&mut self, new_start: u64) -> Vec<StreamItem<S>> {
        if new_start <= self.start {
            return Vec::new();
        }
        self.start = new_start;

        let kept = self.items.split_off(&(new_start, 0));
        let evicted: Vec<_> = std::mem::replace(&mut self.items, kept)
            .into_values()
            .collect();
        for item in &evicted {
            self.held_ids.remove(&item.id);
            self.decrement(&item.stratum);
        }

        // carryover items the window jumped over entirely
        let still_ahead = self.carryover.split_off(&(new_start, 0));
        let skipped = std::mem::replace(&mut self.carryover, still_ahead);
        for item in skipped.into_values() {
            self.held_ids.remove(&item.id);
            self.late_items += 1;
        }

        self.promote();
        evicted
    }

    /// Changes the window length, keeping the start. Items that fall beyond
    /// a shortened end move back to the carryover queue.
    pub fn set_length(&mut self, length: u64) {
        self.length = length;
        let end = self.end();
        let beyond = self.items.split_off(&(end, 0));
        for (k, item) in beyond {
            self.decrement(&item.stratum);
            self.carryover.insert(k, item);
        }
        self.promote();
    }

    fn promote(&mut self) {
        let end = self.end();
        let later = self.carryover.split_off(&(end, 0));
        let due = std::mem::replace(&mut self.carryover, later);
        for item in due.into_values() {
            // held_ids already contains carried-over ids
            self.count(&item.stratum);
            self.items.insert(item.order_key(), item);
        }
    }

    fn insert(&mut self, item: StreamItem<S>) {
        self.held_ids.insert(item.id);
        self.count(&item.stratum);
        self.items.insert(item.order_key(), item);
    }

    fn count(&mut self, stratum: &Stratum) {
        *self.stratum_counts.entry(stratum.clone()).or_insert(0) += 1;
    }

    fn decrement(&mut self, stratum: &Stratum) {
        if let Some(c) = self.stratum_counts.get_mut(stratum) {
            *c -= 1;
            if *c == 0 {
                self.stratum_counts.shift_remove(stratum);
            }
        }
    }
}
