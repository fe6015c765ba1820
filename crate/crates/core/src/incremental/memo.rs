use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Write};

use serde::Serialize;

use super::{AggTree, GroupOutput, LeafKey, Moments, QueryDef};
use crate::scalar::Scalar;
use crate::stream::{GroupKey, ItemId, Stratum, StreamItem};

pub type PartitionKey = (GroupKey, Stratum);

/// Output of one map node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapResult<S> {
    pub item_id: ItemId,
    pub key: GroupKey,
    pub stratum: Stratum,
    pub contrib: Moments<S>,
}

impl<S: Scalar> MapResult<S> {
    pub fn compute(item: &StreamItem<S>, group_by: bool) -> Self {
        MapResult {
            item_id: item.id,
            key: if group_by { item.key.clone() } else { None },
            stratum: item.stratum.clone(),
            contrib: Moments::of(item.value),
        }
    }

    pub fn partition(&self) -> PartitionKey {
        (self.key.clone(), self.stratum.clone())
    }
}

#[derive(Clone, Debug)]
struct Entry<S> {
    item: StreamItem<S>,
    map: MapResult<S>,
}

#[derive(Clone, Debug, Default)]
struct Pending<S> {
    removals: Vec<LeafKey>,
    insertions: Vec<(LeafKey, Moments<S>)>,
}

pub(super) struct Propagation {
    pub partitions: usize,
    pub tree_nodes: u64,
    pub groups_recomputed: usize,
    pub groups_reused: usize,
}

/// Memoized map results, reduce trees and group outputs from the last run.
#[derive(Clone, Debug)]
pub struct MemoStore<S> {
    query: Option<QueryDef>,
    by_item: HashMap<ItemId, Entry<S>>,
    partitions: BTreeMap<PartitionKey, AggTree<S>>,
    outputs: BTreeMap<GroupKey, GroupOutput<S>>,
    pending: BTreeMap<PartitionKey, Pending<S>>,
}

impl<S: Scalar> Default for MemoStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> MemoStore<S> {
    pub fn new() -> Self {
        MemoStore {
            query: None,
            by_item: HashMap::new(),
            partitions: BTreeMap::new(),
            outputs: BTreeMap::new(),
            pending: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.by_item.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_item.is_empty()
    }

    pub fn contains(&self, id: ItemId) -> bool {
        self.by_item.contains_key(&id)
    }

    pub fn map_result(&self, id: ItemId) -> Option<&MapResult<S>> {
        self.by_item.get(&id).map(|e| &e.map)
    }

    /// Ids memoized by the last run, minus evictions since.
    pub fn item_ids(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.by_item.keys().copied()
    }

    pub fn oldest_timestamp(&self) -> Option<u64> {
        self.by_item.values().map(|e| e.item.timestamp).min()
    }

    /// Memoized items grouped by stratum, each group in `(timestamp, id)`
    /// order, strata in name order.
    pub fn items_by_stratum(&self) -> indexmap::IndexMap<Stratum, Vec<StreamItem<S>>> {
        let mut grouped: BTreeMap<Stratum, Vec<StreamItem<S>>> = BTreeMap::new();
        for e in self.by_item.values() {
            grouped
                .entry(e.item.stratum.clone())
                .or_default()
                .push(e.item.clone());
        }
        grouped
            .into_iter()
            .map(|(k, mut v)| {
                v.sort_by_key(StreamItem::order_key);
                (k, v)
            })
            .collect()
    }

    /// Partitions with pending changes for the next run.
    pub fn dirty_partitions(&self) -> BTreeSet<PartitionKey> {
        self.pending.keys().cloned().collect()
    }

    pub fn partition_keys(&self) -> impl Iterator<Item = &PartitionKey> + '_ {
        self.partitions.keys()
    }

    pub fn outputs(&self) -> &BTreeMap<GroupKey, GroupOutput<S>> {
        &self.outputs
    }

    pub fn clear(&mut self) {
        self.by_item.clear();
        self.partitions.clear();
        self.outputs.clear();
        self.pending.clear();
    }

    /// Writes the memoized map results as JSON lines, ordered by item id.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut ids: Vec<_> = self.by_item.keys().copied().collect();
        ids.sort_unstable();
        for id in ids {
            serde_json::to_writer(&mut w, &self.by_item[&id].map)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub(super) fn bind_query(&mut self, query: &QueryDef) {
        if self.query.map(|q| q.group_by) != Some(query.group_by) {
            self.clear();
        }
        self.query = Some(*query);
    }

    pub(super) fn evict(
        &mut self,
        window_start: u64,
        evicted_ids: impl IntoIterator<Item = ItemId>,
    ) -> usize {
        let mut removed = 0;
        for id in evicted_ids {
            if self.drop_item(id) {
                removed += 1;
            }
        }
        let stale: Vec<ItemId> = self
            .by_item
            .iter()
            .filter(|(_, e)| e.item.timestamp < window_start)
            .map(|(&id, _)| id)
            .collect();
        for id in stale {
            if self.drop_item(id) {
                removed += 1;
            }
        }
        removed
    }

    /// Keeps only entries whose id satisfies `keep`; returns the number
    /// dropped.
    pub(super) fn retain_items(&mut self, keep: impl Fn(ItemId) -> bool) -> usize {
        let gone: Vec<ItemId> = self.by_item.keys().copied().filter(|&id| !keep(id)).collect();
        for &id in &gone {
            self.drop_item(id);
        }
        gone.len()
    }

    pub(super) fn insert_item(&mut self, item: StreamItem<S>, group_by: bool) {
        let map = MapResult::compute(&item, group_by);
        self.pending
            .entry(map.partition())
            .or_default()
            .insertions
            .push((item.order_key(), map.contrib));
        self.by_item.insert(item.id, Entry { item, map });
    }

    fn drop_item(&mut self, id: ItemId) -> bool {
        match self.by_item.remove(&id) {
            Some(e) => {
                self.pending
                    .entry(e.map.partition())
                    .or_default()
                    .removals
                    .push(e.item.order_key());
                true
            }
            None => false,
        }
    }

    /// Replays pending changes into the reduce trees and refreshes the
    /// outputs of every group above a touched partition.
    pub(super) fn propagate(&mut self) -> Propagation {
        let pending = std::mem::take(&mut self.pending);
        let mut touched_groups: BTreeSet<GroupKey> = BTreeSet::new();
        let mut tree_nodes = 0;
        let partitions = pending.len();
        for (pk, changes) in pending {
            let tree = self.partitions.entry(pk.clone()).or_default();
            for k in changes.removals {
                tree.remove(k);
            }
            for (k, m) in changes.insertions {
                tree.insert(k, m);
            }
            tree_nodes += tree.take_recomputed();
            if tree.is_empty() {
                self.partitions.remove(&pk);
            }
            touched_groups.insert(pk.0);
        }

        for g in &touched_groups {
            let per_stratum: BTreeMap<Stratum, Moments<S>> = self
                .partitions
                .range((g.clone(), Stratum::from(""))..)
                .take_while(|((k, _), _)| k == g)
                .map(|((_, s), t)| (s.clone(), t.total()))
                .collect();
            if per_stratum.is_empty() {
                self.outputs.remove(g);
                continue;
            }
            let total = per_stratum
                .values()
                .fold(Moments::empty(), |acc, m| acc.merge(m));
            self.outputs.insert(g.clone(), GroupOutput { per_stratum, total });
        }

        let groups_recomputed = touched_groups
            .iter()
            .filter(|g| self.outputs.contains_key(*g))
            .count();
        Propagation {
            partitions,
            tree_nodes,
            groups_recomputed,
            groups_reused: self.outputs.len() - groups_recomputed,
        }
    }
}
