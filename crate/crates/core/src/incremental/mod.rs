//! Self-adjusting evaluation of keyed SUM/COUNT/MEAN over the biased sample.
//!
//! The dependence graph has three levels: every sampled item owns one map
//! node (its [`MapResult`]); map nodes feed the reduce partition of their
//! `(group key, stratum)` pair, an [`AggTree`]; each group's output merges
//! the roots of its partitions. A run diffs the new sample against the
//! memo, recomputes map nodes only for new items, replays insertions and
//! removals into the touched partitions, and rebuilds only the group
//! outputs that sit above a touched partition.

mod memo;
mod moments;
mod tree;

pub use memo::{MapResult, MemoStore, PartitionKey};
pub use moments::Moments;
pub use tree::{tree_priority, AggTree, LeafKey};

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::Serialize;
use thiserror::Error;

use crate::biasing::BiasedSample;
use crate::scalar::Scalar;
use crate::stream::{GroupKey, ItemId, Stratum};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QueryError {
    #[error("unsupported: requires extreme value theory ({0})")]
    Unsupported(String),
    #[error("unknown aggregate '{0}'")]
    Unknown(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Sum,
    Count,
    Mean,
}

impl FromStr for Aggregate {
    type Err = QueryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(Aggregate::Sum),
            "count" => Ok(Aggregate::Count),
            "mean" | "avg" => Ok(Aggregate::Mean),
            "min" | "max" => Err(QueryError::Unsupported(s.to_string())),
            _ => Err(QueryError::Unknown(s.to_string())),
        }
    }
}

impl fmt::Display for Aggregate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregate::Sum => "sum",
            Aggregate::Count => "count",
            Aggregate::Mean => "mean",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct QueryDef {
    pub aggregate: Aggregate,
    pub group_by: bool,
}

impl QueryDef {
    pub fn new(aggregate: Aggregate, group_by: bool) -> Self {
        QueryDef {
            aggregate,
            group_by,
        }
    }
}

/// Reduce output of one group: moments per stratum and over all strata.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupOutput<S> {
    pub per_stratum: BTreeMap<Stratum, Moments<S>>,
    pub total: Moments<S>,
}

impl<S: Scalar> GroupOutput<S> {
    /// The aggregate evaluated over the sampled items of this group.
    pub fn value(&self, aggregate: Aggregate) -> S {
        match aggregate {
            Aggregate::Sum => self.total.sum,
            Aggregate::Count => S::from_u64_lossy(self.total.count),
            Aggregate::Mean => self.total.mean(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ReuseStats {
    pub map_reused: usize,
    pub map_computed: usize,
    /// Map results dropped because their item left the window or the sample.
    pub map_dropped: usize,
    pub reduce_reused: usize,
    pub reduce_recomputed: usize,
    pub partitions_recomputed: usize,
    pub tree_nodes_recomputed: u64,
    /// Reused map results per stratum.
    pub reused_per_stratum: IndexMap<Stratum, usize>,
}

impl ReuseStats {
    pub fn map_reuse_fraction(&self) -> f64 {
        let total = self.map_reused + self.map_computed;
        if total == 0 {
            0.0
        } else {
            self.map_reused as f64 / total as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct IncrementalOutput<S> {
    pub groups: BTreeMap<GroupKey, GroupOutput<S>>,
    pub stats: ReuseStats,
}

/// Evaluates `query` over `biased`, reusing and updating `memo`.
///
/// Afterwards the memo holds map results for exactly the items of
/// `biased`, and `groups` equals a from-scratch evaluation over them.
pub fn run_incremental<S: Scalar>(
    query: &QueryDef,
    biased: &BiasedSample<S>,
    memo: &mut MemoStore<S>,
) -> IncrementalOutput<S> {
    memo.bind_query(query);
    let mut stats = ReuseStats::default();

    let wanted: HashSet<ItemId> = biased.items().map(|i| i.id).collect();
    stats.map_dropped = memo.retain_items(|id| wanted.contains(&id));

    for (stratum, items) in &biased.strata {
        let mut reused = 0;
        for item in items {
            if memo.contains(item.id) {
                reused += 1;
            } else {
                memo.insert_item(item.clone(), query.group_by);
                stats.map_computed += 1;
            }
        }
        stats.map_reused += reused;
        stats.reused_per_stratum.insert(stratum.clone(), reused);
    }

    let propagation = memo.propagate();
    stats.partitions_recomputed = propagation.partitions;
    stats.tree_nodes_recomputed = propagation.tree_nodes;
    stats.reduce_recomputed = propagation.groups_recomputed;
    stats.reduce_reused = propagation.groups_reused;

    IncrementalOutput {
        groups: memo.outputs().clone(),
        stats,
    }
}

/// Drops memo entries for `evicted_ids` and for anything older than
/// `window_start`, marking the partitions that held them dirty.
pub fn evict<S: Scalar>(
    memo: &mut MemoStore<S>,
    window_start: u64,
    evicted_ids: impl IntoIterator<Item = ItemId>,
) -> usize {
    memo.evict(window_start, evicted_ids)
}
