use std::borrow::Borrow;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub type ItemId = u64;

/// Source label of a sub-stream. Cheap to clone.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Stratum(Arc<str>);

impl Stratum {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<&str> for Stratum {
    fn from(s: &str) -> Self {
        Stratum(Arc::from(s))
    }
}

impl From<String> for Stratum {
    fn from(s: String) -> Self {
        Stratum(Arc::from(s))
    }
}

impl Borrow<str> for Stratum {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Aggregation group of an item; `None` for ungrouped records.
pub type GroupKey = Option<Arc<str>>;

/// One timestamped, stratum-labelled record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamItem<S> {
    pub id: ItemId,
    pub timestamp: u64,
    pub stratum: Stratum,
    pub key: GroupKey,
    pub value: S,
}

impl<S> StreamItem<S> {
    pub fn new(id: ItemId, timestamp: u64, stratum: impl Into<Stratum>, value: S) -> Self {
        StreamItem {
            id,
            timestamp,
            stratum: stratum.into(),
            key: None,
            value,
        }
    }

    pub fn with_key(mut self, key: impl Into<Arc<str>>) -> Self {
        self.key = Some(key.into());
        self
    }

    /// Total order used everywhere an iteration order is needed.
    #[inline]
    pub fn order_key(&self) -> (u64, ItemId) {
        (self.timestamp, self.id)
    }
}
