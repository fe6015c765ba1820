//! Items, strata and the time-based sliding window.

mod item;
mod source;
mod window;

pub use item::{GroupKey, ItemId, Stratum, StreamItem};
pub use source::{open_source, JsonLinesSource, Source, SourceError, VecSource};
pub use window::{WindowSpec, WindowState};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("duplicate item id {0}")]
    DuplicateId(ItemId),
    #[error("invalid window: length {length}, slide {slide} (need 0 < slide <= length)")]
    InvalidWindow { length: u64, slide: u64 },
    #[error("invalid item {id}: {reason}")]
    InvalidItem { id: ItemId, reason: &'static str },
}
