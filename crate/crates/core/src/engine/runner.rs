use thiserror::Error;

use super::{Engine, EngineError, WindowResult};
use crate::scalar::Scalar;
use crate::stream::{Source, SourceError, StreamItem};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Pulls batches from a source and hands the engine one window at a time.
///
/// A window runs once an item at or past its end has been read, so its
/// contents are final. At end of stream, windows keep running while items
/// exist that no window has covered yet.
pub struct Runner<S, Src> {
    engine: Engine<S>,
    source: Src,
    pending: Vec<StreamItem<S>>,
    watermark: Option<u64>,
    auto_start: bool,
    eof: bool,
}

impl<S: Scalar, Src: Source<S>> Runner<S, Src> {
    /// With `auto_start`, the first window starts at the earliest timestamp
    /// of the first non-empty batch.
    pub fn new(engine: Engine<S>, source: Src, auto_start: bool) -> Self {
        Runner {
            engine,
            source,
            pending: Vec::new(),
            watermark: None,
            auto_start,
            eof: false,
        }
    }

    pub fn engine(&self) -> &Engine<S> {
        &self.engine
    }

    pub fn engine_mut(&mut self) -> &mut Engine<S> {
        &mut self.engine
    }

    pub fn into_engine(self) -> Engine<S> {
        self.engine
    }

    pub fn next_window(&mut self) -> Result<Option<WindowResult<S>>, RunError> {
        loop {
            let end = self.engine.window_end();
            let ready = self.watermark.is_some_and(|w| w >= end);
            let leftover = !self.pending.is_empty() || self.engine.state().carryover_len() > 0;
            if ready || (self.eof && leftover) {
                let batch = std::mem::take(&mut self.pending);
                return Ok(Some(self.engine.process_window(batch)?));
            }
            if self.eof {
                return Ok(None);
            }
            match self.source.next_batch()? {
                None => self.eof = true,
                Some(batch) if batch.is_empty() => {}
                Some(batch) => {
                    let lo = batch.iter().map(|i| i.timestamp).min().unwrap_or(0);
                    let hi = batch.iter().map(|i| i.timestamp).max().unwrap_or(0);
                    if self.auto_start && self.watermark.is_none() {
                        self.engine.set_start(lo);
                    }
                    self.watermark = Some(self.watermark.map_or(hi, |w| w.max(hi)));
                    self.pending.extend(batch);
                }
            }
        }
    }
}

impl<S: Scalar, Src: Source<S>> Iterator for Runner<S, Src> {
    type Item = Result<WindowResult<S>, RunError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_window().transpose()
    }
}
