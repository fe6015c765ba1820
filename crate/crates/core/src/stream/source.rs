use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::net::TcpStream;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use super::{ItemId, StreamItem};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SourceError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
}

/// Pull interface over a timestamp-ordered stream, delivered in batches.
/// `Ok(None)` signals end of stream.
pub trait Source<S> {
    fn next_batch(&mut self) -> Result<Option<Vec<StreamItem<S>>>, SourceError>;
}

impl<S, T: Source<S> + ?Sized> Source<S> for Box<T> {
    fn next_batch(&mut self) -> Result<Option<Vec<StreamItem<S>>>, SourceError> {
        (**self).next_batch()
    }
}

#[derive(Deserialize)]
struct Record {
    ts: i64,
    stratum: String,
    #[serde(default)]
    key: Option<String>,
    value: f64,
}

/// Reads `{"ts", "stratum", "key", "value"}` objects, one per line, and
/// assigns ids from a monotonically increasing counter.
pub struct JsonLinesSource<R> {
    reader: R,
    batch_size: usize,
    next_id: ItemId,
    line: u64,
    buf: String,
}

impl<R: BufRead> JsonLinesSource<R> {
    pub fn new(reader: R, batch_size: usize) -> Self {
        JsonLinesSource {
            reader,
            batch_size: batch_size.max(1),
            next_id: 0,
            line: 0,
            buf: String::new(),
        }
    }

    fn parse_line<S: Scalar>(&mut self) -> Result<StreamItem<S>, SourceError> {
        let line = self.line;
        let rec: Record = serde_json::from_str(self.buf.trim()).map_err(|e| SourceError::Parse {
            line,
            message: e.to_string(),
        })?;
        if rec.ts < 0 {
            return Err(SourceError::Parse {
                line,
                message: "negative timestamp".into(),
            });
        }
        if rec.stratum.is_empty() {
            return Err(SourceError::Parse {
                line,
                message: "empty stratum".into(),
            });
        }
        let id = self.next_id;
        self.next_id += 1;
        let mut item = StreamItem::new(id, rec.ts as u64, rec.stratum, S::from_f64_lossy(rec.value));
        if let Some(k) = rec.key {
            item = item.with_key(k);
        }
        Ok(item)
    }
}

impl<S: Scalar, R: BufRead> Source<S> for JsonLinesSource<R> {
    fn next_batch(&mut self) -> Result<Option<Vec<StreamItem<S>>>, SourceError> {
        let mut batch = Vec::new();
        while batch.len() < self.batch_size {
            self.buf.clear();
            if self.reader.read_line(&mut self.buf)? == 0 {
                break;
            }
            self.line += 1;
            if self.buf.trim().is_empty() {
                continue;
            }
            batch.push(self.parse_line()?);
        }
        Ok(if batch.is_empty() { None } else { Some(batch) })
    }
}

/// In-memory source, mostly for tests and the synthetic benchmarks.
pub struct VecSource<S> {
    items: std::vec::IntoIter<StreamItem<S>>,
    batch_size: usize,
}

impl<S> VecSource<S> {
    pub fn new(items: Vec<StreamItem<S>>, batch_size: usize) -> Self {
        VecSource {
            items: items.into_iter(),
            batch_size: batch_size.max(1),
        }
    }
}

impl<S> Source<S> for VecSource<S> {
    fn next_batch(&mut self) -> Result<Option<Vec<StreamItem<S>>>, SourceError> {
        let batch: Vec<_> = self.items.by_ref().take(self.batch_size).collect();
        Ok(if batch.is_empty() { None } else { Some(batch) })
    }
}

/// Opens `-` (stdin), a file path, or a `host:port` TCP line stream.
pub fn open_source<S: Scalar>(
    spec: &str,
    batch_size: usize,
) -> Result<Box<dyn Source<S>>, SourceError> {
    if spec == "-" {
        let stdin = BufReader::new(io::stdin());
        return Ok(Box::new(JsonLinesSource::new(stdin, batch_size)));
    }
    let path = Path::new(spec);
    if path.exists() || !looks_like_socket(spec) {
        let file = BufReader::new(File::open(path)?);
        return Ok(Box::new(JsonLinesSource::new(file, batch_size)));
    }
    let stream = TcpStream::connect(spec)?;
    Ok(Box::new(JsonLinesSource::new(BufReader::new(stream), batch_size)))
}

fn looks_like_socket(spec: &str) -> bool {
    match spec.rsplit_once(':') {
        Some((host, port)) => {
            !host.is_empty() && !host.contains('/') && port.parse::<u16>().is_ok()
        }
        None => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records_and_assigns_ids() {
        let input = "{\"ts\": 3, \"stratum\": \"A\", \"key\": \"k\", \"value\": 1.5}\n\n\
                     {\"ts\": 4, \"stratum\": \"B\", \"key\": null, \"value\": -2}\n\
                     {\"ts\": 5, \"stratum\": \"B\", \"value\": 0.25}\n";
        let mut src = JsonLinesSource::new(input.as_bytes(), 2);
        let first: Vec<StreamItem<f64>> = src.next_batch().unwrap().unwrap();
        assert_eq!(first.len(), 2);
        assert_eq!(first[0].id, 0);
        assert_eq!(first[0].key.as_deref(), Some("k"));
        assert_eq!(first[1].id, 1);
        assert_eq!(first[1].key, None);
        assert_eq!(first[1].value, -2.0);
        let second: Vec<StreamItem<f64>> = src.next_batch().unwrap().unwrap();
        assert_eq!(second[0].id, 2);
        assert!(Source::<f64>::next_batch(&mut src).unwrap().is_none());
    }

    #[test]
    fn rejects_bad_lines() {
        for bad in [
            "{\"ts\": -1, \"stratum\": \"A\", \"value\": 1}",
            "{\"ts\": 1, \"stratum\": \"\", \"value\": 1}",
            "{\"ts\": 1}",
            "not json",
        ] {
            let mut src = JsonLinesSource::new(bad.as_bytes(), 8);
            let r: Result<Option<Vec<StreamItem<f64>>>, _> = src.next_batch();
            assert!(matches!(r, Err(SourceError::Parse { line: 1, .. })), "{bad}");
        }
    }

    #[test]
    fn socket_detection() {
        assert!(looks_like_socket("127.0.0.1:9000"));
        assert!(looks_like_socket("localhost:80"));
        assert!(!looks_like_socket("data/input.jsonl"));
        assert!(!looks_like_socket("./a:b"));
    }
}
