use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::scenario::Substream;
use crate::stream::{Stratum, StreamItem};

struct Lane {
    stratum: Stratum,
    spec: Substream,
    values: Normal<f64>,
}

/// Endless synthetic stream: per time unit, each substream emits
/// Poisson(rate) items at uniformly drawn sub-unit timestamps.
pub struct Generator {
    lanes: Vec<Lane>,
    rng: ChaCha8Rng,
    resolution: u64,
    phase_units: u64,
    unit: u64,
    next_id: u64,
}

impl Generator {
    /// `phase_units` is the length of one schedule phase in time units.
    pub fn new(substreams: &[Substream], seed: u64, resolution: u64, phase_units: u64) -> Self {
        let lanes = substreams
            .iter()
            .enumerate()
            .map(|(i, s)| Lane {
                stratum: Stratum::from(s.label.as_str()),
                values: Normal::new(s.value_mean.unwrap_or(10.0 * (i + 1) as f64), s.value_sd)
                    .expect("validated sd"),
                spec: s.clone(),
            })
            .collect();
        Generator {
            lanes,
            rng: ChaCha8Rng::seed_from_u64(seed),
            resolution: resolution.max(1),
            phase_units: phase_units.max(1),
            unit: 0,
            next_id: 0,
        }
    }

    pub fn resolution(&self) -> u64 {
        self.resolution
    }

    /// Time unit the next call to `next_unit` will produce.
    pub fn unit(&self) -> u64 {
        self.unit
    }

    pub fn phase_of_unit(&self, unit: u64) -> usize {
        (unit / self.phase_units) as usize
    }

    /// Items of the next time unit in timestamp order.
    pub fn next_unit(&mut self) -> Vec<StreamItem<f64>> {
        let phase = self.phase_of_unit(self.unit);
        let base = self.unit * self.resolution;
        let mut out = Vec::new();
        for lane in &self.lanes {
            let rate = lane.spec.rate_in_phase(phase);
            let n = Poisson::new(rate).expect("validated rate").sample(&mut self.rng) as u64;
            for _ in 0..n {
                let ts = base + self.rng.random_range(0..self.resolution);
                let value = lane.values.sample(&mut self.rng);
                out.push(StreamItem::new(0, ts, lane.stratum.clone(), value));
            }
        }
        out.sort_by_key(|i| i.timestamp);
        for item in &mut out {
            item.id = self.next_id;
            self.next_id += 1;
        }
        self.unit += 1;
        out
    }

    /// Everything up to (excluding) tick `end`, generated unit by unit.
    pub fn until(&mut self, end: u64) -> Vec<StreamItem<f64>> {
        let mut out = Vec::new();
        while self.unit * self.resolution < end {
            out.extend(self.next_unit());
        }
        out
    }
}
