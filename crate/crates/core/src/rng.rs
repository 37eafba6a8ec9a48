//! Per-seed random streams.
//!
//! Each seed owns five ChaCha streams, one per purpose. Changing how many draws
//! one purpose consumes (for example a larger prompt set) never shifts the
//! draws seen by another.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StreamLabel {
    EnvInit,
    DataCollection,
    ModelInit,
    Training,
    Evaluation,
}

impl StreamLabel {
    pub const ALL: [StreamLabel; 5] = [
        StreamLabel::EnvInit,
        StreamLabel::DataCollection,
        StreamLabel::ModelInit,
        StreamLabel::Training,
        StreamLabel::Evaluation,
    ];

    fn stream_id(self) -> u64 {
        match self {
            StreamLabel::EnvInit => 1,
            StreamLabel::DataCollection => 2,
            StreamLabel::ModelInit => 3,
            StreamLabel::Training => 4,
            StreamLabel::Evaluation => 5,
        }
    }
}

/// A reproducible random stream keyed by `(seed, label)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    label: StreamLabel,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: StreamLabel) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label.stream_id());
        RngStream { seed, label, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn label(&self) -> StreamLabel {
        self.label
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform draw on `[lo, hi]`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn index(&mut self, upper: usize) -> usize {
        self.rng.gen_range(0..upper)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// The five purpose streams for one seed.
pub fn make_streams(seed: u64) -> BTreeMap<StreamLabel, RngStream> {
    StreamLabel::ALL
        .iter()
        .map(|&l| (l, RngStream::new(seed, l)))
        .collect()
}
