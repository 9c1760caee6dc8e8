use rand::seq::SliceRandom;

use crate::neural::Mode;
use crate::rng::{self, SimRng};
use crate::{Error, Result};

/// How the batch size evolves during training.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchPolicy {
    Fixed(usize),
    /// Start at `initial`, double on a plateau, stop on a plateau at the
    /// full sample set.
    Adaptive(AdaptiveBatchConfig),
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdaptiveBatchConfig {
    pub initial: usize,
    /// Minimum loss improvement (nats) that resets the patience counter.
    pub delta: f64,
    pub patience: usize,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainSchedule {
    pub mode: Mode,
    pub order: usize,
    /// Symbols per epoch `N`.
    pub sample_set_size: usize,
    pub batch: BatchPolicy,
    pub epochs: usize,
    /// Validate every this many epochs (and after the last one).
    pub validation_every: usize,
    pub validation_symbols: usize,
    pub learning_rate: f64,
}

impl TrainSchedule {
    /// `N = 256 M` i.i.d. symbols per epoch in batches of `32 M`.
    pub fn mi(order: usize) -> Self {
        Self {
            mode: Mode::Mi,
            order,
            sample_set_size: 256 * order,
            batch: BatchPolicy::Fixed(32 * order),
            epochs: 100,
            validation_every: 5,
            validation_symbols: 10_000,
            learning_rate: 1e-3,
        }
    }

    /// Balanced set of `32 M` symbols with adaptive batch size starting at `M`.
    pub fn gmi(order: usize) -> Self {
        Self {
            mode: Mode::Gmi,
            order,
            sample_set_size: 32 * order,
            batch: BatchPolicy::Adaptive(AdaptiveBatchConfig {
                initial: order,
                delta: 1e-3,
                patience: 10,
            }),
            epochs: 1000,
            validation_every: 5,
            validation_symbols: 10_000,
            learning_rate: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.sample_set_size == 0 || self.epochs == 0 || self.validation_every == 0 || self.validation_symbols == 0 {
            return bad("sample set, epochs, validation cadence and symbols must be >= 1".into());
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate {} must be finite and >= 0", self.learning_rate));
        }
        if self.mode == Mode::Gmi && self.sample_set_size % self.order != 0 {
            return bad(format!("balanced sample set {} is not a multiple of M = {}", self.sample_set_size, self.order));
        }
        let b = match &self.batch {
            BatchPolicy::Fixed(b) => *b,
            BatchPolicy::Adaptive(a) => {
                if a.patience == 0 || !(a.delta >= 0.0) {
                    return bad("adaptive batch needs patience >= 1 and delta >= 0".into());
                }
                a.initial
            }
        };
        if b == 0 || self.sample_set_size % b != 0 {
            return bad(format!("batch size {b} does not divide the sample set {}", self.sample_set_size));
        }
        Ok(())
    }

    pub fn initial_batch(&self) -> usize {
        match &self.batch {
            BatchPolicy::Fixed(b) => *b,
            BatchPolicy::Adaptive(a) => a.initial,
        }
    }
}

/// Symbol indices of one epoch: i.i.d. uniform draws in MI mode; every
/// index exactly `n / M` times, shuffled, in GMI mode.
pub fn make_sample_set(mode: Mode, order: usize, n: usize, rng: &mut SimRng) -> Vec<usize> {
    match mode {
        Mode::Mi => (0..n).map(|_| rng::uniform_index(rng, order)).collect(),
        Mode::Gmi => {
            let mut v: Vec<usize> = (0..n).map(|k| k % order).collect();
            v.shuffle(rng);
            v
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchDecision {
    Keep(usize),
    Doubled(usize),
    Stop,
}

/// Batch size change at the end of `epoch`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct BatchEvent {
    pub epoch: usize,
    pub batch_size: usize,
}

/// Plateau detector driving the adaptive batch size.
#[derive(Clone, Debug)]
pub struct AdaptiveBatch {
    batch: usize,
    max: usize,
    delta: f64,
    patience: usize,
    best: f64,
    stale: usize,
    stopped: bool,
    pub events: Vec<BatchEvent>,
}

impl AdaptiveBatch {
    pub fn new(cfg: &AdaptiveBatchConfig, sample_set_size: usize) -> Self {
        Self {
            batch: cfg.initial,
            max: sample_set_size,
            delta: cfg.delta,
            patience: cfg.patience,
            best: f64::INFINITY,
            stale: 0,
            stopped: false,
            events: Vec::new(),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    /// Feeds the validation loss of `epoch`.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> BatchDecision {
        if self.stopped {
            return BatchDecision::Stop;
        }
        if loss < self.best - self.delta {
            self.best = loss;
            self.stale = 0;
            return BatchDecision::Keep(self.batch);
        }
        self.best = self.best.min(loss);
        self.stale += 1;
        if self.stale < self.patience {
            return BatchDecision::Keep(self.batch);
        }
        self.stale = 0;
        if self.batch >= self.max {
            self.stopped = true;
            return BatchDecision::Stop;
        }
        self.batch = (self.batch * 2).min(self.max);
        self.events.push(BatchEvent {
            epoch,
            batch_size: self.batch,
        });
        BatchDecision::Doubled(self.batch)
    }
}
