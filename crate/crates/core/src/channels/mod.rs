//! Channel models between the encoder and the decoder.
//!
//! Every model maps a batch of transmitted symbols to received symbols in the
//! normalized (unit mean power) domain. Models that admit one also provide an
//! adjoint: given `dL/dy` for a real loss `L` it returns `dL/dx` for the
//! transmitted symbols and `dL/dc` for the constellation points the channel
//! depends on (through moments, converter range or interfering tributaries).
//! Complex gradients are stored as `dL/dRe + i dL/dIm`.

mod awgn;
mod nlin;
mod quantizer;
mod rrc;
mod ssfm;
mod wdm;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub use awgn::{awgn, AwgnChannel};
pub use nlin::{
    calibrate_nlin, nlin_channel, nlin_variance, total_noise_variance, NlinCalibration, NlinChannel, NlinParams,
    NlinTape,
};
pub use quantizer::{peak_amplitude, quantize, QuantizerMode, QuantizerParams};
pub use rrc::{raised_cosine_spectrum, rrc_taps};
pub use ssfm::{ssfm_adjoint, ssfm_propagate, ComplexSignal, FiberLinkParams, SsfmCheckpoints};
pub use wdm::{
    derotate, wdm_receiver, wdm_receiver_adjoint, wdm_transmitter, wdm_transmitter_adjoint, ReceivedSymbols,
    SsfmChannel, SsfmTape,
};

use crate::rng::SimRng;
use crate::{Cplx, Error, Result, Scalar};

/// Run-scoped count of channel propagations. Clones share the tally.
#[derive(Clone, Debug, Default)]
pub struct PropagationCounter(Arc<AtomicU64>);

impl PropagationCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn increment(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.0.store(0, Ordering::Relaxed);
    }
}

/// Gradients returned by [`Channel::adjoint`].
#[derive(Clone, Debug)]
pub struct ChannelGrads<T> {
    /// One entry per transmitted symbol.
    pub symbols: Vec<Cplx<T>>,
    /// One entry per constellation point.
    pub constellation: Vec<Cplx<T>>,
}

pub trait Channel<T: Scalar>: Sync {
    /// Whatever the adjoint needs to replay the forward pass.
    type Tape: Send;

    /// Transmits `symbols` (normalized) drawn from `constellation` without
    /// touching the propagation counter.
    fn forward(
        &self,
        symbols: &[Cplx<T>],
        constellation: &[Cplx<T>],
        rng: &mut SimRng,
    ) -> Result<(Vec<Cplx<T>>, Self::Tape)>;

    /// [`Channel::forward`] counted as one channel use.
    fn propagate(
        &self,
        symbols: &[Cplx<T>],
        constellation: &[Cplx<T>],
        rng: &mut SimRng,
    ) -> Result<(Vec<Cplx<T>>, Self::Tape)> {
        self.counter().increment();
        self.forward(symbols, constellation, rng)
    }

    /// Uncounted forward pass for validation and testing.
    fn evaluate(&self, symbols: &[Cplx<T>], constellation: &[Cplx<T>], rng: &mut SimRng) -> Result<Vec<Cplx<T>>> {
        Ok(self.forward(symbols, constellation, rng)?.0)
    }

    fn has_adjoint(&self) -> bool {
        false
    }

    fn adjoint(&self, _tape: &Self::Tape, _grad_y: &[Cplx<T>]) -> Result<ChannelGrads<T>> {
        Err(Error::NoAdjoint(self.name().to_string()))
    }

    fn counter(&self) -> &PropagationCounter;

    fn name(&self) -> &'static str;
}

/// The built-in channels behind one type.
#[derive(Clone, Debug)]
pub enum ChannelModel {
    Awgn(AwgnChannel),
    Nlin(NlinChannel),
    Ssfm(SsfmChannel),
}

pub enum ChannelTape<T> {
    Awgn(usize),
    Nlin(NlinTape<T>),
    Ssfm(Box<SsfmTape<T>>),
}

impl<T: Scalar> Channel<T> for ChannelModel {
    type Tape = ChannelTape<T>;

    fn forward(
        &self,
        symbols: &[Cplx<T>],
        constellation: &[Cplx<T>],
        rng: &mut SimRng,
    ) -> Result<(Vec<Cplx<T>>, Self::Tape)> {
        Ok(match self {
            ChannelModel::Awgn(c) => {
                let (y, t) = c.forward(symbols, constellation, rng)?;
                (y, ChannelTape::Awgn(t))
            }
            ChannelModel::Nlin(c) => {
                let (y, t) = c.forward(symbols, constellation, rng)?;
                (y, ChannelTape::Nlin(t))
            }
            ChannelModel::Ssfm(c) => {
                let (y, t) = c.forward(symbols, constellation, rng)?;
                (y, ChannelTape::Ssfm(Box::new(t)))
            }
        })
    }

    fn has_adjoint(&self) -> bool {
        match self {
            ChannelModel::Awgn(c) => Channel::<T>::has_adjoint(c),
            ChannelModel::Nlin(c) => Channel::<T>::has_adjoint(c),
            ChannelModel::Ssfm(c) => Channel::<T>::has_adjoint(c),
        }
    }

    fn adjoint(&self, tape: &Self::Tape, grad_y: &[Cplx<T>]) -> Result<ChannelGrads<T>> {
        match (self, tape) {
            (ChannelModel::Awgn(c), ChannelTape::Awgn(t)) => c.adjoint(t, grad_y),
            (ChannelModel::Nlin(c), ChannelTape::Nlin(t)) => c.adjoint(t, grad_y),
            (ChannelModel::Ssfm(c), ChannelTape::Ssfm(t)) => c.adjoint(t, grad_y),
            _ => Err(Error::InvalidParameter("tape from a different channel".into())),
        }
    }

    fn counter(&self) -> &PropagationCounter {
        match self {
            ChannelModel::Awgn(c) => Channel::<T>::counter(c),
            ChannelModel::Nlin(c) => Channel::<T>::counter(c),
            ChannelModel::Ssfm(c) => Channel::<T>::counter(c),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            ChannelModel::Awgn(c) => Channel::<T>::name(c),
            ChannelModel::Nlin(c) => Channel::<T>::name(c),
            ChannelModel::Ssfm(c) => Channel::<T>::name(c),
        }
    }
}

/// Adds `grads` for symbols drawn at `indices` into per-point gradients.
pub(crate) fn scatter_add<T: Scalar>(acc: &mut [Cplx<T>], indices: &[usize], grads: &[Cplx<T>]) {
    for (&i, g) in indices.iter().zip(grads) {
        acc[i] += *g;
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { what, expected, actual });
    }
    Ok(())
}

/// Launch power conversion.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w / 1e-3).log10()
}
