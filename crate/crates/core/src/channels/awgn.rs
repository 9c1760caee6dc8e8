use super::{Channel, ChannelGrads, PropagationCounter};
use crate::rng::{self, SimRng};
use crate::{Cplx, Result, Scalar};

/// `y = x + n`, `n ~ CN(0, 10^(-snr/10))`.
pub fn awgn<T: Scalar>(x: &[Cplx<T>], snr_db: f64, rng: &mut SimRng) -> Vec<Cplx<T>> {
    let var = 10f64.powf(-snr_db / 10.0);
    x.iter().map(|&v| v + rng::complex_normal::<T>(rng, var)).collect()
}

#[derive(Clone, Debug)]
pub struct AwgnChannel {
    pub snr_db: f64,
    counter: PropagationCounter,
}

impl AwgnChannel {
    pub fn new(snr_db: f64) -> Self {
        Self {
            snr_db,
            counter: PropagationCounter::new(),
        }
    }

    pub fn with_counter(snr_db: f64, counter: PropagationCounter) -> Self {
        Self { snr_db, counter }
    }
}

impl<T: Scalar> Channel<T> for AwgnChannel {
    /// Constellation size.
    type Tape = usize;

    fn forward(&self, symbols: &[Cplx<T>], constellation: &[Cplx<T>], rng: &mut SimRng) -> Result<(Vec<Cplx<T>>, usize)> {
        Ok((awgn(symbols, self.snr_db, rng), constellation.len()))
    }

    fn has_adjoint(&self) -> bool {
        true
    }

    fn adjoint(&self, tape: &usize, grad_y: &[Cplx<T>]) -> Result<ChannelGrads<T>> {
        Ok(ChannelGrads {
            symbols: grad_y.to_vec(),
            constellation: vec![Cplx::new(T::zero(), T::zero()); *tape],
        })
    }

    fn counter(&self) -> &PropagationCounter {
        &self.counter
    }

    fn name(&self) -> &'static str {
        "awgn"
    }
}
