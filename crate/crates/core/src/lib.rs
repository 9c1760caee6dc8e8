//! Learned geometric constellation shaping for fiber-optic links.
//!
//! The crate is organized bottom-up:
//!
//! - [`constellation`]: point sets, bit labelings, moments and LUT files.
//! - [`metrics`]: MI/GMI lower bounds under a mismatched Gaussian receiver.
//! - [`neural`]: feed-forward encoder/decoder networks, losses, gradients and Adam.
//! - [`channels`]: AWGN, NLIN with DAC/ADC quantization, and a split-step
//!   Fourier WDM link with a checkpointed adjoint.
//! - [`trainers`]: backpropagation, policy-gradient and cubature Kalman filter
//!   training of the autoencoder.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`). The `*64`
//! aliases below fix the scalar to `f64`, which is what the CLI uses unless
//! told otherwise.

pub mod channels;
pub mod constellation;
mod error;
pub mod linalg;
pub mod metrics;
pub mod neural;
pub mod rng;
pub mod trainers;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use ndarray::NdFloat;
use num_traits::{FloatConst, FromPrimitive};
use rustfft::FftNum;

pub use error::{Error, Result};

/// Floating point scalar the numerical code is generic over.
///
/// Implemented for `f32` and `f64`. Note that both `num_traits::Float` and
/// `num_traits::Signed` provide `abs`, so generic code calls `Float::abs`.
pub trait Scalar:
    NdFloat
    + FloatConst
    + FromPrimitive
    + FftNum
    + FromStr
    + Default
    + Sum
    + for<'a> Sum<&'a Self>
    + Debug
    + Display
{
    /// Converts an `f64` constant. Never fails for `f32`/`f64`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable")
    }

    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize representable")
    }

    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Complex baseband sample.
pub type Cplx<T> = num_complex::Complex<T>;

pub type Constellation64 = constellation::Constellation<f64>;
pub type Constellation32 = constellation::Constellation<f32>;
pub type Moments64 = constellation::Moments<f64>;
pub type Mlp64 = neural::Mlp<f64>;
pub type Mlp32 = neural::Mlp<f32>;
pub type Autoencoder64 = neural::Autoencoder<f64>;
pub type Autoencoder32 = neural::Autoencoder<f32>;
pub type AdamState64 = neural::AdamState<f64>;
pub type ComplexSignal64 = channels::ComplexSignal<f64>;
pub type CkfState64 = trainers::CkfState<f64>;
