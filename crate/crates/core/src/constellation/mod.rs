//! Constellations, bit labelings and moments.
//!
//! Point `i` of a square QAM sits at row-major grid position `i` (row 0 on
//! top). Learned constellations keep the encoder input order.

mod labeling;
mod lut;

pub use labeling::{gray_labeling, BitLabeling};
pub use lut::{load_lut, lut_to_string, parse_lut, save_lut, LoadedLut, LUT_HEADER};

use num_traits::Float;

use crate::{Cplx, Error, Result, Scalar};

/// `M = 2^m` complex points with unit mean power under uniform probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Constellation<T> {
    points: Vec<Cplx<T>>,
    bits_per_symbol: usize,
}

/// Standardized fourth and sixth moments of a constellation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moments<T> {
    pub mu4: T,
    pub mu6: T,
}

pub(crate) fn log2_order(order: usize) -> Result<usize> {
    if order < 2 || !order.is_power_of_two() {
        return Err(Error::InvalidOrder(order, "must be a power of two >= 2"));
    }
    Ok(order.trailing_zeros() as usize)
}

pub(crate) fn mean_power<T: Scalar>(points: &[Cplx<T>]) -> T {
    let sum: T = points.iter().map(|p| p.norm_sqr()).sum();
    sum / T::of_usize(points.len())
}

impl<T: Scalar> Constellation<T> {
    /// Validates and normalizes `points`; same as [`normalize`].
    pub fn new(points: Vec<Cplx<T>>) -> Result<Self> {
        normalize(&points)
    }

    pub fn points(&self) -> &[Cplx<T>] {
        &self.points
    }

    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn mean_power(&self) -> T {
        mean_power(&self.points)
    }

    /// Applies `f` to every point and renormalizes.
    pub fn map(&self, f: impl Fn(Cplx<T>) -> Cplx<T>) -> Result<Self> {
        let pts: Vec<_> = self.points.iter().map(|&p| f(p)).collect();
        normalize(&pts)
    }

    /// Rotates every point by `phase` radians. Unit power is preserved.
    pub fn rotated(&self, phase: T) -> Self {
        let r = Cplx::from_polar(T::one(), phase);
        Self {
            points: self.points.iter().map(|&p| p * r).collect(),
            bits_per_symbol: self.bits_per_symbol,
        }
    }

    /// Converts the scalar type without renormalizing.
    pub fn cast<U: Scalar>(&self) -> Constellation<U> {
        Constellation {
            points: self
                .points
                .iter()
                .map(|p| Cplx::new(U::of(p.re.to_f64_lossy()), U::of(p.im.to_f64_lossy())))
                .collect(),
            bits_per_symbol: self.bits_per_symbol,
        }
    }

    /// Minimum pairwise Euclidean distance.
    pub fn min_distance(&self) -> T {
        let mut best = T::infinity();
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.min((a - b).norm());
            }
        }
        best
    }
}

/// Scales `points` to unit mean power. The relative geometry is unchanged.
pub fn normalize<T: Scalar>(points: &[Cplx<T>]) -> Result<Constellation<T>> {
    let bits_per_symbol = log2_order(points.len())?;
    if points.iter().any(|p| !p.re.is_finite() || !p.im.is_finite()) {
        return Err(Error::NonFinite("constellation points"));
    }
    let p = mean_power(points);
    if p <= T::zero() {
        return Err(Error::ZeroConstellation);
    }
    let s = Float::sqrt(p);
    Ok(Constellation {
        points: points.iter().map(|&x| x.unscale(s)).collect(),
        bits_per_symbol,
    })
}

/// `mu4 = E|X|^4 / (E|X|^2)^2` and `mu6 = E|X|^6 / (E|X|^2)^3` for uniform
/// symbol probabilities.
pub fn moments<T: Scalar>(c: &Constellation<T>) -> Moments<T> {
    moments_of(c.points())
}

pub(crate) fn moments_of<T: Scalar>(points: &[Cplx<T>]) -> Moments<T> {
    let n = T::of_usize(points.len());
    let (mut m2, mut m4, mut m6) = (T::zero(), T::zero(), T::zero());
    for p in points {
        let a = p.norm_sqr();
        m2 += a;
        m4 += a * a;
        m6 += a * a * a;
    }
    m2 /= n;
    m4 /= n;
    m6 /= n;
    Moments {
        mu4: m4 / (m2 * m2),
        mu6: m6 / (m2 * m2 * m2),
    }
}

/// Gray-labeled square QAM of order `order`, normalized to unit mean power.
pub fn square_qam<T: Scalar>(order: usize) -> Result<(Constellation<T>, BitLabeling)> {
    let m = log2_order(order)?;
    if m % 2 != 0 {
        return Err(Error::InvalidOrder(order, "square QAM needs an even number of bits"));
    }
    let side = 1usize << (m / 2);
    let half = T::of_usize(side - 1);
    let two = T::of(2.0);
    let points: Vec<Cplx<T>> = (0..order)
        .map(|i| {
            let (row, col) = (i / side, i % side);
            Cplx::new(two * T::of_usize(col) - half, half - two * T::of_usize(row))
        })
        .collect();
    Ok((normalize(&points)?, gray_labeling(order)?))
}
