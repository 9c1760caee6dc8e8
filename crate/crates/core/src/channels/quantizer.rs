use num_traits::Float;

use crate::rng::{self, SimRng};
use crate::{Cplx, Error, Result, Scalar};

/// Headroom of the converter range over the largest constellation coordinate.
pub const PEAK_FACTOR: f64 = 1.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantizerMode {
    /// Uniform noise on `±A/2^(ENOB-1)` per axis.
    AdditiveUniformNoise,
    /// Mid-rise quantizer with `2^ENOB` levels over `[-A, A]`.
    HardQuantizer,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizerParams {
    pub enob: u32,
    /// `(I peak, Q peak)` in normalized amplitude.
    pub a_peak: [f64; 2],
    pub mode: QuantizerMode,
}

impl QuantizerParams {
    pub fn new(enob: u32, a_peak: [f64; 2], mode: QuantizerMode) -> Result<Self> {
        if enob < 1 {
            return Err(Error::InvalidParameter("ENOB must be >= 1".into()));
        }
        if !a_peak.iter().all(|a| *a > 0.0 && a.is_finite()) {
            return Err(Error::InvalidParameter(format!("peak amplitude {a_peak:?} must be > 0")));
        }
        Ok(Self { enob, a_peak, mode })
    }

    /// Half-width of the additive noise support per axis.
    pub fn noise_half_width(&self) -> [f64; 2] {
        let d = 2f64.powi(self.enob as i32 - 1);
        [self.a_peak[0] / d, self.a_peak[1] / d]
    }
}

/// Converter range `1.2 * (max |Re c|, max |Im c|)` and the indices of the
/// points attaining each maximum.
pub(crate) fn peak_amplitude_with_argmax<T: Scalar>(points: &[Cplx<T>]) -> Result<([f64; 2], [usize; 2])> {
    if points.is_empty() {
        return Err(Error::EmptyInput("constellation"));
    }
    let mut best = [(0.0f64, 0usize); 2];
    for (i, p) in points.iter().enumerate() {
        for (axis, v) in [p.re, p.im].into_iter().enumerate() {
            let a = Float::abs(v).to_f64_lossy();
            if a > best[axis].0 {
                best[axis] = (a, i);
            }
        }
    }
    Ok((
        [PEAK_FACTOR * best[0].0, PEAK_FACTOR * best[1].0],
        [best[0].1, best[1].1],
    ))
}

/// `1.2 * (max |Re c|, max |Im c|)` over the constellation points.
pub fn peak_amplitude<T: Scalar>(points: &[Cplx<T>]) -> Result<[f64; 2]> {
    Ok(peak_amplitude_with_argmax(points)?.0)
}

/// Draws the `U(-1, 1)` variates of one additive stage.
pub(crate) fn uniform_draws<T: Scalar>(n: usize, rng: &mut SimRng) -> Vec<Cplx<T>> {
    (0..n)
        .map(|_| {
            let re = rng::uniform_symmetric(rng);
            let im = rng::uniform_symmetric(rng);
            Cplx::new(T::of(re), T::of(im))
        })
        .collect()
}

fn hard_axis(v: f64, a: f64, levels: f64) -> f64 {
    let step = 2.0 * a / levels;
    let k = (v / step).floor().clamp(-levels / 2.0, levels / 2.0 - 1.0);
    (k + 0.5) * step
}

/// One converter stage.
pub fn quantize<T: Scalar>(x: &[Cplx<T>], qp: &QuantizerParams, rng: &mut SimRng) -> Vec<Cplx<T>> {
    match qp.mode {
        QuantizerMode::AdditiveUniformNoise => {
            let [wr, wi] = qp.noise_half_width();
            let u = uniform_draws::<T>(x.len(), rng);
            x.iter()
                .zip(u)
                .map(|(v, n)| Cplx::new(v.re + T::of(wr) * n.re, v.im + T::of(wi) * n.im))
                .collect()
        }
        QuantizerMode::HardQuantizer => {
            let levels = 2f64.powi(qp.enob as i32);
            x.iter()
                .map(|v| {
                    Cplx::new(
                        T::of(hard_axis(v.re.to_f64_lossy(), qp.a_peak[0], levels)),
                        T::of(hard_axis(v.im.to_f64_lossy(), qp.a_peak[1], levels)),
                    )
                })
                .collect()
        }
    }
}
