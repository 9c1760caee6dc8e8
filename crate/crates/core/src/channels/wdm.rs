use std::f64::consts::PI;

use super::rrc::raised_cosine_spectrum;
use super::ssfm::{bin_frequency, ssfm_adjoint, ssfm_propagate, Spectral};
use super::{
    check_len, dbm_to_watts, scatter_add, Channel, ChannelGrads, ComplexSignal, FiberLinkParams,
    PropagationCounter, SsfmCheckpoints,
};
use crate::rng::{self, SimRng};
use crate::{Cplx, Error, Result, Scalar};

/// Per-polarization amplitude for a per-channel launch power.
fn pol_amplitude(lp: &FiberLinkParams, launch_power_w: f64) -> f64 {
    (launch_power_w / lp.n_pol as f64).sqrt()
}

/// Occupied bins of one channel: signed bin offset and `sqrt(R(f))`.
fn pulse_bins(lp: &FiberLinkParams, n_symbols: usize) -> Vec<(i64, f64)> {
    let kmax = ((1.0 + lp.rrc_rolloff) * n_symbols as f64 / 2.0).ceil() as i64;
    (-kmax..=kmax)
        .filter_map(|k| {
            let r = raised_cosine_spectrum(k as f64 * lp.symbol_rate / n_symbols as f64, lp.symbol_rate, lp.rrc_rolloff);
            (r > 0.0).then(|| (k, r.sqrt()))
        })
        .collect()
}

/// Bin shift placing each WDM channel at its centre frequency.
fn channel_shifts(lp: &FiberLinkParams, n_symbols: usize) -> Vec<i64> {
    let df = lp.symbol_rate / n_symbols as f64;
    lp.channel_offsets().iter().map(|f| (f / df).round() as i64).collect()
}

fn check_layout(lp: &FiberLinkParams, n_symbols: usize) -> Result<(Vec<(i64, f64)>, Vec<i64>)> {
    lp.validate()?;
    if n_symbols == 0 {
        return Err(Error::EmptyInput("symbols"));
    }
    let bins = pulse_bins(lp, n_symbols);
    let shifts = channel_shifts(lp, n_symbols);
    let n = (n_symbols * lp.sps) as i64;
    let kmax = bins.iter().map(|b| b.0.abs()).max().unwrap_or(0);
    let reach = shifts.iter().map(|s| s.abs()).max().unwrap_or(0) + kmax;
    if 2 * reach >= n {
        return Err(Error::Aliasing {
            needed_hz: 2.0 * reach as f64 * lp.symbol_rate / n_symbols as f64,
            available_hz: lp.sample_rate(),
        });
    }
    Ok((bins, shifts))
}

fn bin_index(k: i64, n: usize) -> usize {
    k.rem_euclid(n as i64) as usize
}

/// Root-raised-cosine pulse shaping of every tributary (`[channel][pol]`,
/// equal lengths), scaling to `launch_power_w` per channel and WDM
/// multiplexing. Shaping is done on the periodic block in the frequency
/// domain, so the matched receiver is exactly Nyquist.
pub fn wdm_transmitter<T: Scalar>(
    tributaries: &[Vec<Vec<Cplx<T>>>],
    lp: &FiberLinkParams,
    launch_power_w: f64,
) -> Result<ComplexSignal<T>> {
    check_len("WDM channels", lp.wdm_channels, tributaries.len())?;
    let n_sym = tributaries.first().and_then(|t| t.first()).map_or(0, |s| s.len());
    let (bins, shifts) = check_layout(lp, n_sym)?;
    for t in tributaries {
        check_len("tributary polarizations", lp.n_pol, t.len())?;
        for s in t {
            check_len("tributary symbols", n_sym, s.len())?;
        }
    }
    let n = n_sym * lp.sps;
    let amp = T::of(pol_amplitude(lp, launch_power_w) * lp.sps as f64);
    let mut small = Spectral::<T>::new(n_sym);
    let mut big = Spectral::<T>::new(n);
    let mut pols = vec![vec![Cplx::new(T::zero(), T::zero()); n]; lp.n_pol];
    for (t, &shift) in tributaries.iter().zip(&shifts) {
        for (p, s) in t.iter().enumerate() {
            let mut spec = s.clone();
            small.forward(&mut spec);
            for &(k, h) in &bins {
                pols[p][bin_index(k + shift, n)] += spec[bin_index(k, n_sym)].scale(amp * T::of(h));
            }
        }
    }
    for p in pols.iter_mut() {
        big.inverse(p);
    }
    Ok(ComplexSignal {
        pols,
        sps: lp.sps,
        sample_rate: lp.sample_rate(),
        reference_power: launch_power_w,
    })
}

/// Gradient with respect to every tributary symbol given the gradient with
/// respect to the launched field.
pub fn wdm_transmitter_adjoint<T: Scalar>(
    grad: &ComplexSignal<T>,
    lp: &FiberLinkParams,
    n_symbols: usize,
) -> Result<Vec<Vec<Vec<Cplx<T>>>>> {
    let (bins, shifts) = check_layout(lp, n_symbols)?;
    let n = n_symbols * lp.sps;
    check_len("field samples", n, grad.len())?;
    let amp = T::of(pol_amplitude(lp, grad.reference_power));
    let mut small = Spectral::<T>::new(n_symbols);
    let mut big = Spectral::<T>::new(n);
    let spectra: Vec<Vec<Cplx<T>>> = grad
        .pols
        .iter()
        .map(|p| {
            let mut s = p.clone();
            big.forward(&mut s);
            s
        })
        .collect();
    let mut out = Vec::with_capacity(lp.wdm_channels);
    for &shift in &shifts {
        let mut per_pol = Vec::with_capacity(lp.n_pol);
        for spec in &spectra {
            let mut g = vec![Cplx::new(T::zero(), T::zero()); n_symbols];
            for &(k, h) in &bins {
                g[bin_index(k, n_symbols)] += spec[bin_index(k + shift, n)].scale(T::of(h));
            }
            small.inverse(&mut g);
            g.iter_mut().for_each(|v| *v = v.scale(amp));
            per_pol.push(g);
        }
        out.push(per_pol);
    }
    Ok(out)
}

fn cd_inverse<T: Scalar>(lp: &FiberLinkParams, n: usize) -> Vec<Cplx<T>> {
    let l = lp.span_length * lp.n_spans as f64;
    (0..n)
        .map(|k| {
            let w = 2.0 * PI * bin_frequency(k, n, lp.sample_rate());
            Cplx::from_polar(T::one(), T::of(-lp.beta2() * w * w * l / 2.0))
        })
        .collect()
}

/// Central-channel symbols before and after static phase de-rotation.
#[derive(Clone, Debug)]
pub struct ReceivedSymbols<T> {
    /// De-rotated, per polarization.
    pub pols: Vec<Vec<Cplx<T>>>,
    /// Matched-filter output before de-rotation.
    pub raw: Vec<Vec<Cplx<T>>>,
    /// Removed phase per polarization.
    pub phases: Vec<T>,
}

/// Full-band CD compensation, central-channel matched filter, downsampling,
/// rescaling by the launch amplitude, and per-polarization phase de-rotation
/// by `arg sum(y x*)` against the transmitted `reference` symbols.
pub fn wdm_receiver<T: Scalar>(
    rx: &ComplexSignal<T>,
    lp: &FiberLinkParams,
    reference: &[Vec<Cplx<T>>],
) -> Result<ReceivedSymbols<T>> {
    rx.validate()?;
    check_len("reference polarizations", lp.n_pol, reference.len())?;
    check_len("signal polarizations", lp.n_pol, rx.pols.len())?;
    let n_sym = rx.len() / lp.sps;
    check_len("signal samples", n_sym * lp.sps, rx.len())?;
    let (bins, shifts) = check_layout(lp, n_sym)?;
    let shift = shifts[lp.central_channel()];
    let n = rx.len();
    let cd = cd_inverse::<T>(lp, n);
    let scale = T::of(1.0 / (pol_amplitude(lp, rx.reference_power) * lp.sps as f64));
    let mut small = Spectral::<T>::new(n_sym);
    let mut big = Spectral::<T>::new(n);
    let mut raw = Vec::with_capacity(lp.n_pol);
    for p in &rx.pols {
        let mut spec = p.clone();
        big.forward(&mut spec);
        let mut x = vec![Cplx::new(T::zero(), T::zero()); n_sym];
        for &(k, h) in &bins {
            let i = bin_index(k + shift, n);
            x[bin_index(k, n_sym)] += (spec[i] * cd[i]).scale(T::of(h));
        }
        small.inverse(&mut x);
        x.iter_mut().for_each(|v| *v = v.scale(scale));
        raw.push(x);
    }
    let mut pols = Vec::with_capacity(lp.n_pol);
    let mut phases = Vec::with_capacity(lp.n_pol);
    for (x, r) in raw.iter().zip(reference) {
        let (y, phi) = derotate(x, r)?;
        pols.push(y);
        phases.push(phi);
    }
    Ok(ReceivedSymbols { pols, raw, phases })
}

/// Gradient with respect to the received field given gradients with respect
/// to the raw (pre-de-rotation) symbols of each polarization.
pub fn wdm_receiver_adjoint<T: Scalar>(
    grad_raw: &[Vec<Cplx<T>>],
    lp: &FiberLinkParams,
    launch_power_w: f64,
) -> Result<ComplexSignal<T>> {
    check_len("gradient polarizations", lp.n_pol, grad_raw.len())?;
    let n_sym = grad_raw[0].len();
    let (bins, shifts) = check_layout(lp, n_sym)?;
    let shift = shifts[lp.central_channel()];
    let n = n_sym * lp.sps;
    let cd = cd_inverse::<T>(lp, n);
    let scale = T::of(1.0 / pol_amplitude(lp, launch_power_w));
    let mut small = Spectral::<T>::new(n_sym);
    let mut big = Spectral::<T>::new(n);
    let mut pols = Vec::with_capacity(lp.n_pol);
    for g in grad_raw {
        check_len("gradient symbols", n_sym, g.len())?;
        let mut gs = g.clone();
        small.forward(&mut gs);
        let mut spec = vec![Cplx::new(T::zero(), T::zero()); n];
        for &(k, h) in &bins {
            let i = bin_index(k + shift, n);
            spec[i] += (gs[bin_index(k, n_sym)] * cd[i].conj()).scale(T::of(h));
        }
        big.inverse(&mut spec);
        spec.iter_mut().for_each(|v| *v = v.scale(scale));
        pols.push(spec);
    }
    Ok(ComplexSignal {
        pols,
        sps: lp.sps,
        sample_rate: lp.sample_rate(),
        reference_power: launch_power_w,
    })
}

/// Removes `arg sum(y x*)` from `y`.
pub fn derotate<T: Scalar>(y: &[Cplx<T>], x: &[Cplx<T>]) -> Result<(Vec<Cplx<T>>, T)> {
    check_len("reference symbols", y.len(), x.len())?;
    let z: Cplx<T> = y.iter().zip(x).map(|(a, b)| a * b.conj()).sum();
    let phi = z.arg();
    let rot = Cplx::from_polar(T::one(), -phi);
    Ok((y.iter().map(|v| v * rot).collect(), phi))
}

/// Adjoint of [`derotate`] including the dependence of the phase estimate on
/// both `y` and `x`. Returns `(dL/dy, dL/dx)`.
fn derotate_adjoint<T: Scalar>(y: &[Cplx<T>], x: &[Cplx<T>], phi: T, g: &[Cplx<T>]) -> (Vec<Cplx<T>>, Vec<Cplx<T>>) {
    let rot = Cplx::from_polar(T::one(), -phi);
    let z: Cplx<T> = y.iter().zip(x).map(|(a, b)| a * b.conj()).sum();
    let z2 = z.norm_sqr();
    // dL/dphi with the output o = y e^{-i phi}
    let dphi: T = g.iter().zip(y).map(|(gk, yk)| (gk.conj() * (yk * rot)).im).sum();
    let i = Cplx::new(T::zero(), T::one());
    let gy = g
        .iter()
        .zip(x)
        .map(|(gk, xk)| gk * rot.conj() + (i * z * xk).scale(dphi / z2))
        .collect();
    let gx = y.iter().map(|yk| (-i * z.conj() * yk).scale(dphi / z2)).collect();
    (gy, gx)
}

/// Split-step WDM link as a trainable channel. The transmitted symbols form
/// the first polarization of the central channel; every other tributary
/// draws uniformly from the same constellation.
#[derive(Clone, Debug)]
pub struct SsfmChannel {
    pub link: FiberLinkParams,
    pub launch_power_dbm: f64,
    /// Steps between stored fields for the adjoint.
    pub checkpoint_every: usize,
    counter: PropagationCounter,
}

pub struct SsfmTape<T> {
    /// Constellation index of every tributary; `None` for the trained one.
    indices: Vec<Vec<Option<Vec<usize>>>>,
    symbols: Vec<Cplx<T>>,
    raw: Vec<Cplx<T>>,
    phase: T,
    order: usize,
    checkpoints: SsfmCheckpoints<T>,
}

impl<T> SsfmTape<T> {
    pub fn checkpoints(&self) -> &SsfmCheckpoints<T> {
        &self.checkpoints
    }
}

impl SsfmChannel {
    pub fn new(link: FiberLinkParams, launch_power_dbm: f64) -> Result<Self> {
        link.validate()?;
        let every = 10.min(link.total_steps()).max(1);
        Ok(Self {
            link,
            launch_power_dbm,
            checkpoint_every: every,
            counter: PropagationCounter::new(),
        })
    }

    pub fn with_counter(mut self, counter: PropagationCounter) -> Self {
        self.counter = counter;
        self
    }

    pub fn launch_power_w(&self) -> f64 {
        dbm_to_watts(self.launch_power_dbm)
    }
}

impl<T: Scalar> Channel<T> for SsfmChannel {
    type Tape = SsfmTape<T>;

    fn forward(
        &self,
        symbols: &[Cplx<T>],
        constellation: &[Cplx<T>],
        rng: &mut SimRng,
    ) -> Result<(Vec<Cplx<T>>, SsfmTape<T>)> {
        if constellation.is_empty() {
            return Err(Error::EmptyInput("constellation"));
        }
        let lp = &self.link;
        let centre = lp.central_channel();
        let n = symbols.len();
        let mut indices = Vec::with_capacity(lp.wdm_channels);
        let mut tribs = Vec::with_capacity(lp.wdm_channels);
        for w in 0..lp.wdm_channels {
            let mut idx_w = Vec::with_capacity(lp.n_pol);
            let mut sym_w = Vec::with_capacity(lp.n_pol);
            for p in 0..lp.n_pol {
                if w == centre && p == 0 {
                    idx_w.push(None);
                    sym_w.push(symbols.to_vec());
                } else {
                    let idx: Vec<usize> = (0..n).map(|_| rng::uniform_index(rng, constellation.len())).collect();
                    sym_w.push(idx.iter().map(|&i| constellation[i]).collect());
                    idx_w.push(Some(idx));
                }
            }
            indices.push(idx_w);
            tribs.push(sym_w);
        }
        let tx = wdm_transmitter(&tribs, lp, self.launch_power_w())?;
        let (rx, checkpoints) = ssfm_propagate(&tx, lp, rng, self.checkpoint_every)?;
        let reference = std::mem::take(&mut tribs[centre]);
        let mut out = wdm_receiver(&rx, lp, &reference)?;
        let y = out.pols.swap_remove(0);
        let tape = SsfmTape {
            indices,
            symbols: symbols.to_vec(),
            raw: out.raw.swap_remove(0),
            phase: out.phases[0],
            order: constellation.len(),
            checkpoints,
        };
        Ok((y, tape))
    }

    fn has_adjoint(&self) -> bool {
        true
    }

    fn adjoint(&self, tape: &SsfmTape<T>, grad_y: &[Cplx<T>]) -> Result<ChannelGrads<T>> {
        let lp = &self.link;
        let n = tape.symbols.len();
        check_len("channel output gradient", n, grad_y.len())?;
        let (g_raw, mut g_sym) = derotate_adjoint(&tape.raw, &tape.symbols, tape.phase, grad_y);
        let mut grads = vec![g_raw];
        grads.resize(lp.n_pol, vec![Cplx::new(T::zero(), T::zero()); n]);
        let g_rx = wdm_receiver_adjoint(&grads, lp, self.launch_power_w())?;
        let g_tx = ssfm_adjoint(&tape.checkpoints, lp, &g_rx)?;
        let g_trib = wdm_transmitter_adjoint(&g_tx, lp, n)?;
        let mut grad_c = vec![Cplx::new(T::zero(), T::zero()); tape.order];
        for (idx_w, g_w) in tape.indices.iter().zip(&g_trib) {
            for (idx, g) in idx_w.iter().zip(g_w) {
                match idx {
                    Some(idx) => scatter_add(&mut grad_c, idx, g),
                    None => g_sym.iter_mut().zip(g).for_each(|(a, b)| *a += *b),
                }
            }
        }
        Ok(ChannelGrads {
            symbols: g_sym,
            constellation: grad_c,
        })
    }

    fn counter(&self) -> &PropagationCounter {
        &self.counter
    }

    fn name(&self) -> &'static str {
        "ssfm"
    }
}
