use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rustfft::{Fft, FftPlanner};

use crate::rng::{self, SimRng};
use crate::{Cplx, Error, Result, Scalar};

const PLANCK: f64 = 6.626_070_15e-34;
const LIGHT_SPEED: f64 = 299_792_458.0;

/// Link and simulation parameters. Frequencies in Hz, lengths in km,
/// `gamma` in 1/(W km), `dispersion` in ps/(nm km), attenuation in dB/km.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberLinkParams {
    pub symbol_rate: f64,
    pub carrier_freq: f64,
    pub wdm_channels: usize,
    pub channel_spacing: f64,
    pub n_pol: usize,
    pub n_spans: usize,
    pub span_length: f64,
    pub gamma: f64,
    pub dispersion: f64,
    pub alpha: f64,
    pub noise_figure: f64,
    pub sps: usize,
    pub step_size: f64,
    pub rrc_rolloff: f64,
    /// Inject amplifier noise after every span.
    #[serde(default = "yes")]
    pub ase: bool,
}

fn yes() -> bool {
    true
}

impl FiberLinkParams {
    /// 10 x 100 km, 5 WDM channels, 16 samples per symbol, 100 m steps.
    pub fn reference() -> Self {
        Self {
            symbol_rate: 32e9,
            carrier_freq: 193.41e12,
            wdm_channels: 5,
            channel_spacing: 50e9,
            n_pol: 2,
            n_spans: 10,
            span_length: 100.0,
            gamma: 1.3,
            dispersion: 16.464,
            alpha: 0.2,
            noise_figure: 5.0,
            sps: 16,
            step_size: 0.1,
            rrc_rolloff: 0.01,
            ase: true,
        }
    }

    /// Reduced link for pre-training: 5 spans, 3 channels, 8 samples per
    /// symbol, 10 km steps.
    pub fn pretrain() -> Self {
        Self {
            n_spans: 5,
            wdm_channels: 3,
            sps: 8,
            step_size: 10.0,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("symbol_rate", self.symbol_rate),
            ("carrier_freq", self.carrier_freq),
            ("channel_spacing", self.channel_spacing),
            ("span_length", self.span_length),
            ("step_size", self.step_size),
            ("rrc_rolloff", self.rrc_rolloff),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be > 0")));
            }
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("dispersion", self.dispersion),
            ("alpha", self.alpha),
            ("noise_figure", self.noise_figure),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be finite and >= 0")));
            }
        }
        if self.rrc_rolloff > 1.0 {
            return Err(Error::InvalidParameter("rrc_rolloff must be <= 1".into()));
        }
        if self.sps < 2 {
            return Err(Error::InvalidParameter(format!("sps = {} must be >= 2", self.sps)));
        }
        if !(1..=2).contains(&self.n_pol) {
            return Err(Error::InvalidParameter(format!("n_pol = {} must be 1 or 2", self.n_pol)));
        }
        if self.wdm_channels == 0 || self.n_spans == 0 {
            return Err(Error::InvalidParameter("need at least one channel and one span".into()));
        }
        let ratio = self.span_length / self.step_size;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "step_size {} km does not divide span_length {} km",
                self.step_size, self.span_length
            )));
        }
        let needed = self.occupied_bandwidth();
        if needed > self.sample_rate() {
            return Err(Error::Aliasing {
                needed_hz: needed,
                available_hz: self.sample_rate(),
            });
        }
        Ok(())
    }

    /// Width of the WDM comb including roll-off.
    pub fn occupied_bandwidth(&self) -> f64 {
        (self.wdm_channels - 1) as f64 * self.channel_spacing + (1.0 + self.rrc_rolloff) * self.symbol_rate
    }

    pub fn sample_rate(&self) -> f64 {
        self.sps as f64 * self.symbol_rate
    }

    pub fn steps_per_span(&self) -> usize {
        (self.span_length / self.step_size).round() as usize
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_span() * self.n_spans
    }

    /// Group velocity dispersion in s^2/km.
    pub fn beta2(&self) -> f64 {
        let lambda = LIGHT_SPEED / self.carrier_freq;
        // ps/(nm km) -> s/(m km)
        let d = self.dispersion * 1e-3;
        -d * lambda * lambda / (2.0 * PI * LIGHT_SPEED)
    }

    /// Power attenuation in 1/km.
    pub fn alpha_linear(&self) -> f64 {
        self.alpha * std::f64::consts::LN_10 / 10.0
    }

    /// Amplifier power gain, compensating one span exactly.
    pub fn amp_gain(&self) -> f64 {
        (self.alpha_linear() * self.span_length).exp()
    }

    /// Nonlinear coefficient applied to the total power: `8/9 gamma` for two
    /// polarizations (Manakov), `gamma` for one.
    pub fn gamma_eff(&self) -> f64 {
        if self.n_pol == 2 {
            8.0 / 9.0 * self.gamma
        } else {
            self.gamma
        }
    }

    /// One-sided ASE power spectral density per polarization and amplifier.
    pub fn ase_psd(&self) -> f64 {
        let nf = 10f64.powf(self.noise_figure / 10.0);
        nf / 2.0 * PLANCK * self.carrier_freq * (self.amp_gain() - 1.0)
    }

    /// ASE variance per sample, polarization and amplifier over the
    /// simulation bandwidth.
    pub fn ase_variance_per_sample(&self) -> f64 {
        self.ase_psd() * self.sample_rate()
    }

    /// Accumulated ASE power of all amplifiers and polarizations within one
    /// channel's symbol-rate bandwidth, in W.
    pub fn ase_variance_in_band(&self) -> f64 {
        self.n_spans as f64 * self.ase_psd() * self.symbol_rate * self.n_pol as f64
    }

    /// Centre frequency offsets of the WDM channels; the channel at index
    /// `wdm_channels / 2` sits at zero.
    pub fn channel_offsets(&self) -> Vec<f64> {
        let c = (self.wdm_channels / 2) as f64;
        (0..self.wdm_channels).map(|w| (w as f64 - c) * self.channel_spacing).collect()
    }

    pub fn central_channel(&self) -> usize {
        self.wdm_channels / 2
    }
}

/// Sampled optical field, one sequence per polarization, in sqrt(W).
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSignal<T> {
    pub pols: Vec<Vec<Cplx<T>>>,
    pub sps: usize,
    pub sample_rate: f64,
    /// Launch power per channel in W.
    pub reference_power: f64,
}

impl<T: Scalar> ComplexSignal<T> {
    pub fn len(&self) -> usize {
        self.pols.first().map_or(0, |p| p.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::EmptyInput("signal"));
        }
        for p in &self.pols {
            if p.len() != n {
                return Err(Error::LengthMismatch {
                    what: "polarization length",
                    expected: n,
                    actual: p.len(),
                });
            }
            if p.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::NonFinite("signal samples"));
            }
        }
        Ok(())
    }

    pub fn energy(&self) -> f64 {
        self.pols.iter().flatten().map(|v| v.norm_sqr().to_f64_lossy()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            pols: self.pols.iter().map(|p| vec![Cplx::new(T::zero(), T::zero()); p.len()]).collect(),
            ..*self
        }
    }
}

/// Forward/inverse FFT pair with unitary-free convention: `inverse` divides
/// by the length.
pub(crate) struct Spectral<T: Scalar> {
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
    scratch: Vec<Cplx<T>>,
    scale: T,
}

impl<T: Scalar> Spectral<T> {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self {
            fwd,
            inv,
            scratch: vec![Cplx::new(T::zero(), T::zero()); len],
            scale: T::one() / T::of_usize(n),
        }
    }

    pub(crate) fn forward(&mut self, buf: &mut [Cplx<T>]) {
        self.fwd.process_with_scratch(buf, &mut self.scratch);
    }

    pub(crate) fn inverse(&mut self, buf: &mut [Cplx<T>]) {
        self.inv.process_with_scratch(buf, &mut self.scratch);
        let s = self.scale;
        buf.iter_mut().for_each(|v| *v = v.scale(s));
    }
}

/// Signed frequency of FFT bin `k` for `n` bins at `fs`.
pub(crate) fn bin_frequency(k: usize, n: usize, fs: f64) -> f64 {
    let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    k * fs / n as f64
}

/// Multiplies every polarization by `h` in the frequency domain.
pub(crate) fn apply_filter<T: Scalar>(fft: &mut Spectral<T>, field: &mut [Vec<Cplx<T>>], h: &[Cplx<T>]) {
    for p in field.iter_mut() {
        fft.forward(p);
        for (v, f) in p.iter_mut().zip(h) {
            *v *= *f;
        }
        fft.inverse(p);
    }
}

/// Forward fields saved every `every` steps, and what is needed to replay the
/// amplifier noise between them.
#[derive(Clone, Debug)]
pub struct SsfmCheckpoints<T> {
    pub states: Vec<Vec<Vec<Cplx<T>>>>,
    pub every: usize,
    pub total_steps: usize,
    pub noise_seed: Option<u64>,
}

impl<T> SsfmCheckpoints<T> {
    pub fn stored_samples(&self) -> usize {
        self.states.iter().flatten().map(|p| p.len()).sum()
    }
}

struct Stepper<T: Scalar> {
    fft: Spectral<T>,
    half: Vec<Cplx<T>>,
    half_adj: Vec<Cplx<T>>,
    nl: T,
    sqrt_gain: T,
    steps_per_span: usize,
    ase_var: f64,
    noise_seed: Option<u64>,
}

impl<T: Scalar> Stepper<T> {
    fn new(lp: &FiberLinkParams, n: usize, noise_seed: Option<u64>) -> Self {
        let fs = lp.sample_rate();
        let dz = lp.step_size;
        let b2 = lp.beta2();
        let a = lp.alpha_linear();
        let half: Vec<Cplx<T>> = (0..n)
            .map(|k| {
                let w = 2.0 * PI * bin_frequency(k, n, fs);
                let phase = b2 * w * w * dz / 4.0;
                let amp = (-a * dz / 4.0).exp();
                Cplx::new(T::of(amp * phase.cos()), T::of(amp * phase.sin()))
            })
            .collect();
        let half_adj = half.iter().map(|h| h.conj()).collect();
        Self {
            fft: Spectral::new(n),
            half,
            half_adj,
            nl: T::of(lp.gamma_eff() * dz),
            sqrt_gain: T::of(lp.amp_gain().sqrt()),
            steps_per_span: lp.steps_per_span(),
            ase_var: lp.ase_variance_per_sample(),
            noise_seed,
        }
    }

    fn linear(&mut self, field: &mut [Vec<Cplx<T>>]) {
        let h = std::mem::take(&mut self.half);
        apply_filter(&mut self.fft, field, &h);
        self.half = h;
    }

    fn linear_adjoint(&mut self, field: &mut [Vec<Cplx<T>>]) {
        let h = std::mem::take(&mut self.half_adj);
        apply_filter(&mut self.fft, field, &h);
        self.half_adj = h;
    }

    fn nonlinear(&self, field: &mut [Vec<Cplx<T>>]) {
        let n = field[0].len();
        for k in 0..n {
            let p: T = field.iter().map(|f| f[k].norm_sqr()).sum();
            let rot = Cplx::from_polar(T::one(), self.nl * p);
            for f in field.iter_mut() {
                f[k] *= rot;
            }
        }
    }

    /// `g_u = e^{-i phi} g_v + 2 c s u` with `s = -sum_p Im(conj(g_v) v)`.
    fn nonlinear_adjoint(&self, input: &[Vec<Cplx<T>>], grad: &mut [Vec<Cplx<T>>]) {
        let n = input[0].len();
        let two_c = self.nl + self.nl;
        for k in 0..n {
            let p: T = input.iter().map(|f| f[k].norm_sqr()).sum();
            let rot = Cplx::from_polar(T::one(), self.nl * p);
            let mut s = T::zero();
            for (u, g) in input.iter().zip(grad.iter()) {
                let v = u[k] * rot;
                s -= (g[k].conj() * v).im;
            }
            for (u, g) in input.iter().zip(grad.iter_mut()) {
                g[k] = g[k] * rot.conj() + u[k].scale(two_c * s);
            }
        }
    }

    fn is_span_end(&self, step: usize) -> bool {
        (step + 1) % self.steps_per_span == 0
    }

    fn amplify(&self, field: &mut [Vec<Cplx<T>>], span: usize) {
        let g = self.sqrt_gain;
        let mut noise = self.noise_seed.map(|s| rng::substream(s, span as u64));
        for f in field.iter_mut() {
            for v in f.iter_mut() {
                *v = v.scale(g);
                if let Some(r) = noise.as_mut() {
                    *v += rng::complex_normal::<T>(r, self.ase_var);
                }
            }
        }
    }

    /// One symmetric step; returns the input of the nonlinear section.
    fn step(&mut self, field: &mut [Vec<Cplx<T>>], index: usize, keep: bool) -> Option<Vec<Vec<Cplx<T>>>> {
        self.linear(field);
        let kept = keep.then(|| field.to_vec());
        self.nonlinear(field);
        self.linear(field);
        if self.is_span_end(index) {
            self.amplify(field, index / self.steps_per_span);
        }
        kept
    }
}

/// Symmetric split-step propagation over all spans. Amplifier noise is drawn
/// from a seed taken from `rng` so the adjoint can replay it. The field is
/// stored every `checkpoint_every` steps.
pub fn ssfm_propagate<T: Scalar>(
    tx: &ComplexSignal<T>,
    lp: &FiberLinkParams,
    rng: &mut SimRng,
    checkpoint_every: usize,
) -> Result<(ComplexSignal<T>, SsfmCheckpoints<T>)> {
    lp.validate()?;
    tx.validate()?;
    check_signal(tx, lp)?;
    if checkpoint_every == 0 {
        return Err(Error::InvalidParameter("checkpoint_every must be >= 1".into()));
    }
    let noise_seed = lp.ase.then(|| rng.random::<u64>());
    let total = lp.total_steps();
    let mut st = Stepper::new(lp, tx.len(), noise_seed);
    let mut field = tx.pols.clone();
    let mut states = Vec::with_capacity(total.div_ceil(checkpoint_every));
    for j in 0..total {
        if j % checkpoint_every == 0 {
            states.push(field.clone());
        }
        st.step(&mut field, j, false);
    }
    let rx = ComplexSignal { pols: field, ..*tx };
    let cp = SsfmCheckpoints {
        states,
        every: checkpoint_every,
        total_steps: total,
        noise_seed,
    };
    Ok((rx, cp))
}

fn check_signal<T: Scalar>(s: &ComplexSignal<T>, lp: &FiberLinkParams) -> Result<()> {
    if s.pols.len() != lp.n_pol {
        return Err(Error::LengthMismatch {
            what: "polarizations",
            expected: lp.n_pol,
            actual: s.pols.len(),
        });
    }
    if (s.sample_rate - lp.sample_rate()).abs() > 1e-6 * lp.sample_rate() {
        return Err(Error::InvalidParameter(format!(
            "signal sampled at {} Hz, link simulates {} Hz",
            s.sample_rate,
            lp.sample_rate()
        )));
    }
    Ok(())
}

/// Reverse-mode gradient of a real loss with respect to the launched field,
/// given its gradient with respect to the received field. Each segment
/// between checkpoints is recomputed forward, then traversed backwards.
pub fn ssfm_adjoint<T: Scalar>(
    cp: &SsfmCheckpoints<T>,
    lp: &FiberLinkParams,
    grad_rx: &ComplexSignal<T>,
) -> Result<ComplexSignal<T>> {
    lp.validate()?;
    check_signal(grad_rx, lp)?;
    let total = lp.total_steps();
    if cp.total_steps != total || cp.every == 0 || cp.states.len() != total.div_ceil(cp.every) {
        return Err(Error::CheckpointMismatch(format!(
            "{} checkpoints every {} of {} steps, link has {} steps",
            cp.states.len(),
            cp.every,
            cp.total_steps,
            total
        )));
    }
    if lp.ase != cp.noise_seed.is_some() {
        return Err(Error::CheckpointMismatch("amplifier noise setting differs from the forward run".into()));
    }
    let n = grad_rx.len();
    if cp.states.iter().flatten().any(|p| p.len() != n) || cp.states.iter().any(|s| s.len() != lp.n_pol) {
        return Err(Error::CheckpointMismatch("checkpoint field shape differs from the gradient".into()));
    }
    let mut st = Stepper::new(lp, n, cp.noise_seed);
    let mut g = grad_rx.pols.clone();
    for (seg, start_state) in cp.states.iter().enumerate().rev() {
        let start = seg * cp.every;
        let end = (start + cp.every).min(total);
        let mut field = start_state.clone();
        let mut nl_inputs = Vec::with_capacity(end - start);
        for j in start..end {
            nl_inputs.push(st.step(&mut field, j, true).expect("kept"));
        }
        for j in (start..end).rev() {
            if st.is_span_end(j) {
                let s = st.sqrt_gain;
                g.iter_mut().flatten().for_each(|v| *v = v.scale(s));
            }
            st.linear_adjoint(&mut g);
            st.nonlinear_adjoint(&nl_inputs[j - start], &mut g);
            st.linear_adjoint(&mut g);
        }
    }
    Ok(ComplexSignal { pols: g, ..*grad_rx })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n_pol: usize) -> FiberLinkParams {
        FiberLinkParams {
            wdm_channels: 1,
            n_pol,
            n_spans: 1,
            span_length: 50.0,
            sps: 4,
            step_size: 5.0,
            ase: false,
            ..FiberLinkParams::reference()
        }
    }

    fn random_signal(lp: &FiberLinkParams, n: usize, power: f64, seed: u64) -> ComplexSignal<f64> {
        let mut r = rng::seeded(seed);
        ComplexSignal {
            pols: (0..lp.n_pol)
                .map(|_| (0..n).map(|_| rng::complex_normal(&mut r, power / lp.n_pol as f64)).collect())
                .collect(),
            sps: lp.sps,
            sample_rate: lp.sample_rate(),
            reference_power: power,
        }
    }

    #[test]
    fn reference_link_numbers() {
        let lp = FiberLinkParams::reference();
        lp.validate().unwrap();
        assert!((lp.beta2() * 1e24 + 21.0).abs() < 0.1, "{}", lp.beta2());
        assert!((lp.amp_gain() - 100.0).abs() < 1e-9);
        assert_eq!(lp.total_steps(), 10_000);
        assert!((lp.ase_psd() - 2.006e-17).abs() < 1e-19);
        assert!((lp.ase_variance_in_band() - 1.284e-5).abs() < 1e-8);
        FiberLinkParams::pretrain().validate().unwrap();
        assert_eq!(FiberLinkParams::pretrain().total_steps(), 50);
    }

    #[test]
    fn aliasing_and_step_guards() {
        let lp = FiberLinkParams { sps: 4, ..FiberLinkParams::reference() };
        assert!(matches!(lp.validate(), Err(Error::Aliasing { .. })));
        let lp = FiberLinkParams { step_size: 0.3, ..FiberLinkParams::reference() };
        assert!(lp.validate().is_err());
    }

    #[test]
    fn linear_limit_is_dispersion_all_pass() {
        let lp = FiberLinkParams { gamma: 0.0, alpha: 0.0, ..toy(2) };
        let tx = random_signal(&lp, 256, 1e-3, 1);
        let (rx, _) = ssfm_propagate(&tx, &lp, &mut rng::seeded(0), 3).unwrap();
        let mut fft = Spectral::<f64>::new(256);
        let l = lp.span_length * lp.n_spans as f64;
        for (a, b) in tx.pols.iter().zip(&rx.pols) {
            let (mut fa, mut fb) = (a.clone(), b.clone());
            fft.forward(&mut fa);
            fft.forward(&mut fb);
            for (k, (x, y)) in fa.iter().zip(&fb).enumerate() {
                assert!((x.norm() - y.norm()).abs() < 1e-10 * x.norm().max(1e-3));
                let w = 2.0 * PI * bin_frequency(k, 256, lp.sample_rate());
                let want = x * Cplx::from_polar(1.0, lp.beta2() * w * w * l / 2.0);
                assert!((want - y).norm() < 1e-9 * x.norm().max(1e-3));
            }
        }
    }

    #[test]
    fn lossless_nonlinear_conserves_energy() {
        let lp = FiberLinkParams { alpha: 0.0, ..toy(2) };
        let tx = random_signal(&lp, 512, 2e-2, 2);
        let (rx, _) = ssfm_propagate(&tx, &lp, &mut rng::seeded(0), 4).unwrap();
        assert!((rx.energy() - tx.energy()).abs() / tx.energy() < 1e-10);
        assert!(rx != tx);
    }

    #[test]
    fn all_off_is_identity() {
        let lp = FiberLinkParams {
            alpha: 0.0,
            gamma: 0.0,
            dispersion: 0.0,
            ..toy(1)
        };
        let tx = random_signal(&lp, 128, 1e-3, 3);
        let (rx, _) = ssfm_propagate(&tx, &lp, &mut rng::seeded(0), 1).unwrap();
        for (a, b) in tx.pols[0].iter().zip(&rx.pols[0]) {
            assert!((a - b).norm() < 1e-10 * 1e-3f64.sqrt());
        }
    }

    #[test]
    fn step_refinement_converges() {
        let coarse = FiberLinkParams {
            span_length: 80.0,
            step_size: 1.0,
            ..toy(1)
        };
        let fine = FiberLinkParams { step_size: 0.1, ..coarse.clone() };
        let tx = random_signal(&coarse, 512, 1e-3, 4);
        let (a, _) = ssfm_propagate(&tx, &coarse, &mut rng::seeded(0), 1000).unwrap();
        let (b, _) = ssfm_propagate(&tx, &fine, &mut rng::seeded(0), 1000).unwrap();
        let err: f64 = a.pols[0].iter().zip(&b.pols[0]).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>();
        let rel = (err / b.energy()).sqrt();
        assert!(rel < 1e-4, "{rel}");
    }

    #[test]
    fn amplifier_noise_replays_from_seed() {
        let lp = FiberLinkParams { ase: true, ..toy(2) };
        let tx = random_signal(&lp, 64, 1e-3, 5);
        let (a, ca) = ssfm_propagate(&tx, &lp, &mut rng::seeded(9), 2).unwrap();
        let (b, cb) = ssfm_propagate(&tx, &lp, &mut rng::seeded(9), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(ca.noise_seed, cb.noise_seed);
        assert_eq!(ca.states.len(), 5);
        assert_eq!(cb.states.len(), 2);
    }

    fn quad_loss(rx: &ComplexSignal<f64>, w: &ComplexSignal<f64>) -> f64 {
        rx.pols
            .iter()
            .flatten()
            .zip(w.pols.iter().flatten())
            .map(|(y, c)| y.re * c.re + y.im * c.im + 1e3 * y.norm_sqr() * y.norm_sqr())
            .sum()
    }

    #[test]
    fn adjoint_matches_finite_differences() {
        let lp = FiberLinkParams { ase: true, ..toy(2) };
        let n = 64;
        let tx = random_signal(&lp, n, 3e-2, 6);
        let w = random_signal(&lp, n, 1.0, 7);
        let (rx, cp) = ssfm_propagate(&tx, &lp, &mut rng::seeded(1), 3).unwrap();
        let mut grad = rx.clone();
        for (g, (y, c)) in grad.pols.iter_mut().flatten().zip(rx.pols.iter().flatten().zip(w.pols.iter().flatten())) {
            *g = c + y.scale(4e3 * y.norm_sqr());
        }
        let gt = ssfm_adjoint(&cp, &lp, &grad).unwrap();
        let h = 1e-7;
        for (p, k) in [(0, 0), (0, 17), (1, 33), (1, 63)] {
            for axis in 0..2 {
                let f = |s: f64| {
                    let mut t = tx.clone();
                    if axis == 0 {
                        t.pols[p][k].re += s;
                    } else {
                        t.pols[p][k].im += s;
                    }
                    quad_loss(&ssfm_propagate(&t, &lp, &mut rng::seeded(1), 3).unwrap().0, &w)
                };
                let fd = (f(h) - f(-h)) / (2.0 * h);
                let an = if axis == 0 { gt.pols[p][k].re } else { gt.pols[p][k].im };
                assert!((fd - an).abs() < 1e-3 * fd.abs().max(an.abs()), "{p},{k},{axis}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn adjoint_of_zero_is_zero_and_linear_case_is_conjugate_filter() {
        let lp = FiberLinkParams { gamma: 0.0, ..toy(1) };
        let tx = random_signal(&lp, 128, 1e-3, 8);
        let (_, cp) = ssfm_propagate(&tx, &lp, &mut rng::seeded(0), 4).unwrap();
        let z = ssfm_adjoint(&cp, &lp, &tx.zeros_like()).unwrap();
        assert!(z.pols.iter().flatten().all(|v| v.norm() == 0.0));
        let g = random_signal(&lp, 128, 1.0, 9);
        let back = ssfm_adjoint(&cp, &lp, &g).unwrap();
        let mut fft = Spectral::<f64>::new(128);
        let mut want = g.pols[0].clone();
        fft.forward(&mut want);
        let l = lp.span_length;
        for (k, v) in want.iter_mut().enumerate() {
            let w = 2.0 * PI * bin_frequency(k, 128, lp.sample_rate());
            // attenuation is undone by the amplifier
            *v *= Cplx::from_polar(1.0, -lp.beta2() * w * w * l / 2.0);
        }
        fft.inverse(&mut want);
        for (a, b) in want.iter().zip(&back.pols[0]) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn mismatched_checkpoints_are_rejected() {
        let lp = toy(1);
        let tx = random_signal(&lp, 32, 1e-3, 10);
        let (rx, cp) = ssfm_propagate(&tx, &lp, &mut rng::seeded(0), 4).unwrap();
        let other = FiberLinkParams { step_size: 2.5, ..lp.clone() };
        assert!(matches!(ssfm_adjoint(&cp, &other, &rx), Err(Error::CheckpointMismatch(_))));
    }
}
