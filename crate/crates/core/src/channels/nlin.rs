
use super::quantizer::{peak_amplitude_with_argmax, uniform_draws};
use super::wdm::SsfmChannel;
use super::{
    check_len, dbm_to_watts, Channel, ChannelGrads, FiberLinkParams, PropagationCounter, QuantizerMode,
    QuantizerParams,
};
use crate::constellation::{moments_of, Constellation, Moments};
use crate::rng::{self, SimRng};
use crate::{Cplx, Error, Result, Scalar};

/// Gaussian-noise model of ASE plus nonlinear interference.
///
/// Powers are in W for the whole channel (both polarizations); the chi
/// coefficients are in W^-2.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NlinParams {
    pub sigma_ase_sq: f64,
    pub chi0: f64,
    pub chi1: f64,
    pub chi2: f64,
}

impl NlinParams {
    /// Coefficients fitted to the reference 10 x 100 km link with
    /// [`calibrate_nlin`], ASE of that link.
    ///
    /// Fit: QPSK, 16QAM, 64QAM and a Gaussian cloud at -1, 1 and 3 dBm,
    /// 4096 symbols, 16 samples per symbol, 100 m steps.
    pub const REFERENCE: NlinParams = NlinParams {
        sigma_ase_sq: 1.2838672696356021e-5,
        chi0: 5838.4,
        chi1: 1653.4,
        chi2: -108.35,
    };

    /// Reference coefficients with the ASE variance of `link`.
    pub fn for_link(link: &FiberLinkParams) -> Self {
        Self {
            sigma_ase_sq: link.ase_variance_in_band(),
            ..Self::REFERENCE
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_ase_sq > 0.0) || !self.sigma_ase_sq.is_finite() {
            return Err(Error::InvalidParameter(format!("sigma_ase_sq = {} must be > 0", self.sigma_ase_sq)));
        }
        if ![self.chi0, self.chi1, self.chi2].iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("NLIN coefficients"));
        }
        Ok(())
    }

    fn moment_factor(&self, mu4: f64, mu6: f64) -> f64 {
        self.chi0 + self.chi1 * (mu4 - 2.0) + self.chi2 * (mu6 - 9.0 * mu4 + 12.0)
    }
}

impl Default for NlinParams {
    fn default() -> Self {
        Self::for_link(&FiberLinkParams::reference())
    }
}

/// `sigma_NLIN^2 = P^3 (chi0 + chi1 (mu4 - 2) + chi2 (mu6 - 9 mu4 + 12))` in W.
pub fn nlin_variance<T: Scalar>(p_s: f64, mom: &Moments<T>, np: &NlinParams) -> f64 {
    p_s.powi(3) * np.moment_factor(mom.mu4.to_f64_lossy(), mom.mu6.to_f64_lossy())
}

/// `sigma_ASE^2 + sigma_NLIN^2` in W.
pub fn total_noise_variance<T: Scalar>(p_s: f64, mom: &Moments<T>, np: &NlinParams) -> f64 {
    np.sigma_ase_sq + nlin_variance(p_s, mom, np)
}

fn normalized_variance<T: Scalar>(p_s: f64, mom: &Moments<T>, np: &NlinParams) -> Result<f64> {
    if !(p_s > 0.0) {
        return Err(Error::InvalidParameter(format!("launch power {p_s} W must be > 0")));
    }
    let v = total_noise_variance(p_s, mom, np) / p_s;
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::Numerical(format!("NLIN noise variance {v} (check chi coefficients)")));
    }
    Ok(v)
}

/// `y = x + n` with `n` circular Gaussian of variance `sigma_n^2 / P_s` (the
/// normalized domain after `1/sqrt(P_s)` detection scaling).
pub fn nlin_channel<T: Scalar>(
    x: &[Cplx<T>],
    p_s: f64,
    mom: &Moments<T>,
    np: &NlinParams,
    rng: &mut SimRng,
) -> Result<Vec<Cplx<T>>> {
    let v = normalized_variance(p_s, mom, np)?;
    Ok(x.iter().map(|&s| s + rng::complex_normal::<T>(rng, v)).collect())
}

/// NLIN channel with optional DAC/ADC quantization around it. Noise and
/// converter range follow the constellation handed to each propagation.
#[derive(Clone, Debug)]
pub struct NlinChannel {
    pub params: NlinParams,
    pub launch_power_dbm: f64,
    /// ENOB and converter model; `None` for ideal converters.
    pub quantizer: Option<(u32, QuantizerMode)>,
    counter: PropagationCounter,
}

pub struct NlinTape<T> {
    points: Vec<Cplx<T>>,
    z: Vec<Cplx<T>>,
    variance: f64,
    p_s: f64,
    quant: Option<QuantTape<T>>,
}

struct QuantTape<T> {
    params: QuantizerParams,
    argmax: [usize; 2],
    dac: Vec<Cplx<T>>,
    adc: Vec<Cplx<T>>,
}

impl NlinChannel {
    pub fn new(params: NlinParams, launch_power_dbm: f64, quantizer: Option<(u32, QuantizerMode)>) -> Result<Self> {
        params.validate()?;
        if let Some((enob, _)) = quantizer {
            if enob < 1 {
                return Err(Error::InvalidParameter("ENOB must be >= 1".into()));
            }
        }
        Ok(Self {
            params,
            launch_power_dbm,
            quantizer,
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

    /// Total noise variance in the normalized domain for a constellation.
    pub fn normalized_noise_variance<T: Scalar>(&self, points: &[Cplx<T>]) -> Result<f64> {
        normalized_variance(self.launch_power_w(), &moments_of(points), &self.params)
    }
}

fn add_scaled<T: Scalar>(x: &mut [Cplx<T>], u: &[Cplx<T>], w: [f64; 2]) {
    let (wr, wi) = (T::of(w[0]), T::of(w[1]));
    for (v, n) in x.iter_mut().zip(u) {
        v.re += wr * n.re;
        v.im += wi * n.im;
    }
}

impl<T: Scalar> Channel<T> for NlinChannel {
    type Tape = NlinTape<T>;

    fn forward(
        &self,
        symbols: &[Cplx<T>],
        constellation: &[Cplx<T>],
        rng: &mut SimRng,
    ) -> Result<(Vec<Cplx<T>>, NlinTape<T>)> {
        let p_s = self.launch_power_w();
        let variance = normalized_variance(p_s, &moments_of(constellation), &self.params)?;
        let qp = match self.quantizer {
            Some((enob, mode)) => {
                let (a, argmax) = peak_amplitude_with_argmax(constellation)?;
                Some((QuantizerParams::new(enob, a, mode)?, argmax))
            }
            None => None,
        };
        let hard = matches!(qp, Some((QuantizerParams { mode: QuantizerMode::HardQuantizer, .. }, _)));
        let mut y = symbols.to_vec();
        let mut dac = Vec::new();
        if let Some((q, _)) = &qp {
            if hard {
                y = super::quantize(&y, q, rng);
            } else {
                dac = uniform_draws(y.len(), rng);
                add_scaled(&mut y, &dac, q.noise_half_width());
            }
        }
        let sd = T::of(variance.sqrt());
        let z: Vec<Cplx<T>> = (0..y.len()).map(|_| rng::complex_normal::<T>(rng, 1.0)).collect();
        for (v, n) in y.iter_mut().zip(&z) {
            *v += n.scale(sd);
        }
        let mut adc = Vec::new();
        if let Some((q, _)) = &qp {
            if hard {
                y = super::quantize(&y, q, rng);
            } else {
                adc = uniform_draws(y.len(), rng);
                add_scaled(&mut y, &adc, q.noise_half_width());
            }
        }
        let tape = NlinTape {
            points: constellation.to_vec(),
            z,
            variance,
            p_s,
            quant: qp.map(|(params, argmax)| QuantTape { params, argmax, dac, adc }),
        };
        Ok((y, tape))
    }

    fn has_adjoint(&self) -> bool {
        !matches!(self.quantizer, Some((_, QuantizerMode::HardQuantizer)))
    }

    fn adjoint(&self, tape: &NlinTape<T>, grad_y: &[Cplx<T>]) -> Result<ChannelGrads<T>> {
        if !Channel::<T>::has_adjoint(self) {
            return Err(Error::NoAdjoint("hard quantizer is piecewise constant".into()));
        }
        check_len("channel output gradient", tape.z.len(), grad_y.len())?;
        let pts = &tape.points;
        let m = pts.len();
        let mf = m as f64;
        let mut grad_c = vec![Cplx::new(T::zero(), T::zero()); m];

        // Noise std enters through the moments of the constellation.
        if tape.variance > 0.0 {
            let dl_dv = grad_y
                .iter()
                .zip(&tape.z)
                .map(|(g, z)| (g.re * z.re + g.im * z.im).to_f64_lossy())
                .sum::<f64>()
                / (2.0 * tape.variance.sqrt());
            let np = &self.params;
            let p2 = tape.p_s * tape.p_s;
            let dv_dmu4 = p2 * (np.chi1 - 9.0 * np.chi2);
            let dv_dmu6 = p2 * np.chi2;
            let (mut m2, mut m4, mut m6) = (0.0, 0.0, 0.0);
            for p in pts {
                let a = p.norm_sqr().to_f64_lossy();
                m2 += a;
                m4 += a * a;
                m6 += a * a * a;
            }
            m2 /= mf;
            m4 /= mf;
            m6 /= mf;
            for (g, p) in grad_c.iter_mut().zip(pts) {
                let a = p.norm_sqr().to_f64_lossy();
                // d/dc of m2, m4, m6 are 2c/M, 4|c|^2 c/M, 6|c|^4 c/M
                let dmu4 = 4.0 * a / mf / (m2 * m2) - 2.0 * m4 / m2.powi(3) * 2.0 / mf;
                let dmu6 = 6.0 * a * a / mf / m2.powi(3) - 3.0 * m6 / m2.powi(4) * 2.0 / mf;
                let k = T::of(dl_dv * (dv_dmu4 * dmu4 + dv_dmu6 * dmu6));
                *g += p.scale(k);
            }
        }

        // Converter range follows the largest coordinates.
        if let Some(q) = &tape.quant {
            let d = 2f64.powi(q.params.enob as i32 - 1);
            let mut dl_dw = [0.0f64; 2];
            for (g, (a, b)) in grad_y.iter().zip(q.dac.iter().zip(&q.adc)) {
                dl_dw[0] += (g.re * (a.re + b.re)).to_f64_lossy();
                dl_dw[1] += (g.im * (a.im + b.im)).to_f64_lossy();
            }
            let i = q.argmax[0];
            grad_c[i].re += T::of(dl_dw[0] * super::quantizer::PEAK_FACTOR / d * pts[i].re.to_f64_lossy().signum());
            let i = q.argmax[1];
            grad_c[i].im += T::of(dl_dw[1] * super::quantizer::PEAK_FACTOR / d * pts[i].im.to_f64_lossy().signum());
        }

        Ok(ChannelGrads {
            symbols: grad_y.to_vec(),
            constellation: grad_c,
        })
    }

    fn counter(&self) -> &PropagationCounter {
        &self.counter
    }

    fn name(&self) -> &'static str {
        "nlin"
    }
}

/// Fit of the chi coefficients against split-step simulations.
#[derive(Clone, Debug)]
pub struct NlinCalibration {
    pub params: NlinParams,
    /// `(P in W, mu4, mu6, measured sigma_NLIN^2 in W)` per simulation.
    pub samples: Vec<(f64, f64, f64, f64)>,
}

impl NlinCalibration {
    /// Largest relative deviation of the fitted model from the samples.
    pub fn max_relative_error(&self) -> f64 {
        self.samples
            .iter()
            .map(|&(p, mu4, mu6, s)| {
                let m = Moments { mu4, mu6 };
                (nlin_variance(p, &m, &self.params) - s).abs() / s
            })
            .fold(0.0, f64::max)
    }
}

/// Measures the nonlinear noise of `link` (ASE disabled) for every
/// constellation and launch power, then fits the chi coefficients by least
/// squares on `sigma^2 / P^3`.
pub fn calibrate_nlin(
    link: &FiberLinkParams,
    constellations: &[Constellation<f64>],
    powers_dbm: &[f64],
    n_symbols: usize,
    seed: u64,
) -> Result<NlinCalibration> {
    let mut quiet = link.clone();
    quiet.ase = false;
    let mut samples = Vec::new();
    for (ci, c) in constellations.iter().enumerate() {
        let mom = moments_of(c.points());
        for (pi, &dbm) in powers_dbm.iter().enumerate() {
            let ch = SsfmChannel::new(quiet.clone(), dbm)?;
            let mut r = rng::substream(seed, (ci * powers_dbm.len() + pi) as u64);
            let x: Vec<Cplx<f64>> =
                (0..n_symbols).map(|_| c.points()[rng::uniform_index(&mut r, c.order())]).collect();
            let (y, _) = ch.propagate(&x, c.points(), &mut r)?;
            let mse = x.iter().zip(&y).map(|(a, b)| (b - a).norm_sqr()).sum::<f64>() / n_symbols as f64;
            let p = dbm_to_watts(dbm);
            samples.push((p, mom.mu4, mom.mu6, mse * p));
        }
    }
    let chi = fit_chi(&samples)?;
    Ok(NlinCalibration {
        params: NlinParams {
            sigma_ase_sq: link.ase_variance_in_band(),
            chi0: chi[0],
            chi1: chi[1],
            chi2: chi[2],
        },
        samples,
    })
}

/// Least squares for `chi` in `s / P^3 = chi . [1, mu4 - 2, mu6 - 9 mu4 + 12]`.
/// Columns without variation in the data are dropped (coefficient 0).
fn fit_chi(samples: &[(f64, f64, f64, f64)]) -> Result<[f64; 3]> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("calibration samples"));
    }
    let rows: Vec<([f64; 3], f64)> = samples
        .iter()
        .map(|&(p, mu4, mu6, s)| ([1.0, mu4 - 2.0, mu6 - 9.0 * mu4 + 12.0], s / p.powi(3)))
        .collect();
    let spread = |j: usize| {
        let v: Vec<f64> = rows.iter().map(|r| r.0[j]).collect();
        v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min)
    };
    let mut active = vec![0usize];
    // A single constellation cannot separate the moment terms.
    if spread(1) > 1e-9 {
        active.push(1);
    }
    if spread(2) > 1e-9 && rows.len() >= 3 {
        let m4: Vec<f64> = rows.iter().map(|r| r.0[1]).collect();
        let m6: Vec<f64> = rows.iter().map(|r| r.0[2]).collect();
        let distinct = m4.iter().zip(&m6).fold(Vec::<(f64, f64)>::new(), |mut acc, (&a, &b)| {
            if !acc.iter().any(|&(x, y)| (x - a).abs() < 1e-9 && (y - b).abs() < 1e-9) {
                acc.push((a, b));
            }
            acc
        });
        if distinct.len() >= 3 {
            active.push(2);
        }
    }
    let k = active.len();
    let mut ata = ndarray::Array2::<f64>::zeros((k, k));
    let mut atb = ndarray::Array2::<f64>::zeros((k, 1));
    for (x, b) in &rows {
        for i in 0..k {
            atb[[i, 0]] += x[active[i]] * b;
            for j in 0..k {
                ata[[i, j]] += x[active[i]] * x[active[j]];
            }
        }
    }
    let l = crate::linalg::cholesky(ata.view())?;
    crate::linalg::cholesky_solve(l.view(), &mut atb);
    let mut chi = [0.0; 3];
    for (i, &j) in active.iter().enumerate() {
        chi[j] = atb[[i, 0]];
    }
    Ok(chi)
}
