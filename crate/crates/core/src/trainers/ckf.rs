use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rayon::prelude::*;

use crate::channels::Channel;
use crate::linalg::{cholesky_jittered, cholesky_solve, solve_lower, symmetrize};
use crate::neural::Autoencoder;
use crate::rng::{self, SimRng};
use crate::{Cplx, Error, Result, Scalar};

/// First diagonal loading tried when a Cholesky factorization fails.
pub const CKF_JITTER: f64 = 1e-12;
const JITTER_TRIES: usize = 12;
/// The covariance is dense `N_w x N_w`; larger networks are refused.
pub const MAX_CKF_WEIGHTS: usize = 8192;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CkfConfig {
    /// Process noise added to the diagonal of `P` before every batch.
    pub q: f64,
    /// Measurement noise variance.
    pub r: f64,
    /// Initial covariance `P0 * I`.
    pub p0: f64,
}

impl Default for CkfConfig {
    fn default() -> Self {
        Self {
            q: 1e-8,
            r: 1e-6,
            p0: 1e-4,
        }
    }
}

impl CkfConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.q >= 0.0 && self.r > 0.0 && self.p0 > 0.0;
        if !ok || !(self.q.is_finite() && self.r.is_finite() && self.p0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "CKF needs Q >= 0, R > 0, P0 > 0, got Q={} R={} P0={}",
                self.q, self.r, self.p0
            )));
        }
        Ok(())
    }
}

/// Weight covariance of the filter. The weight mean lives in the
/// autoencoder itself.
#[derive(Clone, Debug)]
pub struct CkfState<T> {
    pub covariance: Array2<T>,
    pub q: T,
    pub r: T,
    /// Factorizations of `P` or of the innovation matrix that needed jitter.
    pub jitter_events: usize,
}

impl<T: Scalar> CkfState<T> {
    pub fn new(weight_count: usize, cfg: &CkfConfig) -> Result<Self> {
        cfg.validate()?;
        if weight_count == 0 || weight_count > MAX_CKF_WEIGHTS {
            return Err(Error::InvalidParameter(format!(
                "CKF supports 1..={MAX_CKF_WEIGHTS} weights, network has {weight_count}"
            )));
        }
        Ok(Self {
            covariance: Array2::from_diag_elem(weight_count, T::of(cfg.p0)),
            q: T::of(cfg.q),
            r: T::of(cfg.r),
            jitter_events: 0,
        })
    }

    pub fn weight_count(&self) -> usize {
        self.covariance.nrows()
    }
}

fn factor<T: Scalar>(a: &Array2<T>, what: &str, events: &mut usize) -> Result<Array2<T>> {
    let (l, jitter) = cholesky_jittered(a.view(), T::of(CKF_JITTER), JITTER_TRIES)?;
    if jitter > T::zero() {
        *events += 1;
        log::warn!("CKF: {what} needed jitter {jitter}");
    }
    Ok(l)
}

/// Decoder outputs of the network with weights `w` on the batch, flattened
/// row-major. `noise_seed` fixes the channel realization.
fn measure<T: Scalar, C: Channel<T>>(
    template: &Autoencoder<T>,
    w: &[T],
    channel: &C,
    batch: &[usize],
    noise_seed: u64,
) -> Result<Vec<T>> {
    let mut ae = template.clone();
    ae.set_params_flat(w)?;
    let pass = ae.encode()?;
    let x: Vec<Cplx<T>> = batch.iter().map(|&i| pass.points[i]).collect();
    let (y, _) = channel.propagate(&x, &pass.points, &mut rng::seeded(noise_seed))?;
    let s = ae.decoder.predict(Autoencoder::decoder_input(&y).view())?;
    Ok(s.iter().copied().collect())
}

/// One cubature Kalman filter update on a batch. Uses the channel `2 N_w`
/// times; all cubature points see the same channel realization. Returns the
/// loss of the predicted measurement (nats).
pub fn ckf_step<T: Scalar, C: Channel<T>>(
    ae: &mut Autoencoder<T>,
    state: &mut CkfState<T>,
    channel: &C,
    batch: &[usize],
    rng: &mut SimRng,
) -> Result<f64> {
    let mean = ae.params_flat();
    let n = mean.len();
    if n != state.weight_count() {
        return Err(Error::LengthMismatch {
            what: "CKF covariance",
            expected: n,
            actual: state.weight_count(),
        });
    }
    for i in 0..n {
        state.covariance[[i, i]] += state.q;
    }
    let s = factor(&state.covariance, "covariance", &mut state.jitter_events)?;

    let two_n = 2 * n;
    let spread = T::of_usize(n).sqrt();
    let norm = T::one() / T::of_usize(two_n).sqrt();
    // X[:, j] = (w_j - mean) / sqrt(2n): +sqrt(n) S_j for j < n, minus after.
    let mut x = Array2::<T>::zeros((n, two_n));
    for j in 0..n {
        for i in j..n {
            let v = s[[i, j]] * spread * norm;
            x[[i, j]] = v;
            x[[i, j + n]] = -v;
        }
    }

    let noise_seed: u64 = rng.random();
    let template: &Autoencoder<T> = ae;
    let outputs: Vec<Vec<T>> = (0..two_n)
        .into_par_iter()
        .map(|j| {
            let w: Vec<T> = mean.iter().enumerate().map(|(i, &m)| m + x[[i, j]] / norm).collect();
            measure(template, &w, channel, batch, noise_seed)
        })
        .collect::<Result<_>>()?;

    let u = ae.targets(batch);
    let d = u.len();
    let mut z_hat = Array1::<T>::zeros(d);
    for h in &outputs {
        z_hat.iter_mut().zip(h).for_each(|(a, &b)| *a += b);
    }
    z_hat.mapv_inplace(|v| v / T::of_usize(two_n));
    let mut z = Array2::<T>::zeros((two_n, d));
    for (mut row, h) in z.axis_iter_mut(Axis(0)).zip(&outputs) {
        row.iter_mut().zip(h).zip(&z_hat).for_each(|((dst, &hv), &m)| *dst = (hv - m) * norm);
    }

    // Innovation matrix in the cubature space: A = Z Z^T + R I (2n x 2n).
    let mut a = z.dot(&z.t());
    for i in 0..two_n {
        a[[i, i]] += state.r;
    }
    let la = factor(&a, "innovation matrix", &mut state.jitter_events)?;

    let innov: Array1<T> = u.iter().zip(&z_hat).map(|(&t, &m)| t - m).collect();
    let mut c = z.dot(&innov).insert_axis(Axis(1));
    cholesky_solve(la.view(), &mut c);
    let gain_step = x.dot(&c.column(0));
    let updated: Vec<T> = mean.iter().zip(&gain_step).map(|(&m, &g)| m + g).collect();

    // P+ = P - X A^-1 Z Z^T X^T = R X A^-1 X^T, formed as R V^T V.
    let mut v = x.t().to_owned();
    solve_lower(la.view(), &mut v);
    let mut p = v.t().dot(&v);
    p.mapv_inplace(|e| e * state.r);
    symmetrize(&mut p);
    state.covariance = p;

    ae.set_params_flat(&updated)?;
    let pred = z_hat.into_shape_with_order(u.raw_dim()).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(ae.loss(&u, &pred)?.to_f64_lossy())
}
