use crate::channels::{scatter_add, Channel};
use crate::neural::{flatten_grads, AdamState, Autoencoder};
use crate::rng::{self, SimRng};
use crate::{Cplx, Error, Result, Scalar};

use super::BatchTally;

/// Exploration policy and alternation of the policy-gradient trainer.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RlPolicyState {
    /// Variance of the complex Gaussian perturbation `w ~ CN(0, sigma2)`.
    pub sigma2: f64,
    pub decoder_iterations: usize,
    pub encoder_iterations: usize,
    /// Subtract the mean loss of the other batch samples before weighting
    /// the score.
    pub mean_baseline: bool,
}

impl Default for RlPolicyState {
    fn default() -> Self {
        Self {
            sigma2: 0.01,
            decoder_iterations: 20,
            encoder_iterations: 20,
            mean_baseline: false,
        }
    }
}

impl RlPolicyState {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "policy variance must be finite and > 0, got {}",
                self.sigma2
            )));
        }
        if self.decoder_iterations == 0 && self.encoder_iterations == 0 {
            return Err(Error::InvalidParameter("RL needs at least one iteration per batch".into()));
        }
        Ok(())
    }
}

/// Score-function estimate of `d/dx_k (1/B) sum_j l_j` for the perturbed
/// symbols `x_k + w_k`: `(l_k - b_k) 2 w_k / (B sigma2)`. The baseline
/// `b_k` is zero or the leave-one-out batch mean, which keeps the estimate
/// unbiased.
pub fn rl_surrogate_gradient<T: Scalar>(
    losses: &[T],
    perturbations: &[Cplx<T>],
    sigma2: f64,
    mean_baseline: bool,
) -> Result<Vec<Cplx<T>>> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!("policy variance must be > 0, got {sigma2}")));
    }
    if losses.len() != perturbations.len() {
        return Err(Error::LengthMismatch {
            what: "perturbations",
            expected: losses.len(),
            actual: perturbations.len(),
        });
    }
    if losses.is_empty() {
        return Err(Error::EmptyInput("loss batch"));
    }
    let n = losses.len();
    let b = T::of_usize(n);
    let total: T = losses.iter().copied().sum();
    let baseline = |l: T| {
        if mean_baseline && n > 1 {
            (total - l) / T::of_usize(n - 1)
        } else {
            T::zero()
        }
    };
    let k = T::of(2.0 / sigma2) / b;
    Ok(losses.iter().zip(perturbations).map(|(&l, w)| w * ((l - baseline(l)) * k)).collect())
}

/// Adam states of the two alternating phases.
#[derive(Clone, Debug)]
pub struct RlTrainer<T> {
    pub policy: RlPolicyState,
    pub adam_encoder: AdamState<T>,
    pub adam_decoder: AdamState<T>,
}

impl<T: Scalar> RlTrainer<T> {
    pub fn new(ae: &Autoencoder<T>, policy: RlPolicyState, learning_rate: T) -> Result<Self> {
        policy.validate()?;
        Ok(Self {
            policy,
            adam_encoder: AdamState::with_learning_rate(ae.encoder.weight_count(), learning_rate),
            adam_decoder: AdamState::with_learning_rate(ae.decoder.weight_count(), learning_rate),
        })
    }

    /// Decoder iterations on unperturbed symbols, then encoder iterations
    /// on perturbed ones. Returns the last decoder loss and the channel uses
    /// of each phase.
    pub fn step<C: Channel<T>>(
        &mut self,
        ae: &mut Autoencoder<T>,
        channel: &C,
        batch: &[usize],
        rng: &mut SimRng,
    ) -> Result<(f64, BatchTally)> {
        let u = ae.targets(batch);
        let mut tally = BatchTally::default();
        let mut last_loss = f64::NAN;

        let before = channel.counter().get();
        let pass = ae.encode()?;
        let x: Vec<Cplx<T>> = batch.iter().map(|&i| pass.points[i]).collect();
        let mut flat = Vec::new();
        for _ in 0..self.policy.decoder_iterations {
            let (y, _) = channel.propagate(&x, &pass.points, rng)?;
            let cache = ae.decode(&y)?;
            last_loss = ae.loss(&u, &cache.output)?.to_f64_lossy();
            let dz = ae.loss_grad(&u, &cache.output)?;
            let (g, _) = ae.decoder.backward(&cache, dz, false)?;
            flat.clear();
            flatten_grads(&g, &mut flat);
            let mut p = ae.decoder.params_flat();
            self.adam_decoder.update(&mut p, &flat)?;
            ae.decoder.set_params_flat(&p)?;
        }
        tally.decoder_phase = channel.counter().get() - before;

        let before = channel.counter().get();
        for _ in 0..self.policy.encoder_iterations {
            let pass = ae.encode()?;
            let w: Vec<Cplx<T>> = batch.iter().map(|_| rng::complex_normal(rng, self.policy.sigma2)).collect();
            let xp: Vec<Cplx<T>> = batch.iter().zip(&w).map(|(&i, w)| pass.points[i] + w).collect();
            let (y, _) = channel.propagate(&xp, &pass.points, rng)?;
            let s = ae.decoder.predict(Autoencoder::decoder_input(&y).view())?;
            let losses = ae.per_sample_loss(&u, &s)?;
            if self.policy.decoder_iterations == 0 {
                last_loss = (losses.iter().copied().sum::<T>() / T::of_usize(losses.len())).to_f64_lossy();
            }
            let gx = rl_surrogate_gradient(&losses, &w, self.policy.sigma2, self.policy.mean_baseline)?;
            let mut gp = vec![Cplx::new(T::zero(), T::zero()); ae.order()];
            scatter_add(&mut gp, batch, &gx);
            let g = ae.encoder_backward(&pass, &gp)?;
            flat.clear();
            flatten_grads(&g, &mut flat);
            let mut p = ae.encoder.params_flat();
            self.adam_encoder.update(&mut p, &flat)?;
            ae.encoder.set_params_flat(&p)?;
        }
        tally.encoder_phase = channel.counter().get() - before;
        Ok((last_loss, tally))
    }
}

/// Single RL batch with fresh Adam states; see [`RlTrainer::step`].
pub fn rl_step<T: Scalar, C: Channel<T>>(
    ae: &mut Autoencoder<T>,
    policy: &RlPolicyState,
    learning_rate: T,
    channel: &C,
    batch: &[usize],
    rng: &mut SimRng,
) -> Result<(f64, BatchTally)> {
    RlTrainer::new(ae, policy.clone(), learning_rate)?.step(ae, channel, batch, rng)
}
