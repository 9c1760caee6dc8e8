use crate::channels::{scatter_add, Channel};
use crate::neural::{AdamState, Autoencoder, AutoencoderGrads};
use crate::rng::SimRng;
use crate::{Cplx, Result, Scalar};

/// One end-to-end gradient step on the batch of symbol indices. Uses the
/// channel once. Returns the batch loss in nats before the update.
pub fn bp_step<T: Scalar, C: Channel<T>>(
    ae: &mut Autoencoder<T>,
    adam: &mut AdamState<T>,
    channel: &C,
    batch: &[usize],
    rng: &mut SimRng,
) -> Result<f64> {
    let pass = ae.encode()?;
    let x: Vec<Cplx<T>> = batch.iter().map(|&i| pass.points[i]).collect();
    let (y, tape) = channel.propagate(&x, &pass.points, rng)?;
    let cache = ae.decode(&y)?;
    let u = ae.targets(batch);
    let loss = ae.loss(&u, &cache.output)?;
    let dz = ae.loss_grad(&u, &cache.output)?;
    let (decoder, grad_y) = ae.decoder_backward(&cache, dz)?;

    let cg = channel.adjoint(&tape, &grad_y)?;
    let mut grad_points = cg.constellation;
    scatter_add(&mut grad_points, batch, &cg.symbols);
    let encoder = ae.encoder_backward(&pass, &grad_points)?;

    let grads = AutoencoderGrads { encoder, decoder }.flatten();
    let mut p = ae.params_flat();
    adam.update(&mut p, &grads)?;
    ae.set_params_flat(&p)?;
    Ok(loss.to_f64_lossy())
}
