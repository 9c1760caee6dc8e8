//! Training loops for the autoencoder.
//!
//! Three update rules share one epoch loop:
//!
//! - [`bp_step`]: gradient descent through the channel adjoint.
//! - [`rl_step`]: alternating decoder descent and score-function encoder
//!   updates; the channel is a black box.
//! - [`ckf_step`]: cubature Kalman filter over all weights; black box too.
//!
//! Every trainer counts channel uses through [`Channel::propagate`];
//! validation runs through the uncounted [`Channel::evaluate`].

mod bp;
mod ckf;
mod rl;
mod schedule;
mod stages;
mod validate;

pub use bp::bp_step;
pub use ckf::{ckf_step, CkfConfig, CkfState};
pub use rl::{rl_step, rl_surrogate_gradient, RlPolicyState, RlTrainer};
pub use schedule::{
    make_sample_set, AdaptiveBatch, AdaptiveBatchConfig, BatchDecision, BatchEvent, BatchPolicy, TrainSchedule,
};
pub use stages::{convergence_point, two_stage, Stage, StageOutcome};
pub use validate::{measure_constellation, test_constellation, validate};

use crate::channels::Channel;
use crate::metrics::MetricRecord;
use crate::neural::{AdamState, Autoencoder, Mode};
use crate::rng::{self, SimRng};
use crate::{Cplx, Error, Result, Scalar};

const TRAIN_STREAM: u64 = 0;
const LOSS_STREAM: u64 = 1;
const VALIDATION_STREAM: u64 = 1 << 32;

/// Channel uses of one batch. Joint updates (BP, CKF) fill `joint`; RL
/// splits its uses between the two phases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize)]
pub struct BatchTally {
    pub joint: u64,
    pub decoder_phase: u64,
    pub encoder_phase: u64,
}

impl BatchTally {
    pub fn total(&self) -> u64 {
        self.joint + self.decoder_phase + self.encoder_phase
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Algorithm {
    Bp,
    Rl(RlPolicyState),
    Ckf(CkfConfig),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Bp => "bp",
            Algorithm::Rl(_) => "rl",
            Algorithm::Ckf(_) => "ckf",
        }
    }
}

/// Launch power and DAC/ADC resolution copied into every record.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RecordTags {
    pub launch_power_dbm: Option<f64>,
    pub quant_bits: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct TrainOutcome {
    /// Epoch 0 (before training), every `validation_every` epochs and the
    /// last epoch.
    pub records: Vec<MetricRecord>,
    pub batch_tallies: Vec<BatchTally>,
    pub batch_events: Vec<BatchEvent>,
    /// Mean training loss per epoch (nats).
    pub epoch_losses: Vec<f64>,
    /// Loss on the fixed balanced set per epoch; adaptive batch only.
    pub validation_losses: Vec<f64>,
    pub epochs_run: usize,
    /// The adaptive batch reached the full sample set and plateaued.
    pub stopped_early: bool,
    /// CKF covariance factorizations that needed diagonal jitter.
    pub jitter_events: usize,
}

impl TrainOutcome {
    pub fn propagations(&self) -> u64 {
        self.batch_tallies.iter().map(BatchTally::total).sum()
    }

    pub fn final_record(&self) -> Option<&MetricRecord> {
        self.records.last()
    }
}

/// Trains `ae` in place with `algorithm` and returns the run log. The run is
/// a pure function of `seed`, the initial weights and the inputs.
pub fn train<T: Scalar, C: Channel<T>>(
    ae: &mut Autoencoder<T>,
    channel: &C,
    schedule: &TrainSchedule,
    algorithm: &Algorithm,
    tags: RecordTags,
    seed: u64,
) -> Result<TrainOutcome> {
    let lr = T::of(schedule.learning_rate);
    match algorithm {
        Algorithm::Bp => {
            if !channel.has_adjoint() {
                return Err(Error::NoAdjoint(channel.name().to_string()));
            }
            let mut adam = AdamState::with_learning_rate(ae.weight_count(), lr);
            run_epochs(ae, channel, schedule, tags, seed, |ae, batch, rng| {
                let before = channel.counter().get();
                let loss = bp_step(ae, &mut adam, channel, batch, rng)?;
                let tally = BatchTally {
                    joint: channel.counter().get() - before,
                    ..BatchTally::default()
                };
                Ok((loss, tally))
            })
        }
        Algorithm::Rl(policy) => {
            let mut trainer = RlTrainer::new(ae, policy.clone(), lr)?;
            run_epochs(ae, channel, schedule, tags, seed, |ae, batch, rng| {
                trainer.step(ae, channel, batch, rng)
            })
        }
        Algorithm::Ckf(cfg) => {
            let mut state = CkfState::new(ae.weight_count(), cfg)?;
            let mut out = run_epochs(ae, channel, schedule, tags, seed, |ae, batch, rng| {
                let before = channel.counter().get();
                let loss = ckf_step(ae, &mut state, channel, batch, rng)?;
                let tally = BatchTally {
                    joint: channel.counter().get() - before,
                    ..BatchTally::default()
                };
                Ok((loss, tally))
            })?;
            out.jitter_events = state.jitter_events;
            Ok(out)
        }
    }
}

/// Decoder loss on a fixed symbol set and fixed channel realization.
fn fixed_set_loss<T: Scalar, C: Channel<T>>(
    ae: &Autoencoder<T>,
    channel: &C,
    indices: &[usize],
    seed: u64,
) -> Result<f64> {
    let pass = ae.encode()?;
    let x: Vec<Cplx<T>> = indices.iter().map(|&i| pass.points[i]).collect();
    let y = channel.evaluate(&x, &pass.points, &mut rng::substream(seed, LOSS_STREAM))?;
    let s = ae.decode(&y)?.output;
    Ok(ae.loss(&ae.targets(indices), &s)?.to_f64_lossy())
}

fn run_epochs<T, C, F>(
    ae: &mut Autoencoder<T>,
    channel: &C,
    schedule: &TrainSchedule,
    tags: RecordTags,
    seed: u64,
    mut step: F,
) -> Result<TrainOutcome>
where
    T: Scalar,
    C: Channel<T>,
    F: FnMut(&mut Autoencoder<T>, &[usize], &mut SimRng) -> Result<(f64, BatchTally)>,
{
    schedule.validate()?;
    if ae.mode() != schedule.mode || ae.order() != schedule.order {
        return Err(Error::InvalidParameter(format!(
            "schedule is for {} M={}, autoencoder is {} M={}",
            schedule.mode.name(),
            schedule.order,
            ae.mode().name(),
            ae.order()
        )));
    }
    let record = |ae: &Autoencoder<T>, epoch: usize| -> Result<MetricRecord> {
        let mut vr = rng::substream(seed, VALIDATION_STREAM + epoch as u64);
        let r = validate(ae, channel, schedule.validation_symbols, &mut vr)?;
        log::info!(
            "epoch {epoch}: MI {:.4} GMI {:?} after {} channel uses",
            r.mi_bits.unwrap_or(f64::NAN),
            r.gmi_bits,
            r.propagations
        );
        Ok(MetricRecord {
            epoch,
            launch_power_dbm: tags.launch_power_dbm,
            quant_bits: tags.quant_bits,
            ..r
        })
    };

    let mut out = TrainOutcome {
        records: vec![record(ae, 0)?],
        ..TrainOutcome::default()
    };
    let mut train_rng = rng::substream(seed, TRAIN_STREAM);
    let mut controller = match &schedule.batch {
        BatchPolicy::Adaptive(cfg) => Some(AdaptiveBatch::new(cfg, schedule.sample_set_size)),
        BatchPolicy::Fixed(_) => None,
    };
    let loss_set = make_sample_set(
        Mode::Gmi,
        schedule.order,
        schedule.sample_set_size - schedule.sample_set_size % schedule.order,
        &mut rng::substream(seed, LOSS_STREAM),
    );

    for epoch in 1..=schedule.epochs {
        let batch = controller.as_ref().map_or(schedule.initial_batch(), AdaptiveBatch::batch_size);
        let set = make_sample_set(schedule.mode, schedule.order, schedule.sample_set_size, &mut train_rng);
        let mut acc = 0.0;
        let mut n = 0usize;
        for chunk in set.chunks(batch) {
            let (loss, tally) = step(ae, chunk, &mut train_rng)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("training loss {loss} at epoch {epoch}")));
            }
            acc += loss;
            n += 1;
            out.batch_tallies.push(tally);
        }
        out.epoch_losses.push(acc / n as f64);
        out.epochs_run = epoch;

        if let Some(c) = controller.as_mut() {
            let vl = fixed_set_loss(ae, channel, &loss_set, seed)?;
            out.validation_losses.push(vl);
            match c.observe(epoch, vl) {
                BatchDecision::Doubled(b) => log::info!("epoch {epoch}: loss plateau, batch size -> {b}"),
                BatchDecision::Stop => out.stopped_early = true,
                BatchDecision::Keep(_) => {}
            }
        }
        if epoch % schedule.validation_every == 0 || epoch == schedule.epochs || out.stopped_early {
            out.records.push(record(ae, epoch)?);
        }
        if out.stopped_early {
            log::info!("epoch {epoch}: plateau at full batch, stopping");
            break;
        }
    }
    if let Some(c) = controller {
        out.batch_events = c.events;
    }
    Ok(out)
}
