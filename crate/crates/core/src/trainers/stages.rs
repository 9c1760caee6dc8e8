use rand::Rng;

use crate::channels::{Channel, FiberLinkParams, PropagationCounter, SsfmChannel};
use crate::metrics::MetricRecord;
use crate::neural::{Autoencoder, Mode};
use crate::rng;
use crate::{Result, Scalar};

use super::{train, Algorithm, RecordTags, TrainOutcome, TrainSchedule};

/// One leg of a multi-stage run.
#[derive(Clone, Debug)]
pub struct Stage<C> {
    pub name: String,
    pub channel: C,
    pub schedule: TrainSchedule,
    pub tags: RecordTags,
}

#[derive(Clone, Debug)]
pub struct StageOutcome {
    pub name: String,
    pub outcome: TrainOutcome,
}

impl Stage<SsfmChannel> {
    /// Pre-training on the short link (100 epochs), then training on the
    /// reference link (10 epochs). Both channels share one counter so
    /// record propagation counts are cumulative.
    pub fn default_pair(mode: Mode, order: usize, launch_power_dbm: f64) -> Result<[Self; 2]> {
        let counter = PropagationCounter::new();
        let base = match mode {
            Mode::Mi => TrainSchedule::mi(order),
            Mode::Gmi => TrainSchedule::gmi(order),
        };
        let tags = RecordTags {
            launch_power_dbm: Some(launch_power_dbm),
            quant_bits: None,
        };
        let make = |name: &str, link: FiberLinkParams, epochs: usize| -> Result<Self> {
            Ok(Stage {
                name: name.to_string(),
                channel: SsfmChannel::new(link, launch_power_dbm)?.with_counter(counter.clone()),
                schedule: TrainSchedule {
                    epochs,
                    ..base.clone()
                },
                tags,
            })
        };
        Ok([
            make("pretrain", FiberLinkParams::pretrain(), 100)?,
            make("train", FiberLinkParams::reference(), 10)?,
        ])
    }
}

/// Runs the stages in order on the same weights.
pub fn two_stage<T: Scalar, C: Channel<T>>(
    ae: &mut Autoencoder<T>,
    stages: &[Stage<C>],
    algorithm: &Algorithm,
    seed: u64,
) -> Result<Vec<StageOutcome>> {
    let mut out = Vec::with_capacity(stages.len());
    for (k, stage) in stages.iter().enumerate() {
        let stage_seed: u64 = rng::substream(seed, 100 + k as u64).random();
        log::info!("stage '{}' ({} epochs)", stage.name, stage.schedule.epochs);
        let outcome = train(ae, &stage.channel, &stage.schedule, algorithm, stage.tags, stage_seed)?;
        out.push(StageOutcome {
            name: stage.name.clone(),
            outcome,
        });
    }
    Ok(out)
}

/// First record whose MI reaches 99.5 % of the last record's MI.
pub fn convergence_point(records: &[MetricRecord]) -> Option<&MetricRecord> {
    let last = records.last()?.mi_bits?;
    records.iter().find(|r| r.mi_bits.is_some_and(|m| m >= 0.995 * last))
}
