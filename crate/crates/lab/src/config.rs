//! Run configuration files.
//!
//! A run is described by one TOML document. Syntax errors and schema
//! violations are reported with the line they occur on.

use std::path::{Path, PathBuf};

use gcs_core::channels::{
    AwgnChannel, ChannelModel, FiberLinkParams, NlinChannel, NlinParams, PropagationCounter, QuantizerMode,
    SsfmChannel,
};
use gcs_core::neural::Mode;
use gcs_core::trainers::{
    AdaptiveBatchConfig, Algorithm, BatchPolicy, CkfConfig, RlPolicyState, TrainSchedule,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
#[error("{file}:{line}: {msg}")]
pub struct ConfigError {
    pub file: String,
    pub line: usize,
    pub msg: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Nlin,
    Ssfm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    Bp,
    Rl,
    Ckf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LinkPreset {
    Reference,
    Pretrain,
}

impl LinkPreset {
    pub fn params(self) -> FiberLinkParams {
        match self {
            LinkPreset::Reference => FiberLinkParams::reference(),
            LinkPreset::Pretrain => FiberLinkParams::pretrain(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub id: String,
    pub mode: Mode,
    pub order: usize,
    /// Master seed; initialization, training and test streams derive from it.
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub precision: Precision,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub trainer: Option<TrainerConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub test: TestConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub launch_power_dbm: Option<f64>,
    /// DAC/ADC resolution; NLIN only.
    #[serde(default)]
    pub enob: Option<u32>,
    #[serde(default = "default_quantizer")]
    pub quantizer: QuantizerMode,
    /// Overrides the calibrated NLIN coefficients.
    #[serde(default)]
    pub nlin: Option<NlinParams>,
    /// Fiber link preset; `[channel.link]` keys override single fields.
    #[serde(default = "default_preset")]
    pub preset: LinkPreset,
    #[serde(default)]
    pub link: Option<toml::Table>,
}

fn default_quantizer() -> QuantizerMode {
    QuantizerMode::AdditiveUniformNoise
}

fn default_preset() -> LinkPreset {
    LinkPreset::Reference
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub algorithm: Option<AlgorithmKind>,
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub sample_set_size: Option<usize>,
    pub batch_size: Option<usize>,
    /// Defaults to on in GMI mode.
    pub adaptive_batch: Option<bool>,
    pub plateau_delta: Option<f64>,
    pub plateau_patience: Option<usize>,
    pub validation_every: Option<usize>,
    pub validation_symbols: Option<usize>,
    pub gmi_width: Option<usize>,
    pub policy_variance: Option<f64>,
    pub decoder_iterations: Option<usize>,
    pub encoder_iterations: Option<usize>,
    pub mean_baseline: Option<bool>,
    pub q: Option<f64>,
    pub r: Option<f64>,
    pub p0: Option<f64>,
    /// SSFM only: training legs on different links, run in order.
    #[serde(default)]
    pub stages: Vec<StageConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub name: String,
    pub preset: LinkPreset,
    pub epochs: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub launch_powers_dbm: Option<Vec<f64>>,
    pub quant_bits: Option<Vec<u32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    #[serde(default = "default_simulations")]
    pub simulations: usize,
    #[serde(default = "default_symbols")]
    pub symbols: usize,
    /// Evaluate this table instead of training.
    #[serde(default)]
    pub lut: Option<PathBuf>,
    /// Square QAM orders tested on the same noise realizations.
    #[serde(default)]
    pub qam_baselines: Vec<usize>,
}

fn default_simulations() -> usize {
    10
}

fn default_symbols() -> usize {
    100_000
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            simulations: default_simulations(),
            symbols: default_symbols(),
            lut: None,
            qam_baselines: Vec::new(),
        }
    }
}

/// Parsed configuration together with its source text.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
    pub file: String,
}

pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        file: file.clone(),
        line: 0,
        msg: e.to_string(),
    })?;
    parse(&text, &file)
}

pub fn parse(text: &str, file: &str) -> Result<LoadedConfig, ConfigError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError {
        file: file.to_string(),
        line: e.span().map_or(1, |s| line_of_offset(text, s.start)),
        msg: e.message().to_string(),
    })?;
    let loaded = LoadedConfig {
        config,
        text: text.to_string(),
        file: file.to_string(),
    };
    loaded.check()?;
    Ok(loaded)
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside table `table` ("" for the root), or of the table
/// header when the key is absent.
pub fn locate(text: &str, table: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header_line = 1;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == table {
                header_line = n + 1;
            }
            continue;
        }
        if current == table {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return n + 1;
                }
            }
        }
    }
    header_line
}

impl LoadedConfig {
    fn err(&self, table: &str, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError {
            file: self.file.clone(),
            line: locate(&self.text, table, key),
            msg: msg.into(),
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        if c.order < 2 || !c.order.is_power_of_two() {
            return Err(self.err("", "order", format!("order {} must be a power of two >= 2", c.order)));
        }
        let ch = &c.channel;
        match ch.kind {
            ChannelKind::Awgn => {
                if ch.snr_db.is_none() {
                    return Err(self.err("channel", "kind", "awgn channel needs snr_db"));
                }
            }
            ChannelKind::Nlin | ChannelKind::Ssfm => {
                if ch.launch_power_dbm.is_none() {
                    return Err(self.err("channel", "kind", "nlin and ssfm channels need launch_power_dbm"));
                }
            }
        }
        if ch.enob.is_some() && ch.kind != ChannelKind::Nlin {
            return Err(self.err("channel", "enob", "quantization is only modeled on the nlin channel"));
        }
        if let Some(np) = &ch.nlin {
            np.validate().map_err(|e| self.err("channel.nlin", "chi0", e.to_string()))?;
        }
        self.link(ch.preset)?;
        self.build_channel(None, None, PropagationCounter::new())?;

        if let Some(t) = &c.trainer {
            if t.algorithm.is_none() {
                return Err(self.err("trainer", "algorithm", "trainer block needs algorithm = bp | rl | ckf"));
            }
            self.schedule(None)
                .map_err(|e| self.err("trainer", "batch_size", e.to_string()))?;
            self.algorithm().map_err(|e| self.err("trainer", "algorithm", e.to_string()))?;
            if !t.stages.is_empty() && ch.kind != ChannelKind::Ssfm {
                return Err(self.err("trainer.stages", "name", "training stages need the ssfm channel"));
            }
        } else if c.test.lut.is_none() {
            return Err(self.err("test", "lut", "without a [trainer] block the [test] block needs a lut"));
        }
        if let Some(s) = &c.sweep {
            match (&s.launch_powers_dbm, &s.quant_bits) {
                (Some(_), Some(_)) | (None, None) => {
                    return Err(self.err("sweep", "", "sweep needs exactly one of launch_powers_dbm, quant_bits"));
                }
                (Some(p), None) if ch.kind == ChannelKind::Awgn || p.is_empty() => {
                    return Err(self.err("sweep", "launch_powers_dbm", "power sweep needs an nlin or ssfm channel and >= 1 power"));
                }
                (None, Some(b)) if ch.kind != ChannelKind::Nlin || b.iter().any(|&b| !(1..=16).contains(&b)) => {
                    return Err(self.err("sweep", "quant_bits", "quantization sweep needs the nlin channel and bits in 1..=16"));
                }
                _ => {}
            }
        }
        if c.test.simulations == 0 || c.test.symbols == 0 {
            return Err(self.err("test", "symbols", "test needs >= 1 simulation of >= 1 symbol"));
        }
        for &q in &c.test.qam_baselines {
            if gcs_core::constellation::square_qam::<f64>(q).is_err() {
                return Err(self.err("test", "qam_baselines", format!("{q} is not a square QAM order")));
            }
        }
        Ok(())
    }

    /// Preset with the `[channel.link]` overrides applied.
    pub fn link(&self, preset: LinkPreset) -> Result<FiberLinkParams, ConfigError> {
        let base = preset.params();
        let Some(over) = &self.config.channel.link else {
            return Ok(base);
        };
        let mut table = toml::Table::try_from(&base).expect("link params serialize");
        for (k, v) in over {
            if !table.contains_key(k) {
                return Err(self.err("channel.link", k, format!("unknown link parameter '{k}'")));
            }
            table.insert(k.clone(), v.clone());
        }
        let link: FiberLinkParams = table
            .try_into()
            .map_err(|e: toml::de::Error| self.err("channel.link", "", e.message().to_string()))?;
        link.validate().map_err(|e| self.err("channel.link", "", e.to_string()))?;
        Ok(link)
    }

    /// Channel of the config, optionally at another launch power or ENOB.
    pub fn build_channel(
        &self,
        power_dbm: Option<f64>,
        enob: Option<u32>,
        counter: PropagationCounter,
    ) -> Result<ChannelModel, ConfigError> {
        self.build_channel_on(self.config.channel.preset, power_dbm, enob, counter)
    }

    pub fn build_channel_on(
        &self,
        preset: LinkPreset,
        power_dbm: Option<f64>,
        enob: Option<u32>,
        counter: PropagationCounter,
    ) -> Result<ChannelModel, ConfigError> {
        let ch = &self.config.channel;
        let power = power_dbm.or(ch.launch_power_dbm).unwrap_or(0.0);
        Ok(match ch.kind {
            ChannelKind::Awgn => ChannelModel::Awgn(AwgnChannel::with_counter(ch.snr_db.unwrap_or(0.0), counter)),
            ChannelKind::Nlin => {
                let params = match ch.nlin {
                    Some(p) => p,
                    None => NlinParams::for_link(&self.link(preset)?),
                };
                let quant = enob.or(ch.enob).map(|b| (b, ch.quantizer));
                let nlin = NlinChannel::new(params, power, quant).map_err(|e| self.err("channel", "enob", e.to_string()))?;
                ChannelModel::Nlin(nlin.with_counter(counter))
            }
            ChannelKind::Ssfm => {
                let s = SsfmChannel::new(self.link(preset)?, power).map_err(|e| self.err("channel", "preset", e.to_string()))?;
                ChannelModel::Ssfm(s.with_counter(counter))
            }
        })
    }

    /// Training schedule; `epochs` overrides the trainer block.
    pub fn schedule(&self, epochs: Option<usize>) -> gcs_core::Result<TrainSchedule> {
        let c = &self.config;
        let t = c.trainer.clone().unwrap_or_default();
        let base = match c.mode {
            Mode::Mi => TrainSchedule::mi(c.order),
            Mode::Gmi => TrainSchedule::gmi(c.order),
        };
        let n = t.sample_set_size.unwrap_or(base.sample_set_size);
        let adaptive = t.adaptive_batch.unwrap_or(c.mode == Mode::Gmi);
        let batch = if adaptive {
            BatchPolicy::Adaptive(AdaptiveBatchConfig {
                initial: t.batch_size.unwrap_or(c.order),
                delta: t.plateau_delta.unwrap_or(1e-3),
                patience: t.plateau_patience.unwrap_or(10),
            })
        } else {
            BatchPolicy::Fixed(t.batch_size.unwrap_or(match c.mode {
                Mode::Mi => 32 * c.order,
                Mode::Gmi => c.order,
            }))
        };
        let s = TrainSchedule {
            sample_set_size: n,
            batch,
            epochs: epochs.or(t.epochs).unwrap_or(base.epochs),
            validation_every: t.validation_every.unwrap_or(base.validation_every),
            validation_symbols: t.validation_symbols.unwrap_or(base.validation_symbols),
            learning_rate: t.learning_rate.unwrap_or(base.learning_rate),
            ..base
        };
        s.validate()?;
        Ok(s)
    }

    pub fn algorithm(&self) -> gcs_core::Result<Algorithm> {
        let t = self.config.trainer.clone().unwrap_or_default();
        Ok(match t.algorithm.unwrap_or(AlgorithmKind::Bp) {
            AlgorithmKind::Bp => Algorithm::Bp,
            AlgorithmKind::Rl => {
                let d = RlPolicyState::default();
                let p = RlPolicyState {
                    sigma2: t.policy_variance.unwrap_or(d.sigma2),
                    decoder_iterations: t.decoder_iterations.unwrap_or(d.decoder_iterations),
                    encoder_iterations: t.encoder_iterations.unwrap_or(d.encoder_iterations),
                    mean_baseline: t.mean_baseline.unwrap_or(d.mean_baseline),
                };
                p.validate()?;
                Algorithm::Rl(p)
            }
            AlgorithmKind::Ckf => {
                let d = CkfConfig::default();
                let k = CkfConfig {
                    q: t.q.unwrap_or(d.q),
                    r: t.r.unwrap_or(d.r),
                    p0: t.p0.unwrap_or(d.p0),
                };
                k.validate()?;
                Algorithm::Ckf(k)
            }
        })
    }

    pub fn gmi_width(&self) -> usize {
        self.config.trainer.as_ref().and_then(|t| t.gmi_width).unwrap_or(256)
    }
}
