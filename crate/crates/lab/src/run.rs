//! Executing a run configuration: training, testing, sweeps and outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gcs_core::channels::{Channel, ChannelModel, PropagationCounter};
use gcs_core::constellation::{lut_to_string, load_lut, square_qam, BitLabeling, Constellation};
use gcs_core::metrics::{records_to_csv, MetricRecord, RECORD_HEADER};
use gcs_core::neural::{autoencoder_to_string, Autoencoder, Mode};
use gcs_core::rng;
use gcs_core::trainers::{test_constellation, two_stage, BatchEvent, RecordTags, Stage, StageOutcome};
use gcs_core::Scalar;
use rand::Rng;
use rayon::prelude::*;

use crate::config::{ChannelKind, LoadedConfig, Precision};
use crate::output::{constellation_svg, line_plot_svg, write_manifest, Series};

/// Worker count for sweep points; unset means one per core.
pub const WORKERS_ENV: &str = "GCS_LAB_WORKERS";

const INIT_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;
const TEST_STREAM: u64 = 3;

fn derive_seed(seed: u64, stream: u64) -> u64 {
    rng::substream(seed, stream).random()
}

pub const RESULTS_HEADER_PREFIX: &str = "constellation,";

/// What to vary across test points.
#[derive(Clone, Debug, PartialEq)]
pub enum Sweep {
    None,
    LaunchPower(Vec<f64>),
    Quantization(Vec<u32>),
}

/// One tested constellation at one sweep point.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub constellation: String,
    pub record: MetricRecord,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub rows: Vec<ResultRow>,
    /// Training record streams by file stem, e.g. `metrics.train`.
    pub training: Vec<(String, Vec<MetricRecord>)>,
    /// Adaptive batch doublings by file stem, e.g. `batches.enob8.train`.
    pub batch_events: Vec<(String, Vec<BatchEvent>)>,
    /// Learned or loaded constellations by sweep tag ("" for single runs).
    pub constellations: Vec<(String, Constellation<f64>, Option<BitLabeling>)>,
}

impl RunSummary {
    pub fn row<'a>(&'a self, constellation: &'a str) -> impl Iterator<Item = &'a MetricRecord> + 'a {
        self.rows.iter().filter(move |r| r.constellation == constellation).map(|r| &r.record)
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut s = format!("{RESULTS_HEADER_PREFIX}{RECORD_HEADER}\n");
    for r in rows {
        let line = records_to_csv(std::slice::from_ref(&r.record));
        writeln!(s, "{},{}", r.constellation, line.lines().nth(1).unwrap_or("")).unwrap();
    }
    s
}

fn pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{WORKERS_ENV}='{v}' is not a worker count"))?;
        b = b.num_threads(n.max(1));
    }
    Ok(b.build()?)
}

/// Sweep from the config's `[sweep]` block.
pub fn configured_sweep(cfg: &LoadedConfig) -> Sweep {
    match &cfg.config.sweep {
        Some(s) => match (&s.launch_powers_dbm, &s.quant_bits) {
            (Some(p), _) => Sweep::LaunchPower(p.clone()),
            (None, Some(b)) => Sweep::Quantization(b.clone()),
            _ => Sweep::None,
        },
        None => Sweep::None,
    }
}

pub fn execute(cfg: &LoadedConfig, sweep: &Sweep) -> Result<RunSummary> {
    match cfg.config.precision {
        Precision::F64 => execute_as::<f64>(cfg, sweep),
        Precision::F32 => execute_as::<f32>(cfg, sweep),
    }
}

struct Learned<T> {
    tag: String,
    constellation: Constellation<T>,
    labeling: Option<BitLabeling>,
    model: Option<Autoencoder<T>>,
    stages: Vec<StageOutcome>,
}

#[derive(Clone, Copy)]
struct Point {
    power: Option<f64>,
    enob: Option<u32>,
}

impl Point {
    fn tags(&self) -> RecordTags {
        RecordTags {
            launch_power_dbm: self.power,
            quant_bits: self.enob.map(f64::from),
        }
    }
}

fn base_point(cfg: &LoadedConfig) -> Point {
    let ch = &cfg.config.channel;
    Point {
        power: (ch.kind != ChannelKind::Awgn).then(|| ch.launch_power_dbm.unwrap_or(0.0)),
        enob: ch.enob,
    }
}

fn learn<T: Scalar>(cfg: &LoadedConfig, point: Point, tag: &str) -> Result<Learned<T>> {
    let c = &cfg.config;
    let Some(tr) = &c.trainer else {
        let path = c.test.lut.as_ref().expect("checked at load");
        let lut = load_lut::<T>(path, true).with_context(|| format!("loading {}", path.display()))?;
        if lut.constellation.order() != c.order {
            anyhow::bail!("{}: table has {} points, config order is {}", path.display(), lut.constellation.order(), c.order);
        }
        if c.mode == Mode::Gmi && lut.labeling.is_none() {
            anyhow::bail!("{}: gmi mode needs a labeled table", path.display());
        }
        return Ok(Learned {
            tag: tag.to_string(),
            constellation: lut.constellation,
            labeling: lut.labeling,
            model: None,
            stages: Vec::new(),
        });
    };
    let mut init = rng::substream(c.seed, INIT_STREAM);
    let mut ae = match c.mode {
        Mode::Mi => Autoencoder::<T>::mi_glorot(c.order, &mut init)?,
        Mode::Gmi => Autoencoder::<T>::gmi_glorot_with_width(c.order, cfg.gmi_width(), &mut init)?,
    };
    let counter = PropagationCounter::new();
    let stages: Vec<Stage<ChannelModel>> = if tr.stages.is_empty() {
        vec![Stage {
            name: "train".into(),
            channel: cfg.build_channel(point.power, point.enob, counter)?,
            schedule: cfg.schedule(None)?,
            tags: point.tags(),
        }]
    } else {
        tr.stages
            .iter()
            .map(|s| {
                Ok(Stage {
                    name: s.name.clone(),
                    channel: cfg.build_channel_on(s.preset, point.power, point.enob, counter.clone())?,
                    schedule: cfg.schedule(Some(s.epochs))?,
                    tags: point.tags(),
                })
            })
            .collect::<Result<_>>()?
    };
    let train_seed = derive_seed(c.seed, TRAIN_STREAM);
    let outcomes = two_stage(&mut ae, &stages, &cfg.algorithm()?, train_seed)?;
    Ok(Learned {
        tag: tag.to_string(),
        constellation: ae.constellation()?,
        labeling: ae.labeling(),
        model: Some(ae),
        stages: outcomes,
    })
}

fn test_point<T: Scalar>(
    cfg: &LoadedConfig,
    name: &str,
    c: &Constellation<T>,
    labeling: Option<&BitLabeling>,
    point: Point,
    epoch: usize,
    propagations: u64,
) -> Result<ResultRow> {
    let t = &cfg.config.test;
    let channel = cfg.build_channel(point.power, point.enob, PropagationCounter::new())?;
    let seed = derive_seed(cfg.config.seed, TEST_STREAM);
    let (mi, gmi) = test_constellation(c, labeling, &channel, t.simulations, t.symbols, seed)?;
    Ok(ResultRow {
        constellation: name.to_string(),
        record: MetricRecord {
            epoch,
            propagations,
            launch_power_dbm: point.power,
            quant_bits: point.enob.map(f64::from),
            mi_bits: Some(mi),
            gmi_bits: gmi,
        },
    })
}

/// Learned constellation and QAM baselines at one point, baselines on the
/// same test seed.
fn test_all<T: Scalar>(cfg: &LoadedConfig, learned: &Learned<T>, point: Point) -> Result<Vec<ResultRow>> {
    let epochs: usize = learned.stages.iter().map(|s| s.outcome.epochs_run).sum();
    let props: u64 = learned.stages.iter().map(|s| s.outcome.propagations()).sum();
    let mut rows = vec![test_point(cfg, "gcs", &learned.constellation, learned.labeling.as_ref(), point, epochs, props)?];
    for &q in &cfg.config.test.qam_baselines {
        let (c, l) = square_qam::<T>(q)?;
        rows.push(test_point(cfg, &format!("qam{q}"), &c, Some(&l), point, 0, 0)?);
    }
    Ok(rows)
}

fn execute_as<T: Scalar>(cfg: &LoadedConfig, sweep: &Sweep) -> Result<RunSummary> {
    let out = cfg.config.output_dir.clone();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    std::fs::write(out.join("config.toml"), &cfg.text)?;
    let base = base_point(cfg);
    let pool = pool()?;

    let (learned, rows): (Vec<Learned<T>>, Vec<ResultRow>) = match sweep {
        Sweep::None => {
            let l = learn::<T>(cfg, base, "")?;
            let rows = test_all(cfg, &l, base)?;
            (vec![l], rows)
        }
        Sweep::LaunchPower(powers) => {
            let l = learn::<T>(cfg, base, "")?;
            let per: Vec<Vec<ResultRow>> = pool.install(|| {
                powers
                    .par_iter()
                    .map(|&p| test_all(cfg, &l, Point { power: Some(p), ..base }))
                    .collect::<Result<_>>()
            })?;
            (vec![l], per.into_iter().flatten().collect())
        }
        Sweep::Quantization(bits) => {
            let per: Vec<(Learned<T>, Vec<ResultRow>)> = pool.install(|| {
                bits.par_iter()
                    .map(|&b| {
                        let point = Point { enob: Some(b), ..base };
                        let l = learn::<T>(cfg, point, &format!("enob{b}"))?;
                        let rows = test_all(cfg, &l, point)?;
                        Ok((l, rows))
                    })
                    .collect::<Result<_>>()
            })?;
            let (l, r): (Vec<_>, Vec<_>) = per.into_iter().unzip();
            (l, r.into_iter().flatten().collect())
        }
    };

    let mut summary = RunSummary {
        output_dir: out.clone(),
        rows,
        training: Vec::new(),
        batch_events: Vec::new(),
        constellations: Vec::new(),
    };
    for l in &learned {
        let dot = |s: &str| if l.tag.is_empty() { String::new() } else { format!("{s}{}", l.tag) };
        for s in &l.stages {
            let stem = format!("metrics{}.{}", dot("."), s.name);
            std::fs::write(out.join(format!("{stem}.csv")), records_to_csv(&s.outcome.records))?;
            summary.training.push((stem, s.outcome.records.clone()));
            if !s.outcome.batch_events.is_empty() {
                let stem = format!("batches{}.{}", dot("."), s.name);
                let mut csv = String::from("epoch,batch_size\n");
                for e in &s.outcome.batch_events {
                    writeln!(csv, "{},{}", e.epoch, e.batch_size).unwrap();
                }
                std::fs::write(out.join(format!("{stem}.csv")), csv)?;
                summary.batch_events.push((stem, s.outcome.batch_events.clone()));
            }
        }
        let lut_name = format!("lut{}.csv", dot("."));
        std::fs::write(out.join(&lut_name), lut_to_string(&l.constellation, l.labeling.as_ref())?)?;
        if let Some(m) = &l.model {
            std::fs::write(out.join(format!("model{}.txt", dot("."))), autoencoder_to_string(m))?;
        }
        let pts: Vec<(f64, f64)> = l.constellation.points().iter().map(|p| (p.re.to_f64_lossy(), p.im.to_f64_lossy())).collect();
        let title = if l.tag.is_empty() { cfg.config.id.clone() } else { format!("{} {}", cfg.config.id, l.tag) };
        std::fs::write(out.join(format!("constellation{}.svg", dot("."))), constellation_svg(&title, &pts))?;
        summary.constellations.push((l.tag.clone(), l.constellation.cast::<f64>(), l.labeling.clone()));
    }
    std::fs::write(out.join("results.csv"), results_csv(&summary.rows))?;
    std::fs::write(out.join("plot.svg"), plot(cfg, sweep, &summary))?;
    write_manifest(&out)?;
    Ok(summary)
}

fn plot(cfg: &LoadedConfig, sweep: &Sweep, s: &RunSummary) -> String {
    let metric = |r: &MetricRecord| match cfg.config.mode {
        Mode::Gmi => r.gmi_bits.or(r.mi_bits),
        Mode::Mi => r.mi_bits,
    };
    let y_label = match cfg.config.mode {
        Mode::Mi => "MI [bit/symbol]",
        Mode::Gmi => "GMI [bit/symbol]",
    };
    let mut names: Vec<&str> = s.rows.iter().map(|r| r.constellation.as_str()).collect();
    names.dedup();
    names.sort();
    names.dedup();
    let x_of: Option<(&str, fn(&MetricRecord) -> Option<f64>)> = match sweep {
        Sweep::LaunchPower(_) => Some(("launch power [dBm]", |r| r.launch_power_dbm)),
        Sweep::Quantization(_) => Some(("quantization bits", |r| r.quant_bits)),
        Sweep::None => None,
    };
    match x_of {
        Some((x_label, x)) => {
            let series: Vec<Series> = names
                .iter()
                .map(|n| Series {
                    label: n.to_string(),
                    points: s.row(n).filter_map(|r| Some((x(r)?, metric(r)?))).collect(),
                })
                .collect();
            line_plot_svg(&cfg.config.id, x_label, y_label, &series)
        }
        None => {
            let series: Vec<Series> = s
                .training
                .iter()
                .map(|(stem, recs)| Series {
                    label: stem.trim_start_matches("metrics.").to_string(),
                    points: recs.iter().filter_map(|r| Some((r.epoch as f64, metric(r)?))).collect(),
                })
                .collect();
            line_plot_svg(&cfg.config.id, "epoch", y_label, &series)
        }
    }
}

/// Record streams of every `metrics.*.csv` under `dir` (one level of
/// subdirectories), labeled by relative path.
pub fn collect_records(dir: &Path) -> Result<Vec<(String, Vec<MetricRecord>)>> {
    let mut files = Vec::new();
    let mut visit = |d: &Path, prefix: &str| -> Result<()> {
        for e in std::fs::read_dir(d).with_context(|| format!("reading {}", d.display()))? {
            let e = e?;
            let name = e.file_name().to_string_lossy().into_owned();
            if e.file_type()?.is_file() && name.starts_with("metrics.") && name.ends_with(".csv") {
                files.push((format!("{prefix}{}", name.trim_end_matches(".csv")), e.path()));
            }
        }
        Ok(())
    };
    visit(dir, "")?;
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_dir()).unwrap_or(false))
        .map(|e| e.path())
        .collect();
    subdirs.sort();
    for sd in subdirs {
        let prefix = format!("{}/", sd.file_name().unwrap().to_string_lossy());
        visit(&sd, &prefix)?;
    }
    files.sort();
    files
        .into_iter()
        .map(|(label, path)| {
            let text = std::fs::read_to_string(&path)?;
            let recs = gcs_core::metrics::parse_records(&text).with_context(|| path.display().to_string())?;
            Ok((label, recs))
        })
        .collect()
}

/// Counter shared with a channel, for tests that inspect usage.
pub fn channel_counter(ch: &ChannelModel) -> u64 {
    Channel::<f64>::counter(ch).get()
}
