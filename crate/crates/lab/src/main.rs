use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gcs_core::channels::{calibrate_nlin, FiberLinkParams};
use gcs_core::constellation::{load_lut, normalize, save_lut, square_qam};
use gcs_core::neural::load_autoencoder;
use gcs_lab::analysis::{convergence_csv, convergence_report, distinct_points, DEFAULT_MERGE_TOL};
use gcs_lab::config::{self, LinkPreset};
use gcs_lab::run::{collect_records, configured_sweep, execute, Sweep};

#[derive(Parser)]
#[command(name = "gcs-lab", version, about = "Train and test learned optical constellations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train (if configured) and test, using the config's own sweep block.
    Run { config: PathBuf },
    /// Train once, then test at each launch power.
    SweepPower {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        powers: Vec<f64>,
    },
    /// One training per ENOB; accepts `3..8` or a comma list.
    SweepQuant {
        config: PathBuf,
        #[arg(long, default_value = "3..8")]
        bits: String,
    },
    /// Convergence table over every metrics.*.csv in a results directory.
    Report { dir: PathBuf },
    #[command(subcommand)]
    Lut(LutCommand),
    /// Collapsed-point analysis of a LUT.
    Distinct {
        lut: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MERGE_TOL)]
        tol: f64,
    },
    /// Fit NLIN coefficients against split-step runs of a link preset.
    CalibrateNlin {
        #[arg(long, value_enum, default_value = "reference")]
        preset: LinkPreset,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "-1,1,3")]
        powers: Vec<f64>,
        #[arg(long, default_value_t = 4096)]
        symbols: usize,
        #[arg(long)]
        sps: Option<usize>,
        #[arg(long)]
        step_km: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum LutCommand {
    /// Write the constellation of a model checkpoint as a LUT.
    Export { model: PathBuf, out: PathBuf },
    /// Check a LUT file, optionally writing a renormalized copy.
    Import {
        lut: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_bits(s: &str) -> Result<Vec<u32>> {
    let bits: Vec<u32> = match s.split_once("..") {
        Some((a, b)) => {
            let (a, b): (u32, u32) = (a.trim().parse()?, b.trim().trim_start_matches('=').parse()?);
            (a..=b).collect()
        }
        None => s.split(',').map(|v| v.trim().parse()).collect::<Result<_, _>>()?,
    };
    if bits.is_empty() {
        bail!("empty bit list '{s}'");
    }
    Ok(bits)
}

fn run_config(path: &PathBuf, sweep: Option<Sweep>) -> Result<()> {
    let cfg = config::load(path)?;
    let sweep = sweep.unwrap_or_else(|| configured_sweep(&cfg));
    let summary = execute(&cfg, &sweep)?;
    println!("results in {}", summary.output_dir.display());
    for r in &summary.rows {
        let rec = &r.record;
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<8} P={:>6} enob={:>3} MI={} GMI={}",
            r.constellation,
            fmt(rec.launch_power_dbm),
            fmt(rec.quant_bits),
            fmt(rec.mi_bits),
            fmt(rec.gmi_bits)
        );
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config } => run_config(&config, None),
        Command::SweepPower { config, powers } => run_config(&config, Some(Sweep::LaunchPower(powers))),
        Command::SweepQuant { config, bits } => run_config(&config, Some(Sweep::Quantization(parse_bits(&bits)?))),
        Command::Report { dir } => {
            let runs = collect_records(&dir)?;
            let rows = convergence_report(&runs)?;
            let csv = convergence_csv(&rows);
            std::fs::write(dir.join("convergence.csv"), &csv)?;
            print!("{csv}");
            Ok(())
        }
        Command::Lut(LutCommand::Export { model, out }) => {
            let ae = load_autoencoder::<f64>(&model).with_context(|| model.display().to_string())?;
            save_lut(&ae.constellation()?, ae.labeling().as_ref(), &out)?;
            println!("wrote {} ({} points)", out.display(), ae.order());
            Ok(())
        }
        Command::Lut(LutCommand::Import { lut, out }) => {
            let l = load_lut::<f64>(&lut, true).with_context(|| lut.display().to_string())?;
            let c = &l.constellation;
            println!(
                "{}: {} points, labeled: {}, min distance {:.4}",
                lut.display(),
                c.order(),
                l.labeling.is_some(),
                c.min_distance()
            );
            if let Some(out) = out {
                save_lut(c, l.labeling.as_ref(), &out)?;
            }
            Ok(())
        }
        Command::Distinct { lut, tol } => {
            let l = load_lut::<f64>(&lut, true).with_context(|| lut.display().to_string())?;
            let d = distinct_points(&l.constellation, l.labeling.as_ref(), tol);
            println!("{} distinct points of {} at tol {tol}", d.count(), l.constellation.order());
            for c in d.clusters.iter().filter(|c| c.members.len() > 1) {
                println!("  {} points {:?} shared bits {} ({})", c.members.len(), c.members, c.shared_count(), c.mask());
            }
            Ok(())
        }
        Command::CalibrateNlin { preset, powers, symbols, sps, step_km, seed } => {
            let mut link: FiberLinkParams = preset.params();
            if let Some(s) = sps {
                link.sps = s;
            }
            if let Some(s) = step_km {
                link.step_size = s;
            }
            let mut cs = Vec::new();
            for m in [4, 16, 64] {
                cs.push(square_qam::<f64>(m)?.0);
            }
            let mut r = gcs_core::rng::seeded(seed);
            let cloud: Vec<_> = (0..4096).map(|_| gcs_core::rng::complex_normal::<f64>(&mut r, 1.0)).collect();
            cs.push(normalize(&cloud)?);
            let cal = calibrate_nlin(&link, &cs, &powers, symbols, seed)?;
            println!("{:?}", cal.params);
            println!("max relative error {:.3}", cal.max_relative_error());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
