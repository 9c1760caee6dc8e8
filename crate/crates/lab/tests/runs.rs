use std::path::Path;
use std::process::Command;

use gcs_core::constellation::{save_lut, square_qam};
use gcs_core::metrics::parse_records;
use gcs_lab::run::{execute, Sweep};

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p
}

fn awgn_config(out: &Path) -> String {
    format!(
        r#"id = "awgn"
mode = "mi"
order = 16
seed = 4
output_dir = "{}"

[channel]
kind = "awgn"
snr_db = 12.0

[trainer]
algorithm = "bp"
batch_size = 256
epochs = 6
validation_every = 2
validation_symbols = 2000

[test]
simulations = 2
symbols = 5000
qam_baselines = [16]
"#,
        out.display()
    )
}

#[test]
fn rerun_gives_identical_bytes_and_creates_missing_dirs() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("nested/deeper/out");
    let cfg = gcs_lab::load(&write_config(d.path(), &awgn_config(&out))).unwrap();
    execute(&cfg, &Sweep::None).unwrap();
    let names = ["results.csv", "metrics.train.csv", "lut.csv", "model.txt", "config.toml", "manifest.txt"];
    let first: Vec<Vec<u8>> = names.iter().map(|n| std::fs::read(out.join(n)).unwrap()).collect();
    execute(&cfg, &Sweep::None).unwrap();
    for (n, a) in names.iter().zip(&first) {
        assert_eq!(&std::fs::read(out.join(n)).unwrap(), a, "{n}");
    }
    let recs = parse_records(&String::from_utf8(first[1].clone()).unwrap()).unwrap();
    assert_eq!(recs.iter().map(|r| r.epoch).collect::<Vec<_>>(), [0, 2, 4, 6]);
}

#[test]
fn table_only_config_evaluates_without_training() {
    let d = tempfile::tempdir().unwrap();
    let (c, l) = square_qam::<f64>(16).unwrap();
    let lut = d.path().join("qam16.csv");
    save_lut(&c, Some(&l), &lut).unwrap();
    let out = d.path().join("out");
    let body = format!(
        "id = \"t\"\nmode = \"gmi\"\norder = 16\nseed = 2\noutput_dir = \"{}\"\n\n[channel]\nkind = \"awgn\"\nsnr_db = 14.0\n\n[test]\nsimulations = 2\nsymbols = 20000\nlut = \"{}\"\nqam_baselines = [16]\n",
        out.display(),
        lut.display()
    );
    let s = execute(&gcs_lab::load(&write_config(d.path(), &body)).unwrap(), &Sweep::None).unwrap();
    assert!(s.training.is_empty());
    assert!(!out.join("metrics.train.csv").exists());
    // the table is 16QAM itself and shares the test noise with the baseline
    let gcs = s.row("gcs").next().unwrap();
    let qam = s.row("qam16").next().unwrap();
    assert_eq!((gcs.epoch, gcs.propagations), (0, 0));
    assert!((gcs.mi_bits.unwrap() - qam.mi_bits.unwrap()).abs() < 1e-9);
    assert!((gcs.gmi_bits.unwrap() - qam.gmi_bits.unwrap()).abs() < 1e-9);
}

#[test]
fn gmi_of_unlabeled_table_is_refused() {
    let d = tempfile::tempdir().unwrap();
    let (c, _) = square_qam::<f64>(16).unwrap();
    let lut = d.path().join("plain.csv");
    save_lut(&c, None, &lut).unwrap();
    let body = format!(
        "id = \"t\"\nmode = \"gmi\"\norder = 16\nseed = 2\noutput_dir = \"{}\"\n\n[channel]\nkind = \"awgn\"\nsnr_db = 14.0\n\n[test]\nlut = \"{}\"\n",
        d.path().join("out").display(),
        lut.display()
    );
    let err = execute(&gcs_lab::load(&write_config(d.path(), &body)).unwrap(), &Sweep::None).unwrap_err();
    assert!(err.to_string().contains("labeled"), "{err}");
}

#[test]
fn nlin_power_sweep_is_unimodal() {
    let d = tempfile::tempdir().unwrap();
    let (c, l) = square_qam::<f64>(64).unwrap();
    let lut = d.path().join("qam64.csv");
    save_lut(&c, Some(&l), &lut).unwrap();
    let body = format!(
        "id = \"p\"\nmode = \"mi\"\norder = 64\nseed = 3\noutput_dir = \"{}\"\n\n[channel]\nkind = \"nlin\"\nlaunch_power_dbm = 0.0\n\n[test]\nsimulations = 1\nsymbols = 50000\nlut = \"{}\"\n",
        d.path().join("out").display(),
        lut.display()
    );
    let cfg = gcs_lab::load(&write_config(d.path(), &body)).unwrap();
    let powers: Vec<f64> = (-5..=5).map(|k| 2.0 * k as f64).chain([-30.0]).collect();
    let s = execute(&cfg, &Sweep::LaunchPower(powers.clone())).unwrap();
    let rows: Vec<_> = s.row("gcs").collect();
    assert_eq!(rows.len(), powers.len());
    for (r, p) in rows.iter().zip(&powers) {
        assert_eq!(r.launch_power_dbm, Some(*p));
    }
    let mi: Vec<f64> = rows[..11].iter().map(|r| r.mi_bits.unwrap()).collect();
    let peak = (0..mi.len()).max_by(|&a, &b| mi[a].total_cmp(&mi[b])).unwrap();
    assert!(peak > 0 && peak < mi.len() - 1, "{mi:?}");
    assert!(mi[..=peak].windows(2).all(|w| w[1] > w[0]), "{mi:?}");
    assert!(mi[peak..].windows(2).all(|w| w[1] < w[0]), "{mi:?}");
    assert!(rows[11].mi_bits.unwrap() < mi[peak]);
    let csv = std::fs::read_to_string(d.path().join("out/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + powers.len());
}

#[test]
fn quantization_sweep_exports_one_table_per_enob() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("out");
    let body = format!(
        "id = \"q\"\nmode = \"mi\"\norder = 16\nseed = 9\noutput_dir = \"{}\"\n\n[channel]\nkind = \"nlin\"\nlaunch_power_dbm = 0.0\n\n[trainer]\nalgorithm = \"bp\"\nepochs = 2\nvalidation_every = 1\nvalidation_symbols = 1000\n\n[sweep]\nquant_bits = [3, 5]\n\n[test]\nsimulations = 1\nsymbols = 2000\nqam_baselines = [16]\n",
        out.display()
    );
    let cfg = gcs_lab::load(&write_config(d.path(), &body)).unwrap();
    let s = execute(&cfg, &gcs_lab::run::configured_sweep(&cfg)).unwrap();
    for b in [3, 5] {
        assert!(out.join(format!("lut.enob{b}.csv")).exists());
        let recs = parse_records(&std::fs::read_to_string(out.join(format!("metrics.enob{b}.train.csv"))).unwrap()).unwrap();
        assert!(recs.iter().all(|r| r.quant_bits == Some(b as f64)));
    }
    assert_eq!(s.rows.len(), 4);
    assert_eq!(s.constellations.len(), 2);
}

#[test]
fn cli_reports_config_errors_with_line() {
    let d = tempfile::tempdir().unwrap();
    let body = awgn_config(&d.path().join("out")).replace("epochs = 6", "epochs = 6\nepohcs = 7");
    let cfg = write_config(d.path(), &body);
    let out = Command::new(env!("CARGO_BIN_EXE_gcs-lab")).arg("run").arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("{}:15:", cfg.display())), "{err}");
}

#[test]
fn cli_run_then_report() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("out");
    let cfg = write_config(d.path(), &awgn_config(&out));
    let bin = env!("CARGO_BIN_EXE_gcs-lab");
    assert!(Command::new(bin).arg("run").arg(&cfg).env("RUST_LOG", "warn").output().unwrap().status.success());
    let rep = Command::new(bin).arg("report").arg(&out).output().unwrap();
    assert!(rep.status.success());
    let table = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert!(table.lines().nth(1).unwrap().starts_with("metrics.train,6,"), "{table}");
    let lut = d.path().join("exported.csv");
    let exp = Command::new(bin).args(["lut", "export"]).arg(out.join("model.txt")).arg(&lut).output().unwrap().status;
    assert!(exp.success());
    assert_eq!(std::fs::read(&lut).unwrap(), std::fs::read(out.join("lut.csv")).unwrap());
    let imp = Command::new(bin).args(["lut", "import"]).arg(&lut).output().unwrap();
    assert!(String::from_utf8_lossy(&imp.stdout).contains("16 points"));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = gcs_lab::load(&path).unwrap_or_else(|e| panic!("{e}"));
            if cfg.config.trainer.is_some() {
                cfg.schedule(None).unwrap();
                cfg.algorithm().unwrap();
            }
            n += 1;
        }
    }
    assert!(n >= 9, "found {n} configs");
}
