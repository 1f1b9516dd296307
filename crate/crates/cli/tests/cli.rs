use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rbsim_core::campaign::{self, files};
use rbsim_core::gateset;

const SMALL: &str = r#"
lengths = [1, 3, 8, 21]
sequences_per_length = 4
reps_per_sequence = 20
bootstrap_resamples = 50

[photon]
mean_bright = 1000.0
mean_dark = 0.0
mean_leaked = 0.0
"#;

fn rbsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("campaign.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_then_fit_zero_noise() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    let o = rbsim(&["run", "--config", &cfg, "--out", out_s, "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        files::RECORDS,
        files::REFERENCES,
        files::SEQUENCES,
        files::RECALIBRATION,
        files::CONFIG,
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let o = rbsim(&["fit", "--out", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join(files::FIT)).unwrap()).unwrap();
    assert_eq!(fit["epg_per_gate"].as_f64(), Some(0.0));
    assert_eq!(fit["bootstrap_se_epg_per_gate"].as_f64(), Some(0.0));
}

#[test]
fn truncated_records_report_missing_lengths() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(rbsim(&["run", "--config", &cfg, "--out", out_s])
        .status
        .success());
    let records = out.join(files::RECORDS);
    let text = fs::read_to_string(&records).unwrap();
    // Header plus lengths 1 and 3 only.
    let kept: Vec<&str> = text.lines().take(1 + 2 * 4 * 20).collect();
    fs::write(&records, kept.join("\n") + "\n").unwrap();
    let o = rbsim(&["fit", "--out", out_s]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("missing lengths [8, 21]"), "{err}");
}

#[test]
fn report_writes_plots_and_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let out_s = out.to_str().unwrap();
    assert!(rbsim(&["run", "--config", &cfg, "--out", out_s])
        .status
        .success());
    let o = rbsim(&["report", "--out", out_s]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        files::DECAY_SVG,
        files::HISTOGRAM_SVG,
        files::HISTOGRAM_CSV,
        files::LENGTH_CSV,
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let table = fs::read_to_string(out.join(files::HISTOGRAM_CSV)).unwrap();
    assert!(table.starts_with("count,bright_occurrences,dark_occurrences\n"));
}

#[test]
fn generate_writes_readable_sequences() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("gen");
    let o = rbsim(&[
        "generate",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "9",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let f = fs::File::open(out.join(files::SEQUENCES)).unwrap();
    let seqs = gateset::read_sequences(std::io::BufReader::new(f)).unwrap();
    assert_eq!(seqs.len(), 16);
    assert_eq!(seqs[0].seed, gateset::sequence_seed(9, 1, 0));
}

#[test]
fn sweep_detuning_writes_coefficient() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{SMALL}\n[sweep]\nsequences_per_length = 4\nreps_per_sequence = 20\n"),
    );
    let out = tmp.path().join("sweep");
    let o = rbsim(&[
        "sweep",
        "--axis",
        "detuning",
        "--values",
        "100,200,400",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: campaign::SweepReport =
        serde_json::from_str(&fs::read_to_string(out.join(files::SWEEP)).unwrap()).unwrap();
    assert_eq!(report.samples.len(), 3);
    assert_eq!(report.quadratic.unwrap().coefficient_unit, "1/Hz^2");
}

#[test]
fn bad_input_fails_with_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let o = rbsim(&["run", "--bogus"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage"));

    let cfg = write_config(tmp.path(), "lengths = [8, 3]\n");
    let o = rbsim(&["run", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("strictly increasing"), "{}", stderr(&o));

    let cfg = write_config(tmp.path(), "lengths = \"many\"\n");
    let o = rbsim(&["run", "--config", &cfg]);
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error:"));

    let o = rbsim(&["sweep", "--axis", "power"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("unknown sweep axis"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        campaign::CampaignConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 3);
}
