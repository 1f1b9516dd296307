use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use rbsim_core::analysis;
use rbsim_core::campaign::{self, files, CampaignConfig, SweepAxis};
use rbsim_core::gateset;

#[derive(Parser)]
#[command(
    name = "rbsim",
    version,
    about = "Single-qubit randomized benchmarking simulator"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Campaign config (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config's output_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the campaign's gate sequences and write them as JSON lines.
    Generate,
    /// Run a campaign and write the raw records.
    Run,
    /// Fit the decay curve of a records file.
    Fit {
        /// Records CSV; defaults to records.csv in the output directory.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Skip the bootstrap error bar.
        #[arg(long)]
        no_bootstrap: bool,
    },
    /// Run reduced campaigns over one noise channel.
    Sweep {
        #[arg(long, value_parser = parse_axis)]
        axis: SweepAxis,
        /// Comma-separated values; the axis defaults otherwise.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Write SVG plots and CSV tables from a run's output directory.
    Report {
        /// Directory holding records.csv and references.csv; defaults to
        /// the output directory.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse()
}

impl Common {
    fn config(&self) -> Result<CampaignConfig> {
        let mut c = match &self.config {
            Some(p) => CampaignConfig::load(p)?,
            None => CampaignConfig::default(),
        };
        if let Some(seed) = self.seed {
            c.master_seed = seed;
        }
        if let Some(out) = &self.out {
            c.output_dir = out.clone();
        }
        Ok(c)
    }

    /// Config for reading back a finished run: an explicit `--config` wins,
    /// then the copy the run saved next to its records.
    fn config_for(&self, dir: &Path) -> Result<CampaignConfig> {
        let saved = dir.join(files::CONFIG);
        if self.config.is_none() && saved.exists() {
            return Ok(CampaignConfig::load(&saved)?);
        }
        self.config()
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::create_dir_all(path.parent().unwrap_or(Path::new(".")))?;
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn generate(c: &CampaignConfig) -> Result<()> {
    let mut seqs = Vec::new();
    for &l in &c.lengths {
        for i in 0..c.sequences_per_length {
            seqs.push(gateset::sample_sequence(
                l,
                gateset::sequence_seed(c.master_seed, l, i),
            )?);
        }
    }
    fs::create_dir_all(&c.output_dir)?;
    let path = c.output_dir.join(files::SEQUENCES);
    let f = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    gateset::write_sequences(std::io::BufWriter::new(f), &seqs)?;
    println!("wrote {} sequences to {}", seqs.len(), path.display());
    Ok(())
}

fn run(c: &CampaignConfig) -> Result<()> {
    let r = campaign::run_campaign(c)?;
    campaign::write_campaign(&c.output_dir, c, &r)?;
    println!(
        "ran {} sequences ({} shots), threshold {}, simulated time {:.1} s, {} recalibrations; records in {}",
        r.records.len(),
        r.shots.len(),
        r.threshold,
        r.simulated_duration_s,
        r.recalibration_log.len(),
        c.output_dir.display()
    );
    Ok(())
}

fn fit(common: &Common, records: Option<PathBuf>, bootstrap: bool) -> Result<()> {
    let base = common.config()?;
    let path = records.unwrap_or_else(|| base.output_dir.join(files::RECORDS));
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let c = common.config_for(&dir)?;
    let shots = campaign::load_shots(&path)?;
    campaign::check_complete(&shots, &c)?;
    let recs = campaign::records_from_shots(&shots);
    let result = if bootstrap {
        analysis::fit_with_bootstrap(&recs, c.bootstrap_resamples, c.master_seed)?
    } else {
        analysis::fit_decay(&recs)?
    };
    let out = base.output_dir.join(files::FIT);
    write_json(&out, &result)?;
    let se = result
        .bootstrap_se_epg
        .unwrap_or(result.epg_standard_error());
    println!(
        "E_g = {:.4e} +/- {:.2e}, d_if = {:.4e}; report in {}",
        result.epg,
        se,
        result.dif,
        out.display()
    );
    Ok(())
}

fn sweep(c: &CampaignConfig, axis: SweepAxis, values: Option<Vec<f64>>) -> Result<()> {
    let values = values.unwrap_or_else(|| axis.default_values());
    let samples = campaign::run_sweep(&campaign::sweep_base(c), axis, &values)?;
    let report = campaign::sweep_report(axis, samples)?;
    let out = c.output_dir.join(files::SWEEP);
    write_json(&out, &report)?;
    for s in &report.samples {
        println!("{} {}: E_g = {:.4e}", s.value, report.value_unit, s.epg);
    }
    if let Some(q) = &report.quadratic {
        println!(
            "coefficient = {:.4e} {} (R^2 = {:.4})",
            q.coefficient, q.coefficient_unit, q.r_squared
        );
    }
    Ok(())
}

fn report(common: &Common, input: Option<PathBuf>) -> Result<()> {
    let base = common.config()?;
    let dir = input.unwrap_or_else(|| base.output_dir.clone());
    let shots = campaign::load_shots(&dir.join(files::RECORDS))?;
    let refs = campaign::load_references(&dir.join(files::REFERENCES))?;
    let recs = campaign::records_from_shots(&shots);
    let fit = analysis::fit_decay(&recs);
    if let Err(e) = &fit {
        eprintln!("warning: plotting without a fit: {e}");
    }
    let (bright, dark) = campaign::reference_histograms(&refs);
    campaign::write_report(&base.output_dir, &recs, fit.as_ref().ok(), &bright, &dark)?;
    println!("report written to {}", base.output_dir.display());
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate => generate(&cli.common.config()?),
        Command::Run => run(&cli.common.config()?),
        Command::Fit {
            records,
            no_bootstrap,
        } => fit(&cli.common, records, !no_bootstrap),
        Command::Sweep { axis, values } => sweep(&cli.common.config()?, axis, values),
        Command::Report { input } => report(&cli.common, input),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
