//! Campaign orchestration: configuration, the simulated wall clock,
//! parallel sequence execution, raw record persistence, sweeps and reports.
//!
//! A single coordinator walks the sequences in execution order, stamps each
//! with the current clock snapshot and advances the clock by the sequence's
//! simulated duration. Workers then simulate sequences independently from
//! those pre-assigned snapshots and seeds, so results do not depend on the
//! number of threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{self, FidelityRecord, FitError, FitResult, LengthPoint, SweepResult};
use crate::detector::{
    self, classify, threshold_from_references, Classification, CountHistogram, DetectorError,
    PhotonModel,
};
use crate::gateset::{self, GateError, GateSequence, Pole, PAPER_LENGTHS};
use crate::noise::{
    self, ClockSnapshot, DephasingModel, NoiseClock, NoiseConfig, NoiseError, RecalibrationEntry,
    SequenceNoise, SlotProgram,
};
use crate::qsim::{apply, project_measure, QubitState};
use crate::rng::{self, stream};
use crate::scheduler::{compile, PulseProgram, ScheduleError, TimingConfig};

/// Longest sequence the original control software could hold.
pub const DEFAULT_MAX_LENGTH: usize = 1300;

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("invalid campaign config: {0}")]
    Config(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("records are incomplete: missing lengths {missing:?}, partial lengths {partial:?}")]
    IncompleteRecords {
        missing: Vec<usize>,
        partial: Vec<usize>,
    },
    #[error("malformed records: {0}")]
    Records(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("worker pool: {0}")]
    Pool(String),
}

impl CampaignError {
    fn io(path: &Path, source: io::Error) -> Self {
        CampaignError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecalibrationConfig {
    pub frequency_interval_s: f64,
    pub pi2_interval_s: f64,
}

impl Default for RecalibrationConfig {
    fn default() -> Self {
        RecalibrationConfig {
            frequency_interval_s: 60.0,
            pi2_interval_s: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub sequences_per_length: usize,
    pub reps_per_sequence: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sequences_per_length: 20,
            reps_per_sequence: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub lengths: Vec<usize>,
    pub sequences_per_length: usize,
    pub reps_per_sequence: usize,
    pub master_seed: u64,
    pub max_length: usize,
    /// Cooling and preparation time charged to every shot.
    pub shot_overhead_ms: f64,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub bootstrap_resamples: usize,
    pub output_dir: PathBuf,
    pub timing: TimingConfig,
    pub noise: NoiseConfig,
    pub photon: PhotonModel,
    pub recalibration: RecalibrationConfig,
    pub sweep: SweepConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            lengths: PAPER_LENGTHS.to_vec(),
            sequences_per_length: 100,
            reps_per_sequence: 100,
            master_seed: 0,
            max_length: DEFAULT_MAX_LENGTH,
            shot_overhead_ms: 5.0,
            workers: 0,
            bootstrap_resamples: 1000,
            output_dir: PathBuf::from("out"),
            timing: TimingConfig::default(),
            noise: NoiseConfig::default(),
            photon: PhotonModel::default(),
            recalibration: RecalibrationConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl CampaignConfig {
    pub fn from_toml(text: &str) -> Result<Self, CampaignError> {
        let c: CampaignConfig =
            toml::from_str(text).map_err(|e| CampaignError::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CampaignError> {
        let text = fs::read_to_string(path).map_err(|e| CampaignError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        let bad = |m: &str| Err(CampaignError::Config(m.to_string()));
        if self.lengths.is_empty() {
            return bad("lengths must not be empty");
        }
        if self.lengths[0] == 0 {
            return bad("lengths must be positive");
        }
        if self.lengths.windows(2).any(|w| w[0] >= w[1]) {
            return bad("lengths must be strictly increasing");
        }
        if let Some(&l) = self.lengths.iter().find(|&&l| l > self.max_length) {
            return Err(CampaignError::Config(format!(
                "length {l} exceeds max_length {}",
                self.max_length
            )));
        }
        if self.sequences_per_length == 0 || self.reps_per_sequence == 0 {
            return bad("sequences_per_length and reps_per_sequence must be positive");
        }
        if self.sweep.sequences_per_length == 0 || self.sweep.reps_per_sequence == 0 {
            return bad("sweep counts must be positive");
        }
        if !(self.shot_overhead_ms.is_finite() && self.shot_overhead_ms >= 0.0) {
            return bad("shot_overhead_ms must be non-negative");
        }
        let r = &self.recalibration;
        if !(r.frequency_interval_s >= 0.0 && r.pi2_interval_s >= 0.0) {
            return bad("recalibration intervals must be non-negative");
        }
        self.timing.validate()?;
        self.noise.validate()?;
        self.photon.validate()?;
        Ok(())
    }

    /// Simulated wall-clock time to run one sequence: every shot plus two
    /// reference detections per shot, each with its overhead.
    pub fn sequence_wall_time(&self, program: &PulseProgram) -> f64 {
        let reps = self.reps_per_sequence as f64;
        let detect = self.timing.detection_window();
        let overhead = self.shot_overhead_ms * 1e-3;
        reps * (program.total_duration() + detect + overhead) + 2.0 * reps * (detect + overhead)
    }
}

/// One classified shot; a row of the raw records file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub sequence_index: usize,
    pub length: usize,
    pub rep: usize,
    pub counts: u32,
    pub classification: Classification,
    pub expected: Classification,
}

/// One pair of reference detections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceRecord {
    pub sequence_index: usize,
    pub length: usize,
    pub rep: usize,
    pub bright_counts: u32,
    pub dark_counts: u32,
}

pub fn expected_class(p: Pole) -> Classification {
    match p {
        Pole::Down => Classification::Bright,
        Pole::Up => Classification::Dark,
    }
}

/// Raw per-sequence output of a worker.
#[derive(Debug, Clone)]
struct SequenceRun {
    counts: Vec<u32>,
    bright_refs: Vec<u32>,
    dark_refs: Vec<u32>,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub sequences: Vec<GateSequence>,
    /// Clock state assigned to each sequence, parallel to `sequences`.
    pub snapshots: Vec<ClockSnapshot>,
    pub shots: Vec<ShotRecord>,
    pub references: Vec<ReferenceRecord>,
    pub records: Vec<FidelityRecord>,
    pub bright_references: CountHistogram,
    pub dark_references: CountHistogram,
    pub threshold: u32,
    pub recalibration_log: Vec<RecalibrationEntry>,
    pub simulated_duration_s: f64,
}

impl CampaignResult {
    pub fn fit(&self) -> Result<FitResult, FitError> {
        analysis::fit_decay(&self.records)
    }

    pub fn fit_with_bootstrap(&self, n_resamples: usize, seed: u64) -> Result<FitResult, FitError> {
        analysis::fit_with_bootstrap(&self.records, n_resamples, seed)
    }
}

/// Execution order: round-robin over lengths so slow drifts touch every
/// length alike.
fn execution_order(c: &CampaignConfig) -> Vec<(usize, usize)> {
    (0..c.sequences_per_length)
        .flat_map(|i| c.lengths.iter().map(move |&l| (l, i)))
        .collect()
}

fn simulate_sequence(
    c: &CampaignConfig,
    seq: &GateSequence,
    program: &PulseProgram,
    sn: &SequenceNoise,
) -> SequenceRun {
    let reps = c.reps_per_sequence;
    let mut shot_rng = rng::rng_for(&[seq.seed, stream::SHOT]);
    enum Sampler {
        Fixed(QubitState),
        Slots(SlotProgram),
        Events,
    }
    let sampler = match SlotProgram::build(program, &c.noise, sn, &c.timing) {
        Some(slots) if c.noise.needs_trajectories() => Sampler::Slots(slots),
        Some(slots) => Sampler::Fixed(apply(&slots.unitary(), QubitState::down())),
        None => Sampler::Events,
    };
    let sample_outcome = |r: &mut rng::SimRng| {
        let state = match &sampler {
            Sampler::Fixed(s) => *s,
            Sampler::Slots(slots) => slots.run(&c.noise, r),
            Sampler::Events => noise::run_trajectory(program, &c.noise, sn, &c.timing, r),
        };
        project_measure(&state, r)
    };
    let counts = (0..reps)
        .map(|_| {
            let outcome = sample_outcome(&mut shot_rng);
            detector::sample_counts(outcome, &c.photon, &mut shot_rng)
        })
        .collect();
    let mut ref_rng = rng::rng_for(&[seq.seed, stream::REFERENCE]);
    let (bright_refs, dark_refs) = (0..reps)
        .map(|_| detector::reference_pair(&c.photon, &mut ref_rng))
        .unzip();
    SequenceRun {
        counts,
        bright_refs,
        dark_refs,
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, CampaignError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CampaignError::Pool(e.to_string()))
}

pub fn run_campaign(c: &CampaignConfig) -> Result<CampaignResult, CampaignError> {
    c.validate()?;
    let pool = pool(c.workers)?;
    pool.install(|| run_in_pool(c))
}

fn run_in_pool(c: &CampaignConfig) -> Result<CampaignResult, CampaignError> {
    let order = execution_order(c);
    let prepared: Vec<(GateSequence, PulseProgram)> = order
        .par_iter()
        .map(|&(l, i)| {
            let seq = gateset::sample_sequence(l, gateset::sequence_seed(c.master_seed, l, i))?;
            let program = compile(&seq, &c.timing);
            Ok((seq, program))
        })
        .collect::<Result<_, GateError>>()?;

    let mut clock = NoiseClock::new(
        c.noise,
        c.recalibration.frequency_interval_s,
        c.recalibration.pi2_interval_s,
        c.master_seed,
    );
    let mut snapshots = Vec::with_capacity(prepared.len());
    for (_, program) in &prepared {
        snapshots.push(clock.snapshot());
        clock.advance(c.sequence_wall_time(program));
    }
    let simulated_duration_s = clock.now();

    let runs: Vec<SequenceRun> = prepared
        .par_iter()
        .zip(&snapshots)
        .map(|((seq, program), snap)| {
            let sn = SequenceNoise::draw(&c.noise, snap, seq.seed);
            simulate_sequence(c, seq, program, &sn)
        })
        .collect();

    // Report in (length, index) order regardless of execution order.
    let mut idx: Vec<usize> = (0..order.len()).collect();
    idx.sort_by_key(|&k| (order[k].0, order[k].1));

    let mut bright = CountHistogram::new();
    let mut dark = CountHistogram::new();
    for run in &runs {
        run.bright_refs.iter().for_each(|&n| bright.record(n));
        run.dark_refs.iter().for_each(|&n| dark.record(n));
    }
    let threshold = threshold_from_references(&bright, &dark)?;

    let mut shots = Vec::with_capacity(runs.len() * c.reps_per_sequence);
    let mut references = Vec::with_capacity(shots.capacity());
    let mut records = Vec::with_capacity(runs.len());
    let mut sequences = Vec::with_capacity(runs.len());
    let mut snaps = Vec::with_capacity(runs.len());
    for k in idx {
        let (length, sequence_index) = order[k];
        let seq = &prepared[k].0;
        let run = &runs[k];
        let expected = expected_class(seq.predicted_outcome);
        let mut successes = 0;
        for (rep, &counts) in run.counts.iter().enumerate() {
            let classification = classify(counts, threshold);
            successes += u32::from(classification == expected);
            shots.push(ShotRecord {
                sequence_index,
                length,
                rep,
                counts,
                classification,
                expected,
            });
        }
        for (rep, (&b, &d)) in run.bright_refs.iter().zip(&run.dark_refs).enumerate() {
            references.push(ReferenceRecord {
                sequence_index,
                length,
                rep,
                bright_counts: b,
                dark_counts: d,
            });
        }
        records.push(FidelityRecord {
            length,
            sequence_index,
            successes,
            reps: c.reps_per_sequence as u32,
            expected: seq.predicted_outcome,
        });
        sequences.push(seq.clone());
        snaps.push(snapshots[k]);
    }

    Ok(CampaignResult {
        sequences,
        snapshots: snaps,
        shots,
        references,
        records,
        bright_references: bright,
        dark_references: dark,
        threshold,
        recalibration_log: clock.into_log(),
        simulated_duration_s,
    })
}

/// Fold raw shot rows back into per-sequence fidelity records.
pub fn records_from_shots(shots: &[ShotRecord]) -> Vec<FidelityRecord> {
    let mut acc: BTreeMap<(usize, usize), (u32, u32, Classification)> = BTreeMap::new();
    for s in shots {
        let e = acc
            .entry((s.length, s.sequence_index))
            .or_insert((0, 0, s.expected));
        e.0 += u32::from(s.classification == s.expected);
        e.1 += 1;
    }
    acc.into_iter()
        .map(
            |((length, sequence_index), (successes, reps, expected))| FidelityRecord {
                length,
                sequence_index,
                successes,
                reps,
                expected: match expected {
                    Classification::Bright => Pole::Down,
                    Classification::Dark => Pole::Up,
                },
            },
        )
        .collect()
}

/// Check that every configured length is present with its full complement
/// of sequences and repetitions.
pub fn check_complete(shots: &[ShotRecord], c: &CampaignConfig) -> Result<(), CampaignError> {
    let mut per_length: BTreeMap<usize, usize> = BTreeMap::new();
    for s in shots {
        *per_length.entry(s.length).or_insert(0) += 1;
    }
    let want = c.sequences_per_length * c.reps_per_sequence;
    let missing: Vec<usize> = c
        .lengths
        .iter()
        .copied()
        .filter(|l| !per_length.contains_key(l))
        .collect();
    let partial: Vec<usize> = c
        .lengths
        .iter()
        .copied()
        .filter(|l| per_length.get(l).is_some_and(|&n| n < want))
        .collect();
    if missing.is_empty() && partial.is_empty() {
        Ok(())
    } else {
        Err(CampaignError::IncompleteRecords { missing, partial })
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CampaignError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CampaignError::io(dir, e))?;
        }
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CampaignError::io(path, e))
}

fn write_csv_rows<T: Serialize, W: Write>(w: W, rows: &[T]) -> Result<(), CampaignError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)
            .map_err(|e| CampaignError::Records(e.to_string()))?;
    }
    out.flush()
        .map_err(|e| CampaignError::Records(e.to_string()))
}

fn read_csv_rows<T: for<'de> Deserialize<'de>, R: Read>(r: R) -> Result<Vec<T>, CampaignError> {
    let mut rd = csv::Reader::from_reader(r);
    rd.deserialize()
        .map(|row| {
            row.map_err(|e| {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                CampaignError::Records(format!("line {line}: {e}"))
            })
        })
        .collect()
}

pub fn write_shots<W: Write>(w: W, shots: &[ShotRecord]) -> Result<(), CampaignError> {
    write_csv_rows(w, shots)
}

pub fn read_shots<R: Read>(r: R) -> Result<Vec<ShotRecord>, CampaignError> {
    read_csv_rows(r)
}

pub fn write_references<W: Write>(w: W, refs: &[ReferenceRecord]) -> Result<(), CampaignError> {
    write_csv_rows(w, refs)
}

pub fn read_references<R: Read>(r: R) -> Result<Vec<ReferenceRecord>, CampaignError> {
    read_csv_rows(r)
}

pub fn write_recalibration_log<W: Write>(
    w: W,
    log: &[RecalibrationEntry],
) -> Result<(), CampaignError> {
    write_csv_rows(w, log)
}

pub fn write_histogram<W: Write>(
    w: W,
    bright: &CountHistogram,
    dark: &CountHistogram,
) -> Result<(), CampaignError> {
    #[derive(Serialize)]
    struct Row {
        count: u32,
        bright_occurrences: u64,
        dark_occurrences: u64,
    }
    let top = bright
        .max_count()
        .into_iter()
        .chain(dark.max_count())
        .max()
        .unwrap_or(0);
    let rows: Vec<Row> = (0..=top)
        .map(|c| Row {
            count: c,
            bright_occurrences: bright.get(c),
            dark_occurrences: dark.get(c),
        })
        .collect();
    write_csv_rows(w, &rows)
}

pub fn write_length_table<W: Write>(w: W, points: &[LengthPoint]) -> Result<(), CampaignError> {
    write_csv_rows(w, points)
}

/// File names used inside an output directory.
pub mod files {
    pub const CONFIG: &str = "config.toml";
    pub const SEQUENCES: &str = "sequences.jsonl";
    pub const RECORDS: &str = "records.csv";
    pub const REFERENCES: &str = "references.csv";
    pub const RECALIBRATION: &str = "recalibration.csv";
    pub const FIT: &str = "fit.json";
    pub const SWEEP: &str = "sweep.json";
    pub const DECAY_SVG: &str = "decay.svg";
    pub const HISTOGRAM_SVG: &str = "histogram.svg";
    pub const HISTOGRAM_CSV: &str = "histogram.csv";
    pub const LENGTH_CSV: &str = "fidelity_by_length.csv";
}

/// Persist the raw campaign output into `dir`.
pub fn write_campaign(
    dir: &Path,
    c: &CampaignConfig,
    r: &CampaignResult,
) -> Result<(), CampaignError> {
    let p = dir.join(files::CONFIG);
    create(&p)?
        .write_all(c.to_toml().as_bytes())
        .map_err(|e| CampaignError::io(&p, e))?;
    let p = dir.join(files::SEQUENCES);
    gateset::write_sequences(create(&p)?, &r.sequences).map_err(|e| CampaignError::io(&p, e))?;
    write_shots(create(&dir.join(files::RECORDS))?, &r.shots)?;
    write_references(create(&dir.join(files::REFERENCES))?, &r.references)?;
    write_recalibration_log(
        create(&dir.join(files::RECALIBRATION))?,
        &r.recalibration_log,
    )?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<fs::File>, CampaignError> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| CampaignError::io(path, e))
}

pub fn load_shots(path: &Path) -> Result<Vec<ShotRecord>, CampaignError> {
    read_shots(open(path)?)
}

pub fn load_references(path: &Path) -> Result<Vec<ReferenceRecord>, CampaignError> {
    read_references(open(path)?)
}

pub fn reference_histograms(refs: &[ReferenceRecord]) -> (CountHistogram, CountHistogram) {
    (
        refs.iter().map(|r| r.bright_counts).collect(),
        refs.iter().map(|r| r.dark_counts).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Static detuning in Hz.
    Detuning,
    /// Constant pi/2 duration error in ns.
    Pi2Error,
    /// Markovian T2 in s.
    T2,
    /// Leak probability per drive pulse.
    Leak,
}

impl SweepAxis {
    pub fn value_unit(self) -> &'static str {
        match self {
            SweepAxis::Detuning => "Hz",
            SweepAxis::Pi2Error => "ns",
            SweepAxis::T2 => "s",
            SweepAxis::Leak => "1/pulse",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::Detuning => vec![5.0, 10.0, 15.0, 20.0, 25.0, 50.0],
            SweepAxis::Pi2Error => vec![5.0, 10.0, 23.0, 50.0, 100.0],
            SweepAxis::T2 => vec![0.1, 0.2, 0.38, 1.0],
            SweepAxis::Leak => vec![1e-6, 1e-5, 3e-5],
        }
    }

    /// Noise with only this channel enabled at `value`.
    pub fn noise_for(self, value: f64) -> NoiseConfig {
        let base = NoiseConfig::default();
        match self {
            SweepAxis::Detuning => NoiseConfig {
                static_detuning_hz: value,
                ..base
            },
            SweepAxis::Pi2Error => NoiseConfig {
                pi2_time_error_ns: value,
                ..base
            },
            SweepAxis::T2 => NoiseConfig {
                dephasing: DephasingModel::Markovian {
                    rate_per_s: 1.0 / value,
                },
                ..base
            },
            SweepAxis::Leak => NoiseConfig {
                leak_prob_per_pulse: value,
                ..base
            },
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "detuning" => Ok(SweepAxis::Detuning),
            "pi2_error" => Ok(SweepAxis::Pi2Error),
            "t2" => Ok(SweepAxis::T2),
            "leak" => Ok(SweepAxis::Leak),
            other => Err(format!(
                "unknown sweep axis `{other}` (expected detuning, pi2_error, t2 or leak)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub value: f64,
    #[serde(rename = "epg_per_gate")]
    pub epg: f64,
    #[serde(rename = "epg_bright_ending_per_gate")]
    pub epg_bright: Option<f64>,
    #[serde(rename = "epg_dark_ending_per_gate")]
    pub epg_dark: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub value_unit: String,
    pub samples: Vec<SweepSample>,
    /// Quadratic sensitivity, for the detuning and pi/2 duration axes.
    pub quadratic: Option<SweepResult>,
}

/// Reduced campaigns, one per value, with only the swept channel active.
/// Counts come from `base.sequences_per_length` and `base.reps_per_sequence`;
/// use [`sweep_base`] to apply the sweep defaults.
pub fn run_sweep(
    base: &CampaignConfig,
    axis: SweepAxis,
    values: &[f64],
) -> Result<Vec<SweepSample>, CampaignError> {
    values
        .iter()
        .map(|&value| {
            let c = CampaignConfig {
                noise: axis.noise_for(value),
                ..base.clone()
            };
            let r = run_campaign(&c)?;
            let fit = r.fit()?;
            let split = analysis::split_fit_by_target(&r.records).ok();
            Ok(SweepSample {
                value,
                epg: fit.epg,
                epg_bright: split.as_ref().map(|s| s.0.epg),
                epg_dark: split.as_ref().map(|s| s.1.epg),
            })
        })
        .collect()
}

/// `base` with its sweep section's reduced counts applied.
pub fn sweep_base(base: &CampaignConfig) -> CampaignConfig {
    CampaignConfig {
        sequences_per_length: base.sweep.sequences_per_length,
        reps_per_sequence: base.sweep.reps_per_sequence,
        ..base.clone()
    }
}

pub fn sweep_report(
    axis: SweepAxis,
    samples: Vec<SweepSample>,
) -> Result<SweepReport, CampaignError> {
    let quadratic = match axis {
        SweepAxis::Detuning => {
            let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.value, s.epg)).collect();
            Some(analysis::extract_quadratic_coefficient(&pts)?.with_units("Hz", "1/Hz^2"))
        }
        SweepAxis::Pi2Error => {
            let pts: Vec<(f64, f64)> = samples.iter().map(|s| (s.value * 1e-3, s.epg)).collect();
            Some(analysis::extract_quadratic_coefficient(&pts)?.with_units("us", "1/us^2"))
        }
        SweepAxis::T2 | SweepAxis::Leak => None,
    };
    Ok(SweepReport {
        axis,
        value_unit: axis.value_unit().to_string(),
        samples,
        quadratic,
    })
}

/// Decay curve with per-length standard-error bars and the fitted model.
pub fn decay_svg(points: &[LengthPoint], fit: Option<&FitResult>) -> String {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let max_l = points.iter().map(|p| p.length).max().unwrap_or(1).max(1) as f64;
    let lo = points
        .iter()
        .map(|p| p.mean_fidelity - p.standard_error)
        .fold(1.0f64, f64::min)
        .clamp(0.5, 0.9);
    let lo = (lo * 20.0).floor() / 20.0;
    let sx = |l: f64| m + (w - 2.0 * m) * l / max_l;
    let sy = |f: f64| h - m - (h - 2.0 * m) * (f - lo) / (1.0 - lo);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - m,
        w - m,
        h - m
    );
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{m}" x2="{m}" y2="{}" stroke="black"/>"#,
        h - m
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">sequence length</text>"#,
        w / 2.0,
        h - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">mean fidelity</text>"#,
        h / 2.0,
        h / 2.0
    );
    for k in 0..=4 {
        let f = lo + (1.0 - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{f:.3}</text>"#,
            m - 5.0,
            sy(f) + 4.0
        );
    }
    for k in 0..=4 {
        let l = max_l * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{l:.0}</text>"#,
            sx(l),
            h - m + 16.0
        );
    }
    if let Some(f) = fit {
        let path: Vec<String> = (0..=200)
            .map(|k| {
                let l = max_l * k as f64 / 200.0;
                format!(
                    "{:.2},{:.2}",
                    sx(l),
                    sy(analysis::decay_model(f.dif, f.epg, l))
                )
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="steelblue" points="{}"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">E_g = {:.3e}, d_if = {:.3e}</text>"#,
            w - m,
            m - 10.0,
            f.epg,
            f.dif
        );
    }
    for p in points {
        let x = sx(p.length as f64);
        let (y0, y1) = (
            sy(p.mean_fidelity - p.standard_error),
            sy(p.mean_fidelity + p.standard_error),
        );
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{y1:.2}" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{:.2}" r="3" fill="black"/>"#,
            sy(p.mean_fidelity)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Pooled reference histogram, bright and dark bars, and the threshold.
pub fn histogram_svg(bright: &CountHistogram, dark: &CountHistogram, threshold: u32) -> String {
    let (w, h, m) = (640.0, 420.0, 60.0);
    let top = bright
        .max_count()
        .into_iter()
        .chain(dark.max_count())
        .max()
        .unwrap_or(0) as f64
        + 1.0;
    let peak = (0..=top as u32)
        .map(|c| bright.get(c).max(dark.get(c)))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let bw = (w - 2.0 * m) / top;
    let sx = |c: f64| m + bw * c;
    let sy = |n: f64| h - m - (h - 2.0 * m) * n / peak;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{m}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - m,
        w - m,
        h - m
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">photon counts</text>"#,
        w / 2.0,
        h - 20.0
    );
    for c in 0..top as u32 {
        for (hist, color, off) in [(dark, "gray", 0.0), (bright, "orange", 0.5)] {
            let n = hist.get(c) as f64;
            if n > 0.0 {
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                    sx(c as f64) + off * bw,
                    sy(n),
                    bw / 2.0,
                    h - m - sy(n)
                );
            }
        }
    }
    let tx = sx(threshold as f64 + 1.0);
    let _ = writeln!(
        s,
        r#"<line x1="{tx:.2}" y1="{m}" x2="{tx:.2}" y2="{}" stroke="red" stroke-dasharray="4 3"/>"#,
        h - m
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{}" fill="red">threshold {threshold}</text>"#,
        tx + 4.0,
        m
    );
    s.push_str("</svg>\n");
    s
}

/// Write the SVG figures and CSV tables for a set of records.
pub fn write_report(
    dir: &Path,
    records: &[FidelityRecord],
    fit: Option<&FitResult>,
    bright: &CountHistogram,
    dark: &CountHistogram,
) -> Result<(), CampaignError> {
    let points = analysis::length_points(records);
    let threshold = threshold_from_references(bright, dark)?;
    let p = dir.join(files::DECAY_SVG);
    create(&p)?
        .write_all(decay_svg(&points, fit).as_bytes())
        .map_err(|e| CampaignError::io(&p, e))?;
    let p = dir.join(files::HISTOGRAM_SVG);
    create(&p)?
        .write_all(histogram_svg(bright, dark, threshold).as_bytes())
        .map_err(|e| CampaignError::io(&p, e))?;
    write_histogram(create(&dir.join(files::HISTOGRAM_CSV))?, bright, dark)?;
    write_length_table(create(&dir.join(files::LENGTH_CSV))?, &points)?;
    Ok(())
}

/// Lengths present in a record set, for diagnostics.
pub fn lengths_present(shots: &[ShotRecord]) -> BTreeSet<usize> {
    shots.iter().map(|s| s.length).collect()
}
