//! Compression sweep: configuration, scenario simulation, per-point evaluation
//! and the on-disk reports.
//!
//! A run simulates one long mixture, trains every beamformer on the leading
//! frames and evaluates on the frames that follow. The sensorspace MVDR is
//! evaluated once as the baseline; each `N_d` of the sweep gets its own
//! projection bank and mixture of compressed beamformers.

mod report;

use std::ops::Range;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio_io::{self, AudioBuffer, SignalKind};
use crate::beamformer::{build_compressed, build_sensorspace, estimate_steering, oracle_steering, BeamformerSet, SteeringMode, SteeringSet};
use crate::bounds::{RegretEntry, RegretSummary};
use crate::covariance::{estimate, extreme_eigs, NarrowbandCovariance};
use crate::linalg::norm_sq;
use crate::metrics::{gains, shadow_filter, ComponentEnergies, GainReport, Selection};
use crate::mixture::{MixtureDecision, MixtureRule, OutputStack};
use crate::projection::{generate, restricted_distortion, row_distortion, ProjectionBank, ProjectionKind};
use crate::room::{build_channel, simulate_mixture, AcousticChannel, ArraySpec, Position, RoomSpec};
use crate::stft::{analyze, SpectrogramTensor, StftConfig};
use crate::{CVector, Complex64, Error, Result};

pub use report::{RESULTS_COLUMNS, REGRET_COLUMNS, SUMMARY_COLUMNS};

pub const METHOD_BASELINE: &str = "mvdr_sensorspace";
pub const METHOD_MIXTURE: &str = "mixture_cmvdr";
pub const METHOD_FAILED: &str = "mixture_cmvdr_failed";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSignal {
    #[default]
    WhiteNoise,
    Tone { frequency: f64 },
    /// First channel of a 16-bit or float WAV file at the configured rate.
    Wav { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub position: Position,
    #[serde(default)]
    pub signal: SourceSignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub min: usize,
    pub max: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Explicit compressed dimensions; merged with `schedule`.
    #[serde(default)]
    pub nd: Vec<usize>,
    pub schedule: Option<ScheduleSpec>,
    /// Limit `N_p` so that `N_p N_d^3 <= N_m^3`.
    #[serde(default = "yes")]
    pub budget: bool,
    /// Fixed `N_p` for every point; only allowed with `budget = false`.
    pub n_p: Option<usize>,
    #[serde(default = "default_projection")]
    pub projection: ProjectionKind,
}

fn yes() -> bool {
    true
}
fn default_projection() -> ProjectionKind {
    ProjectionKind::GaussianReal
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub room: RoomSpec,
    pub arrays: Vec<ArraySpec>,
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub stft: StftConfig,
    /// Standard deviation of the white sensor noise.
    #[serde(default = "default_noise_level")]
    pub noise_level: f64,
    #[serde(default = "default_loading")]
    pub loading_factor: f64,
    #[serde(default = "default_steering")]
    pub steering: SteeringMode,
    #[serde(default)]
    pub reference_mic: usize,
    #[serde(default = "default_segment")]
    pub train_seconds: f64,
    #[serde(default = "default_segment")]
    pub test_seconds: f64,
    #[serde(default)]
    pub mixture: MixtureRule,
    pub sweep: SweepConfig,
    /// Only every `regret_bin_stride`-th bin is written to regret.csv. The
    /// summary always covers all bins.
    #[serde(default = "one")]
    pub regret_bin_stride: usize,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_noise_level() -> f64 {
    1e-3
}
fn default_loading() -> f64 {
    1e-3
}
fn default_steering() -> SteeringMode {
    SteeringMode::EstimatedRtf
}
fn default_segment() -> f64 {
    4.0
}
fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file; relative WAV paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut cfg.sources {
            if let SourceSignal::Wav { path } = &mut s.signal {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn num_mics(&self) -> usize {
        self.arrays.iter().map(|a| a.num_elements).sum()
    }

    /// Sorted, deduplicated compressed dimensions of the sweep.
    pub fn nd_values(&self) -> Result<Vec<usize>> {
        let mut nd = self.sweep.nd.clone();
        if let Some(s) = self.sweep.schedule {
            nd.extend(nd_schedule(s.min, s.max, s.count)?);
        }
        nd.sort_unstable();
        nd.dedup();
        Ok(nd)
    }

    pub fn num_projections(&self, n_d: usize) -> usize {
        match (self.sweep.budget, self.sweep.n_p) {
            (true, _) => budget_np(self.num_mics(), n_d),
            (false, Some(n)) => n,
            (false, None) => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.stft.validate()?;
        let n_m = self.num_mics();
        if n_m == 0 || self.sources.is_empty() {
            return Err(Error::Config("need at least one microphone and one source".into()));
        }
        if self.reference_mic >= n_m {
            return Err(Error::Config(format!("reference_mic {} >= {n_m} microphones", self.reference_mic)));
        }
        for (name, v) in [("train_seconds", self.train_seconds), ("test_seconds", self.test_seconds)] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.noise_level >= 0.0) || !(self.loading_factor >= 0.0) {
            return Err(Error::Config("noise_level and loading_factor must be non-negative".into()));
        }
        if self.regret_bin_stride == 0 {
            return Err(Error::Config("regret_bin_stride must be at least 1".into()));
        }
        if self.sweep.budget && self.sweep.n_p.is_some() {
            return Err(Error::Config("sweep.n_p cannot be combined with the budget rule".into()));
        }
        if self.sweep.n_p == Some(0) {
            return Err(Error::Config("sweep.n_p must be at least 1".into()));
        }
        let nd = self.nd_values()?;
        if nd.is_empty() {
            return Err(Error::Config("the sweep has no N_d values".into()));
        }
        for &d in &nd {
            if d == 0 || d > n_m {
                return Err(Error::Config(format!("N_d = {d} outside 1..={n_m}")));
            }
            if self.sweep.projection == ProjectionKind::Identity && d != n_m {
                return Err(Error::Config(format!("identity projection needs N_d = {n_m}, got {d}")));
            }
        }
        Ok(())
    }
}

/// `round(exp(linspace(ln min, ln max, count)))`, deduplicated and ascending.
pub fn nd_schedule(min: usize, max: usize, count: usize) -> Result<Vec<usize>> {
    if min == 0 || min > max || count == 0 {
        return Err(Error::Config(format!("invalid schedule ({min}, {max}, {count})")));
    }
    let (lo, hi) = ((min as f64).ln(), (max as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|i| {
            let t = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
            (lo + t * (hi - lo)).exp().round() as usize
        })
        .collect();
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// `max(1, floor(N_m^3 / N_d^3))`. `n_d` must be positive.
pub fn budget_np(n_m: usize, n_d: usize) -> usize {
    assert!(n_d >= 1, "N_d must be positive");
    let cube = |x: usize| (x as u128).pow(3);
    ((cube(n_m) / cube(n_d)) as usize).max(1)
}

/// SplitMix64 of `master` advanced by `stream`; independent seeds per use.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_NOISE: u64 = 1;
const STREAM_SOURCE: u64 = 1 << 8;
const STREAM_BANK: u64 = 1 << 16;

/// Seed of the projection bank at one sweep point.
pub fn bank_seed(master: u64, n_d: usize) -> u64 {
    derive_seed(master, STREAM_BANK + n_d as u64)
}

/// Test-segment components as seen by one talker's beamformer.
#[derive(Debug, Clone)]
pub struct TalkerComponents {
    pub target: SpectrogramTensor,
    pub interference: SpectrogramTensor,
    pub input: ComponentEnergies,
}

/// Simulated signals, training statistics and the sensorspace baseline.
#[derive(Debug)]
pub struct Scenario {
    pub config: ExperimentConfig,
    pub channel: AcousticChannel,
    pub train: Range<usize>,
    pub test: Range<usize>,
    pub phi_y: NarrowbandCovariance,
    /// `(lambda_min, lambda_max)` of `phi_y` per bin.
    pub spectrum: Vec<(f64, f64)>,
    pub steering: SteeringSet,
    /// Mixture over the test frames.
    pub y_test: SpectrogramTensor,
    pub noise_test: SpectrogramTensor,
    pub talkers: Vec<TalkerComponents>,
    /// Sensorspace MVDR `[j][k]` and its closed-form powers.
    pub baseline_weights: Vec<Vec<CVector>>,
    pub baseline_powers: Vec<Vec<f64>>,
    pub baseline_train_s: f64,
}

fn load_signal(cfg: &ExperimentConfig, j: usize, seconds: f64) -> Result<AudioBuffer> {
    let fs = cfg.stft.sample_rate;
    let seed = derive_seed(cfg.seed, STREAM_SOURCE + j as u64);
    match &cfg.sources[j].signal {
        SourceSignal::WhiteNoise => audio_io::generate(SignalKind::WhiteNoise, seconds, fs, seed),
        SourceSignal::Tone { frequency } => audio_io::generate(SignalKind::Tone { frequency: *frequency }, seconds, fs, seed),
        SourceSignal::Wav { path } => {
            let buf = audio_io::read_wav(path, fs)?;
            let need = (seconds * fs as f64).round() as usize;
            if buf.len() < need {
                return Err(Error::Config(format!(
                    "{} holds {:.2} s, the run needs {seconds:.2} s",
                    path.display(),
                    buf.duration()
                )));
            }
            Ok(AudioBuffer::mono(buf.channel(0)[..need].to_vec(), fs))
        }
    }
}

/// Frames lying entirely inside the first `train_len` samples, and the frames
/// starting at or after it.
fn segments(cfg: &StftConfig, train_len: usize, total_frames: usize) -> Result<(Range<usize>, Range<usize>)> {
    if train_len < cfg.frame_length {
        return Err(Error::Config("training segment is shorter than one frame".into()));
    }
    let train_end = (train_len - cfg.frame_length) / cfg.hop + 1;
    let test_start = train_len.div_ceil(cfg.hop);
    if test_start >= total_frames {
        return Err(Error::Config("test segment has no frames".into()));
    }
    Ok((0..train_end, test_start..total_frames))
}

/// Simulates the room, splits train and test frames, trains the covariance,
/// steering and sensorspace MVDR.
pub fn prepare(config: &ExperimentConfig) -> Result<Scenario> {
    config.validate()?;
    let cfg = &config.stft;
    let fs = cfg.sample_rate;
    let positions: Vec<Position> = config.sources.iter().map(|s| s.position).collect();
    let channel = build_channel(&config.room, &config.arrays, &positions, fs, cfg.fft_size)?;

    let seconds = config.train_seconds + config.test_seconds;
    let signals = (0..config.sources.len()).map(|j| load_signal(config, j, seconds)).collect::<Result<Vec<_>>>()?;
    let sim = simulate_mixture(&channel, &signals, config.noise_level, derive_seed(config.seed, STREAM_NOISE))?;
    drop(signals);

    let y = analyze(&sim.y, cfg)?;
    let train_len = (config.train_seconds * fs as f64).round() as usize;
    let (train, test) = segments(cfg, train_len, y.frames())?;
    let phi_y = estimate(&y, train.clone(), config.loading_factor)?;
    let y_test = y.frame_range(test.clone())?;
    drop(y);

    let images = sim.images.par_iter().map(|img| analyze(img, cfg)).collect::<Result<Vec<_>>>()?;
    let noise_test = analyze(&sim.noise, cfg)?.frame_range(test.clone())?;
    drop(sim);

    let steering = match config.steering {
        SteeringMode::OracleAtf => oracle_steering(&channel, config.reference_mic)?,
        SteeringMode::EstimatedRtf => {
            let clean = images.iter().map(|x| estimate(x, train.clone(), 0.0)).collect::<Result<Vec<_>>>()?;
            estimate_steering(&clean, config.reference_mic)?
        }
    };

    let image_test = images.iter().map(|x| x.frame_range(test.clone())).collect::<Result<Vec<_>>>()?;
    drop(images);
    let talkers = (0..image_test.len())
        .map(|j| {
            let mut interference = SpectrogramTensor::zeros(y_test.channels(), y_test.frames(), *cfg);
            for (l, x) in image_test.iter().enumerate() {
                if l != j {
                    interference = interference.add(x)?;
                }
            }
            let target = image_test[j].clone();
            let input = ComponentEnergies::at_channel(&target, &interference, &noise_test, config.reference_mic)?;
            Ok(TalkerComponents { target, interference, input })
        })
        .collect::<Result<Vec<_>>>()?;

    let spectrum = phi_y.matrices().par_iter().map(extreme_eigs).collect::<Result<Vec<_>>>()?;
    let clock = Instant::now();
    let (baseline_weights, baseline_powers) = build_sensorspace(&phi_y, &steering)?;
    let baseline_train_s = clock.elapsed().as_secs_f64();

    Ok(Scenario {
        config: config.clone(),
        channel,
        train,
        test,
        phi_y,
        spectrum,
        steering,
        y_test,
        noise_test,
        talkers,
        baseline_weights,
        baseline_powers,
        baseline_train_s,
    })
}

/// Evaluation of one beamformer for one talker on the test frames.
#[derive(Debug, Clone)]
pub struct TalkerOutcome {
    /// Output on the mixture, `(frame, bin)`.
    pub output: Vec<Complex64>,
    pub report: GainReport,
    pub test_s: f64,
}

fn talker_gains(sc: &Scenario, selection: Selection<'_>, j: usize) -> Result<GainReport> {
    let t = &sc.talkers[j];
    let outs = shadow_filter(selection, &[&t.target, &t.interference, &sc.noise_test])?;
    gains(&t.input, &ComponentEnergies::from_outputs(&outs)?)
}

/// Sensorspace MVDR outputs and gains for every talker.
pub fn evaluate_baseline(sc: &Scenario) -> Result<Vec<TalkerOutcome>> {
    (0..sc.talkers.len())
        .map(|j| {
            let clock = Instant::now();
            let w = &sc.baseline_weights[j];
            let output = crate::beamformer::apply_weights(w, &sc.y_test)?;
            let report = talker_gains(sc, Selection::Fixed(w), j)?;
            Ok(TalkerOutcome { output, report, test_s: clock.elapsed().as_secs_f64() })
        })
        .collect()
}

/// One row of the regret report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretRow {
    pub p: usize,
    pub talker: usize,
    pub bin: usize,
    pub entry: RegretEntry,
}

/// Everything computed at one `N_d`.
#[derive(Debug)]
pub struct PointOutcome {
    pub n_d: usize,
    pub n_p: usize,
    pub bank: ProjectionBank,
    pub set: BeamformerSet,
    pub decisions: Vec<MixtureDecision>,
    pub talkers: Vec<TalkerOutcome>,
    pub regret: Vec<RegretRow>,
    pub summary: RegretSummary,
    pub train_s: f64,
}

/// Applies every compressed beamformer of talker `j` to the test mixture and
/// combines them bin by bin.
pub fn mix_talker(sc: &Scenario, bank: &ProjectionBank, set: &BeamformerSet, j: usize) -> Result<MixtureDecision> {
    let y = &sc.y_test;
    let (frames, n_p) = (y.frames(), bank.len());
    let parts = (0..y.bins())
        .into_par_iter()
        .map(|k| {
            let mut data = vec![Complex64::new(f64::NAN, f64::NAN); n_p * frames];
            for p in 0..n_p {
                if let Some(u) = set.sensor_filter(bank, p, j, k) {
                    for i in 0..frames {
                        data[p * frames + i] = u.iter().enumerate().map(|(m, um)| um.conj() * y.get(m, i, k)).sum();
                    }
                }
            }
            sc.config.mixture.apply(&OutputStack::new(n_p, frames, 1, data)?)
        })
        .collect::<Result<Vec<_>>>()?;
    MixtureDecision::concat_bins(parts)
}

/// Bound report for every non-skipped `(p, j, k)`.
pub fn regret_rows(sc: &Scenario, bank: &ProjectionBank, set: &BeamformerSet) -> Result<Vec<RegretRow>> {
    let per_p = (0..bank.len())
        .into_par_iter()
        .map(|p| {
            let psi = bank.matrix(p);
            let row_delta = row_distortion(psi);
            let mut rows = Vec::new();
            for j in 0..sc.steering.num_sources() {
                for k in 0..sc.steering.bins() {
                    let p_cmvdr = set.powers[p][j][k];
                    if p_cmvdr.is_nan() {
                        continue;
                    }
                    let g = sc.steering.get(j, k);
                    let (lmin, lmax) = sc.spectrum[k];
                    let delta = restricted_distortion(psi, row_delta, g);
                    let entry = RegretEntry::from_powers(lmin, lmax, delta, norm_sq(g), sc.baseline_powers[j][k], p_cmvdr)?;
                    rows.push(RegretRow { p, talker: j, bin: k, entry });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_p.into_iter().flatten().collect())
}

/// Builds the bank and compressed beamformers for one `N_d`, runs the mixture
/// on the test frames and reports gains and bounds.
pub fn evaluate_point(sc: &Scenario, n_d: usize, n_p: usize, kind: ProjectionKind, seed: u64) -> Result<PointOutcome> {
    let clock = Instant::now();
    let bank = generate(kind, n_p, n_d, sc.channel.num_mics(), seed)?;
    let set = build_compressed(&bank, &sc.phi_y, &sc.steering)?;
    let train_s = clock.elapsed().as_secs_f64();

    let mut decisions = Vec::with_capacity(sc.talkers.len());
    let mut talkers = Vec::with_capacity(sc.talkers.len());
    for j in 0..sc.talkers.len() {
        let clock = Instant::now();
        let decision = mix_talker(sc, &bank, &set, j)?;
        let selection = Selection::Mixture { bank: &bank, set: &set, source: j, decision: &decision };
        let report = talker_gains(sc, selection, j)?;
        talkers.push(TalkerOutcome { output: decision.z_mix.clone(), report, test_s: clock.elapsed().as_secs_f64() });
        decisions.push(decision);
    }

    let regret = regret_rows(sc, &bank, &set)?;
    let mut summary = RegretSummary::default();
    for r in &regret {
        summary.add(&r.entry);
    }
    Ok(PointOutcome { n_d, n_p, bank, set, decisions, talkers, regret, summary, train_s })
}

/// One line of results.csv plus the regret summary of its sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: &'static str,
    pub talker: usize,
    pub n_d: usize,
    pub n_p: usize,
    pub seed: u64,
    pub snr_gain_db: f64,
    pub sir_gain_db: f64,
    pub sinr_gain_db: f64,
    pub input_snr_db: f64,
    pub input_sir_db: f64,
    pub input_sinr_db: f64,
    pub containment_rate: f64,
    pub min_regret: f64,
    pub max_regret: f64,
    pub train_s: f64,
    pub test_s: f64,
}

impl ResultRow {
    fn from_report(method: &'static str, talker: usize, n_d: usize, n_p: usize, seed: u64, r: &GainReport) -> Self {
        Self {
            method,
            talker,
            n_d,
            n_p,
            seed,
            snr_gain_db: r.snr_gain_db,
            sir_gain_db: r.sir_gain_db,
            sinr_gain_db: r.sinr_gain_db,
            input_snr_db: r.input_snr_db,
            input_sir_db: r.input_sir_db,
            input_sinr_db: r.input_sinr_db,
            containment_rate: f64::NAN,
            min_regret: f64::NAN,
            max_regret: f64::NAN,
            train_s: 0.0,
            test_s: 0.0,
        }
    }

    fn failed(talker: usize, n_d: usize, n_p: usize, seed: u64) -> Self {
        Self {
            method: METHOD_FAILED,
            talker,
            n_d,
            n_p,
            seed,
            snr_gain_db: f64::NAN,
            sir_gain_db: f64::NAN,
            sinr_gain_db: f64::NAN,
            input_snr_db: f64::NAN,
            input_sir_db: f64::NAN,
            input_sinr_db: f64::NAN,
            containment_rate: f64::NAN,
            min_regret: f64::NAN,
            max_regret: f64::NAN,
            train_s: f64::NAN,
            test_s: f64::NAN,
        }
    }
}

/// Regret summary of one sweep point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSummary {
    pub n_d: usize,
    pub n_p: usize,
    pub summary: RegretSummary,
    /// `(p, j, k)` entries whose steering vector the projection annihilated.
    pub skipped: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the config's output directory.
    pub out_dir: Option<PathBuf>,
    /// Overrides the config's master seed.
    pub seed: Option<u64>,
    pub plot: bool,
    pub write_audio: bool,
}

#[derive(Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub points: Vec<PointSummary>,
    /// `(N_d, message)` for sweep points that failed.
    pub failures: Vec<(usize, String)>,
    pub files: Vec<PathBuf>,
}

/// Runs the baseline and every sweep point, then writes results.csv,
/// regret.csv, summary.csv, gamma maps and the optional audio and plots.
pub fn run(config: &ExperimentConfig, options: &RunOptions) -> Result<RunReport> {
    let mut config = config.clone();
    if let Some(seed) = options.seed {
        config.seed = seed;
    }
    if let Some(dir) = &options.out_dir {
        config.output_dir = dir.clone();
    }
    let sc = prepare(&config)?;
    let n_m = sc.channel.num_mics();
    let mut out = report::Writer::create(&config.output_dir, options)?;

    let baseline = evaluate_baseline(&sc)?;
    let mut rows = Vec::new();
    for (j, t) in baseline.iter().enumerate() {
        let mut row = ResultRow::from_report(METHOD_BASELINE, j, n_m, 1, config.seed, &t.report);
        row.train_s = sc.baseline_train_s;
        row.test_s = t.test_s;
        rows.push(row);
    }
    out.baseline(&sc, &baseline)?;

    let mut points = Vec::new();
    let mut failures = Vec::new();
    for n_d in config.nd_values()? {
        let n_p = config.num_projections(n_d);
        match evaluate_point(&sc, n_d, n_p, config.sweep.projection, bank_seed(config.seed, n_d)) {
            Ok(point) => {
                for (j, t) in point.talkers.iter().enumerate() {
                    let mut row = ResultRow::from_report(METHOD_MIXTURE, j, n_d, n_p, config.seed, &t.report);
                    row.containment_rate = point.summary.containment_rate();
                    row.min_regret = point.summary.min_regret;
                    row.max_regret = point.summary.max_regret;
                    row.train_s = point.train_s;
                    row.test_s = t.test_s;
                    rows.push(row);
                }
                points.push(PointSummary { n_d, n_p, summary: point.summary, skipped: point.set.skipped().len() });
                out.point(&sc, &point)?;
            }
            Err(e) => {
                for j in 0..sc.talkers.len() {
                    rows.push(ResultRow::failed(j, n_d, n_p, config.seed));
                }
                failures.push((n_d, e.to_string()));
            }
        }
    }
    let files = out.finish(&rows, &points, &failures)?;
    Ok(RunReport { out_dir: config.output_dir, rows, points, failures, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(nd_schedule(5, 30, 10).unwrap(), vec![5, 6, 7, 9, 11, 14, 17, 20, 25, 30]);
        assert_eq!(nd_schedule(8, 8, 1).unwrap(), vec![8]);
        assert_eq!(nd_schedule(5, 30, 2).unwrap(), vec![5, 30]);
        assert_eq!(nd_schedule(2, 3, 5).unwrap(), vec![2, 3]);
        assert!(nd_schedule(0, 3, 2).is_err());
        assert!(nd_schedule(4, 3, 2).is_err());
        assert!(nd_schedule(1, 3, 0).is_err());
    }

    #[test]
    fn budget_examples() {
        assert_eq!(budget_np(30, 5), 216);
        assert_eq!(budget_np(30, 30), 1);
        assert_eq!(budget_np(30, 11), 20);
        assert_eq!(budget_np(6, 5), 1);
        for n_d in 1..=30 {
            let n_p = budget_np(30, n_d);
            assert!(n_p * n_d.pow(3) <= 27_000 || n_p == 1);
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let a: Vec<u64> = (0..64).map(|s| derive_seed(7, s)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(a.len(), b.len());
        assert_eq!(derive_seed(7, 3), derive_seed(7, 3));
        assert_ne!(derive_seed(7, 3), derive_seed(8, 3));
    }

    const MINIMAL: &str = r#"
        [room]
        dimensions = [5.0, 4.0, 4.0]
        [[arrays]]
        center = [2.0, 2.0, 1.5]
        radius = 0.05
        num_elements = 4
        [[sources]]
        position = [1.0, 1.0, 1.5]
        [sweep]
        nd = [2, 4]
    "#;

    #[test]
    fn config_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.noise_level, 1e-3);
        assert_eq!(cfg.loading_factor, 1e-3);
        assert_eq!(cfg.steering, SteeringMode::EstimatedRtf);
        assert_eq!(cfg.sweep.projection, ProjectionKind::GaussianReal);
        assert_eq!(cfg.sources[0].signal, SourceSignal::WhiteNoise);
        assert_eq!(cfg.mixture, MixtureRule::MinPower);
        assert_eq!(cfg.num_mics(), 4);
        assert_eq!(cfg.num_projections(2), 8);
    }

    #[test]
    fn config_rejects_bad_sweeps() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.sweep.nd = vec![5];
        assert!(cfg.validate().is_err());
        cfg.sweep.nd = vec![2];
        cfg.sweep.n_p = Some(3);
        assert!(cfg.validate().is_err());
        cfg.sweep.budget = false;
        cfg.validate().unwrap();
        assert_eq!(cfg.num_projections(2), 3);
        cfg.sweep.projection = ProjectionKind::Identity;
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml(&format!("{MINIMAL}\nbogus = 1")).is_err());
    }

    #[test]
    fn signal_kinds_parse() {
        let text = MINIMAL.replace(
            "position = [1.0, 1.0, 1.5]",
            "position = [1.0, 1.0, 1.5]\nsignal = { kind = \"tone\", frequency = 500.0 }",
        );
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.sources[0].signal, SourceSignal::Tone { frequency: 500.0 });
    }

    #[test]
    fn softmax_rule_parses() {
        let text = format!("{MINIMAL}\n[mixture]\nrule = \"softmax_accumulated\"\nwindow = 8\ntemperature = {{ fixed = 0.5 }}\n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.mixture, MixtureRule::SoftmaxAccumulated { window: Some(8), temperature: crate::mixture::Temperature::Fixed(0.5) });
        let text = format!("{MINIMAL}\n[mixture]\nrule = \"softmax_accumulated\"\ntemperature = \"median\"\n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.mixture, MixtureRule::SoftmaxAccumulated { window: None, temperature: crate::mixture::Temperature::Median });
    }

    #[test]
    fn segments_do_not_overlap() {
        let cfg = StftConfig::default();
        let (train, test) = segments(&cfg, 16_000, 200).unwrap();
        assert_eq!(train, 0..61);
        assert_eq!(test, 63..200);
        assert!((train.end - 1) * cfg.hop + cfg.frame_length <= 16_000);
        assert!(test.start * cfg.hop >= 16_000);
    }
}
