//! Short-time Fourier analysis and weighted overlap-add synthesis.
//!
//! Frame `i` starts at sample `i * hop`; its spectrum is taken with the time
//! origin at the frame start, so a unit impulse at the first sample of a
//! rectangular frame gives an all-ones spectrum. Only the one-sided half of
//! each spectrum is stored (`fft_size / 2 + 1` bins).

use std::ops::Range;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{CVector, Complex64, Error, Result};

const COLA_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// Periodic Hann analysis, rectangular synthesis.
    Hann,
    /// Square-root periodic Hann on both sides.
    SqrtHann,
    /// Rectangular on both sides.
    Rect,
}

impl WindowKind {
    fn periodic_hann(n: usize, len: usize) -> f64 {
        0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos()
    }

    fn analysis(self, len: usize) -> Vec<f64> {
        (0..len)
            .map(|n| match self {
                WindowKind::Hann => Self::periodic_hann(n, len),
                WindowKind::SqrtHann => Self::periodic_hann(n, len).sqrt(),
                WindowKind::Rect => 1.0,
            })
            .collect()
    }

    fn synthesis(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Hann | WindowKind::Rect => vec![1.0; len],
            WindowKind::SqrtHann => WindowKind::SqrtHann.analysis(len),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub frame_length: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub fft_size: usize,
    pub sample_rate: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self { frame_length: 512, hop: 256, window: WindowKind::SqrtHann, fft_size: 512, sample_rate: 16_000 }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_length == 0 || self.hop == 0 {
            return Err(Error::Config("frame_length and hop must be positive".into()));
        }
        if !self.frame_length.is_multiple_of(self.hop) {
            return Err(Error::Config(format!(
                "hop {} does not divide frame_length {}",
                self.hop, self.frame_length
            )));
        }
        if self.fft_size < self.frame_length {
            return Err(Error::Config(format!(
                "fft_size {} is shorter than frame_length {}",
                self.fft_size, self.frame_length
            )));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn analysis_window(&self) -> Vec<f64> {
        self.window.analysis(self.frame_length)
    }

    pub fn synthesis_window(&self) -> Vec<f64> {
        self.window.synthesis(self.frame_length)
    }

    /// Overlap-add constant of the window product and the worst relative
    /// deviation from it over one hop period.
    pub fn cola(&self) -> (f64, f64) {
        let wa = self.analysis_window();
        let ws = self.synthesis_window();
        let sums: Vec<f64> = (0..self.hop)
            .map(|n| (n..self.frame_length).step_by(self.hop).map(|t| wa[t] * ws[t]).sum())
            .collect();
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        if mean <= 0.0 {
            return (mean, f64::INFINITY);
        }
        let dev = sums.iter().map(|s| (s - mean).abs() / mean).fold(0.0, f64::max);
        (mean, dev)
    }

    pub fn is_cola(&self) -> bool {
        self.cola().1 <= COLA_TOL
    }

    /// `ceil((len - frame_length) / hop) + 1`.
    pub fn num_frames(&self, len: usize) -> usize {
        (len.saturating_sub(self.frame_length)).div_ceil(self.hop) + 1
    }

    /// Samples of a length-`len` signal that receive full overlap-add coverage.
    pub fn interior(&self, len: usize) -> Range<usize> {
        let edge = self.frame_length - self.hop;
        edge..len.saturating_sub(edge).max(edge)
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_size as f64
    }
}

/// Complex STFT coefficients laid out `(channel, frame, bin)`, bin fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrogramTensor {
    data: Vec<Complex64>,
    channels: usize,
    frames: usize,
    config: StftConfig,
}

impl SpectrogramTensor {
    pub fn zeros(channels: usize, frames: usize, config: StftConfig) -> Self {
        Self { data: vec![Complex64::new(0.0, 0.0); channels * frames * config.bins()], channels, frames, config }
    }

    pub fn from_data(channels: usize, frames: usize, config: StftConfig, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != channels * frames * config.bins() {
            return Err(Error::Shape(format!(
                "{} coefficients for ({channels}, {frames}, {})",
                data.len(),
                config.bins()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Degenerate("non-finite STFT coefficient".into()));
        }
        Ok(Self { data, channels, frames, config })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn frames(&self) -> usize {
        self.frames
    }
    pub fn bins(&self) -> usize {
        self.config.bins()
    }
    pub fn config(&self) -> &StftConfig {
        &self.config
    }
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    fn offset(&self, c: usize, i: usize, k: usize) -> usize {
        (c * self.frames + i) * self.bins() + k
    }

    #[inline]
    pub fn get(&self, c: usize, i: usize, k: usize) -> Complex64 {
        self.data[self.offset(c, i, k)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, i: usize, k: usize, value: Complex64) {
        let o = self.offset(c, i, k);
        self.data[o] = value;
    }

    /// Frame-major `(frames, bins)` block of one channel.
    pub fn channel(&self, c: usize) -> &[Complex64] {
        let n = self.frames * self.bins();
        &self.data[c * n..(c + 1) * n]
    }

    /// Column vector across channels at `(i, k)`.
    pub fn snapshot(&self, i: usize, k: usize) -> CVector {
        CVector::from_iterator(self.channels, (0..self.channels).map(|c| self.get(c, i, k)))
    }

    /// Copy of the given frame range.
    pub fn frame_range(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.frames {
            return Err(Error::Shape(format!("frame range {range:?} outside 0..{}", self.frames)));
        }
        let bins = self.bins();
        let frames = range.len();
        let mut data = Vec::with_capacity(self.channels * frames * bins);
        for c in 0..self.channels {
            let block = self.channel(c);
            data.extend_from_slice(&block[range.start * bins..range.end * bins]);
        }
        Ok(Self { data, channels: self.channels, frames, config: self.config })
    }

    /// Single channel as its own tensor.
    pub fn select_channel(&self, c: usize) -> Self {
        Self { data: self.channel(c).to_vec(), channels: 1, frames: self.frames, config: self.config }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(self.with_data(data))
    }

    pub fn scale(&self, alpha: f64) -> Self {
        self.with_data(self.data.iter().map(|z| z * alpha).collect())
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.channels != other.channels || self.frames != other.frames || self.bins() != other.bins() {
            return Err(Error::Shape(format!(
                "({}, {}, {}) vs ({}, {}, {})",
                self.channels,
                self.frames,
                self.bins(),
                other.channels,
                other.frames,
                other.bins()
            )));
        }
        Ok(())
    }

    fn with_data(&self, data: Vec<Complex64>) -> Self {
        Self { data, channels: self.channels, frames: self.frames, config: self.config }
    }
}

/// Multichannel STFT. All channels must have the same length of at least one frame.
pub fn analyze(signal: &[Vec<f64>], cfg: &StftConfig) -> Result<SpectrogramTensor> {
    cfg.validate()?;
    let first = signal.first().ok_or_else(|| Error::Empty("signal has no channels".into()))?;
    let len = first.len();
    if len == 0 {
        return Err(Error::Empty("signal has no samples".into()));
    }
    if let Some(bad) = signal.iter().position(|ch| ch.len() != len) {
        return Err(Error::Shape(format!("channel {bad} has {} samples, expected {len}", signal[bad].len())));
    }
    if len < cfg.frame_length {
        return Err(Error::Shape(format!("signal length {len} shorter than frame_length {}", cfg.frame_length)));
    }

    let frames = cfg.num_frames(len);
    let bins = cfg.bins();
    let window = cfg.analysis_window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    let mut data = Vec::with_capacity(signal.len() * frames * bins);

    for channel in signal {
        for i in 0..frames {
            let start = i * cfg.hop;
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            for (n, w) in window.iter().enumerate() {
                if let Some(&x) = channel.get(start + n) {
                    buf[n] = Complex64::new(w * x, 0.0);
                }
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            data.extend_from_slice(&buf[..bins]);
        }
    }
    SpectrogramTensor::from_data(signal.len(), frames, *cfg, data)
}

/// Weighted overlap-add inverse of [`analyze`]. Output length is
/// `(frames - 1) * hop + frame_length`.
pub fn synthesize(spec: &SpectrogramTensor) -> Result<Vec<Vec<f64>>> {
    let cfg = spec.config();
    cfg.validate()?;
    let (gain, deviation) = cfg.cola();
    if deviation > COLA_TOL {
        return Err(Error::NotCola { deviation });
    }
    let n_fft = cfg.fft_size;
    let bins = cfg.bins();
    let window = cfg.synthesis_window();
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(n_fft);
    let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let out_len = (spec.frames() - 1) * cfg.hop + cfg.frame_length;
    let norm = 1.0 / (n_fft as f64 * gain);

    let mut out = Vec::with_capacity(spec.channels());
    for c in 0..spec.channels() {
        let block = spec.channel(c);
        let mut y = vec![0.0; out_len];
        for i in 0..spec.frames() {
            let frame = &block[i * bins..(i + 1) * bins];
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            buf[..bins].copy_from_slice(frame);
            for k in 1..bins {
                if n_fft - k >= bins {
                    buf[n_fft - k] = frame[k].conj();
                }
            }
            ifft.process_with_scratch(&mut buf, &mut scratch);
            let start = i * cfg.hop;
            for (n, w) in window.iter().enumerate() {
                y[start + n] += w * buf[n].re * norm;
            }
        }
        out.push(y);
    }
    Ok(out)
}
