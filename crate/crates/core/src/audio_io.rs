//! WAV input/output and deterministic surrogate sources.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Peak level surrogate signals are normalized to.
pub const SURROGATE_PEAK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        let len = channels.first().map_or(0, |c| c.len());
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("audio channels differ in length".into()));
        }
        if channels.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("non-finite audio sample".into()));
        }
        Ok(Self { channels, sample_rate })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { channels: vec![samples], sample_rate }
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavFormat {
    Pcm16,
    Float32,
}

/// Reads a PCM16 or IEEE float32 file, normalized to [-1, 1].
pub fn read_wav(path: &Path, expected_rate: u32) -> Result<AudioBuffer> {
    let wav_err = |source| Error::Wav { path: path.to_path_buf(), source };
    let mut reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.sample_rate != expected_rate {
        return Err(Error::SampleRate { expected: expected_rate, found: spec.sample_rate });
    }
    let n_ch = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err)?,
        (fmt, bits) => return Err(Error::UnsupportedFormat(format!("{fmt:?} {bits}-bit"))),
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch.max(1)); n_ch];
    for (t, v) in interleaved.into_iter().enumerate() {
        channels[t % n_ch].push(v);
    }
    AudioBuffer::new(channels, spec.sample_rate)
}

/// Writes `buf`; returns the number of PCM16 samples that had to be clipped.
pub fn write_wav(path: &Path, buf: &AudioBuffer, format: WavFormat) -> Result<usize> {
    let wav_err = |source| Error::Wav { path: path.to_path_buf(), source };
    if buf.channels.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite audio sample".into()));
    }
    let spec = WavSpec {
        channels: buf.num_channels() as u16,
        sample_rate: buf.sample_rate,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err)?;
    let mut clipped = 0;
    for t in 0..buf.len() {
        for ch in &buf.channels {
            let v = ch[t];
            match format {
                WavFormat::Float32 => writer.write_sample(v as f32).map_err(wav_err)?,
                WavFormat::Pcm16 => {
                    let scaled = (v * 32768.0).round();
                    if !(-32768.0..=32767.0).contains(&scaled) {
                        clipped += 1;
                    }
                    writer.write_sample(scaled.clamp(-32768.0, 32767.0) as i16).map_err(wav_err)?;
                }
            }
        }
    }
    writer.finalize().map_err(wav_err)?;
    Ok(clipped)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    WhiteNoise,
    Tone { frequency: f64 },
}

/// Deterministic mono test signal. White noise is drawn unit-variance from a
/// ChaCha20 stream and then peak-normalized to [`SURROGATE_PEAK`].
pub fn generate(kind: SignalKind, seconds: f64, sample_rate: u32, seed: u64) -> Result<AudioBuffer> {
    if !(seconds > 0.0) {
        return Err(Error::Config(format!("signal duration must be positive, got {seconds}")));
    }
    let len = (seconds * sample_rate as f64).round() as usize;
    if len == 0 {
        return Err(Error::Config("signal duration rounds to zero samples".into()));
    }
    let samples = match kind {
        SignalKind::WhiteNoise => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let raw: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
            let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            raw.into_iter().map(|v| v * SURROGATE_PEAK / peak).collect()
        }
        SignalKind::Tone { frequency } => (0..len)
            .map(|t| {
                SURROGATE_PEAK * (2.0 * std::f64::consts::PI * frequency * t as f64 / sample_rate as f64).sin()
            })
            .collect(),
    };
    Ok(AudioBuffer::mono(samples, sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.wav");
        let spec = WavSpec { channels: 1, sample_rate: 16_000, bits_per_sample: 16, sample_format: SampleFormat::Int };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for v in [0i16, 16384, -16384] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let buf = read_wav(&path, 16_000).unwrap();
        assert_eq!(buf.channel(0), &[0.0, 0.5, -0.5]);
    }

    #[test]
    fn float32_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.wav");
        let samples: Vec<f64> = (0..500).map(|t| ((t as f64 * 0.37).sin() * 0.9) as f32 as f64).collect();
        let left = samples.clone();
        let right: Vec<f64> = samples.iter().map(|v| -v * 0.5).collect();
        let buf = AudioBuffer::new(vec![left, right], 16_000).unwrap();
        assert_eq!(write_wav(&path, &buf, WavFormat::Float32).unwrap(), 0);
        assert_eq!(read_wav(&path, 16_000).unwrap(), buf);
    }

    #[test]
    fn pcm16_round_trip_within_one_lsb_and_clip_count() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.wav");
        let buf = generate(SignalKind::WhiteNoise, 0.1, 16_000, 11).unwrap();
        write_wav(&path, &buf, WavFormat::Pcm16).unwrap();
        let back = read_wav(&path, 16_000).unwrap();
        let worst = buf.channel(0).iter().zip(back.channel(0)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1.0 / 32768.0);

        let loud = AudioBuffer::mono(vec![0.0, 1.0, -1.0, 1.5], 16_000);
        assert_eq!(write_wav(&path, &loud, WavFormat::Pcm16).unwrap(), 2);
    }

    #[test]
    fn wrong_rate_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.wav");
        write_wav(&path, &AudioBuffer::mono(vec![0.0; 10], 44_100), WavFormat::Float32).unwrap();
        assert!(matches!(read_wav(&path, 16_000), Err(Error::SampleRate { expected: 16_000, found: 44_100 })));
    }

    #[test]
    fn unsupported_and_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.wav");
        let spec = WavSpec { channels: 1, sample_rate: 16_000, bits_per_sample: 24, sample_format: SampleFormat::Int };
        let mut w = WavWriter::create(&path, spec).unwrap();
        w.write_sample(5i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(read_wav(&path, 16_000), Err(Error::UnsupportedFormat(_))));

        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"RIFF\x00\x00not a wave").unwrap();
        assert!(matches!(read_wav(&junk, 16_000), Err(Error::Wav { .. })));
    }

    #[test]
    fn generator_is_seeded_and_bounded() {
        let a = generate(SignalKind::WhiteNoise, 0.5, 16_000, 42).unwrap();
        let b = generate(SignalKind::WhiteNoise, 0.5, 16_000, 42).unwrap();
        let c = generate(SignalKind::WhiteNoise, 0.5, 16_000, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 8000);
        let peak = a.channel(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - SURROGATE_PEAK).abs() < 1e-15);
        assert!(generate(SignalKind::WhiteNoise, 0.0, 16_000, 1).is_err());
    }

    #[test]
    fn tone_lands_on_its_bin() {
        // 500 Hz at 16 kHz with a 512-point frame is exactly bin 16
        let tone = generate(SignalKind::Tone { frequency: 500.0 }, 0.032, 16_000, 0).unwrap();
        let cfg = crate::stft::StftConfig {
            frame_length: 512,
            hop: 512,
            window: crate::stft::WindowKind::Rect,
            fft_size: 512,
            sample_rate: 16_000,
        };
        let spec = crate::stft::analyze(tone.channels(), &cfg).unwrap();
        let peak = spec.get(0, 0, 16).norm();
        assert!((peak - SURROGATE_PEAK * 256.0).abs() < 1e-9);
        for k in (0..257).filter(|&k| k != 16) {
            assert!(spec.get(0, 0, k).norm() < 1e-9 * peak);
        }
    }
}
