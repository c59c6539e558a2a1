//! Shoebox room acoustics by the image-source method.
//!
//! Each image source contributes a fractionally delayed, Hann-windowed sinc
//! pulse scaled by the product of its wall reflection factors and by
//! `1 / (4 pi d)`. Reflection factors are `sqrt(1 - absorption)`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::audio_io::AudioBuffer;
use crate::stft::SpectrogramTensor;
use crate::{CVector, Complex64, Error, Result};

pub type Position = [f64; 3];

/// Half-length of the fractional-delay filter; the filter spans `2 * HALF + 1` taps.
const SINC_HALF: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Absorption {
    Uniform(f64),
    /// Walls in order x=0, x=Lx, y=0, y=Ly, z=0, z=Lz.
    PerWall([f64; 6]),
}

impl Absorption {
    fn walls(&self) -> [f64; 6] {
        match *self {
            Absorption::Uniform(a) => [a; 6],
            Absorption::PerWall(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub dimensions: [f64; 3],
    #[serde(default = "default_absorption")]
    pub absorption: Absorption,
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    #[serde(default = "default_speed_of_sound")]
    pub speed_of_sound: f64,
}

fn default_absorption() -> Absorption {
    Absorption::Uniform(0.35)
}
fn default_max_order() -> usize {
    10
}
fn default_speed_of_sound() -> f64 {
    343.0
}

impl RoomSpec {
    pub fn new(dimensions: [f64; 3], absorption: f64, max_order: usize) -> Self {
        Self { dimensions, absorption: Absorption::Uniform(absorption), max_order, speed_of_sound: 343.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::Geometry(format!("room dimensions {:?} must be positive", self.dimensions)));
        }
        if self.absorption.walls().iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Geometry("absorption coefficients must lie in [0, 1]".into()));
        }
        if !(self.speed_of_sound > 0.0) {
            return Err(Error::Geometry("speed of sound must be positive".into()));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.iter().zip(&self.dimensions).all(|(&x, &l)| x > 0.0 && x < l)
    }

    fn require_inside(&self, p: &Position, what: &str) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::Geometry(format!("{what} {p:?} is not strictly inside room {:?}", self.dimensions)))
        }
    }

    fn reflection_factors(&self) -> [f64; 6] {
        self.absorption.walls().map(|a| (1.0 - a).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSource {
    pub position: Position,
    pub distance: f64,
    /// Product of reflection factors over `4 pi distance`.
    pub gain: f64,
    pub order: usize,
}

/// All image sources of order at most `room.max_order` with non-zero gain.
pub fn image_sources(room: &RoomSpec, source: &Position, mic: &Position) -> Result<Vec<ImageSource>> {
    room.validate()?;
    room.require_inside(source, "source")?;
    room.require_inside(mic, "microphone")?;
    if dist(source, mic) < 1e-9 {
        return Err(Error::Geometry("source and microphone coincide".into()));
    }
    let beta = room.reflection_factors();
    let order = room.max_order as i64;
    let mut out = Vec::new();
    // Per axis: image coordinate (1 - 2q) s + 2 n L, hitting the lower wall
    // |n - q| times and the upper wall |n| times.
    let axis = |a: usize| -> Vec<(f64, usize, usize)> {
        let mut v = Vec::new();
        for n in -order..=order {
            for q in 0..=1i64 {
                let lower = (n - q).unsigned_abs() as usize;
                let upper = n.unsigned_abs() as usize;
                if lower + upper <= room.max_order {
                    let coord = (1 - 2 * q) as f64 * source[a] + 2.0 * n as f64 * room.dimensions[a];
                    v.push((coord, lower, upper));
                }
            }
        }
        v
    };
    let (ax, ay, az) = (axis(0), axis(1), axis(2));
    for &(x, xl, xu) in &ax {
        for &(y, yl, yu) in &ay {
            if xl + xu + yl + yu > room.max_order {
                continue;
            }
            for &(z, zl, zu) in &az {
                let total = xl + xu + yl + yu + zl + zu;
                if total > room.max_order {
                    continue;
                }
                let refl = beta[0].powi(xl as i32)
                    * beta[1].powi(xu as i32)
                    * beta[2].powi(yl as i32)
                    * beta[3].powi(yu as i32)
                    * beta[4].powi(zl as i32)
                    * beta[5].powi(zu as i32);
                if refl == 0.0 {
                    continue;
                }
                let position = [x, y, z];
                let distance = dist(&position, mic);
                out.push(ImageSource { position, distance, gain: refl / (4.0 * PI * distance), order: total });
            }
        }
    }
    Ok(out)
}

/// Room impulse response from `source` to `mic` at sample rate `fs`.
///
/// Length covers the farthest image plus the filter tail, capped at one second.
pub fn image_source_rir(room: &RoomSpec, source: &Position, mic: &Position, fs: f64) -> Result<Vec<f64>> {
    let images = image_sources(room, source, mic)?;
    let c = room.speed_of_sound;
    let max_d = images.iter().map(|im| im.distance).fold(0.0, f64::max);
    let taps = ((max_d * fs / c).ceil() as usize + SINC_HALF + 1).min(fs.round() as usize);
    let mut h = vec![0.0; taps];
    for im in &images {
        add_fractional_pulse(&mut h, im.distance * fs / c, im.gain);
    }
    Ok(h)
}

fn add_fractional_pulse(h: &mut [f64], delay: f64, amp: f64) {
    let center = delay.round() as i64;
    let half = SINC_HALF as i64;
    for n in (center - half).max(0)..=(center + half) {
        let Some(slot) = h.get_mut(n as usize) else { break };
        let t = n as f64 - delay;
        let window = 0.5 * (1.0 + (PI * t / (half + 1) as f64).cos());
        *slot += amp * window * sinc(t);
    }
}

fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-12 {
        1.0
    } else {
        (PI * t).sin() / (PI * t)
    }
}

fn dist(a: &Position, b: &Position) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Location (fractional samples) and value of the largest excursion of the
/// band-limited signal interpolated from `h`.
pub fn bandlimited_peak(h: &[f64]) -> (f64, f64) {
    let Some(n0) = (0..h.len()).max_by(|&a, &b| h[a].abs().total_cmp(&h[b].abs())) else {
        return (0.0, 0.0);
    };
    let eval = |t: f64| -> f64 {
        let lo = (t - 400.0).floor().max(0.0) as usize;
        let hi = ((t + 400.0).ceil() as usize).min(h.len().saturating_sub(1));
        (lo..=hi).map(|m| h[m] * sinc(t - m as f64)).sum()
    };
    let mut best = (n0 as f64, h[n0]);
    for step in -1000..=1000 {
        let t = n0 as f64 + step as f64 * 1e-3;
        let v = eval(t);
        if v.abs() > best.1.abs() {
            best = (t, v);
        }
    }
    best
}

/// Inter-element spacing for half-wavelength spacing at `freq`, turned into the
/// radius of an `n`-element circle with that chord length.
pub fn matched_radius(n: usize, freq: f64, speed_of_sound: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::Geometry("matched radius needs at least two elements".into()));
    }
    let spacing = speed_of_sound / (2.0 * freq);
    Ok(spacing / (2.0 * (PI / n as f64).sin()))
}

/// `n` equally spaced points on the horizontal circle around `center`.
pub fn circular_array(center: Position, radius: f64, n: usize) -> Result<Vec<Position>> {
    if n == 0 {
        return Err(Error::Geometry("array needs at least one element".into()));
    }
    Ok((0..n)
        .map(|m| {
            let phi = 2.0 * PI * m as f64 / n as f64;
            [center[0] + radius * phi.cos(), center[1] + radius * phi.sin(), center[2]]
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    pub center: Position,
    pub radius: f64,
    pub num_elements: usize,
}

impl ArraySpec {
    pub fn positions(&self) -> Result<Vec<Position>> {
        circular_array(self.center, self.radius, self.num_elements)
    }
}

/// Impulse responses and one-sided transfer functions for every (mic, source) pair.
#[derive(Debug, Clone)]
pub struct AcousticChannel {
    mics: Vec<Position>,
    sources: Vec<Position>,
    /// `rir[m][j]`
    rir: Vec<Vec<Vec<f64>>>,
    /// `(mic, source, bin)`, bin fastest.
    atf: Vec<Complex64>,
    fft_size: usize,
    sample_rate: u32,
}

impl AcousticChannel {
    pub fn num_mics(&self) -> usize {
        self.mics.len()
    }
    pub fn num_sources(&self) -> usize {
        self.sources.len()
    }
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }
    pub fn fft_size(&self) -> usize {
        self.fft_size
    }
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }
    pub fn mic_positions(&self) -> &[Position] {
        &self.mics
    }
    pub fn source_positions(&self) -> &[Position] {
        &self.sources
    }
    pub fn rir(&self, m: usize, j: usize) -> &[f64] {
        &self.rir[m][j]
    }
    pub fn atf(&self, m: usize, j: usize, k: usize) -> Complex64 {
        self.atf[(m * self.sources.len() + j) * self.bins() + k]
    }

    /// Stacked transfer vector `h_j[k]` across microphones.
    pub fn transfer_vector(&self, j: usize, k: usize) -> CVector {
        CVector::from_iterator(self.num_mics(), (0..self.num_mics()).map(|m| self.atf(m, j, k)))
    }
}

/// Impulse responses from every source to every array element.
pub fn build_channel(
    room: &RoomSpec,
    arrays: &[ArraySpec],
    sources: &[Position],
    fs: u32,
    fft_size: usize,
) -> Result<AcousticChannel> {
    room.validate()?;
    if sources.is_empty() {
        return Err(Error::Geometry("no sources".into()));
    }
    if arrays.is_empty() {
        return Err(Error::Geometry("no arrays".into()));
    }
    let mut mics = Vec::new();
    for (a, spec) in arrays.iter().enumerate() {
        for p in spec.positions()? {
            room.require_inside(&p, &format!("element of array {a}"))?;
            mics.push(p);
        }
    }
    for s in sources {
        room.require_inside(s, "source")?;
    }
    let rir = mics
        .par_iter()
        .map(|mic| sources.iter().map(|s| image_source_rir(room, s, mic, fs as f64)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;

    let bins = fft_size / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let mut atf = Vec::with_capacity(mics.len() * sources.len() * bins);
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    for per_mic in &rir {
        for h in per_mic {
            for (n, slot) in buf.iter_mut().enumerate() {
                *slot = Complex64::new(h.get(n).copied().unwrap_or(0.0), 0.0);
            }
            fft.process(&mut buf);
            atf.extend_from_slice(&buf[..bins]);
        }
    }
    Ok(AcousticChannel { mics, sources: sources.to_vec(), rir, atf, fft_size, sample_rate: fs })
}

/// Time-domain microphone signals and their separable components.
#[derive(Debug, Clone)]
pub struct Mixture {
    /// `y[m]`
    pub y: Vec<Vec<f64>>,
    /// `images[j][m]`: source `j` as received at mic `m`.
    pub images: Vec<Vec<Vec<f64>>>,
    /// `noise[m]`
    pub noise: Vec<Vec<f64>>,
}

/// Convolves each source with its impulse responses and adds white sensor
/// noise of standard deviation `noise_level`. Output length equals the longest
/// source; shorter sources are zero-padded.
pub fn simulate_mixture(
    channel: &AcousticChannel,
    sources: &[AudioBuffer],
    noise_level: f64,
    noise_seed: u64,
) -> Result<Mixture> {
    if sources.len() != channel.num_sources() {
        return Err(Error::Shape(format!(
            "{} source signals for a {}-source channel",
            sources.len(),
            channel.num_sources()
        )));
    }
    for s in sources {
        if s.sample_rate != channel.sample_rate {
            return Err(Error::SampleRate { expected: channel.sample_rate, found: s.sample_rate });
        }
    }
    if !(noise_level >= 0.0) {
        return Err(Error::Config("noise_level must be non-negative".into()));
    }
    let len = sources.iter().map(|s| s.len()).max().unwrap_or(0);
    if len == 0 {
        return Err(Error::Empty("source signals are empty".into()));
    }
    let n_mics = channel.num_mics();

    let images: Vec<Vec<Vec<f64>>> = sources
        .par_iter()
        .enumerate()
        .map(|(j, s)| {
            let spectrum = Convolver::new(s.channel(0), len + channel.rir.iter().map(|r| r[j].len()).max().unwrap_or(1));
            (0..n_mics).map(|m| spectrum.apply(&channel.rir[m][j], len)).collect()
        })
        .collect();

    let noise: Vec<Vec<f64>> = (0..n_mics)
        .map(|m| {
            let mut rng = ChaCha20Rng::seed_from_u64(noise_seed);
            rng.set_stream(m as u64);
            (0..len)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    noise_level * z
                })
                .collect()
        })
        .collect();

    let y = (0..n_mics)
        .map(|m| (0..len).map(|t| images.iter().map(|img| img[m][t]).sum::<f64>() + noise[m][t]).collect())
        .collect();
    Ok(Mixture { y, images, noise })
}

/// One-sided per-bin application `x_m[i,k] = sum_j h_{m,j}[k] s_j[i,k]` of the
/// multiplicative transfer-function model.
pub fn apply_multiplicative(channel: &AcousticChannel, sources: &[SpectrogramTensor]) -> Result<SpectrogramTensor> {
    let first = sources.first().ok_or_else(|| Error::Empty("no source spectra".into()))?;
    if sources.len() != channel.num_sources() {
        return Err(Error::Shape("source count differs from channel".into()));
    }
    if first.bins() != channel.bins() {
        return Err(Error::Shape(format!("{} bins vs channel {}", first.bins(), channel.bins())));
    }
    for s in sources {
        first.check_same_shape(s)?;
        if s.channels() != 1 {
            return Err(Error::Shape("source spectra must be single-channel".into()));
        }
    }
    let mut out = SpectrogramTensor::zeros(channel.num_mics(), first.frames(), *first.config());
    for m in 0..channel.num_mics() {
        for i in 0..first.frames() {
            for k in 0..first.bins() {
                let v = sources.iter().enumerate().map(|(j, s)| channel.atf(m, j, k) * s.get(0, i, k)).sum();
                out.set(m, i, k, v);
            }
        }
    }
    Ok(out)
}

/// Zero-padded FFT of a fixed input, reusable against many filters.
struct Convolver {
    spectrum: Vec<Complex64>,
    size: usize,
}

impl Convolver {
    fn new(x: &[f64], min_size: usize) -> Self {
        let size = min_size.next_power_of_two();
        let mut spectrum: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        spectrum.resize(size, Complex64::new(0.0, 0.0));
        FftPlanner::<f64>::new().plan_fft_forward(size).process(&mut spectrum);
        Self { spectrum, size }
    }

    /// First `out_len` samples of the linear convolution with `h`.
    fn apply(&self, h: &[f64], out_len: usize) -> Vec<f64> {
        let mut planner = FftPlanner::<f64>::new();
        let mut buf: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(self.size, Complex64::new(0.0, 0.0));
        planner.plan_fft_forward(self.size).process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        planner.plan_fft_inverse(self.size).process(&mut buf);
        let scale = 1.0 / self.size as f64;
        buf.iter().take(out_len).map(|z| z.re * scale).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shoebox() -> RoomSpec {
        RoomSpec::new([5.0, 4.0, 4.0], 0.35, 10)
    }

    #[test]
    fn free_field_pulse() {
        let room = RoomSpec::new([5.0, 4.0, 4.0], 0.35, 0);
        let h = image_source_rir(&room, &[1.0, 1.0, 1.0], &[2.0, 1.0, 1.0], 16_000.0).unwrap();
        let (loc, amp) = bandlimited_peak(&h);
        let expected_delay = 16_000.0 / 343.0;
        assert!((loc - expected_delay).abs() < 1.0, "{loc}");
        let a0 = 1.0 / (4.0 * PI);
        assert!((amp - a0).abs() / a0 < 0.02, "{amp} vs {a0}");
    }

    #[test]
    fn first_order_has_seven_paths() {
        let room = RoomSpec::new([5.0, 4.0, 4.0], 0.35, 1);
        let im = image_sources(&room, &[1.0, 1.2, 1.7], &[3.0, 2.0, 2.5]).unwrap();
        assert_eq!(im.len(), 7);
        assert_eq!(im.iter().filter(|i| i.order == 0).count(), 1);
    }

    #[test]
    fn image_count_grows_like_octahedral_numbers() {
        // |ix| + |iy| + |iz| <= N lattice points: (2N+1)(2N^2+2N+3)/3
        for order in 0..5usize {
            let room = RoomSpec::new([5.0, 4.0, 4.0], 0.2, order);
            let count = image_sources(&room, &[1.0, 1.2, 1.7], &[3.0, 2.0, 2.5]).unwrap().len();
            let n = order;
            assert_eq!(count, (2 * n + 1) * (2 * n * n + 2 * n + 3) / 3);
        }
    }

    #[test]
    fn fully_absorbing_walls_equal_free_field() {
        let mut room = RoomSpec::new([5.0, 4.0, 4.0], 1.0, 6);
        let a = image_source_rir(&room, &[1.0, 1.0, 1.0], &[3.0, 2.5, 3.0], 16_000.0).unwrap();
        room.max_order = 0;
        let b = image_source_rir(&room, &[1.0, 1.0, 1.0], &[3.0, 2.5, 3.0], 16_000.0).unwrap();
        assert_eq!(&a[..b.len()], &b[..]);
        assert!(a[b.len()..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn energy_non_increasing_in_absorption() {
        let mut last = f64::INFINITY;
        for alpha in [0.0, 0.1, 0.3, 0.6, 0.9, 1.0] {
            let room = RoomSpec::new([5.0, 4.0, 4.0], alpha, 4);
            let h = image_source_rir(&room, &[1.0, 1.0, 1.0], &[3.0, 2.5, 3.0], 16_000.0).unwrap();
            let e: f64 = h.iter().map(|v| v * v).sum();
            assert!(e <= last + 1e-15);
            last = e;
        }
    }

    #[test]
    fn geometry_errors() {
        let room = shoebox();
        assert!(image_source_rir(&room, &[6.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 16e3).is_err());
        assert!(image_source_rir(&room, &[1.0, 1.0, 1.0], &[1.0, 1.0, 4.0], 16e3).is_err());
        assert!(image_source_rir(&room, &[1.0, 1.0, 1.0], &[1.0, 1.0, 1.0], 16e3).is_err());
        let bad = RoomSpec::new([5.0, -1.0, 4.0], 0.3, 2);
        assert!(bad.validate().is_err());
        let bad = RoomSpec::new([5.0, 1.0, 4.0], 1.3, 2);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn matched_radius_for_ten_elements() {
        let r = matched_radius(10, 1500.0, 343.0).unwrap();
        let d: f64 = 343.0 / 3000.0;
        assert!((d - 0.114333).abs() < 1e-6);
        assert!((r - 0.18499).abs() < 1e-5, "{r}");
        assert!(matched_radius(1, 1500.0, 343.0).is_err());
    }

    #[test]
    fn circular_array_shapes() {
        let two = circular_array([1.0, 1.0, 2.0], 0.3, 2).unwrap();
        assert!((dist(&two[0], &two[1]) - 0.6).abs() < 1e-12);
        let four = circular_array([0.0; 3], 1.0, 4).unwrap();
        let expected = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (p, e) in four.iter().zip(expected) {
            assert!((p[0] - e[0]).abs() < 1e-12 && (p[1] - e[1]).abs() < 1e-12);
        }
        assert!(circular_array([0.0; 3], 1.0, 0).is_err());
    }

    #[test]
    fn five_talker_layout_dimensions() {
        let room = RoomSpec::new([5.0, 4.0, 4.0], 0.35, 1);
        let arrays: Vec<ArraySpec> = [[1.5, 1.4, 4.0], [2.5, 3.0, 4.0], [3.5, 1.0, 4.0]]
            .map(|c| ArraySpec { center: [c[0], c[1], 3.99], radius: 0.18, num_elements: 10 })
            .to_vec();
        let sources = [[1.0, 1.0, 1.8], [2.0, 2.0, 1.8], [3.0, 3.0, 1.8], [3.0, 1.0, 1.8], [1.0, 3.0, 1.8]];
        let ch = build_channel(&room, &arrays, &sources, 16_000, 512).unwrap();
        assert_eq!(ch.num_mics(), 30);
        assert_eq!(ch.num_sources(), 5);
    }

    #[test]
    fn array_on_ceiling_plane_is_rejected() {
        let room = shoebox();
        let arrays = [ArraySpec { center: [1.5, 1.4, 4.0], radius: 0.18, num_elements: 10 }];
        assert!(matches!(build_channel(&room, &arrays, &[[1.0, 1.0, 1.8]], 16_000, 512), Err(Error::Geometry(_))));
        let arrays = [ArraySpec { center: [1.5, 1.4, 3.0], radius: 0.18, num_elements: 10 }];
        assert!(build_channel(&room, &arrays, &[], 16_000, 512).is_err());
    }

    #[test]
    fn free_field_atf_has_constant_magnitude() {
        let room = RoomSpec::new([5.0, 4.0, 4.0], 0.35, 0);
        let arrays = [ArraySpec { center: [2.0, 1.0, 1.0], radius: 0.0, num_elements: 1 }];
        let ch = build_channel(&room, &arrays, &[[1.0, 1.0, 1.0]], 16_000, 512).unwrap();
        let a0 = 1.0 / (4.0 * PI);
        // windowed sinc is flat up to the band edge; check below 0.9 Nyquist
        for k in 0..230 {
            let mag = ch.atf(0, 0, k).norm();
            assert!((mag - a0).abs() / a0 < 0.01, "bin {k}: {mag}");
        }
        // linear phase: unwrapped slope equals -2 pi tau / N
        let tau = 16_000.0 / 343.0;
        for k in 1..100 {
            let ratio = ch.atf(0, 0, k) / ch.atf(0, 0, k - 1);
            let expected = -2.0 * PI * tau / 512.0;
            let diff = (ratio.arg() - expected).rem_euclid(2.0 * PI);
            assert!(diff.min(2.0 * PI - diff) < 1e-2, "bin {k}");
        }
    }

    #[test]
    fn atf_is_dft_of_truncated_rir() {
        let room = RoomSpec::new([5.0, 4.0, 4.0], 0.5, 3);
        let arrays = [ArraySpec { center: [2.0, 2.0, 2.0], radius: 0.1, num_elements: 3 }];
        let ch = build_channel(&room, &arrays, &[[1.0, 1.0, 1.0], [4.0, 3.0, 1.5]], 16_000, 256).unwrap();
        let mut planner = FftPlanner::<f64>::new();
        let ifft = planner.plan_fft_inverse(256);
        for m in 0..3 {
            for j in 0..2 {
                let mut full = vec![Complex64::new(0.0, 0.0); 256];
                for k in 0..129 {
                    full[k] = ch.atf(m, j, k);
                    if k > 0 && k < 128 {
                        full[256 - k] = ch.atf(m, j, k).conj();
                    }
                }
                ifft.process(&mut full);
                let h = ch.rir(m, j);
                for n in 0..256 {
                    let want = h.get(n).copied().unwrap_or(0.0);
                    assert!((full[n].re / 256.0 - want).abs() < 1e-9);
                }
            }
        }
    }

    fn buffers(n: usize, len: usize, seed: u64) -> Vec<AudioBuffer> {
        (0..n)
            .map(|j| crate::audio_io::generate(crate::audio_io::SignalKind::WhiteNoise, len as f64 / 16_000.0, 16_000, seed + j as u64).unwrap())
            .collect()
    }

    fn small_channel(n_src: usize) -> AcousticChannel {
        let room = RoomSpec::new([5.0, 4.0, 4.0], 0.5, 2);
        let arrays = [ArraySpec { center: [2.0, 2.0, 3.0], radius: 0.1, num_elements: 3 }];
        let src = [[1.0, 1.0, 1.5], [4.0, 3.0, 1.5]];
        build_channel(&room, &arrays, &src[..n_src], 16_000, 512).unwrap()
    }

    #[test]
    fn single_source_noiseless_mixture_is_its_image() {
        let ch = small_channel(1);
        let s = buffers(1, 4000, 1);
        let mix = simulate_mixture(&ch, &s, 0.0, 7).unwrap();
        assert_eq!(mix.y, mix.images[0]);
        // FFT convolution matches direct convolution
        let h = ch.rir(1, 0);
        let x = s[0].channel(0);
        for t in [0usize, 100, 1234, 3999] {
            let direct: f64 = (0..=t.min(h.len() - 1)).map(|n| h[n] * x[t - n]).sum();
            assert!((direct - mix.images[0][1][t]).abs() < 1e-12);
        }
    }

    #[test]
    fn silent_sources_leave_only_noise() {
        let ch = small_channel(2);
        let silent = vec![AudioBuffer::mono(vec![0.0; 3000], 16_000); 2];
        let mix = simulate_mixture(&ch, &silent, 0.01, 3).unwrap();
        assert_eq!(mix.y, mix.noise);
        let var: f64 = mix.noise[0].iter().map(|v| v * v).sum::<f64>() / 3000.0;
        assert!((var.sqrt() - 0.01).abs() < 0.001);
    }

    #[test]
    fn two_source_mixture_is_additive() {
        let ch = small_channel(2);
        let s = buffers(2, 3000, 5);
        let mix = simulate_mixture(&ch, &s, 0.0, 0).unwrap();
        for m in 0..3 {
            for t in 0..3000 {
                assert!((mix.y[m][t] - (mix.images[0][m][t] + mix.images[1][m][t])).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn sample_rate_mismatch_is_an_error() {
        let ch = small_channel(1);
        let s = vec![AudioBuffer::mono(vec![0.1; 100], 44_100)];
        assert!(matches!(simulate_mixture(&ch, &s, 0.0, 0), Err(Error::SampleRate { .. })));
    }
}
