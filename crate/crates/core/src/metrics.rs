//! SNR, SIR and SINR gains by shadow filtering.
//!
//! The filter chosen per cell on the full mixture is applied unchanged to the
//! isolated target, interferer and noise components, so the component outputs
//! add up to the mixture output and their energies can be compared directly.
//! Energies are summed in the STFT domain over the evaluation frames.

use rayon::prelude::*;

use crate::beamformer::BeamformerSet;
use crate::mixture::MixtureDecision;
use crate::projection::ProjectionBank;
use crate::stft::SpectrogramTensor;
use crate::{CVector, Complex64, Error, Result};

/// How each cell of a component is filtered.
#[derive(Debug, Clone, Copy)]
pub enum Selection<'a> {
    /// One sensorspace filter per bin.
    Fixed(&'a [CVector]),
    /// Compressed beamformers of one source combined by a mixture decision.
    Mixture {
        bank: &'a ProjectionBank,
        set: &'a BeamformerSet,
        source: usize,
        decision: &'a MixtureDecision,
    },
}

/// Filters each component with the same per-cell selection. Each output is
/// laid out `(frame, bin)`.
///
/// For a mixture, candidate `p` contributes `alpha_p w_p^H (Psi_p c)`, evaluated
/// as `(Psi_p^H w_p)^H c` with the sensor-domain filter formed once per bin.
pub fn shadow_filter(selection: Selection<'_>, components: &[&SpectrogramTensor]) -> Result<Vec<Vec<Complex64>>> {
    let first = components.first().ok_or_else(|| Error::Empty("no components".into()))?;
    for c in components {
        first.check_same_shape(c)?;
    }
    let (frames, bins) = (first.frames(), first.bins());
    let (bank, set, source, decision) = match selection {
        Selection::Fixed(weights) => {
            return components.iter().map(|c| crate::beamformer::apply_weights(weights, c)).collect();
        }
        Selection::Mixture { bank, set, source, decision } => (bank, set, source, decision),
    };
    if decision.frames != frames || decision.bins != bins {
        return Err(Error::Shape(format!(
            "decision is ({}, {}), components ({frames}, {bins})",
            decision.frames, decision.bins
        )));
    }
    if bank.input_dim() != first.channels() || decision.n_p != bank.len() || set.num_projections() != bank.len() {
        return Err(Error::Shape("bank, beamformers and decision disagree".into()));
    }
    let per_bin = (0..bins)
        .into_par_iter()
        .map(|k| {
            let mut filters: Vec<Option<CVector>> = vec![None; bank.len()];
            let mut out = vec![vec![Complex64::new(0.0, 0.0); frames]; components.len()];
            for i in 0..frames {
                for p in 0..bank.len() {
                    let a = decision.weight(p, i, k);
                    if a == 0.0 {
                        continue;
                    }
                    if filters[p].is_none() {
                        let u = set.sensor_filter(bank, p, source, k).ok_or_else(|| {
                            Error::Degenerate(format!("selected projection {p} has no weights at bin {k}"))
                        })?;
                        filters[p] = Some(u);
                    }
                    let u = filters[p].as_ref().unwrap();
                    for (c, o) in components.iter().zip(out.iter_mut()) {
                        let z: Complex64 = u.iter().enumerate().map(|(m, um)| um.conj() * c.get(m, i, k)).sum();
                        o[i] += z * a;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut outputs = vec![vec![Complex64::new(0.0, 0.0); frames * bins]; components.len()];
    for (k, per_comp) in per_bin.into_iter().enumerate() {
        for (o, col) in outputs.iter_mut().zip(per_comp) {
            for (i, z) in col.into_iter().enumerate() {
                o[i * bins + k] = z;
            }
        }
    }
    Ok(outputs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentEnergies {
    pub target: f64,
    pub interference: f64,
    pub noise: f64,
}

impl ComponentEnergies {
    /// Energies of one microphone channel of each component.
    pub fn at_channel(
        target: &SpectrogramTensor,
        interference: &SpectrogramTensor,
        noise: &SpectrogramTensor,
        channel: usize,
    ) -> Result<Self> {
        if channel >= target.channels() {
            return Err(Error::Shape(format!("reference channel {channel} >= {}", target.channels())));
        }
        let e = |s: &SpectrogramTensor| s.channel(channel).iter().map(|z| z.norm_sqr()).sum();
        Ok(Self { target: e(target), interference: e(interference), noise: e(noise) })
    }

    /// Energies of filtered `[target, interference, noise]` outputs.
    pub fn from_outputs(outputs: &[Vec<Complex64>]) -> Result<Self> {
        let [t, i, n] = outputs else {
            return Err(Error::Shape(format!("expected 3 component outputs, got {}", outputs.len())));
        };
        let e = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum();
        Ok(Self { target: e(t), interference: e(i), noise: e(n) })
    }

    fn ratios_db(&self) -> ([f64; 3], Vec<&'static str>) {
        let mut flags = Vec::new();
        let mut db = |num: f64, den: f64, what: &'static str| {
            if den == 0.0 {
                flags.push(what);
                f64::INFINITY
            } else {
                10.0 * (num / den).log10()
            }
        };
        let snr = db(self.target, self.noise, "zero noise energy");
        let sir = db(self.target, self.interference, "zero interference energy");
        let sinr = db(self.target, self.interference + self.noise, "zero interference-plus-noise energy");
        ([snr, sir, sinr], flags)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainReport {
    pub input_snr_db: f64,
    pub input_sir_db: f64,
    pub input_sinr_db: f64,
    pub output_snr_db: f64,
    pub output_sir_db: f64,
    pub output_sinr_db: f64,
    pub snr_gain_db: f64,
    pub sir_gain_db: f64,
    pub sinr_gain_db: f64,
    /// Degenerate ratios that were replaced by the `+inf` sentinel.
    pub flags: Vec<&'static str>,
}

/// `gain = 10 log10(out_ratio) - 10 log10(in_ratio)` for SNR, SIR and SINR.
pub fn gains(input: &ComponentEnergies, output: &ComponentEnergies) -> Result<GainReport> {
    if !(input.target > 0.0) {
        return Err(Error::Degenerate("target has no energy at the reference microphone".into()));
    }
    let (inp, mut flags) = input.ratios_db();
    let (out, out_flags) = output.ratios_db();
    flags.extend(out_flags);
    let gain = |o: f64, i: f64| if o.is_infinite() && o > 0.0 || i.is_infinite() { f64::INFINITY } else { o - i };
    Ok(GainReport {
        input_snr_db: inp[0],
        input_sir_db: inp[1],
        input_sinr_db: inp[2],
        output_snr_db: out[0],
        output_sir_db: out[1],
        output_sinr_db: out[2],
        snr_gain_db: gain(out[0], inp[0]),
        sir_gain_db: gain(out[1], inp[1]),
        sinr_gain_db: gain(out[2], inp[2]),
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{select_min_power, OutputStack};
    use crate::projection::{generate, ProjectionKind};
    use crate::stft::{StftConfig, WindowKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cfg() -> StftConfig {
        StftConfig { frame_length: 8, hop: 4, window: WindowKind::SqrtHann, fft_size: 8, sample_rate: 8000 }
    }

    fn random_tensor(ch: usize, frames: usize, scale: f64, seed: u64) -> SpectrogramTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..ch * frames * cfg().bins())
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(a * scale, b * scale)
            })
            .collect();
        SpectrogramTensor::from_data(ch, frames, cfg(), data).unwrap()
    }

    fn random_set(bank: &ProjectionBank, bins: usize, seed: u64) -> BeamformerSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_d = bank.output_dim();
        let weights = (0..bank.len())
            .map(|_| {
                vec![(0..bins)
                    .map(|_| {
                        Some(CVector::from_fn(n_d, |_, _| {
                            let a: f64 = StandardNormal.sample(&mut rng);
                            Complex64::new(a, 0.3 * a)
                        }))
                    })
                    .collect()]
            })
            .collect();
        BeamformerSet { weights, powers: vec![vec![vec![1.0; bins]]; bank.len()] }
    }

    fn mixture_outputs(bank: &ProjectionBank, set: &BeamformerSet, y: &SpectrogramTensor) -> OutputStack {
        let outs = (0..bank.len())
            .map(|p| {
                let proj = crate::projection::project(bank.matrix(p), y).unwrap();
                let w: Vec<CVector> = set.weights[p][0].iter().map(|w| w.clone().unwrap()).collect();
                crate::beamformer::apply_weights(&w, &proj).unwrap()
            })
            .collect();
        OutputStack::from_outputs(outs, y.frames(), y.bins()).unwrap()
    }

    #[test]
    fn component_outputs_sum_to_mixture_output() {
        let (t, i, n) = (random_tensor(5, 12, 1.0, 1), random_tensor(5, 12, 0.7, 2), random_tensor(5, 12, 0.2, 3));
        let y = t.add(&i).unwrap().add(&n).unwrap();
        let bank = generate(ProjectionKind::GaussianComplex, 4, 2, 5, 9).unwrap();
        let set = random_set(&bank, y.bins(), 4);
        let decision = select_min_power(&mixture_outputs(&bank, &set, &y)).unwrap();
        let sel = Selection::Mixture { bank: &bank, set: &set, source: 0, decision: &decision };
        let outs = shadow_filter(sel, &[&t, &i, &n]).unwrap();
        for cell in 0..decision.z_mix.len() {
            let sum = outs[0][cell] + outs[1][cell] + outs[2][cell];
            assert!((sum - decision.z_mix[cell]).norm() <= 1e-10 * (1.0 + decision.z_mix[cell].norm()));
        }
    }

    #[test]
    fn identity_single_projection_equals_fixed_filter() {
        let t = random_tensor(3, 6, 1.0, 5);
        let bank = generate(ProjectionKind::Identity, 1, 3, 3, 0).unwrap();
        let set = random_set(&bank, t.bins(), 6);
        let decision = select_min_power(&mixture_outputs(&bank, &set, &t)).unwrap();
        let fixed: Vec<CVector> = set.weights[0][0].iter().map(|w| w.clone().unwrap()).collect();
        let a = shadow_filter(Selection::Mixture { bank: &bank, set: &set, source: 0, decision: &decision }, &[&t]).unwrap();
        let b = shadow_filter(Selection::Fixed(&fixed), &[&t]).unwrap();
        for (x, y) in a[0].iter().zip(&b[0]) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn passthrough_is_zero_gain() {
        let (t, i, n) = (random_tensor(2, 10, 1.0, 7), random_tensor(2, 10, 0.5, 8), random_tensor(2, 10, 0.1, 9));
        let e_ref = vec![CVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]); t.bins()];
        let outs = shadow_filter(Selection::Fixed(&e_ref), &[&t, &i, &n]).unwrap();
        let input = ComponentEnergies::at_channel(&t, &i, &n, 0).unwrap();
        let report = gains(&input, &ComponentEnergies::from_outputs(&outs).unwrap()).unwrap();
        assert_eq!(report.snr_gain_db, 0.0);
        assert_eq!(report.sir_gain_db, 0.0);
        assert_eq!(report.sinr_gain_db, 0.0);
        assert!(report.flags.is_empty());
    }

    #[test]
    fn target_only_output_energy_is_total() {
        let t = random_tensor(2, 10, 1.0, 10);
        let zero = SpectrogramTensor::zeros(2, 10, cfg());
        let w = vec![CVector::from_vec(vec![Complex64::new(0.5, 0.1), Complex64::new(0.5, -0.2)]); t.bins()];
        let outs = shadow_filter(Selection::Fixed(&w), &[&t, &zero, &zero]).unwrap();
        let total = crate::beamformer::apply_weights(&w, &t).unwrap();
        let e = ComponentEnergies::from_outputs(&outs).unwrap();
        let e_total: f64 = total.iter().map(|z| z.norm_sqr()).sum();
        assert!((e.target - e_total).abs() < 1e-12 * e_total);
        let report = gains(&ComponentEnergies::at_channel(&t, &zero, &zero, 0).unwrap(), &e).unwrap();
        assert_eq!(report.snr_gain_db, f64::INFINITY);
        assert!(!report.flags.is_empty());
    }

    #[test]
    fn gains_are_scale_invariant() {
        let input = ComponentEnergies { target: 2.0, interference: 0.7, noise: 0.05 };
        let output = ComponentEnergies { target: 1.9, interference: 0.1, noise: 0.02 };
        let a = gains(&input, &output).unwrap();
        let s = 37.5f64;
        let scale = |e: &ComponentEnergies| ComponentEnergies { target: e.target * s, interference: e.interference * s, noise: e.noise * s };
        let b = gains(&scale(&input), &scale(&output)).unwrap();
        assert!((a.sinr_gain_db - b.sinr_gain_db).abs() < 1e-9);
        assert!((a.snr_gain_db - b.snr_gain_db).abs() < 1e-9);
        assert!((a.sir_gain_db - b.sir_gain_db).abs() < 1e-9);
        assert!(gains(&ComponentEnergies { target: 0.0, ..input }, &output).is_err());
    }
}
