//! Sensorspace and compressed MVDR beamformers.
//!
//! The MVDR filter for covariance `Phi` and steering `g` is
//! `w = Phi^-1 g / (g^H Phi^-1 g)`, computed with a Cholesky solve. A
//! compressed beamformer runs the same formula on `Psi Phi Psi^H` and `Psi g`;
//! its equivalent sensor-domain filter is `Psi^H w`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{project_matrix, NarrowbandCovariance};
use crate::linalg::{cholesky, dotc, eigh_desc, norm_sq};
use crate::projection::ProjectionBank;
use crate::room::AcousticChannel;
use crate::stft::SpectrogramTensor;
use crate::{CMatrix, CVector, Complex64, Error, Result};

/// Below this fraction of `|Psi| |g|` the projected steering vector counts as annihilated.
const ANNIHILATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteeringMode {
    OracleAtf,
    EstimatedRtf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SteeringFlag {
    /// Zero clean power at this bin; steering fell back to `e_ref`.
    Silent,
    /// No dominant eigenvalue; the chosen eigenvector is arbitrary.
    LowConfidence,
}

/// Relative transfer functions `g[j][k]`, each with unit reference entry.
#[derive(Debug, Clone)]
pub struct SteeringSet {
    vectors: Vec<Vec<CVector>>,
    pub mode: SteeringMode,
    pub reference_mic: usize,
    /// `(source, bin, flag)` for every fallback or low-confidence estimate.
    pub flags: Vec<(usize, usize, SteeringFlag)>,
}

impl SteeringSet {
    pub fn new(vectors: Vec<Vec<CVector>>, mode: SteeringMode, reference_mic: usize) -> Result<Self> {
        for g in vectors.iter().flatten() {
            if g.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Degenerate("non-finite steering vector".into()));
            }
            if reference_mic >= g.len() {
                return Err(Error::Shape(format!("reference mic {reference_mic} out of range")));
            }
        }
        Ok(Self { vectors, mode, reference_mic, flags: Vec::new() })
    }

    pub fn num_sources(&self) -> usize {
        self.vectors.len()
    }
    pub fn bins(&self) -> usize {
        self.vectors.first().map_or(0, |v| v.len())
    }
    pub fn get(&self, j: usize, k: usize) -> &CVector {
        &self.vectors[j][k]
    }
    pub fn source(&self, j: usize) -> &[CVector] {
        &self.vectors[j]
    }
}

/// Principal eigenvector of `phi` scaled to a unit entry at `reference`.
pub fn principal_rtf(phi: &CMatrix, reference: usize) -> (CVector, Option<SteeringFlag>) {
    let n = phi.nrows();
    let e_ref = CVector::from_fn(n, |r, _| if r == reference { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
    let (vals, vecs) = eigh_desc(phi);
    if !(vals[0] > 0.0) {
        return (e_ref, Some(SteeringFlag::Silent));
    }
    let v = &vecs[0];
    let anchor = v[reference];
    if anchor.norm() <= 1e-12 * v.norm() {
        return (e_ref, Some(SteeringFlag::LowConfidence));
    }
    let mut g = v / anchor;
    g[reference] = Complex64::new(1.0, 0.0);
    let flag = (n > 1 && vals[1] >= (1.0 - 1e-6) * vals[0]).then_some(SteeringFlag::LowConfidence);
    (g, flag)
}

/// Steering from per-source clean-image covariances.
pub fn estimate_steering(cov_clean: &[NarrowbandCovariance], reference_mic: usize) -> Result<SteeringSet> {
    if cov_clean.is_empty() {
        return Err(Error::Empty("no source covariances".into()));
    }
    let mut flags = Vec::new();
    let mut vectors = Vec::with_capacity(cov_clean.len());
    for (j, cov) in cov_clean.iter().enumerate() {
        if reference_mic >= cov.dim() {
            return Err(Error::Shape(format!("reference mic {reference_mic} >= {}", cov.dim())));
        }
        let per_bin: Vec<(CVector, Option<SteeringFlag>)> =
            cov.matrices().par_iter().map(|phi| principal_rtf(phi, reference_mic)).collect();
        let mut gs = Vec::with_capacity(per_bin.len());
        for (k, (g, flag)) in per_bin.into_iter().enumerate() {
            if let Some(f) = flag {
                flags.push((j, k, f));
            }
            gs.push(g);
        }
        vectors.push(gs);
    }
    let mut set = SteeringSet::new(vectors, SteeringMode::EstimatedRtf, reference_mic)?;
    set.flags = flags;
    Ok(set)
}

/// True transfer functions normalized by the reference microphone.
pub fn oracle_steering(channel: &AcousticChannel, reference_mic: usize) -> Result<SteeringSet> {
    if reference_mic >= channel.num_mics() {
        return Err(Error::Shape(format!("reference mic {reference_mic} >= {}", channel.num_mics())));
    }
    let mut flags = Vec::new();
    let vectors = (0..channel.num_sources())
        .map(|j| {
            (0..channel.bins())
                .map(|k| {
                    let h = channel.transfer_vector(j, k);
                    let anchor = h[reference_mic];
                    if anchor.norm() == 0.0 {
                        flags.push((j, k, SteeringFlag::Silent));
                        CVector::from_fn(h.len(), |r, _| Complex64::new((r == reference_mic) as u8 as f64, 0.0))
                    } else {
                        let mut g = h / anchor;
                        g[reference_mic] = Complex64::new(1.0, 0.0);
                        g
                    }
                })
                .collect()
        })
        .collect();
    let mut set = SteeringSet::new(vectors, SteeringMode::OracleAtf, reference_mic)?;
    set.flags = flags;
    Ok(set)
}

/// MVDR weights together with the optimal output power `1 / (g^H Phi^-1 g)`.
pub fn mvdr_solve(phi: &CMatrix, g: &CVector) -> Result<(CVector, f64)> {
    if phi.nrows() != g.len() {
        return Err(Error::Shape(format!("covariance {}x{} vs steering {}", phi.nrows(), phi.ncols(), g.len())));
    }
    if norm_sq(g) == 0.0 {
        return Err(Error::Degenerate("zero steering vector".into()));
    }
    let chol = cholesky(phi)?;
    let u = chol.solve(g);
    let denom = dotc(g, &u).re;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::Breakdown(denom));
    }
    Ok((u / Complex64::new(denom, 0.0), 1.0 / denom))
}

pub fn mvdr_weights(phi: &CMatrix, g: &CVector) -> Result<CVector> {
    mvdr_solve(phi, g).map(|(w, _)| w)
}

/// `1 / (g^H Phi^-1 g)`.
pub fn output_power(phi: &CMatrix, g: &CVector) -> Result<f64> {
    mvdr_solve(phi, g).map(|(_, p)| p)
}

/// Projected steering `Psi g`, or `Error::Annihilated` when it vanishes.
pub fn project_steering(psi: &CMatrix, g: &CVector) -> Result<CVector> {
    let pg = psi * g;
    let size = pg.norm();
    if size <= ANNIHILATION_TOL * psi.norm() * g.norm() {
        return Err(Error::Annihilated(size));
    }
    Ok(pg)
}

/// Compressed MVDR: weights in the `N_d`-dimensional projected space and the
/// output power.
pub fn compressed_mvdr_solve(psi: &CMatrix, phi_y: &CMatrix, g: &CVector) -> Result<(CVector, f64)> {
    let projected = project_matrix(psi, phi_y)?;
    mvdr_solve(&projected, &project_steering(psi, g)?)
}

pub fn compressed_mvdr_weights(psi: &CMatrix, phi_y: &CMatrix, g: &CVector) -> Result<CVector> {
    compressed_mvdr_solve(psi, phi_y, g).map(|(w, _)| w)
}

/// `z[i,k] = w[k]^H y[i,k]` laid out `(frame, bin)`.
pub fn apply_weights(weights: &[CVector], spec: &SpectrogramTensor) -> Result<Vec<Complex64>> {
    if weights.len() != spec.bins() {
        return Err(Error::Shape(format!("{} weight vectors for {} bins", weights.len(), spec.bins())));
    }
    if let Some(w) = weights.iter().find(|w| w.len() != spec.channels()) {
        return Err(Error::Shape(format!("weight length {} vs {} channels", w.len(), spec.channels())));
    }
    let bins = spec.bins();
    let mut z = vec![Complex64::new(0.0, 0.0); spec.frames() * bins];
    for c in 0..spec.channels() {
        let block = spec.channel(c);
        for (cell, (out, y)) in z.iter_mut().zip(block).enumerate() {
            *out += weights[cell % bins][c].conj() * y;
        }
    }
    Ok(z)
}

/// Weights for every `(projection, source, bin)`. `None` marks a skipped
/// `(p, k)` where the projection annihilated the steering vector.
#[derive(Debug, Clone)]
pub struct BeamformerSet {
    /// `weights[p][j][k]`
    pub weights: Vec<Vec<Vec<Option<CVector>>>>,
    /// `powers[p][j][k]`: closed-form output power, NaN when skipped.
    pub powers: Vec<Vec<Vec<f64>>>,
}

impl BeamformerSet {
    pub fn num_projections(&self) -> usize {
        self.weights.len()
    }

    /// Equivalent sensor-domain filter `Psi_p^H w`.
    pub fn sensor_filter(&self, bank: &ProjectionBank, p: usize, j: usize, k: usize) -> Option<CVector> {
        self.weights[p][j][k].as_ref().map(|w| bank.matrix(p).adjoint() * w)
    }

    /// Skipped `(p, j, k)` entries.
    pub fn skipped(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (p, per_p) in self.weights.iter().enumerate() {
            for (j, per_j) in per_p.iter().enumerate() {
                for (k, w) in per_j.iter().enumerate() {
                    if w.is_none() {
                        out.push((p, j, k));
                    }
                }
            }
        }
        out
    }
}

/// Compressed beamformers for every projection in `bank`, all sources and bins,
/// from one sensorspace covariance and steering estimate.
pub fn build_compressed(bank: &ProjectionBank, phi_y: &NarrowbandCovariance, steering: &SteeringSet) -> Result<BeamformerSet> {
    if steering.bins() != phi_y.bins() {
        return Err(Error::Shape(format!("steering has {} bins, covariance {}", steering.bins(), phi_y.bins())));
    }
    if bank.input_dim() != phi_y.dim() {
        return Err(Error::Shape(format!("bank input {} vs covariance {}", bank.input_dim(), phi_y.dim())));
    }
    let per_p = bank
        .matrices()
        .par_iter()
        .map(|psi| {
            let mut weights = vec![Vec::with_capacity(phi_y.bins()); steering.num_sources()];
            let mut powers = vec![Vec::with_capacity(phi_y.bins()); steering.num_sources()];
            for k in 0..phi_y.bins() {
                let projected = project_matrix(psi, phi_y.matrix(k))?;
                let chol = cholesky(&projected)?;
                for j in 0..steering.num_sources() {
                    let solved = project_steering(psi, steering.get(j, k)).and_then(|pg| {
                        let u = chol.solve(&pg);
                        let denom = dotc(&pg, &u).re;
                        if denom > 0.0 && denom.is_finite() {
                            Ok((u / Complex64::new(denom, 0.0), 1.0 / denom))
                        } else {
                            Err(Error::Breakdown(denom))
                        }
                    });
                    match solved {
                        Ok((w, p)) => {
                            weights[j].push(Some(w));
                            powers[j].push(p);
                        }
                        Err(Error::Annihilated(_)) => {
                            weights[j].push(None);
                            powers[j].push(f64::NAN);
                        }
                        Err(e) => return Err(e),
                    }
                }
            }
            Ok((weights, powers))
        })
        .collect::<Result<Vec<_>>>()?;
    let (weights, powers) = per_p.into_iter().unzip();
    Ok(BeamformerSet { weights, powers })
}

/// Per-source, per-bin weights and their output powers.
pub type SensorspaceBeamformers = (Vec<Vec<CVector>>, Vec<Vec<f64>>);

/// Sensorspace MVDR weights and powers `[j][k]`.
pub fn build_sensorspace(phi_y: &NarrowbandCovariance, steering: &SteeringSet) -> Result<SensorspaceBeamformers> {
    let mut weights = Vec::with_capacity(steering.num_sources());
    let mut powers = Vec::with_capacity(steering.num_sources());
    for j in 0..steering.num_sources() {
        let solved = (0..phi_y.bins())
            .into_par_iter()
            .map(|k| mvdr_solve(phi_y.matrix(k), steering.get(j, k)))
            .collect::<Result<Vec<_>>>()?;
        let (w, p): (Vec<_>, Vec<_>) = solved.into_iter().unzip();
        weights.push(w);
        powers.push(p);
    }
    Ok((weights, powers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_real;

    fn cv(v: &[f64]) -> CVector {
        CVector::from_iterator(v.len(), v.iter().map(|&x| Complex64::new(x, 0.0)))
    }

    #[test]
    fn identity_covariance_averages() {
        let (w, p) = mvdr_solve(&CMatrix::identity(2, 2), &cv(&[1.0, 1.0])).unwrap();
        assert!((w - cv(&[0.5, 0.5])).norm() < 1e-15);
        assert!((p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn diagonal_two_by_two_by_hand() {
        let w = mvdr_weights(&from_real(2, 2, &[1.0, 0.0, 0.0, 4.0]), &cv(&[1.0, 1.0])).unwrap();
        assert!((w - cv(&[0.8, 0.2])).norm() < 1e-15);
    }

    #[test]
    fn isotropic_power() {
        let g = CVector::from_vec(vec![Complex64::new(1.0, 1.0), Complex64::new(0.0, -2.0), Complex64::new(0.5, 0.0)]);
        let p = output_power(&(CMatrix::identity(3, 3) * Complex64::new(3.0, 0.0)), &g).unwrap();
        assert!((p - 3.0 / norm_sq(&g)).abs() < 1e-14);
    }

    #[test]
    fn singular_and_degenerate_inputs() {
        assert!(matches!(mvdr_weights(&CMatrix::zeros(2, 2), &cv(&[1.0, 0.0])), Err(Error::Singular)));
        assert!(matches!(mvdr_weights(&CMatrix::identity(2, 2), &cv(&[0.0, 0.0])), Err(Error::Degenerate(_))));
        assert!(matches!(mvdr_weights(&CMatrix::identity(3, 3), &cv(&[1.0, 0.0])), Err(Error::Shape(_))));
        let psi = from_real(1, 2, &[1.0, -1.0]);
        assert!(matches!(
            compressed_mvdr_weights(&psi, &CMatrix::identity(2, 2), &cv(&[1.0, 1.0])),
            Err(Error::Annihilated(_))
        ));
    }

    #[test]
    fn scalar_projection_meets_constraint() {
        let psi = from_real(1, 3, &[0.3, -1.2, 2.0]);
        let phi = from_real(3, 3, &[2.0, 0.1, 0.0, 0.1, 1.0, 0.2, 0.0, 0.2, 3.0]);
        let g = cv(&[1.0, 0.4, -0.7]);
        let w = compressed_mvdr_weights(&psi, &phi, &g).unwrap();
        let pg = &psi * &g;
        assert!((w[0].conj() * pg[0] - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn rank_one_covariance_recovers_rtf() {
        let h = CVector::from_vec(vec![Complex64::new(0.5, -0.2), Complex64::new(1.0, 0.3), Complex64::new(-0.1, 0.9)]);
        let phi = &h * h.adjoint();
        let (g, flag) = principal_rtf(&phi, 1);
        assert!(flag.is_none());
        let want = &h / h[1];
        assert!((g - want).norm() < 1e-12);
    }

    #[test]
    fn isotropic_covariance_is_low_confidence() {
        let (g, flag) = principal_rtf(&CMatrix::identity(3, 3), 0);
        assert_eq!(flag, Some(SteeringFlag::LowConfidence));
        assert_eq!(g[0], Complex64::new(1.0, 0.0));
        let (g, flag) = principal_rtf(&CMatrix::zeros(3, 3), 2);
        assert_eq!(flag, Some(SteeringFlag::Silent));
        assert_eq!(g, cv(&[0.0, 0.0, 1.0]));
    }

    #[test]
    fn apply_weights_examples() {
        let cfg = crate::stft::StftConfig { frame_length: 4, hop: 4, window: crate::stft::WindowKind::Rect, fft_size: 4, sample_rate: 4 };
        let spec = crate::stft::analyze(&[vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0], vec![0.5; 8]], &cfg).unwrap();
        let e1 = vec![cv(&[1.0, 0.0]); 3];
        let z = apply_weights(&e1, &spec).unwrap();
        assert_eq!(&z[..], spec.channel(0));
        let zero = SpectrogramTensor::zeros(2, 2, cfg);
        assert!(apply_weights(&e1, &zero).unwrap().iter().all(|v| v.norm() == 0.0));
        assert!(apply_weights(&e1[..2], &spec).is_err());
    }
}
