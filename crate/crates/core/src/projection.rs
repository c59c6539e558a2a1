//! Random projection banks and their isometry distortion.
//!
//! Each matrix `Psi_p` maps the `N_m` microphone channels to `N_d` projected
//! channels. The distortion `delta` of a matrix is the smallest value with
//! `(1 - delta)|s|^2 <= |Psi s|^2 <= (1 + delta)|s|^2` for every `s`; for a
//! wide matrix the null space forces `delta >= 1`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::linalg::{eigvalsh_desc, norm_sq};
use crate::stft::SpectrogramTensor;
use crate::{CMatrix, CVector, Complex64, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    /// i.i.d. real N(0, 1/N_d) entries.
    GaussianReal,
    /// i.i.d. circular complex entries of total variance 1/N_d.
    GaussianComplex,
    Identity,
}

#[derive(Debug, Clone)]
pub struct ProjectionBank {
    matrices: Vec<CMatrix>,
    deltas: Vec<f64>,
    seed: u64,
    kind: ProjectionKind,
}

impl ProjectionBank {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }
    pub fn matrix(&self, p: usize) -> &CMatrix {
        &self.matrices[p]
    }
    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }
    pub fn delta(&self, p: usize) -> f64 {
        self.deltas[p]
    }
    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }
    pub fn output_dim(&self) -> usize {
        self.matrices[0].nrows()
    }
    pub fn input_dim(&self) -> usize {
        self.matrices[0].ncols()
    }
}

/// Builds `n_p` matrices of shape `(n_d, n_m)`. Matrix `p` is drawn from
/// ChaCha20 stream `p` of `seed`, so banks are reproducible and any prefix of a
/// larger bank equals the smaller bank.
pub fn generate(kind: ProjectionKind, n_p: usize, n_d: usize, n_m: usize, seed: u64) -> Result<ProjectionBank> {
    if n_p == 0 {
        return Err(Error::Config("a projection bank needs at least one matrix".into()));
    }
    if n_d == 0 || n_d > n_m {
        return Err(Error::Config(format!("projection dimension {n_d} must lie in 1..={n_m}")));
    }
    if kind == ProjectionKind::Identity && n_d != n_m {
        return Err(Error::Config(format!("identity projection needs N_d = N_m, got {n_d} != {n_m}")));
    }
    let matrices: Vec<CMatrix> = (0..n_p)
        .map(|p| match kind {
            ProjectionKind::Identity => CMatrix::identity(n_m, n_m),
            ProjectionKind::GaussianReal | ProjectionKind::GaussianComplex => {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(p as u64);
                gaussian(kind, n_d, n_m, &mut rng)
            }
        })
        .collect();
    let deltas = matrices.iter().map(distortion).collect();
    Ok(ProjectionBank { matrices, deltas, seed, kind })
}

fn gaussian(kind: ProjectionKind, rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> CMatrix {
    let mut draw = || -> f64 { StandardNormal.sample(rng) };
    let scale = (1.0 / rows as f64).sqrt();
    let mut m = CMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = if kind == ProjectionKind::GaussianReal {
                Complex64::new(draw() * scale, 0.0)
            } else {
                let s = scale * std::f64::consts::FRAC_1_SQRT_2;
                Complex64::new(draw() * s, draw() * s)
            };
        }
    }
    m
}

/// Squared singular values of `psi` as an operator on its input space,
/// descending; includes the zeros of the null space of a wide matrix.
pub fn squared_singular_values(psi: &CMatrix) -> Vec<f64> {
    let mut vals = eigvalsh_desc(&(psi * psi.adjoint()));
    vals.resize(psi.ncols().max(psi.nrows()), 0.0);
    vals
}

fn spread(top: f64, bottom: f64) -> f64 {
    (top - 1.0).max(1.0 - bottom).max(0.0)
}

/// `max(sigma_max^2 - 1, 1 - sigma_min^2)` over all input vectors, computed
/// from the `N_d x N_d` Gram matrix `Psi Psi^H`.
pub fn distortion(psi: &CMatrix) -> f64 {
    let vals = squared_singular_values(psi);
    spread(vals[0], *vals.last().unwrap())
}

/// Same quantity from the `N_m x N_m` Gram matrix `Psi^H Psi`.
pub fn distortion_from_input_gram(psi: &CMatrix) -> f64 {
    let vals = eigvalsh_desc(&(psi.adjoint() * psi));
    spread(vals[0], vals.last().copied().unwrap_or(0.0).max(0.0))
}

/// Distortion over the row space only: `max(lambda_max - 1, 1 - lambda_min)`
/// of `Psi Psi^H`. This is what controls the spectrum of `Psi Phi Psi^H`.
pub fn row_distortion(psi: &CMatrix) -> f64 {
    let vals = eigvalsh_desc(&(psi * psi.adjoint()));
    spread(vals[0], *vals.last().unwrap())
}

/// Row-space distortion widened by how much `psi` stretches the particular
/// vector `g`. With this value every inequality of the compressed-power bound
/// chain holds for `g` exactly.
pub fn restricted_distortion(psi: &CMatrix, row_delta: f64, g: &CVector) -> f64 {
    let gn = norm_sq(g);
    if gn == 0.0 {
        return row_delta;
    }
    let stretch = norm_sq(&(psi * g)) / gn;
    row_delta.max((stretch - 1.0).abs())
}

/// Applies `psi` to the channel axis of every `(frame, bin)` snapshot.
pub fn project(psi: &CMatrix, spec: &SpectrogramTensor) -> Result<SpectrogramTensor> {
    if psi.ncols() != spec.channels() {
        return Err(Error::Shape(format!(
            "projection has {} inputs, spectrogram has {} channels",
            psi.ncols(),
            spec.channels()
        )));
    }
    let block = spec.frames() * spec.bins();
    let mut data = vec![Complex64::new(0.0, 0.0); psi.nrows() * block];
    for (d, out) in data.chunks_mut(block).enumerate() {
        for m in 0..psi.ncols() {
            let coeff = psi[(d, m)];
            if coeff == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (o, x) in out.iter_mut().zip(spec.channel(m)) {
                *o += coeff * x;
            }
        }
    }
    SpectrogramTensor::from_data(psi.nrows(), spec.frames(), *spec.config(), data)
}
