//! Narrowband spatial correlation matrices.

use std::ops::Range;

use rayon::prelude::*;

use crate::linalg::{check_hermitian, eigvalsh_desc, hermitize};
use crate::stft::SpectrogramTensor;
use crate::{CMatrix, Complex64, Error, Result};

/// Hermitian tolerance for [`extreme_eigs`].
const HERMITIAN_TOL: f64 = 1e-8;

/// One Hermitian matrix per frequency bin.
#[derive(Debug, Clone, PartialEq)]
pub struct NarrowbandCovariance {
    matrices: Vec<CMatrix>,
    frame_count: usize,
    loading: f64,
}

impl NarrowbandCovariance {
    pub fn from_matrices(matrices: Vec<CMatrix>, frame_count: usize, loading: f64) -> Result<Self> {
        let n = matrices.first().map_or(0, |m| m.nrows());
        for m in &matrices {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Shape("per-bin matrices differ in size".into()));
            }
            check_hermitian(m, 1e-12)?;
        }
        Ok(Self { matrices, frame_count, loading })
    }

    pub fn bins(&self) -> usize {
        self.matrices.len()
    }
    pub fn dim(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }
    pub fn matrix(&self, k: usize) -> &CMatrix {
        &self.matrices[k]
    }
    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }
    pub fn frame_count(&self) -> usize {
        self.frame_count
    }
    pub fn loading(&self) -> f64 {
        self.loading
    }
}

/// `Phi[k] = (1/T) sum_i y[i,k] y[i,k]^H + eps * (trace / n) * I` over
/// `frames`. No mean is subtracted.
pub fn estimate(spec: &SpectrogramTensor, frames: Range<usize>, loading_factor: f64) -> Result<NarrowbandCovariance> {
    if frames.is_empty() {
        return Err(Error::Empty("covariance frame range is empty".into()));
    }
    if frames.end > spec.frames() {
        return Err(Error::Shape(format!("frame range {frames:?} outside 0..{}", spec.frames())));
    }
    if !(loading_factor >= 0.0) {
        return Err(Error::Config("loading factor must be non-negative".into()));
    }
    let n = spec.channels();
    let t = frames.len();
    let matrices = (0..spec.bins())
        .into_par_iter()
        .map(|k| {
            let snapshots = CMatrix::from_fn(n, t, |c, i| spec.get(c, frames.start + i, k));
            let mut phi = hermitize(&(&snapshots * snapshots.adjoint())) / Complex64::new(t as f64, 0.0);
            if loading_factor > 0.0 {
                let trace = phi.trace().re;
                if !(trace > 0.0) {
                    return Err(Error::Degenerate(format!("bin {k} has zero power; diagonal loading is undefined")));
                }
                let level = loading_factor * trace / n as f64;
                for d in 0..n {
                    phi[(d, d)] += Complex64::new(level, 0.0);
                }
            }
            Ok(phi)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NarrowbandCovariance { matrices, frame_count: t, loading: loading_factor })
}

/// `Psi Phi Psi^H` for a single matrix, re-Hermitized.
pub fn project_matrix(psi: &CMatrix, phi: &CMatrix) -> Result<CMatrix> {
    if psi.ncols() != phi.nrows() || phi.nrows() != phi.ncols() {
        return Err(Error::Shape(format!(
            "projection {}x{} against covariance {}x{}",
            psi.nrows(),
            psi.ncols(),
            phi.nrows(),
            phi.ncols()
        )));
    }
    Ok(hermitize(&(psi * phi * psi.adjoint())))
}

/// Per-bin `Psi Phi Psi^H`.
pub fn project_cov(psi: &CMatrix, cov: &NarrowbandCovariance) -> Result<NarrowbandCovariance> {
    let matrices = cov.matrices.iter().map(|phi| project_matrix(psi, phi)).collect::<Result<_>>()?;
    Ok(NarrowbandCovariance { matrices, frame_count: cov.frame_count, loading: cov.loading })
}

/// `(lambda_min, lambda_max)` by full Hermitian eigendecomposition.
pub fn extreme_eigs(phi: &CMatrix) -> Result<(f64, f64)> {
    check_hermitian(phi, HERMITIAN_TOL)?;
    if phi.nrows() == 0 {
        return Err(Error::Empty("empty matrix".into()));
    }
    let vals = eigvalsh_desc(phi);
    Ok((*vals.last().unwrap(), vals[0]))
}
