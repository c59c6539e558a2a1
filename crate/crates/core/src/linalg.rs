//! Small dense Hermitian helpers on top of nalgebra.

use nalgebra::{Cholesky, Dyn, SymmetricEigen};

use crate::{CMatrix, CVector, Complex64, Error, Result};

/// Largest entry of `|A - A^H|`.
pub fn asymmetry(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in r..n {
            worst = worst.max((a[(r, c)] - a[(c, r)].conj()).norm());
        }
    }
    worst
}

/// `(A + A^H) / 2`.
pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

/// Errors unless `a` is square and Hermitian to `tol` relative to its largest entry.
pub fn check_hermitian(a: &CMatrix, tol: f64) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", a.nrows(), a.ncols())));
    }
    let scale = a.iter().fold(1.0f64, |m, z| m.max(z.norm()));
    let asym = asymmetry(a);
    if asym > tol * scale {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    Ok(())
}

/// Eigenvalues of a Hermitian matrix, sorted descending.
pub fn eigvalsh_desc(a: &CMatrix) -> Vec<f64> {
    let mut vals: Vec<f64> = SymmetricEigen::new(hermitize(a)).eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| y.total_cmp(x));
    vals
}

/// Eigenpairs of a Hermitian matrix, sorted by eigenvalue descending.
pub fn eigh_desc(a: &CMatrix) -> (Vec<f64>, Vec<CVector>) {
    let eig = SymmetricEigen::new(hermitize(a));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    (vals, vecs)
}

/// Hermitian positive-definite factorization; `Error::Singular` otherwise.
pub fn cholesky(a: &CMatrix) -> Result<Cholesky<Complex64, Dyn>> {
    let chol = Cholesky::new(a.clone()).ok_or(Error::Singular)?;
    // complex square roots let negative pivots through; a valid factor has a
    // real positive diagonal
    let l = chol.l_dirty();
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if !(d.re > 0.0) || !d.re.is_finite() || d.im.abs() > 1e-12 * d.re {
            return Err(Error::Singular);
        }
    }
    Ok(chol)
}

/// `x^H y`.
pub fn dotc(x: &CVector, y: &CVector) -> Complex64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
}

pub fn norm_sq(x: &CVector) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// Real matrix lifted to complex.
pub fn from_real(rows: usize, cols: usize, data: &[f64]) -> CMatrix {
    CMatrix::from_row_iterator(rows, cols, data.iter().map(|&x| Complex64::new(x, 0.0)))
}
