//! Regret of a compressed MVDR beamformer against the sensorspace MVDR and the
//! closed-form intervals that bound it.
//!
//! With `lambda_min`, `lambda_max` the extreme eigenvalues of `Phi_y`, `delta`
//! the projection distortion and `|g|^2` the steering energy:
//!
//! ```text
//! p_mvdr  in [lambda_min / |g|^2, lambda_max / |g|^2]
//! eig((Psi Phi Psi^H)^-1) in [1 / ((1+delta) lambda_max), 1 / ((1-delta) lambda_min)]
//! p_cmvdr in [(1-delta) lambda_min / ((1+delta) |g|^2), (1+delta) lambda_max / ((1-delta) |g|^2)]
//! R = p_cmvdr - p_mvdr in [p_cmvdr_lo - lambda_max/|g|^2, p_cmvdr_hi - lambda_min/|g|^2]
//! ```
//!
//! Every upper bound needs `delta < 1`. When `delta >= 1` the lower bounds
//! still hold and the upper bounds are reported as `+inf`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::beamformer::{output_power, project_steering};
use crate::covariance::{extreme_eigs, project_matrix};
use crate::linalg::{check_hermitian, eigvalsh_desc, norm_sq};
use crate::projection::{restricted_distortion, row_distortion};
use crate::{CMatrix, CVector, Complex64, Error, Result};

/// Relative slack used for every containment test.
pub const CONTAINMENT_TOL: f64 = 1e-9;
/// Relative slack for the Lidskii-Mirsky-Wielandt product check.
pub const LMW_TOL: f64 = 1e-8;

pub fn regret(p_cmvdr: f64, p_mvdr: f64) -> Result<f64> {
    for p in [p_cmvdr, p_mvdr] {
        if !(p > 0.0) {
            return Err(Error::NonPositivePower(p));
        }
    }
    Ok(p_cmvdr - p_mvdr)
}

fn check_spectrum(lambda_min: f64, lambda_max: f64, g_norm_sq: f64) -> Result<()> {
    if !(lambda_min > 0.0) || !(lambda_max >= lambda_min) || !lambda_max.is_finite() {
        return Err(Error::Spectrum(format!("need 0 < lambda_min <= lambda_max, got ({lambda_min}, {lambda_max})")));
    }
    if !(g_norm_sq > 0.0) {
        return Err(Error::Spectrum(format!("steering energy must be positive, got {g_norm_sq}")));
    }
    Ok(())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta >= 0.0) {
        return Err(Error::Spectrum(format!("distortion must be non-negative, got {delta}")));
    }
    if delta >= 1.0 {
        return Err(Error::VacuousBound { delta });
    }
    Ok(())
}

pub fn mvdr_power_bounds(lambda_min: f64, lambda_max: f64, g_norm_sq: f64) -> Result<(f64, f64)> {
    check_spectrum(lambda_min, lambda_max, g_norm_sq)?;
    Ok((lambda_min / g_norm_sq, lambda_max / g_norm_sq))
}

pub fn projected_inverse_eig_bounds(lambda_min: f64, lambda_max: f64, delta: f64) -> Result<(f64, f64)> {
    check_spectrum(lambda_min, lambda_max, 1.0)?;
    check_delta(delta)?;
    Ok((1.0 / ((1.0 + delta) * lambda_max), 1.0 / ((1.0 - delta) * lambda_min)))
}

pub fn cmvdr_power_bounds(lambda_min: f64, lambda_max: f64, delta: f64, g_norm_sq: f64) -> Result<(f64, f64)> {
    check_spectrum(lambda_min, lambda_max, g_norm_sq)?;
    check_delta(delta)?;
    Ok((
        (1.0 - delta) * lambda_min / ((1.0 + delta) * g_norm_sq),
        (1.0 + delta) * lambda_max / ((1.0 - delta) * g_norm_sq),
    ))
}

pub fn regret_bounds(lambda_min: f64, lambda_max: f64, delta: f64, g_norm_sq: f64) -> Result<(f64, f64)> {
    let (lo, hi) = cmvdr_power_bounds(lambda_min, lambda_max, delta, g_norm_sq)?;
    Ok((lo - lambda_max / g_norm_sq, hi - lambda_min / g_norm_sq))
}

/// Lower regret bound without the `delta < 1` restriction (it stays valid
/// because `p_cmvdr > 0`).
fn regret_lower(lambda_min: f64, lambda_max: f64, delta: f64, g_norm_sq: f64) -> f64 {
    (1.0 - delta) * lambda_min / ((1.0 + delta) * g_norm_sq) - lambda_max / g_norm_sq
}

fn within(lo: f64, x: f64, hi: f64) -> bool {
    let scale = [lo, x, hi].iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = CONTAINMENT_TOL * scale;
    x >= lo - tol && x <= hi + tol
}

/// One `(projection, source, bin)` row of a regret report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretEntry {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Distortion restricted to the row space of `Psi` and to `g`.
    pub delta: f64,
    pub g_norm_sq: f64,
    pub p_mvdr: f64,
    pub p_cmvdr: f64,
    pub regret: f64,
    pub lower: f64,
    /// `+inf` when `delta >= 1`.
    pub upper: f64,
    pub contained: bool,
}

impl RegretEntry {
    /// Assembles a row from already computed powers.
    pub fn from_powers(
        lambda_min: f64,
        lambda_max: f64,
        delta: f64,
        g_norm_sq: f64,
        p_mvdr: f64,
        p_cmvdr: f64,
    ) -> Result<Self> {
        check_spectrum(lambda_min, lambda_max, g_norm_sq)?;
        let r = regret(p_cmvdr, p_mvdr)?;
        let lower = regret_lower(lambda_min, lambda_max, delta, g_norm_sq);
        let upper = match regret_bounds(lambda_min, lambda_max, delta, g_norm_sq) {
            Ok((_, hi)) => hi,
            Err(Error::VacuousBound { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        let tol = CONTAINMENT_TOL * (1.0 + r.abs());
        let contained = lower - tol <= r && r <= upper + tol;
        Ok(Self { lambda_min, lambda_max, delta, g_norm_sq, p_mvdr, p_cmvdr, regret: r, lower, upper, contained })
    }

    pub fn is_vacuous(&self) -> bool {
        self.delta >= 1.0
    }

    /// Computes both beamformer powers from `phi_y` directly.
    pub fn evaluate(phi_y: &CMatrix, psi: &CMatrix, g: &CVector) -> Result<Self> {
        let (lambda_min, lambda_max) = extreme_eigs(phi_y)?;
        let p_mvdr = output_power(phi_y, g)?;
        let p_cmvdr = output_power(&project_matrix(psi, phi_y)?, &project_steering(psi, g)?)?;
        let delta = restricted_distortion(psi, row_distortion(psi), g);
        Self::from_powers(lambda_min, lambda_max, delta, norm_sq(g), p_mvdr, p_cmvdr)
    }
}

/// Summary over many regret rows.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RegretSummary {
    pub count: usize,
    pub contained: usize,
    pub vacuous: usize,
    pub min_regret: f64,
    pub max_regret: f64,
}

impl RegretSummary {
    pub fn add(&mut self, e: &RegretEntry) {
        if self.count == 0 {
            self.min_regret = e.regret;
            self.max_regret = e.regret;
        }
        self.count += 1;
        self.contained += e.contained as usize;
        self.vacuous += e.is_vacuous() as usize;
        self.min_regret = self.min_regret.min(e.regret);
        self.max_regret = self.max_regret.max(e.regret);
    }

    pub fn containment_rate(&self) -> f64 {
        if self.count == 0 {
            1.0
        } else {
            self.contained as f64 / self.count as f64
        }
    }

    pub fn vacuous_rate(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.vacuous as f64 / self.count as f64
        }
    }
}

/// Outcome of the multiplicative Lidskii-Mirsky-Wielandt check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmwOutcome {
    pub holds: bool,
    /// Product of the `k` smallest eigenvalues of `S^H S`.
    pub lower: f64,
    /// `prod_j lambda_{i_j}(S^H A S) / lambda_{i_j}(A)`.
    pub middle: f64,
    /// Product of the `k` largest eigenvalues of `S^H S`.
    pub upper: f64,
}

/// Checks the multiplicative eigenvalue-ratio bounds for `A` and `S^H A S`.
/// `indices` are 0-based positions in the descending eigenvalue order.
pub fn lmw_verify(a: &CMatrix, s: &CMatrix, indices: &[usize]) -> Result<LmwOutcome> {
    check_hermitian(a, 1e-10)?;
    let n = a.nrows();
    if s.nrows() != n || s.ncols() != n {
        return Err(Error::Shape(format!("S must be {n}x{n}, got {}x{}", s.nrows(), s.ncols())));
    }
    if indices.is_empty() || indices.windows(2).any(|w| w[0] >= w[1]) || indices.iter().any(|&i| i >= n) {
        return Err(Error::Config(format!("indices {indices:?} must be strictly increasing within 0..{n}")));
    }
    let lam_a = eigvalsh_desc(a);
    let lam_t = eigvalsh_desc(&(s.adjoint() * a * s));
    let lam_s = eigvalsh_desc(&(s.adjoint() * s));
    let scale = lam_a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(&i) = indices.iter().find(|&&i| lam_a[i].abs() <= 1e-14 * scale) {
        return Err(Error::Spectrum(format!("eigenvalue {i} of A is zero")));
    }
    let k = indices.len();
    let lower: f64 = (0..k).map(|j| lam_s[n - 1 - j]).product();
    let upper: f64 = (0..k).map(|j| lam_s[j]).product();
    let middle: f64 = indices.iter().map(|&i| lam_t[i] / lam_a[i]).product();
    let holds = middle >= lower * (1.0 - LMW_TOL) && middle <= upper * (1.0 + LMW_TOL);
    Ok(LmwOutcome { holds, lower, middle, upper })
}

/// Counts for one family of inequalities in a Monte-Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CheckCount {
    pub checked: usize,
    pub violations: usize,
    /// Skipped because `delta >= 1`.
    pub vacuous: usize,
}

impl CheckCount {
    fn record(&mut self, ok: bool) {
        self.checked += 1;
        self.violations += (!ok) as usize;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundsValidation {
    pub trials: usize,
    pub mvdr_power: CheckCount,
    pub inverse_eigs: CheckCount,
    pub cmvdr_power: CheckCount,
    pub regret: CheckCount,
    pub nonnegative_regret: CheckCount,
}

impl BoundsValidation {
    pub fn total_violations(&self) -> usize {
        [self.mvdr_power, self.inverse_eigs, self.cmvdr_power, self.regret, self.nonnegative_regret]
            .iter()
            .map(|c| c.violations)
            .sum()
    }
}

fn complex_gaussian(rows: usize, cols: usize, sigma: f64, rng: &mut ChaCha20Rng) -> CMatrix {
    let s = sigma * std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    })
}

/// Random Hermitian positive-definite matrix with a spread of conditioning.
pub fn random_covariance(n: usize, rng: &mut ChaCha20Rng) -> CMatrix {
    let rank = rng.random_range(1..=n);
    let b = complex_gaussian(n, rank, 1.0, rng);
    let mut phi = &b * b.adjoint();
    let ridge = 10f64.powf(rng.random_range(-3.0..0.0)) * phi.trace().re / n as f64;
    for d in 0..n {
        phi[(d, d)] += Complex64::new(ridge, 0.0);
    }
    crate::linalg::hermitize(&phi)
}

/// Random Gaussian projection `n_d x n`. Entry variance alternates between
/// `1/n_d` (norm-preserving on average) and `1/n` (near-orthonormal rows).
fn random_projection(n_d: usize, n: usize, rng: &mut ChaCha20Rng) -> CMatrix {
    let var = if rng.random_bool(0.5) { 1.0 / n_d as f64 } else { 1.0 / n as f64 };
    if rng.random_bool(0.5) {
        complex_gaussian(n_d, n, var.sqrt(), rng)
    } else {
        let sd = var.sqrt();
        CMatrix::from_fn(n_d, n, |_, _| {
            let v: f64 = StandardNormal.sample(rng);
            Complex64::new(v * sd, 0.0)
        })
    }
}

/// Monte-Carlo check of every bound on random `(Phi, Psi, g)` with
/// `n in [2, 16]` and `N_d in [1, n]`.
pub fn validate_bounds(trials: usize, seed: u64) -> Result<BoundsValidation> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = BoundsValidation { trials, ..Default::default() };
    for _ in 0..trials {
        let n = rng.random_range(2..=16);
        let n_d = rng.random_range(1..=n);
        let phi = random_covariance(n, &mut rng);
        let psi = random_projection(n_d, n, &mut rng);
        let g = complex_gaussian(n, 1, 1.0, &mut rng).column(0).into_owned();
        let gn = norm_sq(&g);

        let (lmin, lmax) = extreme_eigs(&phi)?;
        let p_mvdr = output_power(&phi, &g)?;
        let (lo, hi) = mvdr_power_bounds(lmin, lmax, gn)?;
        out.mvdr_power.record(within(lo, p_mvdr, hi));

        let projected = project_matrix(&psi, &phi)?;
        let row_delta = row_distortion(&psi);
        match projected_inverse_eig_bounds(lmin, lmax, row_delta) {
            Ok((lo, hi)) => {
                let inv = crate::linalg::cholesky(&projected)?.inverse();
                let eigs = eigvalsh_desc(&crate::linalg::hermitize(&inv));
                for e in eigs {
                    out.inverse_eigs.record(within(lo, e, hi));
                }
            }
            Err(Error::VacuousBound { .. }) => out.inverse_eigs.vacuous += 1,
            Err(e) => return Err(e),
        }

        let p_cmvdr = output_power(&projected, &project_steering(&psi, &g)?)?;
        let delta = restricted_distortion(&psi, row_delta, &g);
        match cmvdr_power_bounds(lmin, lmax, delta, gn) {
            Ok((lo, hi)) => out.cmvdr_power.record(within(lo, p_cmvdr, hi)),
            Err(Error::VacuousBound { .. }) => out.cmvdr_power.vacuous += 1,
            Err(e) => return Err(e),
        }

        let entry = RegretEntry::from_powers(lmin, lmax, delta, gn, p_mvdr, p_cmvdr)?;
        if entry.is_vacuous() {
            out.regret.vacuous += 1;
        } else {
            out.regret.record(entry.contained);
        }
        out.nonnegative_regret.record(p_cmvdr >= p_mvdr * (1.0 - 1e-10));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LmwValidation {
    pub trials: usize,
    pub violations: usize,
    /// Largest relative excursion beyond either product bound.
    pub worst_excess: f64,
}

/// Monte-Carlo check of [`lmw_verify`] on random positive-definite `A`,
/// random square `S` and random index subsets, `n <= max_n`.
pub fn validate_lmw(trials: usize, max_n: usize, seed: u64) -> Result<LmwValidation> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = LmwValidation { trials, ..Default::default() };
    for _ in 0..trials {
        let n = rng.random_range(1..=max_n.max(1));
        let a = random_covariance(n, &mut rng);
        let s = complex_gaussian(n, n, 1.0, &mut rng);
        let mut indices: Vec<usize> = (0..n).filter(|_| rng.random_bool(0.5)).collect();
        if indices.is_empty() {
            indices.push(rng.random_range(0..n));
        }
        let o = lmw_verify(&a, &s, &indices)?;
        let excess = ((o.lower - o.middle) / o.lower).max((o.middle - o.upper) / o.upper).max(0.0);
        out.worst_excess = out.worst_excess.max(excess);
        out.violations += (!o.holds) as usize;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::from_real;

    fn close(a: (f64, f64), b: (f64, f64)) -> bool {
        (a.0 - b.0).abs() < 1e-14 && (a.1 - b.1).abs() < 1e-14
    }

    #[test]
    fn regret_arithmetic() {
        assert!((regret(0.7, 0.5).unwrap() - 0.2).abs() < 1e-15);
        assert!(regret(0.0, 0.5).is_err());
        assert!(regret(0.5, -1.0).is_err());
    }

    #[test]
    fn closed_form_examples() {
        assert!(close(mvdr_power_bounds(1.0, 1.0, 2.0).unwrap(), (0.5, 0.5)));
        assert!(close(mvdr_power_bounds(1.0, 4.0, 1.0).unwrap(), (1.0, 4.0)));
        assert!(close(projected_inverse_eig_bounds(1.0, 1.0, 0.0).unwrap(), (1.0, 1.0)));
        assert!(close(projected_inverse_eig_bounds(1.0, 2.0, 0.5).unwrap(), (1.0 / 3.0, 2.0)));
        assert!(close(cmvdr_power_bounds(1.0, 1.0, 1.0 / 3.0, 1.0).unwrap(), (0.5, 2.0)));
        assert!(close(cmvdr_power_bounds(0.3, 2.0, 0.0, 1.7).unwrap(), mvdr_power_bounds(0.3, 2.0, 1.7).unwrap()));
        assert!(close(regret_bounds(2.0, 2.0, 0.0, 3.0).unwrap(), (0.0, 0.0)));
        assert!(close(regret_bounds(1.0, 2.0, 0.2, 1.0).unwrap(), (-4.0 / 3.0, 2.0)));
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(projected_inverse_eig_bounds(1.0, 2.0, 1.0), Err(Error::VacuousBound { .. })));
        assert!(matches!(cmvdr_power_bounds(1.0, 2.0, 1.5, 1.0), Err(Error::VacuousBound { .. })));
        assert!(matches!(regret_bounds(1.0, 2.0, -0.1, 1.0), Err(Error::Spectrum(_))));
        assert!(mvdr_power_bounds(0.0, 1.0, 1.0).is_err());
        assert!(mvdr_power_bounds(2.0, 1.0, 1.0).is_err());
        assert!(mvdr_power_bounds(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn bounds_loosen_with_distortion() {
        let mut last = regret_bounds(0.5, 3.0, 0.0, 2.0).unwrap();
        for step in 1..100 {
            let b = regret_bounds(0.5, 3.0, step as f64 * 0.0099, 2.0).unwrap();
            assert!(b.0 <= last.0 && b.1 >= last.1);
            last = b;
        }
    }

    #[test]
    fn identity_projection_has_zero_regret() {
        let phi = from_real(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 4.0]);
        let g = CVector::from_vec(vec![Complex64::new(1.0, 0.0), Complex64::new(0.2, 0.5), Complex64::new(-0.3, 0.1)]);
        let e = RegretEntry::evaluate(&phi, &CMatrix::identity(3, 3), &g).unwrap();
        assert_eq!(e.regret, 0.0);
        assert_eq!(e.delta, 0.0);
        assert!(e.contained && e.lower <= 0.0 && e.upper >= 0.0);
    }

    #[test]
    fn vacuous_entries_keep_a_finite_lower_bound() {
        let e = RegretEntry::from_powers(1.0, 2.0, 3.0, 1.0, 1.5, 40.0).unwrap();
        assert!(e.is_vacuous() && e.contained);
        assert_eq!(e.upper, f64::INFINITY);
        assert!((e.lower - (-2.0 / 4.0 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn lmw_identity_and_scaling() {
        let a = from_real(3, 3, &[3.0, 0.5, 0.0, 0.5, 2.0, 0.2, 0.0, 0.2, 1.0]);
        let o = lmw_verify(&a, &CMatrix::identity(3, 3), &[0, 2]).unwrap();
        assert!(o.holds);
        assert!((o.middle - 1.0).abs() < 1e-12 && o.lower == 1.0 && o.upper == 1.0);
        let c = 1.7;
        let s = CMatrix::identity(3, 3) * Complex64::new(c, 0.0);
        let o = lmw_verify(&a, &s, &[0, 1]).unwrap();
        let want = c.powi(4);
        assert!((o.middle - want).abs() < 1e-12 * want);
        assert!((o.lower - want).abs() < 1e-12 * want && (o.upper - want).abs() < 1e-12 * want);
    }

    #[test]
    fn lmw_errors() {
        let a = from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(lmw_verify(&a, &CMatrix::identity(2, 2), &[1]), Err(Error::Spectrum(_))));
        assert!(lmw_verify(&a, &CMatrix::identity(2, 2), &[1, 0]).is_err());
        assert!(lmw_verify(&a, &CMatrix::identity(2, 2), &[]).is_err());
        assert!(lmw_verify(&a, &CMatrix::identity(3, 3), &[0]).is_err());
    }

    #[test]
    fn small_monte_carlo_runs_clean() {
        let v = validate_bounds(100, 1).unwrap();
        assert_eq!(v.total_violations(), 0, "{v:?}");
        assert_eq!(v.mvdr_power.checked, 100);
        let l = validate_lmw(100, 8, 2).unwrap();
        assert_eq!(l.violations, 0, "{l:?}");
    }
}
