use statrs::distribution::{ContinuousCDF, Normal};

use super::{CiDecision, CiTestConfig, Sidedness, Threshold};
use crate::error::{Error, Result};
use crate::linalg::{cholesky, cholesky_solve, covariance, Matrix};
use crate::scalar::Real;

fn check_indices(m: usize, i: usize, j: usize, k: &[usize]) -> Result<()> {
    if i >= m || j >= m || k.iter().any(|&c| c >= m) {
        return Err(Error::InvalidInput(format!(
            "column index out of range for {m} columns"
        )));
    }
    if i == j {
        return Err(Error::InvalidInput(
            "partial correlation needs i != j".into(),
        ));
    }
    if k.contains(&i) || k.contains(&j) {
        return Err(Error::InvalidInput(
            "conditioning set contains a tested column".into(),
        ));
    }
    Ok(())
}

/// Sample partial correlation of columns `i` and `j` given columns `k`.
pub fn partial_correlation<T: Real>(
    samples: &Matrix<T>,
    i: usize,
    j: usize,
    k: &[usize],
) -> Result<T> {
    check_indices(samples.cols(), i, j, k)?;
    let n = samples.rows();
    if n < k.len() + 3 {
        return Err(Error::InsufficientSamples {
            available: n,
            required: k.len() + 3,
        });
    }
    let mut cols = vec![i, j];
    cols.extend_from_slice(k);
    let rows: Vec<usize> = (0..n).collect();
    let cov = covariance(&samples.select(&rows, &cols));
    let rest: Vec<usize> = (2..cols.len()).collect();
    partial_correlation_from_cov(&cov, 0, 1, &rest)
}

/// Partial correlation from a covariance matrix via the Schur complement
/// `S11.2 = S11 - S12 S22^-1 S21`.
pub fn partial_correlation_from_cov<T: Real>(
    cov: &Matrix<T>,
    i: usize,
    j: usize,
    k: &[usize],
) -> Result<T> {
    check_indices(cov.rows(), i, j, k)?;
    let (mut sii, mut sjj, mut sij) = (cov[(i, i)], cov[(j, j)], cov[(i, j)]);
    if !(sii > T::zero()) || !(sjj > T::zero()) {
        return Err(Error::DegenerateVariance);
    }
    let (vii, vjj) = (sii, sjj);
    if !k.is_empty() {
        let s22 = cov.select(k, k);
        let l = cholesky(&s22).map_err(|_| Error::SingularConditioning)?;
        let s2i: Vec<T> = k.iter().map(|&c| cov[(c, i)]).collect();
        let s2j: Vec<T> = k.iter().map(|&c| cov[(c, j)]).collect();
        let ai = cholesky_solve(&l, &s2i);
        let aj = cholesky_solve(&l, &s2j);
        let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x * y).sum::<T>();
        sii -= dot(&s2i, &ai);
        sjj -= dot(&s2j, &aj);
        sij -= dot(&s2i, &aj);
    }
    let tol = T::pivot_tolerance();
    if !(sii > tol * vii) || !(sjj > tol * vjj) {
        return Err(Error::DegenerateVariance);
    }
    let rho = sij / (sii * sjj).sqrt();
    Ok(rho.max(-T::one()).min(T::one()))
}

/// Fisher's z-transform `1/2 log((1 + r) / (1 - r))`.
pub fn fisher_z<T: Real>(rho: T) -> Result<T> {
    if !(rho.abs() < T::one()) {
        return Err(Error::Domain {
            value: rho.to_f64_lossy(),
        });
    }
    Ok(rho.atanh())
}

/// Threshold on `|z|` for a level-`alpha` test with `n` samples and `k` conditioning variables.
pub fn gaussian_threshold(alpha: f64, n: usize, k: usize, sidedness: Sidedness) -> Result<f64> {
    if n < k + 4 {
        return Err(Error::InsufficientSamples {
            available: n,
            required: k + 4,
        });
    }
    let q = match sidedness {
        Sidedness::TwoSided => 1.0 - alpha / 2.0,
        Sidedness::OneSided => 1.0 - alpha,
    };
    let z = Normal::standard().inverse_cdf(q);
    Ok(z / ((n - k - 3) as f64).sqrt())
}

pub(crate) fn decide_gaussian<T: Real>(
    rho: T,
    n: usize,
    k: usize,
    config: &CiTestConfig,
) -> Result<CiDecision<T>> {
    // |rho| = 1 arises from exactly collinear columns; treat as maximal dependence.
    let limit = T::one() - T::epsilon();
    let z = fisher_z(rho.max(-limit).min(limit))?;
    let gamma = match config.threshold {
        Threshold::Level(alpha) => gaussian_threshold(alpha, n, k, config.sidedness)?,
        Threshold::Fixed(g) => g,
    };
    Ok(CiDecision::new(z, T::lit(gamma)))
}

/// Partial-correlation test of column `i` against column `j` given `k`.
///
/// The statistic is `fisher_z(rho)`; dependence is declared when its absolute
/// value exceeds the configured threshold.
pub fn gaussian_ci_test<T: Real>(
    samples: &Matrix<T>,
    i: usize,
    j: usize,
    k: &[usize],
    config: &CiTestConfig,
) -> Result<CiDecision<T>> {
    let rho = partial_correlation(samples, i, j, k)?;
    decide_gaussian(rho, samples.rows(), k.len(), config)
}
