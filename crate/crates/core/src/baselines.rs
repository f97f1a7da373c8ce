//! Comparator methods: pairwise and multivariate Granger causality and a
//! naive PC skeleton that ignores time.

use itertools::Itertools;
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use crate::citest::{partial::decide_gaussian, partial_correlation_from_cov, CiTestConfig};
use crate::error::{Error, Result};
use crate::graph::RolledGraph;
use crate::linalg::{cholesky, cholesky_solve, covariance, least_squares, LeastSquares, Matrix};
use crate::scalar::Real;
use crate::series::TimeSeries;

/// Vector autoregression of order `tau` fitted equation by equation.
#[derive(Clone, Debug)]
pub struct VarModel<T> {
    order: usize,
    p: usize,
    coefficients: Vec<T>,
    intercepts: Vec<T>,
    residual_variances: Vec<T>,
}

impl<T: Real> VarModel<T> {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Coefficient of `X(u, t - lag)` in the equation for `X(v, t)`, `lag` in `1..=order`.
    pub fn coefficient(&self, u: usize, v: usize, lag: usize) -> T {
        assert!(lag >= 1 && lag <= self.order, "lag out of range");
        self.coefficients[(u * self.p + v) * self.order + lag - 1]
    }

    pub fn intercepts(&self) -> &[T] {
        &self.intercepts
    }

    pub fn residual_variances(&self) -> &[T] {
        &self.residual_variances
    }
}

fn check_length<T: Real>(ts: &TimeSeries<T>, tau: usize) -> Result<()> {
    if tau == 0 {
        return Err(Error::InvalidInput("tau must be positive".into()));
    }
    let required = ts.p() * tau + 10;
    if ts.len() < required {
        return Err(Error::LengthTooShort {
            n: ts.len(),
            required,
        });
    }
    Ok(())
}

/// Design with an intercept column followed by lags `1..=tau` of each listed component.
fn lag_design<T: Real>(ts: &TimeSeries<T>, tau: usize, comps: &[usize]) -> Matrix<T> {
    let rows = ts.len() - tau;
    let mut x = Matrix::zeros(rows, 1 + comps.len() * tau);
    for r in 0..rows {
        let t = r + tau;
        x[(r, 0)] = T::one();
        for (ci, &u) in comps.iter().enumerate() {
            for j in 1..=tau {
                x[(r, 1 + ci * tau + j - 1)] = ts.value(u, t - j);
            }
        }
    }
    x
}

/// OLS that survives exact collinearity: on a rank-deficient design a warning
/// is logged and a minimally ridged normal-equation solve is used instead.
fn robust_ols<T: Real>(x: &Matrix<T>, y: &[T], what: &str) -> Result<LeastSquares<T>> {
    match least_squares(x, y) {
        Ok(fit) => Ok(fit),
        Err(Error::Singular { index, .. }) => {
            log::warn!("collinear design in {what} (column {index}); using ridge fallback");
            let xt = x.transpose();
            let mut gram = xt.matmul(x);
            let k = gram.rows();
            let scale = (0..k)
                .map(|i| gram[(i, i)])
                .fold(T::zero(), T::max)
                .max(T::one());
            for i in 0..k {
                gram[(i, i)] += scale * T::lit(1e-10);
            }
            let l = cholesky(&gram)?;
            let xty: Vec<T> = (0..k)
                .map(|i| xt.row(i).iter().zip(y).map(|(&a, &b)| a * b).sum())
                .collect();
            let beta = cholesky_solve(&l, &xty);
            let rss = (0..x.rows())
                .map(|r| {
                    let fit: T = x.row(r).iter().zip(&beta).map(|(&a, &b)| a * b).sum();
                    (y[r] - fit) * (y[r] - fit)
                })
                .sum();
            Ok(LeastSquares {
                coefficients: beta,
                rss,
            })
        }
        Err(e) => Err(e),
    }
}

fn response<T: Real>(ts: &TimeSeries<T>, tau: usize, v: usize) -> Vec<T> {
    ts.component(v)[tau..].to_vec()
}

/// Fits a VAR(`tau`) with intercepts by per-equation least squares.
pub fn fit_var<T: Real>(ts: &TimeSeries<T>, tau: usize) -> Result<VarModel<T>> {
    check_length(ts, tau)?;
    let p = ts.p();
    let all: Vec<usize> = (0..p).collect();
    let x = lag_design(ts, tau, &all);
    let rows = x.rows();
    let mut coefficients = vec![T::zero(); p * p * tau];
    let mut intercepts = Vec::with_capacity(p);
    let mut residual_variances = Vec::with_capacity(p);
    for v in 0..p {
        let fit = robust_ols(&x, &response(ts, tau, v), "VAR equation")?;
        intercepts.push(fit.coefficients[0]);
        for u in 0..p {
            for j in 1..=tau {
                coefficients[(u * p + v) * tau + j - 1] = fit.coefficients[1 + u * tau + j - 1];
            }
        }
        residual_variances.push(fit.rss / T::from_usize(rows - x.cols()).unwrap());
    }
    Ok(VarModel {
        order: tau,
        p,
        coefficients,
        intercepts,
        residual_variances,
    })
}

/// Compares restricted and full residual sums of squares, tolerating exact fits.
fn rss_ratio<T: Real>(restricted: T, full: T) -> Option<f64> {
    let (r, f) = (restricted.to_f64_lossy(), full.to_f64_lossy());
    let tiny = 1e-300;
    if f <= tiny {
        return if r <= tiny { None } else { Some(f64::INFINITY) };
    }
    Some((r / f).max(1.0))
}

/// Multivariate Granger causality: `u -> v` iff the likelihood-ratio test
/// that all `tau` lag coefficients of `u` in the equation for `v` vanish
/// rejects at level `alpha`. Self-loops are tested like any other pair.
pub fn gc2<T: Real>(ts: &TimeSeries<T>, tau: usize, alpha: f64) -> Result<RolledGraph<T>> {
    check_length(ts, tau)?;
    let p = ts.p();
    let all: Vec<usize> = (0..p).collect();
    let full_x = lag_design(ts, tau, &all);
    let rows = full_x.rows() as f64;
    let chi = ChiSquared::new(tau as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut graph = RolledGraph::empty(p);
    for v in 0..p {
        let y = response(ts, tau, v);
        let full = robust_ols(&full_x, &y, "full VAR equation")?;
        for u in 0..p {
            let others: Vec<usize> = all.iter().copied().filter(|&d| d != u).collect();
            let restricted =
                robust_ols(&lag_design(ts, tau, &others), &y, "restricted VAR equation")?;
            let Some(ratio) = rss_ratio(restricted.rss, full.rss) else {
                continue;
            };
            let lr = rows * ratio.ln();
            if chi.sf(lr) < alpha {
                graph.add_edge(u, v)?;
            }
        }
    }
    Ok(graph)
}

/// Pairwise Granger causality: for each ordered pair `u != v`, an F-test of
/// whether `tau` lags of `u` improve the intercept-plus-AR(`tau`) fit of `v`.
pub fn gc1<T: Real>(ts: &TimeSeries<T>, tau: usize, alpha: f64) -> Result<RolledGraph<T>> {
    check_length(ts, tau)?;
    let p = ts.p();
    let rows = ts.len() - tau;
    let df2 = rows - 2 * tau - 1;
    let f = FisherSnedecor::new(tau as f64, df2 as f64)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let mut graph = RolledGraph::empty(p);
    for v in 0..p {
        let y = response(ts, tau, v);
        let own = robust_ols(&lag_design(ts, tau, &[v]), &y, "autoregression")?;
        for u in (0..p).filter(|&u| u != v) {
            let both = robust_ols(&lag_design(ts, tau, &[v, u]), &y, "bivariate regression")?;
            let Some(ratio) = rss_ratio(own.rss, both.rss) else {
                continue;
            };
            let stat = (ratio - 1.0) * df2 as f64 / tau as f64;
            if f.sf(stat) < alpha {
                graph.add_edge(u, v)?;
            }
        }
    }
    Ok(graph)
}

/// PC skeleton treating each time point as an independent draw of the
/// `p`-vector. Surviving adjacencies are returned as symmetric edge pairs.
///
/// Adjacency sets are frozen per level, so the result does not depend on
/// the order in which pairs are visited.
pub fn pc_naive<T: Real>(ts: &TimeSeries<T>, alpha: f64) -> Result<RolledGraph<T>> {
    let (p, n) = (ts.p(), ts.len());
    if n < p + 3 {
        return Err(Error::LengthTooShort { n, required: p + 3 });
    }
    let config = CiTestConfig::gaussian(alpha);
    let comps: Vec<&[T]> = (0..p).map(|v| ts.component(v)).collect();
    let cov = covariance(&Matrix::from_columns(&comps)?);
    let mut adj = vec![vec![true; p]; p];
    for (i, row) in adj.iter_mut().enumerate() {
        row[i] = false;
    }
    let mut level = 0;
    loop {
        let frozen = adj.clone();
        let mut any_testable = false;
        for i in 0..p {
            for j in (i + 1)..p {
                if !adj[i][j] {
                    continue;
                }
                for (a, b) in [(i, j), (j, i)] {
                    let neigh: Vec<usize> = (0..p).filter(|&k| frozen[a][k] && k != b).collect();
                    if neigh.len() < level || n < level + 4 {
                        continue;
                    }
                    any_testable = true;
                    let mut removed = false;
                    for set in neigh.into_iter().combinations(level) {
                        let rho = partial_correlation_from_cov(&cov, i, j, &set)?;
                        if !decide_gaussian(rho, n, set.len(), &config)?.dependent {
                            adj[i][j] = false;
                            adj[j][i] = false;
                            removed = true;
                            break;
                        }
                    }
                    if removed {
                        break;
                    }
                }
            }
        }
        if !any_testable {
            break;
        }
        level += 1;
    }
    let mut graph = RolledGraph::empty(p);
    for i in 0..p {
        for j in 0..p {
            if adj[i][j] {
                graph.add_edge(i, j)?;
            }
        }
    }
    Ok(graph)
}
