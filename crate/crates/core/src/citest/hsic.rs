use std::collections::HashMap;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{Bandwidth, CiDecision, CiTestConfig, Threshold};
use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, Matrix};
use crate::scalar::Real;

const MIN_SAMPLES: usize = 5;
const CACHE_BUDGET_BYTES: usize = 512 << 20;

/// Median pairwise distance of a sample, or 1 when every pair coincides.
pub fn median_bandwidth<T: Real>(x: &[T]) -> T {
    let mut d: Vec<T> = Vec::with_capacity(x.len() * x.len().saturating_sub(1) / 2);
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            d.push((x[i] - x[j]).abs());
        }
    }
    if d.is_empty() {
        return T::one();
    }
    let mid = d.len() / 2;
    let (_, m, _) =
        d.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).expect("finite distances"));
    if *m > T::zero() {
        *m
    } else {
        T::one()
    }
}

/// Evaluates the regularized Hilbert-Schmidt conditional dependence statistic
/// over a fixed pool of sample columns.
///
/// For a column set `U`, `R_U = G_U (G_U + N eps I)^-1` with `G_U` the doubly
/// centered Gaussian Gram matrix of `U`. These operators only depend on the
/// set, so they are memoized; a CITS run asks for the same sets many times.
pub struct HsEngine<T> {
    n: usize,
    ridge: T,
    scaled: Vec<Vec<T>>,
    cache: HashMap<Vec<usize>, Rc<Matrix<T>>>,
    max_cached: usize,
}

impl<T: Real> HsEngine<T> {
    pub fn new(columns: Vec<Vec<T>>, epsilon: T, bandwidth: Bandwidth) -> Result<Self> {
        let n = columns.first().map_or(0, Vec::len);
        if n < MIN_SAMPLES {
            return Err(Error::InsufficientSamples {
                available: n,
                required: MIN_SAMPLES,
            });
        }
        if !(epsilon > T::zero()) {
            return Err(Error::InvalidInput(
                "regularization epsilon must be positive".into(),
            ));
        }
        let mut scaled = Vec::with_capacity(columns.len());
        for col in columns {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: col.len(),
                });
            }
            let sigma = match bandwidth {
                Bandwidth::MedianHeuristic => median_bandwidth(&col),
                Bandwidth::Fixed(s) => T::lit(s),
            };
            scaled.push(col.into_iter().map(|v| v / sigma).collect());
        }
        let per_entry = n * n * std::mem::size_of::<T>();
        Ok(Self {
            n,
            ridge: T::from_usize(n).unwrap() * epsilon,
            scaled,
            cache: HashMap::new(),
            max_cached: (CACHE_BUDGET_BYTES / per_entry.max(1)).max(8),
        })
    }

    #[inline]
    pub fn samples(&self) -> usize {
        self.n
    }

    pub fn columns(&self) -> usize {
        self.scaled.len()
    }

    fn centered_gram(&self, set: &[usize]) -> Matrix<T> {
        let n = self.n;
        let mut k = Matrix::zeros(n, n);
        let half = T::lit(0.5);
        for i in 0..n {
            k[(i, i)] = T::one();
            for j in (i + 1)..n {
                let d2: T = set
                    .iter()
                    .map(|&c| {
                        let d = self.scaled[c][i] - self.scaled[c][j];
                        d * d
                    })
                    .sum();
                let v = (-half * d2).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k.double_center();
        k
    }

    /// `R_U` for the column set `U` (order-insensitive).
    pub fn regularized_operator(&mut self, set: &[usize]) -> Result<Rc<Matrix<T>>> {
        let mut key = set.to_vec();
        key.sort_unstable();
        key.dedup();
        if let Some(r) = self.cache.get(&key) {
            return Ok(Rc::clone(r));
        }
        if let Some(&bad) = key.iter().find(|&&c| c >= self.scaled.len()) {
            return Err(Error::InvalidInput(format!("column {bad} out of range")));
        }
        let mut a = self.centered_gram(&key);
        for i in 0..self.n {
            a[(i, i)] += self.ridge;
        }
        let inv = spd_inverse(&a)?;
        let mut r = Matrix::identity(self.n);
        for (rv, &iv) in r.as_mut_slice().iter_mut().zip(inv.as_slice()) {
            *rv -= self.ridge * iv;
        }
        r.symmetrize();
        let r = Rc::new(r);
        if self.cache.len() >= self.max_cached {
            self.cache.clear();
        }
        self.cache.insert(key, Rc::clone(&r));
        Ok(r)
    }

    /// Returns `(R_Ydd, A)` with `H = <R_Ydd, A>_F`, where
    /// `A = (I - R_Z) R_Xdd (I - R_Z)`, or `A = R_X` when `Z` is empty.
    fn operators(
        &mut self,
        a: usize,
        b: usize,
        z: &[usize],
    ) -> Result<(Rc<Matrix<T>>, Rc<Matrix<T>>)> {
        if a == b || z.contains(&a) || z.contains(&b) {
            return Err(Error::InvalidInput(
                "tested columns must be distinct and outside Z".into(),
            ));
        }
        let with = |c: usize| {
            let mut s = z.to_vec();
            s.push(c);
            s
        };
        let r_y = self.regularized_operator(&with(b))?;
        let r_x = self.regularized_operator(&with(a))?;
        if z.is_empty() {
            return Ok((r_y, r_x));
        }
        let r_z = self.regularized_operator(z)?;
        let mut w = Matrix::identity(self.n);
        for (wv, &zv) in w.as_mut_slice().iter_mut().zip(r_z.as_slice()) {
            *wv -= zv;
        }
        let mut a_op = w.matmul(&r_x).matmul(&w);
        a_op.symmetrize();
        Ok((r_y, Rc::new(a_op)))
    }

    /// `H_n = Tr[R_Y'' R_X'' - 2 R_Y'' R_X'' R_Z + R_Y'' R_Z R_X'' R_Z]` for
    /// `X'' = (a, Z)`, `Y'' = (b, Z)`; with empty `Z` this is `Tr[R_Y R_X]`.
    pub fn statistic(&mut self, a: usize, b: usize, z: &[usize]) -> Result<T> {
        let (r_y, a_op) = self.operators(a, b, z)?;
        Ok(r_y.frobenius_dot(&a_op))
    }

    /// Decides dependence of columns `a` and `b` given `z`.
    ///
    /// With a level threshold, the null distribution is approximated by
    /// permuting the sample rows of the `Z`-residualized operator of `a`
    /// against `R_Y''`; `gamma` is the permutation quantile such that
    /// `H > gamma` iff the permutation p-value is at most the level.
    pub fn test<R: Rng + ?Sized>(
        &mut self,
        a: usize,
        b: usize,
        z: &[usize],
        config: &CiTestConfig,
        rng: &mut R,
    ) -> Result<CiDecision<T>> {
        let (r_y, a_op) = self.operators(a, b, z)?;
        let h = r_y.frobenius_dot(&a_op);
        let gamma = match config.threshold {
            Threshold::Fixed(g) => T::lit(g),
            Threshold::Level(alpha) => {
                let null = permutation_null(&r_y, &a_op, config.permutations, rng);
                permutation_threshold(null, alpha)
            }
        };
        Ok(CiDecision::new(h, gamma))
    }

    /// The trace expression evaluated term by term with explicit products.
    pub fn statistic_by_trace(&mut self, a: usize, b: usize, z: &[usize]) -> Result<T> {
        let with = |c: usize| {
            let mut s = z.to_vec();
            s.push(c);
            s
        };
        let r_y = self.regularized_operator(&with(b))?;
        let r_x = self.regularized_operator(&with(a))?;
        let yx = r_y.matmul(&r_x);
        if z.is_empty() {
            return Ok(yx.trace());
        }
        let r_z = self.regularized_operator(z)?;
        let yxz = yx.matmul(&r_z);
        let yzxz = r_y.matmul(&r_z).matmul(&r_x).matmul(&r_z);
        Ok(yx.trace() - T::lit(2.0) * yxz.trace() + yzxz.trace())
    }
}

fn permutation_null<T: Real, R: Rng + ?Sized>(
    r_y: &Matrix<T>,
    a_op: &Matrix<T>,
    count: usize,
    rng: &mut R,
) -> Vec<T> {
    let n = r_y.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        perm.shuffle(rng);
        let mut total = T::zero();
        for (i, &pi) in perm.iter().enumerate() {
            let ry = r_y.row(i);
            let ar = a_op.row(pi);
            let s: T = ry.iter().zip(&perm).map(|(&y, &pj)| y * ar[pj]).sum();
            total += s;
        }
        out.push(total);
    }
    out
}

/// `r`-th largest null value with `r = floor(alpha (B + 1))`; `H > gamma` then
/// matches `(1 + #{null >= H}) / (B + 1) <= alpha` for untied values.
fn permutation_threshold<T: Real>(mut null: Vec<T>, alpha: f64) -> T {
    let b = null.len();
    let r = (alpha * (b as f64 + 1.0) + 1e-9).floor() as usize;
    if r == 0 {
        return T::infinity();
    }
    if r > b {
        return T::neg_infinity();
    }
    null.sort_unstable_by(|x, y| y.partial_cmp(x).expect("finite statistics"));
    null[r - 1]
}

fn engine_for<T: Real>(
    x: &[T],
    y: &[T],
    z: &Matrix<T>,
    epsilon: T,
    bandwidth: Bandwidth,
) -> Result<HsEngine<T>> {
    if y.len() != x.len() || (z.cols() > 0 && z.rows() != x.len()) {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: if y.len() != x.len() {
                y.len()
            } else {
                z.rows()
            },
        });
    }
    let mut cols = vec![x.to_vec(), y.to_vec()];
    cols.extend((0..z.cols()).map(|c| z.column(c)));
    HsEngine::new(cols, epsilon, bandwidth)
}

/// `H_n(x, y | Z)` with Gaussian kernels; `Z` may have zero columns.
pub fn hs_statistic<T: Real>(
    x: &[T],
    y: &[T],
    z: &Matrix<T>,
    epsilon: T,
    bandwidth: Bandwidth,
) -> Result<T> {
    let mut engine = engine_for(x, y, z, epsilon, bandwidth)?;
    let zs: Vec<usize> = (2..2 + z.cols()).collect();
    engine.statistic(0, 1, &zs)
}

/// Hilbert-Schmidt conditional dependence test with `epsilon_n` from `config`.
pub fn hs_ci_test<T: Real, R: Rng + ?Sized>(
    x: &[T],
    y: &[T],
    z: &Matrix<T>,
    config: &CiTestConfig,
    rng: &mut R,
) -> Result<CiDecision<T>> {
    config.validate()?;
    let eps = T::lit(config.epsilon(x.len()));
    let mut engine = engine_for(x, y, z, eps, config.bandwidth)?;
    let zs: Vec<usize> = (2..2 + z.cols()).collect();
    engine.test(0, 1, &zs, config, rng)
}
