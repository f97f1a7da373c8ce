//! Parent-set search over the time window and edge-weight estimation.
//!
//! For every candidate `(u, s) -> (v, 2 tau)` with `s` in `tau..2 tau`, the
//! edge is kept unless some conditioning set drawn from the earlier time
//! slices renders the pair conditionally independent. The same control flow
//! runs against an exact oracle ([`cits_oracle`]) or against statistical
//! tests on time-windowed samples ([`cits_sample`]).

use std::collections::BTreeMap;

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::citest::{
    partial::decide_gaussian, partial_correlation_from_cov, CiDecision, CiTestConfig, CiTestKind,
    HsEngine,
};
use crate::error::{Error, Result};
use crate::graph::{roll, Node, RolledGraph, UnrolledDag, UnrolledEdge};
use crate::linalg::{covariance, least_squares, Matrix};
use crate::scalar::Real;
use crate::series::{window, TimeSeries, WindowedSamples};

/// Nodes eligible for conditioning sets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditioningUniverse {
    /// Times `1..=2 tau` only (strictly before the target slice).
    #[default]
    Lagged,
    /// Every window node except the tested pair, including the target slice.
    FullWindow,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchOrder {
    /// Sets by increasing size; lexicographic node order within a size.
    #[default]
    IncreasingCardinality,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct CitsConfig {
    pub tau: usize,
    /// `None` searches every subset of the universe.
    pub max_conditioning_size: Option<usize>,
    pub ci: CiTestConfig,
    pub search_order: SearchOrder,
    pub universe: ConditioningUniverse,
    /// Seeds the per-edge permutation streams of the Hilbert-Schmidt test.
    pub seed: u64,
}

impl Default for CitsConfig {
    fn default() -> Self {
        Self {
            tau: 1,
            max_conditioning_size: Some(3),
            ci: CiTestConfig::default(),
            search_order: SearchOrder::IncreasingCardinality,
            universe: ConditioningUniverse::Lagged,
            seed: 0,
        }
    }
}

impl CitsConfig {
    pub fn new(tau: usize, ci: CiTestConfig) -> Self {
        Self {
            tau,
            ci,
            ..Self::default()
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::InvalidInput("tau must be positive".into()));
        }
        if let Some(m) = self.max_conditioning_size {
            let bound = (2 * p * (2 * self.tau + 1)).saturating_sub(2);
            if m > bound {
                return Err(Error::InvalidInput(format!(
                    "max conditioning size {m} exceeds 2p(2tau+1)-2 = {bound}"
                )));
            }
        }
        self.ci.validate()
    }
}

/// A candidate edge removed by the search, with the set that separated it.
#[derive(Clone, Debug, PartialEq)]
pub struct DeletedEdge<T> {
    pub edge: UnrolledEdge,
    pub separating_set: Vec<Node>,
    pub statistic: T,
    pub threshold: T,
}

#[derive(Serialize, Deserialize)]
struct DeletedEdgeRecord {
    edge: [usize; 4],
    separating_set: Vec<[usize; 2]>,
    statistic: f64,
    threshold: f64,
}

impl<T: Real> DeletedEdge<T> {
    /// One JSON-lines record with 1-based nodes.
    pub fn to_json_line(&self) -> String {
        let (a, b) = self.edge;
        let rec = DeletedEdgeRecord {
            edge: [a.var + 1, a.time + 1, b.var + 1, b.time + 1],
            separating_set: self
                .separating_set
                .iter()
                .map(|n| [n.var + 1, n.time + 1])
                .collect(),
            statistic: self.statistic.to_f64_lossy(),
            threshold: self.threshold.to_f64_lossy(),
        };
        serde_json::to_string(&rec).expect("record serializes")
    }
}

#[derive(Clone, Debug)]
pub struct CitsResult<T> {
    pub unrolled: UnrolledDag<T>,
    pub rolled: RolledGraph<T>,
    pub ci_calls: usize,
    pub deleted_edges: Vec<DeletedEdge<T>>,
}

/// Search limits shared by the oracle and sample versions.
#[derive(Clone, Copy, Debug, Default)]
pub struct SearchOptions {
    pub max_conditioning_size: Option<usize>,
    pub universe: ConditioningUniverse,
}

fn candidate_universe(
    p: usize,
    tau: usize,
    source: Node,
    target: Node,
    universe: ConditioningUniverse,
) -> Vec<Node> {
    let last = match universe {
        ConditioningUniverse::Lagged => 2 * tau,
        ConditioningUniverse::FullWindow => 2 * tau + 1,
    };
    let mut nodes: Vec<Node> = (0..p)
        .flat_map(|d| (0..last).map(move |r| Node::new(d, r)))
        .filter(|&n| n != source && n != target)
        .collect();
    nodes.sort();
    nodes
}

/// Candidate edges in `(v, u, s)` order.
fn candidates(p: usize, tau: usize) -> impl Iterator<Item = UnrolledEdge> {
    let target = 2 * tau;
    (0..p).flat_map(move |v| {
        (0..p)
            .flat_map(move |u| (tau..target).map(move |s| (Node::new(u, s), Node::new(v, target))))
    })
}

fn search<T, F>(p: usize, tau: usize, opts: SearchOptions, mut test: F) -> Result<CitsResult<T>>
where
    T: Real,
    F: FnMut(usize, Node, Node, &[Node]) -> Result<CiDecision<T>>,
{
    let mut kept = Vec::new();
    let mut deleted = Vec::new();
    let mut calls = 0usize;
    for (idx, (source, target)) in candidates(p, tau).enumerate() {
        let pool = candidate_universe(p, tau, source, target, opts.universe);
        let max_size = opts
            .max_conditioning_size
            .unwrap_or(pool.len())
            .min(pool.len());
        let mut separated = None;
        'sizes: for size in 0..=max_size {
            for set in pool.iter().copied().combinations(size) {
                calls += 1;
                let d = test(idx, source, target, &set)?;
                if !d.dependent {
                    separated = Some(DeletedEdge {
                        edge: (source, target),
                        separating_set: set,
                        statistic: d.statistic,
                        threshold: d.threshold,
                    });
                    break 'sizes;
                }
            }
        }
        match separated {
            Some(del) => deleted.push(del),
            None => kept.push((source, target)),
        }
    }
    let unrolled = UnrolledDag::new(p, tau, kept)?;
    let rolled = roll(&unrolled);
    Ok(CitsResult {
        unrolled,
        rolled,
        ci_calls: calls,
        deleted_edges: deleted,
    })
}

/// Runs the search with an exact independence oracle; `independent(a, b, S)`
/// answers whether `a` and `b` are conditionally independent given `S`.
///
/// Every subset of the lagged universe is searched.
pub fn cits_oracle<T, F>(independent: F, p: usize, tau: usize) -> Result<CitsResult<T>>
where
    T: Real,
    F: FnMut(Node, Node, &[Node]) -> bool,
{
    cits_oracle_with(independent, p, tau, SearchOptions::default())
}

pub fn cits_oracle_with<T, F>(
    mut independent: F,
    p: usize,
    tau: usize,
    opts: SearchOptions,
) -> Result<CitsResult<T>>
where
    T: Real,
    F: FnMut(Node, Node, &[Node]) -> bool,
{
    if tau == 0 || p == 0 {
        return Err(Error::InvalidInput("p and tau must be positive".into()));
    }
    search(p, tau, opts, |_, a, b, s| {
        let dep = !independent(a, b, s);
        let stat = if dep { T::one() } else { T::zero() };
        Ok(CiDecision::new(stat, T::lit(0.5)))
    })
}

/// Runs the search on time-windowed samples of `ts`, answering each query with
/// the configured conditional dependence test.
pub fn cits_sample<T: Real>(ts: &TimeSeries<T>, config: &CitsConfig) -> Result<CitsResult<T>> {
    config.validate(ts.p())?;
    let samples = window(ts, config.tau)?;
    cits_windowed(&samples, config)
}

/// As [`cits_sample`] on already-windowed data.
pub fn cits_windowed<T: Real>(
    samples: &WindowedSamples<T>,
    config: &CitsConfig,
) -> Result<CitsResult<T>> {
    let (p, tau) = (samples.p(), samples.tau());
    if tau != config.tau {
        return Err(Error::InvalidInput(format!(
            "samples windowed with tau = {tau}, config has tau = {}",
            config.tau
        )));
    }
    config.validate(p)?;
    let opts = SearchOptions {
        max_conditioning_size: config.max_conditioning_size,
        universe: config.universe,
    };
    let n = samples.len();
    let nodes = samples.all_nodes();
    let col = |node: Node| node.time * p + node.var;
    let pool_size = nodes.len() - 2;
    let largest = opts
        .max_conditioning_size
        .unwrap_or(pool_size)
        .min(pool_size);

    match config.ci.kind {
        CiTestKind::PartialCorrelation => {
            if n < largest + 4 {
                return Err(Error::InsufficientSamples {
                    available: n,
                    required: largest + 4,
                });
            }
            let cov = covariance(&samples.matrix(&nodes));
            search(p, tau, opts, |_, a, b, s| {
                let k: Vec<usize> = s.iter().map(|&x| col(x)).collect();
                let rho = partial_correlation_from_cov(&cov, col(a), col(b), &k)?;
                decide_gaussian(rho, n, k.len(), &config.ci)
            })
        }
        CiTestKind::HilbertSchmidt => {
            let columns = nodes.iter().map(|&nd| samples.node_samples(nd)).collect();
            let eps = T::lit(config.ci.epsilon(n));
            let mut engine = HsEngine::new(columns, eps, config.ci.bandwidth)?;
            let mut current: Option<(usize, ChaCha8Rng)> = None;
            search(p, tau, opts, |idx, a, b, s| {
                if current.as_ref().map(|c| c.0) != Some(idx) {
                    current = Some((
                        idx,
                        ChaCha8Rng::seed_from_u64(stream_seed(config.seed, idx as u64)),
                    ));
                }
                let rng = &mut current.as_mut().expect("stream set above").1;
                let z: Vec<usize> = s.iter().map(|&x| col(x)).collect();
                engine.test(col(a), col(b), &z, &config.ci, rng)
            })
        }
    }
}

/// SplitMix64 mixing of a base seed and a stream index.
pub fn stream_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Least-squares weights for every edge into the last time slice.
///
/// For each component `v`, `X(v, 2 tau + 1)` is regressed on its parents in
/// `dag` plus an intercept; the coefficient of each parent is its edge weight.
/// Non-parents carry no weight (read as zero).
pub fn edge_weights_unrolled<T: Real>(
    dag: &UnrolledDag<T>,
    samples: &WindowedSamples<T>,
) -> Result<UnrolledDag<T>> {
    if dag.p() != samples.p() || dag.tau() != samples.tau() {
        return Err(Error::DimensionMismatch {
            expected: dag.p() * dag.window_len(),
            found: samples.p() * samples.window_len(),
        });
    }
    let n = samples.len();
    let target_time = dag.target_time();
    let mut weights = BTreeMap::new();
    for v in 0..dag.p() {
        let target = Node::new(v, target_time);
        let parents = dag.parents(target);
        if parents.is_empty() {
            continue;
        }
        if n <= parents.len() + 1 {
            return Err(Error::InsufficientSamples {
                available: n,
                required: parents.len() + 2,
            });
        }
        let mut design = Matrix::zeros(n, parents.len() + 1);
        for k in 0..n {
            design[(k, 0)] = T::one();
            for (j, pa) in parents.iter().enumerate() {
                design[(k, j + 1)] = samples.get(k, pa.var, pa.time);
            }
        }
        let y = samples.node_samples(target);
        let fit = least_squares(&design, &y).map_err(|e| match e {
            Error::Singular { .. } => Error::RankDeficient { target: v + 1 },
            other => other,
        })?;
        for (j, pa) in parents.iter().enumerate() {
            weights.insert((*pa, target), fit.coefficients[j + 1]);
        }
    }
    let mut out = dag.clone();
    out.set_weights(weights);
    Ok(out)
}

/// Rolled weights: `w(u -> v)` is the mean of the unrolled weights of the
/// lagged copies of `u` that are parents of `(v, 2 tau + 1)`.
pub fn edge_weights_rolled<T: Real>(dag: &UnrolledDag<T>) -> Result<RolledGraph<T>> {
    let weights = dag
        .weights()
        .ok_or_else(|| Error::InvalidInput("unrolled DAG carries no weights".into()))?;
    let mut rolled = roll(dag);
    let mut sums: BTreeMap<(usize, usize), (T, usize)> = BTreeMap::new();
    for (&(a, b), &w) in weights {
        if b.time == dag.target_time() && a.time >= dag.tau() {
            let e = sums.entry((a.var, b.var)).or_insert((T::zero(), 0));
            e.0 += w;
            e.1 += 1;
        }
    }
    let means = sums
        .into_iter()
        .map(|(k, (s, c))| (k, s / T::from_usize(c).unwrap()))
        .collect();
    rolled.set_weights(means);
    Ok(rolled)
}

/// Whether an edge is excitatory (positive weight) or inhibitory (negative).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeNature {
    Increasing,
    Decreasing,
}

pub fn edge_nature<T: Real>(weight: T) -> Option<EdgeNature> {
    if weight > T::zero() {
        Some(EdgeNature::Increasing)
    } else if weight < T::zero() {
        Some(EdgeNature::Decreasing)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::d_separated;
    use rand_distr::{Distribution, StandardNormal};

    fn fig1() -> UnrolledDag<f64> {
        UnrolledDag::from_lags(
            3,
            2,
            &[(0, 0, 1), (0, 0, 2), (0, 1, 1), (1, 2, 1), (1, 2, 2)],
        )
        .unwrap()
    }

    fn restrict_to_target(dag: &UnrolledDag<f64>) -> Vec<UnrolledEdge> {
        dag.edges()
            .filter(|(_, b)| b.time == dag.target_time())
            .collect()
    }

    #[test]
    fn oracle_recovers_fig1() {
        let truth = fig1();
        let res: CitsResult<f64> =
            cits_oracle(|a, b, s| d_separated(&truth, a, b, s).unwrap(), 3, 2).unwrap();
        assert_eq!(
            res.unrolled.edges().collect::<Vec<_>>(),
            restrict_to_target(&truth)
        );
        let want = RolledGraph::from_edges(3, [(0, 0), (0, 1), (1, 2)]).unwrap();
        assert_eq!(res.rolled, want);
        assert_eq!(res.rolled, roll(&res.unrolled));
    }

    #[test]
    fn oracle_on_independent_noise_is_empty() {
        let truth = UnrolledDag::<f64>::empty(4, 1);
        let res: CitsResult<f64> =
            cits_oracle(|a, b, s| d_separated(&truth, a, b, s).unwrap(), 4, 1).unwrap();
        assert_eq!(res.unrolled.edge_count(), 0);
        assert_eq!(res.rolled.edge_count(), 0);
        assert_eq!(res.deleted_edges.len(), 16);
        assert!(res
            .deleted_edges
            .iter()
            .all(|d| d.separating_set.is_empty()));
    }

    #[test]
    fn full_window_universe_also_exact() {
        let truth = fig1();
        let opts = SearchOptions {
            max_conditioning_size: None,
            universe: ConditioningUniverse::FullWindow,
        };
        let res: CitsResult<f64> =
            cits_oracle_with(|a, b, s| d_separated(&truth, a, b, s).unwrap(), 3, 2, opts).unwrap();
        assert_eq!(res.rolled, roll(&truth));
    }

    #[test]
    fn conditioning_sets_in_increasing_size() {
        let mut sizes = Vec::new();
        let _: CitsResult<f64> = cits_oracle_with(
            |_, _, s| {
                sizes.push(s.len());
                false
            },
            2,
            1,
            SearchOptions {
                max_conditioning_size: Some(2),
                universe: ConditioningUniverse::Lagged,
            },
        )
        .unwrap();
        // 4 candidates x (1 + 3 + 3) sets each, sizes non-decreasing per candidate
        assert_eq!(sizes.len(), 4 * 7);
        for chunk in sizes.chunks(7) {
            assert!(chunk.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn deleted_edge_json_line() {
        let d = DeletedEdge {
            edge: (Node::new(0, 1), Node::new(2, 2)),
            separating_set: vec![Node::new(1, 0)],
            statistic: 0.01,
            threshold: 0.1,
        };
        let line = d.to_json_line();
        assert_eq!(
            line,
            r#"{"edge":[1,2,3,3],"separating_set":[[2,1]],"statistic":0.01,"threshold":0.1}"#
        );
    }

    fn noiseless_samples(n: usize) -> (UnrolledDag<f64>, WindowedSamples<f64>) {
        // X3,t = 0.5 + 2 X1,t-1 - X2,t-1 exactly; X1, X2 pseudo-random.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x1: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let x2: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut x3 = vec![0.0; n];
        for t in 1..n {
            x3[t] = 0.5 + 2.0 * x1[t - 1] - x2[t - 1];
        }
        let ts = TimeSeries::from_components(vec![x1, x2, x3]).unwrap();
        let dag = UnrolledDag::from_lags(3, 1, &[(0, 2, 1), (1, 2, 1)]).unwrap();
        (dag, window(&ts, 1).unwrap())
    }

    #[test]
    fn weights_recover_noiseless_coefficients() {
        let (dag, samples) = noiseless_samples(300);
        let weighted = edge_weights_unrolled(&dag, &samples).unwrap();
        let w13 = weighted.weight(Node::new(0, 1), Node::new(2, 2)).unwrap();
        let w23 = weighted.weight(Node::new(1, 1), Node::new(2, 2)).unwrap();
        assert!((w13 - 2.0).abs() < 1e-8 && (w23 + 1.0).abs() < 1e-8);
        let rolled = edge_weights_rolled(&weighted).unwrap();
        assert!((rolled.weight(0, 2).unwrap() - 2.0).abs() < 1e-8);
        assert_eq!(
            edge_nature(rolled.weight(1, 2).unwrap()),
            Some(EdgeNature::Decreasing)
        );
        assert_eq!(rolled.weight(0, 0), None);
    }

    #[test]
    fn parent_rescaling_scales_coefficient_inversely() {
        let (dag, samples) = noiseless_samples(300);
        let base = edge_weights_unrolled(&dag, &samples).unwrap();
        let a = 3.5;
        let mut labels_ts = samples
            .concatenate(vec!["a".into(), "b".into(), "c".into()])
            .unwrap();
        let comps: Vec<Vec<f64>> = (0..3)
            .map(|v| {
                labels_ts
                    .component(v)
                    .iter()
                    .map(|&x| if v == 0 { a * x } else { x })
                    .collect()
            })
            .collect();
        labels_ts = TimeSeries::from_components(comps).unwrap();
        let scaled = edge_weights_unrolled(&dag, &window(&labels_ts, 1).unwrap()).unwrap();
        let e = (Node::new(0, 1), Node::new(2, 2));
        let before = base.weight(e.0, e.1).unwrap();
        let after = scaled.weight(e.0, e.1).unwrap();
        assert!((after - before / a).abs() < 1e-8);
    }

    #[test]
    fn two_lags_average() {
        let mut dag = UnrolledDag::<f64>::new(
            1,
            2,
            [
                (Node::new(0, 2), Node::new(0, 4)),
                (Node::new(0, 3), Node::new(0, 4)),
            ],
        )
        .unwrap();
        dag.set_weights(
            [
                ((Node::new(0, 2), Node::new(0, 4)), 1.0),
                ((Node::new(0, 3), Node::new(0, 4)), 3.0),
            ]
            .into_iter()
            .collect(),
        );
        let rolled = edge_weights_rolled(&dag).unwrap();
        assert_eq!(rolled.weight(0, 0), Some(2.0));
    }

    #[test]
    fn collinear_parents_report_target() {
        let n = 90;
        let x: Vec<f64> = (0..n).map(|t| (t as f64 * 0.7).sin()).collect();
        let ts = TimeSeries::from_components(vec![x.clone(), x.clone(), x]).unwrap();
        let dag = UnrolledDag::from_lags(3, 1, &[(0, 2, 1), (1, 2, 1)]).unwrap();
        let err = edge_weights_unrolled(&dag, &window(&ts, 1).unwrap()).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { target: 3 }));
    }

    #[test]
    fn insufficient_windows_rejected() {
        let ts = TimeSeries::from_components(vec![vec![0.0; 9], vec![1.0; 9]]).unwrap();
        let cfg = CitsConfig::new(1, CiTestConfig::gaussian(0.05));
        assert!(matches!(
            cits_sample(&ts, &cfg),
            Err(Error::InsufficientSamples { .. })
        ));
    }
}
