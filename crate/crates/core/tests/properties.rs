mod common;

use cits_core::baselines::{gc1, gc2, pc_naive};
use cits_core::citest::{gaussian_threshold, hs_statistic, Bandwidth, Sidedness};
use cits_core::cits::{
    cits_oracle_with, edge_weights_unrolled, CitsResult, ConditioningUniverse, SearchOptions,
};
use cits_core::eval::{confusion, metrics, Confusion};
use cits_core::ingest::{bin_psth, smooth, SpikeData};
use cits_core::linalg::Matrix;
use cits_core::{
    cits_oracle, cits_sample, roll, simulate, window, CiTestConfig, CitsConfig, DSeparation, Node,
    RolledGraph, SimKind, SimModel, TimeSeries, UnrolledDag,
};
use common::{embedded_dag, random_lags, target_edges, PathOracle};
use itertools::Itertools;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn oracle_recovers(p: usize, tau: usize, lags: &[(usize, usize, usize)]) -> bool {
    let truth = UnrolledDag::<f64>::from_lags(p, tau, lags).unwrap();
    let ds = DSeparation::new(&truth);
    let res: CitsResult<f64> = cits_oracle(|a, b, s| ds.query(a, b, s).unwrap(), p, tau).unwrap();
    res.unrolled.edges().collect::<Vec<_>>() == target_edges(&truth) && res.rolled == roll(&truth)
}

#[test]
fn oracle_exact_on_every_small_lag_structure() {
    // Every lag set of at most six edges; p = 4 with tau = 2 is sampled below.
    for (p, tau) in [(1, 1), (1, 2), (2, 1), (2, 2), (3, 1), (3, 2), (4, 1)] {
        let pool: Vec<(usize, usize, usize)> = (0..p)
            .flat_map(|u| (0..p).flat_map(move |v| (1..=tau).map(move |l| (u, v, l))))
            .collect();
        let mut checked = 0;
        for k in 0..=pool.len().min(6) {
            for lags in pool.iter().copied().combinations(k) {
                assert!(
                    oracle_recovers(p, tau, &lags),
                    "p={p} tau={tau} lags={lags:?}"
                );
                checked += 1;
            }
        }
        assert!(checked > 0);
    }
}

#[test]
fn oracle_exact_on_sampled_larger_structures() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for (p, tau) in [(4, 2)] {
        let mut done = 0;
        while done < 400 {
            let lags = random_lags(&mut rng, p, tau, 0.2);
            if lags.len() > 6 {
                continue;
            }
            assert!(
                oracle_recovers(p, tau, &lags),
                "p={p} tau={tau} lags={lags:?}"
            );
            done += 1;
        }
    }
}

#[test]
fn literal_universe_is_also_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(78);
    let opts = SearchOptions {
        max_conditioning_size: None,
        universe: ConditioningUniverse::FullWindow,
    };
    for _ in 0..40 {
        let (p, tau) = (3, 1);
        let truth =
            UnrolledDag::<f64>::from_lags(p, tau, &random_lags(&mut rng, p, tau, 0.3)).unwrap();
        let ds = DSeparation::new(&truth);
        let res: CitsResult<f64> =
            cits_oracle_with(|a, b, s| ds.query(a, b, s).unwrap(), p, tau, opts).unwrap();
        assert_eq!(res.rolled, roll(&truth));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn d_separation_matches_path_enumeration(seed in any::<u64>(), m in 2usize..7, prob in 0.1f64..0.7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dag, nodes) = embedded_dag(&mut rng, m, prob);
        let ds = DSeparation::new(&dag);
        let reference = PathOracle::new(&dag, &nodes);
        for _ in 0..20 {
            let a = rng.random_range(0..m);
            let b = (a + rng.random_range(1..m)) % m;
            let given: Vec<bool> = (0..m).map(|i| i != a && i != b && rng.random_bool(0.4)).collect();
            let set: Vec<Node> = (0..m).filter(|&i| given[i]).map(|i| nodes[i]).collect();
            prop_assert_eq!(ds.query(nodes[a], nodes[b], &set).unwrap(), reference.separated(a, b, &given));
        }
    }

    #[test]
    fn perfect_estimate_scores_one_hundred(edges in proptest::collection::btree_set((0usize..4, 0usize..4), 1..15)) {
        let g = RolledGraph::<f64>::from_edges(4, edges).unwrap();
        let m = metrics(&confusion(&g, &g).unwrap()).unwrap();
        prop_assert_eq!((m.tpr, m.ifpr, m.cs), (100.0, 100.0, 100.0));
    }

    #[test]
    fn aggregation_ignores_trial_order(counts in proptest::collection::vec((0usize..5, 0usize..5, 0usize..5, 0usize..5), 1..20)) {
        let cs: Vec<Confusion> = counts.iter().map(|&(tp, fp, tn, fn_)| Confusion { tp, fp, tn, fn_ }).collect();
        let forward: Confusion = cs.iter().copied().sum();
        let backward: Confusion = cs.iter().rev().copied().sum();
        prop_assert_eq!(forward, backward);
    }

    #[test]
    fn larger_alpha_lowers_threshold(a in 0.001f64..0.5, b in 0.001f64..0.5, n in 10usize..2000, k in 0usize..5) {
        prop_assume!(n >= k + 4);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        for side in [Sidedness::TwoSided, Sidedness::OneSided] {
            prop_assert!(gaussian_threshold(hi, n, k, side).unwrap() <= gaussian_threshold(lo, n, k, side).unwrap());
        }
    }

    #[test]
    fn rescaled_parent_scales_weight_inversely(seed in any::<u64>(), a in 0.1f64..10.0) {
        let ts: TimeSeries<f64> = simulate(&SimModel { kind: SimKind::LinearGaussian1, eta: 1.0, n: 300, seed }).unwrap();
        let dag = UnrolledDag::<f64>::from_lags(4, 1, &[(0, 2, 1), (1, 2, 1), (2, 3, 1)]).unwrap();
        let base = edge_weights_unrolled(&dag, &window(&ts, 1).unwrap()).unwrap();
        let comps: Vec<Vec<f64>> = (0..4)
            .map(|v| ts.component(v).iter().map(|&x| if v == 1 { a * x } else { x }).collect())
            .collect();
        let scaled_ts = TimeSeries::from_components(comps).unwrap();
        let scaled = edge_weights_unrolled(&dag, &window(&scaled_ts, 1).unwrap()).unwrap();
        let (src, dst) = (Node::new(1, 1), Node::new(2, 2));
        let want = base.weight(src, dst).unwrap() / a;
        prop_assert!((scaled.weight(src, dst).unwrap() - want).abs() < 1e-8);
    }
}

fn check_result_invariants(res: &CitsResult<f64>, p: usize, tau: usize) {
    assert_eq!(res.rolled, roll(&res.unrolled));
    for (a, b) in res.unrolled.edges() {
        assert_eq!(b.time, 2 * tau);
        assert!(a.time >= tau && a.time < 2 * tau);
    }
    assert_eq!(
        res.unrolled.edge_count() + res.deleted_edges.len(),
        p * p * tau
    );
    for d in &res.deleted_edges {
        assert!(!res.unrolled.has_edge(d.edge.0, d.edge.1));
        assert!(
            d.statistic.abs() <= d.threshold,
            "logged set must have tested independent"
        );
        assert!(!d.separating_set.contains(&d.edge.0) && !d.separating_set.contains(&d.edge.1));
    }
}

#[test]
fn sample_results_are_consistent_and_deterministic() {
    for (kind, tau) in [
        (SimKind::LinearGaussian1, 1),
        (SimKind::LinearGaussian2, 2),
        (SimKind::Ctrnn, 1),
    ] {
        let ts: TimeSeries<f64> = simulate(&SimModel::new(kind, 1.0, 3)).unwrap();
        let cfg = CitsConfig::new(tau, CiTestConfig::gaussian(0.05));
        let res = cits_sample(&ts, &cfg).unwrap();
        check_result_invariants(&res, 4, tau);
        let again = cits_sample(&ts, &cfg).unwrap();
        assert_eq!(res.unrolled, again.unrolled);
    }
}

#[test]
fn hilbert_schmidt_results_are_consistent_and_seeded() {
    let ts: TimeSeries<f64> = simulate(&SimModel {
        n: 300,
        ..SimModel::new(SimKind::NonlinearNongaussian1, 1.0, 5)
    })
    .unwrap();
    let cfg = CitsConfig {
        max_conditioning_size: Some(1),
        seed: 9,
        ..CitsConfig::new(
            1,
            CiTestConfig {
                permutations: 50,
                ..CiTestConfig::hilbert_schmidt(0.05)
            },
        )
    };
    let res = cits_sample(&ts, &cfg).unwrap();
    check_result_invariants(&res, 4, 1);
    let again = cits_sample(&ts, &cfg).unwrap();
    assert_eq!(res.unrolled, again.unrolled);
    assert_eq!(
        res.deleted_edges
            .iter()
            .map(|d| d.to_json_line())
            .collect::<Vec<_>>(),
        again
            .deleted_edges
            .iter()
            .map(|d| d.to_json_line())
            .collect::<Vec<_>>()
    );
}

#[test]
fn independent_noise_rarely_yields_edges() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let trials = 60;
    let mut false_edges = 0;
    for _ in 0..trials {
        let comps: Vec<Vec<f64>> = (0..3)
            .map(|c| {
                (0..600)
                    .map(|_| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        c as f64 + e
                    })
                    .collect()
            })
            .collect();
        let ts = TimeSeries::from_components(comps).unwrap();
        false_edges += cits_sample(&ts, &CitsConfig::new(1, CiTestConfig::gaussian(0.05)))
            .unwrap()
            .rolled
            .edge_count();
    }
    let rate = false_edges as f64 / (trials * 9) as f64;
    assert!(rate <= 0.05 + 0.03, "per-edge false positive rate {rate}");
}

fn random_acyclic_var(
    rng: &mut ChaCha8Rng,
    p: usize,
    n: usize,
) -> (TimeSeries<f64>, RolledGraph<f64>) {
    // Strictly upper-triangular lag-1 coefficients keep the process stable.
    let mut coef = vec![vec![0.0; p]; p];
    let mut truth = RolledGraph::empty(p);
    for u in 0..p {
        for v in (u + 1)..p {
            if rng.random_bool(0.35) {
                let mag = rng.random_range(1.0..2.0);
                coef[u][v] = if rng.random_bool(0.5) { mag } else { -mag };
                truth.add_edge(u, v).unwrap();
            }
        }
    }
    let mut x = vec![vec![0.0; n + 50]; p];
    for t in 0..n + 50 {
        for v in 0..p {
            let e: f64 = StandardNormal.sample(rng);
            x[v][t] = e + if t > 0 {
                (0..p).map(|u| coef[u][v] * x[u][t - 1]).sum::<f64>()
            } else {
                0.0
            };
        }
    }
    let comps = x.into_iter().map(|c| c[50..].to_vec()).collect();
    (TimeSeries::from_components(comps).unwrap(), truth)
}

#[test]
fn gc2_recovers_var_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let seeds = 20;
    let exact = (0..seeds)
        .filter(|_| {
            let (ts, truth) = random_acyclic_var(&mut rng, 4, 2000);
            gc2(&ts, 1, 0.001).unwrap() == truth
        })
        .count();
    assert!(exact * 100 >= 95 * seeds, "{exact}/{seeds} exact");
}

#[test]
fn pairwise_methods_never_emit_self_loops() {
    for kind in [SimKind::Ctrnn, SimKind::LinearGaussian2] {
        let ts: TimeSeries<f64> = simulate(&SimModel::new(kind, 1.0, 4)).unwrap();
        for g in [gc1(&ts, 1, 0.1).unwrap(), pc_naive(&ts, 0.1).unwrap()] {
            assert!((0..4).all(|v| !g.has_edge(v, v)), "{g}");
        }
        let pc = pc_naive(&ts, 0.1).unwrap();
        assert!(pc.edges().all(|(u, v)| pc.has_edge(v, u)));
    }
}

#[test]
fn baselines_are_deterministic() {
    let ts: TimeSeries<f64> = simulate(&SimModel::new(SimKind::LinearGaussian1, 1.0, 8)).unwrap();
    assert_eq!(gc1(&ts, 1, 0.05).unwrap(), gc1(&ts, 1, 0.05).unwrap());
    assert_eq!(gc2(&ts, 2, 0.05).unwrap(), gc2(&ts, 2, 0.05).unwrap());
    assert_eq!(pc_naive(&ts, 0.05).unwrap(), pc_naive(&ts, 0.05).unwrap());
}

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    x.windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum::<f64>()
        / var
}

#[test]
fn split_half_means_agree() {
    for kind in SimKind::ALL {
        let ts: TimeSeries<f64> = simulate(&SimModel {
            n: 1000,
            ..SimModel::new(kind, 1.0, 21)
        })
        .unwrap();
        for v in 0..4 {
            let x = ts.component(v);
            let half = x.len() / 2;
            let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
            let sd = {
                let m = mean(x);
                (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
            };
            // Standard error of a half-sample mean, inflated for lag-1 autocorrelation.
            let r = lag1_autocorrelation(x).clamp(-0.9, 0.9);
            let se = sd / (half as f64).sqrt() * ((1.0 + r) / (1.0 - r)).sqrt() * 2f64.sqrt();
            let diff = (mean(&x[..half]) - mean(&x[half..])).abs();
            assert!(
                diff < 5.0 * se + 1e-12,
                "{kind} X{}: diff {diff} se {se}",
                v + 1
            );
        }
    }
}

#[test]
fn ctrnn_stays_bounded() {
    for eta in [0.1, 1.0, 2.0, 3.5] {
        for seed in 0..3 {
            let ts: TimeSeries<f64> = simulate(&SimModel {
                kind: SimKind::Ctrnn,
                eta,
                n: 2000,
                seed,
            })
            .unwrap();
            assert!((0..4).all(|v| ts.component(v).iter().all(|x| x.abs() < 1e6)));
        }
    }
}

#[test]
fn seeds_change_every_model() {
    for kind in SimKind::ALL {
        let a: TimeSeries<f64> = simulate(&SimModel::new(kind, 1.0, 1)).unwrap();
        let b: TimeSeries<f64> = simulate(&SimModel::new(kind, 1.0, 1)).unwrap();
        let c: TimeSeries<f64> = simulate(&SimModel::new(kind, 1.0, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}

fn random_spikes(rng: &mut ChaCha8Rng, neurons: usize, span: f64) -> SpikeData {
    let trains = (0..neurons)
        .map(|_| {
            let k = rng.random_range(50..400);
            (0..k).map(|_| rng.random_range(0.0..span)).collect()
        })
        .collect();
    SpikeData::new(
        (0..neurons).map(|i| format!("u{i}")).collect(),
        trains,
        span,
    )
    .unwrap()
}

#[test]
fn binning_then_smoothing_keeps_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let data = random_spikes(&mut rng, 5, 20.0);
    let counts: TimeSeries<f64> = bin_psth(&data, 10.0).unwrap();
    let smoothed = smooth(&counts, 1.6).unwrap();
    for v in 0..5 {
        let before: f64 = counts.component(v).iter().sum();
        let after: f64 = smoothed.component(v).iter().sum();
        assert!(
            (after - before).abs() <= 1e-3 * before,
            "{before} vs {after}"
        );
    }
}

#[test]
fn smoothing_twice_matches_wider_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let x: Vec<f64> = (0..400).map(|_| rng.random_range(0.0..5.0)).collect();
    let ts = TimeSeries::from_components(vec![x]).unwrap();
    let sd = 2.0;
    let twice = smooth(&smooth(&ts, sd).unwrap(), sd).unwrap();
    let once = smooth(&ts, sd * 2f64.sqrt()).unwrap();
    for t in 50..350 {
        let (a, b) = (twice.component(0)[t], once.component(0)[t]);
        assert!((a - b).abs() <= 0.02 * b.abs(), "t={t}: {a} vs {b}");
    }
}

#[test]
fn neuron_order_does_not_matter() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let data = random_spikes(&mut rng, 4, 10.0);
    let order = [2, 0, 3, 1];
    let shuffled = SpikeData::new(
        order.iter().map(|&i| data.ids()[i].clone()).collect(),
        order.iter().map(|&i| data.train(i).to_vec()).collect(),
        data.span(),
    )
    .unwrap();
    let a: TimeSeries<f64> = smooth(&bin_psth(&data, 10.0).unwrap(), 1.6).unwrap();
    let b: TimeSeries<f64> = smooth(&bin_psth(&shuffled, 10.0).unwrap(), 1.6).unwrap();
    for (k, &i) in order.iter().enumerate() {
        assert_eq!(a.component(i), b.component(k));
    }
}

#[test]
fn parents_separate_non_adjacent_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(79);
    for _ in 0..200 {
        let m = rng.random_range(2..9);
        let (dag, nodes) = embedded_dag(&mut rng, m, 0.35);
        let ds = DSeparation::new(&dag);
        for (&a, &b) in nodes.iter().tuple_combinations() {
            if dag.has_edge(a, b) || dag.has_edge(b, a) {
                continue;
            }
            let given: Vec<Node> = dag
                .parents(a)
                .into_iter()
                .chain(dag.parents(b))
                .unique()
                .collect();
            assert!(ds.query(a, b, &given).unwrap(), "{a} {b} given {given:?}");
        }
    }
}

#[test]
fn roll_depends_only_on_target_parents() {
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    for _ in 0..100 {
        let (p, tau) = (3, 2);
        let base =
            UnrolledDag::<f64>::from_lags(p, tau, &random_lags(&mut rng, p, tau, 0.3)).unwrap();
        let mut trimmed = UnrolledDag::<f64>::empty(p, tau);
        for (a, b) in target_edges(&base) {
            trimmed.add_edge(a, b).unwrap();
        }
        assert_eq!(roll(&base), roll(&trimmed));
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[test]
fn hs_statistic_separates_dependent_and_independent_as_n_grows() {
    let sizes = [100, 200, 400, 800];
    let cfg = CiTestConfig::hilbert_schmidt(0.05);
    let mut dependent = Vec::new();
    let mut independent = Vec::new();
    for &n in &sizes {
        let eps = cfg.epsilon(n);
        let (mut dep, mut ind) = (Vec::new(), Vec::new());
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * n as u64 + seed);
            let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
            let z: Vec<f64> = (0..n).map(|_| normal()).collect();
            let x: Vec<f64> = z.iter().map(|&z| z + 0.5 * normal()).collect();
            let y_dep: Vec<f64> = x.iter().map(|&x| x.sin() + 0.3 * normal()).collect();
            let y_ind: Vec<f64> = z.iter().map(|&z| z + 0.5 * normal()).collect();
            let zm = Matrix::from_columns(&[&z]).unwrap();
            dep.push(hs_statistic(&x, &y_dep, &zm, eps, Bandwidth::MedianHeuristic).unwrap());
            ind.push(hs_statistic(&x, &y_ind, &zm, eps, Bandwidth::MedianHeuristic).unwrap());
        }
        dependent.push(median(dep));
        independent.push(median(ind));
    }
    assert!(
        independent.windows(2).all(|w| w[1] < w[0]),
        "independent medians {independent:?}"
    );
    let floor = dependent.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(
        floor > 2.0 * independent[0],
        "dependent {dependent:?} vs independent {independent:?}"
    );
}
