use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use qwsearch::analysis::{extract_metrics, fit_scaling, noiseless_optimal_time, GridSpec};
use qwsearch::ensemble::{noiseless_trace, run_ensemble, EnsembleConfig};
use qwsearch::graph::{Graph, TargetKind};
use qwsearch::hamiltonian::{noisy_hamiltonian_from_signs, SearchParameters};
use qwsearch::propagator::TimeGrid;
use qwsearch::rtn::NoiseRealization;

/// A spanning path over a permutation of the nodes plus extra random pairs.
fn connected_graph() -> impl Strategy<Value = Graph> {
    (2usize..12)
        .prop_flat_map(|n| {
            let order = Just((0..n).collect::<Vec<_>>()).prop_shuffle();
            let extra = prop::collection::vec((0..n, 0..n), 0..2 * n);
            (Just(n), order, extra)
        })
        .prop_map(|(n, order, extra)| {
            let mut edges: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0].min(w[1]), w[0].max(w[1]))).collect();
            for (i, j) in extra {
                let pair = (i.min(j), i.max(j));
                if i != j && !edges.contains(&pair) {
                    edges.push(pair);
                }
            }
            Graph::from_edges(n, &edges, order[0]).unwrap()
        })
}

fn column_sums(m: &DMatrix<f64>) -> Vec<f64> {
    m.column_iter().map(|c| c.sum()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacians_are_symmetric_psd_and_conserving(g in connected_graph()) {
        let l = g.laplacian();
        prop_assert_eq!(&l, &l.transpose());
        prop_assert!(column_sums(&l).iter().all(|&s| s == 0.0));
        let ones = DVector::from_element(g.order(), 1.0);
        prop_assert!((&l * ones).iter().all(|&x| x == 0.0));
        let smallest = SymmetricEigen::new(l).eigenvalues.min();
        prop_assert!(smallest > -1e-12, "smallest eigenvalue {}", smallest);
    }

    #[test]
    fn noisy_hamiltonians_stay_symmetric_and_conserving(
        g in connected_graph(),
        nu in 0.0f64..=1.0,
        gamma in 0.01f64..3.0,
        bits in prop::collection::vec(any::<bool>(), 66),
    ) {
        let signs: Vec<i8> = bits[..g.link_count()].iter().map(|&b| if b { 1 } else { -1 }).collect();
        let params = SearchParameters::new(gamma, nu, g.target()).unwrap();
        let h = noisy_hamiltonian_from_signs(&g, &params, &signs);
        prop_assert_eq!(&h, &h.transpose());
        let mut walk = h.clone();
        walk[(g.target(), g.target())] += 1.0;
        walk /= gamma;
        prop_assert!(column_sums(&walk).iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn family_builders_match_explicit_edge_lists(n in 3usize..30) {
        let complete: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (j, i))).collect();
        let explicit = Graph::from_edges(n, &complete, 0).unwrap();
        prop_assert_eq!(Graph::complete(n).unwrap().laplacian(), explicit.laplacian());

        let star: Vec<_> = (1..n).map(|j| (j, 0)).collect();
        for (kind, target) in [(TargetKind::Central, 0), (TargetKind::External, 1)] {
            let built = Graph::star(n, kind).unwrap();
            let explicit = Graph::from_edges(n, &star, target).unwrap();
            prop_assert_eq!(built.laplacian(), explicit.laplacian());
            prop_assert_eq!(built.target(), explicit.target());
        }
    }
}

#[test]
fn initial_signs_are_balanced() {
    let g = Graph::complete(40).unwrap();
    let mut sum = 0i64;
    let mut count = 0usize;
    for seed in 0..50 {
        let r = NoiseRealization::sample(&g, 1.0, 1.0, seed).unwrap();
        sum += r.initial_signs().iter().map(|&s| i64::from(s)).sum::<i64>();
        count += g.link_count();
    }
    let mean = sum as f64 / count as f64;
    assert!(
        mean.abs() < 3.0 / (count as f64).sqrt(),
        "mean sign {mean} over {count}"
    );
}

#[test]
fn success_probability_is_stable_under_grid_refinement() {
    for g in [
        Graph::complete(10).unwrap(),
        Graph::star(16, TargetKind::External).unwrap(),
    ] {
        let params = SearchParameters::optimal(&g, 0.0).unwrap();
        let p_succ = |samples| {
            let grid = GridSpec {
                horizon_factor: 2.0,
                samples,
            }
            .grid(g.order())
            .unwrap();
            extract_metrics(&noiseless_trace(&g, &params, &grid).unwrap())
                .unwrap()
                .p_succ
        };
        let (coarse, fine) = (p_succ(512), p_succ(1024));
        assert!((coarse - fine).abs() < 1e-4, "{coarse} vs {fine}");
    }
}

#[test]
fn ensemble_error_shrinks_as_inverse_root_of_trajectories() {
    let g = Graph::star(6, TargetKind::Central).unwrap();
    let params = SearchParameters::optimal(&g, 0.8).unwrap();
    let grid = TimeGrid::new(noiseless_optimal_time(6), 16).unwrap();
    let stderr = |m| {
        let ens = run_ensemble(&EnsembleConfig::new(g.clone(), params, 0.05, m, 3, grid)).unwrap();
        ens.stderr()[15]
    };
    let s = [stderr(1000), stderr(4000), stderr(16000)];
    for w in s.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 2.0).abs() < 0.2, "stderr ratios {s:?}");
    }
}

#[test]
fn fast_weak_noise_tracks_the_noiseless_trace() {
    let g = Graph::complete(10).unwrap();
    let params = SearchParameters::optimal(&g, 0.5).unwrap();
    let grid = GridSpec {
        horizon_factor: 2.0,
        samples: 256,
    }
    .grid(10)
    .unwrap();
    let reference = noiseless_trace(&g, &params, &grid).unwrap();
    let ens = run_ensemble(&EnsembleConfig::new(g, params, 10.0, 200, 5, grid)).unwrap();
    let worst = ens
        .mean()
        .iter()
        .zip(&reference.p)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.05, "max deviation {worst}");
}

#[test]
fn star_external_scaling_laws() {
    let mut times = Vec::new();
    let mut misses = Vec::new();
    for n in [16, 32, 64, 128, 256] {
        let g = Graph::star(n, TargetKind::External).unwrap();
        let params = SearchParameters::optimal(&g, 0.0).unwrap();
        let grid = GridSpec {
            horizon_factor: 2.0,
            samples: 2048,
        }
        .grid(n)
        .unwrap();
        let m = extract_metrics(&noiseless_trace(&g, &params, &grid).unwrap()).unwrap();
        times.push((n as f64, m.t_max));
        misses.push((n as f64, 1.0 - m.p_succ));
    }
    let t_fit = fit_scaling(&times).unwrap();
    assert!(
        (t_fit.exponent - 0.5).abs() <= 0.02,
        "t_max exponent {}",
        t_fit.exponent
    );
    let p_fit = fit_scaling(&misses).unwrap();
    assert!(
        (p_fit.exponent + 2.0).abs() <= 0.1,
        "1 - p_succ exponent {}",
        p_fit.exponent
    );
}
