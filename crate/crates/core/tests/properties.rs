use nalgebra::DVector;
use proptest::prelude::*;

use stochsync::analysis::SyncCertificate;
use stochsync::graph::Topology;
use stochsync::models::{diffusion_eval, drift_eval, estimate_constants, DomainBox};
use stochsync::{
    analytic_constants, build_topology, integrate, laplacian, spectral_info, sync_error, ConstantsProvenance, Graph,
    ModelConstants, NodeModel, SimConfig,
};

fn arb_graph() -> impl Strategy<Value = Graph> {
    (2usize..10)
        .prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
            let len = pairs.len();
            (Just(n), Just(pairs), proptest::collection::vec(any::<bool>(), len))
        })
        .prop_map(|(n, pairs, keep)| {
            Graph::new(n, pairs.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p)).unwrap()
        })
}

fn arb_constants() -> impl Strategy<Value = ModelConstants> {
    (-10.0..10.0f64, 0.0..10.0f64, 0.0..10.0f64).prop_map(|(k_f, k_g, k_g_bar)| ModelConstants {
        k_f,
        k_g,
        k_g_bar,
        provenance: ConstantsProvenance::Analytic,
    })
}

proptest! {
    #[test]
    fn laplacian_is_symmetric_with_zero_row_sums(g in arb_graph()) {
        let l = laplacian(&g);
        prop_assert_eq!(&l, &l.transpose());
        for i in 0..g.node_count() {
            prop_assert_eq!(l.row(i).sum(), 0.0);
            prop_assert_eq!(l[(i, i)], g.degree(i) as f64);
        }
    }

    #[test]
    fn laplacian_spectrum_is_psd_and_sums_to_trace(g in arb_graph()) {
        let info = spectral_info(&g).unwrap();
        let tol = info.zero_tolerance();
        prop_assert!(info.eigenvalues.iter().all(|&v| v >= -tol));
        prop_assert!(info.eigenvalues[0].abs() <= tol);
        let trace = 2.0 * g.edge_count() as f64;
        prop_assert!((info.eigenvalues.iter().sum::<f64>() - trace).abs() <= 1e-9 * trace.max(1.0));
    }

    #[test]
    fn rayleigh_quotient_bounds_lambda2(g in arb_graph(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let n = g.node_count();
        let l = laplacian(&g);
        let lambda2 = spectral_info(&g).unwrap().lambda2;
        for _ in 0..100 {
            let mut v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let mean = v.mean();
            v.add_scalar_mut(-mean);
            let vv = v.dot(&v);
            if vv > 0.0 {
                prop_assert!(v.dot(&(&l * &v)) / vv >= lambda2 - 1e-9);
            }
        }
    }

    #[test]
    fn adding_an_edge_never_lowers_lambda2(g in arb_graph(), a in 0usize..10, b in 0usize..10) {
        let n = g.node_count();
        let (a, b) = (a % n, b % n);
        prop_assume!(a != b && !g.has_edge(a, b));
        let before = spectral_info(&g).unwrap().lambda2;
        let after = spectral_info(&g.with_edge(a, b).unwrap()).unwrap().lambda2;
        prop_assert!(after >= before - 1e-9);
    }

    #[test]
    fn lambda2_detects_connectivity(g in arb_graph()) {
        let info = spectral_info(&g).unwrap();
        prop_assert_eq!(info.connected, is_connected(&g));
    }

    #[test]
    fn certificate_algebra(k in arb_constants(), lambda2 in 0.0..10.0f64, sigma in 0.0..5.0f64) {
        let c = SyncCertificate::from_parts(lambda2, sigma, &k);
        prop_assert_eq!(c.satisfied, c.c3 > 2.0 * c.c2);
        prop_assert_eq!(c.threshold, k.k_f + (k.k_g * k.k_g - 2.0 * k.k_g_bar * k.k_g_bar) / 2.0);
        match c.guaranteed_rate {
            Some(rate) => prop_assert!(c.satisfied && rate > 0.0 && (rate - (c.c3 - 2.0 * c.c2) / 2.0).abs() < 1e-12),
            None => prop_assert!(!c.satisfied),
        }
    }

    #[test]
    fn bistable_drift_satisfies_quad(r in 0.0..10.0f64, x in -20.0..20.0f64, y in -20.0..20.0f64) {
        let m = NodeModel::bistable(r, 1.0).unwrap();
        let k = analytic_constants(&m).unwrap();
        let df = drift_eval(&m, 0.0, &[x]).unwrap()[0] - drift_eval(&m, 0.0, &[y]).unwrap()[0];
        let lhs = (x - y) * df;
        prop_assert!(lhs <= k.k_f * (x - y).powi(2) + 1e-9 * (1.0 + x.abs() + y.abs()).powi(4));
    }

    #[test]
    fn bistable_diffusion_is_linear(sigma_n in -10.0..10.0f64, x in -20.0..20.0f64, y in -20.0..20.0f64, a in -3.0..3.0f64) {
        let m = NodeModel::bistable(5.0, sigma_n).unwrap();
        let g = |v: f64| diffusion_eval(&m, 0.0, &[v]).unwrap()[0];
        prop_assert!((g(a * x + y) - (a * g(x) + g(y))).abs() <= 1e-9 * (1.0 + (a * x).abs() + y.abs()) * sigma_n.abs().max(1.0));
        let k = analytic_constants(&m).unwrap();
        prop_assert!((g(x) - g(y)).abs() <= k.k_g * (x - y).abs() + 1e-9);
        prop_assert!((g(x) - g(y)).abs() >= k.k_g_bar * (x - y).abs() - 1e-9);
        prop_assert!(k.k_g_bar <= k.k_g);
    }

    #[test]
    fn linear_constants_are_ordered(a in -5.0..5.0f64, b in -5.0..5.0f64, m1 in -3.0..3.0f64, m2 in -3.0..3.0f64) {
        let drift = nalgebra::DMatrix::from_row_slice(2, 2, &[a, 1.0, 0.0, b]);
        let diffusion = nalgebra::DMatrix::from_row_slice(2, 2, &[m1, 0.0, 0.0, m2]);
        let m = NodeModel::linear(drift, diffusion).unwrap();
        let k = analytic_constants(&m).unwrap();
        prop_assert!(k.k_g_bar <= k.k_g);
        prop_assert!(k.k_f >= a.max(b) - 1e-12);
    }

    #[test]
    fn coupling_annihilates_the_mean(g in arb_graph(), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let l = laplacian(&g);
        let x = DVector::from_fn(g.node_count(), |_, _| rng.random_range(-100.0..100.0));
        let lx = &l * &x;
        prop_assert!(lx.sum().abs() <= 1e-12 * x.norm() * g.node_count() as f64);
    }
}

fn is_connected(g: &Graph) -> bool {
    let adj = g.adjacency_lists();
    let mut seen = vec![false; g.node_count()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[test]
fn quad_holds_on_sampled_pairs() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let m = NodeModel::bistable(5.0, 2.0).unwrap();
    let k = analytic_constants(&m).unwrap();
    for _ in 0..100_000 {
        let x: f64 = rng.random_range(-10.0..10.0);
        let y: f64 = rng.random_range(-10.0..10.0);
        let df = drift_eval(&m, 0.0, &[x]).unwrap()[0] - drift_eval(&m, 0.0, &[y]).unwrap()[0];
        assert!((x - y) * df <= k.k_f * (x - y).powi(2) + 1e-9);
    }
}

#[test]
fn sampled_constants_converge_to_analytic() {
    let close = |x: f64, y: f64| (x - y).abs() <= 0.05 * y.abs().max(1.0);
    for m in [
        NodeModel::bistable(5.0, 2.0).unwrap(),
        NodeModel::bistable(0.5, -1.5).unwrap(),
        NodeModel::linear_scalar(-1.0, 0.3).unwrap(),
        NodeModel::integrator(2).unwrap(),
    ] {
        let a = analytic_constants(&m).unwrap();
        let b = DomainBox::cube(m.dim(), -10.0, 10.0).unwrap();
        let s = estimate_constants(&m, &b, 100_000, 17).unwrap();
        assert_eq!(s.provenance, ConstantsProvenance::Sampled);
        assert!(close(s.k_f, a.k_f), "{}: k_f {} vs {}", m.label(), s.k_f, a.k_f);
        assert!(close(s.k_g, a.k_g), "{}: k_g {} vs {}", m.label(), s.k_g, a.k_g);
        assert!(close(s.k_g_bar, a.k_g_bar), "{}: k_g_bar {} vs {}", m.label(), s.k_g_bar, a.k_g_bar);
    }
}

#[test]
fn sync_error_is_mean_zero_along_trajectories() {
    for (topology, n) in [(Topology::Chain, 5), (Topology::Ring, 6), (Topology::Star, 4)] {
        let g = build_topology(&topology, n).unwrap();
        let m = NodeModel::bistable(5.0, 3.0).unwrap();
        let x0: Vec<f64> = (0..n).map(|i| (i as f64 - 2.0) * 2.5).collect();
        let cfg = SimConfig { dt: 1e-3, horizon: 3.0, seed: n as u64, ..SimConfig::default() };
        let traj = integrate(&g, &m, 1.0, &x0, &cfg).unwrap();
        let e = sync_error(&traj);
        let max_x = traj.states.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        for k in 0..traj.len() {
            assert!(e.row(k).iter().sum::<f64>().abs() <= 1e-10 * max_x);
        }
    }
}

#[test]
fn identical_start_stays_synchronized_under_common_noise() {
    let g = build_topology(&Topology::Chain, 5).unwrap();
    let m = NodeModel::bistable(5.0, 4.0).unwrap();
    let cfg = SimConfig { dt: 1e-3, horizon: 5.0, seed: 9, ..SimConfig::default() };
    let traj = integrate(&g, &m, 1.0, &[1.3; 5], &cfg).unwrap();
    for row in traj.rows() {
        assert!(row.iter().all(|&v| v == row[0]));
    }
    // the mean of identical values can differ from them by rounding
    let e = sync_error(&traj);
    for (k, &norm) in e.norms.iter().enumerate() {
        assert!(norm <= 1e-15 * traj.state(k)[0].abs().max(1.0));
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let g = build_topology(&Topology::Ring, 4).unwrap();
    let m = NodeModel::ddm(0.5, 0.3).unwrap();
    let cfg = SimConfig { dt: 1e-3, horizon: 2.0, seed: 123, record_stride: 7, ..SimConfig::default() };
    let csv = || {
        let mut buf = Vec::new();
        integrate(&g, &m, 0.8, &[0.0, 1.0, -1.0, 2.0], &cfg).unwrap().write_csv(&mut buf).unwrap();
        buf
    };
    assert_eq!(csv(), csv());
}
