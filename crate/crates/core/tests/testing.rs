use nalgebra::DMatrix;
use proptest::prelude::*;
use rdpg::experiments::b_epsilon;
use rdpg::graph::*;
use rdpg::rng::derive_seed;
use rdpg::spectral::{ase, Embedding, SpectralDiagnostics};
use rdpg::testing::*;

fn sbm_pair(n: usize, eps: f64, seed: u64) -> (Graph, Graph) {
    let tau = sample_assignments(&[0.4, 0.6], n, derive_seed(seed, 0)).unwrap();
    let pos = |b| {
        let spec = BlockModelSpec::new(b, Membership::Fixed(tau.clone())).unwrap();
        sbm_latent_positions(&spec, &tau).unwrap()
    };
    let ga = sample_rdpg(&pos(b_epsilon(0.0)), derive_seed(seed, 1)).unwrap();
    let gb = sample_rdpg(&pos(b_epsilon(eps)), derive_seed(seed, 2)).unwrap();
    (ga, gb)
}

fn from_positions(x: DMatrix<f64>) -> Embedding {
    let (n, d) = x.shape();
    let diag = SpectralDiagnostics { delta: 1.0, gamma1: 0.4, gamma2: 0.4, sigma: vec![0.0; d + 1], n, d };
    Embedding::from_parts(LatentPositions::new(x), diag)
}

#[test]
fn permutation_equivariance() {
    let (ga, gb) = sbm_pair(150, 0.1, 4);
    let perm: Vec<usize> = (0..150).map(|v| (v * 37 + 11) % 150).collect();
    let (pa, pb) = (ga.permute(&perm).unwrap(), gb.permute(&perm).unwrap());
    let (ea, eb) = (ase(&ga, 2).unwrap(), ase(&gb, 2).unwrap());
    let (fa, fb) = (ase(&pa, 2).unwrap(), ase(&pb, 2).unwrap());
    for kind in TestKind::ALL {
        let s = statistic_with(kind, &ea, &eb, ErrorScale::Eigengap).unwrap();
        let t = statistic_with(kind, &fa, &fb, ErrorScale::Eigengap).unwrap();
        assert!((s.value - t.value).abs() < 1e-8, "{kind:?}: {} vs {}", s.value, t.value);
    }
    let f1 = baseline_frobenius(&ga, &gb).unwrap();
    let f2 = baseline_frobenius(&pa, &pb).unwrap();
    assert!((f1 - f2).abs() < 1e-8);
}

#[test]
fn identical_graphs() {
    let (ga, _) = sbm_pair(120, 0.0, 8);
    let cfg = TestConfig { method: Method::Bootstrap, bs: 20, seed: 3, ..TestConfig::default() };
    let r = two_sample_test(&ga, &ga, TestKind::Identity, 2, &cfg).unwrap();
    assert!(r.numerator < 1e-9);
    assert!(r.p_value.unwrap() > 0.9);
    assert_eq!(r.rejected, Some(false));

    let cfg = TestConfig::default();
    let r = two_sample_test(&ga, &ga, TestKind::Identity, 2, &cfg).unwrap();
    assert!(r.statistic < 1e-9);
    assert!(r.p_value.is_none());
    assert_eq!(r.rejected, Some(false));
    assert_eq!(r.statistic, r.numerator / r.denominator);
}

#[test]
fn bootstrap_extremes() {
    let (ga, _) = sbm_pair(100, 0.0, 1);
    let x = ase(&ga, 2).unwrap();
    let spec = BootstrapSpec::new(TestKind::Identity, 2, 16);
    let zero = bootstrap_pvalue(x.xhat(), 0.0, &spec, 5).unwrap();
    assert_eq!(zero.p_value, 1.0);
    let inf = bootstrap_pvalue(x.xhat(), f64::INFINITY, &spec, 5).unwrap();
    assert_eq!(inf.p_value, 0.5 / 16.0);
    assert_eq!(zero.replicates, inf.replicates);
}

#[test]
fn bootstrap_is_thread_count_independent() {
    let (ga, _) = sbm_pair(120, 0.0, 2);
    let x = ase(&ga, 2).unwrap();
    let spec = BootstrapSpec::new(TestKind::Scaling, 2, 12);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| bootstrap_pvalue(x.xhat(), 0.1, &spec, 77).unwrap().replicates)
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn sides_use_independent_seeds() {
    let (ga, gb) = sbm_pair(100, 0.0, 6);
    let cfg = TestConfig { method: Method::Bootstrap, bs: 10, seed: 1, keep_replicates: true, ..TestConfig::default() };
    let r = two_sample_test(&ga, &gb, TestKind::Identity, 2, &cfg).unwrap();
    let [a, b] = r.replicates.unwrap();
    assert_eq!(a.len(), 10);
    assert_ne!(a, b);
    let [pa, pb] = r.side_p_values.unwrap();
    assert_eq!(r.p_value, Some(pa.max(pb)));
}

#[test]
fn size_mismatch() {
    let (ga, _) = sbm_pair(100, 0.0, 6);
    let (gb, _) = sbm_pair(90, 0.0, 6);
    let err = two_sample_test(&ga, &gb, TestKind::Identity, 2, &TestConfig::default()).unwrap_err();
    assert!(matches!(err, rdpg::error::RdpgError::SizeMismatch(100, 90)));
    assert!(baseline_frobenius(&ga, &gb).is_err());
}

#[test]
fn subgraph_rules() {
    let (ga, gb) = sbm_pair(60, 0.0, 3);
    let cfg = TestConfig { method: Method::Subgraph, blocks: 16, bs: 5, ..TestConfig::default() };
    let err = two_sample_test(&ga, &gb, TestKind::Identity, 2, &cfg).unwrap_err();
    assert!(matches!(err, rdpg::error::RdpgError::BlockTooSmall { size: 3, d: 2 }));
    let cfg = TestConfig { blocks: 2, ..cfg };
    assert!(two_sample_test(&ga, &gb, TestKind::Scaling, 2, &cfg).is_err());
    let r = two_sample_test(&ga, &gb, TestKind::Identity, 2, &cfg).unwrap();
    assert_eq!(r.r, Some(2));
    assert_eq!(r.method, Method::Subgraph);
    let again = two_sample_test(&ga, &gb, TestKind::Identity, 2, &cfg).unwrap();
    assert_eq!(r.p_value, again.p_value);
}

#[test]
fn fisher_statistic_is_chi_square_under_uniform_p() {
    use rand::Rng;
    let mut rng = rdpg::rng::rng_from_seed(2024);
    let r = 6;
    let mut tails: Vec<f64> = (0..10_000)
        .map(|_| {
            let p: Vec<f64> = (0..r).map(|_| 1.0 - rng.random::<f64>()).collect();
            fisher_combine(&p).1
        })
        .collect();
    // the combined p-value is the χ² survival function at S, uniform under the null
    tails.sort_by(f64::total_cmp);
    let m = tails.len() as f64;
    let ks = tails
        .iter()
        .enumerate()
        .map(|(i, &u)| (u - i as f64 / m).abs().max(((i + 1) as f64 / m - u).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 0.05, "KS distance {ks}");
}

#[test]
fn frobenius_baseline_binomial_mean() {
    let n = 200;
    let pairs = (n * (n - 1) / 2) as f64;
    let reps = 20;
    for p in [0.1, 0.5, 0.9] {
        let xa = LatentPositions::new(DMatrix::from_element(n, 1, f64::sqrt(p)));
        let xb = LatentPositions::new(DMatrix::from_element(n, 1, f64::sqrt(0.5)));
        let mut sum = 0.0;
        for r in 0..reps {
            let a = sample_rdpg(&xa, derive_seed(p.to_bits(), 2 * r)).unwrap();
            let b = sample_rdpg(&xb, derive_seed(p.to_bits(), 2 * r + 1)).unwrap();
            sum += baseline_frobenius(&a, &b).unwrap().powi(2);
        }
        // each pair differs with probability 1/2 whatever p is
        let mean = sum / reps as f64;
        let se = 2.0 * (pairs * 0.25 / reps as f64).sqrt();
        assert!((mean - pairs).abs() < 3.0 * se, "p = {p}: {mean} vs {pairs}");
    }
}

fn positions(n: usize, d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(0.1f64..1.0, n * d).prop_map(move |v| DMatrix::from_vec(n, d, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scale_invariance(x in positions(12, 2), c in 0.05f64..20.0) {
        let a = from_positions(x.clone());
        let b = from_positions(x * c);
        let s = statistic_scaling(&a, &b).unwrap();
        prop_assert!(s.numerator < 1e-10);
    }

    #[test]
    fn diagonal_invariance(x in positions(12, 3), d in prop::collection::vec(0.05f64..20.0, 12)) {
        let mut y = x.clone();
        for (i, mut row) in y.row_iter_mut().enumerate() {
            row *= d[i];
        }
        let s = statistic_diagonal(&from_positions(x), &from_positions(y)).unwrap();
        prop_assert!(s.numerator < 1e-10);
    }

    #[test]
    fn statistic_is_ratio(x in positions(10, 2), y in positions(10, 2)) {
        for kind in TestKind::ALL {
            let s = statistic_with(kind, &from_positions(x.clone()), &from_positions(y.clone()), ErrorScale::Eigengap).unwrap();
            prop_assert_eq!(s.value, s.numerator / s.denominator);
        }
    }

    #[test]
    fn chi2_tail_is_monotone(x in 0.0f64..200.0, k in 1u32..40) {
        let df = 2 * k;
        let p = chi2_upper_tail(x, df);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!(chi2_upper_tail(x + 0.5, df) <= p);
        prop_assert!(chi2_upper_tail(x, df + 2) >= p);
    }
}

#[test]
fn ase_rejects_bad_dimensions() {
    let (ga, _) = sbm_pair(50, 0.0, 9);
    assert!(matches!(ase(&ga, 0), Err(rdpg::error::RdpgError::ZeroDimension)));
    assert!(matches!(ase(&ga, 51), Err(rdpg::error::RdpgError::DimensionTooLarge { .. })));
    assert!(matches!(ase(&Graph::empty(5), 1), Err(rdpg::error::RdpgError::EmptyGraph)));
}
