use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rdpg::alignment::{orthogonal_procrustes, procrustes_distance};
use rdpg::experiments::b_epsilon;
use rdpg::graph::*;
use rdpg::spectral::*;

fn sbm_graph(n: usize, seed: u64) -> (LatentPositions, Graph) {
    let tau = sample_assignments(&[0.4, 0.6], n, seed).unwrap();
    let spec = BlockModelSpec::with_probabilities(b_epsilon(0.0), vec![0.4, 0.6]).unwrap();
    let x = sbm_latent_positions(&spec, &tau).unwrap();
    let g = sample_rdpg(&x, seed + 1).unwrap();
    (x, g)
}

#[test]
fn complete_graph_k4() {
    let (g, _) = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
    let e = ase(&g, 1).unwrap();
    for i in 0..4 {
        assert!((e.positions()[(i, 0)] - 3f64.sqrt() / 2.0).abs() < 1e-8);
    }
    assert!((e.eigenvalues()[0] - 3.0).abs() < 1e-10);
}

#[test]
fn full_rank_embedding_reconstructs_psd_matrix() {
    let f = DMatrix::from_fn(6, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 / 5.0 + if i == j { 1.0 } else { 0.0 });
    let m = &f * f.transpose();
    let e = ase_matrix(&m, 6).unwrap();
    let x = e.positions();
    assert!((x * x.transpose() - &m).abs().max() < 1e-8);
}

#[test]
fn probability_matrix_is_recovered() {
    let (x, _) = sbm_graph(300, 3);
    let e = ase_matrix(&x.gram(), 2).unwrap();
    assert!(procrustes_distance(e.positions(), x.matrix()).unwrap() < 1e-6);
}

#[test]
fn dense_and_lanczos_agree() {
    for n in [150, 400, 900] {
        let (_, g) = sbm_graph(n, n as u64);
        let dense = ase_with(&g, 2, &EmbedOptions { solver: Solver::Dense, ..Default::default() }).unwrap();
        let lanczos = ase_with(&g, 2, &EmbedOptions { solver: Solver::Lanczos, ..Default::default() }).unwrap();
        assert!((dense.positions() - lanczos.positions()).abs().max() < 1e-6, "n = {n}");
        for (a, b) in dense.eigenvalues().iter().zip(lanczos.eigenvalues()) {
            assert!((a - b).abs() < 1e-6 * a.abs());
        }
        let (da, dl) = (dense.diagnostics(), lanczos.diagnostics());
        assert!((da.gamma2 - dl.gamma2).abs() < 1e-6);
    }
}

#[test]
fn embedding_is_permutation_equivariant() {
    let (_, g) = sbm_graph(200, 11);
    let perm: Vec<usize> = (0..200).map(|v| (v * 71 + 5) % 200).collect();
    let pg = g.permute(&perm).unwrap();
    let e = ase(&g, 2).unwrap();
    let f = ase(&pg, 2).unwrap();
    // perm maps old vertex v to perm[v]
    let mut aligned = DMatrix::zeros(200, 2);
    for (v, &pv) in perm.iter().enumerate() {
        aligned.set_row(v, &f.positions().row(pv));
    }
    for c in 0..2 {
        let a = e.positions().column(c);
        let b = aligned.column(c);
        let err = (a - b).abs().max().min((a + b).abs().max());
        assert!(err < 1e-8, "column {c}: {err}");
    }
}

#[test]
fn block_model_diagnostics_match_oracle() {
    let tau = contiguous_assignments(&[50, 50]);
    let spec = BlockModelSpec::new(b_epsilon(0.0), Membership::Fixed(tau.clone())).unwrap();
    let p = sbm_latent_positions(&spec, &tau).unwrap().probability_matrix();
    let diag = diagnostics(&p, 2).unwrap();
    let mut sigma: Vec<f64> = SymmetricEigen::new(p.clone()).eigenvalues.iter().map(|v| v.abs()).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let delta = p.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
    let gamma1 = ((sigma[0] - sigma[1]).min(sigma[1] - sigma[2])) / delta;
    let gamma2 = (sigma[1] - sigma[2]) / delta;
    assert!((diag.delta - delta).abs() < 1e-10);
    assert!((diag.gamma1 - gamma1).abs() < 1e-10);
    assert!((diag.gamma2 - gamma2).abs() < 1e-10);
}

#[test]
fn noise_constant_matches_trace_formula() {
    let (x, _) = sbm_graph(120, 21);
    let p = x.probability_matrix();
    let n = p.nrows();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| p.row(i).iter().map(|q| q * (1.0 - q)).sum()));
    let eig = SymmetricEigen::new(x.gram());
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let u = DMatrix::from_fn(n, 2, |i, c| eig.eigenvectors[(i, idx[c])]);
    let s_inv_half = DMatrix::from_fn(2, 2, |a, b| if a == b { eig.eigenvalues[idx[a]].powf(-0.5) } else { 0.0 });
    let trace = (&s_inv_half * u.transpose() * &d * &u * &s_inv_half).trace();
    assert!((noise_constant(&x).unwrap() - trace.sqrt()).abs() < 1e-9);
}

#[test]
fn procrustes_recovers_known_rotation() {
    let x = DMatrix::from_fn(20, 3, |i, j| ((i * 5 + j * 11) % 13) as f64 - 6.0);
    let q = DMatrix::from_fn(3, 3, |i, j| (i as f64 + 2.0 * j as f64 + 1.0).sin()).qr().q();
    let sol = orthogonal_procrustes(&x, &(&x * &q)).unwrap();
    assert!(sol.distance < 1e-9);
    assert!((sol.w - q).abs().max() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn procrustes_minimizer_is_orthogonal(v in prop::collection::vec(-1.0f64..1.0, 40)) {
        let x = DMatrix::from_vec(10, 2, v[..20].to_vec());
        let y = DMatrix::from_vec(10, 2, v[20..].to_vec());
        let sol = orthogonal_procrustes(&x, &y).unwrap();
        prop_assert!((sol.w.transpose() * &sol.w - DMatrix::identity(2, 2)).abs().max() < 1e-10);
        prop_assert!(sol.distance <= (&x - &y).norm() + 1e-12);
        prop_assert!(sol.distance <= (-&x - &y).norm() + 1e-12);
    }
}
