//! Randomized invariants across modules.

use graph_ttt::analysis::{linear_cka, roc_auc_binary};
use graph_ttt::augment::{adaptive_view, drop_probabilities, make_view, ViewKind, ViewSpec};
use graph_ttt::graphdata::{
    median_node_count, normalize_adjacency, ood_split, parse_tudataset, random_split, write_tudataset,
    AdjacencyScheme, Graph,
};
use graph_ttt::models::{classify, cross_entropy, gnn_forward, init_params, GnnConfig, Head};
use graph_ttt::seed;
use graph_ttt::ssl::{adaptation_constraint, ssl_loss, stats_of_rows, SslSeeds, SslWeights};
use graph_ttt::synth::{synth_dataset, SynthSpec};
use graph_ttt::tensor::{DenseMatrix, Tape};
use graph_ttt::theory::{ce_gradient, jacobi_eigenvalues, softmax_ce_hessian};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn random_graph(seed: u64, n: usize, f: usize, p: f64) -> Graph {
    let mut rng = seed::rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let x = DenseMatrix::from_fn(n, f, |_, _| rng.random_range(-1.0..1.0));
    Graph::new(n, edges, x, Some(0)).unwrap()
}

fn random_matrix(seed: u64, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    let mut rng = seed::rng(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Q from Gram-Schmidt on a random square matrix.
fn random_orthogonal(seed: u64, d: usize) -> DenseMatrix {
    let a = random_matrix(seed, d, d, 1.0);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..d {
        let mut v: Vec<f64> = (0..d).map(|i| a.get(i, j)).collect();
        for q in &cols {
            let dot: f64 = v.iter().zip(q).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(q).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        cols.push(v);
    }
    DenseMatrix::from_fn(d, d, |i, j| cols[j][i])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn sym_selfloop_is_symmetric_with_unit_spectral_radius(seed in any::<u64>(), n in 1usize..12, p in 0.0f64..1.0) {
        let g = random_graph(seed, n, 1, p);
        let a = normalize_adjacency(&g, AdjacencyScheme::SymSelfloop);
        prop_assert!(a.is_symmetric(1e-12));
        let eig = jacobi_eigenvalues(&a, 1e-12).unwrap();
        let radius = eig.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        prop_assert!(radius <= 1.0 + 1e-9, "radius {radius}");
    }

    #[test]
    fn splits_are_disjoint_reproducible_and_ood_tests_large_graphs(
        data_seed in any::<u64>(),
        split_seed in any::<u64>(),
        num_graphs in 10usize..60,
        span in 6usize..30,
    ) {
        let spec = SynthSpec { num_graphs, min_nodes: 5, max_nodes: 5 + span, seed: data_seed, ..SynthSpec::default() };
        let d = synth_dataset(&spec).unwrap();
        let r = random_split(&d, split_seed).unwrap();
        r.validate(d.len()).unwrap();
        prop_assert_eq!(r.train.len() + r.val.len() + r.test.len(), d.len());
        prop_assert_eq!(&r, &random_split(&d, split_seed).unwrap());

        // a span this wide leaves graphs on both sides of the median
        let o = ood_split(&d, split_seed).unwrap();
        o.validate(d.len()).unwrap();
        prop_assert_eq!(&o, &ood_split(&d, split_seed).unwrap());
        let median = median_node_count(&d);
        for &t in &o.test {
            prop_assert!(d.graph(t).num_nodes() as f64 >= median);
        }
    }

    #[test]
    fn tudataset_write_then_parse_round_trips(seed in any::<u64>(), extra in 0usize..12, attr_dim in 1usize..4, classes in 1usize..4) {
        // the parser infers the class count from the labels it sees
        let num_graphs = classes + extra;
        let spec = SynthSpec { num_graphs, num_classes: classes, attr_dim, max_nodes: 12, min_nodes: 5, seed, ..SynthSpec::default() };
        let d = synth_dataset(&spec).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        write_tudataset(&d, tmp.path(), "RT").unwrap();
        let back = parse_tudataset(tmp.path(), "RT").unwrap();
        prop_assert_eq!(back.graphs(), d.graphs());
        prop_assert_eq!(back.num_classes(), d.num_classes());
    }

    #[test]
    fn drop_probabilities_are_monotone_and_bounded(
        scores in prop::collection::vec(-5.0f64..5.0, 1..30),
        base in 0.0f64..=1.0,
        cut in 0.01f64..=1.0,
    ) {
        let p = drop_probabilities(&scores, base, cut);
        prop_assert_eq!(p.len(), scores.len());
        for i in 0..scores.len() {
            prop_assert!(p[i] >= 0.0 && p[i] <= base.max(cut));
            for j in 0..scores.len() {
                if scores[i] > scores[j] {
                    prop_assert!(p[i] <= p[j]);
                }
            }
        }
    }

    #[test]
    fn views_keep_nodes_and_never_add_edges(seed in any::<u64>(), view_seed in any::<u64>(), n in 2usize..12, kind in 0usize..3) {
        let g = random_graph(seed, n, 3, 0.5);
        let kind = [ViewKind::Raw, ViewKind::AttrShuffle, ViewKind::Adaptive][kind];
        let spec = ViewSpec { kind, seed: view_seed, ..ViewSpec::default() };
        let v = match make_view(&g, &spec) {
            Ok(v) => v,
            // adaptive views need at least one edge to score
            Err(_) => { prop_assert_eq!(g.num_edges(), 0); return Ok(()); }
        };
        prop_assert_eq!(v.num_nodes(), g.num_nodes());
        prop_assert_eq!(v.attr_dim(), g.attr_dim());
        prop_assert!(v.edges().iter().all(|e| g.edges().contains(e)));
        prop_assert_eq!(&v, &make_view(&g, &spec).unwrap());
        if kind == ViewKind::Adaptive {
            prop_assert!(v.num_edges() >= 1);
            prop_assert_eq!(&v, &adaptive_view(&g, &spec).unwrap());
        }
    }

    #[test]
    fn gnn_is_permutation_equivariant(seed in any::<u64>(), n in 2usize..9, arch in 0usize..3, layer_norm in any::<bool>()) {
        let arch = ["gcn", "gin", "sgc"][arch];
        let g = random_graph(seed, n, 3, 0.4);
        let mut cfg = GnnConfig::new(arch, 2, 4, 1, 3, 3).unwrap();
        cfg.layer_norm = layer_norm;
        let params = init_params(&cfg, seed).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut seed::rng(seed ^ 1));
        let pg = g.permute_nodes(&perm).unwrap();
        let h = gnn_forward(&g, &params, &cfg, Head::Main, 2).unwrap();
        let ph = gnn_forward(&pg, &params, &cfg, Head::Main, 2).unwrap();
        for i in 0..n {
            for c in 0..h.cols() {
                prop_assert!((h.get(i, c) - ph.get(perm[i], c)).abs() < 1e-10);
            }
        }
        let l = classify(&g, &params, &cfg).unwrap();
        prop_assert!(l.max_abs_diff(&classify(&pg, &params, &cfg).unwrap()) < 1e-10);
    }

    #[test]
    fn ssl_loss_is_finite(seed in any::<u64>(), n in 1usize..10, p in 0.0f64..1.0) {
        let g = random_graph(seed, n, 3, p);
        let cfg = GnnConfig::new("gcn", 2, 4, 1, 2, 3).unwrap();
        let params = init_params(&cfg, seed).unwrap();
        let seeds = SslSeeds { shuffle: seed, view_a: seed ^ 2, view_b: seed ^ 3 };
        let (total, terms) = ssl_loss(&g, &params, &cfg, &ViewSpec::default(), &SslWeights::default(), seeds).unwrap();
        prop_assert!(total.is_finite() && terms.global.is_finite() && terms.local.is_finite());
    }

    #[test]
    fn global_loss_ignores_view_seeds(seed in any::<u64>(), a in any::<u64>(), b in any::<u64>()) {
        let g = random_graph(seed, 6, 3, 0.5);
        let cfg = GnnConfig::new("gcn", 2, 4, 1, 2, 3).unwrap();
        let params = init_params(&cfg, seed).unwrap();
        let w = SslWeights { alpha: 0.0, ..SslWeights::default() };
        let spec = ViewSpec::default();
        let run = |va, vb| ssl_loss(&g, &params, &cfg, &spec, &w, SslSeeds { shuffle: seed, view_a: va, view_b: vb }).unwrap().0;
        prop_assert_eq!(run(a, b), run(b, a ^ 5));

        let w = SslWeights { global_weight: 0.0, ..SslWeights::default() };
        let run = |s| ssl_loss(&g, &params, &cfg, &spec, &w, SslSeeds { shuffle: s, view_a: a, view_b: b }).unwrap().0;
        prop_assert_eq!(run(seed), run(seed ^ 9));
    }

    #[test]
    fn constraint_is_nonnegative_and_zero_on_match(seed in any::<u64>(), rows in 2usize..10, d in 1usize..5) {
        let x = random_matrix(seed, rows, d, 2.0);
        let y = random_matrix(seed ^ 7, rows, d, 2.0);
        let sx = stats_of_rows(&x).unwrap();
        let sy = stats_of_rows(&y).unwrap();
        prop_assert!(adaptation_constraint(&sx, &sy).unwrap() >= 0.0);
        prop_assert_eq!(adaptation_constraint(&sx, &sx.clone()).unwrap(), 0.0);
    }

    #[test]
    fn cka_symmetric_and_invariant(seed in any::<u64>(), rows in 3usize..12, d in 1usize..6, e in 1usize..6, c in 0.1f64..10.0) {
        let x = random_matrix(seed, rows, d, 1.0);
        let y = random_matrix(seed ^ 11, rows, e, 1.0);
        let k = linear_cka(&x, &y).unwrap();
        prop_assert!((k - linear_cka(&y, &x).unwrap()).abs() <= 1e-12);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&k));
        let q = random_orthogonal(seed ^ 13, d);
        let xq = x.matmul(&q).unwrap();
        prop_assert!((k - linear_cka(&xq, &y).unwrap()).abs() <= 1e-9);
        prop_assert!((k - linear_cka(&x, &y.scale(c)).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn auc_of_negated_scores_is_complement(
        pairs in prop::collection::vec((0i32..6, 0usize..2), 2..40),
    ) {
        prop_assume!(pairs.iter().any(|p| p.1 == 0) && pairs.iter().any(|p| p.1 == 1));
        // coarse integer scores force plenty of ties
        let scores: Vec<f64> = pairs.iter().map(|p| p.0 as f64 * 0.5).collect();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let labels: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let sum = roc_auc_binary(&scores, &labels).unwrap() + roc_auc_binary(&neg, &labels).unwrap();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn ce_hessian_quadratic_forms(seed in any::<u64>(), c in 2usize..11, scale in 0.1f64..20.0) {
        let z = random_matrix(seed, 1, c, scale);
        let h = softmax_ce_hessian(&z);
        let a = random_matrix(seed ^ 3, c, 1, 5.0);
        prop_assert!(a.transpose().matmul(&h).unwrap().matmul(&a).unwrap().scalar() >= -1e-12);
        let b = random_matrix(seed ^ 5, c, 1, 1.0);
        let b = b.scale(1.0 / b.frobenius_norm().max(1e-300));
        prop_assert!(b.transpose().matmul(&h).unwrap().matmul(&b).unwrap().scalar() <= 2.0 + 1e-12);
    }

    #[test]
    fn ce_gradient_matches_autodiff(seed in any::<u64>(), c in 2usize..11, scale in 0.1f64..20.0) {
        let z = random_matrix(seed, 1, c, scale);
        let y = (seed % c as u64) as usize;
        let g = ce_gradient(&z, y);
        prop_assert!(g.frobenius_norm() <= 2f64.sqrt() + 1e-9);
        let tape = Tape::new();
        let zv = tape.param(z);
        let loss = cross_entropy(zv, y).unwrap();
        let grads = tape.backward(loss).unwrap();
        prop_assert!(grads.wrt(zv).max_abs_diff(&g) <= 1e-10);
    }
}
