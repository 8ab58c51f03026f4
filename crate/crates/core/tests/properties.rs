//! Property tests for structural invariants across modules.

mod common;

use std::collections::BTreeSet;

use hetembed::classify::{balanced_subsample, evaluate, split_dataset};
use hetembed::docembed::preprocess;
use hetembed::features::{cosine, mean_std, nearest_neighbors, pearson, FeatureMode, FeatureRow};
use hetembed::hetgraph::{build_graph_from_edges, EdgeRecord, HetGraph, NodeRef, NodeType};
use hetembed::sampling::{check_walk_line, forest_fire_sample, walk_from, ForestFireConfig, MetapathSchema, WalkIndex};
use hetembed::seed;
use hetembed::sgns::{EmbeddingMatrix, Vocab};
use proptest::prelude::*;

const LEGAL: [(NodeType, NodeType); 4] = [
    (NodeType::Author, NodeType::Submission),
    (NodeType::Author, NodeType::Comment),
    (NodeType::Comment, NodeType::Submission),
    (NodeType::Submission, NodeType::Subreddit),
];

fn edges_strategy() -> impl Strategy<Value = Vec<EdgeRecord>> {
    prop::collection::vec((0..LEGAL.len(), 0..6u8, 0..6u8, any::<bool>()), 0..40).prop_map(|raw| {
        raw.into_iter()
            .map(|(k, a, b, flip)| {
                let (ta, tb) = LEGAL[k];
                let x = NodeRef::new(ta, format!("n{a}"));
                let y = NodeRef::new(tb, format!("n{b}"));
                if flip {
                    EdgeRecord::new(&y, &x)
                } else {
                    EdgeRecord::new(&x, &y)
                }
            })
            .collect()
    })
}

fn snapshot(g: &HetGraph) -> Vec<u8> {
    let mut buf = Vec::new();
    g.write_snapshot(&mut buf).unwrap();
    buf
}

fn row(author: &str, label: bool) -> FeatureRow {
    FeatureRow {
        author: author.into(),
        mode: FeatureMode::TextOnly,
        values: vec![0.0, 0.0],
        label,
    }
}

proptest! {
    #[test]
    fn adjacency_is_symmetric_and_typed(edges in edges_strategy()) {
        let g = build_graph_from_edges(&edges).unwrap();
        let mut pairs = BTreeSet::new();
        for e in &edges {
            let (a, b) = e.endpoints();
            let (ia, ib) = (g.id_of(&a).unwrap(), g.id_of(&b).unwrap());
            prop_assert!(g.has_edge(ia, ib) && g.has_edge(ib, ia));
            pairs.insert((ia.min(ib), ia.max(ib)));
        }
        prop_assert_eq!(g.edge_count(), pairs.len());
        for v in 0..g.node_count() as u32 {
            for t in NodeType::ALL {
                for &u in g.neighbor_ids(v, t) {
                    prop_assert_eq!(g.kind(u), t);
                    prop_assert!(g.neighbor_ids(u, g.kind(v)).contains(&v));
                }
            }
            let sum: usize = NodeType::ALL.iter().map(|&t| g.neighbor_ids(v, t).len()).sum();
            prop_assert_eq!(g.degree(v), sum);
        }
    }

    #[test]
    fn graph_ignores_record_order(edges in edges_strategy(), shuffle_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = edges.clone();
        shuffled.shuffle(&mut seed::rng(shuffle_seed, &[]));
        let a = build_graph_from_edges(&edges).unwrap();
        let b = build_graph_from_edges(&shuffled).unwrap();
        prop_assert_eq!(snapshot(&a), snapshot(&b));
        let back = HetGraph::read_snapshot(&snapshot(&a)[..]).unwrap();
        prop_assert_eq!(back, a);
    }

    #[test]
    fn certain_burn_is_bfs(edges in edges_strategy(), pick in any::<prop::sample::Index>(), k in 1usize..30) {
        let g = build_graph_from_edges(&edges).unwrap();
        prop_assume!(g.node_count() > 0);
        let start = pick.index(g.node_count()) as u32;
        let cfg = ForestFireConfig {
            burn_prob: 1.0,
            target_size: k.min(g.node_count()),
            max_restarts: 0,
            seed_nodes: vec![g.node(start).clone()],
            rng_seed: 5,
        };
        let s = forest_fire_sample(&g, &cfg).unwrap();
        prop_assert_eq!(s.burned, common::bfs_ball(&g, start, k.min(g.node_count())));
    }

    #[test]
    fn walks_conform_to_schema(edges in edges_strategy(), walk_seed in any::<u64>()) {
        let g = build_graph_from_edges(&edges).unwrap();
        let schema = MetapathSchema::subreddit_author();
        let mut rng = seed::rng(walk_seed, &[]);
        let mut walk = Vec::new();
        for start in g.ids_of_type(schema.start_type()) {
            walk_from(&g, &schema, start, 12, &mut rng, &mut walk);
            let line: Vec<String> = walk.iter().map(|&i| g.node(i).token()).collect();
            prop_assert_eq!(check_walk_line(&g, &schema, &line.join(" ")), Ok(walk.len()));
        }
    }

    #[test]
    fn indexed_walks_match_graph_walks(edges in edges_strategy(), walk_seed in any::<u64>(), schema_pick in 0usize..3) {
        let g = build_graph_from_edges(&edges).unwrap();
        let schema: MetapathSchema = ["r,s,a,s,r", "a,s,a", "a,c,s,c,a"][schema_pick].parse().unwrap();
        let index = WalkIndex::new(&g).unwrap();
        let (mut direct, mut indexed) = (Vec::new(), Vec::new());
        for start in g.ids_of_type(schema.start_type()) {
            walk_from(&g, &schema, start, 9, &mut seed::rng(walk_seed, &[start as u64]), &mut direct);
            index.walk_from(&schema, index.position_of(start), 9, &mut seed::rng(walk_seed, &[start as u64]), &mut indexed);
            let ids: Vec<u32> = indexed.iter().map(|&p| index.id_at(p)).collect();
            prop_assert_eq!(&ids, &direct);
        }
    }

    #[test]
    fn preprocess_is_idempotent(text in "[a-zA-Z0-9 ./:,!?'éüß€-]{0,60}") {
        let once = preprocess(&text);
        let twice = preprocess(&once.join(" "));
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn cosine_properties(
        a in prop::collection::vec(-10.0f64..10.0, 1..8),
        b in prop::collection::vec(-10.0f64..10.0, 1..8),
        scale in 0.01f64..100.0,
    ) {
        let n = a.len().min(b.len());
        let (a, b) = (&a[..n], &b[..n]);
        let c = cosine(a, b).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c));
        prop_assert!((c - cosine(b, a).unwrap()).abs() < 1e-12);
        let scaled: Vec<f64> = a.iter().map(|x| x * scale).collect();
        prop_assert!((c - cosine(&scaled, b).unwrap()).abs() < 1e-9);
        if a.iter().any(|x| x.abs() > 1e-3) {
            prop_assert!((cosine(a, a).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pearson_is_affine_invariant(
        xy in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30),
        (s, t) in (0.1f64..10.0, -10.0f64..10.0),
        flip in any::<bool>(),
    ) {
        let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
        let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
        prop_assume!(mean_std(&x).1 > 1e-3 && mean_std(&y).1 > 1e-3);
        let r = pearson(&x, &y).unwrap();
        let sign = if flip { -1.0 } else { 1.0 };
        let x2: Vec<f64> = x.iter().map(|v| sign * s * v + t).collect();
        prop_assert!((pearson(&x2, &y).unwrap() - sign * r).abs() < 1e-9);
        prop_assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_neighbors_equal_full_sort(n in 2usize..60, dim in 1usize..6, k in 1usize..70, init in any::<u64>()) {
        let vocab = Vocab::from_counts((0..n).map(|i| (format!("a:v{i}"), 1 + i as u64)), 1).unwrap();
        let emb = EmbeddingMatrix::initialized(n, dim, init);
        let q = vocab.token(0).to_string();
        let got = nearest_neighbors(&vocab, &emb, &q, k, None).unwrap();
        let mut all: Vec<(u32, f64)> = (1..n as u32).map(|i| (i, cosine(emb.input(0), emb.input(i)).unwrap())).collect();
        all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        all.truncate(k);
        prop_assert_eq!(got.iter().map(|nb| (nb.id, nb.similarity)).collect::<Vec<_>>(), all);
    }

    #[test]
    fn confusion_counts_match_hand_count(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..100)) {
        let preds: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let truths: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let m = evaluate(&preds, &truths).unwrap();
        let count = |p: bool, t: bool| pairs.iter().filter(|x| **x == (p, t)).count();
        prop_assert_eq!((m.tp, m.fp, m.tn, m.fn_), (count(true, true), count(true, false), count(false, false), count(false, true)));
        prop_assert_eq!(m.tp + m.fp + m.tn + m.fn_, pairs.len());
        prop_assert!((m.accuracy - (m.tp + m.tn) as f64 / pairs.len() as f64).abs() < 1e-15);
        prop_assert!((m.fnr - (1.0 - m.recall)).abs() < 1e-15 || m.tp + m.fn_ == 0);
    }

    #[test]
    fn split_is_stratified_partition(pos in 2usize..40, neg in 2usize..80, frac in 0.2f64..0.8, s in any::<u64>()) {
        let rows: Vec<FeatureRow> = (0..pos).map(|i| row(&format!("p{i}"), true))
            .chain((0..neg).map(|i| row(&format!("n{i}"), false))).collect();
        match split_dataset(&rows, frac, s) {
            Ok((train, test)) => {
                let mut names: Vec<&str> = train.iter().chain(&test).map(|r| r.author.as_str()).collect();
                names.sort_unstable();
                let mut expected: Vec<&str> = rows.iter().map(|r| r.author.as_str()).collect();
                expected.sort_unstable();
                prop_assert_eq!(names, expected);
                let test_pos = test.iter().filter(|r| r.label).count();
                prop_assert!((test_pos as f64 - frac * pos as f64).abs() <= 1.0);
                let again = split_dataset(&rows, frac, s).unwrap();
                prop_assert_eq!(again.1, test);
            }
            // only when rounding empties one side of a class
            Err(_) => {
                let empties = |n: usize| {
                    let k = (frac * n as f64).round() as usize;
                    k == 0 || k == n
                };
                prop_assert!(empties(pos) || empties(neg));
            }
        }
    }

    #[test]
    fn subsample_keeps_positives(pos in 1usize..30, neg in 1usize..100, ratio in 0.5f64..3.0, s in any::<u64>()) {
        let p: Vec<FeatureRow> = (0..pos).map(|i| row(&format!("p{i}"), true)).collect();
        let n: Vec<FeatureRow> = (0..neg).map(|i| row(&format!("n{i}"), false)).collect();
        let out = balanced_subsample(&p, &n, ratio, s).unwrap();
        prop_assert_eq!(out.iter().filter(|r| r.label).count(), pos);
        let want = ((ratio * pos as f64) - 1e-9).ceil() as usize;
        prop_assert_eq!(out.iter().filter(|r| !r.label).count(), want.min(neg));
        let names: BTreeSet<&str> = out.iter().map(|r| r.author.as_str()).collect();
        prop_assert_eq!(names.len(), out.len());
    }
}
