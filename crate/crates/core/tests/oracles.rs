mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use stancelab::cluster::{cluster, mutual_reachability, ClusterParams, CondensedTree, TreeChild};
use stancelab::corpus::Corpus;
use stancelab::eval::{ami, ari, expected_mutual_info};
use stancelab::labelprop::{propagate, PropagationParams, Stance, StanceLabel};
use stancelab::lexicon::term_stats;
use stancelab::polarize::{build_user_graph, prominent_nodes, Group, UserGraph};
use stancelab::project::{distance, knn_graph, Metric};

use common::*;

#[test]
fn knn_matches_exhaustive_scan() {
    let mut r = rng(260);
    let pts: Vec<Vec<f64>> = (0..50).map(|_| (0..8).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    for metric in [Metric::Euclidean, Metric::Cosine] {
        let g = knn_graph(&pts, 5, metric).unwrap();
        for i in 0..pts.len() {
            let mut all: Vec<(f64, usize)> = (0..pts.len())
                .filter(|&j| j != i)
                .map(|j| {
                    let d = match metric {
                        Metric::Euclidean => pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(),
                        Metric::Cosine => {
                            let dot: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| a * b).sum();
                            let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                            1.0 - dot / (n(&pts[i]) * n(&pts[j]))
                        }
                    };
                    (d, j)
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<usize> = all[..5].iter().map(|x| x.1).collect();
            assert_eq!(g.indices[i], want, "{metric:?} row {i}");
            for (d, (w, _)) in g.distances[i].iter().zip(&all) {
                assert!((d - w).abs() < 1e-12);
            }
            assert_eq!(g.distances[i][0], distance(&pts[i], &pts[want[0]], metric));
        }
    }
}

#[test]
fn mutual_reachability_matches_direct_formula() {
    let mut r = rng(327);
    let pts: Vec<[f64; 2]> = (0..30).map(|_| [r.random_range(0.0..10.0), r.random_range(0.0..10.0)]).collect();
    let ms = 4;
    let d = |a: usize, b: usize| ((pts[a][0] - pts[b][0]).powi(2) + (pts[a][1] - pts[b][1]).powi(2)).sqrt();
    let core: Vec<f64> = (0..30)
        .map(|i| {
            let mut ds: Vec<f64> = (0..30).filter(|&j| j != i).map(|j| d(i, j)).collect();
            ds.sort_by(f64::total_cmp);
            ds[ms - 1]
        })
        .collect();
    let m = mutual_reachability(&pts, ms).unwrap().matrix();
    for a in 0..30 {
        for b in 0..30 {
            let want = if a == b { 0.0 } else { d(a, b).max(core[a]).max(core[b]) };
            assert!((m[a][b] - want).abs() < 1e-12, "({a},{b})");
        }
    }
}

#[test]
fn nested_blobs_split_into_their_halves() {
    let mut r = rng(344);
    let centers = [[0.0, 0.0], [0.0, 8.0], [60.0, 0.0], [60.0, 8.0]];
    let mut pts = Vec::new();
    let mut truth = Vec::new();
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..60 {
            pts.push([c[0] + r.random_range(-1.5..1.5), c[1] + r.random_range(-1.5..1.5)]);
            truth.push(k);
        }
    }
    let a = cluster(&pts, &ClusterParams { min_cluster_size: 15, min_samples: None }).unwrap();
    let top = a.subclusters(CondensedTree::ROOT).unwrap();
    assert_eq!(top.len(), 2);
    for t in &top {
        let kids = a.subclusters(t.node).unwrap();
        assert_eq!(kids.len(), 2, "node {}", t.node);
        let mut union: BTreeSet<usize> = kids.iter().flat_map(|k| k.members.iter().copied()).collect();
        let parent: BTreeSet<usize> = t.members.iter().copied().collect();
        assert!(union.is_subset(&parent));
        // the rest fell out of the parent before the split
        union.extend(a.condensed_tree.edges.iter().filter_map(|e| match e.child {
            TreeChild::Point(p) if e.parent == t.node => Some(p),
            _ => None,
        }));
        assert_eq!(union, parent);
        let (mut pred, mut want) = (Vec::new(), Vec::new());
        for (k, c) in kids.iter().enumerate() {
            for &m in &c.members {
                pred.push(k);
                want.push(truth[m]);
            }
        }
        assert!(ari(&pred, &want) >= 0.99);
    }
}

#[test]
fn expected_mi_eight_elements() {
    let u = [1, 1, 1, 1, 2, 2, 2, 2];
    let v = [1, 1, 1, 2, 2, 2, 2, 2];
    let emi = expected_mutual_info(&[4, 4], &[3, 5], 8);
    assert!((emi - expected_mi_oracle(&[4, 4], &[3, 5])).abs() < 1e-9);
    assert!((emi - expected_mi_by_permutation(&u, &v)).abs() < 1e-9);
    assert!((ami(&u, &v).unwrap() - ami_oracle(&u, &v)).abs() < 1e-9);
}

#[test]
fn hypergeometric_oracle_agrees_with_permutation_average() {
    for n in 2..=6 {
        for (u, v) in contingency_pairs(n) {
            let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
            let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
            for (&a, &b) in u.iter().zip(&v) {
                *rows.entry(a).or_default() += 1;
                *cols.entry(b).or_default() += 1;
            }
            let r: Vec<u64> = rows.into_values().collect();
            let c: Vec<u64> = cols.into_values().collect();
            let direct = expected_mi_oracle(&r, &c);
            assert!((direct - expected_mi_by_permutation(&u, &v)).abs() < 1e-12, "{u:?} {v:?}");
        }
    }
}

#[test]
fn user_graph_weights_are_cosines() {
    let tweets = vec![
        retweet("1", "u1", "s1", "accA"),
        retweet("2", "u1", "s2", "accA"),
        retweet("3", "u1", "s3", "accB"),
        retweet("4", "u2", "s3", "accB"),
        retweet("5", "u2", "s4", "accC"),
        retweet("6", "u2", "s5", "accC"),
        retweet("7", "u2", "s6", "accC"),
        retweet("8", "u3", "s1", "accA"),
        retweet("9", "u3", "s5", "accC"),
        retweet("10", "u4", "s9", "accZ"),
        tweet("11", "u5", "no retweets"),
    ];
    let corpus = Corpus::new(tweets).unwrap();
    let membership: BTreeMap<String, Group> = [("u1", Group::A), ("u2", Group::B), ("u3", Group::A), ("u4", Group::B), ("u5", Group::B)]
        .into_iter()
        .map(|(u, g)| (u.to_string(), g))
        .collect();
    let g = build_user_graph(&corpus, &membership).unwrap();
    assert_eq!(g.dropped, vec!["u5".to_string()]);
    let mut counts: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for t in corpus.tweets() {
        if let Some(acc) = &t.retweeted_user_id {
            *counts.entry(t.user_id.clone()).or_default().entry(acc.clone()).or_default() += 1.0;
        }
    }
    for (i, a) in g.users.iter().enumerate() {
        for (j, b) in g.users.iter().enumerate().filter(|(j, _)| *j != i) {
            let want = cosine(&counts[a], &counts[b]);
            let got = g.adjacency[i].iter().find(|(k, _)| *k == j).map(|e| e.1);
            match got {
                Some(w) => assert!((w - want).abs() < 1e-12, "{a}-{b}"),
                None => assert_eq!(want, 0.0, "{a}-{b}"),
            }
        }
    }
}

#[test]
fn prominent_nodes_match_full_sort() {
    let mut r = rng(481);
    let nodes: Vec<(String, Group)> = (0..30)
        .map(|i| (format!("user{:02}", (i * 7) % 30), if r.random_bool(0.5) { Group::A } else { Group::B }))
        .collect();
    let mut edges = Vec::new();
    for a in 0..30 {
        for b in a + 1..30 {
            if r.random_bool(0.15) {
                edges.push((a, b, r.random_range(0.1..1.0)));
            }
        }
    }
    let g = UserGraph::from_edges(nodes, &edges).unwrap();
    for group in [Group::A, Group::B] {
        let mut order: Vec<usize> = (0..30).filter(|&i| g.groups[i] == group).collect();
        order.sort_by(|&x, &y| g.adjacency[y].len().cmp(&g.adjacency[x].len()).then(g.users[x].cmp(&g.users[y])));
        for n in 1..=order.len() {
            let mut got = prominent_nodes(&g, group, n).unwrap();
            let mut want = order[..n].to_vec();
            got.sort_unstable();
            want.sort_unstable();
            assert_eq!(got, want, "{group:?} n={n}");
        }
    }
}

#[test]
fn term_counts_match_recount() {
    let mut r = rng(540);
    let words = ["a", "b", "c", "d", "e", "f", "g"];
    let mut side = |len: usize| -> Vec<Vec<String>> {
        (0..len)
            .map(|_| (0..r.random_range(0..9)).map(|_| words[r.random_range(0..words.len())].to_string()).collect())
            .collect()
    };
    let (a, b) = (side(40), side(25));
    let stats = term_stats(&a, &b).unwrap();
    fn recount(docs: &[Vec<String>]) -> (HashMap<&str, u64>, u64) {
        let mut m: HashMap<&str, u64> = HashMap::new();
        let mut total = 0;
        for d in docs {
            for t in d {
                *m.entry(t.as_str()).or_default() += 1;
                total += 1;
            }
        }
        (m, total)
    }
    let ((ca, na), (cb, nb)) = (recount(&a), recount(&b));
    let vocab: BTreeSet<&str> = ca.keys().chain(cb.keys()).copied().collect();
    assert_eq!(stats.len(), vocab.len());
    for t in vocab {
        let s = &stats[t];
        assert_eq!(
            (s.tf_a, s.tf_b, s.size_a, s.size_b),
            (ca.get(t).copied().unwrap_or(0), cb.get(t).copied().unwrap_or(0), na, nb),
            "{t}"
        );
    }
}

#[test]
fn hand_built_retweet_graph_rounds() {
    let mut tweets = Vec::new();
    for (author, ids) in [("P", ["p1", "p2", "p3"]), ("A", ["a1", "a2", "a3"])] {
        for id in ids {
            tweets.push(tweet(id, author, id));
        }
    }
    for (author, ids) in [("u1", ["o1", "o2"]), ("u3", ["q1", "q2"]), ("u4", ["w1", "w2"]), ("u6", ["m1", "m2"])] {
        for id in ids {
            tweets.push(tweet(id, author, id));
        }
    }
    for (user, srcs) in [
        ("u1", vec![("p1", "P"), ("p2", "P")]),
        ("u2", vec![("a1", "A"), ("a2", "A"), ("m1", "u6"), ("m2", "u6")]),
        ("u4", vec![("o1", "u1"), ("o2", "u1")]),
        ("u5", vec![("o1", "u1"), ("o2", "u1"), ("a1", "A")]),
        ("u7", vec![("m1", "u6"), ("m2", "u6")]),
        ("u8", vec![("w1", "u4"), ("w2", "u4")]),
        ("u9", vec![("w1", "u4"), ("m1", "u6")]),
        ("u10", vec![("p1", "P")]),
        ("u11", vec![("a3", "A"), ("p3", "P")]),
        ("u12", vec![("p1", "P"), ("p2", "P"), ("q1", "u3")]),
    ] {
        for (src, author) in srcs {
            let id = format!("r{}", tweets.len());
            tweets.push(retweet(&id, user, src, author));
        }
    }
    let corpus = Corpus::new(tweets).unwrap();
    let seeds: BTreeMap<String, StanceLabel> = [("P", Stance::Pro), ("A", Stance::Anti)]
        .into_iter()
        .map(|(u, s)| (u.to_string(), StanceLabel::seed(s)))
        .collect();
    let params = PropagationParams { min_retweets: 2, max_iterations: 20 };
    let got = propagate(&corpus, &seeds, &params).unwrap();
    let trace: Vec<(usize, usize)> = got.trace().iter().map(|r| (r.new_pro, r.new_anti)).collect();
    let (want, want_trace) = labelprop_oracle(&corpus, &seeds, &params);
    assert_eq!(trace, want_trace);
    assert_eq!(trace, vec![(2, 1), (1, 1), (1, 0), (0, 0)]);
    let labels: BTreeMap<String, (Stance, u32)> = got.labels.iter().map(|(u, l)| (u.clone(), (l.value, l.iteration))).collect();
    assert_eq!(labels, want);
    assert_eq!(labels["u8"], (Stance::Pro, 3));
    assert_eq!(labels["u7"], (Stance::Anti, 2));
    for blocked in ["u5", "u9", "u10", "u11", "u3", "u6"] {
        assert!(!labels.contains_key(blocked), "{blocked}");
    }
}
