use std::collections::HashSet;
use std::sync::Arc;

use metaview::config::RunConfig;
use metaview::graph::{synth_graph, Family, Graph};
use metaview::meta::{sample_episode, TaskData};
use metaview::tudataset::{load_dataset, write_dataset, write_label_columns};
use metaview::views::{build_views, ViewConfig};
use ndarray::Array2;
use proptest::prelude::*;

fn family(kind: u8, n: usize) -> Family {
    match kind % 4 {
        0 => Family::Cycle { n },
        1 => Family::Tree { n },
        2 => Family::Star { n },
        _ => Family::BarabasiAlbert { n, m: 2 },
    }
}

fn graphs_strategy() -> impl Strategy<Value = (Vec<Graph>, bool)> {
    let one = (0u8..4, 3usize..15, any::<u64>(), -3i64..3, any::<u64>());
    (prop::collection::vec(one, 1..8), any::<bool>()).prop_map(|(specs, attrs)| {
        let graphs = specs
            .into_iter()
            .map(|(kind, n, seed, label, fseed)| {
                let g = synth_graph(&family(kind, n), seed).unwrap().with_label(label);
                let k = g.n_nodes();
                let node_labels = (0..k).map(|i| ((fseed >> (i % 60)) & 3) as i64).collect();
                let x = Array2::from_shape_fn((k, 3), |(i, j)| {
                    ((fseed.rotate_left((i * 3 + j) as u32) % 10_000) as f64) / 7.0 - 300.0
                });
                let g = g.with_node_labels(node_labels).unwrap();
                if attrs {
                    g.with_features(x).unwrap()
                } else {
                    g
                }
            })
            .collect();
        (graphs, attrs)
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tudataset_round_trip_keeps_structure_and_scaled_attributes((graphs, attrs) in graphs_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "P", &graphs, attrs).unwrap();
        let back = load_dataset(dir.path(), "P").unwrap();
        prop_assert_eq!(back.graphs.len(), graphs.len());
        for (a, b) in graphs.iter().zip(&back.graphs) {
            prop_assert_eq!(a.n_nodes(), b.n_nodes());
            prop_assert_eq!(a.edges(), b.edges());
            prop_assert_eq!(a.label(), b.label());
            prop_assert_eq!(a.node_labels(), b.node_labels());
            if attrs {
                // loading scales each attribute row to unit L1 norm
                for (ra, rb) in a.features().rows().into_iter().zip(b.features().rows()) {
                    let l1: f64 = ra.iter().map(|x| x.abs()).sum();
                    for (x, y) in ra.iter().zip(rb.iter()) {
                        let want = if l1 > 0.0 { x / l1 } else { 0.0 };
                        prop_assert!((want - y).abs() <= 1e-12 * want.abs().max(1.0), "{want} vs {y}");
                    }
                }
            }
        }
    }

    #[test]
    fn label_columns_round_trip(rows in prop::collection::vec(
        prop::collection::vec(prop::option::of(-2i64..3), 3), 1..6)
    ) {
        let graphs: Vec<Graph> = (0..rows.len())
            .map(|i| synth_graph(&Family::Cycle { n: 4 }, i as u64).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), "L", &graphs, false).unwrap();
        write_label_columns(dir.path(), "L", &rows).unwrap();
        let back = load_dataset(dir.path(), "L").unwrap();
        prop_assert_eq!(back.labels, rows);
    }

    #[test]
    fn episodes_never_share_graphs(seed in any::<u64>(), n in 1usize..6, m in 1usize..10, per_class in 16usize..24) {
        let cfg = ViewConfig { d_z: 4, ..Default::default() };
        let mut bundles = Vec::new();
        for i in 0..per_class {
            for (label, fam) in [(0, Family::Cycle { n: 5 }), (1, Family::Star { n: 6 })] {
                let g = synth_graph(&fam, i as u64).unwrap().with_label(label).with_origin(format!("{label}:{i}"));
                bundles.push(Arc::new(build_views(&g, &cfg).unwrap()));
            }
        }
        let task = TaskData::from_bundles("t", bundles);
        let e = sample_episode(&task, 2, n, m, seed).unwrap();
        prop_assert_eq!(e.support.len(), 2 * n);
        prop_assert_eq!(e.query.len(), 2 * m);
        let mut seen = HashSet::new();
        for (b, y) in e.support.iter().chain(&e.query) {
            prop_assert!(seen.insert(Arc::as_ptr(b) as usize), "graph drawn twice");
            prop_assert_eq!(task.classes[*y].0, b.label);
        }
        // same seed, same episode
        let again = sample_episode(&task, 2, n, m, seed).unwrap();
        let ids = |e: &metaview::meta::Episode| e.support.iter().chain(&e.query).map(|(b, _)| b.origin_id.clone()).collect::<Vec<_>>();
        prop_assert_eq!(ids(&e), ids(&again));
    }

    #[test]
    fn config_canonical_form_round_trips(
        seed in any::<u64>(),
        lr in 1e-5f64..1.0,
        d_h in 1usize..256,
        epochs in 1usize..1000,
        dropout in 0.0f64..0.9,
        head in prop::sample::select(vec!["proto", "match", "relation"]),
    ) {
        let text = format!("seed = {seed}\nlr = {lr}\nd_h = {d_h}\nepochs = {epochs}\ndropout = {dropout}\nhead = {head}\n");
        let cfg = RunConfig::from_str_checked(&text).unwrap();
        let again = RunConfig::from_str_checked(&cfg.canonical()).unwrap();
        prop_assert_eq!(cfg.canonical(), again.canonical());
        prop_assert_eq!(cfg.hash(), again.hash());
        prop_assert_eq!(cfg.seed, seed);
    }
}
