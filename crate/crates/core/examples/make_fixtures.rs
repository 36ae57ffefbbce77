//! Regenerates the bundled test corpus:
//!
//! ```text
//! cargo run -p metaview-core --example make_fixtures -- crates/core/tests/fixtures
//! ```
//!
//! Every graph is labeled in exactly one task column, so the multi-task
//! split does not depend on the shuffle and task counts can be derived by
//! hand (see `corpus_expected.json`).

use std::path::{Path, PathBuf};

use metaview::graph::{synth_graph, Family, Graph};
use metaview::tudataset::{write_dataset, write_label_columns};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Structure depends on the class so trained models have something to find.
fn class_graph(label: i64, rng: &mut ChaCha8Rng) -> Graph {
    let n = rng.random_range(5..=9);
    let family = match label.rem_euclid(5) {
        0 => Family::Cycle { n },
        1 => Family::Tree { n },
        2 => Family::Star { n },
        3 => Family::ErdosRenyi { n, p: 0.5 },
        _ => Family::BarabasiAlbert { n, m: 2 },
    };
    synth_graph(&family, rng.random()).expect("valid family").with_label(label)
}

fn with_node_labels(g: Graph, n_labels: i64, rng: &mut ChaCha8Rng) -> Graph {
    let labels = (0..g.n_nodes()).map(|_| rng.random_range(0..n_labels)).collect();
    g.with_node_labels(labels).expect("one label per node")
}

fn with_attributes(g: Graph, dim: usize, rng: &mut ChaCha8Rng) -> Graph {
    let x = Array2::from_shape_simple_fn((g.n_nodes(), dim), || rng.random_range(0.0..1.0));
    g.with_features(x).expect("one row per node")
}

/// Two disjoint triangles; removed by the connectivity filter.
fn disconnected(label: i64) -> Graph {
    let edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)];
    Graph::from_edges(6, &edges, Array2::ones((6, 1)), label).expect("valid edges")
}

/// `columns[c]` lists `(label, count)` for graphs labeled only in column `c`.
fn write_molecules(dir: &Path, name: &str, columns: &[&[(i64, usize)]], extra_disconnected: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = columns.len();
    let mut graphs = Vec::new();
    let mut labels = Vec::new();
    for (c, classes) in columns.iter().enumerate() {
        for &(label, count) in classes.iter() {
            for _ in 0..count {
                graphs.push(with_node_labels(class_graph(label, &mut rng), 4, &mut rng));
                let mut row = vec![None; t];
                row[c] = Some(label);
                labels.push(row);
            }
        }
    }
    for i in 0..extra_disconnected {
        let label = (i % 2) as i64;
        let labels_n = vec![0; 6];
        graphs.push(disconnected(label).with_node_labels(labels_n).expect("six nodes"));
        let mut row = vec![None; t];
        row[0] = Some(label);
        labels.push(row);
    }
    // Interleave so that graph order does not follow the class.
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
    let graphs: Vec<Graph> = order.iter().map(|&i| graphs[i].clone()).collect();
    let labels: Vec<Vec<Option<i64>>> = order.iter().map(|&i| labels[i].clone()).collect();
    write_dataset(dir, name, &graphs, false).expect("write dataset");
    if t > 1 {
        write_label_columns(dir, name, &labels).expect("write labels");
    }
}

fn write_bio(dir: &Path, name: &str, classes: &[(i64, usize)], dim: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graphs = Vec::new();
    for &(label, count) in classes {
        for _ in 0..count {
            graphs.push(with_attributes(class_graph(label, &mut rng), dim, &mut rng));
        }
    }
    rand::seq::SliceRandom::shuffle(graphs.as_mut_slice(), &mut rng);
    write_dataset(dir, name, &graphs, true).expect("write dataset");
}

/// 188 graphs with 7 node labels and no attributes, 125 of class 1 and 63
/// of class -1, in the layout of the classic mutagenicity dataset.
fn write_mutag_like(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(188);
    let mut graphs = Vec::new();
    for i in 0..188 {
        let label = if i < 125 { 1 } else { -1 };
        let n = rng.random_range(10..=28);
        let family = if label == 1 { Family::Tree { n } } else { Family::Cycle { n } };
        let g = synth_graph(&family, rng.random()).expect("valid family").with_label(label);
        graphs.push(with_node_labels(g, 7, &mut rng));
    }
    write_dataset(dir, "MUTAG_LIKE", &graphs, false).expect("write dataset");
}

fn main() {
    let root: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "crates/core/tests/fixtures".into()).into();
    let corpus = root.join("corpus");
    write_molecules(&corpus, "MOLA", &[&[(0, 75), (1, 75)]], 4, 1);
    write_molecules(&corpus, "MOLB", &[&[(0, 72), (1, 72)], &[(0, 71), (1, 73)]], 0, 2);
    write_molecules(&corpus, "MOLC", &[&[(0, 72), (1, 72)], &[(2, 70), (3, 74)], &[(0, 75), (1, 30)]], 0, 3);
    write_molecules(&corpus, "MOLD", &[&[(0, 75), (1, 75)]], 0, 4);
    write_bio(&corpus, "BIOA", &[(0, 70), (1, 70), (2, 70), (3, 70), (4, 70), (5, 70)], 3, 5);
    write_bio(&corpus, "BIOB", &[(0, 70), (1, 71), (2, 72)], 5, 6);
    write_mutag_like(&root.join("mutag"));
    println!("fixtures written to {}", root.display());
}
