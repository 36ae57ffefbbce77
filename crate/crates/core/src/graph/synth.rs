//! Seeded synthetic graph families used by tests and the synthetic benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{filter_graph, FilterLimits, Graph};
use crate::error::{Error, Result};

const FEATURELESS_DIM: usize = 16;
const MAX_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    ErdosRenyi { n: usize, p: f64 },
    /// Preferential attachment grown from a star on `m + 1` nodes.
    BarabasiAlbert { n: usize, m: usize },
    Cycle { n: usize },
    /// Uniform random recursive tree.
    Tree { n: usize },
    /// One center plus `n - 1` leaves.
    Star { n: usize },
}

impl Family {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        match *self {
            Family::ErdosRenyi { n, p } => {
                if n < 2 {
                    return bad(format!("erdos_renyi needs n >= 2, got {n}"));
                }
                if !(p > 0.0 && p <= 1.0) {
                    return bad(format!("erdos_renyi needs p in (0, 1], got {p}"));
                }
            }
            Family::BarabasiAlbert { n, m } => {
                if m == 0 || n < m + 1 {
                    return bad(format!("barabasi_albert needs m >= 1 and n >= m + 1, got n={n} m={m}"));
                }
            }
            Family::Cycle { n } if n < 3 => return bad(format!("cycle needs n >= 3, got {n}")),
            Family::Tree { n } | Family::Star { n } if n < 2 => {
                return bad(format!("tree/star needs n >= 2, got {n}"))
            }
            _ => {}
        }
        Ok(())
    }
}

/// Generates one graph; the result is connected and passes the default
/// filter. Random families are redrawn (continuing the same stream) until
/// they do.
pub fn synth_graph(family: &Family, seed: u64) -> Result<Graph> {
    family.validate()?;
    let limits = FilterLimits::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let g = generate(family, &mut rng)?;
        if filter_graph(&g, &limits).is_keep() {
            return Ok(g);
        }
        if matches!(family, Family::Cycle { .. } | Family::Star { .. }) {
            break;
        }
    }
    Err(Error::InvalidParameter(format!(
        "{family:?} cannot produce a graph passing the default filter"
    )))
}

/// Single draw with no filter guarantee.
pub fn synth_graph_raw(family: &Family, seed: u64) -> Result<Graph> {
    family.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate(family, &mut rng)
}

/// Replaces node features with i.i.d. standard normal entries.
pub fn with_gaussian_features(g: Graph, dim: usize, rng: &mut impl Rng) -> Result<Graph> {
    let n = g.n_nodes();
    let feats = Array2::from_shape_simple_fn((n, dim), || rng.sample::<f64, _>(StandardNormal));
    g.with_features(feats)
}

fn generate(family: &Family, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let (n, edges) = match *family {
        Family::ErdosRenyi { n, p } => {
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.random::<f64>() < p {
                        edges.push((u, v));
                    }
                }
            }
            (n, edges)
        }
        Family::BarabasiAlbert { n, m } => (n, barabasi_albert(n, m, rng)),
        Family::Cycle { n } => (n, (0..n).map(|v| (v, (v + 1) % n)).collect()),
        Family::Tree { n } => (n, (1..n).map(|v| (rng.random_range(0..v), v)).collect()),
        Family::Star { n } => (n, (1..n).map(|v| (0, v)).collect()),
    };
    Graph::from_edges(n, &edges, Array2::ones((n, FEATURELESS_DIM)), 0)
}

fn barabasi_albert(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (1..=m).map(|v| (0, v)).collect();
    // each node appears once per incident edge endpoint
    let mut endpoints: Vec<usize> = edges.iter().flat_map(|&(u, v)| [u, v]).collect();
    for new in m + 1..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m {
            let t = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((t, new));
            endpoints.push(t);
            endpoints.push(new);
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_five() {
        let g = synth_graph(&Family::Cycle { n: 5 }, 0).unwrap();
        assert_eq!(g.n_nodes(), 5);
        assert_eq!(g.n_edges(), 5);
        assert!(g.degrees().iter().all(|&d| d == 2));
    }

    #[test]
    fn erdos_renyi_is_deterministic() {
        let f = Family::ErdosRenyi { n: 20, p: 0.3 };
        let a = synth_graph(&f, 7).unwrap();
        let b = synth_graph(&f, 7).unwrap();
        assert_eq!(a.edges(), b.edges());
        let c = synth_graph(&f, 8).unwrap();
        assert_ne!(a.edges(), c.edges());
    }

    #[test]
    fn barabasi_albert_edge_count() {
        // m edges in the seed star, then m per node added after it
        let (n, m) = (30, 2);
        let g = synth_graph(&Family::BarabasiAlbert { n, m }, 1).unwrap();
        assert_eq!(g.n_nodes(), n);
        assert_eq!(g.n_edges(), m + (n - m - 1) * m);
        assert_eq!(g.n_edges(), 56);
    }

    #[test]
    fn tree_has_n_minus_one_edges() {
        for seed in 0..10 {
            let g = synth_graph(&Family::Tree { n: 12 }, seed).unwrap();
            assert_eq!(g.n_edges(), 11);
            assert!(g.is_connected());
        }
    }

    #[test]
    fn star_shape() {
        let g = synth_graph(&Family::Star { n: 4 }, 0).unwrap();
        assert_eq!(g.degrees(), vec![3, 1, 1, 1]);
    }

    #[test]
    fn out_of_range_parameters() {
        assert!(synth_graph(&Family::Cycle { n: 2 }, 0).is_err());
        assert!(synth_graph(&Family::ErdosRenyi { n: 5, p: 0.0 }, 0).is_err());
        assert!(synth_graph(&Family::BarabasiAlbert { n: 2, m: 2 }, 0).is_err());
        // degree 59 exceeds the default filter
        assert!(synth_graph(&Family::Star { n: 60 }, 0).is_err());
        assert!(synth_graph_raw(&Family::Star { n: 60 }, 0).is_ok());
    }

    #[test]
    fn outputs_pass_filter() {
        let families = [
            Family::ErdosRenyi { n: 12, p: 0.2 },
            Family::BarabasiAlbert { n: 40, m: 3 },
            Family::Cycle { n: 9 },
            Family::Tree { n: 25 },
            Family::Star { n: 10 },
        ];
        for f in &families {
            for seed in 0..5 {
                let g = synth_graph(f, seed).unwrap();
                assert!(filter_graph(&g, &FilterLimits::default()).is_keep());
            }
        }
    }
}
