use super::Graph;
use crate::error::{Error, Result};

/// Harmonic centrality with unit edge weights: `sum_{u != v} 1 / dist(u, v)`.
///
/// The graph must be connected.
pub fn harmonic_centrality(g: &Graph) -> Result<Vec<f64>> {
    let n = g.n_nodes();
    let mut scores = Vec::with_capacity(n);
    for v in 0..n {
        let mut total = 0.0;
        for d in g.bfs_distances(v) {
            match d {
                None => return Err(Error::Disconnected),
                Some(0) => {}
                Some(d) => total += 1.0 / d as f64,
            }
        }
        scores.push(total);
    }
    Ok(scores)
}

/// Keeps the `k` most central nodes (ties to the lower index), then the
/// largest connected component of that induced subgraph. Node order in the
/// output follows the original indices.
pub fn subsample_top_nodes(g: &Graph, k: usize) -> Result<Graph> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("subsample size {k} < 2")));
    }
    if g.n_nodes() <= k {
        return Ok(g.clone());
    }
    let scores = harmonic_centrality(g)?;
    let mut order: Vec<usize> = (0..g.n_nodes()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut top = order[..k].to_vec();
    top.sort_unstable();

    let sub = g.induced(&top)?;
    // components() is ordered by smallest member, so the first maximum wins ties
    let comps = sub.components();
    let mut best = &comps[0];
    for c in &comps[1..] {
        if c.len() > best.len() {
            best = c;
        }
    }
    let out = sub.induced(best)?;
    if out.n_nodes() < 2 || out.n_edges() == 0 {
        return Err(Error::SubsampleDegenerate {
            nodes: out.n_nodes(),
            edges: out.n_edges(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn plain(n: usize, edges: &[(usize, usize)]) -> Graph {
        let feats = Array2::from_shape_fn((n, 1), |(v, _)| v as f64);
        Graph::from_edges(n, edges, feats, 0).unwrap()
    }

    // Floyd–Warshall over the dense adjacency; independent of the BFS path.
    fn centrality_oracle(g: &Graph) -> Vec<f64> {
        let n = g.n_nodes();
        let inf = usize::MAX / 4;
        let mut d = vec![vec![inf; n]; n];
        for u in 0..n {
            d[u][u] = 0;
            for &v in g.neighbors(u) {
                if u != v {
                    d[u][v] = 1;
                }
            }
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        (0..n)
            .map(|v| {
                (0..n)
                    .filter(|&u| u != v)
                    .map(|u| 1.0 / d[u][v] as f64)
                    .sum()
            })
            .collect()
    }

    #[test]
    fn path_of_three() {
        let g = plain(3, &[(0, 1), (1, 2)]);
        let s = harmonic_centrality(&g).unwrap();
        assert_eq!(s, vec![1.5, 2.0, 1.5]);
        assert_eq!(s, centrality_oracle(&g));
    }

    #[test]
    fn complete_k4() {
        let edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        let g = plain(4, &edges);
        assert_eq!(harmonic_centrality(&g).unwrap(), vec![3.0; 4]);
    }

    #[test]
    fn star_s4() {
        let g = plain(4, &[(0, 1), (0, 2), (0, 3)]);
        let s = harmonic_centrality(&g).unwrap();
        assert_eq!(s, vec![3.0, 2.0, 2.0, 2.0]);
        assert_eq!(s, centrality_oracle(&g));
    }

    #[test]
    fn disconnected_is_error() {
        let g = plain(4, &[(0, 1), (2, 3)]);
        assert!(matches!(harmonic_centrality(&g), Err(Error::Disconnected)));
    }

    #[test]
    fn matches_floyd_warshall_on_random_graphs() {
        for seed in 0..20 {
            let g = crate::graph::synth_graph(
                &crate::graph::Family::ErdosRenyi { n: 15, p: 0.25 },
                seed,
            )
            .unwrap();
            let fast = harmonic_centrality(&g).unwrap();
            let slow = centrality_oracle(&g);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn small_graph_is_identity() {
        let edges: Vec<_> = (0..9).map(|v| (v, v + 1)).collect();
        let g = plain(10, &edges);
        assert_eq!(subsample_top_nodes(&g, 500).unwrap(), g);
    }

    #[test]
    fn path_of_three_keeps_center_and_lower_endpoint() {
        let g = plain(3, &[(0, 1), (1, 2)]);
        let s = subsample_top_nodes(&g, 2).unwrap();
        assert_eq!(s.n_nodes(), 2);
        assert_eq!(s.n_edges(), 1);
        // features carry the original indices
        assert_eq!(s.features().column(0).to_vec(), vec![0.0, 1.0]);
    }

    #[test]
    fn large_graph_shrinks_and_stays_connected() {
        let g = crate::graph::synth_graph_raw(
            &crate::graph::Family::BarabasiAlbert { n: 700, m: 2 },
            3,
        )
        .unwrap();
        assert!(g.is_connected());
        let s = subsample_top_nodes(&g, 500).unwrap();
        assert!(s.n_nodes() <= 500);
        assert!(s.n_nodes() >= 2);
        assert!(s.is_connected());
    }

    #[test]
    fn rejects_tiny_k() {
        let g = plain(3, &[(0, 1), (1, 2)]);
        assert!(subsample_top_nodes(&g, 1).is_err());
    }
}
