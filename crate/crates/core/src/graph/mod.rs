//! Graph representation and the preprocessing rules applied before a graph
//! may enter a benchmark: degree/feature/size filters, connectivity, harmonic
//! centrality and top-k subsampling.

mod centrality;
mod synth;

use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use centrality::{harmonic_centrality, subsample_top_nodes};
pub use synth::{synth_graph, synth_graph_raw, with_gaussian_features, Family};

/// Undirected graph with CSR adjacency and a dense node-feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    features: Array2<f64>,
    node_labels: Option<Vec<i64>>,
    label: i64,
    origin_id: String,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Each pair may appear in one
    /// or both directions; duplicates collapse. Self-loops are kept.
    pub fn from_edges(
        n_nodes: usize,
        edges: &[(usize, usize)],
        features: Array2<f64>,
        label: i64,
    ) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        if features.nrows() != n_nodes {
            return Err(Error::InvalidGraph(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                n_nodes
            )));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_nodes];
        for &(u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) out of range for {n_nodes} nodes"
                )));
            }
            adj[u].push(v);
            if u != v {
                adj[v].push(u);
            }
        }
        let mut row_ptr = Vec::with_capacity(n_nodes + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            col_idx.extend_from_slice(list);
            row_ptr.push(col_idx.len());
        }
        Ok(Graph {
            row_ptr,
            col_idx,
            features,
            node_labels: None,
            label,
            origin_id: String::new(),
        })
    }

    pub fn with_node_labels(mut self, labels: Vec<i64>) -> Result<Self> {
        if labels.len() != self.n_nodes() {
            return Err(Error::InvalidGraph(format!(
                "{} node labels for {} nodes",
                labels.len(),
                self.n_nodes()
            )));
        }
        self.node_labels = Some(labels);
        Ok(self)
    }

    pub fn with_origin(mut self, origin_id: impl Into<String>) -> Self {
        self.origin_id = origin_id.into();
        self
    }

    pub fn with_features(mut self, features: Array2<f64>) -> Result<Self> {
        if features.nrows() != self.n_nodes() {
            return Err(Error::InvalidGraph(format!(
                "feature matrix has {} rows for {} nodes",
                features.nrows(),
                self.n_nodes()
            )));
        }
        self.features = features;
        Ok(self)
    }

    pub fn with_label(mut self, label: i64) -> Self {
        self.label = label;
        self
    }

    pub fn n_nodes(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Number of undirected edges; a self-loop counts once.
    pub fn n_edges(&self) -> usize {
        let loops = (0..self.n_nodes())
            .filter(|&v| self.neighbors(v).binary_search(&v).is_ok())
            .count();
        (self.col_idx.len() - loops) / 2 + loops
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[v]..self.row_ptr[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.row_ptr[v + 1] - self.row_ptr[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n_nodes()).map(|v| self.degree(v)).collect()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n_nodes()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn node_labels(&self) -> Option<&[i64]> {
        self.node_labels.as_deref()
    }

    pub fn label(&self) -> i64 {
        self.label
    }

    pub fn origin_id(&self) -> &str {
        &self.origin_id
    }

    /// Each undirected edge once, as `(u, v)` with `u <= v`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_edges());
        for u in 0..self.n_nodes() {
            for &v in self.neighbors(u) {
                if u <= v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Connected components as sorted node lists, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        let mut comps = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s];
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &w in self.neighbors(u) {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() == 1
    }

    /// BFS hop distances from `source`; `None` for unreachable nodes.
    pub fn bfs_distances(&self, source: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_nodes()];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0) + 1;
            for &w in self.neighbors(u) {
                if dist[w].is_none() {
                    dist[w] = Some(d);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Subgraph induced on `nodes` (given in the order they should take in the
    /// output). Features and node labels follow the selected rows.
    pub fn induced(&self, nodes: &[usize]) -> Result<Graph> {
        let mut map = vec![usize::MAX; self.n_nodes()];
        for (new, &old) in nodes.iter().enumerate() {
            map[old] = new;
        }
        let mut edges = Vec::new();
        for (new_u, &old_u) in nodes.iter().enumerate() {
            for &old_v in self.neighbors(old_u) {
                let new_v = map[old_v];
                if new_v != usize::MAX && new_u <= new_v {
                    edges.push((new_u, new_v));
                }
            }
        }
        let features = self.features.select(ndarray::Axis(0), nodes);
        let mut g = Graph::from_edges(nodes.len(), &edges, features, self.label)?;
        if let Some(labels) = &self.node_labels {
            g.node_labels = Some(nodes.iter().map(|&v| labels[v]).collect());
        }
        g.origin_id = self.origin_id.clone();
        Ok(g)
    }

    /// Relabels nodes: old node `v` becomes node `perm[v]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.n_nodes();
        if perm.len() != n {
            return Err(Error::InvalidParameter(format!(
                "permutation of length {} for {n} nodes",
                perm.len()
            )));
        }
        let mut inverse = vec![usize::MAX; n];
        for (old, &new) in perm.iter().enumerate() {
            if new >= n || inverse[new] != usize::MAX {
                return Err(Error::InvalidParameter("not a permutation".into()));
            }
            inverse[new] = old;
        }
        let edges: Vec<_> = self.edges().into_iter().map(|(u, v)| (perm[u], perm[v])).collect();
        let features = self.features.select(ndarray::Axis(0), &inverse);
        let mut g = Graph::from_edges(n, &edges, features, self.label)?;
        if let Some(labels) = &self.node_labels {
            g.node_labels = Some(inverse.iter().map(|&old| labels[old]).collect());
        }
        g.origin_id = self.origin_id.clone();
        Ok(g)
    }
}

/// Adjacency structure alone, shared between the views of one graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl Adjacency {
    pub fn n_nodes(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[v]..self.row_ptr[v + 1]]
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    /// Block-diagonal union; node indices of later blocks are offset.
    pub fn block_diag<'a>(parts: impl IntoIterator<Item = &'a Adjacency>) -> Adjacency {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut offset = 0;
        for a in parts {
            for v in 0..a.n_nodes() {
                col_idx.extend(a.neighbors(v).iter().map(|&u| u + offset));
                row_ptr.push(col_idx.len());
            }
            offset += a.n_nodes();
        }
        Adjacency { row_ptr, col_idx }
    }
}

impl From<&Graph> for Adjacency {
    fn from(g: &Graph) -> Self {
        Adjacency {
            row_ptr: g.row_ptr.clone(),
            col_idx: g.col_idx.clone(),
        }
    }
}

/// Preprocessing thresholds applied to every source graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterLimits {
    pub max_degree: usize,
    pub max_feature_dim: usize,
    pub min_nodes: usize,
    pub min_edges: usize,
    pub max_nodes_before_subsample: usize,
}

impl Default for FilterLimits {
    fn default() -> Self {
        FilterLimits {
            max_degree: 50,
            max_feature_dim: 100,
            min_nodes: 2,
            min_edges: 1,
            max_nodes_before_subsample: 500,
        }
    }
}

impl FilterLimits {
    pub fn validate(&self) -> Result<()> {
        if self.max_degree == 0
            || self.max_feature_dim == 0
            || self.min_edges == 0
            || self.max_nodes_before_subsample == 0
        {
            return Err(Error::InvalidParameter("filter limits must be positive".into()));
        }
        if self.min_nodes < 2 {
            return Err(Error::InvalidParameter("min_nodes must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Degree,
    FeatureDim,
    TooFewNodes,
    TooFewEdges,
    Disconnected,
    SubsampleDegenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Keep,
    Drop(DropReason),
}

impl Verdict {
    pub fn is_keep(self) -> bool {
        matches!(self, Verdict::Keep)
    }
}

/// Checks the rules in a fixed order and reports the first one violated.
pub fn filter_graph(g: &Graph, limits: &FilterLimits) -> Verdict {
    if g.max_degree() > limits.max_degree {
        Verdict::Drop(DropReason::Degree)
    } else if g.feature_dim() > limits.max_feature_dim {
        Verdict::Drop(DropReason::FeatureDim)
    } else if g.n_nodes() < limits.min_nodes {
        Verdict::Drop(DropReason::TooFewNodes)
    } else if g.n_edges() < limits.min_edges {
        Verdict::Drop(DropReason::TooFewEdges)
    } else if !g.is_connected() {
        Verdict::Drop(DropReason::Disconnected)
    } else {
        Verdict::Keep
    }
}

/// Full preprocessing: filter, then shrink graphs above the node budget to
/// their top-centrality subgraph. Returns the graph that enters the benchmark.
pub fn preprocess(g: &Graph, limits: &FilterLimits) -> Result<Graph, DropReason> {
    if let Verdict::Drop(reason) = filter_graph(g, limits) {
        return Err(reason);
    }
    if g.n_nodes() > limits.max_nodes_before_subsample {
        return subsample_top_nodes(g, limits.max_nodes_before_subsample)
            .map_err(|_| DropReason::SubsampleDegenerate);
    }
    Ok(g.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(n: usize, edges: &[(usize, usize)], d: usize) -> Graph {
        Graph::from_edges(n, edges, Array2::ones((n, d)), 0).unwrap()
    }

    #[test]
    fn csr_is_symmetric_and_deduplicated() {
        let g = plain(3, &[(0, 1), (1, 0), (1, 2)], 1);
        assert_eq!(g.n_edges(), 2);
        assert_eq!(g.neighbors(1), &[0, 2]);
        assert_eq!(g.neighbors(0), &[1]);
    }

    #[test]
    fn rejects_out_of_range_edge() {
        let err = Graph::from_edges(2, &[(0, 2)], Array2::ones((2, 1)), 0);
        assert!(err.is_err());
    }

    #[test]
    fn star_with_degree_51_drops_on_degree() {
        let edges: Vec<_> = (1..=51).map(|v| (0, v)).collect();
        let g = plain(52, &edges, 1);
        assert_eq!(
            filter_graph(&g, &FilterLimits::default()),
            Verdict::Drop(DropReason::Degree)
        );
    }

    #[test]
    fn triangle_is_kept() {
        let g = plain(3, &[(0, 1), (1, 2), (2, 0)], 3);
        assert_eq!(filter_graph(&g, &FilterLimits::default()), Verdict::Keep);
    }

    #[test]
    fn disjoint_edges_drop_as_disconnected() {
        let g = plain(4, &[(0, 1), (2, 3)], 1);
        assert_eq!(
            filter_graph(&g, &FilterLimits::default()),
            Verdict::Drop(DropReason::Disconnected)
        );
    }

    #[test]
    fn filter_reason_order() {
        // violates feature dim, node count and edge count: feature dim wins
        let g = plain(1, &[], 101);
        assert_eq!(
            filter_graph(&g, &FilterLimits::default()),
            Verdict::Drop(DropReason::FeatureDim)
        );
        let g = plain(1, &[], 2);
        assert_eq!(
            filter_graph(&g, &FilterLimits::default()),
            Verdict::Drop(DropReason::TooFewNodes)
        );
        let g = plain(2, &[], 2);
        assert_eq!(
            filter_graph(&g, &FilterLimits::default()),
            Verdict::Drop(DropReason::TooFewEdges)
        );
    }

    #[test]
    fn self_loop_counts_once() {
        let g = plain(2, &[(0, 0), (0, 1)], 1);
        assert_eq!(g.n_edges(), 2);
        assert_eq!(g.degree(0), 2);
    }

    #[test]
    fn permute_roundtrip() {
        let g = plain(4, &[(0, 1), (1, 2), (2, 3)], 2);
        let p = g.permute(&[2, 0, 3, 1]).unwrap();
        let inv = p.permute(&[1, 3, 0, 2]).unwrap();
        assert_eq!(inv, g);
        assert!(g.permute(&[0, 0, 1, 2]).is_err());
    }

    #[test]
    fn limits_validate() {
        assert!(FilterLimits::default().validate().is_ok());
        let bad = FilterLimits {
            min_nodes: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
