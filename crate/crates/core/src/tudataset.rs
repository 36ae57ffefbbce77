//! Reader and writer for the TUDataset flat-file layout.
//!
//! Files are `<DS>_A.txt` (1-indexed `i, j` edge pairs), `<DS>_graph_indicator.txt`
//! (one graph id per node), `<DS>_graph_labels.txt` (one row per graph; extra
//! comma-separated columns are read as additional tasks, `nan` or an empty cell
//! marks a missing label), and optionally `<DS>_node_labels.txt` and
//! `<DS>_node_attributes.txt`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Width of the constant features given to graphs with no node information.
pub const FEATURELESS_DIM: usize = 16;

/// A loaded dataset. `labels[g][t]` is graph `g`'s label for task column `t`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub graphs: Vec<Graph>,
    pub labels: Vec<Vec<Option<i64>>>,
}

impl Dataset {
    pub fn n_tasks(&self) -> usize {
        self.labels.first().map_or(0, Vec::len)
    }
}

/// Loads every graph of dataset `name` from `dir`.
pub fn load_tudataset(dir: impl AsRef<Path>, name: &str) -> Result<Vec<Graph>> {
    load_dataset(dir, name).map(|d| d.graphs)
}

pub fn load_dataset(dir: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let dir = dir.as_ref();
    let file = |suffix: &str| dir.join(format!("{name}_{suffix}.txt"));

    let indicator_path = file("graph_indicator");
    let indicator_raw = read_required(&indicator_path)?;
    let edges_path = file("A");
    let edges_raw = read_required(&edges_path)?;
    let labels_path = file("graph_labels");
    let labels_raw = read_required(&labels_path)?;

    let indicator: Vec<usize> = parse_lines(&indicator_path, &indicator_raw, |s| {
        s.trim().parse::<usize>().ok().filter(|&g| g >= 1)
    })?;
    let n_total = indicator.len();
    let graph_labels: Vec<Vec<Option<i64>>> =
        parse_lines(&labels_path, &labels_raw, |s| s.split(',').map(parse_label).collect())?;
    let n_graphs = graph_labels.len();
    if let Some((line, &g)) = indicator.iter().enumerate().find(|(_, &g)| g > n_graphs) {
        return Err(malformed(
            &indicator_path,
            line + 1,
            format!("graph id {g} exceeds the {n_graphs} graph labels"),
        ));
    }
    let width = graph_labels.first().map_or(0, Vec::len);
    if let Some(line) = graph_labels.iter().position(|r| r.len() != width) {
        return Err(malformed(&labels_path, line + 1, "inconsistent label columns".into()));
    }

    let node_labels = match read_optional(&file("node_labels"))? {
        Some(raw) => {
            let path = file("node_labels");
            let v: Vec<i64> = parse_lines(&path, &raw, |s| parse_label(s).flatten())?;
            if v.len() != n_total {
                return Err(malformed(&path, v.len(), format!("expected {n_total} node labels")));
            }
            Some(v)
        }
        None => None,
    };
    let attributes = match read_optional(&file("node_attributes"))? {
        Some(raw) => {
            let path = file("node_attributes");
            let rows: Vec<Vec<f64>> = parse_lines(&path, &raw, |s| {
                s.split(',').map(|x| x.trim().parse::<f64>().ok()).collect()
            })?;
            if rows.len() != n_total {
                return Err(malformed(&path, rows.len(), format!("expected {n_total} attribute rows")));
            }
            let d = rows.first().map_or(0, Vec::len);
            if let Some(line) = rows.iter().position(|r| r.len() != d) {
                return Err(malformed(&path, line + 1, "inconsistent attribute width".into()));
            }
            Some(Array2::from_shape_vec((n_total, d), rows.concat()).expect("checked shape"))
        }
        None => None,
    };

    let features = canonicalize_features(attributes.as_ref(), node_labels.as_deref(), n_total);

    // node -> (graph, local index)
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_graphs];
    let mut local = vec![0usize; n_total];
    for (node, &g) in indicator.iter().enumerate() {
        local[node] = members[g - 1].len();
        members[g - 1].push(node);
    }

    let mut edge_lists: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_graphs];
    for (line_no, line) in edges_raw.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Option<(usize, usize)> = line.split_once(',').and_then(|(a, b)| {
            Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?))
        });
        let (a, b) = parsed.ok_or_else(|| {
            malformed(&edges_path, line_no + 1, format!("cannot parse edge {line:?}"))
        })?;
        if a == 0 || b == 0 || a > n_total || b > n_total {
            return Err(malformed(
                &edges_path,
                line_no + 1,
                format!("edge ({a}, {b}) references an unknown node"),
            ));
        }
        let (a, b) = (a - 1, b - 1);
        let (ga, gb) = (indicator[a], indicator[b]);
        if ga != gb {
            return Err(malformed(
                &edges_path,
                line_no + 1,
                format!("edge ({}, {}) crosses graphs {ga} and {gb}", a + 1, b + 1),
            ));
        }
        edge_lists[ga - 1].push((local[a], local[b]));
    }

    let mut graphs = Vec::with_capacity(n_graphs);
    for (gi, nodes) in members.iter().enumerate() {
        if nodes.is_empty() {
            return Err(Error::Malformed {
                file: indicator_path.display().to_string(),
                line: 0,
                msg: format!("graph {} has no nodes", gi + 1),
            });
        }
        let feats = features.select(ndarray::Axis(0), nodes);
        let label = graph_labels[gi].first().copied().flatten().unwrap_or(-1);
        let mut g = Graph::from_edges(nodes.len(), &edge_lists[gi], feats, label)?
            .with_origin(format!("{name}:{}", gi + 1));
        if let Some(nl) = &node_labels {
            g = g.with_node_labels(nodes.iter().map(|&v| nl[v]).collect())?;
        }
        graphs.push(g);
    }
    Ok(Dataset {
        name: name.to_string(),
        graphs,
        labels: graph_labels,
    })
}

/// Initial node features: row-normalized attributes when present, else
/// row-normalized one-hot node labels, else a constant all-ones block of
/// width [`FEATURELESS_DIM`]. Rows are scaled to unit L1 norm; all-zero rows
/// stay zero.
pub fn canonicalize_features(
    attributes: Option<&Array2<f64>>,
    node_labels: Option<&[i64]>,
    n_nodes: usize,
) -> Array2<f64> {
    let mut x = if let Some(a) = attributes {
        a.clone()
    } else if let Some(labels) = node_labels {
        let lo = labels.iter().copied().min().unwrap_or(0);
        let hi = labels.iter().copied().max().unwrap_or(0);
        let width = (hi - lo + 1) as usize;
        let mut x = Array2::zeros((labels.len(), width));
        for (v, &l) in labels.iter().enumerate() {
            x[[v, (l - lo) as usize]] = 1.0;
        }
        x
    } else {
        return Array2::ones((n_nodes, FEATURELESS_DIM));
    };
    for mut row in x.rows_mut() {
        let norm: f64 = row.iter().map(|v| v.abs()).sum();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    x
}

/// Writes graphs in the flat-file layout. Features go to the attribute file,
/// node labels (if every graph has them) to the node-label file.
pub fn write_tudataset(dir: impl AsRef<Path>, name: &str, graphs: &[Graph]) -> Result<()> {
    write_dataset(dir, name, graphs, true)
}

/// As [`write_tudataset`] with control over the attribute file, so that
/// label-only datasets can be produced.
pub fn write_dataset(
    dir: impl AsRef<Path>,
    name: &str,
    graphs: &[Graph],
    with_attributes: bool,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut a = String::new();
    let mut ind = String::new();
    let mut gl = String::new();
    let mut nl = String::new();
    let mut attrs = String::new();
    let all_labeled = graphs.iter().all(|g| g.node_labels().is_some());
    let mut offset = 0usize;
    for (gi, g) in graphs.iter().enumerate() {
        for u in 0..g.n_nodes() {
            for &v in g.neighbors(u) {
                let _ = writeln!(a, "{}, {}", offset + u + 1, offset + v + 1);
            }
            let _ = writeln!(ind, "{}", gi + 1);
            if with_attributes {
                let row: Vec<String> = g.features().row(u).iter().map(|x| format!("{x:?}")).collect();
                let _ = writeln!(attrs, "{}", row.join(", "));
            }
        }
        if all_labeled {
            for l in g.node_labels().unwrap_or_default() {
                let _ = writeln!(nl, "{l}");
            }
        }
        let _ = writeln!(gl, "{}", g.label());
        offset += g.n_nodes();
    }
    let put = |suffix: &str, body: &str| -> Result<()> {
        let p = dir.join(format!("{name}_{suffix}.txt"));
        fs::write(&p, body).map_err(|e| Error::io(p, e))
    };
    put("A", &a)?;
    put("graph_indicator", &ind)?;
    put("graph_labels", &gl)?;
    if all_labeled && !graphs.is_empty() {
        put("node_labels", &nl)?;
    }
    if with_attributes {
        put("node_attributes", &attrs)?;
    }
    Ok(())
}

/// Overwrites the graph-label file with several task columns.
pub fn write_label_columns(
    dir: impl AsRef<Path>,
    name: &str,
    labels: &[Vec<Option<i64>>],
) -> Result<()> {
    let mut body = String::new();
    for row in labels {
        let cells: Vec<String> = row
            .iter()
            .map(|c| c.map_or_else(|| "nan".to_string(), |v| v.to_string()))
            .collect();
        let _ = writeln!(body, "{}", cells.join(","));
    }
    let p = dir.as_ref().join(format!("{name}_graph_labels.txt"));
    fs::write(&p, body).map_err(|e| Error::io(p, e))
}

fn parse_label(s: &str) -> Option<Option<i64>> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("nan") {
        return Some(None);
    }
    if let Ok(v) = s.parse::<i64>() {
        return Some(Some(v));
    }
    let f: f64 = s.parse().ok()?;
    (f.fract() == 0.0).then_some(Some(f as i64))
}

fn read_required(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_optional(path: &Path) -> Result<Option<String>> {
    if !path.exists() {
        return Ok(None);
    }
    fs::read_to_string(path).map(Some).map_err(|e| Error::io(path, e))
}

fn parse_lines<T>(path: &Path, raw: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        out.push(f(line).ok_or_else(|| malformed(path, i + 1, format!("cannot parse {line:?}")))?);
    }
    Ok(out)
}

fn malformed(path: &Path, line: usize, msg: String) -> Error {
    Error::Malformed {
        file: PathBuf::from(path).display().to_string(),
        line,
        msg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn write(dir: &Path, name: &str, suffix: &str, body: &str) {
        fs::write(dir.join(format!("{name}_{suffix}.txt")), body).unwrap();
    }

    #[test]
    fn minimal_two_node_dataset() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "T", "A", "1, 2\n2, 1\n");
        write(tmp.path(), "T", "graph_indicator", "1\n1\n");
        write(tmp.path(), "T", "graph_labels", "0\n");
        let gs = load_tudataset(tmp.path(), "T").unwrap();
        assert_eq!(gs.len(), 1);
        assert_eq!(gs[0].n_nodes(), 2);
        assert_eq!(gs[0].n_edges(), 1);
        assert_eq!(gs[0].features(), &Array2::<f64>::ones((2, 16)));
        assert_eq!(gs[0].origin_id(), "T:1");
    }

    #[test]
    fn crlf_is_accepted() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "T", "A", "1, 2\r\n2, 1\r\n");
        write(tmp.path(), "T", "graph_indicator", "1\r\n1\r\n");
        write(tmp.path(), "T", "graph_labels", "1\r\n");
        let gs = load_tudataset(tmp.path(), "T").unwrap();
        assert_eq!(gs[0].label(), 1);
    }

    #[test]
    fn missing_indicator_names_the_file() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "T", "A", "1, 2\n");
        write(tmp.path(), "T", "graph_labels", "0\n");
        match load_tudataset(tmp.path(), "T") {
            Err(Error::MissingFile(p)) => {
                assert!(p.ends_with("T_graph_indicator.txt"))
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_node_reports_line() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "T", "A", "1, 2\n2, 1\n2, 7\n");
        write(tmp.path(), "T", "graph_indicator", "1\n1\n");
        write(tmp.path(), "T", "graph_labels", "0\n");
        match load_tudataset(tmp.path(), "T") {
            Err(Error::Malformed { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multi_column_labels_with_missing() {
        let tmp = tempfile::tempdir().unwrap();
        write(tmp.path(), "T", "A", "1, 2\n2, 1\n3, 4\n4, 3\n");
        write(tmp.path(), "T", "graph_indicator", "1\n1\n2\n2\n");
        write(tmp.path(), "T", "graph_labels", "0,nan\n1,1\n");
        let ds = load_dataset(tmp.path(), "T").unwrap();
        assert_eq!(ds.n_tasks(), 2);
        assert_eq!(ds.labels[0], vec![Some(0), None]);
        assert_eq!(ds.labels[1], vec![Some(1), Some(1)]);
    }

    #[test]
    fn canonical_attribute_rows() {
        let x = canonicalize_features(Some(&array![[2.0, 2.0], [0.0, 0.0]]), None, 2);
        assert_eq!(x, array![[0.5, 0.5], [0.0, 0.0]]);
    }

    #[test]
    fn canonical_one_hot() {
        let x = canonicalize_features(None, Some(&[0, 1]), 2);
        assert_eq!(x, array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn canonical_featureless() {
        let x = canonicalize_features(None, None, 3);
        assert_eq!(x, Array2::<f64>::ones((3, 16)));
    }

    #[test]
    fn attributes_take_priority_over_labels() {
        let x = canonicalize_features(Some(&array![[1.0, 3.0]]), Some(&[5]), 1);
        assert_eq!(x, array![[0.25, 0.75]]);
    }
}
