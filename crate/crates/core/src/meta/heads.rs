//! Metric heads over support and query embeddings.
//!
//! * prototypical: `logit(q, j) = -||h_q - c_j||^2`, softmax cross-entropy
//! * matching: `P(y | q) = sum_i softmax_i(cos(h_q, h_i)) [y_i = y]`, NLL
//! * relation: `sigmoid(MLP([h_q | c_j]))`, squared error to one-hot targets
//!
//! `c_j` is the mean support embedding of class `j`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Linear, Mat, ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Proto,
    Match,
    Relation,
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::Proto => "proto",
            HeadKind::Match => "match",
            HeadKind::Relation => "relation",
        })
    }
}

impl FromStr for HeadKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "proto" | "protonet" => Ok(HeadKind::Proto),
            "match" | "matchnet" => Ok(HeadKind::Match),
            "relation" | "relationnet" => Ok(HeadKind::Relation),
            _ => Err(Error::Config(format!("unknown head {s:?} (proto, match, relation)"))),
        }
    }
}

/// A head and, for the relation head, its comparison network.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub kind: HeadKind,
    pub relation: Option<(Linear, Linear)>,
}

/// `k x n_s` matrix averaging support rows per class.
fn class_means(ys: &[usize], k: usize) -> Result<Mat> {
    let mut counts = vec![0usize; k];
    for &y in ys {
        if y >= k {
            return Err(Error::Episode(format!("support label {y} outside 0..{k}")));
        }
        counts[y] += 1;
    }
    if let Some(j) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Episode(format!("class {j} has no support examples")));
    }
    let mut m = Mat::zeros((k, ys.len()));
    for (i, &y) in ys.iter().enumerate() {
        m[[y, i]] = 1.0 / counts[y] as f64;
    }
    Ok(m)
}

fn one_hot(ys: &[usize], k: usize) -> Mat {
    let mut m = Mat::zeros((ys.len(), k));
    for (i, &y) in ys.iter().enumerate() {
        m[[i, y]] = 1.0;
    }
    m
}

impl Head {
    pub fn new(store: &mut ParamStore, kind: HeadKind, d_h: usize, rng: &mut impl Rng) -> Self {
        let relation = (kind == HeadKind::Relation).then(|| {
            (
                Linear::new(store, "head.relation.0", 2 * d_h, d_h, rng),
                Linear::new(store, "head.relation.1", d_h, 1, rng),
            )
        });
        Head { kind, relation }
    }

    /// `n_q x k` scores: logits (proto), probabilities (match) or relation
    /// scores in (0, 1).
    pub fn scores(
        &self,
        tape: &mut Tape,
        p: &Bound,
        hs: Var,
        ys: &[usize],
        hq: Var,
        k: usize,
    ) -> Result<Var> {
        let (ns, d) = tape.shape(hs);
        let (nq, dq) = tape.shape(hq);
        if ns != ys.len() {
            return Err(Error::Dimension(format!("{ns} support rows, {} labels", ys.len())));
        }
        if d != dq {
            return Err(Error::Dimension(format!("support width {d}, query width {dq}")));
        }
        match self.kind {
            HeadKind::Proto => {
                let means = Arc::new(class_means(ys, k)?);
                let protos = tape.const_matmul(means, hs);
                let dist = tape.sq_dist(hq, protos);
                Ok(tape.scale(dist, -1.0))
            }
            HeadKind::Match => {
                class_means(ys, k)?;
                let sim = tape.cosine(hq, hs);
                let att = tape.softmax_rows(sim);
                let onehot = tape.leaf(one_hot(ys, k));
                Ok(tape.matmul(att, onehot))
            }
            HeadKind::Relation => {
                let (l0, l1) = self
                    .relation
                    .as_ref()
                    .ok_or_else(|| Error::Config("relation head without parameters".into()))?;
                if 2 * d != l0.d_in {
                    return Err(Error::Dimension(format!(
                        "relation network expects width {}, embeddings give {}",
                        l0.d_in,
                        2 * d
                    )));
                }
                let means = Arc::new(class_means(ys, k)?);
                let protos = tape.const_matmul(means, hs);
                let mut cols = Vec::with_capacity(k);
                for j in 0..k {
                    let cj = tape.select_rows(protos, Arc::new(vec![j; nq]));
                    let pair = tape.concat_cols(&[hq, cj]);
                    let hid = l0.forward(tape, p, pair)?;
                    let hid = tape.relu(hid);
                    let out = l1.forward(tape, p, hid)?;
                    cols.push(tape.sigmoid(out));
                }
                Ok(tape.concat_cols(&cols))
            }
        }
    }

    /// Loss summed over queries.
    pub fn loss(&self, tape: &mut Tape, scores: Var, yq: &[usize]) -> Result<Var> {
        let (nq, k) = tape.shape(scores);
        if nq != yq.len() || yq.iter().any(|&y| y >= k) {
            return Err(Error::Dimension(format!(
                "{nq} x {k} scores against {} query labels",
                yq.len()
            )));
        }
        let targets = Arc::new(yq.to_vec());
        Ok(match self.kind {
            HeadKind::Proto => tape.cross_entropy(scores, targets),
            HeadKind::Match => tape.nll_probs(scores, targets),
            HeadKind::Relation => {
                let diff = tape.add_const(scores, &(-one_hot(yq, k)));
                let sq = tape.square(diff);
                tape.sum_all(sq)
            }
        })
    }
}

fn eval_head(head: &Head, store: &ParamStore, hs: &Array2<f64>, ys: &[usize], hq: &Array2<f64>) -> Result<Array2<f64>> {
    let k = ys.iter().max().map_or(0, |m| m + 1);
    let mut tape = Tape::new();
    let p = store.bind(&mut tape);
    let s = tape.leaf(hs.clone());
    let q = tape.leaf(hq.clone());
    let out = head.scores(&mut tape, &p, s, ys, q, k)?;
    Ok(tape.value(out).clone())
}

/// Prototypical logits for plain embeddings; classes are `0..=max(ys)`.
pub fn proto_head(hs: &Array2<f64>, ys: &[usize], hq: &Array2<f64>) -> Result<Array2<f64>> {
    let head = Head {
        kind: HeadKind::Proto,
        relation: None,
    };
    eval_head(&head, &ParamStore::new(), hs, ys, hq)
}

/// Matching-network class distributions for plain embeddings.
pub fn match_head(hs: &Array2<f64>, ys: &[usize], hq: &Array2<f64>) -> Result<Array2<f64>> {
    let head = Head {
        kind: HeadKind::Match,
        relation: None,
    };
    eval_head(&head, &ParamStore::new(), hs, ys, hq)
}

/// Relation scores using the comparison network stored in `store`.
pub fn relation_head(
    head: &Head,
    store: &ParamStore,
    hs: &Array2<f64>,
    ys: &[usize],
    hq: &Array2<f64>,
) -> Result<Array2<f64>> {
    if head.kind != HeadKind::Relation {
        return Err(Error::Config("not a relation head".into()));
    }
    eval_head(head, store, hs, ys, hq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn softmax(row: &[f64]) -> Vec<f64> {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn proto_two_points() {
        let hs = array![[0.0, 0.0], [2.0, 0.0]];
        let hq = array![[0.4, 0.0]];
        let logits = proto_head(&hs, &[0, 1], &hq).unwrap();
        let p = softmax(&logits.row(0).to_vec());
        let oracle = 1.0 / (1.0 + (-2.4f64).exp());
        assert!((p[0] - oracle).abs() < 1e-12);
        assert!((p[0] - 0.9168).abs() < 1e-4);
    }

    #[test]
    fn one_shot_prototype_is_support() {
        let hs = array![[1.0, 2.0], [-1.0, 0.5]];
        let hq = array![[1.0, 2.0]];
        let logits = proto_head(&hs, &[0, 1], &hq).unwrap();
        assert_eq!(logits[[0, 0]], 0.0);
        assert!(logits[[0, 1]] < 0.0);
    }

    #[test]
    fn match_two_points() {
        let hs = array![[1.0, 0.0], [0.0, 1.0]];
        let hq = array![[1.0, 0.0]];
        let p = match_head(&hs, &[0, 1], &hq).unwrap();
        let e = std::f64::consts::E;
        assert!((p[[0, 0]] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[[0, 0]] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn match_single_class() {
        let hs = array![[1.0, 0.0], [0.3, 1.0]];
        let hq = array![[0.0, 0.0], [5.0, -2.0]];
        let p = match_head(&hs, &[0, 0], &hq).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn empty_class_errors() {
        let hs = array![[1.0, 0.0]];
        let mut tape = Tape::new();
        let s = tape.leaf(hs.clone());
        let q = tape.leaf(hs);
        let head = Head {
            kind: HeadKind::Proto,
            relation: None,
        };
        let p = ParamStore::new().bind(&mut tape);
        assert!(head.scores(&mut tape, &p, s, &[0], q, 2).is_err());
    }

    #[test]
    fn relation_ranges_and_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut store = ParamStore::new();
        let head = Head::new(&mut store, HeadKind::Relation, 3, &mut rng);
        let hs = crate::autodiff::uniform(&mut rng, (4, 3), 2.0);
        let hq = crate::autodiff::uniform(&mut rng, (6, 3), 2.0);
        let s = relation_head(&head, &store, &hs, &[0, 1, 0, 1], &hq).unwrap();
        assert!(s.iter().all(|&v| v > 0.0 && v < 1.0));
        let same = array![[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]];
        let s = relation_head(&head, &store, &same, &[0, 1], &hq).unwrap();
        for r in s.rows() {
            assert_eq!(r[0], r[1]);
        }
        let wide = array![[1.0, 2.0], [0.0, 1.0]];
        assert!(matches!(
            relation_head(&head, &store, &wide, &[0, 1], &wide),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn relation_bias_saturates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let head = Head::new(&mut store, HeadKind::Relation, 2, &mut rng);
        let bias = store.find("head.relation.1.bias").unwrap();
        store.get_mut(bias).fill(1e3);
        let hs = array![[0.1, 0.2], [0.3, -0.1]];
        let s = relation_head(&head, &store, &hs, &[0, 1], &hs).unwrap();
        assert!(s.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn head_names_parse() {
        assert_eq!("ProtoNet".parse::<HeadKind>().unwrap(), HeadKind::Proto);
        assert_eq!(HeadKind::Relation.to_string(), "relation");
        assert!("maml".parse::<HeadKind>().is_err());
    }
}
