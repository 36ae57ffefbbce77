//! Multi-view graph encoder.
//!
//! Two GIN stacks embed the contextual view `(A, X')` and the degree view
//! `(A, U)`; each is mean-pooled to a graph vector. An MLP projects the
//! diffusion spectrum `z` to the same width. A one-hidden-layer attention
//! module scores the three vectors,
//!
//! ```text
//! alpha = softmax(relu([h_x | h_u | h_z] W1) W2)
//! h     = alpha_0 h_x + alpha_1 h_u + alpha_2 h_z
//! ```
//!
//! Views switched off for ablations contribute nothing and have their
//! attention logit masked out, so `alpha` stays on the simplex of the
//! enabled views.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    dropout, fwt, xavier_uniform, Bound, FwtConfig, GinConv, Mlp, Mode, ParamId, ParamStore, Tape, Var,
};
use crate::error::{Error, Result};
use crate::graph::Adjacency;
use crate::views::{ViewBundle, ViewConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_h: usize,
    pub gnn_layers: usize,
    pub mlp_layers: usize,
    pub dropout: f64,
    pub fwt: FwtConfig,
    pub use_x: bool,
    pub use_u: bool,
    pub use_z: bool,
    /// Scale each view embedding to unit L2 norm before attention.
    pub normalize_views: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_h: 256,
            gnn_layers: 2,
            mlp_layers: 2,
            dropout: 0.6,
            fwt: FwtConfig::default(),
            use_x: true,
            use_u: true,
            use_z: true,
            normalize_views: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.use_x || self.use_u || self.use_z) {
            return Err(Error::Config("at least one view must be enabled".into()));
        }
        if !(1..=3).contains(&self.gnn_layers) || !(1..=3).contains(&self.mlp_layers) {
            return Err(Error::Config(format!(
                "gnn_layers and mlp_layers must be in 1..=3, got {} and {}",
                self.gnn_layers, self.mlp_layers
            )));
        }
        if self.d_h == 0 {
            return Err(Error::Config("d_h must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn view_mask(&self) -> [bool; 3] {
        [self.use_x, self.use_u, self.use_z]
    }

    /// Parses `X`, `X,U`, `X,Z`, `X,U,Z` (any order, any subset).
    pub fn set_views(&mut self, spec: &str) -> Result<()> {
        let (mut x, mut u, mut z) = (false, false, false);
        for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match part.to_ascii_uppercase().as_str() {
                "X" => x = true,
                "U" => u = true,
                "Z" => z = true,
                other => return Err(Error::Config(format!("unknown view {other:?}"))),
            }
        }
        self.use_x = x;
        self.use_u = u;
        self.use_z = z;
        self.validate()
    }

    pub fn views_label(&self) -> String {
        let mut parts = Vec::new();
        if self.use_x {
            parts.push("X");
        }
        if self.use_u {
            parts.push("U");
        }
        if self.use_z {
            parts.push("Z");
        }
        parts.join(",")
    }
}

/// Parameter layout of the encoder. Values live in a [`ParamStore`]; names
/// are prefixed `theta.`, `phi.`, `psi.` and `omega.` by group.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub d_x: usize,
    pub d_u: usize,
    pub d_z: usize,
    pub theta: Vec<GinConv>,
    pub phi: Vec<GinConv>,
    pub psi: Mlp,
    pub w1: ParamId,
    pub w2: ParamId,
}

/// Batched encoder output on a tape.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// N x d_h graph embeddings.
    pub h: Var,
    /// N x 3 attention weights.
    pub alpha: Var,
}

impl Encoder {
    /// Registers Xavier-initialized parameters in `store`.
    pub fn new(
        store: &mut ParamStore,
        cfg: &EncoderConfig,
        views: &ViewConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let d_h = cfg.d_h;
        let theta = gin_stack(store, "theta", views.d_pad, cfg, rng);
        let phi = gin_stack(store, "phi", views.d_u, cfg, rng);
        let psi = Mlp::new(store, "psi", views.d_z, d_h, cfg.mlp_layers, rng);
        let w1 = store.add("omega.w1", xavier_uniform(rng, 3 * d_h, d_h));
        let w2 = store.add("omega.w2", xavier_uniform(rng, d_h, 3));
        Ok(Encoder {
            cfg: cfg.clone(),
            d_x: views.d_pad,
            d_u: views.d_u,
            d_z: views.d_z,
            theta,
            phi,
            psi,
            w1,
            w2,
        })
    }

    fn check_bundle(&self, b: &ViewBundle) -> Result<()> {
        let n = b.n_nodes();
        if b.contextual.dim() != (n, self.d_x) {
            return Err(Error::Dimension(format!(
                "contextual view {:?}, encoder expects ({n}, {})",
                b.contextual.dim(),
                self.d_x
            )));
        }
        if b.topological.dim() != (n, self.d_u) {
            return Err(Error::Dimension(format!(
                "topological view {:?}, encoder expects ({n}, {})",
                b.topological.dim(),
                self.d_u
            )));
        }
        if b.spectrum.len() != self.d_z {
            return Err(Error::Dimension(format!(
                "spectrum of length {}, encoder expects {}",
                b.spectrum.len(),
                self.d_z
            )));
        }
        Ok(())
    }

    /// GIN stack -> FWT -> swish -> dropout per layer, then mean readout.
    fn graph_stack(
        &self,
        tape: &mut Tape,
        p: &Bound,
        stack: &[GinConv],
        adj: &Arc<Adjacency>,
        offsets: &Arc<Vec<usize>>,
        x: Array2<f64>,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<Var> {
        let mut h = tape.leaf(x);
        for conv in stack {
            h = conv.forward(tape, p, adj, h)?;
            h = fwt(tape, h, &self.cfg.fwt, mode, rng);
            h = tape.swish(h);
            h = dropout(tape, h, self.cfg.dropout, mode, rng);
        }
        Ok(tape.segment_mean(h, offsets.clone()))
    }

    /// Encodes a batch of graphs at once (block-diagonal adjacency).
    pub fn encode_batch(
        &self,
        tape: &mut Tape,
        p: &Bound,
        bundles: &[&ViewBundle],
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<Encoded> {
        self.cfg.validate()?;
        if bundles.is_empty() {
            return Err(Error::InvalidParameter("empty batch".into()));
        }
        for b in bundles {
            self.check_bundle(b)?;
        }
        let n_graphs = bundles.len();
        let mut offsets = vec![0usize];
        for b in bundles {
            offsets.push(offsets.last().copied().unwrap_or(0) + b.n_nodes());
        }
        let offsets = Arc::new(offsets);
        let adj = Arc::new(Adjacency::block_diag(bundles.iter().map(|b| &*b.adjacency)));
        let stack_rows = |f: &dyn Fn(&ViewBundle) -> ndarray::ArrayView2<f64>| {
            let views: Vec<_> = bundles.iter().map(|b| f(b)).collect();
            ndarray::concatenate(ndarray::Axis(0), &views).expect("widths checked")
        };

        let mut parts: Vec<Option<Var>> = vec![None; 3];
        if self.cfg.use_x {
            let x = stack_rows(&|b| b.contextual.view());
            parts[0] = Some(self.graph_stack(tape, p, &self.theta, &adj, &offsets, x, mode, rng)?);
        }
        if self.cfg.use_u {
            let u = stack_rows(&|b| b.topological.view());
            parts[1] = Some(self.graph_stack(tape, p, &self.phi, &adj, &offsets, u, mode, rng)?);
        }
        if self.cfg.use_z {
            let mut z = Array2::zeros((n_graphs, self.d_z));
            for (mut row, b) in z.rows_mut().into_iter().zip(bundles) {
                row.assign(&b.spectrum);
            }
            let zv = tape.leaf(z);
            parts[2] = Some(self.psi.forward(tape, p, zv)?);
        }

        if self.cfg.normalize_views {
            for part in parts.iter_mut().flatten() {
                *part = tape.l2_normalize_rows(*part);
            }
        }
        let zeros = tape.leaf(Array2::zeros((n_graphs, self.cfg.d_h)));
        let cat: Vec<Var> = parts.iter().map(|v| v.unwrap_or(zeros)).collect();
        let joined = tape.concat_cols(&cat);
        let hidden = tape.matmul(joined, p.var(self.w1));
        let hidden = tape.relu(hidden);
        let hidden = dropout(tape, hidden, self.cfg.dropout, mode, rng);
        let logits = tape.matmul(hidden, p.var(self.w2));
        let alpha = tape.masked_softmax_rows(logits, &self.cfg.view_mask());

        let mut h: Option<Var> = None;
        for (j, part) in parts.iter().enumerate() {
            let Some(view) = *part else { continue };
            let weight = tape.column(alpha, j);
            let term = tape.row_scale(view, weight);
            h = Some(match h {
                None => term,
                Some(acc) => tape.add(acc, term),
            });
        }
        Ok(Encoded {
            h: h.expect("validated: one view enabled"),
            alpha,
        })
    }

    /// Embedding and attention weights of one graph.
    pub fn encode_graph(
        &self,
        store: &ParamStore,
        bundle: &ViewBundle,
        mode: Mode,
        rng: &mut impl Rng,
    ) -> Result<(Array1<f64>, Array1<f64>)> {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let out = self.encode_batch(&mut tape, &p, &[bundle], mode, rng)?;
        Ok((
            tape.value(out.h).row(0).to_owned(),
            tape.value(out.alpha).row(0).to_owned(),
        ))
    }

    /// Eval-mode embeddings of many graphs as an `N x d_h` matrix.
    pub fn embed(&self, store: &ParamStore, bundles: &[&ViewBundle]) -> Result<Array2<f64>> {
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.encode_batch(&mut tape, &p, bundles, Mode::Eval, &mut rng)?;
        Ok(tape.value(out.h).clone())
    }
}

fn gin_stack(
    store: &mut ParamStore,
    name: &str,
    d_in: usize,
    cfg: &EncoderConfig,
    rng: &mut impl Rng,
) -> Vec<GinConv> {
    (0..cfg.gnn_layers)
        .map(|l| {
            let din = if l == 0 { d_in } else { cfg.d_h };
            GinConv::new(store, &format!("{name}.{l}"), din, cfg.d_h, cfg.mlp_layers, rng)
        })
        .collect()
}

/// Plain-vector form of the attention aggregation, for inspection and tests.
pub fn attention_aggregate(
    h_x: &Array1<f64>,
    h_u: &Array1<f64>,
    h_z: &Array1<f64>,
    w1: &Array2<f64>,
    w2: &Array2<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let d = h_x.len();
    if h_u.len() != d || h_z.len() != d {
        return Err(Error::Dimension("attention inputs must share a width".into()));
    }
    if w1.dim() != (3 * d, d) || w2.dim() != (d, 3) {
        return Err(Error::Dimension(format!(
            "attention weights {:?} / {:?} for width {d}",
            w1.dim(),
            w2.dim()
        )));
    }
    let mut tape = Tape::new();
    let vx = tape.leaf(h_x.clone().insert_axis(ndarray::Axis(0)));
    let vu = tape.leaf(h_u.clone().insert_axis(ndarray::Axis(0)));
    let vz = tape.leaf(h_z.clone().insert_axis(ndarray::Axis(0)));
    let a = tape.leaf(w1.clone());
    let b = tape.leaf(w2.clone());
    let cat = tape.concat_cols(&[vx, vu, vz]);
    let hid = tape.matmul(cat, a);
    let hid = tape.relu(hid);
    let logits = tape.matmul(hid, b);
    let alpha = tape.softmax_rows(logits);
    let al = tape.value(alpha).row(0).to_owned();
    let h = h_x * al[0] + h_u * al[1] + h_z * al[2];
    Ok((h, al))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{synth_graph, Family};
    use crate::views::build_views;

    fn small_cfg() -> EncoderConfig {
        EncoderConfig {
            d_h: 8,
            ..Default::default()
        }
    }

    fn small_views() -> ViewConfig {
        ViewConfig {
            d_pad: 16,
            d_u: 4,
            d_z: 6,
            ..Default::default()
        }
    }

    #[test]
    fn zero_w2_gives_uniform_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hx = Array1::from_vec(vec![1.0, 2.0]);
        let hu = Array1::from_vec(vec![-1.0, 0.5]);
        let hz = Array1::from_vec(vec![4.0, 0.0]);
        let w1 = xavier_uniform(&mut rng, 6, 2);
        let (h, a) = attention_aggregate(&hx, &hu, &hz, &w1, &Array2::zeros((2, 3))).unwrap();
        for &v in &a {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let mean = (&hx + &hu + &hz) / 3.0;
        for (x, y) in h.iter().zip(mean.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn equal_views_pass_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = Array1::from_vec(vec![0.3, -0.7, 2.0]);
        let w1 = xavier_uniform(&mut rng, 9, 3);
        let w2 = xavier_uniform(&mut rng, 3, 3);
        let (h, a) = attention_aggregate(&v, &v, &v, &w1, &w2).unwrap();
        assert!((a.sum() - 1.0).abs() < 1e-12);
        for (x, y) in h.iter().zip(v.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(attention_aggregate(&v, &v, &v, &w1, &Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn x_only_attention_is_one_hot() {
        let mut cfg = small_cfg();
        cfg.set_views("X").unwrap();
        let views = small_views();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, &cfg, &views, &mut rng).unwrap();
        let g = synth_graph(&Family::Cycle { n: 6 }, 0).unwrap();
        let b = build_views(&g, &views).unwrap();
        let (_, alpha) = enc.encode_graph(&store, &b, Mode::Eval, &mut rng).unwrap();
        assert_eq!(alpha.to_vec(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn no_views_is_config_error() {
        let mut cfg = small_cfg();
        assert!(cfg.set_views("").is_err());
        assert!(cfg.set_views("X,Q").is_err());
        assert!(cfg.set_views("z,x").is_ok());
        assert_eq!(cfg.views_label(), "X,Z");
    }

    #[test]
    fn train_mode_is_seed_deterministic() {
        let cfg = small_cfg();
        let views = small_views();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, &cfg, &views, &mut rng).unwrap();
        let g = synth_graph(&Family::Tree { n: 9 }, 4).unwrap();
        let b = build_views(&g, &views).unwrap();
        let run = || {
            let mut r = ChaCha8Rng::seed_from_u64(77);
            enc.encode_graph(&store, &b, Mode::Train, &mut r).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_mismatched_bundle() {
        let cfg = small_cfg();
        let views = small_views();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, &cfg, &views, &mut rng).unwrap();
        let g = synth_graph(&Family::Tree { n: 9 }, 4).unwrap();
        let b = build_views(&g, &ViewConfig::default()).unwrap();
        assert!(matches!(
            enc.encode_graph(&store, &b, Mode::Eval, &mut rng),
            Err(Error::Dimension(_))
        ));
    }
}
