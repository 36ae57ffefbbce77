//! Differentiable layers built on the tape.

use std::sync::Arc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::init::xavier_uniform;
use super::params::{Bound, ParamId, ParamStore};
use super::tape::{Mat, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Adjacency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Train,
    Eval,
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn inverse_softplus(y: f64) -> f64 {
    y.exp_m1().ln()
}

/// `x W + b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let weight = store.add(format!("{name}.weight"), xavier_uniform(rng, d_in, d_out));
        let bias = store.add(format!("{name}.bias"), Array2::zeros((1, d_out)));
        Linear {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let (_, d) = tape.shape(x);
        if d != self.d_in {
            return Err(Error::Dimension(format!(
                "linear layer expects width {}, got {d}",
                self.d_in
            )));
        }
        let xw = tape.matmul(x, p.var(self.weight));
        Ok(tape.add_row(xw, p.var(self.bias)))
    }
}

/// Linear layers with swish between them (none after the last).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// `n_layers` linear maps `d_in -> d_out -> ... -> d_out`.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        n_layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let layers = (0..n_layers)
            .map(|i| {
                let din = if i == 0 { d_in } else { d_out };
                Linear::new(store, &format!("{name}.{i}"), din, d_out, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = tape.swish(h);
            }
            h = layer.forward(tape, p, h)?;
        }
        Ok(h)
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in
    }
}

/// GIN convolution: `MLP((1 + eps) h_v + sum_{u in N(v)} h_u)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GinConv {
    pub eps: ParamId,
    pub mlp: Mlp,
}

impl GinConv {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        mlp_layers: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let eps = store.add(format!("{name}.eps"), Array2::zeros((1, 1)));
        let mlp = Mlp::new(store, &format!("{name}.mlp"), d_in, d_out, mlp_layers, rng);
        GinConv { eps, mlp }
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, adj: &Arc<Adjacency>, h: Var) -> Result<Var> {
        let (n, d) = tape.shape(h);
        if n != adj.n_nodes() {
            return Err(Error::Dimension(format!(
                "{n} feature rows for {} nodes",
                adj.n_nodes()
            )));
        }
        if d != self.mlp.d_in() {
            return Err(Error::Dimension(format!(
                "GIN expects width {}, got {d}",
                self.mlp.d_in()
            )));
        }
        gin_conv(tape, p, adj, h, p.var(self.eps), &self.mlp)
    }
}

/// The GIN update with explicit `eps` node and MLP.
pub fn gin_conv(
    tape: &mut Tape,
    p: &Bound,
    adj: &Arc<Adjacency>,
    h: Var,
    eps: Var,
    mlp: &Mlp,
) -> Result<Var> {
    let one_plus = tape.add_scalar(eps, 1.0);
    let own = tape.scalar_mul(one_plus, h);
    let neigh = tape.aggregate(h, adj.clone());
    let total = tape.add(own, neigh);
    mlp.forward(tape, p, total)
}

/// Feature-wise transform settings. The standard deviations of the sampled
/// scale and shift are `softplus(theta_gamma)` and `softplus(theta_beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FwtConfig {
    pub enabled: bool,
    pub theta_gamma: f64,
    pub theta_beta: f64,
}

impl Default for FwtConfig {
    fn default() -> Self {
        FwtConfig {
            enabled: true,
            theta_gamma: inverse_softplus(0.3),
            theta_beta: inverse_softplus(0.5),
        }
    }
}

/// Train mode draws one `gamma ~ N(1, sd_gamma)` and `beta ~ N(0, sd_beta)`
/// for the whole layer and returns `gamma * h + beta`; eval mode is identity.
pub fn fwt(tape: &mut Tape, h: Var, cfg: &FwtConfig, mode: Mode, rng: &mut impl Rng) -> Var {
    if mode == Mode::Eval || !cfg.enabled {
        return h;
    }
    let sd_g = softplus(cfg.theta_gamma);
    let sd_b = softplus(cfg.theta_beta);
    let gamma = Normal::new(1.0, sd_g).expect("finite sd").sample(rng);
    let beta = Normal::new(0.0, sd_b).expect("finite sd").sample(rng);
    tape.affine(h, gamma, beta)
}

/// Inverted dropout: survivors are scaled by `1 / (1 - p)` in train mode.
pub fn dropout(tape: &mut Tape, x: Var, p: f64, mode: Mode, rng: &mut impl Rng) -> Var {
    if mode == Mode::Eval || p == 0.0 {
        return x;
    }
    let keep = 1.0 / (1.0 - p);
    let dim = tape.shape(x);
    let mask = Mat::from_shape_simple_fn(dim, || if rng.random::<f64>() < p { 0.0 } else { keep });
    tape.mask_mul(x, Arc::new(mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn k2() -> Arc<Adjacency> {
        let g = crate::graph::Graph::from_edges(2, &[(0, 1)], Mat::ones((2, 1)), 0).unwrap();
        Arc::new(Adjacency::from(&g))
    }

    /// 1x1 linear layer set to identity.
    fn identity_mlp(store: &mut ParamStore) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::new(store, "id", 1, 1, 1, &mut rng);
        *store.get_mut(mlp.layers[0].weight) = array![[1.0]];
        mlp
    }

    #[test]
    fn gin_k2_hand_aggregation() {
        let mut store = ParamStore::new();
        let mlp = identity_mlp(&mut store);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let h = tape.leaf(array![[1.0], [3.0]]);
        let eps = tape.leaf(array![[0.0]]);
        let out = gin_conv(&mut tape, &p, &k2(), h, eps, &mlp).unwrap();
        assert_eq!(tape.value(out), &array![[4.0], [4.0]]);
    }

    #[test]
    fn gin_edgeless_is_identity() {
        let g = crate::graph::Graph::from_edges(3, &[], Mat::ones((3, 1)), 0).unwrap();
        let adj = Arc::new(Adjacency::from(&g));
        let mut store = ParamStore::new();
        let mlp = identity_mlp(&mut store);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let h = tape.leaf(array![[1.0], [-2.0], [5.0]]);
        let eps = tape.leaf(array![[0.0]]);
        let out = gin_conv(&mut tape, &p, &adj, h, eps, &mlp).unwrap();
        assert_eq!(tape.value(out), tape.value(h));
    }

    #[test]
    fn gin_width_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let conv = GinConv::new(&mut store, "g", 3, 4, 2, &mut rng);
        let mut tape = Tape::new();
        let p = store.bind(&mut tape);
        let h = tape.leaf(Mat::ones((2, 2)));
        assert!(matches!(conv.forward(&mut tape, &p, &k2(), h), Err(Error::Dimension(_))));
    }

    #[test]
    fn fwt_eval_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut tape = Tape::new();
        let h = tape.leaf(array![[1.0, -2.0]]);
        let out = fwt(&mut tape, h, &FwtConfig::default(), Mode::Eval, &mut rng);
        assert_eq!(out, h);
    }

    #[test]
    fn fwt_degenerate_distribution_is_near_identity() {
        let cfg = FwtConfig {
            enabled: true,
            theta_gamma: -60.0,
            theta_beta: -60.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let h = tape.leaf(array![[1.0, -2.0]]);
        let out = fwt(&mut tape, h, &cfg, Mode::Train, &mut rng);
        for (a, b) in tape.value(out).iter().zip(tape.value(h)) {
            assert!((a - b).abs() < 1e-20);
        }
    }

    #[test]
    fn fwt_seeded_is_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut tape = Tape::new();
            let h = tape.leaf(array![[1.0, -2.0], [0.5, 0.25]]);
            let out = fwt(&mut tape, h, &FwtConfig::default(), Mode::Train, &mut rng);
            tape.value(out).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn fwt_default_sds() {
        let cfg = FwtConfig::default();
        assert!((softplus(cfg.theta_gamma) - 0.3).abs() < 1e-14);
        assert!((softplus(cfg.theta_beta) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn dropout_scales_survivors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let x = tape.leaf(Mat::ones((50, 40)));
        let y = dropout(&mut tape, x, 0.6, Mode::Train, &mut rng);
        let vals = tape.value(y);
        assert!(vals.iter().all(|&v| v == 0.0 || (v - 2.5).abs() < 1e-15));
        let kept = vals.iter().filter(|&&v| v > 0.0).count() as f64 / 2000.0;
        assert!((kept - 0.4).abs() < 0.05);
        let z = dropout(&mut tape, x, 0.6, Mode::Eval, &mut rng);
        assert_eq!(z, x);
    }
}
