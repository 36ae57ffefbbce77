//! The three congruent views of a graph: contextual features on the original
//! adjacency, sinusoidal degree encodings on the same adjacency, and the
//! sorted diffusion spectrum.

mod spectrum;

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Adjacency, Graph};

pub use spectrum::{
    diffusion_spectrum, diffusion_spectrum_series_oracle, jacobi_eigenvalues, series_coefficients,
    spectral_map, DiffusionKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextualMode {
    Pad,
    Deepset,
    HeteroConcat,
}

impl std::str::FromStr for ContextualMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pad" => Ok(ContextualMode::Pad),
            "deepset" => Ok(ContextualMode::Deepset),
            "hetero_concat" => Ok(ContextualMode::HeteroConcat),
            _ => Err(Error::Config(format!("unknown contextual mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewConfig {
    pub contextual_mode: ContextualMode,
    pub d_pad: usize,
    pub d_u: usize,
    pub d_z: usize,
    pub diffusion_kind: DiffusionKind,
    pub teleport: f64,
    pub heat_time: f64,
    pub series_truncation: usize,
    /// Output width of the projection in `hetero_concat` mode.
    pub hetero_dim: usize,
    /// Seed of the fixed projections used by `deepset` and `hetero_concat`.
    pub projection_seed: u64,
}

impl Default for ViewConfig {
    fn default() -> Self {
        ViewConfig {
            contextual_mode: ContextualMode::Pad,
            d_pad: 100,
            d_u: 32,
            d_z: 128,
            diffusion_kind: DiffusionKind::Ppr,
            teleport: 0.2,
            heat_time: 5.0,
            series_truncation: 64,
            hetero_dim: 32,
            projection_seed: 0,
        }
    }
}

impl ViewConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.teleport > 0.0 && self.teleport < 1.0) {
            return Err(Error::Config(format!("teleport {} not in (0, 1)", self.teleport)));
        }
        if self.d_u == 0 || self.d_u % 2 != 0 {
            return Err(Error::Config(format!("d_u must be even and positive, got {}", self.d_u)));
        }
        if self.heat_time <= 0.0 {
            return Err(Error::Config("heat_time must be positive".into()));
        }
        if self.d_pad == 0 || self.d_z == 0 {
            return Err(Error::Config("d_pad and d_z must be positive".into()));
        }
        Ok(())
    }
}

/// Views of one graph, all sharing the graph's adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBundle {
    pub adjacency: Arc<Adjacency>,
    /// n x d_pad augmented node features.
    pub contextual: Array2<f64>,
    /// n x d_u degree encodings.
    pub topological: Array2<f64>,
    /// d_z sorted diffusion eigenvalues.
    pub spectrum: Array1<f64>,
    pub origin_id: String,
    pub label: i64,
}

impl ViewBundle {
    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_nodes()
    }
}

/// Zero-pads the feature columns to width `d_pad`.
pub fn pad_features(x: &Array2<f64>, d_pad: usize) -> Result<Array2<f64>> {
    let (n, d) = x.dim();
    if d > d_pad {
        return Err(Error::Dimension(format!("feature width {d} exceeds d_pad {d_pad}")));
    }
    let mut out = Array2::zeros((n, d_pad));
    out.slice_mut(ndarray::s![.., ..d]).assign(x);
    Ok(out)
}

/// Shared scalar-to-vector map used by the deep-set augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarLift {
    pub weight: Array1<f64>,
    pub bias: Array1<f64>,
}

/// Lifts every scalar feature through the same `1 -> d_pad` linear map and
/// sums over feature positions, so the result ignores column order.
pub fn deepset_features(x: &Array2<f64>, lift: &ScalarLift, d_pad: usize) -> Result<Array2<f64>> {
    if lift.weight.len() != d_pad || lift.bias.len() != d_pad {
        return Err(Error::Dimension(format!(
            "lift width {} does not match d_pad {d_pad}",
            lift.weight.len()
        )));
    }
    let (n, d) = x.dim();
    let mut out = Array2::zeros((n, d_pad));
    for (mut row, xr) in out.rows_mut().into_iter().zip(x.rows()) {
        let total: f64 = xr.sum();
        row.scaled_add(total, &lift.weight);
        row.scaled_add(d as f64, &lift.bias);
    }
    Ok(out)
}

/// `[X | X W + b | 0]`, padded to `d_pad`.
pub fn hetero_concat_features(
    x: &Array2<f64>,
    weight: &Array2<f64>,
    bias: &Array1<f64>,
    d_pad: usize,
) -> Result<Array2<f64>> {
    let (n, d) = x.dim();
    if weight.nrows() != d || weight.ncols() != bias.len() {
        return Err(Error::Dimension(format!(
            "projection {:?} incompatible with width {d}",
            weight.dim()
        )));
    }
    let p = weight.ncols();
    if d + p > d_pad {
        return Err(Error::Dimension(format!("{d} + {p} exceeds d_pad {d_pad}")));
    }
    let mut out = Array2::zeros((n, d_pad));
    out.slice_mut(ndarray::s![.., ..d]).assign(x);
    let proj = x.dot(weight) + bias;
    out.slice_mut(ndarray::s![.., d..d + p]).assign(&proj);
    Ok(out)
}

/// Transformer-style sinusoids with the node degree as position.
pub fn degree_encoding(g: &Graph, d_u: usize) -> Result<Array2<f64>> {
    if d_u % 2 != 0 {
        return Err(Error::Dimension(format!("d_u must be even, got {d_u}")));
    }
    let n = g.n_nodes();
    let mut u = Array2::zeros((n, d_u));
    for v in 0..n {
        let deg = g.degree(v) as f64;
        for i in 0..d_u / 2 {
            let freq = 10000f64.powf(2.0 * i as f64 / d_u as f64);
            let angle = deg / freq;
            u[[v, 2 * i]] = angle.sin();
            u[[v, 2 * i + 1]] = angle.cos();
        }
    }
    Ok(u)
}

fn contextual_view(g: &Graph, cfg: &ViewConfig) -> Result<Array2<f64>> {
    let x = g.features();
    match cfg.contextual_mode {
        ContextualMode::Pad => pad_features(x, cfg.d_pad),
        ContextualMode::Deepset => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.projection_seed);
            let bound = (6.0 / (1 + cfg.d_pad) as f64).sqrt();
            let lift = ScalarLift {
                weight: crate::autodiff::uniform(&mut rng, (1, cfg.d_pad), bound).row(0).to_owned(),
                bias: Array1::zeros(cfg.d_pad),
            };
            deepset_features(x, &lift, cfg.d_pad)
        }
        ContextualMode::HeteroConcat => {
            // one fixed projection per input width
            let d = x.ncols();
            let seed = cfg.projection_seed ^ (d as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let weight = crate::autodiff::xavier_uniform(&mut rng, d, cfg.hetero_dim);
            hetero_concat_features(x, &weight, &Array1::zeros(cfg.hetero_dim), cfg.d_pad)
        }
    }
}

/// Builds all three views of `g`. Deterministic in `(g, cfg)`.
pub fn build_views(g: &Graph, cfg: &ViewConfig) -> Result<ViewBundle> {
    cfg.validate()?;
    Ok(ViewBundle {
        adjacency: Arc::new(Adjacency::from(g)),
        contextual: contextual_view(g, cfg)?,
        topological: degree_encoding(g, cfg.d_u)?,
        spectrum: Array1::from(diffusion_spectrum(g, cfg)?),
        origin_id: g.origin_id().to_string(),
        label: g.label(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{synth_graph, Family};
    use ndarray::array;

    #[test]
    fn pad_row() {
        let out = pad_features(&array![[1.0, 2.0]], 5).unwrap();
        assert_eq!(out, array![[1.0, 2.0, 0.0, 0.0, 0.0]]);
    }

    #[test]
    fn pad_identity_and_zero() {
        let x = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(pad_features(&x, 2).unwrap(), x);
        let z = Array2::<f64>::zeros((3, 2));
        assert_eq!(pad_features(&z, 4).unwrap(), Array2::<f64>::zeros((3, 4)));
        assert!(pad_features(&x, 1).is_err());
    }

    #[test]
    fn deepset_sums_lifted_scalars() {
        let lift = ScalarLift {
            weight: array![1.0, -2.0, 0.5],
            bias: Array1::zeros(3),
        };
        let out = deepset_features(&array![[2.0, 3.0]], &lift, 3).unwrap();
        assert_eq!(out, array![[5.0, -10.0, 2.5]]);

        let lift = ScalarLift {
            weight: array![1.0, 2.0],
            bias: array![0.5, -1.0],
        };
        let out = deepset_features(&array![[1.0]], &lift, 2).unwrap();
        assert_eq!(out, array![[1.5, 1.0]]);
    }

    #[test]
    fn deepset_ignores_column_order() {
        let lift = ScalarLift {
            weight: array![0.3, -0.7],
            bias: array![0.1, 0.2],
        };
        let a = deepset_features(&array![[1.0, 2.0, 3.0]], &lift, 2).unwrap();
        let b = deepset_features(&array![[3.0, 1.0, 2.0]], &lift, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn hetero_concat_cases() {
        let x = array![[1.0, 2.0]];
        let zero = hetero_concat_features(&x, &Array2::zeros((2, 2)), &Array1::zeros(2), 6).unwrap();
        assert_eq!(zero, array![[1.0, 2.0, 0.0, 0.0, 0.0, 0.0]]);
        let eye = hetero_concat_features(&x, &Array2::eye(2), &Array1::zeros(2), 4).unwrap();
        assert_eq!(eye, array![[1.0, 2.0, 1.0, 2.0]]);
        assert!(hetero_concat_features(&x, &Array2::eye(2), &Array1::zeros(2), 3).is_err());
    }

    #[test]
    fn degree_encoding_values() {
        let g = Graph::from_edges(2, &[], Array2::ones((2, 1)), 0).unwrap();
        let u = degree_encoding(&g, 4).unwrap();
        assert_eq!(u.row(0).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);

        let star = synth_graph(&Family::Star { n: 4 }, 0).unwrap();
        let u = degree_encoding(&star, 2).unwrap();
        assert!((u[[0, 0]] - 0.141_120_008_059_867_2).abs() < 1e-15);
        assert!((u[[0, 1]] + 0.989_992_496_600_445_4).abs() < 1e-15);
        assert!(degree_encoding(&star, 3).is_err());
    }

    #[test]
    fn build_views_defaults_on_c5() {
        let g = synth_graph(&Family::Cycle { n: 5 }, 0).unwrap();
        let b = build_views(&g, &ViewConfig::default()).unwrap();
        assert_eq!(b.contextual.dim(), (5, 100));
        assert_eq!(b.topological.dim(), (5, 32));
        assert_eq!(b.spectrum.len(), 128);
        assert_eq!(b, build_views(&g, &ViewConfig::default()).unwrap());
    }

    #[test]
    fn relabeled_cycle_has_same_spectrum() {
        let g = synth_graph(&Family::Cycle { n: 5 }, 0).unwrap();
        let p = g.permute(&[3, 0, 4, 1, 2]).unwrap();
        let a = build_views(&g, &ViewConfig::default()).unwrap();
        let b = build_views(&p, &ViewConfig::default()).unwrap();
        for (x, y) in a.spectrum.iter().zip(b.spectrum.iter()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn all_modes_build() {
        let g = synth_graph(&Family::Tree { n: 8 }, 2).unwrap();
        for mode in [ContextualMode::Pad, ContextualMode::Deepset, ContextualMode::HeteroConcat] {
            let cfg = ViewConfig {
                contextual_mode: mode,
                ..Default::default()
            };
            let b = build_views(&g, &cfg).unwrap();
            assert_eq!(b.contextual.dim(), (8, 100));
        }
    }

    #[test]
    fn config_validation() {
        let bad = ViewConfig {
            teleport: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ViewConfig {
            d_u: 31,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
