//! Diffusion spectra. The production path maps the eigenvalues of the
//! symmetrically normalized adjacency through the diffusion's scalar
//! generating function; the series path materializes the truncated diffusion
//! matrix and diagonalizes it with an independent Jacobi solver.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::ViewConfig;
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionKind {
    /// Personalized PageRank, `theta_k = alpha (1 - alpha)^k`.
    Ppr,
    /// Heat kernel, `theta_k = e^{-t} t^k / k!`.
    Heat,
}

impl std::str::FromStr for DiffusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppr" => Ok(DiffusionKind::Ppr),
            "heat" => Ok(DiffusionKind::Heat),
            _ => Err(Error::Config(format!("unknown diffusion kind {s:?}"))),
        }
    }
}

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITER: usize = 10_000;

/// Sorted (descending) top-`d_z` eigenvalues of the diffusion matrix,
/// zero-padded on the right when the graph has fewer than `d_z` nodes.
pub fn diffusion_spectrum(g: &Graph, cfg: &ViewConfig) -> Result<Vec<f64>> {
    let t_sym = normalized_adjacency(g)?;
    let n = g.n_nodes();
    let eig = SymmetricEigen::try_new(t_sym, EIGEN_EPS, EIGEN_MAX_ITER).ok_or_else(|| {
        Error::Numerical(format!(
            "symmetric eigensolver did not converge (n={n}, eps={EIGEN_EPS}, max_iter={EIGEN_MAX_ITER})"
        ))
    })?;
    let mapped: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&lam| spectral_map(cfg, lam.clamp(-1.0, 1.0)))
        .collect();
    Ok(sort_and_pad(mapped, cfg.d_z))
}

/// Diffusion response to a single transition eigenvalue.
pub fn spectral_map(cfg: &ViewConfig, lambda: f64) -> f64 {
    match cfg.diffusion_kind {
        DiffusionKind::Ppr => cfg.teleport / (1.0 - (1.0 - cfg.teleport) * lambda),
        DiffusionKind::Heat => (cfg.heat_time * (lambda - 1.0)).exp(),
    }
}

/// Series coefficients `theta_0..=theta_K`.
pub fn series_coefficients(cfg: &ViewConfig) -> Vec<f64> {
    let k_max = cfg.series_truncation;
    let mut theta = Vec::with_capacity(k_max + 1);
    match cfg.diffusion_kind {
        DiffusionKind::Ppr => {
            let mut w = cfg.teleport;
            for _ in 0..=k_max {
                theta.push(w);
                w *= 1.0 - cfg.teleport;
            }
        }
        DiffusionKind::Heat => {
            let t = cfg.heat_time;
            let mut w = (-t).exp();
            for k in 0..=k_max {
                theta.push(w);
                w *= t / (k + 1) as f64;
            }
        }
    }
    theta
}

/// Verification path: builds `S = sum_k theta_k (A D^-1)^k` explicitly,
/// moves it to symmetric form by the similarity `D^-1/2 S D^1/2` and
/// diagonalizes with cyclic Jacobi rotations.
pub fn diffusion_spectrum_series_oracle(g: &Graph, cfg: &ViewConfig) -> Result<Vec<f64>> {
    let n = g.n_nodes();
    let deg = checked_degrees(g)?;
    let mut t = vec![vec![0.0; n]; n];
    for v in 0..n {
        for &u in g.neighbors(v) {
            // column-stochastic: T[u][v] = A[u][v] / deg(v)
            t[u][v] = 1.0 / deg[v];
        }
    }
    let theta = series_coefficients(cfg);
    let mut power = identity(n);
    let mut s = vec![vec![0.0; n]; n];
    for (k, &w) in theta.iter().enumerate() {
        if k > 0 {
            power = matmul(&t, &power);
        }
        for i in 0..n {
            for j in 0..n {
                s[i][j] += w * power[i][j];
            }
        }
    }
    let mut sym = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            sym[i][j] = s[i][j] * deg[j].sqrt() / deg[i].sqrt();
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (sym[i][j] + sym[j][i]);
            sym[i][j] = avg;
            sym[j][i] = avg;
        }
    }
    let values = jacobi_eigenvalues(sym)?;
    Ok(sort_and_pad(values, cfg.d_z))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi sweeps.
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Result<Vec<f64>> {
    let n = a.len();
    let max_sweeps = 100;
    for _ in 0..max_sweeps {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            return Ok((0..n).map(|i| a[i][i]).collect());
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    Err(Error::Numerical(format!(
        "jacobi eigensolver did not converge in {max_sweeps} sweeps (n={n})"
    )))
}

fn checked_degrees(g: &Graph) -> Result<Vec<f64>> {
    let deg = g.degrees();
    if let Some(v) = deg.iter().position(|&d| d == 0) {
        return Err(Error::InvalidGraph(format!(
            "node {v} is isolated; diffusion needs every degree >= 1"
        )));
    }
    Ok(deg.into_iter().map(|d| d as f64).collect())
}

/// `D^-1/2 A D^-1/2`, similar to the column-stochastic `A D^-1`.
fn normalized_adjacency(g: &Graph) -> Result<DMatrix<f64>> {
    let deg = checked_degrees(g)?;
    let n = g.n_nodes();
    let mut m = DMatrix::zeros(n, n);
    for v in 0..n {
        for &u in g.neighbors(v) {
            m[(u, v)] = 1.0 / (deg[u] * deg[v]).sqrt();
        }
    }
    Ok(m)
}

fn sort_and_pad(mut values: Vec<f64>, d_z: usize) -> Vec<f64> {
    values.sort_by(|a, b| b.total_cmp(a));
    values.resize(d_z, 0.0);
    values
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut c = vec![vec![0.0; n]; n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i][k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i][j] += aik * b[k][j];
            }
        }
    }
    c
}
