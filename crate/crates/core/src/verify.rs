//! Property checks behind the acceptance suite and the `verify` command.
//!
//! Each check returns a [`Check`] with a pass flag and a one-line detail;
//! only genuine failures to run (I/O, invalid setup) are errors.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::autodiff::{
    dropout, finite_diff_by_param, fwt, gin_conv, uniform, Bound, FwtConfig, GinConv, GradCheck, Linear, Mat, Mlp,
    Mode, ParamStore, Tape, Var,
};
use crate::benchbuild::{build_benchmark, BenchmarkManifest, CorpusSpec};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::graph::{synth_graph, with_gaussian_features, Adjacency, Family, FilterLimits, Graph};
use crate::meta::{
    derive_seed, evaluate, match_head, meta_train, proto_head, sample_episode, EvalConfig, Head, HeadKind,
    MetricsReport, Model, TrainConfig, TrainHistory,
};
use crate::synthetic::{cross_domain_suite, SyntheticConfig};
use crate::views::{build_views, diffusion_spectrum, diffusion_spectrum_series_oracle, DiffusionKind, ViewConfig};

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct Check {
    pub criterion: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} ({}): {} - {} [{:.1} s]",
            self.criterion,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail,
            self.seconds
        )
    }
}

fn timed(criterion: u8, name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Result<Check> {
    let t = Instant::now();
    let (passed, detail) = f()?;
    Ok(Check {
        criterion,
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    })
}

/// Connected graph with `n` nodes drawn from a random family.
fn random_graph(rng: &mut ChaCha8Rng, min_n: usize, max_n: usize) -> Result<Graph> {
    let n = rng.random_range(min_n..=max_n);
    let family = match rng.random_range(0..5) {
        0 if n >= 3 => Family::Cycle { n },
        1 => Family::Tree { n },
        2 => Family::Star { n },
        3 if n >= 3 => Family::BarabasiAlbert { n, m: 2 },
        _ => Family::ErdosRenyi {
            n,
            p: rng.random_range(0.3..0.9),
        },
    };
    synth_graph(&family, rng.random())
}

// ---------------------------------------------------------------- spectra

/// Closed-form spectra against the truncated power series on `count` random
/// connected graphs with at most 12 nodes, for PPR and heat diffusion.
pub fn spectral_oracle(count: usize, seed: u64) -> Result<Check> {
    timed(1, "spectral oracle", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graphs = (0..count)
            .map(|_| random_graph(&mut rng, 2, 12))
            .collect::<Result<Vec<_>>>()?;
        let times: Vec<f64> = (0..count).map(|_| rng.random_range(0.1..=5.0)).collect();
        let ppr = ViewConfig {
            d_z: 12,
            series_truncation: 64,
            ..Default::default()
        };
        let ppr_tol = (1.0 - ppr.teleport).powi(64) / ppr.teleport;
        let heat_tol = 1e-10;
        let errors = graphs
            .par_iter()
            .zip(&times)
            .map(|(g, &t)| {
                let heat = ViewConfig {
                    diffusion_kind: DiffusionKind::Heat,
                    heat_time: t,
                    series_truncation: 60,
                    ..ppr.clone()
                };
                let dev = |cfg: &ViewConfig| -> Result<f64> {
                    let a = diffusion_spectrum(g, cfg)?;
                    let b = diffusion_spectrum_series_oracle(g, cfg)?;
                    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
                };
                Ok((dev(&ppr)?, dev(&heat)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let worst_ppr = errors.iter().map(|e| e.0).fold(0.0, f64::max);
        let worst_heat = errors.iter().map(|e| e.1).fold(0.0, f64::max);
        Ok((
            worst_ppr <= ppr_tol && worst_heat <= heat_tol,
            format!(
                "{count} graphs; max PPR deviation {worst_ppr:.2e} (bound {ppr_tol:.2e}), \
                 max heat deviation {worst_heat:.2e} (bound {heat_tol:.0e})"
            ),
        ))
    })
}

/// PPR spectra of K2 and K3 at teleport 0.2: {1, 1/9} and {1, 1/7, 1/7}.
pub fn small_spectra() -> Result<Check> {
    timed(2, "exact small-graph spectra", || {
        let cfg = ViewConfig {
            d_z: 4,
            ..Default::default()
        };
        let k = |n: usize| -> Result<Graph> {
            let edges: Vec<_> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
            Graph::from_edges(n, &edges, Mat::ones((n, 1)), 0)
        };
        let cases = [
            ("K2", k(2)?, vec![1.0, 1.0 / 9.0, 0.0, 0.0]),
            ("K3", k(3)?, vec![1.0, 1.0 / 7.0, 1.0 / 7.0, 0.0]),
        ];
        let mut worst = 0.0f64;
        let mut parts = Vec::new();
        for (name, g, want) in &cases {
            let got = diffusion_spectrum(g, &cfg)?;
            let err = got.iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(err);
            parts.push(format!("{name} {:?}", &got[..g.n_nodes()]));
        }
        Ok((worst <= 1e-9, format!("{}; max error {worst:.1e}", parts.join(", "))))
    })
}

// ---------------------------------------------------------------- gradients

type LossFn = Box<dyn Fn(&mut Tape, &Bound) -> Result<Var> + Send + Sync>;

struct Case {
    name: &'static str,
    store: ParamStore,
    f: LossFn,
}

/// Contracts `y` with fixed random weights so every output entry matters.
fn contract(t: &mut Tape, y: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = t.leaf(uniform(&mut rng, t.shape(y), 1.0));
    let m = t.mul(y, w);
    t.sum_all(m)
}

fn small_graph(seed: u64, n: usize) -> Arc<Adjacency> {
    let g = synth_graph(&Family::ErdosRenyi { n, p: 0.5 }, seed).expect("valid family");
    Arc::new(Adjacency::from(&g))
}

fn op_cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases: Vec<Case> = Vec::new();
    let mut add = |name: &'static str, shapes: &[(usize, usize)], rng: &mut ChaCha8Rng, f: LossFn| {
        let mut store = ParamStore::new();
        for (i, &s) in shapes.iter().enumerate() {
            store.add(format!("{name}.{i}"), uniform(rng, s, 1.0));
        }
        cases.push(Case { name, store, f });
    };
    let v = |p: &Bound, i: usize| p.var(crate::autodiff::ParamId(i));
    let cm = Arc::new(uniform(&mut rng, (3, 4), 1.0));
    let adj = small_graph(seed, 6);
    let mask = Arc::new(Mat::from_shape_fn((4, 3), |(i, j)| ((i + j) % 2) as f64 * 2.0));
    let shift = uniform(&mut rng, (4, 3), 1.0);
    let (g1, b1) = (rng.random_range(0.5..1.5), rng.random_range(-1.0..1.0));
    let c1 = rng.random_range(-2.0..2.0);
    let targets = Arc::new(vec![0usize, 2, 1, 2]);

    add("matmul", &[(4, 3), (3, 2)], &mut rng, Box::new(move |t, p| {
        let y = t.matmul(v(p, 0), v(p, 1));
        Ok(contract(t, y, seed))
    }));
    let cm2 = cm.clone();
    add("const_matmul", &[(4, 2)], &mut rng, Box::new(move |t, p| {
        let y = t.const_matmul(cm2.clone(), v(p, 0));
        Ok(contract(t, y, seed))
    }));
    add("add", &[(4, 3), (4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.add(v(p, 0), v(p, 1));
        Ok(contract(t, y, seed))
    }));
    add("add_row", &[(4, 3), (1, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.add_row(v(p, 0), v(p, 1));
        Ok(contract(t, y, seed))
    }));
    add("add_const", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.add_const(v(p, 0), &shift);
        let y = t.square(y);
        Ok(contract(t, y, seed))
    }));
    add("add_scalar", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.add_scalar(v(p, 0), c1);
        let y = t.square(y);
        Ok(contract(t, y, seed))
    }));
    add("mul", &[(4, 3), (4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.mul(v(p, 0), v(p, 1));
        Ok(contract(t, y, seed))
    }));
    add("scale", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.scale(v(p, 0), c1);
        Ok(contract(t, y, seed))
    }));
    add("affine", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.affine(v(p, 0), g1, b1);
        let y = t.square(y);
        Ok(contract(t, y, seed))
    }));
    add("scalar_mul", &[(1, 1), (4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.scalar_mul(v(p, 0), v(p, 1));
        Ok(contract(t, y, seed))
    }));
    add("row_scale", &[(4, 3), (4, 1)], &mut rng, Box::new(move |t, p| {
        let y = t.row_scale(v(p, 0), v(p, 1));
        Ok(contract(t, y, seed))
    }));
    let a2 = adj.clone();
    add("aggregate", &[(6, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.aggregate(v(p, 0), a2.clone());
        Ok(contract(t, y, seed))
    }));
    add("swish", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.swish(v(p, 0));
        Ok(contract(t, y, seed))
    }));
    add("relu", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.relu(v(p, 0));
        Ok(contract(t, y, seed))
    }));
    add("sigmoid", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.sigmoid(v(p, 0));
        Ok(contract(t, y, seed))
    }));
    add("square", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.square(v(p, 0));
        Ok(contract(t, y, seed))
    }));
    let m2 = mask.clone();
    add("mask_mul", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.mask_mul(v(p, 0), m2.clone());
        Ok(contract(t, y, seed))
    }));
    add("segment_mean", &[(6, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.segment_mean(v(p, 0), Arc::new(vec![0, 2, 6]));
        Ok(contract(t, y, seed))
    }));
    add("concat_cols", &[(4, 3), (4, 2)], &mut rng, Box::new(move |t, p| {
        let y = t.concat_cols(&[v(p, 0), v(p, 1)]);
        Ok(contract(t, y, seed))
    }));
    add("concat_rows", &[(4, 3), (2, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.concat_rows(&[v(p, 0), v(p, 1)]);
        Ok(contract(t, y, seed))
    }));
    add("select_rows", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.select_rows(v(p, 0), Arc::new(vec![3, 1, 1]));
        Ok(contract(t, y, seed))
    }));
    add("column", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.column(v(p, 0), 1);
        Ok(contract(t, y, seed))
    }));
    add("softmax_rows", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.softmax_rows(v(p, 0));
        Ok(contract(t, y, seed))
    }));
    add("masked_softmax_rows", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.masked_softmax_rows(v(p, 0), &[true, false, true]);
        Ok(contract(t, y, seed))
    }));
    add("sq_dist", &[(4, 3), (2, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.sq_dist(v(p, 0), v(p, 1));
        Ok(contract(t, y, seed))
    }));
    add("cosine", &[(4, 3), (2, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.cosine(v(p, 0), v(p, 1));
        Ok(contract(t, y, seed))
    }));
    let tg = targets.clone();
    add("cross_entropy", &[(4, 3)], &mut rng, Box::new(move |t, p| Ok(t.cross_entropy(v(p, 0), tg.clone()))));
    let tg = targets.clone();
    add("nll_probs", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let probs = t.softmax_rows(v(p, 0));
        Ok(t.nll_probs(probs, tg.clone()))
    }));
    add("l2_normalize_rows", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.l2_normalize_rows(v(p, 0));
        Ok(contract(t, y, seed))
    }));
    add("sum_all", &[(4, 3)], &mut rng, Box::new(move |t, p| {
        let y = t.square(v(p, 0));
        Ok(t.sum_all(y))
    }));
    cases
}

fn layer_cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1a7e);
    let adj = small_graph(seed, 7);
    let x = uniform(&mut rng, (7, 4), 1.0);
    let mut cases = Vec::new();

    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "linear", 4, 3, &mut rng);
    let xl = x.clone();
    cases.push(Case {
        name: "linear",
        store,
        f: Box::new(move |t, p| {
            let xv = t.leaf(xl.clone());
            let y = lin.forward(t, p, xv)?;
            Ok(contract(t, y, seed))
        }),
    });

    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "mlp", 4, 3, 3, &mut rng);
    let xm = x.clone();
    cases.push(Case {
        name: "mlp",
        store,
        f: Box::new(move |t, p| {
            let xv = t.leaf(xm.clone());
            let y = mlp.forward(t, p, xv)?;
            Ok(contract(t, y, seed))
        }),
    });

    let mut store = ParamStore::new();
    let conv = GinConv::new(&mut store, "gin", 4, 3, 2, &mut rng);
    *store.get_mut(conv.eps) = Array2::from_elem((1, 1), 0.3);
    let (xg, ag) = (x.clone(), adj.clone());
    cases.push(Case {
        name: "gin_conv",
        store,
        f: Box::new(move |t, p| {
            let xv = t.leaf(xg.clone());
            let y = gin_conv(t, p, &ag, xv, p.var(conv.eps), &conv.mlp)?;
            Ok(contract(t, y, seed))
        }),
    });

    let mut store = ParamStore::new();
    store.add("fwt.h", x.clone());
    cases.push(Case {
        name: "fwt",
        store,
        f: Box::new(move |t, p| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let y = fwt(t, p.var(crate::autodiff::ParamId(0)), &FwtConfig::default(), Mode::Train, &mut r);
            let y = t.swish(y);
            Ok(contract(t, y, seed))
        }),
    });

    let mut store = ParamStore::new();
    store.add("dropout.h", x);
    cases.push(Case {
        name: "dropout",
        store,
        f: Box::new(move |t, p| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let y = dropout(t, p.var(crate::autodiff::ParamId(0)), 0.5, Mode::Train, &mut r);
            let y = t.swish(y);
            Ok(contract(t, y, seed))
        }),
    });
    cases
}

/// Episode of small random graphs with `d`-dim Gaussian node features.
fn chain_bundles(seed: u64, views: &ViewConfig, count: usize) -> Result<Vec<crate::views::ViewBundle>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc4a1);
    (0..count)
        .map(|_| {
            let g = random_graph(&mut rng, 4, 9)?;
            let g = with_gaussian_features(g, 5, &mut rng)?;
            build_views(&g, views)
        })
        .collect()
}

/// Encoder plus head on one 2-way episode, reduced to the head loss.
fn chain_case(seed: u64, kind: HeadKind, mode: Mode) -> Result<Case> {
    let views = ViewConfig {
        d_pad: 6,
        d_u: 4,
        d_z: 8,
        ..Default::default()
    };
    let enc_cfg = EncoderConfig {
        d_h: 6,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let encoder = Encoder::new(&mut store, &enc_cfg, &views, &mut rng)?;
    let head = Head::new(&mut store, kind, enc_cfg.d_h, &mut rng);
    for id in store.ids().collect::<Vec<_>>() {
        if store.name(id).ends_with(".eps") {
            *store.get_mut(id) = Array2::from_elem((1, 1), rng.random_range(-0.2..0.2));
        }
    }
    let bundles = chain_bundles(seed, &views, 6)?;
    let ys = vec![0usize, 0, 1, 1];
    let yq = vec![0usize, 1];
    let name = match (kind, mode) {
        (HeadKind::Proto, Mode::Eval) => "encode->proto->loss (eval)",
        (HeadKind::Proto, Mode::Train) => "encode->proto->loss (train)",
        (HeadKind::Match, _) => "encode->match->loss",
        (HeadKind::Relation, _) => "encode->relation->loss",
    };
    Ok(Case {
        name,
        store,
        f: Box::new(move |t, p| {
            let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xf00d);
            let refs: Vec<_> = bundles.iter().collect();
            let enc = encoder.encode_batch(t, p, &refs, mode, &mut r)?;
            let hs = t.select_rows(enc.h, Arc::new(vec![0, 1, 2, 3]));
            let hq = t.select_rows(enc.h, Arc::new(vec![4, 5]));
            let scores = head.scores(t, p, hs, &ys, hq, 2)?;
            head.loss(t, scores, &yq)
        }),
    })
}

/// Finite differences against reverse mode for every tape op, the layers,
/// and the whole encoder-head-loss chain, each at `seeds` seeds.
pub fn gradient_suite(seeds: u64) -> Result<Check> {
    timed(3, "gradient suite", || {
        let opts = GradCheck {
            h: 1e-6,
            max_coords: Some(24),
        };
        let mut jobs: Vec<(u64, Case)> = Vec::new();
        for s in 0..seeds {
            let seed = derive_seed(0x6ead, &[s]);
            jobs.extend(op_cases(seed).into_iter().map(|c| (s, c)));
            jobs.extend(layer_cases(seed).into_iter().map(|c| (s, c)));
            for (kind, mode) in [
                (HeadKind::Proto, Mode::Eval),
                (HeadKind::Proto, Mode::Train),
                (HeadKind::Match, Mode::Train),
                (HeadKind::Relation, Mode::Train),
            ] {
                jobs.push((s, chain_case(seed, kind, mode)?));
            }
        }
        let results = jobs
            .par_iter()
            .map(|(s, c)| Ok((c.name, *s, finite_diff_by_param(&c.store, &c.f, opts)?)))
            .collect::<Result<Vec<_>>>()?;
        // worst error per case and per parameter group of the chain
        let mut per_case: BTreeMap<&str, f64> = BTreeMap::new();
        let mut per_group: BTreeMap<String, f64> = BTreeMap::new();
        for (name, _, per) in &results {
            for (param, e) in per {
                let w = per_case.entry(name).or_default();
                *w = w.max(*e);
                if name.starts_with("encode") {
                    let group = param.split('.').next().unwrap_or(param).to_string();
                    let g = per_group.entry(group).or_default();
                    *g = g.max(*e);
                }
            }
        }
        let worst = per_case.values().copied().fold(0.0, f64::max);
        let failing: Vec<String> = per_case
            .iter()
            .filter(|(_, &e)| e >= 1e-4)
            .map(|(n, e)| format!("{n} {e:.1e}"))
            .collect();
        let groups: Vec<String> = per_group.iter().map(|(g, e)| format!("{g} {e:.1e}")).collect();
        let mut detail = format!(
            "{} cases x {seeds} seeds; worst relative error {worst:.2e}; chain groups: {}",
            per_case.len(),
            groups.join(", ")
        );
        if !failing.is_empty() {
            detail.push_str(&format!("; failing: {}", failing.join(", ")));
        }
        Ok((failing.is_empty(), detail))
    })
}

// ---------------------------------------------------------------- invariance

/// Eval-mode embeddings and attention weights under random relabelings.
pub fn permutation_invariance(graphs: usize, perms: usize, seed: u64) -> Result<Check> {
    timed(4, "permutation invariance", || {
        let views = ViewConfig::default();
        let enc = EncoderConfig {
            d_h: 64,
            ..Default::default()
        };
        let model = Model::new(&views, &enc, HeadKind::Proto, seed)?;
        let worst = (0..graphs)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64]));
                let g = random_graph(&mut rng, 5, 30)?;
                let g = with_gaussian_features(g, 7, &mut rng)?;
                let mut eval_rng = ChaCha8Rng::seed_from_u64(0);
                let base = build_views(&g, &views)?;
                let (h0, a0) = model.encoder.encode_graph(&model.store, &base, Mode::Eval, &mut eval_rng)?;
                let mut worst = 0.0f64;
                for _ in 0..perms {
                    let mut perm: Vec<usize> = (0..g.n_nodes()).collect();
                    perm.shuffle(&mut rng);
                    let b = build_views(&g.permute(&perm)?, &views)?;
                    let (h, a) = model.encoder.encode_graph(&model.store, &b, Mode::Eval, &mut eval_rng)?;
                    let d = |x: &Array1<f64>, y: &Array1<f64>| x.iter().zip(y).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
                    worst = worst.max(d(&h0, &h)).max(d(&a0, &a));
                }
                Ok(worst)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        Ok((
            worst <= 1e-9,
            format!("{graphs} graphs x {perms} permutations; max deviation {worst:.2e}"),
        ))
    })
}

// ---------------------------------------------------------------- training

/// Meta-trains on a single separable 2-way 5-shot task and tracks the
/// eval-mode query loss of a fixed episode.
pub fn overfit_fixture(seed: u64) -> Result<Check> {
    timed(5, "overfit fixture", || {
        let views = ViewConfig::default();
        let suite = cross_domain_suite(
            &SyntheticConfig {
                train_tasks: 1,
                test_tasks: 1,
                train_per_class: 15,
                test_support: 1,
                test_query: 1,
                seed,
                ..Default::default()
            },
            &views,
        )?;
        let enc = EncoderConfig {
            d_h: 32,
            dropout: 0.0,
            fwt: FwtConfig {
                enabled: false,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut model = Model::new(&views, &enc, HeadKind::Proto, seed)?;
        let probe = sample_episode(&suite.train[0], 2, 5, 10, derive_seed(seed, &[9]))?;
        let initial = model.episode_loss(&probe)?;
        // one episode per epoch and a meta-batch of one: one step per epoch
        let cfg = TrainConfig {
            meta_batch: 1,
            epochs: 500,
            lr: 0.001,
            queries: 10,
            seed,
            ..Default::default()
        };
        let out = meta_train(&mut model, &suite.train, &[], &cfg)?;
        let steps = &out.history.step_loss;
        let first = steps.iter().position(|&l| l < 0.05).map(|i| i + 1);
        let last = model.episode_loss(&probe)?;
        let detail = format!(
            "query loss {initial:.4} -> {:.2e} over {} steps; first step below 0.05: {}; probe loss after training {last:.2e}",
            steps.last().copied().unwrap_or(f64::NAN),
            steps.len(),
            first.map_or("none".to_string(), |s| s.to_string())
        );
        Ok((first.is_some_and(|s| s <= 500) && last < 0.05, detail))
    })
}

/// Settings of the synthetic transfer experiment.
#[derive(Debug, Clone)]
pub struct TransferSetup {
    pub seed: u64,
    pub views: ViewConfig,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub suite: SyntheticConfig,
}

impl TransferSetup {
    /// ProtoNet, d_h 64, 100 epochs, 2-layer GIN/MLP, four episodes per
    /// training task per epoch, cosine-classifier adaptation at test time.
    pub fn standard(seed: u64) -> Self {
        TransferSetup {
            seed,
            views: ViewConfig::default(),
            encoder: EncoderConfig {
                d_h: 64,
                gnn_layers: 2,
                mlp_layers: 2,
                ..Default::default()
            },
            train: TrainConfig {
                epochs: 100,
                lr: 0.003,
                episodes_per_task: 4,
                head: HeadKind::Proto,
                seed,
                ..Default::default()
            },
            eval: EvalConfig {
                shots: 5,
                adapt: true,
                adapt_steps: 50,
                adapt_lr: 0.01,
                seed,
                ..Default::default()
            },
            suite: SyntheticConfig {
                seed,
                ..Default::default()
            },
        }
    }

    fn config_hash(&self, views: &str) -> String {
        let text = format!(
            "{:?}|{:?}|{:?}|{:?}|{:?}|{views}",
            self.views, self.encoder, self.train, self.eval, self.suite
        );
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(text.as_bytes()))[..16].to_string()
    }

    /// Trains with the given views (`"X,U,Z"`, `"X"`, ...) and evaluates on
    /// the target-domain tasks.
    pub fn run(&self, views: &str) -> Result<(MetricsReport, TrainHistory)> {
        let suite = cross_domain_suite(&self.suite, &self.views)?;
        let mut enc = self.encoder.clone();
        enc.set_views(views)?;
        let mut model = Model::new(&self.views, &enc, self.train.head, self.seed)?;
        let outcome = meta_train(&mut model, &suite.train, &suite.dev, &self.train)?;
        let eval = evaluate(&model, &suite.test, &self.eval)?;
        let report = MetricsReport::new(
            "synthetic-cycle-tree-to-star-ba",
            &self.train.head.to_string(),
            &enc.views_label(),
            self.eval.shots,
            &eval,
            &self.config_hash(views),
        );
        Ok((report, outcome.history))
    }
}

/// Criterion 6 from finished runs of the full model and the X-only ablation.
pub fn transfer_check(full: &MetricsReport, x_only: &MetricsReport, seconds: f64) -> Check {
    let (a, b) = (full.aggregate.mean, x_only.aggregate.mean);
    let passed = a >= 0.80 && a - b >= 0.10 && seconds < 900.0;
    Check {
        criterion: 6,
        name: "synthetic cross-domain transfer",
        passed,
        detail: format!(
            "5-shot target accuracy X,U,Z {a:.4} (>= 0.80), X only {b:.4}, margin {:.4} (>= 0.10)",
            a - b
        ),
        seconds,
    }
}

/// Criterion 9 from two reports produced with identical seeds.
pub fn determinism_check(first: &MetricsReport, second: &MetricsReport, seconds: f64) -> Check {
    let (x, y) = (first.to_json(), second.to_json());
    let same = x == y;
    Check {
        criterion: 9,
        name: "determinism",
        passed: same,
        detail: if same {
            format!("metrics reports identical ({} bytes, sha256 {})", x.len(), short_hash(&x))
        } else {
            format!("reports differ: {} vs {}", short_hash(&x), short_hash(&y))
        },
        seconds,
    }
}

fn short_hash(s: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(s.as_bytes()))[..12].to_string()
}

// ---------------------------------------------------------------- benchmark

#[derive(Debug, Deserialize)]
struct Counts {
    train: usize,
    dev: usize,
    test: usize,
}

#[derive(Debug, Deserialize)]
struct ExpectedWarning {
    dataset: String,
    task: String,
}

/// Hand-derived expectation for a fixture corpus.
#[derive(Debug, Deserialize)]
pub struct CorpusExpectation {
    counts: Counts,
    tasks_per_dataset: BTreeMap<String, usize>,
    split_of_dataset: BTreeMap<String, String>,
    fixed_task_ids: Vec<String>,
    warnings: Vec<ExpectedWarning>,
    support_per_class: usize,
    query_per_class: usize,
}

impl CorpusExpectation {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Every dataset's tasks share one split, and no sample id occurs twice.
pub fn atomicity_and_disjointness(m: &BenchmarkManifest) -> std::result::Result<(), String> {
    let mut split_of: HashMap<&str, &str> = HashMap::new();
    for (split, ids) in [("train", &m.splits.train), ("dev", &m.splits.dev), ("test", &m.splits.test)] {
        for id in ids {
            split_of.insert(id.as_str(), split);
        }
    }
    let mut dataset_split: HashMap<&str, &str> = HashMap::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for t in &m.tasks {
        let s = split_of.get(t.task_id.as_str()).ok_or(format!("task {} has no split", t.task_id))?;
        if let Some(prev) = dataset_split.insert(t.dataset.as_str(), s) {
            if prev != *s {
                return Err(format!("dataset {} spans {prev} and {s}", t.dataset));
            }
        }
        for id in t.sample_ids() {
            if !seen.insert(id.as_str()) {
                return Err(format!("sample {id} used twice"));
            }
        }
    }
    Ok(())
}


/// Builds the fixture benchmark and compares it with the expectation file.
pub fn fixture_counts(data_dir: &Path, spec: &CorpusSpec, expected: &CorpusExpectation) -> Result<Check> {
    timed(7, "benchmark factory counts", || {
        let m = build_benchmark(spec, data_dir, &FilterLimits::default())?;
        let mut problems = Vec::new();
        let (tr, dv, te) = m.counts();
        let want = (expected.counts.train, expected.counts.dev, expected.counts.test);
        if (tr, dv, te) != want {
            problems.push(format!("counts {tr}/{dv}/{te}, expected {}/{}/{}", want.0, want.1, want.2));
        }
        let mut per_ds: BTreeMap<String, usize> = BTreeMap::new();
        for t in &m.tasks {
            *per_ds.entry(t.dataset.clone()).or_default() += 1;
        }
        if per_ds != expected.tasks_per_dataset {
            problems.push(format!("tasks per dataset {per_ds:?}"));
        }
        for (ds, split) in &expected.split_of_dataset {
            let ids = match split.as_str() {
                "train" => &m.splits.train,
                "dev" => &m.splits.dev,
                "test" => &m.splits.test,
                other => return Err(Error::Config(format!("unknown split {other}"))),
            };
            let in_split = m.tasks.iter().filter(|t| &t.dataset == ds).all(|t| ids.contains(&t.task_id));
            if !in_split {
                problems.push(format!("{ds} not entirely in {split}"));
            }
        }
        let ids: BTreeSet<&str> = m.tasks.iter().map(|t| t.task_id.as_str()).collect();
        for id in &expected.fixed_task_ids {
            if !ids.contains(id.as_str()) {
                problems.push(format!("missing task {id}"));
            }
        }
        let got_w: BTreeSet<(&str, &str)> = m.warnings.iter().map(|w| (w.dataset.as_str(), w.task.as_str())).collect();
        let want_w: BTreeSet<(&str, &str)> = expected.warnings.iter().map(|w| (w.dataset.as_str(), w.task.as_str())).collect();
        if got_w != want_w {
            problems.push(format!("warnings {got_w:?}"));
        }
        for t in &m.tasks {
            let sizes = [t.support[0].len(), t.support[1].len(), t.query[0].len(), t.query[1].len()];
            let s = expected.support_per_class;
            let q = expected.query_per_class;
            if sizes != [s, s, q, q] {
                problems.push(format!("task {} has sizes {sizes:?}", t.task_id));
            }
        }
        if let Err(e) = atomicity_and_disjointness(&m) {
            problems.push(e);
        }
        if let Err(e) = m.check_integrity() {
            problems.push(e.to_string());
        }
        Ok((
            problems.is_empty(),
            if problems.is_empty() {
                format!(
                    "train/dev/test {tr}/{dv}/{te} as expected; {} warning(s); origin-atomic; samples disjoint",
                    m.warnings.len()
                )
            } else {
                problems.join("; ")
            },
        ))
    })
}

// ---------------------------------------------------------------- heads

/// 1-shot proto head against brute-force nearest neighbor, and simplex
/// rows for the proto and match distributions.
pub fn head_correctness(instances: usize, seed: u64) -> Result<Check> {
    timed(8, "head correctness", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mismatches = 0usize;
        let mut worst_sum = 0.0f64;
        for _ in 0..instances {
            let k = rng.random_range(2..=6);
            let d = rng.random_range(1..=16);
            let nq = rng.random_range(1..=12);
            let hs = uniform(&mut rng, (k, d), 3.0);
            let hq = uniform(&mut rng, (nq, d), 3.0);
            let ys: Vec<usize> = (0..k).collect();
            let logits = proto_head(&hs, &ys, &hq)?;
            for (i, row) in logits.rows().into_iter().enumerate() {
                let pred = argmax(row.iter().copied());
                let nn = argmax((0..k).map(|c| {
                    -hs.row(c).iter().zip(hq.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                }));
                if pred != nn {
                    mismatches += 1;
                }
                worst_sum = worst_sum.max((softmax(row.iter().copied()).iter().sum::<f64>() - 1.0).abs());
            }
            // several shots for the match head
            let shots = rng.random_range(1..=4);
            let hs = uniform(&mut rng, (k * shots, d), 3.0);
            let ys: Vec<usize> = (0..k * shots).map(|i| i % k).collect();
            let probs = match_head(&hs, &ys, &hq)?;
            for row in probs.rows() {
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    worst_sum = f64::INFINITY;
                }
                worst_sum = worst_sum.max((row.sum() - 1.0).abs());
            }
        }
        Ok((
            mismatches == 0 && worst_sum <= 1e-12,
            format!("{instances} instances; nearest-neighbor mismatches {mismatches}; max |row sum - 1| {worst_sum:.1e}"),
        ))
    })
}

fn argmax(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in xs.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

fn softmax(xs: impl Iterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}
