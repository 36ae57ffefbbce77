use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use metaview::encoder::EncoderConfig;
use metaview::graph::{synth_graph, with_gaussian_features, Family};
use metaview::meta::{proto_head, sample_episode, HeadKind, Model, TaskData};
use metaview::views::{build_views, diffusion_spectrum, ViewConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn graph(n: usize, seed: u64) -> metaview::graph::Graph {
    let g = synth_graph(&Family::BarabasiAlbert { n, m: 2 }, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    with_gaussian_features(g, 16, &mut rng).unwrap()
}

fn spectra(c: &mut Criterion) {
    let cfg = ViewConfig::default();
    for n in [30, 120, 500] {
        let g = graph(n, 1);
        c.bench_function(&format!("ppr_spectrum_n{n}"), |b| b.iter(|| diffusion_spectrum(black_box(&g), &cfg).unwrap()));
    }
}

fn views(c: &mut Criterion) {
    let cfg = ViewConfig::default();
    let g = graph(60, 2);
    c.bench_function("build_views_n60", |b| b.iter(|| build_views(black_box(&g), &cfg).unwrap()));
}

fn episode_loss(c: &mut Criterion) {
    let views = ViewConfig::default();
    let enc = EncoderConfig {
        d_h: 64,
        ..Default::default()
    };
    let model = Model::new(&views, &enc, HeadKind::Proto, 0).unwrap();
    let bundles = (0..30u64).map(|i| {
        let mut b = build_views(&graph(20, i), &views).unwrap();
        b.label = (i % 2) as i64;
        Arc::new(b)
    });
    let task = TaskData::from_bundles("bench", bundles);
    let ep = sample_episode(&task, 2, 5, 10, 7).unwrap();
    c.bench_function("episode_loss_2way_5shot", |b| b.iter(|| model.episode_loss(black_box(&ep)).unwrap()));
}

fn heads(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let hs = metaview::autodiff::uniform(&mut rng, (10, 256), 1.0);
    let hq = metaview::autodiff::uniform(&mut rng, (100, 256), 1.0);
    let ys: Vec<usize> = (0..10).map(|i| i % 2).collect();
    c.bench_function("proto_head_100q", |b| b.iter(|| proto_head(black_box(&hs), &ys, &hq).unwrap()));
}

criterion_group!(benches, spectra, views, episode_loss, heads);
criterion_main!(benches);
