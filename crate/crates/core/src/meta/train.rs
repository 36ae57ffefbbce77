//! Prototypical-style meta-training with meta-batches of episodes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{sample_episode, Episode, TaskData};
use super::heads::{Head, HeadKind};
use super::{argmax_rows, derive_seed};
use crate::autodiff::{cosine_lr, Adam, Mode, ParamGrads, ParamStore, Tape};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::views::ViewConfig;

/// Encoder, head and their parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub views: ViewConfig,
    pub encoder: Encoder,
    pub head: Head,
    pub store: ParamStore,
}

impl Model {
    pub fn new(views: &ViewConfig, enc: &EncoderConfig, head: HeadKind, seed: u64) -> Result<Self> {
        views.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, enc, views, &mut rng)?;
        let head = Head::new(&mut store, head, enc.d_h, &mut rng);
        Ok(Model {
            views: views.clone(),
            encoder,
            head,
            store,
        })
    }

    /// Eval-mode head predictions for an episode.
    pub fn predict(&self, ep: &Episode) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(ep.seed);
        let (scores, _) = episode_forward(self, &mut tape, &p, ep, Mode::Eval, &mut rng)?;
        Ok(argmax_rows(tape.value(scores)))
    }

    /// Mean query loss of an episode in eval mode.
    pub fn episode_loss(&self, ep: &Episode) -> Result<f64> {
        let mut tape = Tape::new();
        let p = self.store.bind(&mut tape);
        let mut rng = ChaCha8Rng::seed_from_u64(ep.seed);
        let (scores, _) = episode_forward(self, &mut tape, &p, ep, Mode::Eval, &mut rng)?;
        let loss = self.head.loss(&mut tape, scores, &ep.query_labels())?;
        Ok(tape.scalar(loss) / ep.query.len() as f64)
    }
}

fn episode_forward(
    model: &Model,
    tape: &mut Tape,
    p: &crate::autodiff::Bound,
    ep: &Episode,
    mode: Mode,
    rng: &mut ChaCha8Rng,
) -> Result<(crate::autodiff::Var, usize)> {
    let ns = ep.support.len();
    let nq = ep.query.len();
    let enc = model.encoder.encode_batch(tape, p, &ep.bundles(), mode, rng)?;
    let hs = tape.select_rows(enc.h, std::sync::Arc::new((0..ns).collect()));
    let hq = tape.select_rows(enc.h, std::sync::Arc::new((ns..ns + nq).collect()));
    let scores = model.head.scores(tape, p, hs, &ep.support_labels(), hq, ep.k)?;
    Ok((scores, nq))
}

/// Per-head step counts and learning rates from the hyperparameter search,
/// plus the selected layer count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub task_steps: usize,
    pub adapt_steps: usize,
    pub task_lr: f64,
    pub adapt_lr: f64,
    pub layers: usize,
}

/// Selected settings per source meta-domain and head.
pub fn presets(domain: &str, head: HeadKind) -> Result<Hyper> {
    let h = |task_steps, adapt_steps, task_lr, adapt_lr, layers| Hyper {
        task_steps,
        adapt_steps,
        task_lr,
        adapt_lr,
        layers,
    };
    let d = domain.to_ascii_lowercase();
    let v = match (d.as_str(), head) {
        ("molecules" | "mol", HeadKind::Match) => h(25, 10, 0.01, 0.1, 2),
        ("molecules" | "mol", HeadKind::Proto) => h(50, 50, 0.01, 0.01, 3),
        ("molecules" | "mol", HeadKind::Relation) => h(50, 50, 0.001, 0.01, 2),
        ("bioinformatics" | "bio", HeadKind::Match) => h(50, 50, 0.001, 0.01, 2),
        ("bioinformatics" | "bio", HeadKind::Proto) => h(50, 10, 0.001, 0.1, 2),
        ("bioinformatics" | "bio", HeadKind::Relation) => h(25, 25, 0.01, 0.1, 3),
        ("social", HeadKind::Match) => h(50, 25, 0.01, 0.1, 3),
        ("social", HeadKind::Proto) => h(25, 10, 0.01, 0.1, 3),
        ("social", HeadKind::Relation) => h(50, 10, 0.01, 0.01, 3),
        _ => return Err(Error::Config(format!("no preset for domain {domain:?}"))),
    };
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub meta_batch: usize,
    pub epochs: usize,
    pub patience: usize,
    /// Peak learning rate of the cosine schedule.
    pub lr: f64,
    pub head: HeadKind,
    pub way: usize,
    pub shots: usize,
    pub queries: usize,
    /// Episodes drawn from every training task per epoch.
    pub episodes_per_task: usize,
    /// Fixed dev episodes per dev task for early stopping.
    pub dev_episodes: usize,
    pub task_steps: usize,
    pub adapt_steps: usize,
    pub task_lr: f64,
    pub adapt_lr: f64,
    pub tau: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let h = presets("molecules", HeadKind::Proto).expect("preset exists");
        TrainConfig {
            meta_batch: 16,
            epochs: 1000,
            patience: 30,
            lr: 0.001,
            head: HeadKind::Proto,
            way: 2,
            shots: 5,
            queries: 10,
            episodes_per_task: 1,
            dev_episodes: 4,
            task_steps: h.task_steps,
            adapt_steps: h.adapt_steps,
            task_lr: h.task_lr,
            adapt_lr: h.adapt_lr,
            tau: super::adapt::DEFAULT_TAU,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("meta_batch", self.meta_batch),
            ("patience", self.patience),
            ("way", self.way),
            ("shots", self.shots),
            ("queries", self.queries),
            ("episodes_per_task", self.episodes_per_task),
            ("adapt_steps", self.adapt_steps),
            ("task_steps", self.task_steps),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("lr", self.lr), ("task_lr", self.task_lr), ("adapt_lr", self.adapt_lr), ("tau", self.tau)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn apply_preset(&mut self, h: &Hyper) {
        self.task_steps = h.task_steps;
        self.adapt_steps = h.adapt_steps;
        self.task_lr = h.task_lr;
        self.adapt_lr = h.adapt_lr;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Normalized meta-batch loss of every optimizer step.
    pub step_loss: Vec<f64>,
    /// Mean step loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// Dev accuracy per epoch (empty without dev tasks).
    pub dev_accuracy: Vec<f64>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: TrainHistory,
    /// Optimizer state at the end of training.
    pub adam: Adam,
}

struct EpisodeResult {
    loss: f64,
    grads: ParamGrads,
}

fn train_episode(model: &Model, ep: &Episode, seed: u64) -> Result<EpisodeResult> {
    let mut tape = Tape::new();
    let p = model.store.bind(&mut tape);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (scores, _) = episode_forward(model, &mut tape, &p, ep, Mode::Train, &mut rng)?;
    let loss = model.head.loss(&mut tape, scores, &ep.query_labels())?;
    let value = tape.scalar(loss);
    if !value.is_finite() {
        let at = tape
            .first_nonfinite()
            .map(|(i, op)| format!("first non-finite value at node {i} ({op})"))
            .unwrap_or_else(|| "no non-finite intermediate".into());
        return Err(Error::Numerical(format!(
            "loss {value} on task {} (episode seed {}): {at}",
            ep.task_id, ep.seed
        )));
    }
    let mut g = tape.backward(loss);
    let grads = model.store.gradients(&mut g, &p);
    Ok(EpisodeResult { loss: value, grads })
}

/// Mean query accuracy over fixed dev episodes, eval mode, no adaptation.
pub fn dev_accuracy(model: &Model, dev: &[TaskData], cfg: &TrainConfig) -> Result<f64> {
    let mut jobs = Vec::new();
    for (t, task) in dev.iter().enumerate() {
        for e in 0..cfg.dev_episodes {
            jobs.push((task, derive_seed(cfg.seed, &[2, t as u64, e as u64])));
        }
    }
    let accs = jobs
        .par_iter()
        .map(|(task, seed)| {
            let ep = sample_episode(task, cfg.way, cfg.shots, cfg.queries, *seed)?;
            let pred = model.predict(&ep)?;
            let hits = pred.iter().zip(ep.query_labels()).filter(|(a, b)| **a == *b).count();
            Ok(hits as f64 / pred.len() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(accs.iter().sum::<f64>() / accs.len().max(1) as f64)
}

/// Trains `model` in place. Each meta-batch sums per-episode query losses,
/// divides by `batch size x queries per episode`, and takes one Adam step.
/// With dev tasks, the parameters of the best dev epoch are restored and
/// training stops after `patience` epochs without improvement.
pub fn meta_train(model: &mut Model, train: &[TaskData], dev: &[TaskData], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("meta-training needs at least one task".into()));
    }
    let mut adam = Adam::new(&model.store);
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, ParamStore)> = None;
    let mut since_best = 0usize;
    let queries_per_episode = (cfg.way * cfg.queries) as f64;

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr);
        let mut order: Vec<usize> = (0..train.len())
            .flat_map(|t| std::iter::repeat_n(t, cfg.episodes_per_task))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[0, epoch as u64]));
        order.shuffle(&mut rng);

        let mut epoch_losses = Vec::new();
        for (b, chunk) in order.chunks(cfg.meta_batch).enumerate() {
            let snapshot: &Model = model;
            let results = chunk
                .par_iter()
                .enumerate()
                .map(|(slot, &t)| {
                    let ep_seed = derive_seed(cfg.seed, &[1, epoch as u64, b as u64, slot as u64]);
                    let ep = sample_episode(&train[t], cfg.way, cfg.shots, cfg.queries, ep_seed)?;
                    train_episode(snapshot, &ep, derive_seed(ep_seed, &[3]))
                })
                .collect::<Result<Vec<_>>>()?;
            let norm = 1.0 / (chunk.len() as f64 * queries_per_episode);
            let mut total = model.store.zeros_like();
            let mut loss = 0.0;
            for r in &results {
                total += &r.grads;
                loss += r.loss;
            }
            total.scale(norm);
            loss *= norm;
            adam.step(&mut model.store, &total, lr)?;
            history.step_loss.push(loss);
            epoch_losses.push(loss);
        }
        let mean = epoch_losses.iter().sum::<f64>() / epoch_losses.len() as f64;
        history.epoch_loss.push(mean);
        log::debug!("epoch {epoch}: loss {mean:.6} lr {lr:.3e}");

        if !dev.is_empty() {
            let acc = dev_accuracy(model, dev, cfg)?;
            history.dev_accuracy.push(acc);
            let improved = best.as_ref().is_none_or(|(b, _)| acc > *b);
            if improved {
                best = Some((acc, model.store.clone()));
                history.best_epoch = Some(epoch);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    history.stopped_early = true;
                    log::info!("early stop at epoch {epoch}, best dev accuracy at epoch {:?}", history.best_epoch);
                    break;
                }
            }
        }
    }
    if let Some((_, store)) = best {
        model.store = store;
    }
    Ok(TrainOutcome { history, adam })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values_load() {
        let h = presets("Molecules", HeadKind::Match).unwrap();
        assert_eq!(
            h,
            Hyper {
                task_steps: 25,
                adapt_steps: 10,
                task_lr: 0.01,
                adapt_lr: 0.1,
                layers: 2
            }
        );
        assert_eq!(presets("social", HeadKind::Proto).unwrap().layers, 3);
        assert_eq!(presets("bio", HeadKind::Relation).unwrap().task_steps, 25);
        assert!(presets("vision", HeadKind::Proto).is_err());
    }

    #[test]
    fn default_config_valid() {
        TrainConfig::default().validate().unwrap();
        let bad = TrainConfig {
            meta_batch: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
