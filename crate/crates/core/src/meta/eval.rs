use std::sync::Arc;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adapt::cosine_adapt;
use super::train::Model;
use super::{argmax_rows, derive_seed};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::views::ViewBundle;

/// A meta-test task with fixed support pools and query sets per class.
#[derive(Debug, Clone)]
pub struct EvalTask {
    pub task_id: String,
    pub support: Vec<Vec<Arc<ViewBundle>>>,
    pub query: Vec<Vec<Arc<ViewBundle>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub shots: usize,
    pub runs: usize,
    /// Fit a cosine classifier on the support set instead of using the head.
    pub adapt: bool,
    pub adapt_steps: usize,
    pub adapt_lr: f64,
    pub tau: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            shots: 5,
            runs: 10,
            adapt: true,
            adapt_steps: 50,
            adapt_lr: 0.01,
            tau: super::adapt::DEFAULT_TAU,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub task_id: String,
    /// Query accuracy of every run.
    pub runs: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub per_task: Vec<TaskScore>,
    pub mean: f64,
    pub std: f64,
    pub seeds: Vec<u64>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-task mean and population std over runs, and the aggregate over all
/// runs x tasks.
pub fn summarize(task_ids: &[String], acc: &[Vec<f64>], seeds: Vec<u64>) -> EvalOutcome {
    let per_task = task_ids
        .iter()
        .zip(acc)
        .map(|(id, runs)| {
            let (mean, std) = mean_std(runs);
            TaskScore {
                task_id: id.clone(),
                runs: runs.clone(),
                mean,
                std,
            }
        })
        .collect();
    let all: Vec<f64> = acc.iter().flatten().copied().collect();
    let (mean, std) = mean_std(&all);
    EvalOutcome {
        per_task,
        mean,
        std,
        seeds,
    }
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    hits as f64 / truth.len() as f64
}

fn task_accuracies(model: &Model, task: &EvalTask, cfg: &EvalConfig, seeds: &[u64]) -> Result<Vec<f64>> {
    let k = task.support.len();
    if k < 2 || task.query.len() != k {
        return Err(Error::Episode(format!("task {} needs matching support and query classes", task.task_id)));
    }
    for (j, pool) in task.support.iter().enumerate() {
        if pool.len() < cfg.shots {
            return Err(Error::Episode(format!(
                "class {j} of task {} has {} support graphs, {} shots requested",
                task.task_id,
                pool.len(),
                cfg.shots
            )));
        }
    }
    // Eval mode is deterministic, so every graph is embedded once.
    let support_all: Vec<&ViewBundle> = task.support.iter().flatten().map(|b| b.as_ref()).collect();
    let query_all: Vec<&ViewBundle> = task.query.iter().flatten().map(|b| b.as_ref()).collect();
    let hs_all = model.encoder.embed(&model.store, &support_all)?;
    let hq = model.encoder.embed(&model.store, &query_all)?;
    let yq: Vec<usize> = task.query.iter().enumerate().flat_map(|(j, v)| std::iter::repeat_n(j, v.len())).collect();

    let id_parts: Vec<u64> = task.task_id.bytes().map(u64::from).collect();
    let mut out = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &id_parts));
        let mut rows = Vec::new();
        let mut ys = Vec::new();
        let mut offset = 0;
        for (j, pool) in task.support.iter().enumerate() {
            let mut picks = sample(&mut rng, pool.len(), cfg.shots).into_vec();
            picks.sort_unstable();
            rows.extend(picks.into_iter().map(|i| offset + i));
            ys.extend(std::iter::repeat_n(j, cfg.shots));
            offset += pool.len();
        }
        let hs: Array2<f64> = hs_all.select(ndarray::Axis(0), &rows);
        let pred = if cfg.adapt {
            cosine_adapt(&hs, &ys, k, cfg.adapt_steps, cfg.adapt_lr, cfg.tau)?.predict(&hq)
        } else {
            let mut tape = Tape::new();
            let p = model.store.bind(&mut tape);
            let s = tape.leaf(hs);
            let q = tape.leaf(hq.clone());
            let scores = model.head.scores(&mut tape, &p, s, &ys, q, k)?;
            argmax_rows(tape.value(scores))
        };
        out.push(accuracy(&pred, &yq));
    }
    Ok(out)
}

/// Accuracy over `runs` repetitions, each drawing a fresh `shots`-per-class
/// support set from every task's support pool.
pub fn evaluate(model: &Model, tasks: &[EvalTask], cfg: &EvalConfig) -> Result<EvalOutcome> {
    if cfg.runs == 0 || cfg.shots == 0 {
        return Err(Error::Config("runs and shots must be positive".into()));
    }
    if tasks.is_empty() {
        return Err(Error::Config("no evaluation tasks".into()));
    }
    let seeds: Vec<u64> = (0..cfg.runs).map(|r| derive_seed(cfg.seed, &[4, r as u64])).collect();
    let acc = tasks
        .par_iter()
        .map(|t| task_accuracies(model, t, cfg, &seeds))
        .collect::<Result<Vec<_>>>()?;
    let ids: Vec<String> = tasks.iter().map(|t| t.task_id.clone()).collect();
    Ok(summarize(&ids, &acc, seeds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_classifier_on_balanced_queries() {
        let truth = [0, 0, 1, 1];
        assert_eq!(accuracy(&[0, 0, 0, 0], &truth), 0.5);
    }

    #[test]
    fn single_run_std_is_over_tasks() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let out = summarize(&ids, &[vec![0.6], vec![1.0]], vec![1]);
        assert_eq!(out.per_task[0].std, 0.0);
        assert!((out.mean - 0.8).abs() < 1e-15);
        assert!((out.std - 0.2).abs() < 1e-15);
    }
}
