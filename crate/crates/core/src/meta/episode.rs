use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::views::ViewBundle;

/// Labeled graphs of one task grouped by original class label, classes in
/// order of first appearance.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub task_id: String,
    pub classes: Vec<(i64, Vec<Arc<ViewBundle>>)>,
}

impl TaskData {
    pub fn from_bundles(task_id: impl Into<String>, bundles: impl IntoIterator<Item = Arc<ViewBundle>>) -> Self {
        let mut classes: Vec<(i64, Vec<Arc<ViewBundle>>)> = Vec::new();
        for b in bundles {
            match classes.iter_mut().find(|(l, _)| *l == b.label) {
                Some((_, v)) => v.push(b),
                None => classes.push((b.label, vec![b])),
            }
        }
        TaskData {
            task_id: task_id.into(),
            classes,
        }
    }

    pub fn n_graphs(&self) -> usize {
        self.classes.iter().map(|(_, v)| v.len()).sum()
    }
}

/// One k-way n-shot problem. Class indices are `0..k` in the order the
/// classes appear in the task.
#[derive(Debug, Clone)]
pub struct Episode {
    pub task_id: String,
    pub seed: u64,
    pub k: usize,
    pub n: usize,
    pub m: usize,
    /// Original label of each class index.
    pub labels: Vec<i64>,
    pub support: Vec<(Arc<ViewBundle>, usize)>,
    pub query: Vec<(Arc<ViewBundle>, usize)>,
}

impl Episode {
    pub fn support_labels(&self) -> Vec<usize> {
        self.support.iter().map(|(_, y)| *y).collect()
    }

    pub fn query_labels(&self) -> Vec<usize> {
        self.query.iter().map(|(_, y)| *y).collect()
    }

    /// Support followed by query, the order used for batched encoding.
    pub fn bundles(&self) -> Vec<&ViewBundle> {
        self.support
            .iter()
            .chain(&self.query)
            .map(|(b, _)| b.as_ref())
            .collect()
    }
}

/// Draws `n` support and `m` query graphs per class without replacement.
/// With more than `k` classes, `k` of them are drawn first (kept in task
/// order).
pub fn sample_episode(task: &TaskData, k: usize, n: usize, m: usize, seed: u64) -> Result<Episode> {
    if k == 0 || n == 0 || m == 0 {
        return Err(Error::Episode(format!("k, n, m must be positive (got {k}, {n}, {m})")));
    }
    if task.classes.len() < k {
        return Err(Error::Episode(format!(
            "task {} has {} classes, {k}-way episode requested",
            task.task_id,
            task.classes.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = if task.classes.len() == k {
        (0..k).collect()
    } else {
        sample(&mut rng, task.classes.len(), k).into_vec()
    };
    chosen.sort_unstable();

    let mut support = Vec::with_capacity(k * n);
    let mut query = Vec::with_capacity(k * m);
    let mut labels = Vec::with_capacity(k);
    for (idx, &c) in chosen.iter().enumerate() {
        let (label, pool) = &task.classes[c];
        if pool.len() < n + m {
            return Err(Error::Episode(format!(
                "class {label} of task {} has {} graphs, needs {}",
                task.task_id,
                pool.len(),
                n + m
            )));
        }
        let picks = sample(&mut rng, pool.len(), n + m).into_vec();
        support.extend(picks[..n].iter().map(|&i| (pool[i].clone(), idx)));
        query.extend(picks[n..].iter().map(|&i| (pool[i].clone(), idx)));
        labels.push(*label);
    }
    Ok(Episode {
        task_id: task.task_id.clone(),
        seed,
        k,
        n,
        m,
        labels,
        support,
        query,
    })
}
