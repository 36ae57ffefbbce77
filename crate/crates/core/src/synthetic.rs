//! Synthetic cross-domain few-shot suite.
//!
//! Source domain: cycle vs tree tasks whose nodes carry `source_dim`
//! Gaussian features. Target domain: star vs Barabasi-Albert tasks with
//! `target_dim` Gaussian features. Node features carry no class signal, so
//! transfer has to come from graph structure.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{synth_graph, with_gaussian_features, Family};
use crate::meta::{derive_seed, EvalTask, TaskData};
use crate::views::{build_views, ViewBundle, ViewConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub train_tasks: usize,
    pub dev_tasks: usize,
    pub test_tasks: usize,
    /// Graphs per class in each training/dev task.
    pub train_per_class: usize,
    /// Support pool and query set sizes per class in each test task.
    pub test_support: usize,
    pub test_query: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub source_dim: usize,
    pub target_dim: usize,
    pub ba_m: usize,
    pub target_features: TargetFeatures,
    pub seed: u64,
}

/// Node features of target-domain graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetFeatures {
    /// `target_dim` i.i.d. standard normal columns.
    Gaussian,
    /// The all-ones matrix used for datasets without node information.
    Featureless,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            train_tasks: 16,
            dev_tasks: 0,
            test_tasks: 4,
            train_per_class: 20,
            test_support: 20,
            test_query: 50,
            min_nodes: 8,
            max_nodes: 24,
            source_dim: 8,
            target_dim: 16,
            ba_m: 2,
            target_features: TargetFeatures::Gaussian,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub train: Vec<TaskData>,
    pub dev: Vec<TaskData>,
    pub test: Vec<EvalTask>,
}

#[derive(Clone, Copy)]
enum Domain {
    Source,
    Target,
}

fn family(domain: Domain, class: usize, n: usize, ba_m: usize) -> Family {
    match (domain, class) {
        (Domain::Source, 0) => Family::Cycle { n },
        (Domain::Source, _) => Family::Tree { n },
        (Domain::Target, 0) => Family::Star { n },
        (Domain::Target, _) => Family::BarabasiAlbert { n, m: ba_m },
    }
}

fn class_graphs(
    cfg: &SyntheticConfig,
    views: &ViewConfig,
    domain: Domain,
    class: usize,
    count: usize,
    seed: u64,
    task_id: &str,
) -> Result<Vec<Arc<ViewBundle>>> {
    let dim = match domain {
        Domain::Source => cfg.source_dim,
        Domain::Target => cfg.target_dim,
    };
    (0..count)
        .map(|i| {
            let s = derive_seed(seed, &[class as u64, i as u64]);
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let n = rng.random_range(cfg.min_nodes..=cfg.max_nodes);
            let g = synth_graph(&family(domain, class, n, cfg.ba_m), s)?;
            let g = match (domain, cfg.target_features) {
                (Domain::Target, TargetFeatures::Featureless) => g.with_features(Array2::ones((n, dim)))?,
                _ => with_gaussian_features(g, dim, &mut rng)?,
            };
            let g = g
                .with_label(class as i64)
                .with_origin(format!("{task_id}:{class}:{i}"));
            Ok(Arc::new(build_views(&g, views)?))
        })
        .collect()
}

fn train_task(cfg: &SyntheticConfig, views: &ViewConfig, id: String, seed: u64) -> Result<TaskData> {
    let mut bundles = Vec::new();
    for class in 0..2 {
        bundles.extend(class_graphs(cfg, views, Domain::Source, class, cfg.train_per_class, seed, &id)?);
    }
    Ok(TaskData::from_bundles(id, bundles))
}

/// Builds the suite deterministically from `cfg.seed`.
pub fn cross_domain_suite(cfg: &SyntheticConfig, views: &ViewConfig) -> Result<SyntheticSuite> {
    if cfg.min_nodes < 4 || cfg.max_nodes < cfg.min_nodes || cfg.max_nodes > 50 {
        return Err(Error::Config(format!(
            "node range {}..={} must lie within 4..=50",
            cfg.min_nodes, cfg.max_nodes
        )));
    }
    if cfg.train_tasks == 0 || cfg.test_tasks == 0 {
        return Err(Error::Config("synthetic suite needs train and test tasks".into()));
    }
    let train = (0..cfg.train_tasks)
        .into_par_iter()
        .map(|t| train_task(cfg, views, format!("src-{t}"), derive_seed(cfg.seed, &[10, t as u64])))
        .collect::<Result<Vec<_>>>()?;
    let dev = (0..cfg.dev_tasks)
        .into_par_iter()
        .map(|t| train_task(cfg, views, format!("dev-{t}"), derive_seed(cfg.seed, &[11, t as u64])))
        .collect::<Result<Vec<_>>>()?;
    let test = (0..cfg.test_tasks)
        .into_par_iter()
        .map(|t| {
            let id = format!("tgt-{t}");
            let seed = derive_seed(cfg.seed, &[12, t as u64]);
            let mut support = Vec::new();
            let mut query = Vec::new();
            for class in 0..2 {
                let mut all = class_graphs(
                    cfg,
                    views,
                    Domain::Target,
                    class,
                    cfg.test_support + cfg.test_query,
                    seed,
                    &id,
                )?;
                query.push(all.split_off(cfg.test_support));
                support.push(all);
            }
            Ok(EvalTask {
                task_id: id,
                support,
                query,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticSuite { train, dev, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let cfg = SyntheticConfig {
            train_tasks: 2,
            test_tasks: 1,
            train_per_class: 3,
            test_support: 2,
            test_query: 3,
            ..Default::default()
        };
        let views = ViewConfig {
            d_z: 8,
            ..Default::default()
        };
        let a = cross_domain_suite(&cfg, &views).unwrap();
        let b = cross_domain_suite(&cfg, &views).unwrap();
        assert_eq!(a.train.len(), 2);
        assert_eq!(a.train[0].classes.len(), 2);
        assert_eq!(a.test[0].support[1].len(), 2);
        assert_eq!(a.test[0].query[0].len(), 3);
        assert_eq!(a.test[0].query[1][0], b.test[0].query[1][0]);
        assert_eq!(a.train[1].classes[0].1[2], b.train[1].classes[0].1[2]);
    }
}
