//! Benchmark construction: dataset filtering, splitting multi-task and
//! multi-class datasets into disjoint binary tasks, fixed support/query
//! selection, and origin-atomic train/dev/test allocation.
//!
//! Manifests reference graphs by sample id `"<dataset>:<1-based graph id>"`
//! and never copy graph data.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{preprocess, FilterLimits, Graph};
use crate::meta::{derive_seed, EvalTask, TaskData};
use crate::tudataset::{load_dataset, Dataset};
use crate::views::{build_views, ViewBundle, ViewConfig};

pub const MANIFEST_VERSION: u32 = 1;
pub const SUPPORT_PER_CLASS: usize = 20;
pub const QUERY_PER_CLASS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaDomain {
    Molecules,
    Bioinformatics,
    Social,
}

impl fmt::Display for MetaDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MetaDomain::Molecules => "molecules",
            MetaDomain::Bioinformatics => "bioinformatics",
            MetaDomain::Social => "social",
        })
    }
}

impl FromStr for MetaDomain {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "molecules" | "mol" => Ok(MetaDomain::Molecules),
            "bioinformatics" | "bio" => Ok(MetaDomain::Bioinformatics),
            "social" | "social_networks" => Ok(MetaDomain::Social),
            _ => Err(Error::Config(format!("unknown meta-domain {s:?}"))),
        }
    }
}

/// A single-label view of (part of) a dataset: graph indices with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleTask {
    pub name: String,
    /// Source dataset; all tasks sharing an origin land in one split.
    pub origin: String,
    pub samples: Vec<(usize, i64)>,
}

impl SingleTask {
    /// Class labels in ascending order with their graph indices.
    pub fn classes(&self) -> BTreeMap<i64, Vec<usize>> {
        let mut m: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for &(g, l) in &self.samples {
            m.entry(l).or_default().push(g);
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub dataset: String,
    pub task: String,
    pub reason: String,
}

fn min_class_warning(task: &SingleTask, need: usize) -> Option<Warning> {
    let classes = task.classes();
    if classes.len() < 2 {
        return Some(Warning {
            dataset: task.origin.clone(),
            task: task.name.clone(),
            reason: format!("skipped: {} class(es) present", classes.len()),
        });
    }
    let short: Vec<String> = classes
        .iter()
        .filter(|(_, v)| v.len() < need)
        .map(|(l, v)| format!("class {l} has {}", v.len()))
        .collect();
    (!short.is_empty()).then(|| Warning {
        dataset: task.origin.clone(),
        task: task.name.clone(),
        reason: format!("skipped: {} (needs {need} per class)", short.join(", ")),
    })
}

/// Splits a dataset with `T` label columns into `T` single-task datasets
/// with no shared graphs. Graphs are visited in seeded random order and each
/// goes to the labeled column that currently holds the fewest graphs (ties
/// to the lower column). Columns with a class below `min_per_class` are
/// dropped with a warning. `usable[g]` marks graphs surviving filtering.
pub fn split_multitask(
    ds: &Dataset,
    usable: &[bool],
    seed: u64,
    min_per_class: usize,
) -> Result<(Vec<SingleTask>, Vec<Warning>)> {
    let t = ds.n_tasks();
    if t == 0 {
        return Err(Error::Benchmark(format!("dataset {} has no label columns", ds.name)));
    }
    if usable.len() != ds.graphs.len() {
        return Err(Error::Benchmark("usable mask does not match dataset".into()));
    }
    let name = |c: usize| {
        if t == 1 {
            ds.name.clone()
        } else {
            format!("{}#t{c}", ds.name)
        }
    };
    let mut tasks: Vec<SingleTask> = (0..t)
        .map(|c| SingleTask {
            name: name(c),
            origin: ds.name.clone(),
            samples: Vec::new(),
        })
        .collect();
    let mut order: Vec<usize> = (0..ds.graphs.len()).filter(|&g| usable[g]).collect();
    if t > 1 {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    for g in order {
        let best = (0..t)
            .filter(|&c| ds.labels[g].get(c).copied().flatten().is_some())
            .min_by_key(|&c| (tasks[c].samples.len(), c));
        if let Some(c) = best {
            let label = ds.labels[g][c].expect("filtered to labeled");
            tasks[c].samples.push((g, label));
        }
    }
    if t > 1 {
        for task in &mut tasks {
            task.samples.sort_unstable();
        }
    }
    let mut warnings = Vec::new();
    let mut kept = Vec::new();
    for task in tasks {
        // Multi-class columns are screened after pairing.
        if task.classes().len() <= 2 {
            if let Some(w) = min_class_warning(&task, min_per_class) {
                warnings.push(w);
                continue;
            }
        }
        kept.push(task);
    }
    Ok((kept, warnings))
}

/// Pairs the classes of a multi-class task at random into `floor(C / 2)`
/// binary tasks; pairs with a class below `min_per_class` are dropped with
/// a warning. Two-class tasks pass through unchanged.
pub fn split_multiclass(
    task: &SingleTask,
    seed: u64,
    min_per_class: usize,
) -> Result<(Vec<SingleTask>, Vec<Warning>)> {
    let classes = task.classes();
    if classes.len() < 2 {
        return Err(Error::Benchmark(format!("task {} has fewer than two classes", task.name)));
    }
    if classes.len() == 2 {
        return Ok(match min_class_warning(task, min_per_class) {
            Some(w) => (Vec::new(), vec![w]),
            None => (vec![task.clone()], Vec::new()),
        });
    }
    let mut labels: Vec<i64> = classes.keys().copied().collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for pair in labels.chunks_exact(2) {
        let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
        let mut samples: Vec<(usize, i64)> = task
            .samples
            .iter()
            .copied()
            .filter(|&(_, l)| l == a || l == b)
            .collect();
        samples.sort_unstable();
        let sub = SingleTask {
            name: format!("{}#c{a}-{b}", task.name),
            origin: task.origin.clone(),
            samples,
        };
        match min_class_warning(&sub, min_per_class) {
            Some(w) => warnings.push(w),
            None => out.push(sub),
        }
    }
    Ok((out, warnings))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskManifest {
    pub task_id: String,
    pub dataset: String,
    pub domain: MetaDomain,
    /// Original labels of class 0 and class 1.
    pub classes: [i64; 2],
    /// Sample ids per class.
    pub support: [Vec<String>; 2],
    pub query: [Vec<String>; 2],
    pub seed: u64,
}

impl TaskManifest {
    pub fn sample_ids(&self) -> impl Iterator<Item = &String> {
        self.support.iter().chain(&self.query).flatten()
    }
}

pub fn sample_id(dataset: &str, graph_index: usize) -> String {
    format!("{dataset}:{}", graph_index + 1)
}

/// Draws `support` and `query` graphs per class without replacement.
pub fn build_task(
    task: &SingleTask,
    domain: MetaDomain,
    seed: u64,
    support: usize,
    query: usize,
) -> Result<TaskManifest> {
    let classes = task.classes();
    if classes.len() != 2 {
        return Err(Error::Benchmark(format!(
            "task {} has {} classes, expected 2",
            task.name,
            classes.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = [0i64; 2];
    let mut sup: [Vec<String>; 2] = Default::default();
    let mut qry: [Vec<String>; 2] = Default::default();
    for (j, (label, graphs)) in classes.into_iter().enumerate() {
        if graphs.len() < support + query {
            return Err(Error::Benchmark(format!(
                "class {label} of task {} has {} graphs, needs {}",
                task.name,
                graphs.len(),
                support + query
            )));
        }
        let picks = rand::seq::index::sample(&mut rng, graphs.len(), support + query).into_vec();
        labels[j] = label;
        sup[j] = picks[..support].iter().map(|&i| sample_id(&task.origin, graphs[i])).collect();
        qry[j] = picks[support..].iter().map(|&i| sample_id(&task.origin, graphs[i])).collect();
    }
    Ok(TaskManifest {
        task_id: task.name.clone(),
        dataset: task.origin.clone(),
        domain,
        classes: labels,
        support: sup,
        query: qry,
        seed,
    })
}

/// Which graphs of a dataset survive filtering and subsampling, and the
/// processed graphs themselves.
pub fn filter_dataset(ds: &Dataset, limits: &FilterLimits) -> Vec<Option<Graph>> {
    ds.graphs.par_iter().map(|g| preprocess(g, limits).ok()).collect()
}

/// Filters, splits and samples every task of one dataset.
pub fn dataset_tasks(
    ds: &Dataset,
    domain: MetaDomain,
    limits: &FilterLimits,
    seed: u64,
) -> Result<(Vec<TaskManifest>, Vec<Warning>)> {
    let need = SUPPORT_PER_CLASS + QUERY_PER_CLASS;
    let usable: Vec<bool> = filter_dataset(ds, limits).iter().map(Option::is_some).collect();
    let (tasks, mut warnings) = split_multitask(ds, &usable, derive_seed(seed, &[0]), need)?;
    let mut binary = Vec::new();
    for (i, t) in tasks.iter().enumerate() {
        let (b, w) = split_multiclass(t, derive_seed(seed, &[1, i as u64]), need)?;
        binary.extend(b);
        warnings.extend(w);
    }
    let manifests = binary
        .iter()
        .enumerate()
        .map(|(i, t)| {
            build_task(
                t,
                domain,
                derive_seed(seed, &[2, i as u64]),
                SUPPORT_PER_CLASS,
                QUERY_PER_CLASS,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifests, warnings))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkManifest {
    pub version: u32,
    pub tool_version: String,
    pub name: String,
    pub source_domain: MetaDomain,
    pub target_domain: MetaDomain,
    pub seed: u64,
    pub tasks: Vec<TaskManifest>,
    pub splits: Splits,
    pub warnings: Vec<Warning>,
}

impl BenchmarkManifest {
    pub fn counts(&self) -> (usize, usize, usize) {
        (self.splits.train.len(), self.splits.dev.len(), self.splits.test.len())
    }

    pub fn task(&self, id: &str) -> Option<&TaskManifest> {
        self.tasks.iter().find(|t| t.task_id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: BenchmarkManifest = serde_json::from_str(text)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Benchmark(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }

    /// SHA-256 of the compact JSON serialization (fields in declaration
    /// order).
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("manifest serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Checks that splits are disjoint, every task is in exactly one split,
    /// all tasks of an origin share a split, support and query never overlap
    /// and no sample is used by two tasks.
    pub fn check_integrity(&self) -> Result<()> {
        let mut split_of: HashMap<&str, &str> = HashMap::new();
        for (name, ids) in [("train", &self.splits.train), ("dev", &self.splits.dev), ("test", &self.splits.test)] {
            for id in ids {
                if split_of.insert(id.as_str(), name).is_some() {
                    return Err(Error::Benchmark(format!("task {id} appears in two splits")));
                }
            }
        }
        let mut origin_split: HashMap<&str, &str> = HashMap::new();
        let mut owner: HashMap<&str, &str> = HashMap::new();
        for t in &self.tasks {
            let split = split_of
                .get(t.task_id.as_str())
                .ok_or_else(|| Error::Benchmark(format!("task {} is in no split", t.task_id)))?;
            if let Some(prev) = origin_split.insert(t.dataset.as_str(), split) {
                if prev != *split {
                    return Err(Error::Benchmark(format!(
                        "origin {} spans splits {prev} and {split}",
                        t.dataset
                    )));
                }
            }
            for s in t.sample_ids() {
                if let Some(other) = owner.insert(s.as_str(), t.task_id.as_str()) {
                    return Err(Error::Benchmark(format!(
                        "sample {s} used by {other} and {}",
                        t.task_id
                    )));
                }
            }
        }
        if split_of.len() != self.tasks.len() {
            return Err(Error::Benchmark("split lists reference unknown tasks".into()));
        }
        Ok(())
    }
}

/// How dev and test tasks are chosen from the source domain.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRule {
    /// Datasets whose tasks form the dev split.
    #[serde(default)]
    pub dev_datasets: Vec<String>,
    /// Datasets whose tasks form the test split (same-domain benchmarks).
    #[serde(default)]
    pub test_datasets: Vec<String>,
    /// Exact task counts, filled origin-atomically when no dataset list is
    /// given.
    #[serde(default)]
    pub dev_tasks: Option<usize>,
    #[serde(default)]
    pub test_tasks: Option<usize>,
}

/// Assigns whole origins so that test and dev receive exactly the requested
/// task counts and at least one task is left for training. Origins are
/// tried in seeded order, each going to test, dev, then train.
fn allocate_counts(
    groups: &[(String, usize)],
    test: usize,
    dev: usize,
    seed: u64,
) -> Option<(Vec<String>, Vec<String>)> {
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let sizes: Vec<usize> = order.iter().map(|&i| groups[i].1).collect();
    let mut suffix = vec![0usize; sizes.len() + 1];
    for i in (0..sizes.len()).rev() {
        suffix[i] = suffix[i + 1] + sizes[i];
    }
    // slot: 0 test, 1 dev, 2 train
    let mut slots = vec![2u8; sizes.len()];
    let mut budget = 1_000_000usize;

    fn dfs(
        i: usize,
        need: [usize; 2],
        train: usize,
        sizes: &[usize],
        suffix: &[usize],
        slots: &mut [u8],
        budget: &mut usize,
    ) -> bool {
        if *budget == 0 {
            return false;
        }
        *budget -= 1;
        if i == sizes.len() {
            return need == [0, 0] && train > 0;
        }
        if suffix[i] < need[0] + need[1] {
            return false;
        }
        let w = sizes[i];
        for slot in 0..3u8 {
            let mut next = need;
            let mut tr = train;
            match slot {
                0 | 1 if need[slot as usize] < w => continue,
                0 | 1 => next[slot as usize] -= w,
                _ => tr += w,
            }
            slots[i] = slot;
            if dfs(i + 1, next, tr, sizes, suffix, slots, budget) {
                return true;
            }
        }
        false
    }

    if !dfs(0, [test, dev], 0, &sizes, &suffix, &mut slots, &mut budget) {
        return None;
    }
    let pick = |slot: u8| {
        order
            .iter()
            .zip(&slots)
            .filter(|(_, &s)| s == slot)
            .map(|(&i, _)| groups[i].0.clone())
            .collect()
    };
    Some((pick(0), pick(1)))
}

/// Allocates tasks to splits. Target-domain tasks of a cross-domain
/// benchmark all go to test. Dev (and, within one domain, test) is taken
/// from the listed datasets or filled to the requested count with whole
/// origins; everything else from the source domain is training data.
pub fn assemble_benchmark(
    name: &str,
    source: MetaDomain,
    target: MetaDomain,
    source_tasks: Vec<TaskManifest>,
    target_tasks: Vec<TaskManifest>,
    rule: &SplitRule,
    seed: u64,
    warnings: Vec<Warning>,
) -> Result<BenchmarkManifest> {
    let cross = source != target;
    if !cross && !target_tasks.is_empty() {
        return Err(Error::Config("same-domain benchmark takes all tasks as source tasks".into()));
    }
    if !rule.dev_datasets.is_empty() && rule.dev_tasks.is_some() {
        return Err(Error::Config("give dev datasets or a dev task count, not both".into()));
    }
    if !rule.test_datasets.is_empty() && rule.test_tasks.is_some() {
        return Err(Error::Config("give test datasets or a test task count, not both".into()));
    }
    if cross && (!rule.test_datasets.is_empty() || rule.test_tasks.is_some()) {
        return Err(Error::Config("cross-domain benchmarks test on the target domain only".into()));
    }

    let mut sizes: BTreeMap<String, usize> = BTreeMap::new();
    for t in &source_tasks {
        *sizes.entry(t.dataset.clone()).or_default() += 1;
    }
    let mut assigned: BTreeMap<String, &str> = BTreeMap::new();
    let take = |names: &[String], split: &'static str, assigned: &mut BTreeMap<String, &str>| -> Result<()> {
        for n in names {
            if !sizes.contains_key(n) {
                return Err(Error::Benchmark(format!("dataset {n} contributes no source tasks")));
            }
            if assigned.insert(n.clone(), split).is_some() {
                return Err(Error::Benchmark(format!("dataset {n} requested for two splits")));
            }
        }
        Ok(())
    };
    take(&rule.test_datasets, "test", &mut assigned)?;
    take(&rule.dev_datasets, "dev", &mut assigned)?;

    if rule.test_tasks.is_some() || rule.dev_tasks.is_some() {
        let free: Vec<(String, usize)> = sizes
            .iter()
            .filter(|(n, _)| !assigned.contains_key(*n))
            .map(|(n, &c)| (n.clone(), c))
            .collect();
        let test = rule.test_tasks.unwrap_or(0);
        let dev = rule.dev_tasks.unwrap_or(0);
        let Some((test_origins, dev_origins)) = allocate_counts(&free, test, dev, derive_seed(seed, &[0])) else {
            let blocking: Vec<String> = free
                .iter()
                .filter(|(_, c)| *c > test.max(dev))
                .map(|(n, c)| format!("{n} ({c} tasks)"))
                .collect();
            return Err(Error::Benchmark(format!(
                "cannot place exactly {test} test and {dev} dev tasks with whole origins while keeping \
                 training data; origins: [{}]; blocking: [{}]",
                free.iter().map(|(n, c)| format!("{n}={c}")).collect::<Vec<_>>().join(", "),
                blocking.join(", ")
            )));
        };
        for n in test_origins {
            assigned.insert(n, "test");
        }
        for n in dev_origins {
            assigned.insert(n, "dev");
        }
    }

    let mut splits = Splits::default();
    for t in &source_tasks {
        match assigned.get(&t.dataset).copied() {
            Some("dev") => splits.dev.push(t.task_id.clone()),
            Some("test") => splits.test.push(t.task_id.clone()),
            _ => splits.train.push(t.task_id.clone()),
        }
    }
    splits.test.extend(target_tasks.iter().map(|t| t.task_id.clone()));
    if splits.train.is_empty() {
        return Err(Error::Benchmark("no training tasks left after allocation".into()));
    }
    let mut tasks = source_tasks;
    tasks.extend(target_tasks);
    let ids: BTreeSet<&str> = tasks.iter().map(|t| t.task_id.as_str()).collect();
    if ids.len() != tasks.len() {
        return Err(Error::Benchmark("duplicate task ids".into()));
    }
    let m = BenchmarkManifest {
        version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        name: name.to_string(),
        source_domain: source,
        target_domain: target,
        seed,
        tasks,
        splits,
        warnings,
    };
    m.check_integrity()?;
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDataset {
    pub name: String,
    pub domain: MetaDomain,
}

/// Description of a benchmark to build from datasets on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub name: String,
    pub source_domain: MetaDomain,
    pub target_domain: MetaDomain,
    pub seed: u64,
    pub datasets: Vec<CorpusDataset>,
    #[serde(default)]
    pub split: SplitRule,
}

impl CorpusSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Molecules to `target` with the five molecule dev datasets of the
    /// published benchmarks. Dataset names follow the on-disk directory
    /// names and must be adjusted to the local copy.
    pub fn published_cross_domain(target: MetaDomain, datasets: Vec<CorpusDataset>, seed: u64) -> Self {
        CorpusSpec {
            name: format!("molecules-{target}"),
            source_domain: MetaDomain::Molecules,
            target_domain: target,
            seed,
            datasets,
            split: SplitRule {
                dev_datasets: PUBLISHED_DEV.iter().map(|s| s.to_string()).collect(),
                ..Default::default()
            },
        }
    }
}

/// Molecule datasets used for validation in the published benchmarks.
pub const PUBLISHED_DEV: [&str; 5] = ["SW-620", "SW-620H", "YEAST", "YEASTH", "MOLCLINTOX"];

/// Loads, filters, splits and assembles a whole benchmark.
pub fn build_benchmark(spec: &CorpusSpec, data_dir: &Path, limits: &FilterLimits) -> Result<BenchmarkManifest> {
    limits.validate()?;
    let cross = spec.source_domain != spec.target_domain;
    let per_dataset = spec
        .datasets
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let ds = load_dataset(data_dir, &d.name)?;
            dataset_tasks(&ds, d.domain, limits, derive_seed(spec.seed, &[100, i as u64]))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut source = Vec::new();
    let mut target = Vec::new();
    let mut warnings = Vec::new();
    for (d, (tasks, w)) in spec.datasets.iter().zip(per_dataset) {
        warnings.extend(w);
        if d.domain == spec.source_domain {
            source.extend(tasks);
        } else if cross && d.domain == spec.target_domain {
            target.extend(tasks);
        } else {
            return Err(Error::Config(format!(
                "dataset {} belongs to {}, outside this benchmark",
                d.name, d.domain
            )));
        }
    }
    assemble_benchmark(
        &spec.name,
        spec.source_domain,
        spec.target_domain,
        source,
        target,
        &spec.split,
        spec.seed,
        warnings,
    )
}

/// Training, dev and test tasks materialized from a manifest.
#[derive(Debug, Clone)]
pub struct ResolvedBenchmark {
    pub train: Vec<TaskData>,
    pub dev: Vec<TaskData>,
    pub test: Vec<EvalTask>,
}

/// Rebuilds the view bundles referenced by a manifest. Graph filtering is
/// re-run, so a manifest only resolves against the data it was built from.
pub fn resolve_benchmark(m: &BenchmarkManifest, data_dir: &Path, views: &ViewConfig, limits: &FilterLimits) -> Result<ResolvedBenchmark> {
    let datasets: BTreeSet<&str> = m.tasks.iter().map(|t| t.dataset.as_str()).collect();
    let mut pool: HashMap<String, Arc<ViewBundle>> = HashMap::new();
    for name in datasets {
        let ds = load_dataset(data_dir, name)?;
        let wanted: BTreeSet<usize> = m
            .tasks
            .iter()
            .filter(|t| t.dataset == name)
            .flat_map(|t| t.sample_ids())
            .filter_map(|s| s.rsplit_once(':').and_then(|(_, g)| g.parse::<usize>().ok()))
            .collect();
        let built = wanted
            .par_iter()
            .map(|&gid| {
                let id = sample_id(name, gid - 1);
                let g = ds
                    .graphs
                    .get(gid - 1)
                    .ok_or_else(|| Error::Benchmark(format!("sample {id} does not exist")))?;
                let g = preprocess(g, limits)
                    .map_err(|r| Error::Benchmark(format!("sample {id} is now filtered out ({r:?})")))?;
                Ok((id, Arc::new(build_views(&g, views)?)))
            })
            .collect::<Result<Vec<_>>>()?;
        pool.extend(built);
    }
    let relabel = |ids: &[String], label: i64| -> Result<Vec<Arc<ViewBundle>>> {
        ids.iter()
            .map(|s| {
                let b = pool
                    .get(s)
                    .ok_or_else(|| Error::Benchmark(format!("sample {s} missing")))?;
                let mut b = (**b).clone();
                b.label = label;
                Ok(Arc::new(b))
            })
            .collect()
    };
    let find = |id: &String| {
        m.task(id)
            .ok_or_else(|| Error::Benchmark(format!("split references unknown task {id}")))
    };
    let to_train = |ids: &[String]| -> Result<Vec<TaskData>> {
        ids.iter()
            .map(|id| {
                let t = find(id)?;
                let mut bundles = Vec::new();
                for j in 0..2 {
                    bundles.extend(relabel(&t.support[j], t.classes[j])?);
                    bundles.extend(relabel(&t.query[j], t.classes[j])?);
                }
                Ok(TaskData::from_bundles(t.task_id.clone(), bundles))
            })
            .collect()
    };
    let test = m
        .splits
        .test
        .iter()
        .map(|id| {
            let t = find(id)?;
            Ok(EvalTask {
                task_id: t.task_id.clone(),
                support: (0..2).map(|j| relabel(&t.support[j], t.classes[j])).collect::<Result<_>>()?,
                query: (0..2).map(|j| relabel(&t.query[j], t.classes[j])).collect::<Result<_>>()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResolvedBenchmark {
        train: to_train(&m.splits.train)?,
        dev: to_train(&m.splits.dev)?,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{synth_graph, Family};

    fn dataset(name: &str, labels: Vec<Vec<Option<i64>>>) -> Dataset {
        let graphs = (0..labels.len())
            .map(|i| synth_graph(&Family::Cycle { n: 3 + i % 4 }, 0).unwrap())
            .collect();
        Dataset {
            name: name.into(),
            graphs,
            labels,
        }
    }

    #[test]
    fn single_column_is_identity() {
        let ds = dataset("D", (0..10).map(|i| vec![Some(i % 2)]).collect());
        let (tasks, w) = split_multitask(&ds, &[true; 10], 3, 1).unwrap();
        assert!(w.is_empty());
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].samples, (0..10).map(|i| (i, (i % 2) as i64)).collect::<Vec<_>>());
    }

    #[test]
    fn two_columns_partition() {
        let ds = dataset("D", (0..400).map(|i| vec![Some(i % 2), Some((i / 2) % 2)]).collect());
        let (tasks, _) = split_multitask(&ds, &vec![true; 400], 3, 1).unwrap();
        assert_eq!(tasks.len(), 2);
        let a: BTreeSet<usize> = tasks[0].samples.iter().map(|s| s.0).collect();
        let b: BTreeSet<usize> = tasks[1].samples.iter().map(|s| s.0).collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len() + b.len(), 400);
        assert_eq!(a.len(), 200);
        let again = split_multitask(&ds, &vec![true; 400], 3, 1).unwrap().0;
        assert_eq!(again, tasks);
    }

    #[test]
    fn short_column_warns() {
        let ds = dataset("D", (0..20).map(|i| vec![Some(i % 2), Some(if i < 19 { 0 } else { 1 })]).collect());
        let (tasks, w) = split_multitask(&ds, &[true; 20], 3, 2).unwrap();
        assert!(tasks.iter().all(|t| t.name != "D#t1"));
        assert!(w.iter().any(|w| w.task == "D#t1"));
    }

    #[test]
    fn multiclass_pairs() {
        let task = SingleTask {
            name: "E".into(),
            origin: "E".into(),
            samples: (0..60).map(|i| (i, (i % 6) as i64)).collect(),
        };
        let (pairs, w) = split_multiclass(&task, 9, 10).unwrap();
        assert_eq!(pairs.len(), 3);
        assert!(w.is_empty());
        let mut seen = BTreeSet::new();
        for p in &pairs {
            assert_eq!(p.classes().len(), 2);
            for s in &p.samples {
                assert!(seen.insert(s.0));
            }
        }
        assert_eq!(split_multiclass(&task, 9, 10).unwrap().0, pairs);

        let three = SingleTask {
            name: "T".into(),
            origin: "T".into(),
            samples: (0..30).map(|i| (i, (i % 3) as i64)).collect(),
        };
        assert_eq!(split_multiclass(&three, 1, 10).unwrap().0.len(), 1);
    }

    #[test]
    fn build_task_boundary() {
        let task = SingleTask {
            name: "B".into(),
            origin: "B".into(),
            samples: (0..140).map(|i| (i, (i % 2) as i64)).collect(),
        };
        let m = build_task(&task, MetaDomain::Molecules, 5, 20, 50).unwrap();
        assert_eq!(m.support[0].len() + m.support[1].len(), 40);
        assert_eq!(m.query[0].len() + m.query[1].len(), 100);
        let all: BTreeSet<&String> = m.sample_ids().collect();
        assert_eq!(all.len(), 140);
        assert_eq!(build_task(&task, MetaDomain::Molecules, 5, 20, 50).unwrap(), m);
        assert!(build_task(&task, MetaDomain::Molecules, 5, 20, 51).is_err());
    }

    fn stub(id: &str, origin: &str) -> TaskManifest {
        TaskManifest {
            task_id: id.into(),
            dataset: origin.into(),
            domain: MetaDomain::Molecules,
            classes: [0, 1],
            support: [vec![format!("{id}:s0")], vec![format!("{id}:s1")]],
            query: [vec![format!("{id}:q0")], vec![format!("{id}:q1")]],
            seed: 0,
        }
    }

    #[test]
    fn single_origin_cannot_fill_three_splits() {
        let tasks = vec![stub("a", "O"), stub("b", "O"), stub("c", "O")];
        let rule = SplitRule {
            dev_tasks: Some(1),
            test_tasks: Some(1),
            ..Default::default()
        };
        let err = assemble_benchmark("x", MetaDomain::Molecules, MetaDomain::Molecules, tasks, vec![], &rule, 0, vec![])
            .unwrap_err();
        assert!(err.to_string().contains("O (3 tasks)"), "{err}");
    }

    #[test]
    fn exact_counts_are_origin_atomic() {
        let mut tasks = Vec::new();
        for (origin, n) in [("A", 3), ("B", 2), ("C", 1), ("D", 4), ("E", 1)] {
            for i in 0..n {
                tasks.push(stub(&format!("{origin}{i}"), origin));
            }
        }
        let rule = SplitRule {
            dev_tasks: Some(2),
            test_tasks: Some(4),
            ..Default::default()
        };
        let m = assemble_benchmark("x", MetaDomain::Molecules, MetaDomain::Molecules, tasks.clone(), vec![], &rule, 3, vec![])
            .unwrap();
        assert_eq!(m.counts(), (5, 2, 4));
        let again = assemble_benchmark("x", MetaDomain::Molecules, MetaDomain::Molecules, tasks, vec![], &rule, 3, vec![])
            .unwrap();
        assert_eq!(m.hash(), again.hash());
    }

    #[test]
    fn cross_domain_sends_target_to_test() {
        let src = vec![stub("a", "A"), stub("b", "B"), stub("c", "C")];
        let mut tgt = stub("t", "T");
        tgt.domain = MetaDomain::Bioinformatics;
        let rule = SplitRule {
            dev_datasets: vec!["B".into()],
            ..Default::default()
        };
        let m = assemble_benchmark("x", MetaDomain::Molecules, MetaDomain::Bioinformatics, src, vec![tgt], &rule, 0, vec![])
            .unwrap();
        assert_eq!(m.splits.train, vec!["a", "c"]);
        assert_eq!(m.splits.dev, vec!["b"]);
        assert_eq!(m.splits.test, vec!["t"]);
        let back = BenchmarkManifest::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn integrity_catches_shared_samples() {
        let mut b = stub("b", "B");
        b.query[0] = vec!["a:q0".into()];
        let m = BenchmarkManifest {
            version: 1,
            tool_version: "0".into(),
            name: "x".into(),
            source_domain: MetaDomain::Molecules,
            target_domain: MetaDomain::Molecules,
            seed: 0,
            tasks: vec![stub("a", "A"), b],
            splits: Splits {
                train: vec!["a".into()],
                dev: vec![],
                test: vec!["b".into()],
            },
            warnings: vec![],
        };
        assert!(m.check_integrity().is_err());
    }
}
