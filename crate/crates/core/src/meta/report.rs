use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::eval::EvalOutcome;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSummary {
    pub task_id: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

/// One evaluation, as written to `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tool_version: String,
    pub benchmark: String,
    pub head: String,
    pub views: String,
    pub shots: usize,
    pub per_task: Vec<TaskSummary>,
    pub aggregate: Summary,
    pub seeds: Vec<u64>,
    pub config_hash: String,
}

impl MetricsReport {
    pub fn new(
        benchmark: &str,
        head: &str,
        views: &str,
        shots: usize,
        outcome: &EvalOutcome,
        config_hash: &str,
    ) -> Self {
        MetricsReport {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            benchmark: benchmark.to_string(),
            head: head.to_string(),
            views: views.to_string(),
            shots,
            per_task: outcome
                .per_task
                .iter()
                .map(|t| TaskSummary {
                    task_id: t.task_id.clone(),
                    mean: t.mean,
                    std: t.std,
                })
                .collect(),
            aggregate: Summary {
                mean: outcome.mean,
                std: outcome.std,
            },
            seeds: outcome.seeds.clone(),
            config_hash: config_hash.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text table, one row per task plus the aggregate.
    pub fn render_table(&self) -> String {
        let width = self
            .per_task
            .iter()
            .map(|t| t.task_id.len())
            .chain(["task".len(), "aggregate".len()])
            .max()
            .unwrap_or(4);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "benchmark {}  head {}  views {}  shots {}",
            self.benchmark, self.head, self.views, self.shots
        );
        let _ = writeln!(s, "{:<width$}  {:>8}  {:>8}", "task", "mean", "std");
        for t in &self.per_task {
            let _ = writeln!(s, "{:<width$}  {:>8.4}  {:>8.4}", t.task_id, t.mean, t.std);
        }
        let _ = writeln!(
            s,
            "{:<width$}  {:>8.4}  {:>8.4}",
            "aggregate", self.aggregate.mean, self.aggregate.std
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::summarize;

    #[test]
    fn table_and_json() {
        let out = summarize(&["t1".into(), "task-two".into()], &[vec![0.5, 1.0], vec![0.75, 0.75]], vec![3, 4]);
        let r = MetricsReport::new("synthetic", "proto", "X,U,Z", 5, &out, "abc");
        let table = r.render_table();
        assert!(table.contains("task-two     0.7500    0.0000"), "{table}");
        assert!(table.lines().last().unwrap().starts_with("aggregate"));
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }
}
