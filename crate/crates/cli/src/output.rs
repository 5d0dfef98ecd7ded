//! Output directory layout: `config.resolved.json`, `explanations/*.json`
//! and `metrics/*.csv`. Every file carries the resolved config.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::experiment::Resolved;

/// The config as given plus everything derived from it.
#[derive(Clone, Debug, Serialize)]
pub struct ResolvedConfig<'a> {
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub resolved: &'a Resolved,
    pub budgets: &'a [u64],
    pub seeds: Vec<u64>,
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_resolved(dir: &Path, resolved: &ResolvedConfig<'_>) -> Result<PathBuf> {
    let path = dir.join("config.resolved.json");
    write_json(&path, resolved)?;
    Ok(path)
}

/// A long-format metrics table: `instance,budget,strategy,metric,value`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    /// Dataset row index, or `mean` / `median` for summaries.
    pub instance: String,
    pub budget: Option<u64>,
    pub strategy: String,
    pub metric: String,
    pub value: f64,
}

impl MetricTable {
    pub fn push(&mut self, instance: impl Display, budget: Option<u64>, strategy: &str, metric: &str, value: f64) {
        self.rows.push(MetricRow {
            instance: instance.to_string(),
            budget,
            strategy: strategy.to_owned(),
            metric: metric.to_owned(),
            value,
        });
    }

    /// Rows whose instance is a dataset row, not a summary.
    pub fn per_instance(&self) -> impl Iterator<Item = &MetricRow> {
        self.rows.iter().filter(|r| r.instance.parse::<usize>().is_ok())
    }

    pub fn find(&self, instance: &str, budget: Option<u64>, strategy: &str, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.instance == instance && r.budget == budget && r.strategy == strategy && r.metric == metric)
            .map(|r| r.value)
    }

    /// Adds one summary row per (budget, strategy, metric) in first-seen
    /// order, skipping non-finite values.
    pub fn summarize(&mut self, name: &str, f: fn(&[f64]) -> f64) {
        let mut keys: Vec<(Option<u64>, String, String)> = Vec::new();
        for r in self.per_instance() {
            let key = (r.budget, r.strategy.clone(), r.metric.clone());
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        for (budget, strategy, metric) in keys {
            let values: Vec<f64> = self
                .per_instance()
                .filter(|r| r.budget == budget && r.strategy == strategy && r.metric == metric)
                .map(|r| r.value)
                .filter(|v| v.is_finite())
                .collect();
            let v = if values.is_empty() { f64::NAN } else { f(&values) };
            self.push(name, budget, &strategy, &metric, v);
        }
    }

    pub fn to_csv(&self, config_line: &str) -> Vec<u8> {
        let mut out = format!("# config={config_line}\n").into_bytes();
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["instance", "budget", "strategy", "metric", "value"])
            .expect("in-memory write");
        for r in &self.rows {
            let budget = r.budget.map(|b| b.to_string()).unwrap_or_default();
            w.write_record([r.instance.as_str(), &budget, &r.strategy, &r.metric, &r.value.to_string()])
                .expect("in-memory write");
        }
        w.flush().expect("in-memory write");
        drop(w);
        out
    }
}
