//! The subcommands. Each one returns what it wrote so callers and tests can
//! inspect results without reparsing files.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use stshap::coalition::{layer_size, max_budget};
use stshap::exact::exact_shap_capped;
use stshap::layer1::layer1_explain;
use stshap::metrics::{adherence, kendall_tau, mean, median, r2_score, stability};
use stshap::sampling::{materialize, plan_kernel_shap, plan_st_shap, Allocation, Budget, SamplingPlan};
use stshap::wls::{explain_run, sparsify, SolverConfig};
use stshap::{CoalitionValue, Explanation, Method, WeightedCoalitionSet};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::experiment::Experiment;
use crate::output::{write_file, write_json, write_resolved, MetricTable, ResolvedConfig};

/// One explanation to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Job {
    /// Index into [`Experiment::targets`].
    pub target: usize,
    pub method: Method,
    pub budget: Option<u64>,
    pub seed: Option<u64>,
}

pub struct JobOutput {
    pub explanation: Explanation,
    /// The coalitions the surrogate was fit on, with their values.
    pub fit: Option<(WeightedCoalitionSet, Vec<f64>)>,
}

/// A deterministic coalition set for methods that do not sample: layer 1
/// for `layer1`, everything for `exact`.
fn reference_set(value: &dyn CoalitionValue, method: Method) -> stshap::Result<(WeightedCoalitionSet, Vec<f64>)> {
    let m = value.n_features();
    let count = match method {
        Method::Layer1 => layer_size(m, 1)?,
        _ => max_budget(m)?,
    };
    let set = materialize(&plan_st_shap(m, Budget::new(m, count)?, 0)?)?;
    let values = value.values(set.coalitions())?;
    Ok((set, values))
}

pub fn run_job(exp: &Experiment, cfg: &RunConfig, job: Job, keep_fit: bool) -> stshap::Result<JobOutput> {
    let target = &exp.targets[job.target];
    exp.with_value(target, |value| {
        let m = value.n_features();
        let dense = match job.method {
            Method::KernelShap | Method::StShap => {
                let strategy = job.method.sampling().expect("sampling method");
                let budget = job.budget.expect("sampling jobs carry a budget");
                let seed = job.seed.expect("sampling jobs carry a seed");
                let run = explain_run(value, strategy, budget, seed, cfg.k, &SolverConfig::default())?;
                return Ok(JobOutput {
                    explanation: run.explanation,
                    fit: keep_fit.then_some((run.set, run.values)),
                });
            }
            Method::Layer1 => layer1_explain(value)?.0,
            Method::Exact => exact_shap_capped(value, cfg.exact_cap)?.into_explanation(),
            Method::Custom => unreachable!("rejected by config validation"),
        };
        let sparse = cfg.k.is_some_and(|k| k < m);
        if !sparse && !keep_fit {
            return Ok(JobOutput {
                explanation: dense,
                fit: None,
            });
        }
        let (set, values) = reference_set(value, job.method)?;
        let explanation = match cfg.k {
            Some(k) if k < m => sparsify(&dense, k, &set, &values)?,
            _ => dense,
        };
        Ok(JobOutput {
            explanation,
            fit: keep_fit.then_some((set, values)),
        })
    })
}

/// Runs `f` over `items` on the worker pool, keeping input order.
fn fan_out<T, R, F>(cfg: &RunConfig, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let run = || items.par_iter().map(&f).collect::<Result<Vec<R>>>();
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Every (instance, strategy, budget, seed) combination, in output order.
/// Non-sampling strategies run once per instance.
pub fn build_jobs(exp: &Experiment, cfg: &RunConfig, budgets: &[u64]) -> Vec<Job> {
    let mut jobs = Vec::new();
    for target in 0..exp.targets.len() {
        for &method in &cfg.strategies {
            if method.sampling().is_some() {
                for &b in budgets {
                    for seed in cfg.seeds() {
                        jobs.push(Job {
                            target,
                            method,
                            budget: Some(b),
                            seed: Some(seed),
                        });
                    }
                }
            } else {
                jobs.push(Job {
                    target,
                    method,
                    budget: None,
                    seed: None,
                });
            }
        }
    }
    jobs
}

struct Prepared {
    exp: Experiment,
    budgets: Vec<u64>,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let exp = Experiment::prepare(cfg)?;
    let m = exp.m();
    cfg.check_k(m)?;
    let budgets = if cfg.strategies.iter().any(|s| s.sampling().is_some()) {
        cfg.budgets_for(m)?
    } else {
        Vec::new()
    };
    Ok(Prepared { exp, budgets })
}

fn resolved<'a>(command: &'a str, cfg: &'a RunConfig, p: &'a Prepared) -> ResolvedConfig<'a> {
    ResolvedConfig {
        command,
        config: cfg,
        resolved: &p.exp.resolved,
        budgets: &p.budgets,
        seeds: cfg.seeds().collect(),
    }
}

fn metric_or_nan(r: stshap::Result<f64>) -> Result<f64> {
    match r {
        Ok(v) => Ok(v),
        Err(stshap::Error::Metric(_)) => Ok(f64::NAN),
        Err(e) => Err(e.into()),
    }
}

#[derive(Serialize)]
struct ExplanationFile<'a> {
    instance: usize,
    #[serde(flatten)]
    explanation: &'a Explanation,
    features: &'a [String],
    config: &'a ResolvedConfig<'a>,
}

pub struct ExplainOutcome {
    pub files: Vec<PathBuf>,
    /// `(instance id, explanation)` in file order.
    pub explanations: Vec<(usize, Explanation)>,
}

pub fn explanation_file_name(instance: usize, e: &Explanation) -> String {
    let mut name = format!("{instance}_{}", e.strategy.name());
    if let (Some(b), Some(s)) = (e.budget, e.seed) {
        name.push_str(&format!("_b{b}_s{s}"));
    }
    name + ".json"
}

pub fn cmd_explain(cfg: &RunConfig) -> Result<ExplainOutcome> {
    let p = prepare(cfg)?;
    let jobs = build_jobs(&p.exp, cfg, &p.budgets);
    let results = fan_out(cfg, &jobs, |&job| Ok(run_job(&p.exp, cfg, job, false)?))?;

    let rc = resolved("explain", cfg, &p);
    write_resolved(&cfg.output, &rc)?;
    let dir = cfg.output.join("explanations");
    let mut files = Vec::with_capacity(jobs.len());
    let mut explanations = Vec::with_capacity(jobs.len());
    for (job, out) in jobs.iter().zip(results) {
        let instance = p.exp.targets[job.target].id;
        let path = dir.join(explanation_file_name(instance, &out.explanation));
        write_json(
            &path,
            &ExplanationFile {
                instance,
                explanation: &out.explanation,
                features: &p.exp.resolved.features,
                config: &rc,
            },
        )?;
        files.push(path);
        explanations.push((instance, out.explanation));
    }
    Ok(ExplainOutcome { files, explanations })
}

pub struct MetricsOutcome {
    pub path: PathBuf,
    pub table: MetricTable,
}

fn write_metrics(cfg: &RunConfig, rc: &ResolvedConfig<'_>, name: &str, table: MetricTable) -> Result<MetricsOutcome> {
    write_resolved(&cfg.output, rc)?;
    let path = cfg.output.join("metrics").join(name);
    let line = serde_json::to_string(rc).expect("serializable");
    write_file(&path, &table.to_csv(&line))?;
    Ok(MetricsOutcome { path, table })
}

/// Groups consecutive job results that share (target, method, budget).
fn groups<T>(jobs: &[Job], results: Vec<T>) -> Vec<(Job, Vec<T>)> {
    let mut out: Vec<(Job, Vec<T>)> = Vec::new();
    for (job, r) in jobs.iter().zip(results) {
        match out.last_mut() {
            Some((j, v)) if j.target == job.target && j.method == job.method && j.budget == job.budget => v.push(r),
            _ => out.push((*job, vec![r])),
        }
    }
    out
}

pub fn cmd_stability(cfg: &RunConfig) -> Result<MetricsOutcome> {
    if cfg.runs < 2 {
        return Err(CliError::Config(format!("stability needs at least 2 runs, got {}", cfg.runs)));
    }
    if let Some(s) = cfg.strategies.iter().find(|s| s.sampling().is_none()) {
        return Err(CliError::Config(format!(
            "stability compares sampling strategies; {} does not sample",
            s.name()
        )));
    }
    let p = prepare(cfg)?;
    let jobs = build_jobs(&p.exp, cfg, &p.budgets);
    let results = fan_out(cfg, &jobs, |&job| Ok(run_job(&p.exp, cfg, job, false)?.explanation))?;

    let mut table = MetricTable::default();
    for (job, runs) in groups(&jobs, results) {
        let j = metric_or_nan(stability(&runs).map(|r| r.jaccard))?;
        table.push(p.exp.targets[job.target].id, job.budget, job.method.name(), "jaccard", j);
    }
    table.summarize("mean", mean);
    write_metrics(cfg, &resolved("stability", cfg, &p), "stability.csv", table)
}

pub fn cmd_adherence(cfg: &RunConfig) -> Result<MetricsOutcome> {
    let p = prepare(cfg)?;
    let task = p.exp.resolved.task;
    let jobs = build_jobs(&p.exp, cfg, &p.budgets);
    let results = fan_out(cfg, &jobs, |&job| {
        let out = run_job(&p.exp, cfg, job, true)?;
        let (set, values) = out.fit.expect("fit kept");
        metric_or_nan(adherence(&set, &values, &out.explanation, task))
    })?;

    let mut table = MetricTable::default();
    for (job, scores) in groups(&jobs, results) {
        let finite: Vec<f64> = scores.into_iter().filter(|v| v.is_finite()).collect();
        let v = if finite.is_empty() { f64::NAN } else { mean(&finite) };
        table.push(p.exp.targets[job.target].id, job.budget, job.method.name(), "adherence", v);
    }
    table.summarize("mean", mean);
    write_metrics(cfg, &resolved("adherence", cfg, &p), "adherence.csv", table)
}

pub fn cmd_compare_exact(cfg: &RunConfig) -> Result<MetricsOutcome> {
    let p = prepare(cfg)?;
    let m = p.exp.m();
    if m > cfg.exact_cap {
        let evaluations = 1u128 << m;
        return Err(stshap::Error::OracleCap {
            m,
            cap: cfg.exact_cap,
            evaluations,
        }
        .into());
    }
    let candidates = RunConfig {
        strategies: cfg.strategies.iter().copied().filter(|s| *s != Method::Exact).collect(),
        runs: 1,
        ..cfg.clone()
    };
    if candidates.strategies.is_empty() {
        return Err(CliError::Config("compare-exact needs a strategy other than exact".into()));
    }
    let jobs = build_jobs(&p.exp, &candidates, &p.budgets);
    let targets: Vec<usize> = (0..p.exp.targets.len()).collect();
    let exact = fan_out(cfg, &targets, |&t| {
        let job = Job {
            target: t,
            method: Method::Exact,
            budget: None,
            seed: None,
        };
        let dense = RunConfig { k: None, ..cfg.clone() };
        Ok(run_job(&p.exp, &dense, job, false)?.explanation.phis)
    })?;
    let results = fan_out(cfg, &jobs, |&job| {
        let e = run_job(&p.exp, cfg, job, false)?.explanation;
        let reference = &exact[job.target];
        Ok((metric_or_nan(kendall_tau(reference, &e.phis))?, metric_or_nan(r2_score(reference, &e.phis))?))
    })?;

    let mut table = MetricTable::default();
    for (job, (tau, r2)) in jobs.iter().zip(results) {
        let id = p.exp.targets[job.target].id;
        table.push(id, job.budget, job.method.name(), "kendall_tau", tau);
        table.push(id, job.budget, job.method.name(), "r2", r2);
    }
    table.summarize("mean", mean);
    table.summarize("median", median);
    let rc = ResolvedConfig {
        seeds: candidates.seeds().collect(),
        ..resolved("compare-exact", cfg, &p)
    };
    write_metrics(cfg, &rc, "compare_exact.csv", table)
}

/// Both samplers' plans for one (M, budget) pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayersReport {
    #[serde(rename = "M")]
    pub m: usize,
    pub budget: u64,
    pub layer_sizes: Vec<u64>,
    /// Coalitions ST-SHAP takes from each layer.
    pub st_shap_allocation: Vec<u64>,
    /// Kernel SHAP's completely enumerated layers, with their sizes.
    pub kernel_shap_complete: Vec<(usize, u64)>,
    /// Distinct coalitions Kernel SHAP draws at random, and from which layers.
    pub kernel_shap_random: u64,
    pub kernel_shap_random_layers: Vec<usize>,
    pub kernel_shap: SamplingPlan,
    pub st_shap: SamplingPlan,
}

pub fn cmd_layers(m: usize, budget: u64) -> Result<LayersReport> {
    let b = Budget::new(m, budget)?;
    let ks = plan_kernel_shap(m, b, 0)?;
    let st = plan_st_shap(m, b, 0)?;
    let st_shap_allocation = st
        .layers
        .iter()
        .map(|l| match l.allocation {
            Allocation::Complete => l.size,
            Allocation::Sampled { n } => n,
            Allocation::Pooled | Allocation::Unused => 0,
        })
        .collect();
    Ok(LayersReport {
        m,
        budget,
        layer_sizes: st.layers.iter().map(|l| l.size).collect(),
        st_shap_allocation,
        kernel_shap_complete: ks
            .layers
            .iter()
            .filter(|l| l.allocation == Allocation::Complete)
            .map(|l| (l.layer.get(), l.size))
            .collect(),
        kernel_shap_random: ks.pooled,
        kernel_shap_random_layers: ks
            .layers
            .iter()
            .filter(|l| l.allocation == Allocation::Pooled)
            .map(|l| l.layer.get())
            .collect(),
        kernel_shap: ks,
        st_shap: st,
    })
}

impl LayersReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("M = {}, budget = {}\n\n", self.m, self.budget);
        out.push_str(&format!("{:>5}  {:>12}  {:>12}  {:>12}\n", "layer", "size", "kernel-shap", "st-shap"));
        for (i, l) in self.st_shap.layers.iter().enumerate() {
            let ks = match self.kernel_shap.layers[i].allocation {
                Allocation::Complete => l.size.to_string(),
                Allocation::Pooled => "random".to_owned(),
                _ => "0".to_owned(),
            };
            out.push_str(&format!(
                "{:>5}  {:>12}  {:>12}  {:>12}\n",
                l.layer.get(),
                l.size,
                ks,
                self.st_shap_allocation[i]
            ));
        }
        out.push('\n');
        if let (Some(first), Some(last)) = (
            self.kernel_shap_random_layers.first(),
            self.kernel_shap_random_layers.last(),
        ) {
            out.push_str(&format!(
                "kernel-shap: {} coalitions drawn at random over layers {first}-{last}\n",
                self.kernel_shap_random
            ));
        } else {
            out.push_str("kernel-shap: no random draws\n");
        }
        match self
            .st_shap
            .layers
            .iter()
            .find(|l| matches!(l.allocation, Allocation::Sampled { .. }))
        {
            Some(l) => {
                let n = self.st_shap_allocation[l.layer.get() - 1];
                out.push_str(&format!(
                    "st-shap: layer {} sampled uniformly, {n} of {}\n",
                    l.layer.get(),
                    l.size
                ));
            }
            None => out.push_str("st-shap: complete layers only, deterministic\n"),
        }
        out
    }
}
