//! Experiment harness around the `stshap` library: CSV ingestion, model
//! wiring, explanation runs, budget sweeps and metric tables.

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use stshap::metrics::Task;
use stshap::Method;

pub use commands::{cmd_adherence, cmd_compare_exact, cmd_explain, cmd_layers, cmd_stability, LayersReport};
pub use config::{ModelKind, RunConfig};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "stshap", version, about = "Shapley attributions with stratified coalition sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one explanation per (instance, strategy, budget, seed).
    Explain(RunArgs),
    /// Jaccard stability of the supports across seeds.
    Stability(RunArgs),
    /// Surrogate fidelity on its own coalitions.
    Adherence(RunArgs),
    /// Kendall tau and R² against exact Shapley values.
    CompareExact(RunArgs),
    /// Show how each sampler spends a budget across layers.
    Layers {
        #[arg(value_name = "M")]
        m: usize,
        budget: u64,
        #[arg(long)]
        json: bool,
    },
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: stshap::Error| e.to_string())
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    match s {
        "regression" => Ok(Task::Regression),
        "classification" => Ok(Task::Classification),
        _ => Err(format!("unknown task {s:?}")),
    }
}

fn parse_model(s: &str) -> std::result::Result<ModelKind, String> {
    match s {
        "ridge" => Ok(ModelKind::Ridge),
        "knn" => Ok(ModelKind::Knn),
        "external" => Ok(ModelKind::External),
        "game" => Ok(ModelKind::Game),
        _ => Err(format!("unknown model {s:?} (ridge, knn, external, game)")),
    }
}

/// Flags mirror the config file; a flag overrides the file.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML config file.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<String>>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    /// External model command line, split on whitespace.
    #[arg(long = "command")]
    pub model_command: Option<String>,
    /// Synthetic game JSON file.
    #[arg(long)]
    pub game: Option<PathBuf>,
    #[arg(long)]
    pub class: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub neighbors: Option<usize>,
    #[arg(long, value_parser = parse_task)]
    pub task: Option<Task>,
    #[arg(long)]
    pub background_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub background_rows: Option<Vec<usize>>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Dataset row indices to explain.
    #[arg(long, value_delimiter = ',')]
    pub instances: Option<Vec<usize>>,
    #[arg(long)]
    pub instance_count: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    pub strategies: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<u64>>,
    #[arg(long, short)]
    pub k: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub exact_cap: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = &self.$field { $target = v.clone().into(); })*
            };
        }
        set! {
            features => c.features,
            target => c.target,
            model => c.model.kind,
            game => c.model.game,
            class => c.model.class,
            lambda => c.model.lambda,
            neighbors => c.model.neighbors,
            task => c.model.task,
            background_size => c.background.size,
            background_rows => c.background.rows,
            test_fraction => c.split.test_fraction,
            split_seed => c.split.seed,
            instances => c.instances.indices,
            instance_count => c.instances.count,
            strategies => c.strategies,
            budgets => c.budgets,
            k => c.k,
            runs => c.runs,
            seed => c.seed,
            exact_cap => c.exact_cap,
            threads => c.threads,
            output => c.output,
            dataset => c.dataset,
        }
        if let Some(cmd) = &self.model_command {
            c.model.command = cmd.split_whitespace().map(str::to_owned).collect();
        }
        Ok(c)
    }
}

/// Runs a parsed command line and returns the text to print.
pub fn run(cli: &Cli) -> Result<String> {
    let paths = |files: &[PathBuf]| {
        files
            .iter()
            .map(|p| format!("{}\n", p.display()))
            .collect::<String>()
    };
    match &cli.command {
        Command::Explain(a) => Ok(paths(&cmd_explain(&a.resolve()?)?.files)),
        Command::Stability(a) => Ok(paths(&[cmd_stability(&a.resolve()?)?.path])),
        Command::Adherence(a) => Ok(paths(&[cmd_adherence(&a.resolve()?)?.path])),
        Command::CompareExact(a) => Ok(paths(&[cmd_compare_exact(&a.resolve()?)?.path])),
        Command::Layers { m, budget, json } => {
            let report = cmd_layers(*m, *budget)?;
            Ok(if *json {
                serde_json::to_string_pretty(&report).expect("serializable") + "\n"
            } else {
                report.to_text()
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "runs = 5\nbudgets = [10]\n[model]\nkind = \"knn\"\n").unwrap();
        let cli = Cli::parse_from([
            "stshap",
            "stability",
            "--config",
            path.to_str().unwrap(),
            "--budgets",
            "20,30",
            "--strategies",
            "st-shap",
            "--command",
            "python3 model.py --fast",
        ]);
        let Command::Stability(args) = cli.command else {
            panic!()
        };
        let c = args.resolve().unwrap();
        assert_eq!(c.runs, 5);
        assert_eq!(c.budgets, vec![20, 30]);
        assert_eq!(c.strategies, vec![Method::StShap]);
        assert_eq!(c.model.kind, ModelKind::Knn);
        assert_eq!(c.model.command, vec!["python3", "model.py", "--fast"]);
    }
}
