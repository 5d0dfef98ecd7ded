//! Run configuration: a TOML file, overridden field by field from the
//! command line, then resolved against the dataset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stshap::metrics::Task;
use stshap::Method;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ridge,
    Knn,
    External,
    Game,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Ridge penalty.
    pub lambda: f64,
    /// Neighbors for the k-NN classifier.
    pub neighbors: usize,
    /// Class label whose probability is explained; the predicted class of
    /// each instance when unset.
    pub class: Option<f64>,
    /// Program and arguments for an external model.
    pub command: Vec<String>,
    /// Synthetic game file, for `kind = "game"`.
    pub game: Option<PathBuf>,
    pub task: Option<Task>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Ridge,
            lambda: stshap::value::DEFAULT_RIDGE_LAMBDA,
            neighbors: stshap::value::DEFAULT_KNN_K,
            class: None,
            command: Vec::new(),
            game: None,
            task: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundSpec {
    pub size: usize,
    /// Explicit dataset row indices; replaces the default of the first
    /// `size` training rows.
    pub rows: Option<Vec<usize>>,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self { size: 100, rows: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceSpec {
    /// Dataset row indices to explain.
    pub indices: Option<Vec<usize>>,
    /// Otherwise the first `count` rows of the test split.
    pub count: usize,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            indices: None,
            count: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    /// Feature columns in attribution order; every non-target column when
    /// empty.
    pub features: Vec<String>,
    pub target: Option<String>,
    /// Integer encodings for non-numeric columns, `column -> label -> code`.
    pub categorical: BTreeMap<String, BTreeMap<String, i64>>,
    pub model: ModelSpec,
    pub background: BackgroundSpec,
    pub split: SplitSpec,
    pub instances: InstanceSpec,
    pub strategies: Vec<Method>,
    /// Coalition budgets; the complete-layer budgets when empty.
    pub budgets: Vec<u64>,
    /// Explanation size; all features when unset.
    pub k: Option<usize>,
    pub runs: usize,
    /// Run `r` uses seed `seed + r`.
    pub seed: u64,
    pub exact_cap: usize,
    pub threads: Option<usize>,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            features: Vec::new(),
            target: None,
            categorical: BTreeMap::new(),
            model: ModelSpec::default(),
            background: BackgroundSpec::default(),
            split: SplitSpec::default(),
            instances: InstanceSpec::default(),
            strategies: vec![Method::KernelShap, Method::StShap],
            budgets: Vec::new(),
            k: None,
            runs: 20,
            seed: 0,
            exact_cap: stshap::exact::DEFAULT_EXACT_CAP,
            threads: None,
            output: PathBuf::from("stshap-out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.runs as u64).map(|r| self.seed.wrapping_add(r))
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(CliError::Config("no strategies given".into()));
        }
        if self.strategies.contains(&Method::Custom) {
            return Err(CliError::Config("strategy `custom` cannot be run from the command line".into()));
        }
        if self.runs == 0 {
            return Err(CliError::Config("runs must be at least 1".into()));
        }
        if self.k == Some(0) {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.split.test_fraction) {
            return Err(CliError::Config(format!(
                "split.test_fraction must be in [0, 1), got {}",
                self.split.test_fraction
            )));
        }
        match self.model.kind {
            ModelKind::Game if self.model.game.is_none() => {
                Err(CliError::Config("model.kind = \"game\" needs model.game".into()))
            }
            ModelKind::External if self.model.command.is_empty() => {
                Err(CliError::Config("model.kind = \"external\" needs model.command".into()))
            }
            ModelKind::Ridge | ModelKind::Knn | ModelKind::External if self.dataset.is_none() => {
                Err(CliError::Config("no dataset given".into()))
            }
            ModelKind::Ridge | ModelKind::Knn if self.target.is_none() => {
                Err(CliError::Config("built-in models need a target column".into()))
            }
            _ => Ok(()),
        }
    }

    /// Budgets to run for `m` features, checked against the valid range.
    pub fn budgets_for(&self, m: usize) -> Result<Vec<u64>> {
        let max = stshap::coalition::max_budget(m)?;
        if self.budgets.is_empty() {
            return Ok(stshap::complete_layer_budgets(m)?.into_iter().map(|(_, b)| b).collect());
        }
        for &b in &self.budgets {
            if !(2..=max).contains(&b) {
                return Err(CliError::Config(format!(
                    "budget {b} is outside the valid range [2, {max}] for {m} features"
                )));
            }
        }
        Ok(self.budgets.clone())
    }

    pub fn check_k(&self, m: usize) -> Result<()> {
        match self.k {
            Some(k) if k > m => Err(CliError::Config(format!("k = {k} exceeds the {m} features"))),
            _ => Ok(()),
        }
    }
}
