//! Turns a [`RunConfig`] into instances to explain and a value function for
//! each of them.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use stshap::metrics::Task;
use stshap::value::{ClassProbability, ExternalModel, KnnClassifier, RidgeRegression};
use stshap::{BackgroundSet, CoalitionValue, Instance, MarginalValue, SyntheticGame};

use crate::config::{ModelKind, RunConfig};
use crate::data::load_csv;
use crate::error::{CliError, Result};

/// One prediction to explain.
#[derive(Clone, Debug)]
pub struct Target {
    /// Dataset row index, or 0 for a synthetic game.
    pub id: usize,
    pub x: Instance,
    /// Explained class index for classifiers.
    pub class: Option<usize>,
}

enum Predictor {
    Ridge(RidgeRegression),
    Knn(KnnClassifier),
    External(ExternalModel),
}

enum Source {
    Game(SyntheticGame),
    Model { predictor: Predictor, background: BackgroundSet },
}

/// Everything derived from the config and the data that the runs share.
#[derive(Clone, Debug, Serialize)]
pub struct Resolved {
    #[serde(rename = "M")]
    pub m: usize,
    pub features: Vec<String>,
    pub task: Task,
    pub instances: Vec<usize>,
    pub background_rows: Vec<usize>,
    pub classes: Option<Vec<f64>>,
}

pub struct Experiment {
    pub resolved: Resolved,
    pub targets: Vec<Target>,
    source: Source,
}

fn check_rows(what: &str, rows: &[usize], n: usize) -> Result<()> {
    match rows.iter().find(|&&r| r >= n) {
        Some(r) => Err(CliError::Config(format!("{what} row {r} is out of range for {n} rows"))),
        None => Ok(()),
    }
}

impl Experiment {
    pub fn prepare(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.model.kind == ModelKind::Game {
            return Self::from_game(cfg);
        }
        let path = cfg.dataset.as_deref().expect("validated");
        let data = load_csv(path, &cfg.features, cfg.target.as_deref(), &cfg.categorical)?;
        let m = data.features.len();
        let n = data.len();

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha20Rng::seed_from_u64(cfg.split.seed));
        let n_test = (n as f64 * cfg.split.test_fraction).round() as usize;
        if n_test >= n {
            return Err(CliError::Config(format!("test split leaves no training rows out of {n}")));
        }
        let (test, train) = order.split_at(n_test);

        let rows = |idx: &[usize]| idx.iter().map(|&i| data.x[i].clone()).collect::<Vec<_>>();
        let labels = |idx: &[usize]| {
            let y = data.y.as_ref().expect("target checked");
            idx.iter().map(|&i| y[i]).collect::<Vec<_>>()
        };
        let predictor = match cfg.model.kind {
            ModelKind::Ridge => Predictor::Ridge(RidgeRegression::fit(&rows(train), &labels(train), cfg.model.lambda)?),
            ModelKind::Knn => Predictor::Knn(KnnClassifier::fit(&rows(train), &labels(train), cfg.model.neighbors)?),
            ModelKind::External => Predictor::External(ExternalModel::spawn(&cfg.model.command, m)?),
            ModelKind::Game => unreachable!(),
        };

        let background_rows = match &cfg.background.rows {
            Some(r) => {
                check_rows("background", r, n)?;
                r.clone()
            }
            None => train[..cfg.background.size.min(train.len())].to_vec(),
        };
        if background_rows.is_empty() {
            return Err(CliError::Config("background set is empty".into()));
        }
        let background = BackgroundSet::new(rows(&background_rows))?;

        let instances = match &cfg.instances.indices {
            Some(r) => {
                check_rows("instance", r, n)?;
                r.clone()
            }
            None => test[..cfg.instances.count.min(test.len())].to_vec(),
        };
        if instances.is_empty() {
            return Err(CliError::Config("no instances to explain".into()));
        }

        let explained_class = match (&predictor, cfg.model.class) {
            (Predictor::Knn(knn), Some(label)) => Some(
                knn.classes()
                    .iter()
                    .position(|&c| c == label)
                    .ok_or_else(|| CliError::Config(format!("class {label} does not occur in the training labels")))?,
            ),
            _ => None,
        };
        let targets = instances
            .iter()
            .map(|&id| {
                let x = data.x[id].clone();
                let class = match &predictor {
                    Predictor::Knn(knn) => Some(explained_class.unwrap_or_else(|| knn.predict_class(&x))),
                    _ => None,
                };
                Target {
                    id,
                    x: Instance::new(x),
                    class,
                }
            })
            .collect();

        let task = cfg.model.task.unwrap_or(match cfg.model.kind {
            ModelKind::Knn => Task::Classification,
            _ => Task::Regression,
        });
        let classes = match &predictor {
            Predictor::Knn(knn) => Some(knn.classes().to_vec()),
            _ => None,
        };
        Ok(Self {
            resolved: Resolved {
                m,
                features: data.features,
                task,
                instances,
                background_rows,
                classes,
            },
            targets,
            source: Source::Model { predictor, background },
        })
    }

    fn from_game(cfg: &RunConfig) -> Result<Self> {
        let path = cfg.model.game.as_deref().expect("validated");
        let game = SyntheticGame::load(path).map_err(|e| CliError::Config(e.to_string()))?;
        let m = game.m();
        Ok(Self {
            resolved: Resolved {
                m,
                features: (1..=m).map(|i| format!("x{i}")).collect(),
                task: cfg.model.task.unwrap_or(Task::Regression),
                instances: vec![0],
                background_rows: Vec::new(),
                classes: None,
            },
            targets: vec![Target {
                id: 0,
                x: Instance::new(Vec::new()),
                class: None,
            }],
            source: Source::Game(game),
        })
    }

    pub fn m(&self) -> usize {
        self.resolved.m
    }

    /// Runs `f` against the value function of `target`.
    pub fn with_value<R>(
        &self,
        target: &Target,
        f: impl FnOnce(&dyn CoalitionValue) -> stshap::Result<R>,
    ) -> stshap::Result<R> {
        match &self.source {
            Source::Game(g) => f(g),
            Source::Model { predictor, background } => match predictor {
                Predictor::Ridge(r) => f(&MarginalValue::new(&target.x, background, r)?),
                Predictor::External(e) => f(&MarginalValue::new(&target.x, background, e)?),
                Predictor::Knn(knn) => {
                    let p = ClassProbability {
                        model: knn,
                        class: target.class.expect("classifier targets carry a class"),
                    };
                    f(&MarginalValue::new(&target.x, background, &p)?)
                }
            },
        }
    }
}
