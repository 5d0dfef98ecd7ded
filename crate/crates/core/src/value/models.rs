//! Built-in black boxes: ridge regression and a k-nearest-neighbor
//! classifier. Both are deliberately plain.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Model, ModelError, Rows};
use crate::error::{Error, Result};

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-6;
pub const DEFAULT_KNN_K: usize = 5;

fn check_training(x: &[Vec<f64>], n_targets: usize) -> Result<usize> {
    let width = x
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidInput("training set is empty".into()))?;
    if width == 0 {
        return Err(Error::InvalidInput("training rows have no features".into()));
    }
    if x.len() != n_targets {
        return Err(Error::Dimension(format!("{} rows but {} targets", x.len(), n_targets)));
    }
    if let Some(i) = x.iter().position(|r| r.len() != width) {
        return Err(Error::Dimension(format!("training row {i} has {} values", x[i].len())));
    }
    Ok(width)
}

/// Linear regression with an unpenalized intercept, fit by the ridge normal
/// equations on centered data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RidgeRegression {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl RidgeRegression {
    pub fn fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<Self> {
        let p = check_training(x, y.len())?;
        let n = x.len();
        let x_mean: Vec<f64> = (0..p).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let xc = DMatrix::from_fn(n, p, |i, j| x[i][j] - x_mean[j]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let mut gram = xc.transpose() * &xc;
        for j in 0..p {
            gram[(j, j)] += lambda;
        }
        let rhs = xc.transpose() * yc;
        let beta = gram
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| gram.lu().solve(&rhs))
            .ok_or_else(|| Error::RankDeficient {
                context: format!("ridge fit with {n} rows, {p} features, lambda {lambda}"),
            })?;
        let coefficients: Vec<f64> = beta.iter().copied().collect();
        let intercept = y_mean - coefficients.iter().zip(&x_mean).map(|(b, m)| b * m).sum::<f64>();
        Ok(Self {
            coefficients,
            intercept,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, v)| b * v).sum::<f64>()
    }
}

impl Model for RidgeRegression {
    fn n_features(&self) -> usize {
        self.coefficients.len()
    }

    fn predict(&self, rows: Rows<'_>) -> std::result::Result<Vec<f64>, ModelError> {
        Ok(rows.iter().map(|r| self.predict_row(r)).collect())
    }
}

/// Majority-vote k-NN over Euclidean distance. Class probabilities are vote
/// fractions; distance ties keep training order.
#[derive(Clone, Debug)]
pub struct KnnClassifier {
    k: usize,
    rows: Vec<Vec<f64>>,
    labels: Vec<usize>,
    classes: Vec<f64>,
}

impl KnnClassifier {
    /// `labels` are raw class values; they are indexed in ascending order.
    pub fn fit(x: &[Vec<f64>], labels: &[f64], k: usize) -> Result<Self> {
        check_training(x, labels.len())?;
        if k == 0 {
            return Err(Error::InvalidInput("k must be positive".into()));
        }
        if labels.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("class labels must be finite".into()));
        }
        let mut classes = labels.to_vec();
        classes.sort_by(f64::total_cmp);
        classes.dedup();
        let idx = labels
            .iter()
            .map(|l| classes.iter().position(|c| c == l).expect("label indexed"))
            .collect();
        Ok(Self {
            k: k.min(x.len()),
            rows: x.to_vec(),
            labels: idx,
            classes,
        })
    }

    pub fn n_features(&self) -> usize {
        self.rows[0].len()
    }

    pub fn classes(&self) -> &[f64] {
        &self.classes
    }

    pub fn predict_proba(&self, row: &[f64]) -> Vec<f64> {
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k;
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![0usize; self.classes.len()];
        for &(_, i) in &dist[..k] {
            votes[self.labels[i]] += 1;
        }
        votes.iter().map(|&v| v as f64 / k as f64).collect()
    }

    /// Index of the predicted class; ties go to the lower class index.
    pub fn predict_class(&self, row: &[f64]) -> usize {
        let p = self.predict_proba(row);
        let mut best = 0;
        for (c, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = c;
            }
        }
        best
    }
}

/// Exposes the probability of one class of a [`KnnClassifier`] as the
/// explained scalar output.
pub struct ClassProbability<'a> {
    pub model: &'a KnnClassifier,
    pub class: usize,
}

impl Model for ClassProbability<'_> {
    fn n_features(&self) -> usize {
        self.model.n_features()
    }

    fn predict(&self, rows: Rows<'_>) -> std::result::Result<Vec<f64>, ModelError> {
        if self.class >= self.model.classes.len() {
            return Err(ModelError(format!("class index {} out of range", self.class)));
        }
        Ok(rows.iter().map(|r| self.model.predict_proba(r)[self.class]).collect())
    }
}
