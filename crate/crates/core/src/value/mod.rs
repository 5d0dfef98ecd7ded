//! Coalition value functions.
//!
//! `f_x(z')` is the model's expected output when the features present in
//! `z'` take the explained instance's values and the absent features are
//! marginalized over a background set (interventional substitution). A
//! [`SyntheticGame`] skips the model entirely and supplies `v(S)` directly.

mod external;
mod game;
mod models;

use std::sync::atomic::{AtomicUsize, Ordering};

pub use external::ExternalModel;
pub use game::{GameFile, SyntheticGame};
pub use models::{ClassProbability, KnnClassifier, RidgeRegression, DEFAULT_KNN_K, DEFAULT_RIDGE_LAMBDA};

use crate::coalition::Coalition;
use crate::error::{Error, Result};

/// Feature vector of the instance being explained.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance(pub Vec<f64>);

impl Instance {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Reference rows used to fill in absent features.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundSet {
    rows: Vec<Vec<f64>>,
    width: usize,
}

impl BackgroundSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidInput("background set must have at least one row".into()))?;
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
            return Err(Error::Dimension(format!(
                "background row {i} has {} values, expected {width}",
                r.len()
            )));
        }
        Ok(Self { rows, width })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.rows.len() as f64;
        (0..self.width)
            .map(|j| self.rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect()
    }
}

/// Row-major view over a batch of model inputs.
#[derive(Clone, Copy, Debug)]
pub struct Rows<'a> {
    data: &'a [f64],
    width: usize,
}

impl<'a> Rows<'a> {
    pub fn new(data: &'a [f64], width: usize) -> Self {
        assert!(width > 0 && data.len().is_multiple_of(width), "ragged row buffer");
        Self { data, width }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [f64]> + 'a {
        self.data.chunks_exact(self.width)
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("{0}")]
pub struct ModelError(pub String);

/// A black box producing one scalar per input row.
///
/// Implementations must be deterministic and return exactly one output per
/// row, in order.
pub trait Model: Send + Sync {
    fn n_features(&self) -> usize;

    fn predict(&self, rows: Rows<'_>) -> std::result::Result<Vec<f64>, ModelError>;
}

/// Anything that can assign a value to a batch of coalitions.
pub trait CoalitionValue: Sync {
    fn n_features(&self) -> usize;

    fn values(&self, coalitions: &[Coalition]) -> Result<Vec<f64>>;
}

impl<T: CoalitionValue + ?Sized> CoalitionValue for &T {
    fn n_features(&self) -> usize {
        (**self).n_features()
    }

    fn values(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        (**self).values(coalitions)
    }
}

/// Default cap on rows sent to the model in one call.
pub const DEFAULT_MAX_BATCH_ROWS: usize = 1 << 16;

/// `f_x` by background substitution.
pub struct MarginalValue<'a> {
    x: &'a Instance,
    background: &'a BackgroundSet,
    model: &'a dyn Model,
    max_batch_rows: usize,
}

impl<'a> MarginalValue<'a> {
    pub fn new(x: &'a Instance, background: &'a BackgroundSet, model: &'a dyn Model) -> Result<Self> {
        let m = model.n_features();
        if x.len() != m || background.width() != m {
            return Err(Error::Dimension(format!(
                "model expects {m} features, instance has {}, background has {}",
                x.len(),
                background.width()
            )));
        }
        Ok(Self {
            x,
            background,
            model,
            max_batch_rows: DEFAULT_MAX_BATCH_ROWS,
        })
    }

    pub fn with_max_batch_rows(mut self, rows: usize) -> Self {
        self.max_batch_rows = rows.max(1);
        self
    }

    fn call(&self, buf: &[f64], batch: usize) -> Result<Vec<f64>> {
        let rows = Rows::new(buf, self.x.len());
        let out = self.model.predict(rows).map_err(|e| Error::Model {
            batch,
            message: e.0,
        })?;
        if out.len() != rows.len() {
            return Err(Error::Model {
                batch,
                message: format!("expected {} outputs, got {}", rows.len(), out.len()),
            });
        }
        Ok(out)
    }
}

/// Order-independent mean: sorting first makes the result depend only on the
/// multiset of predictions.
fn stable_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

impl CoalitionValue for MarginalValue<'_> {
    fn n_features(&self) -> usize {
        self.x.len()
    }

    fn values(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        let m = self.x.len();
        if let Some(c) = coalitions.iter().find(|c| c.m() != m) {
            return Err(Error::Dimension(format!(
                "coalition {c} has {} features, expected {m}",
                c.m()
            )));
        }
        let full = Coalition::full(m);
        let b = self.background.len();
        let mut out = vec![0.0; coalitions.len()];
        let mut batch = 0;

        let masked: Vec<usize> = (0..coalitions.len()).filter(|&i| coalitions[i] != full).collect();
        if masked.len() < coalitions.len() {
            let fx = self.call(self.x.values(), batch)?[0];
            batch += 1;
            for (o, c) in out.iter_mut().zip(coalitions) {
                if *c == full {
                    *o = fx;
                }
            }
        }

        let per_call = (self.max_batch_rows / b).max(1);
        let mut buf = Vec::new();
        for group in masked.chunks(per_call) {
            buf.clear();
            buf.reserve(group.len() * b * m);
            for &ci in group {
                let c = coalitions[ci];
                for row in self.background.rows() {
                    buf.extend((0..m).map(|j| if c.contains(j) { self.x.0[j] } else { row[j] }));
                }
            }
            let mut preds = self.call(&buf, batch)?;
            batch += 1;
            for (&ci, chunk) in group.iter().zip(preds.chunks_exact_mut(b)) {
                out[ci] = stable_mean(chunk);
            }
        }
        Ok(out)
    }
}

/// `f_x(z')` for a single coalition.
pub fn evaluate(coalition: Coalition, x: &Instance, bg: &BackgroundSet, model: &dyn Model) -> Result<f64> {
    Ok(MarginalValue::new(x, bg, model)?.values(&[coalition])?[0])
}

pub fn evaluate_batch(
    coalitions: &[Coalition],
    x: &Instance,
    bg: &BackgroundSet,
    model: &dyn Model,
) -> Result<Vec<f64>> {
    MarginalValue::new(x, bg, model)?.values(coalitions)
}

/// Wraps a value function and counts evaluated coalitions.
pub struct CountingValue<V> {
    inner: V,
    evaluations: AtomicUsize,
    calls: AtomicUsize,
}

impl<V: CoalitionValue> CountingValue<V> {
    pub fn new(inner: V) -> Self {
        Self {
            inner,
            evaluations: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.evaluations.store(0, Ordering::SeqCst);
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl<V: CoalitionValue> CoalitionValue for CountingValue<V> {
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    fn values(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        self.evaluations.fetch_add(coalitions.len(), Ordering::SeqCst);
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.values(coalitions)
    }
}

/// A model given by a plain function of one row. Handy for synthetic
/// experiments and tests.
pub struct FnModel<F> {
    n_features: usize,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(n_features: usize, f: F) -> Self {
        Self { n_features, f }
    }
}

impl<F> Model for FnModel<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, rows: Rows<'_>) -> std::result::Result<Vec<f64>, ModelError> {
        Ok(rows.iter().map(&self.f).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn additive(w: Vec<f64>) -> FnModel<impl Fn(&[f64]) -> f64 + Send + Sync> {
        let n = w.len();
        FnModel::new(n, move |r: &[f64]| r.iter().zip(&w).map(|(a, b)| a * b).sum())
    }

    fn bg3() -> BackgroundSet {
        BackgroundSet::new(vec![
            vec![0.5, -1.0, 2.0],
            vec![1.5, 3.0, -2.0],
            vec![-0.25, 0.0, 7.0],
            vec![4.0, 1.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn grand_coalition_is_model_of_x() {
        let model = FnModel::new(3, |r: &[f64]| r[0].sin() * r[1] + r[2].exp());
        let x = Instance::new(vec![0.3, 0.7, -0.2]);
        let v = evaluate(Coalition::full(3), &x, &bg3(), &model).unwrap();
        assert_eq!(v, (0.3f64).sin() * 0.7 + (-0.2f64).exp());
    }

    #[test]
    fn empty_coalition_single_row_background() {
        let model = FnModel::new(3, |r: &[f64]| r[0] * r[1] - r[2]);
        let x = Instance::new(vec![9.0, 9.0, 9.0]);
        let bg = BackgroundSet::new(vec![vec![2.0, 3.0, 1.0]]).unwrap();
        assert_eq!(evaluate(Coalition::empty(3), &x, &bg, &model).unwrap(), 5.0);
    }

    #[test]
    fn additive_model_substitutes_background_mean() {
        let w = vec![1.5, -2.0, 0.5];
        let model = additive(w.clone());
        let x = Instance::new(vec![1.0, 2.0, 3.0]);
        let bg = bg3();
        for bits in 0..8u64 {
            let c = Coalition::from_bits(3, bits).unwrap();
            let got = evaluate(c, &x, &bg, &model).unwrap();
            // brute-force average over background rows
            let brute: f64 = bg
                .rows()
                .iter()
                .map(|b| (0..3).map(|j| w[j] * if c.contains(j) { x.0[j] } else { b[j] }).sum::<f64>())
                .sum::<f64>()
                / bg.len() as f64;
            assert!((got - brute).abs() < 1e-12, "{c}: {got} vs {brute}");
        }
    }

    #[test]
    fn batch_matches_single_and_chunking() {
        let model = FnModel::new(3, |r: &[f64]| (r[0] * r[1]).tanh() + r[2] * r[2]);
        let x = Instance::new(vec![0.1, -0.4, 1.2]);
        let bg = bg3();
        let all: Vec<Coalition> = (0..8).map(|b| Coalition::from_bits(3, b).unwrap()).collect();
        let batch = evaluate_batch(&all, &x, &bg, &model).unwrap();
        for (c, v) in all.iter().zip(&batch) {
            assert_eq!(*v, evaluate(*c, &x, &bg, &model).unwrap());
        }
        let chunked = MarginalValue::new(&x, &bg, &model)
            .unwrap()
            .with_max_batch_rows(3)
            .values(&all)
            .unwrap();
        assert_eq!(chunked, batch);
        assert!(evaluate_batch(&[], &x, &bg, &model).unwrap().is_empty());
    }

    #[test]
    fn background_permutation_invariance() {
        let model = FnModel::new(3, |r: &[f64]| r[0] * 0.1 + r[1] * 0.2 + r[2] * 0.3);
        let x = Instance::new(vec![0.1, -0.4, 1.2]);
        let bg = bg3();
        let mut rows = bg.rows().to_vec();
        rows.reverse();
        rows.swap(0, 2);
        let bg2 = BackgroundSet::new(rows).unwrap();
        for bits in 0..8u64 {
            let c = Coalition::from_bits(3, bits).unwrap();
            assert_eq!(
                evaluate(c, &x, &bg, &model).unwrap(),
                evaluate(c, &x, &bg2, &model).unwrap()
            );
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let model = FnModel::new(2, |r: &[f64]| r[0]);
        let x = Instance::new(vec![1.0, 2.0, 3.0]);
        assert!(matches!(evaluate(Coalition::full(3), &x, &bg3(), &model), Err(Error::Dimension(_))));
        assert!(BackgroundSet::new(vec![]).is_err());
        assert!(BackgroundSet::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    struct Broken;
    impl Model for Broken {
        fn n_features(&self) -> usize {
            2
        }
        fn predict(&self, rows: Rows<'_>) -> std::result::Result<Vec<f64>, ModelError> {
            Ok(vec![0.0; rows.len() + 1])
        }
    }

    #[test]
    fn wrong_output_count_reports_batch() {
        let x = Instance::new(vec![1.0, 2.0]);
        let bg = BackgroundSet::new(vec![vec![0.0, 0.0]]).unwrap();
        let err = evaluate(Coalition::empty(2), &x, &bg, &Broken).unwrap_err();
        assert!(matches!(err, Error::Model { batch: 0, .. }), "{err}");
    }

    #[test]
    fn counting_wrapper() {
        let game = SyntheticGame::additive(vec![1.0, 2.0]);
        let counted = CountingValue::new(&game);
        counted.values(&[Coalition::full(2), Coalition::empty(2)]).unwrap();
        assert_eq!(counted.evaluations(), 2);
        assert_eq!(counted.calls(), 1);
    }
}
