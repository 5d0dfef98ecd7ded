//! Closed-form attributions from the layer-1 coalitions alone.
//!
//! With only singleton-present and singleton-absent coalitions (all sharing
//! one kernel weight), the constrained least-squares fit has the solution
//!
//! ```text
//! phi~_j = (f({j}) - f(empty) + f(N) - f(N \ {j})) / 2
//! phi_j  = phi~_j + (f(N) - f(empty) - sum_i phi~_i) / M
//! ```
//!
//! which needs `2M + 2` value evaluations (`2M` when `M = 2`, where the
//! singletons and their complements coincide).

use serde::{Deserialize, Serialize};

use crate::coalition::{check_m, Coalition};
use crate::error::Result;
use crate::value::CoalitionValue;
use crate::wls::{nonzero_support, Explanation, Method};

/// Evaluations feeding the closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer1Intermediates {
    pub f_empty: f64,
    pub f_full: f64,
    /// `f({i})`
    pub singles: Vec<f64>,
    /// `f(N \ {i})`
    pub drop_ones: Vec<f64>,
    pub tilde_phis: Vec<f64>,
    /// `f(N) - f(empty)`
    pub delta: f64,
}

impl Layer1Intermediates {
    pub fn new(f_empty: f64, f_full: f64, singles: Vec<f64>, drop_ones: Vec<f64>) -> Self {
        let tilde_phis = singles
            .iter()
            .zip(&drop_ones)
            .map(|(s, d)| (s - f_empty + f_full - d) / 2.0)
            .collect();
        Self {
            f_empty,
            f_full,
            singles,
            drop_ones,
            tilde_phis,
            delta: f_full - f_empty,
        }
    }

    pub fn m(&self) -> usize {
        self.singles.len()
    }

    /// `f({j}) - f(empty)`
    pub fn singleton_gain(&self, j: usize) -> f64 {
        self.singles[j] - self.f_empty
    }

    /// `f(N) - f(N \ {j})`
    pub fn removal_loss(&self, j: usize) -> f64 {
        self.f_full - self.drop_ones[j]
    }

    /// `f(N \ {j}) - f(empty)`
    pub fn complement_gain(&self, j: usize) -> f64 {
        self.drop_ones[j] - self.f_empty
    }

    pub fn attributions(&self) -> Vec<f64> {
        let m = self.m() as f64;
        let correction = (self.delta - self.tilde_phis.iter().sum::<f64>()) / m;
        self.tilde_phis.iter().map(|t| t + correction).collect()
    }
}

/// The symmetric rewrite of the closed form:
/// `(f({j}) - f(N\{j}))/2 - sum_i (f({i}) - f(N\{i})) / (2M) + (f(N) - f(empty)) / M`.
pub fn alt_form(interm: &Layer1Intermediates, j: usize) -> f64 {
    let m = interm.m() as f64;
    let spread: f64 = interm
        .singles
        .iter()
        .zip(&interm.drop_ones)
        .map(|(s, d)| s - d)
        .sum();
    (interm.singles[j] - interm.drop_ones[j]) / 2.0 - spread / (2.0 * m) + interm.delta / m
}

/// The distinct coalitions the closed form needs: empty, full, then each
/// singleton followed by its complement (complements skipped when `M = 2`).
pub fn layer1_coalitions(m: usize) -> Result<Vec<Coalition>> {
    check_m(m)?;
    let mut out = Vec::with_capacity(2 * m + 2);
    out.push(Coalition::empty(m));
    out.push(Coalition::full(m));
    for j in 0..m {
        let single = Coalition::from_bits_unchecked(m, 1 << j);
        out.push(single);
        if m > 2 {
            out.push(single.complement());
        }
    }
    Ok(out)
}

/// Evaluates the layer-1 coalitions in one batch.
pub fn layer1_intermediates<V: CoalitionValue + ?Sized>(value: &V) -> Result<Layer1Intermediates> {
    let m = value.n_features();
    let coalitions = layer1_coalitions(m)?;
    let v = value.values(&coalitions)?;
    let (f_empty, f_full) = (v[0], v[1]);
    let (singles, drop_ones) = if m > 2 {
        (
            (0..m).map(|j| v[2 + 2 * j]).collect(),
            (0..m).map(|j| v[3 + 2 * j]).collect(),
        )
    } else {
        // N \ {1} = {2} and N \ {2} = {1}
        (vec![v[2], v[3]], vec![v[3], v[2]])
    };
    Ok(Layer1Intermediates::new(f_empty, f_full, singles, drop_ones))
}

pub fn layer1_attribution<V: CoalitionValue + ?Sized>(value: &V) -> Result<Explanation> {
    Ok(layer1_explain(value)?.0)
}

/// Explanation plus the intermediates it was built from.
pub fn layer1_explain<V: CoalitionValue + ?Sized>(value: &V) -> Result<(Explanation, Layer1Intermediates)> {
    let interm = layer1_intermediates(value)?;
    let phis = interm.attributions();
    let m = interm.m();
    let e = Explanation {
        phi0: interm.f_empty,
        support: nonzero_support(&phis),
        phis,
        strategy: Method::Layer1,
        budget: Some(if m > 2 { 2 * m as u64 } else { 2 }),
        seed: None,
        fx: interm.f_full,
    };
    Ok((e, interm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::{CountingValue, SyntheticGame};

    fn glove() -> SyntheticGame {
        SyntheticGame::from_fn(3, |b| if b & 1 == 1 && b & 0b110 != 0 { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn additive_game() {
        let e = layer1_attribution(&SyntheticGame::additive(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(e.phis, vec![1.0, 2.0, 3.0]);
        assert_eq!(e.strategy, Method::Layer1);
    }

    #[test]
    fn square_cardinality_game_splits_evenly() {
        let g = SyntheticGame::cardinality(3, vec![0.0, 1.0, 4.0, 9.0]).unwrap();
        assert_eq!(layer1_attribution(&g).unwrap().phis, vec![3.0, 3.0, 3.0]);
    }

    #[test]
    fn glove_game_hand_evaluation() {
        let (e, interm) = layer1_explain(&glove()).unwrap();
        assert_eq!(interm.tilde_phis, vec![0.5, 0.0, 0.0]);
        assert_eq!(interm.delta, 1.0);
        let expected = [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0];
        for j in 0..3 {
            assert!((e.phis[j] - expected[j]).abs() < 1e-15);
            assert!((alt_form(&interm, j) - e.phis[j]).abs() < 1e-12);
        }
        assert_eq!(interm.complement_gain(1), 1.0);
        assert_eq!(interm.singleton_gain(0), 0.0);
        assert_eq!(interm.removal_loss(0), 1.0);
    }

    #[test]
    fn alt_form_on_symmetric_and_additive_games() {
        let g = SyntheticGame::cardinality(4, vec![0.0, 0.3, 1.1, 2.0, 5.0]).unwrap();
        let interm = layer1_intermediates(&g).unwrap();
        for j in 0..4 {
            assert!((alt_form(&interm, j) - 5.0 / 4.0).abs() < 1e-12);
        }
        let a = SyntheticGame::additive(vec![0.5, -1.0, 2.0]);
        let interm = layer1_intermediates(&a).unwrap();
        for (j, u) in [0.5, -1.0, 2.0].into_iter().enumerate() {
            assert!((alt_form(&interm, j) - u).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluation_counts() {
        for m in 2..=12 {
            let g = SyntheticGame::additive((0..m).map(|i| i as f64).collect());
            let counted = CountingValue::new(&g);
            layer1_attribution(&counted).unwrap();
            let expected = if m == 2 { 4 } else { 2 * m + 2 };
            assert_eq!(counted.evaluations(), expected, "m={m}");
            assert_eq!(counted.calls(), 1);
        }
    }

    #[test]
    fn two_player_case_matches_shapley() {
        let mut t = std::collections::HashMap::new();
        t.insert(0b00, 0.0);
        t.insert(0b01, 1.0);
        t.insert(0b10, 2.0);
        t.insert(0b11, 4.0);
        let g = SyntheticGame::from_table(2, t).unwrap();
        assert_eq!(layer1_attribution(&g).unwrap().phis, vec![1.5, 2.5]);
    }

    #[test]
    fn rejects_single_feature() {
        assert!(layer1_attribution(&SyntheticGame::additive(vec![1.0])).is_err());
    }
}
