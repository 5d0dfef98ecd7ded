//! Constrained weighted least squares for the additive surrogate
//! `g(z') = phi0 + sum_i phi_i z'_i`.
//!
//! The intercept is pinned to `f_x(empty)` and the coefficients are forced to
//! sum to `f(x) - phi0`. The sum constraint is eliminated by substituting the
//! highest-indexed coefficient of the support, which leaves an unconstrained
//! regression over the remaining coefficients:
//!
//! ```text
//! y_z = f_x(z) - phi0 - z_last * (fx - phi0)
//! a_z = (z_j - z_last)  for j in support \ {last}
//! phi_last = (fx - phi0) - sum_j phi_j
//! ```

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coalition::{check_m, Coalition};
use crate::error::{Error, Result};
use crate::sampling::{materialize, plan, Budget, Strategy, WeightedCoalitionSet};
use crate::value::CoalitionValue;

/// How an explanation was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    KernelShap,
    StShap,
    #[serde(rename = "layer1")]
    Layer1,
    Exact,
    /// A fit over a caller-supplied coalition set.
    Custom,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::KernelShap => "kernel-shap",
            Method::StShap => "st-shap",
            Method::Layer1 => "layer1",
            Method::Exact => "exact",
            Method::Custom => "custom",
        }
    }

    pub fn sampling(self) -> Option<Strategy> {
        match self {
            Method::KernelShap => Some(Strategy::KernelShap),
            Method::StShap => Some(Strategy::StShap),
            _ => None,
        }
    }
}

impl From<Strategy> for Method {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::KernelShap => Method::KernelShap,
            Strategy::StShap => Method::StShap,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "kernel-shap" | "kernel_shap" | "kernelshap" => Method::KernelShap,
            "st-shap" | "st_shap" | "stshap" => Method::StShap,
            "layer1" | "layer-1" => Method::Layer1,
            "exact" => Method::Exact,
            other => return Err(Error::InvalidInput(format!("unknown strategy {other:?}"))),
        })
    }
}

/// Attribution of one prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub phi0: f64,
    pub phis: Vec<f64>,
    /// Feature indices (0-based) with non-zero coefficients, ascending.
    pub support: Vec<usize>,
    pub strategy: Method,
    pub budget: Option<u64>,
    pub seed: Option<u64>,
    pub fx: f64,
}

impl Explanation {
    pub fn m(&self) -> usize {
        self.phis.len()
    }

    /// `|phi0 + sum(phi) - f(x)|`
    pub fn accuracy_gap(&self) -> f64 {
        (self.phi0 + self.phis.iter().sum::<f64>() - self.fx).abs()
    }

    /// Surrogate prediction `g(z')`.
    pub fn surrogate(&self, z: Coalition) -> f64 {
        self.phi0 + z.present().map(|j| self.phis[j]).sum::<f64>()
    }
}

pub(crate) fn nonzero_support(phis: &[f64]) -> Vec<usize> {
    (0..phis.len()).filter(|&j| phis[j] != 0.0).collect()
}

/// Solver constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Bound on `|phi0 + sum(phi) - f(x)|` every fit must satisfy.
    pub accuracy_tolerance: f64,
    /// Diagonal jitter added when the normal equations are singular.
    pub ridge_jitter: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            accuracy_tolerance: 1e-9,
            ridge_jitter: 1e-10,
        }
    }
}

/// Below this ratio of smallest Cholesky pivot to largest diagonal entry the
/// normal matrix is treated as singular.
const PIVOT_RATIO: f64 = 1e-12;

fn cholesky_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let max_diag = a.diagonal().iter().fold(0.0f64, |acc, v| acc.max(*v));
    if max_diag.is_nan() || max_diag <= 0.0 {
        return None;
    }
    let chol = a.clone().cholesky()?;
    let l = chol.l_dirty();
    let min_pivot = (0..a.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
    if min_pivot <= PIVOT_RATIO * max_diag {
        return None;
    }
    let x = chol.solve(b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn describe(set: &WeightedCoalitionSet, support: &[usize]) -> String {
    let origin = match set.origin() {
        Some(o) => format!("{} budget {} seed {}", o.strategy.name(), o.budget.get(), o.seed),
        None => "custom coalition set".to_string(),
    };
    format!(
        "{origin}, M = {}, {} coalitions, {} free coefficients",
        set.m(),
        set.len(),
        support.len().saturating_sub(1)
    )
}

/// Coefficients for the given support; all others are zero.
fn solve(
    set: &WeightedCoalitionSet,
    values: &[f64],
    phi0: f64,
    fx: f64,
    support: &[usize],
    cfg: &SolverConfig,
) -> Result<Vec<f64>> {
    let m = set.m();
    if values.len() != set.len() {
        return Err(Error::Dimension(format!(
            "{} values for {} coalitions",
            values.len(),
            set.len()
        )));
    }
    if let Some(v) = values.iter().chain([&phi0, &fx]).find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite coalition value {v}")));
    }
    let (&last, free) = support
        .split_last()
        .ok_or_else(|| Error::InvalidInput("explanation support is empty".into()))?;
    let delta = fx - phi0;
    let mut phis = vec![0.0; m];
    if free.is_empty() {
        phis[last] = delta;
        return Ok(phis);
    }

    let p = free.len();
    let total: f64 = set.weights().iter().sum();
    let mut normal = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    let mut a = vec![0.0; p];
    for ((z, w), v) in set.iter().zip(values) {
        let w = w / total;
        let z_last = if z.contains(last) { 1.0 } else { 0.0 };
        let y = v - phi0 - z_last * delta;
        for (aj, &j) in a.iter_mut().zip(free) {
            *aj = if z.contains(j) { 1.0 } else { 0.0 } - z_last;
        }
        for r in 0..p {
            if a[r] == 0.0 {
                continue;
            }
            let wa = w * a[r];
            rhs[r] += wa * y;
            for c in 0..=r {
                normal[(r, c)] += wa * a[c];
            }
        }
    }
    for r in 0..p {
        for c in 0..r {
            normal[(c, r)] = normal[(r, c)];
        }
    }

    let beta = match cholesky_solve(&normal, &rhs) {
        Some(b) => b,
        None => {
            let mut jittered = normal;
            for i in 0..p {
                jittered[(i, i)] += cfg.ridge_jitter;
            }
            cholesky_solve(&jittered, &rhs).ok_or_else(|| Error::RankDeficient {
                context: describe(set, support),
            })?
        }
    };
    let mut acc = 0.0;
    for (&j, &b) in free.iter().zip(beta.iter()) {
        phis[j] = b;
        acc += b;
    }
    phis[last] = delta - acc;
    Ok(phis)
}

fn provenance(set: &WeightedCoalitionSet) -> (Method, Option<u64>, Option<u64>) {
    match set.origin() {
        Some(o) => (o.strategy.into(), Some(o.budget.get()), Some(o.seed)),
        None => (Method::Custom, Some(set.len() as u64), None),
    }
}

fn check_accuracy(e: &Explanation, cfg: &SolverConfig) -> Result<()> {
    let gap = e.accuracy_gap();
    if gap < cfg.accuracy_tolerance {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "local accuracy violated by {gap:e} (tolerance {:e})",
            cfg.accuracy_tolerance
        )))
    }
}

pub fn fit(set: &WeightedCoalitionSet, values: &[f64], phi0: f64, fx: f64) -> Result<Explanation> {
    fit_with(set, values, phi0, fx, &SolverConfig::default())
}

/// Dense constrained fit over every feature.
pub fn fit_with(
    set: &WeightedCoalitionSet,
    values: &[f64],
    phi0: f64,
    fx: f64,
    cfg: &SolverConfig,
) -> Result<Explanation> {
    check_m(set.m())?;
    let all: Vec<usize> = (0..set.m()).collect();
    let phis = solve(set, values, phi0, fx, &all, cfg)?;
    let (strategy, budget, seed) = provenance(set);
    let e = Explanation {
        phi0,
        support: nonzero_support(&phis),
        phis,
        strategy,
        budget,
        seed,
        fx,
    };
    check_accuracy(&e, cfg)?;
    Ok(e)
}

/// The `k` features with the largest `|phi|`, ties to the lower index,
/// returned in ascending index order.
pub fn top_k(phis: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..phis.len()).collect();
    order.sort_by(|&a, &b| phis[b].abs().total_cmp(&phis[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    order
}

pub fn sparsify(e: &Explanation, k: usize, set: &WeightedCoalitionSet, values: &[f64]) -> Result<Explanation> {
    sparsify_with(e, k, set, values, &SolverConfig::default())
}

/// Keeps the `k` largest-magnitude features of a dense fit and refits with
/// every other coefficient pinned to zero.
pub fn sparsify_with(
    e: &Explanation,
    k: usize,
    set: &WeightedCoalitionSet,
    values: &[f64],
    cfg: &SolverConfig,
) -> Result<Explanation> {
    let m = e.m();
    if k == 0 || k > m {
        return Err(Error::InvalidInput(format!("explanation size {k} must be in 1..={m}")));
    }
    if set.m() != m {
        return Err(Error::Dimension(format!("explanation has {m} features, set has {}", set.m())));
    }
    if k == m {
        return Ok(e.clone());
    }
    let support = top_k(&e.phis, k);
    let phis = solve(set, values, e.phi0, e.fx, &support, cfg)?;
    let out = Explanation {
        phis,
        support,
        ..e.clone()
    };
    check_accuracy(&out, cfg)?;
    Ok(out)
}

/// Everything produced along the way by [`explain`].
#[derive(Clone, Debug)]
pub struct ExplainRun {
    pub explanation: Explanation,
    pub set: WeightedCoalitionSet,
    /// `f_x` for each coalition of `set`.
    pub values: Vec<f64>,
}

/// plan, materialize, evaluate, fit and optionally sparsify to `k` features.
pub fn explain<V: CoalitionValue + ?Sized>(
    value: &V,
    strategy: Strategy,
    budget: u64,
    seed: u64,
    k: Option<usize>,
) -> Result<Explanation> {
    explain_run(value, strategy, budget, seed, k, &SolverConfig::default()).map(|r| r.explanation)
}

pub fn explain_run<V: CoalitionValue + ?Sized>(
    value: &V,
    strategy: Strategy,
    budget: u64,
    seed: u64,
    k: Option<usize>,
    cfg: &SolverConfig,
) -> Result<ExplainRun> {
    let m = value.n_features();
    check_m(m)?;
    if let Some(k) = k {
        if k == 0 || k > m {
            return Err(Error::InvalidInput(format!("explanation size {k} must be in 1..={m}")));
        }
    }
    let budget = Budget::new(m, budget)?;
    let set = materialize(&plan(strategy, m, budget, seed)?)?;

    let mut batch = Vec::with_capacity(set.len() + 2);
    batch.push(Coalition::empty(m));
    batch.push(Coalition::full(m));
    batch.extend_from_slice(set.coalitions());
    let mut values = value.values(&batch)?;
    let (phi0, fx) = (values[0], values[1]);
    let values = values.split_off(2);

    let dense = fit_with(&set, &values, phi0, fx, cfg)?;
    let explanation = match k {
        Some(k) => sparsify_with(&dense, k, &set, &values, cfg)?,
        None => dense,
    };
    Ok(ExplainRun {
        explanation,
        set,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalition::{kernel_weight, max_budget};
    use crate::value::SyntheticGame;

    fn glove() -> SyntheticGame {
        SyntheticGame::from_fn(3, |b| if b & 1 == 1 && b & 0b110 != 0 { 1.0 } else { 0.0 }).unwrap()
    }

    /// Every proper coalition with its Shapley-kernel weight.
    fn full_set(m: usize) -> WeightedCoalitionSet {
        let cs: Vec<Coalition> = (1..(1u64 << m) - 1).map(|b| Coalition::from_bits(m, b).unwrap()).collect();
        let ws = cs.iter().map(|c| kernel_weight(m, c.size()).unwrap().finite().unwrap()).collect();
        WeightedCoalitionSet::new(m, cs, ws).unwrap()
    }

    fn fit_game(game: &SyntheticGame, set: &WeightedCoalitionSet) -> Explanation {
        let m = game.m();
        let values = game.values(set.coalitions()).unwrap();
        let phi0 = game.value(Coalition::empty(m)).unwrap();
        let fx = game.value(Coalition::full(m)).unwrap();
        fit(set, &values, phi0, fx).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn glove_game_full_enumeration() {
        let e = fit_game(&glove(), &full_set(3));
        assert!(close(&e.phis, &[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1e-12), "{:?}", e.phis);
        assert!(e.accuracy_gap() < 1e-12);
        assert_eq!(e.strategy, Method::Custom);
    }

    #[test]
    fn additive_game_recovered_from_any_complete_budget() {
        let game = SyntheticGame::additive(vec![1.0, 2.0, 3.0]);
        let e = explain(&game, Strategy::StShap, 6, 0, None).unwrap();
        assert!(close(&e.phis, &[1.0, 2.0, 3.0], 1e-12));
        let game = SyntheticGame::additive(vec![1.0, 2.0, 3.0, -4.0, 0.5]);
        for budget in [10u64, 30] {
            let e = explain(&game, Strategy::StShap, budget, 0, None).unwrap();
            assert!(close(&e.phis, &[1.0, 2.0, 3.0, -4.0, 0.5], 1e-12));
        }
    }

    #[test]
    fn constant_model_gets_zero_attributions() {
        let game = SyntheticGame::cardinality(4, vec![2.5; 5]).unwrap();
        let e = explain(&game, Strategy::KernelShap, 9, 4, None).unwrap();
        assert_eq!(e.phi0, 2.5);
        assert!(e.phis.iter().all(|p| p.abs() < 1e-15), "{:?}", e.phis);
    }

    #[test]
    fn sparsify_ranks_by_magnitude() {
        let game = SyntheticGame::additive(vec![1.0, 2.0, 3.0]);
        let run = explain_run(&game, Strategy::StShap, 6, 0, None, &SolverConfig::default()).unwrap();
        let e2 = sparsify(&run.explanation, 2, &run.set, &run.values).unwrap();
        assert_eq!(e2.support, vec![1, 2]);
        assert_eq!(e2.phis[0], 0.0);
        assert!(e2.accuracy_gap() < 1e-12);
        let same = sparsify(&run.explanation, 3, &run.set, &run.values).unwrap();
        assert_eq!(same, run.explanation);
        assert!(sparsify(&run.explanation, 0, &run.set, &run.values).is_err());
        assert!(sparsify(&run.explanation, 4, &run.set, &run.values).is_err());

        assert_eq!(top_k(&[5.0, -5.0, 0.1], 2), vec![0, 1]);
        assert_eq!(top_k(&[1.0, -1.0, 1.0], 2), vec![0, 1]);
    }

    #[test]
    fn single_feature_support_takes_the_whole_payoff() {
        let game = SyntheticGame::additive(vec![1.0, 2.0, 3.0]);
        let e = explain(&game, Strategy::StShap, 6, 0, Some(1)).unwrap();
        assert_eq!(e.support, vec![2]);
        assert_eq!(e.phis, vec![0.0, 0.0, 6.0]);
    }

    #[test]
    fn weight_scale_invariance() {
        let game = SyntheticGame::from_fn(5, |b| ((b * 2654435761) % 97) as f64 / 7.0).unwrap();
        let set = materialize(&plan(Strategy::KernelShap, 5, Budget::new(5, 17).unwrap(), 3).unwrap()).unwrap();
        let a = fit_game(&game, &set);
        let b = fit_game(&game, &set.scaled(1234.5));
        assert!(close(&a.phis, &b.phis, 1e-10));
    }

    #[test]
    fn rank_deficient_sets_are_regularized() {
        // two coalitions, four free coefficients
        let game = SyntheticGame::from_fn(5, |b| b.count_ones() as f64 * 1.5 + (b & 1) as f64).unwrap();
        let e = explain(&game, Strategy::KernelShap, 2, 7, None).unwrap();
        assert!(e.accuracy_gap() < 1e-9);
        assert!(e.phis.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn dummy_player_at_full_enumeration() {
        // player 3 never changes the value
        let game = SyntheticGame::from_fn(4, |b| {
            let b = b & 0b1011;
            (b as f64).sqrt() + (b.count_ones() as f64).powi(2)
        })
        .unwrap();
        let e = explain(&game, Strategy::StShap, max_budget(4).unwrap(), 0, None).unwrap();
        assert!(e.phis[2].abs() < 1e-9, "{:?}", e.phis);
    }

    #[test]
    fn serializes_to_the_documented_schema() {
        let game = SyntheticGame::additive(vec![1.0, 2.0]);
        let e = explain(&game, Strategy::StShap, 2, 42, None).unwrap();
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        for key in ["phi0", "phis", "support", "strategy", "budget", "seed", "fx"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["strategy"], "st-shap");
        assert_eq!(serde_json::from_value::<Explanation>(v).unwrap(), e);
    }

    #[test]
    fn mismatched_inputs() {
        let set = full_set(3);
        assert!(matches!(fit(&set, &[0.0; 2], 0.0, 1.0), Err(Error::Dimension(_))));
        assert!(explain(&glove(), Strategy::StShap, 7, 0, None).is_err());
        assert!(explain(&glove(), Strategy::StShap, 6, 0, Some(4)).is_err());
    }
}
