//! Coalition samplers.
//!
//! Both strategies walk the layers in increasing order and fill a layer
//! completely when the budget allows:
//!
//! * **Kernel SHAP** fills layer `i` only if the remaining budget covers it
//!   *and* the expected number of kernel-weighted draws landing in that layer
//!   (`share_i * remaining`) reaches its size. On the first failure the whole
//!   remaining budget is drawn with replacement from the union of all open
//!   layers, proportionally to kernel weight.
//! * **ST-SHAP** drops the weight test. The first layer that does not fit
//!   receives the remaining budget as a uniform sample without replacement
//!   from that layer alone; deeper layers stay empty.
//!
//! With a budget equal to a cumulative layer total, ST-SHAP draws nothing at
//! random and its output is independent of the seed.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::coalition::{check_m, enumerate, layer_len, layer_member, layer_weight, max_budget, Coalition, LayerIndex};
use crate::error::{Error, Result};

/// Relative slack on the Kernel SHAP weight test, absorbing rounding in the
/// normalized layer shares.
const WEIGHT_TEST_SLACK: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    KernelShap,
    StShap,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::KernelShap => "kernel-shap",
            Strategy::StShap => "st-shap",
        }
    }
}

/// Number of proper coalitions to materialize, `2 <= count <= 2^M - 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Budget(u64);

impl Budget {
    pub fn new(m: usize, count: u64) -> Result<Self> {
        let max = max_budget(m)?;
        if count < 2 || count > max {
            return Err(Error::InvalidBudget { m, budget: count, max });
        }
        Ok(Self(count))
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Allocation {
    /// Every coalition of the layer is materialized.
    Complete,
    /// `n` coalitions drawn uniformly without replacement from this layer.
    Sampled { n: u64 },
    /// Part of the Kernel SHAP random pool shared by all open layers.
    Pooled,
    Unused,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SwitchReason {
    /// The remaining budget could not cover the layer.
    Budget,
    /// The layer fit in the budget but failed the kernel-weight test.
    Weight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub layer: LayerIndex,
    pub size: u64,
    /// Kernel weight of a single coalition of this layer.
    pub kernel_weight: f64,
    pub allocation: Allocation,
}

impl LayerPlan {
    pub fn total_weight(&self) -> f64 {
        self.size as f64 * self.kernel_weight
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub m: usize,
    pub strategy: Strategy,
    pub budget: Budget,
    pub seed: u64,
    pub layers: Vec<LayerPlan>,
    /// Coalitions drawn from the Kernel SHAP pool (zero for ST-SHAP).
    pub pooled: u64,
    /// Why the layer-by-layer fill stopped, if it did before running out of
    /// layers.
    pub switch: Option<SwitchReason>,
}

impl SamplingPlan {
    pub fn complete_layers(&self) -> impl Iterator<Item = LayerIndex> + '_ {
        self.layers
            .iter()
            .filter(|l| l.allocation == Allocation::Complete)
            .map(|l| l.layer)
    }

    /// Coalitions per layer known from the plan alone. Pooled layers report
    /// `None`: their share is only known after sampling.
    pub fn layer_counts(&self) -> Vec<Option<u64>> {
        self.layers
            .iter()
            .map(|l| match l.allocation {
                Allocation::Complete => Some(l.size),
                Allocation::Sampled { n } => Some(n),
                Allocation::Pooled => None,
                Allocation::Unused => Some(0),
            })
            .collect()
    }

    /// True when materialization uses no randomness.
    pub fn is_deterministic(&self) -> bool {
        self.pooled == 0
            && self
                .layers
                .iter()
                .all(|l| matches!(l.allocation, Allocation::Complete | Allocation::Unused))
    }

    pub fn materialized(&self) -> u64 {
        self.layers
            .iter()
            .map(|l| match l.allocation {
                Allocation::Complete => l.size,
                Allocation::Sampled { n } => n,
                _ => 0,
            })
            .sum::<u64>()
            + self.pooled
    }
}

fn empty_layers(m: usize) -> Result<Vec<LayerPlan>> {
    Ok(LayerIndex::all(m)?
        .map(|layer| LayerPlan {
            layer,
            size: layer_len(m, layer),
            kernel_weight: layer_weight(m, layer),
            allocation: Allocation::Unused,
        })
        .collect())
}

pub fn plan(strategy: Strategy, m: usize, budget: Budget, seed: u64) -> Result<SamplingPlan> {
    match strategy {
        Strategy::KernelShap => plan_kernel_shap(m, budget, seed),
        Strategy::StShap => plan_st_shap(m, budget, seed),
    }
}

pub fn plan_kernel_shap(m: usize, budget: Budget, seed: u64) -> Result<SamplingPlan> {
    check_m(m)?;
    let budget = Budget::new(m, budget.get())?;
    let mut layers = empty_layers(m)?;
    let mut remaining = budget.get();
    let mut switch = None;
    let mut first_open = layers.len();
    for i in 0..layers.len() {
        let open_weight: f64 = layers[i..].iter().map(LayerPlan::total_weight).sum();
        let share = layers[i].total_weight() / open_weight;
        let size = layers[i].size;
        if remaining < size {
            switch = Some(SwitchReason::Budget);
        } else if share * remaining as f64 / (size as f64) < 1.0 - WEIGHT_TEST_SLACK {
            switch = Some(SwitchReason::Weight);
        }
        if switch.is_some() {
            first_open = i;
            break;
        }
        layers[i].allocation = Allocation::Complete;
        remaining -= size;
    }
    if remaining > 0 {
        for l in &mut layers[first_open..] {
            l.allocation = Allocation::Pooled;
        }
    }
    Ok(SamplingPlan {
        m,
        strategy: Strategy::KernelShap,
        budget,
        seed,
        layers,
        pooled: remaining,
        switch,
    })
}

pub fn plan_st_shap(m: usize, budget: Budget, seed: u64) -> Result<SamplingPlan> {
    check_m(m)?;
    let budget = Budget::new(m, budget.get())?;
    let mut layers = empty_layers(m)?;
    let mut remaining = budget.get();
    let mut switch = None;
    for l in &mut layers {
        if remaining >= l.size {
            l.allocation = Allocation::Complete;
            remaining -= l.size;
        } else {
            if remaining > 0 {
                l.allocation = Allocation::Sampled { n: remaining };
                remaining = 0;
            }
            switch = Some(SwitchReason::Budget);
            break;
        }
    }
    debug_assert_eq!(remaining, 0);
    Ok(SamplingPlan {
        m,
        strategy: Strategy::StShap,
        budget,
        seed,
        layers,
        pooled: 0,
        switch,
    })
}

/// Where a coalition set came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Origin {
    pub strategy: Strategy,
    pub budget: Budget,
    pub seed: u64,
}

/// Coalitions with their regression weights. Coalitions are distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedCoalitionSet {
    m: usize,
    coalitions: Vec<Coalition>,
    weights: Vec<f64>,
    origin: Option<Origin>,
}

impl WeightedCoalitionSet {
    pub fn new(m: usize, coalitions: Vec<Coalition>, weights: Vec<f64>) -> Result<Self> {
        if coalitions.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} coalitions but {} weights",
                coalitions.len(),
                weights.len()
            )));
        }
        if let Some(c) = coalitions.iter().find(|c| c.m() != m) {
            return Err(Error::Dimension(format!("coalition {c} does not have {m} features")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidInput(format!("regression weight {w} is not positive and finite")));
        }
        let mut seen = std::collections::HashSet::with_capacity(coalitions.len());
        if let Some(c) = coalitions.iter().find(|c| !seen.insert(c.bits())) {
            return Err(Error::InvalidInput(format!("duplicate coalition {c}")));
        }
        Ok(Self {
            m,
            coalitions,
            weights,
            origin: None,
        })
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = Some(origin);
        self
    }

    pub fn origin(&self) -> Option<Origin> {
        self.origin
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Coalition, f64)> + '_ {
        self.coalitions.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            m: self.m,
            coalitions: self.coalitions.clone(),
            weights: self.weights.iter().map(|w| w * factor).collect(),
            origin: self.origin,
        }
    }
}

/// Turns a plan into concrete weighted coalitions. Deterministic given the
/// plan's seed.
pub fn materialize(plan: &SamplingPlan) -> Result<WeightedCoalitionSet> {
    let m = plan.m;
    let mut rng = ChaCha20Rng::seed_from_u64(plan.seed);
    let mut coalitions = Vec::with_capacity(plan.budget.get() as usize);
    let mut weights = Vec::with_capacity(plan.budget.get() as usize);

    for l in &plan.layers {
        match l.allocation {
            Allocation::Complete => {
                let members = enumerate(m, l.layer);
                weights.extend(std::iter::repeat_n(l.kernel_weight, members.len()));
                coalitions.extend(members);
            }
            Allocation::Sampled { n } => {
                if n == 0 || n > l.size {
                    return Err(Error::InvalidInput(format!(
                        "cannot sample {n} coalitions from layer {} of size {}",
                        l.layer.get(),
                        l.size
                    )));
                }
                let mut positions = index::sample(&mut rng, l.size as usize, n as usize).into_vec();
                positions.sort_unstable();
                let w = l.kernel_weight * l.size as f64 / n as f64;
                for p in positions {
                    coalitions.push(layer_member(m, l.layer, p as u64));
                    weights.push(w);
                }
            }
            Allocation::Pooled | Allocation::Unused => {}
        }
    }

    if plan.pooled > 0 {
        let pool: Vec<&LayerPlan> = plan
            .layers
            .iter()
            .filter(|l| l.allocation == Allocation::Pooled)
            .collect();
        let population: u64 = pool.iter().map(|l| l.size).sum();
        if pool.is_empty() || plan.pooled > population {
            return Err(Error::InvalidInput(format!(
                "cannot draw {} distinct coalitions from a pool of {population}",
                plan.pooled
            )));
        }
        let pool_weight: f64 = pool.iter().map(|l| l.total_weight()).sum();
        let pick = WeightedIndex::new(pool.iter().map(|l| l.total_weight()))
            .map_err(|e| Error::InvalidInput(format!("pool weights: {e}")))?;
        let mut counts: HashMap<u64, u64> = HashMap::with_capacity(plan.pooled as usize);
        let mut order = Vec::with_capacity(plan.pooled as usize);
        let mut draws = 0u64;
        while (order.len() as u64) < plan.pooled {
            let layer = pool[pick.sample(&mut rng)];
            let c = layer_member(m, layer.layer, rng.gen_range(0..layer.size));
            draws += 1;
            let count = counts.entry(c.bits()).or_insert(0);
            if *count == 0 {
                order.push(c);
            }
            *count += 1;
        }
        for c in order {
            coalitions.push(c);
            weights.push(pool_weight * counts[&c.bits()] as f64 / draws as f64);
        }
    }

    debug_assert_eq!(coalitions.len() as u64, plan.budget.get());
    Ok(WeightedCoalitionSet::new(m, coalitions, weights)?.with_origin(Origin {
        strategy: plan.strategy,
        budget: plan.budget,
        seed: plan.seed,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalition::complete_layer_budgets;

    fn counts(p: &SamplingPlan) -> Vec<Option<u64>> {
        p.layer_counts()
    }

    #[test]
    fn kernel_shap_switches_after_layer_two_at_1200() {
        let p = plan_kernel_shap(15, Budget::new(15, 1200).unwrap(), 0).unwrap();
        assert_eq!(
            counts(&p),
            vec![Some(30), Some(210), None, None, None, None, None]
        );
        assert_eq!(p.pooled, 960);
        assert_eq!(p.switch, Some(SwitchReason::Weight));
    }

    #[test]
    fn st_shap_table_allocation() {
        let p = plan_st_shap(15, Budget::new(15, 1200).unwrap(), 0).unwrap();
        let c: Vec<u64> = counts(&p).into_iter().map(Option::unwrap).collect();
        assert_eq!(c, vec![30, 210, 910, 50, 0, 0, 0]);
        let p = plan_st_shap(13, Budget::new(13, 754).unwrap(), 0).unwrap();
        assert_eq!(p.complete_layers().count(), 3);
        assert!(p.is_deterministic());
        let p = plan_st_shap(15, Budget::new(15, 30).unwrap(), 0).unwrap();
        assert_eq!(p.complete_layers().map(LayerIndex::get).collect::<Vec<_>>(), vec![1]);
        assert!(p.is_deterministic());
    }

    #[test]
    fn kernel_shap_at_240_pools_layer_two() {
        // 210 remaining coalitions carry only ~26% of the open kernel weight,
        // so the weight test rejects layer 2 even though it fits exactly.
        let p = plan_kernel_shap(15, Budget::new(15, 240).unwrap(), 0).unwrap();
        assert_eq!(p.complete_layers().map(LayerIndex::get).collect::<Vec<_>>(), vec![1]);
        assert_eq!(p.pooled, 210);
        assert_eq!(p.switch, Some(SwitchReason::Weight));
    }

    #[test]
    fn full_budget_completes_everything() {
        for strategy in [Strategy::KernelShap, Strategy::StShap] {
            let p = plan(strategy, 4, Budget::new(4, 14).unwrap(), 9).unwrap();
            assert!(p.is_deterministic(), "{strategy:?}");
            assert_eq!(p.complete_layers().count(), 2);
        }
    }

    #[test]
    fn budget_validation() {
        assert!(Budget::new(4, 15).is_err());
        assert!(Budget::new(4, 1).is_err());
        assert!(Budget::new(2, 2).is_ok());
    }

    #[test]
    fn complete_plan_uses_exact_kernel_weights() {
        let p = plan_st_shap(6, Budget::new(6, 12 + 30).unwrap(), 3).unwrap();
        let set = materialize(&p).unwrap();
        assert_eq!(set.len(), 42);
        for (c, w) in set.iter() {
            let expected = crate::coalition::kernel_weight(6, c.size()).unwrap().finite().unwrap();
            assert_eq!(w, expected);
        }
    }

    #[test]
    fn st_shap_seeds_only_change_the_sampled_layer() {
        let b = Budget::new(15, 1200).unwrap();
        let a = materialize(&plan_st_shap(15, b, 1).unwrap()).unwrap();
        let z = materialize(&plan_st_shap(15, b, 2).unwrap()).unwrap();
        assert_eq!(a.coalitions()[..1150], z.coalitions()[..1150]);
        assert_ne!(a.coalitions()[1150..], z.coalitions()[1150..]);
        assert!(a.coalitions()[1150..].iter().all(|c| c.layer() == Some(4)));
    }

    #[test]
    fn st_shap_scaling_preserves_layer_weight() {
        let b = Budget::new(15, 1200).unwrap();
        let set = materialize(&plan_st_shap(15, b, 11).unwrap()).unwrap();
        let expected: f64 = (1..=4)
            .map(|i| {
                let l = LayerIndex::new(15, i).unwrap();
                layer_len(15, l) as f64 * layer_weight(15, l)
            })
            .sum();
        assert!((set.total_weight() - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn kernel_shap_pool_weights_and_distinctness() {
        let b = Budget::new(15, 1200).unwrap();
        let p = plan_kernel_shap(15, b, 5).unwrap();
        let set = materialize(&p).unwrap();
        assert_eq!(set.len(), 1200);
        let pool_weight: f64 = p.layers[2..].iter().map(LayerPlan::total_weight).sum();
        let got: f64 = set.weights()[240..].iter().sum();
        assert!((got - pool_weight).abs() < 1e-12, "{got} vs {pool_weight}");
        assert!(set.coalitions()[240..].iter().all(|c| c.layer().unwrap() >= 3));
        let again = materialize(&p).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn complete_budgets_are_seed_independent() {
        for m in [5, 8] {
            for (_, total) in complete_layer_budgets(m).unwrap() {
                let b = Budget::new(m, total).unwrap();
                let a = materialize(&plan_st_shap(m, b, 1).unwrap()).unwrap();
                let z = materialize(&plan_st_shap(m, b, 99).unwrap()).unwrap();
                assert_eq!(a.coalitions(), z.coalitions());
                assert_eq!(a.weights(), z.weights());
            }
        }
    }
}
