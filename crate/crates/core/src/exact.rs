//! Exact Shapley values by exhaustive enumeration.
//!
//! [`exact_shap`] evaluates all `2^M` coalitions once and applies the subset
//! formula. [`exact_shap_permutation`] averages marginal contributions over
//! all `M!` player orderings and serves as an independent cross-check.

use serde::{Deserialize, Serialize};

use crate::coalition::{binomial, check_m, full_mask, Coalition};
use crate::error::{Error, Result};
use crate::value::CoalitionValue;
use crate::wls::{nonzero_support, Explanation, Method};

pub const DEFAULT_EXACT_CAP: usize = 20;
pub const PERMUTATION_CAP: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactValues {
    pub phis: Vec<f64>,
    /// `f(empty)`
    pub phi0: f64,
    /// `f(N)`
    pub fx: f64,
    pub eval_count: u64,
}

impl ExactValues {
    pub fn into_explanation(self) -> Explanation {
        Explanation {
            phi0: self.phi0,
            support: nonzero_support(&self.phis),
            phis: self.phis,
            strategy: Method::Exact,
            budget: None,
            seed: None,
            fx: self.fx,
        }
    }
}

fn check_cap(m: usize, cap: usize, evaluations: u128) -> Result<()> {
    check_m(m)?;
    if m > cap {
        return Err(Error::OracleCap { m, cap, evaluations });
    }
    Ok(())
}

/// `v(S)` for every mask `S` in `0..2^M`, indexed by mask.
fn value_table<V: CoalitionValue + ?Sized>(value: &V) -> Result<Vec<f64>> {
    let m = value.n_features();
    let all: Vec<Coalition> = (0..=full_mask(m)).map(|b| Coalition::from_bits_unchecked(m, b)).collect();
    value.values(&all)
}

pub fn exact_shap<V: CoalitionValue + ?Sized>(value: &V) -> Result<ExactValues> {
    exact_shap_capped(value, DEFAULT_EXACT_CAP)
}

/// Subset formula over a memoized value table:
/// `phi_i = sum_{S not containing i} |S|! (M-|S|-1)! / M! * (v(S + i) - v(S))`.
pub fn exact_shap_capped<V: CoalitionValue + ?Sized>(value: &V, cap: usize) -> Result<ExactValues> {
    let m = value.n_features();
    check_cap(m, cap, 1u128 << m.min(127))?;
    let table = value_table(value)?;
    // |S|!(M-|S|-1)!/M! = 1 / (M * C(M-1, |S|)), exact integers converted once
    let weights: Vec<f64> = (0..m).map(|s| 1.0 / (m as u128 * binomial(m - 1, s)) as f64).collect();
    let mut phis = vec![0.0; m];
    for (i, phi) in phis.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for s in 0..table.len() {
            if s & bit == 0 {
                acc += weights[s.count_ones() as usize] * (table[s | bit] - table[s]);
            }
        }
        *phi = acc;
    }
    Ok(ExactValues {
        phis,
        phi0: table[0],
        fx: table[table.len() - 1],
        eval_count: table.len() as u64,
    })
}

/// Average marginal contribution over every ordering of the players.
pub fn exact_shap_permutation<V: CoalitionValue + ?Sized>(value: &V) -> Result<ExactValues> {
    let m = value.n_features();
    let orderings = (1..=m as u128).product::<u128>();
    check_cap(m, PERMUTATION_CAP, orderings)?;
    let table = value_table(value)?;
    let mut sums = vec![0.0; m];
    let mut order: Vec<usize> = (0..m).collect();
    let mut visit = |order: &[usize]| {
        let mut s = 0usize;
        for &p in order {
            let next = s | 1 << p;
            sums[p] += table[next] - table[s];
            s = next;
        }
    };
    // Heap's algorithm, iterative form
    let mut c = vec![0usize; m];
    visit(&order);
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                order.swap(0, i);
            } else {
                order.swap(c[i], i);
            }
            visit(&order);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    let n = orderings as f64;
    Ok(ExactValues {
        phis: sums.into_iter().map(|s| s / n).collect(),
        phi0: table[0],
        fx: table[table.len() - 1],
        eval_count: table.len() as u64,
    })
}
