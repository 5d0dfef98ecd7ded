//! Stability, adherence and agreement metrics.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::WeightedCoalitionSet;
use crate::wls::{Explanation, Method};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Regression,
    Classification,
}

/// Decision boundary on the explained-class probability.
pub const CLASSIFICATION_THRESHOLD: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub jaccard: f64,
    pub n_runs: usize,
    pub budget: Option<u64>,
    pub strategy: Method,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    Exact,
    OtherExplanation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kendall_tau: f64,
    pub r2: f64,
    pub reference: Reference,
}

/// `|S1 ∩ ... ∩ Sn| / |S1 ∪ ... ∪ Sn|`
pub fn jaccard_n(sets: &[BTreeSet<usize>]) -> Result<f64> {
    if sets.len() < 2 {
        return Err(Error::Metric(format!("jaccard needs at least 2 sets, got {}", sets.len())));
    }
    let mut inter = sets[0].clone();
    let mut union = sets[0].clone();
    for s in &sets[1..] {
        inter.retain(|x| s.contains(x));
        union.extend(s.iter().copied());
    }
    if union.is_empty() {
        return Err(Error::Metric("jaccard of empty sets is undefined".into()));
    }
    Ok(inter.len() as f64 / union.len() as f64)
}

/// Jaccard coefficient over the supports of repeated explanations.
pub fn stability(explanations: &[Explanation]) -> Result<StabilityReport> {
    let sets: Vec<BTreeSet<usize>> = explanations
        .iter()
        .map(|e| e.support.iter().copied().collect())
        .collect();
    let first = explanations
        .first()
        .ok_or_else(|| Error::Metric("no explanations".into()))?;
    Ok(StabilityReport {
        jaccard: jaccard_n(&sets)?,
        n_runs: explanations.len(),
        budget: first.budget,
        strategy: first.strategy,
    })
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::Metric("need at least 2 values".into()));
    }
    Ok(())
}

/// Kendall's tau-b, which corrects for ties in either ranking.
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_a, mut ties_b) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let da = a[i].partial_cmp(&a[j]).ok_or_else(|| Error::Metric("NaN in ranking".into()))?;
            let db = b[i].partial_cmp(&b[j]).ok_or_else(|| Error::Metric("NaN in ranking".into()))?;
            use std::cmp::Ordering::Equal;
            match (da, db) {
                (Equal, Equal) => {
                    ties_a += 1;
                    ties_b += 1;
                }
                (Equal, _) => ties_a += 1,
                (_, Equal) => ties_b += 1,
                (x, y) if x == y => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as i64;
    let denom = (((pairs - ties_a) * (pairs - ties_b)) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::Metric("ranking of a constant vector is undefined".into()));
    }
    Ok((concordant - discordant) as f64 / denom)
}

/// Coefficient of determination of `candidate` against `reference`. Not
/// symmetric: the reference supplies the variance.
pub fn r2_score(reference: &[f64], candidate: &[f64]) -> Result<f64> {
    check_pair(reference, candidate)?;
    let mean = reference.iter().sum::<f64>() / reference.len() as f64;
    let ss_tot: f64 = reference.iter().map(|r| (r - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Metric("reference has zero variance".into()));
    }
    let ss_res: f64 = reference.iter().zip(candidate).map(|(r, c)| (r - c).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn agreement(reference: &[f64], candidate: &[f64], kind: Reference) -> Result<AgreementReport> {
    Ok(AgreementReport {
        kendall_tau: kendall_tau(reference, candidate)?,
        r2: r2_score(reference, candidate)?,
        reference: kind,
    })
}

/// Fidelity of the surrogate on its own training coalitions.
pub fn adherence(set: &WeightedCoalitionSet, values: &[f64], e: &Explanation, task: Task) -> Result<f64> {
    if values.len() != set.len() {
        return Err(Error::Dimension(format!("{} values for {} coalitions", values.len(), set.len())));
    }
    if e.m() != set.m() {
        return Err(Error::Dimension(format!("explanation has {} features, set has {}", e.m(), set.m())));
    }
    let g: Vec<f64> = set.coalitions().iter().map(|&z| e.surrogate(z)).collect();
    match task {
        Task::Regression => r2_score(values, &g),
        Task::Classification => {
            if values.is_empty() {
                return Err(Error::Metric("no coalitions".into()));
            }
            let positive = |v: f64| v >= CLASSIFICATION_THRESHOLD;
            let agree = g.iter().zip(values).filter(|(a, b)| positive(**a) == positive(**b)).count();
            Ok(agree as f64 / values.len() as f64)
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coalition::Coalition;

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn jaccard_examples() {
        let same = vec![set(&[1, 4, 7]); 20];
        assert_eq!(jaccard_n(&same).unwrap(), 1.0);
        assert_eq!(jaccard_n(&[set(&[1, 2]), set(&[2, 3])]).unwrap(), 1.0 / 3.0);
        let three = [set(&[1, 2, 3, 4]), set(&[1, 2, 3, 5]), set(&[1, 2, 3, 6])];
        assert_eq!(jaccard_n(&three).unwrap(), 0.5);
        assert!(jaccard_n(&[set(&[1])]).is_err());
        assert!(jaccard_n(&[set(&[]), set(&[])]).is_err());
    }

    #[test]
    fn kendall_examples() {
        let a = [0.3, -1.0, 2.0, 0.9];
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        let rev: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_eq!(kendall_tau(&a, &rev).unwrap(), -1.0);
        let t = kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((t - 2.0 / 3.0).abs() < 1e-15);
        assert!(kendall_tau(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn kendall_tau_b_with_ties() {
        // pairs: (0,1) tie in a; (0,2) C; (0,3) C; (1,2) C; (1,3) C; (2,3) tie in b
        let t = kendall_tau(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 3.0]).unwrap();
        assert!((t - 4.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn r2_examples() {
        let r = [1.0, 2.0, 3.0];
        assert_eq!(r2_score(&r, &r).unwrap(), 1.0);
        assert_eq!(r2_score(&r, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r2_score(&r, &[3.0, 2.0, 1.0]).unwrap(), -3.0);
        assert!(r2_score(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }

    #[test]
    fn r2_is_not_symmetric() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [1.0, 1.0, 1.0, 6.0];
        assert_ne!(r2_score(&a, &b).unwrap(), r2_score(&b, &a).unwrap());
    }

    fn explanation(phi0: f64, phis: Vec<f64>) -> Explanation {
        let fx = phi0 + phis.iter().sum::<f64>();
        Explanation {
            phi0,
            support: (0..phis.len()).collect(),
            phis,
            strategy: Method::Custom,
            budget: None,
            seed: None,
            fx,
        }
    }

    #[test]
    fn classification_adherence_counts_sides() {
        let cs: Vec<Coalition> = [0b001, 0b010, 0b100, 0b011].iter().map(|&b| Coalition::from_bits(3, b).unwrap()).collect();
        let set = WeightedCoalitionSet::new(3, cs, vec![1.0; 4]).unwrap();
        let constant = explanation(0.6, vec![0.0, 0.0, 0.0]);
        let values = [0.9, 0.2, 0.7, 0.1];
        assert_eq!(adherence(&set, &values, &constant, Task::Classification).unwrap(), 0.5);
        let exact = explanation(0.0, vec![0.3, 0.2, 0.1]);
        let values: Vec<f64> = set.coalitions().iter().map(|&z| exact.surrogate(z)).collect();
        assert_eq!(adherence(&set, &values, &exact, Task::Classification).unwrap(), 1.0);
        assert_eq!(adherence(&set, &values, &exact, Task::Regression).unwrap(), 1.0);
    }

    #[test]
    fn summaries() {
        assert_eq!(mean(&[1.0, 2.0, 6.0]), 3.0);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
