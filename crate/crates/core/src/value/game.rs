use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CoalitionValue;
use crate::coalition::{check_m, full_mask, Coalition};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
enum Rule {
    Table(HashMap<u64, f64>),
    /// `v(S) = sum of weights[i] for i in S`
    Additive(Vec<f64>),
    /// `v(S) = h[|S|]`
    Cardinality(Vec<f64>),
}

/// A cooperative game `v: 2^N -> R` evaluated directly, with no model or
/// background data involved.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticGame {
    m: usize,
    rule: Rule,
}

impl SyntheticGame {
    pub fn additive(weights: Vec<f64>) -> Self {
        Self {
            m: weights.len(),
            rule: Rule::Additive(weights),
        }
    }

    /// `h` must hold one value per coalition size `0..=m`.
    pub fn cardinality(m: usize, h: Vec<f64>) -> Result<Self> {
        if h.len() != m + 1 {
            return Err(Error::Dimension(format!(
                "cardinality rule needs {} values, got {}",
                m + 1,
                h.len()
            )));
        }
        Ok(Self {
            m,
            rule: Rule::Cardinality(h),
        })
    }

    /// A table game. The empty coalition must be present.
    pub fn from_table(m: usize, table: HashMap<u64, f64>) -> Result<Self> {
        if m == 0 || m > crate::coalition::MAX_FEATURES {
            return Err(Error::FeatureCount(m));
        }
        if let Some(bad) = table.keys().find(|&&b| b >> m != 0) {
            return Err(Error::InvalidInput(format!("mask {bad:#b} exceeds M = {m}")));
        }
        if !table.contains_key(&0) {
            return Err(Error::MissingCoalition(Coalition::empty(m).to_string()));
        }
        Ok(Self {
            m,
            rule: Rule::Table(table),
        })
    }

    /// Exhaustive table built from a function of the coalition bit mask.
    pub fn from_fn(m: usize, f: impl Fn(u64) -> f64) -> Result<Self> {
        check_m(m)?;
        if m > 24 {
            return Err(Error::InvalidInput(format!("exhaustive table for M = {m} is too large")));
        }
        let table = (0..=full_mask(m)).map(|b| (b, f(b))).collect();
        Self::from_table(m, table)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn is_exhaustive(&self) -> bool {
        match &self.rule {
            Rule::Table(t) => self.m < 64 && t.len() as u64 == full_mask(self.m) + 1,
            _ => true,
        }
    }

    /// `v(S)` for the coalition's present set.
    pub fn value(&self, s: Coalition) -> Result<f64> {
        if s.m() != self.m {
            return Err(Error::Dimension(format!(
                "coalition {s} has {} players, game has {}",
                s.m(),
                self.m
            )));
        }
        Ok(match &self.rule {
            Rule::Table(t) => *t.get(&s.bits()).ok_or_else(|| Error::MissingCoalition(s.to_string()))?,
            Rule::Additive(u) => s.present().map(|i| u[i]).sum(),
            Rule::Cardinality(h) => h[s.size()],
        })
    }

    pub fn from_file(file: GameFile) -> Result<Self> {
        match file.rule.as_deref() {
            None | Some("table") => {
                let table = file
                    .values
                    .iter()
                    .map(|(k, v)| {
                        if k.len() != file.m {
                            return Err(Error::InvalidInput(format!(
                                "mask {k:?} has length {}, expected M = {}",
                                k.len(),
                                file.m
                            )));
                        }
                        Ok((Coalition::parse(k)?.bits(), *v))
                    })
                    .collect::<Result<HashMap<_, _>>>()?;
                Self::from_table(file.m, table)
            }
            Some("additive") => {
                let w = file
                    .weights
                    .ok_or_else(|| Error::InvalidInput("additive rule needs \"weights\"".into()))?;
                if w.len() != file.m {
                    return Err(Error::Dimension(format!("{} weights for M = {}", w.len(), file.m)));
                }
                Ok(Self::additive(w))
            }
            Some("cardinality") => {
                let h = file
                    .h
                    .ok_or_else(|| Error::InvalidInput("cardinality rule needs \"h\"".into()))?;
                Self::cardinality(file.m, h)
            }
            Some(other) => Err(Error::InvalidInput(format!("unknown game rule {other:?}"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        let file: GameFile = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        Self::from_file(file)
    }

    pub fn to_file(&self) -> GameFile {
        let mut file = GameFile {
            m: self.m,
            values: BTreeMap::new(),
            rule: None,
            weights: None,
            h: None,
        };
        match &self.rule {
            Rule::Table(t) => {
                file.values = t
                    .iter()
                    .map(|(&b, &v)| (Coalition::from_bits_unchecked(self.m, b).to_string(), v))
                    .collect();
            }
            Rule::Additive(u) => {
                file.rule = Some("additive".into());
                file.weights = Some(u.clone());
            }
            Rule::Cardinality(h) => {
                file.rule = Some("cardinality".into());
                file.h = Some(h.clone());
            }
        }
        file
    }
}

/// JSON layout of a game: `{"M": 3, "values": {"101": 1.0, ...}}`, or a
/// closed-form `"rule"` with its parameters. Masks list feature 1 first.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GameFile {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<Vec<f64>>,
}

impl CoalitionValue for SyntheticGame {
    fn n_features(&self) -> usize {
        self.m
    }

    fn values(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        coalitions.iter().map(|&c| self.value(c)).collect()
    }
}
