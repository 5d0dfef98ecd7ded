//! Coalition masks, the layer taxonomy and Shapley-kernel weights.
//!
//! A coalition is stored as a `u64` bit mask where bit `j` marks feature `j`
//! as present. Layer `i` groups the coalitions with exactly `i` features
//! present or exactly `i` features absent; every coalition in a layer shares
//! the same kernel weight.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported feature count (masks are `u64` and `2^M - 2` must fit).
pub const MAX_FEATURES: usize = 63;

pub(crate) fn check_m(m: usize) -> Result<()> {
    if (2..=MAX_FEATURES).contains(&m) {
        Ok(())
    } else {
        Err(Error::FeatureCount(m))
    }
}

/// Binomial coefficient, exact.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc * (n - j) as u128 / (j + 1) as u128;
    }
    acc
}

/// Binary inclusion mask over `m` features.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Coalition {
    bits: u64,
    m: u8,
}

impl Coalition {
    pub fn from_bits(m: usize, bits: u64) -> Result<Self> {
        if m == 0 || m > MAX_FEATURES {
            return Err(Error::FeatureCount(m));
        }
        if bits >> m != 0 {
            return Err(Error::InvalidInput(format!(
                "mask {bits:#b} has bits beyond feature count {m}"
            )));
        }
        Ok(Self { bits, m: m as u8 })
    }

    pub(crate) fn from_bits_unchecked(m: usize, bits: u64) -> Self {
        debug_assert!(m <= MAX_FEATURES && bits >> m == 0);
        Self { bits, m: m as u8 }
    }

    pub fn empty(m: usize) -> Self {
        Self::from_bits_unchecked(m, 0)
    }

    pub fn full(m: usize) -> Self {
        Self::from_bits_unchecked(m, full_mask(m))
    }

    pub fn from_mask(mask: &[bool]) -> Result<Self> {
        let bits = mask
            .iter()
            .enumerate()
            .fold(0u64, |acc, (j, &on)| if on { acc | (1 << j) } else { acc });
        Self::from_bits(mask.len(), bits)
    }

    /// Parses a mask written feature-first, e.g. `"1001"`.
    pub fn parse(s: &str) -> Result<Self> {
        let mask = s
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::InvalidInput(format!(
                    "invalid character {other:?} in coalition mask {s:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_mask(&mask)
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn m(&self) -> usize {
        self.m as usize
    }

    /// Number of present features, `|z'|`.
    pub fn size(&self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn contains(&self, feature: usize) -> bool {
        feature < self.m() && self.bits & (1 << feature) != 0
    }

    pub fn complement(&self) -> Self {
        Self::from_bits_unchecked(self.m(), !self.bits & full_mask(self.m()))
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.m()).map(|j| self.contains(j)).collect()
    }

    pub fn present(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.m()).filter(|&j| self.contains(j))
    }

    /// Layer of a proper coalition, `None` for the empty and grand coalitions.
    pub fn layer(&self) -> Option<usize> {
        let s = self.size();
        (s > 0 && s < self.m()).then(|| s.min(self.m() - s))
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..self.m() {
            f.write_str(if self.contains(j) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coalition({self})")
    }
}

pub(crate) fn full_mask(m: usize) -> u64 {
    if m == 64 {
        u64::MAX
    } else {
        (1u64 << m) - 1
    }
}

/// Index of a layer, valid in `1..=M/2` for its feature count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerIndex(usize);

impl LayerIndex {
    pub fn new(m: usize, layer: usize) -> Result<Self> {
        check_m(m)?;
        if layer == 0 || layer > m / 2 {
            return Err(Error::InvalidLayer { m, layer });
        }
        Ok(Self(layer))
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// All layers for `m` features, in increasing order.
    pub fn all(m: usize) -> Result<impl Iterator<Item = LayerIndex>> {
        check_m(m)?;
        Ok((1..=m / 2).map(LayerIndex))
    }
}

/// The Shapley kernel weight of a coalition size.
///
/// Empty and grand coalitions carry infinite weight; they are represented by
/// a separate variant so they can never be mixed into regression weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KernelWeight {
    Finite(f64),
    Infinite,
}

impl KernelWeight {
    pub fn is_finite(self) -> bool {
        matches!(self, KernelWeight::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            KernelWeight::Finite(w) => Some(w),
            KernelWeight::Infinite => None,
        }
    }
}

/// `(M - 1) / (C(M, s) * s * (M - s))`, infinite for `s` in `{0, M}`.
pub fn kernel_weight(m: usize, s: usize) -> Result<KernelWeight> {
    check_m(m)?;
    if s > m {
        return Err(Error::InvalidInput(format!(
            "coalition size {s} exceeds feature count {m}"
        )));
    }
    if s == 0 || s == m {
        return Ok(KernelWeight::Infinite);
    }
    let denom = binomial(m, s) as f64 * s as f64 * (m - s) as f64;
    Ok(KernelWeight::Finite((m - 1) as f64 / denom))
}

/// Per-coalition kernel weight of a layer.
pub fn layer_weight(m: usize, layer: LayerIndex) -> f64 {
    kernel_weight(m, layer.get())
        .ok()
        .and_then(KernelWeight::finite)
        .expect("layer sizes are proper")
}

/// Number of coalitions in a layer. The present/absent halves coincide when
/// `M` is even and `i = M/2`.
pub fn layer_size(m: usize, layer: usize) -> Result<u64> {
    let layer = LayerIndex::new(m, layer)?;
    Ok(layer_len(m, layer))
}

pub(crate) fn layer_len(m: usize, layer: LayerIndex) -> u64 {
    let i = layer.get();
    let c = binomial(m, i) as u64;
    if 2 * i == m {
        c
    } else {
        2 * c
    }
}

/// Colex-rank unranking: the `rank`-th mask with `k` bits among `m`.
fn unrank_colex(m: usize, k: usize, mut rank: u64) -> u64 {
    let mut bits = 0u64;
    let mut top = m;
    for remaining in (1..=k).rev() {
        // largest c with C(c, remaining) <= rank
        let mut c = top - 1;
        while binomial(c, remaining) as u64 > rank {
            c -= 1;
        }
        bits |= 1 << c;
        rank -= binomial(c, remaining) as u64;
        top = c;
    }
    bits
}

/// The coalition at `position` of the canonical enumeration of `layer`.
pub(crate) fn layer_member(m: usize, layer: LayerIndex, position: u64) -> Coalition {
    let i = layer.get();
    if 2 * i == m {
        Coalition::from_bits_unchecked(m, unrank_colex(m, i, position))
    } else {
        let c = Coalition::from_bits_unchecked(m, unrank_colex(m, i, position / 2));
        if position.is_multiple_of(2) {
            c
        } else {
            c.complement()
        }
    }
}

/// Every coalition of a layer exactly once, in canonical order: size-`i`
/// masks in colexicographic order, each followed by its complement unless
/// `i = M/2`.
pub fn enumerate_layer(m: usize, layer: usize) -> Result<Vec<Coalition>> {
    let layer = LayerIndex::new(m, layer)?;
    Ok(enumerate(m, layer))
}

pub(crate) fn enumerate(m: usize, layer: LayerIndex) -> Vec<Coalition> {
    let i = layer.get();
    let paired = 2 * i != m;
    let mut out = Vec::with_capacity(layer_len(m, layer) as usize);
    let limit = full_mask(m);
    // Gosper's hack walks k-bit masks in increasing order, i.e. colex order.
    let mut bits: u64 = (1u64 << i) - 1;
    loop {
        let c = Coalition::from_bits_unchecked(m, bits);
        out.push(c);
        if paired {
            out.push(c.complement());
        }
        let low = bits & bits.wrapping_neg();
        let ripple = bits.wrapping_add(low);
        if ripple == 0 || ripple > limit {
            break;
        }
        let next = (((ripple ^ bits) >> 2) / low) | ripple;
        if next > limit {
            break;
        }
        bits = next;
    }
    out
}

/// Cumulative budgets at which the first `i` layers are exactly complete.
pub fn complete_layer_budgets(m: usize) -> Result<Vec<(LayerIndex, u64)>> {
    let mut total = 0u64;
    Ok(LayerIndex::all(m)?
        .map(|layer| {
            total += layer_len(m, layer);
            (layer, total)
        })
        .collect())
}

/// `2^M - 2`, the number of proper coalitions.
pub fn max_budget(m: usize) -> Result<u64> {
    check_m(m)?;
    Ok(full_mask(m) - 1)
}
