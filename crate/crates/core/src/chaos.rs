//! Truncated Wiener chaos: probabilists' Hermite polynomials, enumeration of
//! the multi-index set `J_{I,J,K}` and evaluation of the Wick features
//! `ξ_α = Π h_{α_ij}(ξ_ij) / √(α!)`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Largest feature count `enumerate_indices` will materialise.
pub const MAX_FEATURES: u64 = 1 << 24;

/// Probabilists' Hermite polynomial `h_k(x)` via the three-term recurrence
/// `h_{k+1} = x h_k − k h_{k−1}`. Accurate for any order the feature
/// counts allow in practice (tested to k = 10).
pub fn hermite(k: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = x;
    for m in 1..k {
        let next = x * cur - m as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Sparse multi-index `α`: sorted `((i, j), α_ij)` entries with `α_ij > 0`,
/// 1-based `i` (noise component) and `j` (temporal mode).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    entries: Vec<((u32, u32), u32)>,
}

impl MultiIndex {
    pub fn zero() -> Self {
        Self { entries: Vec::new() }
    }

    /// Builds from arbitrary entries; zeros are dropped and duplicates summed.
    pub fn from_entries(entries: impl IntoIterator<Item = ((u32, u32), u32)>) -> Self {
        let mut v: Vec<((u32, u32), u32)> = Vec::new();
        for (ij, a) in entries {
            if a == 0 {
                continue;
            }
            match v.iter_mut().find(|(k, _)| *k == ij) {
                Some((_, existing)) => *existing += a,
                None => v.push((ij, a)),
            }
        }
        v.sort_unstable();
        Self { entries: v }
    }

    pub fn entries(&self) -> &[((u32, u32), u32)] {
        &self.entries
    }

    /// `|α| = Σ α_ij`.
    pub fn order(&self) -> u32 {
        self.entries.iter().map(|(_, a)| a).sum()
    }

    pub fn get(&self, i: u32, j: u32) -> u32 {
        self.entries.iter().find(|(k, _)| *k == (i, j)).map_or(0, |(_, a)| *a)
    }

    /// `α! = Π α_ij!`.
    pub fn factorial(&self) -> f64 {
        self.entries
            .iter()
            .map(|(_, a)| (1..=*a).map(f64::from).product::<f64>())
            .product()
    }

    fn flattened(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().flat_map(|((i, j), a)| [*i, *j, *a])
    }
}

/// Canonical order: ascending `|α|`, then lexicographic on the flattened
/// `(i, j, α_ij)` sequence.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| self.flattened().cmp(other.flattened()))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `{}` for the zero index, else `{(i,j):a,...}`. This text is what the
/// ordering digest hashes.
impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (n, ((i, j), a)) in self.entries.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "({i},{j}):{a}")?;
        }
        f.write_str("}")
    }
}

/// Truncation `(I, J, K)` of the chaos index set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChaosBasisSpec {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl ChaosBasisSpec {
    pub fn new(i: usize, j: usize, k: usize) -> Result<Self> {
        if i == 0 || j == 0 {
            return Err(Error::InvalidParameter(format!(
                "chaos basis needs I, J >= 1 (got I={i}, J={j})"
            )));
        }
        Ok(Self { i, j, k })
    }

    /// `|J_{I,J,K}| = C(IJ + K, K)`, or `None` on overflow.
    pub fn count(&self) -> Option<u64> {
        let m = (self.i as u64).checked_mul(self.j as u64)?;
        binomial(m.checked_add(self.k as u64)?, self.k as u64)
    }
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for t in 0..k {
        // exact at every step: acc·(n−t)/(t+1) = C(n, t+1)·...
        acc = acc.checked_mul((n - t) as u128)? / (t as u128 + 1);
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// Complete, duplicate-free, canonically ordered enumeration of `J_{I,J,K}`.
pub fn enumerate_indices(spec: &ChaosBasisSpec) -> Result<Vec<MultiIndex>> {
    let too_large = |detail: String| Error::ChaosTooLarge {
        i: spec.i,
        j: spec.j,
        k: spec.k,
        detail,
    };
    let count = spec.count().ok_or_else(|| too_large("count overflows u64".into()))?;
    if count > MAX_FEATURES {
        return Err(too_large(format!("{count} features exceeds the limit {MAX_FEATURES}")));
    }
    let slots = spec.i * spec.j;
    let mut out = Vec::with_capacity(count as usize);
    let mut dense = vec![0u32; slots];
    fill(&mut dense, 0, spec.k as u32, spec.j, &mut out);
    out.sort_unstable();
    debug_assert_eq!(out.len() as u64, count);
    Ok(out)
}

fn fill(dense: &mut [u32], pos: usize, budget: u32, j: usize, out: &mut Vec<MultiIndex>) {
    if pos == dense.len() {
        out.push(MultiIndex::from_entries(
            dense
                .iter()
                .enumerate()
                .map(|(s, &a)| (((s / j) as u32 + 1, (s % j) as u32 + 1), a)),
        ));
        return;
    }
    for a in 0..=budget {
        dense[pos] = a;
        fill(dense, pos + 1, budget - a, j, out);
    }
    dense[pos] = 0;
}

/// Hex SHA-256 of the canonical ordering, one index per line.
pub fn ordering_digest(ordering: &[MultiIndex]) -> String {
    let mut h = Sha256::new();
    for a in ordering {
        h.update(a.to_string().as_bytes());
        h.update(b"\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Wick features of one noise realisation, aligned with the canonical
/// ordering of the basis.
#[derive(Debug, Clone, PartialEq)]
pub struct WickFeatureVector {
    pub basis: ChaosBasisSpec,
    pub ordering: Vec<MultiIndex>,
    pub values: Vec<f64>,
}

impl WickFeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn digest(&self) -> String {
        ordering_digest(&self.ordering)
    }
}

/// Precomputed enumeration for repeated feature evaluation.
#[derive(Debug, Clone)]
pub struct WickBasis {
    spec: ChaosBasisSpec,
    ordering: Vec<MultiIndex>,
    norms: Vec<f64>,
}

impl WickBasis {
    pub fn new(spec: ChaosBasisSpec) -> Result<Self> {
        let ordering = enumerate_indices(&spec)?;
        let norms = ordering.iter().map(|a| a.factorial().sqrt().recip()).collect();
        Ok(Self { spec, ordering, norms })
    }

    pub fn spec(&self) -> &ChaosBasisSpec {
        &self.spec
    }

    pub fn ordering(&self) -> &[MultiIndex] {
        &self.ordering
    }

    pub fn len(&self) -> usize {
        self.ordering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordering.is_empty()
    }

    /// Writes `ξ_α` for every α into `out`.
    pub fn eval_into(&self, xi: &[f64], out: &mut [f64]) -> Result<()> {
        let slots = self.spec.i * self.spec.j;
        if xi.len() != slots {
            return Err(Error::LengthMismatch {
                expected: slots,
                found: xi.len(),
            });
        }
        let kmax = self.spec.k;
        // h_a(ξ_s) for a <= K, per slot.
        let mut table = vec![0.0; slots * (kmax + 1)];
        for (s, &x) in xi.iter().enumerate() {
            for a in 0..=kmax {
                table[s * (kmax + 1) + a] = hermite(a, x);
            }
        }
        for ((alpha, norm), o) in self.ordering.iter().zip(&self.norms).zip(out.iter_mut()) {
            let mut v = *norm;
            for ((i, j), a) in alpha.entries() {
                let s = (*i as usize - 1) * self.spec.j + (*j as usize - 1);
                v *= table[s * (kmax + 1) + *a as usize];
            }
            *o = v;
        }
        Ok(())
    }

    pub fn eval(&self, xi: &[f64]) -> Result<WickFeatureVector> {
        let mut values = vec![0.0; self.len()];
        self.eval_into(xi, &mut values)?;
        Ok(WickFeatureVector {
            basis: self.spec,
            ordering: self.ordering.clone(),
            values,
        })
    }
}

/// Evaluates the Wick features for the Gaussian integrals `xi` (length `I·J`,
/// flattened as `(i−1)·J + (j−1)`).
pub fn wick_features(xi: &[f64], spec: &ChaosBasisSpec) -> Result<WickFeatureVector> {
    WickBasis::new(*spec)?.eval(xi)
}
