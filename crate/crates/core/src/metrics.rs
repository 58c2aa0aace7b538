//! Bit-level accounting: confusion counts, bit mappings and error rates.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, param, Error, Result};
use crate::rng::{stream, Domain};

/// Pre-FEC BER below which hard-decision FEC is assumed to decode.
pub const HD_FEC_THRESHOLD: f64 = 4.5e-3;

/// `counts[a·M + b]`: times symbol `a` was sent and `b` decided.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    size: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(size: usize) -> Self {
        ConfusionMatrix {
            size,
            counts: vec![0; size * size],
        }
    }

    pub fn from_counts(size: usize, counts: Vec<u64>) -> Result<Self> {
        check_len("confusion counts", size * size, counts.len())?;
        Ok(ConfusionMatrix { size, counts })
    }

    pub fn from_pairs(size: usize, truth: &[usize], decided: &[usize]) -> Result<Self> {
        let mut cm = ConfusionMatrix::new(size);
        cm.record(truth, decided)?;
        Ok(cm)
    }

    pub fn record(&mut self, truth: &[usize], decided: &[usize]) -> Result<()> {
        check_len("decisions", truth.len(), decided.len())?;
        if truth.iter().chain(decided).any(|s| *s >= self.size) {
            return Err(param("symbol index outside the confusion matrix"));
        }
        for (a, b) in truth.iter().zip(decided) {
            self.counts[a * self.size + b] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        check_len("confusion size", self.size, other.size)?;
        for (c, o) in self.counts.iter_mut().zip(&other.counts) {
            *c += o;
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, sent: usize, decided: usize) -> u64 {
        self.counts[sent * self.size + decided]
    }

    pub fn row_sum(&self, sent: usize) -> u64 {
        self.counts[sent * self.size..(sent + 1) * self.size].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn symbol_errors(&self) -> u64 {
        self.total() - (0..self.size).map(|a| self.get(a, a)).sum::<u64>()
    }

    /// One line per transmitted symbol, counts separated by commas.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for a in 0..self.size {
            for b in 0..self.size {
                if b > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{}", self.get(a, b));
            }
            s.push('\n');
        }
        s
    }
}

/// Bijective assignment of `log2 M`-bit labels to symbols.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BitMapping {
    labels: Vec<u32>,
}

impl BitMapping {
    pub fn new(labels: Vec<u32>) -> Result<Self> {
        let m = labels.len();
        if m < 2 || !m.is_power_of_two() {
            return Err(param("bit mappings need a power-of-two alphabet of at least 2"));
        }
        let mut seen = vec![false; m];
        for &l in &labels {
            if l as usize >= m || seen[l as usize] {
                return Err(param("bit mapping must be a bijection onto all labels"));
            }
            seen[l as usize] = true;
        }
        Ok(BitMapping { labels })
    }

    pub fn identity(m: usize) -> Result<Self> {
        BitMapping::new((0..m as u32).collect())
    }

    /// Binary-reflected Gray code in symbol order.
    pub fn gray(m: usize) -> Result<Self> {
        BitMapping::new((0..m as u32).map(|i| i ^ (i >> 1)).collect())
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn bits(&self) -> u32 {
        self.labels.len().trailing_zeros()
    }

    pub fn label(&self, symbol: usize) -> u32 {
        self.labels[symbol]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// XORs every label with `mask`; Hamming distances are unchanged.
    pub fn xor_all(&self, mask: u32) -> Result<Self> {
        BitMapping::new(self.labels.iter().map(|l| l ^ mask).collect())
    }
}

fn hamming(a: u32, b: u32) -> u64 {
    (a ^ b).count_ones() as u64
}

/// Σ counts[a][b] · hamming(map[a], map[b]).
pub fn bit_errors(cm: &ConfusionMatrix, map: &BitMapping) -> Result<u64> {
    check_len("bit mapping", cm.size(), map.size())?;
    let m = cm.size();
    let mut e = 0;
    for a in 0..m {
        for b in 0..m {
            e += cm.get(a, b) * hamming(map.label(a), map.label(b));
        }
    }
    Ok(e)
}

pub fn ber_with_mapping(cm: &ConfusionMatrix, map: &BitMapping) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Degenerate("confusion matrix has no counts"));
    }
    Ok(bit_errors(cm, map)? as f64 / (map.bits() as f64 * total as f64))
}

/// Local-search settings for [`optimize_bit_mapping`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingSearch {
    /// Random starting permutations tried after the identity and Gray starts.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for MappingSearch {
    fn default() -> Self {
        MappingSearch { restarts: 16, seed: 0 }
    }
}

fn permutations(m: usize) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, used: &mut [bool], out: &mut Vec<Vec<u32>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v as u32);
                rec(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; m], &mut out);
    out
}

/// Best-improvement pairwise-swap descent from `labels`; returns its cost.
fn descend(sym: &[u64], m: usize, labels: &mut [u32]) -> u64 {
    let cost = |labels: &[u32]| -> u64 {
        let mut c = 0;
        for a in 0..m {
            for b in a + 1..m {
                c += sym[a * m + b] * hamming(labels[a], labels[b]);
            }
        }
        c
    };
    let mut current = cost(labels);
    loop {
        let mut best: Option<(i64, usize, usize)> = None;
        for a in 0..m {
            for b in a + 1..m {
                let (la, lb) = (labels[a], labels[b]);
                let mut delta: i64 = 0;
                for x in 0..m {
                    if x == a || x == b {
                        continue;
                    }
                    let lx = labels[x];
                    let da = hamming(lb, lx) as i64 - hamming(la, lx) as i64;
                    delta += sym[a * m + x] as i64 * da - sym[b * m + x] as i64 * da;
                }
                if delta < 0 && best.is_none_or(|(d, _, _)| delta < d) {
                    best = Some((delta, a, b));
                }
            }
        }
        match best {
            Some((delta, a, b)) => {
                labels.swap(a, b);
                current = (current as i64 + delta) as u64;
            }
            None => return current,
        }
    }
}

/// Pairwise-swap local search over label assignments.
///
/// Starts from the identity, the Gray order and `restarts` random
/// permutations (every permutation when `M ≤ 4`). Among equal-cost results
/// the lexicographically smallest label vector is returned.
pub fn optimize_bit_mapping(cm: &ConfusionMatrix, search: &MappingSearch) -> Result<BitMapping> {
    let m = cm.size();
    BitMapping::identity(m)?;
    // Symmetrized off-diagonal counts: errors in either direction cost the same.
    let mut sym = vec![0u64; m * m];
    for a in 0..m {
        for b in 0..m {
            if a != b {
                sym[a * m + b] = cm.get(a, b) + cm.get(b, a);
            }
        }
    }
    let mut starts: Vec<Vec<u32>> = if m <= 4 {
        permutations(m)
    } else {
        vec![BitMapping::identity(m)?.labels, BitMapping::gray(m)?.labels]
    };
    if m > 4 {
        for r in 0..search.restarts {
            let mut p: Vec<u32> = (0..m as u32).collect();
            p.shuffle(&mut stream(search.seed, Domain::Restarts, r as u64));
            starts.push(p);
        }
    }
    let mut best: Option<(u64, Vec<u32>)> = None;
    for mut labels in starts {
        let c = descend(&sym, m, &mut labels);
        let better = match &best {
            None => true,
            Some((bc, bl)) => c < *bc || (c == *bc && labels < *bl),
        };
        if better {
            best = Some((c, labels));
        }
    }
    BitMapping::new(best.map(|(_, l)| l).unwrap_or_default())
}

pub fn ber_pam(truth_bits: &[u8], decided_bits: &[u8]) -> Result<f64> {
    check_len("bit sequence", truth_bits.len(), decided_bits.len())?;
    if truth_bits.is_empty() {
        return Err(Error::Degenerate("no bits to compare"));
    }
    let errors = truth_bits.iter().zip(decided_bits).filter(|(a, b)| a != b).count();
    Ok(errors as f64 / truth_bits.len() as f64)
}

pub fn average_ber(bers: &[f64]) -> Result<f64> {
    if bers.is_empty() {
        return Err(param("cannot average an empty list of error rates"));
    }
    Ok(bers.iter().sum::<f64>() / bers.len() as f64)
}

/// Wilson score interval for `errors` out of `trials` at normal quantile `z`.
pub fn wilson_interval(errors: u64, trials: u64, z: f64) -> Result<(f64, f64)> {
    if trials == 0 || errors > trials {
        return Err(param("Wilson interval needs 0 <= errors <= trials, trials > 0"));
    }
    let n = trials as f64;
    let p = errors as f64 / n;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}
