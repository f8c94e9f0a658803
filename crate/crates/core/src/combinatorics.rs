//! Pair partitions of `{1, ..., k}` and the grouping structures used by the
//! Hermite form of the multiple Wiener term.
//!
//! Positions are stored zero-based; [`PairPartition`]'s `Display` prints them
//! one-based (`"12,34|5"`), matching the usual notation.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Largest `k` accepted by [`enumerate_pair_partitions`].
pub const MAX_PARTITION_K: usize = 12;

/// `r` disjoint unordered pairs plus the `k - 2r` remaining singletons.
///
/// Canonical form: smaller index first in each pair, pairs sorted
/// lexicographically, singles increasing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairPartition {
    pairs: Vec<(usize, usize)>,
    singles: Vec<usize>,
}

impl PairPartition {
    /// Builds a partition from arbitrary-order pairs and singles, validating
    /// that they exactly cover `0..k` and canonicalizing.
    pub fn new(mut pairs: Vec<(usize, usize)>, mut singles: Vec<usize>) -> Result<Self> {
        for p in pairs.iter_mut() {
            if p.0 > p.1 {
                *p = (p.1, p.0);
            }
        }
        pairs.sort_unstable();
        singles.sort_unstable();
        let k = 2 * pairs.len() + singles.len();
        let mut seen = vec![false; k];
        let all = pairs.iter().flat_map(|&(a, b)| [a, b]).chain(singles.iter().copied());
        for idx in all {
            if idx >= k || seen[idx] {
                return Err(invalid("partition", format!("indices do not cover 1..={k} exactly")));
            }
            seen[idx] = true;
        }
        Ok(Self { pairs, singles })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn singles(&self) -> &[usize] {
        &self.singles
    }

    pub fn k(&self) -> usize {
        2 * self.pairs.len() + self.singles.len()
    }

    pub fn r(&self) -> usize {
        self.pairs.len()
    }
}

// Positions are printed one-based. With k >= 10 the two members of a pair are
// joined by '-' so that e.g. "1-11" and "11-1" stay unambiguous.
impl fmt::Display for PairPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sep = if self.k() >= 10 { "-" } else { "" };
        for (n, &(a, b)) in self.pairs.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}{sep}{}", a + 1, b + 1)?;
        }
        f.write_str("|")?;
        for (n, &q) in self.singles.iter().enumerate() {
            if n > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", q + 1)?;
        }
        Ok(())
    }
}

impl FromStr for PairPartition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid("partition", format!("cannot parse `{s}`"));
        let (pairs_str, singles_str) = s.split_once('|').ok_or_else(bad)?;
        let parse_idx = |t: &str| -> Result<usize> {
            let v: usize = t.parse().map_err(|_| bad())?;
            v.checked_sub(1).ok_or_else(bad)
        };
        let mut pairs = Vec::new();
        for tok in pairs_str.split(',').filter(|t| !t.is_empty()) {
            let (a, b) = match tok.split_once('-') {
                Some((a, b)) => (parse_idx(a)?, parse_idx(b)?),
                None if tok.len() == 2 => (parse_idx(&tok[..1])?, parse_idx(&tok[1..])?),
                None => return Err(bad()),
            };
            pairs.push((a, b));
        }
        let singles = singles_str
            .split_whitespace()
            .map(parse_idx)
            .collect::<Result<Vec<_>>>()?;
        PairPartition::new(pairs, singles)
    }
}

/// `k! / (2^r r! (k-2r)!)`, the number of partitions with exactly `r` pairs.
pub fn pair_partition_count(k: usize, r: usize) -> u128 {
    if 2 * r > k {
        return 0;
    }
    let fact = |n: usize| (1..=n as u128).product::<u128>();
    fact(k) / (2u128.pow(r as u32) * fact(r) * fact(k - 2 * r))
}

/// Every canonical partition of `{1..k}` into `r` pairs and `k - 2r`
/// singles, in lexicographic order.
pub fn enumerate_pair_partitions(k: usize, r: usize) -> Result<Vec<PairPartition>> {
    if k == 0 || k > MAX_PARTITION_K {
        return Err(invalid("k", format!("must be in 1..={MAX_PARTITION_K}, got {k}")));
    }
    if r == 0 || 2 * r > k {
        return Err(invalid("r", format!("must be in 1..={}, got {r}", k / 2)));
    }
    let mut out = Vec::with_capacity(pair_partition_count(k, r) as usize);
    let mut pairs = Vec::with_capacity(r);
    let mut used = vec![false; k];
    extend_partitions(k, r, 0, &mut used, &mut pairs, &mut out);
    out.sort_unstable();
    Ok(out)
}

// Each pair is opened by its smaller element; scanning `first` upward keeps
// the pair list lexicographically sorted, so every partition appears once.
fn extend_partitions(
    k: usize,
    r: usize,
    from: usize,
    used: &mut [bool],
    pairs: &mut Vec<(usize, usize)>,
    out: &mut Vec<PairPartition>,
) {
    if pairs.len() == r {
        let singles = (0..k).filter(|&i| !used[i]).collect();
        out.push(PairPartition {
            pairs: pairs.clone(),
            singles,
        });
        return;
    }
    for first in from..k {
        if used[first] {
            continue;
        }
        used[first] = true;
        for second in first + 1..k {
            if used[second] {
                continue;
            }
            used[second] = true;
            pairs.push((first, second));
            extend_partitions(k, r, first + 1, used, pairs, out);
            pairs.pop();
            used[second] = false;
        }
        used[first] = false;
    }
}

/// Grouping of a multi-index `(i_1, ..., i_k)` into blocks of equal values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiplicityStructure {
    distinct_values: Vec<usize>,
    block_positions: Vec<Vec<usize>>,
}

impl MultiplicityStructure {
    /// Distinct values in first-appearance order.
    pub fn distinct_values(&self) -> &[usize] {
        &self.distinct_values
    }

    /// Zero-based positions carrying each distinct value.
    pub fn block_positions(&self) -> &[Vec<usize>] {
        &self.block_positions
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.block_positions.iter().map(Vec::len).collect()
    }

    pub fn k(&self) -> usize {
        self.block_positions.iter().map(Vec::len).sum()
    }
}

pub fn multiplicity_structure(mi: &[usize]) -> MultiplicityStructure {
    let mut distinct_values: Vec<usize> = Vec::new();
    let mut block_positions: Vec<Vec<usize>> = Vec::new();
    for (pos, &v) in mi.iter().enumerate() {
        match distinct_values.iter().position(|&d| d == v) {
            Some(b) => block_positions[b].push(pos),
            None => {
                distinct_values.push(v);
                block_positions.push(vec![pos]);
            }
        }
    }
    MultiplicityStructure {
        distinct_values,
        block_positions,
    }
}

/// For each multiplicity block, the distinct `j` values and their counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JGrouping {
    blocks: Vec<Vec<(usize, usize)>>,
}

impl JGrouping {
    /// `blocks()[l]` lists `(j value, count)` for block `l`, first-appearance order.
    pub fn blocks(&self) -> &[Vec<(usize, usize)>] {
        &self.blocks
    }
}

pub fn j_grouping(ms: &MultiplicityStructure, jx: &[usize]) -> Result<JGrouping> {
    if jx.len() != ms.k() {
        return Err(Error::ShapeMismatch(format!(
            "j-index has length {}, multi-index has length {}",
            jx.len(),
            ms.k()
        )));
    }
    let blocks = ms
        .block_positions
        .iter()
        .map(|positions| {
            let mut groups: Vec<(usize, usize)> = Vec::new();
            for &pos in positions {
                let j = jx[pos];
                match groups.iter_mut().find(|g| g.0 == j) {
                    Some(g) => g.1 += 1,
                    None => groups.push((j, 1)),
                }
            }
            groups
        })
        .collect();
    Ok(JGrouping { blocks })
}
