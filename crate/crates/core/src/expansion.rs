//! Multiple Wiener terms `J''[φ_{j_1}···φ_{j_k}]^{(i_1...i_k)}` and truncated
//! expansions of iterated Itô integrals.
//!
//! A term is a polynomial in the Gaussian variables
//! `ζ_j^{(i)} = ∫_t^T φ_j(τ) dw_τ^{(i)}` (with `dw^{(0)} = dτ`). It can be
//! evaluated three ways, which agree identically:
//!
//! * [`term_partition`]: the product `∏ ζ_{j_l}^{(i_l)}` corrected by an
//!   alternating sum over pair partitions, each pair contributing
//!   `1{i_a = i_b ≠ 0} · 1{j_a = j_b}`;
//! * [`term_hermite`]: a product of Hermite polynomials, one per group of
//!   equal `(i, j)` with `i ≠ 0` (plain powers for `i = 0`);
//! * [`term_recurrence`]: peel off the last factor,
//!   `J''[..., k] = ζ_k · J''[..., k-1] - Σ_l 1{i_l = i_k ≠ 0} 1{j_l = j_k} J''[... without l, k]`.
//!
//! [`approximate_integral`] sums `C_{j_k...j_1} · J''` over the truncation grid.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::basis::{gauss_legendre, integrate_basis, BasisKind, Interval};
use crate::basis::eval_basis_upto;
use crate::coefficients::{for_each_index, CoefficientTensor, MAX_KERNEL_K};
use crate::combinatorics::{enumerate_pair_partitions, j_grouping, multiplicity_structure, PairPartition};
use crate::error::{invalid, Error, Result};
use crate::hermite::{hermite, HermiteDegree};
use crate::rng::normal_at;
use crate::scalar::Real;

/// Largest tensor product `∏(p_l + 1)` accepted by expansions.
pub const MAX_TRUNCATION_ENTRIES: u128 = 10_000_000;

/// `(i_1, ..., i_k)`: which Wiener component drives each integration (0 = time).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Result<Self> {
        if entries.is_empty() || entries.len() > MAX_KERNEL_K {
            return Err(invalid("mi", format!("length must be in 1..={MAX_KERNEL_K}, got {}", entries.len())));
        }
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }

    /// Largest Wiener component referenced.
    pub fn max_component(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// Nonzero and pairwise distinct: the case where the truncation error is
    /// exactly the Parseval residual.
    pub fn is_pairwise_distinct_nonzero(&self) -> bool {
        self.0.iter().all(|&i| i != 0)
            && self.0.iter().enumerate().all(|(a, x)| self.0[a + 1..].iter().all(|y| y != x))
    }
}

impl FromStr for MultiIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let entries = s
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| invalid("mi", format!("cannot parse `{s}`"))))
            .collect::<Result<Vec<_>>>()?;
        MultiIndex::new(entries)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// The values `ζ_j^{(i)}` for `i = 0..=m`, `j = 0..=p`.
///
/// Row `i = 0` is deterministic (`∫ φ_j dτ`); rows `i >= 1` hold independent
/// standard normals, either sampled or extracted from a simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianTable<T> {
    m: usize,
    p: usize,
    interval: Interval<T>,
    basis: BasisKind,
    values: Vec<T>,
}

impl<T: Real> GaussianTable<T> {
    /// Builds a table from the random rows `i = 1..=m`, each of length `p + 1`.
    pub fn from_rows(rows: Vec<Vec<T>>, basis: BasisKind, interval: Interval<T>) -> Result<Self> {
        let m = rows.len();
        if m == 0 {
            return Err(invalid("m", "need at least one Wiener component"));
        }
        let width = rows[0].len();
        if width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::ShapeMismatch("table rows must be non-empty and equally long".into()));
        }
        let p = width - 1;
        let mut values = Vec::with_capacity((m + 1) * width);
        values.extend((0..=p).map(|j| integrate_basis(basis, j, &interval)));
        for row in rows {
            values.extend(row);
        }
        Ok(Self {
            m,
            p,
            interval,
            basis,
            values,
        })
    }

    pub(crate) fn from_flat(m: usize, p: usize, basis: BasisKind, interval: Interval<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), (m + 1) * (p + 1));
        Self {
            m,
            p,
            interval,
            basis,
            values,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn interval(&self) -> &Interval<T> {
        &self.interval
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    /// `ζ_j^{(i)}`; panics outside the table (use [`GaussianTable::try_get`]).
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * (self.p + 1) + j]
    }

    pub fn try_get(&self, i: usize, j: usize) -> Result<T> {
        if i > self.m || j > self.p {
            return Err(Error::ShapeMismatch(format!(
                "entry ({i}, {j}) outside table with m = {}, p = {}",
                self.m, self.p
            )));
        }
        Ok(self.get(i, j))
    }

    /// Row `i` as a slice of length `p + 1`.
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * (self.p + 1)..(i + 1) * (self.p + 1)]
    }

    fn check(&self, mi: &MultiIndex, jx: &[usize]) -> Result<()> {
        if jx.len() != mi.k() {
            return Err(Error::ShapeMismatch(format!(
                "j-index length {} differs from multi-index length {}",
                jx.len(),
                mi.k()
            )));
        }
        if mi.max_component() > self.m {
            return Err(Error::ShapeMismatch(format!(
                "component {} exceeds table dimension m = {}",
                mi.max_component(),
                self.m
            )));
        }
        if let Some(&j) = jx.iter().find(|&&j| j > self.p) {
            return Err(Error::ShapeMismatch(format!("basis index {j} exceeds table p = {}", self.p)));
        }
        Ok(())
    }
}

/// Samples a table with entry `(i, j)` keyed on `(seed, i, j)`.
pub fn sample_table<T: Real>(seed: u64, m: usize, p: usize, basis: BasisKind, interval: Interval<T>) -> Result<GaussianTable<T>> {
    if m == 0 {
        return Err(invalid("m", "need at least one Wiener component"));
    }
    let rows = (1..=m)
        .map(|i| (0..=p).map(|j| T::lit(normal_at(seed, &[i as u64, j as u64]))).collect())
        .collect();
    GaussianTable::from_rows(rows, basis, interval)
}

/// Which algebraic route evaluates the multiple Wiener term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TermForm {
    Partition,
    #[default]
    Hermite,
    Recurrence,
}

impl fmt::Display for TermForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TermForm::Partition => "partition",
            TermForm::Hermite => "hermite",
            TermForm::Recurrence => "recurrence",
        })
    }
}

impl FromStr for TermForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "partition" => Ok(TermForm::Partition),
            "hermite" => Ok(TermForm::Hermite),
            "recurrence" => Ok(TermForm::Recurrence),
            other => Err(invalid("form", format!("unknown form `{other}` (expected partition|hermite|recurrence)"))),
        }
    }
}

/// Term evaluator for a fixed `k`, caching the pair partitions.
#[derive(Debug, Clone)]
pub struct TermEvaluator {
    k: usize,
    form: TermForm,
    partitions: Vec<Vec<PairPartition>>,
}

impl TermEvaluator {
    pub fn new(k: usize, form: TermForm) -> Result<Self> {
        if k == 0 || k > MAX_KERNEL_K {
            return Err(invalid("k", format!("must be in 1..={MAX_KERNEL_K}, got {k}")));
        }
        let partitions = if form == TermForm::Partition {
            (1..=k / 2).map(|r| enumerate_pair_partitions(k, r)).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Self { k, form, partitions })
    }

    pub fn form(&self) -> TermForm {
        self.form
    }

    pub fn eval<T: Real>(&self, mi: &MultiIndex, jx: &[usize], tab: &GaussianTable<T>) -> Result<T> {
        if mi.k() != self.k {
            return Err(Error::ShapeMismatch(format!("evaluator built for k = {}, got {}", self.k, mi.k())));
        }
        tab.check(mi, jx)?;
        Ok(match self.form {
            TermForm::Partition => partition_form(&self.partitions, mi.entries(), jx, tab),
            TermForm::Hermite => hermite_form(mi.entries(), jx, tab),
            TermForm::Recurrence => recurrence_form(mi.entries(), jx, tab),
        })
    }
}

fn partition_form<T: Real>(partitions: &[Vec<PairPartition>], mi: &[usize], jx: &[usize], tab: &GaussianTable<T>) -> T {
    let zeta = |l: usize| tab.get(mi[l], jx[l]);
    let mut total: T = (0..mi.len()).map(zeta).fold(T::one(), |a, b| a * b);
    for (r, parts) in partitions.iter().enumerate() {
        let mut sum = T::zero();
        for part in parts {
            let paired = part
                .pairs()
                .iter()
                .all(|&(a, b)| mi[a] == mi[b] && mi[a] != 0 && jx[a] == jx[b]);
            if paired {
                sum += part.singles().iter().map(|&q| zeta(q)).fold(T::one(), |a, b| a * b);
            }
        }
        if r % 2 == 0 {
            total -= sum;
        } else {
            total += sum;
        }
    }
    total
}

fn hermite_form<T: Real>(mi: &[usize], jx: &[usize], tab: &GaussianTable<T>) -> T {
    let ms = multiplicity_structure(mi);
    let grouping = j_grouping(&ms, jx).expect("lengths checked");
    let mut product = T::one();
    for (&i, groups) in ms.distinct_values().iter().zip(grouping.blocks()) {
        for &(j, n) in groups {
            let z = tab.get(i, j);
            product *= if i == 0 {
                z.powi(n as i32)
            } else {
                hermite(HermiteDegree::try_from(n).expect("n <= 12"), z)
            };
        }
    }
    product
}

fn recurrence_form<T: Real>(mi: &[usize], jx: &[usize], tab: &GaussianTable<T>) -> T {
    let full: u16 = ((1u32 << mi.len()) - 1) as u16;
    let mut memo: HashMap<u16, T> = HashMap::new();
    recurrence_memo(full, mi, jx, tab, &mut memo)
}

// `mask` selects the retained positions, in their original order.
fn recurrence_memo<T: Real>(mask: u16, mi: &[usize], jx: &[usize], tab: &GaussianTable<T>, memo: &mut HashMap<u16, T>) -> T {
    if mask == 0 {
        return T::one();
    }
    if let Some(&v) = memo.get(&mask) {
        return v;
    }
    let last = 15 - mask.leading_zeros() as usize;
    let rest = mask & !(1 << last);
    let mut value = tab.get(mi[last], jx[last]) * recurrence_memo(rest, mi, jx, tab, memo);
    if mi[last] != 0 {
        for l in 0..last {
            if rest & (1 << l) != 0 && mi[l] == mi[last] && jx[l] == jx[last] {
                value -= recurrence_memo(rest & !(1 << l), mi, jx, tab, memo);
            }
        }
    }
    memo.insert(mask, value);
    value
}

/// `J''` via the pair-partition sum.
pub fn term_partition<T: Real>(mi: &MultiIndex, jx: &[usize], tab: &GaussianTable<T>) -> Result<T> {
    TermEvaluator::new(mi.k(), TermForm::Partition)?.eval(mi, jx, tab)
}

/// `J''` via products of Hermite polynomials.
pub fn term_hermite<T: Real>(mi: &MultiIndex, jx: &[usize], tab: &GaussianTable<T>) -> Result<T> {
    tab.check(mi, jx)?;
    Ok(hermite_form(mi.entries(), jx, tab))
}

/// `J''` via the peel-off-the-last-factor recursion.
pub fn term_recurrence<T: Real>(mi: &MultiIndex, jx: &[usize], tab: &GaussianTable<T>) -> Result<T> {
    tab.check(mi, jx)?;
    Ok(recurrence_form(mi.entries(), jx, tab))
}

fn check_expansion<T: Real>(tensor: &CoefficientTensor<T>, mi: &MultiIndex, tab: &GaussianTable<T>) -> Result<()> {
    if tensor.k() != mi.k() {
        return Err(Error::ShapeMismatch(format!(
            "tensor has k = {}, multi-index has length {}",
            tensor.k(),
            mi.k()
        )));
    }
    if tab.p() < tensor.max_index() {
        return Err(Error::ShapeMismatch(format!(
            "table p = {} below tensor truncation {:?}",
            tab.p(),
            tensor.truncation()
        )));
    }
    if tab.basis() != tensor.basis() {
        return Err(Error::ShapeMismatch(format!(
            "table uses {} basis, tensor uses {}",
            tab.basis(),
            tensor.basis()
        )));
    }
    if mi.max_component() > tab.m() {
        return Err(Error::ShapeMismatch(format!(
            "component {} exceeds table dimension m = {}",
            mi.max_component(),
            tab.m()
        )));
    }
    Ok(())
}

/// `Σ_{j <= p} C_{j_k...j_1} · J''[φ_{j_1}···φ_{j_k}]^{(i_1...i_k)}`, summed in
/// lexicographic order of `(j_1..j_k)`.
///
/// The table must use the tensor's basis and be drawn on an interval of the
/// same length (coefficients of elapsed-time weights are shift invariant).
pub fn approximate_integral<T: Real>(
    tensor: &CoefficientTensor<T>,
    mi: &MultiIndex,
    tab: &GaussianTable<T>,
    form: TermForm,
) -> Result<T> {
    let eval = TermEvaluator::new(mi.k(), form)?;
    approximate_with(&eval, tensor, mi, tab)
}

/// [`approximate_integral`] with a prepared evaluator.
pub fn approximate_with<T: Real>(
    eval: &TermEvaluator,
    tensor: &CoefficientTensor<T>,
    mi: &MultiIndex,
    tab: &GaussianTable<T>,
) -> Result<T> {
    check_expansion(tensor, mi, tab)?;
    let mut total = T::zero();
    let mut failure = None;
    let values = tensor.values();
    let mut offset = 0;
    for_each_index(tensor.truncation(), |jx| {
        let c = values[offset];
        offset += 1;
        if failure.is_some() {
            return;
        }
        match eval.eval(mi, jx, tab) {
            Ok(term) => total += c * term,
            Err(e) => failure = Some(e),
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

/// Mean-square truncation error `‖K‖² - Σ C²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseEstimate<T> {
    pub value: T,
    /// `true` when the multi-index is nonzero and pairwise distinct, where
    /// the value is the exact mean-square error; otherwise it is only a
    /// surrogate for an inequality with an unspecified constant.
    pub exact: bool,
}

pub fn mse_estimate<T: Real>(tensor: &CoefficientTensor<T>, mi: &MultiIndex, kernel_norm_sq: T) -> Result<MseEstimate<T>> {
    if tensor.k() != mi.k() {
        return Err(Error::ShapeMismatch(format!(
            "tensor has k = {}, multi-index has length {}",
            tensor.k(),
            mi.k()
        )));
    }
    let captured = tensor.sum_of_squares();
    let slack = T::lit(1e-9).max(T::epsilon() * T::lit(1e3)) * kernel_norm_sq.abs().max(T::one());
    if kernel_norm_sq < captured - slack {
        return Err(invalid(
            "kernel_norm_sq",
            format!("‖K‖² = {kernel_norm_sq} is below Σ C² = {captured}"),
        ));
    }
    Ok(MseEstimate {
        value: kernel_norm_sq - captured,
        exact: mi.is_pairwise_distinct_nonzero(),
    })
}

/// Exact change of basis from `ratio` consecutive equal child intervals to
/// their union, for the shifted Legendre system.
///
/// `φ_j` of the parent restricted to a child is a polynomial of degree `j`,
/// hence a combination of the child's `φ_0..φ_j`; so the parent's
/// `ζ_0..ζ_p` are exact linear combinations of the children's.
#[derive(Debug, Clone)]
pub struct LegendreCoarsener<T> {
    ratio: usize,
    p: usize,
    /// `ratio` blocks of `(p+1) × (p+1)`, row = parent index.
    blocks: Vec<T>,
}

impl<T: Real> LegendreCoarsener<T> {
    pub fn new(ratio: usize, p: usize) -> Result<Self> {
        if ratio == 0 {
            return Err(invalid("ratio", "must be positive"));
        }
        let w = p + 1;
        let parent = Interval::new(0.0f64, ratio as f64)?;
        let rule = gauss_legendre::<f64>(w)?;
        let mut blocks = vec![T::zero(); ratio * w * w];
        let mut phi_parent = vec![0.0; w];
        let mut phi_child = vec![0.0; w];
        for c in 0..ratio {
            let child = Interval::new(c as f64, c as f64 + 1.0)?;
            let (nodes, weights) = rule.mapped(&child);
            for (&x, &wt) in nodes.iter().zip(&weights) {
                eval_basis_upto(BasisKind::LegendreShifted, x, &parent, &mut phi_parent);
                eval_basis_upto(BasisKind::LegendreShifted, x, &child, &mut phi_child);
                for j in 0..w {
                    for jc in 0..=j {
                        let slot = &mut blocks[(c * w + j) * w + jc];
                        *slot += T::lit(wt * phi_parent[j] * phi_child[jc]);
                    }
                }
            }
        }
        Ok(Self { ratio, p, blocks })
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    /// `children` holds `ratio` consecutive rows of length `p + 1`.
    pub fn merge_row(&self, children: &[T], out: &mut [T]) {
        let w = self.p + 1;
        debug_assert_eq!(children.len(), self.ratio * w);
        out[..w].iter_mut().for_each(|v| *v = T::zero());
        for c in 0..self.ratio {
            let child = &children[c * w..(c + 1) * w];
            for (j, o) in out[..w].iter_mut().enumerate() {
                let row = &self.blocks[(c * w + j) * w..(c * w + j) * w + j + 1];
                *o += row.iter().zip(child).map(|(&a, &b)| a * b).sum::<T>();
            }
        }
    }

    /// Merges `ratio` tables on consecutive equal intervals.
    pub fn merge(&self, children: &[GaussianTable<T>]) -> Result<GaussianTable<T>> {
        if children.len() != self.ratio {
            return Err(Error::ShapeMismatch(format!("expected {} children, got {}", self.ratio, children.len())));
        }
        let first = &children[0];
        let (m, p) = (first.m(), first.p());
        if p != self.p || children.iter().any(|c| c.m() != m || c.p() != p || c.basis() != BasisKind::LegendreShifted) {
            return Err(Error::ShapeMismatch("children must share m, p and the Legendre basis".into()));
        }
        let len = first.interval().length();
        for pair in children.windows(2) {
            let gap = (pair[1].interval().start() - pair[0].interval().end()).abs();
            let dl = (pair[1].interval().length() - len).abs();
            if gap > T::lit(1e-9) * len || dl > T::lit(1e-9) * len {
                return Err(Error::ShapeMismatch("children must be consecutive intervals of equal length".into()));
            }
        }
        let interval = Interval::new(first.interval().start(), children[self.ratio - 1].interval().end())?;
        let w = p + 1;
        let mut values: Vec<T> = (0..w).map(|j| integrate_basis(BasisKind::LegendreShifted, j, &interval)).collect();
        let mut stacked = Vec::with_capacity(self.ratio * w);
        let mut out = vec![T::zero(); w];
        for i in 1..=m {
            stacked.clear();
            for c in children {
                stacked.extend_from_slice(c.row(i));
            }
            self.merge_row(&stacked, &mut out);
            values.extend_from_slice(&out);
        }
        Ok(GaussianTable::from_flat(m, p, BasisKind::LegendreShifted, interval, values))
    }
}
