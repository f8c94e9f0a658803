//! Volterra kernels, their multiple Fourier coefficients and truncation
//! residuals.
//!
//! The kernel `K(t_1..t_k) = ψ_1(t_1)···ψ_k(t_k)` on `t_1 < ··· < t_k` (zero
//! elsewhere) is only piecewise smooth on the hypercube, so coefficients are
//! computed as nested integrals over the ordered simplex,
//!
//! ```text
//! C = ∫_t^T ψ_k φ_{j_k}(t_k) ∫_t^{t_k} ··· ∫_t^{t_2} ψ_1 φ_{j_1}(t_1) dt_1 ··· dt_k,
//! ```
//!
//! evaluated with a composite Gauss–Legendre rule. Each inner antiderivative
//! is represented by its values at the quadrature nodes and pushed through a
//! spectral integration matrix, so one level costs `O(n²)` per panel instead
//! of the `O(n^k)` of naive nested quadrature. Inner antiderivatives depend
//! only on the leading indices `(j_1..j_l)` and are shared across the tensor.
//!
//! Storage is row-major over `(j_1, ..., j_k)` (last index fastest). The
//! traditional subscript order `C_{j_k...j_1}` is only a naming convention.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::basis::{eval_basis_upto, gauss_legendre, legendre_p, BasisKind, Interval, MAX_QUADRATURE_POINTS};
use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Largest kernel multiplicity.
pub const MAX_KERNEL_K: usize = 12;
/// Largest number of tensor entries.
pub const MAX_TENSOR_ENTRIES: u128 = 10_000_000;
/// Archive format version written by [`CoefficientTensor::to_json`].
pub const TENSOR_FORMAT_VERSION: u32 = 1;

/// One weight function `ψ_l` on `[t, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec<T> {
    /// `ψ(τ) = c`.
    Constant { c: T },
    /// `ψ(τ) = scale · (τ - t)^q`.
    PowerOfElapsed { q: u32, scale: T },
    /// Piecewise-linear interpolation of `(τ, value)` nodes, constant beyond the ends.
    Tabulated { nodes: Vec<(T, T)> },
}

impl<T: Real> WeightSpec<T> {
    pub fn constant(c: T) -> Self {
        WeightSpec::Constant { c }
    }

    pub fn unit() -> Self {
        WeightSpec::Constant { c: T::one() }
    }

    pub fn eval(&self, tau: T, iv: &Interval<T>) -> T {
        match self {
            WeightSpec::Constant { c } => *c,
            WeightSpec::PowerOfElapsed { q, scale } => *scale * (tau - iv.start()).powi(*q as i32),
            WeightSpec::Tabulated { nodes } => interpolate(nodes, tau),
        }
    }

    fn squared(&self) -> SquaredWeight<'_, T> {
        SquaredWeight(self)
    }

    /// Interior break points where the weight is not smooth.
    fn breakpoints(&self) -> Vec<T> {
        match self {
            WeightSpec::Tabulated { nodes } => nodes.iter().map(|&(tau, _)| tau).collect(),
            _ => Vec::new(),
        }
    }

    fn validate(&self, iv: &Interval<T>) -> Result<()> {
        match self {
            WeightSpec::Constant { c } if !c.is_finite() => Err(invalid("weights", "constant must be finite")),
            WeightSpec::PowerOfElapsed { scale, .. } if !scale.is_finite() => {
                Err(invalid("weights", "scale must be finite"))
            }
            WeightSpec::Tabulated { nodes } => {
                if nodes.is_empty() {
                    return Err(invalid("weights", "tabulated weight needs at least one node"));
                }
                if nodes.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(invalid("weights", "tabulated nodes must be strictly increasing"));
                }
                if nodes.iter().any(|&(tau, v)| !iv.contains(tau) || !v.is_finite()) {
                    return Err(invalid("weights", "tabulated nodes must be finite and lie in the interval"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

struct SquaredWeight<'a, T>(&'a WeightSpec<T>);

impl<T: Real> SquaredWeight<'_, T> {
    fn eval(&self, tau: T, iv: &Interval<T>) -> T {
        let v = self.0.eval(tau, iv);
        v * v
    }
}

fn interpolate<T: Real>(nodes: &[(T, T)], tau: T) -> T {
    let first = nodes[0];
    let last = nodes[nodes.len() - 1];
    if tau <= first.0 {
        return first.1;
    }
    if tau >= last.0 {
        return last.1;
    }
    let idx = nodes.partition_point(|&(x, _)| x <= tau);
    let (x0, y0) = nodes[idx - 1];
    let (x1, y1) = nodes[idx];
    y0 + (y1 - y0) * (tau - x0) / (x1 - x0)
}

impl<T: Real> fmt::Display for WeightSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightSpec::Constant { c } => write!(f, "const:{c}"),
            WeightSpec::PowerOfElapsed { q, scale } => write!(f, "pow:{q}:{scale}"),
            WeightSpec::Tabulated { nodes } => {
                f.write_str("table:")?;
                for (n, (tau, v)) in nodes.iter().enumerate() {
                    if n > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{tau}={v}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses `const`, `const:C`, `pow:Q`, `pow:Q:SCALE` or `table:T0=V0;T1=V1;...`.
impl<T: Real + FromStr> FromStr for WeightSpec<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid("weights", format!("cannot parse weight `{s}`"));
        let num = |t: &str| t.trim().parse::<T>().map_err(|_| bad());
        let s = s.trim();
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        match head {
            "const" | "constant" => {
                let c = if rest.is_empty() { T::one() } else { num(rest)? };
                Ok(WeightSpec::Constant { c })
            }
            "pow" | "power" => {
                let (q, scale) = rest.split_once(':').unwrap_or((rest, ""));
                let q = q.trim().parse::<u32>().map_err(|_| bad())?;
                let scale = if scale.is_empty() { T::one() } else { num(scale)? };
                Ok(WeightSpec::PowerOfElapsed { q, scale })
            }
            "table" => {
                let nodes = rest
                    .split(';')
                    .filter(|t| !t.trim().is_empty())
                    .map(|pair| {
                        let (a, b) = pair.split_once('=').ok_or_else(bad)?;
                        Ok((num(a)?, num(b)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(WeightSpec::Tabulated { nodes })
            }
            _ => Err(bad()),
        }
    }
}

/// A factorized kernel `ψ_1(t_1)···ψ_k(t_k)` on the ordered simplex of `[t, T]^k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec<T> {
    weights: Vec<WeightSpec<T>>,
    interval: Interval<T>,
}

impl<T: Real> KernelSpec<T> {
    pub fn new(weights: Vec<WeightSpec<T>>, interval: Interval<T>) -> Result<Self> {
        if weights.is_empty() || weights.len() > MAX_KERNEL_K {
            return Err(invalid("k", format!("must be in 1..={MAX_KERNEL_K}, got {}", weights.len())));
        }
        for w in &weights {
            w.validate(&interval)?;
        }
        Ok(Self { weights, interval })
    }

    /// `ψ_l ≡ 1` for all `k` factors.
    pub fn unit(k: usize, interval: Interval<T>) -> Result<Self> {
        Self::new(vec![WeightSpec::unit(); k], interval)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[WeightSpec<T>] {
        &self.weights
    }

    pub fn interval(&self) -> &Interval<T> {
        &self.interval
    }

    fn breakpoints(&self) -> Vec<T> {
        self.weights.iter().flat_map(WeightSpec::breakpoints).collect()
    }
}

/// `K(point)`: the weight product when the coordinates are strictly
/// increasing, zero otherwise.
pub fn kernel_eval<T: Real>(ks: &KernelSpec<T>, point: &[T]) -> Result<T> {
    if point.len() != ks.k() {
        return Err(Error::ShapeMismatch(format!(
            "point has {} coordinates, kernel has k = {}",
            point.len(),
            ks.k()
        )));
    }
    let iv = ks.interval();
    if let Some(&bad) = point.iter().find(|&&x| !iv.contains(x)) {
        return Err(Error::Domain(format!("coordinate {bad} outside [{}, {}]", iv.start(), iv.end())));
    }
    if point.windows(2).any(|w| w[0] >= w[1]) {
        return Ok(T::zero());
    }
    Ok(ks.weights().iter().zip(point).map(|(w, &x)| w.eval(x, iv)).fold(T::one(), |a, b| a * b))
}

/// Composite Gauss–Legendre rule with a per-panel spectral integration matrix.
///
/// For values `f` at the nodes, [`SimplexQuadrature::cumulative`] returns the
/// running integral `∫_t^{x_a} f̃` at every node, where `f̃` is the
/// panel-wise polynomial interpolant of `f`. This is exact whenever `f` is a
/// polynomial of degree `< n` on each panel.
#[derive(Debug, Clone)]
pub(crate) struct SimplexQuadrature<T> {
    points_per_panel: usize,
    nodes: Vec<T>,
    weights: Vec<T>,
    panel_half_lengths: Vec<T>,
    /// Row-major `n × n`: `∫_{-1}^{x_a} ℓ_b(u) du`.
    integration: Vec<T>,
}

impl<T: Real> SimplexQuadrature<T> {
    pub(crate) fn new(iv: &Interval<T>, panels: &[Interval<T>], n: usize) -> Result<Self> {
        let rule = gauss_legendre::<f64>(n)?;
        let xs = rule.nodes();
        let ws = rule.weights();

        // ℓ_b(u) = Σ_m (2m+1)/2 · w_b P_m(x_b) P_m(u), exact for the degree n-1 interpolant.
        let p_at_nodes: Vec<Vec<f64>> = (0..n).map(|m| xs.iter().map(|&x| legendre_p(m, x)).collect()).collect();
        let antiderivative = |m: usize, x: f64| -> f64 {
            if m == 0 {
                x + 1.0
            } else {
                (legendre_p(m + 1, x) - legendre_p(m - 1, x)) / (2.0 * m as f64 + 1.0)
            }
        };
        let int_at_nodes: Vec<Vec<f64>> =
            (0..n).map(|m| xs.iter().map(|&x| antiderivative(m, x)).collect()).collect();
        let mut integration = vec![T::zero(); n * n];
        for a in 0..n {
            for b in 0..n {
                let v: f64 = (0..n)
                    .map(|m| (2.0 * m as f64 + 1.0) / 2.0 * ws[b] * p_at_nodes[m][b] * int_at_nodes[m][a])
                    .sum();
                integration[a * n + b] = T::lit(v);
            }
        }

        let mut nodes = Vec::with_capacity(panels.len() * n);
        let mut weights = Vec::with_capacity(panels.len() * n);
        let mut panel_half_lengths = Vec::with_capacity(panels.len());
        for panel in panels {
            debug_assert!(panel.start() >= iv.start() && panel.end() <= iv.end());
            let half = panel.length() / T::lit(2.0);
            panel_half_lengths.push(half);
            for (&x, &w) in xs.iter().zip(ws) {
                nodes.push(panel.from_reference(T::lit(x)));
                weights.push(T::lit(w) * half);
            }
        }
        Ok(Self {
            points_per_panel: n,
            nodes,
            weights,
            panel_half_lengths,
            integration,
        })
    }

    pub(crate) fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub(crate) fn total(&self, f: &[T]) -> T {
        self.weights.iter().zip(f).map(|(&w, &v)| w * v).sum()
    }

    pub(crate) fn cumulative(&self, f: &[T], out: &mut [T]) {
        let n = self.points_per_panel;
        let mut offset = T::zero();
        for (q, &half) in self.panel_half_lengths.iter().enumerate() {
            let fs = &f[q * n..(q + 1) * n];
            for a in 0..n {
                let row = &self.integration[a * n..(a + 1) * n];
                let s: T = row.iter().zip(fs).map(|(&m, &v)| m * v).sum();
                out[q * n + a] = offset + half * s;
            }
            let ws = &self.weights[q * n..(q + 1) * n];
            offset += ws.iter().zip(fs).map(|(&w, &v)| w * v).sum::<T>();
        }
    }

    /// `∫ f_k(t_k) ∫^{t_k} ··· ∫^{t_2} f_1(t_1)` for factor values at the nodes.
    pub(crate) fn nested(&self, factors: &[&[T]]) -> T {
        let len = self.nodes.len();
        let mut cur = vec![T::one(); len];
        let mut tmp = vec![T::zero(); len];
        for (l, f) in factors.iter().enumerate() {
            for (c, &v) in cur.iter_mut().zip(f.iter()) {
                *c *= v;
            }
            if l + 1 == factors.len() {
                return self.total(&cur);
            }
            self.cumulative(&cur, &mut tmp);
            std::mem::swap(&mut cur, &mut tmp);
        }
        T::one()
    }
}

/// Panel layout: `base` equal panels refined at any interior break point.
fn panel_layout<T: Real>(iv: &Interval<T>, base: usize, breaks: &[T]) -> Vec<Interval<T>> {
    let mut cuts: Vec<T> = iv.panels(base).iter().map(|p| p.start()).collect();
    cuts.extend(breaks.iter().copied());
    cuts.push(iv.end());
    cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite break points"));
    let min_gap = T::lit(1e-12) * iv.length();
    let mut clean: Vec<T> = Vec::with_capacity(cuts.len());
    for c in cuts {
        if c < iv.start() || c > iv.end() {
            continue;
        }
        if clean.last().is_none_or(|&prev| c - prev > min_gap) {
            clean.push(c);
        }
    }
    *clean.first_mut().expect("interval start") = iv.start();
    *clean.last_mut().expect("interval end") = iv.end();
    clean
        .windows(2)
        .map(|w| Interval::new(w[0], w[1]).expect("increasing cuts"))
        .collect()
}

fn convergence_tolerance<T: Real>(scale: T) -> T {
    let floor = T::lit(1e-8).max(T::epsilon() * T::lit(1e3));
    floor * scale.max(T::one())
}

/// Shared driver for coefficient evaluation: runs `eval` at `degree` and
/// `2·degree` points per panel, doubling until two consecutive levels agree.
fn with_escalation<T: Real, R>(
    degree: usize,
    mut eval: impl FnMut(usize) -> Result<R>,
    distance: impl Fn(&R, &R) -> (T, T),
) -> Result<R> {
    let mut n = degree;
    let mut coarse = eval(n)?;
    loop {
        let n2 = 2 * n;
        if n2 > MAX_QUADRATURE_POINTS {
            return Err(Error::QuadratureNotConverged(format!(
                "no agreement up to {n} points per panel; increase degree or simplify the weights"
            )));
        }
        let fine = eval(n2)?;
        let (diff, scale) = distance(&coarse, &fine);
        if diff <= convergence_tolerance(scale) {
            return Ok(fine);
        }
        n = n2;
        coarse = fine;
    }
}

fn check_degree(degree: usize, max_j: usize) -> Result<()> {
    let need = 2 * (max_j + 2);
    if degree < need {
        return Err(invalid("degree", format!("need at least {need} quadrature points, got {degree}")));
    }
    if degree > MAX_QUADRATURE_POINTS / 2 {
        return Err(invalid(
            "degree",
            format!("at most {} quadrature points, got {degree}", MAX_QUADRATURE_POINTS / 2),
        ));
    }
    Ok(())
}

/// Factor tables `ψ_l(x) φ_j(x)` at every node, for `j = 0..=p_l`.
fn factor_tables<T: Real>(
    ks: &KernelSpec<T>,
    truncation: &[usize],
    basis: BasisKind,
    quad: &SimplexQuadrature<T>,
) -> Vec<Vec<Vec<T>>> {
    let iv = ks.interval();
    let max_p = truncation.iter().copied().max().unwrap_or(0);
    let nodes = quad.nodes();
    let mut phi = vec![vec![T::zero(); nodes.len()]; max_p + 1];
    let mut buf = vec![T::zero(); max_p + 1];
    for (a, &x) in nodes.iter().enumerate() {
        eval_basis_upto(basis, x, iv, &mut buf);
        for (j, &v) in buf.iter().enumerate() {
            phi[j][a] = v;
        }
    }
    ks.weights()
        .iter()
        .zip(truncation)
        .map(|(w, &p)| {
            let psi: Vec<T> = nodes.iter().map(|&x| w.eval(x, iv)).collect();
            (0..=p)
                .map(|j| psi.iter().zip(&phi[j]).map(|(&a, &b)| a * b).collect())
                .collect()
        })
        .collect()
}

fn quadrature_for<T: Real>(ks: &KernelSpec<T>, basis: BasisKind, max_j: usize, n: usize) -> Result<SimplexQuadrature<T>> {
    let iv = ks.interval();
    let panels = panel_layout(iv, basis.panel_count(max_j), &ks.breakpoints());
    SimplexQuadrature::new(iv, &panels, n)
}

/// The single coefficient `C_{j_k...j_1}` for `jx = (j_1, ..., j_k)`.
///
/// `degree` is the starting number of Gauss points per panel; it is doubled
/// until two successive evaluations agree to `1e-8` (relative to the
/// coefficient size when that exceeds one).
pub fn fourier_coefficient<T: Real>(ks: &KernelSpec<T>, jx: &[usize], basis: BasisKind, degree: usize) -> Result<T> {
    if jx.len() != ks.k() {
        return Err(Error::ShapeMismatch(format!("j-index length {} but k = {}", jx.len(), ks.k())));
    }
    let max_j = jx.iter().copied().max().unwrap_or(0);
    check_degree(degree, max_j)?;
    with_escalation(
        degree,
        |n| {
            let quad = quadrature_for(ks, basis, max_j, n)?;
            let tables = factor_tables(ks, jx, basis, &quad);
            let factors: Vec<&[T]> = tables.iter().zip(jx).map(|(t, &j)| t[j].as_slice()).collect();
            Ok(quad.nested(&factors))
        },
        |a: &T, b: &T| ((*a - *b).abs(), b.abs()),
    )
}

/// `‖K‖²` over `[t, T]^k`, i.e. `∫ ψ_1²···ψ_k²` over the ordered simplex.
pub fn kernel_l2_norm_sq<T: Real>(ks: &KernelSpec<T>, degree: usize) -> Result<T> {
    check_degree(degree, 0)?;
    with_escalation(
        degree,
        |n| {
            let quad = quadrature_for(ks, BasisKind::LegendreShifted, 0, n)?;
            let tables: Vec<Vec<T>> = ks
                .weights()
                .iter()
                .map(|w| quad.nodes().iter().map(|&x| w.squared().eval(x, ks.interval())).collect())
                .collect();
            let factors: Vec<&[T]> = tables.iter().map(Vec::as_slice).collect();
            Ok(quad.nested(&factors))
        },
        |a: &T, b: &T| ((*a - *b).abs(), b.abs()),
    )
}

/// Default starting quadrature size for a kernel truncated at `max_j`.
pub fn default_degree<T: Real>(ks: &KernelSpec<T>, max_j: usize) -> usize {
    let max_q = ks
        .weights()
        .iter()
        .map(|w| match w {
            WeightSpec::PowerOfElapsed { q, .. } => *q as usize,
            _ => 0,
        })
        .max()
        .unwrap_or(0);
    (2 * (max_j + 2)).max(max_q + 2).clamp(16, MAX_QUADRATURE_POINTS / 2)
}

/// Dense `k`-dimensional array of coefficients, indexed `(j_1, ..., j_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTensor<T> {
    truncation: Vec<usize>,
    values: Vec<T>,
    basis: BasisKind,
    interval: Interval<T>,
    weights: Option<Vec<WeightSpec<T>>>,
}

fn entry_count(truncation: &[usize]) -> Result<usize> {
    let entries = truncation.iter().try_fold(1u128, |acc, &p| acc.checked_mul(p as u128 + 1));
    match entries {
        Some(e) if e <= MAX_TENSOR_ENTRIES => Ok(e as usize),
        Some(e) => Err(Error::MemoryBudget {
            entries: e,
            limit: MAX_TENSOR_ENTRIES,
        }),
        None => Err(Error::MemoryBudget {
            entries: u128::MAX,
            limit: MAX_TENSOR_ENTRIES,
        }),
    }
}

impl<T: Real> CoefficientTensor<T> {
    /// Wraps externally supplied coefficients (e.g. for a non-factorized kernel).
    pub fn from_values(truncation: Vec<usize>, values: Vec<T>, basis: BasisKind, interval: Interval<T>) -> Result<Self> {
        if truncation.is_empty() || truncation.len() > MAX_KERNEL_K {
            return Err(invalid("k", format!("must be in 1..={MAX_KERNEL_K}, got {}", truncation.len())));
        }
        let n = entry_count(&truncation)?;
        if values.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "truncation {truncation:?} needs {n} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "coefficients must be finite"));
        }
        Ok(Self {
            truncation,
            values,
            basis,
            interval,
            weights: None,
        })
    }

    pub fn k(&self) -> usize {
        self.truncation.len()
    }

    pub fn truncation(&self) -> &[usize] {
        &self.truncation
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn interval(&self) -> &Interval<T> {
        &self.interval
    }

    pub fn weights(&self) -> Option<&[WeightSpec<T>]> {
        self.weights.as_deref()
    }

    pub fn max_index(&self) -> usize {
        self.truncation.iter().copied().max().unwrap_or(0)
    }

    fn offset(&self, jx: &[usize]) -> Option<usize> {
        if jx.len() != self.k() {
            return None;
        }
        let mut off = 0;
        for (&j, &p) in jx.iter().zip(&self.truncation) {
            if j > p {
                return None;
            }
            off = off * (p + 1) + j;
        }
        Some(off)
    }

    /// `C_{j_k...j_1}` for `jx = (j_1, ..., j_k)`, or `None` outside the truncation.
    pub fn get(&self, jx: &[usize]) -> Option<T> {
        self.offset(jx).map(|o| self.values[o])
    }

    /// `Σ C²` over the stored entries.
    pub fn sum_of_squares(&self) -> T {
        self.values.iter().map(|&v| v * v).sum()
    }

    /// The leading block `j_l <= truncation_l`.
    pub fn truncate(&self, truncation: &[usize]) -> Result<Self> {
        if truncation.len() != self.k() || truncation.iter().zip(&self.truncation).any(|(a, b)| a > b) {
            return Err(Error::ShapeMismatch(format!(
                "cannot truncate {:?} to {truncation:?}",
                self.truncation
            )));
        }
        let n = entry_count(truncation)?;
        let mut values = Vec::with_capacity(n);
        for_each_index(truncation, |jx| {
            values.push(self.get(jx).expect("sub-block index"));
        });
        Ok(Self {
            truncation: truncation.to_vec(),
            values,
            basis: self.basis,
            interval: self.interval,
            weights: self.weights.clone(),
        })
    }

    /// Multiplies every coefficient by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * factor).collect(),
            ..self.clone()
        }
    }
}

/// Calls `f` on every index `(j_1..j_k)` with `j_l <= truncation_l`, in
/// lexicographic order (the storage order).
pub fn for_each_index(truncation: &[usize], mut f: impl FnMut(&[usize])) {
    let k = truncation.len();
    if k == 0 {
        return;
    }
    let mut jx = vec![0usize; k];
    loop {
        f(&jx);
        let mut l = k;
        loop {
            if l == 0 {
                return;
            }
            l -= 1;
            if jx[l] < truncation[l] {
                jx[l] += 1;
                break;
            }
            jx[l] = 0;
        }
    }
}

/// Source of coefficients for `J[Φ]` with `Φ ∈ L2([t,T]^k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum GeneralKernel<T> {
    Factorized(KernelSpec<T>),
    Supplied(CoefficientTensor<T>),
}

impl<T: Real> GeneralKernel<T> {
    pub fn k(&self) -> usize {
        match self {
            GeneralKernel::Factorized(ks) => ks.k(),
            GeneralKernel::Supplied(t) => t.k(),
        }
    }

    /// Coefficients up to `truncation`. A supplied tensor must already have
    /// exactly that shape and basis.
    pub fn tensor(&self, truncation: &[usize], basis: BasisKind, degree: usize) -> Result<CoefficientTensor<T>> {
        match self {
            GeneralKernel::Factorized(ks) => build_tensor(ks, truncation, basis, degree),
            GeneralKernel::Supplied(t) => {
                if t.truncation() != truncation {
                    return Err(Error::ShapeMismatch(format!(
                        "supplied tensor has truncation {:?}, requested {truncation:?}",
                        t.truncation()
                    )));
                }
                if t.basis() != basis {
                    return Err(Error::ShapeMismatch(format!(
                        "supplied tensor uses {} basis, requested {basis}",
                        t.basis()
                    )));
                }
                Ok(t.clone())
            }
        }
    }
}

/// All coefficients with `j_l <= truncation_l`.
pub fn build_tensor<T: Real>(
    ks: &KernelSpec<T>,
    truncation: &[usize],
    basis: BasisKind,
    degree: usize,
) -> Result<CoefficientTensor<T>> {
    if truncation.len() != ks.k() {
        return Err(Error::ShapeMismatch(format!(
            "truncation has {} entries, kernel has k = {}",
            truncation.len(),
            ks.k()
        )));
    }
    entry_count(truncation)?;
    let max_j = truncation.iter().copied().max().unwrap_or(0);
    check_degree(degree, max_j)?;
    let values = with_escalation(
        degree,
        |n| {
            let quad = quadrature_for(ks, basis, max_j, n)?;
            let tables = factor_tables(ks, truncation, basis, &quad);
            Ok(tensor_values(&quad, &tables, truncation))
        },
        |a: &Vec<T>, b: &Vec<T>| {
            let diff = a.iter().zip(b).map(|(&x, &y)| (x - y).abs()).fold(T::zero(), T::max);
            let scale = b.iter().map(|v| v.abs()).fold(T::zero(), T::max);
            (diff, scale)
        },
    )?;
    Ok(CoefficientTensor {
        truncation: truncation.to_vec(),
        values,
        basis,
        interval: *ks.interval(),
        weights: Some(ks.weights().to_vec()),
    })
}

fn tensor_values<T: Real>(quad: &SimplexQuadrature<T>, tables: &[Vec<Vec<T>>], truncation: &[usize]) -> Vec<T> {
    let len = quad.nodes().len();
    let mut values = Vec::with_capacity(entry_count(truncation).unwrap_or(0));
    // One running-antiderivative buffer per inner level, reused across siblings.
    let mut buffers = vec![vec![T::zero(); len]; tables.len().saturating_sub(1)];
    let mut scratch = vec![T::zero(); len];
    fill_level(quad, tables, &vec![T::one(); len], &mut buffers, &mut scratch, &mut values);
    values
}

fn fill_level<T: Real>(
    quad: &SimplexQuadrature<T>,
    tables: &[Vec<Vec<T>>],
    inner: &[T],
    buffers: &mut [Vec<T>],
    scratch: &mut [T],
    values: &mut Vec<T>,
) {
    let (factors, deeper) = tables.split_first().expect("at least one level");
    for factor in factors {
        for ((s, &a), &b) in scratch.iter_mut().zip(inner).zip(factor) {
            *s = a * b;
        }
        match buffers.split_first_mut() {
            None => values.push(quad.total(scratch)),
            Some((running, rest)) => {
                quad.cumulative(scratch, running);
                fill_level(quad, deeper, running, rest, scratch, values);
            }
        }
    }
}

/// `‖K‖² - Σ C²`, the squared `L2` distance between the kernel and its
/// truncated expansion (Parseval).
pub fn truncation_residual<T: Real>(ks: &KernelSpec<T>, tensor: &CoefficientTensor<T>) -> Result<T> {
    let norm = kernel_l2_norm_sq(ks, default_degree(ks, 0))?;
    let residual = norm - tensor.sum_of_squares();
    let floor = -T::lit(1e-9).max(T::epsilon() * T::lit(1e3)) * norm.max(T::one());
    if residual < floor {
        return Err(Error::Numerical(format!(
            "negative truncation residual {residual}; tensor was not built from this kernel"
        )));
    }
    Ok(residual)
}

#[derive(Serialize, Deserialize)]
struct TensorArchive<T> {
    format_version: u32,
    basis: BasisKind,
    interval: [T; 2],
    k: usize,
    truncation: Vec<usize>,
    weights: Option<Vec<WeightSpec<T>>>,
    values: Vec<T>,
}

impl<T: Real + Serialize + for<'de> Deserialize<'de>> CoefficientTensor<T> {
    /// Self-describing JSON archive; values in row-major `(j_1..j_k)` order.
    pub fn to_json(&self) -> String {
        let archive = TensorArchive {
            format_version: TENSOR_FORMAT_VERSION,
            basis: self.basis,
            interval: [self.interval.start(), self.interval.end()],
            k: self.k(),
            truncation: self.truncation.clone(),
            weights: self.weights.clone(),
            values: self.values.clone(),
        };
        serde_json::to_string_pretty(&archive).expect("tensor archive serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let archive: TensorArchive<T> =
            serde_json::from_str(text).map_err(|e| invalid("archive", format!("malformed tensor archive: {e}")))?;
        if archive.format_version != TENSOR_FORMAT_VERSION {
            return Err(invalid(
                "archive",
                format!("unsupported format version {}", archive.format_version),
            ));
        }
        if archive.k != archive.truncation.len() {
            return Err(Error::ShapeMismatch(format!(
                "archive k = {} but truncation has {} entries",
                archive.k,
                archive.truncation.len()
            )));
        }
        let interval = Interval::new(archive.interval[0], archive.interval[1])?;
        let mut tensor = Self::from_values(archive.truncation, archive.values, archive.basis, interval)?;
        if let Some(w) = &archive.weights {
            if w.len() != tensor.k() {
                return Err(Error::ShapeMismatch("weights descriptor length differs from k".into()));
            }
        }
        tensor.weights = archive.weights;
        Ok(tensor)
    }
}
