//! Complete orthonormal systems on `[t, T]` and Gauss–Legendre quadrature.
//!
//! Two systems are provided:
//!
//! * [`BasisKind::LegendreShifted`]: `φ_j(τ) = sqrt((2j+1)/(T-t)) · P_j(2(τ-t)/(T-t) - 1)`.
//! * [`BasisKind::Trigonometric`]: `φ_0 = 1/sqrt(T-t)`, then for `r = 1, 2, ...`
//!   `φ_{2r-1} = sqrt(2/(T-t)) · sin(2πr(τ-t)/(T-t))` and
//!   `φ_{2r} = sqrt(2/(T-t)) · cos(2πr(τ-t)/(T-t))`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Largest supported Gauss–Legendre rule.
pub const MAX_QUADRATURE_POINTS: usize = 256;

const NEWTON_TOLERANCE: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// A finite time interval `[start, end]` with `end > start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<T> {
    start: T,
    end: T,
}

impl<T: Real> Interval<T> {
    pub fn new(start: T, end: T) -> Result<Self> {
        if !start.is_finite() || !end.is_finite() {
            return Err(invalid("interval", format!("bounds must be finite, got [{start}, {end}]")));
        }
        if end <= start {
            return Err(invalid("interval", format!("need end > start, got [{start}, {end}]")));
        }
        Ok(Self { start, end })
    }

    /// The unit interval `[0, 1]`.
    pub fn unit() -> Self {
        Self {
            start: T::zero(),
            end: T::one(),
        }
    }

    #[inline]
    pub fn start(&self) -> T {
        self.start
    }

    #[inline]
    pub fn end(&self) -> T {
        self.end
    }

    #[inline]
    pub fn length(&self) -> T {
        self.end - self.start
    }

    /// Membership test with a tolerance of `1e-12 · (T - t)`.
    pub fn contains(&self, tau: T) -> bool {
        let slack = T::lit(1e-12) * self.length();
        tau >= self.start - slack && tau <= self.end + slack
    }

    /// Maps `tau ∈ [t, T]` to `[-1, 1]`.
    #[inline]
    pub fn to_reference(&self, tau: T) -> T {
        let two = T::lit(2.0);
        two * (tau - self.start) / self.length() - T::one()
    }

    /// Maps `x ∈ [-1, 1]` to `[t, T]`.
    #[inline]
    pub fn from_reference(&self, x: T) -> T {
        self.start + (x + T::one()) * self.length() / T::lit(2.0)
    }

    /// Splits the interval into `n` equal panels.
    pub fn panels(&self, n: usize) -> Vec<Interval<T>> {
        let n = n.max(1);
        let h = self.length() / T::from_count(n);
        (0..n)
            .map(|i| {
                let a = self.start + h * T::from_count(i);
                let b = if i + 1 == n { self.end } else { self.start + h * T::from_count(i + 1) };
                Interval { start: a, end: b }
            })
            .collect()
    }
}

/// The orthonormal system used for the expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    #[default]
    LegendreShifted,
    Trigonometric,
}

impl BasisKind {
    /// Number of equal panels to use when integrating products involving
    /// basis functions up to index `max_j`.
    pub fn panel_count(self, max_j: usize) -> usize {
        match self {
            BasisKind::LegendreShifted => 1,
            BasisKind::Trigonometric => max_j.max(1),
        }
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisKind::LegendreShifted => f.write_str("legendre"),
            BasisKind::Trigonometric => f.write_str("trig"),
        }
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "legendre" | "legendre_shifted" | "legendreshifted" => Ok(BasisKind::LegendreShifted),
            "trig" | "trigonometric" | "fourier" => Ok(BasisKind::Trigonometric),
            other => Err(invalid("basis", format!("unknown basis `{other}` (expected legendre|trig)"))),
        }
    }
}

/// Standard Legendre polynomial `P_n(x)` by the three-term recurrence.
pub fn legendre_p<T: Real>(n: usize, x: T) -> T {
    let mut p_prev = T::one();
    if n == 0 {
        return p_prev;
    }
    let mut p = x;
    for j in 1..n {
        let jf = T::from_count(j);
        let next = ((jf + jf + T::one()) * x * p - jf * p_prev) / (jf + T::one());
        p_prev = p;
        p = next;
    }
    p
}

/// `(P_n(x), P_n'(x))`, used by the node solver.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for j in 1..n {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * x * p - jf * p_prev) / (jf + 1.0);
        p_prev = p;
        p = next;
    }
    // P_n'(x) = n (x P_n - P_{n-1}) / (x^2 - 1); nodes are interior so x^2 != 1.
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
    /// Highest polynomial degree integrated exactly, `2n - 1`.
    degree: usize,
}

impl<T: Real> QuadratureRule<T> {
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped affinely onto `iv`.
    pub fn mapped(&self, iv: &Interval<T>) -> (Vec<T>, Vec<T>) {
        let half = iv.length() / T::lit(2.0);
        let nodes = self.nodes.iter().map(|&x| iv.from_reference(x)).collect();
        let weights = self.weights.iter().map(|&w| w * half).collect();
        (nodes, weights)
    }

    /// `∫_iv f` with this rule.
    pub fn integrate<F: FnMut(T) -> T>(&self, iv: &Interval<T>, mut f: F) -> T {
        let half = iv.length() / T::lit(2.0);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(iv.from_reference(x)))
            .sum::<T>()
            * half
    }

    /// Composite rule over `panels` equal sub-intervals of `iv`.
    pub fn integrate_panels<F: FnMut(T) -> T>(&self, iv: &Interval<T>, panels: usize, mut f: F) -> T {
        iv.panels(panels).iter().map(|panel| self.integrate(panel, &mut f)).sum()
    }
}

/// Computes the `n`-point Gauss–Legendre rule by Newton iteration on `P_n`.
pub fn gauss_legendre<T: Real>(n: usize) -> Result<QuadratureRule<T>> {
    if n == 0 || n > MAX_QUADRATURE_POINTS {
        return Err(invalid(
            "n",
            format!("quadrature size must be in 1..={MAX_QUADRATURE_POINTS}, got {n}"),
        ));
    }
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let nf = n as f64;
    // Roots are symmetric; solve for the non-negative half.
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..NEWTON_MAX_ITER {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= NEWTON_TOLERANCE {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok(QuadratureRule {
        nodes: nodes.into_iter().map(T::lit).collect(),
        weights: weights.into_iter().map(T::lit).collect(),
        degree: 2 * n - 1,
    })
}

/// Evaluates `φ_j(tau)` on `iv`.
pub fn eval_basis<T: Real>(kind: BasisKind, j: usize, tau: T, iv: &Interval<T>) -> Result<T> {
    if !iv.contains(tau) {
        return Err(Error::Domain(format!(
            "tau = {tau} outside [{}, {}]",
            iv.start(),
            iv.end()
        )));
    }
    Ok(eval_unchecked(kind, j, tau, iv))
}

/// `φ_j(tau)` without the domain check.
pub(crate) fn eval_unchecked<T: Real>(kind: BasisKind, j: usize, tau: T, iv: &Interval<T>) -> T {
    let len = iv.length();
    match kind {
        BasisKind::LegendreShifted => {
            let scale = (T::from_count(2 * j + 1) / len).sqrt();
            scale * legendre_p(j, iv.to_reference(tau))
        }
        BasisKind::Trigonometric => {
            if j == 0 {
                return len.sqrt().recip();
            }
            let r = j.div_ceil(2);
            let arg = T::lit(2.0) * T::PI() * T::from_count(r) * (tau - iv.start()) / len;
            let amp = (T::lit(2.0) / len).sqrt();
            if j % 2 == 1 {
                amp * arg.sin()
            } else {
                amp * arg.cos()
            }
        }
    }
}

/// Fills `out[j] = φ_j(tau)` for `j = 0..out.len()`.
pub fn eval_basis_upto<T: Real>(kind: BasisKind, tau: T, iv: &Interval<T>, out: &mut [T]) {
    match kind {
        BasisKind::LegendreShifted => {
            let x = iv.to_reference(tau);
            let len = iv.length();
            let mut p_prev = T::one();
            let mut p = x;
            for (j, slot) in out.iter_mut().enumerate() {
                let pj = match j {
                    0 => T::one(),
                    1 => x,
                    _ => {
                        let jf = T::from_count(j - 1);
                        let next = ((jf + jf + T::one()) * x * p - jf * p_prev) / (jf + T::one());
                        p_prev = p;
                        p = next;
                        next
                    }
                };
                *slot = (T::from_count(2 * j + 1) / len).sqrt() * pj;
            }
        }
        BasisKind::Trigonometric => {
            for (j, slot) in out.iter_mut().enumerate() {
                *slot = eval_unchecked(kind, j, tau, iv);
            }
        }
    }
}

/// `∫_t^T φ_j(τ) dτ`, in closed form.
///
/// Both systems are orthogonal to constants beyond `j = 0`, so this is
/// `sqrt(T - t)` for `j = 0` and zero otherwise.
pub fn integrate_basis<T: Real>(kind: BasisKind, j: usize, iv: &Interval<T>) -> T {
    match (kind, j) {
        (_, 0) => iv.length().sqrt(),
        (BasisKind::LegendreShifted, _) | (BasisKind::Trigonometric, _) => T::zero(),
    }
}
