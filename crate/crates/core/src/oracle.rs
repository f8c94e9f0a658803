//! Brute-force ground truth on a fine uniform grid.
//!
//! A [`WienerPath`] holds `N` Gaussian increments per component. The
//! iterated integral is the left-point (Itô) nested Riemann–Stieltjes sum,
//! evaluated by streaming prefix accumulators in `O(N·k)`. The same path also
//! yields the table `ζ_j^{(i)} ≈ Σ_l φ_j(τ_l) Δw_l^{(i)}`, so the expansion
//! and the oracle can be compared realization by realization.
//!
//! The discrete sums carry an `O(1/N)` bias in second moments. For `k = 2`
//! with distinct components, `E[J_N²] = (1 - 1/N) / 2` on `[0, 1]` instead
//! of `1/2`, so the coupled mean-square error is off by roughly `-1/(2N)`.
//! The bias is reported through `n_grid` and never subtracted.

use crate::basis::{eval_basis_upto, eval_unchecked, integrate_basis, BasisKind, Interval};
use crate::coefficients::{kernel_l2_norm_sq, default_degree, CoefficientTensor, KernelSpec};
use crate::error::{invalid, Error, Result};
use crate::expansion::{approximate_with, mse_estimate, GaussianTable, MultiIndex, TermEvaluator, TermForm};
use crate::rng::{derive_seed, next_normal, stream};
use crate::scalar::Real;
use crate::stats::{correlation, MeanEstimate};

/// Largest grid accepted by [`simulate_path`].
pub const MAX_GRID_STEPS: usize = 10_000_000;

/// Increments of an `m`-dimensional Wiener process on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WienerPath<T> {
    m: usize,
    n_steps: usize,
    interval: Interval<T>,
    /// Step-major: increment of component `i` (1-based) at step `l` is
    /// `increments[l * m + i - 1]`.
    increments: Vec<T>,
}

impl<T: Real> WienerPath<T> {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn interval(&self) -> &Interval<T> {
        &self.interval
    }

    pub fn step(&self) -> T {
        self.interval.length() / T::from_count(self.n_steps)
    }

    /// Grid point `τ_l = t + l (T - t) / N`.
    pub fn grid_point(&self, l: usize) -> T {
        self.interval.start() + T::from_count(l) * self.step()
    }

    /// `Δw_l^{(i)}` for `i >= 1`; `Δτ` for `i = 0`.
    #[inline]
    pub fn increment(&self, i: usize, l: usize) -> T {
        if i == 0 {
            self.step()
        } else {
            self.increments[l * self.m + i - 1]
        }
    }

    /// `w_T^{(i)} - w_t^{(i)}`.
    pub fn total_increment(&self, i: usize) -> T {
        (0..self.n_steps).map(|l| self.increment(i, l)).sum()
    }
}

/// Draws a path; identical `(seed, m, N, iv)` always give the same path.
pub fn simulate_path<T: Real>(seed: u64, m: usize, n_steps: usize, interval: Interval<T>) -> Result<WienerPath<T>> {
    if m == 0 {
        return Err(invalid("m", "need at least one Wiener component"));
    }
    if n_steps == 0 || n_steps > MAX_GRID_STEPS {
        return Err(invalid("n_grid", format!("must be in 1..={MAX_GRID_STEPS}, got {n_steps}")));
    }
    let sd = (interval.length().to_f64_lossy() / n_steps as f64).sqrt();
    let mut rng = stream(seed, &[]);
    let increments = (0..n_steps * m).map(|_| T::lit(sd * next_normal(&mut rng))).collect();
    Ok(WienerPath {
        m,
        n_steps,
        interval,
        increments,
    })
}

/// Weights `ψ_l(τ_s)` tabulated on a grid, reusable across paths.
#[derive(Debug, Clone)]
pub struct DiscreteKernel<T> {
    k: usize,
    n_steps: usize,
    interval: Interval<T>,
    /// Step-major `n_steps × k`.
    weights: Vec<T>,
}

impl<T: Real> DiscreteKernel<T> {
    pub fn new(ks: &KernelSpec<T>, n_steps: usize) -> Result<Self> {
        if n_steps == 0 || n_steps > MAX_GRID_STEPS {
            return Err(invalid("n_grid", format!("must be in 1..={MAX_GRID_STEPS}, got {n_steps}")));
        }
        let iv = *ks.interval();
        let h = iv.length() / T::from_count(n_steps);
        let mut weights = Vec::with_capacity(n_steps * ks.k());
        for s in 0..n_steps {
            let tau = iv.start() + T::from_count(s) * h;
            weights.extend(ks.weights().iter().map(|w| w.eval(tau, &iv)));
        }
        Ok(Self {
            k: ks.k(),
            n_steps,
            interval: iv,
            weights,
        })
    }

    /// The nested left-point sum over `path`.
    pub fn integrate(&self, path: &WienerPath<T>, mi: &MultiIndex) -> Result<T> {
        if mi.k() != self.k {
            return Err(Error::ShapeMismatch(format!("kernel has k = {}, multi-index has length {}", self.k, mi.k())));
        }
        if path.n_steps() != self.n_steps {
            return Err(Error::ShapeMismatch(format!(
                "path has {} steps, kernel grid has {}",
                path.n_steps(),
                self.n_steps
            )));
        }
        check_path(path, mi, &self.interval)?;
        let idx = mi.entries();
        let mut acc = vec![T::zero(); self.k];
        for s in 0..self.n_steps {
            let psi = &self.weights[s * self.k..(s + 1) * self.k];
            // Deeper levels first so each sees the inner sum over r < s only.
            for l in (1..self.k).rev() {
                let inner = acc[l - 1];
                acc[l] += psi[l] * path.increment(idx[l], s) * inner;
            }
            acc[0] += psi[0] * path.increment(idx[0], s);
        }
        Ok(acc[self.k - 1])
    }
}

fn check_path<T: Real>(path: &WienerPath<T>, mi: &MultiIndex, iv: &Interval<T>) -> Result<()> {
    if mi.max_component() > path.m() {
        return Err(Error::ShapeMismatch(format!(
            "component {} exceeds path dimension m = {}",
            mi.max_component(),
            path.m()
        )));
    }
    let tol = T::lit(1e-12) * iv.length().max(T::one());
    if (path.interval().start() - iv.start()).abs() > tol || (path.interval().end() - iv.end()).abs() > tol {
        return Err(Error::ShapeMismatch("path and kernel live on different intervals".into()));
    }
    Ok(())
}

/// `J[ψ^{(k)}]^{(i_1...i_k)}` as the discrete left-point nested sum on `path`.
pub fn discretized_iterated_integral<T: Real>(path: &WienerPath<T>, mi: &MultiIndex, ks: &KernelSpec<T>) -> Result<T> {
    DiscreteKernel::new(ks, path.n_steps())?.integrate(path, mi)
}

/// `ζ_j^{(i)}` from a path: `Σ_l φ_j(τ_l) Δw_l^{(i)}` for `i >= 1`, the exact
/// `∫ φ_j dτ` for `i = 0`.
pub fn zeta_from_path<T: Real>(path: &WienerPath<T>, basis: BasisKind, j: usize, i: usize) -> Result<T> {
    if i > path.m() {
        return Err(invalid("i", format!("component {i} exceeds path dimension m = {}", path.m())));
    }
    let iv = path.interval();
    if i == 0 {
        return Ok(integrate_basis(basis, j, iv));
    }
    Ok((0..path.n_steps())
        .map(|l| eval_unchecked(basis, j, path.grid_point(l), iv) * path.increment(i, l))
        .sum())
}

/// Basis values on a grid, for extracting whole tables from many paths.
#[derive(Debug, Clone)]
pub struct PathProjector<T> {
    basis: BasisKind,
    p: usize,
    n_steps: usize,
    interval: Interval<T>,
    /// Step-major `n_steps × (p + 1)`.
    phi: Vec<T>,
}

impl<T: Real> PathProjector<T> {
    pub fn new(basis: BasisKind, p: usize, n_steps: usize, interval: Interval<T>) -> Result<Self> {
        if n_steps == 0 || n_steps > MAX_GRID_STEPS {
            return Err(invalid("n_grid", format!("must be in 1..={MAX_GRID_STEPS}, got {n_steps}")));
        }
        let w = p + 1;
        let mut phi = vec![T::zero(); n_steps * w];
        let h = interval.length() / T::from_count(n_steps);
        for (s, row) in phi.chunks_mut(w).enumerate() {
            eval_basis_upto(basis, interval.start() + T::from_count(s) * h, &interval, row);
        }
        Ok(Self {
            basis,
            p,
            n_steps,
            interval,
            phi,
        })
    }

    pub fn table(&self, path: &WienerPath<T>) -> Result<GaussianTable<T>> {
        if path.n_steps() != self.n_steps {
            return Err(Error::ShapeMismatch(format!(
                "path has {} steps, projector grid has {}",
                path.n_steps(),
                self.n_steps
            )));
        }
        let w = self.p + 1;
        let m = path.m();
        let mut rows = vec![vec![T::zero(); w]; m];
        for s in 0..self.n_steps {
            let phi = &self.phi[s * w..(s + 1) * w];
            for (i, row) in rows.iter_mut().enumerate() {
                let dw = path.increment(i + 1, s);
                for (z, &f) in row.iter_mut().zip(phi) {
                    *z += f * dw;
                }
            }
        }
        GaussianTable::from_rows(rows, self.basis, self.interval)
    }
}

/// Builds the full table `ζ_j^{(i)}`, `j <= p`, from a path.
pub fn table_from_path<T: Real>(path: &WienerPath<T>, basis: BasisKind, p: usize) -> Result<GaussianTable<T>> {
    PathProjector::new(basis, p, path.n_steps(), *path.interval())?.table(path)
}

/// Oracle and expansion evaluated on one shared path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledPair {
    pub oracle_value: f64,
    pub approx_value: f64,
    /// Seed of the shared path.
    pub path_seed: u64,
}

/// Statistics of one coupled mean-square experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledMse {
    pub truncation: Vec<usize>,
    /// `‖K‖² - Σ C²`.
    pub analytic_residual: f64,
    /// Whether the residual is the exact mean-square error (pairwise
    /// distinct nonzero components).
    pub residual_exact: bool,
    pub sample_mse: f64,
    pub stderr: f64,
    pub n_grid: usize,
    pub trials: usize,
    /// Sample `E[J²]` of the oracle and its standard error.
    pub oracle_second_moment: f64,
    pub oracle_second_moment_stderr: f64,
    /// Sample correlation between oracle and expansion values.
    pub correlation: f64,
}

/// Seed of the path used by `trial`.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed, &[trial as u64])
}

/// One coupled realization.
pub fn coupled_pair<T: Real>(
    mi: &MultiIndex,
    ks: &KernelSpec<T>,
    tensor: &CoefficientTensor<T>,
    n_grid: usize,
    seed: u64,
    trial: usize,
) -> Result<CoupledPair> {
    let path_seed = trial_seed(seed, trial);
    let m = mi.max_component().max(1);
    let path = simulate_path(path_seed, m, n_grid, *ks.interval())?;
    let oracle = discretized_iterated_integral(&path, mi, ks)?;
    let tab = table_from_path(&path, tensor.basis(), tensor.max_index())?;
    let eval = TermEvaluator::new(mi.k(), TermForm::Hermite)?;
    let approx = approximate_with(&eval, tensor, mi, &tab)?;
    Ok(CoupledPair {
        oracle_value: oracle.to_f64_lossy(),
        approx_value: approx.to_f64_lossy(),
        path_seed,
    })
}

/// [`coupled_mse_curve`] for a single tensor.
pub fn coupled_mse<T: Real>(
    mi: &MultiIndex,
    ks: &KernelSpec<T>,
    tensor: &CoefficientTensor<T>,
    n_grid: usize,
    trials: usize,
    seed: u64,
) -> Result<CoupledMse> {
    let mut curve = coupled_mse_curve(mi, ks, std::slice::from_ref(tensor), n_grid, trials, seed)?;
    Ok(curve.remove(0))
}

/// Mean-square error of several truncations against the oracle, every
/// truncation sharing the same paths (trial `r` uses [`trial_seed`]`(seed, r)`).
pub fn coupled_mse_curve<T: Real>(
    mi: &MultiIndex,
    ks: &KernelSpec<T>,
    tensors: &[CoefficientTensor<T>],
    n_grid: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<CoupledMse>> {
    if trials < 100 {
        return Err(invalid("trials", format!("need at least 100 trials, got {trials}")));
    }
    let first = tensors.first().ok_or_else(|| invalid("tensors", "need at least one truncation"))?;
    let basis = first.basis();
    if tensors.iter().any(|t| t.basis() != basis) {
        return Err(invalid("tensors", "all truncations must share one basis"));
    }
    let iv = *ks.interval();
    let tol = T::lit(1e-12) * iv.length().max(T::one());
    if tensors.iter().any(|t| (t.interval().length() - iv.length()).abs() > tol) {
        return Err(Error::ShapeMismatch("tensor and kernel intervals differ in length".into()));
    }
    let p = tensors.iter().map(|t| t.max_index()).max().unwrap_or(0);
    let norm_sq = kernel_l2_norm_sq(ks, default_degree(ks, 0))?;
    let residuals = tensors
        .iter()
        .map(|t| mse_estimate(t, mi, norm_sq))
        .collect::<Result<Vec<_>>>()?;

    let m = mi.max_component().max(1);
    let kernel = DiscreteKernel::new(ks, n_grid)?;
    let projector = PathProjector::new(basis, p, n_grid, iv)?;
    let eval = TermEvaluator::new(mi.k(), TermForm::Hermite)?;

    let mut oracle = Vec::with_capacity(trials);
    let mut approx = vec![Vec::with_capacity(trials); tensors.len()];
    for r in 0..trials {
        let path = simulate_path(trial_seed(seed, r), m, n_grid, iv)?;
        oracle.push(kernel.integrate(&path, mi)?.to_f64_lossy());
        let tab = projector.table(&path)?;
        for (t, out) in tensors.iter().zip(approx.iter_mut()) {
            out.push(approximate_with(&eval, t, mi, &tab)?.to_f64_lossy());
        }
    }

    let squares: Vec<f64> = oracle.iter().map(|j| j * j).collect();
    let moment = MeanEstimate::from_samples(&squares);
    Ok(tensors
        .iter()
        .zip(&approx)
        .zip(&residuals)
        .map(|((t, values), res)| {
            let errors: Vec<f64> = values.iter().zip(&oracle).map(|(a, j)| (a - j) * (a - j)).collect();
            let mse = MeanEstimate::from_samples(&errors);
            CoupledMse {
                truncation: t.truncation().to_vec(),
                analytic_residual: res.value.to_f64_lossy(),
                residual_exact: res.exact,
                sample_mse: mse.mean,
                stderr: mse.stderr,
                n_grid,
                trials,
                oracle_second_moment: moment.mean,
                oracle_second_moment_stderr: moment.stderr,
                correlation: correlation(values, &oracle),
            }
        })
        .collect())
}
