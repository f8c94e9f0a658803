//! Strong Euler–Maruyama and Milstein integration of Itô SDEs
//! `dx = a(x, τ) dτ + Σ_j B_j(x, τ) dw^{(j)}` with non-commutative noise.
//!
//! Each step draws a table of `ζ_j^{(i)}` on `[τ, τ + h]`. The Wiener
//! increments are `√h · ζ_0^{(i)}` and the Milstein double integrals
//! `J^{(j_1 j_2)}` come from the truncated Legendre expansion with `ψ ≡ 1`.
//!
//! [`strong_error`] couples several step sizes on one Brownian path: it draws
//! tables on the finest grid and merges them exactly onto coarser grids with
//! [`LegendreCoarsener`].
//!
//! With a fixed truncation `p` the Lévy-area error per step is of size
//! `h / sqrt(4 (2p + 1))`, so Milstein's asymptotic strong order drops to
//! 0.5 as `h → 0`; order 1 is only visible while the remaining Milstein
//! error dominates.

use std::fmt;
use std::str::FromStr;

use crate::basis::{BasisKind, Interval};
use crate::coefficients::{build_tensor, KernelSpec};
use crate::error::{invalid, Error, Result};
use crate::expansion::LegendreCoarsener;
use crate::rng::{derive_seed, next_normal, stream};
use crate::scalar::Real;
use crate::stats::MeanEstimate;

/// Drift, diffusion columns and the first derivative terms Milstein needs.
pub trait SdeSystem<T: Real> {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn drift(&self, x: &[T], tau: T, out: &mut [T]);
    /// Column `B_j`, `j` in `0..noise_dim()`.
    fn diffusion(&self, j: usize, x: &[T], tau: T, out: &mut [T]);
    /// `L^{j_1} B_{j_2} = (∂B_{j_2}/∂x) B_{j_1}`, multiplying `J^{(j_1 j_2)}`.
    fn diffusion_derivative(&self, j1: usize, j2: usize, x: &[T], tau: T, out: &mut [T]);

    /// `x(T)` given `x(t)` and the total increments `w_T - w_t`, when known.
    fn exact_solution(&self, _x0: &[T], _iv: &Interval<T>, _w: &[T]) -> Option<Vec<T>> {
        None
    }
}

/// `dx = A x dτ + Σ_j B_j x dw^{(j)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearSystem<T> {
    n: usize,
    a: Vec<T>,
    b: Vec<Vec<T>>,
}

impl<T: Real> BilinearSystem<T> {
    /// Row-major `n × n` matrices.
    pub fn new(n: usize, a: Vec<T>, b: Vec<Vec<T>>) -> Result<Self> {
        if n == 0 || b.is_empty() {
            return Err(invalid("system", "need a positive state and noise dimension"));
        }
        if a.len() != n * n || b.iter().any(|m| m.len() != n * n) {
            return Err(Error::ShapeMismatch(format!("matrices must have {} entries", n * n)));
        }
        Ok(Self { n, a, b })
    }

    fn apply(&self, m: &[T], x: &[T], out: &mut [T]) {
        for (r, o) in out.iter_mut().enumerate().take(self.n) {
            *o = m[r * self.n..(r + 1) * self.n].iter().zip(x).map(|(&u, &v)| u * v).sum();
        }
    }

    /// Whether every pair `B_i B_j = B_j B_i`.
    pub fn is_commutative(&self) -> bool {
        let n = self.n;
        let prod = |p: &[T], q: &[T], r: usize, c: usize| (0..n).map(|l| p[r * n + l] * q[l * n + c]).sum::<T>();
        let tol = T::lit(1e-12);
        self.b.iter().enumerate().all(|(i, p)| {
            self.b[i + 1..].iter().all(|q| {
                (0..n).all(|r| (0..n).all(|c| (prod(p, q, r, c) - prod(q, p, r, c)).abs() <= tol))
            })
        })
    }
}

impl<T: Real> SdeSystem<T> for BilinearSystem<T> {
    fn state_dim(&self) -> usize {
        self.n
    }

    fn noise_dim(&self) -> usize {
        self.b.len()
    }

    fn drift(&self, x: &[T], _tau: T, out: &mut [T]) {
        self.apply(&self.a, x, out);
    }

    fn diffusion(&self, j: usize, x: &[T], _tau: T, out: &mut [T]) {
        self.apply(&self.b[j], x, out);
    }

    fn diffusion_derivative(&self, j1: usize, j2: usize, x: &[T], _tau: T, out: &mut [T]) {
        let mut inner = vec![T::zero(); self.n];
        self.apply(&self.b[j1], x, &mut inner);
        self.apply(&self.b[j2], &inner, out);
    }

    /// Closed form for the scalar case:
    /// `x_T = x_t exp((a - Σ b_j² / 2)(T - t) + Σ b_j Δw_j)`.
    fn exact_solution(&self, x0: &[T], iv: &Interval<T>, w: &[T]) -> Option<Vec<T>> {
        if self.n != 1 {
            return None;
        }
        let half = T::lit(0.5);
        let rate = self.a[0] - self.b.iter().map(|b| half * b[0] * b[0]).sum::<T>();
        let noise: T = self.b.iter().zip(w).map(|(b, &dw)| b[0] * dw).sum();
        Some(vec![x0[0] * (rate * iv.length() + noise).exp()])
    }
}

/// Built-in test systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CatalogSystem {
    /// Scalar geometric Brownian motion driven by two noises (commutative).
    LinearScalar2Noise,
    /// Two-dimensional bilinear system whose noise matrices do not commute.
    BilinearNonCommutative2D,
}

impl CatalogSystem {
    pub fn system<T: Real>(self) -> BilinearSystem<T> {
        let v = |xs: &[f64]| xs.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
        match self {
            CatalogSystem::LinearScalar2Noise => BilinearSystem::new(1, v(&[0.5]), vec![v(&[0.6]), v(&[0.4])]),
            CatalogSystem::BilinearNonCommutative2D => BilinearSystem::new(
                2,
                v(&[-0.5, 1.0, 0.0, -1.0]),
                vec![v(&[0.3, 0.3, 0.0, 0.0]), v(&[0.0, 0.0, 0.3, 0.3])],
            ),
        }
        .expect("catalog matrices are well formed")
    }

    /// Default initial state.
    pub fn initial_state<T: Real>(self) -> Vec<T> {
        match self {
            CatalogSystem::LinearScalar2Noise => vec![T::one()],
            CatalogSystem::BilinearNonCommutative2D => vec![T::one(), T::one()],
        }
    }
}

impl fmt::Display for CatalogSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CatalogSystem::LinearScalar2Noise => "scalar2",
            CatalogSystem::BilinearNonCommutative2D => "bilinear2d",
        })
    }
}

impl FromStr for CatalogSystem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scalar2" => Ok(CatalogSystem::LinearScalar2Noise),
            "bilinear2d" => Ok(CatalogSystem::BilinearNonCommutative2D),
            other => Err(invalid("system", format!("unknown system `{other}` (expected scalar2|bilinear2d)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    EulerMaruyama,
    Milstein,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::EulerMaruyama => "euler",
            Scheme::Milstein => "milstein",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" | "euler-maruyama" => Ok(Scheme::EulerMaruyama),
            "milstein" => Ok(Scheme::Milstein),
            other => Err(invalid("scheme", format!("unknown scheme `{other}` (expected euler|milstein)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig<T> {
    pub scheme: Scheme,
    pub h: T,
    /// Truncation of the double-integral expansion (`(p, p)`).
    pub p: usize,
    pub seed: u64,
}

/// States at every grid point, row-major `(steps + 1) × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<T>,
    pub dim: usize,
}

impl<T: Real> Trajectory<T> {
    pub fn state(&self, l: usize) -> &[T] {
        &self.states[l * self.dim..(l + 1) * self.dim]
    }

    pub fn terminal(&self) -> &[T] {
        self.state(self.times.len() - 1)
    }
}

fn step_count<T: Real>(h: T, iv: &Interval<T>) -> Result<usize> {
    if h <= T::zero() || !h.is_finite() {
        return Err(invalid("h", format!("step must be positive, got {h}")));
    }
    let ratio = iv.length() / h;
    let n = ratio.round();
    if n < T::one() || (ratio - n).abs() > T::lit(1e-9) * n {
        return Err(invalid("h", format!("step {h} does not divide the interval length {}", iv.length())));
    }
    Ok(n.to_f64_lossy() as usize)
}

/// One-step map shared by [`integrate`] and [`strong_error`].
struct Stepper<'a, T, S: ?Sized> {
    system: &'a S,
    scheme: Scheme,
    h: T,
    sqrt_h: T,
    p: usize,
    /// `C_{ab}` of `ψ ≡ 1` on `[0, h]`, row `a = j_1`.
    coefficients: Vec<T>,
    trace: T,
    work: Vec<T>,
    increment: Vec<T>,
}

impl<'a, T: Real, S: SdeSystem<T> + ?Sized> Stepper<'a, T, S> {
    fn new(system: &'a S, scheme: Scheme, h: T, p: usize) -> Result<Self> {
        let (coefficients, trace) = if scheme == Scheme::Milstein {
            let ks = KernelSpec::unit(2, Interval::new(T::zero(), h)?)?;
            let tensor = build_tensor(&ks, &[p, p], BasisKind::LegendreShifted, (2 * (p + 2)).max(16))?;
            let c = tensor.values().to_vec();
            let trace = (0..=p).map(|a| c[a * (p + 1) + a]).sum();
            (c, trace)
        } else {
            (Vec::new(), T::zero())
        };
        Ok(Self {
            system,
            scheme,
            h,
            sqrt_h: h.sqrt(),
            p,
            coefficients,
            trace,
            work: vec![T::zero(); system.state_dim()],
            increment: vec![T::zero(); system.state_dim()],
        })
    }

    /// Approximate `J^{(j_1 j_2)}` from rows `ζ^{(j_1)}`, `ζ^{(j_2)}`:
    /// `Σ_{ab} C_{ab} ζ_a^{(j_1)} ζ_b^{(j_2)}`, minus `Σ_a C_{aa}` when `j_1 = j_2`.
    fn double_integral(&self, z1: &[T], z2: &[T], same: bool) -> T {
        let w = self.p + 1;
        let mut total = T::zero();
        for (a, &za) in z1[..w].iter().enumerate() {
            let row = &self.coefficients[a * w..(a + 1) * w];
            total += za * row.iter().zip(&z2[..w]).map(|(&c, &z)| c * z).sum::<T>();
        }
        if same {
            total - self.trace
        } else {
            total
        }
    }

    /// Advances `x` over `[tau, tau + h]`; `rows[i]` holds `ζ^{(i+1)}_0..`.
    fn step(&mut self, x: &mut [T], tau: T, rows: &[&[T]]) {
        let n = x.len();
        self.system.drift(x, tau, &mut self.work);
        for r in 0..n {
            self.increment[r] = self.work[r] * self.h;
        }
        for (j, row) in rows.iter().enumerate() {
            self.system.diffusion(j, x, tau, &mut self.work);
            let dw = self.sqrt_h * row[0];
            for r in 0..n {
                self.increment[r] += self.work[r] * dw;
            }
        }
        if self.scheme == Scheme::Milstein {
            for (j1, z1) in rows.iter().enumerate() {
                for (j2, z2) in rows.iter().enumerate() {
                    let jj = self.double_integral(z1, z2, j1 == j2);
                    self.system.diffusion_derivative(j1, j2, x, tau, &mut self.work);
                    for r in 0..n {
                        self.increment[r] += self.work[r] * jj;
                    }
                }
            }
        }
        for (xr, &dr) in x[..n].iter_mut().zip(&self.increment) {
            *xr += dr;
        }
    }
}

/// `ζ^{(i)}_0..ζ^{(i)}_p` for step `step`, keyed on `(seed, step, i)`; a
/// larger `p` extends the same row.
fn step_rows<T: Real>(seed: u64, step: usize, m: usize, p: usize) -> Vec<Vec<T>> {
    (1..=m)
        .map(|i| {
            let mut rng = stream(seed, &[step as u64, i as u64]);
            (0..=p).map(|_| T::lit(next_normal(&mut rng))).collect()
        })
        .collect()
}

fn check_state<T: Real>(x: &[T], step: usize) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite state after step {step}")));
    }
    Ok(())
}

/// Integrates from `x0` over `iv` with per-step independent tables.
pub fn integrate<T: Real, S: SdeSystem<T> + ?Sized>(
    system: &S,
    cfg: &SchemeConfig<T>,
    x0: &[T],
    iv: &Interval<T>,
) -> Result<Trajectory<T>> {
    if x0.len() != system.state_dim() {
        return Err(Error::ShapeMismatch(format!(
            "initial state has {} entries, system dimension is {}",
            x0.len(),
            system.state_dim()
        )));
    }
    let steps = step_count(cfg.h, iv)?;
    let mut stepper = Stepper::new(system, cfg.scheme, cfg.h, cfg.p)?;
    let mut x = x0.to_vec();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity((steps + 1) * x.len());
    times.push(iv.start());
    states.extend_from_slice(&x);
    for s in 0..steps {
        let tau = iv.start() + T::from_count(s) * cfg.h;
        let rows = step_rows::<T>(cfg.seed, s, system.noise_dim(), cfg.p);
        let refs: Vec<&[T]> = rows.iter().map(|r| r.as_slice()).collect();
        stepper.step(&mut x, tau, &refs);
        check_state(&x, s)?;
        times.push(if s + 1 == steps { iv.end() } else { tau + cfg.h });
        states.extend_from_slice(&x);
    }
    Ok(Trajectory {
        times,
        states,
        dim: x.len(),
    })
}

/// What the coarse runs are compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Reference<T> {
    /// A scheme on a step that divides every tested step.
    Scheme(SchemeConfig<T>),
    /// The system's closed form, driven by the total increments of a path on
    /// the finest tested grid.
    ClosedForm,
}

/// Root-mean-square terminal error of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct StrongErrorRow {
    pub scheme: Scheme,
    pub h: f64,
    pub p: usize,
    pub rmse: f64,
    /// Delta-method standard error of `rmse`.
    pub stderr: f64,
    pub trials: usize,
}

/// Tables for every step of one grid: `steps × m × (p + 1)`.
struct GridTables<T> {
    h: T,
    steps: usize,
    m: usize,
    p: usize,
    values: Vec<T>,
}

impl<T: Real> GridTables<T> {
    fn rows(&self, s: usize) -> Vec<&[T]> {
        let w = self.p + 1;
        (0..self.m)
            .map(|i| {
                let start = (s * self.m + i) * w;
                &self.values[start..start + w]
            })
            .collect()
    }

    fn coarsen(&self, merger: &LegendreCoarsener<T>) -> Self {
        let r = merger.ratio();
        let w = self.p + 1;
        let steps = self.steps / r;
        let mut values = vec![T::zero(); steps * self.m * w];
        let mut stacked = vec![T::zero(); r * w];
        for s in 0..steps {
            for i in 0..self.m {
                for c in 0..r {
                    let start = ((s * r + c) * self.m + i) * w;
                    stacked[c * w..(c + 1) * w].copy_from_slice(&self.values[start..start + w]);
                }
                let out = (s * self.m + i) * w;
                merger.merge_row(&stacked, &mut values[out..out + w]);
            }
        }
        Self {
            h: self.h * T::from_count(r),
            steps,
            m: self.m,
            p: self.p,
            values,
        }
    }

    fn run<S: SdeSystem<T> + ?Sized>(&self, stepper: &mut Stepper<'_, T, S>, x0: &[T], iv: &Interval<T>) -> Result<Vec<T>> {
        let mut x = x0.to_vec();
        for s in 0..self.steps {
            stepper.step(&mut x, iv.start() + T::from_count(s) * self.h, &self.rows(s));
            check_state(&x, s)?;
        }
        Ok(x)
    }

    fn total_increments(&self) -> Vec<T> {
        let sqrt_h = self.h.sqrt();
        (0..self.m)
            .map(|i| (0..self.steps).map(|s| sqrt_h * self.values[(s * self.m + i) * (self.p + 1)]).sum())
            .collect()
    }
}

/// Strong error of each configuration against `reference`, all runs of one
/// trial sharing a single Brownian path. Trial `r` draws its finest-grid
/// tables from `derive_seed(seed, [r])`; the configurations' own seeds are
/// not used.
pub fn strong_error<T: Real, S: SdeSystem<T> + ?Sized>(
    system: &S,
    cfgs: &[SchemeConfig<T>],
    reference: &Reference<T>,
    trials: usize,
    seed: u64,
    x0: &[T],
    iv: &Interval<T>,
) -> Result<Vec<StrongErrorRow>> {
    if trials < 2 {
        return Err(invalid("trials", format!("need at least 2 trials, got {trials}")));
    }
    if cfgs.is_empty() {
        return Err(invalid("cfgs", "need at least one configuration"));
    }
    if x0.len() != system.state_dim() {
        return Err(Error::ShapeMismatch(format!(
            "initial state has {} entries, system dimension is {}",
            x0.len(),
            system.state_dim()
        )));
    }
    let mut runs: Vec<SchemeConfig<T>> = cfgs.to_vec();
    let closed_form = match reference {
        Reference::Scheme(r) => {
            runs.push(*r);
            false
        }
        Reference::ClosedForm => {
            let probe = vec![T::zero(); system.noise_dim()];
            if system.exact_solution(x0, iv, &probe).is_none() {
                return Err(invalid("reference", "system has no closed-form solution"));
            }
            true
        }
    };
    let steps: Vec<usize> = runs.iter().map(|c| step_count(c.h, iv)).collect::<Result<_>>()?;
    let fine_steps = *steps.iter().max().expect("non-empty");
    if steps.iter().any(|&n| !fine_steps.is_multiple_of(n)) {
        return Err(invalid("h", "the finest step must divide every other step"));
    }
    let p = runs.iter().map(|c| c.p).max().unwrap_or(0);
    let m = system.noise_dim();
    let fine_h = iv.length() / T::from_count(fine_steps);

    // Grids from fine to coarse; each coarsened from the finest one it divides.
    let mut levels: Vec<usize> = steps.clone();
    levels.sort_unstable_by(|a, b| b.cmp(a));
    levels.dedup();
    let mut mergers = Vec::with_capacity(levels.len());
    for (l, &n) in levels.iter().enumerate().skip(1) {
        let parent = (0..l).rev().find(|&q| levels[q].is_multiple_of(n)).expect("finest grid divides all");
        mergers.push((parent, LegendreCoarsener::new(levels[parent] / n, p)?));
    }
    let mut steppers = runs
        .iter()
        .zip(&steps)
        .map(|(c, &n)| Ok((Stepper::new(system, c.scheme, iv.length() / T::from_count(n), c.p)?, n)))
        .collect::<Result<Vec<_>>>()?;

    let mut errors = vec![Vec::with_capacity(trials); cfgs.len()];
    for trial in 0..trials {
        let mut rng = stream(derive_seed(seed, &[trial as u64]), &[]);
        let fine = GridTables {
            h: fine_h,
            steps: fine_steps,
            m,
            p,
            values: (0..fine_steps * m * (p + 1)).map(|_| T::lit(next_normal(&mut rng))).collect(),
        };
        let mut grids = vec![fine];
        for (parent, merger) in &mergers {
            let coarse = grids[*parent].coarsen(merger);
            grids.push(coarse);
        }
        let grid_of = |n: usize| &grids[levels.iter().position(|&v| v == n).expect("level exists")];
        let mut terminals = Vec::with_capacity(runs.len());
        for (stepper, n) in steppers.iter_mut() {
            terminals.push(grid_of(*n).run(stepper, x0, iv)?);
        }
        let target = if closed_form {
            system
                .exact_solution(x0, iv, &grids[0].total_increments())
                .expect("checked above")
        } else {
            terminals.pop().expect("reference run")
        };
        for (out, x) in errors.iter_mut().zip(&terminals) {
            let sq: T = x.iter().zip(&target).map(|(&a, &b)| (a - b) * (a - b)).sum();
            out.push(sq.to_f64_lossy());
        }
    }

    Ok(cfgs
        .iter()
        .zip(&errors)
        .map(|(c, sq)| {
            let est = MeanEstimate::from_samples(sq);
            let rmse = est.mean.sqrt();
            StrongErrorRow {
                scheme: c.scheme,
                h: c.h.to_f64_lossy(),
                p: c.p,
                rmse,
                stderr: if rmse > 0.0 { est.stderr / (2.0 * rmse) } else { 0.0 },
                trials,
            }
        })
        .collect())
}
