//! Probabilists' Hermite polynomials.
//!
//! These are the polynomials orthogonal under the standard normal weight
//! `e^{-x²/2}`: `H_0 = 1`, `H_1 = x`, `H_2 = x² - 1`, `H_3 = x³ - 3x`, ...
//! (not the physicists' `e^{-x²}` family). `E[H_n(Z) H_m(Z)] = n! δ_nm` for
//! `Z ~ N(0, 1)`.
//!
//! The two-argument family is `H_n(x, y) = y^{n/2} H_n(x / sqrt(y))`, a
//! polynomial in both arguments with `H_n(x, 1) = H_n(x)` and `H_n(x, 0) = x^n`.

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Largest supported degree.
pub const MAX_HERMITE_DEGREE: u32 = 64;

/// A polynomial degree in `0..=64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HermiteDegree(u32);

impl HermiteDegree {
    pub fn new(n: u32) -> Result<Self> {
        if n > MAX_HERMITE_DEGREE {
            return Err(invalid("n", format!("Hermite degree {n} exceeds {MAX_HERMITE_DEGREE}")));
        }
        Ok(Self(n))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

impl TryFrom<usize> for HermiteDegree {
    type Error = crate::Error;

    fn try_from(n: usize) -> Result<Self> {
        u32::try_from(n)
            .map_err(|_| invalid("n", format!("Hermite degree {n} exceeds {MAX_HERMITE_DEGREE}")))
            .and_then(HermiteDegree::new)
    }
}

/// `H_n(x)` via `H_{n+1} = x H_n - n H_{n-1}`.
pub fn hermite<T: Real>(n: HermiteDegree, x: T) -> T {
    hermite2_unchecked(n.get(), x, T::one())
}

/// `H_n(x, y)` via `H_{n+1} = x H_n - n y H_{n-1}`; requires `y >= 0`.
pub fn hermite2<T: Real>(n: HermiteDegree, x: T, y: T) -> Result<T> {
    if y < T::zero() || y.is_nan() {
        return Err(invalid("y", format!("second Hermite argument must be >= 0, got {y}")));
    }
    Ok(hermite2_unchecked(n.get(), x, y))
}

fn hermite2_unchecked<T: Real>(n: u32, x: T, y: T) -> T {
    let mut prev = T::one();
    if n == 0 {
        return prev;
    }
    let mut cur = x;
    for k in 1..n {
        let next = x * cur - T::from_count(k as usize) * y * prev;
        prev = cur;
        cur = next;
    }
    cur
}
