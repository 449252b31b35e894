//! Scalar abstraction for the spray pipeline.
//!
//! The fundamental tensor and the spray are rational in `y`, so evaluating
//! them over second-order dual numbers yields the exact first and second
//! `y`-derivatives needed for the nonlinear connection and the Berwald
//! coefficients, with no step-size noise.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Arithmetic scalar the pipeline is generic over: `f64` for plain values,
/// [`HyperDual`] for derivatives.
pub trait Scal:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    fn from_f64(v: f64) -> Self;
    fn zero() -> Self {
        Self::from_f64(0.0)
    }
    /// Real part.
    fn value(self) -> f64;
}

impl Scal for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
}

/// Truncated second-order dual number `re + e1 d1 + e2 d2 + e1 e2 d12`
/// with `e1^2 = e2^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperDual {
    pub re: f64,
    pub d1: f64,
    pub d2: f64,
    pub d12: f64,
}

impl HyperDual {
    pub fn constant(re: f64) -> Self {
        HyperDual { re, d1: 0.0, d2: 0.0, d12: 0.0 }
    }

    /// Variable seeded in one or both dual directions.
    pub fn variable(re: f64, d1: f64, d2: f64) -> Self {
        HyperDual { re, d1, d2, d12: 0.0 }
    }

    fn recip(self) -> Self {
        let r = 1.0 / self.re;
        let r2 = r * r;
        HyperDual {
            re: r,
            d1: -self.d1 * r2,
            d2: -self.d2 * r2,
            d12: (2.0 * self.d1 * self.d2 * r - self.d12) * r2,
        }
    }
}

impl Add for HyperDual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        HyperDual {
            re: self.re + o.re,
            d1: self.d1 + o.d1,
            d2: self.d2 + o.d2,
            d12: self.d12 + o.d12,
        }
    }
}

impl Sub for HyperDual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        HyperDual {
            re: self.re - o.re,
            d1: self.d1 - o.d1,
            d2: self.d2 - o.d2,
            d12: self.d12 - o.d12,
        }
    }
}

impl Mul for HyperDual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        HyperDual {
            re: self.re * o.re,
            d1: self.re * o.d1 + self.d1 * o.re,
            d2: self.re * o.d2 + self.d2 * o.re,
            d12: self.re * o.d12 + self.d12 * o.re + self.d1 * o.d2 + self.d2 * o.d1,
        }
    }
}

impl Div for HyperDual {
    type Output = Self;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl Neg for HyperDual {
    type Output = Self;
    fn neg(self) -> Self {
        HyperDual { re: -self.re, d1: -self.d1, d2: -self.d2, d12: -self.d12 }
    }
}

impl AddAssign for HyperDual {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl SubAssign for HyperDual {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl Scal for HyperDual {
    fn from_f64(v: f64) -> Self {
        HyperDual::constant(v)
    }
    fn value(self) -> f64 {
        self.re
    }
}

/// Gauss-Jordan inverse of a row-major `n x n` matrix over `S`, pivoting on
/// the real part.
pub fn invert<S: Scal>(n: usize, m: &[S]) -> Option<Vec<S>> {
    debug_assert_eq!(m.len(), n * n);
    if m.iter().any(|v| !v.value().is_finite()) {
        return None;
    }
    let mut a = m.to_vec();
    let mut inv: Vec<S> = (0..n * n)
        .map(|idx| if idx % (n + 1) == 0 { S::from_f64(1.0) } else { S::zero() })
        .collect();

    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&r1, &r2| {
                let v1 = a[r1 * n + col].value().abs();
                let v2 = a[r2 * n + col].value().abs();
                v1.partial_cmp(&v2).unwrap_or(std::cmp::Ordering::Less)
            })
            .expect("nonempty pivot range");
        let pivot_mag = a[pivot_row * n + col].value().abs();
        if !pivot_mag.is_finite() || pivot_mag < 1e-300 {
            return None;
        }
        if pivot_row != col {
            for j in 0..n {
                a.swap(col * n + j, pivot_row * n + j);
                inv.swap(col * n + j, pivot_row * n + j);
            }
        }
        let pivot = a[col * n + col];
        for j in 0..n {
            a[col * n + j] = a[col * n + j] / pivot;
            inv[col * n + j] = inv[col * n + j] / pivot;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = a[r * n + col];
            if factor.value() == 0.0 && factor.value().abs() == 0.0 {
                // Still must clear dual parts if present.
            }
            for j in 0..n {
                let t = factor * a[col * n + j];
                a[r * n + j] -= t;
                let t = factor * inv[col * n + j];
                inv[r * n + j] -= t;
            }
        }
    }
    Some(inv)
}
