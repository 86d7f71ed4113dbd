//! Path-by-path comparison of the plant with gain `a` and the plant with
//! gain 1, in exact binary arithmetic.
//!
//! Feeding the `a`-plant the controls `a^k U[k]` of the unit plant must give
//! `X_a[k] = a^k X[k]` on every path. In floating point the literal recursion
//! is open loop with respect to `X_a` and amplifies rounding by `1/|1 + B d|`
//! per step, so the comparison is carried out on exact dyadic rationals
//! built from the same `f64` draws.

use std::cmp::Ordering;
use std::ops::{Add, Mul, Sub};

use num_bigint::BigInt;
use num_traits::{Float, Signed, Zero};

use super::rng;
use crate::distributions::ActuationDistribution;

/// `m · 2^e`.
#[derive(Debug, Clone, PartialEq)]
struct Dyadic {
    m: BigInt,
    e: i64,
}

impl Dyadic {
    fn from_f64(x: f64) -> Self {
        let (mantissa, exponent, sign) = x.integer_decode();
        Self {
            m: BigInt::from(sign) * BigInt::from(mantissa),
            e: i64::from(exponent),
        }
    }

    fn is_zero(&self) -> bool {
        self.m.is_zero()
    }

    /// `log2 |self|`, rounded once from the leading 53 bits.
    fn log2_abs(&self) -> f64 {
        if self.is_zero() {
            return f64::NEG_INFINITY;
        }
        let bits = self.m.bits();
        let shift = bits.saturating_sub(53);
        let top: BigInt = self.m.abs() >> shift;
        let top = top.to_u64_digits().1.first().copied().unwrap_or(0) as f64;
        // Scale the leading bits into [1, 2) so the fractional log is taken on its own.
        let kept = (bits - shift) as i32;
        let frac = top * 2f64.powi(1 - kept);
        frac.log2() + (bits as i64 - 1 + self.e) as f64
    }
}

impl Add for &Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: &Dyadic) -> Dyadic {
        match self.e.cmp(&rhs.e) {
            Ordering::Equal => Dyadic {
                m: &self.m + &rhs.m,
                e: self.e,
            },
            Ordering::Less => Dyadic {
                m: &self.m + (&rhs.m << (rhs.e - self.e) as usize),
                e: self.e,
            },
            Ordering::Greater => Dyadic {
                m: (&self.m << (self.e - rhs.e) as usize) + &rhs.m,
                e: rhs.e,
            },
        }
    }
}

impl Sub for &Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: &Dyadic) -> Dyadic {
        let neg = Dyadic {
            m: -&rhs.m,
            e: rhs.e,
        };
        self + &neg
    }
}

impl Mul for &Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: &Dyadic) -> Dyadic {
        Dyadic {
            m: &self.m * &rhs.m,
            e: self.e + rhs.e,
        }
    }
}

/// Runs both plants for `horizon` steps from `x0 = 1` on the same gain draws
/// and returns `max_k |X_a[k] - a^k X[k]| / |a^k X[k]|` (zero where both vanish).
pub fn scaling_equivalence_check(dist: &ActuationDistribution, a: f64, d: f64, horizon: usize, seed: u64) -> f64 {
    let mut draws = rng::path_rng(seed, rng::ROLE_SCALING, 0);
    let a_exact = Dyadic::from_f64(a);
    let d_exact = Dyadic::from_f64(d);
    let one = Dyadic::from_f64(1.0);

    let mut x = one.clone();
    let mut x_a = one.clone();
    let mut a_pow = one;
    let mut worst: f64 = 0.0;
    for _ in 0..horizon {
        let b = Dyadic::from_f64(dist.sample(&mut draws));
        let u = &d_exact * &x;
        let u_a = &a_pow * &u;
        x = &x + &(&b * &u);
        x_a = &a_exact * &(&x_a + &(&b * &u_a));
        a_pow = &a_pow * &a_exact;

        let reference = &a_pow * &x;
        let diff = &x_a - &reference;
        if diff.is_zero() {
            continue;
        }
        let rel = if reference.is_zero() {
            f64::INFINITY
        } else {
            (diff.log2_abs() - reference.log2_abs()).exp2()
        };
        worst = worst.max(rel);
    }
    worst
}
