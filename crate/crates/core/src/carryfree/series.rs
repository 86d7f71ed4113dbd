//! Binary formal series with carry-free (GF(2)) arithmetic, truncated to a
//! window of [`WINDOW`] levels below the leading one.

use std::fmt;

use serde::Serialize;

/// Number of bit levels kept below and including the leading one.
pub const WINDOW: u32 = 64;

/// `Σ x_i z^i` stored as the degree of the leading one and a window whose
/// most significant bit is the coefficient at `degree`, the next bit the
/// coefficient at `degree - 1`, and so on.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct BitSeries {
    degree: i64,
    window: u64,
}

impl BitSeries {
    pub const ZERO: Self = Self {
        degree: i64::MIN,
        window: 0,
    };

    /// Normalizes `window` (MSB at level `top`) so that its leading one sits in the MSB.
    pub fn from_window(top: i64, window: u64) -> Self {
        if window == 0 {
            return Self::ZERO;
        }
        let lz = window.leading_zeros();
        Self {
            degree: top - i64::from(lz),
            window: window << lz,
        }
    }

    pub fn monomial(level: i64) -> Self {
        Self {
            degree: level,
            window: 1 << 63,
        }
    }

    /// The series with ones at `levels`; levels more than `WINDOW - 1` below
    /// the highest are dropped.
    pub fn from_levels(levels: &[i64]) -> Self {
        let Some(&top) = levels.iter().max() else {
            return Self::ZERO;
        };
        let window = levels
            .iter()
            .filter(|&&l| top - l < i64::from(WINDOW))
            .fold(0u64, |w, &l| w ^ (1 << (63 - (top - l))));
        Self::from_window(top, window)
    }

    pub fn is_zero(&self) -> bool {
        self.window == 0
    }

    /// Degree of the leading one, `None` for the zero series.
    pub fn degree(&self) -> Option<i64> {
        (!self.is_zero()).then_some(self.degree)
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    /// Coefficient at `level`; levels outside the window read as zero.
    pub fn coefficient(&self, level: i64) -> bool {
        if self.is_zero() || level > self.degree {
            return false;
        }
        let depth = self.degree - level;
        depth < i64::from(WINDOW) && (self.window >> (63 - depth)) & 1 == 1
    }

    /// Levels holding a one, highest first.
    pub fn levels(&self) -> Vec<i64> {
        (0..i64::from(WINDOW))
            .filter(|&j| (self.window >> (63 - j)) & 1 == 1)
            .map(|j| self.degree - j)
            .collect()
    }

    /// Multiplication by `z^k`.
    pub fn shift(&self, k: i64) -> Self {
        if self.is_zero() {
            *self
        } else {
            Self {
                degree: self.degree + k,
                window: self.window,
            }
        }
    }

    /// Keeps only the levels `>= level`.
    pub fn truncate_below(&self, level: i64) -> Self {
        if self.is_zero() || level > self.degree {
            return Self::ZERO;
        }
        let keep = self.degree - level + 1;
        if keep >= i64::from(WINDOW) {
            return *self;
        }
        Self::from_window(self.degree, self.window & !(u64::MAX >> keep))
    }

    /// Window aligned so that its MSB sits at level `top >= degree`.
    fn aligned(&self, top: i64) -> u64 {
        if self.is_zero() {
            return 0;
        }
        let shift = top - self.degree;
        if shift >= i64::from(WINDOW) {
            0
        } else {
            self.window >> shift
        }
    }
}

impl fmt::Debug for BitSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.degree() {
            None => write!(f, "BitSeries(0)"),
            Some(d) => write!(f, "BitSeries(deg {d}, {:064b})", self.window),
        }
    }
}

/// Level-wise XOR.
pub fn cf_add(x: &BitSeries, y: &BitSeries) -> BitSeries {
    match (x.degree(), y.degree()) {
        (None, _) => *y,
        (_, None) => *x,
        (Some(dx), Some(dy)) => {
            let top = dx.max(dy);
            BitSeries::from_window(top, x.aligned(top) ^ y.aligned(top))
        }
    }
}

fn clmul(x: u64, y: u64) -> u128 {
    let mut acc = 0u128;
    let mut y = y;
    while y != 0 {
        let i = y.trailing_zeros();
        acc ^= u128::from(x) << i;
        y &= y - 1;
    }
    acc
}

/// GF(2) convolution; the degree of a product of nonzero series is the sum of degrees.
pub fn cf_mul(x: &BitSeries, y: &BitSeries) -> BitSeries {
    match (x.degree(), y.degree()) {
        (Some(dx), Some(dy)) => {
            // Both leading ones are MSBs, so the product's leading one is bit 126.
            let p = clmul(x.window, y.window);
            BitSeries {
                degree: dx + dy,
                window: (p >> 63) as u64,
            }
        }
        _ => BitSeries::ZERO,
    }
}
