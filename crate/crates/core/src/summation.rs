//! Compensated accumulation.
//!
//! [`CompensatedSum`] keeps a Neumaier running error term so that long
//! signed series (hundreds of thousands of Kloosterman/Bessel products)
//! accumulate with an error independent of the number of terms.
//! Partial sums merge with the same error-free transformation, which makes
//! block-parallel reductions agree with the sequential order to within a
//! few ulps.

use std::iter::Sum;
use std::ops::{Add, AddAssign};

#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

impl CompensatedSum {
    pub const fn new() -> Self {
        Self {
            sum: 0.0,
            carry: 0.0,
        }
    }

    #[inline]
    pub fn push(&mut self, x: f64) {
        let (s, e) = two_sum(self.sum, x);
        self.sum = s;
        self.carry += e;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        let (s, e) = two_sum(self.sum, other.sum);
        self.sum = s;
        self.carry += e + other.carry;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl AddAssign<f64> for CompensatedSum {
    fn add_assign(&mut self, rhs: f64) {
        self.push(rhs);
    }
}

impl Add for CompensatedSum {
    type Output = CompensatedSum;

    fn add(mut self, rhs: Self) -> Self {
        self.merge(&rhs);
        self
    }
}

impl Sum<f64> for CompensatedSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

impl Sum<CompensatedSum> for CompensatedSum {
    fn sum<I: Iterator<Item = CompensatedSum>>(iter: I) -> Self {
        iter.fold(CompensatedSum::new(), |a, b| a + b)
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum(xs: &[f64]) -> f64 {
    xs.iter().copied().sum::<CompensatedSum>().value()
}
