//! Compensated accumulation and error-free transforms.

use core::ops::AddAssign;

/// Kahan-Babuska (Neumaier) running sum.
///
/// Keeps a separate correction term so that adding many terms of widely
/// varying magnitude loses at most a couple of ulps overall.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub const fn new() -> Self {
        Self {
            sum: 0.0,
            compensation: 0.0,
        }
    }

    pub fn add(&mut self, value: f64) {
        let (s, err) = two_sum(self.sum, value);
        self.sum = s;
        self.compensation += err;
    }

    /// Rounded value of the sum.
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }

    /// Unevaluated pair `(hi, lo)` with `hi + lo` the accumulated sum.
    pub fn parts(&self) -> (f64, f64) {
        let (hi, lo) = two_sum(self.sum, self.compensation);
        (hi, lo)
    }
}

impl AddAssign<f64> for NeumaierSum {
    fn add_assign(&mut self, rhs: f64) {
        self.add(rhs);
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of an iterator of terms.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    terms.into_iter().collect::<NeumaierSum>().value()
}

/// `a + b = s + err` exactly (Knuth's branch-free TwoSum).
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

/// `a * b = p + err` exactly, via fused multiply-add.
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let err = libm::fma(a, b, -p);
    (p, err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neumaier_recovers_small_terms() {
        let mut s = NeumaierSum::new();
        s += 1e100;
        s += 1.0;
        s += -1e100;
        assert_eq!(s.value(), 1.0);
    }

    #[test]
    fn naive_loses_what_neumaier_keeps() {
        let terms = [1.0, 1e-16, 1e-16, 1e-16, 1e-16];
        let naive: f64 = terms.iter().sum();
        assert_eq!(naive, 1.0);
        let compensated = compensated_sum(terms.iter().copied());
        assert!((compensated - (1.0 + 4e-16)).abs() < 1e-30 + f64::EPSILON * 0.5);
        assert!(compensated > 1.0);
    }

    #[test]
    fn two_prod_is_exact() {
        let a = 1.0 + f64::EPSILON;
        let (p, e) = two_prod(a, a);
        // (1 + eps)^2 = 1 + 2 eps + eps^2; the eps^2 part is the error term.
        assert_eq!(p, 1.0 + 2.0 * f64::EPSILON);
        assert_eq!(e, f64::EPSILON * f64::EPSILON);
    }

    #[test]
    fn two_sum_is_exact() {
        let (s, e) = two_sum(1.0, 1e-20);
        assert_eq!(s, 1.0);
        assert_eq!(e, 1e-20);
    }
}
