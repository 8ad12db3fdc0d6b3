//! Exact floating-point accumulation.
//!
//! Word, sentence and subtree scores are all sums of the same per-token
//! values grouped differently. Plain `f64` addition is not associative, so
//! two groupings of one multiset can disagree in the last bit. [`ExactSum`]
//! keeps the running total as a non-overlapping expansion (Shewchuk's
//! algorithm), which represents the real-valued sum without error, and
//! [`ExactSum::value`] rounds it once, correctly. Any grouping of the same
//! multiset therefore produces the identical `f64`.

/// Error-free running sum of `f64` values.
#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
    // Non-finite inputs cannot be represented by an expansion; they are
    // tracked separately and dominate the result.
    special: f64,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        if !x.is_finite() {
            self.special += x;
            return;
        }
        let mut x = x;
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        if x.is_finite() {
            self.partials.push(x);
        } else {
            // Intermediate overflow: fall back to the overflowed value.
            self.special += x;
        }
    }

    /// Adds every component of another exact sum.
    pub fn add_sum(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
        self.special += other.special;
    }

    /// True when the represented value is exactly zero.
    pub fn is_zero(&self) -> bool {
        self.special == 0.0 && self.partials.iter().all(|&p| p == 0.0)
    }

    /// Exact difference test: `self - other == 0` in real arithmetic.
    pub fn exactly_equals(&self, other: &ExactSum) -> bool {
        if self.special != 0.0 || other.special != 0.0 {
            return self.value() == other.value();
        }
        let mut diff = self.clone();
        for &p in &other.partials {
            diff.add(-p);
        }
        diff.is_zero()
    }

    /// Correctly rounded value of the sum.
    pub fn value(&self) -> f64 {
        if self.special != 0.0 {
            return self.special;
        }
        let mut n = self.partials.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = self.partials[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = self.partials[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Half-way case: the remaining partials decide the rounding
        // direction.
        if n > 0 && ((lo < 0.0 && self.partials[n - 1] < 0.0) || (lo > 0.0 && self.partials[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = ExactSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

impl Extend<f64> for ExactSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

/// Correctly rounded sum of a sequence.
pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<ExactSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cancels_catastrophically_large_terms() {
        assert_eq!(exact_sum([1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum([0.1, 0.2, -0.3]), 2.7755575615628914e-17);
        assert_eq!(exact_sum(std::iter::empty()), 0.0);
    }

    #[test]
    fn matches_known_rounding() {
        // 0.1 ten times: the naive sum is 0.9999999999999999.
        assert_eq!(exact_sum(std::iter::repeat_n(0.1, 10)), 1.0);
    }

    #[test]
    fn propagates_non_finite() {
        assert!(exact_sum([1.0, f64::NAN]).is_nan());
        assert_eq!(exact_sum([1.0, f64::INFINITY]), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn order_independent(mut xs in prop::collection::vec(-1e6f64..1e6, 0..40), seed in 0u64..1000) {
            let a = exact_sum(xs.iter().copied());
            // Deterministic shuffle driven by the seed.
            let n = xs.len();
            for i in (1..n).rev() {
                let j = ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64)) % (i as u64 + 1)) as usize;
                xs.swap(i, j);
            }
            prop_assert_eq!(a.to_bits(), exact_sum(xs.iter().copied()).to_bits());
        }

        #[test]
        fn grouping_is_exact(xs in prop::collection::vec(-1e3f64..1e3, 1..30), split in 0usize..30) {
            let split = split.min(xs.len());
            let left: ExactSum = xs[..split].iter().copied().collect();
            let right: ExactSum = xs[split..].iter().copied().collect();
            let mut joined = left.clone();
            joined.add_sum(&right);
            let whole: ExactSum = xs.iter().copied().collect();
            prop_assert!(joined.exactly_equals(&whole));
            prop_assert_eq!(joined.value().to_bits(), whole.value().to_bits());
        }
    }
}
