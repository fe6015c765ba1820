use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Mergeable first and second moments: count, sum and the sum of squared
/// deviations from the mean. Merging follows Chan et al.'s pairwise update,
/// so the result depends only on the merge tree, not on arrival order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments<S> {
    pub count: u64,
    pub sum: S,
    pub m2: S,
}

impl<S: Scalar> Default for Moments<S> {
    fn default() -> Self {
        Self::empty()
    }
}

impl<S: Scalar> Moments<S> {
    pub fn empty() -> Self {
        Moments {
            count: 0,
            sum: S::zero(),
            m2: S::zero(),
        }
    }

    pub fn of(value: S) -> Self {
        Moments {
            count: 1,
            sum: value,
            m2: S::zero(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn mean(&self) -> S {
        if self.count == 0 {
            S::zero()
        } else {
            self.sum / S::from_u64_lossy(self.count)
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let na = S::from_u64_lossy(self.count);
        let nb = S::from_u64_lossy(other.count);
        let n = na + nb;
        let delta = other.mean() - self.mean();
        Moments {
            count: self.count + other.count,
            sum: self.sum + other.sum,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n,
        }
    }

    /// Adds `n` observations equal to zero.
    pub fn with_zeros(&self, n: u64) -> Self {
        self.merge(&Moments {
            count: n,
            sum: S::zero(),
            m2: S::zero(),
        })
    }

    /// Unbiased sample variance; zero below two observations.
    pub fn sample_variance(&self) -> S {
        if self.count < 2 {
            S::zero()
        } else {
            (self.m2 / S::from_u64_lossy(self.count - 1)).max(S::zero())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_two_pass_variance() {
        let xs: [f64; 8] = [2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0];
        let m = xs
            .iter()
            .fold(Moments::empty(), |acc, &x| acc.merge(&Moments::of(x)));
        assert_eq!(m.count, 8);
        assert_eq!(m.sum, 40.0);
        // population variance 4, sample variance 32/7
        assert!((m.sample_variance() - 32.0 / 7.0).abs() < 1e-12);
        let left = xs[..3].iter().fold(Moments::empty(), |a, &x| a.merge(&Moments::of(x)));
        let right = xs[3..].iter().fold(Moments::empty(), |a, &x| a.merge(&Moments::of(x)));
        assert!((left.merge(&right).m2 - m.m2).abs() < 1e-12);
    }

    #[test]
    fn zeros_extend_indicator_like() {
        // three ones among five observations
        let m = Moments::<f64> { count: 3, sum: 3.0, m2: 0.0 }.with_zeros(2);
        assert_eq!(m.count, 5);
        assert!((m.sample_variance() - 0.3).abs() < 1e-12);
    }
}
