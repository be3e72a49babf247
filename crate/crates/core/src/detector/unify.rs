//! Gaussian scaling of raw detector scores into `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::scalar::{mean_std, Scalar};

/// Mean and standard deviation of a context's raw training scores.
/// A zero deviation marks a degenerate context whose scores unify to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnificationParams<T> {
    pub mean: T,
    pub std: T,
}

impl<T: Scalar> UnificationParams<T> {
    pub fn fit(raw: &[T]) -> Self {
        let (mean, std) = mean_std(raw);
        Self { mean, std }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.std > T::zero())
    }

    /// `max(0, erf((s - mean) / (std * sqrt 2)))`.
    pub fn unify_one(&self, raw: T) -> T {
        if self.is_degenerate() {
            return T::zero();
        }
        let z = (raw - self.mean) / (self.std * T::lit(std::f64::consts::SQRT_2));
        z.error_fn().max(T::zero()).min(T::one())
    }
}

pub fn unify<T: Scalar>(params: &UnificationParams<T>, raw: &[T]) -> Vec<T> {
    raw.iter().map(|&s| params.unify_one(s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_values() {
        let p = UnificationParams { mean: 0.4f64, std: 0.1 };
        assert_eq!(p.unify_one(0.4), 0.0);
        assert!((p.unify_one(0.5) - 0.682_689_492_137_086).abs() < 1e-12);
        assert_eq!(p.unify_one(0.2), 0.0);
    }

    #[test]
    fn degenerate_maps_to_zero() {
        let p = UnificationParams::fit(&[0.5f64; 10]);
        assert!(p.is_degenerate());
        assert!(unify(&p, &[0.5, 0.9]).iter().all(|&v| v == 0.0));
    }

    proptest! {
        #[test]
        fn monotone_and_bounded(
            mean in 0.0f64..1.0,
            std in 1e-4f64..1.0,
            a in 0.0f64..1.0,
            b in 0.0f64..1.0,
        ) {
            let p = UnificationParams { mean, std };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (ul, uh) = (p.unify_one(lo), p.unify_one(hi));
            prop_assert!(ul <= uh);
            prop_assert!((0.0..=1.0).contains(&ul) && (0.0..=1.0).contains(&uh));
        }
    }
}
