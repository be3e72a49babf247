//! Contextual anomaly injection into existing data.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Context, Dataset};
use crate::scalar::{mean_std, Scalar};

/// Candidate donors examined per injected point.
pub const DONOR_CANDIDATES: usize = 50;

/// Number of points `perturb_inject` changes for a given fraction.
pub fn injection_count(n: usize, fraction: f64) -> Result<usize> {
    if !(0.0..=0.5).contains(&fraction) {
        return Err(Error::InfeasibleFraction(fraction));
    }
    let count = (fraction * n as f64 - 1e-9).ceil().max(0.0) as usize;
    if count > 0 && n < 2 {
        return Err(Error::InfeasibleFraction(fraction));
    }
    Ok(count)
}

/// Picks `ceil(fraction * n)` points and replaces each one's behavioral
/// values with those of the most distant (in standardized behavioral space)
/// of several random donors, keeping its contextual values. Existing labels
/// are replaced: injected rows become anomalies, the rest normal.
pub fn perturb_inject<T: Scalar>(data: &Dataset<T>, context: &Context, fraction: f64, seed: u64) -> Result<Dataset<T>> {
    context.validate(data.d())?;
    let n = data.n();
    let count = injection_count(n, fraction)?;
    let behavioral = context.behavioral();
    let original = data.features().to_owned();
    let scale: Vec<(T, T)> = behavioral
        .iter()
        .map(|&b| {
            let col: Vec<T> = original.column(b).to_vec();
            let (m, s) = mean_std(&col);
            (m, if s > T::zero() { s } else { T::one() })
        })
        .collect();
    let z = |r: usize, k: usize| (original[[r, behavioral[k]]] - scale[k].0) / scale[k].1;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = sample(&mut rng, n, count).into_vec();
    let mut features = original.clone();
    let mut labels = vec![0u8; n];
    for &target in &chosen {
        let mut best = (T::neg_infinity(), target);
        for _ in 0..DONOR_CANDIDATES {
            let mut donor = rng.gen_range(0..n - 1);
            if donor >= target {
                donor += 1;
            }
            let dist = (0..behavioral.len()).fold(T::zero(), |acc, k| {
                let diff = z(target, k) - z(donor, k);
                acc + diff * diff
            });
            if dist > best.0 {
                best = (dist, donor);
            }
        }
        for &b in behavioral {
            features[[target, b]] = original[[best.1, b]];
        }
        labels[target] = 1;
    }
    let names = data.feature_names().to_vec();
    crate::model::validate_dataset(features, Some(labels))?
        .with_feature_names(names)?
        .with_true_context(context.clone())
}
