use convland_core::assumptions::{check_distinct_patches, perturb_dataset};
use convland_core::{Dataset, PatchLayout};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{HarnessError, Result};

const MAX_DRAWS: u64 = 3;

/// Gaussian inputs with shuffled, balanced class labels and one-hot targets, plus
/// Gaussian noise of variance `perturb_variance`.
///
/// Distinctness is checked entrywise (single-pixel patches), which implies distinct
/// patches for every layout over the same input.
pub fn synthesize_dataset(n: usize, d: usize, m: usize, seed: u64, perturb_variance: f64) -> Result<Dataset> {
    if n == 0 || d == 0 || m == 0 {
        return Err(HarnessError::Generation(format!("N={n}, d={d}, m={m} must all be >= 1")));
    }
    let pixels = PatchLayout::conv1d(d, 1, 1)?;
    for draw in 0..MAX_DRAWS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(draw.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut labels: Vec<usize> = (0..n).map(|i| i % m).collect();
        labels.shuffle(&mut rng);
        let x = perturb_dataset(&x, perturb_variance, rng.gen())?;
        if check_distinct_patches(&x, &pixels, 0.0)?.holds {
            return Ok(Dataset::one_hot(x, labels, m)?);
        }
    }
    Err(HarnessError::Generation(format!(
        "inputs still collide after {MAX_DRAWS} draws"
    )))
}

/// Samples per class.
pub fn class_counts(labels: &[usize], m: usize) -> Vec<usize> {
    let mut c = vec![0; m];
    for &l in labels {
        c[l] += 1;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_balanced() {
        let a = synthesize_dataset(16, 10, 2, 5, 1e-5).unwrap();
        let b = synthesize_dataset(16, 10, 2, 5, 1e-5).unwrap();
        assert_eq!(a, b);
        assert_eq!(class_counts(a.labels.as_ref().unwrap(), 2), vec![8, 8]);
        let c = synthesize_dataset(7, 3, 3, 1, 0.0).unwrap();
        let counts = class_counts(c.labels.as_ref().unwrap(), 3);
        assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn singleton_and_bad_sizes() {
        let s = synthesize_dataset(1, 4, 2, 0, 1e-5).unwrap();
        assert_eq!(s.len(), 1);
        assert!(synthesize_dataset(0, 4, 2, 0, 0.0).is_err());
    }
}
