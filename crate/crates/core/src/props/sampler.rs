//! Random corpus subsets whose size is exponentially distributed.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};

pub const DEFAULT_MEAN_FRACTION: f64 = 0.2;

/// Sample size before clamping: an exponential draw with mean
/// `mean_fraction * pool_size`, rounded to the nearest integer.
pub fn draw_sample_size<R: Rng + ?Sized>(pool_size: usize, mean_fraction: f64, rng: &mut R) -> Result<u64> {
    if !(mean_fraction > 0.0 && mean_fraction <= 1.0) {
        return Err(Error::invalid(format!("mean fraction {mean_fraction} outside (0, 1]")));
    }
    if pool_size == 0 {
        return Err(Error::invalid("empty seed pool"));
    }
    let mean = mean_fraction * pool_size as f64;
    let exp = Exp::new(1.0 / mean).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(exp.sample(rng).round() as u64)
}

/// Distinct seeds drawn uniformly from `pool`, returned in pool order.
pub fn sample_corpus(pool: &[String], mean_fraction: f64, seed: u64) -> Result<Vec<String>> {
    let mut seen = HashSet::new();
    if let Some(dup) = pool.iter().find(|s| !seen.insert(s.as_str())) {
        return Err(Error::invalid(format!("duplicate seed id `{dup}` in pool")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = draw_sample_size(pool.len(), mean_fraction, &mut rng)?.clamp(1, pool.len() as u64);
    let mut idx = index::sample(&mut rng, pool.len(), k as usize).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pool[i].clone()).collect())
}
