use rand::seq::index;

use super::dataset::{InteractionDataset, SparseCounts};
use crate::{par, rng, Error, Result};

/// Training counts plus the held-out artists of every user.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: InteractionDataset,
    /// Sorted held-out artist indices per user.
    pub masked: Vec<Vec<u32>>,
    pub seed: u64,
    pub holdout_fraction: f64,
}

impl SplitDataset {
    pub fn num_masked(&self) -> usize {
        self.masked.iter().map(Vec::len).sum()
    }
}

/// Number of artists held out from a profile of `profile_len` artists.
///
/// Round-half-up of `fraction * len`, at least one when the profile has two or
/// more artists, and never the whole profile.
pub fn holdout_size(profile_len: usize, fraction: f64) -> usize {
    if profile_len < 2 {
        return 0;
    }
    let k = (fraction * profile_len as f64 + 0.5).floor() as usize;
    k.clamp(1, profile_len - 1)
}

/// Masks a uniformly random `holdout_fraction` of every user's artists.
///
/// Each user draws from its own stream keyed by `(seed, user)`, so the split is
/// independent of thread count.
pub fn split_mask(
    dataset: &InteractionDataset,
    holdout_fraction: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if !(holdout_fraction > 0.0 && holdout_fraction < 1.0) {
        return Err(Error::validation(format!(
            "holdout fraction must lie in (0, 1), got {holdout_fraction}"
        )));
    }
    let per_user = par::map_range(dataset.num_users(), |u| {
        let profile = dataset.profile(u);
        let counts = dataset.profile_counts(u);
        let k = holdout_size(profile.len(), holdout_fraction);
        let mut held = vec![false; profile.len()];
        if k > 0 {
            let mut r = rng::stream(seed, &[u as u64]);
            for i in index::sample(&mut r, profile.len(), k) {
                held[i] = true;
            }
        }
        let mut train_row = Vec::with_capacity(profile.len() - k);
        let mut masked = Vec::with_capacity(k);
        for ((&a, &c), h) in profile.iter().zip(counts).zip(held) {
            if h {
                masked.push(a);
            } else {
                train_row.push((a, c));
            }
        }
        (train_row, masked)
    });
    let (rows, masked): (Vec<_>, Vec<_>) = per_user.into_iter().unzip();
    let counts = SparseCounts::from_rows(dataset.num_artists(), rows)?;
    Ok(SplitDataset {
        train: dataset.with_counts(counts)?,
        masked,
        seed,
        holdout_fraction,
    })
}
