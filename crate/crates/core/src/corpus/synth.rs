//! Desk-scale long-tail generator.
//!
//! Artist `a` (0-based popularity rank) has base weight `(a + 1)^-s`. Artists and
//! users are also assigned to one of `num_communities` taste communities; a user
//! samples its profile without replacement with weight
//! `base^bias * (community_boost if same community else 1)`, where `bias` is the
//! mixing exponent of the user's mainstream group. Counts are `1 + Geometric(p)`.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use super::dataset::{Group, InteractionDataset, SparseCounts};
use crate::{par, rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_artists: usize,
    pub zipf_exponent: f64,
    /// Inclusive `[min, max]` profile size.
    pub profile_size_range: [usize; 2],
    /// Popularity exponent applied by low, medium and high mainstream users.
    pub mainstream_mix: [f64; 3],
    pub num_communities: usize,
    pub community_boost: f64,
    /// Success probability of the geometric play-count distribution.
    pub count_success_prob: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 600,
            num_artists: 2000,
            zipf_exponent: 1.0,
            profile_size_range: [10, 50],
            mainstream_mix: [0.6, 1.0, 1.4],
            num_communities: 8,
            community_boost: 6.0,
            count_success_prob: 0.3,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.profile_size_range;
        if self.num_users < 1 || self.num_artists < 1 {
            return Err(Error::validation("synthetic: num_users and num_artists must be >= 1"));
        }
        if !(self.zipf_exponent > 0.0 && self.zipf_exponent.is_finite()) {
            return Err(Error::validation("synthetic: zipf_exponent must be > 0"));
        }
        if lo < 1 || lo > hi {
            return Err(Error::validation(format!(
                "synthetic: bad profile_size_range [{lo}, {hi}]"
            )));
        }
        if self.mainstream_mix.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::validation("synthetic: mainstream_mix entries must be >= 0"));
        }
        if self.num_communities < 1 || !(self.community_boost >= 1.0) {
            return Err(Error::validation(
                "synthetic: need num_communities >= 1 and community_boost >= 1",
            ));
        }
        if !(self.count_success_prob > 0.0 && self.count_success_prob <= 1.0) {
            return Err(Error::validation("synthetic: count_success_prob must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Group of user `u`: users are split into three contiguous blocks of equal size (±1).
    pub fn group_of(&self, u: usize) -> Group {
        Group::from_index(u * 3 / self.num_users).expect("block index below 3")
    }
}

const ARTIST_STREAM: u64 = 0xA;
const USER_STREAM: u64 = 0xB;

pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<InteractionDataset> {
    config.validate()?;
    let s = config.zipf_exponent;
    let log_base: Vec<f64> = (0..config.num_artists)
        .map(|a| -s * ((a + 1) as f64).ln())
        .collect();
    let mut artist_rng = rng::stream(seed, &[ARTIST_STREAM]);
    let community: Vec<usize> = (0..config.num_artists)
        .map(|_| artist_rng.random_range(0..config.num_communities))
        .collect();
    let log_boost = config.community_boost.ln();
    let geometric = Geometric::new(config.count_success_prob)
        .map_err(|e| Error::validation(format!("synthetic: {e}")))?;
    let [lo, hi] = config.profile_size_range;

    let rows = par::map_range(config.num_users, |u| -> Result<Vec<(u32, u32)>> {
        let mut r = rng::stream(seed, &[USER_STREAM, u as u64]);
        let bias = config.mainstream_mix[config.group_of(u).index()];
        let home = r.random_range(0..config.num_communities);
        let size = r.random_range(lo..=hi).min(config.num_artists);
        // Shift by the maximum so the largest weight is 1 and nothing underflows early.
        let logw = |a: usize| bias * log_base[a] + if community[a] == home { log_boost } else { 0.0 };
        let shift = (0..config.num_artists).map(logw).fold(f64::MIN, f64::max);
        let picked = index::sample_weighted(
            &mut r,
            config.num_artists,
            |a| (logw(a) - shift).exp().max(f64::MIN_POSITIVE),
            size,
        )
        .map_err(|e| Error::numerical(format!("synthetic user {u}: {e}")))?;
        let mut artists: Vec<usize> = picked.into_iter().collect();
        artists.sort_unstable();
        Ok(artists
            .into_iter()
            .map(|a| {
                let extra = geometric.sample(&mut r).min(u32::MAX as u64 - 1) as u32;
                (a as u32, 1 + extra)
            })
            .collect())
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;

    let users = (0..config.num_users).map(|u| format!("u{u}")).collect();
    let artists = (0..config.num_artists).map(|a| format!("a{a}")).collect();
    let groups = (0..config.num_users).map(|u| config.group_of(u)).collect();
    InteractionDataset::new(
        users,
        artists,
        SparseCounts::from_rows(config.num_artists, rows)?,
        Some(groups),
    )
}
