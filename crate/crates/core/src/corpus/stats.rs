use std::io::Write;

use super::dataset::{Group, InteractionDataset};
use super::split::SplitDataset;
use crate::{Error, Result};

/// Per-artist share of users who listened to the artist.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityTable {
    phi: Vec<f64>,
}

impl PopularityTable {
    pub fn from_values(phi: Vec<f64>) -> Result<Self> {
        if let Some(bad) = phi.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::validation(format!("popularity {bad} outside [0, 1]")));
        }
        Ok(PopularityTable { phi })
    }

    pub fn phi(&self, artist: u32) -> f64 {
        self.phi[artist as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }
}

/// phi(a) = listeners(a) / users, computed over whichever dataset is passed in
/// (the full data, or the training half of a split for the train-only scope).
pub fn compute_popularity(dataset: &InteractionDataset) -> Result<PopularityTable> {
    if dataset.num_users() == 0 || dataset.num_artists() == 0 {
        return Err(Error::validation("cannot compute popularity of an empty dataset"));
    }
    let n = dataset.num_users() as f64;
    let phi = dataset
        .counts()
        .column_nnz()
        .into_iter()
        .map(|c| c as f64 / n)
        .collect();
    Ok(PopularityTable { phi })
}

/// Mean phi over each user's profile.
pub fn mainstreaminess(dataset: &InteractionDataset, pop: &PopularityTable) -> Vec<f64> {
    (0..dataset.num_users())
        .map(|u| {
            let p = dataset.profile(u);
            if p.is_empty() {
                0.0
            } else {
                p.iter().map(|&a| pop.phi(a)).sum::<f64>() / p.len() as f64
            }
        })
        .collect()
}

/// Splits users into equal-size terciles of mainstreaminess (sizes differ by at
/// most one). Ties are ordered by ascending user index.
pub fn assign_mainstream_groups(
    dataset: &InteractionDataset,
    pop: &PopularityTable,
) -> Result<Vec<Group>> {
    if pop.len() != dataset.num_artists() {
        return Err(Error::validation(format!(
            "popularity table covers {} artists, dataset has {}",
            pop.len(),
            dataset.num_artists()
        )));
    }
    let scores = mainstreaminess(dataset, pop);
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut groups = vec![Group::Low; n];
    for (pos, &u) in order.iter().enumerate() {
        groups[u] = Group::from_index(pos * 3 / n).expect("tercile index below 3");
    }
    Ok(groups)
}

/// Artist fractions at which the coverage curve is sampled: 0.01, then 0.05 to 1.0 in steps of 0.05.
pub const COVERAGE_FRACTIONS: [f64; 21] = [
    0.01, 0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70,
    0.75, 0.80, 0.85, 0.90, 0.95, 1.00,
];

#[derive(Debug, Clone, PartialEq)]
pub struct TailStats {
    pub num_users: usize,
    pub num_artists: usize,
    pub num_pairs: usize,
    /// `(fraction of artists, fraction of user-artist pairs)` with artists taken in
    /// descending popularity.
    pub coverage_curve: Vec<(f64, f64)>,
    /// Artists with at least one training listener; present when a split was supplied.
    pub trainable_artists: Option<usize>,
}

impl TailStats {
    /// Coverage at the sampled fraction nearest to `fraction`.
    pub fn coverage_at(&self, fraction: f64) -> f64 {
        let i = COVERAGE_FRACTIONS
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - fraction).abs().total_cmp(&(b.1 - fraction).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.coverage_curve[i].1
    }

    pub fn write_coverage_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "fraction_of_artists\tfraction_of_interactions")?;
        for (x, y) in &self.coverage_curve {
            writeln!(w, "{x:.6}\t{y:.6}")?;
        }
        Ok(())
    }
}

/// Artist indices ordered by descending listener count, ties by ascending index.
pub(crate) fn artists_by_popularity(listeners: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..listeners.len()).collect();
    order.sort_by(|&a, &b| listeners[b].cmp(&listeners[a]).then(a.cmp(&b)));
    order
}

pub fn long_tail_stats(dataset: &InteractionDataset, split: Option<&SplitDataset>) -> TailStats {
    let listeners = dataset.counts().column_nnz();
    let order = artists_by_popularity(&listeners);
    let n = dataset.num_artists();
    let total = dataset.num_pairs() as f64;

    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0usize);
    for &a in &order {
        prefix.push(prefix.last().unwrap() + listeners[a]);
    }

    let coverage_curve = COVERAGE_FRACTIONS
        .iter()
        .map(|&f| {
            let k = ((f * n as f64).round() as usize).clamp(1.min(n), n);
            let x = if n == 0 { 0.0 } else { k as f64 / n as f64 };
            let y = if total == 0.0 { 0.0 } else { prefix[k] as f64 / total };
            (x, y)
        })
        .collect();

    let trainable_artists = split.map(|s| {
        s.train
            .counts()
            .column_nnz()
            .into_iter()
            .filter(|&c| c > 0)
            .count()
    });

    TailStats {
        num_users: dataset.num_users(),
        num_artists: n,
        num_pairs: dataset.num_pairs(),
        coverage_curve,
        trainable_artists,
    }
}
