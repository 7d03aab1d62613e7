//! Ranking accuracy (AUC, AP@K) and popularity bias (GAP, ΔGAP).

use crate::corpus::PopularityTable;
use crate::{Error, Result};

/// A user's candidate artists ordered best-first, with the held-out positives.
///
/// Candidates are every artist outside the user's training profile; positives
/// are the masked artists and must be a subset of the candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidates {
    ordering: Vec<u32>,
    /// Sorted, deduplicated.
    positives: Vec<u32>,
}

impl RankedCandidates {
    pub fn new(ordering: Vec<u32>, mut positives: Vec<u32>) -> Result<Self> {
        positives.sort_unstable();
        positives.dedup();
        let mut seen = ordering.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("ranking contains duplicate candidates"));
        }
        if let Some(p) = positives.iter().find(|p| seen.binary_search(p).is_err()) {
            return Err(Error::validation(format!(
                "positive artist {p} is not among the candidates"
            )));
        }
        Ok(RankedCandidates { ordering, positives })
    }

    /// Ranks the candidates by descending score, ties by ascending artist index.
    /// Artists in `exclude` (sorted) are dropped.
    pub fn from_scores(scores: &[f64], exclude: &[u32], positives: Vec<u32>) -> Result<Self> {
        let ordering = rank_by_score(scores, exclude);
        Self::new(ordering, positives)
    }

    pub fn ordering(&self) -> &[u32] {
        &self.ordering
    }

    pub fn positives(&self) -> &[u32] {
        &self.positives
    }

    pub fn num_negatives(&self) -> usize {
        self.ordering.len() - self.positives.len()
    }

    fn is_positive(&self, item: u32) -> bool {
        self.positives.binary_search(&item).is_ok()
    }

    fn check_defined(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::UndefinedMetric("no held-out positives"));
        }
        if self.num_negatives() == 0 {
            return Err(Error::UndefinedMetric("no negative candidates"));
        }
        Ok(())
    }
}

/// Candidate artist indices sorted by descending score with ascending-index ties.
pub fn rank_by_score(scores: &[f64], exclude: &[u32]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..scores.len() as u32)
        .filter(|a| exclude.binary_search(a).is_err())
        .collect();
    order.sort_unstable_by(|&a, &b| {
        scores[b as usize]
            .total_cmp(&scores[a as usize])
            .then(a.cmp(&b))
    });
    order
}

/// Fraction of (positive, negative) pairs in which the positive is ranked higher.
pub fn auc(ranked: &RankedCandidates) -> Result<f64> {
    ranked.check_defined()?;
    let mut positives_above = 0u64;
    let mut concordant = 0u64;
    for &item in &ranked.ordering {
        if ranked.is_positive(item) {
            positives_above += 1;
        } else {
            concordant += positives_above;
        }
    }
    let p = ranked.positives.len() as f64;
    let n = ranked.num_negatives() as f64;
    Ok(concordant as f64 / (p * n))
}

/// `AP@k = (1 / min(k, |positives|)) * Σ_{i ≤ k, item i positive} precision@i`.
pub fn average_precision_at_k(ranked: &RankedCandidates, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::validation("AP@k needs k >= 1"));
    }
    ranked.check_defined()?;
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &item) in ranked.ordering.iter().take(k).enumerate() {
        if ranked.is_positive(item) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / k.min(ranked.positives.len()) as f64)
}

/// Mean phi over one user's artist set.
pub fn mean_popularity(artists: &[u32], pop: &PopularityTable) -> Result<f64> {
    if artists.is_empty() {
        return Err(Error::validation("cannot average popularity over an empty artist set"));
    }
    let mut sum = 0.0;
    for &a in artists {
        if a as usize >= pop.len() {
            return Err(Error::validation(format!(
                "artist {a} not covered by the popularity table"
            )));
        }
        sum += pop.phi(a);
    }
    Ok(sum / artists.len() as f64)
}

/// Group average popularity: the mean over users of each user's mean phi.
pub fn gap<S: AsRef<[u32]>>(profiles: &[S], pop: &PopularityTable) -> Result<f64> {
    if profiles.is_empty() {
        return Err(Error::validation("GAP of an empty user group"));
    }
    let per_user = profiles
        .iter()
        .map(|p| mean_popularity(p.as_ref(), pop))
        .collect::<Result<Vec<_>>>()?;
    Ok(stable_sum(&per_user) / per_user.len() as f64)
}

/// Popularity lift `(gap_r - gap_p) / gap_p`.
pub fn delta_gap(gap_p: f64, gap_r: f64) -> Result<f64> {
    if !(gap_p > 0.0) {
        return Err(Error::validation(format!("ΔGAP needs GAP_p > 0, got {gap_p}")));
    }
    Ok((gap_r - gap_p) / gap_p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport {
    pub gap_p: f64,
    pub gap_r: f64,
    pub delta_gap: f64,
}

impl GapReport {
    pub fn new(gap_p: f64, gap_r: f64) -> Result<Self> {
        Ok(GapReport {
            gap_p,
            gap_r,
            delta_gap: delta_gap(gap_p, gap_r)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStderr {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; `None` below two values.
    pub stderr: Option<f64>,
}

pub fn mean_with_stderr(values: &[f64]) -> Result<MeanStderr> {
    let n = values.len();
    if n == 0 {
        return Err(Error::validation("mean of an empty sample"));
    }
    let mean = stable_sum(values) / n as f64;
    let stderr = (n >= 2).then(|| {
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        (stable_sum(&sq) / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    });
    Ok(MeanStderr { n, mean, stderr })
}

/// Neumaier-compensated sum, evaluated left to right.
pub fn stable_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ranked(ordering: &[u32], positives: &[u32]) -> RankedCandidates {
        RankedCandidates::new(ordering.to_vec(), positives.to_vec()).unwrap()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&ranked(&[3, 1, 0, 2], &[3, 1])).unwrap(), 1.0);
        // positives at ranks 1 and 3 of 5: 3 + 2 of 6 pairs
        assert_abs_diff_eq!(auc(&ranked(&[0, 1, 2, 3, 4], &[0, 2])).unwrap(), 5.0 / 6.0);
        assert_eq!(auc(&ranked(&[1, 0], &[0])).unwrap(), 0.0);
    }

    #[test]
    fn auc_undefined_cases() {
        assert!(matches!(auc(&ranked(&[0, 1], &[])), Err(Error::UndefinedMetric(_))));
        assert!(matches!(auc(&ranked(&[0, 1], &[0, 1])), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision_at_k(&ranked(&[5, 1, 2], &[5]), 10).unwrap(), 1.0);
        assert_eq!(average_precision_at_k(&ranked(&[1, 5, 2], &[5]), 10).unwrap(), 0.5);
        assert_eq!(average_precision_at_k(&ranked(&[0, 1, 2, 3], &[0, 2]), 2).unwrap(), 0.5);
        assert!(average_precision_at_k(&ranked(&[0, 1], &[0]), 0).is_err());
    }

    #[test]
    fn rejects_bad_rankings() {
        assert!(RankedCandidates::new(vec![0, 0, 1], vec![1]).is_err());
        assert!(RankedCandidates::new(vec![0, 1], vec![2]).is_err());
    }

    #[test]
    fn ranking_ties_break_by_index() {
        assert_eq!(rank_by_score(&[1.0, 3.0, 3.0, 0.5], &[]), vec![1, 2, 0, 3]);
        assert_eq!(rank_by_score(&[9.0, 1.0, 2.0, 3.0, 4.0], &[0]), vec![4, 3, 2, 1]);
    }

    #[test]
    fn gap_examples() {
        let pop = PopularityTable::from_values(vec![0.1, 0.3, 0.2, 0.4, 0.6]).unwrap();
        assert_abs_diff_eq!(gap(&[vec![0u32, 1]], &pop).unwrap(), 0.2, epsilon = 1e-15);
        // user means 0.2 and 0.4 -> 0.3, not the pooled 0.3 by accident:
        // pooled over pairs would be (0.1+0.3+0.4)/3 = 0.2667
        assert_abs_diff_eq!(gap(&[vec![0u32, 1], vec![3]], &pop).unwrap(), 0.3, epsilon = 1e-15);
        let flat = PopularityTable::from_values(vec![0.7; 4]).unwrap();
        assert_abs_diff_eq!(
            gap(&[vec![0u32, 1, 2], vec![3]], &flat).unwrap(),
            0.7,
            epsilon = 1e-15
        );
        assert!(gap::<Vec<u32>>(&[], &pop).is_err());
        assert!(gap(&[Vec::<u32>::new()], &pop).is_err());
    }

    #[test]
    fn delta_gap_examples() {
        assert_abs_diff_eq!(delta_gap(0.2, 0.6).unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!(delta_gap(0.3, 0.3).unwrap(), 0.0);
        assert_abs_diff_eq!(delta_gap(0.25, 0.05).unwrap(), -0.8, epsilon = 1e-12);
        assert!(delta_gap(0.0, 0.1).is_err());
        assert!(delta_gap(-1.0, 0.1).is_err());
    }

    #[test]
    fn stderr_examples() {
        let s = mean_with_stderr(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!((s.mean, s.stderr), (0.5, Some(0.0)));
        let s = mean_with_stderr(&[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(s.mean, 0.5);
        assert_abs_diff_eq!(s.stderr.unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(mean_with_stderr(&[0.3]).unwrap().stderr, None);
        assert!(mean_with_stderr(&[]).is_err());
    }

    #[test]
    fn compensated_sum() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(stable_sum(&v), 2.0);
    }
}
