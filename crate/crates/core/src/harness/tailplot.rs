use std::fmt::Write as _;

use crate::corpus::{compute_popularity, long_tail_stats, InteractionDataset, TailStats};
use crate::{Error, Result};

/// φ by popularity rank (1-based, descending) plus the coverage curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TailPlot {
    pub ranked_phi: Vec<f64>,
    pub stats: TailStats,
}

pub fn emit_tail_plot_data(dataset: &InteractionDataset) -> Result<TailPlot> {
    if dataset.num_pairs() == 0 {
        return Err(Error::validation("tailplot: empty dataset"));
    }
    let mut ranked_phi = compute_popularity(dataset)?.values().to_vec();
    ranked_phi.sort_by(|a, b| b.total_cmp(a));
    Ok(TailPlot {
        ranked_phi,
        stats: long_tail_stats(dataset, None),
    })
}

impl TailPlot {
    pub fn rank_tsv(&self) -> String {
        let mut out = String::from("rank\tphi\n");
        for (i, phi) in self.ranked_phi.iter().enumerate() {
            let _ = writeln!(out, "{}\t{phi:.6}", i + 1);
        }
        out
    }

    pub fn coverage_tsv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.stats.write_coverage_tsv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::validation(e.to_string()))
    }
}
