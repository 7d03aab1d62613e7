//! Interaction data: loading, synthetic generation, popularity, mainstream
//! groups, long-tail summaries and the held-out split.

mod dataset;
mod io;
mod split;
mod stats;
mod synth;

pub use dataset::{Group, InteractionDataset, SparseCounts};
pub use io::{
    parse_groups, parse_interactions, read_groups, read_interactions, write_groups,
    write_interactions,
};
pub use split::{split_mask, SplitDataset};
pub use stats::{
    assign_mainstream_groups, compute_popularity, long_tail_stats, mainstreaminess,
    PopularityTable, TailStats, COVERAGE_FRACTIONS,
};
pub use synth::{generate_synthetic, SyntheticConfig};
