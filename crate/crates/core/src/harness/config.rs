use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::corpus::SyntheticConfig;
use crate::model::ModelKind;
use crate::{Error, Result};

/// Where the interaction data comes from: files, or the synthetic generator.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub interactions: Option<PathBuf>,
    pub groups: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
    /// Generator seed; derived from the experiment seed when absent.
    pub synthetic_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub holdout_fraction: f64,
    pub seed: Option<u64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            holdout_fraction: 0.2,
            seed: None,
        }
    }
}

/// Which interactions define φ when computing GAP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopularityScope {
    /// φ and user profiles from the full, pre-split data.
    #[default]
    Full,
    /// φ and user profiles from the training part only.
    TrainOnly,
}

/// Where user groups come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupSource {
    /// Labels shipped with the data (group file or generator); terciles if none.
    #[default]
    Dataset,
    /// Always recompute mainstreaminess terciles.
    Derived,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub top_n: usize,
    pub popularity_scope: PopularityScope,
    pub groups: GroupSource,
    /// Also write each fitted model to `<out>/models/<name>.pbm`.
    pub save_models: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            top_n: 10,
            popularity_scope: PopularityScope::Full,
            groups: GroupSource::Dataset,
            save_models: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    /// Cut-off for AP@K; see [`default_ap_k`] when absent.
    pub ap_k: Option<usize>,
    /// Fraction of each training profile re-masked for validation.
    pub holdout_fraction: f64,
    pub seed: Option<u64>,
}

impl Default for TuningConfig {
    fn default() -> Self {
        TuningConfig {
            ap_k: None,
            holdout_fraction: 0.1,
            seed: None,
        }
    }
}

/// `5000` for catalogues above 10,000 artists, else `max(50, 2% of artists)`.
pub fn default_ap_k(num_artists: usize) -> usize {
    if num_artists > 10_000 {
        5000
    } else {
        50.max((num_artists as f64 * 0.02).round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Label in reports; defaults to the kind.
    pub name: Option<String>,
    /// Fixed hyperparameters.
    #[serde(default)]
    pub params: toml::Table,
    /// Grid points tried in order; each overrides `params`.
    #[serde(default)]
    pub grid: Vec<toml::Table>,
}

impl ModelSpec {
    pub fn label(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataSource,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub tuning: TuningConfig,
    pub models: Vec<ModelSpec>,
    /// Digest of the source text and seed, filled by the loaders.
    #[serde(skip)]
    pub config_hash: String,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Parses TOML text; relative data paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::validation(format!("config: {e}")))?;
        for p in [&mut cfg.data.interactions, &mut cfg.data.groups]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        cfg.config_hash = hex_digest(text);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        match (&d.interactions, &d.synthetic) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(Error::validation(
                    "config: [data] needs exactly one of `interactions` or `[data.synthetic]`",
                ))
            }
            (None, Some(s)) => {
                if d.groups.is_some() {
                    return Err(Error::validation(
                        "config: `groups` file only applies to file-based data",
                    ));
                }
                s.validate()?;
            }
            _ => {}
        }
        let f = self.split.holdout_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::validation("config: split fraction must lie in (0, 1)"));
        }
        let f = self.tuning.holdout_fraction;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::validation("config: tuning fraction must lie in (0, 1)"));
        }
        if self.evaluation.top_n == 0 {
            return Err(Error::validation("config: top_n must be >= 1"));
        }
        if self.tuning.ap_k == Some(0) {
            return Err(Error::validation("config: ap_k must be >= 1"));
        }
        if self.models.is_empty() {
            return Err(Error::validation("config: no models listed"));
        }
        let mut seen = HashSet::new();
        for m in &self.models {
            let label = m.label();
            if label.is_empty() || label.contains(['.', '=', ' ', '\t', '\n']) {
                return Err(Error::validation(format!(
                    "config: model name {label:?} must be non-empty without dots, '=' or whitespace"
                )));
            }
            if !seen.insert(label.to_string()) {
                return Err(Error::validation(format!("config: duplicate model name {label:?}")));
            }
        }
        Ok(())
    }

    /// Replaces the master seed and refreshes the hash.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.config_hash = hex_digest(&format!("{}\nseed={seed}", self.config_hash));
        self
    }
}

fn hex_digest(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
