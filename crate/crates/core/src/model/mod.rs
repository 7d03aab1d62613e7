//! The recommender contract shared by every model, the popularity and random
//! baselines, top-N selection, and model persistence.

pub mod container;

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::InteractionDataset;
use crate::multivae::MultiVaeModel;
use crate::slim::SlimModel;
use crate::wrmf::WrmfModel;
use crate::{rng, Error, Result};
pub use container::ModelContainer;

/// A fitted model that scores every artist for a user (higher is better).
///
/// `train` must be the dataset the model was fitted on; row-based models
/// (SLIM, Multi-VAE) read the user's training profile from it.
pub trait Recommender: Send + Sync {
    fn name(&self) -> &'static str;

    fn num_artists(&self) -> usize;

    fn score_user(&self, train: &InteractionDataset, user: usize) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Popularity,
    Random,
    Slim,
    Wrmf,
    #[serde(rename = "multivae")]
    MultiVae,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Slim,
        ModelKind::MultiVae,
        ModelKind::Wrmf,
        ModelKind::Popularity,
        ModelKind::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Popularity => "popularity",
            ModelKind::Random => "random",
            ModelKind::Slim => "slim",
            ModelKind::Wrmf => "wrmf",
            ModelKind::MultiVae => "multivae",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            ModelKind::Popularity => 1,
            ModelKind::Random => 2,
            ModelKind::Slim => 3,
            ModelKind::Wrmf => 4,
            ModelKind::MultiVae => 5,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.tag() == tag)
            .ok_or_else(|| Error::validation(format!("unknown model tag {tag}")))
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown model {s:?} (expected slim, multivae, wrmf, popularity or random)"
                ))
            })
    }
}

/// What the popularity baseline counts per artist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopularityMode {
    /// Number of training users who listened to the artist.
    #[default]
    Listeners,
    /// Total training play count of the artist.
    Plays,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopularityParams {
    pub mode: PopularityMode,
}

/// Non-personalised baseline: every user gets the same score vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityModel {
    pub mode: PopularityMode,
    scores: Vec<f64>,
}

impl PopularityModel {
    pub fn fit(train: &InteractionDataset, params: &PopularityParams) -> Self {
        let scores = match params.mode {
            PopularityMode::Listeners => train
                .counts()
                .column_nnz()
                .into_iter()
                .map(|c| c as f64)
                .collect(),
            PopularityMode::Plays => train
                .counts()
                .column_sums()
                .into_iter()
                .map(|c| c as f64)
                .collect(),
        };
        PopularityModel {
            mode: params.mode,
            scores,
        }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn to_container(&self) -> ModelContainer {
        let mut c = ModelContainer::new(ModelKind::Popularity);
        c.push_u64("mode", vec![matches!(self.mode, PopularityMode::Plays) as u64])
            .push_f64("scores", self.scores.clone());
        c
    }

    pub fn from_container(c: &ModelContainer) -> Result<Self> {
        let mode = match c.u64_scalar("mode")? {
            0 => PopularityMode::Listeners,
            1 => PopularityMode::Plays,
            m => return Err(Error::validation(format!("bad popularity mode {m}"))),
        };
        Ok(PopularityModel {
            mode,
            scores: c.f64s("scores")?.to_vec(),
        })
    }
}

impl Recommender for PopularityModel {
    fn name(&self) -> &'static str {
        "popularity"
    }

    fn num_artists(&self) -> usize {
        self.scores.len()
    }

    fn score_user(&self, _train: &InteractionDataset, _user: usize) -> Vec<f64> {
        self.scores.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomParams {
    pub seed: u64,
}

/// Lower-bound baseline: i.i.d. uniform scores from a stream keyed by `(seed, user)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomModel {
    pub seed: u64,
    num_artists: usize,
}

impl RandomModel {
    pub fn new(num_artists: usize, seed: u64) -> Self {
        RandomModel { seed, num_artists }
    }

    pub fn to_container(&self) -> ModelContainer {
        let mut c = ModelContainer::new(ModelKind::Random);
        c.push_u64("seed", vec![self.seed])
            .push_u64("num_artists", vec![self.num_artists as u64]);
        c
    }

    pub fn from_container(c: &ModelContainer) -> Result<Self> {
        Ok(RandomModel {
            seed: c.u64_scalar("seed")?,
            num_artists: c.u64_scalar("num_artists")? as usize,
        })
    }
}

impl Recommender for RandomModel {
    fn name(&self) -> &'static str {
        "random"
    }

    fn num_artists(&self) -> usize {
        self.num_artists
    }

    fn score_user(&self, _train: &InteractionDataset, user: usize) -> Vec<f64> {
        let mut r = rng::stream(self.seed, &[user as u64]);
        (0..self.num_artists).map(|_| r.random::<f64>()).collect()
    }
}

/// Evaluation upper bound: scores every held-out artist `+∞` and everything else 0.
#[derive(Debug, Clone)]
pub struct PerfectOracle {
    masked: Vec<Vec<u32>>,
    num_artists: usize,
}

impl PerfectOracle {
    pub fn new(masked: Vec<Vec<u32>>, num_artists: usize) -> Self {
        PerfectOracle {
            masked,
            num_artists,
        }
    }
}

impl Recommender for PerfectOracle {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn num_artists(&self) -> usize {
        self.num_artists
    }

    fn score_user(&self, _train: &InteractionDataset, user: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.num_artists];
        for &a in &self.masked[user] {
            s[a as usize] = f64::INFINITY;
        }
        s
    }
}

/// The `n` best-scoring artists outside `exclude` (sorted), best first, ties by
/// ascending index. Returns fewer than `n` when there are not enough candidates.
pub fn top_n_from_scores(scores: &[f64], exclude: &[u32], n: usize) -> Vec<u32> {
    let mut cand: Vec<u32> = (0..scores.len() as u32)
        .filter(|a| exclude.binary_search(a).is_err())
        .collect();
    let cmp = |a: &u32, b: &u32| {
        scores[*b as usize]
            .total_cmp(&scores[*a as usize])
            .then(a.cmp(b))
    };
    if n < cand.len() {
        cand.select_nth_unstable_by(n, cmp);
        cand.truncate(n);
    }
    cand.sort_unstable_by(cmp);
    cand
}

/// Top-`n` recommendations for `user`, excluding the user's training profile.
pub fn recommend_top_n(
    model: &dyn Recommender,
    train: &InteractionDataset,
    user: usize,
    n: usize,
) -> Result<Vec<u32>> {
    if n == 0 {
        return Err(Error::validation("top-n needs n >= 1"));
    }
    if user >= train.num_users() {
        return Err(Error::validation(format!(
            "user index {user} out of range ({} users)",
            train.num_users()
        )));
    }
    let scores = model.score_user(train, user);
    Ok(top_n_from_scores(&scores, train.profile(user), n))
}

/// Any fitted model, with persistence through [`ModelContainer`].
#[derive(Debug, Clone)]
pub enum FittedModel {
    Popularity(PopularityModel),
    Random(RandomModel),
    Slim(SlimModel),
    Wrmf(WrmfModel),
    MultiVae(MultiVaeModel),
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Popularity(_) => ModelKind::Popularity,
            FittedModel::Random(_) => ModelKind::Random,
            FittedModel::Slim(_) => ModelKind::Slim,
            FittedModel::Wrmf(_) => ModelKind::Wrmf,
            FittedModel::MultiVae(_) => ModelKind::MultiVae,
        }
    }

    fn inner(&self) -> &dyn Recommender {
        match self {
            FittedModel::Popularity(m) => m,
            FittedModel::Random(m) => m,
            FittedModel::Slim(m) => m,
            FittedModel::Wrmf(m) => m,
            FittedModel::MultiVae(m) => m,
        }
    }

    pub fn to_container(&self) -> ModelContainer {
        match self {
            FittedModel::Popularity(m) => m.to_container(),
            FittedModel::Random(m) => m.to_container(),
            FittedModel::Slim(m) => m.to_container(),
            FittedModel::Wrmf(m) => m.to_container(),
            FittedModel::MultiVae(m) => m.to_container(),
        }
    }

    pub fn from_container(c: &ModelContainer) -> Result<Self> {
        Ok(match c.kind {
            ModelKind::Popularity => FittedModel::Popularity(PopularityModel::from_container(c)?),
            ModelKind::Random => FittedModel::Random(RandomModel::from_container(c)?),
            ModelKind::Slim => FittedModel::Slim(SlimModel::from_container(c)?),
            ModelKind::Wrmf => FittedModel::Wrmf(WrmfModel::from_container(c)?),
            ModelKind::MultiVae => FittedModel::MultiVae(MultiVaeModel::from_container(c)?),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()
            .write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c = ModelContainer::read_from(BufReader::new(File::open(path)?))?;
        Self::from_container(&c)
    }
}

impl Recommender for FittedModel {
    fn name(&self) -> &'static str {
        self.inner().name()
    }

    fn num_artists(&self) -> usize {
        self.inner().num_artists()
    }

    fn score_user(&self, train: &InteractionDataset, user: usize) -> Vec<f64> {
        self.inner().score_user(train, user)
    }
}
