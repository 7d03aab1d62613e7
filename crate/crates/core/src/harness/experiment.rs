use serde::de::DeserializeOwned;

use super::config::{default_ap_k, ExperimentConfig, GroupSource, PopularityScope};
use crate::corpus::{
    assign_mainstream_groups, compute_popularity, generate_synthetic, read_interactions,
    split_mask, Group, InteractionDataset, PopularityTable, SplitDataset,
};
use crate::error::StageExt;
use crate::metrics::{
    auc, average_precision_at_k, delta_gap, mean_popularity, mean_with_stderr, stable_sum,
    RankedCandidates,
};
use crate::model::{
    top_n_from_scores, FittedModel, ModelKind, PopularityModel, PopularityParams, RandomModel,
    RandomParams, Recommender,
};
use crate::multivae::{fit_multivae, MultiVaeParams};
use crate::slim::{fit_slim, SlimParams};
use crate::wrmf::{fit_wrmf, WrmfParams};
use crate::{par, rng, Error, Result};

// Labels for seed derivation.
const SYNTH: u64 = 11;
const SPLIT: u64 = 12;
const TUNE: u64 = 13;
const MODEL: u64 = 14;

/// Data shared by every model in a run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: InteractionDataset,
    pub split: SplitDataset,
    pub groups: Vec<Group>,
    /// φ used for GAP, according to the configured scope.
    pub popularity: PopularityTable,
    pub scope: PopularityScope,
    pub synthetic_seed: Option<u64>,
}

impl Prepared {
    /// Profile whose popularity defines GAP_p for `user`.
    pub fn reference_profile(&self, user: usize) -> &[u32] {
        match self.scope {
            PopularityScope::Full => self.dataset.profile(user),
            PopularityScope::TrainOnly => self.split.train.profile(user),
        }
    }
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<(InteractionDataset, Option<u64>)> {
    let d = &config.data;
    match (&d.interactions, &d.synthetic) {
        (Some(path), None) => Ok((read_interactions(path, d.groups.as_deref())?, None)),
        (None, Some(s)) => {
            let seed = d
                .synthetic_seed
                .unwrap_or_else(|| rng::derive_seed(config.seed, &[SYNTH]));
            Ok((generate_synthetic(s, seed)?, Some(seed)))
        }
        _ => Err(Error::validation("config: ambiguous data source")),
    }
}

pub fn split_seed(config: &ExperimentConfig) -> u64 {
    config
        .split
        .seed
        .unwrap_or_else(|| rng::derive_seed(config.seed, &[SPLIT]))
}

pub fn tune_seed(config: &ExperimentConfig) -> u64 {
    config
        .tuning
        .seed
        .unwrap_or_else(|| rng::derive_seed(config.seed, &[TUNE]))
}

/// Loads or generates the data, splits it, and fixes groups and φ.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let (dataset, synthetic_seed) = load_dataset(config).stage("ingest")?;
    let split = split_mask(&dataset, config.split.holdout_fraction, split_seed(config)).stage("split")?;
    let scope = config.evaluation.popularity_scope;
    let popularity = match scope {
        PopularityScope::Full => compute_popularity(&dataset),
        PopularityScope::TrainOnly => compute_popularity(&split.train),
    }
    .stage("popularity")?;
    let groups = match (config.evaluation.groups, dataset.groups()) {
        (GroupSource::Dataset, Some(g)) => g.to_vec(),
        _ => assign_mainstream_groups(&dataset, &compute_popularity(&dataset)?).stage("groups")?,
    };
    Ok(Prepared {
        dataset,
        split,
        groups,
        popularity,
        scope,
        synthetic_seed,
    })
}

fn decode<T: DeserializeOwned>(kind: ModelKind, params: &toml::Table) -> Result<T> {
    toml::Value::Table(params.clone())
        .try_into()
        .map_err(|e| Error::validation(format!("{kind} parameters: {e}")))
}

/// Fits one model. Stochastic models without an explicit seed get one derived from `seed`.
pub fn fit_model(
    kind: ModelKind,
    params: &toml::Table,
    train: &InteractionDataset,
    seed: u64,
) -> Result<FittedModel> {
    let mut params = params.clone();
    let seed_key = match kind {
        ModelKind::Random => Some("seed"),
        ModelKind::Wrmf | ModelKind::MultiVae => Some("init_seed"),
        _ => None,
    };
    if let Some(key) = seed_key {
        if !params.contains_key(key) {
            // toml integers are i64; keep the derived seed in range
            params.insert(key.into(), toml::Value::Integer((seed >> 1) as i64));
        }
    }
    Ok(match kind {
        ModelKind::Popularity => {
            let p: PopularityParams = decode(kind, &params)?;
            FittedModel::Popularity(PopularityModel::fit(train, &p))
        }
        ModelKind::Random => {
            let p: RandomParams = decode(kind, &params)?;
            FittedModel::Random(RandomModel::new(train.num_artists(), p.seed))
        }
        ModelKind::Slim => FittedModel::Slim(fit_slim(train, &decode::<SlimParams>(kind, &params)?)?),
        ModelKind::Wrmf => FittedModel::Wrmf(fit_wrmf(train, &decode::<WrmfParams>(kind, &params)?)?),
        ModelKind::MultiVae => {
            FittedModel::MultiVae(fit_multivae(train, &decode::<MultiVaeParams>(kind, &params)?)?)
        }
    })
}

/// `base` overlaid with the keys of `point`.
pub fn merge_params(base: &toml::Table, point: &toml::Table) -> toml::Table {
    let mut out = base.clone();
    for (k, v) in point {
        out.insert(k.clone(), v.clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunePoint {
    pub params: toml::Table,
    /// Mean AP@K, or the failure message.
    pub outcome: std::result::Result<f64, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub points: Vec<TunePoint>,
    pub best: usize,
}

impl TuneResult {
    pub fn best_params(&self) -> &toml::Table {
        &self.points[self.best].params
    }
}

/// Mean AP@K over users with at least one held-out artist and one negative.
pub fn mean_average_precision(
    model: &dyn Recommender,
    split: &SplitDataset,
    k: usize,
) -> Result<f64> {
    let train = &split.train;
    let per_user = par::map_range(train.num_users(), |u| -> Result<Option<f64>> {
        if split.masked[u].is_empty() {
            return Ok(None);
        }
        let scores = model.score_user(train, u);
        let ranked = RankedCandidates::from_scores(&scores, train.profile(u), split.masked[u].clone())?;
        match average_precision_at_k(&ranked, k) {
            Ok(v) => Ok(Some(v)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e),
        }
    });
    let mut values = Vec::new();
    for v in per_user {
        values.extend(v?);
    }
    if values.is_empty() {
        return Err(Error::validation("no user has a held-out artist to validate on"));
    }
    Ok(stable_sum(&values) / values.len() as f64)
}

/// Grid search by mean AP@K on an inner split of `train`. Ties go to the earlier point.
pub fn tune(
    kind: ModelKind,
    base: &toml::Table,
    grid: &[toml::Table],
    train: &InteractionDataset,
    ap_k: usize,
    holdout_fraction: f64,
    seed: u64,
) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::validation("tune: empty grid"));
    }
    if ap_k == 0 {
        return Err(Error::validation("tune: ap_k must be >= 1"));
    }
    let inner = split_mask(train, holdout_fraction, seed)?;
    let mut points = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, f64)> = None;
    for (i, point) in grid.iter().enumerate() {
        let params = merge_params(base, point);
        let outcome = fit_model(kind, &params, &inner.train, rng::derive_seed(seed, &[MODEL]))
            .and_then(|m| mean_average_precision(&m, &inner, ap_k))
            .map_err(|e| e.to_string());
        if let Ok(score) = outcome {
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((i, score));
            }
        }
        points.push(TunePoint { params, outcome });
    }
    match best {
        Some((best, _)) => Ok(TuneResult { points, best }),
        None => Err(Error::numerical(format!(
            "tune: all {} grid points failed for {kind}",
            grid.len()
        ))),
    }
}

/// Aggregates for one user group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub users: usize,
    /// Users without a defined AUC (no held-out artists or no negatives).
    pub skipped: usize,
    pub auc_mean: Option<f64>,
    pub auc_stderr: Option<f64>,
    pub gap_p: Option<f64>,
    pub gap_r: Option<f64>,
    pub delta_gap: Option<f64>,
}

/// Per-group results for one model, indexed All, Low, Medium, High.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    pub name: String,
    pub groups: [GroupSummary; 4],
    /// Tuning log when a grid was searched.
    pub tuning: Option<TuneResult>,
}

pub const GROUP_LABELS: [&str; 4] = ["all", "low", "medium", "high"];

#[derive(Debug, Clone, Copy)]
struct UserOutcome {
    auc: Option<f64>,
    profile_pop: Option<f64>,
    rec_pop: Option<f64>,
}

fn summarize(outcomes: &[&UserOutcome]) -> Result<GroupSummary> {
    let aucs: Vec<f64> = outcomes.iter().filter_map(|o| o.auc).collect();
    let (auc_mean, auc_stderr) = if aucs.is_empty() {
        (None, None)
    } else {
        let m = mean_with_stderr(&aucs)?;
        (Some(m.mean), m.stderr)
    };
    let (pp, rp): (Vec<f64>, Vec<f64>) = outcomes
        .iter()
        .filter_map(|o| Some((o.profile_pop?, o.rec_pop?)))
        .unzip();
    let (gap_p, gap_r, dg) = if pp.is_empty() {
        (None, None, None)
    } else {
        let gp = stable_sum(&pp) / pp.len() as f64;
        let gr = stable_sum(&rp) / rp.len() as f64;
        (Some(gp), Some(gr), delta_gap(gp, gr).ok())
    };
    Ok(GroupSummary {
        users: outcomes.len(),
        skipped: outcomes.len() - aucs.len(),
        auc_mean,
        auc_stderr,
        gap_p,
        gap_r,
        delta_gap: dg,
    })
}

/// Ranks every user's candidates (artists outside the training profile), scores
/// AUC against the held-out artists and GAP over the top `top_n`.
pub fn evaluate(
    model: &dyn Recommender,
    name: &str,
    data: &Prepared,
    top_n: usize,
) -> Result<ModelEvaluation> {
    if top_n == 0 {
        return Err(Error::validation("top_n must be >= 1"));
    }
    let train = &data.split.train;
    if model.num_artists() != train.num_artists() {
        return Err(Error::validation(format!(
            "{name} scores {} artists, data has {}",
            model.num_artists(),
            train.num_artists()
        )));
    }
    let per_user = par::map_range(train.num_users(), |u| -> Result<UserOutcome> {
        let scores = model.score_user(train, u);
        let exclude = train.profile(u);
        let masked = &data.split.masked[u];
        let auc = if masked.is_empty() {
            None
        } else {
            let ranked = RankedCandidates::from_scores(&scores, exclude, masked.clone())?;
            match auc(&ranked) {
                Ok(v) => Some(v),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            }
        };
        let top = top_n_from_scores(&scores, exclude, top_n);
        let rec_pop = if top.is_empty() {
            None
        } else {
            Some(mean_popularity(&top, &data.popularity)?)
        };
        let profile = data.reference_profile(u);
        let profile_pop = if profile.is_empty() {
            None
        } else {
            Some(mean_popularity(profile, &data.popularity)?)
        };
        Ok(UserOutcome {
            auc,
            profile_pop,
            rec_pop,
        })
    });
    let outcomes = per_user.into_iter().collect::<Result<Vec<_>>>()?;

    let all: Vec<&UserOutcome> = outcomes.iter().collect();
    let mut groups = vec![summarize(&all)?];
    for g in Group::ALL {
        let members: Vec<&UserOutcome> = outcomes
            .iter()
            .zip(&data.groups)
            .filter(|(_, &ug)| ug == g)
            .map(|(o, _)| o)
            .collect();
        groups.push(summarize(&members)?);
    }
    let groups: [GroupSummary; 4] = groups.try_into().expect("four groups");
    Ok(ModelEvaluation {
        name: name.to_string(),
        groups,
        tuning: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub seed: u64,
    pub split_seed: u64,
    pub tune_seed: u64,
    pub synthetic_seed: Option<u64>,
    pub config_hash: String,
    pub version: &'static str,
    pub num_users: usize,
    pub num_artists: usize,
    pub num_pairs: usize,
    pub num_masked: usize,
    pub top_n: usize,
    pub ap_k: usize,
    pub scope: PopularityScope,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub provenance: Provenance,
    pub models: Vec<ModelEvaluation>,
}

fn resolved_ap_k(config: &ExperimentConfig, train: &InteractionDataset) -> usize {
    config
        .tuning
        .ap_k
        .unwrap_or_else(|| default_ap_k(train.num_artists()))
}

/// Grid search for the `idx`-th model; `None` when it has no grid.
fn tune_spec(
    config: &ExperimentConfig,
    idx: usize,
    train: &InteractionDataset,
    ap_k: usize,
) -> Result<Option<TuneResult>> {
    let spec = &config.models[idx];
    if spec.grid.is_empty() {
        return Ok(None);
    }
    tune(
        spec.kind,
        &spec.params,
        &spec.grid,
        train,
        ap_k,
        config.tuning.holdout_fraction,
        rng::derive_seed(tune_seed(config), &[idx as u64]),
    )
    .stage("tune")
    .map(Some)
}

/// Runs the grid search of every model that has a grid, without final fits.
pub fn tune_models(config: &ExperimentConfig) -> Result<Vec<(String, TuneResult)>> {
    config.validate().stage("config")?;
    let data = prepare(config)?;
    let ap_k = resolved_ap_k(config, &data.split.train);
    let mut out = Vec::new();
    for (idx, spec) in config.models.iter().enumerate() {
        if let Some(t) = tune_spec(config, idx, &data.split.train, ap_k)? {
            out.push((spec.label().to_string(), t));
        }
    }
    Ok(out)
}

/// Tunes (when a grid is given), fits and evaluates every configured model.
/// Fitted models are handed to `on_fit` before evaluation.
pub fn run_experiment_with(
    config: &ExperimentConfig,
    mut on_fit: impl FnMut(&str, &FittedModel) -> Result<()>,
) -> Result<ExperimentReport> {
    config.validate().stage("config")?;
    let data = prepare(config)?;
    let train = &data.split.train;
    let ap_k = resolved_ap_k(config, train);
    let mut models = Vec::with_capacity(config.models.len());
    for (idx, spec) in config.models.iter().enumerate() {
        let label = spec.label();
        let tuning = tune_spec(config, idx, train, ap_k)?;
        let params = tuning
            .as_ref()
            .map_or(&spec.params, |t| t.best_params());
        let model = fit_model(
            spec.kind,
            params,
            train,
            rng::derive_seed(config.seed, &[MODEL, idx as u64]),
        )
        .stage("fit")?;
        on_fit(label, &model).stage("save")?;
        let mut eval = evaluate(&model, label, &data, config.evaluation.top_n).stage("evaluate")?;
        eval.tuning = tuning;
        models.push(eval);
    }
    Ok(ExperimentReport {
        provenance: Provenance {
            seed: config.seed,
            split_seed: split_seed(config),
            tune_seed: tune_seed(config),
            synthetic_seed: data.synthetic_seed,
            config_hash: config.config_hash.clone(),
            version: env!("CARGO_PKG_VERSION"),
            num_users: data.dataset.num_users(),
            num_artists: data.dataset.num_artists(),
            num_pairs: data.dataset.num_pairs(),
            num_masked: data.split.num_masked(),
            top_n: config.evaluation.top_n,
            ap_k,
            scope: data.scope,
        },
        models,
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    run_experiment_with(config, |_, _| Ok(()))
}
