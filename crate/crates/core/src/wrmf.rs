//! Weighted regularized matrix factorization for implicit feedback.
//!
//! Minimises `Σ_{u,i} c_ui (p_ui − x_uᵀ y_i)² + λ (Σ‖x_u‖² + Σ‖y_i‖²)` with
//! `p_ui = 1[count > 0]` and `c_ui = 1 + α·count` (or `1 + α·ln(1 + count/ε)`)
//! by alternating exact ridge solves. Each user solve uses
//! `YᵀC_uY = YᵀY + Σ_{i observed} (c_ui − 1) y_i y_iᵀ`, so only the user's
//! observed items are visited after the shared Gram matrix is formed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{InteractionDataset, SparseCounts};
use crate::linalg::{add_outer, axpy, cholesky_solve, dot, gram};
use crate::model::{ModelContainer, ModelKind, Recommender};
use crate::{par, rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WrmfParams {
    pub factors: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub sweeps: usize,
    pub init_seed: u64,
    pub confidence: Confidence,
    /// Scale inside the log confidence; unused for linear confidence.
    pub log_epsilon: f64,
}

impl Default for WrmfParams {
    fn default() -> Self {
        WrmfParams {
            factors: 32,
            alpha: 2.0,
            lambda: 1.0,
            sweeps: 10,
            init_seed: 0,
            confidence: Confidence::Linear,
            log_epsilon: 1.0,
        }
    }
}

impl WrmfParams {
    pub fn validate(&self) -> Result<()> {
        if self.factors == 0 || self.sweeps == 0 {
            return Err(Error::validation("wrmf: need factors >= 1 and sweeps >= 1"));
        }
        if !(self.alpha > 0.0 && self.lambda > 0.0 && self.alpha.is_finite() && self.lambda.is_finite())
        {
            return Err(Error::validation("wrmf: alpha and lambda must be finite and > 0"));
        }
        if self.confidence == Confidence::Log && !(self.log_epsilon > 0.0) {
            return Err(Error::validation("wrmf: log_epsilon must be > 0"));
        }
        Ok(())
    }

    pub fn confidence(&self, count: u32) -> f64 {
        match self.confidence {
            Confidence::Linear => 1.0 + self.alpha * count as f64,
            Confidence::Log => 1.0 + self.alpha * (1.0 + count as f64 / self.log_epsilon).ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WrmfModel {
    pub params: WrmfParams,
    num_users: usize,
    num_items: usize,
    /// Row-major `num_users × factors`.
    user_factors: Vec<f64>,
    /// Row-major `num_items × factors`.
    item_factors: Vec<f64>,
}

impl WrmfModel {
    /// Factors drawn i.i.d. uniform in `[-0.01, 0.01]` from `params.init_seed`.
    pub fn init(train: &InteractionDataset, params: &WrmfParams) -> Result<Self> {
        params.validate()?;
        let d = params.factors;
        let draw = |n: usize, stream: u64| {
            let mut r = rng::stream(params.init_seed, &[stream]);
            (0..n * d).map(|_| r.random_range(-0.01..=0.01)).collect()
        };
        Ok(WrmfModel {
            params: params.clone(),
            num_users: train.num_users(),
            num_items: train.num_artists(),
            user_factors: draw(train.num_users(), 0),
            item_factors: draw(train.num_artists(), 1),
        })
    }

    pub fn from_factors(
        params: WrmfParams,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
    ) -> Result<Self> {
        let d = params.factors;
        if d == 0 || user_factors.len() % d != 0 || item_factors.len() % d != 0 {
            return Err(Error::validation("wrmf: factor lengths do not match dimension"));
        }
        if user_factors.iter().chain(&item_factors).any(|v| !v.is_finite()) {
            return Err(Error::validation("wrmf: non-finite factor"));
        }
        Ok(WrmfModel {
            num_users: user_factors.len() / d,
            num_items: item_factors.len() / d,
            params,
            user_factors,
            item_factors,
        })
    }

    pub fn user_factors(&self) -> &[f64] {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &[f64] {
        &self.item_factors
    }

    pub fn user_vector(&self, u: usize) -> &[f64] {
        let d = self.params.factors;
        &self.user_factors[u * d..(u + 1) * d]
    }

    pub fn item_vector(&self, i: usize) -> &[f64] {
        let d = self.params.factors;
        &self.item_factors[i * d..(i + 1) * d]
    }

    /// Half-sweep: every user's factors become the exact minimiser given `Y`.
    pub fn update_users(&mut self, train: &InteractionDataset) -> Result<()> {
        self.check_shape(train)?;
        self.user_factors = solve_side(train.counts(), &self.item_factors, &self.params, "user")?;
        Ok(())
    }

    /// Half-sweep: every item's factors become the exact minimiser given `X`.
    pub fn update_items(&mut self, train: &InteractionDataset) -> Result<()> {
        self.check_shape(train)?;
        let by_item = train.counts().transpose();
        self.update_items_with(&by_item)
    }

    fn update_items_with(&mut self, by_item: &SparseCounts) -> Result<()> {
        self.item_factors = solve_side(by_item, &self.user_factors, &self.params, "item")?;
        Ok(())
    }

    fn check_shape(&self, train: &InteractionDataset) -> Result<()> {
        if train.num_users() != self.num_users || train.num_artists() != self.num_items {
            return Err(Error::validation(format!(
                "wrmf: model is {}x{} but dataset is {}x{}",
                self.num_users,
                self.num_items,
                train.num_users(),
                train.num_artists()
            )));
        }
        Ok(())
    }

    pub fn to_container(&self) -> ModelContainer {
        let p = &self.params;
        let mut c = ModelContainer::new(ModelKind::Wrmf);
        c.push_u64("hp.factors", vec![p.factors as u64])
            .push_f64("hp.alpha", vec![p.alpha])
            .push_f64("hp.lambda", vec![p.lambda])
            .push_u64("hp.sweeps", vec![p.sweeps as u64])
            .push_u64("hp.init_seed", vec![p.init_seed])
            .push_u64("hp.confidence", vec![(p.confidence == Confidence::Log) as u64])
            .push_f64("hp.log_epsilon", vec![p.log_epsilon])
            .push_f64("user_factors", self.user_factors.clone())
            .push_f64("item_factors", self.item_factors.clone());
        c
    }

    pub fn from_container(c: &ModelContainer) -> Result<Self> {
        let params = WrmfParams {
            factors: c.u64_scalar("hp.factors")? as usize,
            alpha: c.f64_scalar("hp.alpha")?,
            lambda: c.f64_scalar("hp.lambda")?,
            sweeps: c.u64_scalar("hp.sweeps")? as usize,
            init_seed: c.u64_scalar("hp.init_seed")?,
            confidence: if c.u64_scalar("hp.confidence")? == 1 {
                Confidence::Log
            } else {
                Confidence::Linear
            },
            log_epsilon: c.f64_scalar("hp.log_epsilon")?,
        };
        Self::from_factors(
            params,
            c.f64s("user_factors")?.to_vec(),
            c.f64s("item_factors")?.to_vec(),
        )
    }
}

/// Solves every row of one side given the other side's factors.
fn solve_side(
    rows: &SparseCounts,
    other: &[f64],
    params: &WrmfParams,
    side: &'static str,
) -> Result<Vec<f64>> {
    let d = params.factors;
    let mut base = gram(other, d);
    for k in 0..d {
        base[k * d + k] += params.lambda;
    }
    let solved = par::map_range(rows.num_rows(), |e| -> Result<Vec<f64>> {
        let mut a = base.clone();
        let mut b = vec![0.0; d];
        for (&i, &c) in rows.row_indices(e).iter().zip(rows.row_values(e)) {
            let conf = params.confidence(c);
            let y = &other[i as usize * d..(i as usize + 1) * d];
            add_outer(&mut a, conf - 1.0, y);
            axpy(conf, y, &mut b);
        }
        cholesky_solve(&mut a, &mut b, d)
            .map_err(|err| Error::numerical(format!("wrmf {side} {e}: {err}")))?;
        Ok(b)
    });
    let mut out = Vec::with_capacity(rows.num_rows() * d);
    for row in solved {
        out.extend(row?);
    }
    Ok(out)
}

pub fn fit_wrmf(train: &InteractionDataset, params: &WrmfParams) -> Result<WrmfModel> {
    fit_wrmf_traced(train, params).map(|(m, _)| m)
}

/// Fits and returns the objective after initialisation and after every half-sweep.
pub fn fit_wrmf_traced(
    train: &InteractionDataset,
    params: &WrmfParams,
) -> Result<(WrmfModel, Vec<f64>)> {
    let mut model = WrmfModel::init(train, params)?;
    let by_item = train.counts().transpose();
    let mut trace = vec![wrmf_objective(train, &model)?];
    for _ in 0..params.sweeps {
        model.update_users(train)?;
        trace.push(wrmf_objective(train, &model)?);
        model.update_items_with(&by_item)?;
        trace.push(wrmf_objective(train, &model)?);
    }
    Ok((model, trace))
}

/// Full weighted loss including both ridge terms, computed in
/// `O(nnz·d + (users + items)·d²)`.
pub fn wrmf_objective(train: &InteractionDataset, model: &WrmfModel) -> Result<f64> {
    model.check_shape(train)?;
    let d = model.params.factors;
    let yty = gram(&model.item_factors, d);
    let mut loss = 0.0;
    let mut tmp = vec![0.0; d];
    for u in 0..model.num_users {
        let x = model.user_vector(u);
        // Σ_i s_ui² over all items = xᵀ (YᵀY) x
        for (k, t) in tmp.iter_mut().enumerate() {
            *t = dot(&yty[k * d..(k + 1) * d], x);
        }
        loss += dot(x, &tmp);
        for (&i, &c) in train.profile(u).iter().zip(train.profile_counts(u)) {
            let s = dot(x, model.item_vector(i as usize));
            let conf = model.params.confidence(c);
            loss += conf * (1.0 - s) * (1.0 - s) - s * s;
        }
    }
    let reg: f64 = model
        .user_factors
        .iter()
        .chain(&model.item_factors)
        .map(|v| v * v)
        .sum();
    Ok(loss + model.params.lambda * reg)
}

impl Recommender for WrmfModel {
    fn name(&self) -> &'static str {
        "wrmf"
    }

    fn num_artists(&self) -> usize {
        self.num_items
    }

    fn score_user(&self, _train: &InteractionDataset, user: usize) -> Vec<f64> {
        let x = self.user_vector(user);
        self.item_factors
            .chunks_exact(self.params.factors)
            .map(|y| dot(x, y))
            .collect()
    }
}
