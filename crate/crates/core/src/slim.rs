//! Sparse Linear Method.
//!
//! Learns an artist × artist weight matrix `W` by minimising, column by column,
//!
//! ```text
//! ½‖a_j − A w_j‖² + (l2/2)‖w_j‖² + l1‖w_j‖₁    subject to  w_jj = 0  (and w_j ≥ 0)
//! ```
//!
//! with cyclic coordinate descent. A user's scores are `a_u · W`.
//!
//! Columns are independent subproblems over the immutable training matrix and
//! are solved in parallel. Within a column, coordinates are visited in
//! ascending artist index; after the first full sweep the solver cycles over
//! the non-zero coordinates until they settle, then re-checks with a full sweep.
//! Under non-negativity, artists that never co-occur with the target column
//! are skipped: their gradient at any feasible point is non-positive, so their
//! optimum is zero.

use serde::{Deserialize, Serialize};

use crate::corpus::{InteractionDataset, SparseCounts};
use crate::model::{ModelContainer, ModelKind, Recommender};
use crate::{par, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlimParams {
    pub l1: f64,
    pub l2: f64,
    pub non_negative: bool,
    /// Upper bound on coordinate sweeps per column.
    pub max_iters: usize,
    /// Convergence threshold on the largest absolute coordinate change in a sweep.
    pub tolerance: f64,
    /// Fit on 0/1 occurrence instead of raw play counts.
    pub binarize: bool,
}

impl Default for SlimParams {
    fn default() -> Self {
        SlimParams {
            l1: 1.0,
            l2: 10.0,
            non_negative: true,
            max_iters: 100,
            tolerance: 1e-4,
            binarize: false,
        }
    }
}

impl SlimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l1 >= 0.0 && self.l2 >= 0.0 && self.l1.is_finite() && self.l2.is_finite()) {
            return Err(Error::validation("slim: penalties must be finite and >= 0"));
        }
        if self.max_iters == 0 || !(self.tolerance > 0.0) {
            return Err(Error::validation("slim: need max_iters >= 1 and tolerance > 0"));
        }
        Ok(())
    }
}

/// Training matrix in both orientations with per-column squared norms.
struct Design<'a> {
    rows: &'a SparseCounts,
    cols: SparseCounts,
    sq_norms: Vec<f64>,
    binarize: bool,
}

impl<'a> Design<'a> {
    fn new(train: &'a InteractionDataset, binarize: bool) -> Self {
        let rows = train.counts();
        let cols = rows.transpose();
        let value = |c: u32| if binarize { 1.0 } else { c as f64 };
        let sq_norms = (0..cols.num_rows())
            .map(|k| cols.row_values(k).iter().map(|&c| value(c) * value(c)).sum())
            .collect();
        Design {
            rows,
            cols,
            sq_norms,
            binarize,
        }
    }

    #[inline]
    fn value(&self, c: u32) -> f64 {
        if self.binarize {
            1.0
        } else {
            c as f64
        }
    }

    fn num_users(&self) -> usize {
        self.rows.num_rows()
    }

    fn num_artists(&self) -> usize {
        self.cols.num_rows()
    }

    /// Candidate coordinates for column `j`, ascending.
    fn candidates(&self, j: usize, non_negative: bool) -> Vec<u32> {
        if !non_negative {
            return (0..self.num_artists() as u32).filter(|&k| k as usize != j).collect();
        }
        let mut mark = vec![false; self.num_artists()];
        for &u in self.cols.row_indices(j) {
            for &k in self.rows.row_indices(u as usize) {
                mark[k as usize] = true;
            }
        }
        mark[j] = false;
        mark.iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(k, _)| k as u32)
            .collect()
    }
}

/// Column objective from the residual `r = a_j − A w` and the weights.
fn column_objective(residual: &[f64], weights: &[f64], p: &SlimParams) -> f64 {
    let rss: f64 = residual.iter().map(|r| r * r).sum();
    let l2: f64 = weights.iter().map(|w| w * w).sum();
    let l1: f64 = weights.iter().map(|w| w.abs()).sum();
    0.5 * rss + 0.5 * p.l2 * l2 + p.l1 * l1
}

struct ColumnSolver<'d, 'a> {
    design: &'d Design<'a>,
    params: &'d SlimParams,
    j: usize,
    candidates: Vec<u32>,
    weights: Vec<f64>,
    residual: Vec<f64>,
}

impl<'d, 'a> ColumnSolver<'d, 'a> {
    fn new(design: &'d Design<'a>, params: &'d SlimParams, j: usize) -> Self {
        let mut residual = vec![0.0; design.num_users()];
        for (&u, &c) in design.cols.row_indices(j).iter().zip(design.cols.row_values(j)) {
            residual[u as usize] = design.value(c);
        }
        let candidates = design.candidates(j, params.non_negative);
        let weights = vec![0.0; candidates.len()];
        ColumnSolver {
            design,
            params,
            j,
            candidates,
            weights,
            residual,
        }
    }

    /// Exact minimisation over coordinate `slot`; returns the absolute change.
    fn update(&mut self, slot: usize) -> f64 {
        let k = self.candidates[slot] as usize;
        let denom = self.design.sq_norms[k] + self.params.l2;
        if denom == 0.0 {
            return 0.0;
        }
        let users = self.design.cols.row_indices(k);
        let vals = self.design.cols.row_values(k);
        let old = self.weights[slot];
        let mut rho = self.design.sq_norms[k] * old;
        for (&u, &c) in users.iter().zip(vals) {
            rho += self.design.value(c) * self.residual[u as usize];
        }
        let shrunk = if self.params.non_negative {
            (rho - self.params.l1).max(0.0)
        } else {
            rho.signum() * (rho.abs() - self.params.l1).max(0.0)
        };
        let new = shrunk / denom;
        let delta = new - old;
        if delta != 0.0 {
            for (&u, &c) in users.iter().zip(vals) {
                self.residual[u as usize] -= self.design.value(c) * delta;
            }
            self.weights[slot] = new;
        }
        delta.abs()
    }

    fn sweep(&mut self, active_only: bool, trace: &mut Option<&mut Vec<f64>>) -> f64 {
        let mut max_change = 0.0f64;
        for slot in 0..self.candidates.len() {
            if active_only && self.weights[slot] == 0.0 {
                continue;
            }
            let change = self.update(slot);
            max_change = max_change.max(change);
            if let Some(t) = trace.as_deref_mut() {
                t.push(column_objective(&self.residual, &self.weights, self.params));
            }
        }
        max_change
    }

    fn solve(mut self, mut trace: Option<&mut Vec<f64>>) -> Result<Vec<(u32, f64)>> {
        if let Some(t) = trace.as_deref_mut() {
            t.push(column_objective(&self.residual, &self.weights, self.params));
        }
        let mut sweeps = 0;
        'outer: while sweeps < self.params.max_iters {
            let change = self.sweep(false, &mut trace);
            sweeps += 1;
            self.check_finite(change)?;
            if change < self.params.tolerance {
                break;
            }
            while sweeps < self.params.max_iters {
                let change = self.sweep(true, &mut trace);
                sweeps += 1;
                self.check_finite(change)?;
                if change < self.params.tolerance {
                    continue 'outer;
                }
            }
        }
        Ok(self
            .candidates
            .iter()
            .zip(&self.weights)
            .filter(|(_, &w)| w != 0.0)
            .map(|(&k, &w)| (k, w))
            .collect())
    }

    fn check_finite(&self, change: f64) -> Result<()> {
        if change.is_finite() {
            Ok(())
        } else {
            Err(Error::numerical(format!(
                "slim: non-finite weight update in column {}",
                self.j
            )))
        }
    }
}

/// Sparse artist × artist weights, stored by source artist (row of `W`).
#[derive(Debug, Clone, PartialEq)]
pub struct SlimModel {
    pub params: SlimParams,
    num_artists: usize,
    /// `rows[k]` = sorted `(j, W[k, j])` with non-zero weight.
    rows: Vec<Vec<(u32, f64)>>,
}

impl SlimModel {
    /// Builds from `(source, target, weight)` triplets. Diagonal entries are rejected.
    pub fn from_triplets(
        num_artists: usize,
        params: SlimParams,
        triplets: impl IntoIterator<Item = (u32, u32, f64)>,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); num_artists];
        for (k, j, w) in triplets {
            if k as usize >= num_artists || j as usize >= num_artists {
                return Err(Error::validation(format!(
                    "slim weight ({k}, {j}) out of range for {num_artists} artists"
                )));
            }
            if k == j {
                return Err(Error::validation(format!("slim weight on diagonal ({k}, {k})")));
            }
            if w != 0.0 {
                rows[k as usize].push((j, w));
            }
        }
        for r in &mut rows {
            r.sort_unstable_by_key(|&(j, _)| j);
            if r.windows(2).any(|p| p[0].0 == p[1].0) {
                return Err(Error::validation("duplicate slim weight"));
            }
        }
        Ok(SlimModel {
            params,
            num_artists,
            rows,
        })
    }

    pub fn weight(&self, source: u32, target: u32) -> f64 {
        let row = &self.rows[source as usize];
        match row.binary_search_by_key(&target, |&(j, _)| j) {
            Ok(i) => row[i].1,
            Err(_) => 0.0,
        }
    }

    /// All stored `(source, target, weight)` entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(k, r)| r.iter().map(move |&(j, w)| (k as u32, j, w)))
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    fn input_value(&self, c: u32) -> f64 {
        if self.params.binarize {
            1.0
        } else {
            c as f64
        }
    }

    pub fn to_container(&self) -> ModelContainer {
        let p = &self.params;
        let (mut src, mut dst, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for (k, j, x) in self.triplets() {
            src.push(k);
            dst.push(j);
            w.push(x);
        }
        let mut c = ModelContainer::new(ModelKind::Slim);
        c.push_f64("hp.l1", vec![p.l1])
            .push_f64("hp.l2", vec![p.l2])
            .push_f64("hp.tolerance", vec![p.tolerance])
            .push_u64("hp.max_iters", vec![p.max_iters as u64])
            .push_u64("hp.flags", vec![p.non_negative as u64 | (p.binarize as u64) << 1])
            .push_u64("num_artists", vec![self.num_artists as u64])
            .push_u32("row", src)
            .push_u32("col", dst)
            .push_f64("weight", w);
        c
    }

    pub fn from_container(c: &ModelContainer) -> Result<Self> {
        let flags = c.u64_scalar("hp.flags")?;
        let params = SlimParams {
            l1: c.f64_scalar("hp.l1")?,
            l2: c.f64_scalar("hp.l2")?,
            tolerance: c.f64_scalar("hp.tolerance")?,
            max_iters: c.u64_scalar("hp.max_iters")? as usize,
            non_negative: flags & 1 != 0,
            binarize: flags & 2 != 0,
        };
        let (src, dst, w) = (c.u32s("row")?, c.u32s("col")?, c.f64s("weight")?);
        if src.len() != dst.len() || src.len() != w.len() {
            return Err(Error::validation("slim model blobs have inconsistent lengths"));
        }
        let trip = src.iter().zip(dst).zip(w).map(|((&k, &j), &x)| (k, j, x));
        Self::from_triplets(c.u64_scalar("num_artists")? as usize, params, trip)
    }
}

impl Recommender for SlimModel {
    fn name(&self) -> &'static str {
        "slim"
    }

    fn num_artists(&self) -> usize {
        self.num_artists
    }

    fn score_user(&self, train: &InteractionDataset, user: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.num_artists];
        for (&k, &c) in train.profile(user).iter().zip(train.profile_counts(user)) {
            let x = self.input_value(c);
            for &(j, w) in &self.rows[k as usize] {
                s[j as usize] += x * w;
            }
        }
        s
    }
}

/// Fits every column of `W` (in parallel when enabled).
pub fn fit_slim(train: &InteractionDataset, params: &SlimParams) -> Result<SlimModel> {
    params.validate()?;
    if train.num_pairs() == 0 {
        return Err(Error::validation("slim: empty training matrix"));
    }
    let design = Design::new(train, params.binarize);
    let columns = par::map_range(design.num_artists(), |j| {
        ColumnSolver::new(&design, params, j).solve(None)
    });
    let mut trip = Vec::new();
    for (j, col) in columns.into_iter().enumerate() {
        for (k, w) in col? {
            trip.push((k, j as u32, w));
        }
    }
    SlimModel::from_triplets(design.num_artists(), params.clone(), trip)
}

/// Solves a single column, returning its `(source, weight)` entries and the
/// column objective recorded before the first and after every coordinate update.
pub fn fit_column_traced(
    train: &InteractionDataset,
    column: usize,
    params: &SlimParams,
) -> Result<(Vec<(u32, f64)>, Vec<f64>)> {
    params.validate()?;
    if column >= train.num_artists() {
        return Err(Error::validation(format!("slim: column {column} out of range")));
    }
    let design = Design::new(train, params.binarize);
    let mut trace = Vec::new();
    let w = ColumnSolver::new(&design, params, column).solve(Some(&mut trace))?;
    Ok((w, trace))
}

/// `½‖A − AW‖² + (l2/2)‖W‖² + l1‖W‖₁` for the weights held by `model`, using
/// `params` for the penalties and the input encoding.
pub fn slim_objective(
    train: &InteractionDataset,
    model: &SlimModel,
    params: &SlimParams,
) -> Result<f64> {
    if model.num_artists != train.num_artists() {
        return Err(Error::validation(format!(
            "slim: weights are {n}x{n} but the dataset has {} artists",
            train.num_artists(),
            n = model.num_artists
        )));
    }
    let value = |c: u32| if params.binarize { 1.0 } else { c as f64 };
    let mut rss = 0.0;
    for u in 0..train.num_users() {
        let mut pred = vec![0.0; model.num_artists];
        for (&k, &c) in train.profile(u).iter().zip(train.profile_counts(u)) {
            for &(j, w) in &model.rows[k as usize] {
                pred[j as usize] += value(c) * w;
            }
        }
        for (&k, &c) in train.profile(u).iter().zip(train.profile_counts(u)) {
            pred[k as usize] -= value(c);
        }
        rss += pred.iter().map(|r| r * r).sum::<f64>();
    }
    let (mut l2, mut l1) = (0.0, 0.0);
    for (_, _, w) in model.triplets() {
        l2 += w * w;
        l1 += w.abs();
    }
    Ok(0.5 * rss + 0.5 * params.l2 * l2 + params.l1 * l1)
}
