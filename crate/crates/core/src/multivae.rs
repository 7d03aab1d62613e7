//! Variational autoencoder for collaborative filtering with a multinomial
//! likelihood.
//!
//! Network: `V → hidden → (μ, log σ²) ∈ R^latent`, `z = μ + σ ⊙ ε`,
//! `z → hidden → V` logits, tanh activations. The encoder sees the user's
//! binarized row scaled to unit L2 norm (with input dropout during training);
//! the loss for one user is
//!
//! ```text
//! −Σ_i x_i log softmax(logits)_i + β · ½ Σ_k (μ_k² + σ_k² − log σ_k² − 1)
//! ```
//!
//! Gradients come from an explicit reverse pass. Training is plain minibatch
//! SGD (optional momentum) with β annealed linearly from 0 to `beta_max`.
//! Minibatches are split into fixed-size chunks whose gradients are reduced in
//! chunk order, so results do not depend on the number of threads.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::InteractionDataset;
use crate::linalg::dot;
use crate::model::{ModelContainer, ModelKind, Recommender};
use crate::{par, rng, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiVaeParams {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub beta_max: f64,
    /// Optimizer steps over which β rises linearly from 0 to `beta_max`.
    pub anneal_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub dropout_keep: f64,
    pub init_seed: u64,
}

impl Default for MultiVaeParams {
    fn default() -> Self {
        MultiVaeParams {
            latent_dim: 16,
            hidden_dim: 64,
            beta_max: 0.2,
            anneal_steps: 200,
            epochs: 40,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            dropout_keep: 0.5,
            init_seed: 0,
        }
    }
}

impl MultiVaeParams {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.hidden_dim == 0 || self.batch_size == 0 {
            return Err(Error::validation(
                "multivae: latent_dim, hidden_dim and batch_size must be >= 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.beta_max) {
            return Err(Error::validation("multivae: beta_max must lie in [0, 1]"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("multivae: learning_rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::validation("multivae: momentum must lie in [0, 1)"));
        }
        if !(self.dropout_keep > 0.0 && self.dropout_keep <= 1.0) {
            return Err(Error::validation("multivae: dropout_keep must lie in (0, 1]"));
        }
        Ok(())
    }

    /// β after `step` optimizer updates.
    pub fn beta_at(&self, step: usize) -> f64 {
        if self.anneal_steps == 0 {
            self.beta_max
        } else {
            self.beta_max * (step as f64 / self.anneal_steps as f64).min(1.0)
        }
    }
}

/// Layer widths. All parameters live in one flat vector laid out as
/// `enc_in (V×H, item-major) | enc_in_b (H) | enc_out (2L×H) | enc_out_b (2L) |
/// dec_in (H×L) | dec_in_b (H) | dec_out (V×H, item-major) | dec_out_b (V)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VaeShape {
    pub items: usize,
    pub hidden: usize,
    pub latent: usize,
}

struct Params<'a> {
    enc_in: &'a [f64],
    enc_in_b: &'a [f64],
    enc_out: &'a [f64],
    enc_out_b: &'a [f64],
    dec_in: &'a [f64],
    dec_in_b: &'a [f64],
    dec_out: &'a [f64],
    dec_out_b: &'a [f64],
}

struct ParamsMut<'a> {
    enc_in: &'a mut [f64],
    enc_in_b: &'a mut [f64],
    enc_out: &'a mut [f64],
    enc_out_b: &'a mut [f64],
    dec_in: &'a mut [f64],
    dec_in_b: &'a mut [f64],
    dec_out: &'a mut [f64],
    dec_out_b: &'a mut [f64],
}

impl VaeShape {
    fn sizes(&self) -> [usize; 8] {
        let (v, h, l) = (self.items, self.hidden, self.latent);
        [v * h, h, 2 * l * h, 2 * l, h * l, h, v * h, v]
    }

    pub fn num_params(&self) -> usize {
        self.sizes().iter().sum()
    }

    fn split<'a>(&self, theta: &'a [f64]) -> Params<'a> {
        let [a, b, c, d, e, f, g, _] = self.sizes();
        let (enc_in, rest) = theta.split_at(a);
        let (enc_in_b, rest) = rest.split_at(b);
        let (enc_out, rest) = rest.split_at(c);
        let (enc_out_b, rest) = rest.split_at(d);
        let (dec_in, rest) = rest.split_at(e);
        let (dec_in_b, rest) = rest.split_at(f);
        let (dec_out, dec_out_b) = rest.split_at(g);
        Params {
            enc_in,
            enc_in_b,
            enc_out,
            enc_out_b,
            dec_in,
            dec_in_b,
            dec_out,
            dec_out_b,
        }
    }

    fn split_mut<'a>(&self, theta: &'a mut [f64]) -> ParamsMut<'a> {
        let [a, b, c, d, e, f, g, _] = self.sizes();
        let (enc_in, rest) = theta.split_at_mut(a);
        let (enc_in_b, rest) = rest.split_at_mut(b);
        let (enc_out, rest) = rest.split_at_mut(c);
        let (enc_out_b, rest) = rest.split_at_mut(d);
        let (dec_in, rest) = rest.split_at_mut(e);
        let (dec_in_b, rest) = rest.split_at_mut(f);
        let (dec_out, dec_out_b) = rest.split_at_mut(g);
        ParamsMut {
            enc_in,
            enc_in_b,
            enc_out,
            enc_out_b,
            dec_in,
            dec_in_b,
            dec_out,
            dec_out_b,
        }
    }
}

/// Loss decomposition for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub total: f64,
    pub nll: f64,
    pub kl: f64,
}

/// `KL(N(μ, σ²) ‖ N(0, I))` with `log_var = log σ²`.
pub fn gaussian_kl(mu: &[f64], log_var: &[f64]) -> f64 {
    mu.iter()
        .zip(log_var)
        .map(|(m, lv)| 0.5 * (m * m + (lv.exp_m1() - lv)))
        .sum()
}

struct Forward {
    /// Encoder input after normalisation and dropout: `(item, value)`.
    input: Vec<(u32, f64)>,
    h1: Vec<f64>,
    mu: Vec<f64>,
    log_var: Vec<f64>,
    std: Vec<f64>,
    z: Vec<f64>,
    h2: Vec<f64>,
    logits: Vec<f64>,
    log_norm: f64,
}

fn logsumexp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Scales a sparse row to unit L2 norm and applies an optional keep-mask.
fn encoder_input(x: &[(u32, f64)], keep: Option<(&[bool], f64)>) -> Vec<(u32, f64)> {
    let norm = x.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Vec::new();
    }
    x.iter()
        .enumerate()
        .filter_map(|(k, &(i, v))| match keep {
            Some((mask, _)) if !mask[k] => None,
            Some((_, p)) => Some((i, v / norm / p)),
            None => Some((i, v / norm)),
        })
        .collect()
}

fn forward(shape: &VaeShape, p: &Params<'_>, input: Vec<(u32, f64)>, noise: Option<&[f64]>) -> Forward {
    let (h, l) = (shape.hidden, shape.latent);
    let mut h1 = p.enc_in_b.to_vec();
    for &(i, v) in &input {
        let row = &p.enc_in[i as usize * h..(i as usize + 1) * h];
        for (a, w) in h1.iter_mut().zip(row) {
            *a += v * w;
        }
    }
    h1.iter_mut().for_each(|a| *a = a.tanh());
    let enc: Vec<f64> = (0..2 * l)
        .map(|o| p.enc_out_b[o] + dot(&p.enc_out[o * h..(o + 1) * h], &h1))
        .collect();
    let mu = enc[..l].to_vec();
    let log_var = enc[l..].to_vec();
    let std: Vec<f64> = log_var.iter().map(|lv| (0.5 * lv).exp()).collect();
    let z: Vec<f64> = match noise {
        Some(eps) => (0..l).map(|k| mu[k] + std[k] * eps[k]).collect(),
        None => mu.clone(),
    };
    let h2: Vec<f64> = (0..h)
        .map(|o| (p.dec_in_b[o] + dot(&p.dec_in[o * l..(o + 1) * l], &z)).tanh())
        .collect();
    let logits: Vec<f64> = p
        .dec_out
        .chunks_exact(h)
        .zip(p.dec_out_b)
        .map(|(row, b)| b + dot(row, &h2))
        .collect();
    let log_norm = logsumexp(&logits);
    Forward {
        input,
        h1,
        mu,
        log_var,
        std,
        z,
        h2,
        logits,
        log_norm,
    }
}

fn terms(f: &Forward, x: &[(u32, f64)], beta: f64) -> ElboTerms {
    let nll = -x
        .iter()
        .map(|&(i, v)| v * (f.logits[i as usize] - f.log_norm))
        .sum::<f64>();
    let kl = gaussian_kl(&f.mu, &f.log_var);
    ElboTerms {
        total: nll + beta * kl,
        nll,
        kl,
    }
}

/// Adds `scale · ∂total/∂θ` into `grad`.
fn backward(
    shape: &VaeShape,
    p: &Params<'_>,
    f: &Forward,
    x: &[(u32, f64)],
    eps: &[f64],
    beta: f64,
    scale: f64,
    grad: &mut [f64],
) {
    let (h, l) = (shape.hidden, shape.latent);
    let g = shape.split_mut(grad);
    let x_sum: f64 = x.iter().map(|(_, v)| v).sum();

    let mut d_logits: Vec<f64> = f
        .logits
        .iter()
        .map(|z| scale * x_sum * (z - f.log_norm).exp())
        .collect();
    for &(i, v) in x {
        d_logits[i as usize] -= scale * v;
    }

    let mut d_h2 = vec![0.0; h];
    for (i, &dl) in d_logits.iter().enumerate() {
        g.dec_out_b[i] += dl;
        let row = &p.dec_out[i * h..(i + 1) * h];
        let grow = &mut g.dec_out[i * h..(i + 1) * h];
        for k in 0..h {
            grow[k] += dl * f.h2[k];
            d_h2[k] += dl * row[k];
        }
    }

    let mut d_z = vec![0.0; l];
    for o in 0..h {
        let da = d_h2[o] * (1.0 - f.h2[o] * f.h2[o]);
        g.dec_in_b[o] += da;
        let row = &p.dec_in[o * l..(o + 1) * l];
        let grow = &mut g.dec_in[o * l..(o + 1) * l];
        for k in 0..l {
            grow[k] += da * f.z[k];
            d_z[k] += da * row[k];
        }
    }

    let mut d_enc = vec![0.0; 2 * l];
    for k in 0..l {
        d_enc[k] = d_z[k] + scale * beta * f.mu[k];
        d_enc[l + k] = d_z[k] * eps[k] * 0.5 * f.std[k]
            + scale * beta * 0.5 * f.log_var[k].exp_m1();
    }

    let mut d_h1 = vec![0.0; h];
    for (o, &de) in d_enc.iter().enumerate() {
        g.enc_out_b[o] += de;
        let row = &p.enc_out[o * h..(o + 1) * h];
        let grow = &mut g.enc_out[o * h..(o + 1) * h];
        for k in 0..h {
            grow[k] += de * f.h1[k];
            d_h1[k] += de * row[k];
        }
    }

    let d_a1: Vec<f64> = (0..h).map(|k| d_h1[k] * (1.0 - f.h1[k] * f.h1[k])).collect();
    for k in 0..h {
        g.enc_in_b[k] += d_a1[k];
    }
    for &(i, v) in &f.input {
        let grow = &mut g.enc_in[i as usize * h..(i as usize + 1) * h];
        for k in 0..h {
            grow[k] += v * d_a1[k];
        }
    }
}

fn sparse(x: &[f64]) -> Vec<(u32, f64)> {
    x.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, &v)| (i as u32, v))
        .collect()
}

fn user_row(train: &InteractionDataset, u: usize) -> Vec<(u32, f64)> {
    train.profile(u).iter().map(|&a| (a, 1.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiVaeModel {
    pub params: MultiVaeParams,
    shape: VaeShape,
    theta: Vec<f64>,
    /// Mean training loss per epoch.
    pub loss_history: Vec<f64>,
}

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const EXAMPLE_STREAM: u64 = 3;
/// Examples per gradient chunk; fixed so the reduction order never changes.
const GRAD_CHUNK: usize = 8;

impl MultiVaeModel {
    /// Glorot-uniform weights and zero biases drawn from `params.init_seed`.
    pub fn init(num_items: usize, params: &MultiVaeParams) -> Result<Self> {
        params.validate()?;
        if num_items == 0 {
            return Err(Error::validation("multivae: no items"));
        }
        let shape = VaeShape {
            items: num_items,
            hidden: params.hidden_dim,
            latent: params.latent_dim,
        };
        let mut theta = vec![0.0; shape.num_params()];
        let mut r = rng::stream(params.init_seed, &[INIT_STREAM]);
        {
            let (v, h, l) = (shape.items, shape.hidden, shape.latent);
            let p = shape.split_mut(&mut theta);
            let mut glorot = |w: &mut [f64], fan_in: usize, fan_out: usize| {
                let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
                w.iter_mut().for_each(|x| *x = r.random_range(-lim..=lim));
            };
            glorot(p.enc_in, v, h);
            glorot(p.enc_out, h, 2 * l);
            glorot(p.dec_in, l, h);
            glorot(p.dec_out, h, v);
        }
        Ok(MultiVaeModel {
            params: params.clone(),
            shape,
            theta,
            loss_history: Vec::new(),
        })
    }

    pub fn from_parameters(params: MultiVaeParams, shape: VaeShape, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != shape.num_params() {
            return Err(Error::validation(format!(
                "multivae: {} parameters for a network needing {}",
                theta.len(),
                shape.num_params()
            )));
        }
        if shape.hidden != params.hidden_dim || shape.latent != params.latent_dim {
            return Err(Error::validation("multivae: shape disagrees with hyperparameters"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("multivae: non-finite parameter"));
        }
        Ok(MultiVaeModel {
            params,
            shape,
            theta,
            loss_history: Vec::new(),
        })
    }

    pub fn shape(&self) -> VaeShape {
        self.shape
    }

    pub fn parameters(&self) -> &[f64] {
        &self.theta
    }

    pub fn parameters_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    fn check_input(&self, x: &[f64], noise: &[f64], beta: f64) -> Result<()> {
        if x.len() != self.shape.items || noise.len() != self.shape.latent {
            return Err(Error::validation(format!(
                "multivae: expected input of {} and noise of {}, got {} and {}",
                self.shape.items,
                self.shape.latent,
                x.len(),
                noise.len()
            )));
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::validation("multivae: beta must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Loss for a dense row `x` at a fixed standard-normal draw, dropout off.
    pub fn elbo_loss(&self, x: &[f64], noise: &[f64], beta: f64) -> Result<ElboTerms> {
        self.check_input(x, noise, beta)?;
        let xs = sparse(x);
        let p = self.shape.split(&self.theta);
        let f = forward(&self.shape, &p, encoder_input(&xs, None), Some(noise));
        Ok(terms(&f, &xs, beta))
    }

    /// Exact gradient of [`elbo_loss`](Self::elbo_loss) with respect to every parameter.
    pub fn gradient(&self, x: &[f64], noise: &[f64], beta: f64) -> Result<(ElboTerms, Vec<f64>)> {
        self.check_input(x, noise, beta)?;
        let xs = sparse(x);
        let p = self.shape.split(&self.theta);
        let f = forward(&self.shape, &p, encoder_input(&xs, None), Some(noise));
        let mut grad = vec![0.0; self.theta.len()];
        backward(&self.shape, &p, &f, &xs, noise, beta, 1.0, &mut grad);
        Ok((terms(&f, &xs, beta), grad))
    }

    /// Decoder logits at the posterior mean of a sparse row.
    fn logits(&self, x: &[(u32, f64)]) -> Vec<f64> {
        let p = self.shape.split(&self.theta);
        forward(&self.shape, &p, encoder_input(x, None), None).logits
    }

    /// One training step's gradient over `users`, reduced in fixed chunk order.
    fn batch_gradient(
        &self,
        train: &InteractionDataset,
        users: &[usize],
        step: usize,
        beta: f64,
    ) -> (f64, Vec<f64>) {
        let shape = self.shape;
        let keep = self.params.dropout_keep;
        let seed = self.params.init_seed;
        let scale = 1.0 / users.len() as f64;
        let chunks: Vec<&[usize]> = users.chunks(GRAD_CHUNK).collect();
        let partial = par::map_slice(&chunks, |chunk| {
            let p = shape.split(&self.theta);
            let mut grad = vec![0.0; self.theta.len()];
            let mut loss = 0.0;
            for &u in chunk.iter() {
                let x = user_row(train, u);
                let mut r = rng::stream(seed, &[EXAMPLE_STREAM, step as u64, u as u64]);
                let eps: Vec<f64> = (0..shape.latent).map(|_| r.sample(StandardNormal)).collect();
                let input = if keep < 1.0 {
                    let mask: Vec<bool> = x.iter().map(|_| r.random::<f64>() < keep).collect();
                    encoder_input(&x, Some((&mask, keep)))
                } else {
                    encoder_input(&x, None)
                };
                let f = forward(&shape, &p, input, Some(&eps));
                loss += terms(&f, &x, beta).total;
                backward(&shape, &p, &f, &x, &eps, beta, scale, &mut grad);
            }
            (loss, grad)
        });
        let mut total = vec![0.0; self.theta.len()];
        let mut loss = 0.0;
        for (l, g) in partial {
            loss += l;
            total.iter_mut().zip(&g).for_each(|(t, x)| *t += x);
        }
        (loss, total)
    }

    pub fn to_container(&self) -> ModelContainer {
        let p = &self.params;
        let mut c = ModelContainer::new(ModelKind::MultiVae);
        c.push_u64(
            "shape",
            vec![self.shape.items as u64, self.shape.hidden as u64, self.shape.latent as u64],
        )
        .push_u64(
            "hp.ints",
            vec![
                p.anneal_steps as u64,
                p.epochs as u64,
                p.batch_size as u64,
                p.init_seed,
            ],
        )
        .push_f64(
            "hp.reals",
            vec![p.beta_max, p.learning_rate, p.momentum, p.dropout_keep],
        )
        .push_f64("theta", self.theta.clone())
        .push_f64("loss_history", self.loss_history.clone());
        c
    }

    pub fn from_container(c: &ModelContainer) -> Result<Self> {
        let (shape, ints, reals) = match (c.u64s("shape")?, c.u64s("hp.ints")?, c.f64s("hp.reals")?) {
            (&[v, h, l], &[a, e, b, s], &[bm, lr, mo, dk]) => (
                VaeShape {
                    items: v as usize,
                    hidden: h as usize,
                    latent: l as usize,
                },
                (a, e, b, s),
                (bm, lr, mo, dk),
            ),
            _ => return Err(Error::validation("multivae: malformed header blobs")),
        };
        let params = MultiVaeParams {
            latent_dim: shape.latent,
            hidden_dim: shape.hidden,
            anneal_steps: ints.0 as usize,
            epochs: ints.1 as usize,
            batch_size: ints.2 as usize,
            init_seed: ints.3,
            beta_max: reals.0,
            learning_rate: reals.1,
            momentum: reals.2,
            dropout_keep: reals.3,
        };
        let mut m = Self::from_parameters(params, shape, c.f64s("theta")?.to_vec())?;
        m.loss_history = c.f64s("loss_history")?.to_vec();
        Ok(m)
    }
}

pub fn fit_multivae(train: &InteractionDataset, params: &MultiVaeParams) -> Result<MultiVaeModel> {
    params.validate()?;
    if train.num_pairs() == 0 {
        return Err(Error::validation("multivae: empty training matrix"));
    }
    let mut model = MultiVaeModel::init(train.num_artists(), params)?;
    let mut users: Vec<usize> = (0..train.num_users())
        .filter(|&u| !train.profile(u).is_empty())
        .collect();
    let mut velocity = vec![0.0; model.theta.len()];
    let mut step = 0usize;
    for epoch in 0..params.epochs {
        users.sort_unstable();
        users.shuffle(&mut rng::stream(params.init_seed, &[SHUFFLE_STREAM, epoch as u64]));
        let mut epoch_loss = 0.0;
        for (b, batch) in users.chunks(params.batch_size).enumerate() {
            let beta = params.beta_at(step);
            let (loss, grad) = model.batch_gradient(train, batch, step, beta);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::numerical(format!(
                    "multivae: non-finite loss at epoch {epoch}, batch {b}"
                )));
            }
            epoch_loss += loss;
            for ((t, v), g) in model.theta.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = params.momentum * *v + g;
                *t -= params.learning_rate * *v;
            }
            step += 1;
        }
        model.loss_history.push(epoch_loss / users.len() as f64);
    }
    Ok(model)
}

impl Recommender for MultiVaeModel {
    fn name(&self) -> &'static str {
        "multivae"
    }

    fn num_artists(&self) -> usize {
        self.shape.items
    }

    fn score_user(&self, train: &InteractionDataset, user: usize) -> Vec<f64> {
        self.logits(&user_row(train, user))
    }
}
