//! Embedding-fed MLP detector with an optional language head and virtual
//! adversarial training.
//!
//! Architecture: `x -> relu(W1 x + b1) -> dropout -> sigmoid(w_bot . h + b_bot)`,
//! plus `sigmoid(w_lang . h + b_lang)` when multi-task learning is on. The
//! combined loss is `alpha * L_bot + (1 - alpha) * L_lang`. With VAT the
//! objective gains `alpha_vat * KL(p(x) || p(x + r_adv))` on the bot head,
//! where `r_adv` comes from one power-iteration step and both `r_adv` and the
//! clean distribution are held constant during differentiation.
//!
//! Gradients are written out by hand and checked against central finite
//! differences in the tests.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::util::{self, dot, l2_norm, sigmoid};

pub const DEFAULT_HIDDEN: usize = 64;

/// Probability clamp used by every log-loss evaluation.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub input_dim: usize,
    pub hidden: usize,
    /// Hidden-major: row `h` holds the `input_dim` weights of hidden unit `h`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w_bot: Vec<f64>,
    pub b_bot: f64,
    pub w_lang: Option<Vec<f64>>,
    pub b_lang: Option<f64>,
}

impl MlpParams {
    /// He-uniform hidden weights, Glorot-uniform heads, zero biases.
    pub fn init(input_dim: usize, hidden: usize, mtl: bool, seed: u64) -> Self {
        let mut rng = util::rng(seed);
        let a1 = (6.0 / input_dim as f64).sqrt();
        let a2 = (6.0 / (hidden as f64 + 1.0)).sqrt();
        let w1 = (0..input_dim * hidden).map(|_| rng.random_range(-a1..a1)).collect();
        let w_bot = (0..hidden).map(|_| rng.random_range(-a2..a2)).collect();
        let w_lang = mtl.then(|| (0..hidden).map(|_| rng.random_range(-a2..a2)).collect());
        MlpParams {
            input_dim,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w_bot,
            b_bot: 0.0,
            w_lang,
            b_lang: mtl.then_some(0.0),
        }
    }

    pub fn has_lang_head(&self) -> bool {
        self.w_lang.is_some()
    }

    pub fn zeros_like(&self) -> Self {
        MlpParams {
            input_dim: self.input_dim,
            hidden: self.hidden,
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.hidden],
            w_bot: vec![0.0; self.hidden],
            b_bot: 0.0,
            w_lang: self.w_lang.as_ref().map(|w| vec![0.0; w.len()]),
            b_lang: self.b_lang.map(|_| 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.input_dim * self.hidden, self.w1.len())?;
        check_dim(self.hidden, self.b1.len())?;
        check_dim(self.hidden, self.w_bot.len())?;
        match (&self.w_lang, self.b_lang) {
            (Some(w), Some(_)) => check_dim(self.hidden, w.len()),
            (None, None) => Ok(()),
            _ => Err(Error::Checkpoint("language head is half-present".into())),
        }
    }

    pub fn num_params(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w_bot.len() + 1 + self.w_lang.as_ref().map_or(0, |w| w.len() + 1)
    }

    /// Parameters in a fixed order: w1, b1, w_bot, b_bot, w_lang, b_lang.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w_bot);
        out.push(self.b_bot);
        if let (Some(w), Some(b)) = (&self.w_lang, self.b_lang) {
            out.extend_from_slice(w);
            out.push(b);
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let (w1, rest) = flat.split_at(self.w1.len());
        let (b1, rest) = rest.split_at(self.hidden);
        let (w_bot, rest) = rest.split_at(self.hidden);
        self.w1.copy_from_slice(w1);
        self.b1.copy_from_slice(b1);
        self.w_bot.copy_from_slice(w_bot);
        self.b_bot = rest[0];
        if let Some(w) = &mut self.w_lang {
            w.copy_from_slice(&rest[1..1 + self.hidden]);
            self.b_lang = Some(rest[1 + self.hidden]);
        }
    }

    fn axpy(&mut self, a: f64, other: &MlpParams) {
        let add = |dst: &mut [f64], src: &[f64]| dst.iter_mut().zip(src).for_each(|(d, s)| *d += a * s);
        add(&mut self.w1, &other.w1);
        add(&mut self.b1, &other.b1);
        add(&mut self.w_bot, &other.w_bot);
        self.b_bot += a * other.b_bot;
        if let (Some(d), Some(s)) = (&mut self.w_lang, &other.w_lang) {
            add(d, s);
        }
        if let (Some(d), Some(s)) = (&mut self.b_lang, other.b_lang) {
            *d += a * s;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtlConfig {
    pub enabled: bool,
    pub alpha: f64,
}

impl Default for MtlConfig {
    fn default() -> Self {
        MtlConfig {
            enabled: false,
            alpha: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VatConfig {
    pub enabled: bool,
    pub alpha: f64,
    pub epsilon: f64,
    pub xi: f64,
    pub power_iterations: usize,
}

impl Default for VatConfig {
    fn default() -> Self {
        VatConfig {
            enabled: false,
            alpha: 1.0,
            epsilon: 1.0,
            xi: 10.0,
            power_iterations: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
    pub weight_decay: f64,
    pub early_stopping_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            epochs: 4,
            batch_size: 32,
            dropout: 0.2,
            weight_decay: 0.01,
            early_stopping_patience: 1,
            seed: 0,
        }
    }
}

pub const BATCH_SIZE_RANGE: std::ops::RangeInclusive<usize> = 24..=48;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuralConfig {
    pub hidden: usize,
    pub mtl: MtlConfig,
    pub vat: VatConfig,
    pub train: TrainConfig,
}

impl Default for NeuralConfig {
    fn default() -> Self {
        NeuralConfig {
            hidden: DEFAULT_HIDDEN,
            mtl: MtlConfig::default(),
            vat: VatConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl NeuralConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        if self.hidden == 0 {
            return Err(Error::config("hidden size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.mtl.alpha) {
            return Err(Error::config(format!("MTL alpha must lie in [0, 1], got {}", self.mtl.alpha)));
        }
        if !(self.vat.epsilon > 0.0 && self.vat.xi > 0.0) {
            return Err(Error::config("VAT epsilon and xi must be positive"));
        }
        if !(self.vat.alpha >= 0.0) {
            return Err(Error::config("VAT alpha must be non-negative"));
        }
        if !(0.0..1.0).contains(&t.dropout) {
            return Err(Error::config(format!("dropout must lie in [0, 1), got {}", t.dropout)));
        }
        if !(t.learning_rate > 0.0) {
            return Err(Error::config("learning rate must be positive"));
        }
        if !BATCH_SIZE_RANGE.contains(&t.batch_size) {
            return Err(Error::config(format!(
                "batch size must lie in {}..={}, got {}",
                BATCH_SIZE_RANGE.start(),
                BATCH_SIZE_RANGE.end(),
                t.batch_size
            )));
        }
        if t.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if t.weight_decay < 0.0 {
            return Err(Error::config("weight decay must be non-negative"));
        }
        Ok(())
    }
}

/// Inverted-dropout mask: each entry is 0 or `1 / (1 - rate)`.
pub fn sample_mask(hidden: usize, rate: f64, rng: &mut util::Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - rate);
    (0..hidden)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub p_bot: f64,
    pub p_lang: Option<f64>,
    /// Hidden activations after dropout.
    pub hidden: Vec<f64>,
}

struct Pass {
    pre: Vec<f64>,
    h: Vec<f64>,
    z_bot: f64,
    z_lang: Option<f64>,
}

fn pass(params: &MlpParams, x: &[f64], mask: Option<&[f64]>) -> Pass {
    let d = params.input_dim;
    let pre: Vec<f64> = (0..params.hidden)
        .map(|k| dot(&params.w1[k * d..(k + 1) * d], x) + params.b1[k])
        .collect();
    let h: Vec<f64> = pre
        .iter()
        .enumerate()
        .map(|(k, &z)| z.max(0.0) * mask.map_or(1.0, |m| m[k]))
        .collect();
    let z_bot = dot(&params.w_bot, &h) + params.b_bot;
    let z_lang = params.w_lang.as_ref().map(|w| dot(w, &h) + params.b_lang.unwrap_or(0.0));
    Pass { pre, h, z_bot, z_lang }
}

fn check_input(params: &MlpParams, x: &[f64], mask: Option<&[f64]>) -> Result<()> {
    check_dim(params.input_dim, x.len())?;
    if let Some(m) = mask {
        check_dim(params.hidden, m.len())?;
    }
    Ok(())
}

/// Pass `mask` during training; `None` is inference (no dropout).
pub fn forward(params: &MlpParams, x: &[f64], mask: Option<&[f64]>) -> Result<Forward> {
    check_input(params, x, mask)?;
    let p = pass(params, x, mask);
    Ok(Forward {
        p_bot: sigmoid(p.z_bot),
        p_lang: p.z_lang.map(sigmoid),
        hidden: p.h,
    })
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = clamp_prob(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

pub fn mtl_loss(l_bot: f64, l_lang: f64, alpha: f64) -> f64 {
    alpha * l_bot + (1.0 - alpha) * l_lang
}

/// KL divergence between Bernoulli distributions with means `p` and `q`.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let (p, q) = (clamp_prob(p), clamp_prob(q));
    p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln()
}

/// One training example: input vector, bot target, language target (EN = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledInput {
    pub x: Vec<f64>,
    pub bot: f64,
    pub lang: f64,
}

/// Frozen VAT quantities for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct VatTarget {
    pub r_adv: Vec<f64>,
    pub p_clean: f64,
}

/// Per-example randomness fixed before a loss/gradient evaluation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleContext {
    pub mask: Option<Vec<f64>>,
    pub vat: Option<VatTarget>,
}

/// Input gradient of `z_bot` at `x`.
fn bot_logit_input_grad(params: &MlpParams, pass: &Pass, mask: Option<&[f64]>) -> Vec<f64> {
    let d = params.input_dim;
    let mut g = vec![0.0; d];
    for k in 0..params.hidden {
        if pass.pre[k] <= 0.0 {
            continue;
        }
        let coef = params.w_bot[k] * mask.map_or(1.0, |m| m[k]);
        if coef == 0.0 {
            continue;
        }
        for (gi, w) in g.iter_mut().zip(&params.w1[k * d..(k + 1) * d]) {
            *gi += coef * w;
        }
    }
    g
}

fn perturbed(x: &[f64], r: &[f64], scale: f64) -> Vec<f64> {
    x.iter().zip(r).map(|(a, b)| a + scale * b).collect()
}

fn random_unit(dim: usize, rng: &mut util::Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = l2_norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Adversarial direction of radius `epsilon` for input `x`.
///
/// Starts from a random unit vector and runs `power_iterations` steps of
/// `d <- normalize(grad_r KL(p(x) || p(x + xi d)))`. Power iteration fixes
/// the direction only up to sign, so the sign giving the larger KL at radius
/// `epsilon` is kept.
pub fn vat_perturbation(
    params: &MlpParams,
    x: &[f64],
    mask: Option<&[f64]>,
    cfg: &VatConfig,
    rng: &mut util::Rng,
) -> Result<Vec<f64>> {
    check_input(params, x, mask)?;
    let p_clean = sigmoid(pass(params, x, mask).z_bot);
    let mut d = random_unit(params.input_dim, rng);
    for _ in 0..cfg.power_iterations {
        let probe = pass(params, &perturbed(x, &d, cfg.xi), mask);
        let q = sigmoid(probe.z_bot);
        // dKL/dz_q = q - p for Bernoulli outputs.
        let g: Vec<f64> = bot_logit_input_grad(params, &probe, mask)
            .into_iter()
            .map(|v| (q - p_clean) * v)
            .collect();
        let n = l2_norm(&g);
        if n > 0.0 && n.is_finite() {
            d = g.into_iter().map(|v| v / n).collect();
        }
    }
    let kl_at = |sign: f64| bernoulli_kl(p_clean, sigmoid(pass(params, &perturbed(x, &d, sign * cfg.epsilon), mask).z_bot));
    let sign = if kl_at(-1.0) > kl_at(1.0) { -1.0 } else { 1.0 };
    Ok(d.into_iter().map(|v| sign * cfg.epsilon * v).collect())
}

/// `KL(p(x) || p(x + r_adv))` on the bot head.
pub fn vat_loss(params: &MlpParams, x: &[f64], r_adv: &[f64], mask: Option<&[f64]>) -> Result<f64> {
    check_input(params, x, mask)?;
    check_dim(params.input_dim, r_adv.len())?;
    let p = sigmoid(pass(params, x, mask).z_bot);
    let q = sigmoid(pass(params, &perturbed(x, r_adv, 1.0), mask).z_bot);
    Ok(bernoulli_kl(p, q))
}

/// Loss terms selected for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    /// Language-head weight `alpha`; `None` trains the bot head only.
    pub mtl_alpha: Option<f64>,
    /// Weight of the VAT term; used only where a context carries a target.
    pub vat_alpha: f64,
}

impl Objective {
    pub fn from_config(cfg: &NeuralConfig) -> Self {
        Objective {
            mtl_alpha: cfg.mtl.enabled.then_some(cfg.mtl.alpha),
            vat_alpha: if cfg.vat.enabled { cfg.vat.alpha } else { 0.0 },
        }
    }
}

fn check_batch(params: &MlpParams, batch: &[LabeledInput], ctx: &[SampleContext], obj: &Objective) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    check_dim(batch.len(), ctx.len())?;
    if obj.mtl_alpha.is_some() && !params.has_lang_head() {
        return Err(Error::invalid("multi-task objective needs a language head"));
    }
    for (s, c) in batch.iter().zip(ctx) {
        check_input(params, &s.x, c.mask.as_deref())?;
        if let Some(v) = &c.vat {
            check_dim(params.input_dim, v.r_adv.len())?;
        }
    }
    Ok(())
}

/// Mean objective over the batch with all randomness taken from `ctx`.
pub fn batch_loss(params: &MlpParams, batch: &[LabeledInput], ctx: &[SampleContext], obj: &Objective) -> Result<f64> {
    check_batch(params, batch, ctx, obj)?;
    let mut total = 0.0;
    for (s, c) in batch.iter().zip(ctx) {
        let mask = c.mask.as_deref();
        let p = pass(params, &s.x, mask);
        let l_bot = bce_loss(sigmoid(p.z_bot), s.bot);
        total += match (obj.mtl_alpha, p.z_lang) {
            (Some(alpha), Some(z)) => mtl_loss(l_bot, bce_loss(sigmoid(z), s.lang), alpha),
            _ => l_bot,
        };
        if let Some(v) = &c.vat {
            let q = sigmoid(pass(params, &perturbed(&s.x, &v.r_adv, 1.0), mask).z_bot);
            total += obj.vat_alpha * bernoulli_kl(v.p_clean, q);
        }
    }
    Ok(total / batch.len() as f64)
}

/// Accumulates gradients of `c_bot * z_bot + c_lang * z_lang` at `x`.
fn accumulate(grads: &mut MlpParams, params: &MlpParams, x: &[f64], p: &Pass, mask: Option<&[f64]>, c_bot: f64, c_lang: f64) {
    let d = params.input_dim;
    for k in 0..params.hidden {
        grads.w_bot[k] += c_bot * p.h[k];
    }
    grads.b_bot += c_bot;
    if let (Some(gw), Some(w)) = (&mut grads.w_lang, &params.w_lang) {
        for k in 0..params.hidden {
            gw[k] += c_lang * p.h[k];
        }
        *grads.b_lang.as_mut().expect("lang bias") += c_lang;
        let _ = w;
    }
    for k in 0..params.hidden {
        if p.pre[k] <= 0.0 {
            continue;
        }
        let m = mask.map_or(1.0, |m| m[k]);
        let lang = params.w_lang.as_ref().map_or(0.0, |w| c_lang * w[k]);
        let dz = (c_bot * params.w_bot[k] + lang) * m;
        if dz == 0.0 {
            continue;
        }
        grads.b1[k] += dz;
        for (g, xi) in grads.w1[k * d..(k + 1) * d].iter_mut().zip(x) {
            *g += dz * xi;
        }
    }
}

/// Analytic gradient of [`batch_loss`] with respect to every parameter.
pub fn backward(
    params: &MlpParams,
    batch: &[LabeledInput],
    ctx: &[SampleContext],
    obj: &Objective,
) -> Result<(f64, MlpParams)> {
    check_batch(params, batch, ctx, obj)?;
    let mut grads = params.zeros_like();
    let mut total = 0.0;
    for (s, c) in batch.iter().zip(ctx) {
        let mask = c.mask.as_deref();
        let p = pass(params, &s.x, mask);
        let p_bot = sigmoid(p.z_bot);
        let l_bot = bce_loss(p_bot, s.bot);
        let (c_bot, c_lang) = match (obj.mtl_alpha, p.z_lang) {
            (Some(alpha), Some(z)) => {
                let p_lang = sigmoid(z);
                total += mtl_loss(l_bot, bce_loss(p_lang, s.lang), alpha);
                (alpha * (p_bot - s.bot), (1.0 - alpha) * (p_lang - s.lang))
            }
            _ => {
                total += l_bot;
                (p_bot - s.bot, 0.0)
            }
        };
        accumulate(&mut grads, params, &s.x, &p, mask, c_bot, c_lang);
        if let Some(v) = &c.vat {
            let x_adv = perturbed(&s.x, &v.r_adv, 1.0);
            let pa = pass(params, &x_adv, mask);
            let q = sigmoid(pa.z_bot);
            total += obj.vat_alpha * bernoulli_kl(v.p_clean, q);
            accumulate(&mut grads, params, &x_adv, &pa, mask, obj.vat_alpha * (q - v.p_clean), 0.0);
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let mut mean = grads.zeros_like();
    mean.axpy(scale, &grads);
    Ok((total * scale, mean))
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(num_params: usize, lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) {
        let mut theta = params.flatten();
        let g = grads.flatten();
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..theta.len() {
            theta[i] -= self.lr * self.weight_decay * theta[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            theta[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        params.assign_flat(&theta);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_bot_loss: f64,
    pub val_accuracy: f64,
    pub improved: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingLog {
    /// One JSON object per epoch.
    pub fn to_json_lines(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("epoch log serializes") + "\n")
            .collect()
    }
}

/// Mean bot-head log loss and accuracy at threshold 0.5, without dropout.
pub fn evaluate_bot(params: &MlpParams, data: &[LabeledInput]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in data {
        let p = forward(params, &s.x, None)?.p_bot;
        loss += bce_loss(p, s.bot);
        if (p >= 0.5) == (s.bot >= 0.5) {
            correct += 1;
        }
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch AdamW training with early stopping on validation bot loss.
///
/// Shuffling, dropout masks and VAT start vectors all come from one seeded
/// stream, so runs are reproducible bit for bit. Returns the parameters of
/// the best validation epoch.
pub fn train(train_set: &[LabeledInput], val_set: &[LabeledInput], cfg: &NeuralConfig) -> Result<(MlpParams, TrainingLog)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }
    let input_dim = train_set[0].x.len();
    if input_dim == 0 {
        return Err(Error::invalid("input vectors must be nonempty"));
    }
    for s in train_set.iter().chain(val_set) {
        check_dim(input_dim, s.x.len())?;
    }
    if cfg.mtl.enabled {
        let first = train_set[0].lang;
        if train_set.iter().all(|s| s.lang == first) {
            return Err(Error::invalid("multi-task training needs documents in both languages"));
        }
    }
    let t = &cfg.train;
    let mut rng = util::rng(t.seed);
    let mut params = MlpParams::init(input_dim, cfg.hidden, cfg.mtl.enabled, rng.random());
    let obj = Objective::from_config(cfg);
    let mut opt = AdamW::new(params.num_params(), t.learning_rate, t.weight_decay);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = params.clone();
    let mut best_loss = f64::INFINITY;
    let mut log = TrainingLog::default();
    let mut stale = 0;
    for epoch in 1..=t.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(t.batch_size) {
            let batch: Vec<LabeledInput> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let mut ctx = Vec::with_capacity(batch.len());
            for s in &batch {
                let mask = (t.dropout > 0.0).then(|| sample_mask(cfg.hidden, t.dropout, &mut rng));
                let vat = if cfg.vat.enabled {
                    let p_clean = forward(&params, &s.x, mask.as_deref())?.p_bot;
                    let r_adv = vat_perturbation(&params, &s.x, mask.as_deref(), &cfg.vat, &mut rng)?;
                    Some(VatTarget { r_adv, p_clean })
                } else {
                    None
                };
                ctx.push(SampleContext { mask, vat });
            }
            let (loss, grads) = backward(&params, &batch, &ctx, &obj)?;
            epoch_loss += loss * batch.len() as f64;
            opt.step(&mut params, &grads);
        }
        let (val_loss, val_acc) = evaluate_bot(&params, val_set)?;
        let improved = val_loss < best_loss;
        if improved {
            best_loss = val_loss;
            best = params.clone();
            log.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
        }
        log.epochs.push(EpochLog {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            val_bot_loss: val_loss,
            val_accuracy: val_acc,
            improved,
        });
        if stale >= t.early_stopping_patience.max(1) && epoch < t.epochs {
            log.stopped_early = true;
            break;
        }
    }
    Ok((best, log))
}

/// Trained network plus the configuration it was trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuralClassifier {
    pub config: NeuralConfig,
    pub params: MlpParams,
}

impl NeuralClassifier {
    pub fn fit(train_set: &[LabeledInput], val_set: &[LabeledInput], cfg: &NeuralConfig) -> Result<(Self, TrainingLog)> {
        let (params, log) = train(train_set, val_set, cfg)?;
        Ok((
            NeuralClassifier {
                config: *cfg,
                params,
            },
            log,
        ))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(forward(&self.params, x, None)?.p_bot)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_batch(dim: usize, n: usize, seed: u64) -> Vec<LabeledInput> {
        let mut rng = util::rng(seed);
        (0..n)
            .map(|i| LabeledInput {
                x: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                bot: (i % 2) as f64,
                lang: ((i / 2) % 2) as f64,
            })
            .collect()
    }

    #[test]
    fn zero_weights_give_one_half() {
        let mut p = MlpParams::init(4, 8, false, 1);
        p.assign_flat(&vec![0.0; p.num_params()]);
        assert_eq!(forward(&p, &[1.0, 2.0, 3.0, 4.0], None).unwrap().p_bot, 0.5);
    }

    #[test]
    fn inference_is_deterministic_and_mask_of_ones_is_identity() {
        let p = MlpParams::init(5, 16, true, 2);
        let x = [0.3, -0.2, 0.9, 0.0, 1.0];
        let a = forward(&p, &x, None).unwrap();
        assert_eq!(a, forward(&p, &x, None).unwrap());
        let ones = vec![1.0; 16];
        assert_eq!(a, forward(&p, &x, Some(&ones)).unwrap());
        // dropout rate 0 always keeps with factor 1
        let mask = sample_mask(16, 0.0, &mut util::rng(0));
        assert_eq!(mask, ones);
        assert!(matches!(forward(&p, &x[..3], None), Err(Error::Dimension { .. })));
    }

    #[test]
    fn loss_values() {
        assert!((bce_loss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(1.0 - 1e-7, 1.0) - 1e-7).abs() < 1e-12);
        assert!((bce_loss(0.9, 0.0) - 10f64.ln()).abs() < 1e-12);
        assert!((mtl_loss(0.4, 0.8, 0.5) - 0.6).abs() < 1e-15);
        assert_eq!(mtl_loss(0.4, 0.8, 1.0), 0.4);
        assert_eq!(mtl_loss(0.4, 0.8, 0.0), 0.8);
    }

    #[test]
    fn bernoulli_kl_symmetric_flip() {
        // p = 0.5 + d, q = 0.5 - d
        let d = 0.1;
        let want = 0.6 * (0.6f64 / 0.4).ln() + 0.4 * (0.4f64 / 0.6).ln();
        assert!((bernoulli_kl(0.5 + d, 0.5 - d) - want).abs() < 1e-15);
        assert_eq!(bernoulli_kl(0.3, 0.3), 0.0);
    }

    #[test]
    fn vat_zero_perturbation_has_zero_loss() {
        let p = MlpParams::init(3, 8, false, 4);
        assert_eq!(vat_loss(&p, &[0.1, 0.2, 0.3], &[0.0; 3], None).unwrap(), 0.0);
    }

    #[test]
    fn vat_norm_matches_epsilon() {
        let p = MlpParams::init(6, 12, false, 5);
        let mut rng = util::rng(6);
        for eps in [0.5, 1.0, 3.0] {
            let cfg = VatConfig {
                enabled: true,
                epsilon: eps,
                ..Default::default()
            };
            let r = vat_perturbation(&p, &[0.5; 6], None, &cfg, &mut rng).unwrap();
            assert!((l2_norm(&r) - eps).abs() < 1e-9);
        }
    }

    #[test]
    fn perfect_predictions_have_zero_head_gradient() {
        // Zero hidden weights make p_bot = sigmoid(b_bot) for every input;
        // with targets equal to that probability the BCE gradient p - y is 0.
        let mut p = MlpParams::init(3, 4, false, 0);
        p.assign_flat(&vec![0.0; p.num_params()]);
        p.b_bot = 0.3;
        let target = sigmoid(0.3);
        let batch: Vec<LabeledInput> = (0..4)
            .map(|i| LabeledInput {
                x: vec![i as f64, 1.0, -1.0],
                bot: target,
                lang: 0.0,
            })
            .collect();
        let obj = Objective {
            mtl_alpha: None,
            vat_alpha: 0.0,
        };
        let (_, g) = backward(&p, &batch, &vec![SampleContext::default(); 4], &obj).unwrap();
        assert!(g.w_bot.iter().all(|v| v.abs() < 1e-15) && g.b_bot.abs() < 1e-15);
    }

    #[test]
    fn duplicated_batch_has_same_mean_gradient() {
        let p = MlpParams::init(5, 8, true, 9);
        let batch = toy_batch(5, 4, 10);
        let obj = Objective {
            mtl_alpha: Some(0.5),
            vat_alpha: 0.0,
        };
        let ctx = vec![SampleContext::default(); 4];
        let (_, g1) = backward(&p, &batch, &ctx, &obj).unwrap();
        let doubled: Vec<_> = batch.iter().chain(&batch).cloned().collect();
        let (_, g2) = backward(&p, &doubled, &vec![SampleContext::default(); 8], &obj).unwrap();
        for (a, b) in g1.flatten().iter().zip(g2.flatten()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn mtl_needs_both_languages() {
        let mut data = toy_batch(3, 10, 1);
        data.iter_mut().for_each(|s| s.lang = 0.0);
        let cfg = NeuralConfig {
            mtl: MtlConfig {
                enabled: true,
                alpha: 0.5,
            },
            ..Default::default()
        };
        assert!(train(&data, &data, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(NeuralConfig::default().validate().is_ok());
        let mut c = NeuralConfig::default();
        c.train.batch_size = 16;
        assert!(c.validate().is_err());
        c.train.batch_size = 48;
        c.train.dropout = 1.0;
        assert!(c.validate().is_err());
        let mut c = NeuralConfig::default();
        c.vat.epsilon = 0.0;
        assert!(c.validate().is_err());
    }

    fn contexts(params: &MlpParams, batch: &[LabeledInput], dropout: bool, vat: bool, seed: u64) -> Vec<SampleContext> {
        let mut rng = util::rng(seed);
        let cfg = VatConfig {
            enabled: true,
            ..Default::default()
        };
        batch
            .iter()
            .map(|s| {
                let mask = dropout.then(|| sample_mask(params.hidden, 0.2, &mut rng));
                let vat = vat.then(|| VatTarget {
                    r_adv: vat_perturbation(params, &s.x, mask.as_deref(), &cfg, &mut rng).unwrap(),
                    p_clean: forward(params, &s.x, mask.as_deref()).unwrap().p_bot,
                });
                SampleContext { mask, vat }
            })
            .collect()
    }

    fn max_rel_error(params: &MlpParams, batch: &[LabeledInput], ctx: &[SampleContext], obj: &Objective) -> f64 {
        let (_, g) = backward(params, batch, ctx, obj).unwrap();
        let analytic = g.flatten();
        let theta = params.flatten();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..theta.len() {
            let mut p = params.clone();
            let mut t = theta.clone();
            t[i] = theta[i] + h;
            p.assign_flat(&t);
            let up = batch_loss(&p, batch, ctx, obj).unwrap();
            t[i] = theta[i] - h;
            p.assign_flat(&t);
            let down = batch_loss(&p, batch, ctx, obj).unwrap();
            let numeric = (up - down) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in [1, 2, 3] {
            for (mtl, vat) in [(false, false), (true, false), (false, true), (true, true)] {
                let params = MlpParams::init(7, 6, mtl, seed);
                let batch = toy_batch(7, 5, seed + 100);
                let ctx = contexts(&params, &batch, true, vat, seed);
                let obj = Objective {
                    mtl_alpha: mtl.then_some(0.3),
                    vat_alpha: 1.0,
                };
                let err = max_rel_error(&params, &batch, &ctx, &obj);
                assert!(err < 1e-4, "seed {seed} mtl {mtl} vat {vat}: {err}");
            }
        }
    }

    #[test]
    fn alpha_one_zeroes_language_gradients() {
        let params = MlpParams::init(5, 8, true, 3);
        let batch = toy_batch(5, 6, 4);
        let obj = Objective {
            mtl_alpha: Some(1.0),
            vat_alpha: 0.0,
        };
        let (_, g) = backward(&params, &batch, &vec![SampleContext::default(); 6], &obj).unwrap();
        assert!(g.w_lang.unwrap().iter().all(|&v| v == 0.0));
        assert_eq!(g.b_lang, Some(0.0));
    }

    #[test]
    fn vat_matches_grid_search_on_logistic_surface() {
        // Large hidden biases keep every unit active, so the bot logit is an
        // affine function of the 2-d input.
        let mut params = MlpParams::init(2, 4, false, 21);
        params.b1 = vec![50.0; 4];
        params.b_bot = -params.w_bot.iter().sum::<f64>() * 50.0 + 0.4;
        let cfg = VatConfig {
            enabled: true,
            ..Default::default()
        };
        let mut rng = util::rng(22);
        for x in [[0.3, -0.7], [1.0, 2.0], [-0.5, 0.1]] {
            let r = vat_perturbation(&params, &x, None, &cfg, &mut rng).unwrap();
            let best = (0..360)
                .map(|deg| {
                    let t = (deg as f64).to_radians();
                    [t.cos(), t.sin()]
                })
                .max_by(|a, b| {
                    let ka = vat_loss(&params, &x, &[a[0], a[1]], None).unwrap();
                    let kb = vat_loss(&params, &x, &[b[0], b[1]], None).unwrap();
                    ka.total_cmp(&kb)
                })
                .unwrap();
            let cos = dot(&r, &best) / l2_norm(&r);
            assert!(cos > 0.99, "cosine {cos}");
        }
    }

    fn blobs(n: usize, seed: u64) -> Vec<LabeledInput> {
        let mut rng = util::rng(seed);
        (0..n)
            .map(|i| {
                let y = (i % 2) as f64;
                let c = if y == 1.0 { 2.0 } else { -2.0 };
                LabeledInput {
                    x: vec![c + rng.random_range(-1.0..1.0), c + rng.random_range(-1.0..1.0)],
                    bot: y,
                    lang: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn learns_separable_data() {
        let data = blobs(200, 5);
        let (tr, va) = data.split_at(150);
        let mut cfg = NeuralConfig::default();
        cfg.train.learning_rate = 1e-2;
        cfg.train.epochs = 50;
        cfg.train.early_stopping_patience = 50;
        let (params, log) = train(tr, va, &cfg).unwrap();
        let (_, acc) = evaluate_bot(&params, va).unwrap();
        assert!(acc >= 0.95, "accuracy {acc}");
        assert!(log.epochs.len() <= 50);
        let again = train(tr, va, &cfg).unwrap();
        assert_eq!(again.0, params);
        assert_eq!(again.1, log);
    }

    #[test]
    fn early_stopping_after_worsening_epoch() {
        let data = blobs(100, 6);
        let (tr, va) = data.split_at(60);
        let mut cfg = NeuralConfig::default();
        // absurd step size overshoots after the first epoch
        cfg.train.learning_rate = 50.0;
        cfg.train.epochs = 10;
        cfg.train.dropout = 0.0;
        let (_, log) = train(tr, va, &cfg).unwrap();
        let worsened = log.epochs.windows(2).any(|w| !w[1].improved);
        assert!(worsened);
        let first_bad = log.epochs.iter().position(|e| !e.improved).unwrap();
        assert_eq!(log.epochs.len(), first_bad + 1);
        assert!(log.stopped_early || log.epochs.len() == 10);
    }

    #[test]
    fn one_small_step_does_not_increase_loss() {
        let mut failures = 0;
        for seed in 0..100 {
            let mut params = MlpParams::init(7, 16, false, seed);
            let batch = toy_batch(7, 8, seed + 1000);
            let ctx = vec![SampleContext::default(); batch.len()];
            let obj = Objective {
                mtl_alpha: None,
                vat_alpha: 0.0,
            };
            let (before, g) = backward(&params, &batch, &ctx, &obj).unwrap();
            let mut opt = AdamW::new(params.num_params(), 1e-3, 0.01);
            opt.step(&mut params, &g);
            let after = batch_loss(&params, &batch, &ctx, &obj).unwrap();
            if after > before {
                failures += 1;
            }
        }
        assert_eq!(failures, 0);
    }

    #[test]
    fn checkpoint_json_round_trips_bit_exactly() {
        let clf = NeuralClassifier {
            config: NeuralConfig::default(),
            params: MlpParams::init(7, 64, true, 11),
        };
        let json = serde_json::to_string(&clf).unwrap();
        let back: NeuralClassifier = serde_json::from_str(&json).unwrap();
        let bits = |p: &MlpParams| p.flatten().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert!(bits(&back.params) == bits(&clf.params));
    }
}
