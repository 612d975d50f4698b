//! Level-2 learners: binary, Gaussian-visible, and replicated softmax RBMs,
//! contrastive divergence training, and greedy two-layer stacking per
//! modality.
//!
//! Energies follow the standard forms: for binary units
//! E(v,h) = -v'Wh - b.v - c.h; the Gaussian variant couples v_i/sigma_i to
//! the hiddens and adds the (v_i - b_i)^2 / 2 sigma_i^2 quadratic term; the
//! replicated softmax scales the hidden bias by the word count M of the
//! document. The partition function is never computed; CD estimates the
//! model statistics with k Gibbs steps seeded from the data.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{expect_magic, read_f64s, read_u64, read_u8, write_f64s, write_magic, write_u64, write_u8};
use crate::numeric::{sigmoid, softmax, Matrix, Rng, Vector};

pub const RBM_MAGIC: &[u8] = b"RBMv1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbmVariant {
    Bernoulli,
    Gaussian,
    ReplicatedSoftmax,
}

impl RbmVariant {
    pub fn name(&self) -> &'static str {
        match self {
            RbmVariant::Bernoulli => "bernoulli",
            RbmVariant::Gaussian => "gaussian",
            RbmVariant::ReplicatedSoftmax => "replicated_softmax",
        }
    }

    fn tag(&self) -> u8 {
        match self {
            RbmVariant::Bernoulli => 0,
            RbmVariant::Gaussian => 1,
            RbmVariant::ReplicatedSoftmax => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<RbmVariant> {
        match tag {
            0 => Ok(RbmVariant::Bernoulli),
            1 => Ok(RbmVariant::Gaussian),
            2 => Ok(RbmVariant::ReplicatedSoftmax),
            other => Err(Error::Format(format!("unknown RBM variant tag {other}"))),
        }
    }
}

/// Weights and biases of one RBM. `sigma` is the per-visible standard
/// deviation of the Gaussian variant and stays all-ones otherwise.
#[derive(Debug, Clone)]
pub struct RbmParams {
    pub weights: Matrix, // n_visible x n_hidden
    pub visible_bias: Vector,
    pub hidden_bias: Vector,
    pub variant: RbmVariant,
    pub sigma: Vector,
}

impl RbmParams {
    /// All-zero parameters (unit sigma).
    pub fn zeros(variant: RbmVariant, n_visible: usize, n_hidden: usize) -> RbmParams {
        RbmParams {
            weights: Matrix::zeros((n_visible, n_hidden)),
            visible_bias: Vector::zeros(n_visible),
            hidden_bias: Vector::zeros(n_hidden),
            variant,
            sigma: Vector::ones(n_visible),
        }
    }

    /// Standard initialization: weights N(0, 0.01), zero biases.
    pub fn init(variant: RbmVariant, n_visible: usize, n_hidden: usize, rng: &mut Rng) -> RbmParams {
        let mut p = RbmParams::zeros(variant, n_visible, n_hidden);
        p.weights.mapv_inplace(|_| rng.normal(0.0, 0.01));
        p
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    fn require_m(&self, m_words: Option<usize>) -> Result<Option<usize>> {
        match (self.variant, m_words) {
            (RbmVariant::ReplicatedSoftmax, None) => Err(Error::Usage(
                "replicated softmax needs the word count M".into(),
            )),
            (RbmVariant::ReplicatedSoftmax, Some(m)) => Ok(Some(m)),
            (_, Some(_)) => Err(Error::Usage(format!(
                "word count M is only meaningful for replicated softmax, not {}",
                self.variant.name()
            ))),
            (_, None) => Ok(None),
        }
    }

    fn check_visible(&self, v: &Vector) -> Result<()> {
        if v.len() != self.n_visible() {
            return Err(Error::Dimension(format!(
                "visible vector has {} entries, RBM expects {}",
                v.len(),
                self.n_visible()
            )));
        }
        Ok(())
    }

    fn check_hidden(&self, h: &Vector) -> Result<()> {
        if h.len() != self.n_hidden() {
            return Err(Error::Dimension(format!(
                "hidden vector has {} entries, RBM expects {}",
                h.len(),
                self.n_hidden()
            )));
        }
        if h.iter().any(|x| *x != 0.0 && *x != 1.0) {
            return Err(Error::Validation("hidden state must be binary".into()));
        }
        Ok(())
    }
}

/// Energy of a joint configuration under the parameter variant.
pub fn energy(params: &RbmParams, v: &Vector, h: &Vector, m_words: Option<usize>) -> Result<f64> {
    params.check_visible(v)?;
    params.check_hidden(h)?;
    let m = params.require_m(m_words)?;
    let coupling = match params.variant {
        RbmVariant::Gaussian => (v / &params.sigma).dot(&params.weights.dot(h)),
        _ => v.dot(&params.weights.dot(h)),
    };
    Ok(match params.variant {
        RbmVariant::Bernoulli => -coupling - params.visible_bias.dot(v) - params.hidden_bias.dot(h),
        RbmVariant::Gaussian => {
            let quad = v
                .iter()
                .zip(params.visible_bias.iter())
                .zip(params.sigma.iter())
                .map(|((vi, bi), si)| (vi - bi) * (vi - bi) / (2.0 * si * si))
                .sum::<f64>();
            -coupling + quad - params.hidden_bias.dot(h)
        }
        RbmVariant::ReplicatedSoftmax => {
            -coupling
                - params.visible_bias.dot(v)
                - m.unwrap() as f64 * params.hidden_bias.dot(h)
        }
    })
}

/// P(h_j = 1 | v) for every hidden unit, derived from the variant's energy.
pub fn hidden_activation(
    params: &RbmParams,
    v: &Vector,
    m_words: Option<usize>,
) -> Result<Vector> {
    params.check_visible(v)?;
    let m = params.require_m(m_words)?;
    Ok(hidden_preactivation(params, v, m).mapv(sigmoid))
}

fn hidden_preactivation(params: &RbmParams, v: &Vector, m_words: Option<usize>) -> Vector {
    match params.variant {
        RbmVariant::Bernoulli => params.weights.t().dot(v) + &params.hidden_bias,
        RbmVariant::Gaussian => params.weights.t().dot(&(v / &params.sigma)) + &params.hidden_bias,
        RbmVariant::ReplicatedSoftmax => {
            params.weights.t().dot(v) + &(&params.hidden_bias * m_words.unwrap() as f64)
        }
    }
}

/// Conditional distribution of the visible layer given a binary hidden state.
#[derive(Debug, Clone)]
pub enum VisibleDistribution {
    /// Per-unit Bernoulli probabilities.
    Bernoulli(Vector),
    /// Per-unit Normal with the given means and standard deviations.
    Gaussian { mean: Vector, sigma: Vector },
    /// One softmax distribution over the n words; reconstruction draws
    /// `draws` samples from it.
    Multinomial { probs: Vector, draws: usize },
}

impl VisibleDistribution {
    /// Expected visible vector (multinomial mean = draws * probs).
    pub fn mean(&self) -> Vector {
        match self {
            VisibleDistribution::Bernoulli(p) => p.clone(),
            VisibleDistribution::Gaussian { mean, .. } => mean.clone(),
            VisibleDistribution::Multinomial { probs, draws } => probs * *draws as f64,
        }
    }
}

/// Conditional visible distribution given hidden states.
pub fn visible_activation(
    params: &RbmParams,
    h: &Vector,
    m_words: Option<usize>,
) -> Result<VisibleDistribution> {
    params.check_hidden(h)?;
    let m = params.require_m(m_words)?;
    let wh = params.weights.dot(h);
    Ok(match params.variant {
        RbmVariant::Bernoulli => {
            VisibleDistribution::Bernoulli((wh + &params.visible_bias).mapv(sigmoid))
        }
        RbmVariant::Gaussian => VisibleDistribution::Gaussian {
            mean: &params.visible_bias + &(&params.sigma * &wh),
            sigma: params.sigma.clone(),
        },
        RbmVariant::ReplicatedSoftmax => VisibleDistribution::Multinomial {
            probs: softmax(&(wh + &params.visible_bias)),
            draws: m.unwrap(),
        },
    })
}

/// Optional sparsity regularizer: pushes mean hidden activation toward the
/// target rate by adjusting the hidden-bias gradient.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SparsityConfig {
    pub target: f64,
    pub weight: f64,
}

/// Contrastive divergence hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CdConfig {
    pub epsilon: f64,
    pub gibbs_steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Momentum before the switch epoch.
    pub momentum: f64,
    pub momentum_final: f64,
    pub momentum_switch_epoch: usize,
    pub weight_decay: f64,
    pub sparsity: Option<SparsityConfig>,
    pub seed: u64,
}

impl CdConfig {
    /// Defaults: CD-1, minibatch 64, momentum 0.5 then 0.9 after epoch 5,
    /// weight decay 2e-4; learning rate 0.01, or 0.001 for Gaussian visibles.
    pub fn for_variant(variant: RbmVariant) -> CdConfig {
        CdConfig {
            epsilon: if variant == RbmVariant::Gaussian { 0.001 } else { 0.01 },
            gibbs_steps: 1,
            epochs: 10,
            batch_size: 64,
            momentum: 0.5,
            momentum_final: 0.9,
            momentum_switch_epoch: 5,
            weight_decay: 2e-4,
            sparsity: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 {
            return Err(Error::Validation("learning rate must be > 0".into()));
        }
        if self.gibbs_steps < 1 {
            return Err(Error::Validation("CD needs k >= 1 Gibbs steps".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Validation("batch size must be >= 1".into()));
        }
        if let Some(sp) = &self.sparsity {
            if !(0.0 < sp.target && sp.target < 1.0) {
                return Err(Error::Validation(
                    "sparsity target must lie in (0, 1)".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Gradient estimate of one CD step, already averaged over the batch.
/// Weight entries are data minus model correlations.
#[derive(Debug, Clone)]
pub struct CdStats {
    pub grad_weights: Matrix,
    pub grad_visible_bias: Vector,
    pub grad_hidden_bias: Vector,
    /// Mean data-side hidden activation, input to the sparsity adjustment.
    pub mean_hidden: Option<Vector>,
    /// Mean squared error (Gaussian visibles) or cross-entropy (Bernoulli /
    /// softmax) between the batch and its one-step reconstruction.
    pub recon_error: f64,
}

/// Momentum velocities carried across CD steps of one training run.
#[derive(Debug, Clone)]
pub struct CdState {
    vel_weights: Matrix,
    vel_visible_bias: Vector,
    vel_hidden_bias: Vector,
}

impl CdState {
    pub fn zeros(n_visible: usize, n_hidden: usize) -> CdState {
        CdState {
            vel_weights: Matrix::zeros((n_visible, n_hidden)),
            vel_visible_bias: Vector::zeros(n_visible),
            vel_hidden_bias: Vector::zeros(n_hidden),
        }
    }
}

fn binarize(probs: &Matrix, rng: &mut Rng) -> Matrix {
    probs.mapv(|p| if rng.coin(p) { 1.0 } else { 0.0 })
}

fn hidden_probs_batch(params: &RbmParams, batch: &Matrix, m_words: &[f64]) -> Matrix {
    let mut pre = match params.variant {
        RbmVariant::Gaussian => (batch / &params.sigma).dot(&params.weights),
        _ => batch.dot(&params.weights),
    };
    match params.variant {
        RbmVariant::ReplicatedSoftmax => {
            for (r, mut row) in pre.rows_mut().into_iter().enumerate() {
                row += &(&params.hidden_bias * m_words[r]);
            }
        }
        _ => {
            for mut row in pre.rows_mut() {
                row += &params.hidden_bias;
            }
        }
    }
    pre.mapv_inplace(sigmoid);
    pre
}

/// Draws `draws[r]` words per row from the row's softmax distribution.
fn sample_multinomial_rows(probs: &Matrix, draws: &[f64], rng: &mut Rng) -> Matrix {
    let mut out = Matrix::zeros(probs.raw_dim());
    for (r, row) in probs.rows().into_iter().enumerate() {
        for _ in 0..draws[r] as usize {
            let mut u = rng.uniform();
            let mut picked = row.len() - 1;
            for (i, p) in row.iter().enumerate() {
                if u < *p {
                    picked = i;
                    break;
                }
                u -= *p;
            }
            out[[r, picked]] += 1.0;
        }
    }
    out
}

const PROB_FLOOR: f64 = 1e-12;

fn reconstruction_error(variant: RbmVariant, batch: &Matrix, recon: &Matrix) -> f64 {
    let rows = batch.nrows() as f64;
    match variant {
        RbmVariant::Gaussian => {
            let diff = batch - recon;
            diff.mapv(|d| d * d).sum() / (batch.len() as f64)
        }
        RbmVariant::Bernoulli => {
            let mut acc = 0.0;
            for (v, p) in batch.iter().zip(recon.iter()) {
                let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                acc -= v * p.ln() + (1.0 - v) * (1.0 - p).ln();
            }
            acc / rows
        }
        RbmVariant::ReplicatedSoftmax => {
            // recon rows hold the softmax distribution over words.
            let mut acc = 0.0;
            for (v, q) in batch.iter().zip(recon.iter()) {
                if *v > 0.0 {
                    acc -= v * q.max(PROB_FLOOR).ln();
                }
            }
            acc / rows
        }
    }
}

/// Data-minus-model statistics from k Gibbs steps seeded at the batch.
/// Hidden states are sampled for the chain; the correlation statistics use
/// mean-field probabilities.
pub fn cd_statistics(
    params: &RbmParams,
    batch: &Matrix,
    gibbs_steps: usize,
    rng: &mut Rng,
) -> Result<CdStats> {
    if batch.ncols() != params.n_visible() {
        return Err(Error::Dimension(format!(
            "batch has {} columns, RBM expects {}",
            batch.ncols(),
            params.n_visible()
        )));
    }
    let rows = batch.nrows();
    if rows == 0 {
        return Err(Error::Validation("empty batch".into()));
    }
    let m_words: Vec<f64> = batch.rows().into_iter().map(|r| r.sum()).collect();
    if params.variant == RbmVariant::ReplicatedSoftmax {
        if let Some(r) = m_words.iter().position(|m| *m < 1.0) {
            return Err(Error::Validation(format!(
                "replicated softmax row {r} has word count {} < 1",
                m_words[r]
            )));
        }
    }

    let h_data = hidden_probs_batch(params, batch, &m_words);
    let mut h_sample = binarize(&h_data, rng);
    let mut v_model = batch.clone();
    let mut h_model = h_data.clone();
    let mut recon_error = 0.0;
    for step in 0..gibbs_steps {
        let wh = h_sample.dot(&params.weights.t());
        let (v_next, recon_basis) = match params.variant {
            RbmVariant::Bernoulli => {
                let mut p = wh;
                for mut row in p.rows_mut() {
                    row += &params.visible_bias;
                }
                p.mapv_inplace(sigmoid);
                (p.clone(), p)
            }
            RbmVariant::Gaussian => {
                let mut mu = &wh * &params.sigma;
                for mut row in mu.rows_mut() {
                    row += &params.visible_bias;
                }
                (mu.clone(), mu)
            }
            RbmVariant::ReplicatedSoftmax => {
                let mut pre = wh;
                for mut row in pre.rows_mut() {
                    row += &params.visible_bias;
                }
                let probs = crate::numeric::softmax_rows(&pre);
                let counts = sample_multinomial_rows(&probs, &m_words, rng);
                (counts, probs)
            }
        };
        if step == 0 {
            recon_error = reconstruction_error(params.variant, batch, &recon_basis);
        }
        v_model = v_next;
        h_model = hidden_probs_batch(params, &v_model, &m_words);
        if step + 1 < gibbs_steps {
            h_sample = binarize(&h_model, rng);
        }
    }

    let scale = 1.0 / rows as f64;
    let (data_side, model_side) = match params.variant {
        RbmVariant::Gaussian => (batch / &params.sigma, &v_model / &params.sigma),
        _ => (batch.clone(), v_model.clone()),
    };
    let grad_weights = (data_side.t().dot(&h_data) - model_side.t().dot(&h_model)) * scale;

    let grad_visible_bias = match params.variant {
        RbmVariant::Gaussian => {
            let mut g = (batch - &v_model).sum_axis(ndarray::Axis(0)) * scale;
            g /= &(&params.sigma * &params.sigma);
            g
        }
        _ => (batch - &v_model).sum_axis(ndarray::Axis(0)) * scale,
    };

    let grad_hidden_bias = match params.variant {
        RbmVariant::ReplicatedSoftmax => {
            let mut diff = &h_data - &h_model;
            for (r, mut row) in diff.rows_mut().into_iter().enumerate() {
                row *= m_words[r];
            }
            diff.sum_axis(ndarray::Axis(0)) * scale
        }
        _ => (&h_data - &h_model).sum_axis(ndarray::Axis(0)) * scale,
    };

    let mean_hidden = h_data.sum_axis(ndarray::Axis(0)) * scale;
    Ok(CdStats {
        grad_weights,
        grad_visible_bias,
        grad_hidden_bias,
        mean_hidden: Some(mean_hidden),
        recon_error,
    })
}

/// Applies one averaged gradient estimate to the parameters with momentum,
/// weight decay, and the optional sparsity adjustment.
pub fn apply_update(
    params: &mut RbmParams,
    state: &mut CdState,
    stats: &CdStats,
    cfg: &CdConfig,
    momentum: f64,
) -> Result<()> {
    let mut grad_hb = stats.grad_hidden_bias.clone();
    if let (Some(sp), Some(mean_hidden)) = (&cfg.sparsity, &stats.mean_hidden) {
        grad_hb += &((sp.target - mean_hidden) * sp.weight);
    }
    state.vel_weights = &state.vel_weights * momentum
        + &((&stats.grad_weights - &(&params.weights * cfg.weight_decay)) * cfg.epsilon);
    state.vel_visible_bias =
        &state.vel_visible_bias * momentum + &(&stats.grad_visible_bias * cfg.epsilon);
    state.vel_hidden_bias = &state.vel_hidden_bias * momentum + &(&grad_hb * cfg.epsilon);

    params.weights += &state.vel_weights;
    params.visible_bias += &state.vel_visible_bias;
    params.hidden_bias += &state.vel_hidden_bias;

    if params.weights.iter().any(|w| !w.is_finite())
        || params.visible_bias.iter().any(|b| !b.is_finite())
        || params.hidden_bias.iter().any(|c| !c.is_finite())
    {
        return Err(Error::NonFinite(
            "RBM parameters became non-finite during the update".into(),
        ));
    }
    Ok(())
}

/// One CD-k minibatch step: statistics then update. Returns the
/// reconstruction error of the batch.
pub fn cd_step(
    params: &mut RbmParams,
    state: &mut CdState,
    batch: &Matrix,
    cfg: &CdConfig,
    momentum: f64,
    rng: &mut Rng,
) -> Result<f64> {
    let stats = cd_statistics(params, batch, cfg.gibbs_steps, rng)?;
    apply_update(params, state, &stats, cfg, momentum)?;
    Ok(stats.recon_error)
}

/// Full CD training run over the data. Returns the per-epoch mean
/// reconstruction error. Divergence is reported with the offending epoch.
pub fn train_rbm(
    params: &mut RbmParams,
    data: &Matrix,
    cfg: &CdConfig,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if data.nrows() == 0 {
        return Err(Error::Validation("training data is empty".into()));
    }
    let mut state = CdState::zeros(params.n_visible(), params.n_hidden());
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    for epoch in 0..cfg.epochs {
        let momentum = if epoch < cfg.momentum_switch_epoch {
            cfg.momentum
        } else {
            cfg.momentum_final
        };
        rng.shuffle(&mut order);
        let mut epoch_error = 0.0;
        let mut batches = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = Matrix::from_shape_fn((chunk.len(), data.ncols()), |(r, c)| {
                data[[chunk[r], c]]
            });
            let err = cd_step(params, &mut state, &batch, cfg, momentum, rng).map_err(|e| {
                match e {
                    Error::NonFinite(detail) => Error::Divergence { epoch, detail },
                    other => other,
                }
            })?;
            epoch_error += err;
            batches += 1.0;
        }
        history.push(epoch_error / batches);
    }
    Ok(history)
}

/// Per-column standardization fitted on training data, used in front of the
/// Gaussian-visible first layer.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub mean: Vector,
    pub std: Vector,
}

impl Standardizer {
    pub fn fit(data: &Matrix) -> Standardizer {
        let rows = data.nrows() as f64;
        let mean = data.sum_axis(ndarray::Axis(0)) / rows;
        let mut var = Vector::zeros(data.ncols());
        for row in data.rows() {
            let diff = &row - &mean;
            var += &(&diff * &diff);
        }
        var /= rows;
        let std = var.mapv(|v| {
            let s = v.sqrt();
            if s < 1e-8 {
                1.0
            } else {
                s
            }
        });
        Standardizer { mean, std }
    }

    pub fn apply(&self, data: &Matrix) -> Matrix {
        let mut out = data.clone();
        for mut row in out.rows_mut() {
            row -= &self.mean;
            row /= &self.std;
        }
        out
    }

    /// Two-row matrix (mean, std) for persistence in the MATv1 container.
    pub fn to_matrix(&self) -> Matrix {
        let n = self.mean.len();
        Matrix::from_shape_fn((2, n), |(r, c)| {
            if r == 0 {
                self.mean[c]
            } else {
                self.std[c]
            }
        })
    }

    pub fn from_matrix(m: &Matrix) -> Result<Standardizer> {
        if m.nrows() != 2 {
            return Err(Error::Format(
                "standardizer matrix must have two rows (mean, std)".into(),
            ));
        }
        Ok(Standardizer {
            mean: m.row(0).to_owned(),
            std: m.row(1).to_owned(),
        })
    }
}

/// Two greedily trained RBMs plus the optional input standardizer.
#[derive(Debug, Clone)]
pub struct RbmStack {
    pub layer1: RbmParams,
    pub layer2: RbmParams,
    pub standardizer: Option<Standardizer>,
}

impl RbmStack {
    /// Level-2 representation of one level-1 row: hidden probabilities of
    /// layer 1 fed through layer 2.
    pub fn forward(&self, row: &Vector) -> Result<Vector> {
        let prepared = match &self.standardizer {
            Some(st) => (row - &st.mean) / &st.std,
            None => row.clone(),
        };
        let m = match self.layer1.variant {
            RbmVariant::ReplicatedSoftmax => Some(row.sum() as usize),
            _ => None,
        };
        let h1 = hidden_activation(&self.layer1, &prepared, m)?;
        hidden_activation(&self.layer2, &h1, None)
    }

    pub fn forward_batch(&self, data: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros((data.nrows(), self.layer2.n_hidden()));
        for (r, row) in data.rows().into_iter().enumerate() {
            let h = self.forward(&row.to_owned())?;
            out.row_mut(r).assign(&h);
        }
        Ok(out)
    }
}

/// Greedy layer-wise pretraining: layer 1 of the given variant on the
/// level-1 data, then a bernoulli-bernoulli layer 2 on layer 1's hidden
/// probabilities. Gaussian first layers standardize their inputs; the
/// transform is kept alongside the stack.
pub fn train_stack(
    level1: &Matrix,
    layer_sizes: [usize; 2],
    variant_first: RbmVariant,
    cfg1: &CdConfig,
    cfg2: &CdConfig,
    rng: &mut Rng,
) -> Result<RbmStack> {
    let standardizer = match variant_first {
        RbmVariant::Gaussian => Some(Standardizer::fit(level1)),
        _ => None,
    };
    let data1 = match &standardizer {
        Some(st) => st.apply(level1),
        None => level1.clone(),
    };
    let mut layer1 = RbmParams::init(variant_first, level1.ncols(), layer_sizes[0], rng);
    train_rbm(&mut layer1, &data1, cfg1, rng)?;

    let m_words: Vec<f64> = match variant_first {
        RbmVariant::ReplicatedSoftmax => level1.rows().into_iter().map(|r| r.sum()).collect(),
        _ => vec![0.0; level1.nrows()],
    };
    let h1 = hidden_probs_batch(&layer1, &data1, &m_words);

    let mut layer2 = RbmParams::init(RbmVariant::Bernoulli, layer_sizes[0], layer_sizes[1], rng);
    train_rbm(&mut layer2, &h1, cfg2, rng)?;

    Ok(RbmStack {
        layer1,
        layer2,
        standardizer,
    })
}

/// Writes `RBMv1`, variant tag, n, m, then b, c, W row-major as little-endian
/// f64. The format carries no sigma, so Gaussian parameters must have unit
/// sigma (the training pipeline standardizes instead).
pub fn save_rbm(path: &Path, params: &RbmParams) -> Result<()> {
    if params.sigma.iter().any(|s| *s != 1.0) {
        return Err(Error::Validation(
            "checkpoint format stores no sigma; refusing to drop non-unit values".into(),
        ));
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_magic(&mut w, RBM_MAGIC)?;
    write_u8(&mut w, params.variant.tag())?;
    write_u64(&mut w, params.n_visible() as u64)?;
    write_u64(&mut w, params.n_hidden() as u64)?;
    write_f64s(&mut w, params.visible_bias.as_slice().unwrap())?;
    write_f64s(&mut w, params.hidden_bias.as_slice().unwrap())?;
    write_f64s(&mut w, params.weights.as_slice().unwrap())?;
    w.flush()?;
    Ok(())
}

pub fn load_rbm(path: &Path) -> Result<RbmParams> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(&mut r, RBM_MAGIC, &format!("RBM checkpoint {}", path.display()))?;
    let variant = RbmVariant::from_tag(read_u8(&mut r)?)?;
    let n = read_u64(&mut r)? as usize;
    let m = read_u64(&mut r)? as usize;
    let visible_bias = Vector::from_vec(read_f64s(&mut r, n)?);
    let hidden_bias = Vector::from_vec(read_f64s(&mut r, m)?);
    let weights = Matrix::from_shape_vec((n, m), read_f64s(&mut r, n * m)?)
        .map_err(|e| Error::Format(format!("RBM checkpoint {}: {e}", path.display())))?;
    Ok(RbmParams {
        weights,
        visible_bias,
        hidden_bias,
        variant,
        sigma: Vector::ones(n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn energy_zero_params_is_zero() {
        let p = RbmParams::zeros(RbmVariant::Bernoulli, 3, 2);
        let e = energy(&p, &array![1.0, 0.0, 1.0], &array![1.0, 1.0], None).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn energy_bernoulli_hand_example() {
        let mut p = RbmParams::zeros(RbmVariant::Bernoulli, 2, 2);
        p.weights = array![[1.0, 0.0], [0.0, 1.0]];
        let e = energy(&p, &array![1.0, 1.0], &array![1.0, 0.0], None).unwrap();
        assert_eq!(e, -1.0);
    }

    #[test]
    fn energy_gaussian_hand_example() {
        let mut p = RbmParams::zeros(RbmVariant::Gaussian, 2, 2);
        p.visible_bias = array![1.0, 0.0];
        let e = energy(&p, &array![3.0, 0.0], &array![1.0, 1.0], None).unwrap();
        assert_eq!(e, 2.0);
        let e2 = energy(&p, &array![3.0, 0.0], &array![0.0, 0.0], None).unwrap();
        assert_eq!(e2, 2.0);
    }

    #[test]
    fn energy_rsm_requires_word_count() {
        let p = RbmParams::zeros(RbmVariant::ReplicatedSoftmax, 2, 2);
        assert!(matches!(
            energy(&p, &array![1.0, 0.0], &array![1.0, 0.0], None),
            Err(Error::Usage(_))
        ));
        let p2 = RbmParams::zeros(RbmVariant::Bernoulli, 2, 2);
        assert!(matches!(
            energy(&p2, &array![1.0, 0.0], &array![1.0, 0.0], Some(3)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn hidden_activation_zero_params_is_half() {
        let p = RbmParams::zeros(RbmVariant::Bernoulli, 4, 3);
        let h = hidden_activation(&p, &array![1.0, 0.0, 1.0, 1.0], None).unwrap();
        assert!(h.iter().all(|x| *x == 0.5));
    }

    #[test]
    fn hidden_activation_bernoulli_scalar_example() {
        let mut p = RbmParams::zeros(RbmVariant::Bernoulli, 2, 1);
        p.weights = array![[1.0], [1.0]];
        let h = hidden_activation(&p, &array![1.0, 1.0], None).unwrap();
        assert_abs_diff_eq!(h[0], 0.8807970779778823, epsilon = 1e-15);
    }

    #[test]
    fn hidden_activation_rsm_scales_bias_by_m() {
        let mut p = RbmParams::zeros(RbmVariant::ReplicatedSoftmax, 3, 1);
        p.hidden_bias = array![1.0];
        let v = array![1.0, 1.0, 1.0];
        let h = hidden_activation(&p, &v, Some(3)).unwrap();
        assert_eq!(h[0], sigmoid(3.0));
        // At W = 0 doubling M is exactly doubling the bias.
        for m in [1usize, 2, 5] {
            let at_m = hidden_activation(&p, &v, Some(m)).unwrap();
            assert_eq!(at_m[0], sigmoid(m as f64));
            let at_2m = hidden_activation(&p, &v, Some(2 * m)).unwrap();
            let mut doubled = p.clone();
            doubled.hidden_bias = &p.hidden_bias * 2.0;
            let via_bias = hidden_activation(&doubled, &v, Some(m)).unwrap();
            assert_eq!(at_2m[0], via_bias[0]);
        }
    }

    #[test]
    fn visible_activation_zero_params() {
        let pb = RbmParams::zeros(RbmVariant::Bernoulli, 3, 2);
        match visible_activation(&pb, &array![0.0, 1.0], None).unwrap() {
            VisibleDistribution::Bernoulli(p) => assert!(p.iter().all(|x| *x == 0.5)),
            _ => panic!("wrong distribution"),
        }
        let pr = RbmParams::zeros(RbmVariant::ReplicatedSoftmax, 4, 2);
        match visible_activation(&pr, &array![0.0, 0.0], Some(3)).unwrap() {
            VisibleDistribution::Multinomial { probs, draws } => {
                assert_eq!(draws, 3);
                for p in probs.iter() {
                    assert_abs_diff_eq!(*p, 0.25, epsilon = 1e-15);
                }
            }
            _ => panic!("wrong distribution"),
        }
    }

    #[test]
    fn visible_activation_gaussian_mean_is_bias_at_zero_hidden() {
        let mut p = RbmParams::zeros(RbmVariant::Gaussian, 3, 2);
        p.visible_bias = array![0.5, -1.0, 2.0];
        p.weights = array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]];
        match visible_activation(&p, &array![0.0, 0.0], None).unwrap() {
            VisibleDistribution::Gaussian { mean, .. } => assert_eq!(mean, p.visible_bias),
            _ => panic!("wrong distribution"),
        }
    }

    #[test]
    fn gaussian_with_unit_sigma_matches_bernoulli_hidden_form() {
        let mut rng = Rng::from_seed(5);
        let mut pg = RbmParams::init(RbmVariant::Gaussian, 5, 4, &mut rng);
        pg.hidden_bias.mapv_inplace(|_| 0.3);
        let mut pb = pg.clone();
        pb.variant = RbmVariant::Bernoulli;
        let v = array![0.2, -0.4, 1.0, 0.0, 2.0];
        let hg = hidden_activation(&pg, &v, None).unwrap();
        let hb = hidden_activation(&pb, &v, None).unwrap();
        for (a, b) in hg.iter().zip(hb.iter()) {
            assert_eq!(a, b);
        }
    }

    /// Brute-force conditional from the Boltzmann distribution over all
    /// 2^(n+m) states of a tiny bernoulli RBM.
    fn enumerate_conditional_hidden(p: &RbmParams, v: &Vector, j: usize) -> f64 {
        let m = p.n_hidden();
        let mut num = 0.0;
        let mut den = 0.0;
        for bits in 0..(1usize << m) {
            let h = Vector::from_shape_fn(m, |k| ((bits >> k) & 1) as f64);
            let w = (-energy(p, v, &h, None).unwrap()).exp();
            den += w;
            if (bits >> j) & 1 == 1 {
                num += w;
            }
        }
        num / den
    }

    fn enumerate_conditional_visible(p: &RbmParams, h: &Vector, i: usize) -> f64 {
        let n = p.n_visible();
        let mut num = 0.0;
        let mut den = 0.0;
        for bits in 0..(1usize << n) {
            let v = Vector::from_shape_fn(n, |k| ((bits >> k) & 1) as f64);
            let w = (-energy(p, &v, h, None).unwrap()).exp();
            den += w;
            if (bits >> i) & 1 == 1 {
                num += w;
            }
        }
        num / den
    }

    #[test]
    fn conditionals_match_boltzmann_enumeration() {
        let mut rng = Rng::from_seed(42);
        let mut p = RbmParams::zeros(RbmVariant::Bernoulli, 2, 2);
        p.weights.mapv_inplace(|_| rng.normal(0.0, 0.7));
        p.visible_bias.mapv_inplace(|_| rng.normal(0.0, 0.5));
        p.hidden_bias.mapv_inplace(|_| rng.normal(0.0, 0.5));
        for vbits in 0..4usize {
            let v = Vector::from_shape_fn(2, |k| ((vbits >> k) & 1) as f64);
            let h_act = hidden_activation(&p, &v, None).unwrap();
            for j in 0..2 {
                assert_abs_diff_eq!(
                    h_act[j],
                    enumerate_conditional_hidden(&p, &v, j),
                    epsilon = 1e-10
                );
            }
        }
        for hbits in 0..4usize {
            let h = Vector::from_shape_fn(2, |k| ((hbits >> k) & 1) as f64);
            match visible_activation(&p, &h, None).unwrap() {
                VisibleDistribution::Bernoulli(probs) => {
                    for i in 0..2 {
                        assert_abs_diff_eq!(
                            probs[i],
                            enumerate_conditional_visible(&p, &h, i),
                            epsilon = 1e-10
                        );
                    }
                }
                _ => panic!("wrong distribution"),
            }
        }
    }

    #[test]
    fn conditional_matches_energy_ratio_form() {
        // sigma(c_j + sum w v) against exp(-E(h_j=1)) / (exp(-E(h_j=0)) + exp(-E(h_j=1)))
        // with the other hidden units clamped to zero.
        let mut rng = Rng::from_seed(9);
        let mut p = RbmParams::zeros(RbmVariant::Bernoulli, 3, 3);
        p.weights.mapv_inplace(|_| rng.normal(0.0, 1.0));
        p.visible_bias.mapv_inplace(|_| rng.normal(0.0, 1.0));
        p.hidden_bias.mapv_inplace(|_| rng.normal(0.0, 1.0));
        let v = array![1.0, 0.0, 1.0];
        let act = hidden_activation(&p, &v, None).unwrap();
        for j in 0..3 {
            let mut h1 = Vector::zeros(3);
            h1[j] = 1.0;
            let h0 = Vector::zeros(3);
            let e1 = energy(&p, &v, &h1, None).unwrap();
            let e0 = energy(&p, &v, &h0, None).unwrap();
            let ratio = sigmoid(e0 - e1);
            assert_abs_diff_eq!(act[j], ratio, epsilon = 1e-12);
        }
    }

    #[test]
    fn apply_update_direct_arithmetic() {
        // data correlation 1, model correlation 0, epsilon 0.1, no momentum
        // or decay: the weight moves by exactly +0.1.
        let mut p = RbmParams::zeros(RbmVariant::Bernoulli, 1, 1);
        let mut state = CdState::zeros(1, 1);
        let stats = CdStats {
            grad_weights: array![[1.0]],
            grad_visible_bias: array![0.0],
            grad_hidden_bias: array![0.0],
            mean_hidden: None,
            recon_error: 0.0,
        };
        let mut cfg = CdConfig::for_variant(RbmVariant::Bernoulli);
        cfg.epsilon = 0.1;
        cfg.weight_decay = 0.0;
        apply_update(&mut p, &mut state, &stats, &cfg, 0.0).unwrap();
        assert_abs_diff_eq!(p.weights[[0, 0]], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn cd_fixed_point_statistics_are_unbiased() {
        // With zero parameters the model matches fair-coin data exactly, so
        // the expected update is zero; the empirical mean stays within the
        // 3-sigma band for the sampled batch count.
        let params = RbmParams::zeros(RbmVariant::Bernoulli, 2, 2);
        let mut rng = Rng::from_seed(2024);
        let batches = 100;
        let batch_size = 64;
        let mut acc = Matrix::zeros((2, 2));
        for _ in 0..batches {
            let batch = Matrix::from_shape_fn((batch_size, 2), |_| {
                if rng.coin(0.5) {
                    1.0
                } else {
                    0.0
                }
            });
            let stats = cd_statistics(&params, &batch, 1, &mut rng).unwrap();
            acc += &stats.grad_weights;
        }
        acc /= batches as f64;
        let bound = 3.0 / ((batch_size * batches) as f64).sqrt();
        for g in acc.iter() {
            assert!(g.abs() < bound, "{g} exceeds {bound}");
        }
    }

    #[test]
    fn cd_learns_two_patterns() {
        // Bernoulli RBM (6 visible, 4 hidden) on two repeated patterns:
        // reconstruction cross-entropy falls by at least half.
        let pattern_a = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let pattern_b = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let data = Matrix::from_shape_fn((20, 6), |(r, c)| {
            if r % 2 == 0 {
                pattern_a[c]
            } else {
                pattern_b[c]
            }
        });
        let mut rng = Rng::from_seed(7);
        let mut params = RbmParams::init(RbmVariant::Bernoulli, 6, 4, &mut rng);
        let mut cfg = CdConfig::for_variant(RbmVariant::Bernoulli);
        cfg.epochs = 200;
        cfg.epsilon = 0.1;
        cfg.batch_size = 10;
        let history = train_rbm(&mut params, &data, &cfg, &mut rng).unwrap();
        assert!(
            history[199] <= 0.5 * history[0],
            "cross-entropy {} -> {} did not halve",
            history[0],
            history[199]
        );
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let data = Matrix::from_shape_fn((12, 5), |(r, c)| ((r * c) % 2) as f64);
        let run = || {
            let mut rng = Rng::from_seed(31);
            let mut params = RbmParams::init(RbmVariant::Bernoulli, 5, 3, &mut rng);
            let mut cfg = CdConfig::for_variant(RbmVariant::Bernoulli);
            cfg.epochs = 5;
            train_rbm(&mut params, &data, &cfg, &mut rng).unwrap();
            params
        };
        let a = run();
        let b = run();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.visible_bias, b.visible_bias);
        assert_eq!(a.hidden_bias, b.hidden_bias);
    }

    #[test]
    fn rsm_batch_needs_at_least_one_word_per_row() {
        let params = RbmParams::zeros(RbmVariant::ReplicatedSoftmax, 4, 2);
        let batch = array![[1.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0]];
        let mut rng = Rng::from_seed(1);
        assert!(matches!(
            cd_statistics(&params, &batch, 1, &mut rng),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn divergence_reports_epoch() {
        let data = Matrix::from_shape_fn((8, 3), |(r, _)| (r % 2) as f64);
        let mut rng = Rng::from_seed(3);
        let mut params = RbmParams::init(RbmVariant::Bernoulli, 3, 2, &mut rng);
        let mut cfg = CdConfig::for_variant(RbmVariant::Bernoulli);
        cfg.epsilon = 1e300;
        cfg.epochs = 3;
        match train_rbm(&mut params, &data, &cfg, &mut rng) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn stack_shapes_and_forward_range() {
        let data = Matrix::from_shape_fn((10, 12), |(r, c)| ((r + c) % 3) as f64);
        let mut rng = Rng::from_seed(17);
        let mut cfg = CdConfig::for_variant(RbmVariant::Gaussian);
        cfg.epochs = 2;
        let mut cfg2 = CdConfig::for_variant(RbmVariant::Bernoulli);
        cfg2.epochs = 2;
        let stack = train_stack(&data, [8, 6], RbmVariant::Gaussian, &cfg, &cfg2, &mut rng).unwrap();
        assert_eq!(stack.layer1.weights.dim(), (12, 8));
        assert_eq!(stack.layer2.weights.dim(), (8, 6));
        assert!(stack.standardizer.is_some());
        let out = stack.forward(&data.row(0).to_owned()).unwrap();
        assert_eq!(out.len(), 6);
        assert!(out.iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rbm.ckpt");
        let mut rng = Rng::from_seed(77);
        let params = RbmParams::init(RbmVariant::ReplicatedSoftmax, 7, 3, &mut rng);
        save_rbm(&path, &params).unwrap();
        let loaded = load_rbm(&path).unwrap();
        assert_eq!(loaded.variant, RbmVariant::ReplicatedSoftmax);
        assert_eq!(loaded.weights, params.weights);
        assert_eq!(loaded.visible_bias, params.visible_bias);
        assert_eq!(loaded.hidden_bias, params.hidden_bias);
    }

    #[test]
    fn checkpoint_rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not_an_rbm.ckpt");
        std::fs::write(&path, b"MATv1aaaaaaaaaaaaaaaaaaaaaaaa").unwrap();
        assert!(matches!(load_rbm(&path), Err(Error::Format(_))));
    }

    #[test]
    fn checkpoint_refuses_non_unit_sigma() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rbm.ckpt");
        let mut params = RbmParams::zeros(RbmVariant::Gaussian, 2, 2);
        params.sigma = array![2.0, 1.0];
        assert!(matches!(save_rbm(&path, &params), Err(Error::Validation(_))));
    }
}
