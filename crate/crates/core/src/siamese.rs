//! Quasi-Siamese contrastive autoencoder: two subnets with the same
//! architecture but separate parameters (one per modality), joined by the
//! L1 distance between their code layers.
//!
//! Per sample the loss is
//! total = alpha * (||p - p_hat||^2 + ||q - q_hat||^2)
//!       + (1 - alpha) * (I * C^2 + (1 - I) * exp(-lambda * C))
//! where C is the code-space L1 distance and I marks matched pairs.
//! Training alternates fresh deranged negatives with the positives each
//! epoch and runs plain minibatch gradient descent with momentum.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{expect_magic, read_f64s, read_u64, write_f64s, write_magic, write_u64};
use crate::numeric::{l1_distance, sigmoid, sigmoid_prime_from_output, Matrix, Rng, Vector};

pub const SIAMESE_MAGIC: &[u8] = b"SIAMv1";

/// One modality's encoder/decoder pair, logistic at every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Subnet {
    pub enc_weights: Matrix, // input x code
    pub enc_bias: Vector,    // code
    pub dec_weights: Matrix, // code x input
    pub dec_bias: Vector,    // input
}

impl Subnet {
    pub fn init(input_dim: usize, code_dim: usize, rng: &mut Rng) -> Subnet {
        let mut s = Subnet {
            enc_weights: Matrix::zeros((input_dim, code_dim)),
            enc_bias: Vector::zeros(code_dim),
            dec_weights: Matrix::zeros((code_dim, input_dim)),
            dec_bias: Vector::zeros(input_dim),
        };
        s.enc_weights.mapv_inplace(|_| rng.normal(0.0, 0.1));
        s.dec_weights.mapv_inplace(|_| rng.normal(0.0, 0.1));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.enc_weights.nrows()
    }

    pub fn code_dim(&self) -> usize {
        self.enc_weights.ncols()
    }

    /// Code layer: logistic(W_enc' x + b_enc), entries in (0, 1).
    pub fn encode(&self, x: &Vector) -> Result<Vector> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "encoder input has {} entries, subnet expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok((self.enc_weights.t().dot(x) + &self.enc_bias).mapv(sigmoid))
    }

    /// Reconstruction from a code vector.
    pub fn decode(&self, code: &Vector) -> Vector {
        (self.dec_weights.t().dot(code) + &self.dec_bias).mapv(sigmoid)
    }
}

/// Both subnets: `image_net` maps the image code p, `text_net` the text
/// code q. Same shapes, never tied.
#[derive(Debug, Clone, PartialEq)]
pub struct SiameseParams {
    pub image_net: Subnet,
    pub text_net: Subnet,
}

impl SiameseParams {
    pub fn init(input_dim: usize, code_dim: usize, rng: &mut Rng) -> SiameseParams {
        SiameseParams {
            image_net: Subnet::init(input_dim, code_dim, rng),
            text_net: Subnet::init(input_dim, code_dim, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.image_net.input_dim()
    }

    pub fn code_dim(&self) -> usize {
        self.image_net.code_dim()
    }

    /// All parameters as one flat vector (image net then text net, each as
    /// enc W, enc b, dec W, dec b). Used by the finite-difference checks.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for net in [&self.image_net, &self.text_net] {
            out.extend(net.enc_weights.iter());
            out.extend(net.enc_bias.iter());
            out.extend(net.dec_weights.iter());
            out.extend(net.dec_bias.iter());
        }
        out
    }

    /// Inverse of [`flatten`]: assigns from a flat vector of matching length.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected: usize = 2
            * (self.input_dim() * self.code_dim() * 2 + self.input_dim() + self.code_dim());
        if flat.len() != expected {
            return Err(Error::Dimension(format!(
                "flat parameter vector has {} entries, expected {expected}",
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        for net in [&mut self.image_net, &mut self.text_net] {
            for w in net.enc_weights.iter_mut() {
                *w = it.next().unwrap();
            }
            for b in net.enc_bias.iter_mut() {
                *b = it.next().unwrap();
            }
            for w in net.dec_weights.iter_mut() {
                *w = it.next().unwrap();
            }
            for b in net.dec_bias.iter_mut() {
                *b = it.next().unwrap();
            }
        }
        Ok(())
    }
}

/// Code-space compatibility: L1 distance between the two code vectors.
/// Smaller means more compatible.
pub fn compatibility(code_f: &Vector, code_g: &Vector) -> Result<f64> {
    l1_distance(code_f.as_slice().unwrap(), code_g.as_slice().unwrap())
}

/// One training sample: image code input p, text code input q, and the
/// binary indicator (true for a matched pair).
#[derive(Debug, Clone)]
pub struct PairedSample {
    pub p: Vector,
    pub q: Vector,
    pub indicator: bool,
}

/// Loss weights. `alpha` trades reconstruction against compatibility and
/// must lie in (0, 1); `lambda` shapes the mismatched-pair branch.
#[derive(Debug, Clone)]
pub struct LossConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub sparsity: Option<crate::rbm::SparsityConfig>,
    pub seed: u64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: 0.5,
            lambda: 0.2,
            sparsity: None,
            seed: 0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.alpha && self.alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha = {} must lie in (0, 1)",
                self.alpha
            )));
        }
        if self.lambda <= 0.0 {
            return Err(Error::Validation(format!(
                "lambda = {} must be > 0",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Per-sample loss components. `total` is exactly
/// alpha * (image + text) + (1 - alpha) * compat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub image: f64,
    pub text: f64,
    pub compat: f64,
    pub total: f64,
}

impl LossBreakdown {
    fn zero() -> LossBreakdown {
        LossBreakdown {
            image: 0.0,
            text: 0.0,
            compat: 0.0,
            total: 0.0,
        }
    }
}

fn squared_l2(a: &Vector, b: &Vector) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Contrastive branch: I C^2 for matched pairs, exp(-lambda C) otherwise.
pub fn contrastive_term(c: f64, matched: bool, lambda: f64) -> f64 {
    if matched {
        c * c
    } else {
        (-lambda * c).exp()
    }
}

/// Full loss of one sample.
pub fn loss(params: &SiameseParams, sample: &PairedSample, cfg: &LossConfig) -> Result<LossBreakdown> {
    let code_f = params.image_net.encode(&sample.p)?;
    let code_g = params.text_net.encode(&sample.q)?;
    let p_hat = params.image_net.decode(&code_f);
    let q_hat = params.text_net.decode(&code_g);
    let image = squared_l2(&sample.p, &p_hat);
    let text = squared_l2(&sample.q, &q_hat);
    let c = compatibility(&code_f, &code_g)?;
    let compat = contrastive_term(c, sample.indicator, cfg.lambda);
    let total = cfg.alpha * (image + text) + (1.0 - cfg.alpha) * compat;
    if !total.is_finite() {
        return Err(Error::NonFinite("siamese loss".into()));
    }
    Ok(LossBreakdown {
        image,
        text,
        compat,
        total,
    })
}

/// Mean loss components over a batch.
pub fn batch_loss(
    params: &SiameseParams,
    samples: &[PairedSample],
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    if samples.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let mut acc = LossBreakdown::zero();
    for s in samples {
        let l = loss(params, s, cfg)?;
        acc.image += l.image;
        acc.text += l.text;
        acc.compat += l.compat;
        acc.total += l.total;
    }
    let n = samples.len() as f64;
    acc.image /= n;
    acc.text /= n;
    acc.compat /= n;
    acc.total /= n;
    Ok(acc)
}

/// Training objective: mean total loss plus the optional quadratic code
/// sparsity penalty. This is the scalar the gradient differentiates.
pub fn batch_objective(
    params: &SiameseParams,
    samples: &[PairedSample],
    cfg: &LossConfig,
) -> Result<f64> {
    let base = batch_loss(params, samples, cfg)?.total;
    let Some(sp) = &cfg.sparsity else {
        return Ok(base);
    };
    let mut penalty = 0.0;
    for s in samples {
        let code_f = params.image_net.encode(&s.p)?;
        let code_g = params.text_net.encode(&s.q)?;
        penalty += code_f.iter().map(|z| (z - sp.target) * (z - sp.target)).sum::<f64>();
        penalty += code_g.iter().map(|z| (z - sp.target) * (z - sp.target)).sum::<f64>();
    }
    Ok(base + sp.weight * penalty / samples.len() as f64)
}

/// Gradients with the same shapes as [`SiameseParams`].
#[derive(Debug, Clone)]
pub struct SubnetGrads {
    pub enc_weights: Matrix,
    pub enc_bias: Vector,
    pub dec_weights: Matrix,
    pub dec_bias: Vector,
}

impl SubnetGrads {
    fn zeros(input_dim: usize, code_dim: usize) -> SubnetGrads {
        SubnetGrads {
            enc_weights: Matrix::zeros((input_dim, code_dim)),
            enc_bias: Vector::zeros(code_dim),
            dec_weights: Matrix::zeros((code_dim, input_dim)),
            dec_bias: Vector::zeros(input_dim),
        }
    }

    fn scale(&mut self, s: f64) {
        self.enc_weights *= s;
        self.enc_bias *= s;
        self.dec_weights *= s;
        self.dec_bias *= s;
    }
}

#[derive(Debug, Clone)]
pub struct SiameseGrads {
    pub image: SubnetGrads,
    pub text: SubnetGrads,
}

impl SiameseGrads {
    fn zeros(input_dim: usize, code_dim: usize) -> SiameseGrads {
        SiameseGrads {
            image: SubnetGrads::zeros(input_dim, code_dim),
            text: SubnetGrads::zeros(input_dim, code_dim),
        }
    }

    /// Same layout as [`SiameseParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for net in [&self.image, &self.text] {
            out.extend(net.enc_weights.iter());
            out.extend(net.enc_bias.iter());
            out.extend(net.dec_weights.iter());
            out.extend(net.dec_bias.iter());
        }
        out
    }
}

fn sample_gradient(
    params: &SiameseParams,
    sample: &PairedSample,
    cfg: &LossConfig,
    grads: &mut SiameseGrads,
) -> Result<()> {
    let code_f = params.image_net.encode(&sample.p)?;
    let code_g = params.text_net.encode(&sample.q)?;
    let p_hat = params.image_net.decode(&code_f);
    let q_hat = params.text_net.decode(&code_g);

    let c = compatibility(&code_f, &code_g)?;
    // Subgradient of C w.r.t. code_f: sign of the difference, 0 at exact
    // ties (the symmetric-minimum convention).
    let sign = Vector::from_shape_fn(code_f.len(), |k| {
        let d = code_f[k] - code_g[k];
        if d > 0.0 {
            1.0
        } else if d < 0.0 {
            -1.0
        } else {
            0.0
        }
    });
    let dlc_dc = if sample.indicator {
        2.0 * c
    } else {
        -cfg.lambda * (-cfg.lambda * c).exp()
    };
    let compat_scale = (1.0 - cfg.alpha) * dlc_dc;

    for (net, grad, x, x_hat, code, sign_dir) in [
        (
            &params.image_net,
            &mut grads.image,
            &sample.p,
            &p_hat,
            &code_f,
            1.0,
        ),
        (
            &params.text_net,
            &mut grads.text,
            &sample.q,
            &q_hat,
            &code_g,
            -1.0,
        ),
    ] {
        // Decoder output delta: d/dz of alpha * ||x - sigma(z)||^2.
        let delta_out = Vector::from_shape_fn(x.len(), |i| {
            2.0 * cfg.alpha * (x_hat[i] - x[i]) * sigmoid_prime_from_output(x_hat[i])
        });
        // Decoder weight/bias gradients.
        for k in 0..code.len() {
            for i in 0..x.len() {
                grad.dec_weights[[k, i]] += code[k] * delta_out[i];
            }
        }
        grad.dec_bias += &delta_out;
        // Back through the decoder into the code layer, plus the
        // compatibility coupling.
        let mut delta_code = net.dec_weights.dot(&delta_out);
        delta_code += &(&sign * (compat_scale * sign_dir));
        if let Some(sp) = &cfg.sparsity {
            for k in 0..code.len() {
                delta_code[k] += 2.0 * sp.weight * (code[k] - sp.target);
            }
        }
        for k in 0..code.len() {
            delta_code[k] *= sigmoid_prime_from_output(code[k]);
        }
        for i in 0..x.len() {
            for k in 0..code.len() {
                grad.enc_weights[[i, k]] += x[i] * delta_code[k];
            }
        }
        grad.enc_bias += &delta_code;
    }
    Ok(())
}

/// Exact gradient of the mean objective over the batch with respect to every
/// weight and bias of both subnets, including the cross-network coupling
/// through the compatibility term.
pub fn gradient(
    params: &SiameseParams,
    samples: &[PairedSample],
    cfg: &LossConfig,
) -> Result<SiameseGrads> {
    if samples.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let mut grads = SiameseGrads::zeros(params.input_dim(), params.code_dim());
    for s in samples {
        sample_gradient(params, s, cfg, &mut grads)?;
    }
    let scale = 1.0 / samples.len() as f64;
    grads.image.scale(scale);
    grads.text.scale(scale);
    for v in grads.flatten() {
        if !v.is_finite() {
            return Err(Error::NonFinite("siamese gradient".into()));
        }
    }
    Ok(grads)
}

/// Uniform random derangement (permutation with no fixed point) via
/// rejection sampling; pairs image i with the tags of image pi(i) != i.
pub fn derange_pairs(n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::Validation(format!(
            "no derangement exists for n = {n}"
        )));
    }
    loop {
        let p = rng.permutation(n);
        if p.iter().enumerate().all(|(i, &j)| i != j) {
            return Ok(p);
        }
    }
}

/// Training hyperparameters beyond the loss itself.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Resolve lambda as 1 / max C over the positive pairs on a warm-up
    /// forward pass instead of using the configured constant.
    pub lambda_from_upper_bound: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            lambda_from_upper_bound: false,
        }
    }
}

struct Velocity {
    image: SubnetGrads,
    text: SubnetGrads,
}

fn step_subnet(net: &mut Subnet, vel: &mut SubnetGrads, grad: &SubnetGrads, lr: f64, momentum: f64) {
    vel.enc_weights = &vel.enc_weights * momentum - &(&grad.enc_weights * lr);
    vel.enc_bias = &vel.enc_bias * momentum - &(&grad.enc_bias * lr);
    vel.dec_weights = &vel.dec_weights * momentum - &(&grad.dec_weights * lr);
    vel.dec_bias = &vel.dec_bias * momentum - &(&grad.dec_bias * lr);
    net.enc_weights += &vel.enc_weights;
    net.enc_bias += &vel.enc_bias;
    net.dec_weights += &vel.dec_weights;
    net.dec_bias += &vel.dec_bias;
}

/// Trains on positive pairs; every epoch generates fresh deranged negatives
/// (one negative per positive), shuffles them together, and runs minibatch
/// gradient descent with momentum. Returns the per-epoch mean losses over
/// the epoch's samples. Zero epochs leaves the parameters untouched.
pub fn train(
    params: &mut SiameseParams,
    positives: &[(Vector, Vector)],
    cfg: &LossConfig,
    opts: &TrainOptions,
    rng: &mut Rng,
) -> Result<Vec<LossBreakdown>> {
    cfg.validate()?;
    if positives.len() < 2 {
        return Err(Error::Validation(
            "training needs at least 2 positive pairs (negatives use a derangement)".into(),
        ));
    }
    let mut cfg = cfg.clone();
    if opts.lambda_from_upper_bound {
        let mut max_c: f64 = 0.0;
        for (p, q) in positives {
            let c = compatibility(&params.image_net.encode(p)?, &params.text_net.encode(q)?)?;
            max_c = max_c.max(c);
        }
        cfg.lambda = if max_c > 1e-12 { 1.0 / max_c } else { 1.0 };
    }

    let n = positives.len();
    let mut history = Vec::with_capacity(opts.epochs);
    let mut vel = Velocity {
        image: SubnetGrads::zeros(params.input_dim(), params.code_dim()),
        text: SubnetGrads::zeros(params.input_dim(), params.code_dim()),
    };
    for epoch in 0..opts.epochs {
        let derangement = derange_pairs(n, rng)?;
        let mut samples: Vec<PairedSample> = Vec::with_capacity(2 * n);
        for (i, (p, q)) in positives.iter().enumerate() {
            samples.push(PairedSample {
                p: p.clone(),
                q: q.clone(),
                indicator: true,
            });
            samples.push(PairedSample {
                p: p.clone(),
                q: positives[derangement[i]].1.clone(),
                indicator: false,
            });
        }
        rng.shuffle(&mut samples);
        for batch in samples.chunks(opts.batch_size) {
            let grads = gradient(params, batch, &cfg)?;
            step_subnet(
                &mut params.image_net,
                &mut vel.image,
                &grads.image,
                opts.learning_rate,
                opts.momentum,
            );
            step_subnet(
                &mut params.text_net,
                &mut vel.text,
                &grads.text,
                opts.learning_rate,
                opts.momentum,
            );
        }
        let epoch_loss = batch_loss(params, &samples, &cfg)?;
        if !epoch_loss.total.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: "siamese loss became non-finite".into(),
            });
        }
        history.push(epoch_loss);
    }
    Ok(history)
}

/// Writes `SIAMv1`, input and code dimensions, then both subnets in declared
/// order (image then text; enc W, enc b, dec W, dec b) as little-endian f64.
pub fn save_siamese(path: &Path, params: &SiameseParams) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_magic(&mut w, SIAMESE_MAGIC)?;
    write_u64(&mut w, params.input_dim() as u64)?;
    write_u64(&mut w, params.code_dim() as u64)?;
    for net in [&params.image_net, &params.text_net] {
        write_f64s(&mut w, net.enc_weights.as_slice().unwrap())?;
        write_f64s(&mut w, net.enc_bias.as_slice().unwrap())?;
        write_f64s(&mut w, net.dec_weights.as_slice().unwrap())?;
        write_f64s(&mut w, net.dec_bias.as_slice().unwrap())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_siamese(path: &Path) -> Result<SiameseParams> {
    let mut r = BufReader::new(File::open(path)?);
    expect_magic(
        &mut r,
        SIAMESE_MAGIC,
        &format!("siamese checkpoint {}", path.display()),
    )?;
    let input_dim = read_u64(&mut r)? as usize;
    let code_dim = read_u64(&mut r)? as usize;
    let read_net = |r: &mut BufReader<File>| -> Result<Subnet> {
        let enc_weights =
            Matrix::from_shape_vec((input_dim, code_dim), read_f64s(r, input_dim * code_dim)?)
                .map_err(|e| Error::Format(e.to_string()))?;
        let enc_bias = Vector::from_vec(read_f64s(r, code_dim)?);
        let dec_weights =
            Matrix::from_shape_vec((code_dim, input_dim), read_f64s(r, code_dim * input_dim)?)
                .map_err(|e| Error::Format(e.to_string()))?;
        let dec_bias = Vector::from_vec(read_f64s(r, input_dim)?);
        Ok(Subnet {
            enc_weights,
            enc_bias,
            dec_weights,
            dec_bias,
        })
    };
    let image_net = read_net(&mut r)?;
    let text_net = read_net(&mut r)?;
    Ok(SiameseParams {
        image_net,
        text_net,
    })
}
