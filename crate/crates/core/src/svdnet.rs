//! Norm-preserving classifier with an explicitly factorized linear head.
//!
//! The network computes `f(x) = K g(x)` where the encoder output is wrapped
//! to exact input norm, `g(x) = ‖x‖ g0(x) / ‖g0(x)‖`, and `K` is a bias-free
//! linear head. Because `‖g(x)‖ = ‖x‖` holds by construction, the SVD of `K`
//! alone is a generalized SVD of the whole network, and the head spectrum
//! becomes a direct observable of what the classifier learned. A mirrored
//! decoder is trained jointly as a left inverse of the encoder.
//!
//! Gradients are derived by hand (the norm wrapper's projection term is the
//! delicate part) and optimized with an in-crate Adam.

use std::io::Read;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blackbox::BlackBox;
use crate::error::{Error, Result};
use crate::numerics::{self, dot, norm2, Matrix, SvdFactors};

/// Norm floor: encoder outputs with norm at or below this are treated as
/// zero by the wrapper instead of being blown up to norm ‖x‖.
pub const NORM_FLOOR: f64 = 1e-30;

const CHECKPOINT_MAGIC: &[u8; 7] = b"SVDNET1";

// ── architecture ─────────────────────────────────────────────────────────

/// Layer widths. The encoder runs `d_in -> hidden... -> encode_dim` with
/// tanh between layers and a linear final layer; the decoder mirrors it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub d_in: usize,
    pub hidden: Vec<usize>,
    pub encode_dim: usize,
    pub num_classes: usize,
}

impl NetShape {
    /// Default latent width `encode_dim = d_in + num_classes`: wide enough
    /// that a left inverse of the encoder can exist alongside the head's
    /// row space.
    pub fn new(d_in: usize, hidden: Vec<usize>, num_classes: usize) -> Self {
        NetShape { d_in, hidden, encode_dim: d_in + num_classes, num_classes }
    }

    fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.encode_dim == 0 || self.num_classes == 0 {
            return Err(Error::InvalidInput("network dimensions must be positive".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidInput("hidden widths must be positive".into()));
        }
        Ok(())
    }

    fn encoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.d_in];
        w.extend_from_slice(&self.hidden);
        w.push(self.encode_dim);
        w
    }

    fn decoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.encode_dim];
        w.extend(self.hidden.iter().rev());
        w.push(self.d_in);
        w
    }
}

#[derive(Debug, Clone)]
struct AffineLayer {
    w: Matrix,
    b: Vec<f64>,
}

/// Affine stack with tanh between layers and a linear final layer.
#[derive(Debug, Clone)]
struct Mlp {
    layers: Vec<AffineLayer>,
}

/// Per-sample forward cache: activations entering each layer (first entry
/// is the input itself) plus the final linear output.
struct MlpTrace {
    inputs: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl Mlp {
    fn from_widths(widths: &[usize], rng: &mut ChaCha8Rng) -> Mlp {
        let layers = widths
            .windows(2)
            .map(|w| xavier_layer(w[1], w[0], rng))
            .collect();
        Mlp { layers }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.w.matvec(&a);
            for (zi, bi) in z.iter_mut().zip(&layer.b) {
                *zi += bi;
            }
            if k + 1 < self.layers.len() {
                for zi in z.iter_mut() {
                    *zi = zi.tanh();
                }
            }
            a = z;
        }
        a
    }

    fn forward_traced(&self, x: &[f64]) -> MlpTrace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut a = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            inputs.push(a.clone());
            let mut z = layer.w.matvec(&a);
            for (zi, bi) in z.iter_mut().zip(&layer.b) {
                *zi += bi;
            }
            if k + 1 < self.layers.len() {
                for zi in z.iter_mut() {
                    *zi = zi.tanh();
                }
            }
            a = z;
        }
        MlpTrace { inputs, output: a }
    }

    /// Backpropagates `dout` (gradient at the linear output), accumulating
    /// parameter gradients into `grads` and returning the input gradient.
    fn backward(&self, trace: &MlpTrace, dout: &[f64], grads: &mut [AffineGrad]) -> Vec<f64> {
        let mut d = dout.to_vec();
        for k in (0..self.layers.len()).rev() {
            let input = &trace.inputs[k];
            let g = &mut grads[k];
            for (i, &di) in d.iter().enumerate() {
                if di != 0.0 {
                    for (j, &aj) in input.iter().enumerate() {
                        let cur = g.w.get(i, j);
                        g.w.set(i, j, cur + di * aj);
                    }
                }
                g.b[i] += di;
            }
            let mut dx = self.layers[k].w.tr_matvec(&d);
            if k > 0 {
                // The layer input was a tanh activation; fold its slope in.
                for (v, &a) in dx.iter_mut().zip(input.iter()) {
                    *v *= 1.0 - a * a;
                }
            }
            d = dx;
        }
        d
    }
}

struct AffineGrad {
    w: Matrix,
    b: Vec<f64>,
}

fn zero_grads(mlp: &Mlp) -> Vec<AffineGrad> {
    mlp.layers
        .iter()
        .map(|l| AffineGrad { w: Matrix::zeros(l.w.rows(), l.w.cols()), b: vec![0.0; l.b.len()] })
        .collect()
}

fn xavier_layer(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> AffineLayer {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let w = Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit));
    AffineLayer { w, b: vec![0.0; rows] }
}

// ── the network ──────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct SvdNet {
    shape: NetShape,
    encoder: Mlp,
    /// Bias-free linear head, num_classes x encode_dim.
    head: Matrix,
    decoder: Mlp,
    norm_floor: f64,
    /// Multiplies the wrapped code before the head; latent rescaling moves
    /// scale between this factor and the head without changing the logits.
    code_scale: f64,
    /// Multiplies the code before the decoder, compensating `code_scale`.
    decoder_in_scale: f64,
}

/// One forward pass: the wrapped latent code, head logits, and decoder
/// reconstruction.
#[derive(Debug, Clone)]
pub struct Forward {
    pub code: Vec<f64>,
    pub logits: Vec<f64>,
    pub recon: Vec<f64>,
}

/// Rescales `u` to the norm of `x`: `‖x‖ u / ‖u‖`, or zero when `‖u‖` is at
/// or below `floor` (degenerate direction).
pub fn norm_wrap(x: &[f64], u: &[f64], floor: f64) -> Vec<f64> {
    let nu = norm2(u);
    if nu <= floor {
        return vec![0.0; u.len()];
    }
    let s = norm2(x) / nu;
    u.iter().map(|v| v * s).collect()
}

impl SvdNet {
    /// Fresh Xavier-initialized network; draws are fully determined by the
    /// seed.
    pub fn init(shape: &NetShape, seed: u64) -> Result<SvdNet> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Mlp::from_widths(&shape.encoder_widths(), &mut rng);
        let head = xavier_layer(shape.num_classes, shape.encode_dim, &mut rng).w;
        let decoder = Mlp::from_widths(&shape.decoder_widths(), &mut rng);
        Ok(SvdNet {
            shape: shape.clone(),
            encoder,
            head,
            decoder,
            norm_floor: NORM_FLOOR,
            code_scale: 1.0,
            decoder_in_scale: 1.0,
        })
    }

    pub fn shape(&self) -> &NetShape {
        &self.shape
    }

    pub fn head(&self) -> &Matrix {
        &self.head
    }

    pub fn code_scale(&self) -> f64 {
        self.code_scale
    }

    /// Wrapped (norm-preserving) latent code of `x`.
    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let u = self.encoder.forward(x);
        let w = norm_wrap(x, &u, self.norm_floor);
        w.iter().map(|v| v * self.code_scale).collect()
    }

    /// Decoder output for a latent code.
    pub fn decode(&self, code: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = code.iter().map(|v| v * self.decoder_in_scale).collect();
        self.decoder.forward(&scaled)
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.head.matvec(&self.encode(x))
    }

    /// Logits with the norm wrapper bypassed: `K (code_scale · g0(x))`.
    /// This affine-plus-activation composition is the map that
    /// [`lipschitz_upper_bound`] bounds.
    pub fn unwrapped_logits(&self, x: &[f64]) -> Vec<f64> {
        let u = self.encoder.forward(x);
        let scaled: Vec<f64> = u.iter().map(|v| v * self.code_scale).collect();
        self.head.matvec(&scaled)
    }

    pub fn forward(&self, x: &[f64]) -> Forward {
        let code = self.encode(x);
        let logits = self.head.matvec(&code);
        let recon = self.decode(&code);
        Forward { code, logits, recon }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Wraps the logit map as a query-counted black box.
    pub fn as_blackbox(self: &Arc<Self>) -> BlackBox {
        let net = Arc::clone(self);
        BlackBox::new(self.shape.d_in, self.shape.num_classes, move |x| net.logits(x))
    }

    // ── parameter flattening (training, checkpoints, grad checks) ────

    pub fn param_count(&self) -> usize {
        let enc: usize = self.encoder.layers.iter().map(|l| l.w.rows() * l.w.cols() + l.b.len()).sum();
        let dec: usize = self.decoder.layers.iter().map(|l| l.w.rows() * l.w.cols() + l.b.len()).sum();
        enc + self.head.rows() * self.head.cols() + dec
    }

    /// All parameters in a fixed order: encoder layers (weights row-major,
    /// then bias), head, decoder layers.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.encoder.layers {
            out.extend_from_slice(l.w.data());
            out.extend_from_slice(&l.b);
        }
        out.extend_from_slice(self.head.data());
        for l in &self.decoder.layers {
            out.extend_from_slice(l.w.data());
            out.extend_from_slice(&l.b);
        }
        out
    }

    pub fn set_params_flat(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.param_count(), "parameter count mismatch");
        let mut at = 0usize;
        let mut take = |n: usize| {
            let s = &p[at..at + n];
            at += n;
            s.to_vec()
        };
        for l in &mut self.encoder.layers {
            let (r, c) = (l.w.rows(), l.w.cols());
            l.w = Matrix::new(r, c, take(r * c)).expect("finite parameters");
            l.b = take(l.b.len());
        }
        let (r, c) = (self.head.rows(), self.head.cols());
        self.head = Matrix::new(r, c, take(r * c)).expect("finite parameters");
        for l in &mut self.decoder.layers {
            let (r, c) = (l.w.rows(), l.w.cols());
            l.w = Matrix::new(r, c, take(r * c)).expect("finite parameters");
            l.b = take(l.b.len());
        }
        debug_assert_eq!(at, p.len());
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0usize;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

// ── loss ─────────────────────────────────────────────────────────────────

/// Training configuration. Targets are `on_value` at the label coordinate
/// and `off_value` elsewhere; head singular values are pushed below
/// `sv_cutoff` by the regularizer. `loss_weights` order is
/// (prediction, bijection, regularizer).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub on_value: f64,
    pub off_value: f64,
    pub sv_cutoff: f64,
    pub loss_weights: [f64; 3],
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 64,
            learning_rate: 1e-3,
            on_value: 10.0,
            off_value: 0.1,
            sv_cutoff: 4.0,
            loss_weights: [1.0, 1.0, 1.0],
            seed: 0,
        }
    }
}

/// The three loss terms, unweighted.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossParts {
    /// Mean squared logit error against on/off targets.
    pub pred: f64,
    /// Mean squared reconstruction error of the decoder round trip.
    pub bij: f64,
    /// Squared excess of head singular values over the cutoff.
    pub reg: f64,
}

impl LossParts {
    pub fn total(&self, weights: &[f64; 3]) -> f64 {
        weights[0] * self.pred + weights[1] * self.bij + weights[2] * self.reg
    }
}

fn check_batch(net: &SvdNet, xs: &[Vec<f64>], labels: &[usize]) -> Result<()> {
    if xs.is_empty() || xs.len() != labels.len() {
        return Err(Error::InvalidInput("batch must be nonempty with matching labels".into()));
    }
    if xs.iter().any(|x| x.len() != net.shape.d_in) {
        return Err(Error::InvalidInput("sample width does not match d_in".into()));
    }
    if labels.iter().any(|&l| l >= net.shape.num_classes) {
        return Err(Error::InvalidInput("label out of range".into()));
    }
    Ok(())
}

/// Loss over a batch. The prediction term averages over batch and class,
/// the bijection term over batch and input coordinate; the regularizer
/// depends on the head alone.
pub fn loss(net: &SvdNet, xs: &[Vec<f64>], labels: &[usize], cfg: &TrainConfig) -> Result<(f64, LossParts)> {
    check_batch(net, xs, labels)?;
    let b = xs.len() as f64;
    let c = net.shape.num_classes as f64;
    let d = net.shape.d_in as f64;
    let mut pred = 0.0;
    let mut bij = 0.0;
    for (x, &label) in xs.iter().zip(labels) {
        let f = net.forward(x);
        for (i, &logit) in f.logits.iter().enumerate() {
            let t = if i == label { cfg.on_value } else { cfg.off_value };
            pred += (logit - t) * (logit - t);
        }
        for (r, xi) in f.recon.iter().zip(x) {
            bij += (r - xi) * (r - xi);
        }
    }
    pred /= b * c;
    bij /= b * d;
    let reg = head_reg(&numerics::svd(&net.head)?.s, cfg.sv_cutoff);
    let parts = LossParts { pred, bij, reg };
    Ok((parts.total(&cfg.loss_weights), parts))
}

fn head_reg(singular_values: &[f64], cutoff: f64) -> f64 {
    singular_values
        .iter()
        .map(|&s| {
            let excess = (s - cutoff).max(0.0);
            excess * excess
        })
        .sum()
}

/// Loss plus the full analytic gradient in flat parameter order.
pub fn loss_and_grad(
    net: &SvdNet,
    xs: &[Vec<f64>],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(f64, LossParts, Vec<f64>)> {
    check_batch(net, xs, labels)?;
    let b = xs.len() as f64;
    let c = net.shape.num_classes as f64;
    let d = net.shape.d_in as f64;
    let [w_pred, w_bij, w_reg] = cfg.loss_weights;

    let mut enc_grads = zero_grads(&net.encoder);
    let mut dec_grads = zero_grads(&net.decoder);
    let mut head_grad = Matrix::zeros(net.head.rows(), net.head.cols());
    let mut pred = 0.0;
    let mut bij = 0.0;

    for (x, &label) in xs.iter().zip(labels) {
        let enc_trace = net.encoder.forward_traced(x);
        let u = &enc_trace.output;
        let nu = norm2(u);
        let nx = norm2(x);
        let wrapped: Vec<f64> = if nu <= net.norm_floor {
            vec![0.0; u.len()]
        } else {
            u.iter().map(|v| v * (nx / nu)).collect()
        };
        let code: Vec<f64> = wrapped.iter().map(|v| v * net.code_scale).collect();
        let logits = net.head.matvec(&code);
        let dec_in: Vec<f64> = code.iter().map(|v| v * net.decoder_in_scale).collect();
        let dec_trace = net.decoder.forward_traced(&dec_in);
        let recon = &dec_trace.output;

        // Prediction term and its gradient at the logits.
        let mut dlogits = vec![0.0; logits.len()];
        for (i, &logit) in logits.iter().enumerate() {
            let t = if i == label { cfg.on_value } else { cfg.off_value };
            let r = logit - t;
            pred += r * r;
            dlogits[i] = w_pred * 2.0 * r / (b * c);
        }
        // Head parameter gradient and pull-back to the code.
        for (i, &di) in dlogits.iter().enumerate() {
            if di != 0.0 {
                for (j, &cj) in code.iter().enumerate() {
                    let cur = head_grad.get(i, j);
                    head_grad.set(i, j, cur + di * cj);
                }
            }
        }
        let mut dcode = net.head.tr_matvec(&dlogits);

        // Bijection term through the decoder.
        let mut drecon = vec![0.0; recon.len()];
        for (i, (r, xi)) in recon.iter().zip(x).enumerate() {
            let res = r - xi;
            bij += res * res;
            drecon[i] = w_bij * 2.0 * res / (b * d);
        }
        let ddec_in = net.decoder.backward(&dec_trace, &drecon, &mut dec_grads);
        for (dc, dd) in dcode.iter_mut().zip(&ddec_in) {
            *dc += net.decoder_in_scale * dd;
        }

        // Through the code scale and the norm wrapper. The wrapper's
        // parameter-path Jacobian is the scaled tangent projector
        // (‖x‖ / ‖u‖) (I − û ûᵀ); the radial component of the upstream
        // gradient dies because the wrapper pins the output norm.
        if nu > net.norm_floor {
            let dwrapped: Vec<f64> = dcode.iter().map(|v| v * net.code_scale).collect();
            let uhat: Vec<f64> = u.iter().map(|v| v / nu).collect();
            let radial = dot(&dwrapped, &uhat);
            let s = nx / nu;
            let du: Vec<f64> = dwrapped
                .iter()
                .zip(&uhat)
                .map(|(g, h)| s * (g - radial * h))
                .collect();
            net.encoder.backward(&enc_trace, &du, &mut enc_grads);
        }
    }
    pred /= b * c;
    bij /= b * d;

    // Regularizer: d/dK Σ max(0, σ_i − cutoff)² = Σ 2 (σ_i − cutoff) u_i v_iᵀ
    // over the exceeding singular triples.
    let svd = numerics::svd(&net.head)?;
    let reg = head_reg(&svd.s, cfg.sv_cutoff);
    for (k, &s) in svd.s.iter().enumerate() {
        if s > cfg.sv_cutoff {
            let coeff = w_reg * 2.0 * (s - cfg.sv_cutoff);
            for i in 0..net.head.rows() {
                let ui = svd.u.get(i, k);
                if ui == 0.0 {
                    continue;
                }
                for j in 0..net.head.cols() {
                    let cur = head_grad.get(i, j);
                    head_grad.set(i, j, cur + coeff * ui * svd.vt.get(k, j));
                }
            }
        }
    }

    // Flatten in the same order as params_flat.
    let mut grad = Vec::with_capacity(net.param_count());
    for g in &enc_grads {
        grad.extend_from_slice(g.w.data());
        grad.extend_from_slice(&g.b);
    }
    grad.extend_from_slice(head_grad.data());
    for g in &dec_grads {
        grad.extend_from_slice(g.w.data());
        grad.extend_from_slice(&g.b);
    }

    let parts = LossParts { pred, bij, reg };
    Ok((parts.total(&cfg.loss_weights), parts, grad))
}

// ── Adam ─────────────────────────────────────────────────────────────────

struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(lr: f64, n: usize) -> Adam {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

// ── training ─────────────────────────────────────────────────────────────

/// Loss curve and endpoint metrics of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial: LossParts,
    pub final_parts: LossParts,
    pub epoch_mean_loss: Vec<f64>,
    pub train_accuracy: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub net: SvdNet,
    pub report: TrainReport,
}

/// Trains a fresh network on `(xs, labels)`. Initialization, shuffling, and
/// batching are all driven by `cfg.seed`, so training is deterministic.
/// A non-finite loss at any point aborts with `TrainingDiverged`.
pub fn train(
    xs: &[Vec<f64>],
    labels: &[usize],
    shape: &NetShape,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidInput("epochs and batch size must be positive".into()));
    }
    if !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0) {
        return Err(Error::InvalidInput("learning rate must be positive".into()));
    }
    let mut net = SvdNet::init(shape, cfg.seed)?;
    check_batch(&net, xs, labels)?;

    let (t0, initial) = loss(&net, xs, labels, cfg)?;
    if !t0.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0 });
    }

    let mut params = net.params_flat();
    let mut adam = Adam::new(cfg.learning_rate, params.len());
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut epoch_mean_loss = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_losses = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
            let bl: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let (total, _, grad) = loss_and_grad(&net, &bx, &bl, cfg)?;
            if !total.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            epoch_losses.push(total);
            adam.step(&mut params, &grad);
            net.set_params_flat(&params);
        }
        epoch_mean_loss.push(numerics::mean(&epoch_losses));
    }

    let (tf, final_parts) = loss(&net, xs, labels, cfg)?;
    if !tf.is_finite() {
        return Err(Error::TrainingDiverged { epoch: cfg.epochs });
    }
    let correct = xs
        .iter()
        .zip(labels)
        .filter(|(x, &l)| net.predict(x) == l)
        .count();
    let report = TrainReport {
        initial,
        final_parts,
        epoch_mean_loss,
        train_accuracy: correct as f64 / xs.len() as f64,
    };
    Ok(TrainOutcome { net, report })
}

// ── decomposition-facing operations ──────────────────────────────────────

/// SVD of the head. Because the wrapped code has exact input norm, these
/// singular values bound and factor the whole network's logit map.
pub fn extract_head_svd(net: &SvdNet) -> Result<SvdFactors> {
    numerics::svd(&net.head)
}

/// Moves latent scale by `c`: code grows by `c`, the head shrinks by `1/c`,
/// and the decoder input compensates, so logits and reconstructions are
/// unchanged up to rounding while latent distances scale by exactly `c`.
pub fn rescale_latent(net: &SvdNet, c: f64) -> Result<SvdNet> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidScale { scale: c });
    }
    let mut out = net.clone();
    out.code_scale = net.code_scale * c;
    out.head = net.head.scaled(1.0 / c);
    out.decoder_in_scale = net.decoder_in_scale / c;
    Ok(out)
}

/// Product of the spectral norms of every affine layer (encoder stack,
/// code scale, head). With 1-Lipschitz activations this bounds the
/// Lipschitz constant of the unwrapped composition [`SvdNet::unwrapped_logits`];
/// the norm wrapper itself is excluded because its blow-up near vanishing
/// encoder outputs admits no global constant.
pub fn lipschitz_upper_bound(net: &SvdNet) -> Result<f64> {
    let mut bound = net.code_scale.abs();
    for l in &net.encoder.layers {
        bound *= numerics::spectral_norm(&l.w)?;
    }
    bound *= numerics::spectral_norm(&net.head)?;
    Ok(bound)
}

// ── checkpoints ──────────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    shape: NetShape,
    norm_floor: f64,
    code_scale: f64,
    decoder_in_scale: f64,
    param_count: usize,
}

/// Writes `magic || header-length || header JSON || little-endian f64 blob`.
/// The round trip restores every parameter bit for bit.
pub fn save_checkpoint(net: &SvdNet, path: &std::path::Path) -> Result<()> {
    let header = CheckpointHeader {
        shape: net.shape.clone(),
        norm_floor: net.norm_floor,
        code_scale: net.code_scale,
        decoder_in_scale: net.decoder_in_scale,
        param_count: net.param_count(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(header_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&header_json);
    for p in net.params_flat() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_checkpoint(path: &std::path::Path) -> Result<SvdNet> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 7];
    file.read_exact(&mut magic)
        .map_err(|_| Error::FormatError("checkpoint truncated before magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::FormatError("bad checkpoint magic".into()));
    }
    let mut len_bytes = [0u8; 4];
    file.read_exact(&mut len_bytes)
        .map_err(|_| Error::FormatError("checkpoint truncated before header".into()))?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    file.read_exact(&mut header_bytes)
        .map_err(|_| Error::FormatError("checkpoint header truncated".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::FormatError(format!("bad checkpoint header: {e}")))?;
    header.shape.validate()?;

    let mut blob = Vec::new();
    file.read_to_end(&mut blob)?;
    if blob.len() != header.param_count * 8 {
        return Err(Error::FormatError(format!(
            "parameter blob holds {} bytes, expected {}",
            blob.len(),
            header.param_count * 8
        )));
    }
    let params: Vec<f64> = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::FormatError("checkpoint parameters must be finite".into()));
    }

    let mut net = SvdNet::init(&header.shape, 0)?;
    if net.param_count() != header.param_count {
        return Err(Error::FormatError("header shape disagrees with parameter count".into()));
    }
    net.set_params_flat(&params);
    net.norm_floor = header.norm_floor;
    net.code_scale = header.code_scale;
    net.decoder_in_scale = header.decoder_in_scale;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn assert_near(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {a} ~ {b} (tol {tol})");
    }

    /// Two separated Gaussian-ish clusters in the unit square.
    fn toy_data(n_per: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n_per {
            for (c, center) in [[0.25, 0.25], [0.75, 0.75]].iter().enumerate() {
                let _ = i;
                let dx: f64 = rng.gen_range(-0.1..0.1);
                let dy: f64 = rng.gen_range(-0.1..0.1);
                let x = vec![(center[0] + dx).clamp(0.0, 1.0), (center[1] + dy).clamp(0.0, 1.0)];
                xs.push(x);
                labels.push(c);
            }
        }
        (xs, labels)
    }

    fn toy_shape() -> NetShape {
        NetShape::new(2, vec![8], 2)
    }

    // ── norm wrapper ─────────────────────────────────────────────────

    #[test]
    fn norm_wrap_preserves_norm_and_direction() {
        let x = [3.0, 4.0];
        let u = [1.0, 1.0, 0.0];
        let w = norm_wrap(&x, &u, NORM_FLOOR);
        assert_near(norm2(&w), 5.0, 1e-12);
        // Direction of u is kept.
        assert_near(w[0], w[1], 1e-12);
        assert_near(w[2], 0.0, 0.0);
    }

    #[test]
    fn norm_wrap_zero_cases() {
        let w = norm_wrap(&[1.0, 2.0], &[0.0, 0.0, 0.0], NORM_FLOOR);
        assert!(w.iter().all(|&v| v == 0.0));
        let w = norm_wrap(&[0.0, 0.0], &[1.0, 1.0], NORM_FLOOR);
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn encode_has_exact_input_norm() {
        let net = SvdNet::init(&toy_shape(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let x = vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let code = net.encode(&x);
            assert_near(norm2(&code), norm2(&x), 1e-12 * norm2(&x).max(1.0));
        }
    }

    #[test]
    fn forward_of_zero_is_zero_code_and_logits() {
        let net = SvdNet::init(&toy_shape(), 5).unwrap();
        let f = net.forward(&[0.0, 0.0]);
        assert!(f.code.iter().all(|&v| v == 0.0));
        assert!(f.logits.iter().all(|&v| v == 0.0));
    }

    // ── loss ─────────────────────────────────────────────────────────

    /// Hand-built 1-1-1 net: encoder = identity, head = [k], decoder = identity.
    fn scalar_net(k: f64) -> SvdNet {
        let shape = NetShape { d_in: 1, hidden: vec![], encode_dim: 1, num_classes: 1 };
        let mut net = SvdNet::init(&shape, 0).unwrap();
        net.set_params_flat(&[1.0, 0.0, k, 1.0, 0.0]);
        net
    }

    #[test]
    fn loss_is_zero_for_a_perfect_net() {
        // Encoder passes x through, head doubles it, decoder restores it.
        // With x = 1, label 0, on_value = 2: every term vanishes exactly.
        let net = scalar_net(2.0);
        let cfg = TrainConfig { on_value: 2.0, sv_cutoff: 4.0, ..Default::default() };
        let (total, parts) = loss(&net, &[vec![1.0]], &[0], &cfg).unwrap();
        assert_eq!(parts.pred, 0.0);
        assert_eq!(parts.bij, 0.0);
        assert_eq!(parts.reg, 0.0);
        assert_eq!(total, 0.0);
    }

    #[test]
    fn head_regularizer_counts_excess_singular_values() {
        // Head singular value 5 against cutoff 4 contributes exactly 1.
        let net = scalar_net(5.0);
        let cfg = TrainConfig { sv_cutoff: 4.0, ..Default::default() };
        let (_, parts) = loss(&net, &[vec![1.0]], &[0], &cfg).unwrap();
        assert_near(parts.reg, 1.0, 1e-12);
    }

    // ── gradients ────────────────────────────────────────────────────

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let shape = NetShape { d_in: 3, hidden: vec![6], encode_dim: 5, num_classes: 2 };
        let mut net = SvdNet::init(&shape, 11).unwrap();
        // Push some head singular values over the cutoff so the
        // regularizer path is exercised too.
        let mut p = net.params_flat();
        let cfg = TrainConfig {
            sv_cutoff: 0.25,
            on_value: 2.0,
            off_value: 0.1,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let xs: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..8).map(|i| i % 2).collect();

        let (_, _, grad) = loss_and_grad(&net, &xs, &labels, &cfg).unwrap();
        assert_eq!(grad.len(), net.param_count());
        assert!(net.param_count() > 100, "toy net should exceed 100 parameters");

        // Sample 100 parameters deterministically and compare against
        // central finite differences.
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..100 {
            let idx = (k * 31 + 7) % net.param_count();
            let orig = p[idx];
            p[idx] = orig + h;
            net.set_params_flat(&p);
            let (lp, _) = loss(&net, &xs, &labels, &cfg).unwrap();
            p[idx] = orig - h;
            net.set_params_flat(&p);
            let (lm, _) = loss(&net, &xs, &labels, &cfg).unwrap();
            p[idx] = orig;
            net.set_params_flat(&p);
            let fd = (lp - lm) / (2.0 * h);
            let denom = grad[idx].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((grad[idx] - fd).abs() / denom);
        }
        assert!(worst < 1e-4, "worst relative gradient error {worst}");
    }

    // ── training ─────────────────────────────────────────────────────

    #[test]
    fn training_reduces_losses_and_classifies_toy_clusters() {
        let (xs, labels) = toy_data(40, 21);
        let cfg = TrainConfig { epochs: 60, batch_size: 16, seed: 9, ..Default::default() };
        let out = train(&xs, &labels, &toy_shape(), &cfg).unwrap();
        let r = &out.report;
        assert!(r.final_parts.pred < r.initial.pred, "prediction loss did not drop");
        assert!(r.final_parts.bij < 0.1 * r.initial.bij, "bijection loss did not drop 10x");
        assert!(r.final_parts.reg <= r.initial.reg + 1e-12);
        assert!(r.train_accuracy >= 0.95, "accuracy {}", r.train_accuracy);
        // The regularizer keeps the spectrum near the cutoff.
        let s = extract_head_svd(&out.net).unwrap().s;
        assert!(s[0] <= cfg.sv_cutoff + 0.5, "top singular value {}", s[0]);
    }

    #[test]
    fn training_is_deterministic_for_a_fixed_seed() {
        let (xs, labels) = toy_data(10, 31);
        let cfg = TrainConfig { epochs: 3, batch_size: 8, seed: 42, ..Default::default() };
        let a = train(&xs, &labels, &toy_shape(), &cfg).unwrap();
        let b = train(&xs, &labels, &toy_shape(), &cfg).unwrap();
        let pa = a.net.params_flat();
        let pb = b.net.params_flat();
        assert_eq!(pa.len(), pb.len());
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(x.to_bits(), y.to_bits(), "training not bitwise deterministic");
        }
    }

    #[test]
    fn training_reports_divergence() {
        let (xs, labels) = toy_data(4, 1);
        // An absurd target magnitude overflows the squared error.
        let cfg = TrainConfig { on_value: 1e200, epochs: 2, batch_size: 4, ..Default::default() };
        match train(&xs, &labels, &toy_shape(), &cfg) {
            Err(Error::TrainingDiverged { .. }) => {}
            other => panic!("expected TrainingDiverged, got {other:?}"),
        }
    }

    // ── latent rescaling ─────────────────────────────────────────────

    #[test]
    fn rescale_latent_preserves_logits_and_scales_distances() {
        let (xs, labels) = toy_data(20, 51);
        let cfg = TrainConfig { epochs: 20, batch_size: 16, seed: 2, ..Default::default() };
        let net = train(&xs, &labels, &toy_shape(), &cfg).unwrap().net;
        for &c in &[0.1, 3.0, 100.0] {
            let scaled = rescale_latent(&net, c).unwrap();
            for (x, _) in xs.iter().zip(&labels).take(50) {
                let a = net.forward(x);
                let b = scaled.forward(x);
                for (p, q) in a.logits.iter().zip(&b.logits) {
                    assert_near(*p, *q, 1e-12 * p.abs().max(1.0));
                }
                for (p, q) in a.recon.iter().zip(&b.recon) {
                    assert_near(*p, *q, 1e-12 * p.abs().max(1.0));
                }
                assert_eq!(net.predict(x), scaled.predict(x));
            }
            // Latent distances scale by exactly c (relative 1e-12).
            let z1 = net.encode(&xs[0]);
            let z2 = net.encode(&xs[1]);
            let w1 = scaled.encode(&xs[0]);
            let w2 = scaled.encode(&xs[1]);
            let d: f64 = z1.iter().zip(&z2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let dw: f64 = w1.iter().zip(&w2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            assert_near(dw, c * d, 1e-12 * (c * d).abs().max(1e-300));
        }
    }

    #[test]
    fn rescale_latent_rejects_bad_scales() {
        let net = scalar_net(1.0);
        for c in [0.0, -2.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(rescale_latent(&net, c), Err(Error::InvalidScale { .. })));
        }
    }

    // ── Lipschitz bound ──────────────────────────────────────────────

    #[test]
    fn lipschitz_bound_multiplies_spectral_norms() {
        // Encoder diag(2) then diag(3), identity head: bound is 6.
        let shape = NetShape { d_in: 2, hidden: vec![2], encode_dim: 2, num_classes: 2 };
        let mut net = SvdNet::init(&shape, 0).unwrap();
        let mut p = vec![0.0; net.param_count()];
        // encoder layer 1: diag(2), bias 0 (indices 0..4, 4..6)
        p[0] = 2.0;
        p[3] = 2.0;
        // encoder layer 2: diag(3), bias 0 (6..10, 10..12)
        p[6] = 3.0;
        p[9] = 3.0;
        // head: identity (12..16)
        p[12] = 1.0;
        p[15] = 1.0;
        // decoder: identity layers
        p[16] = 1.0;
        p[19] = 1.0;
        p[22] = 1.0;
        p[25] = 1.0;
        net.set_params_flat(&p);
        assert_near(lipschitz_upper_bound(&net).unwrap(), 6.0, 1e-12);
    }

    #[test]
    fn lipschitz_single_layer_is_its_spectral_norm() {
        let net = scalar_net(3.0);
        // encoder [1], head [3]: bound 3.
        assert_near(lipschitz_upper_bound(&net).unwrap(), 3.0, 1e-12);
    }

    // ── checkpoints ──────────────────────────────────────────────────

    #[test]
    fn checkpoint_round_trip_is_bitwise() {
        let (xs, labels) = toy_data(10, 61);
        let cfg = TrainConfig { epochs: 2, batch_size: 8, seed: 3, ..Default::default() };
        let net = train(&xs, &labels, &toy_shape(), &cfg).unwrap().net;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&net, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(net.shape(), back.shape());
        let pa = net.params_flat();
        let pb = back.params_flat();
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(net.code_scale.to_bits(), back.code_scale.to_bits());
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let net = scalar_net(1.5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&net, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // Wrong magic.
        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::FormatError(_))));
        // Truncated blob.
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::FormatError(_))));
    }

    #[test]
    fn blackbox_view_counts_queries() {
        let net = Arc::new(scalar_net(2.0));
        let f = net.as_blackbox();
        let y = f.evaluate(&[1.0]).unwrap();
        assert_near(y[0], 2.0, 1e-12);
        assert_eq!(f.queries(), 1);
    }
}
