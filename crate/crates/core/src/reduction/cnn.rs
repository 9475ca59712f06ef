//! Two-block 1D CNN reducer: conv → ReLU → max-pool → conv → ReLU →
//! max-pool → linear → softmax, trained on class labels. The activations of
//! the second pooling layer become the reduced features.
//!
//! Both convolutions are single-channel, so the width of the last pooling
//! layer is the number of output features.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::{EmbeddingMatrix, SplitTag};

use super::FeatureMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
}

/// Output length of a convolution or pooling window:
/// `floor((d_in − f + 2p) / s) + 1`.
pub fn conv_output_dim(d_in: usize, kernel: usize, padding: usize, stride: usize) -> Result<usize> {
    if stride == 0 || kernel == 0 {
        return Err(Error::Config(format!(
            "kernel ({kernel}) and stride ({stride}) must be positive"
        )));
    }
    let padded = d_in + 2 * padding;
    if padded < kernel {
        return Err(Error::Config(format!(
            "input width {d_in} with padding {padding} is narrower than kernel {kernel}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnnConfig {
    pub conv1: ConvSpec,
    pub pool1: PoolSpec,
    pub conv2: ConvSpec,
    pub pool2: PoolSpec,
    pub m_target: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

const STANDARD_CONV: ConvSpec = ConvSpec {
    kernel: 2,
    stride: 2,
    padding: 0,
};

impl CnnConfig {
    /// Widths after conv1, pool1, conv2 and pool2.
    pub fn layer_dims(&self, d_in: usize) -> Result<[usize; 4]> {
        let c1 = conv_output_dim(
            d_in,
            self.conv1.kernel,
            self.conv1.padding,
            self.conv1.stride,
        )?;
        let p1 = conv_output_dim(c1, self.pool1.kernel, 0, self.pool1.stride)?;
        let c2 = conv_output_dim(p1, self.conv2.kernel, self.conv2.padding, self.conv2.stride)?;
        let p2 = conv_output_dim(c2, self.pool2.kernel, 0, self.pool2.stride)?;
        Ok([c1, p1, c2, p2])
    }

    pub fn validate(&self, d_in: usize) -> Result<[usize; 4]> {
        let dims = self.layer_dims(d_in)?;
        if dims[3] != self.m_target {
            return Err(Error::Config(format!(
                "layer chain {d_in} → {} → {} → {} → {} does not end at target width {}",
                dims[0], dims[1], dims[2], dims[3], self.m_target
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning rate must be positive and finite".into(),
            ));
        }
        Ok(dims)
    }

    /// Kernel 2 / stride 2 / padding 0 for both convolutions and the first
    /// pool; the last pool is sized to land on `m_target`.
    pub fn standard(d_in: usize, m_target: usize) -> Result<Self> {
        Self::preset(d_in, m_target, 2)
    }

    /// As [`CnnConfig::standard`] but the first pool uses stride 1, which
    /// keeps more width for long embeddings and large targets.
    pub fn wide(d_in: usize, m_target: usize) -> Result<Self> {
        Self::preset(d_in, m_target, 1)
    }

    fn preset(d_in: usize, m_target: usize, pool1_stride: usize) -> Result<Self> {
        let pool1 = PoolSpec {
            kernel: 2,
            stride: pool1_stride,
        };
        let c1 = conv_output_dim(d_in, 2, 0, 2)?;
        let p1 = conv_output_dim(c1, pool1.kernel, 0, pool1.stride)?;
        let c2 = conv_output_dim(p1, 2, 0, 2)?;
        let pool2 = fit_pool(c2, m_target)?;
        let config = CnnConfig {
            conv1: STANDARD_CONV,
            pool1,
            conv2: STANDARD_CONV,
            pool2,
            m_target,
            learning_rate: 1e-3,
            epochs: 20,
            batch_size: 32,
            seed: 0,
        };
        config.validate(d_in)?;
        Ok(config)
    }
}

/// Pooling window mapping width `d` onto exactly `m` outputs with stride
/// `floor(d / m)`.
pub fn fit_pool(d: usize, m: usize) -> Result<PoolSpec> {
    if m == 0 || m > d {
        return Err(Error::Config(format!("cannot pool width {d} down to {m}")));
    }
    let stride = d / m;
    let kernel = d - (m - 1) * stride;
    Ok(PoolSpec { kernel, stride })
}

/// Architecture and parameter layout, independent of parameter storage.
///
/// The flat parameter vector is ordered conv1 weights, conv1 bias, conv2
/// weights, conv2 bias, classifier weights (row-major `k × m`), classifier
/// bias.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnNetwork {
    pub conv1: ConvSpec,
    pub pool1: PoolSpec,
    pub conv2: ConvSpec,
    pub pool2: PoolSpec,
    pub d_in: usize,
    pub n_classes: usize,
    dims: [usize; 4],
}

struct Trace {
    c1: Vec<f64>,
    p1: Vec<f64>,
    p1_arg: Vec<usize>,
    c2: Vec<f64>,
    p2_arg: Vec<usize>,
    h: Vec<f64>,
}

fn conv_forward(x: &[f64], w: &[f64], b: f64, spec: ConvSpec, out_len: usize) -> Vec<f64> {
    (0..out_len)
        .map(|o| {
            let start = (o * spec.stride) as isize - spec.padding as isize;
            let mut acc = b;
            for (q, wq) in w.iter().enumerate() {
                let i = start + q as isize;
                if i >= 0 && (i as usize) < x.len() {
                    acc += wq * x[i as usize];
                }
            }
            acc
        })
        .collect()
}

/// Accumulates weight/bias gradients and optionally the input gradient.
fn conv_backward(
    x: &[f64],
    w: &[f64],
    spec: ConvSpec,
    grad_out: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut f64,
    mut grad_x: Option<&mut [f64]>,
) {
    for (o, g) in grad_out.iter().enumerate() {
        if *g == 0.0 {
            continue;
        }
        *grad_b += g;
        let start = (o * spec.stride) as isize - spec.padding as isize;
        for q in 0..w.len() {
            let i = start + q as isize;
            if i >= 0 && (i as usize) < x.len() {
                grad_w[q] += g * x[i as usize];
                if let Some(gx) = grad_x.as_deref_mut() {
                    gx[i as usize] += g * w[q];
                }
            }
        }
    }
}

/// Max-pool over ReLU activations of `pre`; returns values and the index of
/// the first maximum in each window.
fn relu_pool(pre: &[f64], spec: PoolSpec, out_len: usize) -> (Vec<f64>, Vec<usize>) {
    let mut out = Vec::with_capacity(out_len);
    let mut arg = Vec::with_capacity(out_len);
    for o in 0..out_len {
        let start = o * spec.stride;
        let mut best = start;
        for i in start + 1..start + spec.kernel {
            if pre[i].max(0.0) > pre[best].max(0.0) {
                best = i;
            }
        }
        out.push(pre[best].max(0.0));
        arg.push(best);
    }
    (out, arg)
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

impl CnnNetwork {
    pub fn new(config: &CnnConfig, d_in: usize, n_classes: usize) -> Result<Self> {
        let dims = config.validate(d_in)?;
        if n_classes == 0 {
            return Err(Error::Config("at least one class is required".into()));
        }
        Ok(Self {
            conv1: config.conv1,
            pool1: config.pool1,
            conv2: config.conv2,
            pool2: config.pool2,
            d_in,
            n_classes,
            dims,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.dims[3]
    }

    pub fn param_count(&self) -> usize {
        self.conv1.kernel
            + 1
            + self.conv2.kernel
            + 1
            + self.n_classes * self.dims[3]
            + self.n_classes
    }

    fn split_params<'a>(
        &self,
        p: &'a [f64],
    ) -> (&'a [f64], f64, &'a [f64], f64, &'a [f64], &'a [f64]) {
        let f1 = self.conv1.kernel;
        let f2 = self.conv2.kernel;
        let m = self.dims[3];
        let k = self.n_classes;
        let (w1, rest) = p.split_at(f1);
        let (b1, rest) = rest.split_at(1);
        let (w2, rest) = rest.split_at(f2);
        let (b2, rest) = rest.split_at(1);
        let (fc_w, fc_b) = rest.split_at(k * m);
        (w1, b1[0], w2, b2[0], fc_w, fc_b)
    }

    fn trace(&self, params: &[f64], x: &[f64]) -> Trace {
        let (w1, b1, w2, b2, _, _) = self.split_params(params);
        let c1 = conv_forward(x, w1, b1, self.conv1, self.dims[0]);
        let (p1, p1_arg) = relu_pool(&c1, self.pool1, self.dims[1]);
        let c2 = conv_forward(&p1, w2, b2, self.conv2, self.dims[2]);
        let (h, p2_arg) = relu_pool(&c2, self.pool2, self.dims[3]);
        Trace {
            c1,
            p1,
            p1_arg,
            c2,
            p2_arg,
            h,
        }
    }

    /// ReLU gates of both convolutions and the winning input of every pooling
    /// window. The loss is differentiable wherever this pattern is locally
    /// constant.
    pub fn activation_pattern(&self, params: &[f64], x: &[f64]) -> (Vec<bool>, Vec<usize>) {
        let t = self.trace(params, x);
        let gates = t.c1.iter().chain(&t.c2).map(|&v| v > 0.0).collect();
        let winners = t.p1_arg.into_iter().chain(t.p2_arg).collect();
        (gates, winners)
    }

    /// Activations of the last pooling layer.
    pub fn features(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        self.trace(params, x).h
    }

    pub fn logits(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let (.., fc_w, fc_b) = self.split_params(params);
        let h = self.features(params, x);
        let m = h.len();
        (0..self.n_classes)
            .map(|c| {
                fc_b[c]
                    + fc_w[c * m..(c + 1) * m]
                        .iter()
                        .zip(&h)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, params: &[f64], inputs: &[&[f64]], labels: &[u32]) -> f64 {
        let total: f64 = inputs
            .iter()
            .zip(labels)
            .map(|(x, &y)| -softmax(&self.logits(params, x))[y as usize].ln())
            .sum();
        total / inputs.len() as f64
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_gradient(
        &self,
        params: &[f64],
        inputs: &[&[f64]],
        labels: &[u32],
    ) -> (f64, Vec<f64>) {
        let (_, _, w2, _, fc_w, fc_b) = self.split_params(params);
        let f1 = self.conv1.kernel;
        let f2 = self.conv2.kernel;
        let m = self.dims[3];
        let k = self.n_classes;
        let scale = 1.0 / inputs.len() as f64;

        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for (x, &y) in inputs.iter().zip(labels) {
            let t = self.trace(params, x);
            let logits: Vec<f64> = (0..k)
                .map(|c| {
                    fc_b[c]
                        + fc_w[c * m..(c + 1) * m]
                            .iter()
                            .zip(&t.h)
                            .map(|(w, v)| w * v)
                            .sum::<f64>()
                })
                .collect();
            let probs = softmax(&logits);
            loss += -probs[y as usize].ln();

            let dz: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(c, p)| (p - if c == y as usize { 1.0 } else { 0.0 }) * scale)
                .collect();

            let (g_conv, g_fc) = grad.split_at_mut(f1 + 1 + f2 + 1);
            let (g_fc_w, g_fc_b) = g_fc.split_at_mut(k * m);
            let mut dh = vec![0.0; m];
            for c in 0..k {
                g_fc_b[c] += dz[c];
                for j in 0..m {
                    g_fc_w[c * m + j] += dz[c] * t.h[j];
                    dh[j] += dz[c] * fc_w[c * m + j];
                }
            }

            // pool2 ← relu ← conv2
            let mut dc2 = vec![0.0; t.c2.len()];
            for (j, &src) in t.p2_arg.iter().enumerate() {
                if t.c2[src] > 0.0 {
                    dc2[src] += dh[j];
                }
            }
            let (g_w1b1, g_w2b2) = g_conv.split_at_mut(f1 + 1);
            let (g_w2, g_b2) = g_w2b2.split_at_mut(f2);
            let mut dp1 = vec![0.0; t.p1.len()];
            conv_backward(
                &t.p1,
                w2,
                self.conv2,
                &dc2,
                g_w2,
                &mut g_b2[0],
                Some(&mut dp1),
            );

            // pool1 ← relu ← conv1
            let mut dc1 = vec![0.0; t.c1.len()];
            for (j, &src) in t.p1_arg.iter().enumerate() {
                if t.c1[src] > 0.0 {
                    dc1[src] += dp1[j];
                }
            }
            let (g_w1, g_b1) = g_w1b1.split_at_mut(f1);
            let w1 = &params[..f1];
            conv_backward(x, w1, self.conv1, &dc1, g_w1, &mut g_b1[0], None);
        }
        (loss * scale, grad)
    }

    /// He-normal convolution weights (std `sqrt(2 / fan_in)`), a classifier
    /// scaled down so the first logits are near uniform, small positive
    /// convolution biases and zero classifier biases. Drawn as f32 so the
    /// initial model is exactly representable on disk.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> Vec<f32> {
        let mut draw = |fan_in: usize, count: usize, scale: f64, out: &mut Vec<f32>| {
            let normal = Normal::new(0.0, scale * (2.0 / fan_in as f64).sqrt()).expect("valid std");
            out.extend((0..count).map(|_| normal.sample(rng) as f32));
        };
        let mut p = Vec::with_capacity(self.param_count());
        draw(self.conv1.kernel, self.conv1.kernel, 1.0, &mut p);
        p.push(CONV_BIAS_INIT);
        draw(self.conv2.kernel, self.conv2.kernel, 1.0, &mut p);
        p.push(CONV_BIAS_INIT);
        draw(
            self.dims[3],
            self.n_classes * self.dims[3],
            FC_INIT_SCALE,
            &mut p,
        );
        p.extend(std::iter::repeat_n(0.0, self.n_classes));
        p
    }
}

/// Draws initial parameters, redrawing (a bounded number of times) while some
/// training row reaches the classifier as an all-zero feature vector. With a
/// single channel per layer a dead ReLU stack gets no gradient and never
/// recovers, so such draws are discarded up front.
fn live_init(network: &CnnNetwork, rng: &mut ChaCha8Rng, inputs: &[&[f64]]) -> Vec<f32> {
    const ATTEMPTS: usize = 32;
    let mut best: Option<(usize, Vec<f32>)> = None;
    for _ in 0..ATTEMPTS {
        let init = network.init_params(rng);
        let wide: Vec<f64> = init.iter().map(|&p| p as f64).collect();
        let dead = inputs
            .iter()
            .filter(|x| network.features(&wide, x).iter().all(|&v| v == 0.0))
            .count();
        if dead == 0 {
            return init;
        }
        if best.as_ref().is_none_or(|(d, _)| dead < *d) {
            best = Some((dead, init));
        }
    }
    best.expect("at least one attempt").1
}

/// Small positive start for the convolution biases so each ReLU begins
/// active on part of its input.
const CONV_BIAS_INIT: f32 = 0.1;
const FC_INIT_SCALE: f64 = 0.1;

/// A trained reducer. Parameters are stored as f32, which is also the
/// on-disk representation, so a reloaded model extracts identical features.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnReducerModel {
    pub config: CnnConfig,
    pub network: CnnNetwork,
    pub params: Vec<f32>,
    /// Full train-split loss before and after training; unknown for models
    /// assembled from explicit parameters.
    pub initial_loss: Option<f64>,
    pub final_loss: Option<f64>,
    pub loss_trace: Vec<f64>,
}

impl CnnReducerModel {
    pub fn from_parts(
        config: CnnConfig,
        d_in: usize,
        n_classes: usize,
        params: Vec<f32>,
    ) -> Result<Self> {
        let network = CnnNetwork::new(&config, d_in, n_classes)?;
        if params.len() != network.param_count() {
            return Err(Error::Config(format!(
                "expected {} parameters, found {}",
                network.param_count(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::value("non-finite CNN parameter"));
        }
        Ok(Self {
            config,
            network,
            params,
            initial_loss: None,
            final_loss: None,
            loss_trace: Vec::new(),
        })
    }

    pub fn params_f64(&self) -> Vec<f64> {
        self.params.iter().map(|&p| p as f64).collect()
    }

    pub fn m(&self) -> usize {
        self.network.output_dim()
    }

    pub fn transform_row(&self, row: &[f32]) -> Result<Vec<f64>> {
        if row.len() != self.network.d_in {
            return Err(Error::value(format!(
                "embedding width {} does not match model input {}",
                row.len(),
                self.network.d_in
            )));
        }
        let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        Ok(self.network.features(&self.params_f64(), &x))
    }

    pub fn predict_class(&self, row: &[f32]) -> Result<u32> {
        let x: Vec<f64> = row.iter().map(|&v| v as f64).collect();
        if x.len() != self.network.d_in {
            return Err(Error::value("embedding width mismatch"));
        }
        let logits = self.network.logits(&self.params_f64(), &x);
        let best = logits
            .iter()
            .enumerate()
            .fold(0, |b, (i, &z)| if z > logits[b] { i } else { b });
        Ok(best as u32)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * grad[i];
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + EPS);
        }
    }
}

/// Trains the reducer on the train split with seeded mini-batch Adam on
/// cross-entropy. `loss_trace` holds the mean batch loss of each epoch.
pub fn cnn_train(emb: &EmbeddingMatrix, config: &CnnConfig) -> Result<CnnReducerModel> {
    let network = CnnNetwork::new(config, emb.d(), emb.k())?;
    let train = emb.indices_of(SplitTag::Train);
    if train.is_empty() {
        return Err(Error::value("train split is empty"));
    }
    let rows: Vec<Vec<f64>> = train
        .iter()
        .map(|&a| emb.row(a).iter().map(|&v| v as f64).collect())
        .collect();
    let labels: Vec<u32> = train.iter().map(|&a| emb.labels()[a]).collect();
    let all_inputs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init = live_init(&network, &mut rng, &all_inputs);
    let mut params: Vec<f64> = init.iter().map(|&p| p as f64).collect();
    let initial_loss = network.loss(&params, &all_inputs, &labels);
    if config.epochs == 0 {
        return Ok(CnnReducerModel {
            config: config.clone(),
            network,
            params: init,
            initial_loss: Some(initial_loss),
            final_loss: Some(initial_loss),
            loss_trace: Vec::new(),
        });
    }

    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| rows[i].as_slice()).collect();
            let ys: Vec<u32> = batch.iter().map(|&i| labels[i]).collect();
            let (loss, grad) = network.loss_and_gradient(&params, &xs, &ys);
            epoch_loss += loss * batch.len() as f64;
            adam.step(&mut params, &grad);
        }
        let mean = epoch_loss / rows.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Internal(
                "CNN training diverged to a non-finite loss".into(),
            ));
        }
        loss_trace.push(mean);
    }

    let stored: Vec<f32> = params.iter().map(|&p| p as f32).collect();
    let widened: Vec<f64> = stored.iter().map(|&p| p as f64).collect();
    let final_loss = network.loss(&widened, &all_inputs, &labels);
    Ok(CnnReducerModel {
        config: config.clone(),
        network,
        params: stored,
        initial_loss: Some(initial_loss),
        final_loss: Some(final_loss),
        loss_trace,
    })
}

/// Last-pool activations for every row of `emb`.
pub fn cnn_extract(model: &CnnReducerModel, emb: &EmbeddingMatrix) -> Result<FeatureMatrix> {
    if emb.d() != model.network.d_in {
        return Err(Error::value(format!(
            "embedding width {} does not match model input {}",
            emb.d(),
            model.network.d_in
        )));
    }
    let params = model.params_f64();
    let m = model.m();
    let mut values = Vec::with_capacity(emb.n() * m);
    for a in 0..emb.n() {
        let x: Vec<f64> = emb.row(a).iter().map(|&v| v as f64).collect();
        values.extend(model.network.features(&params, &x));
    }
    FeatureMatrix::new(
        emb.n(),
        m,
        values,
        (0..m).map(|j| format!("cnn_{j:02}")).collect(),
    )
}
