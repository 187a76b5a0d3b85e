//! A small symmetric MLP autoencoder `d → h → z → h → d` trained with ADAM
//! on mean squared reconstruction error. Gradients are computed by hand
//! (reverse mode over the four dense layers).

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 8] = b"RCAEMLP1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    /// Linear pass-through.
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    fn code(self) -> u64 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
        }
    }

    fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Dense layer computing `x · W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    /// Xavier-uniform weights, zero bias.
    pub fn xavier<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((inputs, outputs), || rng.random_range(-limit..=limit));
        Self {
            weights,
            bias: Array1::zeros(outputs),
        }
    }

    fn forward(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        x.dot(&self.weights) + &self.bias
    }
}

/// Autoencoder with layer widths `[d, h, z, h, d]`. The two `h` layers use
/// `activation`; the bottleneck and the output are linear.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpAutoencoder {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Gradients (or any per-parameter quantity) in the model's layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weights.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |m, &g| m.max(g.abs()))
    }
}

/// Activations of one forward pass, kept for backprop.
pub struct ForwardPass {
    /// Layer inputs; `inputs[0]` is the batch.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations per layer.
    pre: Vec<Array2<f64>>,
    pub reconstruction: Array2<f64>,
}

impl ForwardPass {
    pub fn bottleneck(&self) -> &Array2<f64> {
        &self.inputs[2]
    }
}

impl MlpAutoencoder {
    pub fn new(layers: Vec<Dense>, activation: Activation) -> Result<Self> {
        if layers.len() != 4 {
            return Err(Error::Shape(format!("expected 4 layers, got {}", layers.len())));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.ncols() {
                return Err(Error::Shape(format!("layer {i}: bias length differs from output width")));
            }
            if i > 0 && layers[i - 1].weights.ncols() != l.weights.nrows() {
                return Err(Error::Shape(format!("layer {i}: input width does not chain")));
            }
        }
        if layers[0].weights.nrows() != layers[3].weights.ncols() {
            return Err(Error::Shape("output width differs from input width".into()));
        }
        Ok(Self { layers, activation })
    }

    /// Xavier-initialized model with widths `[d, h, z, h, d]`.
    pub fn xavier<R: Rng>(d: usize, h: usize, z: usize, activation: Activation, rng: &mut R) -> Self {
        let dims = [d, h, z, h, d];
        let layers = dims.windows(2).map(|w| Dense::xavier(w[0], w[1], rng)).collect();
        Self { layers, activation }
    }

    pub fn dims(&self) -> [usize; 5] {
        [
            self.layers[0].weights.nrows(),
            self.layers[0].weights.ncols(),
            self.layers[1].weights.ncols(),
            self.layers[2].weights.ncols(),
            self.layers[3].weights.ncols(),
        ]
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    fn layer_activation(&self, layer: usize) -> Activation {
        if layer % 2 == 0 {
            self.activation
        } else {
            Activation::Identity
        }
    }

    pub fn forward_pass(&self, batch: ArrayView2<'_, f64>) -> Result<ForwardPass> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "batch has {} columns, model expects {}",
                batch.ncols(),
                self.input_dim()
            )));
        }
        let mut inputs = vec![batch.to_owned()];
        let mut pre = Vec::with_capacity(4);
        for (l, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(inputs[l].view());
            let act = self.layer_activation(l);
            let a = z.mapv(|v| act.apply(v));
            pre.push(z);
            inputs.push(a);
        }
        let reconstruction = inputs.pop().expect("four layers");
        Ok(ForwardPass {
            inputs,
            pre,
            reconstruction,
        })
    }

    /// Returns `(reconstruction, bottleneck)`.
    pub fn forward(&self, batch: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let pass = self.forward_pass(batch)?;
        let z = pass.bottleneck().clone();
        Ok((pass.reconstruction, z))
    }

    pub fn encode(&self, batch: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.forward(batch).map(|(_, z)| z)
    }

    /// MSE loss of reconstructing `batch` and its exact gradient.
    pub fn backward(&self, batch: ArrayView2<'_, f64>) -> Result<(f64, Gradients)> {
        let pass = self.forward_pass(batch)?;
        let loss = mse_loss(pass.reconstruction.view(), batch)?;
        let scale = 2.0 / (batch.nrows() * batch.ncols()) as f64;
        let mut delta = (&pass.reconstruction - &batch) * scale;
        let mut grads: Vec<Dense> = Vec::with_capacity(4);
        for l in (0..4).rev() {
            let act = self.layer_activation(l);
            if act != Activation::Identity {
                let out = if l == 3 { &pass.reconstruction } else { &pass.inputs[l + 1] };
                ndarray::Zip::from(&mut delta)
                    .and(&pass.pre[l])
                    .and(out)
                    .for_each(|d, &z, &a| *d *= act.derivative(z, a));
            }
            let input = &pass.inputs[l];
            let gw = input.t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            let next = delta.dot(&self.layers[l].weights.t());
            grads.push(Dense { weights: gw, bias: gb });
            delta = next;
        }
        grads.reverse();
        Ok((loss, Gradients { layers: grads }))
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weights.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Binary checkpoint: magic, layer count of widths (5), the five widths,
    /// activation code, then every layer's weights (row-major) and bias, all
    /// little-endian.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&5u64.to_le_bytes())?;
        for d in self.dims() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        w.write_all(&self.activation.code().to_le_bytes())?;
        for l in &self.layers {
            for v in l.weights.iter().chain(l.bias.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let bad = |m: &str| Error::Parse {
            line: 0,
            msg: format!("checkpoint: {m}"),
        };
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let read_u64 = |r: &mut R| -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| bad("truncated"))?;
            Ok(u64::from_le_bytes(b))
        };
        if read_u64(&mut r)? != 5 {
            return Err(bad("expected 5 widths"));
        }
        let mut dims = [0usize; 5];
        for d in dims.iter_mut() {
            *d = read_u64(&mut r)? as usize;
        }
        let activation = Activation::from_code(read_u64(&mut r)?).ok_or_else(|| bad("unknown activation"))?;
        let mut layers = Vec::with_capacity(4);
        for w in dims.windows(2) {
            let mut layer = Dense::zeros(w[0], w[1]);
            for v in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(|_| bad("truncated parameters"))?;
                *v = f64::from_le_bytes(b);
            }
            layers.push(layer);
        }
        Self::new(layers, activation)
    }
}

/// Mean over all entries of the squared difference.
pub fn mse_loss(reconstruction: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Result<f64> {
    if reconstruction.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "reconstruction {:?} vs target {:?}",
            reconstruction.dim(),
            target.dim()
        )));
    }
    let n = reconstruction.len();
    if n == 0 {
        return Ok(0.0);
    }
    let sum: f64 = reconstruction
        .iter()
        .zip(target.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// ADAM moment accumulators, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(shapes: &[usize], config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Applies one bias-corrected ADAM update in place.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape("parameter/gradient tensor count differs from ADAM state".into()));
        }
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Shape("tensor size differs from ADAM state".into()));
            }
            for i in 0..m.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    /// Bottleneck width.
    pub z: usize,
    /// Hidden width; 0 means `max(2z, 32)`.
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub activation: Activation,
    /// Standardize input columns before training.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            z: 64,
            hidden: 0,
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            activation: Activation::Tanh,
            standardize: true,
            seed: 0,
        }
    }
}

impl AutoencoderConfig {
    pub fn hidden_width(&self) -> usize {
        if self.hidden == 0 {
            (self.z * 2).max(32)
        } else {
            self.hidden
        }
    }
}

/// Per-column affine map applied before training.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Standardizer {
    /// Column mean and population std; zero-variance columns get std 1.
    pub fn fit(x: ArrayView2<'_, f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let mut std = Array1::zeros(x.ncols());
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            std[j] = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
        Self { mean, std }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            mean: Array1::zeros(d),
            std: Array1::ones(d),
        }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.std
    }
}

pub struct TrainedAutoencoder {
    pub model: MlpAutoencoder,
    pub standardizer: Standardizer,
    /// Full-dataset MSE after each epoch.
    pub epoch_losses: Vec<f64>,
    /// Bottleneck activations, one row per input row.
    pub embedding: Array2<f64>,
}

impl TrainedAutoencoder {
    /// Training log as CSV `epoch,loss` (epochs numbered from 1).
    pub fn write_log<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,loss")?;
        for (i, l) in self.epoch_losses.iter().enumerate() {
            writeln!(w, "{},{}", i + 1, l)?;
        }
        Ok(())
    }
}

/// Trains an autoencoder on the rows of `data` and returns the bottleneck
/// embedding. Deterministic for a fixed `config.seed`.
pub fn train_autoencoder(data: ArrayView2<'_, f64>, config: &AutoencoderConfig) -> Result<TrainedAutoencoder> {
    let (n, d) = data.dim();
    if n == 0 {
        return Err(Error::Param("no training rows".into()));
    }
    if config.z == 0 || config.z >= d {
        return Err(Error::Param(format!(
            "bottleneck width must satisfy 0 < z < d (z={}, d={d})",
            config.z
        )));
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Param("epochs and batch_size must be at least 1".into()));
    }
    let standardizer = if config.standardize {
        Standardizer::fit(data)
    } else {
        Standardizer::identity(d)
    };
    let x = standardizer.transform(data);

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut model = MlpAutoencoder::xavier(d, config.hidden_width(), config.z, config.activation, &mut init_rng);
    let shapes: Vec<usize> = model.param_slices_mut().iter().map(|s| s.len()).collect();
    let mut adam = AdamState::new(
        &shapes,
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    );

    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = x.select(Axis(0), chunk);
            let (loss, grads) = model.backward(batch.view())?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite autoencoder loss at epoch {epoch}, batch {b}"
                )));
            }
            let g = grads.slices();
            adam.step(&mut model.param_slices_mut(), &g)?;
        }
        if !model.is_finite() {
            return Err(Error::Numerical(format!("non-finite autoencoder parameters after epoch {epoch}")));
        }
        let (recon, _) = model.forward(x.view())?;
        let loss = mse_loss(recon.view(), x.view())?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("non-finite autoencoder loss at epoch {epoch}")));
        }
        log::debug!("autoencoder epoch {epoch}: loss {loss:.6}");
        epoch_losses.push(loss);
    }
    let embedding = model.encode(x.view())?;
    Ok(TrainedAutoencoder {
        model,
        standardizer,
        epoch_losses,
        embedding,
    })
}
