//! Training: mean-squared-error loss, reverse-mode gradients, global-norm
//! clipping, stochastic gradient descent with classical momentum, the
//! single-sample minibatch loop, and checkpoint serialization.
//!
//! Optimizer state is stored in f32 like the parameters; every update is
//! computed in f64 and quantized once at the end of the step.

use std::io::Read;

use ndarray::Array3;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bev::{build_sample, GridSpec};
use crate::error::{Error, Result};
use crate::net::{build_network, Gradients, Head, NetSpec, Network};
use crate::scenes::SceneSequence;

/// Mean squared error over every channel and pixel.
pub fn mse_loss(pred: &Array3<f64>, target: &Array3<f32>) -> f64 {
    debug_assert_eq!(pred.dim(), target.dim());
    let n = pred.len() as f64;
    pred.iter()
        .zip(target.iter())
        .map(|(&p, &t)| {
            let d = p - t as f64;
            d * d
        })
        .sum::<f64>()
        / n
}

/// dLoss/dPrediction for [`mse_loss`]: 2·(pred − target)/N.
pub fn mse_gradient(pred: &Array3<f64>, target: &Array3<f32>) -> Array3<f64> {
    let n = pred.len() as f64;
    let mut g = pred.clone();
    ndarray::Zip::from(&mut g)
        .and(target)
        .for_each(|g, &t| *g = 2.0 * (*g - t as f64) / n);
    g
}

/// One full training evaluation: forward with tape, loss, reverse pass.
pub fn loss_and_gradients(
    net: &Network,
    input: &Array3<f32>,
    target: &Array3<f32>,
) -> Result<(f64, Gradients)> {
    let tape = net.forward_train(input)?;
    if tape.output.dim() != target.dim() {
        return Err(Error::Shape(format!(
            "target shape {:?} does not match network output {:?}",
            target.dim(),
            tape.output.dim()
        )));
    }
    let loss = mse_loss(&tape.output, target);
    let g_out = mse_gradient(&tape.output, target);
    Ok((loss, net.backward(&tape, &g_out)))
}

/// Scale gradients so their global L2 norm does not exceed `threshold`
/// (no-op when `threshold` is zero or the norm is already within it).
/// Returns the pre-clip norm.
pub fn clip_gradients(grads: &mut Gradients, threshold: f64) -> f64 {
    let norm = grads.global_norm();
    if threshold > 0.0 && norm > threshold {
        grads.scale(threshold / norm);
    }
    norm
}

/// Momentum buffers, one per parameter tensor, canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    pub velocity: Vec<Vec<f32>>,
}

impl Momentum {
    pub fn zeros_like(net: &Network) -> Self {
        Momentum {
            velocity: net
                .param_tensors()
                .iter()
                .map(|(_, t)| vec![0.0; t.len()])
                .collect(),
        }
    }
}

/// One optimizer step: v ← m·v + g, θ ← θ − lr·v.
pub fn sgd_momentum_step(
    net: &mut Network,
    grads: &Gradients,
    momentum: &mut Momentum,
    lr: f64,
    momentum_coef: f64,
) {
    let g_flat = grads.flat();
    for ((p, v), g) in net
        .param_slices_mut()
        .into_iter()
        .zip(momentum.velocity.iter_mut())
        .zip(g_flat)
    {
        debug_assert_eq!(p.len(), v.len());
        debug_assert_eq!(p.len(), g.len());
        for i in 0..p.len() {
            let v_new = momentum_coef * v[i] as f64 + g[i];
            p[i] = (p[i] as f64 - lr * v_new) as f32;
            v[i] = v_new as f32;
        }
    }
}

/// Hyperparameters for the training loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    /// Global-norm clip threshold; 0 disables clipping.
    pub clip: f64,
    pub epochs: usize,
    /// Seed for the per-epoch sample-order shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // Full-scale recipe: lr 1e-6, momentum 0.9, norm threshold 1.
        // Small-grid runs raise lr explicitly (see examples and tests).
        TrainConfig {
            lr: 1e-6,
            momentum: 0.9,
            clip: 1.0,
            epochs: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument("lr must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidArgument(
                "momentum must be in [0, 1)".into(),
            ));
        }
        if self.clip < 0.0 || !self.clip.is_finite() {
            return Err(Error::InvalidArgument("clip must be >= 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Frame positions that have `d` past frames (themselves included) and
/// `d` future frames, i.e. everywhere a training sample can be built.
pub fn valid_sample_positions(seq: &SceneSequence, d: usize) -> Vec<usize> {
    let n = seq.frames.len();
    if n < 2 * d {
        return Vec::new();
    }
    (d - 1..n - d).collect()
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    /// Optimizer steps taken during this run.
    pub steps: u64,
    /// Mean loss over the final epoch.
    pub last_epoch_mean_loss: f64,
}

/// Train on every valid sample of a scene sequence: one sample per
/// optimizer step, order reshuffled each epoch. `on_step` observes
/// `(step_index, raw_loss)` after every step, with `step_index`
/// continuing from `start_iteration` so resumed runs keep counting.
#[allow(clippy::too_many_arguments)] // deliberate: explicit state, no builder
pub fn train(
    net: &mut Network,
    momentum: &mut Momentum,
    seq: &SceneSequence,
    gspec: &GridSpec,
    d: usize,
    cfg: &TrainConfig,
    start_iteration: u64,
    mut on_step: impl FnMut(u64, f64),
) -> Result<TrainSummary> {
    cfg.validate()?;
    let mut positions = valid_sample_positions(seq, d);
    if positions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut step = start_iteration;
    let mut last_epoch_mean = f64::NAN;
    for _epoch in 0..cfg.epochs {
        positions.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        for &t in &positions {
            let sample = build_sample(seq, t, d, gspec)?;
            let (loss, mut grads) = loss_and_gradients(net, &sample.input, &sample.target)?;
            clip_gradients(&mut grads, cfg.clip);
            sgd_momentum_step(net, &grads, momentum, cfg.lr, cfg.momentum);
            step += 1;
            epoch_sum += loss;
            on_step(step, loss);
        }
        last_epoch_mean = epoch_sum / positions.len() as f64;
    }
    Ok(TrainSummary {
        steps: step - start_iteration,
        last_epoch_mean_loss: last_epoch_mean,
    })
}

// ---- checkpoint format ----
//
// Binary, little-endian:
//   magic "BEVF", version u32 = 1
//   depth u32, base_features u32, in_channels u32, out_channels u32
//   head u8 (0 linear, 1 tanh, 2 clipped_relu)
//   iteration u64
//   parameter tensors in canonical order: ndim u32, dims u32…, data f32…
//   momentum tensors, same count and shapes, same encoding

const CKPT_MAGIC: [u8; 4] = *b"BEVF";
const CKPT_VERSION: u32 = 1;

/// A deserialized checkpoint: the network, its optimizer state, and the
/// number of optimizer steps taken so far.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: Network,
    pub momentum: Momentum,
    pub iteration: u64,
}

fn head_tag(head: Head) -> u8 {
    match head {
        Head::Linear => 0,
        Head::Tanh => 1,
        Head::ClippedRelu => 2,
    }
}

fn head_from_tag(tag: u8) -> Result<Head> {
    match tag {
        0 => Ok(Head::Linear),
        1 => Ok(Head::Tanh),
        2 => Ok(Head::ClippedRelu),
        other => Err(Error::InvalidArgument(format!(
            "checkpoint: unknown head tag {other}"
        ))),
    }
}

fn write_tensor(buf: &mut Vec<u8>, dims: &[usize], data: &[f32]) {
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_tensor(r: &mut impl Read, expect_dims: &[usize]) -> Result<Vec<f32>> {
    let ndim = crate::bev::read_u32(r)? as usize;
    if ndim != expect_dims.len() {
        return Err(Error::Shape(format!(
            "checkpoint tensor has {ndim} dims, expected {}",
            expect_dims.len()
        )));
    }
    let mut len = 1usize;
    for &want in expect_dims {
        let got = crate::bev::read_u32(r)? as usize;
        if got != want {
            return Err(Error::Shape(format!(
                "checkpoint tensor dim {got} does not match architecture dim {want}"
            )));
        }
        len *= got;
    }
    let mut bytes = vec![0u8; len * 4];
    crate::bev::read_exact_or_truncated(r, &mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Serialize a network plus optimizer state.
pub fn write_checkpoint(net: &Network, momentum: &Momentum, iteration: u64) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&CKPT_MAGIC);
    buf.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    for v in [
        net.spec.depth as u32,
        net.spec.base_features as u32,
        net.spec.in_channels as u32,
        net.spec.out_channels as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.push(head_tag(net.spec.head));
    buf.extend_from_slice(&iteration.to_le_bytes());
    let tensors = net.param_tensors();
    for (dims, data) in &tensors {
        write_tensor(&mut buf, dims, data);
    }
    for ((dims, _), vel) in tensors.iter().zip(momentum.velocity.iter()) {
        write_tensor(&mut buf, dims, vel);
    }
    buf
}

/// Deserialize a checkpoint, validating structure against the declared
/// architecture.
pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    crate::bev::read_exact_or_truncated(&mut r, &mut magic)?;
    if magic != CKPT_MAGIC {
        return Err(Error::BadMagic {
            expected: CKPT_MAGIC,
            found: magic,
        });
    }
    let version = crate::bev::read_u32(&mut r)?;
    if version != CKPT_VERSION {
        return Err(Error::BadVersion {
            expected: CKPT_VERSION,
            found: version,
        });
    }
    let depth = crate::bev::read_u32(&mut r)? as usize;
    let base_features = crate::bev::read_u32(&mut r)? as usize;
    let in_channels = crate::bev::read_u32(&mut r)? as usize;
    let out_channels = crate::bev::read_u32(&mut r)? as usize;
    let mut tag = [0u8; 1];
    crate::bev::read_exact_or_truncated(&mut r, &mut tag)?;
    let head = head_from_tag(tag[0])?;
    let mut iter_bytes = [0u8; 8];
    crate::bev::read_exact_or_truncated(&mut r, &mut iter_bytes)?;
    let iteration = u64::from_le_bytes(iter_bytes);

    let spec = NetSpec {
        depth,
        base_features,
        in_channels,
        out_channels,
        head,
    };
    let mut net = build_network(&spec, 0)?;
    let shapes: Vec<Vec<usize>> = net
        .param_tensors()
        .iter()
        .map(|(dims, _)| dims.clone())
        .collect();
    let mut param_data = Vec::with_capacity(shapes.len());
    for dims in &shapes {
        param_data.push(read_tensor(&mut r, dims)?);
    }
    for (slot, data) in net.param_slices_mut().into_iter().zip(param_data) {
        slot.copy_from_slice(&data);
    }
    let mut momentum = Momentum {
        velocity: Vec::with_capacity(shapes.len()),
    };
    for dims in &shapes {
        momentum.velocity.push(read_tensor(&mut r, dims)?);
    }
    Ok(Checkpoint {
        net,
        momentum,
        iteration,
    })
}
