//! The depth-parameterized encoder-decoder network.
//!
//! Depth `n` counts resolution levels including the bottleneck, so the
//! encoder applies n−1 halvings: a pre-processing block lifts the `d`
//! input channels to `k` features, each deeper level doubles the feature
//! count after a 2×2 max-pool, and the decoder mirrors the ladder with
//! 2×2 transposed convolutions and skip concatenations (encoder features
//! first in channel order). Every block is two 3×3 zero-padded
//! convolutions with ReLU; a final 1×1 convolution maps back to `d`
//! channels, followed by the output head.
//!
//! Parameters are stored in f32; all arithmetic runs in f64. The
//! canonical parameter order — encoder blocks outside-in, decoder blocks
//! inside-out, final convolution, each block's tensors in declaration
//! order — is shared by gradient layout, optimizer state, and the
//! checkpoint format.

use ndarray::{s, Array1, Array3, Array4, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Output nonlinearity applied after the final 1×1 convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Identity: unbounded regression output.
    Linear,
    /// tanh: output in (−1, 1).
    Tanh,
    /// ReLU clipped at one: output in [0, 1].
    ClippedRelu,
}

impl std::str::FromStr for Head {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Head::Linear),
            "tanh" => Ok(Head::Tanh),
            "clipped_relu" => Ok(Head::ClippedRelu),
            other => Err(Error::InvalidArgument(format!(
                "unknown head '{other}' (expected linear, tanh, or clipped_relu)"
            ))),
        }
    }
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Head::Linear => "linear",
            Head::Tanh => "tanh",
            Head::ClippedRelu => "clipped_relu",
        })
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetSpec {
    /// Depth n: resolution levels, bottleneck included.
    pub depth: usize,
    /// Base features k: channels after the pre-processing block.
    pub base_features: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub head: Head,
}

impl NetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 || self.base_features < 1 {
            return Err(Error::InvalidArgument(
                "depth and base_features must be >= 1".into(),
            ));
        }
        if self.in_channels < 1 || self.out_channels < 1 {
            return Err(Error::InvalidArgument("channel counts must be >= 1".into()));
        }
        Ok(())
    }
}

/// A convolution layer; 3×3 zero-padded or 1×1, both unit stride.
/// Weights are `[out_c, in_c, kh, kw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub w: Array4<f32>,
    pub b: Array1<f32>,
}

/// A 2×2 stride-2 transposed convolution; doubles spatial size.
/// Weights are `[in_c, out_c, 2, 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TConv {
    pub w: Array4<f32>,
    pub b: Array1<f32>,
}

/// Two 3×3 conv+ReLU layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    pub c1: Conv,
    pub c2: Conv,
}

/// Decoder stage: upsample, concatenate the skip, two conv+ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct DecBlock {
    pub up: TConv,
    pub c1: Conv,
    pub c2: Conv,
}

/// A built network: parameters plus the spec that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetSpec,
    /// Encoder blocks, level 0 (pre-processing) to level n−1 (bottleneck);
    /// levels 1.. are preceded by a 2×2 max-pool.
    pub enc: Vec<ConvBlock>,
    /// Decoder blocks in forward order: `dec[j]` lifts level n−1−j up to
    /// level n−2−j.
    pub dec: Vec<DecBlock>,
    /// 1×1 convolution from k features to the output channels.
    pub final_conv: Conv,
}

/// The ± influence radius of one input pixel after the full
/// encoder-decoder, by depth: `2·(3 + Σ_{i=2..n} 5·2^(i−2))`.
pub fn receptive_field(n: usize) -> u64 {
    let sum: u64 = (2..=n as u64).map(|i| 5 * (1u64 << (i - 2))).sum();
    2 * (3 + sum)
}

/// Smallest legal square input edge for depth n: 2^n. Inputs must have
/// each spatial dimension a multiple of this.
pub fn min_input_size(n: usize) -> u64 {
    1u64 << n
}

/// Total number of weights and biases. Independent of seed.
pub fn count_params(net: &Network) -> usize {
    net.param_tensors().iter().map(|(_, t)| t.len()).sum()
}

/// Channels produced by encoder level i: k·2^i.
fn level_channels(k: usize, i: usize) -> usize {
    k << i
}

fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, shape: (usize, usize, usize, usize)) -> Array4<f32> {
    let bound = (6.0 / fan_in as f64).sqrt();
    Array4::from_shape_simple_fn(shape, || rng.gen_range(-bound..bound) as f32)
}

/// Initial bias. Zero would park every ReLU unit exactly on its kink
/// over the (mostly zero) background pixels, where the gradient gate is
/// closed — networks then collapse to a constant output and freeze. A
/// small positive bias keeps units initially alive everywhere.
const BIAS_INIT: f32 = 0.01;

fn conv3(rng: &mut ChaCha8Rng, in_c: usize, out_c: usize) -> Conv {
    Conv {
        w: he_uniform(rng, in_c * 9, (out_c, in_c, 3, 3)),
        b: Array1::from_elem(out_c, BIAS_INIT),
    }
}

fn conv1(rng: &mut ChaCha8Rng, in_c: usize, out_c: usize) -> Conv {
    Conv {
        w: he_uniform(rng, in_c, (out_c, in_c, 1, 1)),
        b: Array1::from_elem(out_c, BIAS_INIT),
    }
}

fn tconv2(rng: &mut ChaCha8Rng, in_c: usize, out_c: usize) -> TConv {
    TConv {
        w: he_uniform(rng, in_c, (in_c, out_c, 2, 2)),
        b: Array1::from_elem(out_c, BIAS_INIT),
    }
}

/// Build a network with variance-scaled (He-uniform, fan-in) random
/// weights and small positive biases, deterministically from the seed.
pub fn build_network(spec: &NetSpec, seed: u64) -> Result<Network> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, k) = (spec.depth, spec.base_features);
    let mut enc = Vec::with_capacity(n);
    for i in 0..n {
        let in_c = if i == 0 {
            spec.in_channels
        } else {
            level_channels(k, i - 1)
        };
        let out_c = level_channels(k, i);
        enc.push(ConvBlock {
            c1: conv3(&mut rng, in_c, out_c),
            c2: conv3(&mut rng, out_c, out_c),
        });
    }
    let mut dec = Vec::with_capacity(n.saturating_sub(1));
    for j in 0..n.saturating_sub(1) {
        let level = n - 2 - j;
        let deep_c = level_channels(k, level + 1);
        let out_c = level_channels(k, level);
        dec.push(DecBlock {
            up: tconv2(&mut rng, deep_c, out_c),
            c1: conv3(&mut rng, 2 * out_c, out_c),
            c2: conv3(&mut rng, out_c, out_c),
        });
    }
    let final_conv = conv1(&mut rng, k, spec.out_channels);
    Ok(Network {
        spec: *spec,
        enc,
        dec,
        final_conv,
    })
}

impl Network {
    /// All parameter tensors in canonical order, with their shapes.
    pub fn param_tensors(&self) -> Vec<(Vec<usize>, &[f32])> {
        fn t4(w: &Array4<f32>) -> (Vec<usize>, &[f32]) {
            (w.shape().to_vec(), w.as_slice().expect("standard layout"))
        }
        fn t1(b: &Array1<f32>) -> (Vec<usize>, &[f32]) {
            (b.shape().to_vec(), b.as_slice().expect("standard layout"))
        }
        let mut out = Vec::new();
        for block in &self.enc {
            out.push(t4(&block.c1.w));
            out.push(t1(&block.c1.b));
            out.push(t4(&block.c2.w));
            out.push(t1(&block.c2.b));
        }
        for block in &self.dec {
            out.push(t4(&block.up.w));
            out.push(t1(&block.up.b));
            out.push(t4(&block.c1.w));
            out.push(t1(&block.c1.b));
            out.push(t4(&block.c2.w));
            out.push(t1(&block.c2.b));
        }
        out.push(t4(&self.final_conv.w));
        out.push(t1(&self.final_conv.b));
        out
    }

    /// Mutable views of all parameters, canonical order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f32]> {
        let mut out: Vec<&mut [f32]> = Vec::new();
        for block in &mut self.enc {
            out.push(block.c1.w.as_slice_mut().expect("standard layout"));
            out.push(block.c1.b.as_slice_mut().expect("standard layout"));
            out.push(block.c2.w.as_slice_mut().expect("standard layout"));
            out.push(block.c2.b.as_slice_mut().expect("standard layout"));
        }
        for block in &mut self.dec {
            out.push(block.up.w.as_slice_mut().expect("standard layout"));
            out.push(block.up.b.as_slice_mut().expect("standard layout"));
            out.push(block.c1.w.as_slice_mut().expect("standard layout"));
            out.push(block.c1.b.as_slice_mut().expect("standard layout"));
            out.push(block.c2.w.as_slice_mut().expect("standard layout"));
            out.push(block.c2.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.final_conv.w.as_slice_mut().expect("standard layout"));
        out.push(self.final_conv.b.as_slice_mut().expect("standard layout"));
        out
    }

    fn check_input(&self, input: &Array3<f32>) -> Result<()> {
        let (c, h, w) = input.dim();
        if c != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "input has {c} channels, network expects {}",
                self.spec.in_channels
            )));
        }
        let unit = min_input_size(self.spec.depth) as usize;
        if h % unit != 0 || w % unit != 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "spatial dims {h}x{w} must be nonzero multiples of {unit} for depth {}",
                self.spec.depth
            )));
        }
        Ok(())
    }

    /// Inference pass: `[d, H, W]` in, `[d, H, W]` out, head applied.
    pub fn forward(&self, input: &Array3<f32>) -> Result<Array3<f32>> {
        self.check_input(input)?;
        let mut a = input.mapv(|v| v as f64);
        let mut skips: Vec<Array3<f64>> = Vec::with_capacity(self.enc.len() - 1);
        for (i, block) in self.enc.iter().enumerate() {
            if i > 0 {
                a = maxpool_forward(&a).0;
            }
            a = relu(&conv_forward(&a, &block.c1));
            a = relu(&conv_forward(&a, &block.c2));
            if i + 1 < self.enc.len() {
                skips.push(a.clone());
            }
        }
        for (j, block) in self.dec.iter().enumerate() {
            let up = tconv_forward(&a, &block.up);
            let cat = concat_channels(&skips[self.dec.len() - 1 - j], &up);
            a = relu(&conv_forward(&cat, &block.c1));
            a = relu(&conv_forward(&a, &block.c2));
        }
        let z = conv_forward(&a, &self.final_conv);
        Ok(apply_head(&z, self.spec.head).mapv(|v| v as f32))
    }

    /// Training pass: like [`forward`] but records every intermediate
    /// needed by [`Network::backward`]. Output stays in f64.
    pub fn forward_train(&self, input: &Array3<f32>) -> Result<Tape> {
        self.check_input(input)?;
        let mut a = input.mapv(|v| v as f64);
        let mut enc_stages = Vec::with_capacity(self.enc.len());
        for (i, block) in self.enc.iter().enumerate() {
            let pool_argmax = if i > 0 {
                let (pooled, argmax) = maxpool_forward(&a);
                a = pooled;
                Some(argmax)
            } else {
                None
            };
            let x = a;
            let z1 = conv_forward(&x, &block.c1);
            let a1 = relu(&z1);
            let z2 = conv_forward(&a1, &block.c2);
            a = relu(&z2);
            enc_stages.push(EncStage {
                pool_argmax,
                x,
                z1,
                a1,
                z2,
                a2: a.clone(),
            });
        }
        let mut dec_stages = Vec::with_capacity(self.dec.len());
        for (j, block) in self.dec.iter().enumerate() {
            let up_x = a;
            let up = tconv_forward(&up_x, &block.up);
            let skip_level = self.dec.len() - 1 - j;
            let cat = concat_channels(&enc_stages[skip_level].a2, &up);
            let z1 = conv_forward(&cat, &block.c1);
            let a1 = relu(&z1);
            let z2 = conv_forward(&a1, &block.c2);
            a = relu(&z2);
            dec_stages.push(DecStage {
                up_x,
                cat,
                z1,
                a1,
                z2,
                a2: a.clone(),
            });
        }
        let z_final = conv_forward(&a, &self.final_conv);
        let output = apply_head(&z_final, self.spec.head);
        Ok(Tape {
            enc: enc_stages,
            dec: dec_stages,
            z_final,
            output,
        })
    }

    /// Reverse-mode pass: given dLoss/dOutput, produce dLoss/dParameter
    /// for every tensor, in the canonical layout.
    pub fn backward(&self, tape: &Tape, g_output: &Array3<f64>) -> Gradients {
        let mut grads = Gradients::zeros_like(self);

        // Head, then the final 1×1 convolution.
        let g_zf = head_backward(g_output, &tape.z_final, &tape.output, self.spec.head);
        let final_x = tape
            .dec
            .last()
            .map(|stage| &stage.a2)
            .unwrap_or(&tape.enc.last().expect("depth >= 1").a2);
        let mut g = conv_backward(
            &g_zf,
            final_x,
            &self.final_conv,
            &mut grads.final_w,
            &mut grads.final_b,
        );

        // Decoder stages, outermost first. `g` enters as dLoss/d(stage
        // output); the concatenation split sends one part to the skip's
        // encoder level and the rest down through the upsampling.
        let mut g_skip: Vec<Option<Array3<f64>>> = vec![None; self.enc.len()];
        for j in (0..self.dec.len()).rev() {
            let block = &self.dec[j];
            let stage = &tape.dec[j];
            let gd = &mut grads.dec[j];
            let g_z2 = relu_backward(&g, &stage.z2);
            let g_a1 = conv_backward(&g_z2, &stage.a1, &block.c2, &mut gd.4, &mut gd.5);
            let g_z1 = relu_backward(&g_a1, &stage.z1);
            let g_cat = conv_backward(&g_z1, &stage.cat, &block.c1, &mut gd.2, &mut gd.3);
            let skip_level = self.dec.len() - 1 - j;
            let skip_c = level_channels(self.spec.base_features, skip_level);
            g_skip[skip_level] = Some(g_cat.slice(s![..skip_c, .., ..]).to_owned());
            let g_up = g_cat.slice(s![skip_c.., .., ..]).to_owned();
            g = tconv_backward(&g_up, &stage.up_x, &block.up, &mut gd.0, &mut gd.1);
        }

        // Encoder levels, deepest first. Entering `g` is the gradient of
        // the level's block output: from the decoder for the bottleneck,
        // from the next level's pool for the rest; skip paths add in.
        for i in (0..self.enc.len()).rev() {
            let block = &self.enc[i];
            let stage = &tape.enc[i];
            let ge = &mut grads.enc[i];
            let mut g_a2 = g;
            if let Some(gs) = g_skip[i].take() {
                g_a2 += &gs;
            }
            let g_z2 = relu_backward(&g_a2, &stage.z2);
            let g_a1 = conv_backward(&g_z2, &stage.a1, &block.c2, &mut ge.2, &mut ge.3);
            let g_z1 = relu_backward(&g_a1, &stage.z1);
            let g_x = conv_backward(&g_z1, &stage.x, &block.c1, &mut ge.0, &mut ge.1);
            g = match &stage.pool_argmax {
                Some(argmax) => maxpool_backward(&g_x, argmax),
                None => g_x, // level 0: gradient w.r.t. the input, unused
            };
        }
        grads
    }
}

/// Per-encoder-level intermediates recorded by the training pass.
pub struct EncStage {
    pool_argmax: Option<Array3<u8>>,
    x: Array3<f64>,
    z1: Array3<f64>,
    a1: Array3<f64>,
    z2: Array3<f64>,
    a2: Array3<f64>,
}

/// Per-decoder-stage intermediates.
pub struct DecStage {
    up_x: Array3<f64>,
    cat: Array3<f64>,
    z1: Array3<f64>,
    a1: Array3<f64>,
    z2: Array3<f64>,
    a2: Array3<f64>,
}

/// Everything the backward pass needs, plus the network output.
pub struct Tape {
    enc: Vec<EncStage>,
    dec: Vec<DecStage>,
    z_final: Array3<f64>,
    /// Post-head output, f64, shape `[d, H, W]`.
    pub output: Array3<f64>,
}

/// Parameter gradients in the canonical layout. Encoder and decoder
/// entries mirror the corresponding blocks' tensor order.
pub struct Gradients {
    /// (c1.w, c1.b, c2.w, c2.b) per encoder block.
    #[allow(clippy::type_complexity)]
    pub enc: Vec<(Array4<f64>, Array1<f64>, Array4<f64>, Array1<f64>)>,
    /// (up.w, up.b, c1.w, c1.b, c2.w, c2.b) per decoder block.
    #[allow(clippy::type_complexity)]
    pub dec: Vec<(Array4<f64>, Array1<f64>, Array4<f64>, Array1<f64>, Array4<f64>, Array1<f64>)>,
    pub final_w: Array4<f64>,
    pub final_b: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        let enc = net
            .enc
            .iter()
            .map(|b| {
                (
                    Array4::zeros(b.c1.w.raw_dim()),
                    Array1::zeros(b.c1.b.raw_dim()),
                    Array4::zeros(b.c2.w.raw_dim()),
                    Array1::zeros(b.c2.b.raw_dim()),
                )
            })
            .collect();
        let dec = net
            .dec
            .iter()
            .map(|b| {
                (
                    Array4::zeros(b.up.w.raw_dim()),
                    Array1::zeros(b.up.b.raw_dim()),
                    Array4::zeros(b.c1.w.raw_dim()),
                    Array1::zeros(b.c1.b.raw_dim()),
                    Array4::zeros(b.c2.w.raw_dim()),
                    Array1::zeros(b.c2.b.raw_dim()),
                )
            })
            .collect();
        Gradients {
            enc,
            dec,
            final_w: Array4::zeros(net.final_conv.w.raw_dim()),
            final_b: Array1::zeros(net.final_conv.b.raw_dim()),
        }
    }

    /// Flat views in canonical order (matches `Network::param_tensors`).
    pub fn flat(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for (c1w, c1b, c2w, c2b) in &self.enc {
            out.push(c1w.as_slice().expect("standard layout"));
            out.push(c1b.as_slice().expect("standard layout"));
            out.push(c2w.as_slice().expect("standard layout"));
            out.push(c2b.as_slice().expect("standard layout"));
        }
        for (upw, upb, c1w, c1b, c2w, c2b) in &self.dec {
            out.push(upw.as_slice().expect("standard layout"));
            out.push(upb.as_slice().expect("standard layout"));
            out.push(c1w.as_slice().expect("standard layout"));
            out.push(c1b.as_slice().expect("standard layout"));
            out.push(c2w.as_slice().expect("standard layout"));
            out.push(c2b.as_slice().expect("standard layout"));
        }
        out.push(self.final_w.as_slice().expect("standard layout"));
        out.push(self.final_b.as_slice().expect("standard layout"));
        out
    }

    pub fn flat_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (c1w, c1b, c2w, c2b) in &mut self.enc {
            out.push(c1w.as_slice_mut().expect("standard layout"));
            out.push(c1b.as_slice_mut().expect("standard layout"));
            out.push(c2w.as_slice_mut().expect("standard layout"));
            out.push(c2b.as_slice_mut().expect("standard layout"));
        }
        for (upw, upb, c1w, c1b, c2w, c2b) in &mut self.dec {
            out.push(upw.as_slice_mut().expect("standard layout"));
            out.push(upb.as_slice_mut().expect("standard layout"));
            out.push(c1w.as_slice_mut().expect("standard layout"));
            out.push(c1b.as_slice_mut().expect("standard layout"));
            out.push(c2w.as_slice_mut().expect("standard layout"));
            out.push(c2b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.final_w.as_slice_mut().expect("standard layout"));
        out.push(self.final_b.as_slice_mut().expect("standard layout"));
        out
    }

    /// Global L2 norm over every parameter gradient.
    pub fn global_norm(&self) -> f64 {
        self.flat()
            .iter()
            .flat_map(|s| s.iter())
            .map(|&g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for slice in self.flat_mut() {
            for g in slice {
                *g *= factor;
            }
        }
    }
}

// ---- layer primitives (f64 arithmetic over f32 parameters) ----

/// Zero-padded unit-stride convolution; padding is (kh/2, kw/2), so 3×3
/// preserves size and 1×1 is pointwise.
fn conv_forward(input: &Array3<f64>, conv: &Conv) -> Array3<f64> {
    let (in_c, h, w) = input.dim();
    let (out_c, in_c2, kh, kw) = conv.w.dim();
    debug_assert_eq!(in_c, in_c2);
    let (ph, pw) = (kh as i64 / 2, kw as i64 / 2);
    let mut out = Array3::zeros((out_c, h, w));
    for o in 0..out_c {
        out.index_axis_mut(ndarray::Axis(0), o)
            .fill(conv.b[o] as f64);
        for i in 0..in_c {
            for dy in 0..kh {
                for dx in 0..kw {
                    let coef = conv.w[[o, i, dy, dx]] as f64;
                    let (oy, ox) = (dy as i64 - ph, dx as i64 - pw);
                    let (dst_r, src_r) = shifted_ranges(h, oy);
                    let (dst_c, src_c) = shifted_ranges(w, ox);
                    let src = input.slice(s![i, src_r.0..src_r.1, src_c.0..src_c.1]);
                    out.slice_mut(s![o, dst_r.0..dst_r.1, dst_c.0..dst_c.1])
                        .scaled_add(coef, &src);
                }
            }
        }
    }
    out
}

/// Gradients of [`conv_forward`]: writes dW/db and returns dInput.
fn conv_backward(
    g_out: &Array3<f64>,
    input: &Array3<f64>,
    conv: &Conv,
    g_w: &mut Array4<f64>,
    g_b: &mut Array1<f64>,
) -> Array3<f64> {
    let (in_c, h, w) = input.dim();
    let (out_c, _, kh, kw) = conv.w.dim();
    let (ph, pw) = (kh as i64 / 2, kw as i64 / 2);
    let mut g_in = Array3::zeros((in_c, h, w));
    for o in 0..out_c {
        g_b[o] += g_out.index_axis(ndarray::Axis(0), o).sum();
        for i in 0..in_c {
            for dy in 0..kh {
                for dx in 0..kw {
                    let (oy, ox) = (dy as i64 - ph, dx as i64 - pw);
                    let (dst_r, src_r) = shifted_ranges(h, oy);
                    let (dst_c, src_c) = shifted_ranges(w, ox);
                    let g_slice = g_out.slice(s![o, dst_r.0..dst_r.1, dst_c.0..dst_c.1]);
                    let in_slice = input.slice(s![i, src_r.0..src_r.1, src_c.0..src_c.1]);
                    g_w[[o, i, dy, dx]] += Zip::from(&g_slice)
                        .and(&in_slice)
                        .fold(0.0, |acc, &g, &x| acc + g * x);
                    g_in.slice_mut(s![i, src_r.0..src_r.1, src_c.0..src_c.1])
                        .scaled_add(conv.w[[o, i, dy, dx]] as f64, &g_slice);
                }
            }
        }
    }
    g_in
}

/// For output[dst] += w * input[src] with src = dst + offset: the valid
/// aligned (dst, src) index ranges along one axis.
fn shifted_ranges(len: usize, offset: i64) -> ((usize, usize), (usize, usize)) {
    let dst_lo = (-offset).max(0) as usize;
    let dst_hi = (len as i64).min(len as i64 - offset) as usize;
    let src_lo = offset.max(0) as usize;
    let src_hi = (len as i64).min(len as i64 + offset) as usize;
    ((dst_lo, dst_hi), (src_lo, src_hi))
}

fn relu(z: &Array3<f64>) -> Array3<f64> {
    z.mapv(|v| v.max(0.0))
}

fn relu_backward(g: &Array3<f64>, z: &Array3<f64>) -> Array3<f64> {
    let mut out = g.clone();
    Zip::from(&mut out).and(z).for_each(|g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    out
}

/// 2×2 stride-2 max-pooling; also returns the winning position (0..=3,
/// row-major within each window) for gradient routing. Ties pick the
/// first maximum in scan order.
fn maxpool_forward(input: &Array3<f64>) -> (Array3<f64>, Array3<u8>) {
    let (c, h, w) = input.dim();
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array3::zeros((c, oh, ow));
    let mut argmax = Array3::zeros((c, oh, ow));
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_k = 0u8;
                for k in 0..4u8 {
                    let (dy, dx) = ((k / 2) as usize, (k % 2) as usize);
                    let v = input[[ch, 2 * y + dy, 2 * x + dx]];
                    if v > best {
                        best = v;
                        best_k = k;
                    }
                }
                out[[ch, y, x]] = best;
                argmax[[ch, y, x]] = best_k;
            }
        }
    }
    (out, argmax)
}

fn maxpool_backward(g_out: &Array3<f64>, argmax: &Array3<u8>) -> Array3<f64> {
    let (c, oh, ow) = g_out.dim();
    let mut g_in = Array3::zeros((c, oh * 2, ow * 2));
    for ch in 0..c {
        for y in 0..oh {
            for x in 0..ow {
                let k = argmax[[ch, y, x]];
                let (dy, dx) = ((k / 2) as usize, (k % 2) as usize);
                g_in[[ch, 2 * y + dy, 2 * x + dx]] = g_out[[ch, y, x]];
            }
        }
    }
    g_in
}

/// 2×2 stride-2 transposed convolution: output is twice the input size;
/// out[o, 2y+dy, 2x+dx] += w[i,o,dy,dx] · in[i,y,x].
fn tconv_forward(input: &Array3<f64>, tconv: &TConv) -> Array3<f64> {
    let (in_c, h, w) = input.dim();
    let (_, out_c, _, _) = tconv.w.dim();
    let mut out = Array3::zeros((out_c, 2 * h, 2 * w));
    for o in 0..out_c {
        out.index_axis_mut(ndarray::Axis(0), o)
            .fill(tconv.b[o] as f64);
        for i in 0..in_c {
            let plane = input.index_axis(ndarray::Axis(0), i);
            for dy in 0..2 {
                for dx in 0..2 {
                    out.slice_mut(s![o, dy..;2, dx..;2])
                        .scaled_add(tconv.w[[i, o, dy, dx]] as f64, &plane);
                }
            }
        }
    }
    out
}

fn tconv_backward(
    g_out: &Array3<f64>,
    input: &Array3<f64>,
    tconv: &TConv,
    g_w: &mut Array4<f64>,
    g_b: &mut Array1<f64>,
) -> Array3<f64> {
    let (in_c, h, w) = input.dim();
    let (_, out_c, _, _) = tconv.w.dim();
    let mut g_in = Array3::zeros((in_c, h, w));
    for o in 0..out_c {
        g_b[o] += g_out.index_axis(ndarray::Axis(0), o).sum();
        for i in 0..in_c {
            let plane = input.index_axis(ndarray::Axis(0), i);
            for dy in 0..2 {
                for dx in 0..2 {
                    let g_slice = g_out.slice(s![o, dy..;2, dx..;2]);
                    g_w[[i, o, dy, dx]] += Zip::from(&g_slice)
                        .and(&plane)
                        .fold(0.0, |acc, &g, &x| acc + g * x);
                    g_in.index_axis_mut(ndarray::Axis(0), i)
                        .scaled_add(tconv.w[[i, o, dy, dx]] as f64, &g_slice);
                }
            }
        }
    }
    g_in
}

/// Channel concatenation, skip features first.
fn concat_channels(skip: &Array3<f64>, up: &Array3<f64>) -> Array3<f64> {
    ndarray::concatenate(ndarray::Axis(0), &[skip.view(), up.view()])
        .expect("matching spatial dims")
}

fn apply_head(z: &Array3<f64>, head: Head) -> Array3<f64> {
    match head {
        Head::Linear => z.clone(),
        Head::Tanh => z.mapv(f64::tanh),
        Head::ClippedRelu => z.mapv(|v| v.clamp(0.0, 1.0)),
    }
}

/// dLoss/dz for the head, given dLoss/dOutput. Tanh uses the recorded
/// output; clipped ReLU gates on the pre-head value (subgradient 0 at
/// the kinks).
fn head_backward(
    g_out: &Array3<f64>,
    z: &Array3<f64>,
    output: &Array3<f64>,
    head: Head,
) -> Array3<f64> {
    match head {
        Head::Linear => g_out.clone(),
        Head::Tanh => {
            let mut g = g_out.clone();
            Zip::from(&mut g).and(output).for_each(|g, &y| *g *= 1.0 - y * y);
            g
        }
        Head::ClippedRelu => {
            let mut g = g_out.clone();
            Zip::from(&mut g).and(z).for_each(|g, &z| {
                if z <= 0.0 || z >= 1.0 {
                    *g = 0.0;
                }
            });
            g
        }
    }
}
