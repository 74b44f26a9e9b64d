//! Small trainable CNN standing in for blind end-to-end deblurring.
//!
//! Architecture: a chain of 3x3 stride-1 zero-padded ("same") convolutions
//! with leaky-rectifier activation (slope 0.1) after every layer except the
//! last, plus a global additive skip from the input to the output. The last
//! layer emits as many channels as the input, so output shape always equals
//! input shape.
//!
//! Weights file ("DBNN"): magic, u32 layer count, then per layer a shape
//! header (out, in, kh, kw as u32 little-endian) followed by out*in*kh*kw
//! weight f32s and out bias f32s, all little-endian.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::image::Image;
use crate::rng::{CounterRng, SeqRng};
use std::path::Path;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"DBNN";
pub const LEAKY_SLOPE: f64 = 0.1;
const KSIZE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub out_channels: usize,
    pub in_channels: usize,
    /// [out][in][ky][kx], row-major, 3x3 taps.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvLayer {
    pub fn zeros(out_channels: usize, in_channels: usize) -> Self {
        ConvLayer {
            out_channels,
            in_channels,
            weights: vec![0.0; out_channels * in_channels * KSIZE * KSIZE],
            bias: vec![0.0; out_channels],
        }
    }

    fn tap(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        f64::from(self.weights[((o * self.in_channels + i) * KSIZE + ky) * KSIZE + kx])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CnnConfig {
    pub layers: Vec<ConvLayer>,
}

impl CnnConfig {
    /// All-zero weights: the forward pass reduces to the skip connection.
    pub fn zeros(io_channels: usize, hidden: usize, depth: usize) -> Self {
        CnnConfig {
            layers: layer_shapes(io_channels, hidden, depth)
                .map(|(o, i)| ConvLayer::zeros(o, i))
                .collect(),
        }
    }

    /// Seeded He-style uniform initialization.
    pub fn random_init(io_channels: usize, hidden: usize, depth: usize, seed: u64) -> Self {
        let mut rng = SeqRng::new(seed);
        let layers = layer_shapes(io_channels, hidden, depth)
            .map(|(o, i)| {
                let bound = (6.0 / (i as f64 * (KSIZE * KSIZE) as f64)).sqrt();
                let mut layer = ConvLayer::zeros(o, i);
                for w in &mut layer.weights {
                    *w = rng.next_uniform_signed(bound) as f32;
                }
                layer
            })
            .collect();
        CnnConfig { layers }
    }

    /// Default stand-in for the blind end-to-end class: 3 conv layers,
    /// 32 hidden channels.
    pub fn default_shape(io_channels: usize, seed: u64) -> Self {
        CnnConfig::random_init(io_channels, 32, 3, seed)
    }

    pub fn io_channels(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_channels)
    }

    pub fn validate(&self, input_channels: usize) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::ShapeChain("no layers".into()));
        }
        let mut carried = input_channels;
        for (idx, layer) in self.layers.iter().enumerate() {
            if layer.in_channels != carried {
                return Err(Error::ShapeChain(format!(
                    "layer {idx} expects {} input channels, got {carried}",
                    layer.in_channels
                )));
            }
            if layer.weights.len() != layer.out_channels * layer.in_channels * KSIZE * KSIZE {
                return Err(Error::ShapeChain(format!(
                    "layer {idx} weight count {}",
                    layer.weights.len()
                )));
            }
            if layer.bias.len() != layer.out_channels {
                return Err(Error::ShapeChain(format!(
                    "layer {idx} bias count {}",
                    layer.bias.len()
                )));
            }
            if layer
                .weights
                .iter()
                .chain(&layer.bias)
                .any(|w| !w.is_finite())
            {
                return Err(Error::NonFinite(format!("weights in layer {idx}")));
            }
            carried = layer.out_channels;
        }
        if carried != input_channels {
            return Err(Error::ShapeChain(format!(
                "final layer emits {carried} channels, input has {input_channels}"
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(WEIGHTS_MAGIC);
        buf.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            for dim in [layer.out_channels, layer.in_channels, KSIZE, KSIZE] {
                buf.extend_from_slice(&(dim as u32).to_le_bytes());
            }
            for w in &layer.weights {
                buf.extend_from_slice(&w.to_le_bytes());
            }
            for b in &layer.bias {
                buf.extend_from_slice(&b.to_le_bytes());
            }
        }
        std::fs::write(path, buf).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        let malformed = |reason: &str| Error::MalformedFile {
            path: path.display().to_string(),
            reason: reason.to_string(),
        };
        if bytes.len() < 8 || &bytes[0..4] != WEIGHTS_MAGIC {
            return Err(malformed("bad magic"));
        }
        let mut cursor = 4usize;
        fn read_u32(bytes: &[u8], cursor: &mut usize) -> Option<u32> {
            let v = bytes.get(*cursor..*cursor + 4)?;
            *cursor += 4;
            Some(u32::from_le_bytes(v.try_into().unwrap()))
        }
        fn read_f32s(bytes: &[u8], cursor: &mut usize, n: usize) -> Option<Vec<f32>> {
            let raw = bytes.get(*cursor..*cursor + 4 * n)?;
            *cursor += 4 * n;
            Some(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        let count =
            read_u32(&bytes, &mut cursor).ok_or_else(|| malformed("truncated header"))? as usize;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let mut dim = || -> Result<usize> {
                Ok(
                    read_u32(&bytes, &mut cursor).ok_or_else(|| malformed("truncated header"))?
                        as usize,
                )
            };
            let (out_channels, in_channels, kh, kw) = (dim()?, dim()?, dim()?, dim()?);
            if kh != KSIZE || kw != KSIZE {
                return Err(malformed(&format!("unsupported tap size {kh}x{kw}")));
            }
            let nw = out_channels * in_channels * KSIZE * KSIZE;
            let weights =
                read_f32s(&bytes, &mut cursor, nw).ok_or_else(|| malformed("truncated weights"))?;
            let bias = read_f32s(&bytes, &mut cursor, out_channels)
                .ok_or_else(|| malformed("truncated weights"))?;
            layers.push(ConvLayer {
                out_channels,
                in_channels,
                weights,
                bias,
            });
        }
        if cursor != bytes.len() {
            return Err(malformed("trailing bytes"));
        }
        let cfg = CnnConfig { layers };
        cfg.validate(cfg.io_channels())?;
        Ok(cfg)
    }
}

fn layer_shapes(
    io_channels: usize,
    hidden: usize,
    depth: usize,
) -> impl Iterator<Item = (usize, usize)> {
    (0..depth).map(move |l| {
        let i = if l == 0 { io_channels } else { hidden };
        let o = if l + 1 == depth { io_channels } else { hidden };
        (o, i)
    })
}

/// Zero-pad one plane by a single pixel on each side.
fn pad_plane(plane: &[f64], w: usize, h: usize) -> Vec<f64> {
    let pw = w + 2;
    let mut padded = vec![0.0; pw * (h + 2)];
    for y in 0..h {
        padded[(y + 1) * pw + 1..(y + 1) * pw + 1 + w].copy_from_slice(&plane[y * w..(y + 1) * w]);
    }
    padded
}

/// Same-size zero-padded correlation: out[o] = bias[o] + sum_i taps(o,i) . in[i].
fn conv_forward(layer: &ConvLayer, input: &Field) -> Field {
    let (w, h) = (input.width, input.height);
    let padded: Vec<Vec<f64>> = (0..layer.in_channels)
        .map(|i| pad_plane(input.plane(i), w, h))
        .collect();
    let mut out = Field::zeros(w, h, layer.out_channels);
    let pw = w + 2;
    for o in 0..layer.out_channels {
        let plane = out.plane_mut(o);
        plane.fill(f64::from(layer.bias[o]));
        for (i, pad) in padded.iter().enumerate() {
            for ky in 0..KSIZE {
                for kx in 0..KSIZE {
                    let tap = layer.tap(o, i, ky, kx);
                    if tap == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let src = &pad[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let dst = &mut plane[y * w..(y + 1) * w];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += tap * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of `conv_forward` with respect to its input: channel roles swap
/// and taps flip in both spatial directions. Bias plays no part.
fn conv_backward_input(layer: &ConvLayer, upstream: &Field) -> Field {
    let (w, h) = (upstream.width, upstream.height);
    let padded: Vec<Vec<f64>> = (0..layer.out_channels)
        .map(|o| pad_plane(upstream.plane(o), w, h))
        .collect();
    let mut out = Field::zeros(w, h, layer.in_channels);
    let pw = w + 2;
    for i in 0..layer.in_channels {
        let plane = out.plane_mut(i);
        for (o, pad) in padded.iter().enumerate() {
            for ky in 0..KSIZE {
                for kx in 0..KSIZE {
                    let tap = layer.tap(o, i, KSIZE - 1 - ky, KSIZE - 1 - kx);
                    if tap == 0.0 {
                        continue;
                    }
                    for y in 0..h {
                        let src = &pad[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let dst = &mut plane[y * w..(y + 1) * w];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += tap * s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Per-layer weight and bias gradients given the upstream gradient at the
/// layer's pre-activation and the layer's input activation.
fn conv_weight_grads(
    layer: &ConvLayer,
    input: &Field,
    upstream: &Field,
    dw: &mut [f64],
    db: &mut [f64],
) {
    let (w, h) = (input.width, input.height);
    let pw = w + 2;
    let padded: Vec<Vec<f64>> = (0..layer.in_channels)
        .map(|i| pad_plane(input.plane(i), w, h))
        .collect();
    for o in 0..layer.out_channels {
        let up = upstream.plane(o);
        db[o] += up.iter().sum::<f64>();
        for (i, pad) in padded.iter().enumerate() {
            for ky in 0..KSIZE {
                for kx in 0..KSIZE {
                    let mut acc = 0.0;
                    for y in 0..h {
                        let src = &pad[(y + ky) * pw + kx..(y + ky) * pw + kx + w];
                        let g = &up[y * w..(y + 1) * w];
                        for (a, b) in g.iter().zip(src) {
                            acc += a * b;
                        }
                    }
                    dw[((o * layer.in_channels + i) * KSIZE + ky) * KSIZE + kx] += acc;
                }
            }
        }
    }
}

fn leaky(v: f64) -> f64 {
    if v >= 0.0 {
        v
    } else {
        LEAKY_SLOPE * v
    }
}

fn leaky_gate(post: f64) -> f64 {
    if post >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

/// Forward activations: `acts[0]` is the input, `acts[l]` the output of
/// layer l (post-activation except for the last layer). The network output
/// is `acts.last() + acts[0]`.
#[derive(Debug, Clone)]
pub(crate) struct CnnCache {
    pub acts: Vec<Field>,
}

pub(crate) fn forward_with_cache(cfg: &CnnConfig, input: &Field) -> Result<(Field, CnnCache)> {
    cfg.validate(input.channels)?;
    let depth = cfg.layers.len();
    let mut acts = Vec::with_capacity(depth + 1);
    acts.push(input.clone());
    for (l, layer) in cfg.layers.iter().enumerate() {
        let mut z = conv_forward(layer, acts.last().unwrap());
        if l + 1 < depth {
            for v in &mut z.data {
                *v = leaky(*v);
            }
        }
        acts.push(z);
    }
    let out = acts.last().unwrap().add(input);
    Ok((out, CnnCache { acts }))
}

/// Reverse sweep to the input: standard layer-by-layer backward through the
/// cached activations plus the identity contribution of the skip.
pub(crate) fn vjp(cfg: &CnnConfig, cache: &CnnCache, cotangent: &Field) -> Field {
    let depth = cfg.layers.len();
    let mut g = cotangent.clone();
    for l in (0..depth).rev() {
        if l + 1 < depth {
            // gate through the activation at this layer's output
            for (v, &a) in g.data.iter_mut().zip(&cache.acts[l + 1].data) {
                *v *= leaky_gate(a);
            }
        }
        g = conv_backward_input(&cfg.layers[l], &g);
    }
    g.axpy(1.0, cotangent);
    g
}

/// Flattened parameter vector layout used by training.
fn param_count(cfg: &CnnConfig) -> usize {
    cfg.layers
        .iter()
        .map(|l| l.weights.len() + l.bias.len())
        .sum()
}

fn backward_params(cfg: &CnnConfig, cache: &CnnCache, cotangent: &Field, grads: &mut [f64]) {
    let depth = cfg.layers.len();
    let mut g = cotangent.clone();
    let mut offsets = Vec::with_capacity(depth);
    let mut offset = 0;
    for layer in &cfg.layers {
        offsets.push(offset);
        offset += layer.weights.len() + layer.bias.len();
    }
    for l in (0..depth).rev() {
        if l + 1 < depth {
            for (v, &a) in g.data.iter_mut().zip(&cache.acts[l + 1].data) {
                *v *= leaky_gate(a);
            }
        }
        let layer = &cfg.layers[l];
        let (dw, db) = grads[offsets[l]..offsets[l] + layer.weights.len() + layer.bias.len()]
            .split_at_mut(layer.weights.len());
        conv_weight_grads(layer, &cache.acts[l], &g, dw, db);
        if l > 0 {
            g = conv_backward_input(layer, &g);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Standard deviation of seeded Gaussian noise added to blurry inputs
    /// during training; 0 trains on clean blurry data.
    pub noise_sigma: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 30,
            learning_rate: 2e-3,
            batch_size: 8,
            seed: 0,
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub config: CnnConfig,
    /// Entry 0 is the dataset loss before any update; entry e is the mean
    /// minibatch loss of epoch e.
    pub epoch_loss: Vec<f64>,
}

fn mse_loss_field(out: &Field, sharp: &Field) -> f64 {
    out.sub(sharp).norm_sq() / out.data.len() as f64
}

fn apply_params(cfg: &mut CnnConfig, params: &[f64]) {
    let mut cursor = 0;
    for layer in &mut cfg.layers {
        for w in &mut layer.weights {
            *w = params[cursor] as f32;
            cursor += 1;
        }
        for b in &mut layer.bias {
            *b = params[cursor] as f32;
            cursor += 1;
        }
    }
}

fn collect_params(cfg: &CnnConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(param_count(cfg));
    for layer in &cfg.layers {
        out.extend(layer.weights.iter().map(|&w| f64::from(w)));
        out.extend(layer.bias.iter().map(|&b| f64::from(b)));
    }
    out
}

/// Mini-batch Adam on mean squared reconstruction error. Deterministic for
/// a given seed: the shuffle order, noise draws, and update order are all
/// fixed. Single-threaded by design.
pub fn cnn_train(
    start: &CnnConfig,
    dataset: &[(Image, Image)],
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (first_blurry, first_sharp) = &dataset[0];
    start.validate(first_blurry.channels())?;
    for (blurry, sharp) in dataset {
        if !blurry.same_shape(sharp) || !blurry.same_shape(first_blurry) {
            return Err(Error::DimensionMismatch(format!(
                "training pair {} vs {}",
                blurry.shape_str(),
                sharp.shape_str()
            )));
        }
    }
    let _ = first_sharp;
    if opts.batch_size == 0 || !opts.learning_rate.is_finite() || opts.learning_rate <= 0.0 {
        return Err(Error::InvalidConfig(
            "batch size must be >= 1 and learning rate > 0".into(),
        ));
    }

    let fields: Vec<(Field, Field)> = dataset
        .iter()
        .map(|(b, s)| (Field::from_image(b), Field::from_image(s)))
        .collect();

    let mut cfg = start.clone();
    let mut params = collect_params(&cfg);
    let n_params = params.len();
    let (mut m1, mut m2) = (vec![0.0f64; n_params], vec![0.0f64; n_params]);
    let (beta1, beta2, adam_eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut adam_t = 0u32;

    let noise_rng = CounterRng::new(opts.seed ^ 0xA5A5_5A5A_0F0F_F0F0);
    let noisy_input = |idx: usize, epoch: usize, blurry: &Field| -> Field {
        if opts.noise_sigma == 0.0 {
            return blurry.clone();
        }
        let mut out = blurry.clone();
        let base = ((epoch as u64) << 32) ^ (idx as u64);
        for (i, v) in out.data.iter_mut().enumerate() {
            *v += opts.noise_sigma
                * noise_rng.gaussian_at(base.wrapping_mul(0x1_0000_0001) + i as u64);
        }
        out
    };

    let initial_loss = fields
        .iter()
        .map(|(b, s)| {
            let (out, _) = forward_with_cache(&cfg, b)?;
            Ok(mse_loss_field(&out, s))
        })
        .sum::<Result<f64>>()?
        / fields.len() as f64;
    let mut epoch_loss = vec![initial_loss];

    let mut order: Vec<usize> = (0..fields.len()).collect();
    let mut shuffle_rng = SeqRng::new(opts.seed);
    let mut grads = vec![0.0f64; n_params];

    for epoch in 1..=opts.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut epoch_sum = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(opts.batch_size) {
            grads.fill(0.0);
            let mut batch_loss = 0.0;
            for &idx in batch {
                let (blurry, sharp) = &fields[idx];
                let input = noisy_input(idx, epoch, blurry);
                let (out, cache) = forward_with_cache(&cfg, &input)?;
                let sample_loss = mse_loss_field(&out, sharp);
                if !sample_loss.is_finite() {
                    return Err(Error::NonFiniteAtStep {
                        what: "training loss",
                        step: epoch,
                    });
                }
                batch_loss += sample_loss;
                // d(MSE)/d(out) = 2 (out - sharp) / pixel count, averaged over batch
                let mut cot = out.sub(sharp);
                cot.scale(2.0 / (out.data.len() as f64 * batch.len() as f64));
                backward_params(&cfg, &cache, &cot, &mut grads);
            }
            batch_loss /= batch.len() as f64;
            epoch_sum += batch_loss;
            batches += 1;

            adam_t += 1;
            let c1 = 1.0 - beta1.powi(adam_t as i32);
            let c2 = 1.0 - beta2.powi(adam_t as i32);
            for p in 0..n_params {
                m1[p] = beta1 * m1[p] + (1.0 - beta1) * grads[p];
                m2[p] = beta2 * m2[p] + (1.0 - beta2) * grads[p] * grads[p];
                params[p] -= opts.learning_rate * (m1[p] / c1) / ((m2[p] / c2).sqrt() + adam_eps);
            }
            apply_params(&mut cfg, &params);
        }
        epoch_loss.push(epoch_sum / batches as f64);
    }

    Ok(TrainOutcome {
        config: cfg,
        epoch_loss,
    })
}
