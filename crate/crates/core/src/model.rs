//! The multi-scale patch forecaster and its exact backward pass.
//!
//! Per window the pipeline is:
//!
//! 1. reversible instance normalization of each variable row,
//! 2. multi-scale patching of the normalized rows,
//! 3. one encoder per scale, applied to every patch with weights shared
//!    across patches and variables,
//! 4. per-variable concatenation of all encoder outputs,
//! 5. a head MLP mapping those features to `T` outputs, shared across
//!    variables,
//! 6. denormalization with the stored statistics.
//!
//! Variables never mix, so the prediction for variable `n` depends only on
//! row `n` of the input.
//!
//! All learnable weights live in one flat buffer; [`ModelParams`] records the
//! offset of each array inside it so the optimizer can work on the flat view
//! directly.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, ArraySpec, Checkpoint, Manifest};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patching::{patch_rows, MultiScaleConfig};
use crate::types::SeriesMatrix;

/// Variance guard added under the square root of the instance std.
pub const REVIN_EPS: f64 = 1e-5;
/// Guard on the affine scale when inverting it.
const AFFINE_EPS: f64 = 1e-10;

/// Encoder family. Only the MLP encoder is implemented.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    Mlp,
}

fn default_true() -> bool {
    true
}

/// Static architecture description. Two models with equal specs have
/// identical parameter layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_vars: usize,
    pub lookback: usize,
    pub horizon: usize,
    pub scales: MultiScaleConfig,
    pub hidden: usize,
    #[serde(default)]
    pub encoder: EncoderKind,
    /// Hidden widths of the head MLP; empty means a single dense layer.
    #[serde(default)]
    pub head_hidden: Vec<usize>,
    #[serde(default = "default_true")]
    pub revin: bool,
    #[serde(default)]
    pub revin_affine: bool,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_vars == 0 || self.horizon == 0 || self.hidden == 0 {
            return Err(Error::param(
                "model spec",
                "n_vars, horizon and hidden must be positive",
            ));
        }
        if self.revin && self.lookback < 2 {
            return Err(Error::param(
                "lookback",
                "instance normalization needs >= 2 steps",
            ));
        }
        if self.head_hidden.contains(&0) {
            return Err(Error::param(
                "head_hidden",
                "hidden widths must be positive",
            ));
        }
        self.scales.validate(self.lookback)
    }

    /// Width of the concatenated per-variable feature vector.
    pub fn feature_width(&self) -> Result<usize> {
        Ok(self
            .scales
            .patch_counts(self.lookback)?
            .iter()
            .sum::<usize>()
            * self.hidden)
    }
}

/// Position of one dense layer inside the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct DenseSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: usize,
    pub bias: usize,
}

impl DenseSlot {
    fn end(&self) -> usize {
        self.bias + self.fan_out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub encoders: Vec<Vec<DenseSlot>>,
    pub head: Vec<DenseSlot>,
    /// Offsets of the per-variable affine scale and shift vectors.
    pub affine: Option<(usize, usize)>,
    pub len: usize,
}

impl Layout {
    fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut cursor = 0;
        let mut dense = |fan_in: usize, fan_out: usize| {
            let slot = DenseSlot {
                fan_in,
                fan_out,
                weight: cursor,
                bias: cursor + fan_in * fan_out,
            };
            cursor = slot.end();
            slot
        };
        let encoders = spec
            .scales
            .scales
            .iter()
            .map(|s| vec![dense(s.patch_len, spec.hidden)])
            .collect();
        let mut widths = vec![spec.feature_width()?];
        widths.extend(&spec.head_hidden);
        widths.push(spec.horizon);
        let head = widths.windows(2).map(|w| dense(w[0], w[1])).collect();
        let affine = spec.revin_affine.then(|| {
            let a = (cursor, cursor + spec.n_vars);
            cursor += 2 * spec.n_vars;
            a
        });
        Ok(Self {
            encoders,
            head,
            affine,
            len: cursor,
        })
    }
}

/// Learnable weights of a model, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    spec: ModelSpec,
    layout: Layout,
    data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        let layout = Layout::new(spec)?;
        Ok(Self {
            spec: spec.clone(),
            data: vec![0.0; layout.len],
            layout,
        })
    }

    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights and biases; the
    /// affine scale starts at one and the shift at zero.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slots: Vec<DenseSlot> = p
            .layout
            .encoders
            .iter()
            .flatten()
            .chain(&p.layout.head)
            .copied()
            .collect();
        for slot in slots {
            let bound = 1.0 / (slot.fan_in as f64).sqrt();
            for v in &mut p.data[slot.weight..slot.end()] {
                *v = rng.random_range(-bound..bound);
            }
        }
        if let Some((scale, _)) = p.layout.affine {
            p.data[scale..scale + spec.n_vars].fill(1.0);
        }
        Ok(p)
    }

    /// Rebuilds parameters from a flat vector in [`ModelParams::flatten`] order.
    pub fn unflatten(spec: &ModelSpec, flat: &[f64]) -> Result<Self> {
        let layout = Layout::new(spec)?;
        if flat.len() != layout.len {
            return Err(Error::shape("flat parameters", layout.len, flat.len()));
        }
        Ok(Self {
            spec: spec.clone(),
            layout,
            data: flat.to_vec(),
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Name and shape of every array, in flat order.
    pub fn arrays(&self) -> Vec<ArraySpec> {
        let mut out = Vec::new();
        let mut push_dense = |prefix: String, s: &DenseSlot| {
            out.push(ArraySpec {
                name: format!("{prefix}.weight"),
                shape: vec![s.fan_out, s.fan_in],
            });
            out.push(ArraySpec {
                name: format!("{prefix}.bias"),
                shape: vec![s.fan_out],
            });
        };
        for (k, layers) in self.layout.encoders.iter().enumerate() {
            for (j, s) in layers.iter().enumerate() {
                push_dense(format!("encoder{k}.layer{j}"), s);
            }
        }
        for (j, s) in self.layout.head.iter().enumerate() {
            push_dense(format!("head.layer{j}"), s);
        }
        if self.layout.affine.is_some() {
            for name in ["revin.scale", "revin.shift"] {
                out.push(ArraySpec {
                    name: name.into(),
                    shape: vec![self.spec.n_vars],
                });
            }
        }
        out
    }

    /// Borrow an array by the name reported in [`ModelParams::arrays`].
    pub fn array(&self, name: &str) -> Option<&[f64]> {
        let mut offset = 0;
        for a in self.arrays() {
            let size: usize = a.shape.iter().product();
            if a.name == name {
                return Some(&self.data[offset..offset + size]);
            }
            offset += size;
        }
        None
    }

    fn affine(&self) -> Option<(&[f64], &[f64])> {
        self.layout.affine.map(|(s, b)| {
            let n = self.spec.n_vars;
            (&self.data[s..s + n], &self.data[b..b + n])
        })
    }
}

/// Per-variable statistics captured by the instance normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Subtracts each row's mean and divides by `sqrt(var + 1e-5)`, with the
/// population variance (denominator `L`).
pub fn rev_in_normalize(window: &SeriesMatrix) -> Result<(SeriesMatrix, NormStats)> {
    if window.len() < 2 {
        return Err(Error::InsufficientLength {
            required: 2,
            actual: window.len(),
        });
    }
    let (values, stats) = normalize_rows(window);
    let normalized = SeriesMatrix::from_flat(values, window.n_vars(), window.len())?
        .with_names(window.variable_names().to_vec());
    Ok((normalized, stats))
}

fn normalize_rows(window: &SeriesMatrix) -> (Vec<f64>, NormStats) {
    let len = window.len() as f64;
    let mut stats = NormStats {
        mean: Vec::with_capacity(window.n_vars()),
        std: Vec::with_capacity(window.n_vars()),
    };
    let mut values = Vec::with_capacity(window.as_slice().len());
    for row in window.rows() {
        let mean = row.iter().sum::<f64>() / len;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len;
        let std = (var + REVIN_EPS).sqrt();
        values.extend(row.iter().map(|v| (v - mean) / std));
        stats.mean.push(mean);
        stats.std.push(std);
    }
    (values, stats)
}

/// Inverts the normalization on an `N × T` prediction: `y·std + mean`.
pub fn rev_in_denormalize(
    prediction: &[f64],
    n_vars: usize,
    stats: &NormStats,
) -> Result<Vec<f64>> {
    if stats.mean.len() != n_vars || stats.std.len() != n_vars {
        return Err(Error::shape("denormalize stats", n_vars, stats.mean.len()));
    }
    if n_vars == 0 || !prediction.len().is_multiple_of(n_vars) {
        return Err(Error::shape(
            "denormalize prediction",
            format!("multiple of {n_vars}"),
            prediction.len(),
        ));
    }
    let horizon = prediction.len() / n_vars;
    Ok(prediction
        .chunks_exact(horizon)
        .enumerate()
        .flat_map(|(n, row)| row.iter().map(move |y| y * stats.std[n] + stats.mean[n]))
        .collect())
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    n_vars: usize,
    param_len: usize,
    /// Normalized input before the optional affine map, `N × L`.
    normalized: Vec<f64>,
    /// Per scale, per layer: layer inputs and pre-activations over all
    /// `N × num_patches` patches.
    encoder_cache: Vec<Vec<LayerCache>>,
    /// Per head layer, over the `N` variables.
    head_cache: Vec<LayerCache>,
    /// Raw head output before denormalization, `N × T`.
    net_output: Vec<f64>,
    pub stats: NormStats,
    /// Denormalized forecast, `N × T`.
    pub prediction: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Vec<f64>,
    pre: Vec<f64>,
}

impl ForwardTrace {
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn horizon(&self) -> usize {
        self.prediction.len() / self.n_vars
    }
}

/// Applies a dense layer to `rows` stacked inputs, returning pre-activations.
fn dense_forward(data: &[f64], slot: &DenseSlot, input: &[f64], rows: usize) -> Vec<f64> {
    let w = &data[slot.weight..slot.bias];
    let b = &data[slot.bias..slot.end()];
    let mut out = Vec::with_capacity(rows * slot.fan_out);
    for x in input.chunks_exact(slot.fan_in) {
        for (o, w_row) in w.chunks_exact(slot.fan_in).enumerate() {
            let dot: f64 = w_row.iter().zip(x).map(|(a, b)| a * b).sum();
            out.push(dot + b[o]);
        }
    }
    out
}

/// Accumulates weight/bias gradients for `delta` (rows × fan_out) and, when
/// asked, returns the gradient with respect to the layer input.
fn dense_backward(
    data: &[f64],
    grad: &mut [f64],
    slot: &DenseSlot,
    input: &[f64],
    delta: &[f64],
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let (fi, fo) = (slot.fan_in, slot.fan_out);
    let w = &data[slot.weight..slot.bias];
    let (gw, gb) = grad[slot.weight..slot.end()].split_at_mut(fi * fo);
    let mut dinput = want_input_grad.then(|| vec![0.0; input.len()]);
    for (r, (x, d)) in input
        .chunks_exact(fi)
        .zip(delta.chunks_exact(fo))
        .enumerate()
    {
        for (o, &dv) in d.iter().enumerate() {
            if dv == 0.0 {
                continue;
            }
            gb[o] += dv;
            for (g, &xv) in gw[o * fi..(o + 1) * fi].iter_mut().zip(x) {
                *g += dv * xv;
            }
            if let Some(di) = dinput.as_mut() {
                for (g, &wv) in di[r * fi..(r + 1) * fi]
                    .iter_mut()
                    .zip(&w[o * fi..(o + 1) * fi])
                {
                    *g += dv * wv;
                }
            }
        }
    }
    dinput
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

fn relu_mask(delta: &mut [f64], pre: &[f64]) {
    for (d, &p) in delta.iter_mut().zip(pre) {
        if p <= 0.0 {
            *d = 0.0;
        }
    }
}

/// Runs the full pipeline on one `N × L` window.
pub fn forward(params: &ModelParams, window: &SeriesMatrix) -> Result<ForwardTrace> {
    let spec = &params.spec;
    let data = &params.data;
    let (n_vars, lookback) = (window.n_vars(), window.len());
    if n_vars != spec.n_vars {
        return Err(Error::shape("input variables", spec.n_vars, n_vars));
    }
    if lookback != spec.lookback {
        return Err(Error::shape("input lookback", spec.lookback, lookback));
    }

    let (normalized, stats) = if spec.revin {
        normalize_rows(window)
    } else {
        (
            window.as_slice().to_vec(),
            NormStats {
                mean: vec![0.0; n_vars],
                std: vec![1.0; n_vars],
            },
        )
    };
    let encoder_input = match params.affine() {
        Some((scale, shift)) => normalized
            .chunks_exact(lookback)
            .enumerate()
            .flat_map(|(n, row)| row.iter().map(move |z| z * scale[n] + shift[n]))
            .collect(),
        None => normalized.clone(),
    };

    let mut encoder_cache = Vec::with_capacity(spec.scales.len());
    let mut encoded = Vec::with_capacity(spec.scales.len());
    for (k, (scale, layers)) in spec
        .scales
        .scales
        .iter()
        .zip(&params.layout.encoders)
        .enumerate()
    {
        let tensor = patch_rows(
            encoder_input.chunks_exact(lookback),
            n_vars,
            lookback,
            *scale,
        )
        .map_err(|e| Error::Scale {
            index: k,
            source: Box::new(e),
        })?;
        let rows = n_vars * tensor.num_patches;
        let mut act = tensor.as_slice().to_vec();
        let mut caches = Vec::with_capacity(layers.len());
        for slot in layers {
            let pre = dense_forward(data, slot, &act, rows);
            let next = relu(&pre);
            caches.push(LayerCache { input: act, pre });
            act = next;
        }
        encoder_cache.push(caches);
        encoded.push((tensor.num_patches, act));
    }

    let feature_width: usize = encoded.iter().map(|(np, _)| np * spec.hidden).sum();
    let mut features = Vec::with_capacity(n_vars * feature_width);
    for n in 0..n_vars {
        for (np, act) in &encoded {
            let block = np * spec.hidden;
            features.extend_from_slice(&act[n * block..(n + 1) * block]);
        }
    }

    let head_layers = &params.layout.head;
    let mut act = features;
    let mut head_cache = Vec::with_capacity(head_layers.len());
    for (j, slot) in head_layers.iter().enumerate() {
        if act.len() != n_vars * slot.fan_in {
            return Err(Error::shape(
                format!("head layer {j} input"),
                n_vars * slot.fan_in,
                act.len(),
            ));
        }
        let pre = dense_forward(data, slot, &act, n_vars);
        let next = if j + 1 < head_layers.len() {
            relu(&pre)
        } else {
            pre.clone()
        };
        head_cache.push(LayerCache { input: act, pre });
        act = next;
    }
    let net_output = act;

    let horizon = spec.horizon;
    let prediction = match params.affine() {
        Some((scale, shift)) => net_output
            .chunks_exact(horizon)
            .enumerate()
            .flat_map(|(n, row)| {
                let (g, b, s, m) = (scale[n] + AFFINE_EPS, shift[n], stats.std[n], stats.mean[n]);
                row.iter().map(move |y| (y - b) / g * s + m)
            })
            .collect(),
        None => rev_in_denormalize(&net_output, n_vars, &stats)?,
    };

    Ok(ForwardTrace {
        n_vars,
        param_len: params.data.len(),
        normalized,
        encoder_cache,
        head_cache,
        net_output,
        stats,
        prediction,
    })
}

/// Gradient of `Σ grad_output ⊙ prediction` with respect to every parameter,
/// in flat order.
pub fn backward(
    trace: &ForwardTrace,
    grad_output: &[f64],
    params: &ModelParams,
) -> Result<Vec<f64>> {
    let spec = &params.spec;
    let data = &params.data;
    let n_vars = trace.n_vars;
    let horizon = spec.horizon;
    if trace.param_len != data.len() || n_vars != spec.n_vars {
        return Err(Error::shape(
            "trace parameters",
            data.len(),
            trace.param_len,
        ));
    }
    if grad_output.len() != n_vars * horizon || trace.prediction.len() != n_vars * horizon {
        return Err(Error::shape(
            "output gradient",
            n_vars * horizon,
            grad_output.len(),
        ));
    }

    let mut grad = vec![0.0; data.len()];

    // Through the denormalization.
    let mut delta: Vec<f64> = match (params.affine(), params.layout.affine) {
        (Some((scale, shift)), Some((gs, gb))) => {
            let mut d = Vec::with_capacity(grad_output.len());
            for n in 0..n_vars {
                let g = scale[n] + AFFINE_EPS;
                let s = trace.stats.std[n];
                for t in 0..horizon {
                    let go = grad_output[n * horizon + t];
                    let y = trace.net_output[n * horizon + t];
                    d.push(go * s / g);
                    grad[gs + n] -= go * (y - shift[n]) * s / (g * g);
                    grad[gb + n] -= go * s / g;
                }
            }
            d
        }
        _ => grad_output
            .chunks_exact(horizon)
            .enumerate()
            .flat_map(|(n, row)| row.iter().map(move |g| g * trace.stats.std[n]))
            .collect(),
    };

    // Head.
    let head_layers = &params.layout.head;
    for (j, slot) in head_layers.iter().enumerate().rev() {
        let cache = &trace.head_cache[j];
        if j + 1 < head_layers.len() {
            relu_mask(&mut delta, &cache.pre);
        }
        delta = dense_backward(data, &mut grad, slot, &cache.input, &delta, true)
            .expect("input gradient requested");
    }
    let dfeatures = delta;

    // Encoders.
    let counts = spec.scales.patch_counts(spec.lookback)?;
    let feature_width: usize = counts.iter().sum::<usize>() * spec.hidden;
    let lookback = spec.lookback;
    let need_input_grad = params.layout.affine.is_some();
    let mut dinput = need_input_grad.then(|| vec![0.0; n_vars * lookback]);
    let mut scale_offset = 0;
    for (k, layers) in params.layout.encoders.iter().enumerate() {
        let block = counts[k] * spec.hidden;
        let mut delta = Vec::with_capacity(n_vars * block);
        for n in 0..n_vars {
            let start = n * feature_width + scale_offset;
            delta.extend_from_slice(&dfeatures[start..start + block]);
        }
        scale_offset += block;
        for (j, slot) in layers.iter().enumerate().rev() {
            let cache = &trace.encoder_cache[k][j];
            relu_mask(&mut delta, &cache.pre);
            let want = j > 0 || need_input_grad;
            match dense_backward(data, &mut grad, slot, &cache.input, &delta, want) {
                Some(d) => delta = d,
                None => break,
            }
        }
        if let Some(dx) = dinput.as_mut() {
            let scale = spec.scales.scales[k];
            for n in 0..n_vars {
                for i in 0..counts[k] {
                    let src = (n * counts[k] + i) * scale.patch_len;
                    let dst = n * lookback + i * scale.stride;
                    for s in 0..scale.patch_len {
                        dx[dst + s] += delta[src + s];
                    }
                }
            }
        }
    }

    if let (Some(dx), Some((gs, gb))) = (dinput, params.layout.affine) {
        for n in 0..n_vars {
            for t in 0..lookback {
                let d = dx[n * lookback + t];
                grad[gs + n] += d * trace.normalized[n * lookback + t];
                grad[gb + n] += d;
            }
        }
    }
    Ok(grad)
}
