//! Parameter storage and the handful of layers the networks need, built
//! directly on candle tensors so initialization is seeded and reproducible.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, TrainError};

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.02;
pub const NORM_EPS: f64 = 1e-5;

/// Named learnable tensors in insertion-independent (sorted) order.
#[derive(Clone)]
pub struct ParamStore {
    vars: BTreeMap<String, Var>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(dtype: DType, device: &Device) -> Self {
        Self {
            vars: BTreeMap::new(),
            dtype,
            device: device.clone(),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn insert(&mut self, name: String, values: Vec<f64>, shape: &[usize]) -> Result<Var> {
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        if self.vars.insert(name.clone(), var.clone()).is_some() {
            return Err(TrainError::Config(format!("duplicate parameter `{name}`")));
        }
        Ok(var)
    }

    pub fn gaussian(&mut self, name: String, shape: &[usize], rng: &mut ChaCha8Rng) -> Result<Var> {
        let n: usize = shape.iter().product();
        let normal = Normal::new(0.0, INIT_STD).expect("positive std");
        let values = (0..n).map(|_| normal.sample(rng)).collect();
        self.insert(name, values, shape)
    }

    pub fn constant(&mut self, name: String, shape: &[usize], value: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        self.insert(name, vec![value; n], shape)
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    pub fn tensors(&self, prefix: &str) -> HashMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, v)| (format!("{prefix}{k}"), v.as_tensor().clone()))
            .collect()
    }

    /// Overwrites every parameter from `tensors[prefix + name]`.
    pub fn load_from(&self, tensors: &HashMap<String, Tensor>, prefix: &str) -> Result<()> {
        for (name, var) in &self.vars {
            let key = format!("{prefix}{name}");
            let t = tensors
                .get(&key)
                .ok_or_else(|| TrainError::Checkpoint(format!("missing tensor `{key}`")))?;
            if t.dims() != var.dims() {
                return Err(TrainError::Checkpoint(format!(
                    "tensor `{key}` has shape {:?}, model expects {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        candle_core::safetensors::save(&self.tensors(""), path)?;
        Ok(())
    }

    pub fn load(&self, path: &Path) -> Result<()> {
        let tensors = candle_core::safetensors::load(path, &self.device)?;
        self.load_from(&tensors, "")
    }
}

/// Mirror padding that excludes the edge pixel (`c b | a b c d | c b`).
pub fn reflect_pad2d(xs: &Tensor, pad: usize) -> Result<Tensor> {
    if pad == 0 {
        return Ok(xs.clone());
    }
    let (_, _, h, w) = xs.dims4()?;
    if pad >= h || pad >= w {
        return Err(TrainError::Shape(format!(
            "reflection pad {pad} needs spatial size above {pad}, got {h}x{w}"
        )));
    }
    let left = xs.narrow(3, 1, pad)?.contiguous()?.flip(&[3])?;
    let right = xs.narrow(3, w - pad - 1, pad)?.contiguous()?.flip(&[3])?;
    let xs = Tensor::cat(&[&left, xs, &right], 3)?;
    let top = xs.narrow(2, 1, pad)?.contiguous()?.flip(&[2])?;
    let bottom = xs.narrow(2, h - pad - 1, pad)?.contiguous()?.flip(&[2])?;
    Ok(Tensor::cat(&[&top, &xs, &bottom], 2)?)
}

/// Zero-padded 2-D convolution.
///
/// Works around two candle 0.9 CPU quirks. The tiled kernel mistakes an
/// NCHW-contiguous input for its channels-last layout when
/// `channels == height == width`, and the backward pass derives the output
/// padding of the width from the height. Inputs are therefore extended with
/// trailing zero rows and columns until both spans divide the stride (and the
/// coincidence is broken); the surplus outputs are cut off.
pub fn conv2d(xs: &Tensor, kernel: &Tensor, padding: usize, stride: usize) -> Result<Tensor> {
    let (_, c, h, w) = xs.dims4()?;
    let (_, _, kh, kw) = kernel.dims4()?;
    if h + 2 * padding < kh || w + 2 * padding < kw {
        return Err(TrainError::Shape(format!("kernel {kh}x{kw} larger than padded {h}x{w} input")));
    }
    let span_h = h + 2 * padding - kh;
    let span_w = w + 2 * padding - kw;
    let mut extra_h = (stride - span_h % stride) % stride;
    let mut extra_w = (stride - span_w % stride) % stride;
    if c == h + extra_h && c == w + extra_w {
        extra_h += stride;
        extra_w += stride;
    }
    if extra_h == 0 && extra_w == 0 {
        return Ok(xs.conv2d(kernel, padding, stride, 1, 1)?);
    }
    let widened = xs.pad_with_zeros(2, 0, extra_h)?.pad_with_zeros(3, 0, extra_w)?;
    Ok(widened
        .conv2d(kernel, padding, stride, 1, 1)?
        .narrow(2, 0, span_h / stride + 1)?
        .narrow(3, 0, span_w / stride + 1)?)
}

/// Inserts `stride - 1` zeros between neighbouring pixels along `dim`.
fn dilate(xs: &Tensor, dim: usize, stride: usize) -> Result<Tensor> {
    if stride == 1 {
        return Ok(xs.clone());
    }
    let n = xs.dims()[dim];
    let spread = xs.unsqueeze(dim + 1)?.pad_with_zeros(dim + 1, 0, stride - 1)?;
    let mut shape = xs.dims().to_vec();
    shape[dim] = n * stride;
    Ok(spread.reshape(shape)?.narrow(dim, 0, (n - 1) * stride + 1)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    Zero(usize),
    Reflect(usize),
}

/// 2-D convolution with bias.
#[derive(Clone)]
pub struct Conv2d {
    weight: Var,
    bias: Var,
    stride: usize,
    padding: Padding,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.gaussian(format!("{name}.weight"), &[c_out, c_in, kernel, kernel], rng)?,
            bias: store.constant(format!("{name}.bias"), &[c_out], 0.0)?,
            stride,
            padding,
        })
    }

    pub fn forward(&self, xs: &Tensor, frozen: bool) -> Result<Tensor> {
        let (w, b) = params(&self.weight, &self.bias, frozen);
        let (xs, pad) = match self.padding {
            Padding::Zero(p) => (xs.clone(), p),
            Padding::Reflect(p) => (reflect_pad2d(xs, p)?, 0),
        };
        let ys = conv2d(&xs, &w, pad, self.stride)?;
        Ok(ys.broadcast_add(&b.reshape((1, (), 1, 1))?)?)
    }
}

/// Transposed 2-D convolution with bias.
#[derive(Clone)]
pub struct ConvTranspose2d {
    weight: Var,
    bias: Var,
    stride: usize,
    padding: usize,
    output_padding: usize,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(Self {
            weight: store.gaussian(format!("{name}.weight"), &[c_in, c_out, kernel, kernel], rng)?,
            bias: store.constant(format!("{name}.bias"), &[c_out], 0.0)?,
            stride,
            padding,
            output_padding,
        })
    }

    /// Computed as a stride-1 convolution of the zero-dilated input with the
    /// flipped, channel-swapped kernel.
    pub fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let w = self.weight.as_tensor();
        let (_, _, k, _) = w.dims4()?;
        if self.padding >= k {
            return Err(TrainError::Shape(format!("padding {} must be below kernel size {k}", self.padding)));
        }
        let kernel = w.transpose(0, 1)?.contiguous()?.flip(&[2, 3])?;
        let lead = k - 1 - self.padding;
        let xs = dilate(&dilate(xs, 2, self.stride)?, 3, self.stride)?;
        let xs = xs
            .pad_with_zeros(2, lead, lead + self.output_padding)?
            .pad_with_zeros(3, lead, lead + self.output_padding)?;
        let ys = conv2d(&xs, &kernel, 0, 1)?;
        Ok(ys.broadcast_add(&self.bias.as_tensor().reshape((1, (), 1, 1))?)?)
    }
}

/// Per-sample, per-channel standardization with an affine map initialised
/// to identity. No running statistics are kept, so training and inference
/// behave identically.
#[derive(Clone)]
pub struct InstanceNorm {
    gamma: Var,
    beta: Var,
}

impl InstanceNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.constant(format!("{name}.gamma"), &[channels], 1.0)?,
            beta: store.constant(format!("{name}.beta"), &[channels], 0.0)?,
        })
    }

    pub fn forward(&self, xs: &Tensor, frozen: bool) -> Result<Tensor> {
        let (g, b) = params(&self.gamma, &self.beta, frozen);
        let (n, c, h, w) = xs.dims4()?;
        let flat = xs.reshape((n, c, h * w))?;
        let mean = flat.mean_keepdim(D::Minus1)?;
        let centered = flat.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?;
        let normed = normed.reshape((n, c, h, w))?;
        Ok(normed
            .broadcast_mul(&g.reshape((1, (), 1, 1))?)?
            .broadcast_add(&b.reshape((1, (), 1, 1))?)?)
    }
}

#[derive(Clone)]
pub struct Linear {
    weight: Var,
    bias: Var,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            weight: store.gaussian(format!("{name}.weight"), &[d_out, d_in], rng)?,
            bias: store.constant(format!("{name}.bias"), &[d_out], 0.0)?,
        })
    }

    pub fn forward(&self, xs: &Tensor, frozen: bool) -> Result<Tensor> {
        let (w, b) = params(&self.weight, &self.bias, frozen);
        Ok(xs.matmul(&w.t()?)?.broadcast_add(&b)?)
    }

    pub fn in_features(&self) -> usize {
        self.weight.dims()[1]
    }
}

/// Frozen layers read detached copies so no gradient reaches their weights.
fn params(a: &Var, b: &Var, frozen: bool) -> (Tensor, Tensor) {
    if frozen {
        (a.as_tensor().detach(), b.as_tensor().detach())
    } else {
        (a.as_tensor().clone(), b.as_tensor().clone())
    }
}

/// Uniform `u64` stream for deriving child seeds.
pub fn child_seed(rng: &mut ChaCha8Rng) -> u64 {
    rng.random()
}
