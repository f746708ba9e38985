//! Residual encoder-decoder generator and the two discriminators.
//!
//! Generator layout for `n` encoder blocks: a 7x7 stride-1 block followed by
//! `n - 1` stride-2 3x3 blocks (channels `f, 2f, .., 2^(n-1) f`), a trunk of
//! residual blocks, `n - 1` stride-2 transposed convolutions back to `f`
//! channels and a final 7x7 block to one channel with `tanh`. Every block is
//! convolution, instance normalization, ReLU.

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};
use crate::nn::{Conv2d, ConvTranspose2d, InstanceNorm, Linear, Padding, ParamStore};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub base_filters: usize,
    pub n_residual_blocks: usize,
    pub n_encoder_blocks: usize,
    pub n_decoder_blocks: usize,
    /// 1-based encoder block indices whose outputs carry style statistics.
    pub style_layers: Vec<usize>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_filters: 64,
            n_residual_blocks: 9,
            n_encoder_blocks: 4,
            n_decoder_blocks: 4,
            style_layers: vec![1, 2, 3],
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_filters == 0 || self.n_encoder_blocks == 0 {
            return Err(TrainError::Config("generator needs filters and encoder blocks".into()));
        }
        if self.n_decoder_blocks != self.n_encoder_blocks {
            return Err(TrainError::Config(format!(
                "decoder blocks ({}) must mirror encoder blocks ({})",
                self.n_decoder_blocks, self.n_encoder_blocks
            )));
        }
        if self.style_layers.is_empty()
            || self.style_layers.iter().any(|&l| l == 0 || l > self.n_encoder_blocks)
        {
            return Err(TrainError::Config(format!(
                "style layers {:?} must lie in 1..={}",
                self.style_layers, self.n_encoder_blocks
            )));
        }
        Ok(())
    }

    /// Spatial sizes must be divisible by this factor.
    pub fn size_multiple(&self) -> usize {
        1 << (self.n_encoder_blocks - 1)
    }

    pub fn encoder_channels(&self, block: usize) -> usize {
        self.base_filters << (block - 1)
    }

    /// `(channels, height, width)` of each style layer for an input size.
    pub fn style_shapes(&self, size: (usize, usize)) -> Vec<(usize, usize, usize)> {
        self.style_layers
            .iter()
            .map(|&l| {
                let down = 1 << (l - 1);
                (self.encoder_channels(l), size.0 / down, size.1 / down)
            })
            .collect()
    }

    /// Parameter count implied by the configuration.
    pub fn parameter_count(&self) -> usize {
        let f = self.base_filters;
        let conv = |cin: usize, cout: usize, k: usize| cin * cout * k * k + cout;
        let norm = |c: usize| 2 * c;
        let mut total = conv(1, f, 7) + norm(f);
        for b in 2..=self.n_encoder_blocks {
            let (cin, cout) = (self.encoder_channels(b - 1), self.encoder_channels(b));
            total += conv(cin, cout, 3) + norm(cout);
        }
        let trunk = self.encoder_channels(self.n_encoder_blocks);
        total += self.n_residual_blocks * 2 * (conv(trunk, trunk, 3) + norm(trunk));
        for b in (2..=self.n_encoder_blocks).rev() {
            let (cin, cout) = (self.encoder_channels(b), self.encoder_channels(b - 1));
            total += conv(cin, cout, 3) + norm(cout);
        }
        total + conv(f, 1, 7)
    }
}

/// Style-layer feature maps, one `(batch, C, H, W)` tensor per layer.
#[derive(Clone, Debug)]
pub struct FeatureStack {
    pub layers: Vec<Tensor>,
}

/// Everything one generator forward pass produces.
pub struct GeneratorPass {
    pub output: Tensor,
    /// Output of every encoder block, in order.
    pub encoder: Vec<Tensor>,
    /// Output of the residual trunk (the deepest representation).
    pub trunk: Tensor,
}

#[derive(Clone)]
struct Block {
    conv: Conv2d,
    norm: InstanceNorm,
}

impl Block {
    fn forward(&self, xs: &Tensor, frozen: bool) -> Result<Tensor> {
        Ok(self.norm.forward(&self.conv.forward(xs, frozen)?, frozen)?.relu()?)
    }
}

#[derive(Clone)]
struct ResidualBlock {
    conv1: Conv2d,
    norm1: InstanceNorm,
    conv2: Conv2d,
    norm2: InstanceNorm,
}

impl ResidualBlock {
    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let h = self.norm1.forward(&self.conv1.forward(xs, false)?, false)?.relu()?;
        let h = self.norm2.forward(&self.conv2.forward(&h, false)?, false)?;
        Ok((xs + h)?)
    }
}

#[derive(Clone)]
struct UpBlock {
    deconv: ConvTranspose2d,
    norm: InstanceNorm,
}

#[derive(Clone)]
pub struct Generator {
    config: GeneratorConfig,
    store: ParamStore,
    encoder: Vec<Block>,
    trunk: Vec<ResidualBlock>,
    decoder: Vec<UpBlock>,
    head: Conv2d,
}

impl Generator {
    /// Builds a generator with weights drawn from `N(0, 0.02)` and identity
    /// normalization, deterministic in `seed`.
    pub fn new(config: GeneratorConfig, seed: u64, dtype: DType, device: &Device) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(dtype, device);
        let f = config.base_filters;

        let mut encoder = Vec::with_capacity(config.n_encoder_blocks);
        for b in 1..=config.n_encoder_blocks {
            let name = format!("enc{b}");
            let cout = config.encoder_channels(b);
            let conv = if b == 1 {
                Conv2d::new(&mut store, &name, 1, f, 7, 1, Padding::Reflect(3), &mut rng)?
            } else {
                let cin = config.encoder_channels(b - 1);
                Conv2d::new(&mut store, &name, cin, cout, 3, 2, Padding::Zero(1), &mut rng)?
            };
            let norm = InstanceNorm::new(&mut store, &format!("{name}.norm"), cout)?;
            encoder.push(Block { conv, norm });
        }

        let c = config.encoder_channels(config.n_encoder_blocks);
        let trunk = (0..config.n_residual_blocks)
            .map(|i| {
                let name = format!("res{i:02}");
                Ok(ResidualBlock {
                    conv1: Conv2d::new(&mut store, &format!("{name}.conv1"), c, c, 3, 1, Padding::Reflect(1), &mut rng)?,
                    norm1: InstanceNorm::new(&mut store, &format!("{name}.norm1"), c)?,
                    conv2: Conv2d::new(&mut store, &format!("{name}.conv2"), c, c, 3, 1, Padding::Reflect(1), &mut rng)?,
                    norm2: InstanceNorm::new(&mut store, &format!("{name}.norm2"), c)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut decoder = Vec::new();
        for (k, b) in (2..=config.n_encoder_blocks).rev().enumerate() {
            let name = format!("dec{}", k + 1);
            let (cin, cout) = (config.encoder_channels(b), config.encoder_channels(b - 1));
            decoder.push(UpBlock {
                deconv: ConvTranspose2d::new(&mut store, &name, cin, cout, 3, 2, 1, 1, &mut rng)?,
                norm: InstanceNorm::new(&mut store, &format!("{name}.norm"), cout)?,
            });
        }
        let head_name = format!("dec{}", config.n_decoder_blocks);
        let head = Conv2d::new(&mut store, &head_name, f, 1, 7, 1, Padding::Reflect(3), &mut rng)?;

        Ok(Self {
            config,
            store,
            encoder,
            trunk,
            decoder,
            head,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn check_input(&self, xs: &Tensor) -> Result<()> {
        let (_, c, h, w) = xs.dims4()?;
        let m = self.config.size_multiple();
        // The trunk needs at least 2x2 pixels for reflection padding.
        if c != 1 || h % m != 0 || w % m != 0 || h < 2 * m || w < 2 * m {
            return Err(TrainError::Shape(format!(
                "generator input must be (batch, 1, H, W) with H, W multiples of {m} and at least {}; got {:?}",
                2 * m,
                xs.dims()
            )));
        }
        Ok(())
    }

    /// Runs the first `depth` encoder blocks.
    fn encode(&self, xs: &Tensor, depth: usize) -> Result<Vec<Tensor>> {
        self.check_input(xs)?;
        let mut outs = Vec::with_capacity(depth);
        let mut h = xs.clone();
        for block in &self.encoder[..depth] {
            h = block.forward(&h, false)?;
            outs.push(h.clone());
        }
        Ok(outs)
    }

    fn trunk_of(&self, deepest: &Tensor) -> Result<Tensor> {
        let mut h = deepest.clone();
        for block in &self.trunk {
            h = block.forward(&h)?;
        }
        Ok(h)
    }

    fn decode(&self, trunk: &Tensor) -> Result<Tensor> {
        let mut h = trunk.clone();
        for up in &self.decoder {
            h = up.norm.forward(&up.deconv.forward(&h)?, false)?.relu()?;
        }
        Ok(self.head.forward(&h, false)?.tanh()?)
    }

    pub fn forward_full(&self, xs: &Tensor) -> Result<GeneratorPass> {
        let encoder = self.encode(xs, self.config.n_encoder_blocks)?;
        let trunk = self.trunk_of(encoder.last().expect("at least one block"))?;
        let output = self.decode(&trunk)?;
        Ok(GeneratorPass { output, encoder, trunk })
    }

    /// Translates a normalized batch; output has the input's shape and lies
    /// in `[-1, 1]`.
    pub fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        Ok(self.forward_full(xs)?.output)
    }

    /// Style-layer outputs only (runs the encoder as deep as needed).
    pub fn encoder_features(&self, xs: &Tensor) -> Result<FeatureStack> {
        let depth = *self.config.style_layers.iter().max().expect("validated non-empty");
        let outs = self.encode(xs, depth)?;
        Ok(self.select_style(&outs))
    }

    pub fn select_style(&self, encoder_outputs: &[Tensor]) -> FeatureStack {
        FeatureStack {
            layers: self
                .config
                .style_layers
                .iter()
                .map(|&l| encoder_outputs[l - 1].clone())
                .collect(),
        }
    }

    /// Encoder outputs and residual trunk output without decoding.
    pub fn content_features(&self, xs: &Tensor) -> Result<(Vec<Tensor>, Tensor)> {
        let encoder = self.encode(xs, self.config.n_encoder_blocks)?;
        let trunk = self.trunk_of(encoder.last().expect("at least one block"))?;
        Ok((encoder, trunk))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub base_filters: usize,
    pub n_blocks: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            base_filters: 64,
            n_blocks: 4,
        }
    }
}

/// Strided convolution blocks followed by a fully connected layer to one
/// logit. The input size is fixed at construction.
#[derive(Clone)]
pub struct Discriminator {
    store: ParamStore,
    blocks: Vec<Block>,
    head: Linear,
    input_size: (usize, usize),
}

impl Discriminator {
    pub fn new(
        config: &DiscriminatorConfig,
        input_size: (usize, usize),
        seed: u64,
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        let down = 1usize << config.n_blocks;
        if config.base_filters == 0 || config.n_blocks == 0 {
            return Err(TrainError::Config("discriminator needs filters and blocks".into()));
        }
        if !input_size.0.is_multiple_of(down) || !input_size.1.is_multiple_of(down) {
            return Err(TrainError::Shape(format!(
                "discriminator input {input_size:?} must be divisible by {down}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new(dtype, device);
        let mut blocks = Vec::with_capacity(config.n_blocks);
        let mut cin = 1;
        for b in 0..config.n_blocks {
            let cout = config.base_filters << b;
            let name = format!("block{}", b + 1);
            let conv = Conv2d::new(&mut store, &name, cin, cout, 4, 2, Padding::Zero(1), &mut rng)?;
            let norm = InstanceNorm::new(&mut store, &format!("{name}.norm"), cout)?;
            blocks.push(Block { conv, norm });
            cin = cout;
        }
        let flat = cin * (input_size.0 / down) * (input_size.1 / down);
        let head = Linear::new(&mut store, "fc", flat, 1, &mut rng)?;
        Ok(Self {
            store,
            blocks,
            head,
            input_size,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn input_size(&self) -> (usize, usize) {
        self.input_size
    }

    /// Raw logits of shape `(batch,)`. With `frozen` set, gradients flow to
    /// the input but not to the discriminator's own weights.
    pub fn logits(&self, xs: &Tensor, frozen: bool) -> Result<Tensor> {
        let (_, c, h, w) = xs.dims4()?;
        if c != 1 || (h, w) != self.input_size {
            return Err(TrainError::Shape(format!(
                "discriminator was built for (batch, 1, {}, {}), got {:?}",
                self.input_size.0,
                self.input_size.1,
                xs.dims()
            )));
        }
        let mut h = xs.clone();
        for block in &self.blocks {
            h = block.forward(&h, frozen)?;
        }
        let flat = h.flatten_from(1)?;
        Ok(self.head.forward(&flat, frozen)?.squeeze(1)?)
    }

    /// Probabilities in `(0, 1)`.
    pub fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        Ok(sigmoid(&self.logits(xs, false)?)?)
    }
}

pub fn sigmoid(xs: &Tensor) -> candle_core::Result<Tensor> {
    (xs.neg()?.exp()? + 1.0)?.recip()
}
