//! The optimization loop: per step, one update of each discriminator on
//! real images versus pooled translations, then one generator update.

use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use ushar_core::{build_named_dataset, denormalize, normalize_intensity, DomainDataset, Image};

use crate::checkpoint::{self, CheckpointMeta, Snapshot, FORMAT_VERSION};
use crate::config::TrainingConfig;
use crate::error::{Result, TrainError};
use crate::losses::{
    adversarial_loss_logits, content_loss, generator_adversarial_loss, style_distance, total_objective,
    ContentLayer, LossTerms,
};
use crate::model::{Discriminator, FeatureStack, Generator};
use crate::nn::ParamStore;
use crate::optim::Adam;
use crate::pool::ReplayPool;
use crate::schedule::lr_at_epoch;

pub const LOSS_CSV: &str = "loss.csv";
pub const EPOCH_CSV: &str = "epochs.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Source images kept aside to watch for collapsed generator outputs.
const PROBE_IMAGES: usize = 8;
/// Output spread below this fraction of input spread fires the sentinel.
const COLLAPSE_RATIO: f64 = 0.1;

/// One row of the loss curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: u64,
    #[serde(rename = "L_an")]
    pub l_an: f64,
    #[serde(rename = "L_ac")]
    pub l_ac: f64,
    #[serde(rename = "L_c")]
    pub l_c: f64,
    #[serde(rename = "L_n")]
    pub l_n: f64,
    pub total: f64,
    pub lr: f64,
}

/// Everything one step measured.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub terms: LossTerms,
    pub total: f64,
    pub generator_loss: f64,
    pub d_noise_accuracy: f64,
    pub d_content_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochSummary {
    pub epoch: usize,
    pub lr: f64,
    #[serde(rename = "L_an")]
    pub l_an: f64,
    #[serde(rename = "L_ac")]
    pub l_ac: f64,
    #[serde(rename = "L_c")]
    pub l_c: f64,
    #[serde(rename = "L_n")]
    pub l_n: f64,
    pub total: f64,
    pub d_noise_accuracy: f64,
    pub d_content_accuracy: f64,
    /// Mean pairwise output difference over mean pairwise input difference
    /// on the probe images.
    pub output_spread: f64,
    pub collapse: bool,
}

impl EpochSummary {
    pub fn d_accuracy(&self) -> f64 {
        (self.d_noise_accuracy + self.d_content_accuracy) / 2.0
    }
}

pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub epochs: Vec<EpochSummary>,
}

/// Models, optimizers, pools and the random stream of one training run.
pub struct Trainer {
    config: TrainingConfig,
    generator: Generator,
    d_noise: Discriminator,
    d_content: Discriminator,
    opt_g: Adam,
    opt_dn: Adam,
    opt_dc: Adam,
    pool_noise: ReplayPool,
    pool_content: ReplayPool,
    rng: ChaCha8Rng,
    epochs_completed: usize,
    steps_completed: u64,
}

fn accuracy(real_logits: &Tensor, fake_logits: &Tensor) -> Result<f64> {
    let real: Vec<f32> = real_logits.to_dtype(DType::F32)?.to_vec1()?;
    let fake: Vec<f32> = fake_logits.to_dtype(DType::F32)?.to_vec1()?;
    let hits = real.iter().filter(|&&v| v > 0.0).count() + fake.iter().filter(|&&v| v < 0.0).count();
    Ok(hits as f64 / (real.len() + fake.len()) as f64)
}

fn detach_stack(s: &FeatureStack) -> FeatureStack {
    FeatureStack {
        layers: s.layers.iter().map(Tensor::detach).collect(),
    }
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn finite(component: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(TrainError::NonFinite { component, value })
    }
}

/// `(1, 1, H, W)` tensor of a stored image in the `[-1, 1]` working range.
pub fn image_tensor(img: &Image, dtype: DType, device: &Device) -> Result<Tensor> {
    let norm = normalize_intensity(img)?;
    let arr = norm.as_normalized()?;
    let (h, w) = arr.dim();
    let data: Vec<f32> = arr.iter().copied().collect();
    Ok(Tensor::from_vec(data, (1, 1, h, w), device)?.to_dtype(dtype)?)
}

/// Inverse of [`image_tensor`] for one `(1, 1, H, W)` tensor.
pub fn tensor_image(t: &Tensor) -> Result<Image> {
    let (_, _, h, w) = t.dims4()?;
    let data: Vec<f32> = t.to_dtype(DType::F32)?.flatten_all()?.to_vec1()?;
    let arr = ndarray::Array2::from_shape_vec((h, w), data)
        .map_err(|e| TrainError::Shape(e.to_string()))?;
    Ok(denormalize(&Image::normalized(arr)?)?)
}

fn load_tensors(ds: &DomainDataset, size: usize, device: &Device) -> Result<Vec<Tensor>> {
    if ds.is_empty() {
        return Err(ushar_core::Error::EmptyDataset(ds.manifest_path.clone()).into());
    }
    if ds.dims != (size, size) {
        return Err(TrainError::Shape(format!(
            "dataset `{}` holds {}x{} images but the model is configured for {size}x{size}",
            ds.name, ds.dims.0, ds.dims.1
        )));
    }
    (0..ds.len())
        .map(|i| image_tensor(&ds.load(i)?, DType::F32, device))
        .collect()
}

fn deep_copy(params: &ParamStore, prefix: &str) -> Result<Vec<(String, Tensor)>> {
    params
        .tensors(prefix)
        .into_iter()
        .map(|(k, t)| Ok((k, t.copy()?)))
        .collect()
}

impl Trainer {
    /// Fresh models and optimizer state derived from `config.seed`.
    pub fn new(config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let device = Device::Cpu;
        let mut master = ChaCha8Rng::seed_from_u64(config.seed);
        let g_seed: u64 = master.random();
        let dn_seed: u64 = master.random();
        let dc_seed: u64 = master.random();
        let loop_seed: u64 = master.random();
        let size = (config.image_size, config.image_size);
        let generator = Generator::new(config.generator.clone(), g_seed, DType::F32, &device)?;
        let d_noise = Discriminator::new(&config.discriminator, size, dn_seed, DType::F32, &device)?;
        let d_content = Discriminator::new(&config.discriminator, size, dc_seed, DType::F32, &device)?;
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        Ok(Self {
            opt_g: Adam::new(generator.params(), b1, b2)?,
            opt_dn: Adam::new(d_noise.params(), b1, b2)?,
            opt_dc: Adam::new(d_content.params(), b1, b2)?,
            pool_noise: ReplayPool::new(config.pool_size),
            pool_content: ReplayPool::new(config.pool_size),
            rng: ChaCha8Rng::seed_from_u64(loop_seed),
            generator,
            d_noise,
            d_content,
            config,
            epochs_completed: 0,
            steps_completed: 0,
        })
    }

    /// Restores the exact state stored in a checkpoint directory.
    pub fn from_checkpoint(dir: &Path) -> Result<Self> {
        let snap = checkpoint::read_checkpoint(dir, &Device::Cpu)?;
        let meta = snap.meta;
        let mut t = Self::new(meta.config.clone())?;
        let tensors = &snap.tensors;
        t.generator.params().load_from(tensors, "gen.")?;
        t.d_noise.params().load_from(tensors, "dn.")?;
        t.d_content.params().load_from(tensors, "dc.")?;
        t.opt_g.restore(tensors, "opt_g.", meta.adam_steps[0])?;
        t.opt_dn.restore(tensors, "opt_dn.", meta.adam_steps[1])?;
        t.opt_dc.restore(tensors, "opt_dc.", meta.adam_steps[2])?;
        t.pool_noise.restore(tensors, "pool_n.", meta.pool_lens[0], &Device::Cpu)?;
        t.pool_content.restore(tensors, "pool_c.", meta.pool_lens[1], &Device::Cpu)?;
        t.rng = meta.rng;
        t.epochs_completed = meta.epochs_completed;
        t.steps_completed = meta.steps_completed;
        Ok(t)
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn discriminators(&self) -> (&Discriminator, &Discriminator) {
        (&self.d_noise, &self.d_content)
    }

    pub fn epochs_completed(&self) -> usize {
        self.epochs_completed
    }

    pub fn steps_completed(&self) -> u64 {
        self.steps_completed
    }

    /// Self-owned copy of the complete state.
    pub fn snapshot(&self) -> Result<Snapshot> {
        let mut tensors = std::collections::HashMap::new();
        tensors.extend(deep_copy(self.generator.params(), "gen.")?);
        tensors.extend(deep_copy(self.d_noise.params(), "dn.")?);
        tensors.extend(deep_copy(self.d_content.params(), "dc.")?);
        tensors.extend(self.opt_g.tensors("opt_g."));
        tensors.extend(self.opt_dn.tensors("opt_dn."));
        tensors.extend(self.opt_dc.tensors("opt_dc."));
        tensors.extend(self.pool_noise.tensors("pool_n."));
        tensors.extend(self.pool_content.tensors("pool_c."));
        Ok(Snapshot {
            tensors,
            meta: CheckpointMeta {
                format_version: FORMAT_VERSION,
                epochs_completed: self.epochs_completed,
                steps_completed: self.steps_completed,
                config: self.config.clone(),
                rng: self.rng.clone(),
                adam_steps: [self.opt_g.step_count(), self.opt_dn.step_count(), self.opt_dc.step_count()],
                pool_lens: [self.pool_noise.len(), self.pool_content.len()],
            },
        })
    }

    fn discriminator_update(
        d: &Discriminator,
        opt: &mut Adam,
        real: &Tensor,
        fake: &Tensor,
        lr: f64,
        component: &'static str,
    ) -> Result<(f64, f64)> {
        let real_logits = d.logits(real, false)?;
        let fake_logits = d.logits(fake, false)?;
        let objective = adversarial_loss_logits(&real_logits, &fake_logits)?;
        let value = finite(component, scalar(&objective)?)?;
        let acc = accuracy(&real_logits, &fake_logits)?;
        // The discriminator ascends its objective.
        let grads = objective.neg()?.backward()?;
        opt.step(d.params(), &grads, lr)?;
        Ok((value, acc))
    }

    /// One discriminator update each, then one generator update, on source
    /// batch `x` and target batch `y` (both `(n, 1, H, W)` in `[-1, 1]`).
    pub fn train_step(&mut self, x: &Tensor, y: &Tensor, lr: f64) -> Result<StepOutcome> {
        let w = self.config.weights;
        let pass = self.generator.forward_full(x)?;
        let fake = &pass.output;

        let pooled = self.pool_noise.query(fake, &mut self.rng)?;
        let (l_an, dn_acc) = Self::discriminator_update(&self.d_noise, &mut self.opt_dn, y, &pooled, lr, "L_an")?;
        let pooled = self.pool_content.query(fake, &mut self.rng)?;
        let (l_ac, dc_acc) =
            Self::discriminator_update(&self.d_content, &mut self.opt_dc, x, &pooled, lr, "L_ac")?;

        let adv_n = generator_adversarial_loss(&self.d_noise.logits(fake, true)?)?;
        let adv_c = generator_adversarial_loss(&self.d_content.logits(fake, true)?)?;
        let mut objective = (&adv_n + &adv_c)?;
        finite("generator adversarial term", scalar(&objective)?)?;

        // Zero-weight terms are still measured for the loss curve, but on
        // detached tensors so they contribute nothing to the update.
        let (fake_encoder, fake_trunk) = self.generator.content_features(fake)?;
        let content = match self.config.content_layer {
            ContentLayer::Trunk => (fake_trunk, pass.trunk.clone()),
            ContentLayer::Pixel => (fake.clone(), x.clone()),
        };
        let fake_style = self.generator.select_style(&fake_encoder);
        let real_style = self.generator.encoder_features(y)?;

        let l_c = if w.lambda1 != 0.0 {
            let term = content_loss(&content.0, &content.1)?;
            let v = finite("L_c", scalar(&term)?)?;
            objective = (objective + (term * w.lambda1)?)?;
            v
        } else {
            scalar(&content_loss(&content.0.detach(), &content.1.detach())?)?
        };
        let l_n = if w.lambda2 != 0.0 {
            let term = style_distance(&fake_style, &real_style)?;
            let v = finite("L_n", scalar(&term)?)?;
            objective = (objective + (term * w.lambda2)?)?;
            v
        } else {
            scalar(&style_distance(&detach_stack(&fake_style), &detach_stack(&real_style))?)?
        };
        let generator_loss = finite("generator objective", scalar(&objective)?)?;
        let grads = objective.backward()?;
        self.opt_g.step(self.generator.params(), &grads, lr)?;

        let terms = LossTerms { l_an, l_ac, l_c, l_n };
        self.steps_completed += 1;
        Ok(StepOutcome {
            total: total_objective(&terms, &w)?,
            terms,
            generator_loss,
            d_noise_accuracy: dn_acc,
            d_content_accuracy: dc_acc,
        })
    }

    fn probe_spread(&self, probes: &[Tensor]) -> Result<f64> {
        if probes.len() < 2 {
            return Ok(1.0);
        }
        let outputs: Vec<Tensor> = probes.iter().map(|p| self.generator.forward(p)).collect::<Result<_>>()?;
        let mean_pairwise = |ts: &[Tensor]| -> Result<f64> {
            let mut sum = 0.0;
            let mut n = 0;
            for i in 0..ts.len() {
                for j in i + 1..ts.len() {
                    sum += scalar(&(&ts[i] - &ts[j])?.abs()?.mean_all()?)?;
                    n += 1;
                }
            }
            Ok(sum / n as f64)
        };
        let input = mean_pairwise(probes)?;
        let output = mean_pairwise(&outputs)?;
        Ok(if input > 0.0 { output / input } else { 1.0 })
    }

    /// Runs the remaining epochs, appending to the loss curves in `out_dir`
    /// and writing checkpoints under `out_dir/checkpoints`.
    pub fn run(&mut self, source: &DomainDataset, target: &DomainDataset, out_dir: &Path) -> Result<TrainOutcome> {
        let cfg = self.config.clone();
        let device = Device::Cpu;
        let xs = load_tensors(source, cfg.image_size, &device)?;
        let ys = load_tensors(target, cfg.image_size, &device)?;
        let steps = xs.len().min(ys.len()) / cfg.batch_size;
        if steps == 0 {
            return Err(TrainError::Config(format!(
                "batch size {} exceeds the smaller domain ({} images)",
                cfg.batch_size,
                xs.len().min(ys.len())
            )));
        }
        let probes: Vec<Tensor> = xs.iter().take(PROBE_IMAGES).cloned().collect();

        fs::create_dir_all(out_dir)?;
        let ckpt_root = out_dir.join(CHECKPOINT_DIR);
        let mut losses = open_csv::<StepRecord>(&out_dir.join(LOSS_CSV), self.epochs_completed)?;
        let mut epochs_csv = open_csv::<EpochSummary>(&out_dir.join(EPOCH_CSV), self.epochs_completed)?;

        let mut last_good = self.snapshot()?;
        let mut last_written: Option<PathBuf> = None;
        let mut last_written_epoch: Option<usize> = None;
        let mut summaries = Vec::new();
        while self.epochs_completed < cfg.epochs {
            let epoch = self.epochs_completed;
            let lr = lr_at_epoch(cfg.lr_initial, cfg.lr_constant_epochs, cfg.epochs, epoch)?;
            let mut order_s: Vec<usize> = (0..xs.len()).collect();
            let mut order_t: Vec<usize> = (0..ys.len()).collect();
            order_s.shuffle(&mut self.rng);
            order_t.shuffle(&mut self.rng);

            let mut sum = [0.0f64; 7];
            for s in 0..steps {
                let batch = |data: &[Tensor], order: &[usize]| -> Result<Tensor> {
                    let picked: Vec<&Tensor> = order[s * cfg.batch_size..(s + 1) * cfg.batch_size]
                        .iter()
                        .map(|&i| &data[i])
                        .collect();
                    Ok(Tensor::cat(&picked, 0)?)
                };
                let x = batch(&xs, &order_s)?;
                let y = batch(&ys, &order_t)?;
                let out = match self.train_step(&x, &y, lr) {
                    Ok(out) => out,
                    Err(e) => {
                        let good = last_good.meta.epochs_completed;
                        if last_written_epoch != Some(good) {
                            let dir = ckpt_root.join(checkpoint::checkpoint_name(good));
                            checkpoint::write_checkpoint(&dir, &last_good)?;
                        }
                        losses.flush()?;
                        return Err(e);
                    }
                };
                let t = out.terms;
                losses.serialize(StepRecord {
                    epoch,
                    step: self.steps_completed - 1,
                    l_an: t.l_an,
                    l_ac: t.l_ac,
                    l_c: t.l_c,
                    l_n: t.l_n,
                    total: out.total,
                    lr,
                })?;
                for (acc, v) in sum.iter_mut().zip([
                    t.l_an,
                    t.l_ac,
                    t.l_c,
                    t.l_n,
                    out.total,
                    out.d_noise_accuracy,
                    out.d_content_accuracy,
                ]) {
                    *acc += v;
                }
            }
            losses.flush()?;
            self.epochs_completed += 1;

            let n = steps as f64;
            let spread = self.probe_spread(&probes)?;
            let summary = EpochSummary {
                epoch,
                lr,
                l_an: sum[0] / n,
                l_ac: sum[1] / n,
                l_c: sum[2] / n,
                l_n: sum[3] / n,
                total: sum[4] / n,
                d_noise_accuracy: sum[5] / n,
                d_content_accuracy: sum[6] / n,
                output_spread: spread,
                collapse: spread < COLLAPSE_RATIO,
            };
            log::info!(
                "epoch {}/{}: total {:.4}, L_c {:.4}, L_n {:.4}, D acc {:.3}/{:.3}{}",
                epoch + 1,
                cfg.epochs,
                summary.total,
                summary.l_c,
                summary.l_n,
                summary.d_noise_accuracy,
                summary.d_content_accuracy,
                if summary.collapse { ", collapse sentinel fired" } else { "" }
            );
            epochs_csv.serialize(&summary)?;
            epochs_csv.flush()?;
            summaries.push(summary);

            last_good = self.snapshot()?;
            let done = self.epochs_completed;
            if done.is_multiple_of(cfg.checkpoint_every) || done == cfg.epochs {
                let dir = ckpt_root.join(checkpoint::checkpoint_name(done));
                last_written = Some(checkpoint::write_checkpoint(&dir, &last_good)?);
                last_written_epoch = Some(done);
            }
        }
        let checkpoint = match last_written {
            Some(p) => p,
            None => checkpoint::write_checkpoint(
                &ckpt_root.join(checkpoint::checkpoint_name(self.epochs_completed)),
                &last_good,
            )?,
        };
        Ok(TrainOutcome {
            checkpoint,
            epochs: summaries,
        })
    }
}

/// Opens a CSV for appending rows of epochs `>= from_epoch`, dropping any
/// rows a previous run wrote past that point.
fn open_csv<T>(path: &Path, from_epoch: usize) -> Result<csv::Writer<File>>
where
    T: Serialize + for<'de> Deserialize<'de> + HasEpoch,
{
    let mut keep: Vec<T> = Vec::new();
    if from_epoch > 0 && path.is_file() {
        let mut reader = csv::Reader::from_path(path)?;
        for row in reader.deserialize::<T>() {
            let row = row?;
            if row.epoch() < from_epoch {
                keep.push(row);
            }
        }
    }
    let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    writer.write_record(T::header())?;
    for row in keep {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(writer)
}

trait HasEpoch {
    fn epoch(&self) -> usize;
    fn header() -> &'static [&'static str];
}

impl HasEpoch for StepRecord {
    fn epoch(&self) -> usize {
        self.epoch
    }
    fn header() -> &'static [&'static str] {
        &["epoch", "step", "L_an", "L_ac", "L_c", "L_n", "total", "lr"]
    }
}

impl HasEpoch for EpochSummary {
    fn epoch(&self) -> usize {
        self.epoch
    }
    fn header() -> &'static [&'static str] {
        &[
            "epoch",
            "lr",
            "L_an",
            "L_ac",
            "L_c",
            "L_n",
            "total",
            "d_noise_accuracy",
            "d_content_accuracy",
            "output_spread",
            "collapse",
        ]
    }
}

/// Trains from scratch. Returns the final checkpoint directory.
pub fn train(
    config: TrainingConfig,
    source: &DomainDataset,
    target: &DomainDataset,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config)?;
    trainer.run(source, target, out_dir)
}

/// Continues a run from a checkpoint up to its configured epoch count.
pub fn resume(
    checkpoint_dir: &Path,
    source: &DomainDataset,
    target: &DomainDataset,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::from_checkpoint(checkpoint_dir)?;
    trainer.run(source, target, out_dir)
}

/// Generator and config stored in a checkpoint.
pub fn load_generator(checkpoint_dir: &Path) -> Result<(Generator, TrainingConfig)> {
    let snap = checkpoint::read_checkpoint(checkpoint_dir, &Device::Cpu)?;
    let cfg = snap.meta.config;
    let g = Generator::new(cfg.generator.clone(), 0, DType::F32, &Device::Cpu)?;
    g.params().load_from(&snap.tensors, "gen.")?;
    Ok((g, cfg))
}

pub fn translate_image(g: &Generator, img: &Image) -> Result<Image> {
    let x = image_tensor(img, DType::F32, &Device::Cpu)?;
    tensor_image(&g.forward(&x)?)
}

/// Translates every image of `images` with the generator in `checkpoint_dir`,
/// writing `{stem}_{suffix}.png` files to `out_dir`.
pub fn translate_batch(
    checkpoint_dir: &Path,
    images: &DomainDataset,
    out_dir: &Path,
    suffix: &str,
) -> Result<DomainDataset> {
    let (g, cfg) = load_generator(checkpoint_dir)?;
    let size = cfg.image_size;
    if images.dims != (size, size) {
        return Err(TrainError::Shape(format!(
            "checkpoint expects {size}x{size} images, `{}` holds {}x{}",
            images.name, images.dims.0, images.dims.1
        )));
    }
    fs::create_dir_all(out_dir)?;
    for (i, stem) in images.stems().iter().enumerate() {
        let out = translate_image(&g, &images.load(i)?)?;
        out.save_png(out_dir.join(format!("{stem}_{suffix}.png")))?;
    }
    Ok(build_named_dataset(&format!("{}_{suffix}", images.name), out_dir, None)?)
}
