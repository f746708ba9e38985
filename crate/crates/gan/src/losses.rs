//! Adversarial, content and noise losses and the combined objective.

use candle_core::{Tensor, D};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};
use crate::model::{FeatureStack, Generator};

/// Probabilities are clamped into `[EPS, 1 - EPS]` before taking logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 10.0,
            lambda2: 10.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) || !self.lambda1.is_finite() || !self.lambda2.is_finite() {
            return Err(TrainError::Config(format!(
                "loss weights must be finite and non-negative, got {} and {}",
                self.lambda1, self.lambda2
            )));
        }
        Ok(())
    }
}

/// Adversarial loss value plus how many probabilities needed clamping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdvLoss {
    pub value: f64,
    pub clamped: usize,
}

fn clamp_prob(p: f64, clamped: &mut usize) -> f64 {
    let q = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if q != p {
        *clamped += 1;
    }
    q
}

/// `mean log d(real) + mean log(1 - d(fake))` on probabilities.
pub fn adversarial_loss(real: &[f64], fake: &[f64]) -> Result<AdvLoss> {
    if real.is_empty() || fake.is_empty() {
        return Err(TrainError::Shape("adversarial loss needs non-empty batches".into()));
    }
    if real.iter().chain(fake).any(|p| !(0.0..=1.0).contains(p)) {
        return Err(TrainError::Shape("discriminator outputs must be probabilities".into()));
    }
    let mut clamped = 0;
    let r = real.iter().map(|&p| clamp_prob(p, &mut clamped).ln()).sum::<f64>() / real.len() as f64;
    let f = fake.iter().map(|&p| (1.0 - clamp_prob(p, &mut clamped)).ln()).sum::<f64>() / fake.len() as f64;
    Ok(AdvLoss { value: r + f, clamped })
}

/// Noise-discriminator loss: real target images against translations.
pub fn adv_noise_loss(d_n_real: &[f64], d_n_fake: &[f64]) -> Result<AdvLoss> {
    adversarial_loss(d_n_real, d_n_fake)
}

/// Content-discriminator loss: real source images against translations.
pub fn adv_content_loss(d_c_real: &[f64], d_c_fake: &[f64]) -> Result<AdvLoss> {
    adversarial_loss(d_c_real, d_c_fake)
}

/// Numerically stable `log(sigmoid(x))`.
pub fn log_sigmoid(xs: &Tensor) -> Result<Tensor> {
    // log s(x) = min(x, 0) - log(1 + exp(-|x|))
    let neg_part = xs.minimum(0.0)?;
    let tail = (xs.abs()?.neg()?.exp()? + 1.0)?.log()?;
    Ok((neg_part - tail)?)
}

/// The same quantity as [`adversarial_loss`] computed from logits, kept as a
/// differentiable scalar tensor. Discriminators maximize it.
pub fn adversarial_loss_logits(real_logits: &Tensor, fake_logits: &Tensor) -> Result<Tensor> {
    let r = log_sigmoid(real_logits)?.mean_all()?;
    let f = log_sigmoid(&fake_logits.neg()?)?.mean_all()?;
    Ok((r + f)?)
}

/// Non-saturating generator term: `-mean log d(G(x))`.
pub fn generator_adversarial_loss(fake_logits: &Tensor) -> Result<Tensor> {
    Ok(log_sigmoid(fake_logits)?.mean_all()?.neg()?)
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(TrainError::Shape(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Mean absolute difference of two feature maps.
pub fn content_loss(f_gx: &Tensor, f_x: &Tensor) -> Result<Tensor> {
    same_shape(f_gx, f_x, "content loss")?;
    Ok((f_gx - f_x)?.abs()?.mean_all()?)
}

/// Where the content loss compares translation and input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentLayer {
    /// Output of the residual trunk.
    #[default]
    Trunk,
    /// The images themselves.
    Pixel,
}

/// Gram matrices `F F^T / (H W)` of a `(C, H, W)` or `(N, C, H, W)` map;
/// the result is `(C, C)` or `(N, C, C)` respectively.
pub fn gram_matrix(features: &Tensor) -> Result<Tensor> {
    match features.rank() {
        3 => Ok(gram_matrix(&features.unsqueeze(0)?)?.squeeze(0)?),
        4 => {
            let (n, c, h, w) = features.dims4()?;
            let flat = features.reshape((n, c, h * w))?;
            let g = flat.matmul(&flat.transpose(1, 2)?.contiguous()?)?;
            Ok((g / (h * w) as f64)?)
        }
        r => Err(TrainError::Shape(format!("gram matrix needs a rank 3 or 4 map, got rank {r}"))),
    }
}

/// Empirical 1-D Wasserstein-1 distance along the last axis: mean absolute
/// difference of the ascending-sorted values, averaged over leading axes.
/// Gradients pass through the sort permutation.
pub fn wasserstein_1d(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b, "wasserstein distance")?;
    if a.elem_count() == 0 {
        return Err(TrainError::Shape("wasserstein distance of empty sets".into()));
    }
    let sa = sort_last(a)?;
    let sb = sort_last(b)?;
    Ok((sa - sb)?.abs()?.mean_all()?)
}

fn sort_last(xs: &Tensor) -> Result<Tensor> {
    let xs = xs.contiguous()?;
    let idx = xs.detach().arg_sort_last_dim(true)?;
    Ok(xs.gather(&idx, D::Minus1)?)
}

/// Sum over style layers of the distance between flattened Gram matrices.
pub fn style_distance(a: &FeatureStack, b: &FeatureStack) -> Result<Tensor> {
    if a.layers.len() != b.layers.len() || a.layers.is_empty() {
        return Err(TrainError::Shape("feature stacks differ in depth".into()));
    }
    let mut total: Option<Tensor> = None;
    for (fa, fb) in a.layers.iter().zip(&b.layers) {
        let ga = gram_matrix(fa)?;
        let gb = gram_matrix(fb)?;
        let n = ga.dims()[0];
        let term = wasserstein_1d(&ga.reshape((n, ()))?, &gb.reshape((n, ()))?)?;
        total = Some(match total {
            None => term,
            Some(t) => (t + term)?,
        });
    }
    Ok(total.expect("non-empty"))
}

/// Noise loss: style distance between `gx` and `y`, both re-encoded through
/// the current generator.
pub fn noise_loss(g: &Generator, gx: &Tensor, y: &Tensor) -> Result<Tensor> {
    same_shape(gx, y, "noise loss")?;
    style_distance(&g.encoder_features(gx)?, &g.encoder_features(y)?)
}

/// The four loss values of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub l_an: f64,
    pub l_ac: f64,
    pub l_c: f64,
    pub l_n: f64,
}

/// `L_an + L_ac + lambda1 L_c + lambda2 L_n`. A term with zero weight is
/// dropped rather than multiplied, so it cannot poison the sum.
pub fn total_objective(t: &LossTerms, w: &LossWeights) -> Result<f64> {
    for (component, value) in [("L_an", t.l_an), ("L_ac", t.l_ac), ("L_c", t.l_c), ("L_n", t.l_n)] {
        let weight = match component {
            "L_c" => w.lambda1,
            "L_n" => w.lambda2,
            _ => 1.0,
        };
        if weight != 0.0 && !value.is_finite() {
            return Err(TrainError::NonFinite { component, value });
        }
    }
    let mut total = t.l_an + t.l_ac;
    if w.lambda1 != 0.0 {
        total += w.lambda1 * t.l_c;
    }
    if w.lambda2 != 0.0 {
        total += w.lambda2 * t.l_n;
    }
    Ok(total)
}
