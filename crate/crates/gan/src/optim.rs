//! Adam with explicit, serializable moment state.

use std::collections::{BTreeMap, HashMap};

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::{Result, TrainError};
use crate::nn::ParamStore;

pub const ADAM_EPS: f64 = 1e-8;

pub struct Adam {
    beta1: f64,
    beta2: f64,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(params: &ParamStore, beta1: f64, beta2: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(TrainError::Config(format!("Adam betas ({beta1}, {beta2}) must lie in [0, 1)")));
        }
        let moments = params
            .vars()
            .iter()
            .map(|(name, var)| Ok((name.clone(), (var.zeros_like()?, var.zeros_like()?))))
            .collect::<Result<_>>()?;
        Ok(Self {
            beta1,
            beta2,
            step: 0,
            moments,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update to every parameter that received a gradient.
    pub fn step(&mut self, params: &ParamStore, grads: &GradStore, lr: f64) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (name, var) in params.vars() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let (m, v) = self
                .moments
                .get_mut(name)
                .ok_or_else(|| TrainError::Config(format!("optimizer has no state for `{name}`")))?;
            // Gradients still reference the forward graph; detaching keeps the
            // running moments from pinning every past step in memory.
            let g = g.detach();
            *m = ((&*m * self.beta1)? + (&g * (1.0 - self.beta1))?)?.detach();
            *v = ((&*v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?.detach();
            let m_hat = (&*m / c1)?;
            let v_hat = (&*v / c2)?;
            let delta = (m_hat / (v_hat.sqrt()? + ADAM_EPS)?)?;
            update(var, &(delta * lr)?)?;
        }
        Ok(())
    }

    pub fn tensors(&self, prefix: &str) -> HashMap<String, Tensor> {
        let mut out = HashMap::new();
        for (name, (m, v)) in &self.moments {
            out.insert(format!("{prefix}m.{name}"), m.clone());
            out.insert(format!("{prefix}v.{name}"), v.clone());
        }
        out
    }

    pub fn restore(&mut self, tensors: &HashMap<String, Tensor>, prefix: &str, step: u64) -> Result<()> {
        for (name, (m, v)) in self.moments.iter_mut() {
            for (kind, slot) in [("m", m), ("v", v)] {
                let key = format!("{prefix}{kind}.{name}");
                let t = tensors
                    .get(&key)
                    .ok_or_else(|| TrainError::Checkpoint(format!("missing optimizer tensor `{key}`")))?;
                if t.dims() != slot.dims() {
                    return Err(TrainError::Checkpoint(format!("optimizer tensor `{key}` has wrong shape")));
                }
                *slot = t.to_dtype(slot.dtype())?;
            }
        }
        self.step = step;
        Ok(())
    }
}

fn update(var: &Var, delta: &Tensor) -> Result<()> {
    var.set(&(var.as_tensor() - delta)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut store = ParamStore::new(DType::F64, &Device::Cpu);
        let w = store.constant("w".into(), &[3], 1.0).unwrap();
        let mut opt = Adam::new(&store, 0.5, 0.999).unwrap();
        let target = Tensor::new(&[0.0f64, 2.0, 1.0], &Device::Cpu).unwrap();
        let loss = (w.as_tensor() - &target).unwrap().sqr().unwrap().sum_all().unwrap();
        let grads = loss.backward().unwrap();
        opt.step(&store, &grads, 0.1).unwrap();
        let got: Vec<f64> = w.as_tensor().to_vec1().unwrap();
        // Bias-corrected first step is lr * g / (|g| + eps).
        assert!((got[0] - 0.9).abs() < 1e-6);
        assert!((got[1] - 1.1).abs() < 1e-6);
        assert_eq!(got[2], 1.0);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn converges_on_quadratic() {
        let mut store = ParamStore::new(DType::F64, &Device::Cpu);
        let w = store.constant("w".into(), &[2], 3.0).unwrap();
        let mut opt = Adam::new(&store, 0.9, 0.999).unwrap();
        for _ in 0..2000 {
            let loss = w.as_tensor().sqr().unwrap().sum_all().unwrap();
            let grads = loss.backward().unwrap();
            opt.step(&store, &grads, 0.01).unwrap();
        }
        let got: Vec<f64> = w.as_tensor().to_vec1().unwrap();
        assert!(got.iter().all(|v| v.abs() < 1e-2), "{got:?}");
    }

    #[test]
    fn moments_hold_no_graph() {
        let mut store = ParamStore::new(DType::F64, &Device::Cpu);
        let w = store.constant("w".into(), &[2], 1.0).unwrap();
        let mut opt = Adam::new(&store, 0.5, 0.999).unwrap();
        let hidden = (w.as_tensor() * 3.0).unwrap().exp().unwrap();
        let grads = (&hidden * &hidden).unwrap().sum_all().unwrap().backward().unwrap();
        opt.step(&store, &grads, 0.1).unwrap();
        assert!(opt.tensors("").values().all(|t| !t.track_op()));
    }

    #[test]
    fn state_roundtrip() {
        let mut store = ParamStore::new(DType::F32, &Device::Cpu);
        let w = store.constant("w".into(), &[2], 1.0).unwrap();
        let mut opt = Adam::new(&store, 0.5, 0.999).unwrap();
        let grads = w.as_tensor().sqr().unwrap().sum_all().unwrap().backward().unwrap();
        opt.step(&store, &grads, 0.1).unwrap();
        let saved = opt.tensors("opt.");
        let mut other = Adam::new(&store, 0.5, 0.999).unwrap();
        other.restore(&saved, "opt.", opt.step_count()).unwrap();
        assert_eq!(other.step_count(), 1);
        let a: Vec<f32> = other.tensors("")["m.w"].to_vec1().unwrap();
        let b: Vec<f32> = opt.tensors("")["m.w"].to_vec1().unwrap();
        assert_eq!(a, b);
    }
}
