//! History of generated images shown to the discriminators.

use std::collections::HashMap;

use candle_core::{Device, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TrainError};

/// Fixed-capacity buffer of past generator outputs. Once full, each query
/// returns a stored image half of the time, replacing it with the new one.
#[derive(Clone, Debug)]
pub struct ReplayPool {
    capacity: usize,
    buffer: Vec<Tensor>,
}

impl ReplayPool {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            buffer: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    /// Takes a `(batch, C, H, W)` batch of fakes and returns a batch of the
    /// same shape drawn from the new images and the history. Returned
    /// tensors carry no gradient.
    pub fn query(&mut self, fakes: &Tensor, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let fakes = fakes.detach();
        if self.capacity == 0 {
            return Ok(fakes);
        }
        let n = fakes.dims()[0];
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let img = fakes.narrow(0, i, 1)?;
            if self.buffer.len() < self.capacity {
                self.buffer.push(img.clone());
                out.push(img);
            } else if rng.random_bool(0.5) {
                let j = rng.random_range(0..self.capacity);
                out.push(std::mem::replace(&mut self.buffer[j], img));
            } else {
                out.push(img);
            }
        }
        Ok(Tensor::cat(&out, 0)?)
    }

    pub fn tensors(&self, prefix: &str) -> HashMap<String, Tensor> {
        self.buffer
            .iter()
            .enumerate()
            .map(|(i, t)| (format!("{prefix}{i:04}"), t.clone()))
            .collect()
    }

    pub fn restore(&mut self, tensors: &HashMap<String, Tensor>, prefix: &str, len: usize, device: &Device) -> Result<()> {
        if len > self.capacity {
            return Err(TrainError::Checkpoint(format!(
                "pool holds {len} images but capacity is {}",
                self.capacity
            )));
        }
        self.buffer = (0..len)
            .map(|i| {
                let key = format!("{prefix}{i:04}");
                tensors
                    .get(&key)
                    .ok_or_else(|| TrainError::Checkpoint(format!("missing pool tensor `{key}`")))
                    .and_then(|t| Ok(t.to_device(device)?))
            })
            .collect::<Result<_>>()?;
        Ok(())
    }
}
