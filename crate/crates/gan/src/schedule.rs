//! Learning-rate schedule: constant, then linear decay to zero.

use crate::error::{Result, TrainError};

/// Rate used throughout `epoch` (0-based): `lr` for the first
/// `constant_epochs`, then `lr * (1 - (epoch - c) / (epochs - c))`.
pub fn lr_at_epoch(lr: f64, constant_epochs: usize, epochs: usize, epoch: usize) -> Result<f64> {
    if epoch >= epochs {
        return Err(TrainError::EpochOutOfRange { epoch, epochs });
    }
    if epoch < constant_epochs {
        return Ok(lr);
    }
    let ramp = (epochs - constant_epochs) as f64;
    Ok(lr * (1.0 - (epoch - constant_epochs) as f64 / ramp))
}
