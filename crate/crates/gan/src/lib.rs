//! One-generator, two-discriminator adversarial network for unpaired
//! ultrasound translation: layers, losses, optimizer and training loop.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod losses;
pub mod model;
pub mod nn;
pub mod optim;
pub mod pool;
pub mod schedule;
pub mod train;

pub use config::TrainingConfig;
pub use error::{Result, TrainError};
pub use losses::{ContentLayer, LossTerms, LossWeights};
pub use model::{Discriminator, DiscriminatorConfig, FeatureStack, Generator, GeneratorConfig};
pub use schedule::lr_at_epoch;
pub use train::{resume, train, translate_batch, StepRecord, TrainOutcome, Trainer};
