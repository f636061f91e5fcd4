pub mod cli;
pub mod conditioner;
pub mod data;
pub mod error;
pub mod flow;
pub mod oracle;
pub mod sospoly;
pub mod special;
pub mod train;

pub use conditioner::{CondOutput, MaskedNet};
pub use error::{Error, Result};
pub use flow::{param_count, FlowBlock, FlowModel, FlowShape, Source, Standardizer};
pub use sospoly::{MonoPoly, SosCoeffs};
pub use train::{fit, fit_with_history, nll_and_grad, GradTape, TrainConfig};
