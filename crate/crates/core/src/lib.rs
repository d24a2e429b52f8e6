//! Binary classifiers augmented with a special neuron, their regularized
//! hinge losses, and numerical certificates that a local minimum is global.

pub mod augment;
pub mod autodiff;
pub mod certify;
pub mod datasets;
pub mod error;
pub mod loss;
pub mod network;
pub mod optimize;
pub mod tensor;

pub use augment::{AugmentedLoss, AugmentedModel, Augmentation};
pub use certify::{full_certificate, Certificate, Thresholds, Verdict};
pub use datasets::Dataset;
pub use error::{LabError, Result};
pub use loss::{EmpiricalLossConfig, HingeLoss};
pub use network::{Activation, NetworkSpec};
pub use optimize::{minimize, multi_start, random_init, OptimizerConfig, RunResult, Termination};
