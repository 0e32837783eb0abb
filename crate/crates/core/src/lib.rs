//! DTANet: representation learning for individual treatment effects with a
//! treatment-adaptive mediator representation, an orthogonality penalty and
//! Sinkhorn optimal-transport balancing.

pub mod baselines;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod objective;
pub mod ot;
pub mod synth;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use data::{split, ObservationalDataset, SplitIndices};
pub use error::{Error, ErrorClass, Result};
pub use metrics::MetricsReport;
pub use model::{Architecture, Arm, DtanetModel, EffectEstimates};
pub use synth::{generate, SynthConfig};
pub use trainer::{train, train_split, TrainConfig, TrainTrace, Trainer};
