//! Distance-based IsoMax classification heads, the entropic detection score,
//! and the metrics and experiment harness around them.

pub mod data;
pub mod error;
pub mod experiment;
pub mod heads;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod scores;
pub mod tensor;

pub use error::{Error, Result};
pub use heads::{Head, HeadKind, IsoMaxHead, LogMode, LossResult, SoftMaxHead};
pub use metrics::{DetectionReport, RocCurve, ScoredSample};
pub use model::Model;
pub use nn::{Activation, DenseLayer, FeatureExtractor};
pub use optim::{Sgd, SgdConfig};
pub use scores::ScoreKind;
pub use tensor::Tensor;
