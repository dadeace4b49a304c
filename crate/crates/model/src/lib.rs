//! Neural side of the predictor: a small autodiff engine, transformer
//! encoders, the event-enrichment gates, the scoring head and training.

pub mod checkpoint;
pub mod eece;
pub mod model;
pub mod params;
pub mod scep;
pub mod tape;
pub mod tensor;
pub mod training;
pub mod transformer;
pub mod vocab;

pub use eece::Ablation;
pub use model::{ModelConfig, PreparedInstance, SedgplModel};
pub use params::{AdamW, AdamWConfig, ParamStore};
pub use scep::LossConfig;
pub use training::{predict, train, TrainConfig, TrainOutcome};
pub use transformer::EncoderConfig;
pub use vocab::Vocab;
