//! Face-touch detection from a wrist-worn 3-axis accelerometer.
//!
//! The pipeline slices a 100 Hz stream into 1.5 s frames, summarizes each
//! axis with ten distribution statistics, and classifies growing prefixes of
//! every frame with one random forest per prefix length. The per-prefix
//! votes are combined with F1-derived weights and the vote is finalized as
//! soon as the remaining models can no longer change its sign.
//!
//! Modules follow the data flow:
//!
//! - [`signal`]: samples, resampling, frames, prefixes, visualization bins
//! - [`features`]: the 30-value feature vector
//! - [`forest`]: CART trees, random forests, cross-validation, tuning
//! - [`ensemble`]: the temporal ensemble, early decisions, streaming detector
//! - [`dataset`]: trial records, protocol manifest, synthetic data, labeling
//! - [`eval`]: recall / false-positive-rate reports and F1 curves

pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod features;
pub mod forest;
mod label;
mod rng;
pub mod signal;

pub use error::{Error, Result};
pub use label::Label;
pub use rng::{derive_seed, seeded as seeded_rng};

pub use dataset::{Behavior, FacialPart, Placement, PromptLog, TrialRecord};
pub use ensemble::{DetectionEvent, PrefixSchedule, PrefixTime, TemporalEnsemble};
pub use features::FeatureVector;
pub use forest::{Hyperparams, MaxFeatures, RandomForest};
pub use signal::{FrameSchedule, Sample, Window};
