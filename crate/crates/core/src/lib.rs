//! Stop-burst annotation toolkit: TextGrid I/O and token extraction, audio
//! clips and synthesis, manifests and sampling, a native baseline
//! classifier, bootstrap evaluation and penalized-spline analysis.
//!
//! Numerical types are generic over [`numeric::Real`] (f32 or f64); the
//! aliases below name the common instantiations.

pub mod analysis;
pub mod audio;
pub mod baseline;
pub mod classifier;
pub mod corpus;
pub mod dataset;
pub mod eval;
pub mod fixtures;
pub mod linalg;
pub mod numeric;
pub mod rng;
pub mod token;

pub type AudioClip32 = audio::AudioClip<f32>;
pub type AudioClip64 = audio::AudioClip<f64>;
pub type FeatureVector32 = baseline::FeatureVector<f32>;
pub type FeatureVector64 = baseline::FeatureVector<f64>;
pub type BaselineModel32 = baseline::BaselineModel<f32>;
pub type BaselineModel64 = baseline::BaselineModel<f64>;
pub type SplineFit32 = analysis::SplineFit<f32>;
pub type SplineFit64 = analysis::SplineFit<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
