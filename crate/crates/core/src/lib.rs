//! Serve an ensemble of classifiers behind one REST endpoint.
//!
//! - [`model`]: samples, the shared preprocessing transform and LIN1 linear models.
//! - [`ensemble`]: manifest loading, budget-accounted admission and the single
//!   forward call over all models.
//! - [`policy`]: sensitivity policies that combine binary votes per sample.
//! - [`wire`] and [`gateway`]: the JSON protocol and the HTTP server.
//! - [`flexctl`]: fixture generation and the predict / track / bench clients.
//!
//! Runnable walkthroughs live in this crate's `examples/` directory.

pub mod ensemble;
pub mod error;
pub mod flexctl;
pub mod gateway;
pub mod model;
pub mod pgm;
pub mod policy;
pub mod wire;

pub use ensemble::{load_ensemble, load_manifest, Ensemble, EnsembleOutput, ModelManifest};
pub use error::{Error, Result};
pub use model::{
    linear_predict, parse_model_file, preprocess, InputShape, LinearModel, PreprocessSpec,
    SampleBatch,
};
pub use policy::{apply_policy, votes_from_output, SensitivityPolicy};
