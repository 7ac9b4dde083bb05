//! Video-to-video face verification built on probabilistic multi-region
//! histogram (MRH) signatures.
//!
//! The pipeline runs, per face: [`ingest::align_crop`] to a 64x64 inner face,
//! block DCT features ([`features`]), posterior histograms against a Gaussian
//! mixture visual dictionary ([`dictionary`]), and region averaging into an
//! [`signature::MrhSignature`]. Per video, faces are either subset-selected
//! ([`selection`]) or clustered ([`clustering`]), and probe/gallery signature
//! sets are compared with cohort-normalised L1 distances ([`matching`]).
//! [`evaluation`] runs enrol/probe verification protocols and reports the
//! minimum error rate. [`synth`] generates labelled synthetic datasets.

pub mod clustering;
pub mod dictionary;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod ingest;
pub mod matching;
pub mod selection;
pub mod signature;
pub mod synth;

pub use error::{Error, Result};
