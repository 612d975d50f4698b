//! Bimodal image-tag representation learning and tag choosing.
//!
//! The crate builds three levels of representation for paired image/tag data
//! and decides, for a test image with two candidate descriptions, which one
//! fits:
//!
//! 1. level 1: hand-crafted image descriptors (organizer features, four
//!    MPEG-7-style descriptors, gist) and binary bag-of-words text vectors;
//! 2. level 2: per-modality stacked RBMs trained with contrastive divergence;
//! 3. level 3: a quasi-Siamese contrastive autoencoder whose code-space L1
//!    distance scores image/text compatibility.
//!
//! On top of the representations sit two choosing strategies: a general
//! per-image comparison, and a link-cycle resolution that exploits test sets
//! where a description shared between two triples is correct for exactly one
//! of them. [`pipeline`] orchestrates the stages and persists artifacts.

pub mod chooser;
pub mod error;
pub mod io;
pub mod numeric;
pub mod pipeline;
pub mod rbm;
pub mod siamese;
pub mod text;
pub mod vision;

pub use error::{Error, Result};
