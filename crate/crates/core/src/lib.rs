//! Fine alignment of loosely aligned piano MIDI to audio recordings.
//!
//! The modules follow the processing chain: [`symbolic`] note data and
//! piano rolls, [`features`] audio front end, [`augment`] synthetic
//! misalignment, [`dtw`] baseline alignment, [`crnn`] the alignment
//! network, [`postprocess`] activations back to notes, [`evaluate`] onset
//! metrics and [`pipeline`] end-to-end runs and experiments.

pub mod augment;
pub mod crnn;
pub mod dtw;
pub mod error;
pub mod evaluate;
pub mod features;
pub mod pipeline;
pub mod postprocess;
pub mod symbolic;

pub use error::{Error, Result};
pub use evaluate::{AlignmentReport, ComparisonTable};
pub use features::{AudioBuffer, FeatureMatrix};
pub use pipeline::{Method, PipelineConfig};
pub use symbolic::{Note, NoteId, NoteSequence, PianoRoll};
