//! Top-down referring video object segmentation.
//!
//! Candidate object tracklets are built by propagating key-frame mask
//! proposals through the video ([`propagation`]), de-duplicated with
//! tracklet-level NMS ([`tracklet`]), and grounded against a referring
//! expression with a Transformer over tracklet and token features
//! ([`grounding`]). [`metrics`] scores the selected mask sequence with J, F and
//! J&F, and [`synth`] generates closed-loop synthetic benchmarks.
//! [`pipeline`] wires the stages together over on-disk artifacts.

pub mod error;
pub mod grounding;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod propagation;
pub mod synth;
pub mod tensor_io;
pub mod tracklet;

pub use error::{Error, Result};
pub use mask::BinaryMask;
pub use tracklet::{Tracklet, TrackletId, TrackletSet};
