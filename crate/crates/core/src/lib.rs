//! Orderless quadrilateral box toolkit.
//!
//! Quadrilaterals are described by eight order statistics of their vertex
//! coordinates (the *key edges*) plus a *matching type* pairing each x key
//! edge with a y key edge. This representation does not depend on how the
//! annotator happened to order the vertices, which removes the labeling
//! ambiguity that vertex-sequence regression targets suffer from.
//!
//! Around that codec the crate provides:
//!
//! - [`geom`]: points, quads, simplicity testing, exact polygon IoU
//! - [`codec`]: key-edge encode/decode, matching types, half-line
//!   encoding and grid quantization
//! - [`rpp`]: key-edge score aggregation and score fusion
//! - [`postproc`]: axis-aligned and polygonal NMS, invalid-matching removal
//! - [`protocols`]: the vertex-ordering protocols used by sequence-based
//!   detectors and an instability harness to compare them
//! - [`eval`]: ICDAR-style one-to-one matching and threshold sweeps
//! - [`io`], [`synth`], [`cli`]: text formats, synthetic scenes and the
//!   `obdkit` command line

pub mod cli;
pub mod codec;
pub mod error;
pub mod eval;
pub mod geom;
pub mod io;
pub mod postproc;
pub mod protocols;
pub mod rpp;
pub mod synth;

pub use codec::{GridSpec, HalfEncoded, KeyEdges, MatchingType};
pub use error::{Error, Result};
pub use geom::{Point, Quad, Rect};
pub use rpp::{ScoreVector, ScoredDetection};
