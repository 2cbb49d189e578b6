//! Allocation-only core of the hoiforge toolkit.
//!
//! Everything in this crate is a pure function of its inputs (plus an explicit
//! seed where sampling is involved). File formats, the CLI and the review HTTP
//! service live in the `hoiforge` crate, which depends on this one.
//!
//! Modules:
//!
//! - [`geometry`]: pixel and normalized boxes, IoU and generalized IoU.
//! - [`vocab`]: the HOI triplet vocabulary, prompt attribute slots and the
//!   triplet co-occurrence table.
//! - [`prompt`]: prompt composition and parsing, co-occurrence sampling and
//!   class-balance generation planning.
//! - [`autolabel`]: confidence filtering and human-object association of
//!   detector output.
//! - [`stats`]: category histograms, long-tail reports, CLIPScore and
//!   zero-shot splits.
//! - [`setmatch`]: embedding classifiers, query pooling, matching costs and the
//!   composite set-prediction loss.
//! - [`hungarian`]: rectangular minimum-cost assignment.
//! - [`eval`]: HOI detection mAP (Default and Known-Object modes).
//! - [`review`]: verification batches, verdict folding and verified export.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autolabel;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod hungarian;
pub mod matrix;
pub mod prompt;
pub mod review;
pub mod rng;
pub mod setmatch;
pub mod stats;
pub mod vocab;

pub use error::{Error, Result};
pub use geometry::{BBox, CenterBox};
pub use matrix::Matrix;
pub use vocab::{HoiId, ObjectId};
