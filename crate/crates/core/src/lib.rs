//! Preprocessing, segmentation metrics and extent-of-resection evaluation
//! for postoperative glioblastoma MRI.
//!
//! The crate is organized along the processing chain:
//!
//! * [`nifti`] reads and writes NIfTI-1 volumes into [`VoxelGrid`] and
//!   [`LabelVolume`] values.
//! * [`geometry`] holds affine algebra and interpolation kernels.
//! * [`preprocess`] registers sequences to an atlas grid, resamples them,
//!   builds a brain mask and z-score normalizes intensities.
//! * [`metrics`] scores a predicted label map against ground truth.
//! * [`eor`] classifies gross total resection versus residual tumor.
//! * [`cohort`] harmonizes model outputs and aggregates per-case metrics
//!   into report tables.
//! * [`phantom`] generates synthetic cases with exact ground truth and a
//!   rule-based baseline segmenter.

pub mod cohort;
pub mod eor;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod nifti;
pub mod phantom;
pub mod preprocess;
pub mod rng;
pub mod volume;

pub use error::{Error, Result};
pub use geometry::{AffineParams, AffineTransform};
pub use volume::{Geometry, Label, LabelVolume, VoxelGrid};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/nifti.md")]
    mod nifti {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/preprocessing.md")]
    mod preprocessing {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/eor.md")]
    mod eor {}
    #[doc = include_str!("../../../book/src/cohort.md")]
    mod cohort {}
    #[doc = include_str!("../../../book/src/phantoms.md")]
    mod phantoms {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
