//! Affine algebra and interpolation kernels.

mod affine;
mod interp;

pub use affine::{AffineParams, AffineTransform};
pub use interp::{
    nearest_index, nearest_label, nearest_sample, trilinear_sample, trilinear_sample_with,
    DEFAULT_OUT_OF_BOUNDS,
};
pub(crate) use interp::trilinear_raw;

/// Maps a world point through `t`.
pub fn apply_affine(t: &AffineTransform, p: [f64; 3]) -> [f64; 3] {
    t.apply(p)
}
