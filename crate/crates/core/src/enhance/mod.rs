//! Intensity harmonization ahead of segmentation.

mod bias;
mod chain;
mod histogram;
mod mask;

pub use bias::{
    bias_correct, BiasCorrection, BiasField, DEFAULT_CONV_TOL, DEFAULT_MAX_ITERS, FWHM, HISTOGRAM_BINS,
    MAX_DYNAMIC_RANGE, SPANS, WIENER_NOISE,
};
pub use chain::{enhance_volume, Enhanced};
pub use histogram::{histogram_match, ReferenceHistogram, DEFAULT_LEVELS, DEFAULT_MATCH_POINTS};
pub use mask::{
    close, compute_mask, dilate, erode, fill_holes, otsu_threshold, threshold_mask, BinaryMask, CLOSING_RADIUS,
};
