//! Threshold prediction and skin isosurface extraction.

mod calibration;
mod isosurface;
pub mod tables;

pub use calibration::{
    fit_calibration, intensity_stats, pearson, predict_threshold, read_samples_csv, CalibrationModel,
    CalibrationSample,
};
pub use isosurface::{extract_isosurface, extract_isosurface_with, Parallelism};
