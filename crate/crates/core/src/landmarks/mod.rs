//! Landmark files, the reference template, and template-based transfer.

mod icp;
mod set;
mod template;
mod transfer;

pub use icp::{icp_rigid, sample_indices, IcpResult, ICP_MAX_ITERS, ICP_MAX_SAMPLES, ICP_REL_TOL, ICP_TRIM};
pub use set::{load_landmarks, read_landmarks, write_landmarks, LandmarkFormat, LandmarkSet};
pub use template::{builtin_cp_ref, control_points, landmark_code, surface_distances, LandmarkTemplate, CONTROL_NAMES, LANDMARK_NAMES};
pub use transfer::{coarse_alignment, transfer_landmarks, transfer_with, Transfer, TransferOptions, REVIEW_GATE_MM};
