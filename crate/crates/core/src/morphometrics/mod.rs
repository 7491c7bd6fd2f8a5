//! Group spreadsheets, Procrustes/PCA shape space and pairwise-distance
//! (EDMA) comparison of two groups.

mod edma;
mod gpa;
mod groups;
mod hull;

pub use edma::{
    distance_rows, edma, landmark_pairs, mean_distances, quantile_type7, select_edma_biomarkers,
    top_significant_pairs, EdmaReport, DEFAULT_ALPHA, DEFAULT_BOOTSTRAP,
};
pub use gpa::{
    centroid_size, gpa, pca, procrustes_distance, select_gpa_biomarkers, total_variance, GpaResult, GPA_MAX_ITERS,
    GPA_TOL,
};
pub use groups::{prepare_groups, GroupSample};
pub use hull::{clip_convex, convex_hull, morphospace_iou, polygon_area, MorphospaceOverlap, Point2};
