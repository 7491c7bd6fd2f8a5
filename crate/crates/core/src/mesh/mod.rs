//! Triangle meshes and the head/face processing chain.

mod bvh;
mod components;
mod crop;
mod holes;
mod occlusion;
mod ply;
mod smooth;
mod transform;
mod trimesh;

pub use bvh::{closest_on_triangle, ray_triangle, Bvh};
pub use components::{component_diagonals, connected_components, remove_small_components};
pub use crop::{crop_face, CropSpec, DEFAULT_CROP_BEHIND_NOSE, DEFAULT_CROP_HALF_HEIGHT};
pub use holes::{boundary_loops, fill_holes, CROP_PLANE_TOLERANCE};
pub use occlusion::{ambient_occlusion, empty_interior, hemisphere_directions, DEFAULT_RAYS, RAY_OFFSET};
pub use ply::{read_ply, write_ply, PlyFormat};
pub use smooth::{laplacian_smooth, taubin_smooth, TAUBIN_ITERS, TAUBIN_LAMBDA, TAUBIN_MU};
pub use transform::{apply_transform, bbox_center, center_mesh, estimate_rigid, estimate_similarity, SimilarityTransform};
pub use trimesh::{add, box_mesh, cross, dot, norm, scale, sub, uv_sphere, TriMesh, Vec3};
