//! Domains, meshes, and their quantitative Lipschitz data.
//!
//! Two domain representations feed the rest of the crate: [`GraphDomain`]
//! for special Lipschitz domains given as piecewise-linear height fields,
//! and [`TetMesh`] for bounded polyhedra with chart-labelled boundaries.
//! Both expose the character `(M, theta, beta)` that every estimate's
//! constant is built from, and both are constructed so those numbers are
//! exact facet maxima rather than sampled approximations.

pub mod character;
pub mod generators;
pub mod graph;
pub mod io;
pub mod mesh;
pub mod partition;

pub use character::{lipschitz_character, LipschitzCharacter};
pub use generators::{ball_mesh, box_mesh, slab_over_graph, unit_cube, wedge_mesh};
pub use graph::{make_wedge, GraphDomain};
pub use io::{load_mesh, mesh_from_str, mesh_to_string, save_mesh, save_report};
pub use mesh::{BoundaryFace, Chart, TetMesh};
pub use partition::{
    box_corner_charts, box_face_charts, build_partition_of_unity, bump_profile, uniform_chart,
    PartitionOfUnity, PouChart, WeightFn,
};
