//! Linear-elastic finite elements on voxel hexahedra.

mod deform;
mod material;
mod mesh;
mod solver;
mod stiffness;

pub use deform::deform_and_revoxelize;
pub use material::{ForceSpec, MaterialParams, DOWN, E_MAX_GPA, E_MIN_GPA, NU_CAP};
pub use mesh::{build_hex_mesh, HexMesh, CORNERS};
pub use solver::{pcg, solve_displacement, CsrMatrix, DisplacementField, ElasticSystem, SolverOptions};
pub use stiffness::{constitutive, element_stiffness, rigid_translation, ElementMatrix};
