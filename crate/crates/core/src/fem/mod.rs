//! Meshes, quadrature, P0/P1 spaces and dense form assembly.

pub mod assembly;
pub mod mesh;
pub mod quadrature;
pub mod space;

/// Physical point. 1D problems leave the second coordinate at 0.
pub type Point = [f64; 2];

pub use assembly::{assemble_form, assemble_functional, BasisTable, IntegrationGrid};
pub use mesh::{build_uniform_mesh_1d, Mesh, Mesh1D, Mesh2DTri, QuadPoint};
pub use quadrature::{gauss_quadrature_1d, QuadratureRule};
pub use space::{eval_fe, eval_fe_grad, interpolate, FEFunction, FunctionSpace, Jet, Shape, SpaceKind};
