//! Numerical laboratory for a spring-mounted rigid body in a viscous
//! incompressible stream: steady equilibria on truncated exterior domains,
//! the uniqueness and stability thresholds, modal Galerkin dynamics of
//! perturbations, and steady-bifurcation detection along the linearized
//! eigenvalue path.

pub mod assemble;
pub mod bifurcation;
pub mod error;
pub mod linalg;
pub mod modal;
pub mod persist;
pub mod steady;
pub mod thresholds;
pub mod transient;
pub mod space;
pub mod fe;
pub mod geometry;

pub use error::{CoreError, Result};
pub use geometry::{build_annulus_mesh, refine, BodyShape, BoundaryTag, Mesh};
pub use space::{build_fsi_space, nondimensionalize, FsiSpace, NondimParams, PhysicalParams};
