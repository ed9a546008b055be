//! Area-preserving parameterization of genus-one triangle meshes onto a ring
//! torus, by minimizing a scale-invariant stretch energy with projected and
//! Riemannian first-order methods.

// `!(x > 0.0)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod homology;
pub mod initmap;
pub mod mesh;
pub mod obj;
pub mod optim;
pub mod pipeline;
pub mod quality;
pub mod registration;
pub mod sparse;
pub mod torus;

pub use error::{Error, Result};
pub use mesh::{SimplicialSurface, Vec3, VertexMap};
pub use torus::TorusShape;
