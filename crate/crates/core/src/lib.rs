//! Toric Kähler orbifold metrics in symplectic (action-angle) coordinates.
//!
//! * [`polytope`]: labeled rational simple polytopes, vertex enumeration,
//!   orbifold structure-group orders and the β map.
//! * [`potential`]: symplectic potentials as exact term sums with
//!   closed-form jets up to fourth order, and a sample-based compatibility
//!   check.
//! * [`curvature`]: metric, scalar curvature by independent routes, toric
//!   Laplacian, extremal fits, closed forms on labeled simplices and the
//!   cone-angle model.
//! * [`einstein`]: the `(1,1,m)` family and its conformally Einstein
//!   rescalings.

pub mod curvature;
pub mod einstein;
pub mod error;
pub mod lattice;
pub mod polytope;
pub mod potential;

pub use error::{Error, Result};
pub use polytope::{AffineFunctional, FaceDescriptor, LabeledPolytope};
pub use potential::{Jet, PotentialExpr, PotentialTerm};
