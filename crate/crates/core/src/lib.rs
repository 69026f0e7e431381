//! Numerical dynamics of a convex rigid body rolling on a horizontal plane
//! under affine nonholonomic constraints.
//!
//! The contact-point velocity is prescribed by two vector fields: `V` on the
//! plane and `W` on the body surface. Setting both to zero recovers classical
//! rolling without slipping. The crate provides:
//!
//! * [`algebra`] — 3-vector / rotation-matrix helpers (hat map, Poisson
//!   vectors, attitude re-orthonormalization),
//! * [`shapes`] — body geometry via the inverse Gauss map (balanced sphere,
//!   homogeneous sphere, bodies of revolution given by profile functions),
//! * [`fields`] — the constraint data `V` and `W` with Jacobians and the
//!   divergence operators used by the invariant-measure criteria,
//! * [`dynamics`] — right-hand sides of the full and reduced systems, the
//!   momentum/angular-velocity inversion, and an adaptive embedded
//!   Runge-Kutta integrator with constraint stabilization,
//! * [`invariants`] — first integrals, moving energies and invariant-measure
//!   densities,
//! * [`poincare`] — Andoyer-type charts, section-crossing detection and
//!   Poincaré-map generation.

pub mod algebra;
pub mod dynamics;
pub mod fields;
pub mod invariants;
pub mod ode;
pub mod poincare;
pub mod shapes;

pub use algebra::{hat, poisson_vectors, Mat3, Rotation, Vec3};
pub use dynamics::{FullState, ReducedState, ScenarioParams, SphereReducedState};
pub use fields::{PlaneField, SurfaceField};
pub use shapes::{BodyShape, RevolutionProfile};
