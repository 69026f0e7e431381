//! The affine constraint data: a vector field `V` on the plane, a vector
//! field `W` on the body surface, their Jacobians, and the divergence
//! operators entering the invariant-measure criteria.
//!
//! `V` is written in the space frame and is tangent to the plane (third
//! component zero); `W` is written in the body frame and is tangent to the
//! surface. Custom fields may omit the Jacobian, in which case a central
//! finite difference with step 1e-6 is substituted.

use std::fmt;
use std::sync::Arc;

use crate::algebra::{Mat3, Vec3};

/// Step for the fallback finite-difference Jacobians.
const FD_STEP: f64 = 1e-6;

type FieldFn = Arc<dyn Fn(&Vec3) -> Vec3 + Send + Sync>;
type JacFn = Arc<dyn Fn(&Vec3) -> Mat3 + Send + Sync>;

#[derive(Clone)]
enum PlaneKind {
    Zero,
    /// `V(x) = eta e3 x x`: plane rotating about the origin.
    Rotating { eta: f64 },
    /// Constant horizontal field.
    Constant { v: Vec3 },
    Custom { eval: FieldFn, jac: Option<JacFn> },
}

/// Prescribed velocity field on the plane, as a tangent field `V_s(x)` with
/// `x3 = 0` and a smooth extension to `R^3` for differentiation.
#[derive(Clone)]
pub struct PlaneField {
    kind: PlaneKind,
}

impl fmt::Debug for PlaneField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            PlaneKind::Zero => "zero",
            PlaneKind::Rotating { .. } => "rotating",
            PlaneKind::Constant { .. } => "constant",
            PlaneKind::Custom { .. } => "custom",
        };
        write!(f, "PlaneField({name})")
    }
}

impl PlaneField {
    pub fn zero() -> Self {
        PlaneField { kind: PlaneKind::Zero }
    }

    /// Plane rotating with constant angular velocity `eta` about the origin.
    pub fn rotating(eta: f64) -> Self {
        PlaneField {
            kind: PlaneKind::Rotating { eta },
        }
    }

    /// Uniform translation of the plane.
    pub fn constant(v1: f64, v2: f64) -> Self {
        PlaneField {
            kind: PlaneKind::Constant {
                v: Vec3::new(v1, v2, 0.0),
            },
        }
    }

    /// User field. `eval` must return a horizontal vector; `jac` is the
    /// Jacobian of a smooth extension, replaced by finite differences when
    /// absent (see [`PlaneField::uses_fd_jacobian`]).
    pub fn custom(
        eval: impl Fn(&Vec3) -> Vec3 + Send + Sync + 'static,
        jac: Option<Box<dyn Fn(&Vec3) -> Mat3 + Send + Sync>>,
    ) -> Self {
        PlaneField {
            kind: PlaneKind::Custom {
                eval: Arc::new(eval),
                jac: jac.map(|j| Arc::from(j) as JacFn),
            },
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, PlaneKind::Zero)
    }

    /// True when divergence/Jacobian queries fall back to finite differences;
    /// reports flag this.
    pub fn uses_fd_jacobian(&self) -> bool {
        matches!(&self.kind, PlaneKind::Custom { jac: None, .. })
    }

    /// The field value when it is uniform in space (zero or constant).
    pub fn constant_value(&self) -> Option<Vec3> {
        match &self.kind {
            PlaneKind::Zero => Some(Vec3::zeros()),
            PlaneKind::Constant { v } => Some(*v),
            _ => None,
        }
    }

    /// `eta` when this is a rotating plane.
    pub fn rotation_rate(&self) -> Option<f64> {
        match &self.kind {
            PlaneKind::Rotating { eta } => Some(*eta),
            _ => None,
        }
    }

    pub fn eval(&self, x: &Vec3) -> Vec3 {
        match &self.kind {
            PlaneKind::Zero => Vec3::zeros(),
            PlaneKind::Rotating { eta } => *eta * Vec3::z().cross(x),
            PlaneKind::Constant { v } => *v,
            PlaneKind::Custom { eval, .. } => eval(x),
        }
    }

    pub fn jacobian(&self, x: &Vec3) -> Mat3 {
        match &self.kind {
            PlaneKind::Zero => Mat3::zeros(),
            PlaneKind::Rotating { eta } => {
                Mat3::new(0.0, -eta, 0.0, *eta, 0.0, 0.0, 0.0, 0.0, 0.0)
            }
            PlaneKind::Constant { .. } => Mat3::zeros(),
            PlaneKind::Custom { eval, jac } => match jac {
                Some(j) => j(x),
                None => fd_jacobian(|p| eval(p), x),
            },
        }
    }

    /// Planar divergence `dV1/dx1 + dV2/dx2`.
    pub fn div_plane(&self, x: &Vec3) -> f64 {
        let j = self.jacobian(x);
        j[(0, 0)] + j[(1, 1)]
    }
}

#[derive(Clone)]
enum SurfaceKind {
    Zero,
    /// `W(rho) = sigma rho x axis`: cat's toy mechanism about a body axis.
    CatsToy { sigma: f64, axis: Vec3 },
    Custom { eval: FieldFn, jac: Option<JacFn> },
}

/// Prescribed velocity field on the body surface, body-frame coordinates.
#[derive(Clone)]
pub struct SurfaceField {
    kind: SurfaceKind,
}

impl fmt::Debug for SurfaceField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match &self.kind {
            SurfaceKind::Zero => "zero",
            SurfaceKind::CatsToy { .. } => "cats_toy",
            SurfaceKind::Custom { .. } => "custom",
        };
        write!(f, "SurfaceField({name})")
    }
}

impl SurfaceField {
    pub fn zero() -> Self {
        SurfaceField {
            kind: SurfaceKind::Zero,
        }
    }

    /// Internal device spinning the shell at rate `sigma` about the unit body
    /// axis `axis`.
    pub fn cats_toy(sigma: f64, axis: Vec3) -> Self {
        SurfaceField {
            kind: SurfaceKind::CatsToy {
                sigma,
                axis: axis.normalize(),
            },
        }
    }

    /// User field tangent to the surface; `jac` as in [`PlaneField::custom`].
    pub fn custom(
        eval: impl Fn(&Vec3) -> Vec3 + Send + Sync + 'static,
        jac: Option<Box<dyn Fn(&Vec3) -> Mat3 + Send + Sync>>,
    ) -> Self {
        SurfaceField {
            kind: SurfaceKind::Custom {
                eval: Arc::new(eval),
                jac: jac.map(|j| Arc::from(j) as JacFn),
            },
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, SurfaceKind::Zero)
    }

    /// `(sigma, axis)` when this is a cat's toy field.
    pub fn cats_toy_params(&self) -> Option<(f64, Vec3)> {
        match &self.kind {
            SurfaceKind::CatsToy { sigma, axis } => Some((*sigma, *axis)),
            _ => None,
        }
    }

    pub fn uses_fd_jacobian(&self) -> bool {
        matches!(&self.kind, SurfaceKind::Custom { jac: None, .. })
    }

    /// `W_b` at a surface point `rho` (body frame).
    pub fn eval_body(&self, rho: &Vec3) -> Vec3 {
        match &self.kind {
            SurfaceKind::Zero => Vec3::zeros(),
            SurfaceKind::CatsToy { sigma, axis } => *sigma * rho.cross(axis),
            SurfaceKind::Custom { eval, .. } => eval(rho),
        }
    }

    /// Jacobian of the smooth `R^3` extension of `W_b`.
    pub fn jacobian_body(&self, rho: &Vec3) -> Mat3 {
        match &self.kind {
            SurfaceKind::Zero => Mat3::zeros(),
            SurfaceKind::CatsToy { sigma, axis } => -*sigma * crate::algebra::hat(axis),
            SurfaceKind::Custom { eval, jac } => match jac {
                Some(j) => j(rho),
                None => fd_jacobian(|p| eval(p), rho),
            },
        }
    }
}

fn fd_jacobian(eval: impl Fn(&Vec3) -> Vec3, x: &Vec3) -> Mat3 {
    let mut jac = Mat3::zeros();
    for k in 0..3 {
        let mut hi = *x;
        let mut lo = *x;
        hi[k] += FD_STEP;
        lo[k] -= FD_STEP;
        let col = (eval(&hi) - eval(&lo)) / (2.0 * FD_STEP);
        jac.set_column(k, &col);
    }
    jac
}

/// Divergence over the unit sphere of a tangent field given as a smooth
/// `R^3` extension `w` with Jacobian `jac`:
/// `Tr(W'(gamma)) - gamma^T W'(gamma) gamma`.
///
/// The value does not depend on the chosen extension.
pub fn div_sphere_of(jac: &Mat3, gamma: &Vec3) -> f64 {
    jac.trace() - (gamma.transpose() * jac * gamma)[(0, 0)]
}

/// Spherical divergence of a surface field bound to a spherical body of
/// radius `r`, viewed as the field `gamma -> W_b(-r gamma)` on the unit sphere.
pub fn div_sphere(field: &SurfaceField, r: f64, gamma: &Vec3) -> f64 {
    // chain rule through rho = -r gamma
    let jac = field.jacobian_body(&(-r * gamma)) * -r;
    div_sphere_of(&jac, gamma)
}
