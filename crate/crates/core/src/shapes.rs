//! Body geometry: inverse Gauss map, inertia data and built-in shapes.
//!
//! The contact point in body coordinates is a function of the body-frame
//! vertical: `rho(gamma)` with the outward normal satisfying
//! `n_b(rho(gamma)) = -gamma`. Bodies of revolution are parametrized as
//! `rho(gamma) = (f1(g3) g1, f1(g3) g2, f2(g3))` with profile functions
//! `f1, f2` constrained by `f2' g3 = f1 g3 - (1 - g3^2) f1'`.
//!
//! Sign convention: the parametrization above together with the outward-normal
//! condition forces `f1 < 0` (a sphere of radius `r` centered at the mass
//! center has `f1 = -r`, `f2 = -r g3`, i.e. `rho = -r gamma`). The physical
//! check `<rho, gamma> < 0` (contact point below the mass center) is enforced
//! at construction.

use std::fmt;
use std::sync::Arc;

use crate::algebra::{Mat3, Vec3};
use thiserror::Error;

/// Unit-norm tolerance beyond which evaluators reject `gamma`.
const GAMMA_DOMAIN_TOL: f64 = 1e-6;
/// Profile residual tolerance on the construction-time check grid.
const PROFILE_RESIDUAL_TOL: f64 = 1e-8;
/// Chebyshev-spaced points used by the construction-time profile checks.
const PROFILE_GRID: usize = 201;

#[derive(Debug, Error)]
pub enum ShapeError {
    #[error("{name} must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("profile violates the shape ODE at gamma3 = {gamma3}: residual {residual:.3e}")]
    ShapeOdeViolation { gamma3: f64, residual: f64 },
    #[error("profile f1 vanishes at gamma3 = {gamma3}")]
    DegenerateProfile { gamma3: f64 },
    #[error("profile places the contact point above the mass center at gamma3 = {gamma3}")]
    ContactAboveCenter { gamma3: f64 },
    #[error("gamma is not a unit vector: |norm - 1| = {deviation:.3e}")]
    NonUnitGamma { deviation: f64 },
}

type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Profile functions of a body of revolution: `f1, f1', f2, f2'` on `[-1, 1]`.
#[derive(Clone)]
pub struct RevolutionProfile {
    f1: Profile,
    df1: Profile,
    f2: Profile,
    df2: Profile,
}

impl fmt::Debug for RevolutionProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RevolutionProfile").finish_non_exhaustive()
    }
}

impl RevolutionProfile {
    /// Builds a profile from explicit callables, checking the shape ODE on a
    /// Chebyshev grid together with non-degeneracy of `f1`.
    pub fn new(
        f1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        f2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, ShapeError> {
        let profile = RevolutionProfile {
            f1: Arc::new(f1),
            df1: Arc::new(df1),
            f2: Arc::new(f2),
            df2: Arc::new(df2),
        };
        profile.validate()?;
        Ok(profile)
    }

    /// Routh's sphere: spherical surface of radius `radius` whose geometric
    /// center sits at `offset * E3` from the mass center.
    ///
    /// `f1 = -radius`, `f2(g3) = offset - radius * g3`.
    pub fn routh(radius: f64, offset: f64) -> Result<Self, ShapeError> {
        if radius <= 0.0 {
            return Err(ShapeError::NonPositiveParameter {
                name: "radius",
                value: radius,
            });
        }
        Self::new(
            move |_| -radius,
            |_| 0.0,
            move |g3| offset - radius * g3,
            move |_| -radius,
        )
    }

    /// Polynomial profile `f1(g3) = e0 + e2 g3^2` with `f2` integrated from the
    /// shape ODE in closed form: `f2 = (e0 - 2 e2) g3 + e2 g3^3 + offset`.
    ///
    /// Gives a non-spherical body of revolution (nontrivial curvature
    /// variation) while keeping everything algebraic. `e0` must be negative.
    pub fn quadratic(e0: f64, e2: f64, offset: f64) -> Result<Self, ShapeError> {
        Self::new(
            move |g3| e0 + e2 * g3 * g3,
            move |g3| 2.0 * e2 * g3,
            move |g3| (e0 - 2.0 * e2) * g3 + e2 * g3.powi(3) + offset,
            move |g3| e0 - 2.0 * e2 + 3.0 * e2 * g3 * g3,
        )
    }

    pub fn f1(&self, g3: f64) -> f64 {
        (self.f1)(g3)
    }

    pub fn df1(&self, g3: f64) -> f64 {
        (self.df1)(g3)
    }

    pub fn f2(&self, g3: f64) -> f64 {
        (self.f2)(g3)
    }

    pub fn df2(&self, g3: f64) -> f64 {
        (self.df2)(g3)
    }

    /// `f2' g3 - f1 g3 + (1 - g3^2) f1'`; identically zero for a consistent profile.
    pub fn shape_ode_residual(&self, g3: f64) -> f64 {
        self.df2(g3) * g3 - self.f1(g3) * g3 + (1.0 - g3 * g3) * self.df1(g3)
    }

    fn validate(&self) -> Result<(), ShapeError> {
        for g3 in chebyshev_grid(PROFILE_GRID) {
            let residual = self.shape_ode_residual(g3);
            if residual.abs() > PROFILE_RESIDUAL_TOL {
                return Err(ShapeError::ShapeOdeViolation { gamma3: g3, residual });
            }
            if self.f1(g3).abs() < 1e-12 {
                return Err(ShapeError::DegenerateProfile { gamma3: g3 });
            }
            // height of the contact point relative to the mass center
            let height = self.f1(g3) * (1.0 - g3 * g3) + self.f2(g3) * g3;
            if height >= 0.0 {
                return Err(ShapeError::ContactAboveCenter { gamma3: g3 });
            }
        }
        Ok(())
    }
}

fn chebyshev_grid(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| (std::f64::consts::PI * k as f64 / (n - 1) as f64).cos())
}

#[derive(Clone, Debug)]
enum Geometry {
    /// Dynamically balanced sphere: `rho = -radius * gamma`.
    Sphere { radius: f64 },
    Revolution { profile: RevolutionProfile },
}

/// Mass, principal inertia and the inverse Gauss map of a convex body.
#[derive(Clone, Debug)]
pub struct BodyShape {
    mass: f64,
    inertia: Vec3,
    geometry: Geometry,
}

impl BodyShape {
    /// Sphere of radius `r` with the mass center at the geometric center and
    /// generic inertia (a Chaplygin sphere).
    pub fn balanced_sphere(m: f64, inertia: (f64, f64, f64), r: f64) -> Result<Self, ShapeError> {
        check_positive("mass", m)?;
        check_positive("I1", inertia.0)?;
        check_positive("I2", inertia.1)?;
        check_positive("I3", inertia.2)?;
        check_positive("radius", r)?;
        Ok(BodyShape {
            mass: m,
            inertia: Vec3::new(inertia.0, inertia.1, inertia.2),
            geometry: Geometry::Sphere { radius: r },
        })
    }

    /// Balanced sphere with all moments of inertia equal.
    pub fn homogeneous_sphere(m: f64, i: f64, r: f64) -> Result<Self, ShapeError> {
        Self::balanced_sphere(m, (i, i, i), r)
    }

    /// Axisymmetric body (`I2 = I1`) with surface given by a profile.
    pub fn revolution_body(
        m: f64,
        i1: f64,
        i3: f64,
        profile: RevolutionProfile,
    ) -> Result<Self, ShapeError> {
        check_positive("mass", m)?;
        check_positive("I1", i1)?;
        check_positive("I3", i3)?;
        Ok(BodyShape {
            mass: m,
            inertia: Vec3::new(i1, i1, i3),
            geometry: Geometry::Revolution { profile },
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Principal moments `(I1, I2, I3)`.
    pub fn inertia(&self) -> Vec3 {
        self.inertia
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self.geometry, Geometry::Sphere { .. })
    }

    /// Sphere radius, when the surface is spherical.
    pub fn radius(&self) -> Option<f64> {
        match &self.geometry {
            Geometry::Sphere { radius } => Some(*radius),
            Geometry::Revolution { .. } => None,
        }
    }

    pub fn profile(&self) -> Option<&RevolutionProfile> {
        match &self.geometry {
            Geometry::Sphere { .. } => None,
            Geometry::Revolution { profile } => Some(profile),
        }
    }

    /// Contact point `rho(gamma)` for unit `gamma`, renormalizing small drift
    /// and rejecting `gamma` further than 1e-6 from the unit sphere.
    pub fn gauss_inverse(&self, gamma: &Vec3) -> Result<Vec3, ShapeError> {
        let deviation = (gamma.norm() - 1.0).abs();
        if deviation > GAMMA_DOMAIN_TOL {
            return Err(ShapeError::NonUnitGamma { deviation });
        }
        Ok(self.rho(&gamma.normalize()))
    }

    /// `rho(gamma)` as a smooth formula on all of `R^3` (no normalization).
    /// This is the extension used by the dynamics and by finite-difference
    /// divergence checks.
    pub fn rho(&self, gamma: &Vec3) -> Vec3 {
        match &self.geometry {
            Geometry::Sphere { radius } => -radius * gamma,
            Geometry::Revolution { profile } => {
                let f1 = profile.f1(gamma.z);
                Vec3::new(f1 * gamma.x, f1 * gamma.y, profile.f2(gamma.z))
            }
        }
    }

    /// Jacobian `d rho / d gamma` of the smooth extension.
    pub fn drho(&self, gamma: &Vec3) -> Mat3 {
        match &self.geometry {
            Geometry::Sphere { radius } => Mat3::identity() * -radius,
            Geometry::Revolution { profile } => {
                let f1 = profile.f1(gamma.z);
                let df1 = profile.df1(gamma.z);
                let df2 = profile.df2(gamma.z);
                Mat3::new(
                    f1,
                    0.0,
                    df1 * gamma.x,
                    0.0,
                    f1,
                    df1 * gamma.y,
                    0.0,
                    0.0,
                    df2,
                )
            }
        }
    }

    /// Material derivative of the contact point along `gamma_dot = gamma x Omega`:
    /// `drho(gamma) * (gamma x Omega)`.
    pub fn rho_dot(&self, gamma: &Vec3, omega: &Vec3) -> Vec3 {
        self.drho(gamma) * gamma.cross(omega)
    }
}

fn check_positive(name: &'static str, value: f64) -> Result<(), ShapeError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ShapeError::NonPositiveParameter { name, value })
    }
}
