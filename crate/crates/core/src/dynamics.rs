//! Right-hand sides of the full and reduced systems, the momentum /
//! angular-velocity inversion, and typed integration wrappers.
//!
//! State of the full system: the momentum `M` about the contact point (body
//! frame), the attitude `B`, and the center-of-mass position `u` (space
//! frame). When the plane field vanishes the system drops to `(M, gamma)`;
//! for the homogeneous sphere on a rotating plane it closes on
//! `(M, gamma, U)` with `U` the body-frame center-of-mass position.

use crate::algebra::{hat, orthonormalize, Mat3, Rotation, Vec3};
use crate::fields::{PlaneField, SurfaceField};
use crate::ode::{self, OdeError, StepOpts, Trajectory};
use crate::shapes::{BodyShape, ShapeError};
use thiserror::Error;

/// Lower bound on the inversion denominator `1 - m<A rho, rho>`.
pub const SINGULAR_DENOM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("momentum inversion is singular: 1 - m<A rho, rho> = {denom:.3e}")]
    SingularInertia { denom: f64 },
    #[error("incompatible scenario: {0}")]
    Incompatible(&'static str),
    #[error(transparent)]
    Shape(#[from] ShapeError),
}

/// Immutable problem data shared by every right-hand side.
#[derive(Clone)]
pub struct ScenarioParams {
    pub shape: BodyShape,
    pub plane: PlaneField,
    pub surface: SurfaceField,
    pub gravity: f64,
}

impl ScenarioParams {
    pub fn new(
        shape: BodyShape,
        plane: PlaneField,
        surface: SurfaceField,
        gravity: f64,
    ) -> Result<Self, DynamicsError> {
        if !(gravity >= 0.0) {
            return Err(DynamicsError::Incompatible(
                "gravitational constant must be non-negative",
            ));
        }
        Ok(ScenarioParams {
            shape,
            plane,
            surface,
            gravity,
        })
    }

    fn require_sphere(&self) -> Result<f64, DynamicsError> {
        self.shape
            .radius()
            .ok_or(DynamicsError::Incompatible("spherical body required"))
    }

    fn require_cats_toy(&self) -> Result<(f64, Vec3), DynamicsError> {
        self.surface
            .cats_toy_params()
            .ok_or(DynamicsError::Incompatible("cat's toy surface field required"))
    }

    fn require_homogeneous(&self) -> Result<f64, DynamicsError> {
        let i = self.shape.inertia();
        if (i.x - i.y).abs() > 1e-12 || (i.x - i.z).abs() > 1e-12 {
            return Err(DynamicsError::Incompatible(
                "equal moments of inertia required",
            ));
        }
        Ok(i.x)
    }
}

/// Full system state `(M, B, u)`.
#[derive(Debug, Clone, Copy)]
pub struct FullState {
    pub m: Vec3,
    pub b: Rotation,
    pub u: Vec3,
}

impl FullState {
    pub fn to_array(&self) -> [f64; 15] {
        let mut a = [0.0; 15];
        a[0..3].copy_from_slice(self.m.as_slice());
        let bm = self.b.matrix();
        for r in 0..3 {
            for c in 0..3 {
                a[3 + 3 * r + c] = bm[(r, c)];
            }
        }
        a[12..15].copy_from_slice(self.u.as_slice());
        a
    }

    /// Unpacks without re-validating the attitude block; used on integrator
    /// states where the rotation invariants hold up to stabilization drift.
    pub fn from_array(a: &[f64; 15]) -> Self {
        let m = Vec3::new(a[0], a[1], a[2]);
        let bm = Mat3::from_fn(|r, c| a[3 + 3 * r + c]);
        let u = Vec3::new(a[12], a[13], a[14]);
        FullState {
            m,
            b: Rotation::from_matrix_unchecked(bm),
            u,
        }
    }
}

/// SE(2)-reduced state `(M, gamma)` for a vanishing plane field.
#[derive(Debug, Clone, Copy)]
pub struct ReducedState {
    pub m: Vec3,
    pub gamma: Vec3,
}

impl ReducedState {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.m.x, self.m.y, self.m.z, self.gamma.x, self.gamma.y, self.gamma.z,
        ]
    }

    pub fn from_array(a: &[f64; 6]) -> Self {
        ReducedState {
            m: Vec3::new(a[0], a[1], a[2]),
            gamma: Vec3::new(a[3], a[4], a[5]),
        }
    }
}

/// Reduced state `(M, gamma, U)` of the homogeneous sphere on a rotating
/// plane; `U` is the body-frame center-of-mass position, `<U, gamma> = r`.
#[derive(Debug, Clone, Copy)]
pub struct SphereReducedState {
    pub m: Vec3,
    pub gamma: Vec3,
    pub u_body: Vec3,
}

impl SphereReducedState {
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.m.x,
            self.m.y,
            self.m.z,
            self.gamma.x,
            self.gamma.y,
            self.gamma.z,
            self.u_body.x,
            self.u_body.y,
            self.u_body.z,
        ]
    }

    pub fn from_array(a: &[f64; 9]) -> Self {
        SphereReducedState {
            m: Vec3::new(a[0], a[1], a[2]),
            gamma: Vec3::new(a[3], a[4], a[5]),
            u_body: Vec3::new(a[6], a[7], a[8]),
        }
    }
}

/// `A(gamma) = (I + m ||rho||^2 id)^{-1}`, diagonal and positive-definite.
pub fn a_matrix(shape: &BodyShape, gamma: &Vec3) -> Mat3 {
    let rho = shape.rho(gamma);
    let s = shape.mass() * rho.norm_squared();
    let i = shape.inertia();
    Mat3::from_diagonal(&Vec3::new(
        1.0 / (i.x + s),
        1.0 / (i.y + s),
        1.0 / (i.z + s),
    ))
}

/// Core of the momentum inversion: given `N = M + zeta`, returns
/// `Omega = A (N + m <N, A rho> / (1 - m <A rho, rho>) rho)`.
fn omega_core(shape: &BodyShape, gamma: &Vec3, n: &Vec3) -> Result<Vec3, DynamicsError> {
    let rho = shape.rho(gamma);
    let a = a_matrix(shape, gamma);
    let arho = a * rho;
    let denom = 1.0 - shape.mass() * arho.dot(&rho);
    if denom <= SINGULAR_DENOM_TOL {
        return Err(DynamicsError::SingularInertia { denom });
    }
    Ok(a * (n + rho * (shape.mass() * n.dot(&arho) / denom)))
}

/// Combined slip velocity in the body frame: `B^{-1} V_s(x) + W_b(rho)`.
fn slip_body(params: &ScenarioParams, b: &Rotation, u: &Vec3, gamma: &Vec3) -> Vec3 {
    let rho = params.shape.rho(gamma);
    let x = u + b.apply(&rho);
    b.apply_inverse(&params.plane.eval(&x)) + params.surface.eval_body(&rho)
}

/// `M = I Omega + m rho x (Omega x rho - B^{-1} V_s(x) - W_b(rho))`.
pub fn momentum_from_omega(
    params: &ScenarioParams,
    b: &Rotation,
    u: &Vec3,
    omega: &Vec3,
) -> Vec3 {
    let gamma = b.gamma();
    let rho = params.shape.rho(&gamma);
    let i = params.shape.inertia();
    let vw = slip_body(params, b, u, &gamma);
    Vec3::new(i.x * omega.x, i.y * omega.y, i.z * omega.z)
        + params.shape.mass() * rho.cross(&(omega.cross(&rho) - vw))
}

/// Inverts the affine map `Omega -> M` at fixed `(B, u)`.
pub fn omega_from_momentum(
    params: &ScenarioParams,
    b: &Rotation,
    u: &Vec3,
    m: &Vec3,
) -> Result<Vec3, DynamicsError> {
    let gamma = b.gamma();
    let rho = params.shape.rho(&gamma);
    let vw = slip_body(params, b, u, &gamma);
    let zeta = params.shape.mass() * rho.cross(&vw);
    omega_core(&params.shape, &gamma, &(m + zeta))
}

/// Height of the center of mass under the contact constraint:
/// `u3 = -<rho(gamma), gamma>`.
pub fn holonomic_u3(shape: &BodyShape, gamma: &Vec3) -> f64 {
    -shape.rho(gamma).dot(gamma)
}

/// Full equations of motion; returns `(M_dot, B_dot, u_dot)`.
pub fn full_rhs(
    params: &ScenarioParams,
    s: &FullState,
) -> Result<(Vec3, Mat3, Vec3), DynamicsError> {
    let gamma = s.b.gamma();
    let rho = params.shape.rho(&gamma);
    let x = s.u + s.b.apply(&rho);
    let vw = s.b.apply_inverse(&params.plane.eval(&x)) + params.surface.eval_body(&rho);
    let zeta = params.shape.mass() * rho.cross(&vw);
    let omega = omega_core(&params.shape, &gamma, &(s.m + zeta))?;
    let rho_dot = params.shape.rho_dot(&gamma, &omega);
    let mg = params.shape.mass() * params.gravity;
    let m_dot = s.m.cross(&omega)
        + params.shape.mass() * rho_dot.cross(&omega.cross(&rho))
        + mg * rho.cross(&gamma)
        + params.shape.mass() * vw.cross(&(rho_dot + omega.cross(&rho)));
    let b_dot = s.b.matrix() * hat(&omega);
    let u_dot = s.b.apply(&rho.cross(&omega))
        + params.plane.eval(&x)
        + s.b.apply(&params.surface.eval_body(&rho));
    Ok((m_dot, b_dot, u_dot))
}

/// Angular velocity of the SE(2)-reduced system with `V = 0` and an
/// arbitrary body shape.
pub fn reduced_omega_v0(
    params: &ScenarioParams,
    s: &ReducedState,
) -> Result<Vec3, DynamicsError> {
    let rho = params.shape.rho(&s.gamma);
    let w = params.surface.eval_body(&rho);
    let zeta = params.shape.mass() * rho.cross(&w);
    omega_core(&params.shape, &s.gamma, &(s.m + zeta))
}

/// SE(2)-reduced equations for `V = 0`; returns `(M_dot, gamma_dot)`.
pub fn reduced_rhs_v0(
    params: &ScenarioParams,
    s: &ReducedState,
) -> Result<(Vec3, Vec3), DynamicsError> {
    let gamma = s.gamma;
    let rho = params.shape.rho(&gamma);
    let w = params.surface.eval_body(&rho);
    let zeta = params.shape.mass() * rho.cross(&w);
    let omega = omega_core(&params.shape, &gamma, &(s.m + zeta))?;
    let rho_dot = params.shape.rho_dot(&gamma, &omega);
    let mg = params.shape.mass() * params.gravity;
    let m_dot = s.m.cross(&omega)
        + params.shape.mass() * rho_dot.cross(&omega.cross(&rho))
        + mg * rho.cross(&gamma)
        + params.shape.mass() * w.cross(&(rho_dot + omega.cross(&rho)));
    Ok((m_dot, gamma.cross(&omega)))
}

/// Angular velocity of the reduced balanced-sphere system (`V = 0`,
/// arbitrary surface field).
pub fn chaplygin_omega(
    params: &ScenarioParams,
    s: &ReducedState,
) -> Result<Vec3, DynamicsError> {
    params.require_sphere()?;
    let rho = params.shape.rho(&s.gamma);
    let w = params.surface.eval_body(&rho);
    let zeta = params.shape.mass() * rho.cross(&w);
    omega_core(&params.shape, &s.gamma, &(s.m + zeta))
}

/// Balanced sphere with `V = 0`: the momentum equation collapses to
/// `M_dot = M x Omega` because `rho` is parallel to `gamma`.
pub fn chaplygin_sphere_rhs(
    params: &ScenarioParams,
    s: &ReducedState,
) -> Result<(Vec3, Vec3), DynamicsError> {
    let omega = chaplygin_omega(params, s)?;
    Ok((s.m.cross(&omega), s.gamma.cross(&omega)))
}

/// Vertical-momentum subcase `M = lambda gamma`: the sphere dynamics closes
/// on `gamma` alone. Returns `gamma_dot`.
pub fn mparallel_rhs(
    params: &ScenarioParams,
    lambda: f64,
    gamma: &Vec3,
) -> Result<Vec3, DynamicsError> {
    let s = ReducedState {
        m: lambda * gamma,
        gamma: *gamma,
    };
    let omega = chaplygin_omega(params, &s)?;
    Ok(gamma.cross(&omega))
}

/// The cat's-toy contribution to `Omega` divided by `sigma`:
/// `mr^2 A (t + mr^2 <t, A gamma> / (1 - mr^2 <A gamma, gamma>) gamma)`
/// with `t = gamma x (gamma x axis)`.
pub fn omega_tilde_a(
    shape: &BodyShape,
    axis: &Vec3,
    gamma: &Vec3,
) -> Result<Vec3, DynamicsError> {
    let r = shape
        .radius()
        .ok_or(DynamicsError::Incompatible("spherical body required"))?;
    let mr2 = shape.mass() * r * r;
    let t = gamma.cross(&gamma.cross(axis));
    omega_core(shape, gamma, &(mr2 * t))
}

/// Splits the balanced-sphere angular velocity into the momentum-driven part
/// and the cat's-toy part, `Omega = Omega_l + Omega_a`.
pub fn omega_split(
    params: &ScenarioParams,
    s: &ReducedState,
) -> Result<(Vec3, Vec3), DynamicsError> {
    params.require_sphere()?;
    let (sigma, axis) = params.require_cats_toy()?;
    let omega_l = omega_core(&params.shape, &s.gamma, &s.m)?;
    let omega_a = sigma * omega_tilde_a(&params.shape, &axis, &s.gamma)?;
    Ok((omega_l, omega_a))
}

/// Small-momentum limit of the balanced sphere with a cat's toy, in the
/// rescaled time `tau = sigma t`: `M' = M x Omega~_a`, `gamma' = gamma x
/// Omega~_a`.
pub fn limit_rhs(
    params: &ScenarioParams,
    s: &ReducedState,
) -> Result<(Vec3, Vec3), DynamicsError> {
    let (_, axis) = params.require_cats_toy()?;
    let om = omega_tilde_a(&params.shape, &axis, &s.gamma)?;
    Ok((s.m.cross(&om), s.gamma.cross(&om)))
}

/// Closed-form angular velocity of the homogeneous sphere with a cat's toy
/// on a uniformly rotating plane, as a function of `(M, gamma, U)`.
pub fn homsphere_omega(
    params: &ScenarioParams,
    s: &SphereReducedState,
) -> Result<Vec3, DynamicsError> {
    let r = params.require_sphere()?;
    let i = params.require_homogeneous()?;
    let (sigma, axis) = params.require_cats_toy()?;
    let eta = params
        .plane
        .rotation_rate()
        .ok_or(DynamicsError::Incompatible("rotating plane field required"))?;
    let m_mass = params.shape.mass();
    let mr2 = m_mass * r * r;
    let g = s.gamma;
    Ok((s.m
        + (mr2 / i) * s.m.dot(&g) * g
        + m_mass * r * eta * g.cross(&s.u_body.cross(&g))
        + mr2 * sigma * g.cross(&g.cross(&axis)))
        / (i + mr2))
}

/// Reduced homogeneous-sphere system; returns `(M_dot, gamma_dot, U_dot)`.
pub fn homsphere_reduced_rhs(
    params: &ScenarioParams,
    s: &SphereReducedState,
) -> Result<(Vec3, Vec3, Vec3), DynamicsError> {
    let r = params.require_sphere()?;
    let (sigma, axis) = params.require_cats_toy()?;
    let eta = params
        .plane
        .rotation_rate()
        .ok_or(DynamicsError::Incompatible("rotating plane field required"))?;
    let omega = homsphere_omega(params, s)?;
    let g = s.gamma;
    let u = s.u_body;
    let u_dot = -r * g.cross(&omega) + u.cross(&omega)
        - r * sigma * g.cross(&axis)
        - eta * u.cross(&g);
    Ok((s.m.cross(&omega), g.cross(&omega), u_dot))
}

// ---------------------------------------------------------------------------
// Array-form right-hand sides and projections for the integrator.
// ---------------------------------------------------------------------------

pub fn full_rhs_array(
    params: &ScenarioParams,
    y: &[f64; 15],
) -> Result<[f64; 15], DynamicsError> {
    let s = FullState::from_array(y);
    let (m_dot, b_dot, u_dot) = full_rhs(params, &s)?;
    let mut out = [0.0; 15];
    out[0..3].copy_from_slice(m_dot.as_slice());
    for r in 0..3 {
        for c in 0..3 {
            out[3 + 3 * r + c] = b_dot[(r, c)];
        }
    }
    out[12..15].copy_from_slice(u_dot.as_slice());
    Ok(out)
}

fn pack6(a: Vec3, b: Vec3) -> [f64; 6] {
    [a.x, a.y, a.z, b.x, b.y, b.z]
}

pub fn reduced_rhs_v0_array(
    params: &ScenarioParams,
    y: &[f64; 6],
) -> Result<[f64; 6], DynamicsError> {
    let (m_dot, g_dot) = reduced_rhs_v0(params, &ReducedState::from_array(y))?;
    Ok(pack6(m_dot, g_dot))
}

pub fn chaplygin_rhs_array(
    params: &ScenarioParams,
    y: &[f64; 6],
) -> Result<[f64; 6], DynamicsError> {
    let (m_dot, g_dot) = chaplygin_sphere_rhs(params, &ReducedState::from_array(y))?;
    Ok(pack6(m_dot, g_dot))
}

pub fn limit_rhs_array(
    params: &ScenarioParams,
    y: &[f64; 6],
) -> Result<[f64; 6], DynamicsError> {
    let (m_dot, g_dot) = limit_rhs(params, &ReducedState::from_array(y))?;
    Ok(pack6(m_dot, g_dot))
}

pub fn homsphere_rhs_array(
    params: &ScenarioParams,
    y: &[f64; 9],
) -> Result<[f64; 9], DynamicsError> {
    let (m_dot, g_dot, u_dot) =
        homsphere_reduced_rhs(params, &SphereReducedState::from_array(y))?;
    Ok([
        m_dot.x, m_dot.y, m_dot.z, g_dot.x, g_dot.y, g_dot.z, u_dot.x, u_dot.y, u_dot.z,
    ])
}

/// Stabilization for the full system: re-orthonormalize the attitude block
/// and reset the center-of-mass height to the constrained value.
pub fn full_projection(shape: BodyShape) -> Box<dyn Fn(&mut [f64; 15])> {
    Box::new(move |y: &mut [f64; 15]| {
        let bm = Mat3::from_fn(|r, c| y[3 + 3 * r + c]);
        if let Ok(rot) = orthonormalize(&bm) {
            let m = rot.matrix();
            for r in 0..3 {
                for c in 0..3 {
                    y[3 + 3 * r + c] = m[(r, c)];
                }
            }
        }
        let gamma = Vec3::new(y[9], y[10], y[11]);
        y[14] = holonomic_u3(&shape, &gamma);
    })
}

/// Stabilization for `(M, gamma)` systems: renormalize the vertical.
pub fn reduced_projection() -> Box<dyn Fn(&mut [f64; 6])> {
    Box::new(|y: &mut [f64; 6]| {
        let n = (y[3] * y[3] + y[4] * y[4] + y[5] * y[5]).sqrt();
        y[3] /= n;
        y[4] /= n;
        y[5] /= n;
    })
}

/// Stabilization for `(M, gamma, U)`: renormalize the vertical and shift `U`
/// along `gamma` to restore `<U, gamma> = r`.
pub fn homsphere_projection(r: f64) -> Box<dyn Fn(&mut [f64; 9])> {
    Box::new(move |y: &mut [f64; 9]| {
        let n = (y[3] * y[3] + y[4] * y[4] + y[5] * y[5]).sqrt();
        y[3] /= n;
        y[4] /= n;
        y[5] /= n;
        let dot = y[6] * y[3] + y[7] * y[4] + y[8] * y[5];
        let corr = r - dot;
        y[6] += corr * y[3];
        y[7] += corr * y[4];
        y[8] += corr * y[5];
    })
}

// ---------------------------------------------------------------------------
// Typed integration wrappers.
// ---------------------------------------------------------------------------

pub type DynResult<T> = Result<T, OdeError<DynamicsError>>;

pub fn integrate_full(
    params: &ScenarioParams,
    s0: &FullState,
    t_span: (f64, f64),
    opts: StepOpts,
) -> DynResult<Trajectory<15>> {
    ode::integrate(
        |_t, y| full_rhs_array(params, y),
        Some(full_projection(params.shape.clone())),
        s0.to_array(),
        t_span.0,
        t_span.1,
        opts,
    )
}

pub fn integrate_reduced_v0(
    params: &ScenarioParams,
    s0: &ReducedState,
    t_span: (f64, f64),
    opts: StepOpts,
) -> DynResult<Trajectory<6>> {
    ode::integrate(
        |_t, y| reduced_rhs_v0_array(params, y),
        Some(reduced_projection()),
        s0.to_array(),
        t_span.0,
        t_span.1,
        opts,
    )
}

pub fn integrate_chaplygin(
    params: &ScenarioParams,
    s0: &ReducedState,
    t_span: (f64, f64),
    opts: StepOpts,
) -> DynResult<Trajectory<6>> {
    ode::integrate(
        |_t, y| chaplygin_rhs_array(params, y),
        Some(reduced_projection()),
        s0.to_array(),
        t_span.0,
        t_span.1,
        opts,
    )
}

pub fn integrate_limit(
    params: &ScenarioParams,
    s0: &ReducedState,
    t_span: (f64, f64),
    opts: StepOpts,
) -> DynResult<Trajectory<6>> {
    ode::integrate(
        |_t, y| limit_rhs_array(params, y),
        Some(reduced_projection()),
        s0.to_array(),
        t_span.0,
        t_span.1,
        opts,
    )
}

pub fn integrate_homsphere(
    params: &ScenarioParams,
    s0: &SphereReducedState,
    t_span: (f64, f64),
    opts: StepOpts,
) -> DynResult<Trajectory<9>> {
    let r = params
        .shape
        .radius()
        .ok_or(OdeError::Rhs(DynamicsError::Incompatible(
            "spherical body required",
        )))?;
    ode::integrate(
        |_t, y| homsphere_rhs_array(params, y),
        Some(homsphere_projection(r)),
        s0.to_array(),
        t_span.0,
        t_span.1,
        opts,
    )
}
