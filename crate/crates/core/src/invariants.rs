//! Conserved quantities and invariant-measure densities: moving energies,
//! momentum integrals, the vertical-momentum sphere integrals and measures,
//! the small-momentum limit integrals, and the body-of-revolution first
//! integrals built from a fundamental-solution table.

use nalgebra::{Matrix2, Vector2};
use thiserror::Error;

use crate::algebra::Vec3;
use crate::dynamics::{
    a_matrix, homsphere_omega, omega_from_momentum, reduced_omega_v0, DynamicsError, FullState,
    ReducedState, ScenarioParams, SphereReducedState,
};
use crate::ode::{self, OdeError, StepOpts, Trajectory};
use crate::shapes::RevolutionProfile;

/// Tolerance for axis / inertia compatibility checks in variant preconditions.
const COMPAT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum InvariantError {
    #[error("integral variant incompatible with scenario: {0}")]
    VariantMismatch(&'static str),
    #[error(
        "integral undefined: epsilon = {epsilon:.6} <= threshold {threshold:.6}; \
         use the exponential variant"
    )]
    DomainError { epsilon: f64, threshold: f64 },
    #[error("fundamental-solution matrix is singular at gamma3 = {gamma3:.6}")]
    SingularTable { gamma3: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("table construction failed: {0}")]
    Ode(#[from] OdeError<DynamicsError>),
}

/// Conservation record for one scalar quantity sampled along a trajectory.
///
/// The drift is `max |F(t) - F(0)| / max(|F(0)|, 1e-12)`; the absolute
/// fallback keeps zero-valued integrals meaningful.
#[derive(Debug, Clone)]
pub struct IntegralReport {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub drift: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IntegralReport {
    pub fn from_series(
        name: impl Into<String>,
        times: Vec<f64>,
        values: Vec<f64>,
        tolerance: f64,
    ) -> Self {
        let drift = relative_drift(&values);
        IntegralReport {
            name: name.into(),
            times,
            values,
            drift,
            tolerance,
            pass: drift < tolerance,
        }
    }
}

/// `max |v - v[0]| / max(|v[0]|, 1e-12)` over the series.
pub fn relative_drift(values: &[f64]) -> f64 {
    let Some(&v0) = values.first() else {
        return 0.0;
    };
    let scale = v0.abs().max(1e-12);
    values
        .iter()
        .fold(0.0_f64, |acc, v| acc.max((v - v0).abs()))
        / scale
}

// ---------------------------------------------------------------------------
// Momentum integrals.
// ---------------------------------------------------------------------------

/// Projection of the momentum on a fixed spatial direction: `<M, B^{-1} w>`.
///
/// For `w = e1, e2, e3` this gives `<M, alpha>`, `<M, beta>`, `<M, gamma>`,
/// all conserved for a balanced sphere regardless of the surface field.
pub fn spatial_momentum(s: &FullState, w: &Vec3) -> f64 {
    s.m.dot(&s.b.apply_inverse(w))
}

/// `(||M||^2, <M, gamma>, ||gamma||^2)` for the reduced balanced sphere.
pub fn reduced_sphere_integrals(s: &ReducedState) -> (f64, f64, f64) {
    (
        s.m.norm_squared(),
        s.m.dot(&s.gamma),
        s.gamma.norm_squared(),
    )
}

// ---------------------------------------------------------------------------
// Moving energies.
// ---------------------------------------------------------------------------

/// Which symmetry generates the conserved moving energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyVariant {
    /// Plane rotating uniformly about the origin, no surface field.
    RotatingPlane,
    /// Plane translating uniformly (or at rest), no surface field.
    Translation,
    /// Axisymmetric body with a cat's toy about its symmetry axis, plane at
    /// rest or translating uniformly.
    Axisymmetric,
    /// Axisymmetric body with a cat's toy on a rotating plane.
    General,
    /// Homogeneous sphere with a cat's toy on a rotating plane.
    HomogeneousSphere,
}

fn require_cats_toy_e3(params: &ScenarioParams) -> Result<f64, InvariantError> {
    let (sigma, axis) = params
        .surface
        .cats_toy_params()
        .ok_or(InvariantError::VariantMismatch(
            "cat's toy surface field required",
        ))?;
    if (axis - Vec3::z()).norm() > COMPAT_TOL {
        return Err(InvariantError::VariantMismatch(
            "cat's toy axis must be the body symmetry axis E3",
        ));
    }
    Ok(sigma)
}

fn require_axisymmetric_inertia(params: &ScenarioParams) -> Result<(), InvariantError> {
    let i = params.shape.inertia();
    if (i.x - i.y).abs() > COMPAT_TOL {
        return Err(InvariantError::VariantMismatch(
            "first two moments of inertia must be equal",
        ));
    }
    Ok(())
}

/// The conserved moving energy of the selected symmetry variant, evaluated
/// on a full state. `Omega` is recovered from the momentum.
pub fn moving_energy(
    params: &ScenarioParams,
    s: &FullState,
    variant: EnergyVariant,
) -> Result<f64, InvariantError> {
    let gamma = s.b.gamma();
    let rho = params.shape.rho(&gamma);
    let omega = omega_from_momentum(params, &s.b, &s.u, &s.m)?;
    let inertia = params.shape.inertia();
    let iomega = inertia.component_mul(&omega);
    let m = params.shape.mass();
    let g = params.gravity;
    let e3 = Vec3::z();

    match variant {
        EnergyVariant::RotatingPlane => {
            if !params.surface.is_zero() {
                return Err(InvariantError::VariantMismatch(
                    "surface field must vanish",
                ));
            }
            let eta = params
                .plane
                .rotation_rate()
                .ok_or(InvariantError::VariantMismatch("rotating plane required"))?;
            // cross term: minus the momentum of the rotation generator,
            // consistent with the combined-symmetry formula at sigma = 0
            Ok(0.5 * iomega.dot(&omega) + 0.5 * m * rho.cross(&omega).norm_squared()
                - m * g * rho.dot(&gamma)
                - eta * (iomega + m * rho.cross(&omega.cross(&rho))).dot(&gamma)
                + 0.5 * m * eta * eta * (rho.norm_squared() - s.u.norm_squared()))
        }
        EnergyVariant::Translation => {
            if !params.surface.is_zero() {
                return Err(InvariantError::VariantMismatch(
                    "surface field must vanish",
                ));
            }
            if params.plane.constant_value().is_none() {
                return Err(InvariantError::VariantMismatch(
                    "uniform plane field required",
                ));
            }
            Ok(0.5 * iomega.dot(&omega) + 0.5 * m * rho.cross(&omega).norm_squared()
                - m * g * rho.dot(&gamma))
        }
        EnergyVariant::Axisymmetric => {
            require_axisymmetric_inertia(params)?;
            let sigma = require_cats_toy_e3(params)?;
            if params.plane.constant_value().is_none() {
                return Err(InvariantError::VariantMismatch(
                    "uniform plane field required",
                ));
            }
            let os = omega + sigma * e3;
            Ok(0.5 * inertia.component_mul(&os).dot(&os)
                + 0.5 * m * rho.cross(&os).norm_squared()
                - m * g * rho.dot(&gamma))
        }
        EnergyVariant::General => {
            require_axisymmetric_inertia(params)?;
            let sigma = require_cats_toy_e3(params)?;
            let eta = params
                .plane
                .rotation_rate()
                .ok_or(InvariantError::VariantMismatch("rotating plane required"))?;
            let os = omega + sigma * e3;
            Ok(0.5 * iomega.dot(&omega) + iomega.dot(&(-eta * gamma + sigma * e3))
                + 0.5 * m * rho.cross(&os).norm_squared()
                - m * eta * rho.cross(&os).dot(&rho.cross(&gamma))
                + 0.5 * m * eta * eta * (rho.norm_squared() - s.u.norm_squared())
                - m * g * rho.dot(&gamma))
        }
        EnergyVariant::HomogeneousSphere => {
            let r = params
                .shape
                .radius()
                .ok_or(InvariantError::VariantMismatch("spherical body required"))?;
            if (inertia.x - inertia.y).abs() > COMPAT_TOL
                || (inertia.x - inertia.z).abs() > COMPAT_TOL
            {
                return Err(InvariantError::VariantMismatch(
                    "equal moments of inertia required",
                ));
            }
            let sigma = require_cats_toy_e3(params)?;
            let eta = params
                .plane
                .rotation_rate()
                .ok_or(InvariantError::VariantMismatch("rotating plane required"))?;
            let u_body = s.b.apply_inverse(&s.u);
            let os = omega + sigma * e3;
            Ok(0.5 * inertia.x * os.norm_squared()
                + 0.5 * m * r * r * gamma.cross(&os).norm_squared()
                - 0.5 * m * eta * eta * u_body.norm_squared())
        }
    }
}

// ---------------------------------------------------------------------------
// Vertical-momentum sphere: integrals and measures.
// ---------------------------------------------------------------------------

struct SphereCatsToy {
    m: f64,
    r: f64,
    i3: f64,
    sigma: f64,
}

fn sphere_cats_toy(params: &ScenarioParams) -> Result<SphereCatsToy, InvariantError> {
    let r = params
        .shape
        .radius()
        .ok_or(InvariantError::VariantMismatch("spherical body required"))?;
    let sigma = require_cats_toy_e3(params)?;
    Ok(SphereCatsToy {
        m: params.shape.mass(),
        r,
        i3: params.shape.inertia().z,
        sigma,
    })
}

/// `sqrt(1 - m r^2 <gamma, A gamma>)`, the common denominator of the sphere
/// integrals and measures.
fn sphere_denominator(params: &ScenarioParams, gamma: &Vec3) -> f64 {
    let r = params.shape.radius().expect("spherical body");
    let a = a_matrix(&params.shape, gamma);
    let mr2 = params.shape.mass() * r * r;
    (1.0 - mr2 * (a * gamma).dot(gamma)).sqrt()
}

/// The non-dimensional momentum-to-drive ratio `||M|| / (m r^2 |sigma|)` and
/// the threshold `I3 / (I3 + m r^2)` separating the two integral regimes.
pub fn mparallel_regime(
    params: &ScenarioParams,
    lambda: f64,
) -> Result<(f64, f64), InvariantError> {
    let p = sphere_cats_toy(params)?;
    let mr2 = p.m * p.r * p.r;
    Ok((lambda.abs() / (mr2 * p.sigma.abs()), p.i3 / (p.i3 + mr2)))
}

fn mparallel_linear(params: &ScenarioParams, lambda: f64, gamma3: f64) -> f64 {
    let p = sphere_cats_toy(params).expect("sphere with cat's toy");
    let mr2 = p.m * p.r * p.r;
    lambda * (p.i3 + mr2) + mr2 * p.sigma * p.i3 * gamma3
}

fn mparallel_f_raw(params: &ScenarioParams, lambda: f64, gamma: &Vec3) -> f64 {
    let p = sphere_cats_toy(params).expect("sphere with cat's toy");
    let mr2 = p.m * p.r * p.r;
    mparallel_linear(params, lambda, gamma.z).abs().powf(-mr2 / p.i3)
        / sphere_denominator(params, gamma)
}

/// First integral of the vertical-momentum sphere in the fast regime.
///
/// Defined only when `epsilon > I3/(I3 + m r^2)`, where the linear factor
/// inside the absolute value cannot vanish; otherwise a `DomainError`
/// directs the caller to the smooth exponential integral.
pub fn mparallel_integral_f(
    params: &ScenarioParams,
    lambda: f64,
    gamma: &Vec3,
) -> Result<f64, InvariantError> {
    let (epsilon, threshold) = mparallel_regime(params, lambda)?;
    if epsilon <= threshold {
        return Err(InvariantError::DomainError { epsilon, threshold });
    }
    Ok(mparallel_f_raw(params, lambda, gamma))
}

/// Smooth first integral for the slow regime: `exp(-f)` away from the
/// invariant parallel where the linear factor vanishes, `0` on it.
pub fn mparallel_integral_g(
    params: &ScenarioParams,
    lambda: f64,
    gamma: &Vec3,
) -> Result<f64, InvariantError> {
    sphere_cats_toy(params)?;
    if mparallel_linear(params, lambda, gamma.z) == 0.0 {
        return Ok(0.0);
    }
    Ok((-mparallel_f_raw(params, lambda, gamma)).exp())
}

/// Invariant-measure density of the vertical-momentum sphere: the positive
/// density `mu = |...|^{-1}` in the fast regime, the degenerate density
/// `nu = g * mu` (vanishing on the invariant parallel) otherwise.
pub fn mparallel_measure_density(
    params: &ScenarioParams,
    lambda: f64,
    gamma: &Vec3,
) -> Result<f64, InvariantError> {
    let (epsilon, threshold) = mparallel_regime(params, lambda)?;
    let lin = mparallel_linear(params, lambda, gamma.z);
    if epsilon > threshold {
        return Ok(lin.abs().recip());
    }
    if lin == 0.0 {
        return Ok(0.0);
    }
    Ok(mparallel_integral_g(params, lambda, gamma)? / lin.abs())
}

// ---------------------------------------------------------------------------
// Small-momentum limit: integral and measure.
// ---------------------------------------------------------------------------

/// Smooth first integral of the small-momentum limit system; vanishes on the
/// equator `gamma3 = 0` and the exponent decays away from it.
pub fn limit_integral_k(params: &ScenarioParams, gamma: &Vec3) -> Result<f64, InvariantError> {
    let p = sphere_cats_toy(params)?;
    if gamma.z == 0.0 {
        return Ok(0.0);
    }
    let mr2 = p.m * p.r * p.r;
    let exponent = gamma.z.abs().powf(-mr2 / p.i3) / sphere_denominator(params, gamma);
    Ok((-exponent).exp())
}

/// Invariant-measure density `chi = k |gamma3|^{-1}` of the limit system,
/// extended by `0` on the equator (the exponential wins the competition).
pub fn limit_measure_chi(params: &ScenarioParams, gamma: &Vec3) -> Result<f64, InvariantError> {
    let p = sphere_cats_toy(params)?;
    if gamma.z == 0.0 {
        return Ok(0.0);
    }
    let mr2 = p.m * p.r * p.r;
    let exponent = gamma.z.abs().powf(-mr2 / p.i3) / sphere_denominator(params, gamma);
    Ok((-exponent - gamma.z.abs().ln()).exp())
}

// ---------------------------------------------------------------------------
// Chaplygin measures.
// ---------------------------------------------------------------------------

/// Density of the invariant measure of the balanced sphere with `W = 0` and
/// a divergence-free plane field, on the `(M, u, alpha, beta, gamma)` system.
pub fn chaplygin_w0_measure_density(
    params: &ScenarioParams,
    gamma: &Vec3,
) -> Result<f64, InvariantError> {
    params
        .shape
        .radius()
        .ok_or(InvariantError::VariantMismatch("spherical body required"))?;
    Ok(sphere_denominator(params, gamma).recip())
}

/// Chaplygin's density factor for a body of revolution:
/// `mu(gamma3) = sqrt(I1 I3 + m I1 f1^2 (1 - gamma3^2) + m I3 f2^2)`.
/// The invariant measure of the reduced system is `(1/mu) dM dgamma`.
pub fn revolution_measure_density(
    profile: &RevolutionProfile,
    params: &ScenarioParams,
    gamma3: f64,
) -> f64 {
    let i = params.shape.inertia();
    let m = params.shape.mass();
    let f1 = profile.f1(gamma3);
    let f2 = profile.f2(gamma3);
    (i.x * i.z + m * i.x * f1 * f1 * (1.0 - gamma3 * gamma3) + m * i.z * f2 * f2).sqrt()
}

// ---------------------------------------------------------------------------
// Body of revolution: K variables and the (Y, y) first integrals.
// ---------------------------------------------------------------------------

/// The rotation-invariant pair `(K1, K2) = (<M, rho>/f1, mu * Omega3)` of the
/// body of revolution with `V = 0`.
pub fn k1_k2(params: &ScenarioParams, s: &ReducedState) -> Result<(f64, f64), InvariantError> {
    let profile = params
        .shape
        .profile()
        .ok_or(InvariantError::VariantMismatch("revolution body required"))?
        .clone();
    let rho = params.shape.rho(&s.gamma);
    let k1 = s.m.dot(&rho) / profile.f1(s.gamma.z);
    let omega = reduced_omega_v0(params, s)?;
    let k2 = revolution_measure_density(&profile, params, s.gamma.z) * omega.z;
    Ok((k1, k2))
}

/// Coefficients of the linear evolution `(K1, K2)' = gamma3_dot (G K + sigma b)`.
fn yy_coefficients(
    profile: &RevolutionProfile,
    params: &ScenarioParams,
    gamma3: f64,
) -> (Matrix2<f64>, Vector2<f64>) {
    let i = params.shape.inertia();
    let m = params.shape.mass();
    let f1 = profile.f1(gamma3);
    let df1 = profile.df1(gamma3);
    let f2 = profile.f2(gamma3);
    let df2 = profile.df2(gamma3);
    let mu = revolution_measure_density(profile, params, gamma3);
    let ratio_prime = (df2 * f1 - f2 * df1) / (f1 * f1);
    let g = Matrix2::new(0.0, i.z * (1.0 - ratio_prime), m * f1 * (f1 - df2), 0.0)
        * (-1.0 / mu);
    let b = Vector2::new(0.0, -m * f1 * i.x * (f1 * gamma3 - (1.0 - gamma3 * gamma3) * df1))
        * (-1.0 / mu);
    (g, b)
}

/// Dense table of the fundamental solution `Y(gamma3)` and the particular
/// solution `y(gamma3)` of the K-variable evolution, solved outward from
/// `gamma3 = 0` over `[-1, 1]`.
///
/// `Y(0) = id`, `y(0) = 0`; `Y` depends only on the profile and the inertia,
/// `sigma` enters only later when the integrals are assembled. Immutable
/// after construction.
pub struct YyTable {
    pos: Trajectory<6>,
    neg: Trajectory<6>,
}

impl YyTable {
    /// Cubic interpolation of `(Y, y)` at `gamma3`.
    pub fn sample(&self, gamma3: f64) -> (Matrix2<f64>, Vector2<f64>) {
        let z = if gamma3 >= 0.0 {
            self.pos.sample(gamma3)
        } else {
            self.neg.sample(gamma3)
        };
        (
            Matrix2::new(z[0], z[1], z[2], z[3]),
            Vector2::new(z[4], z[5]),
        )
    }

    /// Solver nodes of both branches, increasing in `gamma3`.
    pub fn grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self
            .neg
            .times
            .iter()
            .rev()
            .chain(self.pos.times.iter().skip(1))
            .copied()
            .collect();
        g.dedup();
        g
    }
}

/// Solves the matrix equation `dY/dgamma3 = G Y` and the inhomogeneous
/// companion `dy/dgamma3 = G y + b` over `[-1, 1]`.
pub fn solve_yy(
    profile: &RevolutionProfile,
    params: &ScenarioParams,
) -> Result<YyTable, InvariantError> {
    let rhs = |g3: f64, z: &[f64; 6]| -> Result<[f64; 6], DynamicsError> {
        let (g, b) = yy_coefficients(profile, params, g3);
        let y = Matrix2::new(z[0], z[1], z[2], z[3]);
        let v = Vector2::new(z[4], z[5]);
        let dy = g * y;
        let dv = g * v + b;
        Ok([
            dy[(0, 0)],
            dy[(0, 1)],
            dy[(1, 0)],
            dy[(1, 1)],
            dv[0],
            dv[1],
        ])
    };
    let z0 = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
    // the table is interpolated between solver nodes, so it is solved tighter
    // than the trajectories that consume it
    let opts = StepOpts::with_tol(1e-12, 1e-14);
    let pos = ode::integrate(rhs, None, z0, 0.0, 1.0, opts)?;
    let neg = ode::integrate(rhs, None, z0, 0.0, -1.0, opts)?;
    for traj in [&pos, &neg] {
        for (t, z) in traj.times.iter().zip(traj.states.iter()) {
            let det = z[0] * z[3] - z[1] * z[2];
            if det <= 0.0 {
                return Err(InvariantError::SingularTable { gamma3: *t });
            }
        }
    }
    Ok(YyTable { pos, neg })
}

/// The pair of first integrals `J = Y(gamma3)^{-1} ((K1, K2) - sigma y(gamma3))`
/// of the body of revolution with a cat's toy. With `sigma = 0` this reduces
/// to the classical pair.
pub fn j_integrals(
    yy: &YyTable,
    params: &ScenarioParams,
    s: &ReducedState,
) -> Result<(f64, f64), InvariantError> {
    let sigma = if params.surface.is_zero() {
        0.0
    } else {
        require_cats_toy_e3(params)?
    };
    let (k1, k2) = k1_k2(params, s)?;
    let (y, yv) = yy.sample(s.gamma.z);
    let y_inv = y.try_inverse().ok_or(InvariantError::SingularTable {
        gamma3: s.gamma.z,
    })?;
    let j = y_inv * (Vector2::new(k1, k2) - sigma * yv);
    Ok((j[0], j[1]))
}

// ---------------------------------------------------------------------------
// Homogeneous sphere.
// ---------------------------------------------------------------------------

/// `(||M||^2, <M, gamma>, E_mov)` of the homogeneous sphere with a cat's toy
/// on a rotating plane, on the reduced `(M, gamma, U)` state.
pub fn homsphere_integrals(
    params: &ScenarioParams,
    s: &SphereReducedState,
) -> Result<(f64, f64, f64), InvariantError> {
    let r = params
        .shape
        .radius()
        .ok_or(InvariantError::VariantMismatch("spherical body required"))?;
    let inertia = params.shape.inertia();
    let sigma = require_cats_toy_e3(params)?;
    let eta = params
        .plane
        .rotation_rate()
        .ok_or(InvariantError::VariantMismatch("rotating plane required"))?;
    let omega = homsphere_omega(params, s)?;
    let m = params.shape.mass();
    let os = omega + sigma * Vec3::z();
    let e = 0.5 * inertia.x * os.norm_squared()
        + 0.5 * m * r * r * s.gamma.cross(&os).norm_squared()
        - 0.5 * m * eta * eta * s.u_body.norm_squared();
    Ok((s.m.norm_squared(), s.m.dot(&s.gamma), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{Mat3, Rotation};
    use crate::dynamics::{
        chaplygin_rhs_array, holonomic_u3, integrate_chaplygin, integrate_full,
        integrate_homsphere, integrate_limit, integrate_reduced_v0, limit_rhs_array,
        momentum_from_omega, mparallel_rhs, reduced_rhs_v0_array,
    };
    use crate::fields::{div_sphere_of, PlaneField, SurfaceField};
    use crate::shapes::BodyShape;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tight() -> StepOpts {
        StepOpts::with_tol(1e-10, 1e-12)
    }

    fn unit_vec(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            if v.norm() > 0.3 {
                return v.normalize();
            }
        }
    }

    fn rand_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    fn rand_rotation(rng: &mut ChaCha8Rng) -> Rotation {
        let m = nalgebra::Rotation3::from_euler_angles(
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-3.0..3.0),
        )
        .into_inner();
        Rotation::from_matrix(m).unwrap()
    }

    /// Balanced sphere with the chaotic-section parameter set.
    fn sphere_cats_params(sigma: f64) -> ScenarioParams {
        ScenarioParams::new(
            BodyShape::balanced_sphere(1.0, (0.5, 2.5, 3.0), 5.0).unwrap(),
            PlaneField::zero(),
            SurfaceField::cats_toy(sigma, Vec3::z()),
            1.0,
        )
        .unwrap()
    }

    /// Homogeneous sphere on a rotating plane with a cat's toy.
    fn homsphere_params() -> ScenarioParams {
        ScenarioParams::new(
            BodyShape::homogeneous_sphere(1.0, 1.0, 2.0).unwrap(),
            PlaneField::rotating(1.0),
            SurfaceField::cats_toy(1.0, Vec3::z()),
            1.0,
        )
        .unwrap()
    }

    fn routh_params(sigma: f64) -> ScenarioParams {
        let profile = RevolutionProfile::routh(1.0, 0.2).unwrap();
        ScenarioParams::new(
            BodyShape::revolution_body(1.0, 1.2, 0.8, profile).unwrap(),
            PlaneField::zero(),
            SurfaceField::cats_toy(sigma, Vec3::z()),
            1.0,
        )
        .unwrap()
    }

    fn quadratic_params(sigma: f64) -> ScenarioParams {
        let profile = RevolutionProfile::quadratic(-1.0, 0.15, 0.1).unwrap();
        ScenarioParams::new(
            BodyShape::revolution_body(1.0, 1.1, 0.7, profile).unwrap(),
            PlaneField::zero(),
            SurfaceField::cats_toy(sigma, Vec3::z()),
            1.0,
        )
        .unwrap()
    }

    // -- drift plumbing -----------------------------------------------------

    #[test]
    fn drift_uses_absolute_fallback_near_zero() {
        let drift = relative_drift(&[0.0, 1e-11, -1e-11]);
        assert_abs_diff_eq!(drift, 10.0, epsilon = 1e-9);
        let report = IntegralReport::from_series("x", vec![0.0, 1.0], vec![2.0, 2.0 + 1e-9], 1e-8);
        assert!(report.pass);
        assert_abs_diff_eq!(report.drift, 5e-10, epsilon = 1e-12);
    }

    // -- momentum integrals -------------------------------------------------

    #[test]
    fn spatial_momentum_identity_frame() {
        let s = FullState {
            m: Vec3::new(1.0, 2.0, 3.0),
            b: Rotation::identity(),
            u: Vec3::zeros(),
        };
        assert_abs_diff_eq!(spatial_momentum(&s, &Vec3::z()), 3.0, epsilon = 0.0);
    }

    #[test]
    fn spatial_momentum_linear_in_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let s = FullState {
                m: rand_vec(&mut rng, 5.0),
                b: rand_rotation(&mut rng),
                u: rand_vec(&mut rng, 2.0),
            };
            let w1 = rand_vec(&mut rng, 2.0);
            let w2 = rand_vec(&mut rng, 2.0);
            let a = rng.gen_range(-2.0..2.0);
            let lhs = spatial_momentum(&s, &(w1 * a + w2));
            let rhs = a * spatial_momentum(&s, &w1) + spatial_momentum(&s, &w2);
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }

    #[test]
    fn spatial_momentum_conserved_for_arbitrary_surface_field() {
        // Balanced sphere, V = 0, and a generic tangent surface field: all
        // three spatial momentum projections must survive the trip.
        let c = Vec3::new(0.3, -0.7, 0.5);
        let d = Vec3::new(-0.2, 0.4, 0.9);
        let surface = SurfaceField::custom(move |rho: &Vec3| rho.cross(&(c + d.cross(rho))), None);
        let params = ScenarioParams::new(
            BodyShape::balanced_sphere(1.0, (0.5, 2.5, 3.0), 5.0).unwrap(),
            PlaneField::zero(),
            surface,
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = rand_rotation(&mut rng);
        let gamma = b.gamma();
        let s0 = FullState {
            m: rand_vec(&mut rng, 3.0),
            b,
            u: Vec3::new(0.4, -0.2, holonomic_u3(&params.shape, &gamma)),
        };
        let traj = integrate_full(&params, &s0, (0.0, 20.0), tight()).unwrap();
        for w in [Vec3::x(), Vec3::y(), Vec3::z()] {
            let values: Vec<f64> = traj
                .states
                .iter()
                .map(|y| spatial_momentum(&FullState::from_array(y), &w))
                .collect();
            assert!(
                relative_drift(&values) < 1e-9,
                "drift {} for w = {:?}",
                relative_drift(&values),
                w
            );
        }
    }

    #[test]
    fn reduced_sphere_integrals_axis_example() {
        let s = ReducedState {
            m: Vec3::new(0.0, 0.0, 2.0),
            gamma: Vec3::z(),
        };
        assert_eq!(reduced_sphere_integrals(&s), (4.0, 2.0, 1.0));
    }

    #[test]
    fn reduced_sphere_integrals_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = rand_vec(&mut rng, 4.0);
            let gamma = unit_vec(&mut rng);
            let rot = rand_rotation(&mut rng);
            let s = ReducedState { m, gamma };
            let sr = ReducedState {
                m: rot.apply(&m),
                gamma: rot.apply(&gamma),
            };
            let (a, b, c) = reduced_sphere_integrals(&s);
            let (ar, br, cr) = reduced_sphere_integrals(&sr);
            assert_abs_diff_eq!(a, ar, epsilon = 1e-10 * (1.0 + a.abs()));
            assert_abs_diff_eq!(b, br, epsilon = 1e-10 * (1.0 + b.abs()));
            assert_abs_diff_eq!(c, cr, epsilon = 1e-12);
        }
    }

    #[test]
    fn reduced_sphere_integrals_conserved_on_section_run() {
        let params = sphere_cats_params(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let gamma = unit_vec(&mut rng);
        // generic momentum at the section-experiment magnitude; a nonzero
        // vertical projection keeps the relative drift metric meaningful
        let m = unit_vec(&mut rng) * 500.0;
        let s0 = ReducedState { m, gamma };
        // ~60 rotation periods and ~5e4 steps: per-step truncation error
        // accumulates as a random walk, so the tolerance has to sit well
        // below the drift target
        let traj = integrate_chaplygin(
            &params,
            &s0,
            (0.0, 20.0),
            StepOpts::with_tol(1e-12, 1e-14),
        )
        .unwrap();
        for pick in 0..3 {
            let values: Vec<f64> = traj
                .states
                .iter()
                .map(|y| {
                    let (a, b, c) = reduced_sphere_integrals(&ReducedState::from_array(y));
                    [a, b, c][pick]
                })
                .collect();
            assert!(
                relative_drift(&values) < 1e-9,
                "integral {pick} drift {}",
                relative_drift(&values)
            );
        }
    }

    // -- moving energies ----------------------------------------------------

    #[test]
    fn axisymmetric_energy_axis_value() {
        let params = ScenarioParams::new(
            BodyShape::balanced_sphere(1.0, (2.5, 2.5, 3.0), 5.0).unwrap(),
            PlaneField::zero(),
            SurfaceField::cats_toy(10.0, Vec3::z()),
            1.0,
        )
        .unwrap();
        let b = Rotation::identity();
        let u = Vec3::new(0.0, 0.0, holonomic_u3(&params.shape, &b.gamma()));
        let m = momentum_from_omega(&params, &b, &u, &Vec3::zeros());
        let s = FullState { m, b, u };
        let e = moving_energy(&params, &s, EnergyVariant::Axisymmetric).unwrap();
        assert_abs_diff_eq!(e, 155.0, epsilon = 1e-10);
    }

    #[test]
    fn translation_energy_matches_classical_expression() {
        let params = ScenarioParams::new(
            BodyShape::revolution_body(
                1.0,
                1.2,
                0.8,
                RevolutionProfile::routh(1.0, 0.2).unwrap(),
            )
            .unwrap(),
            PlaneField::zero(),
            SurfaceField::zero(),
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let b = rand_rotation(&mut rng);
            let gamma = b.gamma();
            let u = Vec3::new(0.1, -0.3, holonomic_u3(&params.shape, &gamma));
            let omega = rand_vec(&mut rng, 2.0);
            let m = momentum_from_omega(&params, &b, &u, &omega);
            let s = FullState { m, b, u };
            let e = moving_energy(&params, &s, EnergyVariant::Translation).unwrap();
            let rho = params.shape.rho(&gamma);
            let i = params.shape.inertia();
            let classical = 0.5 * i.component_mul(&omega).dot(&omega)
                + 0.5 * rho.cross(&omega).norm_squared()
                - rho.dot(&gamma);
            assert_abs_diff_eq!(e, classical, epsilon = 1e-12 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn translation_energy_conserved_with_constant_drift_field() {
        let params = ScenarioParams::new(
            BodyShape::revolution_body(
                1.0,
                1.2,
                0.8,
                RevolutionProfile::routh(1.0, 0.2).unwrap(),
            )
            .unwrap(),
            PlaneField::constant(0.4, -0.3),
            SurfaceField::zero(),
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let b = rand_rotation(&mut rng);
        let gamma = b.gamma();
        let u = Vec3::new(0.0, 0.0, holonomic_u3(&params.shape, &gamma));
        let omega = rand_vec(&mut rng, 1.5);
        let s0 = FullState {
            m: momentum_from_omega(&params, &b, &u, &omega),
            b,
            u,
        };
        let traj = integrate_full(&params, &s0, (0.0, 20.0), tight()).unwrap();
        let values: Vec<f64> = traj
            .states
            .iter()
            .map(|y| {
                moving_energy(&params, &FullState::from_array(y), EnergyVariant::Translation)
                    .unwrap()
            })
            .collect();
        assert!(relative_drift(&values) < 1e-8, "drift {}", relative_drift(&values));
    }

    #[test]
    fn rotating_plane_energy_conserved() {
        let params = ScenarioParams::new(
            BodyShape::revolution_body(
                1.0,
                1.2,
                0.8,
                RevolutionProfile::routh(1.0, 0.2).unwrap(),
            )
            .unwrap(),
            PlaneField::rotating(0.3),
            SurfaceField::zero(),
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let b = rand_rotation(&mut rng);
        let gamma = b.gamma();
        let u = Vec3::new(0.2, 0.1, holonomic_u3(&params.shape, &gamma));
        let omega = rand_vec(&mut rng, 1.5);
        let s0 = FullState {
            m: momentum_from_omega(&params, &b, &u, &omega),
            b,
            u,
        };
        let traj = integrate_full(&params, &s0, (0.0, 20.0), tight()).unwrap();
        let values: Vec<f64> = traj
            .states
            .iter()
            .map(|y| {
                moving_energy(
                    &params,
                    &FullState::from_array(y),
                    EnergyVariant::RotatingPlane,
                )
                .unwrap()
            })
            .collect();
        assert!(relative_drift(&values) < 1e-8, "drift {}", relative_drift(&values));
    }

    #[test]
    fn general_with_zero_rate_matches_axisymmetric_up_to_constant() {
        // The two formulas are both conserved and differ by the constant
        // I3 sigma^2 / 2 (the energy of the drive alone).
        let sigma = 3.0;
        let shape = BodyShape::revolution_body(
            1.0,
            1.2,
            0.8,
            RevolutionProfile::routh(1.0, 0.2).unwrap(),
        )
        .unwrap();
        let params_rot = ScenarioParams::new(
            shape.clone(),
            PlaneField::rotating(0.0),
            SurfaceField::cats_toy(sigma, Vec3::z()),
            1.0,
        )
        .unwrap();
        let params_zero = ScenarioParams::new(
            shape.clone(),
            PlaneField::zero(),
            SurfaceField::cats_toy(sigma, Vec3::z()),
            1.0,
        )
        .unwrap();
        let offset = 0.5 * shape.inertia().z * sigma * sigma;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let b = rand_rotation(&mut rng);
            let gamma = b.gamma();
            let u = Vec3::new(0.3, -0.1, holonomic_u3(&shape, &gamma));
            let m = rand_vec(&mut rng, 2.0);
            let s = FullState { m, b, u };
            let general = moving_energy(&params_rot, &s, EnergyVariant::General).unwrap();
            let axi = moving_energy(&params_zero, &s, EnergyVariant::Axisymmetric).unwrap();
            assert_abs_diff_eq!(general + offset, axi, epsilon = 1e-12 * (1.0 + axi.abs()));
        }
    }

    #[test]
    fn general_energy_conserved_on_rotating_plane() {
        let params = homsphere_params();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let b = rand_rotation(&mut rng);
        let gamma = b.gamma();
        let u = Vec3::new(0.5, -0.4, holonomic_u3(&params.shape, &gamma));
        let omega = rand_vec(&mut rng, 1.0);
        let s0 = FullState {
            m: momentum_from_omega(&params, &b, &u, &omega),
            b,
            u,
        };
        let traj = integrate_full(&params, &s0, (0.0, 20.0), tight()).unwrap();
        for variant in [EnergyVariant::General, EnergyVariant::HomogeneousSphere] {
            let values: Vec<f64> = traj
                .states
                .iter()
                .map(|y| moving_energy(&params, &FullState::from_array(y), variant).unwrap())
                .collect();
            assert!(
                relative_drift(&values) < 1e-8,
                "{variant:?} drift {}",
                relative_drift(&values)
            );
        }
    }

    #[test]
    fn homsphere_energy_variant_matches_reduced_integrals() {
        let params = homsphere_params();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let b = rand_rotation(&mut rng);
            let gamma = b.gamma();
            let r = params.shape.radius().unwrap();
            let u_body_t = rand_vec(&mut rng, 2.0);
            let u_body = u_body_t + gamma * (r - u_body_t.dot(&gamma));
            let m = rand_vec(&mut rng, 2.0);
            let full = FullState {
                m,
                b,
                u: b.apply(&u_body),
            };
            let reduced = SphereReducedState { m, gamma, u_body };
            let e_full =
                moving_energy(&params, &full, EnergyVariant::HomogeneousSphere).unwrap();
            let (_, _, e_red) = homsphere_integrals(&params, &reduced).unwrap();
            assert_abs_diff_eq!(e_full, e_red, epsilon = 1e-10 * (1.0 + e_full.abs()));
        }
    }

    #[test]
    fn variant_preconditions_are_enforced() {
        let params = sphere_cats_params(10.0);
        let s = FullState {
            m: Vec3::zeros(),
            b: Rotation::identity(),
            u: Vec3::new(0.0, 0.0, 5.0),
        };
        // surface field present: rotating-plane and translation variants refuse
        assert!(matches!(
            moving_energy(&params, &s, EnergyVariant::RotatingPlane),
            Err(InvariantError::VariantMismatch(_))
        ));
        assert!(matches!(
            moving_energy(&params, &s, EnergyVariant::Translation),
            Err(InvariantError::VariantMismatch(_))
        ));
        // unequal first two inertia moments: axisymmetric variant refuses
        assert!(matches!(
            moving_energy(&params, &s, EnergyVariant::Axisymmetric),
            Err(InvariantError::VariantMismatch(_))
        ));
    }

    // -- vertical-momentum sphere -------------------------------------------

    #[test]
    fn regime_threshold_value() {
        let params = sphere_cats_params(10.0);
        let (eps, threshold) = mparallel_regime(&params, 125.0).unwrap();
        assert_abs_diff_eq!(threshold, 3.0 / 28.0, epsilon = 1e-15);
        assert_abs_diff_eq!(eps, 0.5, epsilon = 1e-15);
        assert!(matches!(
            mparallel_integral_f(&params, 12.5, &Vec3::z()),
            Err(InvariantError::DomainError { .. })
        ));
    }

    fn integrate_mparallel(
        params: &ScenarioParams,
        lambda: f64,
        gamma0: Vec3,
        t_end: f64,
    ) -> Trajectory<3> {
        let rhs = |_t: f64, y: &[f64; 3]| -> Result<[f64; 3], DynamicsError> {
            let g = Vec3::new(y[0], y[1], y[2]);
            let dg = mparallel_rhs(params, lambda, &g)?;
            Ok([dg.x, dg.y, dg.z])
        };
        let project = Box::new(|y: &mut [f64; 3]| {
            let n = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt();
            y[0] /= n;
            y[1] /= n;
            y[2] /= n;
        });
        ode::integrate(
            rhs,
            Some(project),
            [gamma0.x, gamma0.y, gamma0.z],
            0.0,
            t_end,
            tight(),
        )
        .unwrap()
    }

    #[test]
    fn fast_regime_integral_conserved() {
        let params = sphere_cats_params(10.0);
        let lambda = 125.0;
        let gamma0 = Vec3::new(0.6, 0.0, 0.8);
        let traj = integrate_mparallel(&params, lambda, gamma0, 10.0);
        let values: Vec<f64> = traj
            .states
            .iter()
            .map(|y| {
                mparallel_integral_f(&params, lambda, &Vec3::new(y[0], y[1], y[2])).unwrap()
            })
            .collect();
        assert!(relative_drift(&values) < 1e-8, "drift {}", relative_drift(&values));
    }

    #[test]
    fn fast_regime_integral_rotation_invariant_when_axisymmetric() {
        let params = ScenarioParams::new(
            BodyShape::balanced_sphere(1.0, (2.5, 2.5, 3.0), 5.0).unwrap(),
            PlaneField::zero(),
            SurfaceField::cats_toy(10.0, Vec3::z()),
            1.0,
        )
        .unwrap();
        let lambda = 125.0;
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..10 {
            let gamma = unit_vec(&mut rng);
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let rotated = Rotation::about_axis(2, phi).apply(&gamma);
            let a = mparallel_integral_f(&params, lambda, &gamma).unwrap();
            let b = mparallel_integral_f(&params, lambda, &rotated).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn slow_regime_integral_vanishes_on_invariant_parallel() {
        let params = sphere_cats_params(10.0);
        let lambda = 12.5;
        // parallel height from the vanishing of the linear factor
        let g3: f64 = -lambda / (25.0 * 10.0) * (28.0 / 3.0);
        let rad = (1.0 - g3 * g3).sqrt();
        let on = Vec3::new(rad, 0.0, g3);
        assert_eq!(mparallel_integral_g(&params, lambda, &on).unwrap(), 0.0);
        assert_eq!(
            mparallel_measure_density(&params, lambda, &on).unwrap(),
            0.0
        );
        let off = Vec3::new(0.6, 0.0, 0.8);
        assert!(mparallel_integral_g(&params, lambda, &off).unwrap() > 0.0);
    }

    #[test]
    fn slow_regime_integral_conserved() {
        let params = sphere_cats_params(10.0);
        let lambda = 12.5;
        let gamma0 = Vec3::new(0.6, 0.0, 0.8);
        let traj = integrate_mparallel(&params, lambda, gamma0, 10.0);
        let values: Vec<f64> = traj
            .states
            .iter()
            .map(|y| {
                mparallel_integral_g(&params, lambda, &Vec3::new(y[0], y[1], y[2])).unwrap()
            })
            .collect();
        assert!(relative_drift(&values) < 1e-8, "drift {}", relative_drift(&values));
    }

    /// Finite-difference Jacobian of a sphere field, step 1e-5.
    fn fd_jacobian3(f: &dyn Fn(&Vec3) -> Vec3, g: &Vec3) -> Mat3 {
        let h = 1e-5;
        let mut j = Mat3::zeros();
        for c in 0..3 {
            let mut gp = *g;
            let mut gm = *g;
            gp[c] += h;
            gm[c] -= h;
            let col = (f(&gp) - f(&gm)) / (2.0 * h);
            j.set_column(c, &col);
        }
        j
    }

    #[test]
    fn mparallel_measure_satisfies_liouville_identity() {
        let params = sphere_cats_params(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for &lambda in &[125.0, 12.5] {
            for _ in 0..120 {
                let gamma = unit_vec(&mut rng);
                let field = |g: &Vec3| -> Vec3 {
                    mparallel_measure_density(&params, lambda, g).unwrap()
                        * mparallel_rhs(&params, lambda, g).unwrap()
                };
                let j = fd_jacobian3(&field, &gamma);
                let div = div_sphere_of(&j, &gamma);
                let x = mparallel_rhs(&params, lambda, &gamma).unwrap();
                let grad_mu = {
                    let h = 1e-5;
                    let mut grad = Vec3::zeros();
                    for c in 0..3 {
                        let mut gp = gamma;
                        let mut gm = gamma;
                        gp[c] += h;
                        gm[c] -= h;
                        grad[c] = (mparallel_measure_density(&params, lambda, &gp).unwrap()
                            - mparallel_measure_density(&params, lambda, &gm).unwrap())
                            / (2.0 * h);
                    }
                    grad
                };
                let scale = (x.norm() * grad_mu.norm()).max(1e-9);
                assert!(
                    div.abs() / scale < 1e-5,
                    "lambda {lambda}: residual {} at {gamma:?}",
                    div.abs() / scale
                );
            }
        }
    }

    // -- small-momentum limit -----------------------------------------------

    #[test]
    fn limit_integral_vanishes_on_equator() {
        let params = sphere_cats_params(10.0);
        let g = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(limit_integral_k(&params, &g).unwrap(), 0.0);
        assert_eq!(limit_measure_chi(&params, &g).unwrap(), 0.0);
    }

    #[test]
    fn limit_integral_conserved() {
        let params = sphere_cats_params(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let gamma0 = Vec3::new(0.3, -0.3, 0.9).normalize();
        let m0 = rand_vec(&mut rng, 1.0);
        let s0 = ReducedState {
            m: m0,
            gamma: gamma0,
        };
        let traj = integrate_limit(&params, &s0, (0.0, 10.0), tight()).unwrap();
        let values: Vec<f64> = traj
            .states
            .iter()
            .map(|y| {
                limit_integral_k(&params, &ReducedState::from_array(y).gamma).unwrap()
            })
            .collect();
        assert!(values[0] > 0.0, "start state must be off the equator");
        assert!(relative_drift(&values) < 1e-8, "drift {}", relative_drift(&values));
    }

    /// Divergence of a `(M, gamma)` product field over momentum space times
    /// the sphere, by central differences.
    fn product_div6(f: &dyn Fn(&[f64; 6]) -> [f64; 6], y: &[f64; 6]) -> f64 {
        let h = 1e-5;
        let mut j = [[0.0_f64; 6]; 6];
        for c in 0..6 {
            let mut yp = *y;
            let mut ym = *y;
            yp[c] += h;
            ym[c] -= h;
            let fp = f(&yp);
            let fm = f(&ym);
            for r in 0..6 {
                j[r][c] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        let gamma = Vec3::new(y[3], y[4], y[5]);
        let jg = Mat3::from_fn(|r, c| j[3 + r][3 + c]);
        j[0][0] + j[1][1] + j[2][2] + div_sphere_of(&jg, &gamma)
    }

    #[test]
    fn limit_measure_satisfies_liouville_identity() {
        let params = sphere_cats_params(10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let field = |y: &[f64; 6]| -> [f64; 6] {
            let gamma = Vec3::new(y[3], y[4], y[5]);
            let chi = limit_measure_chi(&params, &gamma).unwrap();
            let dy = limit_rhs_array(&params, y).unwrap();
            dy.map(|v| chi * v)
        };
        let mut checked = 0;
        while checked < 150 {
            // keep the exponent in floating-point range: high latitudes only
            let g3: f64 = rng.gen_range(0.7..0.95) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let rad = (1.0 - g3 * g3).sqrt();
            let gamma = Vec3::new(rad * phi.cos(), rad * phi.sin(), g3);
            let m = rand_vec(&mut rng, 2.0);
            let y = [m.x, m.y, m.z, gamma.x, gamma.y, gamma.z];
            let div = product_div6(&field, &y);
            let chi = limit_measure_chi(&params, &gamma).unwrap();
            let x = limit_rhs_array(&params, &y).unwrap();
            let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = (chi * xnorm).max(1e-9);
            assert!(
                div.abs() / scale < 1e-4,
                "residual {} at gamma3 {g3}",
                div.abs() / scale
            );
            checked += 1;
        }
    }

    // -- Chaplygin measures -------------------------------------------------

    #[test]
    fn w0_density_constant_for_homogeneous_sphere() {
        let i = 1.0;
        let (m, r) = (1.0, 2.0);
        let params = ScenarioParams::new(
            BodyShape::homogeneous_sphere(m, i, r).unwrap(),
            PlaneField::rotating(1.0),
            SurfaceField::zero(),
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let expected = ((i + m * r * r) / i).sqrt();
        for _ in 0..10 {
            let gamma = unit_vec(&mut rng);
            let d = chaplygin_w0_measure_density(&params, &gamma).unwrap();
            assert!(d > 0.0);
            assert_abs_diff_eq!(d, expected, epsilon = 1e-12);
        }
    }

    /// The balanced sphere with `W = 0` as an explicit first-order system on
    /// `(M, alpha, beta, gamma, u1, u2)`, with the contact point directly
    /// below the center.
    fn w0_sphere_field(params: &ScenarioParams, y: &[f64; 14]) -> [f64; 14] {
        let r = params.shape.radius().unwrap();
        let m_mass = params.shape.mass();
        let mm = Vec3::new(y[0], y[1], y[2]);
        let alpha = Vec3::new(y[3], y[4], y[5]);
        let beta = Vec3::new(y[6], y[7], y[8]);
        let gamma = Vec3::new(y[9], y[10], y[11]);
        let x = Vec3::new(y[12], y[13], 0.0);
        let v = params.plane.eval(&x);
        // body components of the space field, rows as Poisson vectors
        let v_body = alpha * v.x + beta * v.y + gamma * v.z;
        let a = a_matrix(&params.shape, &gamma);
        let mr2 = m_mass * r * r;
        let n = mm - m_mass * r * gamma.cross(&v_body);
        let denom = 1.0 - mr2 * (a * gamma).dot(&gamma);
        let omega = a * (n + gamma * (mr2 * n.dot(&(a * gamma)) / denom));
        let roll = gamma.cross(&omega);
        let dm = mm.cross(&omega);
        let dalpha = alpha.cross(&omega);
        let dbeta = beta.cross(&omega);
        let dgamma = roll;
        let du1 = -r * alpha.dot(&roll) + v.x;
        let du2 = -r * beta.dot(&roll) + v.y;
        [
            dm.x, dm.y, dm.z, dalpha.x, dalpha.y, dalpha.z, dbeta.x, dbeta.y, dbeta.z,
            dgamma.x, dgamma.y, dgamma.z, du1, du2,
        ]
    }

    #[test]
    fn w0_measure_satisfies_liouville_identity() {
        let params = ScenarioParams::new(
            BodyShape::balanced_sphere(1.0, (0.5, 2.5, 3.0), 5.0).unwrap(),
            PlaneField::rotating(0.7),
            SurfaceField::zero(),
            1.0,
        )
        .unwrap();
        let weighted = |y: &[f64; 14]| -> [f64; 14] {
            let gamma = Vec3::new(y[9], y[10], y[11]);
            let d = chaplygin_w0_measure_density(&params, &gamma).unwrap();
            w0_sphere_field(&params, y).map(|v| d * v)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let h = 1e-5;
        for _ in 0..60 {
            let b = rand_rotation(&mut rng);
            let (alpha, beta, gamma) = crate::algebra::poisson_vectors(&b);
            let m = rand_vec(&mut rng, 2.0);
            let y: [f64; 14] = [
                m.x, m.y, m.z, alpha.x, alpha.y, alpha.z, beta.x, beta.y, beta.z, gamma.x,
                gamma.y, gamma.z,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            let mut j = [[0.0_f64; 14]; 14];
            for c in 0..14 {
                let mut yp = y;
                let mut ym = y;
                yp[c] += h;
                ym[c] -= h;
                let fp = weighted(&yp);
                let fm = weighted(&ym);
                for r in 0..14 {
                    j[r][c] = (fp[r] - fm[r]) / (2.0 * h);
                }
            }
            let mut div = j[0][0] + j[1][1] + j[2][2] + j[12][12] + j[13][13];
            for (base, row) in [(3, alpha), (6, beta), (9, gamma)] {
                let jb = Mat3::from_fn(|r, c| j[base + r][base + c]);
                div += div_sphere_of(&jb, &row);
            }
            let xnorm = weighted(&y).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(
                div.abs() / xnorm.max(1.0) < 1e-5,
                "residual {}",
                div.abs() / xnorm.max(1.0)
            );
        }
    }

    #[test]
    fn revolution_density_axis_values_and_positivity() {
        let params = quadratic_params(3.0);
        let profile = params.shape.profile().unwrap().clone();
        let i = params.shape.inertia();
        let m = params.shape.mass();
        for g3 in [-1.0, 1.0] {
            let f2 = profile.f2(g3);
            let expected = (i.x * i.z + m * i.z * f2 * f2).sqrt();
            assert_abs_diff_eq!(
                revolution_measure_density(&profile, &params, g3),
                expected,
                epsilon = 1e-12
            );
        }
        for k in 0..40 {
            let g3 = -1.0 + 2.0 * k as f64 / 39.0;
            assert!(revolution_measure_density(&profile, &params, g3) > 0.0);
        }
    }

    #[test]
    fn revolution_measure_satisfies_liouville_identity() {
        for sigma in [0.0, 3.0] {
            let params = quadratic_params(sigma);
            let profile = params.shape.profile().unwrap().clone();
            let field = |y: &[f64; 6]| -> [f64; 6] {
                let d = 1.0 / revolution_measure_density(&profile, &params, y[5]);
                reduced_rhs_v0_array(&params, y).unwrap().map(|v| d * v)
            };
            let mut rng = ChaCha8Rng::seed_from_u64(61);
            for _ in 0..120 {
                let gamma = unit_vec(&mut rng);
                let m = rand_vec(&mut rng, 2.0);
                let y = [m.x, m.y, m.z, gamma.x, gamma.y, gamma.z];
                let div = product_div6(&field, &y);
                let x = reduced_rhs_v0_array(&params, &y).unwrap();
                let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!(
                    div.abs() / xnorm.max(1.0) < 1e-5,
                    "sigma {sigma}: residual {}",
                    div.abs() / xnorm.max(1.0)
                );
            }
        }
    }

    // -- K variables and (Y, y) integrals -----------------------------------

    #[test]
    fn k_variables_axis_value() {
        let params = routh_params(3.0);
        let profile = params.shape.profile().unwrap().clone();
        let s = ReducedState {
            m: Vec3::new(0.4, -0.2, 1.5),
            gamma: Vec3::z(),
        };
        let (k1, _) = k1_k2(&params, &s).unwrap();
        assert_abs_diff_eq!(
            k1,
            1.5 * profile.f2(1.0) / profile.f1(1.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn k_variables_rotation_invariant() {
        let params = quadratic_params(3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        for _ in 0..10 {
            let s = ReducedState {
                m: rand_vec(&mut rng, 2.0),
                gamma: unit_vec(&mut rng),
            };
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let rot = Rotation::about_axis(2, phi);
            let sr = ReducedState {
                m: rot.apply(&s.m),
                gamma: rot.apply(&s.gamma),
            };
            let (k1, k2) = k1_k2(&params, &s).unwrap();
            let (k1r, k2r) = k1_k2(&params, &sr).unwrap();
            assert_abs_diff_eq!(k1, k1r, epsilon = 1e-12 * (1.0 + k1.abs()));
            assert_abs_diff_eq!(k2, k2r, epsilon = 1e-12 * (1.0 + k2.abs()));
        }
    }

    #[test]
    fn k_variable_evolution_identity() {
        // d/dt (K1, K2) = gamma3_dot (G K + sigma b), pointwise in the state.
        for sigma in [0.0, 3.0] {
            let params = quadratic_params(sigma);
            let profile = params.shape.profile().unwrap().clone();
            let mut rng = ChaCha8Rng::seed_from_u64(71);
            for _ in 0..100 {
                let gamma = unit_vec(&mut rng);
                let m = rand_vec(&mut rng, 2.0);
                let y = [m.x, m.y, m.z, gamma.x, gamma.y, gamma.z];
                let x = reduced_rhs_v0_array(&params, &y).unwrap();
                // directional derivative of K along the flow
                let h = 1e-6;
                let mut kdot = Vector2::zeros();
                for c in 0..6 {
                    let mut yp = y;
                    let mut ym = y;
                    yp[c] += h;
                    ym[c] -= h;
                    let (k1p, k2p) =
                        k1_k2(&params, &ReducedState::from_array(&yp)).unwrap();
                    let (k1m, k2m) =
                        k1_k2(&params, &ReducedState::from_array(&ym)).unwrap();
                    kdot += Vector2::new(k1p - k1m, k2p - k2m) / (2.0 * h) * x[c];
                }
                let (k1, k2) = k1_k2(&params, &ReducedState::from_array(&y)).unwrap();
                let (g, b) = yy_coefficients(&profile, &params, gamma.z);
                let expected = (g * Vector2::new(k1, k2) + sigma * b) * x[5];
                let residual = (kdot - expected).norm() / (1.0 + kdot.norm());
                assert!(residual < 1e-7, "sigma {sigma}: residual {residual}");
            }
        }
    }

    #[test]
    fn table_initial_conditions_and_unit_determinant() {
        let params = quadratic_params(3.0);
        let profile = params.shape.profile().unwrap().clone();
        let table = solve_yy(&profile, &params).unwrap();
        let (y0, v0) = table.sample(0.0);
        assert_abs_diff_eq!(y0, Matrix2::identity(), epsilon = 1e-14);
        assert_abs_diff_eq!(v0, Vector2::zeros(), epsilon = 1e-14);
        // G has zero trace, so by the Abel identity det Y is constant
        for g3 in table.grid() {
            let (g, _) = yy_coefficients(&profile, &params, g3);
            assert_abs_diff_eq!(g.trace(), 0.0, epsilon = 1e-14);
            let (y, _) = table.sample(g3);
            assert!(
                (y.determinant() - 1.0).abs() < 1e-8,
                "det Y = {} at gamma3 = {g3}",
                y.determinant()
            );
        }
    }

    #[test]
    fn integrals_with_inactive_drive_reduce_to_classical_pair() {
        let params = quadratic_params(0.0);
        let profile = params.shape.profile().unwrap().clone();
        let table = solve_yy(&profile, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..10 {
            let s = ReducedState {
                m: rand_vec(&mut rng, 2.0),
                gamma: unit_vec(&mut rng),
            };
            let (j1, j2) = j_integrals(&table, &params, &s).unwrap();
            let (k1, k2) = k1_k2(&params, &s).unwrap();
            let (y, _) = table.sample(s.gamma.z);
            let classical = y.try_inverse().unwrap() * Vector2::new(k1, k2);
            assert_abs_diff_eq!(j1, classical[0], epsilon = 1e-12 * (1.0 + j1.abs()));
            assert_abs_diff_eq!(j2, classical[1], epsilon = 1e-12 * (1.0 + j2.abs()));
        }
    }

    #[test]
    fn integrals_conserved_for_driven_routh_sphere() {
        let params = routh_params(3.0);
        let profile = params.shape.profile().unwrap().clone();
        let table = solve_yy(&profile, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let s0 = ReducedState {
            m: rand_vec(&mut rng, 1.5),
            gamma: unit_vec(&mut rng),
        };
        let traj = integrate_reduced_v0(&params, &s0, (0.0, 50.0), tight()).unwrap();
        for pick in 0..2 {
            let values: Vec<f64> = traj
                .states
                .iter()
                .map(|y| {
                    let (j1, j2) =
                        j_integrals(&table, &params, &ReducedState::from_array(y)).unwrap();
                    [j1, j2][pick]
                })
                .collect();
            assert!(
                relative_drift(&values) < 1e-6,
                "J{} drift {}",
                pick + 1,
                relative_drift(&values)
            );
        }
    }

    #[test]
    fn integrals_rotation_invariant() {
        let params = quadratic_params(3.0);
        let profile = params.shape.profile().unwrap().clone();
        let table = solve_yy(&profile, &params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        for _ in 0..10 {
            let s = ReducedState {
                m: rand_vec(&mut rng, 2.0),
                gamma: unit_vec(&mut rng),
            };
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let rot = Rotation::about_axis(2, phi);
            let sr = ReducedState {
                m: rot.apply(&s.m),
                gamma: rot.apply(&s.gamma),
            };
            let (j1, j2) = j_integrals(&table, &params, &s).unwrap();
            let (j1r, j2r) = j_integrals(&table, &params, &sr).unwrap();
            assert_abs_diff_eq!(j1, j1r, epsilon = 1e-10 * (1.0 + j1.abs()));
            assert_abs_diff_eq!(j2, j2r, epsilon = 1e-10 * (1.0 + j2.abs()));
        }
    }

    // -- homogeneous sphere -------------------------------------------------

    #[test]
    fn homsphere_integrals_finite_at_equilibrium() {
        let params = homsphere_params();
        let r = params.shape.radius().unwrap();
        let s = SphereReducedState {
            m: Vec3::new(0.0, 0.0, 1.3),
            gamma: Vec3::z(),
            u_body: Vec3::new(0.0, 0.0, r),
        };
        let (g2, f, e) = homsphere_integrals(&params, &s).unwrap();
        assert!(e.is_finite());
        assert_abs_diff_eq!(g2, 1.69, epsilon = 1e-12);
        assert_abs_diff_eq!(f, 1.3, epsilon = 1e-12);
    }

    #[test]
    fn homsphere_energy_without_drives_is_kinetic() {
        let params = ScenarioParams::new(
            BodyShape::homogeneous_sphere(1.0, 1.0, 2.0).unwrap(),
            PlaneField::rotating(0.0),
            SurfaceField::cats_toy(0.0, Vec3::z()),
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        for _ in 0..10 {
            let gamma = unit_vec(&mut rng);
            let u_t = rand_vec(&mut rng, 1.0);
            let u_body = u_t + gamma * (2.0 - u_t.dot(&gamma));
            let m = rand_vec(&mut rng, 2.0);
            let s = SphereReducedState { m, gamma, u_body };
            let (_, _, e) = homsphere_integrals(&params, &s).unwrap();
            let omega = homsphere_omega(&params, &s).unwrap();
            // rolling kinetic energy: spin plus center-of-mass translation
            let kinetic = 0.5 * 1.0 * omega.norm_squared()
                + 0.5 * 1.0 * (2.0 * gamma.cross(&omega)).norm_squared();
            assert_abs_diff_eq!(e, kinetic, epsilon = 1e-12 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn homsphere_integrals_conserved_long_run() {
        let params = homsphere_params();
        let r = params.shape.radius().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let gamma = unit_vec(&mut rng);
        let u_t = rand_vec(&mut rng, 1.5);
        let u_body = u_t + gamma * (r - u_t.dot(&gamma));
        let s0 = SphereReducedState {
            m: rand_vec(&mut rng, 2.0),
            gamma,
            u_body,
        };
        let traj = integrate_homsphere(&params, &s0, (0.0, 200.0), tight()).unwrap();
        for pick in 0..3 {
            let values: Vec<f64> = traj
                .states
                .iter()
                .map(|y| {
                    let (a, b, c) =
                        homsphere_integrals(&params, &SphereReducedState::from_array(y))
                            .unwrap();
                    [a, b, c][pick]
                })
                .collect();
            assert!(
                relative_drift(&values) < 1e-8,
                "integral {pick} drift {}",
                relative_drift(&values)
            );
        }
    }

    // keep the unused import warning away when only some tests exercise it
    #[allow(dead_code)]
    fn _use(_: fn(&ScenarioParams, &[f64; 6]) -> Result<[f64; 6], DynamicsError>) {}
    #[test]
    fn rhs_array_forms_available() {
        _use(chaplygin_rhs_array);
    }
}
