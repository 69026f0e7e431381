//! Section-map machinery: the Andoyer–Deprit chart for the reduced balanced
//! sphere, the SO(2)-invariant chart for the reduced homogeneous sphere,
//! sign-change crossing detection on dense integrator output, and seeding of
//! section experiments on first-integral level sets.

use thiserror::Error;

use crate::algebra::Vec3;
use crate::dynamics::{
    chaplygin_rhs_array, homsphere_rhs_array, homsphere_projection, reduced_projection,
    DynamicsError, ReducedState, ScenarioParams, SphereReducedState,
};
use crate::invariants::{homsphere_integrals, InvariantError};
use crate::ode::{self, OdeError, StepOpts, Stepper};

/// A reported crossing satisfies `|section function| < SECTION_VALUE_TOL`.
pub const SECTION_VALUE_TOL: f64 = 1e-10;

/// Squared-radius floor below which the momentum is considered parallel to
/// the vertical axis and the angle `l` is undefined.
const CHART_SINGULAR_TOL: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum PoincareError {
    #[error("chart precondition violated: {0}")]
    Domain(&'static str),
    #[error("chart singular: {0}")]
    ChartSingularity(&'static str),
    #[error("found {found} of {requested} crossings before t = {t_max}")]
    MaxTimeExceeded {
        found: usize,
        requested: usize,
        t_max: f64,
    },
    #[error("no seed on the requested level set: {0}")]
    NoSeedFound(&'static str),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
    #[error("integration failed: {0}")]
    Ode(#[from] OdeError<DynamicsError>),
}

// ---------------------------------------------------------------------------
// Andoyer-Deprit chart for the reduced balanced sphere.
// ---------------------------------------------------------------------------

/// Builds `(M, gamma)` from the Andoyer-Deprit variables `(L, G, l, g)` on
/// the zero level of `<M, gamma>`:
///
/// ```text
/// M     = (S sin l, S cos l, L),                      S = sqrt(G^2 - L^2)
/// gamma = ((L/G) cos g sin l + sin g cos l,
///          (L/G) cos g cos l - sin g sin l,
///          -(S/G) cos g)
/// ```
///
/// The `cos g` factor in the vertical component is what makes `gamma` a unit
/// vector orthogonal to `M` for every `(l, g)`.
pub fn andoyer_to_state(
    big_l: f64,
    big_g: f64,
    l: f64,
    g: f64,
) -> Result<ReducedState, PoincareError> {
    if !(big_g > 0.0) || big_l.abs() > big_g {
        return Err(PoincareError::Domain("need G > 0 and |L| <= G"));
    }
    let s = (big_g * big_g - big_l * big_l).sqrt();
    let (sl, cl) = l.sin_cos();
    let (sg, cg) = g.sin_cos();
    let c = big_l / big_g;
    Ok(ReducedState {
        m: Vec3::new(s * sl, s * cl, big_l),
        gamma: Vec3::new(
            c * cg * sl + sg * cl,
            c * cg * cl - sg * sl,
            -(s / big_g) * cg,
        ),
    })
}

/// Inverts [`andoyer_to_state`] on states with `<M, gamma> = 0`:
/// `L = M3`, `G = ||M||`, `l = atan2(M1, M2)`, and `g` recovered from
/// `sin g = gamma_1 cos l - gamma_2 sin l`, `cos g = -G gamma_3 / S`.
pub fn state_to_andoyer(s: &ReducedState) -> Result<(f64, f64, f64, f64), PoincareError> {
    let big_g = s.m.norm();
    let big_l = s.m.z;
    if s.m.dot(&s.gamma).abs() > 1e-8 * big_g.max(1.0) {
        return Err(PoincareError::Domain("state is off the <M, gamma> = 0 level"));
    }
    let s2 = big_g * big_g - big_l * big_l;
    if s2 < CHART_SINGULAR_TOL {
        return Err(PoincareError::ChartSingularity(
            "momentum parallel to the vertical axis",
        ));
    }
    let l = s.m.x.atan2(s.m.y);
    let (sl, cl) = l.sin_cos();
    let sin_g = s.gamma.x * cl - s.gamma.y * sl;
    let cos_g = -big_g * s.gamma.z / s2.sqrt();
    Ok((big_l, big_g, l, sin_g.atan2(cos_g)))
}

// ---------------------------------------------------------------------------
// SO(2)-invariant chart for the reduced homogeneous sphere.
// ---------------------------------------------------------------------------

/// The six scalars `(L, s1, s2, G, f, g)` invariant under the simultaneous
/// rotation of `M`, `gamma`, and `U` about the vertical axis:
///
/// ```text
/// L = M3                     s1 = U1 g1 + U2 g2     s2 = U1 g2 - U2 g1
/// G = ||M||                  f  = <M, gamma>
/// g = atan2(G (M1 g2 - M2 g1), f L - G^2 g3)
/// ```
///
/// The numerator orientation is the one that round-trips with the
/// reconstruction formulas below (the opposite orientation recovers `-g`).
pub fn homsphere_state_to_invariants(
    s: &SphereReducedState,
) -> Result<(f64, f64, f64, f64, f64, f64), PoincareError> {
    let big_g = s.m.norm();
    let big_l = s.m.z;
    let f = s.m.dot(&s.gamma);
    let s1 = s.u_body.x * s.gamma.x + s.u_body.y * s.gamma.y;
    let s2 = s.u_body.x * s.gamma.y - s.u_body.y * s.gamma.x;
    let num = big_g * (s.m.x * s.gamma.y - s.m.y * s.gamma.x);
    let den = f * big_l - big_g * big_g * s.gamma.z;
    if num.abs() < CHART_SINGULAR_TOL && den.abs() < CHART_SINGULAR_TOL {
        return Err(PoincareError::ChartSingularity(
            "angle g undefined: numerator and denominator both vanish",
        ));
    }
    Ok((big_l, s1, s2, big_g, f, num.atan2(den)))
}

/// Reconstructs a reduced homogeneous-sphere state from chart values on the
/// `f = 0` slice, with the section angle `l` supplied as the free coordinate:
///
/// ```text
/// M     = (S sin l, S cos l, L)
/// gamma = (-cos l sin g + (L/G) sin l cos g,
///           sin l sin g + (L/G) cos l cos g,
///          -(S/G) cos g)
/// ```
///
/// `(U1, U2)` solve the linear system defined by `s1, s2`, and `U3` is fixed
/// by the contact identity `<U, gamma> = r` (the chart itself does not
/// determine the vertical component); the final shift along `gamma` restores
/// that identity to roundoff.
#[allow(clippy::too_many_arguments)]
pub fn homsphere_invariants_to_state(
    big_l: f64,
    s1: f64,
    s2: f64,
    big_g: f64,
    f: f64,
    g: f64,
    l: f64,
    radius: f64,
) -> Result<SphereReducedState, PoincareError> {
    if !(big_g > 0.0) || big_l.abs() > big_g {
        return Err(PoincareError::Domain("need G > 0 and |L| <= G"));
    }
    if f.abs() > 1e-12 {
        return Err(PoincareError::Domain(
            "reconstruction is defined on the f = 0 slice",
        ));
    }
    let s = (big_g * big_g - big_l * big_l).sqrt();
    let (sl, cl) = l.sin_cos();
    let (sg, cg) = g.sin_cos();
    let planar = big_l * big_l * cg * cg + big_g * big_g * sg * sg;
    if planar < 1e-12 || (s * s * cg.abs()) < 1e-12 {
        return Err(PoincareError::ChartSingularity(
            "reconstruction denominator vanishes",
        ));
    }
    let m = Vec3::new(s * sl, s * cl, big_l);
    let c = big_l / big_g;
    let g1 = -cl * sg + c * sl * cg;
    let g2 = sl * sg + c * cl * cg;
    let g3 = -(s / big_g) * cg;
    // [g1  g2; g2 -g1] (U1, U2)^T = (s1, s2)^T, determinant -(g1^2 + g2^2)
    let det = -(g1 * g1 + g2 * g2);
    let u1 = (-g1 * s1 - g2 * s2) / det;
    let u2 = (-g2 * s1 + g1 * s2) / det;
    let u3 = (radius - s1) / g3;
    let gamma = Vec3::new(g1, g2, g3);
    let mut u = Vec3::new(u1, u2, u3);
    u += (radius - u.dot(&gamma)) * gamma;
    Ok(SphereReducedState { m, gamma, u_body: u })
}

// ---------------------------------------------------------------------------
// Section specification and crossing scan.
// ---------------------------------------------------------------------------

/// Which chart supplies the section angle and the plotted coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    /// Andoyer-Deprit `(L, G, l, g)`; plots `(l, L/G)`.
    Andoyer,
    /// Homogeneous-sphere invariants `(L, s1, s2, G, f, g)`; plots `(s2, L)`.
    SphereInvariants,
}

/// Which sign of `d/dt sin(g - g0)` counts as a crossing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Positive,
    Negative,
    Both,
}

/// Section `g = g0` of a chart, crossed in a chosen direction. Crossings are
/// detected on `sin(g - g0)` (branch-cut free) and the spurious zero at
/// `g = g0 + pi` is rejected by the sign of `cos(g - g0)`.
#[derive(Debug, Clone, Copy)]
pub struct SectionSpec {
    pub chart: Chart,
    pub g0: f64,
    pub direction: Direction,
}

impl SectionSpec {
    /// The balanced-sphere experiment: `g = 0`, increasing crossings.
    pub fn balanced_sphere() -> Self {
        SectionSpec {
            chart: Chart::Andoyer,
            g0: 0.0,
            direction: Direction::Positive,
        }
    }

    /// The homogeneous-sphere experiment: `g = pi/4`, increasing crossings.
    pub fn homogeneous_sphere() -> Self {
        SectionSpec {
            chart: Chart::SphereInvariants,
            g0: std::f64::consts::FRAC_PI_4,
            direction: Direction::Positive,
        }
    }
}

/// One located section crossing.
#[derive(Debug, Clone, Copy)]
pub struct CrossingEvent<const N: usize> {
    pub time: f64,
    /// Plotted pair: `(l, L/G)` for the Andoyer chart, `(s2, L)` for the
    /// homogeneous-sphere chart.
    pub coords: (f64, f64),
    /// Sign of the section function's time derivative at the crossing.
    pub direction: f64,
    pub state: [f64; N],
}

/// Output of a section scan: the located crossings plus the number of
/// sign-change candidates dropped because the chart was singular there.
#[derive(Debug, Clone)]
pub struct SectionRun<const N: usize> {
    pub events: Vec<CrossingEvent<N>>,
    pub skipped: usize,
}

/// Scans a flow for zeros of `value`, keeping those accepted by `accept` and
/// labelled by `coords`. `value` returns `None` where the underlying chart is
/// singular; such candidates are counted in `SectionRun::skipped`.
///
/// Each crossing is bracketed by a sign change across one accepted step,
/// bisected on the dense interpolant, then sharpened by re-integrating a
/// single exact-length step and polishing with a secant iteration until the
/// section residual is below [`SECTION_VALUE_TOL`].
pub fn section_scan<const N: usize>(
    mut stepper: Stepper<'_, N, DynamicsError>,
    value: impl Fn(&[f64; N]) -> Option<f64>,
    accept: impl Fn(&[f64; N]) -> bool,
    coords: impl Fn(&[f64; N]) -> Option<(f64, f64)>,
    direction: Direction,
    n_crossings: usize,
) -> Result<SectionRun<N>, PoincareError> {
    let mut events = Vec::new();
    let mut skipped = 0usize;
    let mut prev = value(stepper.y());
    let mut last_t = stepper.t();
    while events.len() < n_crossings {
        let Some(seg) = stepper.step()? else {
            break;
        };
        last_t = stepper.t();
        let cur = value(stepper.y());
        if let (Some(v0), Some(v1)) = (prev, cur) {
            if v0 * v1 < 0.0 {
                let sign = (v1 - v0).signum();
                let wanted = match direction {
                    Direction::Positive => sign > 0.0,
                    Direction::Negative => sign < 0.0,
                    Direction::Both => true,
                };
                if wanted {
                    let interp =
                        |_t: f64, y: &[f64; N]| value(y).unwrap_or(f64::NAN);
                    let mut t_star =
                        ode::bisect(&seg, interp, (seg.t0, seg.t1), 1e-13);
                    let mut y_star = stepper.refine_within(&seg, t_star)?;
                    let mut v = value(&y_star);
                    // secant polish on re-integrated states
                    for _ in 0..25 {
                        let Some(vs) = v else { break };
                        if vs.abs() <= SECTION_VALUE_TOL {
                            break;
                        }
                        let dt = (seg.t1 - seg.t0) * 1e-7;
                        let y_probe = stepper.refine_within(&seg, t_star + dt)?;
                        let Some(vp) = value(&y_probe) else { break };
                        let slope = (vp - vs) / dt;
                        if slope == 0.0 || !slope.is_finite() {
                            break;
                        }
                        t_star = (t_star - vs / slope).clamp(
                            seg.t0.min(seg.t1),
                            seg.t0.max(seg.t1),
                        );
                        y_star = stepper.refine_within(&seg, t_star)?;
                        v = value(&y_star);
                    }
                    match v {
                        Some(vs) if vs.abs() <= SECTION_VALUE_TOL => {
                            if accept(&y_star) {
                                match coords(&y_star) {
                                    Some(c) => events.push(CrossingEvent {
                                        time: t_star,
                                        coords: c,
                                        direction: sign,
                                        state: y_star,
                                    }),
                                    None => skipped += 1,
                                }
                            }
                        }
                        _ => skipped += 1,
                    }
                }
            }
        }
        prev = cur;
    }
    if events.len() < n_crossings {
        return Err(PoincareError::MaxTimeExceeded {
            found: events.len(),
            requested: n_crossings,
            t_max: last_t,
        });
    }
    Ok(SectionRun { events, skipped })
}

/// Section map of the reduced balanced sphere in the Andoyer chart. Events
/// carry `(l, L/G)`.
pub fn balanced_section_map(
    params: &ScenarioParams,
    spec: &SectionSpec,
    seed: &ReducedState,
    n_crossings: usize,
    t_max: f64,
    opts: StepOpts,
) -> Result<SectionRun<6>, PoincareError> {
    if spec.chart != Chart::Andoyer {
        return Err(PoincareError::Domain(
            "balanced-sphere sections use the Andoyer chart",
        ));
    }
    let g0 = spec.g0;
    let stepper = Stepper::new(
        |_t, y: &[f64; 6]| chaplygin_rhs_array(params, y),
        Some(reduced_projection()),
        seed.to_array(),
        0.0,
        t_max,
        opts,
    )?;
    let angle = |y: &[f64; 6]| {
        state_to_andoyer(&ReducedState::from_array(y))
            .ok()
            .map(|(_, _, _, g)| g)
    };
    section_scan(
        stepper,
        |y| angle(y).map(|g| (g - g0).sin()),
        |y| angle(y).is_some_and(|g| (g - g0).cos() > 0.0),
        |y| {
            state_to_andoyer(&ReducedState::from_array(y))
                .ok()
                .map(|(big_l, big_g, l, _)| (l, big_l / big_g))
        },
        spec.direction,
        n_crossings,
    )
}

/// Section map of the reduced homogeneous sphere in the invariant chart.
/// Events carry `(s2, L)`.
pub fn homsphere_section_map(
    params: &ScenarioParams,
    spec: &SectionSpec,
    seed: &SphereReducedState,
    n_crossings: usize,
    t_max: f64,
    opts: StepOpts,
) -> Result<SectionRun<9>, PoincareError> {
    if spec.chart != Chart::SphereInvariants {
        return Err(PoincareError::Domain(
            "homogeneous-sphere sections use the invariant chart",
        ));
    }
    let radius = params
        .shape
        .radius()
        .ok_or(PoincareError::Domain("spherical body required"))?;
    let g0 = spec.g0;
    let stepper = Stepper::new(
        |_t, y: &[f64; 9]| homsphere_rhs_array(params, y),
        Some(homsphere_projection(radius)),
        seed.to_array(),
        0.0,
        t_max,
        opts,
    )?;
    let angle = |y: &[f64; 9]| {
        homsphere_state_to_invariants(&SphereReducedState::from_array(y))
            .ok()
            .map(|(_, _, _, _, _, g)| g)
    };
    section_scan(
        stepper,
        |y| angle(y).map(|g| (g - g0).sin()),
        |y| angle(y).is_some_and(|g| (g - g0).cos() > 0.0),
        |y| {
            homsphere_state_to_invariants(&SphereReducedState::from_array(y))
                .ok()
                .map(|(big_l, _, s2, _, _, _)| (s2, big_l))
        },
        spec.direction,
        n_crossings,
    )
}

// ---------------------------------------------------------------------------
// Seeding on integral levels.
// ---------------------------------------------------------------------------

/// Balanced-sphere seed on the section `g = 0` at momentum scale
/// `G = epsilon * m r^2 sigma` (the non-dimensional scale of the surface
/// field), placed at the chart point `(l, L/G)`.
pub fn balanced_seed_from_levels(
    params: &ScenarioParams,
    epsilon: f64,
    l: f64,
    l_over_g: f64,
) -> Result<ReducedState, PoincareError> {
    let (sigma, _) = params
        .surface
        .cats_toy_params()
        .ok_or(PoincareError::Domain("cat's toy surface field required"))?;
    let radius = params
        .shape
        .radius()
        .ok_or(PoincareError::Domain("spherical body required"))?;
    let big_g = epsilon * params.shape.mass() * radius * radius * sigma.abs();
    if !(big_g > 0.0) {
        return Err(PoincareError::Domain("need epsilon * sigma != 0"));
    }
    if l_over_g.abs() >= 1.0 {
        return Err(PoincareError::Domain("need |L/G| < 1"));
    }
    andoyer_to_state(l_over_g * big_g, big_g, l, 0.0)
}

/// Homogeneous-sphere seed on the levels `||M|| = G`, `<M, gamma> = 0`, and
/// `E_mov = e_mov`, at the chart point `(L, s2, g, l)`. The remaining
/// coordinate `s1` is found by a grid scan plus bisection of the moving-energy
/// residual over `s1_range`; the residual of the returned seed is below
/// `1e-10`.
#[allow(clippy::too_many_arguments)]
pub fn homsphere_seed_from_levels(
    params: &ScenarioParams,
    big_g: f64,
    e_mov: f64,
    big_l: f64,
    s2: f64,
    g: f64,
    l: f64,
    s1_range: (f64, f64),
) -> Result<SphereReducedState, PoincareError> {
    let radius = params
        .shape
        .radius()
        .ok_or(PoincareError::Domain("spherical body required"))?;
    let residual = |s1: f64| -> Result<f64, PoincareError> {
        let state =
            homsphere_invariants_to_state(big_l, s1, s2, big_g, 0.0, g, l, radius)?;
        let (_, _, e) = homsphere_integrals(params, &state)?;
        Ok(e - e_mov)
    };
    // grid scan for the first bracket, then bisection
    const GRID: usize = 256;
    let (lo, hi) = s1_range;
    if !(hi > lo) {
        return Err(PoincareError::Domain("empty s1 search range"));
    }
    let at = |i: usize| lo + (hi - lo) * i as f64 / GRID as f64;
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for i in 0..=GRID {
        let s1 = at(i);
        let Ok(r) = residual(s1) else {
            prev = None;
            continue;
        };
        if r == 0.0 {
            bracket = Some((s1, s1));
            break;
        }
        if let Some((ps, pr)) = prev {
            if pr * r < 0.0 {
                bracket = Some((ps, s1));
                break;
            }
        }
        prev = Some((s1, r));
    }
    let Some((mut a, mut b)) = bracket else {
        return Err(PoincareError::NoSeedFound(
            "moving-energy level does not intersect the s1 search range",
        ));
    };
    let mut ra = residual(a)?;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let rm = residual(mid)?;
        if rm.abs() < 1e-10 {
            a = mid;
            break;
        }
        if (rm > 0.0) == (ra > 0.0) {
            a = mid;
            ra = rm;
        } else {
            b = mid;
        }
    }
    let state = homsphere_invariants_to_state(big_l, a, s2, big_g, 0.0, g, l, radius)?;
    let (_, _, e) = homsphere_integrals(params, &state)?;
    if (e - e_mov).abs() >= 1e-10 {
        return Err(PoincareError::NoSeedFound(
            "bisection failed to meet the moving-energy residual tolerance",
        ));
    }
    Ok(state)
}
