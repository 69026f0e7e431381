//! Scenario file model: a versioned TOML tree describing the body, the
//! prescribed fields, the initial state, and integrator/section options,
//! plus the built-in presets for the two section-map experiments.

use serde::{Deserialize, Serialize};

use affine_rolling::algebra::orthonormalize;
use affine_rolling::dynamics::{holonomic_u3, FullState, ReducedState, SphereReducedState};
use affine_rolling::fields::{PlaneField, SurfaceField};
use affine_rolling::ode::StepOpts;
use affine_rolling::poincare::{
    andoyer_to_state, balanced_seed_from_levels, homsphere_seed_from_levels,
};
use affine_rolling::shapes::RevolutionProfile;
use affine_rolling::{BodyShape, Mat3, ScenarioParams, Vec3};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub body: BodySpec,
    #[serde(default)]
    pub fields: FieldsSpec,
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub integrator: IntegratorCfg,
    #[serde(default)]
    pub section: SectionCfg,
}

fn default_gravity() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodySpec {
    BalancedSphere {
        m: f64,
        i1: f64,
        i2: f64,
        i3: f64,
        r: f64,
    },
    HomogeneousSphere {
        m: f64,
        i: f64,
        r: f64,
    },
    Revolution {
        m: f64,
        i1: f64,
        i3: f64,
        profile: ProfileSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// Spherical surface with an axial mass-center offset.
    Routh { radius: f64, offset: f64 },
    /// Polynomial profile `f1 = e0 + e2 g3^2` with the consistent `f2`.
    Quadratic { e0: f64, e2: f64, offset: f64 },
    /// Raw linear profile `f1 = c0 + c1 g3`, `f2 = d0 + d1 g3`. Consistency
    /// with the shape ODE is *checked, not enforced* — this is the knob the
    /// self-check uses to exercise its residual detector.
    Linear { c0: f64, c1: f64, d0: f64, d1: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FieldsSpec {
    #[serde(default)]
    pub v: PlaneSpec,
    #[serde(default)]
    pub w: SurfaceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlaneSpec {
    #[default]
    None,
    Rotating {
        eta: f64,
    },
    Constant {
        v1: f64,
        v2: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SurfaceSpec {
    #[default]
    None,
    CatsToy {
        sigma: f64,
    },
}

/// Initial condition, either as raw vectors or through one of the charts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "chart", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Raw {
        m: [f64; 3],
        gamma: [f64; 3],
        #[serde(default, skip_serializing_if = "Option::is_none")]
        u: Option<[f64; 3]>,
    },
    Andoyer {
        #[serde(rename = "L")]
        big_l: f64,
        #[serde(rename = "G")]
        big_g: f64,
        l: f64,
        g: f64,
    },
    SphereInvariants {
        #[serde(rename = "L")]
        big_l: f64,
        s1: f64,
        s2: f64,
        #[serde(rename = "G")]
        big_g: f64,
        g: f64,
        l: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorCfg {
    pub rtol: f64,
    pub atol: f64,
    pub t_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_dt: Option<f64>,
}

impl Default for IntegratorCfg {
    fn default() -> Self {
        IntegratorCfg {
            rtol: 1e-10,
            atol: 1e-12,
            t_max: 100.0,
            fixed_dt: None,
        }
    }
}

/// Section-experiment options. Exactly one of `epsilon` (momentum scale for
/// the balanced-sphere experiment) or `e_mov` (moving-energy level for the
/// homogeneous-sphere experiment) selects the chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionCfg {
    pub crossings: usize,
    pub seeds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_mov: Option<f64>,
    /// Upper end of the `s1` interval searched when seeding on an `E_mov`
    /// level.
    pub s1_max: f64,
    /// Integration horizon for section runs (independent of the trajectory
    /// horizon `integrator.t_max`).
    pub t_max: f64,
}

impl Default for SectionCfg {
    fn default() -> Self {
        SectionCfg {
            crossings: 300,
            seeds: 20,
            epsilon: None,
            e_mov: None,
            s1_max: 30.0,
            t_max: 2.0e4,
        }
    }
}

// ---------------------------------------------------------------------------
// Loading and presets.
// ---------------------------------------------------------------------------

/// Loads a scenario from a preset name or a TOML file path.
pub fn load(name_or_path: &str) -> Result<Scenario, CliError> {
    if let Some(sc) = preset(name_or_path) {
        return Ok(sc);
    }
    let text = std::fs::read_to_string(name_or_path).map_err(|e| {
        CliError::Config(format!("cannot read scenario '{name_or_path}': {e}"))
    })?;
    let sc: Scenario = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("scenario '{name_or_path}': {e}")))?;
    if sc.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            sc.schema_version
        )));
    }
    Ok(sc)
}

/// Built-in scenarios behind the figure parameter lists: `fig5_eps{12, 4, 2,
/// 0.4, 0.2, 0.04}` and `fig6_E{-20, -10, -8, -7, -6, -5}`.
pub fn preset(name: &str) -> Option<Scenario> {
    if let Some(eps) = name.strip_prefix("fig5_eps") {
        let eps: f64 = eps.parse().ok().filter(|e| *e > 0.0)?;
        return Some(Scenario {
            schema_version: SCHEMA_VERSION,
            body: BodySpec::BalancedSphere {
                m: 1.0,
                i1: 0.5,
                i2: 2.5,
                i3: 3.0,
                r: 5.0,
            },
            fields: FieldsSpec {
                v: PlaneSpec::None,
                w: SurfaceSpec::CatsToy { sigma: 10.0 },
            },
            gravity: 1.0,
            initial: None,
            integrator: IntegratorCfg::default(),
            section: SectionCfg {
                epsilon: Some(eps),
                ..SectionCfg::default()
            },
        });
    }
    if let Some(e) = name.strip_prefix("fig6_E") {
        let e_mov: f64 = e.parse().ok()?;
        return Some(Scenario {
            schema_version: SCHEMA_VERSION,
            body: BodySpec::HomogeneousSphere {
                m: 1.0,
                i: 1.0,
                r: 2.0,
            },
            fields: FieldsSpec {
                v: PlaneSpec::Rotating { eta: 1.0 },
                w: SurfaceSpec::CatsToy { sigma: 1.0 },
            },
            gravity: 1.0,
            initial: None,
            integrator: IntegratorCfg::default(),
            section: SectionCfg {
                e_mov: Some(e_mov),
                ..SectionCfg::default()
            },
        });
    }
    None
}

// ---------------------------------------------------------------------------
// Building runtime objects.
// ---------------------------------------------------------------------------

/// Which phase space the scenario's dynamics lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// `(M, gamma)` balanced sphere, plane field absent.
    Sphere6,
    /// `(M, gamma)` body of revolution, plane field absent.
    Revolution6,
    /// `(M, gamma, U)` homogeneous sphere on a rotating plane with a cat's
    /// toy.
    Homsphere9,
    /// `(M, B, u)` full system, needed when a plane field is present.
    Full15,
}

impl Scenario {
    pub fn build_shape(&self) -> Result<BodyShape, CliError> {
        let shape = match &self.body {
            BodySpec::BalancedSphere { m, i1, i2, i3, r } => {
                BodyShape::balanced_sphere(*m, (*i1, *i2, *i3), *r)
            }
            BodySpec::HomogeneousSphere { m, i, r } => BodyShape::homogeneous_sphere(*m, *i, *r),
            BodySpec::Revolution { m, i1, i3, profile } => {
                let profile = build_profile(profile)?;
                BodyShape::revolution_body(*m, *i1, *i3, profile)
            }
        };
        shape.map_err(|e| CliError::Config(format!("body: {e}")))
    }

    pub fn build_params(&self) -> Result<ScenarioParams, CliError> {
        let shape = self.build_shape()?;
        let plane = match &self.fields.v {
            PlaneSpec::None => PlaneField::zero(),
            PlaneSpec::Rotating { eta } => PlaneField::rotating(*eta),
            PlaneSpec::Constant { v1, v2 } => PlaneField::constant(*v1, *v2),
        };
        let surface = match &self.fields.w {
            SurfaceSpec::None => SurfaceField::zero(),
            SurfaceSpec::CatsToy { sigma } => SurfaceField::cats_toy(*sigma, Vec3::z()),
        };
        ScenarioParams::new(shape, plane, surface, self.gravity)
            .map_err(|e| CliError::Config(format!("scenario: {e}")))
    }

    pub fn system_kind(&self) -> SystemKind {
        let homsphere = matches!(self.body, BodySpec::HomogeneousSphere { .. })
            && matches!(self.fields.v, PlaneSpec::Rotating { .. })
            && matches!(self.fields.w, SurfaceSpec::CatsToy { .. });
        if homsphere {
            return SystemKind::Homsphere9;
        }
        match (&self.fields.v, &self.body) {
            (PlaneSpec::None, BodySpec::Revolution { .. }) => SystemKind::Revolution6,
            (PlaneSpec::None, _) => SystemKind::Sphere6,
            _ => SystemKind::Full15,
        }
    }

    pub fn step_opts(&self) -> StepOpts {
        let mut opts = StepOpts::with_tol(self.integrator.rtol, self.integrator.atol);
        opts.fixed_dt = self.integrator.fixed_dt;
        opts
    }

    /// Initial `(M, gamma)` state: raw vectors, the Andoyer chart, or (when
    /// no initial block is given) the first seed of the section grid.
    pub fn initial_reduced(&self, params: &ScenarioParams) -> Result<ReducedState, CliError> {
        match &self.initial {
            Some(InitialSpec::Raw { m, gamma, .. }) => {
                let gamma = Vec3::from(*gamma);
                if gamma.norm() < 1e-12 {
                    return Err(CliError::Config("initial.gamma must be nonzero".into()));
                }
                Ok(ReducedState {
                    m: Vec3::from(*m),
                    gamma: gamma.normalize(),
                })
            }
            Some(InitialSpec::Andoyer { big_l, big_g, l, g }) => {
                andoyer_to_state(*big_l, *big_g, *l, *g)
                    .map_err(|e| CliError::Config(format!("initial: {e}")))
            }
            Some(InitialSpec::SphereInvariants { .. }) => Err(CliError::Config(
                "initial.chart = sphere_invariants needs a homogeneous-sphere scenario".into(),
            )),
            None => {
                let eps = self.section.epsilon.ok_or_else(|| {
                    CliError::Config(
                        "no initial state: give [initial] or section.epsilon".into(),
                    )
                })?;
                let (l, c) = balanced_seed_grid(self.section.seeds.max(1))[0];
                balanced_seed_from_levels(params, eps, l, c)
                    .map_err(|e| CliError::Config(format!("seeding: {e}")))
            }
        }
    }

    /// Initial `(M, gamma, U)` state for the homogeneous-sphere system.
    pub fn initial_homsphere(
        &self,
        params: &ScenarioParams,
    ) -> Result<SphereReducedState, CliError> {
        let radius = params
            .shape
            .radius()
            .ok_or_else(|| CliError::Config("spherical body required".into()))?;
        match &self.initial {
            Some(InitialSpec::Raw { m, gamma, u }) => {
                let gamma = Vec3::from(*gamma).normalize();
                let u = u.map(Vec3::from).unwrap_or_else(|| radius * gamma);
                Ok(SphereReducedState {
                    m: Vec3::from(*m),
                    gamma,
                    u_body: u,
                })
            }
            Some(InitialSpec::SphereInvariants {
                big_l,
                s1,
                s2,
                big_g,
                g,
                l,
            }) => affine_rolling::poincare::homsphere_invariants_to_state(
                *big_l, *s1, *s2, *big_g, 0.0, *g, *l, radius,
            )
            .map_err(|e| CliError::Config(format!("initial: {e}"))),
            Some(InitialSpec::Andoyer { .. }) => Err(CliError::Config(
                "initial.chart = andoyer needs a (M, gamma) scenario".into(),
            )),
            None => {
                let e_mov = self.section.e_mov.ok_or_else(|| {
                    CliError::Config("no initial state: give [initial] or section.e_mov".into())
                })?;
                let big_g = 2.0;
                let l_levels = homsphere_seed_grid(self.section.seeds.max(1), big_g);
                homsphere_seed_from_levels(
                    params,
                    big_g,
                    e_mov,
                    l_levels[0],
                    0.0,
                    std::f64::consts::FRAC_PI_4,
                    0.0,
                    (0.0, self.section.s1_max),
                )
                .map_err(|e| CliError::Config(format!("seeding: {e}")))
            }
        }
    }

    /// Initial full state. The attitude is completed deterministically from
    /// `gamma` (Gram-Schmidt against the spatial axes) and the height is the
    /// constrained one; raw `u` supplies the planar position.
    pub fn initial_full(&self, params: &ScenarioParams) -> Result<FullState, CliError> {
        let reduced = match &self.initial {
            Some(InitialSpec::Raw { .. }) | Some(InitialSpec::Andoyer { .. }) | None => {
                self.initial_reduced(params)?
            }
            Some(InitialSpec::SphereInvariants { .. }) => {
                return Err(CliError::Config(
                    "initial.chart = sphere_invariants needs a homogeneous-sphere scenario"
                        .into(),
                ))
            }
        };
        let planar = match &self.initial {
            Some(InitialSpec::Raw { u: Some(u), .. }) => Vec3::new(u[0], u[1], 0.0),
            _ => Vec3::zeros(),
        };
        let b = attitude_from_gamma(&reduced.gamma)?;
        let u3 = holonomic_u3(&params.shape, &reduced.gamma);
        Ok(FullState {
            m: reduced.m,
            b,
            u: Vec3::new(planar.x, planar.y, u3),
        })
    }
}

fn build_profile(spec: &ProfileSpec) -> Result<RevolutionProfile, CliError> {
    let profile = match spec {
        ProfileSpec::Routh { radius, offset } => RevolutionProfile::routh(*radius, *offset),
        ProfileSpec::Quadratic { e0, e2, offset } => {
            RevolutionProfile::quadratic(*e0, *e2, *offset)
        }
        ProfileSpec::Linear { c0, c1, d0, d1 } => {
            let (c0, c1, d0, d1) = (*c0, *c1, *d0, *d1);
            RevolutionProfile::new(
                move |g3| c0 + c1 * g3,
                move |_| c1,
                move |g3| d0 + d1 * g3,
                move |_| d1,
            )
        }
    };
    profile.map_err(|e| CliError::Config(format!("body.profile: {e}")))
}

/// Attitude matrix whose third row is `gamma`, completed by Gram-Schmidt.
pub fn attitude_from_gamma(gamma: &Vec3) -> Result<affine_rolling::Rotation, CliError> {
    let seed = if gamma.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let alpha = (seed - gamma.dot(&seed) * gamma).normalize();
    let beta = gamma.cross(&alpha);
    let b = Mat3::from_rows(&[alpha.transpose(), beta.transpose(), gamma.transpose()]);
    orthonormalize(&b).map_err(|e| CliError::Config(format!("initial attitude: {e}")))
}

/// Deterministic `(l, L/G)` grid used when distributing balanced-sphere
/// seeds; row-major over 5 values of `l` times as many `L/G` levels as
/// needed.
pub fn balanced_seed_grid(n: usize) -> Vec<(f64, f64)> {
    let nl = 5.min(n.max(1));
    let nc = n.div_ceil(nl);
    let mut grid = Vec::with_capacity(n);
    for j in 0..nc {
        let c = -0.9 + 1.8 * (j as f64 + 0.5) / nc as f64;
        for i in 0..nl {
            if grid.len() == n {
                break;
            }
            let l = -std::f64::consts::PI
                + 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / nl as f64;
            grid.push((l, c));
        }
    }
    grid
}

/// Deterministic grid of `L` levels used when distributing homogeneous-
/// sphere seeds on a moving-energy level.
pub fn homsphere_seed_grid(n: usize, big_g: f64) -> Vec<f64> {
    (0..n)
        .map(|k| big_g * (-0.9 + 1.8 * (k as f64 + 0.5) / n as f64))
        .collect()
}
