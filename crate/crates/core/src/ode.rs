//! Adaptive embedded Runge-Kutta integration with dense output.
//!
//! The driver is a Dormand-Prince 5(4) pair with cubic Hermite dense output
//! and an optional per-step projection hook used for constraint stabilization
//! (renormalizing the vertical, re-orthonormalizing the attitude, resetting
//! the center-of-mass height). Setting `fixed_dt` switches to classical RK4
//! with a fixed step, which serves as an independent cross-check method.

use std::fmt;

/// Absolute floor for the step size; going below raises
/// [`OdeError::StepSizeUnderflow`].
const MIN_STEP: f64 = 1e-14;

#[derive(Debug, Clone)]
pub enum OdeError<E> {
    StepSizeUnderflow { t: f64 },
    Rhs(E),
}

impl<E: fmt::Display> fmt::Display for OdeError<E> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OdeError::StepSizeUnderflow { t } => {
                write!(f, "step size underflow at t = {t}")
            }
            OdeError::Rhs(e) => write!(f, "right-hand side failed: {e}"),
        }
    }
}

impl<E: fmt::Debug + fmt::Display> std::error::Error for OdeError<E> {}

#[derive(Debug, Clone, Copy)]
pub struct StepOpts {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub first_step: Option<f64>,
    /// When set, use fixed-step classical RK4 instead of the adaptive pair.
    pub fixed_dt: Option<f64>,
}

impl Default for StepOpts {
    fn default() -> Self {
        StepOpts {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: f64::INFINITY,
            first_step: None,
            fixed_dt: None,
        }
    }
}

impl StepOpts {
    pub fn with_tol(rtol: f64, atol: f64) -> Self {
        StepOpts {
            rtol,
            atol,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// One accepted step, carrying the data for cubic Hermite interpolation.
#[derive(Debug, Clone, Copy)]
pub struct Segment<const N: usize> {
    pub t0: f64,
    pub t1: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    pub dy0: [f64; N],
    pub dy1: [f64; N],
}

impl<const N: usize> Segment<N> {
    /// Cubic Hermite interpolant at `t` in `[t0, t1]`.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let h = self.t1 - self.t0;
        let s = (t - self.t0) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let mut y = [0.0; N];
        for i in 0..N {
            y[i] = h00 * self.y0[i] + h10 * h * self.dy0[i] + h01 * self.y1[i]
                + h11 * h * self.dy1[i];
        }
        y
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Step-by-step driver. Owns the current `(t, y, y')` and step-size state;
/// callers pull accepted steps one at a time (Poincaré section scans) or via
/// [`integrate`] for a whole trajectory.
pub struct Stepper<'a, const N: usize, E> {
    rhs: Box<dyn FnMut(f64, &[f64; N]) -> Result<[f64; N], E> + 'a>,
    project: Option<Box<dyn Fn(&mut [f64; N]) + 'a>>,
    opts: StepOpts,
    t: f64,
    y: [f64; N],
    dy: [f64; N],
    h: f64,
    dir: f64,
    t_end: f64,
    stats: StepStats,
}

impl<'a, const N: usize, E> Stepper<'a, N, E> {
    pub fn new(
        mut rhs: impl FnMut(f64, &[f64; N]) -> Result<[f64; N], E> + 'a,
        project: Option<Box<dyn Fn(&mut [f64; N]) + 'a>>,
        mut y0: [f64; N],
        t0: f64,
        t_end: f64,
        opts: StepOpts,
    ) -> Result<Self, OdeError<E>> {
        if let Some(p) = &project {
            p(&mut y0);
        }
        let dy = rhs(t0, &y0).map_err(OdeError::Rhs)?;
        let dir = if t_end >= t0 { 1.0 } else { -1.0 };
        let span = (t_end - t0).abs().max(f64::MIN_POSITIVE);
        let h = match (opts.fixed_dt, opts.first_step) {
            (Some(dt), _) => dt.abs(),
            (None, Some(h0)) => h0.abs(),
            (None, None) => initial_step(&y0, &dy, &opts).min(span),
        };
        Ok(Stepper {
            rhs: Box::new(rhs),
            project,
            opts,
            t: t0,
            y: y0,
            dy,
            h,
            dir,
            t_end,
            stats: StepStats {
                rhs_evals: 1,
                ..Default::default()
            },
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn dy(&self) -> &[f64; N] {
        &self.dy
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    pub fn finished(&self) -> bool {
        (self.t_end - self.t) * self.dir <= 0.0
    }

    /// Advances by one accepted step and returns its Hermite segment, or
    /// `None` when `t_end` has been reached.
    pub fn step(&mut self) -> Result<Option<Segment<N>>, OdeError<E>> {
        if self.finished() {
            return Ok(None);
        }
        if self.opts.fixed_dt.is_some() {
            return self.step_rk4().map(Some);
        }
        self.step_adaptive().map(Some)
    }

    /// One trial DP5 step of signed size `h` from the current state.
    /// Returns `(y1, dy1, err_norm)`; `dy1` is the FSAL stage.
    fn trial(&mut self, h: f64) -> Result<([f64; N], [f64; N], f64), OdeError<E>> {
        let mut k = [[0.0; N]; 7];
        k[0] = self.dy;
        for stage in 1..6 {
            let mut ys = self.y;
            for i in 0..N {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage) {
                    acc += A[stage - 1][j] * kj[i];
                }
                ys[i] += h * acc;
            }
            k[stage] =
                (self.rhs)(self.t + C[stage] * h, &ys).map_err(OdeError::Rhs)?;
            self.stats.rhs_evals += 1;
        }
        let mut y1 = self.y;
        for i in 0..N {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate().take(6) {
                acc += A[5][j] * kj[i];
            }
            y1[i] += h * acc;
        }
        k[6] = (self.rhs)(self.t + h, &y1).map_err(OdeError::Rhs)?;
        self.stats.rhs_evals += 1;

        let mut err = 0.0;
        for i in 0..N {
            let mut e = 0.0;
            for (j, kj) in k.iter().enumerate() {
                e += (B[j] - B4[j]) * kj[i];
            }
            e *= h;
            let scale =
                self.opts.atol + self.opts.rtol * self.y[i].abs().max(y1[i].abs());
            err += (e / scale) * (e / scale);
        }
        let err = (err / N as f64).sqrt();
        Ok((y1, k[6], err))
    }

    fn step_adaptive(&mut self) -> Result<Segment<N>, OdeError<E>> {
        loop {
            let remaining = (self.t_end - self.t).abs();
            let h_mag = self.h.min(self.opts.max_step).min(remaining);
            if h_mag < MIN_STEP * self.t.abs().max(1.0) {
                return Err(OdeError::StepSizeUnderflow { t: self.t });
            }
            let h = h_mag * self.dir;
            let (y1, dy1, err) = self.trial(h)?;

            let factor = if err > 0.0 {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            if err <= 1.0 {
                self.stats.accepted += 1;
                let seg = Segment {
                    t0: self.t,
                    t1: self.t + h,
                    y0: self.y,
                    y1,
                    dy0: self.dy,
                    dy1,
                };
                self.t += h;
                self.y = y1;
                self.dy = dy1;
                if let Some(p) = &self.project {
                    p(&mut self.y);
                    self.dy = (self.rhs)(self.t, &self.y).map_err(OdeError::Rhs)?;
                    self.stats.rhs_evals += 1;
                }
                self.h = h_mag * factor;
                return Ok(seg);
            }
            self.stats.rejected += 1;
            self.h = h_mag * factor;
        }
    }

    fn step_rk4(&mut self) -> Result<Segment<N>, OdeError<E>> {
        let dt = self.opts.fixed_dt.expect("fixed_dt set");
        let remaining = (self.t_end - self.t).abs();
        let h = dt.min(remaining) * self.dir;
        let k1 = self.dy;
        let eval = |s: &mut Self, t: f64, y: &[f64; N]| -> Result<[f64; N], OdeError<E>> {
            s.stats.rhs_evals += 1;
            (s.rhs)(t, y).map_err(OdeError::Rhs)
        };
        let mut ys = self.y;
        for i in 0..N {
            ys[i] = self.y[i] + 0.5 * h * k1[i];
        }
        let k2 = eval(self, self.t + 0.5 * h, &ys)?;
        for i in 0..N {
            ys[i] = self.y[i] + 0.5 * h * k2[i];
        }
        let k3 = eval(self, self.t + 0.5 * h, &ys)?;
        for i in 0..N {
            ys[i] = self.y[i] + h * k3[i];
        }
        let k4 = eval(self, self.t + h, &ys)?;
        let mut y1 = self.y;
        for i in 0..N {
            y1[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let dy1 = eval(self, self.t + h, &y1)?;
        let seg = Segment {
            t0: self.t,
            t1: self.t + h,
            y0: self.y,
            y1,
            dy0: k1,
            dy1,
        };
        self.t += h;
        self.y = y1;
        self.dy = dy1;
        if let Some(p) = &self.project {
            p(&mut self.y);
            self.dy = eval(self, self.t, &self.y.clone())?;
        }
        self.stats.accepted += 1;
        Ok(seg)
    }

    /// Re-integrates a single DP5 step of exactly `t_target - t0` from the
    /// start of `seg`. Used to sharpen event states beyond the accuracy of
    /// the Hermite interpolant.
    pub fn refine_within(
        &mut self,
        seg: &Segment<N>,
        t_target: f64,
    ) -> Result<[f64; N], OdeError<E>> {
        let h = t_target - seg.t0;
        if h.abs() < MIN_STEP {
            return Ok(seg.y0);
        }
        let mut k = [[0.0; N]; 6];
        k[0] = seg.dy0;
        for stage in 1..6 {
            let mut ys = seg.y0;
            for i in 0..N {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage) {
                    acc += A[stage - 1][j] * kj[i];
                }
                ys[i] += h * acc;
            }
            k[stage] =
                (self.rhs)(seg.t0 + C[stage] * h, &ys).map_err(OdeError::Rhs)?;
            self.stats.rhs_evals += 1;
        }
        let mut y1 = seg.y0;
        for i in 0..N {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc += A[5][j] * kj[i];
            }
            y1[i] += h * acc;
        }
        Ok(y1)
    }
}

fn initial_step<const N: usize>(y: &[f64; N], dy: &[f64; N], opts: &StepOpts) -> f64 {
    let mut d0 = 0.0_f64;
    let mut d1 = 0.0_f64;
    for i in 0..N {
        let scale = opts.atol + opts.rtol * y[i].abs();
        d0 += (y[i] / scale) * (y[i] / scale);
        d1 += (dy[i] / scale) * (dy[i] / scale);
    }
    let d0 = (d0 / N as f64).sqrt();
    let d1 = (d1 / N as f64).sqrt();
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        (0.01 * d0 / d1).min(opts.max_step)
    }
}

/// Dense trajectory: accepted-step mesh plus Hermite segments.
#[derive(Debug, Clone)]
pub struct Trajectory<const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<[f64; N]>,
    pub derivs: Vec<[f64; N]>,
    pub stats: StepStats,
}

impl<const N: usize> Trajectory<N> {
    pub fn last(&self) -> &[f64; N] {
        self.states.last().expect("trajectory is non-empty")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Hermite interpolation at `t` within the integrated span.
    pub fn sample(&self, t: f64) -> [f64; N] {
        let n = self.times.len();
        assert!(n >= 2, "cannot sample a trajectory with fewer than 2 points");
        let forward = self.times[n - 1] >= self.times[0];
        let idx = if forward {
            match self
                .times
                .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
            {
                Ok(i) => i.min(n - 2),
                Err(i) => i.clamp(1, n - 1) - 1,
            }
        } else {
            match self
                .times
                .binary_search_by(|probe| t.partial_cmp(probe).unwrap())
            {
                Ok(i) => i.min(n - 2),
                Err(i) => i.clamp(1, n - 1) - 1,
            }
        };
        let seg = Segment {
            t0: self.times[idx],
            t1: self.times[idx + 1],
            y0: self.states[idx],
            y1: self.states[idx + 1],
            dy0: self.derivs[idx],
            dy1: self.derivs[idx + 1],
        };
        seg.eval(t)
    }
}

/// Integrates `rhs` over `[t0, t_end]` (either direction), applying `project`
/// after every accepted step.
pub fn integrate<const N: usize, E>(
    rhs: impl FnMut(f64, &[f64; N]) -> Result<[f64; N], E>,
    project: Option<Box<dyn Fn(&mut [f64; N]) + '_>>,
    y0: [f64; N],
    t0: f64,
    t_end: f64,
    opts: StepOpts,
) -> Result<Trajectory<N>, OdeError<E>> {
    let mut stepper = Stepper::new(rhs, project, y0, t0, t_end, opts)?;
    let mut times = vec![stepper.t()];
    let mut states = vec![*stepper.y()];
    let mut derivs = vec![*stepper.dy()];
    while let Some(_seg) = stepper.step()? {
        times.push(stepper.t());
        states.push(*stepper.y());
        derivs.push(*stepper.dy());
    }
    Ok(Trajectory {
        times,
        states,
        derivs,
        stats: stepper.stats(),
    })
}

/// Bisection of a scalar function of the interpolated state over a segment.
/// Requires a sign change between the endpoints of `bracket`.
pub fn bisect<const N: usize>(
    seg: &Segment<N>,
    f: impl Fn(f64, &[f64; N]) -> f64,
    bracket: (f64, f64),
    value_tol: f64,
) -> f64 {
    let (mut lo, mut hi) = bracket;
    let flo = f(lo, &seg.eval(lo));
    debug_assert!(flo * f(hi, &seg.eval(hi)) <= 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid, &seg.eval(mid));
        if fm.abs() < value_tol || (hi - lo).abs() < f64::EPSILON * mid.abs().max(1.0) {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
