//! VacuumBot: planar body with horizontal, vertical and angular actuation under
//! gravity and ground friction, trajectories as waypoints plus segment durations.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{relu_sq, relu_sq_grad, Real};
use crate::seed::rng_from;

/// Number of state coordinates per waypoint.
pub const STATE_DIM: usize = 6;

/// Pose and velocity. `y` is height above the ground plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct RobotState<T> {
    /// m
    pub x: T,
    /// m, >= 0
    pub y: T,
    /// rad, body angle in (-pi, pi]
    pub phi: T,
    pub vx: T,
    pub vy: T,
    pub vphi: T,
}

impl<T: Real> RobotState<T> {
    pub fn at_rest(x: T, y: T) -> Self {
        Self { x, y, phi: T::zero(), vx: T::zero(), vy: T::zero(), vphi: T::zero() }
    }

    #[inline]
    pub fn to_array(&self) -> [T; STATE_DIM] {
        [self.x, self.y, self.phi, self.vx, self.vy, self.vphi]
    }

    #[inline]
    pub fn from_array(a: [T; STATE_DIM]) -> Self {
        Self { x: a[0], y: a[1], phi: a[2], vx: a[3], vy: a[4], vphi: a[5] }
    }

    #[inline]
    pub fn velocity(&self) -> [T; 3] {
        [self.vx, self.vy, self.vphi]
    }

    /// Same state with `phi` wrapped into (-pi, pi].
    pub fn wrapped(mut self) -> Self {
        self.phi = wrap_angle(self.phi);
        self
    }

    pub fn cast<U: Real>(&self) -> RobotState<U> {
        RobotState::from_array(self.to_array().map(|c| U::lit(c.as_f64())))
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::TAU();
    let mut w = a - two_pi * ((a + T::PI()) / two_pi).floor();
    // floor maps +pi to -pi; the interval is closed at +pi
    if w <= -T::PI() {
        w += two_pi;
    }
    w
}

/// Dust-collection task: start at rest, end at the dust.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Task<T> {
    pub start: RobotState<T>,
    pub dust: [T; 2],
    /// m
    pub goal_tolerance: T,
}

/// Axis-aligned workspace box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Bounds<T> {
    pub x: [T; 2],
    pub y: [T; 2],
}

impl<T: Real> Default for Bounds<T> {
    fn default() -> Self {
        Self { x: [T::zero(), T::lit(10.0)], y: [T::zero(), T::lit(3.0)] }
    }
}

impl<T: Real> Bounds<T> {
    pub fn contains(&self, p: [T; 2]) -> bool {
        p[0] >= self.x[0] && p[0] <= self.x[1] && p[1] >= self.y[0] && p[1] <= self.y[1]
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.x[1] > self.x[0] && self.y[1] > self.y[0])
    }
}

/// Default goal tolerance (m).
pub const DEFAULT_GOAL_TOLERANCE: f64 = 0.3;

/// Samples a task: start at rest on the ground, dust anywhere in `bounds`.
pub fn sample_task<T: Real>(seed: u64, bounds: &Bounds<T>) -> Task<T> {
    sample_task_with_tolerance(seed, bounds, T::lit(DEFAULT_GOAL_TOLERANCE))
}

pub fn sample_task_with_tolerance<T: Real>(seed: u64, bounds: &Bounds<T>, goal_tolerance: T) -> Task<T> {
    assert!(!bounds.is_degenerate(), "degenerate workspace bounds");
    let mut rng = rng_from(seed);
    let lerp = |r: &[T; 2], u: f64| r[0] + (r[1] - r[0]) * T::lit(u);
    let sx = lerp(&bounds.x, rng.gen::<f64>());
    let dx = lerp(&bounds.x, rng.gen::<f64>());
    let dy = lerp(&bounds.y, rng.gen::<f64>());
    Task { start: RobotState::at_rest(sx, T::zero()), dust: [dx, dy], goal_tolerance }
}

/// Physical constants. All positive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DynamicsParams<T> {
    /// m/s^2
    pub gravity: T,
    /// 1/s, horizontal velocity damping while grounded
    pub ground_friction: T,
    /// (x, y, phi) control acceleration limits
    pub accel_limits: [T; 3],
    /// s
    pub dt_min: T,
    /// s
    pub dt_max: T,
    /// Height (m) over which contact blends from grounded to airborne.
    pub contact_band: T,
}

impl<T: Real> Default for DynamicsParams<T> {
    fn default() -> Self {
        Self {
            gravity: T::lit(9.8),
            ground_friction: T::lit(2.0),
            accel_limits: [T::lit(8.0), T::lit(20.0), T::lit(10.0)],
            dt_min: T::lit(0.02),
            dt_max: T::lit(0.5),
            contact_band: T::lit(0.05),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory needs at least 2 waypoints, got {0}")]
    TooShort(usize),
    #[error("expected {expected} durations, got {got}")]
    DurationCount { expected: usize, got: usize },
    #[error("duration {index} = {value} outside (0, {max}]")]
    BadDuration { index: usize, value: f64, max: f64 },
    #[error("waypoint count {count} outside [{min}, {max}]")]
    Length { count: usize, min: usize, max: usize },
    #[error("non-finite coordinate at waypoint {0}")]
    NonFinite(usize),
}

/// Waypoints with the duration of each segment between consecutive waypoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Trajectory<T> {
    pub waypoints: Vec<RobotState<T>>,
    /// s, one per segment
    pub dts: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    /// Checked constructor: at least two waypoints, positive finite durations.
    pub fn new(waypoints: Vec<RobotState<T>>, dts: Vec<T>) -> Result<Self, TrajectoryError> {
        let t = Self { waypoints, dts };
        t.check_shape()?;
        Ok(t)
    }

    fn check_shape(&self) -> Result<(), TrajectoryError> {
        let n = self.waypoints.len();
        if n < 2 {
            return Err(TrajectoryError::TooShort(n));
        }
        if self.dts.len() != n - 1 {
            return Err(TrajectoryError::DurationCount { expected: n - 1, got: self.dts.len() });
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            if w.to_array().iter().any(|c| !c.is_finite()) {
                return Err(TrajectoryError::NonFinite(i));
            }
        }
        for (index, &dt) in self.dts.iter().enumerate() {
            if !(dt > T::zero()) || !dt.is_finite() {
                return Err(TrajectoryError::BadDuration { index, value: dt.as_f64(), max: f64::INFINITY });
            }
        }
        Ok(())
    }

    /// Full invariant check against a duration ceiling and a waypoint count range.
    pub fn validate(&self, dt_max: T, len_range: (usize, usize)) -> Result<(), TrajectoryError> {
        self.check_shape()?;
        let n = self.waypoints.len();
        if n < len_range.0 || n > len_range.1 {
            return Err(TrajectoryError::Length { count: n, min: len_range.0, max: len_range.1 });
        }
        // small relative slack: durations come from exp(log dt) and may round above the ceiling
        let ceiling = dt_max * (T::one() + T::lit(1e-9));
        for (index, &dt) in self.dts.iter().enumerate() {
            if dt > ceiling {
                return Err(TrajectoryError::BadDuration { index, value: dt.as_f64(), max: dt_max.as_f64() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn duration(&self) -> T {
        self.dts.iter().copied().sum()
    }

    pub fn last(&self) -> &RobotState<T> {
        self.waypoints.last().expect("non-empty trajectory")
    }

    pub fn cast<U: Real>(&self) -> Trajectory<U> {
        Trajectory {
            waypoints: self.waypoints.iter().map(|w| w.cast()).collect(),
            dts: self.dts.iter().map(|d| U::lit(d.as_f64())).collect(),
        }
    }
}

/// Gradient of a scalar with respect to every waypoint coordinate and duration.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryGrad<T> {
    pub waypoints: Vec<[T; STATE_DIM]>,
    pub dts: Vec<T>,
}

impl<T: Real> TrajectoryGrad<T> {
    pub fn zeros_like(traj: &Trajectory<T>) -> Self {
        Self { waypoints: vec![[T::zero(); STATE_DIM]; traj.len()], dts: vec![T::zero(); traj.dts.len()] }
    }

    pub fn add_scaled(&mut self, other: &Self, s: T) {
        for (a, b) in self.waypoints.iter_mut().zip(&other.waypoints) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += s * *y;
            }
        }
        for (a, b) in self.dts.iter_mut().zip(&other.dts) {
            *a += s * *b;
        }
    }

    pub fn scale(&mut self, s: T) {
        self.waypoints.iter_mut().flatten().for_each(|x| *x *= s);
        self.dts.iter_mut().for_each(|x| *x *= s);
    }

    /// Flattened as `[waypoint 0 (6), ..., waypoint n-1 (6), dt 0, ..., dt n-2]`.
    pub fn flatten(&self) -> Vec<T> {
        self.waypoints.iter().flatten().copied().chain(self.dts.iter().copied()).collect()
    }

    pub fn norm(&self) -> T {
        self.waypoints.iter().flatten().chain(self.dts.iter()).map(|x| *x * *x).sum::<T>().sqrt()
    }
}

/// Per-segment `(ax, ay, aphi)`: velocity difference over segment duration.
pub fn implied_accelerations<T: Real>(traj: &Trajectory<T>) -> Vec<[T; 3]> {
    traj.waypoints
        .windows(2)
        .zip(&traj.dts)
        .map(|(w, &dt)| {
            let (s, e) = (w[0].velocity(), w[1].velocity());
            [(e[0] - s[0]) / dt, (e[1] - s[1]) / dt, (e[2] - s[2]) / dt]
        })
        .collect()
}

/// Airborne weight in [0, 1]: 0 on the ground, 1 above the contact band,
/// cubic smoothstep in between. Returns (weight, d weight / d y).
#[inline]
pub fn airborne_weight<T: Real>(y: T, band: T) -> (T, T) {
    let t = y / band;
    if t <= T::zero() {
        (T::zero(), T::zero())
    } else if t >= T::one() {
        (T::one(), T::zero())
    } else {
        let three = T::lit(3.0);
        let two = T::lit(2.0);
        (t * t * (three - two * t), T::lit(6.0) * t * (T::one() - t) / band)
    }
}

/// Soft feasibility penalty; see [`dynamics_residual_grad`].
pub fn dynamics_residual<T: Real>(traj: &Trajectory<T>, params: &DynamicsParams<T>) -> T {
    residual_impl(traj, params, None)
}

/// Residual and its gradient.
///
/// Per segment `i -> i+1` with duration `h`, implied accelerations `a`, and
/// airborne weight `w` evaluated at the segment's start height:
/// - midpoint consistency `d = dp - h (v_i + v_{i+1}) / 2` for x, y and the
///   wrapped angle difference, penalized as `d^2 / h`;
/// - control limits on `u = (a_x + (1 - w) friction vx_i, a_y + w g, a_phi)`,
///   `relu(|u| - limit)^2 h`. Gravity and ground friction are passive
///   accelerations the control has to cancel, so they act through the limits;
/// - ground `relu(-y)^2` at every waypoint.
///
/// Zero exactly when the discretized dynamics and limits are satisfied.
pub fn dynamics_residual_grad<T: Real>(
    traj: &Trajectory<T>,
    params: &DynamicsParams<T>,
) -> (T, TrajectoryGrad<T>) {
    let mut g = TrajectoryGrad::zeros_like(traj);
    let r = residual_impl(traj, params, Some(&mut g));
    (r, g)
}

fn hinge_abs<T: Real>(u: T, lim: T) -> (T, T) {
    (
        relu_sq(u - lim) + relu_sq(-u - lim),
        relu_sq_grad(u - lim) - relu_sq_grad(-u - lim),
    )
}

fn residual_impl<T: Real>(
    traj: &Trajectory<T>,
    p: &DynamicsParams<T>,
    mut grad: Option<&mut TrajectoryGrad<T>>,
) -> T {
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let mut total = T::zero();

    for (i, (w, &h)) in traj.waypoints.windows(2).zip(&traj.dts).enumerate() {
        let (s, e) = (&w[0], &w[1]);
        let sv = s.velocity();
        let ev = e.velocity();
        let a = [(ev[0] - sv[0]) / h, (ev[1] - sv[1]) / h, (ev[2] - sv[2]) / h];
        let dpos = [e.x - s.x, e.y - s.y, wrap_angle(e.phi - s.phi)];
        let d: [T; 3] = std::array::from_fn(|c| dpos[c] - h * (sv[c] + ev[c]) * half);

        let (wair, dwair) = airborne_weight(s.y, p.contact_band);
        let u = [
            a[0] + (T::one() - wair) * p.ground_friction * s.vx,
            a[1] + wair * p.gravity,
            a[2],
        ];
        let mut hinge = [T::zero(); 3];
        let mut dhinge = [T::zero(); 3];
        for c in 0..3 {
            let (v, dv) = hinge_abs(u[c], p.accel_limits[c]);
            hinge[c] = v;
            dhinge[c] = dv;
        }

        let cons: T = d.iter().map(|x| *x * *x).sum::<T>() / h;
        let lim: T = hinge.iter().copied().sum::<T>() * h;
        total += cons + lim;

        if let Some(g) = grad.as_deref_mut() {
            // adjoints of intermediate quantities
            let gd: [T; 3] = std::array::from_fn(|c| two * d[c] / h);
            let mut gh = -cons / h + hinge.iter().copied().sum::<T>();
            let gu: [T; 3] = std::array::from_fn(|c| dhinge[c] * h);
            let ga = gu;
            let gw = -gu[0] * p.ground_friction * s.vx + gu[1] * p.gravity;
            let g_svx_direct = gu[0] * (T::one() - wair) * p.ground_friction;

            // d -> positions, velocities, h
            let (gs, ge) = {
                let (lo, hi) = g.waypoints.split_at_mut(i + 1);
                (&mut lo[i], &mut hi[0])
            };
            for c in 0..3 {
                ge[c] += gd[c];
                gs[c] -= gd[c];
                gs[3 + c] -= gd[c] * h * half;
                ge[3 + c] -= gd[c] * h * half;
                gh -= gd[c] * (sv[c] + ev[c]) * half;
            }
            // a -> velocities, h
            for c in 0..3 {
                ge[3 + c] += ga[c] / h;
                gs[3 + c] -= ga[c] / h;
                gh -= ga[c] * a[c] / h;
            }
            gs[1] += gw * dwair;
            gs[3] += g_svx_direct;
            g.dts[i] += gh;
        }
    }

    for (j, wp) in traj.waypoints.iter().enumerate() {
        total += relu_sq(-wp.y);
        if let Some(g) = grad.as_deref_mut() {
            g.waypoints[j][1] -= relu_sq_grad(-wp.y);
        }
    }
    total
}

/// One rendered pose.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// s since trajectory start
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
}

/// Playback rate of rendered frames.
pub const RENDER_HZ: f64 = 30.0;

/// Poses at a fixed rate by cubic Hermite interpolation of positions (using
/// waypoint velocities), ending exactly at the final waypoint.
pub fn render_frames<T: Real>(traj: &Trajectory<T>, hz: f64) -> Vec<Frame> {
    let t64 = traj.cast::<f64>();
    let total = t64.duration();
    let step = 1.0 / hz;
    let count = (total / step).floor() as usize;
    let mut frames = Vec::with_capacity(count + 2);
    let mut seg = 0usize;
    let mut seg_start = 0.0;
    for k in 0..=count {
        let t = k as f64 * step;
        while seg + 1 < t64.dts.len() && t >= seg_start + t64.dts[seg] {
            seg_start += t64.dts[seg];
            seg += 1;
        }
        frames.push(hermite(&t64, seg, ((t - seg_start) / t64.dts[seg]).clamp(0.0, 1.0), t));
    }
    if frames.last().is_none_or(|f| (f.t - total).abs() > 1e-9) {
        let last = t64.last();
        frames.push(Frame { t: total, x: last.x, y: last.y, phi: wrap_angle(last.phi) });
    }
    frames
}

fn hermite(t: &Trajectory<f64>, seg: usize, u: f64, time: f64) -> Frame {
    let (s, e, h) = (&t.waypoints[seg], &t.waypoints[seg + 1], t.dts[seg]);
    let h00 = 2.0 * u.powi(3) - 3.0 * u * u + 1.0;
    let h10 = u.powi(3) - 2.0 * u * u + u;
    let h01 = -2.0 * u.powi(3) + 3.0 * u * u;
    let h11 = u.powi(3) - u * u;
    let interp = |p0: f64, v0: f64, p1: f64, v1: f64| h00 * p0 + h10 * h * v0 + h01 * p1 + h11 * h * v1;
    let dphi = wrap_angle(e.phi - s.phi);
    Frame {
        t: time,
        x: interp(s.x, s.vx, e.x, e.vx),
        y: interp(s.y, s.vy, e.y, e.vy).max(0.0),
        phi: wrap_angle(interp(s.phi, s.vphi, s.phi + dphi, e.vphi)),
    }
}
