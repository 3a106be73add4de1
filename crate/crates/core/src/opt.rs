//! Trajectory optimization: task cost plus weighted style cost, minimized by
//! Adam over free waypoints and log-durations.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adam::Adam;
use crate::net::StyleNet;
use crate::scalar::Real;
use crate::seed::{derive_seed, rng_from};
use crate::sim::{
    dynamics_residual, dynamics_residual_grad, DynamicsParams, RobotState, Task, Trajectory, TrajectoryGrad, STATE_DIM,
};
use crate::vad::Vad;

/// Cost weights and optimizer settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", default)]
pub struct CostConfig<T> {
    /// style weight
    pub alpha: T,
    pub w_goal: T,
    pub w_effort: T,
    pub w_time: T,
    pub w_dyn: T,
    pub iters: usize,
    /// Adam learning rate at the first iteration
    pub step: T,
    pub restarts: usize,
    pub rng_seed: u64,
    pub waypoints: usize,
    /// std of the Gaussian perturbation of each initialization
    pub init_noise: T,
    /// m/s, nominal speed used to size the initial durations
    pub init_speed: T,
    /// rad, largest body tilt given to a perturbed initialization
    pub init_tilt: T,
    pub dynamics: DynamicsParams<T>,
}

impl<T: Real> Default for CostConfig<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(5.0),
            w_goal: T::lit(50.0),
            w_effort: T::lit(0.1),
            w_time: T::lit(0.2),
            w_dyn: T::lit(10.0),
            iters: 400,
            step: T::lit(0.05),
            restarts: 3,
            rng_seed: 0,
            waypoints: 40,
            init_noise: T::lit(0.1),
            init_speed: T::lit(2.0),
            init_tilt: T::lit(1.5),
            dynamics: DynamicsParams::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{0} must be finite and non-negative")]
    Weight(&'static str),
    #[error("{0} must be at least {1}")]
    Count(&'static str, usize),
    #[error("need 0 < dt_min <= dt_max")]
    Durations,
    #[error("step must be positive")]
    Step,
}

impl<T: Real> CostConfig<T> {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let weights = [
            ("alpha", self.alpha),
            ("w_goal", self.w_goal),
            ("w_effort", self.w_effort),
            ("w_time", self.w_time),
            ("w_dyn", self.w_dyn),
            ("init_noise", self.init_noise),
            ("init_tilt", self.init_tilt),
        ];
        for (name, w) in weights {
            if !(w >= T::zero()) || !w.is_finite() {
                return Err(ConfigError::Weight(name));
            }
        }
        if self.iters < 1 {
            return Err(ConfigError::Count("iters", 1));
        }
        if self.restarts < 1 {
            return Err(ConfigError::Count("restarts", 1));
        }
        if self.waypoints < 2 {
            return Err(ConfigError::Count("waypoints", 2));
        }
        let d = &self.dynamics;
        if !(d.dt_min > T::zero() && d.dt_min <= d.dt_max) {
            return Err(ConfigError::Durations);
        }
        if !(self.step > T::zero()) || !(self.init_speed > T::zero()) {
            return Err(ConfigError::Step);
        }
        Ok(())
    }

    /// All base weights multiplied by `s` (alpha untouched).
    pub fn scaled_weights(&self, s: T) -> Self {
        Self {
            w_goal: self.w_goal * s,
            w_effort: self.w_effort * s,
            w_time: self.w_time * s,
            w_dyn: self.w_dyn * s,
            ..self.clone()
        }
    }
}

/// Individual weighted terms of the total cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub goal: f64,
    pub effort: f64,
    pub time: f64,
    pub dynamics: f64,
    /// already multiplied by alpha
    pub style: f64,
    pub total: f64,
}

/// Squared distance of the final waypoint to the dust.
pub fn goal_error_sq<T: Real>(traj: &Trajectory<T>, task: &Task<T>) -> T {
    let l = traj.last();
    let (dx, dy) = (l.x - task.dust[0], l.y - task.dust[1]);
    dx * dx + dy * dy
}

pub fn reaches_goal<T: Real>(traj: &Trajectory<T>, task: &Task<T>) -> bool {
    goal_error_sq(traj, task).sqrt() <= task.goal_tolerance
}

/// `sum ||dv / dt||^2 dt`
pub fn effort<T: Real>(traj: &Trajectory<T>) -> T {
    effort_impl(traj, None)
}

fn effort_impl<T: Real>(traj: &Trajectory<T>, mut grad: Option<(&mut TrajectoryGrad<T>, T)>) -> T {
    let mut total = T::zero();
    let two = T::lit(2.0);
    for (i, (w, &h)) in traj.waypoints.windows(2).zip(&traj.dts).enumerate() {
        let (s, e) = (w[0].velocity(), w[1].velocity());
        let dv: [T; 3] = std::array::from_fn(|c| e[c] - s[c]);
        let sq: T = dv.iter().map(|x| *x * *x).sum();
        total += sq / h;
        if let Some((g, scale)) = grad.as_mut() {
            for c in 0..3 {
                let gc = *scale * two * dv[c] / h;
                g.waypoints[i + 1][3 + c] += gc;
                g.waypoints[i][3 + c] -= gc;
            }
            g.dts[i] -= *scale * sq / (h * h);
        }
    }
    total
}

fn base_impl<T: Real>(
    traj: &Trajectory<T>,
    task: &Task<T>,
    cfg: &CostConfig<T>,
    mut grad: Option<&mut TrajectoryGrad<T>>,
) -> (T, CostBreakdown) {
    let goal = cfg.w_goal * goal_error_sq(traj, task);
    let time = cfg.w_time * traj.duration();
    let (effort, dynamics);
    if let Some(g) = grad.as_deref_mut() {
        let n = traj.len();
        let l = traj.last();
        let two = T::lit(2.0);
        g.waypoints[n - 1][0] += two * cfg.w_goal * (l.x - task.dust[0]);
        g.waypoints[n - 1][1] += two * cfg.w_goal * (l.y - task.dust[1]);
        g.dts.iter_mut().for_each(|d| *d += cfg.w_time);
        effort = cfg.w_effort * effort_impl(traj, Some((&mut *g, cfg.w_effort)));
        let (r, rg) = dynamics_residual_grad(traj, &cfg.dynamics);
        g.add_scaled(&rg, cfg.w_dyn);
        dynamics = cfg.w_dyn * r;
    } else {
        effort = cfg.w_effort * effort_impl(traj, None);
        dynamics = cfg.w_dyn * dynamics_residual(traj, &cfg.dynamics);
    }
    let total = goal + effort + time + dynamics;
    let b = CostBreakdown {
        goal: goal.as_f64(),
        effort: effort.as_f64(),
        time: time.as_f64(),
        dynamics: dynamics.as_f64(),
        style: 0.0,
        total: total.as_f64(),
    };
    (total, b)
}

/// Goal, effort, time and dynamics terms.
pub fn base_cost<T: Real>(traj: &Trajectory<T>, task: &Task<T>, cfg: &CostConfig<T>) -> T {
    base_impl(traj, task, cfg, None).0
}

pub fn base_cost_grad<T: Real>(traj: &Trajectory<T>, task: &Task<T>, cfg: &CostConfig<T>) -> (T, TrajectoryGrad<T>) {
    let mut g = TrajectoryGrad::zeros_like(traj);
    let c = base_impl(traj, task, cfg, Some(&mut g)).0;
    (c, g)
}

pub fn base_breakdown<T: Real>(traj: &Trajectory<T>, task: &Task<T>, cfg: &CostConfig<T>) -> CostBreakdown {
    base_impl(traj, task, cfg, None).1
}

/// A differentiable style penalty on trajectories.
pub trait StyleObjective<T: Real>: Sync {
    fn style_cost(&self, traj: &Trajectory<T>) -> T;
    fn style_cost_grad(&self, traj: &Trajectory<T>) -> (T, TrajectoryGrad<T>);
}

/// Contributes nothing; turns the optimizer into a plain task planner.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoStyle;

impl<T: Real> StyleObjective<T> for NoStyle {
    fn style_cost(&self, _: &Trajectory<T>) -> T {
        T::zero()
    }

    fn style_cost_grad(&self, traj: &Trajectory<T>) -> (T, TrajectoryGrad<T>) {
        (T::zero(), TrajectoryGrad::zeros_like(traj))
    }
}

/// Distance of the discriminator output to a target emotion.
#[derive(Clone, Copy, Debug)]
pub struct VadTarget<'a, T> {
    pub net: &'a StyleNet<T>,
    pub target: Vad<T>,
}

impl<T: Real> StyleObjective<T> for VadTarget<'_, T> {
    fn style_cost(&self, traj: &Trajectory<T>) -> T {
        self.net.style_cost(traj, &self.target)
    }

    fn style_cost_grad(&self, traj: &Trajectory<T>) -> (T, TrajectoryGrad<T>) {
        self.net.style_cost_grad(traj, &self.target)
    }
}

pub fn total_cost_with<T: Real, S: StyleObjective<T> + ?Sized>(
    traj: &Trajectory<T>,
    task: &Task<T>,
    style: &S,
    cfg: &CostConfig<T>,
) -> T {
    let base = base_cost(traj, task, cfg);
    if cfg.alpha == T::zero() {
        return base;
    }
    base + cfg.alpha * style.style_cost(traj)
}

pub fn total_cost_grad_with<T: Real, S: StyleObjective<T> + ?Sized>(
    traj: &Trajectory<T>,
    task: &Task<T>,
    style: &S,
    cfg: &CostConfig<T>,
) -> (T, TrajectoryGrad<T>) {
    let (base, mut g) = base_cost_grad(traj, task, cfg);
    if cfg.alpha == T::zero() {
        return (base, g);
    }
    let (s, sg) = style.style_cost_grad(traj);
    g.add_scaled(&sg, cfg.alpha);
    (base + cfg.alpha * s, g)
}

pub fn breakdown_with<T: Real, S: StyleObjective<T> + ?Sized>(
    traj: &Trajectory<T>,
    task: &Task<T>,
    style: &S,
    cfg: &CostConfig<T>,
) -> CostBreakdown {
    let mut b = base_breakdown(traj, task, cfg);
    if cfg.alpha != T::zero() {
        b.style = (cfg.alpha * style.style_cost(traj)).as_f64();
        b.total += b.style;
    }
    b
}

/// `base_cost + alpha * ||f(traj) - target||^2`
pub fn total_cost<T: Real>(
    traj: &Trajectory<T>,
    task: &Task<T>,
    target: &Vad<T>,
    net: &StyleNet<T>,
    cfg: &CostConfig<T>,
) -> T {
    total_cost_with(traj, task, &VadTarget { net, target: *target }, cfg)
}

pub fn total_cost_grad<T: Real>(
    traj: &Trajectory<T>,
    task: &Task<T>,
    target: &Vad<T>,
    net: &StyleNet<T>,
    cfg: &CostConfig<T>,
) -> (T, TrajectoryGrad<T>) {
    total_cost_grad_with(traj, task, &VadTarget { net, target: *target }, cfg)
}

#[derive(Debug, Error, PartialEq)]
pub enum OptimizeError {
    #[error("invalid cost config: {0}")]
    Config(#[from] ConfigError),
    #[error("all {restarts} restarts diverged; first non-finite iteration per restart: {iterations:?}")]
    Diverged { restarts: usize, iterations: Vec<usize> },
}

/// Best trajectory over all restarts with its cost trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OptimizeResult<T> {
    pub trajectory: Trajectory<T>,
    pub cost: T,
    pub breakdown: CostBreakdown,
    /// restart that produced `trajectory`
    pub restart: usize,
    /// cost of the best initialization across restarts
    pub initial_cost: T,
    /// best-so-far total cost per iteration of the winning restart (index 0 is the initialization)
    pub history: Vec<T>,
}

/// Straight line from start to dust with durations sized by `init_speed`.
/// Restart 0 is the unperturbed line; later restarts rescale the nominal
/// duration, tilt the body by up to `init_tilt` and add Gaussian noise of std
/// `init_noise`.
pub fn initial_trajectory<T: Real>(task: &Task<T>, cfg: &CostConfig<T>, restart: usize, seed: u64) -> Trajectory<T> {
    let n = cfg.waypoints;
    let segs = n - 1;
    let (sx, sy) = (task.start.x, task.start.y);
    let (dx, dy) = (task.dust[0] - sx, task.dust[1] - sy);
    let dist = (dx * dx + dy * dy).sqrt();
    const DURATION_SCALE: [f64; 4] = [1.0, 0.6, 1.7, 0.35];
    let scale = T::lit(DURATION_SCALE[restart % DURATION_SCALE.len()]);
    let d = &cfg.dynamics;
    let dt = (dist / cfg.init_speed * scale / T::from_usize_lossy(segs)).max(d.dt_min).min(d.dt_max);
    let total = dt * T::from_usize_lossy(segs);
    let (vx, vy) = (dx / total, dy / total);

    let mut rng = rng_from(seed);
    let noise = Normal::new(0.0, cfg.init_noise.as_f64().max(0.0)).expect("finite std");
    let perturb = restart > 0 && cfg.init_noise > T::zero();
    // body tilt reached over the first fifth of the line, then held
    let tilt = if restart > 0 { T::lit(rng.gen_range(-1.0..=1.0)) * cfg.init_tilt } else { T::zero() };
    let ramp = T::lit(0.2);
    let mut eps = || T::lit(if perturb { noise.sample(&mut rng) } else { 0.0 });

    let mut wps = Vec::with_capacity(n);
    wps.push(task.start);
    for i in 1..n {
        let u = T::from_usize_lossy(i) / T::from_usize_lossy(segs);
        wps.push(RobotState {
            x: sx + dx * u + eps(),
            y: (sy + dy * u + eps()).max(T::zero()),
            phi: task.start.phi + tilt * (u / ramp).min(T::one()) + eps(),
            vx: vx + eps(),
            vy: vy + eps(),
            vphi: if u <= ramp { tilt / (ramp * total) } else { T::zero() } + eps(),
        });
    }
    let dts = (0..segs)
        .map(|_| (dt * (eps() * T::lit(0.5)).exp()).max(d.dt_min).min(d.dt_max))
        .collect();
    Trajectory { waypoints: wps, dts }
}

/// Free coordinates: waypoints 1.. (6 each) then log-durations.
fn pack<T: Real>(traj: &Trajectory<T>) -> Vec<T> {
    let mut z: Vec<T> = traj.waypoints[1..].iter().flat_map(|w| w.to_array()).collect();
    z.extend(traj.dts.iter().map(|d| d.ln()));
    z
}

fn unpack<T: Real>(z: &[T], start: &RobotState<T>, out: &mut Trajectory<T>) {
    let n = out.waypoints.len();
    out.waypoints[0] = *start;
    for i in 1..n {
        let k = (i - 1) * STATE_DIM;
        out.waypoints[i] = RobotState::from_array(std::array::from_fn(|c| z[k + c]));
    }
    let off = (n - 1) * STATE_DIM;
    for (d, l) in out.dts.iter_mut().zip(&z[off..]) {
        *d = l.exp();
    }
}

fn pack_grad<T: Real>(g: &TrajectoryGrad<T>, traj: &Trajectory<T>, out: &mut [T]) {
    let n = traj.len();
    for i in 1..n {
        out[(i - 1) * STATE_DIM..i * STATE_DIM].copy_from_slice(&g.waypoints[i]);
    }
    let off = (n - 1) * STATE_DIM;
    for (j, (gd, d)) in g.dts.iter().zip(&traj.dts).enumerate() {
        out[off + j] = *gd * *d;
    }
}

struct RestartOutcome<T> {
    best: Trajectory<T>,
    best_cost: T,
    initial_cost: T,
    history: Vec<T>,
}

fn run_restart<T: Real, S: StyleObjective<T> + ?Sized>(
    task: &Task<T>,
    style: &S,
    cfg: &CostConfig<T>,
    restart: usize,
) -> Result<RestartOutcome<T>, usize> {
    let seed = derive_seed(cfg.rng_seed, &[restart as u64]);
    let mut traj = initial_trajectory(task, cfg, restart, seed);
    let mut z = pack(&traj);
    let (lo, hi) = (cfg.dynamics.dt_min.ln(), cfg.dynamics.dt_max.ln());
    let off = (traj.len() - 1) * STATE_DIM;
    let mut opt = Adam::new(z.len(), cfg.step);
    let mut gz = vec![T::zero(); z.len()];
    let mut best = traj.clone();
    let mut best_cost = T::infinity();
    let mut initial_cost = T::infinity();
    let mut history = Vec::with_capacity(cfg.iters + 1);
    let iters_f = T::from_usize_lossy(cfg.iters);

    for it in 0..=cfg.iters {
        let last = it == cfg.iters;
        let (cost, g) = if last {
            (total_cost_with(&traj, task, style, cfg), TrajectoryGrad::zeros_like(&traj))
        } else {
            total_cost_grad_with(&traj, task, style, cfg)
        };
        if !cost.is_finite() {
            if it == 0 {
                return Err(0);
            }
            // keep the best iterate found before the blow-up
            if !best_cost.is_finite() {
                return Err(it);
            }
            break;
        }
        if it == 0 {
            initial_cost = cost;
        }
        if cost < best_cost {
            best_cost = cost;
            best.clone_from(&traj);
        }
        history.push(best_cost);
        if last {
            break;
        }
        // cosine decay to a tenth of the initial rate
        let frac = T::from_usize_lossy(it) / iters_f;
        let decay = T::lit(0.1) + T::lit(0.45) * (T::one() + (T::PI() * frac).cos());
        opt.set_learning_rate(cfg.step * decay);
        pack_grad(&g, &traj, &mut gz);
        opt.step(&mut z, &gz);
        for l in &mut z[off..] {
            *l = l.max(lo).min(hi);
        }
        unpack(&z, &task.start, &mut traj);
    }
    Ok(RestartOutcome { best, best_cost, initial_cost, history })
}

/// Minimizes `base_cost + alpha * style` from `cfg.restarts` initializations.
pub fn optimize_with<T: Real, S: StyleObjective<T> + ?Sized>(
    task: &Task<T>,
    style: &S,
    cfg: &CostConfig<T>,
) -> Result<OptimizeResult<T>, OptimizeError> {
    cfg.validate()?;
    let mut winner: Option<(usize, RestartOutcome<T>)> = None;
    let mut failures = Vec::new();
    let mut initial = T::infinity();
    for r in 0..cfg.restarts {
        match run_restart(task, style, cfg, r) {
            Ok(out) => {
                initial = initial.min(out.initial_cost);
                if winner.as_ref().is_none_or(|(_, w)| out.best_cost < w.best_cost) {
                    winner = Some((r, out));
                }
            }
            Err(it) => failures.push(it),
        }
    }
    let Some((restart, out)) = winner else {
        return Err(OptimizeError::Diverged { restarts: cfg.restarts, iterations: failures });
    };
    let mut trajectory = out.best;
    for w in trajectory.waypoints.iter_mut().skip(1) {
        *w = w.wrapped();
    }
    let breakdown = breakdown_with(&trajectory, task, style, cfg);
    Ok(OptimizeResult {
        cost: T::lit(breakdown.total),
        trajectory,
        breakdown,
        restart,
        initial_cost: initial,
        history: out.history,
    })
}

/// Optimizes toward `target` under the discriminator `net`.
pub fn optimize<T: Real>(
    task: &Task<T>,
    target: &Vad<T>,
    net: &StyleNet<T>,
    cfg: &CostConfig<T>,
) -> Result<OptimizeResult<T>, OptimizeError> {
    optimize_with(task, &VadTarget { net, target: *target }, cfg)
}
