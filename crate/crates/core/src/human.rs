//! Simulated human: a fixed heuristic that reads VAD off a trajectory, plus the
//! transforms it uses to answer evaluation questions.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::seed::rng_from;
use crate::sim::{implied_accelerations, Trajectory};
use crate::vad::{EvalEmotionSet, Vad};

pub const SH_DEFAULT_JSON: &str = include_str!("../../../data/sh_default.json");
pub const SH_NOISY_JSON: &str = include_str!("../../../data/sh_noisy.json");

/// Number of heuristic features.
pub const SH_FEATURES: usize = 5;
pub const SH_FEATURE_NAMES: [&str; SH_FEATURES] = ["speed", "height", "posture", "smoothness", "bounce"];

/// Height (m) below which the robot counts as touching the ground.
pub const CONTACT_HEIGHT: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeuristicConfig {
    /// m/s
    pub speed_ref: f64,
    /// m
    pub height_ref: f64,
    /// m/s^3
    pub jerk_ref: f64,
    /// contact transitions per second
    pub bounce_ref: f64,
    /// rows V, A, D over the features in [`SH_FEATURE_NAMES`] order
    pub mixing: [[f64; SH_FEATURES]; 3],
    pub bias: [f64; 3],
    pub label_noise_std: f64,
}

#[derive(Debug, Error)]
pub enum HeuristicError {
    #[error("{0} must be positive and finite")]
    Scale(&'static str),
    #[error("label_noise_std must be non-negative and finite")]
    Noise,
    #[error("mixing and bias entries must be finite")]
    NonFinite,
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self::from_json(SH_DEFAULT_JSON).expect("shipped heuristic config is valid")
    }
}

impl HeuristicConfig {
    pub fn noisy() -> Self {
        Self::from_json(SH_NOISY_JSON).expect("shipped heuristic config is valid")
    }

    pub fn from_json(text: &str) -> Result<Self, HeuristicError> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), HeuristicError> {
        for (name, v) in [
            ("speed_ref", self.speed_ref),
            ("height_ref", self.height_ref),
            ("jerk_ref", self.jerk_ref),
            ("bounce_ref", self.bounce_ref),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HeuristicError::Scale(name));
            }
        }
        if !(self.label_noise_std >= 0.0 && self.label_noise_std.is_finite()) {
            return Err(HeuristicError::Noise);
        }
        if self.mixing.iter().flatten().chain(&self.bias).any(|x| !x.is_finite()) {
            return Err(HeuristicError::NonFinite);
        }
        Ok(())
    }
}

/// Raw trajectory statistics the heuristic reads.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawFeatures {
    /// mean planar speed over waypoints, m/s
    pub mean_speed: f64,
    /// mean y over waypoints, m
    pub mean_height: f64,
    /// mean cos(phi) over waypoints
    pub posture: f64,
    /// mean planar jerk magnitude between consecutive segments, m/s^3
    pub mean_jerk: f64,
    /// ground-contact changes per second
    pub bounce_rate: f64,
}

pub fn raw_features<T: Real>(traj: &Trajectory<T>) -> RawFeatures {
    let n = traj.len() as f64;
    let w = &traj.waypoints;
    let mean_speed = w.iter().map(|s| s.vx.as_f64().hypot(s.vy.as_f64())).sum::<f64>() / n;
    let mean_height = w.iter().map(|s| s.y.as_f64()).sum::<f64>() / n;
    let posture = w.iter().map(|s| s.phi.as_f64().cos()).sum::<f64>() / n;

    let acc = implied_accelerations(traj);
    let dts: Vec<f64> = traj.dts.iter().map(|d| d.as_f64()).collect();
    let mean_jerk = if acc.len() < 2 {
        0.0
    } else {
        let total: f64 = acc
            .windows(2)
            .zip(dts.windows(2))
            .map(|(a, h)| {
                let mid = 0.5 * (h[0] + h[1]);
                let jx = (a[1][0] - a[0][0]).as_f64() / mid;
                let jy = (a[1][1] - a[0][1]).as_f64() / mid;
                jx.hypot(jy)
            })
            .sum();
        total / (acc.len() - 1) as f64
    };

    let grounded: Vec<bool> = w.iter().map(|s| s.y.as_f64() <= CONTACT_HEIGHT).collect();
    let switches = grounded.windows(2).filter(|g| g[0] != g[1]).count() as f64;
    let duration: f64 = dts.iter().sum();
    RawFeatures { mean_speed, mean_height, posture, mean_jerk, bounce_rate: switches / duration }
}

/// Features squashed to comparable ranges: speed, height and bounce in
/// [0, 1), posture in [-1, 1], smoothness in (-1, 0].
pub fn normalized_features(raw: &RawFeatures, cfg: &HeuristicConfig) -> [f64; SH_FEATURES] {
    [
        (raw.mean_speed / cfg.speed_ref).tanh(),
        (raw.mean_height / cfg.height_ref).tanh(),
        raw.posture,
        -(raw.mean_jerk / cfg.jerk_ref).tanh(),
        (raw.bounce_rate / cfg.bounce_ref).tanh(),
    ]
}

/// Noise-free label for a normalized feature vector (clamped to the cube).
pub fn mix(features: &[f64; SH_FEATURES], cfg: &HeuristicConfig) -> [f64; 3] {
    std::array::from_fn(|r| {
        let v = cfg.bias[r] + cfg.mixing[r].iter().zip(features).map(|(m, f)| m * f).sum::<f64>();
        v.clamp(-1.0, 1.0)
    })
}

/// The heuristic's VAD for `traj`, with Gaussian label noise drawn from `seed`.
pub fn sh_label<T: Real>(traj: &Trajectory<T>, cfg: &HeuristicConfig, seed: u64) -> Vad<T> {
    let f = normalized_features(&raw_features(traj), cfg);
    let mut out = std::array::from_fn::<f64, 3, _>(|r| {
        cfg.bias[r] + cfg.mixing[r].iter().zip(&f).map(|(m, x)| m * x).sum::<f64>()
    });
    if cfg.label_noise_std > 0.0 {
        let mut rng = rng_from(seed);
        let normal = Normal::new(0.0, cfg.label_noise_std).expect("validated std");
        for v in &mut out {
            *v += normal.sample(&mut rng);
        }
    }
    Vad::clamped(T::lit(out[0]), T::lit(out[1]), T::lit(out[2]))
}

/// Projection of `v` onto the segment from `a` (1) to `b` (7), clipped and rounded.
pub fn likert_from_vad<T: Real>(v: &Vad<T>, a: &Vad<T>, b: &Vad<T>) -> u8 {
    let ab = *b - *a;
    let denom = ab.dot(&ab);
    let t = if denom > T::zero() { (*v - *a).dot(&ab) / denom } else { T::lit(0.5) };
    let t = t.as_f64().clamp(0.0, 1.0);
    (1.0 + 6.0 * t).round() as u8
}

/// Likert answer to "is this more B than A?".
pub fn sh_likert<T: Real>(traj: &Trajectory<T>, pair: (&Vad<T>, &Vad<T>), cfg: &HeuristicConfig, seed: u64) -> u8 {
    likert_from_vad(&sh_label(traj, cfg, seed), pair.0, pair.1)
}

/// Indices of the nearest and second-nearest evaluation emotion.
pub fn top_choices_from_vad<T: Real>(v: &Vad<T>, set: &EvalEmotionSet<T>) -> (usize, usize) {
    let idx = set.nearest_indices(v, 2);
    (idx[0], idx[1])
}

pub fn sh_top_choices<T: Real>(
    traj: &Trajectory<T>,
    set: &EvalEmotionSet<T>,
    cfg: &HeuristicConfig,
    seed: u64,
) -> (String, String) {
    let (a, b) = top_choices_from_vad(&sh_label(traj, cfg, seed), set);
    (set.name(a).to_string(), set.name(b).to_string())
}

/// `||label - target||^2`: the cost label for one named emotion.
pub fn sh_emotion_cost<T: Real>(traj: &Trajectory<T>, target: &Vad<T>, cfg: &HeuristicConfig, seed: u64) -> T {
    sh_label(traj, cfg, seed).distance_squared(target)
}
