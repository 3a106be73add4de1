//! Set-pooling network over waypoints and the VAD style discriminator built on it.
//!
//! Each waypoint is embedded by a one-hidden-layer ELU network; embeddings are
//! pooled by mean and by per-unit softmax pooling, concatenated, and mapped by
//! a second one-hidden-layer ELU network to the output head. Gradients are
//! computed by hand in reverse mode, both for parameters and for the
//! trajectory the network reads.

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adam::Adam;
use crate::scalar::Real;
use crate::seed::rng_from;
use crate::sim::{Trajectory, TrajectoryGrad};
use crate::vad::Vad;

/// Per-waypoint input: `[x, y, sin phi, cos phi, vx, vy, vphi, dt_in]`.
pub const FEATURE_DIM: usize = 8;

/// Output squashing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    /// `tanh`, into (-1, 1)
    Tanh,
    /// `ln(1 + e^x)`, into (0, inf)
    Softplus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: usize,
    pub hidden2: usize,
    pub output: usize,
    pub head: Head,
}

impl Architecture {
    pub fn style(hidden: usize, hidden2: usize) -> Self {
        Self { input: FEATURE_DIM, hidden, hidden2, output: 3, head: Head::Tanh }
    }

    pub fn cost(hidden: usize, hidden2: usize) -> Self {
        Self { input: FEATURE_DIM, hidden, hidden2, output: 1, head: Head::Softplus }
    }

    fn layout(&self) -> Layout {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.input;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden2 * 2 * self.hidden;
        let w3 = b2 + self.hidden2;
        let b3 = w3 + self.output * self.hidden2;
        Layout { w1, b1, w2, b2, w3, b3, len: b3 + self.output }
    }

    pub fn param_count(&self) -> usize {
        self.layout().len
    }
}

/// Offsets into the flat parameter vector.
#[derive(Clone, Copy, Debug)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    len: usize,
}

impl Layout {
    fn is_weight(&self, k: usize) -> bool {
        (self.w1..self.b1).contains(&k) || (self.w2..self.b2).contains(&k) || (self.w3..self.b3).contains(&k)
    }
}

#[inline]
fn elu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn elu_grad<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        x.exp()
    }
}

#[inline]
fn softplus<T: Real>(x: T) -> T {
    if x > T::lit(30.0) {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Row-major `[n x FEATURE_DIM]` waypoint features.
pub fn waypoint_features<T: Real>(traj: &Trajectory<T>) -> Vec<T> {
    let mut f = Vec::with_capacity(traj.len() * FEATURE_DIM);
    for (i, w) in traj.waypoints.iter().enumerate() {
        let dt_in = if i == 0 { T::zero() } else { traj.dts[i - 1] };
        let (s, c) = w.phi.sin_cos();
        f.extend_from_slice(&[w.x, w.y, s, c, w.vx, w.vy, w.vphi, dt_in]);
    }
    f
}

/// Chains feature gradients back onto the trajectory.
pub fn feature_grad_to_traj<T: Real>(traj: &Trajectory<T>, gfeat: &[T]) -> TrajectoryGrad<T> {
    let mut g = TrajectoryGrad::zeros_like(traj);
    for (i, (w, gf)) in traj.waypoints.iter().zip(gfeat.chunks_exact(FEATURE_DIM)).enumerate() {
        let (s, c) = w.phi.sin_cos();
        let gw = &mut g.waypoints[i];
        gw[0] += gf[0];
        gw[1] += gf[1];
        gw[2] += c * gf[2] - s * gf[3];
        gw[3] += gf[4];
        gw[4] += gf[5];
        gw[5] += gf[6];
        if i > 0 {
            g.dts[i - 1] += gf[7];
        }
    }
    g
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct Tape<T> {
    n: usize,
    pre1: Vec<T>,
    h1: Vec<T>,
    softw: Vec<T>,
    pooled: Vec<T>,
    pre2: Vec<T>,
    h2: Vec<T>,
    pre3: Vec<T>,
    pub out: Vec<T>,
}

/// The shared backbone: flat parameters plus architecture metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolNet<T> {
    arch: Architecture,
    params: Vec<T>,
    pub l1_weight: T,
    pub softmax_beta: T,
}

#[derive(Debug, Error)]
pub enum NetError {
    #[error("checkpoint version {0} not supported")]
    Version(u32),
    #[error("array {name} has length {got}, architecture needs {want}")]
    Shape { name: &'static str, got: usize, want: usize },
    #[error("non-finite parameter in {0}")]
    NonFinite(&'static str),
    #[error("softmax beta must be positive")]
    Beta,
    #[error("output width {got} does not match the expected {want}")]
    OutputWidth { got: usize, want: usize },
}

impl<T: Real> PoolNet<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn random(arch: Architecture, seed: u64) -> Self {
        let lay = arch.layout();
        let mut params = vec![T::zero(); lay.len];
        let mut rng = rng_from(seed);
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize, rng: &mut rand_chacha::ChaCha8Rng| {
            let lim = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-lim, lim);
            for p in &mut params[range] {
                *p = T::lit(dist.sample(rng));
            }
        };
        fill(lay.w1..lay.b1, arch.input, arch.hidden, &mut rng);
        fill(lay.w2..lay.b2, 2 * arch.hidden, arch.hidden2, &mut rng);
        fill(lay.w3..lay.b3, arch.hidden2, arch.output, &mut rng);
        Self { arch, params, l1_weight: T::lit(1e-4), softmax_beta: T::one() }
    }

    pub fn zeros(arch: Architecture) -> Self {
        Self { arch, params: vec![T::zero(); arch.param_count()], l1_weight: T::zero(), softmax_beta: T::one() }
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn output_bias_mut(&mut self) -> &mut [T] {
        let lay = self.arch.layout();
        &mut self.params[lay.b3..lay.len]
    }

    /// Sum of absolute values of the weight matrices (biases excluded).
    pub fn l1_norm(&self) -> T {
        let lay = self.arch.layout();
        self.params.iter().enumerate().filter(|(k, _)| lay.is_weight(*k)).map(|(_, p)| p.abs()).sum()
    }

    /// Mean absolute weight (biases excluded).
    pub fn mean_abs_weight(&self) -> T {
        let lay = self.arch.layout();
        let count = (0..lay.len).filter(|k| lay.is_weight(*k)).count();
        self.l1_norm() / T::from_usize_lossy(count)
    }

    pub fn forward_features(&self, feats: &[T]) -> Tape<T> {
        let a = &self.arch;
        let lay = a.layout();
        let p = &self.params;
        let n = feats.len() / a.input;
        let (hn, h2n) = (a.hidden, a.hidden2);

        let mut pre1 = vec![T::zero(); n * hn];
        let mut h1 = vec![T::zero(); n * hn];
        for i in 0..n {
            let f = &feats[i * a.input..(i + 1) * a.input];
            for j in 0..hn {
                let row = &p[lay.w1 + j * a.input..lay.w1 + (j + 1) * a.input];
                let mut s = p[lay.b1 + j];
                for (w, x) in row.iter().zip(f) {
                    s += *w * *x;
                }
                pre1[i * hn + j] = s;
                h1[i * hn + j] = elu(s);
            }
        }

        let mut pooled = vec![T::zero(); 2 * hn];
        let mut softw = vec![T::zero(); n * hn];
        let inv_n = T::one() / T::from_usize_lossy(n);
        let beta = self.softmax_beta;
        for j in 0..hn {
            let mut mean = T::zero();
            let mut mx = T::neg_infinity();
            for i in 0..n {
                let h = h1[i * hn + j];
                mean += h;
                mx = mx.max(h);
            }
            pooled[j] = mean * inv_n;
            let mut z = T::zero();
            for i in 0..n {
                let e = (beta * (h1[i * hn + j] - mx)).exp();
                softw[i * hn + j] = e;
                z += e;
            }
            let mut s = T::zero();
            for i in 0..n {
                let w = softw[i * hn + j] / z;
                softw[i * hn + j] = w;
                s += w * h1[i * hn + j];
            }
            pooled[hn + j] = s;
        }

        let mut pre2 = vec![T::zero(); h2n];
        let mut h2 = vec![T::zero(); h2n];
        for j in 0..h2n {
            let row = &p[lay.w2 + j * 2 * hn..lay.w2 + (j + 1) * 2 * hn];
            let mut s = p[lay.b2 + j];
            for (w, x) in row.iter().zip(&pooled) {
                s += *w * *x;
            }
            pre2[j] = s;
            h2[j] = elu(s);
        }

        let mut pre3 = vec![T::zero(); a.output];
        let mut out = vec![T::zero(); a.output];
        for o in 0..a.output {
            let row = &p[lay.w3 + o * h2n..lay.w3 + (o + 1) * h2n];
            let mut s = p[lay.b3 + o];
            for (w, x) in row.iter().zip(&h2) {
                s += *w * *x;
            }
            pre3[o] = s;
            out[o] = match a.head {
                Head::Tanh => s.tanh(),
                Head::Softplus => softplus(s),
            };
        }
        Tape { n, pre1, h1, softw, pooled, pre2, h2, pre3, out }
    }

    /// Pooled embedding `[mean | softmax]` of per-waypoint hidden vectors given
    /// row-major `[n x hidden]`.
    pub fn pool(&self, h1: &[T]) -> Vec<T> {
        let hn = self.arch.hidden;
        let n = h1.len() / hn;
        let mut out = vec![T::zero(); 2 * hn];
        for j in 0..hn {
            let col: Vec<T> = (0..n).map(|i| h1[i * hn + j]).collect();
            let mx = col.iter().copied().fold(T::neg_infinity(), T::max);
            let e: Vec<T> = col.iter().map(|h| (self.softmax_beta * (*h - mx)).exp()).collect();
            let z: T = e.iter().copied().sum();
            out[j] = col.iter().copied().sum::<T>() / T::from_usize_lossy(n);
            out[hn + j] = col.iter().zip(&e).map(|(h, w)| *h * *w).sum::<T>() / z;
        }
        out
    }

    /// Per-waypoint hidden vectors `[n x hidden]` for `feats`.
    pub fn embed(&self, feats: &[T]) -> Vec<T> {
        self.forward_features(feats).h1
    }

    /// Reverse pass for upstream gradient `gout` on the outputs. Parameter
    /// gradients are accumulated into `gparams`; feature gradients are written
    /// into `gfeat` (length `n * input`).
    pub fn backward(&self, feats: &[T], tape: &Tape<T>, gout: &[T], gparams: Option<&mut [T]>, gfeat: Option<&mut [T]>) {
        let a = &self.arch;
        let lay = a.layout();
        let p = &self.params;
        let (n, hn, h2n) = (tape.n, a.hidden, a.hidden2);
        let mut gparams = gparams;

        let gpre3: Vec<T> = (0..a.output)
            .map(|o| {
                let d = match a.head {
                    Head::Tanh => T::one() - tape.out[o] * tape.out[o],
                    Head::Softplus => sigmoid(tape.pre3[o]),
                };
                gout[o] * d
            })
            .collect();

        let mut gh2 = vec![T::zero(); h2n];
        for o in 0..a.output {
            for j in 0..h2n {
                gh2[j] += p[lay.w3 + o * h2n + j] * gpre3[o];
            }
        }
        if let Some(gp) = gparams.as_deref_mut() {
            for o in 0..a.output {
                for j in 0..h2n {
                    gp[lay.w3 + o * h2n + j] += gpre3[o] * tape.h2[j];
                }
                gp[lay.b3 + o] += gpre3[o];
            }
        }

        let gpre2: Vec<T> = (0..h2n).map(|j| gh2[j] * elu_grad(tape.pre2[j])).collect();
        let mut gz = vec![T::zero(); 2 * hn];
        for j in 0..h2n {
            let row = lay.w2 + j * 2 * hn;
            for k in 0..2 * hn {
                gz[k] += p[row + k] * gpre2[j];
            }
        }
        if let Some(gp) = gparams.as_deref_mut() {
            for j in 0..h2n {
                let row = lay.w2 + j * 2 * hn;
                for k in 0..2 * hn {
                    gp[row + k] += gpre2[j] * tape.pooled[k];
                }
                gp[lay.b2 + j] += gpre2[j];
            }
        }

        let inv_n = T::one() / T::from_usize_lossy(n);
        let beta = self.softmax_beta;
        let mut gpre1 = vec![T::zero(); n * hn];
        for i in 0..n {
            for j in 0..hn {
                let k = i * hn + j;
                let soft = tape.pooled[hn + j];
                let gh = gz[j] * inv_n + gz[hn + j] * tape.softw[k] * (T::one() + beta * (tape.h1[k] - soft));
                gpre1[k] = gh * elu_grad(tape.pre1[k]);
            }
        }

        if let Some(gp) = gparams.as_deref_mut() {
            for i in 0..n {
                let f = &feats[i * a.input..(i + 1) * a.input];
                for j in 0..hn {
                    let g = gpre1[i * hn + j];
                    let row = lay.w1 + j * a.input;
                    for (q, x) in f.iter().enumerate() {
                        gp[row + q] += g * *x;
                    }
                    gp[lay.b1 + j] += g;
                }
            }
        }
        if let Some(gf) = gfeat {
            for i in 0..n {
                let out = &mut gf[i * a.input..(i + 1) * a.input];
                out.iter_mut().for_each(|x| *x = T::zero());
                for j in 0..hn {
                    let g = gpre1[i * hn + j];
                    let row = &p[lay.w1 + j * a.input..lay.w1 + (j + 1) * a.input];
                    for (o, w) in out.iter_mut().zip(row) {
                        *o += *w * g;
                    }
                }
            }
        }
    }

    pub fn forward(&self, traj: &Trajectory<T>) -> Vec<T> {
        self.forward_features(&waypoint_features(traj)).out
    }

    /// Output and the trajectory gradient of `sum_o gout_fn(out)_o`.
    pub fn output_traj_grad<F>(&self, traj: &Trajectory<T>, upstream: F) -> (Vec<T>, TrajectoryGrad<T>)
    where
        F: FnOnce(&[T]) -> Vec<T>,
    {
        let feats = waypoint_features(traj);
        let tape = self.forward_features(&feats);
        let gout = upstream(&tape.out);
        let mut gfeat = vec![T::zero(); feats.len()];
        self.backward(&feats, &tape, &gout, None, Some(&mut gfeat));
        (tape.out.clone(), feature_grad_to_traj(traj, &gfeat))
    }

    /// Squared-error data term plus L1 penalty, and its parameter gradient.
    pub fn loss_and_grad(&self, data: &PreparedData<T>, want_grad: bool) -> (T, Vec<T>) {
        let lay = self.arch.layout();
        let mut grad = if want_grad { vec![T::zero(); lay.len] } else { Vec::new() };
        let mut loss = T::zero();
        let two = T::lit(2.0);
        for (feats, target) in data.feats.iter().zip(&data.targets) {
            let tape = self.forward_features(feats);
            let diff: Vec<T> = tape.out.iter().zip(target).map(|(o, t)| *o - *t).collect();
            loss += diff.iter().map(|d| *d * *d).sum::<T>();
            if want_grad {
                let gout: Vec<T> = diff.iter().map(|d| two * *d).collect();
                self.backward(feats, &tape, &gout, Some(&mut grad), None);
            }
        }
        if self.l1_weight > T::zero() {
            loss += self.l1_weight * self.l1_norm();
            if want_grad {
                for (k, g) in grad.iter_mut().enumerate() {
                    if lay.is_weight(k) {
                        let w = self.params[k];
                        if w > T::zero() {
                            *g += self.l1_weight;
                        } else if w < T::zero() {
                            *g -= self.l1_weight;
                        }
                    }
                }
            }
        }
        (loss, grad)
    }

    pub fn to_checkpoint(&self, emotion: Option<String>) -> Checkpoint {
        let lay = self.arch.layout();
        let take = |r: std::ops::Range<usize>| self.params[r].iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            architecture: self.arch,
            output_width: self.arch.output,
            emotion,
            l1_weight: self.l1_weight.as_f64(),
            softmax_beta: self.softmax_beta.as_f64(),
            w1: take(lay.w1..lay.b1),
            b1: take(lay.b1..lay.w2),
            w2: take(lay.w2..lay.b2),
            b2: take(lay.b2..lay.w3),
            w3: take(lay.w3..lay.b3),
            b3: take(lay.b3..lay.len),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NetError> {
        if ck.version != CHECKPOINT_VERSION {
            return Err(NetError::Version(ck.version));
        }
        if ck.output_width != ck.architecture.output {
            return Err(NetError::OutputWidth { got: ck.output_width, want: ck.architecture.output });
        }
        if !(ck.softmax_beta > 0.0) {
            return Err(NetError::Beta);
        }
        let a = ck.architecture;
        let parts: [(&'static str, &Vec<f64>, usize); 6] = [
            ("w1", &ck.w1, a.hidden * a.input),
            ("b1", &ck.b1, a.hidden),
            ("w2", &ck.w2, a.hidden2 * 2 * a.hidden),
            ("b2", &ck.b2, a.hidden2),
            ("w3", &ck.w3, a.output * a.hidden2),
            ("b3", &ck.b3, a.output),
        ];
        let mut params = Vec::with_capacity(a.param_count());
        for (name, arr, want) in parts {
            if arr.len() != want {
                return Err(NetError::Shape { name, got: arr.len(), want });
            }
            if arr.iter().any(|x| !x.is_finite()) {
                return Err(NetError::NonFinite(name));
            }
            params.extend(arr.iter().map(|x| T::lit(*x)));
        }
        Ok(Self { arch: a, params, l1_weight: T::lit(ck.l1_weight), softmax_beta: T::lit(ck.softmax_beta) })
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned parameter file: architecture metadata plus flat weight arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub architecture: Architecture,
    pub output_width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<String>,
    pub l1_weight: f64,
    pub softmax_beta: f64,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

/// Features computed once per training pair.
#[derive(Clone, Debug, Default)]
pub struct PreparedData<T> {
    pub feats: Vec<Vec<T>>,
    pub targets: Vec<Vec<T>>,
}

impl<T: Real> PreparedData<T> {
    pub fn push(&mut self, traj: &Trajectory<T>, target: Vec<T>) {
        self.feats.push(waypoint_features(traj));
        self.targets.push(target);
    }

    pub fn len(&self) -> usize {
        self.feats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feats.is_empty()
    }
}

/// Full-batch optimizer settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Continue from the given parameters; otherwise reinitialize from the seed.
    pub warm_start: bool,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self { epochs: 2000, learning_rate: 1e-2, warm_start: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub epochs_run: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch} (last finite loss {last_finite})")]
    NonFinite { epoch: usize, last_finite: f64 },
}

/// Full-batch Adam on the squared-error loss. Returns the best parameters
/// seen (never worse than the entry point).
pub fn train_pool<T: Real>(
    net: &PoolNet<T>,
    data: &PreparedData<T>,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<(PoolNet<T>, TrainReport), TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut cur = if schedule.warm_start {
        net.clone()
    } else {
        let mut fresh = PoolNet::random(net.arch, seed);
        fresh.l1_weight = net.l1_weight;
        fresh.softmax_beta = net.softmax_beta;
        fresh
    };
    let mut opt = Adam::new(cur.params.len(), T::lit(schedule.learning_rate));
    let (entry_loss, _) = net.loss_and_grad(data, false);
    let mut best = net.clone();
    let mut best_loss = entry_loss;
    let mut last_finite = entry_loss.as_f64();
    for epoch in 0..=schedule.epochs {
        let last = epoch == schedule.epochs;
        let (loss, grad) = cur.loss_and_grad(data, !last);
        if !loss.is_finite() {
            return Err(TrainError::NonFinite { epoch, last_finite });
        }
        last_finite = loss.as_f64();
        if loss < best_loss {
            best_loss = loss;
            best.params.copy_from_slice(&cur.params);
            best.arch = cur.arch;
        }
        if !last {
            opt.step(&mut cur.params, &grad);
        }
    }
    Ok((
        best,
        TrainReport { initial_loss: entry_loss.as_f64(), final_loss: best_loss.as_f64(), epochs_run: schedule.epochs },
    ))
}

/// The discriminator: trajectory to VAD.
#[derive(Clone, Debug, PartialEq)]
pub struct StyleNet<T>(PoolNet<T>);

/// Hidden widths used for VacuumBot.
pub const DEFAULT_HIDDEN: (usize, usize) = (32, 16);

impl<T: Real> StyleNet<T> {
    pub fn random(hidden: usize, hidden2: usize, seed: u64) -> Self {
        Self(PoolNet::random(Architecture::style(hidden, hidden2), seed))
    }

    pub fn zeros(hidden: usize, hidden2: usize) -> Self {
        Self(PoolNet::zeros(Architecture::style(hidden, hidden2)))
    }

    pub fn from_pool(net: PoolNet<T>) -> Result<Self, NetError> {
        let a = net.architecture();
        if a.output != 3 || a.head != Head::Tanh {
            return Err(NetError::OutputWidth { got: a.output, want: 3 });
        }
        Ok(Self(net))
    }

    pub fn pool_net(&self) -> &PoolNet<T> {
        &self.0
    }

    pub fn pool_net_mut(&mut self) -> &mut PoolNet<T> {
        &mut self.0
    }

    pub fn forward(&self, traj: &Trajectory<T>) -> Vad<T> {
        let out = self.0.forward(traj);
        Vad::from_array([out[0], out[1], out[2]])
    }

    /// `||f(traj) - target||^2`
    pub fn style_cost(&self, traj: &Trajectory<T>, target: &Vad<T>) -> T {
        self.forward(traj).distance_squared(target)
    }

    pub fn style_cost_grad(&self, traj: &Trajectory<T>, target: &Vad<T>) -> (T, TrajectoryGrad<T>) {
        let t = target.to_array();
        let two = T::lit(2.0);
        let (out, g) = self.0.output_traj_grad(traj, |o| (0..3).map(|c| two * (o[c] - t[c])).collect());
        let cost = (0..3).map(|c| (out[c] - t[c]) * (out[c] - t[c])).sum();
        (cost, g)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        self.0.to_checkpoint(None)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NetError> {
        Self::from_pool(PoolNet::from_checkpoint(ck)?)
    }
}

/// Labeled trajectories collected across rounds.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LabeledDataset<T> {
    pub pairs: Vec<LabeledPair<T>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct LabeledPair<T> {
    pub trajectory: Trajectory<T>,
    pub label: Vad<T>,
    pub round: usize,
}

impl<T: Real> LabeledDataset<T> {
    pub fn push(&mut self, trajectory: Trajectory<T>, label: Vad<T>, round: usize) {
        self.pairs.push(LabeledPair { trajectory, label, round });
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn prepare(&self) -> PreparedData<T> {
        let mut d = PreparedData::default();
        for p in &self.pairs {
            d.push(&p.trajectory, p.label.to_array().to_vec());
        }
        d
    }
}

/// Discriminator output for a trajectory.
pub fn forward<T: Real>(params: &StyleNet<T>, traj: &Trajectory<T>) -> Vad<T> {
    params.forward(traj)
}

pub fn style_cost<T: Real>(params: &StyleNet<T>, traj: &Trajectory<T>, target: &Vad<T>) -> T {
    params.style_cost(traj, target)
}

/// Sum of per-pair style costs plus the L1 penalty.
pub fn loss<T: Real>(params: &StyleNet<T>, data: &LabeledDataset<T>) -> T {
    params.0.loss_and_grad(&data.prepare(), false).0
}

/// Gradient of the style cost with respect to the trajectory.
pub fn grad_traj<T: Real>(params: &StyleNet<T>, traj: &Trajectory<T>, target: &Vad<T>) -> TrajectoryGrad<T> {
    params.style_cost_grad(traj, target).1
}

pub fn train<T: Real>(
    params: &StyleNet<T>,
    data: &LabeledDataset<T>,
    schedule: &TrainSchedule,
    seed: u64,
) -> Result<(StyleNet<T>, TrainReport), TrainError> {
    let (net, report) = train_pool(&params.0, &data.prepare(), schedule, seed)?;
    Ok((StyleNet(net), report))
}
