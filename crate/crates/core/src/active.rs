//! Query selection: choose each round's sample emotions to cover the lexicon
//! distribution, then optimize one query trajectory per sample.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::StyleNet;
use crate::opt::{optimize, CostConfig, OptimizeError};
use crate::scalar::Real;
use crate::seed::{derive_seed, rng_from, stream};
use crate::sim::{sample_task, Bounds, Task, Trajectory};
use crate::vad::{EmotionLexicon, Vad};

#[derive(Debug, Error, PartialEq)]
pub enum ActiveError {
    #[error("batch size must be at least 1")]
    EmptyBatch,
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("round index must be at least 1")]
    RoundIndex,
    #[error("query {index}: {source}")]
    Optimize { index: usize, source: OptimizeError },
}

/// `b` i.i.d. uniform points in the VAD cube.
pub fn first_round_samples<T: Real>(b: usize, seed: u64) -> Result<Vec<Vad<T>>, ActiveError> {
    if b == 0 {
        return Err(ActiveError::EmptyBatch);
    }
    let mut rng = rng_from(seed);
    Ok((0..b)
        .map(|_| {
            let mut c = || T::lit(rng.gen_range(-1.0..=1.0));
            Vad::from_array([c(), c(), c()])
        })
        .collect())
}

fn nearest<T: Real>(p: &Vad<T>, centers: &[Vad<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (j, c) in centers.iter().enumerate() {
        let d = p.distance_squared(c);
        // strict comparison keeps the lowest index on ties
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Sum over `points` of the squared distance to the nearest of `centers`.
pub fn coverage_of_points<T: Real>(centers: &[Vad<T>], points: &[Vad<T>]) -> T {
    points.iter().map(|p| nearest(p, centers).1).sum()
}

/// Sum over lexicon entries of the squared distance to the nearest of
/// `candidates` and `prior_labels`. Infinite when both are empty.
pub fn coverage_objective<T: Real>(candidates: &[Vad<T>], prior_labels: &[Vad<T>], lexicon: &EmotionLexicon<T>) -> T {
    let all: Vec<Vad<T>> = prior_labels.iter().chain(candidates).copied().collect();
    coverage_of_points(&all, &lexicon.points())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub n_init: usize,
    pub max_iter: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self { n_init: 8, max_iter: 100 }
    }
}

/// One clustering run from one initialization.
#[derive(Clone, Debug, PartialEq)]
pub struct EmRun<T> {
    /// free centers only
    pub centers: Vec<Vad<T>>,
    /// frozen centers as held at the end of the run
    pub frozen: Vec<Vad<T>>,
    pub objective: T,
    /// objective after each assignment step, starting with the initialization
    pub history: Vec<T>,
    pub iterations: usize,
}

/// Best of `n_init` runs plus every run's trace.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection<T> {
    pub samples: Vec<Vad<T>>,
    pub objective: T,
    pub runs: Vec<EmRun<T>>,
}

/// k-means++ seeding of `b` free centers given fixed `frozen` ones.
fn seed_centers<T: Real>(b: usize, frozen: &[Vad<T>], points: &[Vad<T>], seed: u64) -> Vec<Vad<T>> {
    let mut rng = rng_from(seed);
    let mut centers: Vec<Vad<T>> = Vec::with_capacity(b);
    let mut d2: Vec<f64> = if frozen.is_empty() {
        vec![1.0; points.len()]
    } else {
        points.iter().map(|p| nearest(p, frozen).1.as_f64()).collect()
    };
    for _ in 0..b {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = d2.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[idx];
        centers.push(c);
        for (p, d) in points.iter().zip(d2.iter_mut()) {
            *d = d.min(p.distance_squared(&c).as_f64());
        }
    }
    centers
}

/// Lloyd iterations with frozen centers (indices `0..frozen.len()`) followed
/// by free centers. Empty free clusters jump to the point farthest from all
/// centers.
pub fn em_run<T: Real>(
    init: Vec<Vad<T>>,
    frozen: &[Vad<T>],
    points: &[Vad<T>],
    max_iter: usize,
) -> EmRun<T> {
    let nf = frozen.len();
    let mut centers: Vec<Vad<T>> = frozen.iter().copied().chain(init).collect();
    let mut assign: Vec<usize> = vec![usize::MAX; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut obj = T::zero();
        let mut dists = Vec::with_capacity(points.len());
        for (p, a) in points.iter().zip(assign.iter_mut()) {
            let (j, d) = nearest(p, &centers);
            if *a != j {
                *a = j;
                changed = true;
            }
            obj += d;
            dists.push(d);
        }
        history.push(obj);
        if !changed || iterations >= max_iter {
            break;
        }
        iterations += 1;

        let k = centers.len();
        let mut sums = vec![[T::zero(); 3]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            let arr = p.to_array();
            for c in 0..3 {
                sums[a][c] += arr[c];
            }
            counts[a] += 1;
        }
        for j in nf..k {
            if counts[j] > 0 {
                let n = T::from_usize_lossy(counts[j]);
                centers[j] = Vad::clamped(sums[j][0] / n, sums[j][1] / n, sums[j][2] / n);
            }
        }
        for j in nf..k {
            if counts[j] == 0 {
                // farthest point under the current assignment; ties to the lowest index
                let mut far = 0;
                for (i, d) in dists.iter().enumerate() {
                    if *d > dists[far] {
                        far = i;
                    }
                }
                centers[j] = points[far];
                dists[far] = T::zero();
                // force reassignment next pass
                assign[far] = usize::MAX;
            }
        }
    }
    let objective = *history.last().expect("at least one pass");
    let free = centers.split_off(nf);
    EmRun { centers: free, frozen: centers, objective, history, iterations }
}

/// Approximately minimizes [`coverage_objective`] over `b` new samples by
/// clustering with the prior labels as frozen centers.
pub fn select_samples<T: Real>(
    b: usize,
    prior_labels: &[Vad<T>],
    lexicon: &EmotionLexicon<T>,
    seed: u64,
) -> Result<Selection<T>, ActiveError> {
    select_samples_with(b, prior_labels, lexicon, seed, &SelectConfig::default())
}

pub fn select_samples_with<T: Real>(
    b: usize,
    prior_labels: &[Vad<T>],
    lexicon: &EmotionLexicon<T>,
    seed: u64,
    cfg: &SelectConfig,
) -> Result<Selection<T>, ActiveError> {
    if b == 0 {
        return Err(ActiveError::EmptyBatch);
    }
    if lexicon.is_empty() {
        return Err(ActiveError::EmptyLexicon);
    }
    let points = lexicon.points();
    let runs: Vec<EmRun<T>> = (0..cfg.n_init.max(1))
        .into_par_iter()
        .map(|r| {
            let init = seed_centers(b, prior_labels, &points, derive_seed(seed, &[stream::SELECT, r as u64]));
            em_run(init, prior_labels, &points, cfg.max_iter)
        })
        .collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.objective < runs[best].objective {
            best = i;
        }
    }
    Ok(Selection { samples: runs[best].centers.clone(), objective: runs[best].objective, runs })
}

/// One round of queries awaiting labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct QueryRoundState<T> {
    pub round_index: usize,
    pub batch_size: usize,
    pub prior_labels: Vec<Vad<T>>,
    pub samples: Vec<Vad<T>>,
    pub tasks: Vec<Task<T>>,
    pub queries: Vec<Trajectory<T>>,
    pub seed: u64,
}

/// Task for query `i` of round `k`.
pub fn round_task<T: Real>(seed: u64, k: usize, i: usize, bounds: &Bounds<T>) -> Task<T> {
    sample_task(derive_seed(seed, &[stream::TRAIN_TASK, k as u64, i as u64]), bounds)
}

/// Optimizes one trajectory per sample, each on a fresh task.
pub fn queries_for_samples<T: Real>(
    samples: &[Vad<T>],
    k: usize,
    model: &StyleNet<T>,
    cfg: &CostConfig<T>,
    bounds: &Bounds<T>,
    seed: u64,
) -> Result<(Vec<Task<T>>, Vec<Trajectory<T>>), ActiveError> {
    let out: Vec<Result<(Task<T>, Trajectory<T>), ActiveError>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let task = round_task(seed, k, i, bounds);
            let c = CostConfig { rng_seed: derive_seed(seed, &[stream::OPTIMIZER, k as u64, i as u64]), ..cfg.clone() };
            optimize(&task, s, model, &c)
                .map(|r| (task, r.trajectory))
                .map_err(|source| ActiveError::Optimize { index: i, source })
        })
        .collect();
    let mut tasks = Vec::with_capacity(samples.len());
    let mut queries = Vec::with_capacity(samples.len());
    for r in out {
        let (t, q) = r?;
        tasks.push(t);
        queries.push(q);
    }
    Ok((tasks, queries))
}

/// Round `k`: uniform samples for `k = 1`, coverage selection afterwards.
#[allow(clippy::too_many_arguments)]
pub fn build_round<T: Real>(
    k: usize,
    model: &StyleNet<T>,
    bounds: &Bounds<T>,
    cfg: &CostConfig<T>,
    b: usize,
    prior_labels: &[Vad<T>],
    lexicon: &EmotionLexicon<T>,
    seed: u64,
) -> Result<QueryRoundState<T>, ActiveError> {
    if k == 0 {
        return Err(ActiveError::RoundIndex);
    }
    let sample_seed = derive_seed(seed, &[stream::QUERY_PLAN, k as u64]);
    let samples = if k == 1 {
        first_round_samples(b, sample_seed)?
    } else {
        select_samples(b, prior_labels, lexicon, sample_seed)?.samples
    };
    let (tasks, queries) = queries_for_samples(&samples, k, model, cfg, bounds, seed)?;
    Ok(QueryRoundState {
        round_index: k,
        batch_size: b,
        prior_labels: prior_labels.to_vec(),
        samples,
        tasks,
        queries,
        seed,
    })
}

/// Mean distance between requested samples and the labels they received.
pub fn label_gap<T: Real>(samples: &[Vad<T>], labels: &[Vad<T>]) -> Option<T> {
    if samples.is_empty() || samples.len() != labels.len() {
        return None;
    }
    let s: T = samples.iter().zip(labels).map(|(a, b)| a.distance(b)).sum();
    Some(s / T::from_usize_lossy(samples.len()))
}
