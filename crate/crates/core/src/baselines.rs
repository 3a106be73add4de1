//! Per-emotion cost networks: one scalar model per evaluation emotion, trained
//! on emotion-specific cost labels (one label per query, or one per emotion
//! per query).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{Architecture, Checkpoint, NetError, PoolNet, PreparedData, TrainError, TrainSchedule};
use crate::opt::StyleObjective;
use crate::scalar::Real;
use crate::seed::{derive_seed, rng_from, stream};
use crate::sim::{Trajectory, TrajectoryGrad};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SepMode {
    /// label only the emotion the query was optimized for
    Sep,
    /// label every evaluation emotion for every query
    SepAll,
}

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("no model for emotion {0:?}")]
    UnknownEmotion(String),
    #[error("need at least 2 evaluation emotions, got {0}")]
    TooFewEmotions(usize),
    #[error("training the {emotion} model failed: {source}")]
    Train { emotion: String, source: TrainError },
    #[error("query {index} targets emotion index {target}, only {count} models")]
    BadTarget { index: usize, target: usize, count: usize },
}

/// A scalar cost network for one named emotion and the pairs it has seen.
#[derive(Clone, Debug)]
pub struct PerEmotionModel<T> {
    pub emotion: String,
    pub net: PoolNet<T>,
    pub data: PreparedData<T>,
}

impl<T: Real> PerEmotionModel<T> {
    pub fn new(emotion: &str, hidden: usize, hidden2: usize, l1_weight: T, seed: u64) -> Self {
        let mut net = PoolNet::random(Architecture::cost(hidden, hidden2), seed);
        net.l1_weight = l1_weight;
        Self { emotion: emotion.to_string(), net, data: PreparedData::default() }
    }

    pub fn label_count(&self) -> usize {
        self.data.len()
    }

    /// Predicted cost, always non-negative.
    pub fn cost(&self, traj: &Trajectory<T>) -> T {
        self.net.forward(traj)[0]
    }

    pub fn cost_grad(&self, traj: &Trajectory<T>) -> (T, TrajectoryGrad<T>) {
        let (out, g) = self.net.output_traj_grad(traj, |_| vec![T::one()]);
        (out[0], g)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        self.net.to_checkpoint(Some(self.emotion.clone()))
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NetError> {
        let net = PoolNet::from_checkpoint(ck)?;
        if ck.output_width != 1 {
            return Err(NetError::OutputWidth { got: ck.output_width, want: 1 });
        }
        Ok(Self { emotion: ck.emotion.clone().unwrap_or_default(), net, data: PreparedData::default() })
    }
}

impl<T: Real> StyleObjective<T> for PerEmotionModel<T> {
    fn style_cost(&self, traj: &Trajectory<T>) -> T {
        self.cost(traj)
    }

    fn style_cost_grad(&self, traj: &Trajectory<T>) -> (T, TrajectoryGrad<T>) {
        self.cost_grad(traj)
    }
}

/// `b` emotion indices drawn uniformly with replacement from `0..n`.
pub fn sep_query_plan(n: usize, b: usize, seed: u64) -> Result<Vec<usize>, BaselineError> {
    if n < 2 {
        return Err(BaselineError::TooFewEmotions(n));
    }
    let mut rng = rng_from(seed);
    Ok((0..b).map(|_| rng.gen_range(0..n)).collect())
}

/// The set of per-emotion models for one run.
#[derive(Clone, Debug)]
pub struct SepModels<T> {
    pub mode: SepMode,
    pub models: Vec<PerEmotionModel<T>>,
}

impl<T: Real> SepModels<T> {
    pub fn new<'a, I>(mode: SepMode, emotions: I, hidden: (usize, usize), l1_weight: T, seed: u64) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let models = emotions
            .into_iter()
            .enumerate()
            .map(|(i, e)| {
                PerEmotionModel::new(e, hidden.0, hidden.1, l1_weight, derive_seed(seed, &[stream::NET_INIT, i as u64]))
            })
            .collect();
        Self { mode, models }
    }

    pub fn model(&self, emotion: &str) -> Result<&PerEmotionModel<T>, BaselineError> {
        self.models.iter().find(|m| m.emotion == emotion).ok_or_else(|| BaselineError::UnknownEmotion(emotion.to_string()))
    }

    pub fn total_labels(&self) -> usize {
        self.models.iter().map(|m| m.label_count()).sum()
    }

    /// Adds this round's cost labels and retrains every model that received
    /// new data. `queries` pairs each trajectory with the index of the model it
    /// was optimized for; `oracle(i, k)` returns the cost label of query `i`
    /// for model `k`.
    pub fn train_round<F>(
        &mut self,
        queries: &[(Trajectory<T>, usize)],
        oracle: F,
        schedule: &TrainSchedule,
        seed: u64,
    ) -> Result<(), BaselineError>
    where
        F: Fn(usize, usize) -> T,
    {
        let count = self.models.len();
        let mut touched = vec![false; count];
        for (index, (traj, target)) in queries.iter().enumerate() {
            if *target >= count {
                return Err(BaselineError::BadTarget { index, target: *target, count });
            }
            match self.mode {
                SepMode::Sep => {
                    self.models[*target].data.push(traj, vec![oracle(index, *target)]);
                    touched[*target] = true;
                }
                SepMode::SepAll => {
                    for (k, m) in self.models.iter_mut().enumerate() {
                        m.data.push(traj, vec![oracle(index, k)]);
                        touched[k] = true;
                    }
                }
            }
        }
        let results: Vec<Result<PoolNet<T>, BaselineError>> = self
            .models
            .par_iter()
            .enumerate()
            .map(|(k, m)| {
                if !touched[k] {
                    return Ok(m.net.clone());
                }
                crate::net::train_pool(&m.net, &m.data, schedule, derive_seed(seed, &[stream::NET_INIT, k as u64]))
                    .map(|(net, _)| net)
                    .map_err(|source| BaselineError::Train { emotion: m.emotion.clone(), source })
            })
            .collect();
        for (m, r) in self.models.iter_mut().zip(results) {
            m.net = r?;
        }
        Ok(())
    }
}

/// Predicted cost of `traj` under the model for `emotion`.
pub fn sep_style_cost<T: Real>(models: &SepModels<T>, emotion: &str, traj: &Trajectory<T>) -> Result<T, BaselineError> {
    Ok(models.model(emotion)?.cost(traj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{StyleNet, DEFAULT_HIDDEN};
    use crate::sim::RobotState;
    use crate::vad::EVAL_EMOTION_NAMES;
    use proptest::{prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_traj(seed: u64) -> Trajectory<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let wps = (0..n)
            .map(|_| RobotState {
                x: rng.gen_range(0.0..10.0),
                y: rng.gen_range(0.0..2.0),
                phi: rng.gen_range(-3.0..3.0),
                vx: rng.gen_range(-3.0..3.0),
                vy: rng.gen_range(-3.0..3.0),
                vphi: rng.gen_range(-3.0..3.0),
            })
            .collect();
        Trajectory::new(wps, (0..n - 1).map(|_| rng.gen_range(0.05..0.4)).collect()).unwrap()
    }

    fn models(mode: SepMode, n: usize) -> SepModels<f64> {
        SepModels::new(mode, EVAL_EMOTION_NAMES[..n].iter().copied(), (8, 6), 1e-4, 3)
    }

    #[test]
    fn query_plan_is_reproducible_and_supported() {
        let a = sep_query_plan(2, 4, 9).unwrap();
        assert_eq!(a, sep_query_plan(2, 4, 9).unwrap());
        assert!(sep_query_plan(6, 500, 1).unwrap().iter().all(|i| *i < 6));
        assert_eq!(sep_query_plan(1, 4, 0), Err(BaselineError::TooFewEmotions(1)));
    }

    #[test]
    fn query_plan_is_uniform() {
        let plan = sep_query_plan(4, 10_000, 5).unwrap();
        for e in 0..4 {
            let f = plan.iter().filter(|i| **i == e).count() as f64 / 10_000.0;
            assert!((f - 0.25).abs() < 0.02, "{e}: {f}");
        }
    }

    #[test]
    fn label_accounting() {
        let sched = TrainSchedule { epochs: 5, ..TrainSchedule::default() };
        let queries: Vec<_> = (0..20).map(|i| (random_traj(i), (i % 4) as usize)).collect();
        let oracle = |_: usize, k: usize| k as f64;
        let mut sep = models(SepMode::Sep, 4);
        sep.train_round(&queries, oracle, &sched, 0).unwrap();
        assert_eq!(sep.total_labels(), 20);
        let mut all = models(SepMode::SepAll, 4);
        all.train_round(&queries, oracle, &sched, 0).unwrap();
        assert_eq!(all.total_labels(), 80);
        all.train_round(&queries, oracle, &sched, 1).unwrap();
        assert_eq!(all.total_labels(), 160);
    }

    #[test]
    fn memorizes_a_duplicated_pair() {
        let t = random_traj(4);
        let queries = vec![(t.clone(), 0); 4];
        let mut sep = models(SepMode::Sep, 2);
        sep.train_round(&queries, |_, _| 2.5, &TrainSchedule { epochs: 800, ..Default::default() }, 0).unwrap();
        let pred = sep_style_cost(&sep, "sadness", &t).unwrap();
        assert!((pred - 2.5).abs() < 0.05, "{pred}");
    }

    #[test]
    fn unknown_emotion_is_an_error() {
        let sep = models(SepMode::Sep, 2);
        assert_eq!(
            sep_style_cost(&sep, "fear", &random_traj(1)).unwrap_err(),
            BaselineError::UnknownEmotion("fear".into())
        );
    }

    #[test]
    fn bad_target_is_rejected() {
        let mut sep = models(SepMode::Sep, 2);
        let err = sep.train_round(&[(random_traj(0), 5)], |_, _| 0.0, &TrainSchedule::default(), 0).unwrap_err();
        assert!(matches!(err, BaselineError::BadTarget { target: 5, .. }));
    }

    #[test]
    fn cost_gradient_matches_finite_differences() {
        for s in 0..5 {
            let mut m = PerEmotionModel::<f64>::new("joy", 6, 5, 0.0, s);
            for p in m.net.params_mut() {
                *p *= 1.5;
            }
            let t = random_traj(30 + s);
            let (_, g) = m.cost_grad(&t);
            let rel = crate::sim::tests::fd_check(&t, &g, |x| m.cost(x));
            assert!(rel < 1e-4, "{rel}");
        }
    }

    #[test]
    fn shares_the_style_backbone() {
        let m = PerEmotionModel::<f64>::new("joy", DEFAULT_HIDDEN.0, DEFAULT_HIDDEN.1, 0.0, 0);
        let s = StyleNet::<f64>::random(DEFAULT_HIDDEN.0, DEFAULT_HIDDEN.1, 0);
        let (a, b) = (m.net.architecture(), s.pool_net().architecture());
        assert_eq!((a.input, a.hidden, a.hidden2), (b.input, b.hidden, b.hidden2));
        assert_eq!(a.output, 1);
        assert_eq!(m.net.params().len() + 2 * b.hidden2 + 2, s.pool_net().params().len());
    }

    #[test]
    fn checkpoint_keeps_emotion_tag() {
        let m = PerEmotionModel::<f64>::new("anger", 6, 5, 0.0, 2);
        let ck = m.to_checkpoint();
        assert_eq!(ck.output_width, 1);
        let back = PerEmotionModel::<f64>::from_checkpoint(&ck).unwrap();
        assert_eq!(back.emotion, "anger");
        assert_eq!(back.net, m.net);
    }

    proptest! {
        #[test]
        fn predicted_cost_is_nonnegative(seed in 0u64..10_000) {
            let m = PerEmotionModel::<f64>::new("joy", 6, 5, 0.0, seed);
            prop_assert!(m.cost(&random_traj(seed)) >= 0.0);
        }
    }
}
