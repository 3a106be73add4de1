//! The simulated experiment loop: K rounds of B labeled queries per seed, with
//! Likert and forced-choice evaluation after each round.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::{aligned_score, mean_se, quality_score, topx_accuracy, Choice, PairSide};
use crate::active::round_task;
use crate::baselines::{sep_query_plan, PerEmotionModel, SepMode, SepModels};
use crate::human::{likert_from_vad, sh_label, top_choices_from_vad, HeuristicConfig};
use crate::net::{train, LabeledDataset, StyleNet, TrainSchedule, DEFAULT_HIDDEN};
use crate::opt::{optimize_with, CostConfig, StyleObjective, VadTarget};
use crate::seed::{derive_seed, stream};
use crate::sim::{sample_task, Bounds, Task, Trajectory, TrajectoryGrad};
use crate::vad::{EvalEmotionSet, Vad};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ours,
    Sep,
    SepAll,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ours, Method::Sep, Method::SepAll];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::Sep => "sep",
            Method::SepAll => "sep_all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalCadence {
    #[default]
    PerRound,
    FinalOnly,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[default]
    Simulated,
    Live,
}

fn default_hidden() -> [usize; 2] {
    [DEFAULT_HIDDEN.0, DEFAULT_HIDDEN.1]
}

fn default_l1() -> f64 {
    1e-4
}

/// One (method, N) cell of the experiment matrix over a list of seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub method: Method,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub eval_cadence: EvalCadence,
    #[serde(default)]
    pub oracle: OracleKind,
    /// simulated-human parameters; the shipped defaults when absent
    #[serde(default)]
    pub sh: HeuristicConfig,
    #[serde(default)]
    pub cost: CostConfig<f64>,
    #[serde(default)]
    pub train: TrainSchedule,
    #[serde(default = "default_hidden")]
    pub hidden: [usize; 2],
    #[serde(default = "default_l1")]
    pub l1_weight: f64,
}

impl ExperimentConfig {
    /// Defaults for everything except the matrix symbols.
    pub fn new(id: &str, method: Method, n: usize, k: usize, b: usize, m: usize, seeds: Vec<u64>) -> Self {
        Self {
            id: id.to_string(),
            method,
            n,
            k,
            b,
            m,
            seeds,
            eval_cadence: EvalCadence::PerRound,
            oracle: OracleKind::Simulated,
            sh: HeuristicConfig::default(),
            cost: CostConfig::default(),
            train: TrainSchedule::default(),
            hidden: default_hidden(),
            l1_weight: default_l1(),
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.n < 2 || !self.n.is_multiple_of(2) || self.n > 6 {
            return bad(format!("N must be 2, 4 or 6, got {}", self.n));
        }
        if self.m < 1 {
            return bad("M must be at least 1".into());
        }
        if self.b < 1 {
            return bad("B must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if !(self.l1_weight >= 0.0) {
            return bad("l1_weight must be non-negative".into());
        }
        self.sh.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        self.cost.validate().map_err(|e| ExperimentError::Config(e.to_string()))?;
        Ok(())
    }

    /// Labels consumed after `rounds` rounds.
    pub fn label_count(&self, rounds: usize) -> usize {
        match self.method {
            Method::Ours | Method::Sep => rounds * self.b,
            Method::SepAll => rounds * self.b * self.n,
        }
    }
}

/// Several cells sharing every setting except method and N.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub id: String,
    pub methods: Vec<Method>,
    #[serde(rename = "Ns")]
    pub ns: Vec<usize>,
    /// template; its `method` and `N` are replaced per cell
    pub base: ExperimentConfig,
}

impl MatrixConfig {
    pub fn cells(&self) -> Vec<ExperimentConfig> {
        let mut out = Vec::new();
        for &method in &self.methods {
            for &n in &self.ns {
                out.push(ExperimentConfig { id: self.id.clone(), method, n, ..self.base.clone() });
            }
        }
        out
    }
}

/// Either a single cell or a matrix, as read from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigFile {
    Matrix(MatrixConfig),
    Single(ExperimentConfig),
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))
    }

    pub fn id(&self) -> &str {
        match self {
            ConfigFile::Matrix(m) => &m.id,
            ConfigFile::Single(c) => &c.id,
        }
    }

    pub fn cells(&self) -> Vec<ExperimentConfig> {
        match self {
            ConfigFile::Matrix(m) => m.cells(),
            ConfigFile::Single(c) => vec![c.clone()],
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("the live oracle is driven through sessions, not run_experiment")]
    LiveOracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionMetric {
    pub emotion: String,
    /// mean aligned Likert score of items optimized for this emotion
    pub quality: f64,
    pub top1: f64,
    pub top2: f64,
}

/// One Likert answer: raw score, pair side, and the pair index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertResponse {
    pub pair: usize,
    pub side: PairSide,
    pub score: u8,
}

impl LikertResponse {
    pub fn emotion(&self) -> usize {
        2 * self.pair + (self.side == PairSide::B) as usize
    }
}

/// Metrics of one seed at one point of the label budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub method: Method,
    pub n: usize,
    pub seed: u64,
    pub query_count: usize,
    pub labels: usize,
    pub quality_mean: f64,
    pub quality_se: f64,
    pub top1: f64,
    pub top1_se: f64,
    pub top2: f64,
    pub top2_se: f64,
    pub per_emotion: Vec<EmotionMetric>,
    pub likert: Vec<LikertResponse>,
    /// emotion indices into the first N evaluation emotions
    pub choices: Vec<Choice<usize>>,
}

impl MetricRecord {
    pub fn check_invariants(&self) -> Result<(), String> {
        if !(1.0..=7.0).contains(&self.quality_mean) {
            return Err(format!("quality {} outside [1,7]", self.quality_mean));
        }
        if !(0.0 <= self.top1 && self.top1 <= self.top2 && self.top2 <= 1.0) {
            return Err(format!("need 0 <= top1 {} <= top2 {} <= 1", self.top1, self.top2));
        }
        Ok(())
    }
}

/// A seed that stopped early, with the stage that failed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub method: Method,
    pub n: usize,
    pub seed: u64,
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub records: Vec<MetricRecord>,
    pub failures: Vec<SeedFailure>,
}

impl ExperimentOutput {
    pub fn extend(&mut self, other: ExperimentOutput) {
        self.records.extend(other.records);
        self.failures.extend(other.failures);
    }
}

/// What a trajectory is optimized against, per method.
enum Learner {
    Ours { net: StyleNet<f64>, data: LabeledDataset<f64> },
    Sep(SepModels<f64>),
}

enum Objective<'a> {
    Vad(VadTarget<'a, f64>),
    Cost(&'a PerEmotionModel<f64>),
}

impl StyleObjective<f64> for Objective<'_> {
    fn style_cost(&self, traj: &Trajectory<f64>) -> f64 {
        match self {
            Objective::Vad(v) => v.style_cost(traj),
            Objective::Cost(m) => m.style_cost(traj),
        }
    }

    fn style_cost_grad(&self, traj: &Trajectory<f64>) -> (f64, TrajectoryGrad<f64>) {
        match self {
            Objective::Vad(v) => v.style_cost_grad(traj),
            Objective::Cost(m) => m.style_cost_grad(traj),
        }
    }
}

impl Learner {
    fn new(cfg: &ExperimentConfig, set: &EvalEmotionSet<f64>, seed: u64) -> Self {
        let init = derive_seed(seed, &[stream::NET_INIT]);
        match cfg.method {
            Method::Ours => {
                let mut net = StyleNet::random(cfg.hidden[0], cfg.hidden[1], init);
                net.pool_net_mut().l1_weight = cfg.l1_weight;
                Learner::Ours { net, data: LabeledDataset::default() }
            }
            Method::Sep | Method::SepAll => {
                let mode = if cfg.method == Method::Sep { SepMode::Sep } else { SepMode::SepAll };
                Learner::Sep(SepModels::new(mode, set.names(), (cfg.hidden[0], cfg.hidden[1]), cfg.l1_weight, init))
            }
        }
    }

    fn objective<'a>(&'a self, e: usize, set: &EvalEmotionSet<f64>) -> Objective<'a> {
        match self {
            Learner::Ours { net, .. } => Objective::Vad(VadTarget { net, target: set.anchor(e) }),
            Learner::Sep(models) => Objective::Cost(&models.models[e]),
        }
    }
}

/// An evaluation trajectory to generate: the task, the emotion it targets,
/// and how it is asked about.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalItem {
    pub task: Task<f64>,
    pub emotion: usize,
    pub kind: EvalKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalKind {
    Likert { pair: usize, side: PairSide },
    Choice,
}

/// The evaluation protocol for `n` emotions and `m` tasks per emotion:
/// `n/2` Likert sets of `2m` items (one diametric pair each, `m` per side)
/// followed by `n*m` choice items. Tasks come from the evaluation stream,
/// disjoint from training tasks, and are the same at every evaluation point.
pub fn eval_plan(n: usize, m: usize, seed: u64, bounds: &Bounds<f64>) -> Vec<EvalItem> {
    let mut items = Vec::with_capacity(2 * n * m);
    for pair in 0..n / 2 {
        for (s, side) in [PairSide::A, PairSide::B].into_iter().enumerate() {
            for j in 0..m {
                let task = sample_task(derive_seed(seed, &[stream::EVAL_TASK, 0, pair as u64, s as u64, j as u64]), bounds);
                items.push(EvalItem { task, emotion: 2 * pair + s, kind: EvalKind::Likert { pair, side } });
            }
        }
    }
    for e in 0..n {
        for j in 0..m {
            let task = sample_task(derive_seed(seed, &[stream::EVAL_TASK, 1, e as u64, j as u64]), bounds);
            items.push(EvalItem { task, emotion: e, kind: EvalKind::Choice });
        }
    }
    items
}

struct EvalResponses {
    likert: Vec<LikertResponse>,
    choices: Vec<Choice<usize>>,
}

fn evaluate(
    learner: &Learner,
    cfg: &ExperimentConfig,
    set: &EvalEmotionSet<f64>,
    items: &[EvalItem],
    seed: u64,
    query_count: usize,
) -> Result<EvalResponses, String> {
    let answers: Vec<Result<(usize, Vad<f64>), String>> = items
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let c = CostConfig { rng_seed: derive_seed(seed, &[stream::OPTIMIZER, stream::EVAL_TASK, i as u64]), ..cfg.cost.clone() };
            let r = optimize_with(&item.task, &learner.objective(item.emotion, set), &c)
                .map_err(|e| format!("evaluation item {i}: {e}"))?;
            let label_seed = derive_seed(seed, &[stream::LABEL, stream::EVAL_TASK, query_count as u64, i as u64]);
            Ok((i, sh_label(&r.trajectory, &cfg.sh, label_seed)))
        })
        .collect();
    let mut likert = Vec::new();
    let mut choices = Vec::new();
    for a in answers {
        let (i, v) = a?;
        let item = &items[i];
        match item.kind {
            EvalKind::Likert { pair, side } => {
                let score = likert_from_vad(&v, &set.anchor(2 * pair), &set.anchor(2 * pair + 1));
                likert.push(LikertResponse { pair, side, score });
            }
            EvalKind::Choice => {
                let (first, second) = top_choices_from_vad(&v, set);
                choices.push(Choice { first, second, intended: item.emotion });
            }
        }
    }
    Ok(EvalResponses { likert, choices })
}

fn record(
    cfg: &ExperimentConfig,
    set: &EvalEmotionSet<f64>,
    seed: u64,
    rounds: usize,
    resp: EvalResponses,
) -> Result<MetricRecord, String> {
    let q: Vec<(u8, PairSide)> = resp.likert.iter().map(|r| (r.score, r.side)).collect();
    let quality_mean = quality_score(&q).map_err(|e| e.to_string())?;
    let top1 = topx_accuracy(&resp.choices, 1).map_err(|e| e.to_string())?;
    let top2 = topx_accuracy(&resp.choices, 2).map_err(|e| e.to_string())?;
    let aligned: Vec<f64> = resp.likert.iter().map(|r| aligned_score(r.score, r.side) as f64).collect();
    let hits = |x: usize| -> Vec<f64> { resp.choices.iter().map(|c| c.hit(x) as u8 as f64).collect() };
    let per_emotion = (0..cfg.n)
        .map(|e| {
            let qs: Vec<(u8, PairSide)> =
                resp.likert.iter().filter(|r| r.emotion() == e).map(|r| (r.score, r.side)).collect();
            let cs: Vec<Choice<usize>> = resp.choices.iter().filter(|c| c.intended == e).cloned().collect();
            Ok(EmotionMetric {
                emotion: set.name(e).to_string(),
                quality: quality_score(&qs).map_err(|x| x.to_string())?,
                top1: topx_accuracy(&cs, 1).map_err(|x| x.to_string())?,
                top2: topx_accuracy(&cs, 2).map_err(|x| x.to_string())?,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let rec = MetricRecord {
        method: cfg.method,
        n: cfg.n,
        seed,
        query_count: rounds * cfg.b,
        labels: cfg.label_count(rounds),
        quality_mean,
        quality_se: mean_se(&aligned).1,
        top1,
        top1_se: mean_se(&hits(1)).1,
        top2,
        top2_se: mean_se(&hits(2)).1,
        per_emotion,
        likert: resp.likert,
        choices: resp.choices,
    };
    rec.check_invariants()?;
    Ok(rec)
}

/// Runs one seed of one cell. On failure returns the records produced so far
/// and the failure.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> (Vec<MetricRecord>, Option<SeedFailure>) {
    let mut records = Vec::new();
    let fail = |stage: String, message: String| SeedFailure { method: cfg.method, n: cfg.n, seed, stage, message };
    let set = match EvalEmotionSet::<f64>::shipped(cfg.n) {
        Ok(s) => s,
        Err(e) => return (records, Some(fail("setup".into(), e.to_string()))),
    };
    let bounds = Bounds::default();
    let items = eval_plan(cfg.n, cfg.m, seed, &bounds);
    let mut learner = Learner::new(cfg, &set, seed);
    for k in 0..=cfg.k {
        if k > 0 {
            if let Err(e) = train_round(&mut learner, cfg, &set, &bounds, seed, k) {
                return (records, Some(fail(format!("round {k}"), e)));
            }
        }
        if k == 0 || k == cfg.k || cfg.eval_cadence == EvalCadence::PerRound {
            let out = evaluate(&learner, cfg, &set, &items, seed, k * cfg.b).and_then(|r| record(cfg, &set, seed, k, r));
            match out {
                Ok(r) => records.push(r),
                Err(e) => return (records, Some(fail(format!("evaluation after round {k}"), e))),
            }
        }
    }
    (records, None)
}

fn train_round(
    learner: &mut Learner,
    cfg: &ExperimentConfig,
    set: &EvalEmotionSet<f64>,
    bounds: &Bounds<f64>,
    seed: u64,
    k: usize,
) -> Result<(), String> {
    // Simulated runs draw every method's query targets from the evaluation set.
    let plan = sep_query_plan(cfg.n, cfg.b, derive_seed(seed, &[stream::QUERY_PLAN, k as u64])).map_err(|e| e.to_string())?;
    let queries: Vec<Result<Trajectory<f64>, String>> = {
        let l = &*learner;
        plan.par_iter()
            .enumerate()
            .map(|(i, &e)| {
                let task = round_task(seed, k, i, bounds);
                let c = CostConfig { rng_seed: derive_seed(seed, &[stream::OPTIMIZER, k as u64, i as u64]), ..cfg.cost.clone() };
                optimize_with(&task, &l.objective(e, set), &c)
                    .map(|r| r.trajectory)
                    .map_err(|err| format!("query {i}: {err}"))
            })
            .collect()
    };
    let queries = queries.into_iter().collect::<Result<Vec<_>, _>>()?;
    let label_seed = |i: usize| derive_seed(seed, &[stream::LABEL, k as u64, i as u64]);
    let train_seed = derive_seed(seed, &[stream::NET_INIT, k as u64]);
    match learner {
        Learner::Ours { net, data } => {
            for (i, q) in queries.into_iter().enumerate() {
                let l = sh_label(&q, &cfg.sh, label_seed(i));
                data.push(q, l, k);
            }
            let (trained, _) = train(net, data, &cfg.train, train_seed).map_err(|e| e.to_string())?;
            *net = trained;
        }
        Learner::Sep(models) => {
            // One perceived VAD per query, so every emotion's cost label is consistent.
            let labels: Vec<Vad<f64>> = queries.iter().enumerate().map(|(i, q)| sh_label(q, &cfg.sh, label_seed(i))).collect();
            let index: Vec<(Trajectory<f64>, usize)> = queries.into_iter().zip(plan).collect();
            let oracle = |i: usize, e: usize| labels[i].distance_squared(&set.anchor(e));
            models.train_round(&index, oracle, &cfg.train, train_seed).map_err(|e| e.to_string())?;
        }
    }
    Ok(())
}

/// Runs every seed of `cfg`. Seeds are independent; a failing seed keeps its
/// earlier records and is reported in `failures`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    cfg.validate()?;
    if cfg.oracle == OracleKind::Live {
        return Err(ExperimentError::LiveOracle);
    }
    let per_seed: Vec<(Vec<MetricRecord>, Option<SeedFailure>)> =
        cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect();
    let mut out = ExperimentOutput::default();
    for (records, failure) in per_seed {
        out.records.extend(records);
        out.failures.extend(failure);
    }
    Ok(out)
}
