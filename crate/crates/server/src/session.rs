//! Live labeling sessions as a journaled state machine.
//!
//! Every mutation is an [`Event`]; [`Session::apply`] is the only way state
//! changes, so replaying a journal reproduces the session exactly. Expensive
//! work (training, trajectory optimization) happens in [`run_job`], whose
//! result is itself an event.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use emotive_core::active::{build_round, ActiveError, QueryRoundState};
use emotive_core::evaluation::experiment::{eval_plan, EvalKind};
use emotive_core::evaluation::metrics::{
    aligned_score, mean_se, quality_score, topx_accuracy, Choice, Metric, PairSide, SessionScores,
};
use emotive_core::lang::{phrase_to_vad, TextVad};
use emotive_core::net::{train, Checkpoint, LabeledDataset, NetError, StyleNet, TrainError, TrainSchedule, DEFAULT_HIDDEN};
use emotive_core::opt::{optimize, CostConfig, OptimizeError};
use emotive_core::seed::{derive_seed, rng_from, stream};
use emotive_core::sim::{Bounds, Task, Trajectory};
use emotive_core::vad::{curated_lexicon, shipped_norms, EmotionLexicon, EvalEmotionSet, RangePolicy, Vad};

/// Lexicon used to place first-round and coverage samples.
pub fn sample_lexicon() -> &'static EmotionLexicon<f64> {
    static LEX: OnceLock<EmotionLexicon<f64>> = OnceLock::new();
    LEX.get_or_init(curated_lexicon)
}

/// Lexicon used to resolve free-text labels.
pub fn text_lexicon() -> &'static EmotionLexicon<f64> {
    static LEX: OnceLock<EmotionLexicon<f64>> = OnceLock::new();
    LEX.get_or_init(shipped_norms)
}

pub fn resolve_text(text: &str) -> Option<TextVad<f64>> {
    phrase_to_vad(text, text_lexicon())
}

fn default_hidden() -> [usize; 2] {
    [DEFAULT_HIDDEN.0, DEFAULT_HIDDEN.1]
}

fn default_l1() -> f64 {
    1e-4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub cost: CostConfig<f64>,
    #[serde(default)]
    pub train: TrainSchedule,
    #[serde(default = "default_hidden")]
    pub hidden: [usize; 2],
    #[serde(default = "default_l1")]
    pub l1_weight: f64,
}

impl SessionConfig {
    /// The live protocol: two rounds of twenty labels, six emotions, three
    /// evaluation tasks per emotion.
    pub fn protocol() -> Self {
        Self::new(2, 20, 6, 3, 0)
    }

    pub fn new(k: usize, b: usize, n: usize, m: usize, seed: u64) -> Self {
        Self {
            k,
            b,
            n,
            m,
            seed,
            cost: CostConfig::default(),
            train: TrainSchedule::default(),
            hidden: default_hidden(),
            l1_weight: default_l1(),
        }
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: String| Err(SessionError::Validation { message: m, indices: vec![] });
        if self.k < 1 {
            return bad("K must be at least 1".into());
        }
        if self.b < 1 {
            return bad("B must be at least 1".into());
        }
        if !(self.n == 2 || self.n == 4 || self.n == 6) {
            return bad(format!("N must be 2, 4 or 6, got {}", self.n));
        }
        if self.m < 1 {
            return bad("M must be at least 1".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        if self.l1_weight.is_nan() || self.l1_weight < 0.0 {
            return bad("l1_weight must be non-negative".into());
        }
        self.cost.validate().map_err(|e| SessionError::Validation { message: e.to_string(), indices: vec![] })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    AwaitingLabels,
    Training,
    Evaluating,
    Done,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Direct,
    Language,
}

/// A label as stored: the VAD used for training and where it came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredLabel {
    pub vad: [f64; 3],
    pub source: LabelSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub matched: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
    pub request_id: String,
}

/// What a client submits for one query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelInput {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vad: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub state: QueryRoundState<f64>,
    pub labels: Vec<Option<StoredLabel>>,
}

impl Round {
    pub fn missing(&self) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, l)| l.is_none()).map(|(i, _)| i).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QuestionKind {
    /// rate 1 (emotion_a) .. 7 (emotion_b)
    Likert { set: usize, emotion_a: String, emotion_b: String },
    /// pick the closest and second-closest of `options`
    Choice { options: Vec<String> },
}

/// One evaluation trajectory. `intended` is never shown to the rater.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalQuestion {
    pub index: usize,
    pub question: QuestionKind,
    pub intended: usize,
    pub task: Task<f64>,
    pub trajectory: Trajectory<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Answer {
    Likert { score: u8 },
    Choice { first: String, second: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalState {
    pub checkpoint: Checkpoint,
    pub questions: Vec<EvalQuestion>,
    pub answers: Vec<Option<(Answer, String)>>,
}

/// A stored response to a client request, replayed on retry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub fingerprint: String,
    pub response: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub config: SessionConfig,
    pub status: Status,
    pub rounds: Vec<Round>,
    /// model that generated round k's queries is `checkpoints[k]`
    pub checkpoints: Vec<Checkpoint>,
    pub eval: Option<EvalState>,
    pub requests: BTreeMap<String, RequestRecord>,
    /// number of events applied
    pub seq: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Created { id: String, config: SessionConfig, request_id: String, fingerprint: String },
    RoundReady { round: QueryRoundState<f64>, checkpoint: Checkpoint },
    Labeled { request_id: String, fingerprint: String, labels: Vec<(usize, StoredLabel)>, response: serde_json::Value },
    TrainRequested { request_id: String, fingerprint: String, response: serde_json::Value },
    EvalReady { checkpoint: Checkpoint, questions: Vec<EvalQuestion> },
    Answered { request_id: String, fingerprint: String, index: usize, answer: Answer, response: serde_json::Value },
}

#[derive(Debug, Error, PartialEq)]
pub enum SessionError {
    #[error("{message}")]
    Validation { message: String, indices: Vec<usize> },
    #[error("{message}")]
    Conflict { message: String, indices: Vec<usize> },
    #[error("session is {status:?}; {action} is not possible now")]
    State { status: Status, action: &'static str },
    #[error("unknown session {0}")]
    NotFound(String),
}

#[derive(Debug, Error)]
pub enum JobError {
    #[error("query generation failed: {0}")]
    Active(#[from] ActiveError),
    #[error("training failed: {0}")]
    Train(#[from] TrainError),
    #[error("checkpoint rejected: {0}")]
    Net(#[from] NetError),
    #[error("evaluation item {index} failed: {source}")]
    Optimize { index: usize, source: OptimizeError },
    #[error("no job pending in state {0:?}")]
    Idle(Status),
}

/// Outcome of a request check against the replay table.
pub enum Replay {
    Fresh,
    Stored(serde_json::Value),
}

impl Session {
    pub fn new(created: &Event) -> Self {
        let Event::Created { id, config, request_id, fingerprint } = created else {
            panic!("a session starts from a Created event");
        };
        let mut requests = BTreeMap::new();
        requests.insert(
            request_id.clone(),
            RequestRecord { fingerprint: fingerprint.clone(), response: serde_json::json!({ "session_id": id }) },
        );
        Self {
            id: id.clone(),
            config: config.clone(),
            status: Status::Training,
            rounds: vec![],
            checkpoints: vec![],
            eval: None,
            requests,
            seq: 1,
        }
    }

    /// Looks up `request_id`: a stored response for an identical retry, a
    /// conflict for a reused id with a different body.
    pub fn replay(&self, request_id: &str, fingerprint: &str) -> Result<Replay, SessionError> {
        match self.requests.get(request_id) {
            None => Ok(Replay::Fresh),
            Some(r) if r.fingerprint == fingerprint => Ok(Replay::Stored(r.response.clone())),
            Some(_) => Err(SessionError::Conflict {
                message: format!("request id {request_id:?} was already used for a different request"),
                indices: vec![],
            }),
        }
    }

    pub fn current_round(&self) -> Option<&Round> {
        self.rounds.last()
    }

    /// Every labeled pair so far, in round order.
    pub fn dataset(&self) -> LabeledDataset<f64> {
        let mut d = LabeledDataset::default();
        for r in &self.rounds {
            for (q, l) in r.state.queries.iter().zip(&r.labels) {
                if let Some(l) = l {
                    d.push(q.clone(), Vad::from_array(l.vad), r.state.round_index);
                }
            }
        }
        d
    }

    pub fn apply(&mut self, ev: Event) {
        self.seq += 1;
        match ev {
            Event::Created { .. } => panic!("Created only starts a session"),
            Event::RoundReady { round, checkpoint } => {
                let n = round.queries.len();
                self.rounds.push(Round { state: round, labels: vec![None; n] });
                self.checkpoints.push(checkpoint);
                self.status = Status::AwaitingLabels;
            }
            Event::Labeled { request_id, fingerprint, labels, response } => {
                let round = self.rounds.last_mut().expect("labels need a round");
                for (i, l) in labels {
                    round.labels[i] = Some(l);
                }
                self.requests.insert(request_id, RequestRecord { fingerprint, response });
            }
            Event::TrainRequested { request_id, fingerprint, response } => {
                self.status = Status::Training;
                self.requests.insert(request_id, RequestRecord { fingerprint, response });
            }
            Event::EvalReady { checkpoint, questions } => {
                let n = questions.len();
                self.eval = Some(EvalState { checkpoint, questions, answers: vec![None; n] });
                self.status = Status::Evaluating;
            }
            Event::Answered { request_id, fingerprint, index, answer, response } => {
                let ev = self.eval.as_mut().expect("answers need evaluation items");
                ev.answers[index] = Some((answer, request_id.clone()));
                if ev.answers.iter().all(Option::is_some) {
                    self.status = Status::Done;
                }
                self.requests.insert(request_id, RequestRecord { fingerprint, response });
            }
        }
    }

    /// Validates a label batch and resolves free text. Returns the labels to
    /// store; labels identical to what is already stored are accepted again.
    pub fn prepare_labels(&self, request_id: &str, inputs: &[LabelInput]) -> Result<Vec<(usize, StoredLabel)>, SessionError> {
        if self.status != Status::AwaitingLabels {
            return Err(SessionError::State { status: self.status, action: "labeling" });
        }
        let round = self.current_round().expect("awaiting labels implies a round");
        if inputs.is_empty() {
            return Err(SessionError::Validation { message: "no labels given".into(), indices: vec![] });
        }
        let mut out = Vec::with_capacity(inputs.len());
        let mut bad_index = Vec::new();
        let mut bad_value = Vec::new();
        let mut not_found = Vec::new();
        let mut conflicts = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for inp in inputs {
            if inp.index >= round.labels.len() || !seen.insert(inp.index) {
                bad_index.push(inp.index);
                continue;
            }
            let label = match (&inp.vad, &inp.text) {
                (Some(v), None) => match Vad::new(v[0], v[1], v[2], RangePolicy::Reject) {
                    Ok(_) => StoredLabel {
                        vad: *v,
                        source: LabelSource::Direct,
                        text: None,
                        matched: vec![],
                        provider: None,
                        request_id: request_id.to_string(),
                    },
                    Err(_) => {
                        bad_value.push(inp.index);
                        continue;
                    }
                },
                (None, Some(t)) => match resolve_text(t) {
                    Some(r) => StoredLabel {
                        vad: r.vad.to_array(),
                        source: LabelSource::Language,
                        text: Some(t.clone()),
                        matched: r.matched,
                        provider: Some(r.provider),
                        request_id: request_id.to_string(),
                    },
                    None => {
                        not_found.push(inp.index);
                        continue;
                    }
                },
                _ => {
                    bad_value.push(inp.index);
                    continue;
                }
            };
            if let Some(existing) = &round.labels[inp.index] {
                if existing.request_id != request_id {
                    conflicts.push(inp.index);
                    continue;
                }
            }
            out.push((inp.index, label));
        }
        if !conflicts.is_empty() {
            return Err(SessionError::Conflict {
                message: "queries already labeled by another request".into(),
                indices: conflicts,
            });
        }
        if !bad_index.is_empty() {
            return Err(SessionError::Validation { message: "unknown or repeated query index".into(), indices: bad_index });
        }
        if !bad_value.is_empty() {
            return Err(SessionError::Validation {
                message: "each label needs exactly one of vad (inside [-1,1]^3) or text".into(),
                indices: bad_value,
            });
        }
        if !not_found.is_empty() {
            return Err(SessionError::Validation { message: "no lexicon word found in text".into(), indices: not_found });
        }
        Ok(out)
    }

    pub fn check_train(&self) -> Result<(), SessionError> {
        if self.status != Status::AwaitingLabels {
            return Err(SessionError::State { status: self.status, action: "training" });
        }
        let missing = self.current_round().map(Round::missing).unwrap_or_default();
        if !missing.is_empty() {
            return Err(SessionError::Validation { message: "labels missing for some queries".into(), indices: missing });
        }
        Ok(())
    }

    /// Index of the first unanswered evaluation question.
    pub fn next_question(&self) -> Option<&EvalQuestion> {
        let ev = self.eval.as_ref()?;
        ev.answers.iter().position(Option::is_none).map(|i| &ev.questions[i])
    }

    pub fn check_answer(&self, request_id: &str, index: usize, answer: &Answer) -> Result<(), SessionError> {
        if self.status != Status::Evaluating {
            return Err(SessionError::State { status: self.status, action: "answering" });
        }
        let ev = self.eval.as_ref().expect("evaluating implies questions");
        let Some(q) = ev.questions.get(index) else {
            return Err(SessionError::Validation { message: "unknown question index".into(), indices: vec![index] });
        };
        if let Some((_, rid)) = &ev.answers[index] {
            if rid != request_id {
                return Err(SessionError::Conflict { message: "question already answered".into(), indices: vec![index] });
            }
        }
        let ok = match (&q.question, answer) {
            (QuestionKind::Likert { .. }, Answer::Likert { score }) => (1..=7).contains(score),
            (QuestionKind::Choice { options }, Answer::Choice { first, second }) => {
                first != second && options.contains(first) && options.contains(second)
            }
            _ => false,
        };
        if !ok {
            return Err(SessionError::Validation {
                message: "answer does not fit the question (Likert 1..7, or two distinct offered emotions)".into(),
                indices: vec![index],
            });
        }
        Ok(())
    }

    /// Metrics over the answers given so far.
    pub fn metrics(&self) -> SessionMetrics {
        let set = EvalEmotionSet::<f64>::shipped(self.config.n).expect("validated N");
        let mut likert = Vec::new();
        let mut choices = Vec::new();
        if let Some(ev) = &self.eval {
            for (q, a) in ev.questions.iter().zip(&ev.answers) {
                match (&q.question, a) {
                    (QuestionKind::Likert { .. }, Some((Answer::Likert { score }, _))) => {
                        let side = if q.intended % 2 == 0 { PairSide::A } else { PairSide::B };
                        likert.push((*score, side, q.intended));
                    }
                    (QuestionKind::Choice { .. }, Some((Answer::Choice { first, second }, _))) => {
                        choices.push(Choice {
                            first: first.clone(),
                            second: second.clone(),
                            intended: set.name(q.intended).to_string(),
                        });
                    }
                    _ => {}
                }
            }
        }
        let q: Vec<(u8, PairSide)> = likert.iter().map(|(s, p, _)| (*s, *p)).collect();
        let per_emotion = (0..self.config.n)
            .map(|e| {
                let name = set.name(e).to_string();
                let qs: Vec<(u8, PairSide)> = likert.iter().filter(|l| l.2 == e).map(|(s, p, _)| (*s, *p)).collect();
                let cs: Vec<Choice<String>> = choices.iter().filter(|c| c.intended == name).cloned().collect();
                EmotionScore {
                    quality: quality_score(&qs).ok(),
                    top1: topx_accuracy(&cs, 1).ok(),
                    top2: topx_accuracy(&cs, 2).ok(),
                    emotion: name,
                }
            })
            .collect();
        let aligned: Vec<f64> = likert.iter().map(|(s, p, _)| aligned_score(*s, *p) as f64).collect();
        SessionMetrics {
            status: self.status,
            labels: self.dataset().len(),
            likert_answered: likert.len(),
            choices_answered: choices.len(),
            quality: quality_score(&q).ok(),
            quality_se: (!aligned.is_empty()).then(|| mean_se(&aligned).1),
            top1: topx_accuracy(&choices, 1).ok(),
            top2: topx_accuracy(&choices, 2).ok(),
            per_emotion,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionScore {
    pub emotion: String,
    pub quality: Option<f64>,
    pub top1: Option<f64>,
    pub top2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub status: Status,
    pub labels: usize,
    pub likert_answered: usize,
    pub choices_answered: usize,
    pub quality: Option<f64>,
    pub quality_se: Option<f64>,
    pub top1: Option<f64>,
    pub top2: Option<f64>,
    pub per_emotion: Vec<EmotionScore>,
}

impl SessionMetrics {
    /// Scores of one metric for cross-session significance tests.
    pub fn scores(&self, metric: Metric) -> Option<SessionScores> {
        let pick = |q: Option<f64>, t1: Option<f64>, t2: Option<f64>| match metric {
            Metric::Quality => q,
            Metric::Top1 => t1,
            Metric::Top2 => t2,
        };
        let overall = pick(self.quality, self.top1, self.top2)?;
        let per_emotion =
            self.per_emotion.iter().filter_map(|e| pick(e.quality, e.top1, e.top2).map(|v| (e.emotion.clone(), v))).collect();
        Some(SessionScores { overall, per_emotion })
    }
}

fn model_from(cfg: &SessionConfig, ck: Option<&Checkpoint>) -> Result<StyleNet<f64>, NetError> {
    match ck {
        Some(c) => StyleNet::from_checkpoint(c),
        None => {
            let mut net = StyleNet::random(cfg.hidden[0], cfg.hidden[1], derive_seed(cfg.seed, &[stream::NET_INIT]));
            net.pool_net_mut().l1_weight = cfg.l1_weight;
            Ok(net)
        }
    }
}

/// The background work owed by a session in the `training` state: generate
/// the first round, or train on all labels and then generate the next round
/// or the evaluation questions. Deterministic given the session.
pub fn run_job(s: &Session) -> Result<Event, JobError> {
    if s.status != Status::Training {
        return Err(JobError::Idle(s.status));
    }
    let cfg = &s.config;
    let bounds = Bounds::default();
    let mut net = model_from(cfg, s.checkpoints.last())?;
    if !s.rounds.is_empty() {
        let data = s.dataset();
        let k = s.rounds.len() as u64;
        let (trained, _) = train(&net, &data, &cfg.train, derive_seed(cfg.seed, &[stream::NET_INIT, k]))?;
        net = trained;
    }
    if s.rounds.len() < cfg.k {
        let labels: Vec<Vad<f64>> = s.dataset().pairs.iter().map(|p| p.label).collect();
        let round =
            build_round(s.rounds.len() + 1, &net, &bounds, &cfg.cost, cfg.b, &labels, sample_lexicon(), cfg.seed)?;
        return Ok(Event::RoundReady { round, checkpoint: net.to_checkpoint() });
    }
    Ok(Event::EvalReady { checkpoint: net.to_checkpoint(), questions: eval_questions(cfg, &net, &bounds)? })
}

/// `N/2` Likert sets of `2M` questions, then `N*M` choice questions; order is
/// shuffled within each set and within the choice block.
pub fn eval_questions(cfg: &SessionConfig, net: &StyleNet<f64>, bounds: &Bounds<f64>) -> Result<Vec<EvalQuestion>, JobError> {
    let set = EvalEmotionSet::<f64>::shipped(cfg.n).expect("validated N");
    let mut items = eval_plan(cfg.n, cfg.m, cfg.seed, bounds);
    let mut rng = rng_from(derive_seed(cfg.seed, &[stream::EVAL_TASK, 2]));
    for chunk in items.chunks_mut(2 * cfg.m).take(cfg.n / 2) {
        chunk.shuffle(&mut rng);
    }
    items[cfg.n * cfg.m..].shuffle(&mut rng);
    let names: Vec<String> = set.names().map(String::from).collect();
    let mut out = Vec::with_capacity(items.len());
    for (index, item) in items.into_iter().enumerate() {
        let c = CostConfig {
            rng_seed: derive_seed(cfg.seed, &[stream::OPTIMIZER, stream::EVAL_TASK, index as u64]),
            ..cfg.cost.clone()
        };
        let r = optimize(&item.task, &set.anchor(item.emotion), net, &c).map_err(|source| JobError::Optimize { index, source })?;
        let question = match item.kind {
            EvalKind::Likert { pair, .. } => QuestionKind::Likert {
                set: pair,
                emotion_a: names[2 * pair].clone(),
                emotion_b: names[2 * pair + 1].clone(),
            },
            EvalKind::Choice => QuestionKind::Choice { options: names.clone() },
        };
        out.push(EvalQuestion { index, question, intended: item.emotion, task: item.task, trajectory: r.trajectory });
    }
    Ok(out)
}
