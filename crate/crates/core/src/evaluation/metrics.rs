//! Likert quality, Top-X accuracy and t-tests against chance.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

/// Which end of a diametric pair an evaluation trajectory was optimized for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairSide {
    A,
    B,
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no responses")]
    Empty,
    #[error("Likert response {index} is {value}, outside 1..=7")]
    LikertRange { index: usize, value: u8 },
    #[error("Top-X accuracy is defined for X = 1 or 2, got {0}")]
    TopX(usize),
    #[error("significance test needs at least 2 sessions, got {0}")]
    TooFewSessions(usize),
    #[error("significance level must lie in (0, 1), got {0}")]
    Level(f64),
}

/// Alignment of a Likert answer with the intended emotion: `s` for B, `8 - s` for A.
pub fn aligned_score(s: u8, side: PairSide) -> u8 {
    match side {
        PairSide::B => s,
        PairSide::A => 8 - s,
    }
}

/// Mean aligned score over `responses`, in `[1, 7]`.
pub fn quality_score(responses: &[(u8, PairSide)]) -> Result<f64, MetricError> {
    if responses.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut sum = 0u64;
    for (index, &(s, side)) in responses.iter().enumerate() {
        if !(1..=7).contains(&s) {
            return Err(MetricError::LikertRange { index, value: s });
        }
        sum += aligned_score(s, side) as u64;
    }
    Ok(sum as f64 / responses.len() as f64)
}

/// Top choice, second choice and intended emotion of one choice item.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Choice<E> {
    pub first: E,
    pub second: E,
    pub intended: E,
}

impl<E: PartialEq> Choice<E> {
    pub fn hit(&self, x: usize) -> bool {
        self.first == self.intended || (x == 2 && self.second == self.intended)
    }
}

/// Fraction of items whose intended emotion is among the top `x` choices.
pub fn topx_accuracy<E: PartialEq>(choices: &[Choice<E>], x: usize) -> Result<f64, MetricError> {
    if x != 1 && x != 2 {
        return Err(MetricError::TopX(x));
    }
    if choices.is_empty() {
        return Err(MetricError::Empty);
    }
    let hits = choices.iter().filter(|c| c.hit(x)).count();
    Ok(hits as f64 / choices.len() as f64)
}

/// Chance level of each metric with `n` evaluation emotions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Quality,
    Top1,
    Top2,
}

impl Metric {
    pub fn chance(self, n: usize) -> f64 {
        match self {
            Metric::Quality => 4.0,
            Metric::Top1 => 1.0 / n as f64,
            Metric::Top2 => 2.0 / n as f64,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Metric::Quality => "quality",
            Metric::Top1 => "top1",
            Metric::Top2 => "top2",
        }
    }
}

/// Sample mean and standard error of the mean (0 for a single value).
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    pub chance: f64,
    pub t: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub reject: bool,
}

/// Two-sided one-sample t-test of `values` against `mu`. With zero variance
/// the test is degenerate: p = 1 at the null, p = 0 away from it.
pub fn one_sample_t(label: &str, values: &[f64], mu: f64, level: f64) -> Result<TTest, MetricError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricError::Level(level));
    }
    let n = values.len();
    if n < 2 {
        return Err(MetricError::TooFewSessions(n));
    }
    let (mean, se) = mean_se(values);
    let (t, p) = if se == 0.0 {
        if mean == mu {
            (0.0, 1.0)
        } else {
            ((mean - mu).signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = (mean - mu) / se;
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("n >= 2 gives positive freedom");
        (t, 2.0 * dist.cdf(-t.abs()))
    };
    Ok(TTest { label: label.to_string(), n, mean, chance: mu, t, p, reject: p < level })
}

/// One session's (or seed's) metric values: overall and per emotion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionScores {
    pub overall: f64,
    pub per_emotion: Vec<(String, f64)>,
}

/// t-tests of per-session means against chance: the overall value first,
/// then one per emotion (in the order of the first session).
pub fn significance_vs_random(
    sessions: &[SessionScores],
    metric: Metric,
    n: usize,
    level: f64,
) -> Result<Vec<TTest>, MetricError> {
    if sessions.len() < 2 {
        return Err(MetricError::TooFewSessions(sessions.len()));
    }
    let chance = metric.chance(n);
    let overall: Vec<f64> = sessions.iter().map(|s| s.overall).collect();
    let mut out = vec![one_sample_t("overall", &overall, chance, level)?];
    for (name, _) in &sessions[0].per_emotion {
        let vals: Vec<f64> = sessions
            .iter()
            .filter_map(|s| s.per_emotion.iter().find(|(e, _)| e == name).map(|(_, v)| *v))
            .collect();
        if vals.len() >= 2 {
            out.push(one_sample_t(name, &vals, chance, level)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quality_examples() {
        let perfect: Vec<_> = (0..5).map(|_| (7, PairSide::B)).chain((0..5).map(|_| (1, PairSide::A))).collect();
        assert_eq!(quality_score(&perfect), Ok(7.0));
        assert_eq!(quality_score(&[(2, PairSide::A)]), Ok(6.0));
        assert_eq!(quality_score(&[]), Err(MetricError::Empty));
        assert_eq!(quality_score(&[(4, PairSide::A), (8, PairSide::B)]), Err(MetricError::LikertRange { index: 1, value: 8 }));
        assert!(quality_score(&[(0, PairSide::A)]).is_err());
    }

    #[test]
    fn random_responses_average_four() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r: Vec<_> = (0..200_000)
            .map(|_| (rng.gen_range(1..=7u8), if rng.gen() { PairSide::A } else { PairSide::B }))
            .collect();
        assert!((quality_score(&r).unwrap() - 4.0).abs() < 0.02);
    }

    #[test]
    fn topx_examples() {
        let c: Vec<_> = (0..4).map(|i| Choice { first: i, second: i + 1, intended: i }).collect();
        assert_eq!(topx_accuracy(&c, 1), Ok(1.0));
        assert_eq!(topx_accuracy(&c, 2), Ok(1.0));
        assert_eq!(topx_accuracy(&c, 3), Err(MetricError::TopX(3)));
        let miss = [Choice { first: "joy", second: "fear", intended: "fear" }];
        assert_eq!(topx_accuracy(&miss, 1), Ok(0.0));
        assert_eq!(topx_accuracy(&miss, 2), Ok(1.0));
    }

    #[test]
    fn random_chooser_is_at_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c: Vec<_> = (0..120_000)
            .map(|_| {
                let first = rng.gen_range(0..6);
                let mut second = rng.gen_range(0..5);
                if second >= first {
                    second += 1;
                }
                Choice { first, second, intended: rng.gen_range(0..6) }
            })
            .collect();
        assert!((topx_accuracy(&c, 1).unwrap() - 1.0 / 6.0).abs() < 0.01);
        assert!((topx_accuracy(&c, 2).unwrap() - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn t_statistic_matches_hand_calculation() {
        // mean 5, sample sd 1, se 1/sqrt(3): t = (5 - 4) * sqrt(3)
        let r = one_sample_t("q", &[4.0, 5.0, 6.0], 4.0, 0.05).unwrap();
        assert!((r.t - 3f64.sqrt()).abs() < 1e-12);
        // two-sided p for t = sqrt(3), 2 dof: 1 - t / sqrt(t^2 + 2)
        let want = 1.0 - 3f64.sqrt() / 5f64.sqrt();
        assert!((r.p - want).abs() < 1e-9, "{} vs {want}", r.p);
        assert!(!r.reject);
    }

    #[test]
    fn chance_sessions_do_not_reject_and_ceiling_does() {
        let at = |v: f64| SessionScores { overall: v, per_emotion: vec![("joy".into(), v)] };
        let flat = significance_vs_random(&[at(4.0), at(4.0), at(4.0)], Metric::Quality, 6, 0.05).unwrap();
        assert!(flat.iter().all(|t| t.p == 1.0 && !t.reject));
        let top = significance_vs_random(&[at(7.0), at(7.0)], Metric::Quality, 6, 0.05).unwrap();
        assert!(top.iter().all(|t| t.reject));
        assert_eq!(top.len(), 2);
        assert_eq!(
            significance_vs_random(&[at(7.0)], Metric::Quality, 6, 0.05),
            Err(MetricError::TooFewSessions(1))
        );
    }

    #[test]
    fn chance_levels() {
        assert_eq!(Metric::Quality.chance(2), 4.0);
        assert_eq!(Metric::Top1.chance(4), 0.25);
        assert_eq!(Metric::Top2.chance(6), 1.0 / 3.0);
    }

    proptest! {
        #[test]
        fn top2_never_below_top1(v in proptest::collection::vec((0u8..6, 0u8..6, 0u8..6), 1..50)) {
            let c: Vec<_> = v.into_iter().map(|(first, second, intended)| Choice { first, second, intended }).collect();
            prop_assert!(topx_accuracy(&c, 2).unwrap() >= topx_accuracy(&c, 1).unwrap());
        }

        #[test]
        fn quality_is_in_range(v in proptest::collection::vec((1u8..=7, any::<bool>()), 1..50)) {
            let r: Vec<_> = v.into_iter().map(|(s, b)| (s, if b { PairSide::B } else { PairSide::A })).collect();
            let q = quality_score(&r).unwrap();
            prop_assert!((1.0..=7.0).contains(&q));
        }
    }
}
