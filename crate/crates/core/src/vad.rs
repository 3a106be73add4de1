//! Valence-arousal-dominance space, the emotion lexicon and the evaluation emotions.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::ops::{Add, Mul, Neg, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// Full word norms shipped with the crate, `word<TAB>V<TAB>A<TAB>D` in `[0, 1]`.
pub const SHIPPED_NORMS: &str = include_str!("../../../data/vad_norms.tsv");
/// Frozen curated word list, one word per line.
pub const CURATED_WORDS: &str = include_str!("../../../data/curated_words.txt");
/// Words with at least one basic-emotion association, the candidate pool for curation.
pub const EMOTIVE_WORDS: &str = include_str!("../../../data/emotive_words.txt");
/// Size of the curated lexicon.
pub const CURATED_SIZE: usize = 1672;

/// Canonical evaluation emotions. Consecutive pairs are diametric partners.
pub const EVAL_EMOTION_NAMES: [&str; 6] =
    ["sadness", "joy", "fear", "confidence", "anger", "patience"];

/// Reference corners of the evaluation emotions. Documentation only: the
/// anchors actually used are the lexicon values of the six words.
pub const EVAL_EMOTION_CORNERS: [[f64; 3]; 6] = [
    [-1.0, -1.0, -1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, -1.0],
    [1.0, -1.0, 1.0],
    [-1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
];

#[derive(Debug, Error)]
pub enum VadError {
    #[error("component {name} = {value} outside [-1, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("component {name} is not finite")]
    NonFinite { name: &'static str },
}

/// How out-of-range components are treated at construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RangePolicy {
    Clamp,
    Reject,
}

/// A point in the emotion space `[-1, 1]^3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Vad<T> {
    pub valence: T,
    pub arousal: T,
    pub dominance: T,
}

impl<T: Real> Vad<T> {
    pub fn new(valence: T, arousal: T, dominance: T, policy: RangePolicy) -> Result<Self, VadError> {
        let mut out = [valence, arousal, dominance];
        for (c, name) in out.iter_mut().zip(["valence", "arousal", "dominance"]) {
            if !c.is_finite() {
                return Err(VadError::NonFinite { name });
            }
            let inside = *c >= -T::one() && *c <= T::one();
            match policy {
                RangePolicy::Clamp => *c = c.max(-T::one()).min(T::one()),
                RangePolicy::Reject if !inside => {
                    return Err(VadError::OutOfRange { name, value: c.as_f64() })
                }
                RangePolicy::Reject => {}
            }
        }
        Ok(Self::from_array(out))
    }

    /// Clamping constructor; non-finite components become 0.
    pub fn clamped(valence: T, arousal: T, dominance: T) -> Self {
        let c = |x: T| if x.is_finite() { x.max(-T::one()).min(T::one()) } else { T::zero() };
        Self { valence: c(valence), arousal: c(arousal), dominance: c(dominance) }
    }

    pub fn origin() -> Self {
        Self { valence: T::zero(), arousal: T::zero(), dominance: T::zero() }
    }

    #[inline]
    pub fn from_array(a: [T; 3]) -> Self {
        Self { valence: a[0], arousal: a[1], dominance: a[2] }
    }

    #[inline]
    pub fn to_array(self) -> [T; 3] {
        [self.valence, self.arousal, self.dominance]
    }

    #[inline]
    pub fn distance_squared(&self, other: &Self) -> T {
        let d = *self - *other;
        d.dot(&d)
    }

    #[inline]
    pub fn distance(&self, other: &Self) -> T {
        self.distance_squared(other).sqrt()
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        self.valence * other.valence + self.arousal * other.arousal + self.dominance * other.dominance
    }

    pub fn in_cube(&self) -> bool {
        self.to_array().iter().all(|c| *c >= -T::one() && *c <= T::one())
    }

    pub fn cast<U: Real>(self) -> Vad<U> {
        Vad {
            valence: U::lit(self.valence.as_f64()),
            arousal: U::lit(self.arousal.as_f64()),
            dominance: U::lit(self.dominance.as_f64()),
        }
    }

    /// Arithmetic mean; `None` for an empty iterator.
    pub fn mean<'a, I>(points: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Vad<T>>,
    {
        let mut acc = [T::zero(); 3];
        let mut n = 0usize;
        for p in points {
            for (a, c) in acc.iter_mut().zip(p.to_array()) {
                *a += c;
            }
            n += 1;
        }
        (n > 0).then(|| {
            let inv = T::one() / T::from_usize_lossy(n);
            Self::from_array(acc.map(|a| a * inv))
        })
    }
}

impl<T: Real> Add for Vad<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::from_array([self.valence + o.valence, self.arousal + o.arousal, self.dominance + o.dominance])
    }
}

impl<T: Real> Sub for Vad<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::from_array([self.valence - o.valence, self.arousal - o.arousal, self.dominance - o.dominance])
    }
}

impl<T: Real> Mul<T> for Vad<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::from_array(self.to_array().map(|c| c * s))
    }
}

impl<T: Real> Neg for Vad<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_array(self.to_array().map(|c| -c))
    }
}

/// Component-wise negation: the point diametrically opposite through the origin.
pub fn diametric_partner<T: Real>(vad: Vad<T>) -> Vad<T> {
    -vad
}

/// Scale the raw lexicon values are stored in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawScale {
    /// Values in `[0, 1]`, mapped by `x -> 2x - 1`.
    UnitInterval,
    /// Values already in `[-1, 1]`.
    Signed,
}

impl RawScale {
    pub fn scale<T: Real>(self, x: T) -> T {
        match self {
            RawScale::UnitInterval => T::lit(2.0) * x - T::one(),
            RawScale::Signed => x,
        }
    }

    pub fn unscale<T: Real>(self, x: T) -> T {
        match self {
            RawScale::UnitInterval => (x + T::one()) / T::lit(2.0),
            RawScale::Signed => x,
        }
    }

    fn range(self) -> (f64, f64) {
        match self {
            RawScale::UnitInterval => (0.0, 1.0),
            RawScale::Signed => (-1.0, 1.0),
        }
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("io error reading lexicon: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("lexicon has no entries")]
    Empty,
    #[error("word {0:?} required by the evaluation set is missing from the lexicon")]
    MissingWord(String),
}

/// Word list with VAD values rescaled to `[-1, 1]^3`.
#[derive(Clone, Debug)]
pub struct EmotionLexicon<T> {
    entries: Vec<(String, Vad<T>)>,
    index: HashMap<String, usize>,
    duplicates: usize,
}

impl<T: Real> EmotionLexicon<T> {
    /// Builds from already-scaled entries; later duplicates are dropped.
    pub fn from_entries<I>(entries: I) -> Self
    where
        I: IntoIterator<Item = (String, Vad<T>)>,
    {
        let mut lex = Self { entries: Vec::new(), index: HashMap::new(), duplicates: 0 };
        for (word, vad) in entries {
            lex.push(word.to_lowercase(), vad);
        }
        lex
    }

    fn push(&mut self, word: String, vad: Vad<T>) {
        if self.index.contains_key(&word) {
            self.duplicates += 1;
            return;
        }
        self.index.insert(word.clone(), self.entries.len());
        self.entries.push((word, vad));
    }

    /// Parses the tab-separated format with a one-line header.
    pub fn parse<R: Read>(reader: R, raw_scale: RawScale) -> Result<Self, LexiconError> {
        let mut lex = Self { entries: Vec::new(), index: HashMap::new(), duplicates: 0 };
        let (lo, hi) = raw_scale.range();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(LexiconError::Parse {
                    line: lineno,
                    reason: format!("expected 4 tab-separated fields, found {}", fields.len()),
                });
            }
            let word = fields[0].trim().to_lowercase();
            if word.is_empty() {
                return Err(LexiconError::Parse { line: lineno, reason: "empty word".into() });
            }
            let mut vals = [T::zero(); 3];
            for (slot, raw) in vals.iter_mut().zip(&fields[1..]) {
                let x: f64 = raw.trim().parse().map_err(|_| LexiconError::Parse {
                    line: lineno,
                    reason: format!("cannot parse {raw:?} as a number"),
                })?;
                if !(lo..=hi).contains(&x) {
                    return Err(LexiconError::Parse {
                        line: lineno,
                        reason: format!("value {x} outside [{lo}, {hi}]"),
                    });
                }
                *slot = raw_scale.scale(T::lit(x));
            }
            lex.push(word, Vad::clamped(vals[0], vals[1], vals[2]));
        }
        if lex.entries.is_empty() {
            return Err(LexiconError::Empty);
        }
        if lex.duplicates > 0 {
            log::warn!("lexicon contained {} duplicate words; kept first occurrences", lex.duplicates);
        }
        Ok(lex)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of duplicate rows dropped while loading.
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    /// Case-folded exact lookup.
    pub fn get(&self, word: &str) -> Option<Vad<T>> {
        self.index.get(&word.to_lowercase()).map(|&i| self.entries[i].1)
    }

    pub fn entries(&self) -> &[(String, Vad<T>)] {
        &self.entries
    }

    pub fn points(&self) -> Vec<Vad<T>> {
        self.entries.iter().map(|(_, v)| *v).collect()
    }

    /// Keeps only the listed words, in lexicon order.
    pub fn restrict_to<'a, I>(&self, words: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let keep: HashSet<String> = words.into_iter().map(|w| w.trim().to_lowercase()).collect();
        Self::from_entries(
            self.entries.iter().filter(|(w, _)| keep.contains(w)).cloned(),
        )
    }

    /// Deterministic curation: words in both the lexicon and `emotive`, ranked by
    /// distance from the neutral origin (ties by word), top `size`, returned sorted.
    pub fn curate(&self, emotive: &HashSet<String>, size: usize) -> Vec<String> {
        let mut cand: Vec<(T, &str)> = self
            .entries
            .iter()
            .filter(|(w, _)| emotive.contains(w))
            .map(|(w, v)| (v.dot(v).sqrt(), w.as_str()))
            .collect();
        cand.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite").then_with(|| a.1.cmp(b.1)));
        let mut out: Vec<String> = cand.into_iter().take(size).map(|(_, w)| w.to_string()).collect();
        out.sort();
        out
    }
}

/// Reads the lexicon file at `path`.
pub fn load_lexicon<T: Real>(path: &Path, raw_scale: RawScale) -> Result<EmotionLexicon<T>, LexiconError> {
    let bytes = fs::read(path)?;
    EmotionLexicon::parse(bytes.as_slice(), raw_scale)
}

/// The full shipped norms.
pub fn shipped_norms<T: Real>() -> EmotionLexicon<T> {
    EmotionLexicon::parse(SHIPPED_NORMS.as_bytes(), RawScale::UnitInterval).expect("shipped norms parse")
}

/// The shipped curated lexicon (`CURATED_SIZE` words).
pub fn curated_lexicon<T: Real>() -> EmotionLexicon<T> {
    shipped_norms::<T>().restrict_to(word_list(CURATED_WORDS))
}

/// Non-empty trimmed lines of a word-list file.
pub fn word_list(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty())
}

/// The first `n` evaluation emotions with their lexicon anchors.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EvalEmotionSet<T> {
    emotions: Vec<(String, Vad<T>)>,
}

#[derive(Debug, Error)]
pub enum EvalSetError {
    #[error("evaluation set size must be 2, 4 or 6, got {0}")]
    BadSize(usize),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

impl<T: Real> EvalEmotionSet<T> {
    pub fn from_lexicon(lexicon: &EmotionLexicon<T>, n: usize) -> Result<Self, EvalSetError> {
        if !matches!(n, 2 | 4 | 6) {
            return Err(EvalSetError::BadSize(n));
        }
        let emotions = EVAL_EMOTION_NAMES[..n]
            .iter()
            .map(|name| {
                lexicon
                    .get(name)
                    .map(|v| (name.to_string(), v))
                    .ok_or_else(|| LexiconError::MissingWord(name.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { emotions })
    }

    /// Anchors from the shipped curated lexicon.
    pub fn shipped(n: usize) -> Result<Self, EvalSetError> {
        Self::from_lexicon(&curated_lexicon(), n)
    }

    pub fn len(&self) -> usize {
        self.emotions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.emotions.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.emotions.iter().map(|(n, _)| n.as_str())
    }

    pub fn name(&self, i: usize) -> &str {
        &self.emotions[i].0
    }

    pub fn anchor(&self, i: usize) -> Vad<T> {
        self.emotions[i].1
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.emotions.iter().position(|(n, _)| n == name)
    }

    pub fn emotions(&self) -> &[(String, Vad<T>)] {
        &self.emotions
    }

    /// Index of the diametric partner of emotion `i` (pairs are `(2j, 2j+1)`).
    pub fn partner_index(i: usize) -> usize {
        i ^ 1
    }

    /// Indices sorted by distance to `vad`; stable so ties keep set order.
    pub fn nearest_indices(&self, vad: &Vad<T>, count: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.emotions.len()).collect();
        idx.sort_by(|&a, &b| {
            let da = self.emotions[a].1.distance_squared(vad);
            let db = self.emotions[b].1.distance_squared(vad);
            da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
        });
        idx.truncate(count.clamp(1, self.emotions.len()));
        idx
    }
}

/// Names of the `count` evaluation emotions closest to `vad`, ascending by
/// Euclidean distance with ties broken by set order.
pub fn nearest_emotions<T: Real>(vad: &Vad<T>, set: &EvalEmotionSet<T>, count: usize) -> Vec<String> {
    set.nearest_indices(vad, count)
        .into_iter()
        .map(|i| set.name(i).to_string())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(a: f64, b: f64, c: f64) -> Vad<f64> {
        Vad::from_array([a, b, c])
    }

    #[test]
    fn unit_interval_rows_rescale() {
        let text = "word\tv\ta\td\nmid\t0.5\t0.5\t0.5\nends\t1.0\t0.0\t1.0\n";
        let lex: EmotionLexicon<f64> = EmotionLexicon::parse(text.as_bytes(), RawScale::UnitInterval).unwrap();
        assert_eq!(lex.get("mid").unwrap(), v(0.0, 0.0, 0.0));
        assert_eq!(lex.get("ends").unwrap(), v(1.0, -1.0, 1.0));
    }

    #[test]
    fn duplicates_keep_first() {
        let text = "h\nA\t0.5\t0.5\t0.5\na\t1\t1\t1\n";
        let lex: EmotionLexicon<f64> = EmotionLexicon::parse(text.as_bytes(), RawScale::UnitInterval).unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.duplicates(), 1);
        assert_eq!(lex.get("a").unwrap(), v(0.0, 0.0, 0.0));
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "h\nok\t0.1\t0.2\t0.3\nbad\t0.1\tx\t0.3\n";
        match EmotionLexicon::<f64>::parse(text.as_bytes(), RawScale::UnitInterval) {
            Err(LexiconError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let short = "h\nbad\t0.1\t0.3\n";
        assert!(matches!(
            EmotionLexicon::<f64>::parse(short.as_bytes(), RawScale::UnitInterval),
            Err(LexiconError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_file_is_error() {
        assert!(matches!(EmotionLexicon::<f64>::parse("".as_bytes(), RawScale::Signed), Err(LexiconError::Empty)));
        assert!(matches!(
            EmotionLexicon::<f64>::parse("word\tv\ta\td\n".as_bytes(), RawScale::Signed),
            Err(LexiconError::Empty)
        ));
    }

    #[test]
    fn spot_words_match_file() {
        // values copied by hand from data/vad_norms.tsv
        let lex = curated_lexicon::<f64>();
        let cases = [
            ("joy", [0.9560, 0.6381, 0.8553]),
            ("sadness", [0.1568, 0.1955, 0.3473]),
            ("patience", [0.7373, 0.2520, 0.8842]),
        ];
        for (w, raw) in cases {
            let got = lex.get(w).unwrap();
            let want = raw.map(|x| 2.0 * x - 1.0);
            for (g, e) in got.to_array().iter().zip(want) {
                assert!((g - e).abs() < 1e-12, "{w}: {g} vs {e}");
            }
        }
    }

    #[test]
    fn curated_lexicon_has_fixed_size() {
        let lex = curated_lexicon::<f64>();
        assert_eq!(lex.len(), CURATED_SIZE);
        for (w, vad) in lex.entries() {
            assert!(!w.is_empty() && *w == w.to_lowercase());
            assert!(vad.in_cube());
        }
    }

    #[test]
    fn curation_reproduces_frozen_list() {
        let norms = shipped_norms::<f64>();
        let emotive: HashSet<String> = word_list(EMOTIVE_WORDS).map(str::to_string).collect();
        let curated = norms.curate(&emotive, CURATED_SIZE);
        let frozen: Vec<String> = word_list(CURATED_WORDS).map(str::to_string).collect();
        assert_eq!(curated, frozen);
    }

    #[test]
    fn partner_examples() {
        assert_eq!(diametric_partner(v(-1.0, -1.0, -1.0)), v(1.0, 1.0, 1.0));
        assert_eq!(diametric_partner(v(0.0, 0.0, 0.0)), v(0.0, 0.0, 0.0));
        assert_eq!(diametric_partner(v(-1.0, 1.0, -1.0)), v(1.0, -1.0, 1.0));
    }

    #[test]
    fn reject_policy() {
        assert!(Vad::new(1.5, 0.0, 0.0, RangePolicy::Reject).is_err());
        assert_eq!(Vad::new(1.5, -3.0, 0.2, RangePolicy::Clamp).unwrap(), v(1.0, -1.0, 0.2));
        assert!(Vad::new(f64::NAN, 0.0, 0.0, RangePolicy::Clamp).is_err());
    }

    #[test]
    fn eval_set_order_and_sizes() {
        let set = EvalEmotionSet::<f64>::shipped(6).unwrap();
        assert_eq!(set.names().collect::<Vec<_>>(), EVAL_EMOTION_NAMES.to_vec());
        let four = EvalEmotionSet::<f64>::shipped(4).unwrap();
        assert_eq!(four.names().collect::<Vec<_>>(), EVAL_EMOTION_NAMES[..4].to_vec());
        assert!(EvalEmotionSet::<f64>::shipped(3).is_err());
    }

    #[test]
    fn nearest_examples() {
        let set = EvalEmotionSet::<f64>::shipped(6).unwrap();
        assert_eq!(nearest_emotions(&set.anchor(0), &set, 1), vec!["sadness"]);
        let two = EvalEmotionSet::<f64>::shipped(2).unwrap();
        assert_eq!(nearest_emotions(&v(1.0, 1.0, 1.0), &two, 2), vec!["joy", "sadness"]);

        // midpoint of fear and anger: both at equal distance d/2, all others farther
        let fear = set.anchor(2);
        let anger = set.anchor(4);
        let mid = (fear + anger) * 0.5;
        let half = fear.distance(&anger) / 2.0;
        assert!((mid.distance(&fear) - half).abs() < 1e-12);
        assert!((mid.distance(&anger) - half).abs() < 1e-12);
        let got = nearest_emotions(&mid, &set, 2);
        let mut sorted = got.clone();
        sorted.sort();
        assert_eq!(sorted, vec!["anger", "fear"]);
    }

    #[test]
    fn nearest_ties_follow_set_order() {
        let lex = EmotionLexicon::from_entries(
            EVAL_EMOTION_NAMES.iter().zip([
                v(-0.5, 0.0, 0.0),
                v(0.5, 0.0, 0.0),
                v(0.0, 0.5, 0.0),
                v(0.0, -0.5, 0.0),
                v(0.0, 0.0, 0.9),
                v(0.0, 0.0, -0.9),
            ]).map(|(n, v)| (n.to_string(), v)),
        );
        let set = EvalEmotionSet::from_lexicon(&lex, 6).unwrap();
        let got = nearest_emotions(&Vad::origin(), &set, 4);
        assert_eq!(got, vec!["sadness", "joy", "fear", "confidence"]);
    }

    fn arb_vad() -> impl Strategy<Value = Vad<f64>> {
        (-1.0f64..=1.0, -1.0f64..=1.0, -1.0f64..=1.0).prop_map(|(a, b, c)| v(a, b, c))
    }

    proptest! {
        #[test]
        fn rescale_round_trip(x in 0.0f64..=1.0) {
            let s = RawScale::UnitInterval;
            prop_assert!((s.unscale(s.scale(x)) - x).abs() < 1e-12);
        }

        #[test]
        fn partner_is_involution(p in arb_vad()) {
            prop_assert_eq!(diametric_partner(diametric_partner(p)), p);
        }

        #[test]
        fn full_ranking_is_permutation(p in arb_vad()) {
            let set = EvalEmotionSet::<f64>::shipped(6).unwrap();
            let mut got = nearest_emotions(&p, &set, 6);
            got.sort();
            let mut all: Vec<String> = EVAL_EMOTION_NAMES.iter().map(|s| s.to_string()).collect();
            all.sort();
            prop_assert_eq!(got, all);
        }
    }

    #[test]
    fn every_anchor_is_its_own_nearest() {
        for n in [2, 4, 6] {
            let set = EvalEmotionSet::<f64>::shipped(n).unwrap();
            for i in 0..n {
                assert_eq!(nearest_emotions(&set.anchor(i), &set, 1), vec![set.name(i).to_string()]);
            }
        }
    }
}
