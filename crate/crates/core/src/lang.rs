//! Text to VAD: direct lexicon lookup for single words, token averaging for
//! phrases.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::vad::{EmotionLexicon, Vad};

/// Name of the resolver that produced a [`TextVad`].
pub const LEXICON_MEAN_PROVIDER: &str = "lexicon_mean";

/// A resolved phrase: its VAD, the tokens that matched, and the resolver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TextVad<T> {
    pub vad: Vad<T>,
    pub matched: Vec<String>,
    pub provider: String,
}

/// Case-folded exact lookup. `None` if the word is absent.
pub fn word_to_vad<T: Real>(word: &str, lexicon: &EmotionLexicon<T>) -> Option<Vad<T>> {
    lexicon.get(word.trim())
}

/// Splits on anything that is not a letter (apostrophes and hyphens too).
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphabetic()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

/// Mean VAD of every token found in `lexicon`. `None` when nothing matches.
pub fn phrase_to_vad<T: Real>(text: &str, lexicon: &EmotionLexicon<T>) -> Option<TextVad<T>> {
    let mut matched = Vec::new();
    let mut points = Vec::new();
    for tok in tokenize(text) {
        if let Some(v) = lexicon.get(&tok) {
            points.push(v);
            matched.push(tok);
        }
    }
    let vad = Vad::mean(points.iter())?;
    Some(TextVad { vad, matched, provider: LEXICON_MEAN_PROVIDER.to_string() })
}
