use serde::{Deserialize, Serialize};

use crate::ecg::Span;

/// Reserved tokens of the encoder vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub cls: String,
    pub sep: String,
    pub mask: String,
    pub pad: String,
    pub unk: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        SpecialTokens {
            cls: "[CLS]".into(),
            sep: "[SEP]".into(),
            mask: "[MASK]".into(),
            pad: "[PAD]".into(),
            unk: "[UNK]".into(),
        }
    }
}

impl SpecialTokens {
    pub fn all(&self) -> [&str; 5] {
        [&self.cls, &self.sep, &self.mask, &self.pad, &self.unk]
    }
}

/// A token together with the character span it covers in the source text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Piece {
    pub text: String,
    pub span: Span,
}

pub trait Tokenizer {
    fn specials(&self) -> &SpecialTokens;

    fn tokenize(&self, text: &str) -> Vec<Piece>;

    fn pieces(&self, text: &str) -> Vec<String> {
        self.tokenize(text).into_iter().map(|p| p.text).collect()
    }
}

/// Splits on whitespace, keeps alphanumeric runs together and emits every
/// other character as its own token. Special tokens are recognized verbatim.
#[derive(Clone, Debug, Default)]
pub struct WordTokenizer {
    pub specials: SpecialTokens,
    pub lowercase: bool,
}

impl WordTokenizer {
    pub fn new(specials: SpecialTokens, lowercase: bool) -> Self {
        WordTokenizer {
            specials,
            lowercase,
        }
    }
}

impl Tokenizer for WordTokenizer {
    fn specials(&self) -> &SpecialTokens {
        &self.specials
    }

    fn tokenize(&self, text: &str) -> Vec<Piece> {
        let chars: Vec<char> = text.chars().collect();
        let specials: Vec<Vec<char>> = self
            .specials
            .all()
            .iter()
            .map(|s| s.chars().collect())
            .collect();
        let mut out = Vec::new();
        let mut i = 0;
        'outer: while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() {
                i += 1;
                continue;
            }
            for special in &specials {
                if !special.is_empty() && chars[i..].starts_with(special) {
                    out.push(Piece {
                        text: special.iter().collect(),
                        span: Span::new(i, i + special.len()),
                    });
                    i += special.len();
                    continue 'outer;
                }
            }
            let start = i;
            if c.is_alphanumeric() {
                while i < chars.len() && chars[i].is_alphanumeric() {
                    i += 1;
                }
            } else {
                i += 1;
            }
            let raw: String = chars[start..i].iter().collect();
            let text = if self.lowercase {
                raw.to_lowercase()
            } else {
                raw
            };
            out.push(Piece {
                text,
                span: Span::new(start, i),
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_words_punctuation_and_specials() {
        let tok = WordTokenizer::default();
        let pieces = tok.tokenize("The [PAD] burned, twice.");
        let texts: Vec<&str> = pieces.iter().map(|p| p.text.as_str()).collect();
        assert_eq!(texts, ["The", "[PAD]", "burned", ",", "twice", "."]);
        assert_eq!(pieces[1].span, Span::new(4, 9));
        assert_eq!(pieces[2].span, Span::new(10, 16));
    }

    #[test]
    fn lowercases_but_keeps_specials() {
        let tok = WordTokenizer::new(SpecialTokens::default(), true);
        assert_eq!(tok.pieces("Riots [MASK]"), ["riots", "[MASK]"]);
    }
}
