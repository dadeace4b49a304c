//! Word-level vocabulary with per-character fallback.

use std::collections::{BTreeSet, HashMap};

use cgep_core::ecg::{CgepInstance, Span};
use cgep_core::linearize::CONNECTIVE;
use cgep_core::tokenize::{Piece, SpecialTokens, Tokenizer, WordTokenizer};
use serde::{Deserialize, Serialize};

/// Maps lowercased words to ids. Words outside the vocabulary are spelled
/// character by character; characters outside it become `[UNK]`.
#[derive(Clone, Debug)]
pub struct Vocab {
    words: WordTokenizer,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabRepr {
    specials: SpecialTokens,
    tokens: Vec<String>,
}

impl Serialize for Vocab {
    fn serialize<Ser: serde::Serializer>(&self, s: Ser) -> Result<Ser::Ok, Ser::Error> {
        VocabRepr {
            specials: self.words.specials.clone(),
            tokens: self.tokens.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = VocabRepr::deserialize(d)?;
        Ok(Vocab::from_tokens(r.specials, r.tokens))
    }
}

impl Vocab {
    pub fn from_tokens(specials: SpecialTokens, tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab {
            words: WordTokenizer::new(specials, true),
            tokens,
            index,
        }
    }

    /// Specials first, then every word and every character of `texts`, sorted.
    pub fn build<'a>(specials: SpecialTokens, texts: impl IntoIterator<Item = &'a str>) -> Self {
        let splitter = WordTokenizer::new(specials.clone(), true);
        let reserved: BTreeSet<&str> = specials.all().into_iter().collect();
        let mut seen = BTreeSet::new();
        for t in splitter.pieces(CONNECTIVE) {
            seen.insert(t);
        }
        for text in texts {
            for piece in splitter.pieces(text) {
                if reserved.contains(piece.as_str()) {
                    continue;
                }
                for c in piece.chars() {
                    seen.insert(c.to_string());
                }
                seen.insert(piece);
            }
        }
        let mut tokens: Vec<String> = specials.all().iter().map(|s| s.to_string()).collect();
        tokens.extend(seen);
        Vocab::from_tokens(specials, tokens)
    }

    /// Every text an instance can feed to an encoder.
    pub fn from_instances<'a>(
        specials: SpecialTokens,
        instances: impl IntoIterator<Item = &'a CgepInstance>,
    ) -> Self {
        let mut texts: BTreeSet<&str> = BTreeSet::new();
        for inst in instances {
            for n in &inst.graph.nodes {
                texts.insert(&n.sentence);
                texts.insert(&n.mention);
                texts.insert(&n.event_type);
            }
            for c in &inst.candidates {
                texts.insert(&c.sentence);
                texts.insert(&c.mention);
                texts.insert(&c.event_type);
            }
        }
        Vocab::build(specials, texts)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn unk_id(&self) -> usize {
        self.index[&self.words.specials.unk]
    }

    pub fn mask_id(&self) -> usize {
        self.index[&self.words.specials.mask]
    }

    pub fn cls_id(&self) -> usize {
        self.index[&self.words.specials.cls]
    }

    pub fn sep_id(&self) -> usize {
        self.index[&self.words.specials.sep]
    }

    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or_else(|| self.unk_id())
    }

    pub fn ids<T: AsRef<str>>(&self, tokens: &[T]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        self.ids(&self.pieces(text))
    }
}

impl Tokenizer for Vocab {
    fn specials(&self) -> &SpecialTokens {
        &self.words.specials
    }

    fn tokenize(&self, text: &str) -> Vec<Piece> {
        let mut out = Vec::new();
        for piece in self.words.tokenize(text) {
            if self.index.contains_key(&piece.text) {
                out.push(piece);
                continue;
            }
            for (k, c) in piece.text.chars().enumerate() {
                let start = piece.span.start + k;
                out.push(Piece {
                    text: c.to_string(),
                    span: Span::new(start, start + 1),
                });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unseen_words_fall_back_to_characters() {
        let v = Vocab::build(SpecialTokens::default(), ["Storm hit", "the city"]);
        assert_eq!(v.pieces("storm HIT"), ["storm", "hit"]);
        assert_eq!(v.pieces("mist"), ["m", "i", "s", "t"]);
        let ids = v.encode("[MASK] zq");
        assert_eq!(ids[0], v.mask_id());
        assert_eq!(ids[1], v.unk_id());
        assert!(v.get("causes").is_some());
        let spans: Vec<(usize, usize)> = v
            .tokenize("a mist")
            .iter()
            .map(|p| (p.span.start, p.span.end))
            .collect();
        assert_eq!(spans, [(0, 1), (2, 3), (3, 4), (4, 5), (5, 6)]);
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocab::build(SpecialTokens::default(), ["a b c"]);
        let back: Vocab = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back.tokens, v.tokens);
        assert_eq!(back.encode("b a"), v.encode("b a"));
    }
}
