//! Tag-word dictionary and binary bag-of-words encoding.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::Vector;

/// Default dictionary size: the most frequent tag words of the corpus.
pub const DEFAULT_VOCAB_SIZE: usize = 4000;

/// Normalizes one tag token: lowercase, trimmed. No stemming.
pub fn normalize_token(token: &str) -> String {
    token.trim().to_lowercase()
}

/// Ordered dictionary of distinct tokens. Word order is descending corpus
/// frequency with lexicographic tie-breaking, so rebuilding on the same
/// corpus always yields the same dictionary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds the dictionary of the `size` most frequent normalized tokens.
    pub fn build<I, T>(corpus: I, size: usize) -> Result<Vocabulary>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[String]>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for tags in corpus {
            for tag in tags.as_ref() {
                let norm = normalize_token(tag);
                if !norm.is_empty() {
                    *counts.entry(norm).or_insert(0) += 1;
                }
            }
        }
        if counts.is_empty() {
            return Err(Error::Validation(
                "vocabulary corpus is empty after normalization".into(),
            ));
        }
        let mut pairs: Vec<(String, u64)> = counts.into_iter().collect();
        pairs.sort_by(|(wa, ca), (wb, cb)| cb.cmp(ca).then_with(|| wa.cmp(wb)));
        pairs.truncate(size);
        Ok(Vocabulary::from_words(
            pairs.into_iter().map(|(w, _)| w).collect(),
        ))
    }

    fn from_words(words: Vec<String>) -> Vocabulary {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { words, index }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Writes the dictionary as plain text, one word per line; the line
    /// number is the word's index.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut body = String::new();
        for w in &self.words {
            body.push_str(w);
            body.push('\n');
        }
        fs::write(path, body)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let body = fs::read_to_string(path)?;
        let words: Vec<String> = body.lines().map(|l| l.to_string()).collect();
        if words.is_empty() {
            return Err(Error::Validation(format!(
                "vocabulary file {} is empty",
                path.display()
            )));
        }
        let mut seen = HashMap::new();
        for (i, w) in words.iter().enumerate() {
            if seen.insert(w.clone(), i).is_some() {
                return Err(Error::Validation(format!(
                    "vocabulary file {} has duplicate word '{w}'",
                    path.display()
                )));
            }
        }
        Ok(Vocabulary::from_words(words))
    }
}

/// Binary presence vector over a vocabulary. Duplicated tags collapse to a
/// single 1; out-of-vocabulary tags are ignored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BowVector {
    bits: Vec<u8>,
}

impl BowVector {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Number of set bits; for the replicated softmax this is the word count
    /// M of the encoded tag set.
    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|b| **b == 1).count()
    }

    pub fn to_dense(&self) -> Vector {
        Vector::from_iter(self.bits.iter().map(|b| *b as f64))
    }
}

/// Encodes a tag list against a vocabulary with 1-of-N coding.
pub fn encode_bow<T: AsRef<str>>(tags: &[T], vocab: &Vocabulary) -> Result<BowVector> {
    if vocab.is_empty() {
        return Err(Error::Validation("encode_bow: empty vocabulary".into()));
    }
    let mut bits = vec![0u8; vocab.len()];
    for tag in tags {
        let norm = normalize_token(tag.as_ref());
        if let Some(i) = vocab.index_of(&norm) {
            bits[i] = 1;
        }
    }
    Ok(BowVector { bits })
}
