//! Tokenization, vocabularies and bag-of-n-grams features.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{FeatureBlockLayout, SparseVec};
use crate::dataset::Sample;
use crate::error::{Error, Result};

/// Lowercases and splits on maximal runs of non-alphanumeric code points.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NgramOrder {
    #[default]
    Unigram,
    /// Unigrams plus adjacent-token bigrams (joined by a single space).
    Bigram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    #[default]
    Counts,
    TfIdf,
}

/// Terms of one document, in order of appearance (with repeats).
pub fn terms(text: &str, ngram: NgramOrder) -> Vec<String> {
    let toks = tokenize(text);
    let mut out = toks.clone();
    if ngram == NgramOrder::Bigram {
        out.extend(toks.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    pub min_df: usize,
    pub ngram: NgramOrder,
    /// Smoothed inverse document frequencies, present when tf-idf weighting is on.
    pub idf: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    min_df: usize,
    ngram: NgramOrder,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    idf: Option<Vec<f64>>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let index = r
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens: r.tokens,
            index,
            min_df: r.min_df,
            ngram: r.ngram,
            idf: r.idf,
        }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            min_df: v.min_df,
            ngram: v.ngram,
            idf: v.idf,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Text block as sparse `(index, weight)` pairs sorted by index.
    pub(crate) fn encode(&self, text: &str) -> Vec<(usize, f64)> {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for t in terms(text, self.ngram) {
            if let Some(i) = self.get(&t) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut out: Vec<(usize, f64)> = counts.into_iter().collect();
        out.sort_unstable_by_key(|&(i, _)| i);
        if let Some(idf) = &self.idf {
            for (i, v) in &mut out {
                *v *= idf[*i];
            }
        }
        out
    }
}

/// Unigram vocabulary with count weighting.
pub fn build_vocab<S: AsRef<str>>(texts: &[S], min_df: usize) -> Result<Vocabulary> {
    build_vocab_with(texts, min_df, NgramOrder::Unigram, Weighting::Counts)
}

/// Keeps terms that occur in at least `min_df` documents, indexed in order of
/// first appearance.
pub fn build_vocab_with<S: AsRef<str>>(
    texts: &[S],
    min_df: usize,
    ngram: NgramOrder,
    weighting: Weighting,
) -> Result<Vocabulary> {
    if min_df == 0 {
        return Err(Error::InvalidConfig("min_df must be at least 1".into()));
    }
    let mut first_seen: Vec<String> = Vec::new();
    let mut df: HashMap<String, usize> = HashMap::new();
    for text in texts {
        let mut seen_here = HashSet::new();
        for t in terms(text.as_ref(), ngram) {
            if seen_here.insert(t.clone()) {
                let e = df.entry(t.clone()).or_insert(0);
                if *e == 0 {
                    first_seen.push(t);
                }
                *e += 1;
            }
        }
    }
    let tokens: Vec<String> = first_seen.into_iter().filter(|t| df[t] >= min_df).collect();
    if tokens.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let idf = (weighting == Weighting::TfIdf).then(|| {
        let n = texts.len() as f64;
        tokens
            .iter()
            .map(|t| ((1.0 + n) / (1.0 + df[t] as f64)).ln() + 1.0)
            .collect()
    });
    let index = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Ok(Vocabulary {
        tokens,
        index,
        min_df,
        ngram,
        idf,
    })
}

/// Dense concatenated feature vector: text counts, then audio, then video.
pub fn featurize(
    sample: &Sample,
    vocab: &Vocabulary,
    layout: &FeatureBlockLayout,
) -> Result<Vec<f64>> {
    Ok(featurize_sparse(sample, vocab, layout)?.to_dense(layout.total()))
}

pub(crate) fn featurize_sparse(
    sample: &Sample,
    vocab: &Vocabulary,
    layout: &FeatureBlockLayout,
) -> Result<SparseVec> {
    if layout.text_dim != vocab.len() {
        return Err(Error::FeatureLength {
            expected: layout.text_dim,
            found: vocab.len(),
        });
    }
    let mut v = SparseVec::default();
    for (i, x) in vocab.encode(&sample.text) {
        v.push(i, x);
    }
    for (block, offset, dim) in [
        (&sample.audio, layout.audio_offset(), layout.audio_dim),
        (&sample.video, layout.video_offset(), layout.video_dim),
    ] {
        if dim == 0 {
            continue;
        }
        if block.len() != dim {
            return Err(Error::FeatureLength {
                expected: dim,
                found: block.len(),
            });
        }
        for (k, &x) in block.iter().enumerate() {
            if x != 0.0 {
                v.push(offset + k, x);
            }
        }
    }
    Ok(v)
}
