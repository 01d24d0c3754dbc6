//! Multi-layer token embeddings, labelled corpora, and the alignment between them.
//!
//! Embeddings live in the MLEB binary format ([`mleb`]); gold tags live in
//! two-column CoNLL text files ([`conll`]). [`align`] pairs them up into an
//! [`AlignedDataset`] ready for training.

mod align;
mod conll;
mod mleb;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ShapeError};

pub use self::align::{align, align_with_tagset, AlignError, AlignedDataset, AlignedSentence};
pub use self::conll::{load_conll, parse_conll, write_conll, BioRepair, ConllError};
pub use self::mleb::{
    decode_embeddings, encode_embeddings, load_embeddings, write_embeddings, FormatError, HEADER_LEN,
    MAGIC, VERSION,
};

/// The per-token layer stack of one sentence.
///
/// `data` is laid out layer-major, then token-major, then dimension, which is
/// also the on-disk payload order.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEmbedding {
    tokens: Vec<String>,
    num_layers: usize,
    dim: usize,
    data: Vec<f32>,
}

impl SentenceEmbedding {
    pub fn new(tokens: Vec<String>, num_layers: usize, dim: usize, data: Vec<f32>) -> Result<Self, FormatError> {
        ShapeError::check("sentence embedding payload", num_layers * tokens.len() * dim, data.len())?;
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFiniteValue { index });
        }
        Ok(Self { tokens, num_layers, dim, data })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Vector of `layer` at token position `token`.
    pub fn vector(&self, layer: usize, token: usize) -> &[f32] {
        let n = self.tokens.len();
        let start = (layer * n + token) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// Mutable vector of `layer` at token position `token`.
    pub fn vector_mut(&mut self, layer: usize, token: usize) -> &mut [f32] {
        let n = self.tokens.len();
        let start = (layer * n + token) * self.dim;
        &mut self.data[start..start + self.dim]
    }

    /// The `L x D` layer matrix of one token, widened to `f64`.
    pub fn token_layers(&self, token: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_layers * self.dim);
        for layer in 0..self.num_layers {
            out.extend(self.vector(layer, token).iter().map(|&v| f64::from(v)));
        }
        out
    }
}

/// An ordered collection of sentences that all share `(num_layers, dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    num_layers: usize,
    dim: usize,
    sentences: Vec<SentenceEmbedding>,
}

impl EmbeddingDataset {
    pub fn new(num_layers: usize, dim: usize) -> Result<Self, ConfigError> {
        if num_layers == 0 {
            return Err(ConfigError::new("layers", "must be at least 1"));
        }
        if dim == 0 {
            return Err(ConfigError::new("dim", "must be at least 1"));
        }
        Ok(Self { num_layers, dim, sentences: Vec::new() })
    }

    pub fn push(&mut self, sentence: SentenceEmbedding) -> Result<(), ShapeError> {
        ShapeError::check("sentence layer count", self.num_layers, sentence.num_layers)?;
        ShapeError::check("sentence dimension", self.dim, sentence.dim)?;
        self.sentences.push(sentence);
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sentences(&self) -> &[SentenceEmbedding] {
        &self.sentences
    }

    pub fn sentences_mut(&mut self) -> &mut [SentenceEmbedding] {
        &mut self.sentences
    }

    pub fn into_sentences(self) -> Vec<SentenceEmbedding> {
        self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(SentenceEmbedding::len).sum()
    }
}

/// Tag encoding of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagScheme {
    /// `O`, `B-X`, `I-X` chunk tags.
    Bio,
    /// Opaque per-token labels.
    Plain,
}

impl FromStr for TagScheme {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bio" => Ok(TagScheme::Bio),
            "plain" => Ok(TagScheme::Plain),
            other => Err(ConfigError::new("tag_scheme", format!("expected `bio` or `plain`, got `{other}`"))),
        }
    }
}

impl fmt::Display for TagScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagScheme::Bio => "bio",
            TagScheme::Plain => "plain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

/// Sentences with gold tags. The tagset is kept in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    sentences: Vec<LabeledSentence>,
    tagset: Vec<String>,
    scheme: TagScheme,
}

impl LabeledCorpus {
    /// Builds a corpus and its tagset. BIO tags must already be well formed;
    /// use [`parse_conll`] for repair of raw input.
    pub fn new(sentences: Vec<LabeledSentence>, scheme: TagScheme) -> Result<Self, ConllError> {
        let mut tagset: Vec<String> = Vec::new();
        for (i, s) in sentences.iter().enumerate() {
            if s.tokens.len() != s.tags.len() {
                return Err(ConllError::Length { sentence: i, tokens: s.tokens.len(), tags: s.tags.len() });
            }
            for tag in &s.tags {
                if scheme == TagScheme::Bio && conll::split_bio(tag).is_none() {
                    return Err(ConllError::BadTag { line: 0, tag: tag.clone() });
                }
                if !tagset.contains(tag) {
                    tagset.push(tag.clone());
                }
            }
        }
        Ok(Self { sentences, tagset, scheme })
    }

    /// Like [`LabeledCorpus::new`] but with an explicit tagset, which must
    /// cover every tag used. Tags in the set need not occur in the corpus.
    pub fn with_tagset(sentences: Vec<LabeledSentence>, tagset: Vec<String>, scheme: TagScheme) -> Result<Self, ConllError> {
        let built = Self::new(sentences, scheme)?;
        if let Some(missing) = built.tagset.iter().find(|t| !tagset.contains(t)) {
            return Err(ConllError::BadTag { line: 0, tag: missing.clone() });
        }
        Ok(Self { tagset, ..built })
    }

    pub fn sentences(&self) -> &[LabeledSentence] {
        &self.sentences
    }

    pub fn tagset(&self) -> &[String] {
        &self.tagset
    }

    pub fn scheme(&self) -> TagScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }
}
