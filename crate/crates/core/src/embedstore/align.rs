use log::warn;
use thiserror::Error;

use super::{EmbeddingDataset, LabeledCorpus, SentenceEmbedding};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignError {
    #[error("sentence {sentence}: embeddings have {embeddings} sentences, corpus has {corpus}")]
    SentenceCount { sentence: usize, embeddings: usize, corpus: usize },
    #[error("sentence {sentence}: {embeddings} embedded tokens but {corpus} labelled tokens")]
    TokenCount { sentence: usize, embeddings: usize, corpus: usize },
    #[error("sentence {sentence}: tag `{tag}` is not in the tagset")]
    UnknownTag { sentence: usize, tag: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSentence {
    pub embedding: SentenceEmbedding,
    pub tags: Vec<usize>,
}

/// Embeddings paired with tag indices into `tagset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub num_layers: usize,
    pub dim: usize,
    pub tagset: Vec<String>,
    pub sentences: Vec<AlignedSentence>,
    /// Number of token positions whose surface strings differ between the two inputs.
    pub token_mismatches: usize,
}

impl AlignedDataset {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(|s| s.tags.len()).sum()
    }
}

/// Pairs embeddings with the corpus, mapping tags through `corpus.tagset()`.
pub fn align(embeddings: EmbeddingDataset, corpus: &LabeledCorpus) -> Result<AlignedDataset, AlignError> {
    align_with_tagset(embeddings, corpus, corpus.tagset())
}

/// Like [`align`] but indexes tags through a caller-supplied tagset, so that
/// train/dev/test splits share one index space.
///
/// Only counts are checked; differing token strings are logged, not rejected.
pub fn align_with_tagset(
    embeddings: EmbeddingDataset,
    corpus: &LabeledCorpus,
    tagset: &[String],
) -> Result<AlignedDataset, AlignError> {
    let (num_layers, dim) = (embeddings.num_layers(), embeddings.dim());
    if embeddings.len() != corpus.len() {
        return Err(AlignError::SentenceCount {
            sentence: embeddings.len().min(corpus.len()),
            embeddings: embeddings.len(),
            corpus: corpus.len(),
        });
    }
    for (i, (e, c)) in embeddings.sentences().iter().zip(corpus.sentences()).enumerate() {
        if e.len() != c.tags.len() {
            return Err(AlignError::TokenCount { sentence: i, embeddings: e.len(), corpus: c.tags.len() });
        }
    }

    let mut token_mismatches = 0;
    let mut sentences = Vec::with_capacity(corpus.len());
    for (i, (embedding, labeled)) in embeddings.into_sentences().into_iter().zip(corpus.sentences()).enumerate() {
        let mismatched = embedding.tokens().iter().zip(&labeled.tokens).filter(|(a, b)| a != b).count();
        if mismatched > 0 {
            warn!("sentence {i}: {mismatched} token strings differ between embeddings and corpus");
            token_mismatches += mismatched;
        }
        let tags = labeled
            .tags
            .iter()
            .map(|t| {
                tagset
                    .iter()
                    .position(|s| s == t)
                    .ok_or_else(|| AlignError::UnknownTag { sentence: i, tag: t.clone() })
            })
            .collect::<Result<Vec<_>, _>>()?;
        sentences.push(AlignedSentence { embedding, tags });
    }
    Ok(AlignedDataset { num_layers, dim, tagset: tagset.to_vec(), sentences, token_mismatches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedstore::{parse_conll, TagScheme};

    fn embeddings(lengths: &[usize]) -> EmbeddingDataset {
        let mut d = EmbeddingDataset::new(2, 3).unwrap();
        for (s, &n) in lengths.iter().enumerate() {
            let tokens = (0..n).map(|i| format!("w{s}_{i}")).collect();
            d.push(SentenceEmbedding::new(tokens, 2, 3, vec![0.25; 2 * n * 3]).unwrap()).unwrap();
        }
        d
    }

    #[test]
    fn matching_inputs() {
        let (c, _) = parse_conll("w0_0\tA\nw0_1\tB\n\nw1_0\tB\n", TagScheme::Plain).unwrap();
        let a = align(embeddings(&[2, 1]), &c).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.sentences[0].tags, [0, 1]);
        assert_eq!(a.sentences[1].tags, [1]);
        assert_eq!(a.token_mismatches, 0);
    }

    #[test]
    fn token_count_mismatch_names_sentence() {
        let (c, _) = parse_conll("a\tA\nb\tB\n\nc\tB\n", TagScheme::Plain).unwrap();
        let err = align(embeddings(&[2, 2]), &c).unwrap_err();
        assert_eq!(err, AlignError::TokenCount { sentence: 1, embeddings: 2, corpus: 1 });
    }

    #[test]
    fn sentence_count_mismatch() {
        let (c, _) = parse_conll("a\tA\n", TagScheme::Plain).unwrap();
        let err = align(embeddings(&[1, 1]), &c).unwrap_err();
        assert_eq!(err, AlignError::SentenceCount { sentence: 1, embeddings: 2, corpus: 1 });
    }

    #[test]
    fn empty_inputs() {
        let (c, _) = parse_conll("", TagScheme::Plain).unwrap();
        let a = align(embeddings(&[]), &c).unwrap();
        assert!(a.is_empty());
    }

    #[test]
    fn string_mismatch_is_only_counted() {
        let (c, _) = parse_conll("x\tA\ny\tA\n", TagScheme::Plain).unwrap();
        let a = align(embeddings(&[2]), &c).unwrap();
        assert_eq!(a.token_mismatches, 2);
    }

    #[test]
    fn shared_tagset_indexing() {
        let (c, _) = parse_conll("a\tB\n", TagScheme::Plain).unwrap();
        let tagset = vec!["A".to_string(), "B".to_string()];
        let a = align_with_tagset(embeddings(&[1]), &c, &tagset).unwrap();
        assert_eq!(a.sentences[0].tags, [1]);
        let err = align_with_tagset(embeddings(&[1]), &c, &tagset[..1]).unwrap_err();
        assert!(matches!(err, AlignError::UnknownTag { sentence: 0, .. }));
    }
}
