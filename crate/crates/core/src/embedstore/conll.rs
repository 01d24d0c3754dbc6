//! Two-column CoNLL reader and writer (`token<TAB>tag`, blank line between sentences).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use thiserror::Error;

use super::{LabeledCorpus, LabeledSentence, TagScheme};
use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConllError {
    #[error("line {line}: expected 2 tab-separated fields, found {found}")]
    Fields { line: usize, found: usize },
    #[error("line {line}: `{tag}` is not a BIO tag (O, B-X or I-X)")]
    BadTag { line: usize, tag: String },
    #[error("sentence {sentence}: {tokens} tokens but {tags} tags")]
    Length { sentence: usize, tokens: usize, tags: usize },
}

/// An `I-X` tag with no open `X` chunk that was rewritten to `B-X`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BioRepair {
    pub line: usize,
    pub sentence: usize,
    pub position: usize,
    pub original: String,
    pub repaired: String,
}

/// Splits a BIO tag into its prefix (`'O'`, `'B'` or `'I'`) and chunk type.
pub(crate) fn split_bio(tag: &str) -> Option<(char, &str)> {
    if tag == "O" {
        return Some(('O', ""));
    }
    let (prefix, label) = tag.split_at_checked(2)?;
    match prefix {
        "B-" if !label.is_empty() => Some(('B', label)),
        "I-" if !label.is_empty() => Some(('I', label)),
        _ => None,
    }
}

pub fn parse_conll(text: &str, scheme: TagScheme) -> Result<(LabeledCorpus, Vec<BioRepair>), ConllError> {
    let mut sentences = Vec::new();
    let mut repairs = Vec::new();
    let mut current = LabeledSentence { tokens: Vec::new(), tags: Vec::new() };

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            if !current.tokens.is_empty() {
                sentences.push(std::mem::replace(
                    &mut current,
                    LabeledSentence { tokens: Vec::new(), tags: Vec::new() },
                ));
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(ConllError::Fields { line: line_no, found: fields.len() });
        }
        let token = fields[0].to_owned();
        let mut tag = fields[1].to_owned();

        if scheme == TagScheme::Bio {
            let (prefix, label) = split_bio(&tag).ok_or_else(|| ConllError::BadTag { line: line_no, tag: tag.clone() })?;
            if prefix == 'I' {
                let continues = current
                    .tags
                    .last()
                    .and_then(|prev| split_bio(prev))
                    .is_some_and(|(p, l)| p != 'O' && l == label);
                if !continues {
                    let repaired = format!("B-{label}");
                    warn!("line {line_no}: `{tag}` does not continue a chunk, repaired to `{repaired}`");
                    repairs.push(BioRepair {
                        line: line_no,
                        sentence: sentences.len(),
                        position: current.tokens.len(),
                        original: tag.clone(),
                        repaired: repaired.clone(),
                    });
                    tag = repaired;
                }
            }
        }
        current.tokens.push(token);
        current.tags.push(tag);
    }
    if !current.tokens.is_empty() {
        sentences.push(current);
    }
    Ok((LabeledCorpus::new(sentences, scheme)?, repairs))
}

/// Reads a CoNLL file. BIO repairs are logged and returned alongside the corpus.
pub fn load_conll(path: impl AsRef<Path>, scheme: TagScheme) -> crate::Result<(LabeledCorpus, Vec<BioRepair>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_conll(&text, scheme)?)
}

pub fn write_conll(corpus: &LabeledCorpus, path: impl AsRef<Path>) -> crate::Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for sentence in corpus.sentences() {
        for (token, tag) in sentence.tokens.iter().zip(&sentence.tags) {
            let _ = writeln!(out, "{token}\t{tag}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
