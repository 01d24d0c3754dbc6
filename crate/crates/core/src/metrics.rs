//! Token accuracy and exact-match chunk F1 over BIO-encoded spans.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::ShapeError;

/// A labelled chunk covering tokens `start..end`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Span {
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(label: impl Into<String>, start: usize, end: usize) -> Self {
        debug_assert!(start < end);
        Self { label: label.into(), start, end }
    }
}

/// Micro-averaged precision, recall and F1 with their support counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Score {
    pub fn from_counts(gold: usize, predicted: usize, correct: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(correct, predicted);
        let recall = ratio(correct, gold);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { precision, recall, f1, gold, predicted, correct }
    }
}

fn check_shapes<T>(gold: &[Vec<T>], pred: &[Vec<T>]) -> Result<(), ShapeError> {
    ShapeError::check("sentence count", gold.len(), pred.len())?;
    for (g, p) in gold.iter().zip(pred) {
        ShapeError::check("sentence length", g.len(), p.len())?;
    }
    Ok(())
}

/// Fraction of tokens whose predicted tag equals the gold tag; 0 on an empty corpus.
pub fn token_accuracy<T: PartialEq>(gold: &[Vec<T>], pred: &[Vec<T>]) -> Result<f64, ShapeError> {
    check_shapes(gold, pred)?;
    let total: usize = gold.iter().map(Vec::len).sum();
    if total == 0 {
        return Ok(0.0);
    }
    let correct = gold
        .iter()
        .zip(pred)
        .flat_map(|(g, p)| g.iter().zip(p))
        .filter(|(a, b)| a == b)
        .count();
    Ok(correct as f64 / total as f64)
}

/// Maximal BIO chunks. A bare `I-X` opens a chunk, as in conlleval's lenient
/// reading; a chunk of type `X` ends before `O`, any `B-*`, or `I-Y` with `Y != X`.
/// Tags outside the BIO alphabet count as `O`.
pub fn extract_spans<S: AsRef<str>>(tags: &[S]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<(&str, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        let (begins, label) = match tag.split_at_checked(2) {
            Some(("B-", l)) if !l.is_empty() => (true, Some(l)),
            Some(("I-", l)) if !l.is_empty() => (false, Some(l)),
            _ => (false, None),
        };
        let continues = matches!((open, label), (Some((cur, _)), Some(l)) if !begins && cur == l);
        if continues {
            continue;
        }
        if let Some((cur, start)) = open.take() {
            spans.push(Span::new(cur, start, i));
        }
        if let Some(l) = label {
            open = Some((l, i));
        }
    }
    if let Some((cur, start)) = open {
        spans.push(Span::new(cur, start, tags.len()));
    }
    spans
}

/// Exact-match (label, start, end) span F1, micro-averaged over all sentences.
pub fn chunk_f1<S: AsRef<str>>(gold: &[Vec<S>], pred: &[Vec<S>]) -> Result<Score, ShapeError> {
    check_shapes(gold, pred)?;
    let (mut n_gold, mut n_pred, mut n_correct) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let gold_spans: HashSet<Span> = extract_spans(g).into_iter().collect();
        let pred_spans = extract_spans(p);
        n_gold += gold_spans.len();
        n_pred += pred_spans.len();
        n_correct += pred_spans.iter().filter(|s| gold_spans.contains(s)).count();
    }
    Ok(Score::from_counts(n_gold, n_pred, n_correct))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(tags: &[&str]) -> Vec<String> {
        tags.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn accuracy_examples() {
        let gold = vec![seq(&["A", "B"]), seq(&["C", "A"])];
        assert_eq!(token_accuracy(&gold, &gold).unwrap(), 1.0);
        let wrong = vec![seq(&["B", "A"]), seq(&["A", "C"])];
        assert_eq!(token_accuracy(&gold, &wrong).unwrap(), 0.0);
        let three = vec![seq(&["A", "B"]), seq(&["C", "C"])];
        assert_eq!(token_accuracy(&gold, &three).unwrap(), 0.75);
        assert!(token_accuracy(&gold, &gold[..1]).is_err());
        assert!(token_accuracy(&[seq(&["A"])], &[seq(&["A", "B"])]).is_err());
    }

    #[test]
    fn span_examples() {
        assert_eq!(
            extract_spans(&["B-PER", "I-PER", "O", "B-LOC"]),
            [Span::new("PER", 0, 2), Span::new("LOC", 3, 4)]
        );
        assert!(extract_spans(&["O", "O"]).is_empty());
        assert_eq!(
            extract_spans(&["I-PER", "I-PER", "B-PER"]),
            [Span::new("PER", 0, 2), Span::new("PER", 2, 3)]
        );
        assert_eq!(
            extract_spans(&["B-PER", "I-LOC", "I-LOC"]),
            [Span::new("PER", 0, 1), Span::new("LOC", 1, 3)]
        );
    }

    #[test]
    fn f1_examples() {
        let gold = vec![seq(&["B-PER", "I-PER", "O", "B-LOC"])];
        let s = chunk_f1(&gold, &gold).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));

        let gold = vec![seq(&["B-PER", "O"])];
        let pred = vec![seq(&["B-PER", "I-PER"])];
        let s = chunk_f1(&gold, &pred).unwrap();
        assert_eq!(s.correct, 0);
        assert_eq!(s.f1, 0.0);

        let gold = vec![seq(&["B-PER", "O", "O", "B-LOC"])];
        let pred = vec![seq(&["B-PER", "O", "B-LOC", "I-LOC"])];
        let s = chunk_f1(&gold, &pred).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn degenerate_no_spans() {
        let gold = vec![seq(&["O", "O"])];
        let s = chunk_f1(&gold, &gold).unwrap();
        assert_eq!(s, Score::from_counts(0, 0, 0));
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }
}
