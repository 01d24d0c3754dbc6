//! Linear-chain conditional random field over per-position emission scores.
//!
//! A tag path `y` of length `n` scores
//!
//! ```text
//! start[y0] + E[0][y0] + sum_{i>0} (trans[y(i-1)][yi] + E[i][yi]) + end[y(n-1)]
//! ```
//!
//! All dynamic programs run in log space in `f64`. Scores are accumulated left
//! to right in exactly the order above, both in [`score_sequence`] and in
//! Viterbi, so the decoded score is reproducible bit for bit.

use crate::error::ShapeError;
use crate::linalg::log_sum_exp;
use crate::neuralnet::Parameters;

/// Transition, start and end scores for `num_tags` tags.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfParams {
    pub num_tags: usize,
    /// Row-major `T x T`; entry `[a * T + b]` scores `a -> b`.
    pub transitions: Vec<f64>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl CrfParams {
    pub fn zeros(num_tags: usize) -> Self {
        Self {
            num_tags,
            transitions: vec![0.0; num_tags * num_tags],
            start: vec![0.0; num_tags],
            end: vec![0.0; num_tags],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.num_tags)
    }

    #[inline]
    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transitions[from * self.num_tags + to]
    }

    fn check(&self, emissions: &[Vec<f64>]) -> Result<(), ShapeError> {
        if emissions.is_empty() {
            return Err(ShapeError { context: "crf sequence length (at least)", expected: 1, actual: 0 });
        }
        for row in emissions {
            ShapeError::check("crf emission row", self.num_tags, row.len())?;
        }
        Ok(())
    }

    fn check_tags(&self, emissions: &[Vec<f64>], tags: &[usize]) -> Result<(), ShapeError> {
        self.check(emissions)?;
        ShapeError::check("crf tag sequence", emissions.len(), tags.len())?;
        if let Some(&bad) = tags.iter().find(|&&t| t >= self.num_tags) {
            return Err(ShapeError { context: "tag index below tag count", expected: self.num_tags, actual: bad });
        }
        Ok(())
    }
}

impl Parameters for CrfParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.transitions, &self.start, &self.end]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.transitions, &mut self.start, &mut self.end]
    }
}

/// Unnormalized log score of one tag path.
pub fn score_sequence(emissions: &[Vec<f64>], crf: &CrfParams, tags: &[usize]) -> Result<f64, ShapeError> {
    crf.check_tags(emissions, tags)?;
    let mut score = crf.start[tags[0]] + emissions[0][tags[0]];
    for i in 1..tags.len() {
        score = score + crf.transition(tags[i - 1], tags[i]) + emissions[i][tags[i]];
    }
    Ok(score + crf.end[tags[tags.len() - 1]])
}

/// Forward log-messages: `alpha[i][b]` sums all prefixes ending in `b` at `i`.
fn forward(emissions: &[Vec<f64>], crf: &CrfParams) -> Vec<Vec<f64>> {
    let t = crf.num_tags;
    let mut alpha = Vec::with_capacity(emissions.len());
    alpha.push((0..t).map(|b| crf.start[b] + emissions[0][b]).collect::<Vec<_>>());
    let mut terms = vec![0.0; t];
    for row in &emissions[1..] {
        let prev: &Vec<f64> = alpha.last().unwrap();
        let next = (0..t)
            .map(|b| {
                for a in 0..t {
                    terms[a] = prev[a] + crf.transition(a, b);
                }
                log_sum_exp(&terms) + row[b]
            })
            .collect();
        alpha.push(next);
    }
    alpha
}

/// Backward log-messages: `beta[i][a]` sums all suffixes after `a` at `i`.
fn backward(emissions: &[Vec<f64>], crf: &CrfParams) -> Vec<Vec<f64>> {
    let (n, t) = (emissions.len(), crf.num_tags);
    let mut beta = vec![vec![0.0; t]; n];
    beta[n - 1].clone_from(&crf.end);
    let mut terms = vec![0.0; t];
    for i in (0..n - 1).rev() {
        for a in 0..t {
            for b in 0..t {
                terms[b] = crf.transition(a, b) + emissions[i + 1][b] + beta[i + 1][b];
            }
            beta[i][a] = log_sum_exp(&terms);
        }
    }
    beta
}

fn log_z_from_alpha(alpha: &[Vec<f64>], crf: &CrfParams) -> f64 {
    let last = alpha.last().unwrap();
    let terms: Vec<f64> = last.iter().zip(&crf.end).map(|(a, e)| a + e).collect();
    log_sum_exp(&terms)
}

/// Log of the summed exponentiated scores of all `T^n` paths.
pub fn log_partition(emissions: &[Vec<f64>], crf: &CrfParams) -> Result<f64, ShapeError> {
    crf.check(emissions)?;
    Ok(log_z_from_alpha(&forward(emissions, crf), crf))
}

/// Per-position tag posteriors `P(y_i = t)`.
pub fn marginals(emissions: &[Vec<f64>], crf: &CrfParams) -> Result<Vec<Vec<f64>>, ShapeError> {
    crf.check(emissions)?;
    let alpha = forward(emissions, crf);
    let beta = backward(emissions, crf);
    let log_z = log_z_from_alpha(&alpha, crf);
    Ok(alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x + y - log_z).exp()).collect())
        .collect())
}

/// Negative log-likelihood of a gold path with its gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfNll {
    pub loss: f64,
    /// `n x T`: marginal minus gold indicator.
    pub grad_emissions: Vec<Vec<f64>>,
    pub grad: CrfParams,
}

pub fn nll_and_grad(emissions: &[Vec<f64>], crf: &CrfParams, gold: &[usize]) -> Result<CrfNll, ShapeError> {
    crf.check_tags(emissions, gold)?;
    let (n, t) = (emissions.len(), crf.num_tags);
    let alpha = forward(emissions, crf);
    let beta = backward(emissions, crf);
    let log_z = log_z_from_alpha(&alpha, crf);
    let loss = log_z - score_sequence(emissions, crf, gold)?;

    let mut grad_emissions: Vec<Vec<f64>> = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x + y - log_z).exp()).collect())
        .collect();
    let mut grad = CrfParams::zeros(t);
    grad.start.clone_from(&grad_emissions[0]);
    grad.end.clone_from(&grad_emissions[n - 1]);
    for i in 0..n - 1 {
        for (a, &alpha_a) in alpha[i].iter().enumerate() {
            for b in 0..t {
                let lp = alpha_a + crf.transition(a, b) + emissions[i + 1][b] + beta[i + 1][b] - log_z;
                grad.transitions[a * t + b] += lp.exp();
            }
        }
    }

    for (i, &g) in gold.iter().enumerate() {
        grad_emissions[i][g] -= 1.0;
        if i > 0 {
            grad.transitions[gold[i - 1] * t + g] -= 1.0;
        }
    }
    grad.start[gold[0]] -= 1.0;
    grad.end[gold[n - 1]] -= 1.0;
    Ok(CrfNll { loss, grad_emissions, grad })
}

/// Highest-scoring path and its score. Ties go to the lower tag index.
pub fn viterbi_decode(emissions: &[Vec<f64>], crf: &CrfParams) -> Result<(Vec<usize>, f64), ShapeError> {
    crf.check(emissions)?;
    let (n, t) = (emissions.len(), crf.num_tags);
    let mut delta: Vec<f64> = (0..t).map(|b| crf.start[b] + emissions[0][b]).collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(n - 1);
    for row in &emissions[1..] {
        let mut next = vec![0.0; t];
        let mut ptr = vec![0; t];
        for b in 0..t {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (a, &d) in delta.iter().enumerate() {
                let s = d + crf.transition(a, b);
                if s > best {
                    best = s;
                    arg = a;
                }
            }
            next[b] = best + row[b];
            ptr[b] = arg;
        }
        delta = next;
        back.push(ptr);
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for (b, &d) in delta.iter().enumerate() {
        let s = d + crf.end[b];
        if s > best {
            best = s;
            last = b;
        }
    }
    let mut path = vec![last; n];
    for i in (1..n).rev() {
        path[i - 1] = back[i - 1][path[i]];
    }
    Ok((path, best))
}
