//! Combining the `L` layer vectors of a token into one network input.
//!
//! Four rules are supported:
//!
//! | scheme          | string         | output                                   |
//! |-----------------|----------------|------------------------------------------|
//! | single layer    | `layer:<l>`    | `h[l]`                                   |
//! | concatenation   | `concat`       | `[h[0]; ...; h[L-1]]`                    |
//! | fixed average   | `avg`          | `(1/L) sum_j h[j]`                       |
//! | learned average | `wavg:<j,...>` | `gamma * sum_{j in S} softmax(w)_j h[j]` |
//!
//! `wavg:0,1,2` over a three-layer stack is the usual task-specific scalar mix;
//! `wavg:0,1` learns a mix of only the two lower layers and never reads the third.
//!
//! The learned mix is parameterised by unconstrained logits `w` (one per active
//! layer) and a scale `gamma`, shared by every token of the task.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ShapeError};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum MixScheme {
    Individual(usize),
    Concat,
    FixedAverage,
    /// Softmax-weighted average over an ordered set of distinct layers.
    LearnedWeighted(Vec<usize>),
}

impl MixScheme {
    /// Checks layer indices against a stack of `num_layers` layers.
    pub fn validate(&self, num_layers: usize) -> Result<(), ConfigError> {
        match self {
            MixScheme::Individual(l) if *l >= num_layers => Err(ConfigError::new(
                "scheme",
                format!("layer index {l} out of range for {num_layers} layers"),
            )),
            MixScheme::LearnedWeighted(active) => {
                if active.is_empty() {
                    return Err(ConfigError::new("scheme", "wavg needs at least one layer"));
                }
                for (i, &l) in active.iter().enumerate() {
                    if l >= num_layers {
                        return Err(ConfigError::new(
                            "scheme",
                            format!("layer index {l} out of range for {num_layers} layers"),
                        ));
                    }
                    if active[..i].contains(&l) {
                        return Err(ConfigError::new("scheme", format!("layer {l} listed twice")));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Number of mixing logits the scheme learns.
    pub fn num_logits(&self) -> usize {
        match self {
            MixScheme::LearnedWeighted(active) => active.len(),
            _ => 0,
        }
    }

    pub fn is_learned(&self) -> bool {
        matches!(self, MixScheme::LearnedWeighted(_))
    }
}

impl FromStr for MixScheme {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = |msg: String| ConfigError::new("scheme", msg);
        match s {
            "concat" => return Ok(MixScheme::Concat),
            "avg" => return Ok(MixScheme::FixedAverage),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("layer:") {
            let l = rest.trim().parse().map_err(|_| bad(format!("`{s}`: expected layer:<index>")))?;
            return Ok(MixScheme::Individual(l));
        }
        if let Some(rest) = s.strip_prefix("wavg:") {
            let active = rest
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("`{s}`: expected wavg:<i,j,...>")))?;
            let scheme = MixScheme::LearnedWeighted(active);
            // indices are range-checked later, against the data
            scheme.validate(usize::MAX)?;
            return Ok(scheme);
        }
        Err(bad(format!("unknown scheme `{s}` (expected layer:<l>, concat, avg or wavg:<list>)")))
    }
}

impl fmt::Display for MixScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MixScheme::Individual(l) => write!(f, "layer:{l}"),
            MixScheme::Concat => f.write_str("concat"),
            MixScheme::FixedAverage => f.write_str("avg"),
            MixScheme::LearnedWeighted(active) => {
                f.write_str("wavg:")?;
                for (i, l) in active.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{l}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses a comma-separated list of schemes. A bare number continues the
/// preceding `wavg:` list, so `wavg:0,1,layer:2` is two schemes.
pub fn parse_scheme_list(list: &str) -> Result<Vec<MixScheme>, ConfigError> {
    let mut items: Vec<String> = Vec::new();
    for part in list.split([',', ';']).map(str::trim).filter(|p| !p.is_empty()) {
        let continues_wavg = part.chars().all(|c| c.is_ascii_digit())
            && items.last().is_some_and(|prev| prev.starts_with("wavg:"));
        if continues_wavg {
            let prev = items.last_mut().unwrap();
            prev.push(',');
            prev.push_str(part);
        } else {
            items.push(part.to_owned());
        }
    }
    items.iter().map(|s| s.parse()).collect()
}

/// Learnable mixing parameters. Empty logits for parameter-free schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixParams {
    pub logits: Vec<f64>,
    pub gamma: f64,
}

impl MixParams {
    /// `w = 0` (uniform weights), `gamma = 1`.
    pub fn init(scheme: &MixScheme) -> Self {
        Self { logits: vec![0.0; scheme.num_logits()], gamma: 1.0 }
    }

    pub fn zeros_like(&self) -> Self {
        Self { logits: vec![0.0; self.logits.len()], gamma: 0.0 }
    }

    /// The normalized weights `softmax(w)`.
    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.logits)
    }
}

/// Softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&w| (w - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn output_dim(scheme: &MixScheme, num_layers: usize, dim: usize) -> usize {
    match scheme {
        MixScheme::Concat => num_layers * dim,
        _ => dim,
    }
}

fn check_inputs(h: &[f64], num_layers: usize, scheme: &MixScheme, params: &MixParams) -> Result<usize, ShapeError> {
    if num_layers == 0 || !h.len().is_multiple_of(num_layers) || h.is_empty() {
        return Err(ShapeError { context: "layer matrix length divisible by layers", expected: num_layers, actual: h.len() });
    }
    match scheme {
        MixScheme::Individual(l) if *l >= num_layers => {
            return Err(ShapeError { context: "layer index below layer count", expected: num_layers, actual: *l });
        }
        MixScheme::LearnedWeighted(active) => {
            ShapeError::check("mixing logits", active.len(), params.logits.len())?;
            if let Some(&l) = active.iter().find(|&&l| l >= num_layers) {
                return Err(ShapeError { context: "layer index below layer count", expected: num_layers, actual: l });
            }
        }
        _ => {}
    }
    Ok(h.len() / num_layers)
}

/// Mixes the row-major `num_layers x D` matrix `h` of one token.
pub fn mix_forward(h: &[f64], num_layers: usize, scheme: &MixScheme, params: &MixParams) -> Result<Vec<f64>, ShapeError> {
    let dim = check_inputs(h, num_layers, scheme, params)?;
    let row = |j: usize| &h[j * dim..(j + 1) * dim];
    let out = match scheme {
        MixScheme::Individual(l) => row(*l).to_vec(),
        MixScheme::Concat => h.to_vec(),
        MixScheme::FixedAverage => {
            let mut out = vec![0.0; dim];
            for j in 0..num_layers {
                crate::linalg::add_assign(&mut out, row(j));
            }
            let scale = 1.0 / num_layers as f64;
            out.iter_mut().for_each(|v| *v *= scale);
            out
        }
        MixScheme::LearnedWeighted(active) => {
            let s = softmax(&params.logits);
            let mut out = vec![0.0; dim];
            for (&j, &sj) in active.iter().zip(&s) {
                crate::linalg::axpy(params.gamma * sj, row(j), &mut out);
            }
            out
        }
    };
    Ok(out)
}

/// Gradients of a mixed output with respect to its inputs and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MixGrads {
    /// `num_layers x D`, row-major. Rows outside the active set are zero.
    pub h: Vec<f64>,
    /// Empty for parameter-free schemes.
    pub logits: Vec<f64>,
    pub gamma: f64,
}

pub fn mix_backward(
    grad_out: &[f64],
    h: &[f64],
    num_layers: usize,
    scheme: &MixScheme,
    params: &MixParams,
) -> Result<MixGrads, ShapeError> {
    let dim = check_inputs(h, num_layers, scheme, params)?;
    ShapeError::check("mix output gradient", output_dim(scheme, num_layers, dim), grad_out.len())?;
    let mut grad_h = vec![0.0; h.len()];
    let mut grads = MixGrads { h: Vec::new(), logits: Vec::new(), gamma: 0.0 };
    match scheme {
        MixScheme::Individual(l) => grad_h[l * dim..(l + 1) * dim].copy_from_slice(grad_out),
        MixScheme::Concat => grad_h.copy_from_slice(grad_out),
        MixScheme::FixedAverage => {
            let scale = 1.0 / num_layers as f64;
            for row in grad_h.chunks_exact_mut(dim) {
                crate::linalg::axpy(scale, grad_out, row);
            }
        }
        MixScheme::LearnedWeighted(active) => {
            let s = softmax(&params.logits);
            // a_j = <h_j, g>; d/ds_j = gamma * a_j
            let a: Vec<f64> = active.iter().map(|&j| crate::linalg::dot(&h[j * dim..(j + 1) * dim], grad_out)).collect();
            let weighted: f64 = s.iter().zip(&a).map(|(sj, aj)| sj * aj).sum();
            grads.gamma = weighted;
            grads.logits = s.iter().zip(&a).map(|(sk, ak)| params.gamma * sk * (ak - weighted)).collect();
            for (&j, &sj) in active.iter().zip(&s) {
                crate::linalg::axpy(params.gamma * sj, grad_out, &mut grad_h[j * dim..(j + 1) * dim]);
            }
        }
    }
    grads.h = grad_h;
    Ok(grads)
}

/// `lambda * ||w||^2` on the pre-softmax logits, and its gradient `2 lambda w`.
pub fn logit_penalty(params: &MixParams, lambda: f64) -> Result<(f64, Vec<f64>), ConfigError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(ConfigError::new("logit_penalty", format!("must be a non-negative number, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok((0.0, vec![0.0; params.logits.len()]));
    }
    let loss = lambda * params.logits.iter().map(|w| w * w).sum::<f64>();
    let grad = params.logits.iter().map(|w| 2.0 * lambda * w).collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    const H: [f64; 6] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];

    fn wavg(active: &[usize], logits: &[f64], gamma: f64) -> (MixScheme, MixParams) {
        (MixScheme::LearnedWeighted(active.to_vec()), MixParams { logits: logits.to_vec(), gamma })
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_examples() {
        assert!(close(&softmax(&[0.0, 0.0, 0.0]), &[1.0 / 3.0; 3], 1e-15));
        assert!(close(&softmax(&[2f64.ln(), 0.0]), &[2.0 / 3.0, 1.0 / 3.0], 1e-15));
        let s = softmax(&[1000.0, 0.0]);
        assert!(s.iter().all(|v| v.is_finite()));
        assert!((s[0] - 1.0).abs() < 1e-15 && s[1] < 1e-300);
    }

    #[test]
    fn forward_examples() {
        let none = MixParams::init(&MixScheme::Concat);
        assert_eq!(mix_forward(&H, 3, &MixScheme::FixedAverage, &none).unwrap(), [3.0, 4.0]);
        assert_eq!(mix_forward(&H, 3, &MixScheme::Concat, &none).unwrap(), H);
        assert_eq!(mix_forward(&H, 3, &MixScheme::Individual(1), &none).unwrap(), [3.0, 4.0]);
        let (s, p) = wavg(&[0, 1, 2], &[0.0, 0.0, 0.0], 2.0);
        assert!(close(&mix_forward(&H, 3, &s, &p).unwrap(), &[6.0, 8.0], 1e-12));
        let (s, p) = wavg(&[0, 1], &[3f64.ln(), 0.0], 1.0);
        assert!(close(&mix_forward(&H, 3, &s, &p).unwrap(), &[1.5, 2.5], 1e-12));
    }

    #[test]
    fn backward_examples() {
        let g = [0.3, -1.2];
        let none = MixParams::init(&MixScheme::FixedAverage);
        let grads = mix_backward(&g, &H, 3, &MixScheme::FixedAverage, &none).unwrap();
        for row in grads.h.chunks(2) {
            assert!(close(row, &[0.1, -0.4], 1e-15));
        }
        assert!(grads.logits.is_empty());
        assert_eq!(grads.gamma, 0.0);

        let (s, p) = wavg(&[0, 1], &[0.4, -0.2], 1.3);
        let grads = mix_backward(&g, &H, 3, &s, &p).unwrap();
        assert_eq!(&grads.h[4..], &[0.0, 0.0]);
    }

    #[test]
    fn output_dims() {
        assert_eq!(output_dim(&MixScheme::Concat, 3, 1024), 3072);
        assert_eq!(output_dim(&MixScheme::Individual(1), 3, 1024), 1024);
        assert_eq!(output_dim(&MixScheme::LearnedWeighted(vec![0, 1]), 3, 8), 8);
    }

    #[test]
    fn penalty_examples() {
        let p = MixParams { logits: vec![1.0, -1.0], gamma: 1.0 };
        assert_eq!(logit_penalty(&p, 0.0).unwrap(), (0.0, vec![0.0, 0.0]));
        assert_eq!(logit_penalty(&p, 1.0).unwrap(), (2.0, vec![2.0, -2.0]));
        assert!(logit_penalty(&p, -0.1).is_err());
        assert!(logit_penalty(&p, f64::NAN).is_err());
    }

    #[test]
    fn scheme_strings() {
        for s in ["layer:0", "concat", "avg", "wavg:0,1,2", "wavg:0,1", "wavg:2"] {
            assert_eq!(s.parse::<MixScheme>().unwrap().to_string(), s);
        }
        assert_eq!(" wavg: 0, 1 ".parse::<MixScheme>().unwrap(), MixScheme::LearnedWeighted(vec![0, 1]));
        for bad in ["layer:", "layer:x", "wavg:", "wavg:0,0", "sum", "wavg:1,a"] {
            assert!(bad.parse::<MixScheme>().is_err(), "{bad}");
        }
        let s: MixScheme = "wavg:0,9".parse().unwrap();
        assert!(s.validate(3).is_err());
        assert!(MixScheme::Individual(3).validate(3).is_err());
        assert!(MixScheme::Individual(2).validate(3).is_ok());
    }

    #[test]
    fn scheme_lists() {
        let list = parse_scheme_list("layer:1,layer:2").unwrap();
        assert_eq!(list, [MixScheme::Individual(1), MixScheme::Individual(2)]);
        let list = parse_scheme_list("wavg:0,1,2,wavg:0,1,avg;concat").unwrap();
        assert_eq!(
            list,
            [
                MixScheme::LearnedWeighted(vec![0, 1, 2]),
                MixScheme::LearnedWeighted(vec![0, 1]),
                MixScheme::FixedAverage,
                MixScheme::Concat
            ]
        );
    }

    #[test]
    fn shape_errors() {
        let p = MixParams::init(&MixScheme::FixedAverage);
        assert!(mix_forward(&H[..5], 3, &MixScheme::FixedAverage, &p).is_err());
        assert!(mix_forward(&H, 3, &MixScheme::Individual(3), &p).is_err());
        let (s, _) = wavg(&[0, 1], &[0.0, 0.0], 1.0);
        assert!(mix_forward(&H, 3, &s, &MixParams { logits: vec![0.0], gamma: 1.0 }).is_err());
        assert!(mix_backward(&[1.0; 3], &H, 3, &MixScheme::FixedAverage, &p).is_err());
    }
}
