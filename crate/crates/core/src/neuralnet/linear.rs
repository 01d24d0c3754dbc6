use rand::Rng;

use super::{init_uniform, Parameters};
use crate::error::ShapeError;
use crate::linalg;

/// Affine map `W x + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearParams {
    pub fn init<R: Rng + ?Sized>(out_dim: usize, in_dim: usize, rng: &mut R) -> Self {
        Self { out_dim, in_dim, weight: init_uniform(out_dim * in_dim, in_dim, rng), bias: vec![0.0; out_dim] }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            out_dim: self.out_dim,
            in_dim: self.in_dim,
            weight: vec![0.0; self.weight.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ShapeError> {
        ShapeError::check("linear input", self.in_dim, x.len())?;
        let mut out = self.bias.clone();
        linalg::matvec_acc(&self.weight, self.out_dim, self.in_dim, x, &mut out);
        Ok(out)
    }

    /// Accumulates weight and bias gradients into `grads`; returns the input gradient.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], grads: &mut LinearParams) -> Result<Vec<f64>, ShapeError> {
        ShapeError::check("linear input", self.in_dim, x.len())?;
        ShapeError::check("linear output gradient", self.out_dim, grad_out.len())?;
        linalg::outer_acc(&mut grads.weight, grad_out, x);
        linalg::add_assign(&mut grads.bias, grad_out);
        let mut dx = vec![0.0; self.in_dim];
        linalg::matvec_t_acc(&self.weight, self.out_dim, self.in_dim, grad_out, &mut dx);
        Ok(dx)
    }
}

impl Parameters for LinearParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_constant() {
        let id = LinearParams { out_dim: 2, in_dim: 2, weight: vec![1.0, 0.0, 0.0, 1.0], bias: vec![0.0; 2] };
        assert_eq!(id.forward(&[3.5, -2.0]).unwrap(), [3.5, -2.0]);
        let constant = LinearParams { out_dim: 2, in_dim: 3, weight: vec![0.0; 6], bias: vec![0.7, -0.1] };
        assert_eq!(constant.forward(&[9.0, 1.0, -4.0]).unwrap(), [0.7, -0.1]);
        assert!(constant.forward(&[1.0]).is_err());
    }

    #[test]
    fn backward_accumulates() {
        let p = LinearParams { out_dim: 1, in_dim: 2, weight: vec![2.0, -1.0], bias: vec![0.0] };
        let mut g = p.zeros_like();
        let dx = p.backward(&[1.0, 3.0], &[0.5], &mut g).unwrap();
        p.backward(&[1.0, 3.0], &[0.5], &mut g).unwrap();
        assert_eq!(dx, [1.0, -0.5]);
        assert_eq!(g.weight, [1.0, 3.0]);
        assert_eq!(g.bias, [1.0]);
    }
}
