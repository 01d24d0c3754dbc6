//! Hand-differentiated network layers.
//!
//! Every layer keeps its parameters in flat row-major `Vec<f64>` buffers and
//! exposes them through [`Parameters`], which is how the optimizer and the
//! finite-difference tests reach them. Gradient buffers are values of the same
//! type, created with `zeros_like`, and backward passes accumulate into them.

mod dropout;
mod linear;
mod lstm;

pub use self::dropout::{sample_variational_mask, DropoutSpec, SequenceMask};
pub use self::linear::LinearParams;
pub use self::lstm::{
    bilstm_backward, bilstm_forward, lstm_step, BiLstmMasks, BiLstmParams, BiLstmTrace, LstmParams, LstmStep,
    LstmTrace,
};

use rand::Rng;

/// Flat access to every trainable buffer, in a fixed order.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// `uniform(-r, r)` with `r = 1 / sqrt(fan_in)`.
pub(crate) fn init_uniform<R: Rng + ?Sized>(len: usize, fan_in: usize, rng: &mut R) -> Vec<f64> {
    let r = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-r..r)).collect()
}
