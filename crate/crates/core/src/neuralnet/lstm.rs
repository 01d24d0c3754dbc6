use rand::Rng;

use super::{init_uniform, Parameters, SequenceMask};
use crate::error::ShapeError;
use crate::linalg::{self, sigmoid};

/// LSTM cell weights. Gate blocks are stacked in the order
/// (input, forget, cell, output), each `hidden` rows tall.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: usize,
    pub hidden: usize,
    /// `4h x input`
    pub w_ih: Vec<f64>,
    /// `4h x h`
    pub w_hh: Vec<f64>,
    /// `4h`
    pub bias: Vec<f64>,
}

impl LstmParams {
    /// Uniform `±1/sqrt(fan_in)` weights, zero biases except a forget-gate bias of 1.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let w_ih = init_uniform(4 * hidden * input, input, rng);
        let w_hh = init_uniform(4 * hidden * hidden, hidden, rng);
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].fill(1.0);
        Self { input, hidden, w_ih, w_hh, bias }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            input,
            hidden,
            w_ih: vec![0.0; 4 * hidden * input],
            w_hh: vec![0.0; 4 * hidden * hidden],
            bias: vec![0.0; 4 * hidden],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input, self.hidden)
    }

    /// One recurrence step. `rec_mask`, when present, multiplies `h_prev`
    /// before it enters the gates.
    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64], rec_mask: Option<&[f64]>) -> Result<LstmStep, ShapeError> {
        let h = self.hidden;
        ShapeError::check("lstm input", self.input, x.len())?;
        ShapeError::check("lstm hidden state", h, h_prev.len())?;
        ShapeError::check("lstm cell state", h, c_prev.len())?;

        let h_in: Vec<f64> = match rec_mask {
            Some(m) => h_prev.iter().zip(m).map(|(a, b)| a * b).collect(),
            None => h_prev.to_vec(),
        };
        let mut z = self.bias.clone();
        linalg::matvec_acc(&self.w_ih, 4 * h, self.input, x, &mut z);
        linalg::matvec_acc(&self.w_hh, 4 * h, h, &h_in, &mut z);

        let i: Vec<f64> = z[..h].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = z[h..2 * h].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = z[2 * h..3 * h].iter().map(|&v| v.tanh()).collect();
        let o: Vec<f64> = z[3 * h..].iter().map(|&v| sigmoid(v)).collect();
        let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h_out: Vec<f64> = (0..h).map(|k| o[k] * tanh_c[k]).collect();

        Ok(LstmStep { x: x.to_vec(), h_in, c_prev: c_prev.to_vec(), i, f, g, o, c, tanh_c, h: h_out })
    }

    /// Backward through one step. `dh` and `dc` are the total gradients
    /// arriving at this step's outputs. Returns `(dx, dh_prev, dc_prev)`.
    pub fn step_backward(
        &self,
        step: &LstmStep,
        dh: &[f64],
        dc: &[f64],
        rec_mask: Option<&[f64]>,
        grads: &mut LstmParams,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = self.hidden;
        let mut dz = vec![0.0; 4 * h];
        let mut dc_prev = vec![0.0; h];
        for k in 0..h {
            let d_o = dh[k] * step.tanh_c[k];
            let dc_total = dc[k] + dh[k] * step.o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]);
            let d_i = dc_total * step.g[k];
            let d_f = dc_total * step.c_prev[k];
            let d_g = dc_total * step.i[k];
            dc_prev[k] = dc_total * step.f[k];
            dz[k] = d_i * step.i[k] * (1.0 - step.i[k]);
            dz[h + k] = d_f * step.f[k] * (1.0 - step.f[k]);
            dz[2 * h + k] = d_g * (1.0 - step.g[k] * step.g[k]);
            dz[3 * h + k] = d_o * step.o[k] * (1.0 - step.o[k]);
        }
        linalg::outer_acc(&mut grads.w_ih, &dz, &step.x);
        linalg::outer_acc(&mut grads.w_hh, &dz, &step.h_in);
        linalg::add_assign(&mut grads.bias, &dz);

        let mut dx = vec![0.0; self.input];
        linalg::matvec_t_acc(&self.w_ih, 4 * h, self.input, &dz, &mut dx);
        let mut dh_prev = vec![0.0; h];
        linalg::matvec_t_acc(&self.w_hh, 4 * h, h, &dz, &mut dh_prev);
        if let Some(m) = rec_mask {
            dh_prev.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
        }
        (dx, dh_prev, dc_prev)
    }

    /// Runs the cell left to right from zero state.
    pub fn run(&self, xs: &[Vec<f64>], rec_mask: &SequenceMask) -> Result<LstmTrace, ShapeError> {
        let mut h = vec![0.0; self.hidden];
        let mut c = vec![0.0; self.hidden];
        let mut steps = Vec::with_capacity(xs.len());
        for (t, x) in xs.iter().enumerate() {
            let step = self.step(x, &h, &c, rec_mask.at(t))?;
            h.clone_from(&step.h);
            c.clone_from(&step.c);
            steps.push(step);
        }
        Ok(LstmTrace { steps })
    }

    /// Backpropagation through time. `d_hs[t]` is the loss gradient on the
    /// output at step `t`; returns the gradients on the inputs.
    pub fn run_backward(
        &self,
        trace: &LstmTrace,
        d_hs: &[Vec<f64>],
        rec_mask: &SequenceMask,
        grads: &mut LstmParams,
    ) -> Result<Vec<Vec<f64>>, ShapeError> {
        ShapeError::check("lstm output gradients", trace.steps.len(), d_hs.len())?;
        let mut dxs = vec![Vec::new(); trace.steps.len()];
        let mut dh_next = vec![0.0; self.hidden];
        let mut dc_next = vec![0.0; self.hidden];
        for t in (0..trace.steps.len()).rev() {
            ShapeError::check("lstm output gradient", self.hidden, d_hs[t].len())?;
            let mut dh = d_hs[t].clone();
            linalg::add_assign(&mut dh, &dh_next);
            let (dx, dh_prev, dc_prev) = self.step_backward(&trace.steps[t], &dh, &dc_next, rec_mask.at(t), grads);
            dxs[t] = dx;
            dh_next = dh_prev;
            dc_next = dc_prev;
        }
        Ok(dxs)
    }
}

impl Parameters for LstmParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.w_ih, &self.w_hh, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }
}

/// Everything one step needs for its backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmStep {
    pub x: Vec<f64>,
    /// `h_prev` after the recurrent dropout mask.
    pub h_in: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmTrace {
    pub steps: Vec<LstmStep>,
}

/// A single LSTM step without dropout: returns `(h, c)`.
pub fn lstm_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], params: &LstmParams) -> Result<(Vec<f64>, Vec<f64>), ShapeError> {
    let step = params.step(x, h_prev, c_prev, None)?;
    Ok((step.h, step.c))
}

/// A forward and a backward LSTM over the same input.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstmParams {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let fwd = LstmParams::init(input, hidden, rng);
        let bwd = LstmParams::init(input, hidden, rng);
        Self { fwd, bwd }
    }

    pub fn zeros_like(&self) -> Self {
        Self { fwd: self.fwd.zeros_like(), bwd: self.bwd.zeros_like() }
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden + self.bwd.hidden
    }
}

impl Parameters for BiLstmParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self.fwd.tensors();
        t.extend(self.bwd.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self.fwd.tensors_mut();
        t.extend(self.bwd.tensors_mut());
        t
    }
}

/// Recurrent dropout masks for the two directions, indexed by each
/// direction's own step order.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmMasks {
    pub fwd_rec: SequenceMask,
    pub bwd_rec: SequenceMask,
}

impl Default for BiLstmMasks {
    fn default() -> Self {
        Self { fwd_rec: SequenceMask::Identity, bwd_rec: SequenceMask::Identity }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmTrace {
    pub fwd: LstmTrace,
    /// Steps in reversed order: step `k` consumed input `n - 1 - k`.
    pub bwd: LstmTrace,
    /// `[h_fwd(t); h_bwd(t)]` per position.
    pub outputs: Vec<Vec<f64>>,
}

pub fn bilstm_forward(xs: &[Vec<f64>], params: &BiLstmParams, masks: &BiLstmMasks) -> Result<BiLstmTrace, ShapeError> {
    if xs.is_empty() {
        return Err(ShapeError { context: "bilstm sequence length (at least)", expected: 1, actual: 0 });
    }
    let n = xs.len();
    let fwd = params.fwd.run(xs, &masks.fwd_rec)?;
    let reversed: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
    let bwd = params.bwd.run(&reversed, &masks.bwd_rec)?;
    let outputs = (0..n)
        .map(|t| {
            let mut o = fwd.steps[t].h.clone();
            o.extend_from_slice(&bwd.steps[n - 1 - t].h);
            o
        })
        .collect();
    Ok(BiLstmTrace { fwd, bwd, outputs })
}

/// Full BPTT through both directions. Returns input gradients per position.
pub fn bilstm_backward(
    params: &BiLstmParams,
    trace: &BiLstmTrace,
    d_outputs: &[Vec<f64>],
    masks: &BiLstmMasks,
    grads: &mut BiLstmParams,
) -> Result<Vec<Vec<f64>>, ShapeError> {
    let n = trace.outputs.len();
    ShapeError::check("bilstm output gradients", n, d_outputs.len())?;
    let hf = params.fwd.hidden;
    let mut d_fwd = Vec::with_capacity(n);
    let mut d_bwd = Vec::with_capacity(n);
    for t in 0..n {
        ShapeError::check("bilstm output gradient", params.output_dim(), d_outputs[t].len())?;
        d_fwd.push(d_outputs[t][..hf].to_vec());
        d_bwd.push(d_outputs[n - 1 - t][hf..].to_vec());
    }
    let mut dxs = params.fwd.run_backward(&trace.fwd, &d_fwd, &masks.fwd_rec, &mut grads.fwd)?;
    let dxs_rev = params.bwd.run_backward(&trace.bwd, &d_bwd, &masks.bwd_rec, &mut grads.bwd)?;
    for t in 0..n {
        linalg::add_assign(&mut dxs[t], &dxs_rev[n - 1 - t]);
    }
    Ok(dxs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_state() {
        let p = LstmParams::zeros(3, 2);
        let (h, c) = lstm_step(&[1.0, -2.0, 5.0], &[0.0; 2], &[0.0; 2], &p).unwrap();
        assert_eq!(h, [0.0, 0.0]);
        assert_eq!(c, [0.0, 0.0]);
    }

    #[test]
    fn large_forget_bias_with_empty_cell_stays_zero() {
        let mut p = LstmParams::zeros(1, 2);
        p.bias[2..4].fill(50.0);
        let (h, c) = lstm_step(&[3.0], &[0.0; 2], &[0.0; 2], &p).unwrap();
        assert_eq!(h, [0.0, 0.0]);
        assert_eq!(c, [0.0, 0.0]);
    }

    #[test]
    fn scalar_cell_matches_hand_evaluation() {
        // gates (i, f, g, o) with input weight, recurrent weight and bias each
        let (wi, wh, b) = ([0.5, -0.3, 0.8, 0.1], [0.2, 0.4, -0.6, 0.9], [0.1, 1.0, -0.2, 0.0]);
        let p = LstmParams { input: 1, hidden: 1, w_ih: wi.to_vec(), w_hh: wh.to_vec(), bias: b.to_vec() };
        let (x, h0, c0) = (0.7, -0.4, 0.25);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let pre = |k: usize| wi[k] * x + wh[k] * h0 + b[k];
        let c = sig(pre(1)) * c0 + sig(pre(0)) * pre(2).tanh();
        let h = sig(pre(3)) * c.tanh();
        let (h_out, c_out) = lstm_step(&[x], &[h0], &[c0], &p).unwrap();
        assert!((h_out[0] - h).abs() < 1e-15);
        assert!((c_out[0] - c).abs() < 1e-15);
    }

    #[test]
    fn init_sets_forget_bias() {
        let p = LstmParams::init(3, 4, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(&p.bias[4..8], &[1.0; 4]);
        assert!(p.bias[..4].iter().chain(&p.bias[8..]).all(|&b| b == 0.0));
        let r = 1.0 / 3f64.sqrt();
        assert!(p.w_ih.iter().all(|w| w.abs() <= r));
        assert!(p.w_hh.iter().all(|w| w.abs() <= 0.5));
    }

    #[test]
    fn single_token_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = BiLstmParams::init(3, 2, &mut rng);
        let x = vec![vec![0.3, -0.1, 0.8]];
        let trace = bilstm_forward(&x, &p, &BiLstmMasks::default()).unwrap();
        let (hf, _) = lstm_step(&x[0], &[0.0; 2], &[0.0; 2], &p.fwd).unwrap();
        let (hb, _) = lstm_step(&x[0], &[0.0; 2], &[0.0; 2], &p.bwd).unwrap();
        assert_eq!(trace.outputs[0], [hf, hb].concat());
    }

    #[test]
    fn reversal_swaps_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = BiLstmParams::init(2, 3, &mut rng);
        let swapped = BiLstmParams { fwd: p.bwd.clone(), bwd: p.fwd.clone() };
        let xs: Vec<Vec<f64>> = (0..4).map(|t| vec![t as f64 * 0.3 - 0.5, 0.2 * t as f64]).collect();
        let rev: Vec<Vec<f64>> = xs.iter().rev().cloned().collect();
        let a = bilstm_forward(&xs, &p, &BiLstmMasks::default()).unwrap();
        let b = bilstm_forward(&rev, &swapped, &BiLstmMasks::default()).unwrap();
        let n = xs.len();
        for t in 0..n {
            let o = &b.outputs[n - 1 - t];
            assert_eq!(&a.outputs[t][..3], &o[3..]);
            assert_eq!(&a.outputs[t][3..], &o[..3]);
        }
    }

    #[test]
    fn empty_sequence_rejected() {
        let p = BiLstmParams::init(2, 2, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(bilstm_forward(&[], &p, &BiLstmMasks::default()).is_err());
    }
}
