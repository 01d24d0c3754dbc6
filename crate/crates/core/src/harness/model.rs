//! The tagger: mixer -> BiLSTM -> BiLSTM -> linear projection -> CRF.

use rand::Rng;

use crate::crf::{self, CrfParams};
use crate::embedstore::SentenceEmbedding;
use crate::error::ShapeError;
use crate::mixer::{self, MixParams, MixScheme};
use crate::neuralnet::{
    bilstm_backward, bilstm_forward, BiLstmMasks, BiLstmParams, DropoutSpec, LinearParams, Parameters, SequenceMask,
};

/// Full parameter bundle. Gradient buffers are values of this same type.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    pub scheme: MixScheme,
    pub num_layers: usize,
    pub mix: MixParams,
    pub lstm1: BiLstmParams,
    pub lstm2: BiLstmParams,
    pub proj: LinearParams,
    pub crf: CrfParams,
}

/// Dropout masks for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceMasks {
    /// On the mixed embedding.
    pub input: SequenceMask,
    pub rec1: BiLstmMasks,
    /// Between the two BiLSTM layers.
    pub between: SequenceMask,
    pub rec2: BiLstmMasks,
    /// On the final BiLSTM output.
    pub output: SequenceMask,
}

impl SentenceMasks {
    pub fn identity() -> Self {
        Self {
            input: SequenceMask::Identity,
            rec1: BiLstmMasks::default(),
            between: SequenceMask::Identity,
            rec2: BiLstmMasks::default(),
            output: SequenceMask::Identity,
        }
    }
}

impl TaggerModel {
    pub fn init<R: Rng + ?Sized>(
        scheme: MixScheme,
        num_layers: usize,
        dim: usize,
        hidden: usize,
        num_tags: usize,
        rng: &mut R,
    ) -> Self {
        let input = mixer::output_dim(&scheme, num_layers, dim);
        let lstm1 = BiLstmParams::init(input, hidden, rng);
        let lstm2 = BiLstmParams::init(2 * hidden, hidden, rng);
        let proj = LinearParams::init(num_tags, 2 * hidden, rng);
        Self {
            mix: MixParams::init(&scheme),
            scheme,
            num_layers,
            lstm1,
            lstm2,
            proj,
            crf: CrfParams::zeros(num_tags),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }

    pub fn hidden(&self) -> usize {
        self.lstm1.fwd.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.lstm1.fwd.input
    }

    pub fn num_tags(&self) -> usize {
        self.crf.num_tags
    }

    pub fn sample_masks<R: Rng + ?Sized>(&self, dropout: &DropoutSpec, len: usize, rng: &mut R) -> SentenceMasks {
        let h = self.hidden();
        SentenceMasks {
            input: dropout.sample(self.input_dim(), len, rng),
            rec1: BiLstmMasks { fwd_rec: dropout.sample(h, len, rng), bwd_rec: dropout.sample(h, len, rng) },
            between: dropout.sample(2 * h, len, rng),
            rec2: BiLstmMasks { fwd_rec: dropout.sample(h, len, rng), bwd_rec: dropout.sample(h, len, rng) },
            output: dropout.sample(2 * h, len, rng),
        }
    }

    /// Learned mixing weights `softmax(w)` and `gamma`, if the scheme has any.
    pub fn mix_weights(&self) -> Option<(Vec<f64>, f64)> {
        self.scheme.is_learned().then(|| (self.mix.weights(), self.mix.gamma))
    }

    fn forward(&self, sentence: &SentenceEmbedding, masks: &SentenceMasks) -> Result<Forward, ShapeError> {
        ShapeError::check("embedding layer count", self.num_layers, sentence.num_layers())?;
        let n = sentence.len();
        let mut layers = Vec::with_capacity(n);
        let mut inputs = Vec::with_capacity(n);
        for t in 0..n {
            let h = sentence.token_layers(t);
            let mut x = mixer::mix_forward(&h, self.num_layers, &self.scheme, &self.mix)?;
            masks.input.apply(t, &mut x);
            layers.push(h);
            inputs.push(x);
        }
        let trace1 = bilstm_forward(&inputs, &self.lstm1, &masks.rec1)?;
        let mut between = trace1.outputs.clone();
        for (t, v) in between.iter_mut().enumerate() {
            masks.between.apply(t, v);
        }
        let trace2 = bilstm_forward(&between, &self.lstm2, &masks.rec2)?;
        let mut features = trace2.outputs.clone();
        for (t, v) in features.iter_mut().enumerate() {
            masks.output.apply(t, v);
        }
        let emissions = features.iter().map(|f| self.proj.forward(f)).collect::<Result<Vec<_>, _>>()?;
        Ok(Forward { layers, trace1, trace2, features, emissions })
    }

    /// Per-position tag scores.
    pub fn emissions(&self, sentence: &SentenceEmbedding, masks: &SentenceMasks) -> Result<Vec<Vec<f64>>, ShapeError> {
        Ok(self.forward(sentence, masks)?.emissions)
    }

    /// CRF negative log-likelihood of `tags`.
    pub fn loss(&self, sentence: &SentenceEmbedding, tags: &[usize], masks: &SentenceMasks) -> Result<f64, ShapeError> {
        let e = self.emissions(sentence, masks)?;
        Ok(crf::log_partition(&e, &self.crf)? - crf::score_sequence(&e, &self.crf, tags)?)
    }

    /// Viterbi tags with dropout disabled.
    pub fn predict(&self, sentence: &SentenceEmbedding) -> Result<Vec<usize>, ShapeError> {
        let e = self.emissions(sentence, &SentenceMasks::identity())?;
        Ok(crf::viterbi_decode(&e, &self.crf)?.0)
    }

    /// Adds the gradient of this sentence's NLL into `grads` and returns the NLL.
    pub fn forward_backward(
        &self,
        sentence: &SentenceEmbedding,
        tags: &[usize],
        masks: &SentenceMasks,
        grads: &mut TaggerModel,
    ) -> Result<f64, ShapeError> {
        let fw = self.forward(sentence, masks)?;
        let nll = crf::nll_and_grad(&fw.emissions, &self.crf, tags)?;
        for (g, d) in grads.crf.tensors_mut().into_iter().zip(nll.grad.tensors()) {
            crate::linalg::add_assign(g, d);
        }

        let n = sentence.len();
        let mut d_features = Vec::with_capacity(n);
        for t in 0..n {
            let mut d = self.proj.backward(&fw.features[t], &nll.grad_emissions[t], &mut grads.proj)?;
            masks.output.apply(t, &mut d);
            d_features.push(d);
        }
        let mut d_between = bilstm_backward(&self.lstm2, &fw.trace2, &d_features, &masks.rec2, &mut grads.lstm2)?;
        for (t, d) in d_between.iter_mut().enumerate() {
            masks.between.apply(t, d);
        }
        let mut d_inputs = bilstm_backward(&self.lstm1, &fw.trace1, &d_between, &masks.rec1, &mut grads.lstm1)?;

        if self.scheme.is_learned() {
            for (t, d) in d_inputs.iter_mut().enumerate() {
                masks.input.apply(t, d);
                let mg = mixer::mix_backward(d, &fw.layers[t], self.num_layers, &self.scheme, &self.mix)?;
                crate::linalg::add_assign(&mut grads.mix.logits, &mg.logits);
                grads.mix.gamma += mg.gamma;
            }
        }
        Ok(nll.loss)
    }
}

struct Forward {
    layers: Vec<Vec<f64>>,
    trace1: crate::neuralnet::BiLstmTrace,
    trace2: crate::neuralnet::BiLstmTrace,
    features: Vec<Vec<f64>>,
    emissions: Vec<Vec<f64>>,
}

impl Parameters for TaggerModel {
    /// Mixing logits and gamma come first, and only for learned schemes.
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t: Vec<&[f64]> = Vec::new();
        if self.scheme.is_learned() {
            t.push(&self.mix.logits);
            t.push(std::slice::from_ref(&self.mix.gamma));
        }
        t.extend(self.lstm1.tensors());
        t.extend(self.lstm2.tensors());
        t.extend(self.proj.tensors());
        t.extend(self.crf.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t: Vec<&mut [f64]> = Vec::new();
        if self.scheme.is_learned() {
            t.push(&mut self.mix.logits);
            t.push(std::slice::from_mut(&mut self.mix.gamma));
        }
        t.extend(self.lstm1.tensors_mut());
        t.extend(self.lstm2.tensors_mut());
        t.extend(self.proj.tensors_mut());
        t.extend(self.crf.tensors_mut());
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sentence(n: usize, layers: usize, dim: usize, seed: u64) -> SentenceEmbedding {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..layers * n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        SentenceEmbedding::new((0..n).map(|i| format!("w{i}")).collect(), layers, dim, data).unwrap()
    }

    #[test]
    fn shapes_follow_scheme() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = TaggerModel::init(MixScheme::Concat, 3, 4, 5, 3, &mut rng);
        assert_eq!(m.input_dim(), 12);
        assert_eq!(m.lstm2.fwd.input, 10);
        assert_eq!(m.proj.out_dim, 3);
        assert_eq!(m.tensors().len(), 6 + 6 + 2 + 3);
        let m = TaggerModel::init(MixScheme::LearnedWeighted(vec![0, 1]), 3, 4, 5, 3, &mut rng);
        assert_eq!(m.input_dim(), 4);
        assert_eq!(m.tensors()[0], &[0.0, 0.0]);
        assert_eq!(m.tensors()[1], &[1.0]);
    }

    #[test]
    fn evaluation_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = TaggerModel::init(MixScheme::FixedAverage, 3, 4, 3, 2, &mut rng);
        let s = sentence(5, 3, 4, 2);
        let a = m.emissions(&s, &SentenceMasks::identity()).unwrap();
        let b = m.emissions(&s, &SentenceMasks::identity()).unwrap();
        assert_eq!(a, b);
        assert_eq!(m.predict(&s).unwrap().len(), 5);
    }

    #[test]
    fn forward_backward_returns_the_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = TaggerModel::init(MixScheme::LearnedWeighted(vec![0, 1, 2]), 3, 4, 3, 2, &mut rng);
        let s = sentence(4, 3, 4, 4);
        let masks = m.sample_masks(&DropoutSpec::default(), 4, &mut rng);
        let mut g = m.zeros_like();
        let loss = m.forward_backward(&s, &[0, 1, 1, 0], &masks, &mut g).unwrap();
        assert_eq!(loss, m.loss(&s, &[0, 1, 1, 0], &masks).unwrap());
        assert!(loss > 0.0);
        assert!(g.mix.gamma != 0.0);
    }

    #[test]
    fn wrong_layer_count_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = TaggerModel::init(MixScheme::FixedAverage, 3, 4, 2, 2, &mut rng);
        assert!(m.predict(&sentence(3, 2, 4, 0)).is_err());
    }
}
