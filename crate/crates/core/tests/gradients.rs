//! Whole-model gradients against central differences, for every scheme type.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use layermix::harness::{SentenceMasks, TaggerModel};
use layermix::mixer::logit_penalty;
use layermix::neuralnet::{DropoutSpec, Parameters};
use layermix::{MixScheme, SentenceEmbedding};

const STEP: f64 = 1e-5;

fn worst_error(scheme: MixScheme, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (layers, dim, hidden, tags, n) = (3, 4, 2, 2, 4);
    let mut model = TaggerModel::init(scheme, layers, dim, hidden, tags, &mut rng);
    if model.scheme.is_learned() {
        model.mix.logits.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        model.mix.gamma = rng.random_range(0.5..1.5);
    }
    let data: Vec<f32> = (0..layers * n * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    let sentence = SentenceEmbedding::new(vec!["w".into(); n], layers, dim, data).unwrap();
    let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..tags)).collect();
    let masks = if seed.is_multiple_of(2) {
        model.sample_masks(&DropoutSpec::new(0.25, seed.is_multiple_of(4)).unwrap(), n, &mut rng)
    } else {
        SentenceMasks::identity()
    };
    let lambda = 0.05;
    let total = |m: &TaggerModel| m.loss(&sentence, &gold, &masks).unwrap() + logit_penalty(&m.mix, lambda).unwrap().0;

    let mut grads = model.zeros_like();
    model.forward_backward(&sentence, &gold, &masks, &mut grads).unwrap();
    let (_, penalty) = logit_penalty(&model.mix, lambda).unwrap();
    grads.mix.logits.iter_mut().zip(&penalty).for_each(|(g, p)| *g += p);

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    for (i, g) in analytic.iter().enumerate() {
        for (k, &a) in g.iter().enumerate() {
            let orig = probe.tensors()[i][k];
            probe.tensors_mut()[i][k] = orig + STEP;
            let up = total(&probe);
            probe.tensors_mut()[i][k] = orig - STEP;
            let down = total(&probe);
            probe.tensors_mut()[i][k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-5));
        }
    }
    worst
}

#[test]
fn every_scheme_matches_finite_differences() {
    let schemes = [
        MixScheme::Individual(1),
        MixScheme::Concat,
        MixScheme::FixedAverage,
        MixScheme::LearnedWeighted(vec![0, 1, 2]),
        MixScheme::LearnedWeighted(vec![2, 0]),
    ];
    for scheme in schemes {
        for seed in 0..6 {
            let err = worst_error(scheme.clone(), seed);
            assert!(err < 1e-4, "{scheme} seed {seed}: relative error {err:.2e}");
        }
    }
}

#[test]
fn only_learned_schemes_expose_mixing_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fixed = TaggerModel::init(MixScheme::FixedAverage, 3, 4, 2, 2, &mut rng);
    let learned = TaggerModel::init(MixScheme::LearnedWeighted(vec![0, 1, 2]), 3, 4, 2, 2, &mut rng);
    assert_eq!(learned.num_parameters(), fixed.num_parameters() + 4);
}
