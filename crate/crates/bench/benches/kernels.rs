use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use layermix::crf::{log_partition, nll_and_grad, viterbi_decode, CrfParams};
use layermix::embedstore::{align_with_tagset, AlignedDataset};
use layermix::harness::{train_on, ExperimentData};
use layermix::neuralnet::{bilstm_backward, bilstm_forward, BiLstmMasks, BiLstmParams};
use layermix::synth::{self, tag_names, SynthSpec};
use layermix::ExperimentConfig;

fn random_crf(n: usize, t: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, CrfParams) {
    let mut draw = |k: usize| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
    let emissions = (0..n).map(|_| draw(t)).collect();
    let crf = CrfParams { num_tags: t, transitions: draw(t * t), start: draw(t), end: draw(t) };
    (emissions, crf)
}

fn crf(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("crf");
    for &t in &[5usize, 17] {
        let (e, p) = random_crf(30, t, &mut rng);
        let gold: Vec<usize> = (0..30).map(|i| i % t).collect();
        group.bench_with_input(BenchmarkId::new("log_partition", t), &t, |b, _| b.iter(|| log_partition(&e, &p).unwrap()));
        group.bench_with_input(BenchmarkId::new("viterbi", t), &t, |b, _| b.iter(|| viterbi_decode(&e, &p).unwrap()));
        group.bench_with_input(BenchmarkId::new("nll_and_grad", t), &t, |b, _| {
            b.iter(|| nll_and_grad(&e, &p, &gold).unwrap())
        });
    }
    group.finish();
}

fn bilstm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, input, hidden) = (30, 64, 32);
    let params = BiLstmParams::init(input, hidden, &mut rng);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..input).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let d_out: Vec<Vec<f64>> = (0..n).map(|_| (0..2 * hidden).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let masks = BiLstmMasks::default();
    let mut group = c.benchmark_group("bilstm");
    group.bench_function("forward", |b| b.iter(|| bilstm_forward(&xs, &params, &masks).unwrap()));
    let trace = bilstm_forward(&xs, &params, &masks).unwrap();
    group.bench_function("backward", |b| {
        b.iter(|| {
            let mut grads = params.zeros_like();
            bilstm_backward(&params, &trace, &d_out, &masks, &mut grads).unwrap()
        })
    });
    group.finish();
}

fn training_epoch(c: &mut Criterion) {
    let spec = SynthSpec { n_train: 100, n_dev: 20, n_test: 20, ..SynthSpec::layer_discovery(0) };
    let data = synth::generate(&spec).unwrap();
    let tagset = tag_names(spec.tags, spec.tag_scheme);
    let align = |s: &synth::SynthSplit| -> AlignedDataset {
        align_with_tagset(s.embeddings.clone(), &s.corpus, &tagset).unwrap()
    };
    let data = ExperimentData { train: align(&data.train), dev: align(&data.dev), test: align(&data.test) };
    let mut group = c.benchmark_group("train_epoch");
    group.sample_size(10);
    for scheme in ["layer:1", "concat", "wavg:0,1,2"] {
        let config = ExperimentConfig { scheme: scheme.into(), hidden_size: 32, max_epochs: 1, ..Default::default() };
        group.bench_with_input(BenchmarkId::from_parameter(scheme), &config, |b, config| {
            b.iter(|| train_on(config, &data, 1).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, crf, bilstm, training_epoch);
criterion_main!(benches);
