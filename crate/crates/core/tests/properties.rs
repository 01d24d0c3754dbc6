use proptest::collection::vec;
use proptest::prelude::*;

use layermix::crf::{log_partition, marginals, score_sequence, viterbi_decode, CrfParams};
use layermix::embedstore::{decode_embeddings, encode_embeddings};
use layermix::harness::welch_t_test;
use layermix::metrics::{chunk_f1, extract_spans};
use layermix::mixer::{mix_forward, parse_scheme_list, softmax, MixParams, MixScheme};
use layermix::optim::{adam_step, AdamConfig, AdamState};
use layermix::{EmbeddingDataset, SentenceEmbedding};

fn token() -> impl Strategy<Value = String> {
    "[a-zé日🙂0-9-]{0,6}"
}

fn dataset() -> impl Strategy<Value = EmbeddingDataset> {
    (1usize..4, 1usize..5).prop_flat_map(|(layers, dim)| {
        let sentence = vec(token(), 0..5).prop_flat_map(move |tokens| {
            let n = tokens.len();
            (Just(tokens), vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), layers * n * dim))
        });
        vec(sentence, 0..5).prop_map(move |sentences| {
            let mut ds = EmbeddingDataset::new(layers, dim).unwrap();
            for (tokens, data) in sentences {
                ds.push(SentenceEmbedding::new(tokens, layers, dim, data).unwrap()).unwrap();
            }
            ds
        })
    })
}

/// A row-major `L x D` matrix with `L >= 3`.
fn layer_matrix() -> impl Strategy<Value = (usize, Vec<f64>)> {
    (3usize..6, 1usize..6).prop_flat_map(|(l, d)| (Just(l), vec(-5.0f64..5.0, l * d)))
}

fn crf_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, CrfParams)> {
    (1usize..6, 1usize..5).prop_flat_map(|(n, t)| {
        (vec(vec(-3.0f64..3.0, t), n), vec(-3.0f64..3.0, t * t), vec(-3.0f64..3.0, t), vec(-3.0f64..3.0, t)).prop_map(
            move |(e, transitions, start, end)| (e, CrfParams { num_tags: t, transitions, start, end }),
        )
    })
}

fn bio_tag() -> impl Strategy<Value = String> {
    prop_oneof![Just("O".to_string()), "[BI]-(PER|LOC)"]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn mleb_round_trip_is_bitwise(ds in dataset()) {
        let bytes = encode_embeddings(&ds).unwrap();
        let back = decode_embeddings(&bytes).unwrap();
        prop_assert_eq!(back.num_layers(), ds.num_layers());
        prop_assert_eq!(back.dim(), ds.dim());
        prop_assert_eq!(back.len(), ds.len());
        for (a, b) in back.sentences().iter().zip(ds.sentences()) {
            prop_assert_eq!(a.tokens(), b.tokens());
            let bits = |s: &SentenceEmbedding| s.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(a), bits(b));
        }
        prop_assert_eq!(encode_embeddings(&back).unwrap(), bytes);
    }

    #[test]
    fn truncation_always_detected(ds in dataset(), cut in 1usize..64) {
        let bytes = encode_embeddings(&ds).unwrap();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(decode_embeddings(&bytes[..keep]).is_err());
    }

    #[test]
    fn uniform_learned_mix_is_the_average((l, h) in layer_matrix()) {
        let all = MixScheme::LearnedWeighted((0..l).collect());
        let a = mix_forward(&h, l, &all, &MixParams::init(&all)).unwrap();
        let b = mix_forward(&h, l, &MixScheme::FixedAverage, &MixParams::init(&MixScheme::FixedAverage)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn excluded_layers_never_read((l, h) in layer_matrix(), noise in -100.0f64..100.0, w in vec(-3.0f64..3.0, 2)) {
        let scheme = MixScheme::LearnedWeighted(vec![0, 1]);
        let params = MixParams { logits: w, gamma: 1.3 };
        let d = h.len() / l;
        let mut perturbed = h.clone();
        perturbed[2 * d..].iter_mut().for_each(|v| *v += noise);
        let a = mix_forward(&h, l, &scheme, &params).unwrap();
        let b = mix_forward(&perturbed, l, &scheme, &params).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn softmax_shift_invariant(w in vec(-20.0f64..20.0, 1..6), c in -50.0f64..50.0) {
        let shifted: Vec<f64> = w.iter().map(|x| x + c).collect();
        let (a, b) = (softmax(&w), softmax(&shifted));
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn scheme_strings_round_trip(layers in vec(0usize..6, 1..4), single in 0usize..6) {
        let mut active: Vec<usize> = Vec::new();
        for l in layers {
            if !active.contains(&l) {
                active.push(l);
            }
        }
        for scheme in [MixScheme::LearnedWeighted(active), MixScheme::Individual(single), MixScheme::Concat, MixScheme::FixedAverage] {
            let text = scheme.to_string();
            prop_assert_eq!(text.parse::<MixScheme>().unwrap(), scheme.clone());
            let list = parse_scheme_list(&format!("avg,{text},concat")).unwrap();
            prop_assert_eq!(list, vec![MixScheme::FixedAverage, scheme, MixScheme::Concat]);
        }
    }

    #[test]
    fn viterbi_dominates_every_path((e, crf) in crf_instance(), seed in any::<u64>()) {
        let (path, best) = viterbi_decode(&e, &crf).unwrap();
        prop_assert_eq!(score_sequence(&e, &crf, &path).unwrap(), best);
        let t = crf.num_tags as u64;
        let other: Vec<usize> = (0..e.len()).map(|i| ((seed >> (3 * i)) % t) as usize).collect();
        prop_assert!(score_sequence(&e, &crf, &other).unwrap() <= best);
        prop_assert!(best <= log_partition(&e, &crf).unwrap());
    }

    #[test]
    fn marginals_are_distributions((e, crf) in crf_instance()) {
        for row in marginals(&e, &crf).unwrap() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0 + 1e-12).contains(&p)));
        }
    }

    #[test]
    fn chunk_f1_bounds_and_symmetry(pairs in vec(vec((bio_tag(), bio_tag()), 1..8), 1..4)) {
        let gold: Vec<Vec<String>> = pairs.iter().map(|s| s.iter().map(|p| p.0.clone()).collect()).collect();
        let pred: Vec<Vec<String>> = pairs.iter().map(|s| s.iter().map(|p| p.1.clone()).collect()).collect();
        let s = chunk_f1(&gold, &pred).unwrap();
        let r = chunk_f1(&pred, &gold).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.f1));
        prop_assert_eq!(s.precision, r.recall);
        prop_assert_eq!(s.f1, r.f1);
        let self_score = chunk_f1(&gold, &gold).unwrap();
        let spans: usize = gold.iter().map(|g| extract_spans(g).len()).sum();
        prop_assert_eq!(self_score.f1, if spans > 0 { 1.0 } else { 0.0 });
    }

    #[test]
    fn adam_first_step_bounded(theta in vec(-5.0f64..5.0, 1..8), g in vec(-5.0f64..5.0, 8), lr in 1e-4f64..1e-1) {
        let g = &g[..theta.len()];
        let mut p = theta.clone();
        let mut state = AdamState::new(AdamConfig { lr, ..AdamConfig::default() }, [p.len()]);
        adam_step(&mut [&mut p], &[g], &mut state).unwrap();
        for ((new, old), gi) in p.iter().zip(&theta).zip(g) {
            let delta = new - old;
            prop_assert!(delta.abs() <= lr * (1.0 + 1e-9));
            prop_assert!(delta * gi <= 0.0);
        }
    }

    #[test]
    fn welch_is_scale_invariant(a in vec(0.0f64..1.0, 2..8), b in vec(0.0f64..1.0, 2..8), k in 0.1f64..100.0) {
        let base = welch_t_test(&a, &b).unwrap();
        let scale = |v: &[f64]| v.iter().map(|x| x * k).collect::<Vec<_>>();
        let scaled = welch_t_test(&scale(&a), &scale(&b)).unwrap();
        prop_assert!((base.p - scaled.p).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&base.p));
    }
}

#[test]
fn welch_matches_reference_values() {
    // scipy.stats.ttest_ind(a, b, equal_var=False)
    let w = welch_t_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert!((w.t - -3.6742346141747673).abs() < 1e-12);
    assert!((w.df - 4.0).abs() < 1e-12);
    assert!((w.p - 0.021311641128756727).abs() < 1e-9);

    let w = welch_t_test(&[1.0, 2.5, 2.0, 4.0], &[3.0, 3.5, 6.0]).unwrap();
    assert!((w.t - -1.6014036838562964).abs() < 1e-12);
    assert!((w.df - 3.716255728001259).abs() < 1e-9);
    assert!((w.p - 0.18992253782614946).abs() < 1e-9);
}
