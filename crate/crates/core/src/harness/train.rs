use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Metric};
use super::model::TaggerModel;
use crate::embedstore::{align_with_tagset, load_conll, load_embeddings, AlignedDataset};
use crate::error::{ConfigError, Error, Result};
use crate::metrics;
use crate::mixer::logit_penalty;
use crate::neuralnet::Parameters;
use crate::optim::{adam_step, clip_global_norm, AdamState};

/// Train, dev and test splits aligned against one shared tagset.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub train: AlignedDataset,
    pub dev: AlignedDataset,
    pub test: AlignedDataset,
}

impl ExperimentData {
    /// Loads and aligns the six files named by the config. The tagset is the
    /// train tagset followed by any tags first seen in dev, then test.
    pub fn load(config: &ExperimentConfig) -> Result<Self> {
        let paths = config.data_paths()?;
        let mut splits = Vec::with_capacity(3);
        for (emb, labels) in [&paths.train, &paths.dev, &paths.test] {
            let embeddings = load_embeddings(emb)?;
            let (corpus, repairs) = load_conll(labels, config.tag_scheme)?;
            if !repairs.is_empty() {
                info!("{}: repaired {} BIO tags", labels.display(), repairs.len());
            }
            splits.push((embeddings, corpus));
        }
        let mut tagset: Vec<String> = Vec::new();
        for (_, corpus) in &splits {
            for tag in corpus.tagset() {
                if !tagset.contains(tag) {
                    tagset.push(tag.clone());
                }
            }
        }
        let (layers, dim) = (splits[0].0.num_layers(), splits[0].0.dim());
        for (name, (emb, _)) in ["dev", "test"].iter().zip(&splits[1..]) {
            if (emb.num_layers(), emb.dim()) != (layers, dim) {
                return Err(ConfigError::new(
                    format!("{name}_embeddings"),
                    format!("shape {}x{} differs from train {layers}x{dim}", emb.num_layers(), emb.dim()),
                )
                .into());
            }
        }
        let mut aligned = splits
            .into_iter()
            .map(|(emb, corpus)| align_with_tagset(emb, &corpus, &tagset))
            .collect::<Result<Vec<_>, _>>()?;
        let test = aligned.pop().unwrap();
        let dev = aligned.pop().unwrap();
        let train = aligned.pop().unwrap();
        Ok(Self { train, dev, test })
    }

    pub fn num_layers(&self) -> usize {
        self.train.num_layers
    }

    pub fn dim(&self) -> usize {
        self.train.dim
    }

    pub fn tagset(&self) -> &[String] {
        &self.train.tagset
    }
}

/// Outcome of one `(scheme, seed)` training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub scheme: String,
    pub seed: u64,
    pub metric: Metric,
    /// Dev score after each epoch.
    pub dev_scores: Vec<f64>,
    /// Zero-based epoch whose parameters produced `test_score`.
    pub selected_epoch: usize,
    pub test_score: f64,
    /// Wall-clock training time of each epoch; the only non-deterministic field.
    pub epoch_seconds: Vec<f64>,
    /// `softmax(w)` of the selected parameters, for learned schemes.
    pub mix_weights: Option<Vec<f64>>,
    pub gamma: Option<f64>,
}

/// Scores a model on a split with dropout disabled.
pub fn evaluate(model: &TaggerModel, data: &AlignedDataset, metric: Metric) -> Result<f64> {
    let mut gold = Vec::with_capacity(data.len());
    let mut pred = Vec::with_capacity(data.len());
    for s in &data.sentences {
        pred.push(model.predict(&s.embedding)?);
        gold.push(s.tags.clone());
    }
    let score = match metric {
        Metric::Accuracy => metrics::token_accuracy(&gold, &pred)?,
        Metric::ChunkF1 => {
            let names = |seqs: &[Vec<usize>]| -> Vec<Vec<&str>> {
                seqs.iter().map(|s| s.iter().map(|&t| data.tagset[t].as_str()).collect()).collect()
            };
            metrics::chunk_f1(&names(&gold), &names(&pred))?.f1
        }
    };
    Ok(score)
}

/// Loads the configured data and trains one seed.
pub fn train_one(config: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    let data = ExperimentData::load(config)?;
    train_on(config, &data, seed)
}

/// Trains one seed on already loaded data.
///
/// All randomness (initialisation, shuffling, dropout) comes from a single
/// generator seeded with `seed`, consumed in a fixed order, so the result is
/// a pure function of `(config, data, seed)` apart from `epoch_seconds`.
pub fn train_on(config: &ExperimentConfig, data: &ExperimentData, seed: u64) -> Result<RunResult> {
    config.validate()?;
    let scheme = config.mix_scheme()?;
    scheme.validate(data.num_layers())?;
    let dropout = config.dropout_spec()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = TaggerModel::init(
        scheme.clone(),
        data.num_layers(),
        data.dim(),
        config.hidden_size,
        data.tagset().len(),
        &mut rng,
    );
    let mut grads = model.zeros_like();
    let mut adam = AdamState::new(config.adam(), model.tensors().iter().map(|t| t.len()));

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut dev_scores = Vec::with_capacity(config.max_epochs);
    let mut epoch_seconds = Vec::with_capacity(config.max_epochs);
    let mut best: Option<(usize, f64, TaggerModel)> = None;

    for epoch in 0..config.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            grads.fill_zero();
            let mut loss = 0.0;
            for &i in batch {
                let s = &data.train.sentences[i];
                let masks = model.sample_masks(&dropout, s.embedding.len(), &mut rng);
                loss += model.forward_backward(&s.embedding, &s.tags, &masks, &mut grads)?;
            }
            let scale = 1.0 / batch.len() as f64;
            loss *= scale;
            grads.scale(scale);
            if scheme.is_learned() {
                let (penalty, grad) = logit_penalty(&model.mix, config.logit_penalty)?;
                loss += penalty;
                crate::linalg::add_assign(&mut grads.mix.logits, &grad);
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: batch_idx, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            let mut g = grads.tensors_mut();
            if let Some(max_norm) = config.clip_norm {
                clip_global_norm(&mut g, max_norm);
            }
            let g: Vec<&[f64]> = g.into_iter().map(|t| &*t).collect();
            adam_step(&mut model.tensors_mut(), &g, &mut adam)?;
        }
        epoch_seconds.push(started.elapsed().as_secs_f64());

        let dev = evaluate(&model, &data.dev, config.metric)?;
        debug!(
            "scheme {scheme} seed {seed} epoch {epoch}: train loss {:.4}, dev {dev:.4}",
            epoch_loss / data.train.len().max(1) as f64
        );
        dev_scores.push(dev);
        if best.as_ref().is_none_or(|(_, score, _)| dev > *score) {
            best = Some((epoch, dev, model.clone()));
        }
    }

    let (selected_epoch, selected) = match best {
        Some((epoch, _, snapshot)) => (epoch, snapshot),
        None => (0, model),
    };
    let test_score = evaluate(&selected, &data.test, config.metric)?;
    let (mix_weights, gamma) = match selected.mix_weights() {
        Some((w, g)) => (Some(w), Some(g)),
        None => (None, None),
    };
    info!("scheme {scheme} seed {seed}: selected epoch {selected_epoch}, test {test_score:.4}");
    Ok(RunResult {
        scheme: scheme.to_string(),
        seed,
        metric: config.metric,
        dev_scores,
        selected_epoch,
        test_score,
        epoch_seconds,
        mix_weights,
        gamma,
    })
}

#[derive(Debug)]
pub struct SeedFailure {
    pub seed: u64,
    pub error: Error,
}

/// Results of every seed of one configuration, in seed order.
#[derive(Debug, Default)]
pub struct MultiSeedOutcome {
    pub results: Vec<RunResult>,
    pub failures: Vec<SeedFailure>,
}

/// Trains every seed in `config.seeds`, up to `config.jobs` at a time.
/// Output order is seed order regardless of completion order.
pub fn run_multi_seed(config: &ExperimentConfig, data: &ExperimentData) -> Result<MultiSeedOutcome> {
    config.validate()?;
    config.mix_scheme()?.validate(data.num_layers())?;
    let runs: Vec<(u64, Result<RunResult>)> = if config.jobs <= 1 {
        config.seeds.iter().map(|&seed| (seed, train_on(config, data, seed))).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| ConfigError::new("jobs", e.to_string()))?;
        pool.install(|| config.seeds.par_iter().map(|&seed| (seed, train_on(config, data, seed))).collect())
    };
    let mut outcome = MultiSeedOutcome::default();
    for (seed, run) in runs {
        match run {
            Ok(r) => outcome.results.push(r),
            Err(error) => outcome.failures.push(SeedFailure { seed, error }),
        }
    }
    Ok(outcome)
}
