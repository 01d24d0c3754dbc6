//! Synthetic multi-layer embeddings in which exactly one layer carries the tag.
//!
//! Each tag `t` gets a prototype `u_t ~ N(0, I_D)`. A token tagged `t` gets
//! `u_t + N(0, sigma_signal^2 I)` on the informative layer and independent
//! `N(0, sigma_noise^2 I)` on every other layer. Tags are uniform under the
//! plain scheme and follow a small B/I/O Markov chain under BIO.
//!
//! Prototype `i` belongs to tag `tag_names(T, scheme)[i]`; the sidecar file
//! stores prototypes in that order.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedstore::{
    write_conll, write_embeddings, EmbeddingDataset, FormatError, LabeledCorpus, LabeledSentence, SentenceEmbedding,
    TagScheme,
};
use crate::error::{ConfigError, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub layers: usize,
    pub dim: usize,
    pub tags: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub informative_layer: usize,
    pub sigma_signal: f64,
    pub sigma_noise: f64,
    #[serde(default = "default_scheme")]
    pub tag_scheme: TagScheme,
    #[serde(default)]
    pub seed: u64,
}

fn default_scheme() -> TagScheme {
    TagScheme::Plain
}

impl SynthSpec {
    /// The fixture used throughout the tests: three layers, layer 1 informative.
    pub fn layer_discovery(seed: u64) -> Self {
        Self {
            layers: 3,
            dim: 16,
            tags: 3,
            n_train: 200,
            n_dev: 50,
            n_test: 50,
            min_len: 5,
            max_len: 10,
            informative_layer: 1,
            sigma_signal: 0.1,
            sigma_noise: 1.0,
            tag_scheme: TagScheme::Plain,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let at_least_one = [
            ("layers", self.layers),
            ("dim", self.dim),
            ("tags", self.tags),
            ("n_train", self.n_train),
            ("n_dev", self.n_dev),
            ("n_test", self.n_test),
            ("min_len", self.min_len),
        ];
        for (field, value) in at_least_one {
            if value == 0 {
                return Err(ConfigError::new(field, "must be at least 1"));
            }
        }
        if self.min_len > self.max_len {
            return Err(ConfigError::new("max_len", format!("{} is below min_len {}", self.max_len, self.min_len)));
        }
        if self.informative_layer >= self.layers {
            return Err(ConfigError::new(
                "informative_layer",
                format!("{} out of range for {} layers", self.informative_layer, self.layers),
            ));
        }
        for (field, sigma) in [("sigma_signal", self.sigma_signal), ("sigma_noise", self.sigma_noise)] {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(ConfigError::new(field, format!("must be positive, got {sigma}")));
            }
        }
        if self.tag_scheme == TagScheme::Bio && self.tags.is_multiple_of(2) {
            return Err(ConfigError::new("tags", "BIO needs an odd tag count (O plus B/I pairs)"));
        }
        Ok(())
    }
}

/// Canonical tag names: `T0..` for plain, `O, B-E0, I-E0, B-E1, ...` for BIO.
pub fn tag_names(num_tags: usize, scheme: TagScheme) -> Vec<String> {
    match scheme {
        TagScheme::Plain => (0..num_tags).map(|t| format!("T{t}")).collect(),
        TagScheme::Bio => {
            let mut names = vec!["O".to_string()];
            for k in 0..num_tags.saturating_sub(1) / 2 {
                names.push(format!("B-E{k}"));
                names.push(format!("I-E{k}"));
            }
            names
        }
    }
}

/// Tag prototypes, row-major `num_tags x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    pub num_tags: usize,
    pub dim: usize,
    pub vectors: Vec<f32>,
}

impl Prototypes {
    pub fn vector(&self, tag: usize) -> &[f32] {
        &self.vectors[tag * self.dim..(tag + 1) * self.dim]
    }

    /// Sidecar bytes: u32 LE T, u32 LE D, T*D f32 LE.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.vectors.len());
        out.extend_from_slice(&(self.num_tags as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let truncated = |expected: usize| FormatError::Truncated {
            offset: bytes.len().min(expected) as u64,
            expected: expected as u64,
            actual: bytes.len() as u64,
        };
        if bytes.len() < 8 {
            return Err(truncated(8));
        }
        let num_tags = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let expected = 8 + 4 * num_tags * dim;
        if bytes.len() < expected {
            return Err(truncated(expected));
        }
        if bytes.len() > expected {
            return Err(FormatError::TrailingBytes { offset: expected as u64, extra: (bytes.len() - expected) as u64 });
        }
        let mut vectors = Vec::with_capacity(num_tags * dim);
        for (i, c) in bytes[8..].chunks_exact(4).enumerate() {
            let value = f32::from_le_bytes(c.try_into().unwrap());
            if !value.is_finite() {
                return Err(FormatError::NonFinite { offset: 8 + 4 * i as u64, value });
            }
            vectors.push(value);
        }
        Ok(Self { num_tags, dim, vectors })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSplit {
    pub embeddings: EmbeddingDataset,
    pub corpus: LabeledCorpus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub train: SynthSplit,
    pub dev: SynthSplit,
    pub test: SynthSplit,
    pub prototypes: Prototypes,
}

impl SynthData {
    pub fn splits(&self) -> [(&'static str, &SynthSplit); 3] {
        [("train", &self.train), ("dev", &self.dev), ("test", &self.test)]
    }
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Next tag index under the BIO chain, given the previous index (if any).
/// Index 0 is `O`; `1 + 2k` is `B-Ek`, `2 + 2k` is `I-Ek`.
fn next_bio_tag<R: Rng + ?Sized>(prev: Option<usize>, num_types: usize, rng: &mut R) -> usize {
    if num_types == 0 {
        return 0;
    }
    let begin_any = |rng: &mut R| 1 + 2 * rng.random_range(0..num_types);
    let u: f64 = rng.random();
    match prev {
        Some(p) if p > 0 => {
            let chunk = (p - 1) / 2;
            if u < 0.4 {
                2 + 2 * chunk
            } else if u < 0.7 {
                0
            } else {
                begin_any(rng)
            }
        }
        _ => {
            if u < 0.5 {
                0
            } else {
                begin_any(rng)
            }
        }
    }
}

fn generate_split<R: Rng + ?Sized>(spec: &SynthSpec, count: usize, prototypes: &Prototypes, rng: &mut R) -> SynthSplit {
    let names = tag_names(spec.tags, spec.tag_scheme);
    let (layers, dim) = (spec.layers, spec.dim);
    let mut embeddings = EmbeddingDataset::new(layers, dim).expect("validated spec");
    let mut sentences = Vec::with_capacity(count);
    for _ in 0..count {
        let n = rng.random_range(spec.min_len..=spec.max_len);
        let mut tags = Vec::with_capacity(n);
        for i in 0..n {
            let tag = match spec.tag_scheme {
                TagScheme::Plain => rng.random_range(0..spec.tags),
                TagScheme::Bio => next_bio_tag(if i == 0 { None } else { Some(tags[i - 1]) }, (spec.tags - 1) / 2, rng),
            };
            tags.push(tag);
        }
        let mut data = Vec::with_capacity(layers * n * dim);
        for layer in 0..layers {
            for &tag in &tags {
                if layer == spec.informative_layer {
                    let proto = prototypes.vector(tag);
                    data.extend(proto.iter().map(|&u| (f64::from(u) + spec.sigma_signal * gaussian(rng)) as f32));
                } else {
                    data.extend((0..dim).map(|_| (spec.sigma_noise * gaussian(rng)) as f32));
                }
            }
        }
        let tokens: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        embeddings
            .push(SentenceEmbedding::new(tokens.clone(), layers, dim, data).expect("finite by construction"))
            .expect("shape by construction");
        sentences.push(LabeledSentence { tokens, tags: tags.iter().map(|&t| names[t].clone()).collect() });
    }
    let corpus = LabeledCorpus::with_tagset(sentences, names, spec.tag_scheme).expect("tags by construction");
    SynthSplit { embeddings, corpus }
}

/// Generates train/dev/test splits and the prototypes. Deterministic in `spec.seed`.
pub fn generate(spec: &SynthSpec) -> Result<SynthData, ConfigError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vectors = (0..spec.tags * spec.dim).map(|_| gaussian(&mut rng) as f32).collect();
    let prototypes = Prototypes { num_tags: spec.tags, dim: spec.dim, vectors };
    let train = generate_split(spec, spec.n_train, &prototypes, &mut rng);
    let dev = generate_split(spec, spec.n_dev, &prototypes, &mut rng);
    let test = generate_split(spec, spec.n_test, &prototypes, &mut rng);
    Ok(SynthData { train, dev, test, prototypes })
}

pub const PROTOTYPE_FILE: &str = "prototypes.bin";

/// Writes `{train,dev,test}.{mleb,conll}` and the prototype sidecar into `dir`.
pub fn write_fixtures(data: &SynthData, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(7);
    for (name, split) in data.splits() {
        let mleb = dir.join(format!("{name}.mleb"));
        write_embeddings(&split.embeddings, &mleb)?;
        written.push(mleb);
        let conll = dir.join(format!("{name}.conll"));
        write_conll(&split.corpus, &conll)?;
        written.push(conll);
    }
    let protos = dir.join(PROTOTYPE_FILE);
    data.prototypes.write(&protos)?;
    written.push(protos);
    Ok(written)
}

/// Classifies every token by its nearest prototype (Euclidean) on `layer`
/// and returns the fraction matching the gold tags.
pub fn nearest_prototype_accuracy(
    dataset: &EmbeddingDataset,
    corpus: &LabeledCorpus,
    layer: usize,
    prototypes: &Prototypes,
) -> Result<f64> {
    if layer >= dataset.num_layers() {
        return Err(ConfigError::new("layer", format!("{layer} out of range for {} layers", dataset.num_layers())).into());
    }
    if prototypes.dim != dataset.dim() {
        return Err(ConfigError::new(
            "prototypes",
            format!("dimension {} does not match embeddings ({})", prototypes.dim, dataset.dim()),
        )
        .into());
    }
    let names = tag_names(prototypes.num_tags, corpus.scheme());
    if let Some(missing) = corpus.tagset().iter().find(|t| !names.contains(t)) {
        return Err(ConfigError::new("prototypes", format!("no prototype for tag `{missing}`")).into());
    }
    if dataset.len() != corpus.len() {
        return Err(crate::embedstore::AlignError::SentenceCount {
            sentence: dataset.len().min(corpus.len()),
            embeddings: dataset.len(),
            corpus: corpus.len(),
        }
        .into());
    }

    let (mut correct, mut total) = (0usize, 0usize);
    for (i, (emb, labeled)) in dataset.sentences().iter().zip(corpus.sentences()).enumerate() {
        if emb.len() != labeled.tags.len() {
            return Err(crate::embedstore::AlignError::TokenCount {
                sentence: i,
                embeddings: emb.len(),
                corpus: labeled.tags.len(),
            }
            .into());
        }
        for (t, gold) in labeled.tags.iter().enumerate() {
            let v = emb.vector(layer, t);
            let mut best = (f64::INFINITY, 0);
            for k in 0..prototypes.num_tags {
                let d: f64 = v
                    .iter()
                    .zip(prototypes.vector(k))
                    .map(|(&a, &b)| (f64::from(a) - f64::from(b)).powi(2))
                    .sum();
                if d < best.0 {
                    best = (d, k);
                }
            }
            correct += usize::from(&names[best.1] == gold);
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}
