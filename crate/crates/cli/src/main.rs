use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::warn;

use layermix::embedstore::{decode_embeddings, parse_conll, MAGIC};
use layermix::harness::{compare_on, to_json_string, train_on, ExperimentData};
use layermix::mixer::parse_scheme_list;
use layermix::synth::{self, Prototypes, SynthSpec};
use layermix::{ConfigError, Error, ExperimentConfig, TagScheme};

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;
const EXIT_PARTIAL: u8 = 5;

/// Layer-mixing experiments for multi-layer contextual embeddings.
///
/// Set LAYERMIX_LOG=error|warn|info|debug for progress output on stderr.
#[derive(Parser, Debug)]
#[command(name = "layermix", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset from a JSON generator spec.
    GenFixtures {
        /// Generator spec (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one scheme with one seed and write the run result as JSON.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Result file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train several schemes over the seed list and test them against the best.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated schemes, e.g. `layer:1,avg,wavg:0,1`.
        #[arg(long)]
        schemes: String,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Report file; printed after the table when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarise an MLEB, CoNLL or prototype file.
    Inspect {
        path: PathBuf,
        /// How to read CoNLL tags.
        #[arg(long, default_value = "plain")]
        tag_scheme: TagScheme,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON with flat keys).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Maximum concurrent seed runs.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
}

/// `--key=value` overrides of config fields, applied after the config file.
#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long, alias = "data_dir")]
    data_dir: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, alias = "train_embeddings")]
    train_embeddings: Option<String>,
    #[arg(long, alias = "train_labels")]
    train_labels: Option<String>,
    #[arg(long, alias = "dev_embeddings")]
    dev_embeddings: Option<String>,
    #[arg(long, alias = "dev_labels")]
    dev_labels: Option<String>,
    #[arg(long, alias = "test_embeddings")]
    test_embeddings: Option<String>,
    #[arg(long, alias = "test_labels")]
    test_labels: Option<String>,
    #[arg(long, alias = "tag_scheme")]
    tag_scheme: Option<String>,
    #[arg(long, alias = "hidden_size")]
    hidden_size: Option<String>,
    #[arg(long)]
    dropout: Option<String>,
    #[arg(long)]
    variational: Option<String>,
    #[arg(long, alias = "logit_penalty")]
    logit_penalty: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    beta1: Option<String>,
    #[arg(long)]
    beta2: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long, alias = "clip_norm")]
    clip_norm: Option<String>,
    #[arg(long, alias = "batch_size")]
    batch_size: Option<String>,
    #[arg(long, alias = "max_epochs")]
    max_epochs: Option<String>,
    #[arg(long)]
    metric: Option<String>,
}

impl Overrides {
    fn pairs(&self) -> Vec<(String, String)> {
        let fields = [
            ("data_dir", &self.data_dir),
            ("dataset", &self.dataset),
            ("train_embeddings", &self.train_embeddings),
            ("train_labels", &self.train_labels),
            ("dev_embeddings", &self.dev_embeddings),
            ("dev_labels", &self.dev_labels),
            ("test_embeddings", &self.test_embeddings),
            ("test_labels", &self.test_labels),
            ("tag_scheme", &self.tag_scheme),
            ("hidden_size", &self.hidden_size),
            ("dropout", &self.dropout),
            ("variational", &self.variational),
            ("logit_penalty", &self.logit_penalty),
            ("lr", &self.lr),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("eps", &self.eps),
            ("clip_norm", &self.clip_norm),
            ("batch_size", &self.batch_size),
            ("max_epochs", &self.max_epochs),
            ("metric", &self.metric),
        ];
        let mut pairs = Vec::new();
        for (key, value) in fields {
            if let Some(v) = value {
                // Paths and names must stay strings even if they look like JSON.
                let quoted = matches!(key, "data_dir" | "dataset" | "tag_scheme" | "metric")
                    || key.ends_with("_embeddings")
                    || key.ends_with("_labels");
                let v = if quoted { serde_json::Value::String(v.clone()).to_string() } else { v.clone() };
                pairs.push((key.to_string(), v));
            }
        }
        pairs
    }
}

impl Common {
    fn load(&self, extra: Vec<(String, String)>) -> Result<ExperimentConfig, Error> {
        let mut overrides = self.overrides.pairs();
        if let Some(jobs) = self.jobs {
            overrides.push(("jobs".into(), jobs.to_string()));
        }
        overrides.extend(extra);
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LAYERMIX_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::Json { .. } => EXIT_CONFIG,
                Error::NonFiniteLoss { .. } => EXIT_NUMERIC,
                Error::Format(_) | Error::Conll(_) | Error::Align(_) | Error::Shape(_) | Error::Io { .. } => EXIT_DATA,
            };
        }
        if cause.is::<ConfigError>() || cause.is::<serde_json::Error>() {
            return EXIT_CONFIG;
        }
    }
    EXIT_DATA
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::GenFixtures { config, out, seed } => gen_fixtures(&config, &out, seed),
        Command::Train { common, scheme, seed, out } => train(&common, scheme, seed, out.as_deref()),
        Command::Compare { common, schemes, seeds, out } => compare(&common, &schemes, seeds, out.as_deref()),
        Command::Inspect { path, tag_scheme } => {
            println!("{}", inspect(&path, tag_scheme)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn gen_fixtures(config: &Path, out: &Path, seed: Option<u64>) -> Result<ExitCode> {
    let text = fs::read_to_string(config).map_err(|source| Error::Io { path: config.display().to_string(), source })?;
    let mut spec: SynthSpec = serde_json::from_str(&text).map_err(|e| ConfigError::new("config", e.to_string()))?;
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let data = synth::generate(&spec)?;
    fs::create_dir_all(out).map_err(|source| Error::Io { path: out.display().to_string(), source })?;
    for path in synth::write_fixtures(&data, out)? {
        println!("{}: {}", path.display(), inspect(&path, spec.tag_scheme)?);
    }
    Ok(ExitCode::SUCCESS)
}

fn train(common: &Common, scheme: Option<String>, seed: Option<u64>, out: Option<&Path>) -> Result<ExitCode> {
    let mut extra = Vec::new();
    if let Some(scheme) = scheme {
        extra.push(("scheme".to_string(), serde_json::Value::String(scheme).to_string()));
    }
    let config = common.load(extra)?;
    let seed = seed.unwrap_or(config.seeds[0]);
    let data = ExperimentData::load(&config)?;
    config.mix_scheme()?.validate(data.num_layers())?;
    let result = train_on(&config, &data, seed)?;
    emit(&to_json_string(&result), out)?;
    Ok(ExitCode::SUCCESS)
}

fn compare(common: &Common, schemes: &str, seeds: Option<Vec<u64>>, out: Option<&Path>) -> Result<ExitCode> {
    let mut extra = Vec::new();
    if let Some(seeds) = seeds {
        extra.push(("seeds".to_string(), serde_json::to_string(&seeds)?));
    }
    let base = common.load(extra)?;
    let schemes = parse_scheme_list(schemes)?;
    if schemes.len() < 2 {
        return Err(Error::from(ConfigError::new("schemes", format!("need at least two schemes, got {}", schemes.len()))).into());
    }
    let configs: Vec<ExperimentConfig> = schemes.iter().map(|s| base.with_scheme(s)).collect();
    let data = ExperimentData::load(&base)?;
    let comparison = compare_on(&configs, &data)?;

    print!("{}", comparison.report.table());
    match out {
        Some(path) => emit(&comparison.report.to_json(), Some(path))?,
        None => {
            println!();
            print!("{}", comparison.report.to_json());
        }
    }
    if comparison.has_failures() {
        for (config, outcome) in configs.iter().zip(&comparison.outcomes) {
            for failure in &outcome.failures {
                eprintln!("scheme {} seed {} failed: {}", config.scheme, failure.seed, failure.error);
            }
        }
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Error> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })?;
            }
            fs::write(path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// One-line summary of a data file, chosen by magic bytes, then extension.
fn inspect(path: &Path, tag_scheme: TagScheme) -> Result<String> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if bytes.starts_with(&MAGIC) || ext == "mleb" {
        let dataset = decode_embeddings(&bytes).map_err(Error::from).with_context(|| path.display().to_string())?;
        return Ok(format!(
            "layers={} dim={} sentences={} tokens={}",
            dataset.num_layers(),
            dataset.dim(),
            dataset.len(),
            dataset.token_count()
        ));
    }
    if ext == "bin" {
        let p = Prototypes::from_bytes(&bytes).map_err(Error::from).with_context(|| path.display().to_string())?;
        return Ok(format!("prototypes tags={} dim={}", p.num_tags, p.dim));
    }
    let text = String::from_utf8(bytes).with_context(|| format!("{}: not UTF-8 text", path.display()))?;
    let (corpus, repairs) = parse_conll(&text, tag_scheme).map_err(Error::from).with_context(|| path.display().to_string())?;
    if !repairs.is_empty() {
        warn!("{}: {} BIO tags would be repaired", path.display(), repairs.len());
    }
    Ok(format!(
        "sentences={} tokens={} tagset={}",
        corpus.len(),
        corpus.token_count(),
        corpus.tagset().join(",")
    ))
}
