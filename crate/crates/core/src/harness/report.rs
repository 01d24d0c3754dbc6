use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use super::config::{ExperimentConfig, Metric};
use super::stats::{mean, spread, std_dev, welch_t_test};
use super::train::{run_multi_seed, ExperimentData, MultiSeedOutcome, RunResult};
use crate::error::{ConfigError, Result};

/// Significance level for flagging a scheme as worse than the best.
pub const ALPHA: f64 = 0.01;

/// One row of a comparison: a scheme summarised over its seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSummary {
    pub scheme: String,
    /// Seeds that completed, in seed order.
    pub seeds: Vec<u64>,
    pub test_scores: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    /// `max - min` of the per-seed test scores.
    pub spread: f64,
    pub epoch_seconds_mean: f64,
    /// Welch p-value against the best scheme; `None` for the best scheme itself
    /// or when either side has fewer than two scores.
    pub p_vs_best: Option<f64>,
    pub significantly_worse: bool,
    /// Per-layer mean over seeds of the selected `softmax(w)`.
    pub mix_weights: Option<Vec<f64>>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonReport {
    pub dataset: String,
    pub metric: Metric,
    pub schemes: Vec<SchemeSummary>,
}

impl ComparisonReport {
    /// Builds the report from per-scheme results. The best scheme is the one
    /// with the highest mean test score, ties going to the earlier entry;
    /// schemes without any results can never be best.
    pub fn build(dataset: impl Into<String>, metric: Metric, runs: &[(String, Vec<RunResult>)]) -> Self {
        let mut schemes: Vec<SchemeSummary> = runs.iter().map(|(scheme, results)| summarise(scheme, results)).collect();
        if let Some(b) = best_index(&schemes) {
            let best_scores = schemes[b].test_scores.clone();
            for (i, s) in schemes.iter_mut().enumerate() {
                if i == b {
                    continue;
                }
                s.p_vs_best = welch_t_test(&s.test_scores, &best_scores).ok().map(|w| w.p);
                s.significantly_worse = s.p_vs_best.is_some_and(|p| p < ALPHA);
            }
        }
        Self { dataset: dataset.into(), metric, schemes }
    }

    /// Index of the best scheme, as used for the p-values.
    pub fn best(&self) -> Option<usize> {
        best_index(&self.schemes)
    }

    pub fn scheme(&self, name: &str) -> Option<&SchemeSummary> {
        self.schemes.iter().find(|s| s.scheme == name)
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    /// Plain-text table. Column headers are the JSON field names; `seeds`
    /// shows the number of completed seeds and `test_scores` is omitted.
    pub fn table(&self) -> String {
        let headers = [
            "scheme",
            "seeds",
            "mean",
            "std",
            "spread",
            "epoch_seconds_mean",
            "p_vs_best",
            "significantly_worse",
            "gamma",
            "mix_weights",
        ];
        let opt = |v: Option<f64>, digits: usize| v.map_or("-".to_string(), |x| format!("{x:.digits$}"));
        let rows: Vec<Vec<String>> = self
            .schemes
            .iter()
            .map(|s| {
                vec![
                    s.scheme.clone(),
                    s.seeds.len().to_string(),
                    format!("{:.4}", s.mean),
                    format!("{:.4}", s.std),
                    format!("{:.4}", s.spread),
                    format!("{:.3}", s.epoch_seconds_mean),
                    opt(s.p_vs_best, 4),
                    s.significantly_worse.to_string(),
                    opt(s.gamma, 3),
                    s.mix_weights.as_ref().map_or("-".to_string(), |w| {
                        w.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(",")
                    }),
                ]
            })
            .collect();
        let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[&str]| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&headers);
        for row in &rows {
            line(&row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        out
    }
}

fn best_index(schemes: &[SchemeSummary]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in schemes.iter().enumerate() {
        if !s.test_scores.is_empty() && best.is_none_or(|b| s.mean > schemes[b].mean) {
            best = Some(i);
        }
    }
    best
}

fn summarise(scheme: &str, results: &[RunResult]) -> SchemeSummary {
    let test_scores: Vec<f64> = results.iter().map(|r| r.test_score).collect();
    let epoch_seconds: Vec<f64> = results.iter().flat_map(|r| r.epoch_seconds.iter().copied()).collect();
    let weights: Vec<&Vec<f64>> = results.iter().filter_map(|r| r.mix_weights.as_ref()).collect();
    let mix_weights = (!weights.is_empty()).then(|| {
        let mut avg = vec![0.0; weights[0].len()];
        for w in &weights {
            crate::linalg::axpy(1.0 / weights.len() as f64, w, &mut avg);
        }
        avg
    });
    let gammas: Vec<f64> = results.iter().filter_map(|r| r.gamma).collect();
    SchemeSummary {
        scheme: scheme.to_string(),
        seeds: results.iter().map(|r| r.seed).collect(),
        mean: mean(&test_scores),
        std: std_dev(&test_scores),
        spread: spread(&test_scores),
        test_scores,
        epoch_seconds_mean: mean(&epoch_seconds),
        p_vs_best: None,
        significantly_worse: false,
        mix_weights,
        gamma: (!gammas.is_empty()).then(|| mean(&gammas)),
    }
}

/// A finished comparison together with the raw per-seed results.
#[derive(Debug)]
pub struct Comparison {
    pub report: ComparisonReport,
    /// One entry per config, in config order.
    pub outcomes: Vec<MultiSeedOutcome>,
}

impl Comparison {
    pub fn has_failures(&self) -> bool {
        self.outcomes.iter().any(|o| !o.failures.is_empty())
    }
}

/// Trains every config over its seeds and compares the schemes. All configs
/// must name the same data and the same seed list.
pub fn compare_schemes(configs: &[ExperimentConfig]) -> Result<Comparison> {
    check_comparable(configs)?;
    let data = ExperimentData::load(&configs[0])?;
    compare_on(configs, &data)
}

/// [`compare_schemes`] on already loaded data.
pub fn compare_on(configs: &[ExperimentConfig], data: &ExperimentData) -> Result<Comparison> {
    if configs.len() < 2 {
        return Err(ConfigError::new("schemes", format!("need at least two schemes, got {}", configs.len())).into());
    }
    for c in configs {
        if c.seeds != configs[0].seeds {
            return Err(ConfigError::new("seeds", "all schemes must use the same seed list").into());
        }
        c.validate()?;
        c.mix_scheme()?.validate(data.num_layers())?;
    }
    let mut outcomes = Vec::with_capacity(configs.len());
    let mut runs = Vec::with_capacity(configs.len());
    for c in configs {
        let outcome = run_multi_seed(c, data)?;
        runs.push((c.mix_scheme()?.to_string(), outcome.results.clone()));
        outcomes.push(outcome);
    }
    let report = ComparisonReport::build(configs[0].dataset_name(), configs[0].metric, &runs);
    Ok(Comparison { report, outcomes })
}

fn check_comparable(configs: &[ExperimentConfig]) -> Result<(), ConfigError> {
    if configs.len() < 2 {
        return Err(ConfigError::new("schemes", format!("need at least two schemes, got {}", configs.len())));
    }
    let paths = configs[0].data_paths()?;
    for c in &configs[1..] {
        if c.data_paths()? != paths {
            return Err(ConfigError::new("data_dir", "all schemes must share one dataset"));
        }
        if c.metric != configs[0].metric {
            return Err(ConfigError::new("metric", "all schemes must use the same metric"));
        }
    }
    Ok(())
}

/// Pretty JSON whose floats carry 17 significant digits, enough to
/// round-trip every `f64` exactly.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats::default());
    value.serialize(&mut ser).expect("serialising to memory cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

#[derive(Default)]
struct ExactFloats(PrettyFormatter<'static>);

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        write!(writer, "{value:.8e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}
