//! Experiment harness: epsilon sweeps over regression methods, metrics,
//! result files, and a self-contained synthetic benchmark.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{adassp, nonprivate_logistic, nonprivate_ols, objpert_logistic, AdaSspParams, ObjPertParams};
use crate::dataset::{load_csv, split, Attribute, AttributeKind, DiscreteDataset, Domain};
use crate::encoding::{encode, AttributeEncoding, EncodingSpec, Target};
use crate::mechanism::{AimLiteConfig, Mechanism};
use crate::privacy::PrivacyBudget;
use crate::ssp::{fit_from_marginals, predict, sigmoid, FittedModel, SspOptions, Task};
use crate::{Error, Result};

pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() || y_true.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "mse needs equal nonempty inputs, got {} and {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let total: f64 = y_true.iter().zip(y_pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / y_true.len() as f64)
}

/// Area under the ROC curve from the rank-sum statistic, ties counted 1/2.
pub fn auc(y_true: &[f64], scores: &[f64]) -> Result<f64> {
    if y_true.len() != scores.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels but {} scores",
            y_true.len(),
            scores.len()
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // rank sums are kept doubled so tied (half-integer) ranks stay integers
    let mut doubled_rank_sum: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let doubled_rank = (i + j + 2) as u64;
        for &k in &order[i..=j] {
            if y_true[k] > 0.0 {
                doubled_rank_sum += doubled_rank;
            }
        }
        i = j + 1;
    }
    let pos = y_true.iter().filter(|&&v| v > 0.0).count() as u64;
    let neg = y_true.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidParameter("auc needs both classes".into()));
    }
    let doubled_u = doubled_rank_sum - pos * (pos + 1);
    Ok(doubled_u as f64 / (2 * pos * neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DdsspAimlite,
    DdsspGaussian,
    DdsspExact,
    Adassp,
    Objpert,
    Nonprivate,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::DdsspAimlite,
        Method::DdsspGaussian,
        Method::DdsspExact,
        Method::Adassp,
        Method::Objpert,
        Method::Nonprivate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::DdsspAimlite => "ddssp-aimlite",
            Method::DdsspGaussian => "ddssp-gaussian",
            Method::DdsspExact => "ddssp-exact",
            Method::Adassp => "adassp",
            Method::Objpert => "objpert",
            Method::Nonprivate => "nonprivate",
        }
    }

    pub fn is_private(self) -> bool {
        !matches!(self, Method::DdsspExact | Method::Nonprivate)
    }

    pub fn supports(self, task: Task) -> bool {
        match self {
            Method::Adassp => task == Task::Linear,
            Method::Objpert => task == Task::Logistic,
            _ => true,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method `{s}`")))
    }
}

fn default_epsilons() -> Vec<f64> {
    vec![0.05, 0.1, 0.5, 1.0, 2.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub domain: PathBuf,
    /// Encoding sidecar; without one the domain defaults apply and `target`
    /// names the target attribute.
    pub encoding: Option<PathBuf>,
    pub target: Option<String>,
    pub task: Task,
    pub methods: Vec<Method>,
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub trials: usize,
    pub test_size: usize,
    pub train_cap: usize,
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
    pub aim: AimLiteConfig,
    pub ssp: SspOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: PathBuf::new(),
            domain: PathBuf::new(),
            encoding: None,
            target: None,
            task: Task::Linear,
            methods: vec![Method::DdsspAimlite, Method::Adassp, Method::Nonprivate],
            epsilons: default_epsilons(),
            delta: 1e-5,
            trials: 5,
            test_size: 1000,
            train_cap: 50_000,
            seed: 0,
            workers: None,
            aim: AimLiteConfig::default(),
            ssp: SspOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.epsilons.is_empty() {
            return Err(Error::InvalidParameter("methods and epsilons must be nonempty".into()));
        }
        if let Some(m) = self.methods.iter().find(|m| !m.supports(self.task)) {
            return Err(Error::InvalidParameter(format!("{m} does not support {} regression", self.task)));
        }
        for &e in &self.epsilons {
            PrivacyBudget::new(e, self.delta)?;
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be positive".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be positive".into()));
        }
        self.aim.validate()
    }

    fn load_inputs(&self) -> Result<(DiscreteDataset, EncodingSpec)> {
        let domain = Arc::new(Domain::load_json(&self.domain)?);
        let dataset = load_csv(&self.dataset, domain.clone(), true)?.dataset;
        let spec = match (&self.encoding, &self.target) {
            (Some(path), _) => EncodingSpec::load_json(&domain, path)?,
            (None, Some(name)) => {
                let t = domain.index_of(name).ok_or_else(|| Error::UnknownColumn(name.clone()))?;
                EncodingSpec::default_for(&domain, t)?
            }
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "experiment needs an encoding file or a target attribute".into(),
                ))
            }
        };
        Ok((dataset, spec))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub epsilon: f64,
    pub trial: usize,
    pub metric: String,
    pub value: f64,
    /// Seconds spent releasing and fitting.
    pub wall_time: f64,
    pub ridge: f64,
    pub rho_spent: Option<f64>,
    pub rho_total: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: Method,
    pub epsilon: f64,
    pub metric: String,
    pub trials: usize,
    pub mean: f64,
    /// Sample standard deviation over trials divided by `sqrt(trials)`.
    pub std_error: f64,
    pub median: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

pub fn aggregate(rows: &[ResultRow]) -> Vec<Aggregate> {
    let mut groups: Vec<(Method, f64, String, Vec<f64>)> = Vec::new();
    for r in rows {
        match groups
            .iter_mut()
            .find(|(m, e, metric, _)| *m == r.method && *e == r.epsilon && *metric == r.metric)
        {
            Some(g) => g.3.push(r.value),
            None => groups.push((r.method, r.epsilon, r.metric.clone(), vec![r.value])),
        }
    }
    let mut out: Vec<Aggregate> = groups
        .into_iter()
        .map(|(method, epsilon, metric, values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let std_error = if n > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                var.sqrt() / (n as f64).sqrt()
            } else {
                0.0
            };
            Aggregate {
                method,
                epsilon,
                metric,
                trials: n,
                mean,
                std_error,
                median: median(&values),
            }
        })
        .collect();
    out.sort_by(|a, b| (a.method, a.epsilon).partial_cmp(&(b.method, b.epsilon)).unwrap_or(Ordering::Equal));
    out
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable seed derived from a base seed and a sequence of components.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

fn method_tag(m: Method) -> u64 {
    // FNV-1a over the name, so tags do not depend on enum order
    m.name()
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x100_0000_01b3))
}

/// Shared by every method within a trial so they see the same split.
pub fn split_seed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed, &[u64::MAX, trial as u64])
}

pub fn trial_seed(seed: u64, method: Method, epsilon_index: usize, trial: usize) -> u64 {
    derive_seed(seed, &[method_tag(method), epsilon_index as u64, trial as u64])
}

struct Job {
    method: Method,
    epsilon_index: usize,
    epsilon: f64,
    trial: usize,
}

/// Train one method on `train`. Marginal-based methods hand the regression
/// step only the mechanism output.
pub fn fit_method(
    method: Method,
    train: &DiscreteDataset,
    spec: &EncodingSpec,
    task: Task,
    budget: PrivacyBudget,
    config: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(FittedModel, Option<(f64, f64)>)> {
    let mechanism = match method {
        Method::DdsspAimlite => Some(Mechanism::AimLite(budget, config.aim)),
        Method::DdsspGaussian => Some(Mechanism::Gaussian(budget)),
        Method::DdsspExact => Some(Mechanism::Exact),
        _ => None,
    };
    if let Some(mech) = mechanism {
        let released = mech.release(train, rng)?;
        let ledger = method
            .is_private()
            .then(|| (released.ledger.rho_spent(), released.ledger.rho_total()));
        let model = fit_from_marginals(&released, spec, task, &config.ssp)?;
        return Ok((model, ledger));
    }
    let enc = encode(train, spec)?;
    let intercept = config.ssp.intercept;
    let model = match (method, task) {
        (Method::Adassp, _) => {
            let mut params = AdaSspParams::new(budget, enc.x_bound, enc.y_bound);
            params.intercept = intercept;
            adassp(&enc.x, &enc.y, &params, rng)?
        }
        (Method::Objpert, _) => {
            spec.validate_logistic()?;
            let mut params = ObjPertParams::new(budget, enc.x_bound);
            params.intercept = intercept;
            objpert_logistic(&enc.x, &enc.y, &params, rng)?
        }
        (_, Task::Linear) => nonprivate_ols(&enc.x, &enc.y, intercept)?,
        (_, Task::Logistic) => {
            spec.validate_logistic()?;
            nonprivate_logistic(&enc.x, &enc.y, intercept)?
        }
    };
    Ok((model, None))
}

fn run_job(
    job: &Job,
    dataset: &DiscreteDataset,
    spec: &EncodingSpec,
    config: &ExperimentConfig,
) -> Result<ResultRow> {
    let (train, test) = split(dataset, config.test_size, config.train_cap, split_seed(config.seed, job.trial))?;
    let test_enc = encode(&test, spec)?;
    let budget = PrivacyBudget::new(job.epsilon, config.delta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config.seed, job.method, job.epsilon_index, job.trial));

    let start = Instant::now();
    let (model, ledger) = fit_method(job.method, &train, spec, config.task, budget, config, &mut rng)?;
    let wall_time = start.elapsed().as_secs_f64();

    let predictions = predict(&model, &test_enc.x)?;
    let (metric, value) = match config.task {
        Task::Linear => ("mse", mse(test_enc.y.as_slice(), predictions.as_slice())?),
        Task::Logistic => ("auc", auc(test_enc.y.as_slice(), predictions.as_slice())?),
    };
    if !value.is_finite() {
        return Err(Error::NonFinite(metric.to_string()));
    }
    if let Some((spent, total)) = ledger {
        if !crate::privacy::within_budget(spent, total) {
            return Err(Error::BudgetExceeded {
                label: "experiment".into(),
                spent,
                rho: 0.0,
                total,
            });
        }
    }
    Ok(ResultRow {
        method: job.method,
        epsilon: job.epsilon,
        trial: job.trial,
        metric: metric.into(),
        value,
        wall_time,
        ridge: model.diagnostics.ridge,
        rho_spent: ledger.map(|l| l.0),
        rho_total: ledger.map(|l| l.1),
    })
}

/// Load the configured files and run the sweep.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let (dataset, spec) = config.load_inputs()?;
    run_experiment_on(&dataset, &spec, config)
}

/// Run every `(method, epsilon, trial)` combination on an in-memory dataset;
/// the path fields of `config` are ignored.
pub fn run_experiment_on(
    dataset: &DiscreteDataset,
    spec: &EncodingSpec,
    config: &ExperimentConfig,
) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &method in &config.methods {
        for (epsilon_index, &epsilon) in config.epsilons.iter().enumerate() {
            for trial in 0..config.trials {
                jobs.push(Job {
                    method,
                    epsilon_index,
                    epsilon,
                    trial,
                });
            }
        }
    }
    let work = || {
        jobs.par_iter()
            .map(|job| {
                run_job(job, dataset, spec, config).map_err(|e| {
                    e.context(format!("{} at epsilon {} trial {}", job.method, job.epsilon, job.trial))
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let mut rows = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    sort_rows(&mut rows);
    Ok(rows)
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by(|a, b| {
        (a.method, a.epsilon, a.trial)
            .partial_cmp(&(b.method, b.epsilon, b.trial))
            .unwrap_or(Ordering::Equal)
    });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidParameter(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<Aggregate>,
}

/// One line of the CSV output: a trial row or an aggregate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CsvLine {
    record: String,
    method: Method,
    epsilon: f64,
    metric: String,
    trial: Option<usize>,
    /// Trial metric, or the mean for aggregate lines.
    value: f64,
    std_error: Option<f64>,
    median: Option<f64>,
    trials: Option<usize>,
    wall_time: Option<f64>,
    ridge: Option<f64>,
    rho_spent: Option<f64>,
    rho_total: Option<f64>,
}

const CSV_HEADER: [&str; 13] = [
    "record", "method", "epsilon", "metric", "trial", "value", "std_error", "median", "trials", "wall_time", "ridge",
    "rho_spent", "rho_total",
];

/// Write rows and their per-(method, epsilon) aggregates.
pub fn emit(rows: &[ResultRow], format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let aggregates = aggregate(&sorted);
    match format {
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(&Results {
                rows: sorted,
                aggregates,
            })?;
            std::fs::write(path, text).map_err(|e| Error::io(path, e))
        }
        OutputFormat::Csv => {
            let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
            w.write_record(CSV_HEADER)?;
            for r in &sorted {
                w.serialize(CsvLine {
                    record: "trial".into(),
                    method: r.method,
                    epsilon: r.epsilon,
                    metric: r.metric.clone(),
                    trial: Some(r.trial),
                    value: r.value,
                    std_error: None,
                    median: None,
                    trials: None,
                    wall_time: Some(r.wall_time),
                    ridge: Some(r.ridge),
                    rho_spent: r.rho_spent,
                    rho_total: r.rho_total,
                })?;
            }
            for a in &aggregates {
                w.serialize(CsvLine {
                    record: "aggregate".into(),
                    method: a.method,
                    epsilon: a.epsilon,
                    metric: a.metric.clone(),
                    trial: None,
                    value: a.mean,
                    std_error: Some(a.std_error),
                    median: Some(a.median),
                    trials: Some(a.trials),
                    wall_time: None,
                    ridge: None,
                    rho_spent: None,
                    rho_total: None,
                })?;
            }
            w.flush().map_err(|e| Error::io(path, e))
        }
    }
}

/// Read a file written by [`emit`] in either format.
pub fn read_results(path: impl AsRef<Path>, format: OutputFormat) -> Result<Results> {
    let path = path.as_ref();
    match format {
        OutputFormat::Json => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Ok(serde_json::from_str(&text)?)
        }
        OutputFormat::Csv => {
            let mut reader = csv::Reader::from_path(path)?;
            let mut out = Results {
                rows: Vec::new(),
                aggregates: Vec::new(),
            };
            for line in reader.deserialize::<CsvLine>() {
                let line = line?;
                if line.record == "aggregate" {
                    out.aggregates.push(Aggregate {
                        method: line.method,
                        epsilon: line.epsilon,
                        metric: line.metric,
                        trials: line.trials.unwrap_or(0),
                        mean: line.value,
                        std_error: line.std_error.unwrap_or(f64::NAN),
                        median: line.median.unwrap_or(f64::NAN),
                    });
                } else {
                    out.rows.push(ResultRow {
                        method: line.method,
                        epsilon: line.epsilon,
                        trial: line.trial.unwrap_or(0),
                        metric: line.metric,
                        value: line.value,
                        wall_time: line.wall_time.unwrap_or(f64::NAN),
                        ridge: line.ridge.unwrap_or(f64::NAN),
                        rho_spent: line.rho_spent,
                        rho_total: line.rho_total,
                    });
                }
            }
            Ok(out)
        }
    }
}

/// A generated benchmark: data plus the encoding that plants the target.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: DiscreteDataset,
    pub spec: EncodingSpec,
}

pub const SYNTH_FEATURES: usize = 5;

/// Five correlated ordinal features (4 to 8 levels each) and a target that
/// depends linearly on their scalar encodings: an 8-level ordinal target for
/// [`Task::Linear`], a `{-1, +1}` label for [`Task::Logistic`].
///
/// Each feature copies a noisy version of the previous one with
/// probability 0.6 and is uniform otherwise.
pub fn synthetic_benchmark(task: Task, n: usize, seed: u64) -> Result<Synthetic> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attrs: Vec<Attribute> = (0..SYNTH_FEATURES)
        .map(|j| Attribute::new(format!("x{j}"), rng.random_range(4..=8), AttributeKind::Numeric))
        .collect();
    let target_levels = match task {
        Task::Linear => 8,
        Task::Logistic => 2,
    };
    attrs.push(Attribute::new("y", target_levels, AttributeKind::Numeric));
    let domain = Arc::new(Domain::new(attrs)?);
    let sizes = domain.sizes();

    let scalar = |m: usize| AttributeEncoding::Scalar((0..m).map(|v| v as f64).collect());
    let spec = EncodingSpec::new(
        &domain,
        sizes.iter().map(|&m| scalar(m)).collect(),
        Target {
            attribute: SYNTH_FEATURES,
            component: 0,
        },
        true,
    )?;
    let weights: Vec<f64> = (0..SYNTH_FEATURES).map(|_| rng.random_range(-1.0..1.0)).collect();
    let weight_norm: f64 = weights.iter().map(|w| w.abs()).sum();
    let unit = |level: u32, m: usize| 2.0 * level as f64 / (m - 1) as f64 - 1.0;
    let to_level = |u: f64, m: usize| (((u.clamp(-1.0, 1.0) + 1.0) / 2.0) * (m - 1) as f64).round() as u32;
    let noise = rand_distr::Normal::new(0.0, 0.25).expect("valid scale");

    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::with_capacity(SYNTH_FEATURES + 1);
        let mut prev = rng.random_range(-1.0..1.0);
        for &m in &sizes[..SYNTH_FEATURES] {
            let level = if rng.random::<f64>() < 0.6 {
                to_level(prev + rng.sample(noise) * 0.5, m)
            } else {
                rng.random_range(0..m as u32)
            };
            prev = unit(level, m);
            row.push(level);
        }
        let signal: f64 = row
            .iter()
            .zip(&sizes)
            .zip(&weights)
            .map(|((&l, &m), w)| w * unit(l, m))
            .sum::<f64>()
            / weight_norm;
        let y = match task {
            Task::Linear => to_level(signal + rng.sample(noise), target_levels),
            Task::Logistic => u32::from(rng.random::<f64>() < sigmoid(4.0 * signal)),
        };
        row.push(y);
        rows.push(row);
    }
    Ok(Synthetic {
        dataset: DiscreteDataset::new(domain, rows)?,
        spec,
    })
}

/// Predictions of `model` on an encoded test design, exposed for callers
/// that fit outside [`run_experiment`].
pub fn evaluate(model: &FittedModel, test: &DiscreteDataset, spec: &EncodingSpec) -> Result<f64> {
    let enc = encode(test, spec)?;
    let pred: DVector<f64> = predict(model, &enc.x)?;
    match model.task {
        Task::Linear => mse(enc.y.as_slice(), pred.as_slice()),
        Task::Logistic => auc(enc.y.as_slice(), pred.as_slice()),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn brute_auc(y: &[f64], s: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] > 0.0 && y[j] < 0.0 {
                    pairs += 1.0;
                    num += match s[i].partial_cmp(&s[j]).unwrap() {
                        Ordering::Greater => 1.0,
                        Ordering::Equal => 0.5,
                        Ordering::Less => 0.0,
                    };
                }
            }
        }
        num / pairs
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[-1.0, -1.0, 1.0, 1.0], &[0.1, 0.2, 0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(auc(&[-1.0, 1.0, -1.0, 1.0], &[0.5; 4]).unwrap(), 0.5);
        assert!(auc(&[1.0, 1.0], &[0.1, 0.2]).is_err());
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise(pairs in proptest::collection::vec((any::<bool>(), 0u8..10), 2..80)) {
            let y: Vec<f64> = pairs.iter().map(|(b, _)| if *b { 1.0 } else { -1.0 }).collect();
            let s: Vec<f64> = pairs.iter().map(|(_, v)| f64::from(*v) / 10.0).collect();
            prop_assume!(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0));
            prop_assert_eq!(auc(&y, &s).unwrap(), brute_auc(&y, &s));
        }

        #[test]
        fn mse_matches_naive(v in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)) {
            let (a, b): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let mut sq = Vec::new();
            for i in 0..a.len() {
                sq.push((a[i] - b[i]).powi(2));
            }
            let mut total = 0.0;
            for x in &sq {
                total += x;
            }
            let naive = total / a.len() as f64;
            prop_assert!((mse(&a, &b).unwrap() - naive).abs() <= 1e-12 * naive.max(1.0));
        }
    }

    #[test]
    fn standard_error_and_median() {
        let rows: Vec<ResultRow> = [1.0, 2.0, 3.0, 6.0]
            .iter()
            .enumerate()
            .map(|(t, &v)| ResultRow {
                method: Method::Adassp,
                epsilon: 1.0,
                trial: t,
                metric: "mse".into(),
                value: v,
                wall_time: 0.0,
                ridge: 0.0,
                rho_spent: None,
                rho_total: None,
            })
            .collect();
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].mean, 3.0);
        // sample variance (4 + 1 + 0 + 9) / 3
        assert!((agg[0].std_error - (14.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert_eq!(agg[0].median, 2.5);
        assert_eq!(aggregate(&rows[..1])[0].std_error, 0.0);
    }

    #[test]
    fn seeds_are_independent_of_method_set() {
        let a = trial_seed(7, Method::Adassp, 1, 2);
        assert_eq!(a, trial_seed(7, Method::Adassp, 1, 2));
        assert_ne!(a, trial_seed(7, Method::Nonprivate, 1, 2));
        assert_ne!(a, trial_seed(7, Method::Adassp, 2, 2));
        assert_ne!(a, trial_seed(8, Method::Adassp, 1, 2));
    }

    #[test]
    fn config_validation() {
        let cfg = ExperimentConfig { task: Task::Logistic, methods: vec![Method::Adassp], ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig { epsilons: vec![], ..Default::default() };
        assert!(cfg.validate().is_err());
        ExperimentConfig::default().validate().unwrap();
        let parsed = ExperimentConfig::from_json(r#"{"task": "logistic", "methods": ["objpert"], "trials": 2}"#).unwrap();
        assert_eq!(parsed.trials, 2);
        assert_eq!(parsed.epsilons, default_epsilons());
        assert!(ExperimentConfig::from_json(r#"{"trails": 2}"#).is_err());
    }

    #[test]
    fn synthetic_shape() {
        let s = synthetic_benchmark(Task::Logistic, 500, 3).unwrap();
        assert_eq!(s.dataset.d(), 6);
        assert_eq!(s.dataset.n(), 500);
        s.spec.validate_logistic().unwrap();
        assert!(s.dataset.domain().sizes()[..5].iter().all(|m| (4..=8).contains(m)));
        let again = synthetic_benchmark(Task::Logistic, 500, 3).unwrap();
        assert_eq!(again.dataset, s.dataset);
    }
}
