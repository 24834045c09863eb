use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddssp::baselines::{adassp, nonprivate_logistic, nonprivate_ols, objpert_logistic, AdaSspParams, ObjPertParams};
use ddssp::bench::{emit, run_experiment, synthetic_benchmark, ExperimentConfig, Method, OutputFormat};
use ddssp::dataset::{load_csv, DiscreteDataset, Domain};
use ddssp::encoding::{encode, EncodingSpec};
use ddssp::mechanism::{AimLiteConfig, Mechanism, MechanismOutput};
use ddssp::privacy::PrivacyBudget;
use ddssp::ssp::{fit_from_marginals, SspOptions, Task};
use ddssp::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "ddssp", version, about = "Private regression from private pairwise marginals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Release every pairwise marginal of a dataset.
    Marginals(MarginalsArgs),
    /// Fit a model from released marginals or, for baselines, from data.
    Fit(FitArgs),
    /// Run an epsilon sweep.
    Bench(BenchArgs),
    /// Write the synthetic benchmark (data, domain and encoding).
    GenSynth(GenSynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with one column per domain attribute.
    #[arg(long)]
    data: PathBuf,
    /// Domain JSON.
    #[arg(long)]
    domain: PathBuf,
    /// Drop malformed rows instead of failing.
    #[arg(long)]
    lenient: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    AimLite,
    Gaussian,
    Exact,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Linear,
    Logistic,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Linear => Task::Linear,
            TaskArg::Logistic => Task::Logistic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct MarginalsArgs {
    #[command(flatten)]
    input: DataArgs,
    #[arg(long, value_enum, default_value = "aim-lite")]
    mechanism: MechanismArg,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// AIM-lite configuration JSON.
    #[arg(long)]
    aim_config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    Adassp,
    Objpert,
    Nonprivate,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    domain: PathBuf,
    /// Encoding JSON; without it `--target` selects the target and defaults apply.
    #[arg(long)]
    encoding: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    /// Released marginals (from `marginals`); the dataset is not read.
    #[arg(long, conflicts_with_all = ["data", "method"])]
    marginals: Option<PathBuf>,
    /// Training CSV for a baseline.
    #[arg(long, requires = "method")]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<BaselineArg>,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_intercept: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    domain: Option<PathBuf>,
    #[arg(long)]
    encoding: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_enum)]
    task: Option<TaskArg>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Comma-separated privacy levels.
    #[arg(long, value_delimiter = ',')]
    epsilon: Option<Vec<f64>>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    train_cap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long, value_enum, default_value = "linear")]
    task: TaskArg,
    #[arg(long, default_value_t = 20_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives data.csv, domain.json and encoding.json.
    #[arg(long)]
    out: PathBuf,
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::InvalidParameter(format!("cannot write {}: {e}", path.display())))
}

fn load_data(args: &DataArgs) -> Result<DiscreteDataset> {
    let domain = Arc::new(Domain::load_json(&args.domain)?);
    let loaded = load_csv(&args.data, domain, !args.lenient)?;
    if loaded.dropped_rows > 0 {
        eprintln!("dropped {} malformed rows", loaded.dropped_rows);
    }
    Ok(loaded.dataset)
}

fn load_spec(domain: &Domain, encoding: Option<&Path>, target: Option<&str>) -> Result<EncodingSpec> {
    match (encoding, target) {
        (Some(path), _) => EncodingSpec::load_json(domain, path),
        (None, Some(name)) => {
            let t = domain.index_of(name).ok_or_else(|| Error::UnknownColumn(name.into()))?;
            EncodingSpec::default_for(domain, t)
        }
        (None, None) => Err(Error::InvalidParameter("pass --encoding or --target".into())),
    }
}

fn marginals(args: MarginalsArgs) -> Result<()> {
    let dataset = load_data(&args.input)?;
    let budget = PrivacyBudget::new(args.epsilon, args.delta)?;
    let mechanism = match args.mechanism {
        MechanismArg::Exact => Mechanism::Exact,
        MechanismArg::Gaussian => Mechanism::Gaussian(budget),
        MechanismArg::AimLite => {
            let config = match &args.aim_config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
                    serde_json::from_str(&text)?
                }
                None => AimLiteConfig::default(),
            };
            Mechanism::AimLite(budget, config)
        }
    };
    let output = mechanism.release(&dataset, &mut ChaCha8Rng::seed_from_u64(args.seed))?;
    output.save_json(&args.out)?;
    eprintln!(
        "released {} tables with {}; rho spent {:.6} of {:.6}",
        output.tables.len(),
        output.mechanism,
        output.ledger.rho_spent(),
        output.ledger.rho_total()
    );
    Ok(())
}

fn fit(args: FitArgs) -> Result<()> {
    let domain = Domain::load_json(&args.domain)?;
    let spec = load_spec(&domain, args.encoding.as_deref(), args.target.as_deref())?;
    let task = Task::from(args.task);
    let intercept = !args.no_intercept;
    let model = if let Some(path) = &args.marginals {
        let output = MechanismOutput::load_json(path)?;
        let options = SspOptions {
            intercept,
            ..SspOptions::default()
        };
        fit_from_marginals(&output, &spec, task, &options)?
    } else {
        let (Some(data), Some(method)) = (&args.data, args.method) else {
            return Err(Error::InvalidParameter("pass --marginals, or --data with --method".into()));
        };
        let dataset = load_csv(data, Arc::new(domain.clone()), true)?.dataset;
        let enc = encode(&dataset, &spec)?;
        let budget = PrivacyBudget::new(args.epsilon, args.delta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        match (method, task) {
            (BaselineArg::Adassp, Task::Linear) => {
                let mut params = AdaSspParams::new(budget, enc.x_bound, enc.y_bound);
                params.intercept = intercept;
                adassp(&enc.x, &enc.y, &params, &mut rng)?
            }
            (BaselineArg::Objpert, Task::Logistic) => {
                spec.validate_logistic()?;
                let mut params = ObjPertParams::new(budget, enc.x_bound);
                params.intercept = intercept;
                objpert_logistic(&enc.x, &enc.y, &params, &mut rng)?
            }
            (BaselineArg::Nonprivate, Task::Linear) => nonprivate_ols(&enc.x, &enc.y, intercept)?,
            (BaselineArg::Nonprivate, Task::Logistic) => {
                spec.validate_logistic()?;
                nonprivate_logistic(&enc.x, &enc.y, intercept)?
            }
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "that baseline does not support {task} regression"
                )))
            }
        }
    };
    write(&args.out, &model.to_json()?)
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(v) = args.data {
        config.dataset = v;
    }
    if let Some(v) = args.domain {
        config.domain = v;
    }
    if let Some(v) = args.encoding {
        config.encoding = Some(v);
    }
    if let Some(v) = args.target {
        config.target = Some(v);
    }
    if let Some(v) = args.task {
        config.task = v.into();
    }
    if let Some(v) = args.methods {
        config.methods = v.iter().map(|m| m.parse::<Method>()).collect::<Result<_>>()?;
    }
    if let Some(v) = args.epsilon {
        config.epsilons = v;
    }
    if let Some(v) = args.delta {
        config.delta = v;
    }
    if let Some(v) = args.trials {
        config.trials = v;
    }
    if let Some(v) = args.test_size {
        config.test_size = v;
    }
    if let Some(v) = args.train_cap {
        config.train_cap = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.workers {
        config.workers = Some(v);
    }
    let rows = run_experiment(&config)?;
    let format = match args.format {
        FormatArg::Csv => OutputFormat::Csv,
        FormatArg::Json => OutputFormat::Json,
    };
    emit(&rows, format, &args.out)?;
    eprintln!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn gen_synth(args: GenSynthArgs) -> Result<()> {
    let synth = synthetic_benchmark(args.task.into(), args.n, args.seed)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::InvalidParameter(format!("cannot create {}: {e}", args.out.display())))?;
    synth.dataset.save_csv(args.out.join("data.csv"), false)?;
    write(&args.out.join("domain.json"), &synth.dataset.domain().to_json()?)?;
    write(&args.out.join("encoding.json"), &synth.spec.to_json()?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Marginals(a) => marginals(a),
        Command::Fit(a) => fit(a),
        Command::Bench(a) => bench(a),
        Command::GenSynth(a) => gen_synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
