use std::sync::Arc;

use ddssp::bench::{
    aggregate, emit, read_results, run_experiment_on, synthetic_benchmark, ExperimentConfig, Method, OutputFormat,
    ResultRow,
};
use ddssp::dataset::{load_csv, Domain};
use ddssp::marginals::all_pairs_workload;
use ddssp::mechanism::{aim_lite, AimLiteConfig, MechanismOutput};
use ddssp::privacy::PrivacyBudget;
use ddssp::ssp::{fit_from_marginals, SspOptions, Task};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn regression_runs_from_the_saved_release_alone() {
    let dir = tempfile::tempdir().unwrap();
    let synth = synthetic_benchmark(Task::Linear, 3000, 5).unwrap();
    let csv = dir.path().join("data.csv");
    synth.dataset.save_csv(&csv, false).unwrap();
    std::fs::write(dir.path().join("domain.json"), synth.dataset.domain().to_json().unwrap()).unwrap();

    let domain = Arc::new(Domain::load_json(dir.path().join("domain.json")).unwrap());
    let data = load_csv(&csv, domain, true).unwrap().dataset;
    let w = all_pairs_workload(data.domain()).unwrap();
    let budget = PrivacyBudget::new(1.0, 1e-5).unwrap();
    let release = aim_lite(&data, &w, budget, &AimLiteConfig::default(), &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let in_memory = fit_from_marginals(&release, &synth.spec, Task::Linear, &SspOptions::default()).unwrap();

    let saved = dir.path().join("release.json");
    release.save_json(&saved).unwrap();
    drop(data);
    std::fs::remove_file(&csv).unwrap();

    let reloaded = MechanismOutput::load_json(&saved).unwrap();
    assert_eq!(reloaded, release);
    let from_file = fit_from_marginals(&reloaded, &synth.spec, Task::Linear, &SspOptions::default()).unwrap();
    assert_eq!(from_file.theta, in_memory.theta);
}

fn small_config(methods: Vec<Method>) -> ExperimentConfig {
    ExperimentConfig {
        methods,
        test_size: 500,
        seed: 3,
        ..ExperimentConfig::default()
    }
}

fn strip_time(rows: &[ResultRow]) -> Vec<ResultRow> {
    rows.iter()
        .map(|r| ResultRow {
            wall_time: 0.0,
            ..r.clone()
        })
        .collect()
}

#[test]
fn exact_marginals_reproduce_the_nonprivate_fit() {
    let synth = synthetic_benchmark(Task::Linear, 4000, 1).unwrap();
    let config = small_config(vec![Method::DdsspExact, Method::Nonprivate]);
    let rows = run_experiment_on(&synth.dataset, &synth.spec, &config).unwrap();
    assert_eq!(rows.len(), 5 * 5 * 2);
    let exact: Vec<&ResultRow> = rows.iter().filter(|r| r.method == Method::DdsspExact).collect();
    let plain: Vec<&ResultRow> = rows.iter().filter(|r| r.method == Method::Nonprivate).collect();
    assert_eq!(exact.len(), plain.len());
    for (a, b) in exact.iter().zip(&plain) {
        assert_eq!((a.epsilon, a.trial), (b.epsilon, b.trial));
        assert!((a.value - b.value).abs() <= 1e-8, "{} vs {}", a.value, b.value);
        assert_eq!(a.rho_spent, None);
    }
}

#[test]
fn sweeps_are_deterministic_and_serialize() {
    let synth = synthetic_benchmark(Task::Logistic, 3000, 2).unwrap();
    let mut config = small_config(vec![Method::DdsspGaussian, Method::DdsspAimlite, Method::Objpert]);
    config.task = Task::Logistic;
    config.epsilons = vec![0.5, 2.0];
    config.trials = 3;
    let first = run_experiment_on(&synth.dataset, &synth.spec, &config).unwrap();
    config.workers = Some(1);
    let second = run_experiment_on(&synth.dataset, &synth.spec, &config).unwrap();
    assert_eq!(strip_time(&first), strip_time(&second));
    assert_eq!(first.len(), 3 * 2 * 3);
    assert!(first.iter().all(|r| r.metric == "auc" && (0.0..=1.0).contains(&r.value)));
    for r in first.iter().filter(|r| r.method != Method::Objpert) {
        assert!(r.rho_spent.unwrap() <= r.rho_total.unwrap() * (1.0 + 1e-12));
    }

    let dir = tempfile::tempdir().unwrap();
    for format in [OutputFormat::Csv, OutputFormat::Json] {
        let path = dir.path().join(format!("out.{format:?}"));
        emit(&first, format, &path).unwrap();
        let back = read_results(&path, format).unwrap();
        assert_eq!(back.rows, first);
        assert_eq!(back.aggregates, aggregate(&first));
        assert_eq!(aggregate(&back.rows), back.aggregates);
    }
}

#[test]
fn empty_results_write_a_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    emit(&[], OutputFormat::Csv, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("record,method,epsilon"));
    let back = read_results(&path, OutputFormat::Csv).unwrap();
    assert!(back.rows.is_empty() && back.aggregates.is_empty());
}
