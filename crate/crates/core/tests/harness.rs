use divnet::harness::analysis::beta_sweep;
use divnet::harness::config::{ExperimentSpec, StrategySection};
use divnet::harness::experiment::{load_data, metrics_csv, run_experiment, summary_csv};
use divnet::harness::{repetitions_csv, write_experiment};
use divnet::prune::StrategyKind;

const BLOBS: &str = r#"
version = 1
name = "blobs"

[dataset]
kind = "blobs"

[dataset.blobs]
classes = 5
features = 12
per_class = 60
spread = 0.08

[network]
hidden = [24, 16]

[train]
error_threshold = 0.05
max_epochs = 100

[experiment]
repetitions = 3
base_seed = 7
fractions = [0.25, 0.5, 1.0]
layers = [1, 2]
cache_models = false

[[strategy]]
label = "divnet"
kind = "dpp"
reweight = true
mask_group = "dpp"

[[strategy]]
label = "random"
kind = "random"
mask_group = "random"

[beta_sweep]
betas = [0.05]
fraction = 0.5
size_draws = 20
"#;

fn spec() -> ExperimentSpec {
    ExperimentSpec::from_toml(BLOBS).unwrap()
}

#[test]
fn experiment_is_deterministic_and_complete() {
    let spec = spec();
    let data = load_data(&spec, std::path::Path::new("unused")).unwrap();
    let a = run_experiment(&spec, &data, None).unwrap();
    let b = run_experiment(&spec, &data, None).unwrap();
    assert_eq!(a.records.len(), 2 * 3 * 3);
    assert!(a.records.iter().all(|r| r.failure.is_none()));
    assert_eq!(metrics_csv(&a.records, false), metrics_csv(&b.records, false));
    assert_eq!(summary_csv(&a.summary), summary_csv(&b.summary));
    assert_eq!(repetitions_csv(&a), repetitions_csv(&b));

    // A kept fraction of 1 leaves every network untouched.
    for r in a.records.iter().filter(|r| r.fraction == 1.0) {
        let same = a
            .records
            .iter()
            .find(|o| o.fraction == 1.0 && o.repetition == r.repetition && o.strategy != r.strategy)
            .unwrap();
        assert_eq!(r.test_error, same.test_error);
        assert_eq!(r.train_error, same.train_error);
    }

    let dir = tempfile::tempdir().unwrap();
    write_experiment(&spec, &a, dir.path()).unwrap();
    for f in ["metrics.csv", "summary.csv", "repetitions.csv", "layers.csv", "test_error.svg", "train_error.svg"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let metrics = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("strategy,"));
    assert!(metrics.lines().skip(1).all(|l| l.ends_with(",NA,NA")), "timings are NA by default");

    // Both hidden layers are pruned below fraction 1; only DPP cells report a size.
    let layers = std::fs::read_to_string(dir.path().join("layers.csv")).unwrap();
    assert_eq!(layers.lines().count(), 1 + 2 * 2 * 3 * 2);
    for line in layers.lines().skip(1) {
        let dpp = line.starts_with("divnet,");
        assert_eq!(!line.ends_with(",NA,NA"), dpp, "{line}");
    }
}

#[test]
fn adding_a_strategy_does_not_perturb_the_others() {
    let base = spec();
    let data = load_data(&base, std::path::Path::new("unused")).unwrap();
    let mut extended = base.clone();
    extended
        .strategies
        .insert(0, StrategySection::new("importance", StrategyKind::Importance, false));
    let a = run_experiment(&base, &data, None).unwrap();
    let b = run_experiment(&extended, &data, None).unwrap();
    for r in &a.records {
        let twin = b
            .records
            .iter()
            .find(|o| o.strategy == r.strategy && o.fraction == r.fraction && o.repetition == r.repetition)
            .unwrap();
        assert_eq!(r.kept, twin.kept);
        assert_eq!(r.test_error, twin.test_error);
    }
}

#[test]
fn beta_sweep_at_automatic_beta_reproduces_the_experiment_cell() {
    let mut spec = spec();
    spec.experiment.layers = vec![1];
    let data = load_data(&spec, std::path::Path::new("unused")).unwrap();
    let auto = 10.0 / data.train.len() as f64;
    let (rows, sizes) = beta_sweep(&spec, &data, &[auto], None).unwrap();
    let outcome = run_experiment(&spec, &data, None).unwrap();
    let cell = outcome
        .summary
        .iter()
        .find(|r| r.strategy == "divnet" && r.fraction == 0.5)
        .unwrap();
    assert_eq!(rows.len(), 1);
    assert!((rows[0].train_mean - cell.train_mean).abs() < 1e-12);
    assert_eq!(sizes.len(), 3);
    assert!(sizes.iter().all(|s| s.min_size as f64 <= s.mean_size && s.mean_size <= s.max_size as f64));
}
