//! Seeded strategy × fraction × repetition sweeps.
//!
//! Seeds are derived with [`derive_seed`] from the base seed:
//!
//! * repetition `r` trains from `derive_seed(base, "rep-{r}")`; the network
//!   init and shuffle seeds hang off that with labels `"init"` and `"train"`;
//! * the pruning seed of a cell is
//!   `derive_seed(base, "prune:{seed_key}:{fraction}:{r}")`, where `seed_key`
//!   is the strategy's mask group (its label by default).
//!
//! No cell's seed depends on which other strategies or fractions are
//! present, so adding a strategy leaves every existing row unchanged.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentSpec, StrategySection};
use crate::dataio::{DataSplit, Dataset};
use crate::mlp::{
    classification_error, load_model, save_model, train_with_hook, EpochRecord, NetworkParams,
    SavedModel,
};
use crate::numerics::derive_seed;
use crate::prune::prune_layers;
use crate::{Error, Result};

/// One (strategy, fraction, repetition) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub strategy: String,
    pub fraction: f64,
    pub repetition: usize,
    /// Seed of the repetition's network.
    pub seed: u64,
    /// `None` when the repetition's training diverged.
    pub train_error: Option<f64>,
    pub test_error: Option<f64>,
    /// Expected DPP size of the first pruned layer's unscaled kernel.
    pub expected_dpp_size: Option<f64>,
    pub t_train_s: f64,
    pub t_prune_s: f64,
    /// Kept neuron count per pruned layer.
    pub kept: Vec<usize>,
    /// Statistics of every layer that was actually pruned, front to back.
    pub layers: Vec<LayerStat>,
    pub failure: Option<String>,
}

/// Per-layer outcome of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStat {
    pub layer: usize,
    pub kept: usize,
    pub expected_size: Option<f64>,
    pub gamma: Option<f64>,
}

/// Mean and sample standard deviation of one (strategy, fraction) group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub fraction: f64,
    pub runs: usize,
    pub failed: usize,
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
    pub expected_dpp_size_mean: Option<f64>,
}

/// A trained (or cached) network for one repetition.
#[derive(Debug, Clone)]
pub struct Repetition {
    pub index: usize,
    pub seed: u64,
    pub outcome: std::result::Result<NetworkParams, String>,
    pub t_train_s: f64,
    /// Empty for cached networks.
    pub log: Vec<EpochRecord>,
    pub converged: bool,
}

pub struct ExperimentOutcome {
    pub records: Vec<MetricsRecord>,
    pub summary: Vec<SummaryRow>,
    pub repetitions: Vec<Repetition>,
}

pub fn repetition_seed(base: u64, r: usize) -> u64 {
    derive_seed(base, &format!("rep-{r}"))
}

pub fn cell_seed(base: u64, seed_key: &str, fraction: f64, r: usize) -> u64 {
    derive_seed(base, &format!("prune:{seed_key}:{fraction}:{r}"))
}

/// Kept count for `fraction` of `width`, at least one neuron.
pub fn kept_count(fraction: f64, width: usize) -> usize {
    ((fraction * width as f64).round() as usize).clamp(1, width)
}

/// Loads the configured dataset with the experiment's base seed.
pub fn load_data(spec: &ExperimentSpec, data_root: &Path) -> Result<DataSplit> {
    spec.dataset.load(data_root, derive_seed(spec.experiment.base_seed, "data"))
}

fn cache_path(spec: &ExperimentSpec, out_dir: &Path, r: usize) -> PathBuf {
    let key = serde_json::json!({
        "dataset": spec.dataset,
        "network": spec.network,
        "train": spec.train,
        "strategies": spec.train.prune_every.map(|_| &spec.strategies),
        "base_seed": spec.experiment.base_seed,
        "rep": r,
    });
    let digest = Sha256::digest(key.to_string().as_bytes());
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    out_dir.join("models").join(format!("rep{r}-{hex}.bin"))
}

/// Training log stored beside a cached model.
#[derive(Serialize, Deserialize)]
struct CacheMeta {
    log: Vec<EpochRecord>,
    converged: bool,
    t_train_s: f64,
}

fn load_cached(path: &Path) -> Option<(NetworkParams, CacheMeta)> {
    let meta = std::fs::read_to_string(path.with_extension("json")).ok()?;
    let meta: CacheMeta = serde_json::from_str(&meta).ok()?;
    Some((load_model(path).ok()?.net, meta))
}

fn store_cached(path: &Path, saved: &SavedModel, meta: &CacheMeta) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_model(saved, path)?;
    let json = serde_json::to_string(meta).map_err(|e| Error::Config(e.to_string()))?;
    write_file(&path.with_extension("json"), json.as_bytes())
}

/// Trains (or loads from cache) every repetition's network.
pub fn train_repetitions(spec: &ExperimentSpec, data: &DataSplit, out_dir: Option<&Path>) -> Vec<Repetition> {
    (0..spec.experiment.repetitions)
        .into_par_iter()
        .map(|r| train_one(spec, data, out_dir, r))
        .collect()
}

fn train_one(spec: &ExperimentSpec, data: &DataSplit, out_dir: Option<&Path>, r: usize) -> Repetition {
    let seed = repetition_seed(spec.experiment.base_seed, r);
    let cache = out_dir
        .filter(|_| spec.experiment.cache_models)
        .map(|d| cache_path(spec, d, r));
    if let Some(hit) = cache.as_ref().and_then(|p| load_cached(p)) {
        return Repetition {
            index: r,
            seed,
            outcome: Ok(hit.0),
            t_train_s: hit.1.t_train_s,
            log: hit.1.log,
            converged: hit.1.converged,
        };
    }
    let sizes = spec.layer_sizes(data.train.features(), data.train.class_count);
    let init_seed = derive_seed(seed, "init");
    let cfg = spec.train.to_config(derive_seed(seed, "train"));
    let start = Instant::now();
    let result = NetworkParams::init(&sizes, init_seed)
        .and_then(|net| train_with_hook(&net, &data.train, &cfg, interleave_hook(spec, &data.train, seed)));
    let t_train_s = start.elapsed().as_secs_f64();
    match result {
        Ok(out) => {
            if let Some(path) = &cache {
                let saved = SavedModel {
                    net: out.net.clone(),
                    train: Some(cfg),
                    init_seed,
                };
                let meta = CacheMeta {
                    log: out.log.clone(),
                    converged: out.converged,
                    t_train_s,
                };
                // A cache write failure only costs a retrain next time.
                let _ = store_cached(path, &saved, &meta);
            }
            Repetition {
                index: r,
                seed,
                outcome: Ok(out.net),
                t_train_s,
                log: out.log,
                converged: out.converged,
            }
        }
        Err(e) => Repetition {
            index: r,
            seed,
            outcome: Err(e.to_string()),
            t_train_s,
            log: Vec::new(),
            converged: false,
        },
    }
}

/// Hook pruning the target layers every `prune_every` epochs, shrinking each
/// by the same factor per round so the last round reaches `prune_fraction`.
fn interleave_hook<'a>(
    spec: &'a ExperimentSpec,
    train: &'a Dataset,
    seed: u64,
) -> impl FnMut(usize, &NetworkParams) -> Result<Option<NetworkParams>> + 'a {
    let t = &spec.train;
    let strategy = t.prune_strategy.as_ref().and_then(|l| spec.strategy(l));
    let original: Vec<usize> = spec.network.hidden.clone();
    move |epoch, net| {
        let (Some(every), Some(strat)) = (t.prune_every, strategy) else {
            return Ok(None);
        };
        if epoch % every != 0 || epoch / every > t.prune_rounds {
            return Ok(None);
        }
        let round = epoch / every;
        let keep = t.prune_fraction.powf(round as f64 / t.prune_rounds as f64);
        let targets: Vec<(usize, usize)> = spec
            .experiment
            .layers
            .iter()
            .map(|&l| (l, kept_count(keep, original[l - 1])))
            .filter(|&(l, k)| k < net.layer_sizes()[l])
            .collect();
        if targets.is_empty() {
            return Ok(None);
        }
        let cfg = strat.to_config(1, derive_seed(seed, &format!("interleave-{round}")));
        let (pruned, _, _) = prune_layers(net, train, &targets, &cfg)?;
        Ok(Some(pruned))
    }
}

/// Prunes one repetition's network with `strategy` at `fraction` and
/// measures both errors.
pub fn run_cell(
    spec: &ExperimentSpec,
    strategy: &StrategySection,
    fraction: f64,
    rep: &Repetition,
    data: &DataSplit,
) -> MetricsRecord {
    let mut record = MetricsRecord {
        strategy: strategy.label.clone(),
        fraction,
        repetition: rep.index,
        seed: rep.seed,
        train_error: None,
        test_error: None,
        expected_dpp_size: None,
        t_train_s: rep.t_train_s,
        t_prune_s: 0.0,
        kept: Vec::new(),
        layers: Vec::new(),
        failure: None,
    };
    let net = match &rep.outcome {
        Ok(net) => net,
        Err(e) => {
            record.failure = Some(format!("training failed: {e}"));
            return record;
        }
    };
    let result = (|| -> Result<()> {
        let targets: Vec<(usize, usize)> = spec
            .experiment
            .layers
            .iter()
            .map(|&l| (l, kept_count(fraction, net.layer_sizes()[l])))
            .collect();
        record.kept = targets.iter().map(|t| t.1).collect();
        let active: Vec<(usize, usize)> = targets
            .iter()
            .copied()
            .filter(|&(l, k)| k < net.layer_sizes()[l])
            .collect();
        let seed = cell_seed(spec.experiment.base_seed, strategy.seed_key(), fraction, rep.index);
        let pruned;
        let eval_net = if active.is_empty() {
            net
        } else {
            let cfg = strategy.to_config(1, seed);
            let (p, _, diags) = prune_layers(net, &data.train, &active, &cfg)?;
            record.t_prune_s = diags.iter().map(|d| d.total_seconds()).sum();
            record.expected_dpp_size = diags.first().and_then(|d| d.expected_size);
            record.layers = diags
                .iter()
                .map(|d| LayerStat {
                    layer: d.layer_index,
                    kept: d.kept,
                    expected_size: d.expected_size,
                    gamma: d.gamma,
                })
                .collect();
            pruned = p;
            &pruned
        };
        record.train_error = Some(classification_error(eval_net, &data.train)?);
        record.test_error = Some(classification_error(eval_net, &data.test)?);
        Ok(())
    })();
    if let Err(e) = result {
        record.failure = Some(e.to_string());
    }
    record
}

/// Runs every cell of the experiment. `out_dir` enables the model cache.
pub fn run_experiment(spec: &ExperimentSpec, data: &DataSplit, out_dir: Option<&Path>) -> Result<ExperimentOutcome> {
    spec.validate()?;
    if spec.strategies.is_empty() {
        return Err(Error::Config("experiment needs at least one [[strategy]]".into()));
    }
    let reps = train_repetitions(spec, data, out_dir);
    let (n_frac, n_rep) = (spec.experiment.fractions.len(), reps.len());
    let cells: Vec<(usize, usize, usize)> = (0..spec.strategies.len())
        .flat_map(|s| (0..n_frac).flat_map(move |f| (0..n_rep).map(move |r| (s, f, r))))
        .collect();
    let mut indexed: Vec<((usize, usize, usize), MetricsRecord)> = cells
        .par_iter()
        .map(|&(s, f, r)| {
            let rec = run_cell(spec, &spec.strategies[s], spec.experiment.fractions[f], &reps[r], data);
            ((s, f, r), rec)
        })
        .collect();
    indexed.sort_by_key(|(k, _)| *k);
    let records: Vec<MetricsRecord> = indexed.into_iter().map(|(_, r)| r).collect();
    let summary = summarize(&records);
    Ok(ExperimentOutcome {
        records,
        summary,
        repetitions: reps,
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups records by (strategy, fraction) in first-appearance order.
pub fn summarize(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|(s, f)| *s == r.strategy && *f == r.fraction) {
            keys.push((r.strategy.clone(), r.fraction));
        }
    }
    keys.into_iter()
        .map(|(strategy, fraction)| {
            let group: Vec<&MetricsRecord> = records
                .iter()
                .filter(|r| r.strategy == strategy && r.fraction == fraction)
                .collect();
            let ok: Vec<&&MetricsRecord> = group.iter().filter(|r| r.failure.is_none()).collect();
            let train: Vec<f64> = ok.iter().filter_map(|r| r.train_error).collect();
            let test: Vec<f64> = ok.iter().filter_map(|r| r.test_error).collect();
            let sizes: Vec<f64> = ok.iter().filter_map(|r| r.expected_dpp_size).collect();
            let (train_mean, train_std) = mean_std(&train);
            let (test_mean, test_std) = mean_std(&test);
            SummaryRow {
                strategy,
                fraction,
                runs: group.len(),
                failed: group.len() - ok.len(),
                train_mean,
                train_std,
                test_mean,
                test_std,
                expected_dpp_size_mean: (!sizes.is_empty()).then(|| mean_std(&sizes).0),
            }
        })
        .collect()
}

pub const METRICS_HEADER: [&str; 8] = [
    "strategy",
    "fraction",
    "seed",
    "train_error",
    "test_error",
    "expected_dpp_size",
    "t_train_s",
    "t_prune_s",
];

fn num(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:.6}"),
        _ => "NA".to_string(),
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

/// `metrics.csv`. Timing columns hold `NA` unless `emit_timings` is set,
/// keeping reruns byte-identical.
pub fn metrics_csv(records: &[MetricsRecord], emit_timings: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER).expect("in-memory write");
    for r in records {
        let t = |x: f64| if emit_timings { num(Some(x)) } else { "NA".into() };
        w.write_record([
            r.strategy.clone(),
            format!("{}", r.fraction),
            r.seed.to_string(),
            num(r.train_error),
            num(r.test_error),
            num(r.expected_dpp_size),
            t(r.t_train_s),
            t(r.t_prune_s),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "strategy",
        "fraction",
        "runs",
        "failed",
        "train_mean",
        "train_std",
        "test_mean",
        "test_std",
        "expected_dpp_size_mean",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.strategy.clone(),
            format!("{}", r.fraction),
            r.runs.to_string(),
            r.failed.to_string(),
            num(Some(r.train_mean)),
            num(Some(r.train_std)),
            num(Some(r.test_mean)),
            num(Some(r.test_std)),
            num(r.expected_dpp_size_mean),
        ])
        .expect("in-memory write");
    }
    finish(w)
}

/// `layers.csv`: one line per pruned layer of every cell.
pub fn layers_csv(records: &[MetricsRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["strategy", "fraction", "repetition", "layer", "kept", "expected_dpp_size", "gamma"])
        .expect("in-memory write");
    for r in records {
        for l in &r.layers {
            w.write_record([
                r.strategy.clone(),
                format!("{}", r.fraction),
                r.repetition.to_string(),
                l.layer.to_string(),
                l.kept.to_string(),
                num(l.expected_size),
                num(l.gamma),
            ])
            .expect("in-memory write");
        }
    }
    finish(w)
}

pub(crate) fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(strategy: &str, fraction: f64, test: Option<f64>) -> MetricsRecord {
        MetricsRecord {
            strategy: strategy.into(),
            fraction,
            repetition: 0,
            seed: 9,
            train_error: test,
            test_error: test,
            expected_dpp_size: None,
            t_train_s: 1.5,
            t_prune_s: 0.1,
            kept: vec![],
            layers: vec![],
            failure: test.is_none().then(|| "x".to_string()),
        }
    }

    #[test]
    fn kept_counts() {
        assert_eq!(kept_count(0.25, 100), 25);
        assert_eq!(kept_count(1.0, 100), 100);
        assert_eq!(kept_count(0.001, 100), 1);
        assert_eq!(kept_count(0.5, 5), 3);
    }

    #[test]
    fn seeds_depend_only_on_their_cell() {
        assert_eq!(cell_seed(1, "dpp", 0.5, 2), cell_seed(1, "dpp", 0.5, 2));
        assert_ne!(cell_seed(1, "dpp", 0.5, 2), cell_seed(1, "dpp", 0.25, 2));
        assert_ne!(cell_seed(1, "dpp", 0.5, 2), cell_seed(1, "random", 0.5, 2));
        assert_ne!(repetition_seed(1, 0), repetition_seed(1, 1));
    }

    #[test]
    fn summary_statistics_skip_failures() {
        let rows = summarize(&[
            rec("a", 0.5, Some(0.1)),
            rec("a", 0.5, Some(0.3)),
            rec("a", 0.5, None),
            rec("b", 0.5, Some(0.2)),
        ]);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].runs, rows[0].failed), (3, 1));
        assert!((rows[0].test_mean - 0.2).abs() < 1e-12);
        assert!((rows[0].test_std - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(rows[1].test_std, 0.0);
    }

    #[test]
    fn metrics_schema() {
        let recs = [rec("a", 0.5, Some(0.1)), rec("a", 1.0, None)];
        let text = metrics_csv(&recs, false);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "strategy,fraction,seed,train_error,test_error,expected_dpp_size,t_train_s,t_prune_s"
        );
        assert_eq!(lines.next().unwrap(), "a,0.5,9,0.100000,0.100000,NA,NA,NA");
        assert_eq!(lines.next().unwrap(), "a,1,9,NA,NA,NA,NA,NA");
        assert!(metrics_csv(&recs, true).contains(",1.500000,0.100000"));
    }
}
