//! `divnet` command-line interface.
//!
//! Exit codes: 0 on success, 2 for usage errors (bad flags, unreadable or
//! invalid config, missing model file), 1 for failures while running.
//! Diagnostics go to stderr as `divnet: error[usage|runtime]: message`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use super::analysis::{
    beta_axes, beta_csv, beta_error_series, beta_size_series, beta_sweep, dpp_size_sweep, heatmap_export,
    sizes_csv, HeatmapMode,
};
use super::config::{data_root, BetaValue, ExperimentSpec, SamplerName, StrategySection};
use super::experiment::{kept_count, load_data, repetition_seed, run_experiment, train_repetitions, write_file};
use super::plot::emit_plot;
use super::write_experiment;
use crate::dataio::DataSplit;
use crate::mlp::{classification_error, load_model, save_model, SavedModel};
use crate::numerics::derive_seed;
use crate::prune::{prune_layers, StrategyKind};
use crate::Error;

#[derive(Parser, Debug)]
#[command(name = "divnet", version, about = "DPP-based neuron pruning with fusion for feed-forward networks")]
struct Cli {
    /// Directory that relative dataset paths resolve against
    /// (default: $DIVNET_DATA_ROOT, else ./data).
    #[arg(long, global = true)]
    data_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the first repetition's network of a config.
    Train {
        #[arg(long, visible_alias = "spec")]
        config: PathBuf,
        /// Overrides experiment.base_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prune a saved model and write the pruned model plus decision files.
    Prune {
        #[arg(long)]
        model: PathBuf,
        /// Config whose dataset supplies the activations.
        #[arg(long, visible_alias = "spec")]
        config: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        /// Fraction of neurons kept in each pruned layer.
        #[arg(long)]
        keep: f64,
        #[arg(long)]
        reweight: bool,
        /// Hidden layers to prune (1-based); defaults to experiment.layers.
        #[arg(long = "layer")]
        layers: Vec<usize>,
        #[arg(long, value_enum, default_value = "kdpp")]
        sampler: SamplerArg,
        /// RBF bandwidth; defaults to 10 / instance count.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report train and test error of a saved model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, visible_alias = "spec")]
        config: PathBuf,
    },
    /// Run a full strategy × fraction × repetition sweep.
    Experiment {
        #[arg(long, visible_alias = "config")]
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export activations of k neurons on one instance per class.
    Heatmap {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, visible_alias = "spec")]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        layer: usize,
        #[arg(long, default_value_t = 50)]
        k: usize,
        #[arg(long, value_enum, default_value = "dpp")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// DivNet train error and non-parametric DPP sizes across β.
    BetaSweep {
        #[arg(long, visible_alias = "config")]
        spec: PathBuf,
        /// Comma-separated β values; defaults to beta_sweep.betas.
        #[arg(long, value_delimiter = ',')]
        betas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Non-parametric DPP sample sizes across β.
    DppSizeSweep {
        #[arg(long, visible_alias = "config")]
        spec: PathBuf,
        #[arg(long, value_delimiter = ',')]
        betas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StrategyArg {
    Dpp,
    Random,
    Importance,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SamplerArg {
    Kdpp,
    Dpp,
    BestOfM,
    Greedy,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Dpp,
    First,
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

/// Runs the CLI and returns its exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(m)) => {
            eprintln!("divnet: error[usage]: {m}");
            2
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("divnet: error[runtime]: {e}");
            1
        }
    }
}

fn load_spec(path: &Path, seed: Option<u64>) -> CliResult<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(path).map_err(usage)?;
    if let Some(s) = seed {
        spec.experiment.base_seed = s;
    }
    Ok(spec)
}

fn load_split(spec: &ExperimentSpec, root: &Path) -> CliResult<DataSplit> {
    load_data(spec, root).map_err(|e| match e {
        Error::Io { .. } | Error::Config(_) => usage(format!("dataset: {e}")),
        other => Failure::Runtime(other),
    })
}

fn load_saved(path: &Path) -> CliResult<SavedModel> {
    match load_model(path) {
        Err(e @ Error::Io { .. }) => Err(usage(e)),
        other => Ok(other?),
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let root = cli.data_root.clone().unwrap_or_else(data_root);
    match cli.command {
        Command::Train { config, seed, out } => {
            let mut spec = load_spec(&config, seed)?;
            spec.experiment.repetitions = 1;
            spec.experiment.cache_models = false;
            let out = out.unwrap_or_else(|| spec.output_dir.clone());
            let data = load_split(&spec, &root)?;
            let rep = train_repetitions(&spec, &data, None).remove(0);
            let net = rep.outcome.map_err(|m| Failure::Runtime(Error::Numeric(m)))?;
            let saved = SavedModel {
                net,
                train: Some(spec.train.to_config(derive_seed(rep.seed, "train"))),
                init_seed: derive_seed(repetition_seed(spec.experiment.base_seed, 0), "init"),
            };
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            save_model(&saved, out.join("model.bin"))?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["epoch", "mean_loss", "train_error"]).expect("in-memory write");
            for e in &rep.log {
                w.write_record([e.epoch.to_string(), format!("{:.6}", e.mean_loss), format!("{:.6}", e.train_error)])
                    .expect("in-memory write");
            }
            write_file(&out.join("epochs.csv"), &w.into_inner().expect("in-memory writer"))?;
            println!(
                "trained {} epochs (converged: {}), train error {:.4}, test error {:.4} -> {}",
                rep.log.len(),
                rep.converged,
                classification_error(&saved.net, &data.train)?,
                classification_error(&saved.net, &data.test)?,
                out.join("model.bin").display()
            );
        }
        Command::Prune {
            model,
            config,
            strategy,
            keep,
            reweight,
            layers,
            sampler,
            beta,
            seed,
            out,
        } => {
            let spec = load_spec(&config, None)?;
            if !(keep > 0.0 && keep < 1.0) {
                return Err(usage("--keep must lie in (0, 1)"));
            }
            if beta.is_some_and(|b| !(b > 0.0)) {
                return Err(usage("--beta must be > 0"));
            }
            let saved = load_saved(&model)?;
            let net = &saved.net;
            let layers = if layers.is_empty() { spec.experiment.layers.clone() } else { layers };
            if let Some(&bad) = layers.iter().find(|&&l| l == 0 || l > net.hidden_count()) {
                return Err(usage(format!("--layer {bad} is not a hidden layer of the model")));
            }
            let data = load_split(&spec, &root)?;
            let kind = match strategy {
                StrategyArg::Dpp => StrategyKind::Dpp,
                StrategyArg::Random => StrategyKind::Random,
                StrategyArg::Importance => StrategyKind::Importance,
            };
            let mut section = StrategySection::new("cli", kind, reweight);
            section.sampler = match sampler {
                SamplerArg::Kdpp => SamplerName::Kdpp,
                SamplerArg::Dpp => SamplerName::Dpp,
                SamplerArg::BestOfM => SamplerName::BestOfM,
                SamplerArg::Greedy => SamplerName::Greedy,
            };
            if let Some(b) = beta {
                section.beta = BetaValue::Fixed(b);
            }
            let targets: Vec<(usize, usize)> = layers
                .iter()
                .map(|&l| (l, kept_count(keep, net.layer_sizes()[l])))
                .filter(|&(l, k)| k < net.layer_sizes()[l])
                .collect();
            let (pruned, decisions, diags) = prune_layers(net, &data.train, &targets, &section.to_config(1, seed))?;
            let out = out.unwrap_or_else(|| spec.output_dir.clone());
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            save_model(
                &SavedModel {
                    net: pruned.clone(),
                    ..saved.clone()
                },
                out.join("pruned.bin"),
            )?;
            for d in &decisions {
                d.save(out.join(format!("decision-layer{}.json", d.layer_index)))?;
            }
            for g in &diags {
                println!(
                    "layer {}: kept {} expected_dpp_size {} prune_s {:.4}",
                    g.layer_index,
                    g.kept,
                    g.expected_size.map_or("NA".into(), |v| format!("{v:.3}")),
                    g.total_seconds()
                );
            }
            println!(
                "train error {:.4}, test error {:.4} -> {}",
                classification_error(&pruned, &data.train)?,
                classification_error(&pruned, &data.test)?,
                out.join("pruned.bin").display()
            );
        }
        Command::Eval { model, config } => {
            let spec = load_spec(&config, None)?;
            let saved = load_saved(&model)?;
            let data = load_split(&spec, &root)?;
            println!(
                "{{\"train_error\":{:.6},\"test_error\":{:.6},\"layer_sizes\":{:?}}}",
                classification_error(&saved.net, &data.train)?,
                classification_error(&saved.net, &data.test)?,
                saved.net.layer_sizes()
            );
        }
        Command::Experiment { spec, seed, out } => {
            let spec = load_spec(&spec, seed)?;
            if spec.strategies.is_empty() {
                return Err(usage("experiment needs at least one [[strategy]]"));
            }
            let out = out.unwrap_or_else(|| spec.output_dir.clone());
            let data = load_split(&spec, &root)?;
            let outcome = run_experiment(&spec, &data, Some(&out))?;
            write_experiment(&spec, &outcome, &out)?;
            let failed = outcome.records.iter().filter(|r| r.failure.is_some()).count();
            println!(
                "{} cells ({failed} failed) -> {}",
                outcome.records.len(),
                out.join("metrics.csv").display()
            );
        }
        Command::Heatmap {
            model,
            config,
            layer,
            k,
            mode,
            seed,
            out,
        } => {
            let spec = load_spec(&config, None)?;
            let saved = load_saved(&model)?;
            let data = load_split(&spec, &root)?;
            let mode = match mode {
                ModeArg::Dpp => HeatmapMode::Dpp,
                ModeArg::First => HeatmapMode::First,
            };
            let beta = super::analysis::divnet_strategy(&spec).beta.bandwidth();
            let h = heatmap_export(&saved.net, &data.train, layer, k, mode, beta, seed)?;
            match out {
                Some(p) => write_file(&p, h.to_csv().as_bytes())?,
                None => print!("{}", h.to_csv()),
            }
        }
        Command::BetaSweep { spec, betas, out } => {
            let spec = load_spec(&spec, None)?;
            let betas = sweep_betas(&spec, betas)?;
            let out = out.unwrap_or_else(|| spec.output_dir.clone());
            let data = load_split(&spec, &root)?;
            let (rows, sizes) = beta_sweep(&spec, &data, &betas, Some(&out))?;
            write_file(&out.join("beta_sweep.csv"), beta_csv(&rows).as_bytes())?;
            write_file(&out.join("dpp_sizes.csv"), sizes_csv(&sizes).as_bytes())?;
            emit_plot(
                &beta_error_series(&rows),
                &beta_axes("training error after pruning", "training error"),
                out.join("beta_train_error.svg"),
            )?;
            emit_plot(
                &beta_size_series(&rows),
                &beta_axes("non-parametric DPP size", "neurons kept"),
                out.join("beta_dpp_size.svg"),
            )?;
            println!("{} betas -> {}", rows.len(), out.join("beta_sweep.csv").display());
        }
        Command::DppSizeSweep { spec, betas, out } => {
            let spec = load_spec(&spec, None)?;
            let betas = sweep_betas(&spec, betas)?;
            let out = out.unwrap_or_else(|| spec.output_dir.clone());
            let data = load_split(&spec, &root)?;
            let sizes = dpp_size_sweep(&spec, &data, &betas, Some(&out))?;
            write_file(&out.join("dpp_sizes.csv"), sizes_csv(&sizes).as_bytes())?;
            println!("{} rows -> {}", sizes.len(), out.join("dpp_sizes.csv").display());
        }
    }
    Ok(())
}

fn sweep_betas(spec: &ExperimentSpec, flag: Vec<f64>) -> CliResult<Vec<f64>> {
    let betas = if flag.is_empty() {
        spec.beta_sweep.as_ref().map(|b| b.betas.clone()).unwrap_or_default()
    } else {
        flag
    };
    if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(usage("no valid betas: pass --betas or set beta_sweep.betas (all > 0)"));
    }
    Ok(betas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["divnet", "frobnicate"]), 2);
        assert_eq!(run(["divnet", "train", "--bogus"]), 2);
        assert_eq!(run(["divnet", "train", "--config", "/nonexistent/x.toml"]), 2);
        assert_eq!(run(["divnet", "--help"]), 0);
    }
}
