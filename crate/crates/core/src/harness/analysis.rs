//! Activation heat maps, the kernel-diversity statistic, and β sweeps.

use std::path::Path;

use rayon::prelude::*;

use super::config::{BetaValue, ExperimentSpec, StrategySection};
use super::experiment::{run_cell, train_repetitions, Repetition};
use super::plot::{Axes, PlotPoint, Series};
use crate::dataio::{DataSplit, Dataset};
use crate::dpp::{build_kernel, expected_size, sample_dpp, sample_kdpp, Bandwidth, DEFAULT_EPSILON};
use crate::mlp::{hidden_activations, layer_activations, ActivationMatrix, NetworkParams};
use crate::numerics::{derive_seed, Matrix, Rng};
use crate::prune::StrategyKind;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatmapMode {
    /// Neurons drawn by a k-DPP over the layer's training activations.
    Dpp,
    /// The `k` lowest-index neurons.
    First,
}

/// Activations of selected neurons on one instance per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub neurons: Vec<usize>,
    /// classes × neurons
    pub values: Matrix,
}

impl Heatmap {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["class".to_string()];
        header.extend(self.neurons.iter().map(|n| format!("n{n}")));
        w.write_record(&header).expect("in-memory write");
        for (c, row) in self.values.row_iter().enumerate() {
            let mut rec = vec![c.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:.6}")));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
    }
}

/// Builds the heat map of `k` neurons of hidden layer `layer`.
///
/// The k-DPP kernel uses `beta` and the default ε over `data`'s
/// activations; the displayed instances are the first of each class.
pub fn heatmap_export(
    net: &NetworkParams,
    data: &Dataset,
    layer: usize,
    k: usize,
    mode: HeatmapMode,
    beta: Bandwidth,
    seed: u64,
) -> Result<Heatmap> {
    net.check_hidden(layer)?;
    let width = net.layer_sizes()[layer];
    if k == 0 || k > width {
        return Err(Error::pre(format!("k = {k} must lie in 1..={width}")));
    }
    let instances = data.one_per_class()?;
    let neurons = match mode {
        HeatmapMode::First => (0..k).collect(),
        HeatmapMode::Dpp => {
            let acts = layer_activations(net, data, layer, None)?;
            let kernel = build_kernel(&acts, beta, DEFAULT_EPSILON)?;
            sample_kdpp(&kernel, k, &mut Rng::new(seed))?.indices
        }
    };
    let h = hidden_activations(net, &data.inputs.select_rows(&instances), layer)?;
    Ok(Heatmap {
        values: h.select_cols(&neurons),
        neurons,
    })
}

/// Mean of `exp(−β‖v_i − v_j‖²)` over distinct pairs in `subset`.
pub fn mean_pairwise_similarity(acts: &ActivationMatrix, subset: &[usize], beta: f64) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (a, &i) in subset.iter().enumerate() {
        for &j in &subset[a + 1..] {
            let d2: f64 = acts
                .values
                .row(i)
                .iter()
                .zip(acts.values.row(j))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            total += (-beta * d2).exp();
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64
    }
}

/// Non-parametric DPP sample sizes of one (β, network) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeRow {
    pub beta: f64,
    pub seed: u64,
    pub expected_size: f64,
    pub mean_size: f64,
    pub min_size: usize,
    pub max_size: usize,
}

/// One β of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaRow {
    pub beta: f64,
    pub train_mean: f64,
    pub train_min: f64,
    pub train_max: f64,
    pub size_mean: f64,
    pub size_min: usize,
    pub size_max: usize,
    pub expected_size_mean: f64,
}

/// The DivNet strategy a sweep perturbs: the config's first reweighted DPP
/// strategy, or the defaults.
pub fn divnet_strategy(spec: &ExperimentSpec) -> StrategySection {
    spec.strategies
        .iter()
        .find(|s| s.kind == StrategyKind::Dpp && s.reweight)
        .cloned()
        .unwrap_or_else(|| StrategySection::new("divnet", StrategyKind::Dpp, true))
}

fn sweep_settings(spec: &ExperimentSpec) -> (f64, usize) {
    spec.beta_sweep
        .as_ref()
        .map(|b| (b.fraction, b.size_draws))
        .unwrap_or((0.5, 100))
}

fn sizes_for(
    spec: &ExperimentSpec,
    rep: &Repetition,
    data: &Dataset,
    beta: f64,
    draws: usize,
) -> Result<SizeRow> {
    let net = rep.outcome.as_ref().map_err(|e| Error::Numeric(e.clone()))?;
    let layer = spec.experiment.layers[0];
    let acts = layer_activations(net, data, layer, None)?;
    let kernel = build_kernel(&acts, Bandwidth::Fixed(beta), DEFAULT_EPSILON)?;
    let mut rng = Rng::new(derive_seed(spec.experiment.base_seed, &format!("sizes:{beta}:{}", rep.index)));
    let sizes: Vec<usize> = (0..draws.max(1)).map(|_| sample_dpp(&kernel, &mut rng).len()).collect();
    Ok(SizeRow {
        beta,
        seed: rep.seed,
        expected_size: expected_size(&kernel),
        mean_size: sizes.iter().sum::<usize>() as f64 / sizes.len() as f64,
        min_size: *sizes.iter().min().expect("nonempty"),
        max_size: *sizes.iter().max().expect("nonempty"),
    })
}

/// Per-β non-parametric DPP sizes on every repetition's network.
pub fn dpp_size_sweep(
    spec: &ExperimentSpec,
    data: &DataSplit,
    betas: &[f64],
    out_dir: Option<&Path>,
) -> Result<Vec<SizeRow>> {
    check_betas(betas)?;
    let reps = train_repetitions(spec, data, out_dir);
    sizes_over(spec, &reps, data, betas)
}

fn sizes_over(spec: &ExperimentSpec, reps: &[Repetition], data: &DataSplit, betas: &[f64]) -> Result<Vec<SizeRow>> {
    let (_, draws) = sweep_settings(spec);
    let jobs: Vec<(f64, &Repetition)> = betas
        .iter()
        .flat_map(|&b| reps.iter().filter(|r| r.outcome.is_ok()).map(move |r| (b, r)))
        .collect();
    jobs.par_iter()
        .map(|&(b, r)| sizes_for(spec, r, &data.train, b, draws))
        .collect()
}

fn check_betas(betas: &[f64]) -> Result<()> {
    if betas.is_empty() || betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(Error::pre("betas must be nonempty and > 0"));
    }
    Ok(())
}

/// Per-β DivNet train error at the sweep fraction plus non-parametric DPP
/// sizes. Cells reuse the experiment's seeds, so a β equal to the automatic
/// one reproduces the corresponding experiment cell.
pub fn beta_sweep(
    spec: &ExperimentSpec,
    data: &DataSplit,
    betas: &[f64],
    out_dir: Option<&Path>,
) -> Result<(Vec<BetaRow>, Vec<SizeRow>)> {
    check_betas(betas)?;
    let reps = train_repetitions(spec, data, out_dir);
    let (fraction, _) = sweep_settings(spec);
    let sizes = sizes_over(spec, &reps, data, betas)?;
    let base = divnet_strategy(spec);
    let mut rows = Vec::with_capacity(betas.len());
    for &beta in betas {
        let strategy = StrategySection {
            beta: BetaValue::Fixed(beta),
            ..base.clone()
        };
        let errors: Vec<f64> = reps
            .par_iter()
            .map(|r| run_cell(spec, &strategy, fraction, r, data))
            .collect::<Vec<_>>()
            .into_iter()
            .filter_map(|m| m.train_error)
            .collect();
        let mine: Vec<&SizeRow> = sizes.iter().filter(|s| s.beta == beta).collect();
        if errors.is_empty() || mine.is_empty() {
            return Err(Error::Numeric(format!("no successful repetition for beta {beta}")));
        }
        let n = mine.len() as f64;
        rows.push(BetaRow {
            beta,
            train_mean: errors.iter().sum::<f64>() / errors.len() as f64,
            train_min: errors.iter().copied().fold(f64::INFINITY, f64::min),
            train_max: errors.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            size_mean: mine.iter().map(|s| s.mean_size).sum::<f64>() / n,
            size_min: mine.iter().map(|s| s.min_size).min().expect("nonempty"),
            size_max: mine.iter().map(|s| s.max_size).max().expect("nonempty"),
            expected_size_mean: mine.iter().map(|s| s.expected_size).sum::<f64>() / n,
        });
    }
    Ok((rows, sizes))
}

pub fn beta_csv(rows: &[BetaRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "beta",
        "train_mean",
        "train_min",
        "train_max",
        "size_mean",
        "size_min",
        "size_max",
        "expected_size_mean",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            format!("{:e}", r.beta),
            format!("{:.6}", r.train_mean),
            format!("{:.6}", r.train_min),
            format!("{:.6}", r.train_max),
            format!("{:.6}", r.size_mean),
            r.size_min.to_string(),
            r.size_max.to_string(),
            format!("{:.6}", r.expected_size_mean),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

pub fn sizes_csv(rows: &[SizeRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["beta", "seed", "expected_size", "mean_size", "min_size", "max_size"])
        .expect("in-memory write");
    for r in rows {
        w.write_record([
            format!("{:e}", r.beta),
            r.seed.to_string(),
            format!("{:.6}", r.expected_size),
            format!("{:.6}", r.mean_size),
            r.min_size.to_string(),
            r.max_size.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

/// Train-error plot: mean line with dashed min and max lines.
pub fn beta_error_series(rows: &[BetaRow]) -> Vec<Series> {
    let line = |label: &str, f: fn(&BetaRow) -> f64, dashed| Series {
        label: label.into(),
        points: rows.iter().map(|r| PlotPoint { x: r.beta, y: f(r), err: 0.0 }).collect(),
        dashed,
    };
    vec![
        line("mean", |r| r.train_mean, false),
        line("min", |r| r.train_min, true),
        line("max", |r| r.train_max, true),
    ]
}

pub fn beta_size_series(rows: &[BetaRow]) -> Vec<Series> {
    vec![Series {
        label: "DPP size".into(),
        points: rows
            .iter()
            .map(|r| PlotPoint {
                x: r.beta,
                y: r.size_mean,
                err: 0.0,
            })
            .collect(),
        dashed: false,
    }]
}

pub fn beta_axes(title: &str, y_label: &str) -> Axes {
    Axes {
        title: title.into(),
        x_label: "beta".into(),
        y_label: y_label.into(),
        log_x: true,
    }
}
