//! Experiment configuration, sweeps, plots, and the command-line front end.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod plot;

use std::path::Path;

pub use analysis::{beta_sweep, dpp_size_sweep, heatmap_export, mean_pairwise_similarity, Heatmap, HeatmapMode};
pub use config::ExperimentSpec;
pub use experiment::{run_experiment, ExperimentOutcome, MetricsRecord, SummaryRow};
pub use plot::{emit_plot, render_svg, Axes, Series};

use crate::Result;
use experiment::{layers_csv, metrics_csv, summary_csv, write_file};
use plot::{summary_series, Metric};

/// `repetitions.csv`: one line per trained network.
pub fn repetitions_csv(outcome: &ExperimentOutcome) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["repetition", "seed", "epochs", "converged", "status"])
        .expect("in-memory write");
    for r in &outcome.repetitions {
        let status = match &r.outcome {
            Ok(_) => "trained".to_string(),
            Err(e) => format!("failed: {e}"),
        };
        w.write_record([
            r.index.to_string(),
            r.seed.to_string(),
            r.log.len().to_string(),
            r.converged.to_string(),
            status,
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

/// Writes `metrics.csv`, `summary.csv`, `repetitions.csv`, `layers.csv`, and
/// the train and test error plots into `dir`.
pub fn write_experiment(spec: &ExperimentSpec, outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    write_file(
        &dir.join("metrics.csv"),
        metrics_csv(&outcome.records, spec.experiment.emit_timings).as_bytes(),
    )?;
    write_file(&dir.join("summary.csv"), summary_csv(&outcome.summary).as_bytes())?;
    write_file(&dir.join("repetitions.csv"), repetitions_csv(outcome).as_bytes())?;
    write_file(&dir.join("layers.csv"), layers_csv(&outcome.records).as_bytes())?;
    for (metric, name, title) in [
        (Metric::Test, "test_error.svg", "test error"),
        (Metric::Train, "train_error.svg", "training error"),
    ] {
        let series = summary_series(&outcome.summary, metric);
        if series.is_empty() {
            continue;
        }
        let axes = Axes {
            title: format!("{}: {title}", spec.name),
            x_label: "fraction of neurons kept".into(),
            y_label: title.into(),
            log_x: false,
        };
        emit_plot(&series, &axes, dir.join(name))?;
    }
    Ok(())
}
