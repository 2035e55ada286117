//! Neuron selection strategies, fusion reweighting, and network surgery.
//!
//! Pruning hidden layer `ℓ` to the neurons `kept` deletes the other columns
//! of `weights[ℓ−1]` (and their biases) and the other rows of `weights[ℓ]`.
//! With fusion, each removed neuron's activation vector is first expressed
//! in the span of the kept ones, `v_r ≈ Σ_i α_ir v_i`, and its outgoing
//! weights are folded into the kept rows: `w̃_i = w_i + Σ_r α_ir w_r`.
//! Biases of the next layer are left unchanged.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataio::Dataset;
use crate::dpp::{
    build_kernel, expected_size, greedy_map, rescale_to_k, sample_best_of_m, sample_dpp,
    sample_kdpp, Bandwidth, NeuronSubset, RescaleMode, DEFAULT_EPSILON,
};
use crate::mlp::{layer_activations, ActivationMatrix, InstanceCap, NetworkParams};
use crate::numerics::{derive_seed, lstsq_transposed, Matrix, Rng};
use crate::{Error, Result};

pub const DEFAULT_RIDGE: f64 = 1e-8;

/// Draws allowed before the non-parametric sampler gives up on a usable
/// (non-empty) subset.
const MAX_EMPTY_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Dpp,
    Random,
    Importance,
}

/// Which DPP sampler produces the kept set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplerVariant {
    /// Fixed-size k-DPP.
    Kdpp,
    /// Plain DPP after γ-calibration; the kept count varies around the target.
    Dpp,
    /// Best of `m` k-DPP draws by `log det`.
    BestOfM(usize),
    /// Deterministic greedy mode approximation.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DppOptions {
    pub beta: Bandwidth,
    pub epsilon: f64,
    pub gamma_mode: RescaleMode,
    pub sampler: SamplerVariant,
    /// Number of training instances used for the kernel and the fusion fit.
    pub instance_cap: Option<usize>,
}

impl Default for DppOptions {
    fn default() -> Self {
        Self {
            beta: Bandwidth::Auto,
            epsilon: DEFAULT_EPSILON,
            gamma_mode: RescaleMode::ClosedForm,
            sampler: SamplerVariant::Kdpp,
            instance_cap: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub target_k: usize,
    pub reweight: bool,
    pub dpp: DppOptions,
    pub ridge: f64,
    pub seed: u64,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, target_k: usize, reweight: bool, seed: u64) -> Self {
        Self {
            kind,
            target_k,
            reweight,
            dpp: DppOptions::default(),
            ridge: DEFAULT_RIDGE,
            seed,
        }
    }

    /// DPP selection followed by fusion.
    pub fn divnet(target_k: usize, seed: u64) -> Self {
        Self::new(StrategyKind::Dpp, target_k, true, seed)
    }

    fn check(&self, width: usize) -> Result<()> {
        check_target(self.target_k, width)?;
        if !(self.ridge >= 0.0) {
            return Err(Error::pre("ridge must be >= 0"));
        }
        Ok(())
    }
}

fn check_target(target_k: usize, width: usize) -> Result<()> {
    if target_k == 0 || target_k >= width {
        return Err(Error::pre(format!(
            "target_k = {target_k} must satisfy 1 <= k < layer width {width}"
        )));
    }
    Ok(())
}

/// Kept/removed split of one layer, optionally with fusion coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneDecision {
    pub layer_index: usize,
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
    /// `kept.len() × removed.len()`; column `r` expresses removed neuron `r`
    /// in the kept basis.
    pub alphas: Option<Matrix>,
}

impl PruneDecision {
    /// Builds a decision keeping `kept` out of `width` neurons.
    pub fn from_kept(layer_index: usize, width: usize, mut kept: Vec<usize>) -> Result<Self> {
        kept.sort_unstable();
        kept.dedup();
        if kept.is_empty() {
            return Err(Error::pre("a decision must keep at least one neuron"));
        }
        if kept.last().is_some_and(|&k| k >= width) {
            return Err(Error::pre(format!("kept index outside layer of width {width}")));
        }
        let removed = (0..width).filter(|i| kept.binary_search(i).is_err()).collect();
        Ok(Self {
            layer_index,
            kept,
            removed,
            alphas: None,
        })
    }

    pub fn width(&self) -> usize {
        self.kept.len() + self.removed.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kept.is_empty() {
            return Err(Error::pre("decision keeps no neurons"));
        }
        let mut all: Vec<usize> = self.kept.iter().chain(&self.removed).copied().collect();
        all.sort_unstable();
        if all.iter().enumerate().any(|(i, &v)| i != v) {
            return Err(Error::pre("kept and removed must partition 0..width"));
        }
        if !self.kept.windows(2).all(|w| w[0] < w[1]) || !self.removed.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::pre("kept and removed must be sorted"));
        }
        if let Some(a) = &self.alphas {
            if a.shape() != (self.kept.len(), self.removed.len()) {
                return Err(Error::pre(format!(
                    "alphas are {:?}, expected {}x{}",
                    a.shape(),
                    self.kept.len(),
                    self.removed.len()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("decision serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: PruneDecision = serde_json::from_str(text).map_err(|e| Error::line(e.line(), e.to_string()))?;
        if let Some(a) = &d.alphas {
            // Deserialization bypasses the Matrix constructor.
            if a.as_slice().len() != a.rows() * a.cols() || !a.is_finite() {
                return Err(Error::line(0, "alphas matrix is malformed"));
            }
        }
        d.validate()?;
        Ok(d)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Kernel statistics gathered by DPP selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DppStats {
    /// Expected DPP size of `L' + εI` before γ-scaling.
    pub expected_size: f64,
    pub gamma: f64,
    pub log_det: f64,
}

/// Keeps the neurons chosen by the configured DPP sampler.
pub fn select_dpp(acts: &ActivationMatrix, cfg: &StrategyConfig) -> Result<(PruneDecision, DppStats)> {
    let n = acts.neurons();
    cfg.check(n)?;
    let opts = &cfg.dpp;
    let kernel = build_kernel(acts, opts.beta, opts.epsilon)?;
    let k0 = expected_size(&kernel);
    let kernel = rescale_to_k(&kernel, cfg.target_k as f64, opts.gamma_mode)?;
    let mut rng = Rng::new(cfg.seed);
    let subset: NeuronSubset = match opts.sampler {
        SamplerVariant::Kdpp => sample_kdpp(&kernel, cfg.target_k, &mut rng)?,
        SamplerVariant::BestOfM(m) => sample_best_of_m(&kernel, cfg.target_k, m, &mut rng)?,
        SamplerVariant::Greedy => greedy_map(&kernel, cfg.target_k)?,
        SamplerVariant::Dpp => {
            let mut draw = sample_dpp(&kernel, &mut rng);
            let mut tries = 1;
            while draw.is_empty() {
                if tries >= MAX_EMPTY_REDRAWS {
                    return Err(Error::Numeric(format!(
                        "DPP produced {MAX_EMPTY_REDRAWS} empty samples in a row"
                    )));
                }
                draw = sample_dpp(&kernel, &mut rng);
                tries += 1;
            }
            draw
        }
    };
    let stats = DppStats {
        expected_size: k0,
        gamma: kernel.gamma(),
        log_det: subset.log_det,
    };
    Ok((
        PruneDecision::from_kept(acts.layer_index, n, subset.indices)?,
        stats,
    ))
}

/// Keeps a uniformly random `target_k`-subset.
pub fn select_random(layer_index: usize, n: usize, target_k: usize, rng: &mut Rng) -> Result<PruneDecision> {
    check_target(target_k, n)?;
    PruneDecision::from_kept(layer_index, n, rng.choice(n, target_k))
}

/// Mean absolute outgoing weight per neuron (`onorm`).
pub fn onorm(next_weights: &Matrix) -> Vec<f64> {
    let fan_out = next_weights.cols() as f64;
    next_weights
        .row_iter()
        .map(|r| r.iter().map(|w| w.abs()).sum::<f64>() / fan_out)
        .collect()
}

/// Keeps the `target_k` neurons with the largest `onorm`; ties favour lower
/// indices.
pub fn select_importance(layer_index: usize, next_weights: &Matrix, target_k: usize) -> Result<PruneDecision> {
    let n = next_weights.rows();
    check_target(target_k, n)?;
    let scores = onorm(next_weights);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(target_k);
    PruneDecision::from_kept(layer_index, n, order)
}

/// Solves for the fusion coefficients of every removed neuron by
/// least squares over the kept activation vectors.
pub fn compute_fusion(acts: &ActivationMatrix, decision: &PruneDecision, ridge: f64) -> Result<PruneDecision> {
    decision.validate()?;
    if decision.width() != acts.neurons() {
        return Err(Error::pre(format!(
            "decision covers {} neurons, activations have {}",
            decision.width(),
            acts.neurons()
        )));
    }
    let mut out = decision.clone();
    if decision.removed.is_empty() {
        out.alphas = Some(Matrix::zeros(decision.kept.len(), 0));
        return Ok(out);
    }
    let design_t = acts.values.select_rows(&decision.kept);
    let targets_t = acts.values.select_rows(&decision.removed);
    out.alphas = Some(lstsq_transposed(&design_t, &targets_t, ridge)?);
    Ok(out)
}

/// `‖v_r − Σ_i α_ir v_i‖₂` for every removed neuron.
pub fn fusion_residuals(acts: &ActivationMatrix, decision: &PruneDecision) -> Result<Vec<f64>> {
    let alphas = decision
        .alphas
        .as_ref()
        .ok_or_else(|| Error::pre("decision has no fusion coefficients"))?;
    let kept = acts.values.select_rows(&decision.kept);
    let recon = alphas.t_matmul(&kept);
    Ok(decision
        .removed
        .iter()
        .enumerate()
        .map(|(r, &idx)| {
            recon
                .row(r)
                .iter()
                .zip(acts.values.row(idx))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

/// Removes the decision's neurons, folding their outgoing weights into the
/// kept neurons when alphas are present.
pub fn apply_fusion(net: &NetworkParams, decision: &PruneDecision) -> Result<NetworkParams> {
    if decision.alphas.is_none() {
        return Err(Error::pre("apply_fusion needs a decision with alphas"));
    }
    surgery(net, decision, true)
}

/// Removes the decision's neurons without reweighting (α ≡ 0).
pub fn prune_without_fusion(net: &NetworkParams, decision: &PruneDecision) -> Result<NetworkParams> {
    surgery(net, decision, false)
}

fn surgery(net: &NetworkParams, decision: &PruneDecision, fuse: bool) -> Result<NetworkParams> {
    decision.validate()?;
    let l = decision.layer_index;
    net.check_hidden(l)?;
    let width = net.layer_sizes()[l];
    if decision.width() != width {
        return Err(Error::pre(format!(
            "decision covers {} neurons but layer {l} has {width}",
            decision.width()
        )));
    }
    if decision.removed.is_empty() {
        return Ok(net.clone());
    }

    let incoming = net.weights()[l - 1].select_cols(&decision.kept);
    let bias: Vec<f64> = decision.kept.iter().map(|&i| net.biases()[l - 1][i]).collect();
    let next = &net.weights()[l];
    let mut outgoing = next.select_rows(&decision.kept);
    if fuse {
        let alphas = decision.alphas.as_ref().expect("checked by caller");
        let transfer = alphas.matmul(&next.select_rows(&decision.removed));
        outgoing = outgoing.add(&transfer);
    }

    let mut sizes = net.layer_sizes().to_vec();
    sizes[l] = decision.kept.len();
    let mut weights = net.weights().to_vec();
    let mut biases = net.biases().to_vec();
    weights[l - 1] = incoming;
    biases[l - 1] = bias;
    weights[l] = outgoing;
    NetworkParams::new(sizes, weights, biases)
}

/// Per next-layer neuron `j`, the norm of the change in its input over the
/// activation instances: `‖Σ_{i∈kept} w̃_ij v_i − Σ_i w_ij v_i‖₂`, where
/// `new_rows` holds `w̃` for the kept neurons (in kept order).
pub fn input_difference(
    acts: &ActivationMatrix,
    original_next: &Matrix,
    kept: &[usize],
    new_rows: &Matrix,
) -> Vec<f64> {
    let before = original_next.t_matmul(&acts.values);
    let after = new_rows.t_matmul(&acts.values.select_rows(kept));
    before
        .sub(&after)
        .row_iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Timings and statistics for one pruned layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PruneDiagnostics {
    pub layer_index: usize,
    pub kept: usize,
    pub expected_size: Option<f64>,
    pub gamma: Option<f64>,
    pub log_det: Option<f64>,
    pub residual_norms: Vec<f64>,
    pub t_activations_s: f64,
    pub t_select_s: f64,
    pub t_fuse_s: f64,
}

impl PruneDiagnostics {
    pub fn total_seconds(&self) -> f64 {
        self.t_activations_s + self.t_select_s + self.t_fuse_s
    }
}

/// Prunes one hidden layer with any strategy, optionally fusing.
pub fn prune_layer(
    net: &NetworkParams,
    data: &Dataset,
    layer_index: usize,
    cfg: &StrategyConfig,
) -> Result<(NetworkParams, PruneDecision, PruneDiagnostics)> {
    net.check_hidden(layer_index)?;
    let width = net.layer_sizes()[layer_index];
    cfg.check(width)?;
    let mut diag = PruneDiagnostics {
        layer_index,
        ..Default::default()
    };

    let needs_acts = cfg.reweight || cfg.kind == StrategyKind::Dpp;
    let t = Instant::now();
    let acts = if needs_acts {
        let cap = cfg.dpp.instance_cap.map(|count| InstanceCap {
            count,
            seed: derive_seed(cfg.seed, "instance-cap"),
        });
        Some(layer_activations(net, data, layer_index, cap)?)
    } else {
        None
    };
    diag.t_activations_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let decision = match cfg.kind {
        StrategyKind::Dpp => {
            let (d, stats) = select_dpp(acts.as_ref().expect("computed above"), cfg)?;
            diag.expected_size = Some(stats.expected_size);
            diag.gamma = Some(stats.gamma);
            diag.log_det = Some(stats.log_det);
            d
        }
        StrategyKind::Random => select_random(layer_index, width, cfg.target_k, &mut Rng::new(cfg.seed))?,
        StrategyKind::Importance => select_importance(layer_index, &net.weights()[layer_index], cfg.target_k)?,
    };
    diag.t_select_s = t.elapsed().as_secs_f64();
    diag.kept = decision.kept.len();

    let t = Instant::now();
    let (pruned, decision) = if cfg.reweight {
        let acts = acts.as_ref().expect("computed above");
        let fused = compute_fusion(acts, &decision, cfg.ridge)?;
        diag.residual_norms = fusion_residuals(acts, &fused)?;
        (apply_fusion(net, &fused)?, fused)
    } else {
        (prune_without_fusion(net, &decision)?, decision)
    };
    diag.t_fuse_s = t.elapsed().as_secs_f64();
    Ok((pruned, decision, diag))
}

/// DPP selection, fusion, and surgery on one layer.
pub fn divnet(
    net: &NetworkParams,
    data: &Dataset,
    layer_index: usize,
    cfg: &StrategyConfig,
) -> Result<(NetworkParams, PruneDecision, PruneDiagnostics)> {
    let cfg = StrategyConfig {
        kind: StrategyKind::Dpp,
        reweight: true,
        ..*cfg
    };
    prune_layer(net, data, layer_index, &cfg)
}

/// Prunes several layers front to back, recomputing activations after each
/// surgery. `targets` pairs each layer with its kept count; each layer uses a
/// seed derived from `cfg.seed` and the layer index.
pub fn prune_layers(
    net: &NetworkParams,
    data: &Dataset,
    targets: &[(usize, usize)],
    cfg: &StrategyConfig,
) -> Result<(NetworkParams, Vec<PruneDecision>, Vec<PruneDiagnostics>)> {
    let mut order = targets.to_vec();
    order.sort_by_key(|&(l, _)| l);
    if order.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::pre("each layer may be pruned once per pass"));
    }
    let mut current = net.clone();
    let mut decisions = Vec::with_capacity(order.len());
    let mut diags = Vec::with_capacity(order.len());
    for (layer, k) in order {
        let layer_cfg = StrategyConfig {
            target_k: k,
            seed: derive_seed(cfg.seed, &format!("layer-{layer}")),
            ..*cfg
        };
        let (next, d, g) = prune_layer(&current, data, layer, &layer_cfg)?;
        current = next;
        decisions.push(d);
        diags.push(g);
    }
    Ok((current, decisions, diags))
}
